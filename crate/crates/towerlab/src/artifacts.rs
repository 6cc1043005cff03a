//! Deterministic output artifacts: series CSVs, fit JSONs, and the run
//! manifest with its honesty flags.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::numeric::g17;

/// Fixed-format series CSV: `n,value,stderr`, 17 significant digits.
pub fn series_csv(ns: &[u32], values: &[f64], stderr: &[f64]) -> String {
    let mut out = String::from("n,value,stderr\n");
    for (i, &n) in ns.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", n, g17(values[i]), g17(stderr[i])));
    }
    out
}

pub fn write_series(path: &Path, ns: &[u32], values: &[f64], stderr: &[f64]) -> Result<()> {
    std::fs::write(path, series_csv(ns, values, stderr))?;
    Ok(())
}

/// Parse a `n,value[,stderr]` CSV written by this crate (or compatible).
pub fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut ns = Vec::new();
    let mut vs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.chars().any(|c| c.is_alphabetic()) {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let n: f64 = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| crate::Error::InvalidParameter(format!("bad CSV line {}", i + 1)))?;
        let v: f64 = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| crate::Error::InvalidParameter(format!("bad CSV line {}", i + 1)))?;
        ns.push(n);
        vs.push(v);
    }
    Ok((ns, vs))
}

/// Run manifest: enough to reproduce and to trust (or distrust) a result.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub r_max: u32,
    pub truncation_mass: f64,
    pub flags: Vec<String>,
}

impl Manifest {
    pub fn new(config_text: &str, r_max: u32, truncation_mass: f64) -> Self {
        Manifest {
            config_hash: sha256_hex(config_text),
            r_max,
            truncation_mass,
            flags: Vec::new(),
        }
    }

    pub fn flag(&mut self, f: impl Into<String>) {
        self.flags.push(f.into());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let ns = vec![1u32, 2, 3];
        let vs = vec![0.5, 0.25, 2f64.powi(-40)];
        let se = vec![0.0, 1e-3, 0.0];
        write_series(&path, &ns, &vs, &se).unwrap();
        let (rn, rv) = read_series(&path).unwrap();
        assert_eq!(rn, vec![1.0, 2.0, 3.0]);
        assert_eq!(rv, vs);
    }

    #[test]
    fn manifest_hash_is_stable() {
        let a = Manifest::new("x = 1\n", 40, 1e-12);
        let b = Manifest::new("x = 1\n", 40, 1e-12);
        assert_eq!(a.config_hash, b.config_hash);
        let c = Manifest::new("x = 2\n", 40, 1e-12);
        assert_ne!(a.config_hash, c.config_hash);
    }
}
