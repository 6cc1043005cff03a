//! Flat key=value experiment configs with sections.
//!
//! The format is line-based and diffable:
//!
//! ```text
//! [system]
//! kind = geometric
//! r_max = 40
//!
//! [observable]
//! kind = level_indicator
//! level = 0
//!
//! [estimator]
//! epsilon = 0.3
//! n_grid = 1 2 5 10 20 50
//! j_max = 400
//! ensemble = 10000
//! seed = 42
//!
//! [fit]
//! class = auto
//! n_lo = 5
//! n_hi = 40
//!
//! [output]
//! dir = out
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fit::RateClass;

#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    /// section -> key -> (line number, value)
    sections: BTreeMap<String, BTreeMap<String, (usize, String)>>,
    pub text: String,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, (usize, String)>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(Error::config(
                        format!("line {line_no}"),
                        "unterminated section header",
                    ));
                }
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {line_no}"),
                    "expected key = value",
                ));
            };
            if current.is_empty() {
                return Err(Error::config(
                    format!("line {line_no}"),
                    "key outside any [section]",
                ));
            }
            sections
                .get_mut(&current)
                .unwrap()
                .insert(k.trim().to_string(), (line_no, v.trim().to_string()));
        }
        Ok(RawConfig {
            sections,
            text: text.to_string(),
        })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|(_, v)| v.as_str())
    }

    fn location(&self, section: &str, key: &str) -> String {
        match self.sections.get(section).and_then(|s| s.get(key)) {
            Some((line, _)) => format!("line {line}, [{section}] {key}"),
            None => format!("[{section}] {key}"),
        }
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::config(self.location(section, key), "missing key"))
    }

    pub fn parse_as<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::config(
                    self.location(section, key),
                    format!("cannot parse {v:?} as {}", std::any::type_name::<T>()),
                )
            }),
        }
    }

    pub fn require_as<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.require(section, key)?;
        Ok(self.parse_as(section, key)?.unwrap())
    }

    pub fn list_as<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>> {
        let raw = self.require(section, key)?;
        raw.split_whitespace()
            .map(|t| {
                t.parse::<T>().map_err(|_| {
                    Error::config(
                        self.location(section, key),
                        format!("cannot parse list item {t:?}"),
                    )
                })
            })
            .collect()
    }
}

/// Which model an experiment runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemConfig {
    Geometric { r_max: u32 },
    Polynomial { alpha: f64, r_max: u32 },
    Bernoulli { branches: u16, beta_s: f64 },
    SpecFile { path: PathBuf },
    Intermittent { gamma: f64, r_max: u32 },
    Solenoid { base_factor: u32, fiber_contraction: f64, coupling_amplitude: f64 },
}

/// Which built-in observable to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableConfig {
    LevelIndicator { level: u32 },
    SymbolIndicator { index: u32 },
    CylinderIndicator { level: u32, word: Vec<u32> },
    CuDerivative { n_compose: u32 },
    CoordinatePolynomial { coeffs: [f64; 6] },
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub epsilon: f64,
    pub n_grid: Vec<u32>,
    pub j_max: u32,
    pub ensemble: usize,
    pub seed: u64,
    pub horizon_margin: u32,
    pub control_orbit: usize,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub class: Option<RateClass>,
    pub n_lo: f64,
    pub n_hi: f64,
}

/// A validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub observable: ObservableConfig,
    pub estimator: EstimatorConfig,
    pub fit: FitConfig,
    pub out_dir: PathBuf,
    pub depth: usize,
    pub cell_cap: usize,
    pub raw_text: String,
}

impl ExperimentConfig {
    pub fn from_text(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let raw = RawConfig::parse(text)?;

        let system = match raw.require("system", "kind")? {
            "geometric" => SystemConfig::Geometric {
                r_max: raw.parse_as("system", "r_max")?.unwrap_or(40),
            },
            "polynomial" => SystemConfig::Polynomial {
                alpha: raw.require_as("system", "alpha")?,
                r_max: raw.parse_as("system", "r_max")?.unwrap_or(200),
            },
            "bernoulli" => SystemConfig::Bernoulli {
                branches: raw.require_as("system", "branches")?,
                beta_s: raw.parse_as("system", "beta_s")?.unwrap_or(0.5),
            },
            "file" => SystemConfig::SpecFile {
                path: PathBuf::from(raw.require("system", "path")?),
            },
            "intermittent" => SystemConfig::Intermittent {
                gamma: raw.require_as("system", "gamma")?,
                r_max: raw.parse_as("system", "r_max")?.unwrap_or(50),
            },
            "solenoid" => SystemConfig::Solenoid {
                base_factor: raw.parse_as("system", "base_factor")?.unwrap_or(2),
                fiber_contraction: raw.parse_as("system", "fiber_contraction")?.unwrap_or(0.5),
                coupling_amplitude: raw.parse_as("system", "coupling_amplitude")?.unwrap_or(0.5),
            },
            other => {
                return Err(Error::config(
                    raw.location("system", "kind"),
                    format!("unknown system kind {other:?}"),
                ))
            }
        };

        let observable = match raw.get("observable", "kind").unwrap_or("level_indicator") {
            "level_indicator" => ObservableConfig::LevelIndicator {
                level: raw.parse_as("observable", "level")?.unwrap_or(0),
            },
            "symbol_indicator" => ObservableConfig::SymbolIndicator {
                index: raw.parse_as("observable", "index")?.unwrap_or(1),
            },
            "cylinder_indicator" => ObservableConfig::CylinderIndicator {
                level: raw.parse_as("observable", "level")?.unwrap_or(0),
                word: raw.list_as("observable", "word")?,
            },
            "cu_derivative" => ObservableConfig::CuDerivative {
                n_compose: raw.parse_as("observable", "n_compose")?.unwrap_or(1),
            },
            "coordinate_polynomial" => {
                let c: Vec<f64> = raw.list_as("observable", "coeffs")?;
                if c.len() != 6 {
                    return Err(Error::config(
                        raw.location("observable", "coeffs"),
                        "need exactly 6 coefficients",
                    ));
                }
                ObservableConfig::CoordinatePolynomial {
                    coeffs: [c[0], c[1], c[2], c[3], c[4], c[5]],
                }
            }
            other => {
                return Err(Error::config(
                    raw.location("observable", "kind"),
                    format!("unknown observable kind {other:?}"),
                ))
            }
        };

        let seed = match seed_override {
            Some(s) => s,
            None => raw.require_as("estimator", "seed").map_err(|_| {
                Error::config(
                    raw.location("estimator", "seed"),
                    "seed is mandatory (config key or --seed flag)",
                )
            })?,
        };
        let n_grid: Vec<u32> = raw.list_as("estimator", "n_grid").unwrap_or_else(|_| {
            vec![1, 2, 5, 10, 20, 50]
        });
        if n_grid.is_empty() {
            return Err(Error::config(
                raw.location("estimator", "n_grid"),
                "n grid must be nonempty",
            ));
        }
        if !n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(
                raw.location("estimator", "n_grid"),
                "n grid must be strictly increasing",
            ));
        }
        let ensemble: usize = raw.parse_as("estimator", "ensemble")?.unwrap_or(10_000);
        if ensemble < 100 {
            return Err(Error::config(
                raw.location("estimator", "ensemble"),
                "ensemble must be at least 100",
            ));
        }
        let estimator = EstimatorConfig {
            epsilon: raw.parse_as("estimator", "epsilon")?.unwrap_or(0.1),
            j_max: raw
                .parse_as("estimator", "j_max")?
                .unwrap_or_else(|| n_grid.last().copied().unwrap_or(100) * 2),
            n_grid,
            ensemble,
            seed,
            horizon_margin: raw.parse_as("estimator", "horizon_margin")?.unwrap_or(100),
            control_orbit: raw
                .parse_as("estimator", "control_orbit")?
                .unwrap_or(10_000_000),
        };
        if estimator.epsilon <= 0.0 {
            return Err(Error::config(
                raw.location("estimator", "epsilon"),
                "epsilon must be positive",
            ));
        }
        if let Some(&hi) = estimator.n_grid.last() {
            if estimator.j_max < hi {
                return Err(Error::config(
                    raw.location("estimator", "j_max"),
                    "j_max must reach the top of the n grid",
                ));
            }
        }

        let fit_class = match raw.get("fit", "class").unwrap_or("auto") {
            "auto" => None,
            other => Some(other.parse::<RateClass>().map_err(|e| {
                Error::config(raw.location("fit", "class"), e.to_string())
            })?),
        };
        let fit = FitConfig {
            class: fit_class,
            n_lo: raw.parse_as("fit", "n_lo")?.unwrap_or(1.0),
            n_hi: raw.parse_as("fit", "n_hi")?.unwrap_or(f64::INFINITY),
        };

        let out_dir = PathBuf::from(raw.get("output", "dir").unwrap_or("out"));
        let depth: usize = raw.parse_as("system", "depth")?.unwrap_or(1);
        let cell_cap: usize = raw
            .parse_as("system", "cell_cap")?
            .unwrap_or(crate::transfer::DEFAULT_CELL_CAP);

        Ok(ExperimentConfig {
            system,
            observable,
            estimator,
            fit,
            out_dir,
            depth,
            cell_cap,
            raw_text: raw.text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
[system]
kind = geometric
r_max = 30

[observable]
kind = level_indicator
level = 0

[estimator]
epsilon = 0.3
n_grid = 1 2 5 10
j_max = 50
ensemble = 500
seed = 7

[fit]
class = exponential
n_lo = 2
n_hi = 10

[output]
dir = scratch
";

    #[test]
    fn parses_a_complete_config() {
        let cfg = ExperimentConfig::from_text(GOOD, None).unwrap();
        assert_eq!(cfg.system, SystemConfig::Geometric { r_max: 30 });
        assert_eq!(cfg.estimator.seed, 7);
        assert_eq!(cfg.estimator.n_grid, vec![1, 2, 5, 10]);
        assert_eq!(cfg.fit.class, Some(RateClass::Exponential));
    }

    #[test]
    fn seed_is_mandatory() {
        let text = GOOD.replace("seed = 7", "");
        let err = ExperimentConfig::from_text(&text, None).unwrap_err();
        assert!(err.to_string().contains("seed"));
        // The flag satisfies the requirement.
        assert!(ExperimentConfig::from_text(&text, Some(9)).is_ok());
    }

    #[test]
    fn rejects_unsorted_grid() {
        let text = GOOD.replace("n_grid = 1 2 5 10", "n_grid = 1 5 2");
        let err = ExperimentConfig::from_text(&text, None).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
    }

    #[test]
    fn rejects_small_ensembles_and_empty_grid() {
        let text = GOOD.replace("ensemble = 500", "ensemble = 10");
        assert!(ExperimentConfig::from_text(&text, None).is_err());
        let text2 = GOOD.replace("n_grid = 1 2 5 10", "n_grid =");
        assert!(ExperimentConfig::from_text(&text2, None).is_err());
    }

    #[test]
    fn errors_carry_line_context() {
        let text = GOOD.replace("epsilon = 0.3", "epsilon = banana");
        let err = ExperimentConfig::from_text(&text, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epsilon") && msg.contains("line"), "{msg}");
    }
}
