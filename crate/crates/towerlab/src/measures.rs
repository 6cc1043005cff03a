//! Invariant measures on the tower and its quotient: Kac normalization,
//! level masses, recurrence-time tails and exact sampling.

use crate::error::{Error, Result};
use crate::numeric::Kahan;
use crate::rng;
use crate::tower::{Past, ReturnTimeSpec, TowerPoint};

use std::collections::VecDeque;

/// Level-mass profile of the tower's invariant probability measure.
#[derive(Debug, Clone)]
pub struct TowerMeasure {
    /// Kac constant `1 / sum_i p_i R_i`.
    pub kac_norm: f64,
    /// `m_l = kac_norm * P(R > l)` for `l = 0 .. max R - 1`.
    pub level_mass: Vec<f64>,
}

/// Mean return time `sum_i p_i R_i` (finite by construction).
pub fn mean_return(spec: &ReturnTimeSpec) -> f64 {
    let mut acc = Kahan::new();
    for b in spec.branches() {
        acc.add(b.p * b.r as f64);
    }
    acc.value()
}

/// Tail of recurrence times: total mass of branches with `R > n`.
pub fn tail(spec: &ReturnTimeSpec, n: u32) -> f64 {
    let mut acc = Kahan::new();
    for b in spec.branches() {
        if b.r > n {
            acc.add(b.p);
        }
    }
    acc.value()
}

/// Kac-normalized level masses. The Kac identity `sum_l P(R > l) = E[R]`
/// makes them a probability vector.
pub fn level_masses(spec: &ReturnTimeSpec) -> TowerMeasure {
    let kac_norm = 1.0 / mean_return(spec);
    let max_r = spec.max_return();
    let mut level_mass = Vec::with_capacity(max_r as usize);
    for l in 0..max_r {
        level_mass.push(kac_norm * tail(spec, l));
    }
    TowerMeasure {
        kac_norm,
        level_mass,
    }
}

/// Density of the base conditional with respect to the coded base measure.
/// Constant in the affine model, and equal to the Kac constant; always
/// strictly positive.
pub fn density_floor_check(spec: &ReturnTimeSpec) -> f64 {
    let c = 1.0 / mean_return(spec);
    debug_assert!(c > 0.0);
    c
}

const SRB_LEVEL_SALT: u64 = 0x1e;
const SRB_COLUMN_SALT: u64 = 0x0c;

/// Exact i.i.d. sample from the tower's invariant measure: column drawn with
/// probability proportional to `p_i R_i`, level uniform below the roof, and
/// the remaining future and past symbols i.i.d. from the base distribution.
/// Deterministic per `(seed, index)`.
pub fn srb_sample(spec: &ReturnTimeSpec, seed: u64, count: usize) -> Vec<TowerPoint> {
    let inv_mean = 1.0 / mean_return(spec);
    // Cumulative distribution of the column law.
    let mut cum_q = Vec::with_capacity(spec.branch_count() + 1);
    let mut acc = Kahan::new();
    cum_q.push(0.0);
    for b in spec.branches() {
        acc.add(b.p * b.r as f64 * inv_mean);
        cum_q.push(acc.value());
    }
    (0..count)
        .map(|i| {
            let s = rng::member_seed(seed, i as u64);
            let uc = rng::unit2(s, SRB_COLUMN_SALT);
            let inner = &cum_q[1..cum_q.len() - 1];
            let col = inner.partition_point(|&c| c <= uc) as u16;
            let r = spec.r(col);
            let ul = rng::unit2(s, SRB_LEVEL_SALT);
            let level = ((ul * r as f64) as u32).min(r - 1);
            TowerPoint::new(
                spec,
                s,
                &[col],
                level,
                Past::Sampled {
                    recorded: VecDeque::new(),
                },
            )
            .expect("sampled point is valid by construction")
        })
        .collect()
}

/// Quotient-side sample: as [`srb_sample`] with the past cleared.
pub fn srb_sample_quotient(spec: &ReturnTimeSpec, seed: u64, count: usize) -> Vec<TowerPoint> {
    srb_sample(spec, seed, count)
        .iter()
        .map(crate::tower::quotient_project)
        .collect()
}

/// Validates the Kac identity for a measure profile; exposed so fault
/// injection in the verification machinery can be tested directly.
pub fn kac_defect(measure: &TowerMeasure) -> f64 {
    let mut acc = Kahan::new();
    for &m in &measure.level_mass {
        acc.add(m);
    }
    (acc.value() - 1.0).abs()
}

impl TowerMeasure {
    /// Exact mass of the cell at `level` whose word starts with the given
    /// symbols: `kac_norm * prod p`.
    pub fn cell_mass(&self, spec: &ReturnTimeSpec, level: u32, word: &[u16]) -> Result<f64> {
        let first = *word
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty word".into()))?;
        if level >= spec.r(first) {
            return Err(Error::InvalidPoint(format!(
                "level {level} at or above the roof of column {first}"
            )));
        }
        let mut m = self.kac_norm;
        for &s in word {
            m *= spec.p(s);
        }
        Ok(m)
    }
}
