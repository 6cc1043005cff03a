//! Exact finite-rank transfer operator on the quotient tower.
//!
//! Functions constant on depth-`d` cylinders span an invariant subspace of
//! the affine model, so the operator restricted to cylinder coefficients is
//! an exact sparse matrix, not an approximation. Its powers produce the
//! centered L1 decay series and exact correlation curves that anchor every
//! statistical fit downstream.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures;
use crate::numeric::Kahan;
use crate::tower::{Past, ReturnTimeSpec, Symbol, TowerPoint};

/// Default cap on the number of cylinder cells.
pub const DEFAULT_CELL_CAP: usize = 200_000;

/// One cell of the refined partition: a level and a symbol word of length
/// `depth` whose first column reaches above the level.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub level: u32,
    pub word: Vec<Symbol>,
}

/// The depth-`d` cylinder partition with exact cell masses.
#[derive(Debug, Clone)]
pub struct CylinderBasis {
    spec: ReturnTimeSpec,
    depth: usize,
    cells: Vec<Cell>,
    masses: Vec<f64>,
    kac_norm: f64,
    // cell id lookup: key = (word code, level)
    index: std::collections::HashMap<(u64, u32), usize>,
}

impl CylinderBasis {
    pub fn new(spec: &ReturnTimeSpec, depth: usize, cap: usize) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidParameter("depth must be >= 1".into()));
        }
        let b = spec.branch_count();
        let words = (b as f64).powi(depth as i32 - 1);
        let sum_r: f64 = spec.branches().iter().map(|br| br.r as f64).sum();
        let estimate = sum_r * words;
        if estimate > cap as f64 {
            let mut d = depth;
            while d > 1 && sum_r * (b as f64).powi(d as i32 - 2) > cap as f64 {
                d -= 1;
            }
            return Err(Error::BasisTooLarge {
                cells: estimate as usize,
                cap,
                suggested: d.saturating_sub(1).max(1),
            });
        }
        let kac_norm = 1.0 / measures::mean_return(spec);
        let mut cells = Vec::new();
        let mut masses = Vec::new();
        let mut index = std::collections::HashMap::new();
        let mut word = vec![0 as Symbol; depth];
        loop {
            let mut mass = kac_norm;
            for &s in &word {
                mass *= spec.p(s);
            }
            for level in 0..spec.r(word[0]) {
                index.insert((Self::code(spec, &word), level), cells.len());
                cells.push(Cell {
                    level,
                    word: word.clone(),
                });
                masses.push(mass);
            }
            // Next word in lexicographic order.
            let mut j = depth;
            loop {
                if j == 0 {
                    break;
                }
                j -= 1;
                if (word[j] as usize) + 1 < b {
                    word[j] += 1;
                    for w in word.iter_mut().skip(j + 1) {
                        *w = 0;
                    }
                    break;
                }
                word[j] = 0;
                if j == 0 {
                    return Ok(CylinderBasis {
                        spec: spec.clone(),
                        depth,
                        cells,
                        masses,
                        kac_norm,
                        index,
                    });
                }
            }
        }
    }

    fn code(spec: &ReturnTimeSpec, word: &[Symbol]) -> u64 {
        let b = spec.branch_count() as u64;
        word.iter().fold(0u64, |acc, &s| acc * b + s as u64)
    }

    pub fn spec(&self) -> &ReturnTimeSpec {
        &self.spec
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn kac_norm(&self) -> f64 {
        self.kac_norm
    }

    pub fn cell_id(&self, level: u32, word: &[Symbol]) -> Option<usize> {
        self.index.get(&(Self::code(&self.spec, word), level)).copied()
    }

    /// Coefficient vector of a function of `(level, word)`; exact on
    /// functions constant on depth-`d` cells.
    pub fn vector<F: Fn(u32, &[Symbol]) -> f64>(&self, f: F) -> Vec<f64> {
        self.cells.iter().map(|c| f(c.level, &c.word)).collect()
    }

    pub fn level_indicator(&self, level: u32) -> Vec<f64> {
        self.vector(|l, _| if l == level { 1.0 } else { 0.0 })
    }

    pub fn symbol_indicator(&self, sym: Symbol) -> Vec<f64> {
        self.vector(|_, w| if w[0] == sym { 1.0 } else { 0.0 })
    }

    pub fn cell_indicator(&self, id: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.cells.len()];
        v[id] = 1.0;
        v
    }

    /// A concrete quotient point inside the cell, extended by the seed.
    pub fn representative(&self, id: usize, seed: u64) -> TowerPoint {
        let c = &self.cells[id];
        TowerPoint::new(&self.spec, seed, &c.word, c.level, Past::Quotient)
            .expect("cells are valid by construction")
    }

    /// Exact integral against the invariant measure.
    pub fn integral(&self, v: &[f64]) -> Result<f64> {
        self.check(v)?;
        let mut acc = Kahan::new();
        for (x, m) in v.iter().zip(&self.masses) {
            acc.add(x * m);
        }
        Ok(acc.value())
    }

    /// Centered copy of `v`.
    pub fn centered(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mean = self.integral(v)?;
        Ok(v.iter().map(|x| x - mean).collect())
    }

    /// `(integral of |v|^q)^(1/q)`.
    pub fn lq_norm(&self, v: &[f64], q: f64) -> Result<f64> {
        self.check(v)?;
        let mut acc = Kahan::new();
        for (x, m) in v.iter().zip(&self.masses) {
            acc.add(x.abs().powf(q) * m);
        }
        Ok(acc.value().powf(1.0 / q))
    }

    pub fn sup_norm(&self, v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.cells.len() {
            return Err(Error::VectorLength {
                got: v.len(),
                expected: self.cells.len(),
            });
        }
        Ok(())
    }
}

/// Sparse exact representation of the quotient-tower transfer operator on
/// cylinder coefficients.
#[derive(Debug, Clone)]
pub struct CylinderOperator {
    basis: CylinderBasis,
    // rows[target] = inflow entries (source, weight)
    rows: Vec<Vec<(u32, f64)>>,
}

/// Build the operator at depth `d`. Cells above the base receive their
/// sub-roof cell with weight 1; base cells receive every compatible roof cell
/// with the roof column's mass.
pub fn build_operator(spec: &ReturnTimeSpec, depth: usize, cap: usize) -> Result<CylinderOperator> {
    let basis = CylinderBasis::new(spec, depth, cap)?;
    let rows: Vec<Vec<(u32, f64)>> = basis
        .cells
        .iter()
        .map(|cell| {
            if cell.level > 0 {
                let below = basis
                    .cell_id(cell.level - 1, &cell.word)
                    .expect("sub-roof cell exists");
                vec![(below as u32, 1.0)]
            } else {
                // Inflow into (0, w) from roof cells (R_i - 1, i . w-prefix).
                let mut roof_word = vec![0 as Symbol; depth];
                roof_word[1..].copy_from_slice(&cell.word[..depth - 1]);
                (0..spec.branch_count() as Symbol)
                    .map(|i| {
                        roof_word[0] = i;
                        let src = basis
                            .cell_id(spec.r(i) - 1, &roof_word)
                            .expect("roof cell exists");
                        (src as u32, spec.p(i))
                    })
                    .collect()
            }
        })
        .collect();
    Ok(CylinderOperator { basis, rows })
}

impl CylinderOperator {
    pub fn basis(&self) -> &CylinderBasis {
        &self.basis
    }

    /// Entries are transport weights, all nonnegative.
    pub fn min_entry(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|&(_, w)| w))
            .fold(f64::INFINITY, f64::min)
    }

    /// One application of the operator to a coefficient vector.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.basis.check(v)?;
        Ok(self
            .rows
            .par_iter()
            .map(|row| {
                let mut acc = 0.0;
                for &(src, w) in row {
                    acc += w * v[src as usize];
                }
                acc
            })
            .collect())
    }

    /// Centered L1 decay: `D(n) = integral |L^n (phi - mean phi)|` for
    /// `n = 0..=n_max`. Exact, nonnegative and nonincreasing.
    pub fn l1_decay(&self, phi: &[f64], n_max: usize) -> Result<Vec<f64>> {
        let mut v = self.basis.centered(phi)?;
        let mut out = Vec::with_capacity(n_max + 1);
        out.push(self.basis.lq_norm(&v, 1.0)?);
        for _ in 0..n_max {
            v = self.apply(&v)?;
            out.push(self.basis.lq_norm(&v, 1.0)?);
        }
        Ok(out)
    }

    /// Exact correlation curve `|integral (L^n phi_hat) psi|` with `phi_hat`
    /// centered; dominated by `sup |psi| * D(n)`.
    pub fn corr_exact(&self, phi: &[f64], psi: &[f64], n_max: usize) -> Result<Vec<f64>> {
        self.basis.check(psi)?;
        let mut v = self.basis.centered(phi)?;
        let mut out = Vec::with_capacity(n_max + 1);
        let dot = |v: &[f64]| -> f64 {
            let mut acc = Kahan::new();
            for ((a, b), m) in v.iter().zip(psi).zip(self.basis.masses()) {
                acc.add(a * b * m);
            }
            acc.value().abs()
        };
        out.push(dot(&v));
        for _ in 0..n_max {
            v = self.apply(&v)?;
            out.push(dot(&v));
        }
        Ok(out)
    }
}

/// Decay CSV with the module's fixed columns `n,d,corr`.
pub fn decay_csv(d: &[f64], corr: &[f64]) -> String {
    use crate::numeric::g17;
    let mut out = String::from("n,d,corr\n");
    for (n, (dv, cv)) in d.iter().zip(corr).enumerate() {
        out.push_str(&format!("{},{},{}\n", n, g17(*dv), g17(*cv)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tower::tower_step;

    fn geometric(r_max: u32) -> ReturnTimeSpec {
        ReturnTimeSpec::geometric(r_max).unwrap().0
    }

    #[test]
    fn single_branch_r1_is_identity() {
        let spec = ReturnTimeSpec::single(1);
        let op = build_operator(&spec, 1, 100).unwrap();
        assert_eq!(op.basis().cell_count(), 1);
        assert_eq!(op.apply(&[2.5]).unwrap(), vec![2.5]);
    }

    #[test]
    fn bernoulli_indicator_maps_to_constant() {
        // Two equal branches, R = 1, d = 1: L phi(x) = (phi(0x) + phi(1x))/2;
        // the first-symbol indicator goes to the constant 1/2.
        let spec = ReturnTimeSpec::bernoulli(2, 0.5).unwrap();
        let op = build_operator(&spec, 1, 100).unwrap();
        let phi = op.basis().symbol_indicator(0);
        let out = op.apply(&phi).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn masses_sum_to_one_and_costs_are_exact() {
        for spec in [geometric(20), ReturnTimeSpec::polynomial(3.0, 40).unwrap().0] {
            let basis = CylinderBasis::new(&spec, 2, DEFAULT_CELL_CAP).unwrap();
            let total = crate::numeric::kahan_sum(basis.masses().iter().copied());
            assert!((total - 1.0).abs() <= 1e-12);
            // Every cell mass is kac * product of word masses.
            for (id, cell) in basis.cells().iter().enumerate().step_by(37) {
                let mut m = basis.kac_norm();
                for &s in &cell.word {
                    m *= spec.p(s);
                }
                assert!((basis.masses()[id] - m).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn cap_exceeded_reports_smaller_depth() {
        let spec = geometric(20);
        match CylinderBasis::new(&spec, 6, 1000) {
            Err(Error::BasisTooLarge { suggested, .. }) => assert!(suggested < 6),
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn duality_against_refined_quadrature() {
        // <L phi, psi> = <phi, psi . T> for 50 random cylinder pairs, with the
        // right side evaluated by exact cell-mass quadrature at depth d+1.
        let spec = geometric(5);
        let d = 3usize;
        let op = build_operator(&spec, d, DEFAULT_CELL_CAP).unwrap();
        let refined = CylinderBasis::new(&spec, d + 1, DEFAULT_CELL_CAP).unwrap();
        let n = op.basis().cell_count();
        for trial in 0..50u64 {
            let a = (rng::unit2(trial, 1) * n as f64) as usize;
            let b = (rng::unit2(trial, 2) * n as f64) as usize;
            let phi = op.basis().cell_indicator(a.min(n - 1));
            let psi = op.basis().cell_indicator(b.min(n - 1));
            let lhs = {
                let lphi = op.apply(&phi).unwrap();
                let mut acc = Kahan::new();
                for ((x, y), m) in lphi.iter().zip(&psi).zip(op.basis().masses()) {
                    acc.add(x * y * m);
                }
                acc.value()
            };
            // Independent route: enumerate refined cells, step symbolically.
            let mut rhs = Kahan::new();
            for (id, cell) in refined.cells().iter().enumerate() {
                let coarse = op.basis().cell_id(cell.level, &cell.word[..d]).unwrap();
                if phi[coarse] == 0.0 {
                    continue;
                }
                let (nl, nw): (u32, Vec<Symbol>) = if cell.level + 1 < spec.r(cell.word[0]) {
                    (cell.level + 1, cell.word[..d].to_vec())
                } else {
                    (0, cell.word[1..].to_vec())
                };
                let target = op.basis().cell_id(nl, &nw).unwrap();
                rhs.add(psi[target] * refined.masses()[id]);
            }
            assert!(
                (lhs - rhs.value()).abs() <= 1e-10,
                "trial {trial}: {lhs} vs {}",
                rhs.value()
            );
        }
    }

    #[test]
    fn l1_decay_examples() {
        let spec = ReturnTimeSpec::bernoulli(2, 0.5).unwrap();
        let op = build_operator(&spec, 1, 100).unwrap();
        // Constants die at n = 0.
        let d = op.l1_decay(&[3.0, 3.0], 5).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
        // First-symbol indicator is annihilated by one application.
        let phi = op.basis().symbol_indicator(0);
        let d = op.l1_decay(&phi, 5).unwrap();
        assert!(d[0] > 0.0);
        for &x in &d[1..] {
            assert!(x.abs() <= 1e-15);
        }
    }

    #[test]
    fn l1_decay_monotone_and_geometric_fit() {
        let spec = geometric(60);
        let op = build_operator(&spec, 1, DEFAULT_CELL_CAP).unwrap();
        let phi = op.basis().level_indicator(0);
        let d = op.l1_decay(&phi, 40).unwrap();
        for w in d.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let ns: Vec<f64> = (5..=40).map(|n| n as f64).collect();
        let ys: Vec<f64> = (5..=40).map(|n| d[n]).collect();
        let f = crate::fit::fit_rate(&ns, &ys, Some(crate::fit::RateClass::Exponential), None)
            .unwrap();
        assert!(f.r_squared >= 0.99, "r2 = {}", f.r_squared);
    }

    #[test]
    fn corr_examples() {
        let spec = ReturnTimeSpec::bernoulli(2, 0.5).unwrap();
        let op = build_operator(&spec, 2, 1000).unwrap();
        // Constant second argument: zero correlation at every lag.
        let phi = op.basis().symbol_indicator(0);
        let ones = vec![1.0; op.basis().cell_count()];
        let c = op.corr_exact(&phi, &ones, 6).unwrap();
        assert!(c.iter().all(|&x| x.abs() <= 1e-15));
        // Depth-2 cylinder pair decorrelates after d applications.
        let psi = op.basis().cell_indicator(1);
        let c2 = op.corr_exact(&psi, &psi, 8).unwrap();
        for &x in &c2[2..] {
            assert!(x.abs() <= 1e-14);
        }
        // Domination by the sup norm of the test function.
        let d = op.l1_decay(&psi, 8).unwrap();
        for (cv, dv) in c2.iter().zip(&d) {
            assert!(*cv <= op.basis().sup_norm(&psi) * dv + 1e-15);
        }
    }

    #[test]
    fn positivity_and_mass_conservation() {
        let spec = geometric(12);
        let op = build_operator(&spec, 2, DEFAULT_CELL_CAP).unwrap();
        assert!(op.min_entry() >= 0.0);
        let phi = op.basis().vector(|l, w| (l as f64 + 1.0) * (w[0] as f64 + 0.5));
        let mut v = phi.clone();
        let before = op.basis().integral(&phi).unwrap();
        for _ in 0..20 {
            v = op.apply(&v).unwrap();
            assert!(v.iter().all(|&x| x >= 0.0));
            let after = op.basis().integral(&v).unwrap();
            assert!((after - before).abs() <= 1e-12 * before.abs().max(1.0));
        }
        // Sup-norm contraction.
        assert!(op.basis().sup_norm(&op.apply(&phi).unwrap()) <= op.basis().sup_norm(&phi) + 1e-15);
    }

    #[test]
    fn holder_interpolation_moments() {
        // ||L^n phi_hat||_q^q <= ||phi_hat||_inf^(q-1) * D(n) for q in {2, 4}.
        let spec = geometric(20);
        let op = build_operator(&spec, 1, DEFAULT_CELL_CAP).unwrap();
        let phi = op.basis().level_indicator(0);
        let centered = op.basis().centered(&phi).unwrap();
        let sup0 = op.basis().sup_norm(&centered);
        let mut v = centered;
        for _ in 0..=25 {
            let d1 = op.basis().lq_norm(&v, 1.0).unwrap();
            for q in [2.0, 4.0] {
                let dq = op.basis().lq_norm(&v, q).unwrap();
                assert!(dq.powf(q) <= sup0.powf(q - 1.0) * d1 * (1.0 + 1e-12));
            }
            v = op.apply(&v).unwrap();
        }
    }

    #[test]
    fn corr_matches_monte_carlo_oracle() {
        // Ensemble estimate of the correlation agrees with the exact matrix
        // value within 3 bootstrap sigmas.
        let spec = geometric(10);
        let op = build_operator(&spec, 1, DEFAULT_CELL_CAP).unwrap();
        let phi_vec = op.basis().level_indicator(0);
        let psi_vec = op.basis().symbol_indicator(0);
        let exact = op.corr_exact(&phi_vec, &psi_vec, 8).unwrap();
        let points = crate::measures::srb_sample_quotient(&spec, 1234, 60_000);
        let phi = |p: &TowerPoint| if p.level() == 0 { 1.0 } else { 0.0 };
        let psi = |p: &TowerPoint| if p.column() == 0 { 1.0 } else { 0.0 };
        let mean_phi = op.basis().integral(&phi_vec).unwrap();
        let mean_psi = op.basis().integral(&psi_vec).unwrap();
        let (mc, se) = crate::stats::corr_mc(
            &points,
            |p| p.step_in_place(&spec).unwrap(),
            phi,
            psi,
            mean_phi,
            mean_psi,
            8,
            777,
        );
        for n in 0..=8usize {
            let tol = 3.0 * se[n] + 1e-9;
            assert!(
                (mc[n] - exact[n]).abs() <= tol,
                "n = {n}: {} vs {} (tol {tol})",
                mc[n],
                exact[n]
            );
        }
    }

    #[test]
    fn operator_action_matches_orbit_pullback() {
        // The matrix realizes the duality on sampled orbits: stepping samples
        // forward reproduces <phi, psi . T> against the exact <L phi, psi>.
        let spec = geometric(8);
        let op = build_operator(&spec, 1, DEFAULT_CELL_CAP).unwrap();
        let phi = op.basis().level_indicator(1);
        let psi = op.basis().level_indicator(0);
        let lphi = op.apply(&phi).unwrap();
        let mut lhs = Kahan::new();
        for ((a, b), m) in lphi.iter().zip(&psi).zip(op.basis().masses()) {
            lhs.add(a * b * m);
        }
        let pts = crate::measures::srb_sample_quotient(&spec, 55, 200_000);
        let mut acc = 0u64;
        for p in &pts {
            let q = tower_step(&spec, p).unwrap();
            if p.level() == 1 && q.level() == 0 {
                acc += 1;
            }
        }
        let est = acc as f64 / pts.len() as f64;
        let sigma = (lhs.value() * (1.0 - lhs.value()) / pts.len() as f64).sqrt();
        assert!((est - lhs.value()).abs() <= 4.0 * sigma + 1e-9);
    }
}
