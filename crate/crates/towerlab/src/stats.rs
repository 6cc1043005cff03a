//! Ensemble estimators: Birkhoff averages, large and maximal large
//! deviations, expansion-time and recurrence tails, and Monte Carlo
//! correlation cross-checks.
//!
//! Orbit computations are independent per ensemble member and seeded by
//! counters, so reductions are order-insensitive and results do not depend on
//! how the work is scheduled.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::Kahan;
use crate::rng;
use crate::tower::{ReturnTimeSpec, Symbol};

/// Number of bootstrap resamples behind every stderr band.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Arithmetic mean of `phi` along the orbit segment of length `n`.
pub fn birkhoff_average<P, S, F>(mut x: P, step: S, phi: F, n: usize) -> f64
where
    S: Fn(&mut P),
    F: Fn(&P) -> f64,
{
    assert!(n >= 1);
    let mut acc = Kahan::new();
    for _ in 0..n {
        acc.add(phi(&x));
        step(&mut x);
    }
    acc.value() / n as f64
}

/// Long-orbit estimate of a space average with a batch-means stderr.
pub fn estimate_space_average<P, S, F>(x: P, step: S, phi: F, steps: usize) -> (f64, f64)
where
    S: Fn(&mut P),
    F: Fn(&P) -> f64,
{
    let batches = 100.min(steps).max(1);
    let per = steps / batches;
    let mut x = x;
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut acc = Kahan::new();
        for _ in 0..per {
            acc.add(phi(&x));
            step(&mut x);
        }
        means.push(acc.value() / per as f64);
    }
    let m = crate::numeric::kahan_sum(means.iter().copied()) / batches as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / batches.max(2) as f64;
    (m, (var / batches as f64).sqrt())
}

/// Large- and maximal-large-deviation estimates on one ensemble, with the
/// saturation diagnostic for the truncated sup.
#[derive(Debug, Clone)]
pub struct DeviationSeries {
    pub epsilon: f64,
    pub j_max: u32,
    pub ensemble: usize,
    pub n_grid: Vec<u32>,
    pub ld: Vec<f64>,
    pub ld_stderr: Vec<f64>,
    pub mld: Vec<f64>,
    pub mld_stderr: Vec<f64>,
    /// Mean number of exceedance times in `[n, j_max]` per grid entry: the
    /// union-bound majorant of `mld`.
    pub exceed_mean_tail: Vec<f64>,
    /// Largest time at which any orbit's exceedance status last changed.
    pub last_change: u32,
    /// Set when the sup has not saturated below the horizon.
    pub unstable: bool,
}

/// Scan every orbit over `j_max` steps and aggregate exceedance data for the
/// deviation estimates. `mean` is the space average the caller supplies
/// (exact for cylinder observables, long-orbit estimate otherwise).
#[allow(clippy::too_many_arguments)]
pub fn deviation_series<P, S, F>(
    points: &[P],
    step: S,
    phi: F,
    mean: f64,
    epsilon: f64,
    n_grid: &[u32],
    j_max: u32,
    boot_seed: u64,
) -> Result<DeviationSeries>
where
    P: Clone + Send + Sync,
    S: Fn(&mut P) + Sync,
    F: Fn(&P) -> f64 + Sync,
{
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    if n_grid.iter().any(|&n| n < 1 || n > j_max) {
        return Err(Error::InvalidParameter(
            "n grid must lie in [1, j_max]".into(),
        ));
    }
    let jm = j_max as usize;
    let n = points.len();

    struct Agg {
        counts: Vec<u64>,
        jlast: Vec<(u32, u32)>,
    }
    let agg = (0..n)
        .into_par_iter()
        .fold(
            || Agg {
                counts: vec![0u64; jm + 1],
                jlast: Vec::new(),
            },
            |mut agg, i| {
                let mut p = points[i].clone();
                let mut acc = Kahan::new();
                let mut last = 0u32;
                for j in 1..=jm {
                    acc.add(phi(&p) - mean);
                    if (acc.value() / j as f64).abs() > epsilon {
                        agg.counts[j] += 1;
                        last = j as u32;
                    }
                    step(&mut p);
                }
                agg.jlast.push((i as u32, last));
                agg
            },
        )
        .reduce(
            || Agg {
                counts: vec![0u64; jm + 1],
                jlast: Vec::new(),
            },
            |mut a, b| {
                for (x, y) in a.counts.iter_mut().zip(&b.counts) {
                    *x += *y;
                }
                a.jlast.extend(b.jlast);
                a
            },
        );
    let mut ordered = agg.jlast;
    ordered.sort_unstable();
    let jlast: Vec<u32> = ordered.into_iter().map(|(_, j)| j).collect();
    let counts = agg.counts;

    let nf = n as f64;
    let ld: Vec<f64> = n_grid.iter().map(|&g| counts[g as usize] as f64 / nf).collect();
    let ld_stderr: Vec<f64> = ld.iter().map(|&p| (p * (1.0 - p) / nf).sqrt()).collect();

    // Suffix counts of last exceedance times.
    let mut hist = vec![0u64; jm + 2];
    for &j in &jlast {
        hist[j as usize] += 1;
    }
    let mut suffix = vec![0u64; jm + 2];
    for j in (0..=jm).rev() {
        suffix[j] = suffix[j + 1] + hist[j];
    }
    let mld: Vec<f64> = n_grid.iter().map(|&g| suffix[g as usize] as f64 / nf).collect();
    let mld_stderr = bootstrap_suffix_stderr(&jlast, n_grid, boot_seed);

    let mut exceed_suffix = vec![0u64; jm + 2];
    for j in (1..=jm).rev() {
        exceed_suffix[j] = exceed_suffix[j + 1] + counts[j];
    }
    let exceed_mean_tail: Vec<f64> = n_grid
        .iter()
        .map(|&g| exceed_suffix[g as usize] as f64 / nf)
        .collect();

    let last_change = jlast.iter().copied().max().unwrap_or(0);
    Ok(DeviationSeries {
        epsilon,
        j_max,
        ensemble: n,
        n_grid: n_grid.to_vec(),
        ld,
        ld_stderr,
        mld,
        mld_stderr,
        exceed_mean_tail,
        last_change,
        unstable: last_change == j_max,
    })
}

/// Bootstrap stderr of the suffix frequencies `P(value >= n)` over the grid.
fn bootstrap_suffix_stderr(values: &[u32], grid: &[u32], seed: u64) -> Vec<f64> {
    let n = values.len();
    let vmax = values.iter().copied().max().unwrap_or(0) as usize;
    let mut sums = vec![0.0f64; grid.len()];
    let mut sqs = vec![0.0f64; grid.len()];
    for r in 0..BOOTSTRAP_RESAMPLES {
        let mut hist = vec![0u64; vmax + 2];
        for t in 0..n {
            let idx = (rng::unit3(seed, r as u64, t as u64) * n as f64) as usize;
            hist[values[idx.min(n - 1)] as usize] += 1;
        }
        let mut sfx = vec![0u64; vmax + 2];
        for v in (0..=vmax).rev() {
            sfx[v] = sfx[v + 1] + hist[v];
        }
        for (i, &g) in grid.iter().enumerate() {
            let p = if (g as usize) <= vmax {
                sfx[g as usize] as f64 / n as f64
            } else {
                0.0
            };
            sums[i] += p;
            sqs[i] += p * p;
        }
    }
    let r = BOOTSTRAP_RESAMPLES as f64;
    sums.iter()
        .zip(&sqs)
        .map(|(&s, &q)| ((q / r - (s / r) * (s / r)).max(0.0)).sqrt())
        .collect()
}

/// Fraction of the ensemble whose time-`n` average deviates by more than
/// `epsilon`, with the binomial stderr.
pub fn ld_estimate<P, S, F>(
    points: &[P],
    step: S,
    phi: F,
    mean: f64,
    epsilon: f64,
    n: u32,
) -> Result<(f64, f64)>
where
    P: Clone + Send + Sync,
    S: Fn(&mut P) + Sync,
    F: Fn(&P) -> f64 + Sync,
{
    let s = deviation_series(points, step, phi, mean, epsilon, &[n], n, 0)?;
    Ok((s.ld[0], s.ld_stderr[0]))
}

/// Fraction whose sup over `[n, j_max]` deviates; errors out when the sup has
/// not saturated below the horizon.
#[allow(clippy::too_many_arguments)]
pub fn mld_estimate<P, S, F>(
    points: &[P],
    step: S,
    phi: F,
    mean: f64,
    epsilon: f64,
    n: u32,
    j_max: u32,
    boot_seed: u64,
) -> Result<(f64, f64)>
where
    P: Clone + Send + Sync,
    S: Fn(&mut P) + Sync,
    F: Fn(&P) -> f64 + Sync,
{
    if j_max < n {
        return Err(Error::InvalidParameter("j_max must be >= n".into()));
    }
    let s = deviation_series(points, step, phi, mean, epsilon, &[n], j_max, boot_seed)?;
    if s.unstable {
        return Err(Error::Unstable(format!(
            "exceedance status still changing at the horizon {j_max}"
        )));
    }
    Ok((s.mld[0], s.mld_stderr[0]))
}

/// Exact large deviation for observables measurable on `(level, column)`:
/// enumerate the cylinder tree with exact masses. Feasible for small branch
/// counts and horizons; the leaf count grows like `B^returns`.
pub fn ld_exact<F>(spec: &ReturnTimeSpec, phi: F, epsilon: f64, n: u32) -> f64
where
    F: Fn(u32, Symbol) -> f64,
{
    let kac = 1.0 / crate::measures::mean_return(spec);
    // Exact space average.
    let mut mean = Kahan::new();
    for (s, b) in spec.branches().iter().enumerate() {
        for l in 0..b.r {
            mean.add(kac * b.p * phi(l, s as Symbol));
        }
    }
    let mean = mean.value();

    struct Node {
        t: u32,
        level: u32,
        sym: Symbol,
        sum: f64,
        weight: f64,
    }
    let mut hit = Kahan::new();
    let mut stack: Vec<Node> = Vec::new();
    for (s, b) in spec.branches().iter().enumerate() {
        for l in 0..b.r {
            stack.push(Node {
                t: 0,
                level: l,
                sym: s as Symbol,
                sum: 0.0,
                weight: kac * b.p,
            });
        }
    }
    while let Some(node) = stack.pop() {
        if node.t == n {
            if (node.sum / n as f64 - mean).abs() > epsilon {
                hit.add(node.weight);
            }
            continue;
        }
        let sum = node.sum + phi(node.level, node.sym);
        if node.level + 1 < spec.r(node.sym) {
            stack.push(Node {
                t: node.t + 1,
                level: node.level + 1,
                sym: node.sym,
                sum,
                weight: node.weight,
            });
        } else {
            for (s2, b2) in spec.branches().iter().enumerate() {
                stack.push(Node {
                    t: node.t + 1,
                    level: 0,
                    sym: s2 as Symbol,
                    sum,
                    weight: node.weight * b2.p,
                });
            }
        }
    }
    hit.value()
}

/// Tail frequencies with bootstrap error bars and censoring accounting.
#[derive(Debug, Clone)]
pub struct TailSeries {
    pub n: Vec<u32>,
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    pub censored: usize,
    pub horizon: u32,
}

/// Per-orbit expansion times against the threshold `lambda_hat / 2`: the
/// first time from which every running average of `phi` stays at or below
/// the threshold. The scan horizon is `n_max + margin`; orbits still above
/// the threshold at the horizon are censored and reported.
pub fn expansion_time_tail<P, S, F>(
    points: &[P],
    step_n: S,
    phi: F,
    lambda_hat: f64,
    n_max: u32,
    margin: u32,
    boot_seed: u64,
) -> Result<TailSeries>
where
    P: Clone + Send + Sync,
    S: Fn(&mut P) + Sync,
    F: Fn(&P) -> f64 + Sync,
{
    // Negated form also rejects NaN estimates.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lambda_hat < 0.0) {
        return Err(Error::NotExpanding(lambda_hat));
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let horizon = n_max + margin;
    let thresh = lambda_hat / 2.0;
    let etimes: Vec<u32> = points
        .par_iter()
        .map(|p0| {
            let mut p = p0.clone();
            let mut acc = Kahan::new();
            let mut last_above = 0u32;
            for k in 1..=horizon {
                acc.add(phi(&p));
                if acc.value() / k as f64 > thresh {
                    last_above = k;
                }
                step_n(&mut p);
            }
            last_above + 1
        })
        .collect();
    let censored = etimes.iter().filter(|&&e| e > horizon).count();
    let nf = points.len() as f64;
    let grid: Vec<u32> = (1..=n_max).collect();
    let value: Vec<f64> = grid
        .iter()
        .map(|&n| etimes.iter().filter(|&&e| e > n).count() as f64 / nf)
        .collect();
    let shifted: Vec<u32> = etimes.iter().map(|&e| e.saturating_sub(1)).collect();
    let stderr = bootstrap_suffix_stderr(&shifted, &grid, boot_seed);
    Ok(TailSeries {
        n: grid,
        value,
        stderr,
        censored,
        horizon,
    })
}

/// Recurrence tail read directly off an abstract tower: returns are
/// prescribed, so no sampling is involved.
pub fn recurrence_tail_exact(spec: &ReturnTimeSpec, n_max: u32) -> TailSeries {
    let grid: Vec<u32> = (1..=n_max).collect();
    let value = grid.iter().map(|&n| crate::measures::tail(spec, n)).collect();
    TailSeries {
        stderr: vec![0.0; grid.len()],
        n: grid,
        value,
        censored: 0,
        horizon: n_max,
    }
}

/// Empirical first-return tail of an interval map on a uniform sample of the
/// inducing domain. Orbits that fail to return within the horizon are
/// censored and reported.
pub fn recurrence_tail_mc<F>(
    map: F,
    domain: (f64, f64),
    n_max: u32,
    horizon: u32,
    ensemble: usize,
    seed: u64,
) -> TailSeries
where
    F: Fn(f64) -> f64 + Sync,
{
    let (lo, hi) = domain;
    let returns: Vec<u32> = (0..ensemble)
        .into_par_iter()
        .map(|i| {
            let mut x = lo + rng::unit2(rng::member_seed(seed, i as u64), 0x2e) * (hi - lo);
            for r in 1..=horizon {
                x = map(x);
                if x >= lo && x < hi {
                    return r;
                }
            }
            horizon + 1
        })
        .collect();
    let censored = returns.iter().filter(|&&r| r > horizon).count();
    let nf = ensemble as f64;
    let grid: Vec<u32> = (1..=n_max).collect();
    let value: Vec<f64> = grid
        .iter()
        .map(|&n| returns.iter().filter(|&&r| r > n).count() as f64 / nf)
        .collect();
    let shifted: Vec<u32> = returns.iter().map(|&r| r.saturating_sub(1)).collect();
    let stderr = bootstrap_suffix_stderr(&shifted, &grid, seed ^ 0xb00);
    TailSeries {
        n: grid,
        value,
        stderr,
        censored,
        horizon,
    }
}

/// Monte Carlo correlation curve `|mean of phi_hat(p) psi(T^n p)|` with
/// bootstrap error bars; the ensemble oracle cross-checking the exact matrix
/// route.
#[allow(clippy::too_many_arguments)]
pub fn corr_mc<P, S, F, G>(
    points: &[P],
    step: S,
    phi: F,
    psi: G,
    mean_phi: f64,
    mean_psi: f64,
    n_max: usize,
    boot_seed: u64,
) -> (Vec<f64>, Vec<f64>)
where
    P: Clone + Send + Sync,
    S: Fn(&mut P) + Sync,
    F: Fn(&P) -> f64 + Sync,
    G: Fn(&P) -> f64 + Sync,
{
    let n = points.len();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|p0| {
            let mut p = p0.clone();
            let f0 = phi(&p) - mean_phi;
            let mut row = Vec::with_capacity(n_max + 1);
            for _ in 0..=n_max {
                row.push(f0 * (psi(&p) - mean_psi));
                step(&mut p);
            }
            row
        })
        .collect();
    let mut value = Vec::with_capacity(n_max + 1);
    let mut stderr = Vec::with_capacity(n_max + 1);
    for lag in 0..=n_max {
        let mut acc = Kahan::new();
        for row in &rows {
            acc.add(row[lag]);
        }
        let m = acc.value() / n as f64;
        // Bootstrap over orbits.
        let mut sums = 0.0;
        let mut sqs = 0.0;
        for r in 0..BOOTSTRAP_RESAMPLES {
            let mut acc_r = 0.0;
            for t in 0..n {
                let idx = (rng::unit3(boot_seed, (r * (n_max + 1) + lag) as u64, t as u64)
                    * n as f64) as usize;
                acc_r += rows[idx.min(n - 1)][lag];
            }
            let mr = acc_r / n as f64;
            sums += mr;
            sqs += mr * mr;
        }
        let rf = BOOTSTRAP_RESAMPLES as f64;
        value.push(m.abs());
        stderr.push(((sqs / rf - (sums / rf) * (sums / rf)).max(0.0)).sqrt());
    }
    (value, stderr)
}
