//! Config-driven experiment runner behind the CLI subcommands. Every run
//! writes plot-ready artifacts plus a manifest carrying the config hash,
//! truncation parameters and honesty flags.

use std::path::{Path, PathBuf};

use crate::artifacts::{self, Manifest};
use crate::config::{ExperimentConfig, ObservableConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::fit;
use crate::measures;
use crate::observables::Observable;
use crate::stats;
use crate::systems::{
    ambient_step, build_inducing, cu_derivative_observable, solenoid_mu_sample, AmbientPoint,
    SolenoidRealization, SystemSpec,
};
use crate::tower::{ReturnTimeSpec, Symbol, TowerPoint};
use crate::transfer;

/// What a run produced, for exit-code decisions and logging.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub flags: Vec<String>,
    pub unstable: bool,
}

/// The abstract tower backing a config, with truncation metadata.
pub struct BuiltTower {
    pub spec: ReturnTimeSpec,
    pub r_max: u32,
    pub truncation_mass: f64,
    pub flags: Vec<String>,
}

pub fn build_tower(cfg: &ExperimentConfig) -> Result<BuiltTower> {
    let mut flags = Vec::new();
    let (spec, r_max, truncation_mass) = match &cfg.system {
        SystemConfig::Geometric { r_max } => {
            let (s, t) = ReturnTimeSpec::geometric(*r_max)?;
            (s, *r_max, t)
        }
        SystemConfig::Polynomial { alpha, r_max } => {
            let (s, t) = ReturnTimeSpec::polynomial(*alpha, *r_max)?;
            (s, *r_max, t)
        }
        SystemConfig::Bernoulli { branches, beta_s } => {
            (ReturnTimeSpec::bernoulli(*branches, *beta_s)?, 1, 0.0)
        }
        SystemConfig::SpecFile { path } => {
            let text = std::fs::read_to_string(path)?;
            let s = ReturnTimeSpec::parse_table(&text)?;
            let r_max = s.max_return();
            (s, r_max, 0.0)
        }
        SystemConfig::Intermittent { gamma, r_max } => {
            let scheme = build_inducing(*gamma, *r_max)?;
            flags.push(format!("inducing_gap_mass:{:e}", scheme.gap_mass));
            let s = scheme.to_spec(0.5)?;
            (s, *r_max, scheme.gap_mass)
        }
        SystemConfig::Solenoid {
            base_factor,
            fiber_contraction,
            ..
        } => (
            ReturnTimeSpec::bernoulli(*base_factor as u16, *fiber_contraction)?,
            1,
            0.0,
        ),
    };
    Ok(BuiltTower {
        spec,
        r_max,
        truncation_mass,
        flags,
    })
}

/// Tower-side observable with its exact mean when the cell structure gives
/// one. Non-cylinder observables get their mean estimated downstream.
pub fn tower_observable(
    spec: &ReturnTimeSpec,
    obs: &ObservableConfig,
) -> Result<(Observable, Option<f64>)> {
    let kac = 1.0 / measures::mean_return(spec);
    match obs {
        ObservableConfig::LevelIndicator { level } => {
            let mean = kac * measures::tail(spec, *level);
            Ok((crate::observables::level_indicator(*level), Some(mean)))
        }
        ObservableConfig::SymbolIndicator { index } => {
            let sym = spec.position_of(*index).ok_or_else(|| {
                Error::InvalidParameter(format!("no branch with index {index}"))
            })?;
            let b = spec.branch(sym);
            let mean = kac * b.p * b.r as f64;
            Ok((crate::observables::symbol_indicator(sym), Some(mean)))
        }
        ObservableConfig::CylinderIndicator { level, word } => {
            let word: Vec<Symbol> = word
                .iter()
                .map(|&i| {
                    spec.position_of(i)
                        .ok_or_else(|| Error::InvalidParameter(format!("no branch with index {i}")))
                })
                .collect::<Result<_>>()?;
            let mut mean = kac;
            for &s in &word {
                mean *= spec.p(s);
            }
            if *level >= spec.r(word[0]) {
                return Err(Error::InvalidParameter(
                    "cylinder level at or above the roof".into(),
                ));
            }
            Ok((
                crate::observables::cylinder_indicator(spec.clone(), *level, word),
                Some(mean),
            ))
        }
        ObservableConfig::CoordinatePolynomial { coeffs } => Ok((
            crate::observables::coordinate_polynomial(spec.clone(), *coeffs, 40),
            None,
        )),
        ObservableConfig::CuDerivative { .. } => Err(Error::InvalidParameter(
            "cu_derivative needs an ambient system".into(),
        )),
    }
}

/// Coefficient vector of a config observable on the cylinder basis.
fn basis_vector(
    basis: &transfer::CylinderBasis,
    spec: &ReturnTimeSpec,
    obs: &ObservableConfig,
) -> Result<Vec<f64>> {
    match obs {
        ObservableConfig::LevelIndicator { level } => Ok(basis.level_indicator(*level)),
        ObservableConfig::SymbolIndicator { index } => {
            let sym = spec.position_of(*index).ok_or_else(|| {
                Error::InvalidParameter(format!("no branch with index {index}"))
            })?;
            Ok(basis.symbol_indicator(sym))
        }
        ObservableConfig::CylinderIndicator { level, word } => {
            if word.len() > basis.depth() {
                return Err(Error::InvalidParameter(format!(
                    "cylinder word longer than basis depth {}",
                    basis.depth()
                )));
            }
            let word: Vec<Symbol> = word
                .iter()
                .map(|&i| {
                    spec.position_of(i)
                        .ok_or_else(|| Error::InvalidParameter(format!("no branch with index {i}")))
                })
                .collect::<Result<_>>()?;
            Ok(basis.vector(|l, w| {
                if l == *level && w[..word.len()] == word[..] {
                    1.0
                } else {
                    0.0
                }
            }))
        }
        _ => Err(Error::InvalidParameter(
            "observable is not in the cylinder-basis span".into(),
        )),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// `tower`: build the model, export the spec table, level masses and exact
/// recurrence tail.
pub fn run_tower(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let built = build_tower(cfg)?;
    let mut manifest = Manifest::new(&cfg.raw_text, built.r_max, built.truncation_mass);
    for f in &built.flags {
        manifest.flag(f.clone());
    }
    std::fs::write(cfg.out_dir.join("spec.txt"), built.spec.to_table())?;
    let m = measures::level_masses(&built.spec);
    let levels: Vec<u32> = (0..m.level_mass.len() as u32).collect();
    let zeros = vec![0.0; levels.len()];
    artifacts::write_series(
        &cfg.out_dir.join("level_masses.csv"),
        &levels,
        &m.level_mass,
        &zeros,
    )?;
    let tail = stats::recurrence_tail_exact(&built.spec, built.spec.max_return());
    artifacts::write_series(
        &cfg.out_dir.join("tails.csv"),
        &tail.n,
        &tail.value,
        &tail.stderr,
    )?;
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        flags: manifest.flags,
        unstable: false,
    })
}

/// `corr`: exact centered L1 decay and correlation curve from the cylinder
/// operator, plus a decay fit.
pub fn run_corr(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let built = build_tower(cfg)?;
    let mut manifest = Manifest::new(&cfg.raw_text, built.r_max, built.truncation_mass);
    for f in &built.flags {
        manifest.flag(f.clone());
    }
    let op = transfer::build_operator(&built.spec, cfg.depth, cfg.cell_cap)?;
    let phi = basis_vector(op.basis(), &built.spec, &cfg.observable)?;
    let n_max = cfg.estimator.j_max as usize;
    let d = op.l1_decay(&phi, n_max)?;
    let corr = op.corr_exact(&phi, &phi, n_max)?;
    std::fs::write(cfg.out_dir.join("decay.csv"), transfer::decay_csv(&d, &corr))?;
    let ns: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
    let f = fit::fit_rate(&ns, &d, cfg.fit.class, Some((cfg.fit.n_lo, cfg.fit.n_hi)))?;
    if f.trimmed > 0 {
        manifest.flag(format!("fit_trimmed:{}", f.trimmed));
    }
    artifacts::write_json(&cfg.out_dir.join("fit.json"), &f)?;
    manifest.flag(format!(
        "trusted_fit_horizon:{}",
        built.r_max.max(2) / 2
    ));
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        flags: manifest.flags,
        unstable: false,
    })
}

enum DeviationBackend {
    Tower {
        spec: ReturnTimeSpec,
        phi: Observable,
        mean: f64,
    },
    Ambient {
        system: SystemSpec,
        phi: Observable,
        mean: f64,
    },
}

fn deviation_backend(
    cfg: &ExperimentConfig,
    manifest: &mut Manifest,
) -> Result<(DeviationBackend, Vec<String>)> {
    let mut flags = Vec::new();
    match &cfg.system {
        SystemConfig::Solenoid {
            base_factor,
            fiber_contraction,
            coupling_amplitude,
        } => {
            let real =
                SolenoidRealization::new(*base_factor, *fiber_contraction, *coupling_amplitude)?;
            let system = real.system().clone();
            let phi = match &cfg.observable {
                ObservableConfig::CuDerivative { n_compose } => {
                    cu_derivative_observable(&system, *n_compose)?
                }
                ObservableConfig::CoordinatePolynomial { coeffs } => {
                    let c = *coeffs;
                    Observable::ambient(
                        move |q: AmbientPoint| {
                            c[0] + c[1] * q.x
                                + c[2] * q.z
                                + c[3] * q.x * q.x
                                + c[4] * q.z * q.z
                                + c[5] * q.x * q.z
                        },
                        crate::observables::HolderData {
                            exponent: 1.0,
                            constant: c.iter().map(|x| 2.0 * x.abs()).sum(),
                        },
                        c.iter().map(|x| x.abs()).sum(),
                    )
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "observable {other:?} is not ambient"
                    )))
                }
            };
            let sys2 = system.clone();
            let phi2 = phi.clone();
            let (mean, se) = stats::estimate_space_average(
                solenoid_mu_sample(&real, cfg.estimator.seed ^ 0x5ca1e, 1)[0],
                move |q| *q = ambient_step(&sys2, *q),
                move |q| phi2.eval_ambient(*q),
                cfg.estimator.control_orbit,
            );
            manifest.flag(format!("mean_estimate_stderr:{se:e}"));
            flags.push(format!("mean_estimate_stderr:{se:e}"));
            Ok((DeviationBackend::Ambient { system, phi, mean }, flags))
        }
        SystemConfig::Intermittent { gamma, .. } => {
            let system = SystemSpec::Intermittent { gamma: *gamma };
            let phi = match &cfg.observable {
                ObservableConfig::CuDerivative { n_compose } => {
                    cu_derivative_observable(&system, *n_compose)?
                }
                ObservableConfig::CoordinatePolynomial { coeffs } => {
                    let c = *coeffs;
                    Observable::ambient(
                        move |q: AmbientPoint| c[0] + c[1] * q.x + c[3] * q.x * q.x,
                        crate::observables::HolderData {
                            exponent: 1.0,
                            constant: c.iter().map(|x| 2.0 * x.abs()).sum(),
                        },
                        c.iter().map(|x| x.abs()).sum(),
                    )
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "observable {other:?} is not ambient"
                    )))
                }
            };
            let sys2 = system.clone();
            let phi2 = phi.clone();
            let (mean, se) = stats::estimate_space_average(
                AmbientPoint::on_line(0.2371),
                move |q| *q = ambient_step(&sys2, *q),
                move |q| phi2.eval_ambient(*q),
                cfg.estimator.control_orbit,
            );
            manifest.flag(format!("mean_estimate_stderr:{se:e}"));
            manifest.flag("lebesgue_ensemble_with_burn_in:1000".to_string());
            flags.push("lebesgue_ensemble_with_burn_in:1000".to_string());
            Ok((DeviationBackend::Ambient { system, phi, mean }, flags))
        }
        _ => {
            let built = build_tower(cfg)?;
            let (phi, exact_mean) = tower_observable(&built.spec, &cfg.observable)?;
            let mean = match exact_mean {
                Some(m) => m,
                None => {
                    let spec2 = built.spec.clone();
                    let phi2 = phi.clone();
                    let start = measures::srb_sample_quotient(&built.spec, cfg.estimator.seed, 1)
                        .pop()
                        .unwrap();
                    let (m, se) = stats::estimate_space_average(
                        start,
                        move |p| p.step_in_place(&spec2).unwrap(),
                        move |p| phi2.eval_tower(p),
                        cfg.estimator.control_orbit,
                    );
                    manifest.flag(format!("mean_estimate_stderr:{se:e}"));
                    flags.push(format!("mean_estimate_stderr:{se:e}"));
                    m
                }
            };
            Ok((
                DeviationBackend::Tower {
                    spec: built.spec,
                    phi,
                    mean,
                },
                flags,
            ))
        }
    }
}

fn run_deviation(cfg: &ExperimentConfig, with_mld: bool) -> Result<RunOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let built = build_tower(cfg)?;
    let mut manifest = Manifest::new(&cfg.raw_text, built.r_max, built.truncation_mass);
    let (backend, _) = deviation_backend(cfg, &mut manifest)?;
    // Norm report for the observable actually run.
    match &backend {
        DeviationBackend::Tower { phi, .. } => {
            manifest.flag(format!("observable_sup_norm:{:e}", phi.sup_norm));
            manifest.flag(format!("observable_beta_seminorm:{:e}", phi.beta_seminorm));
        }
        DeviationBackend::Ambient { phi, .. } => {
            manifest.flag(format!("observable_sup_norm:{:e}", phi.sup_norm));
            if let Some(h) = phi.holder {
                manifest.flag(format!("observable_holder_exponent:{:e}", h.exponent));
                manifest.flag(format!("observable_holder_constant:{:e}", h.constant));
            }
        }
    }
    let est = &cfg.estimator;
    let series = match backend {
        DeviationBackend::Tower { spec, phi, mean } => {
            let pts = measures::srb_sample(&spec, est.seed, est.ensemble);
            stats::deviation_series(
                &pts,
                |p: &mut TowerPoint| p.step_in_place(&spec).unwrap(),
                |p| phi.eval_tower(p),
                mean,
                est.epsilon,
                &est.n_grid,
                est.j_max,
                est.seed ^ 0xb57,
            )?
        }
        DeviationBackend::Ambient { system, phi, mean } => {
            let pts: Vec<AmbientPoint> = match &system {
                SystemSpec::Solenoid { .. } => {
                    let real = match &cfg.system {
                        SystemConfig::Solenoid {
                            base_factor,
                            fiber_contraction,
                            coupling_amplitude,
                        } => SolenoidRealization::new(
                            *base_factor,
                            *fiber_contraction,
                            *coupling_amplitude,
                        )?,
                        _ => unreachable!(),
                    };
                    solenoid_mu_sample(&real, est.seed, est.ensemble)
                }
                _ => (0..est.ensemble)
                    .map(|i| {
                        let mut q = AmbientPoint::on_line(crate::rng::unit2(
                            crate::rng::member_seed(est.seed, i as u64),
                            0x1b,
                        ));
                        for _ in 0..1000 {
                            q = ambient_step(&system, q);
                        }
                        q
                    })
                    .collect(),
            };
            stats::deviation_series(
                &pts,
                |q: &mut AmbientPoint| *q = ambient_step(&system, *q),
                |q| phi.eval_ambient(*q),
                mean,
                est.epsilon,
                &est.n_grid,
                est.j_max,
                est.seed ^ 0xb57,
            )?
        }
    };
    artifacts::write_series(
        &cfg.out_dir.join("ld.csv"),
        &series.n_grid,
        &series.ld,
        &series.ld_stderr,
    )?;
    if with_mld {
        artifacts::write_series(
            &cfg.out_dir.join("mld.csv"),
            &series.n_grid,
            &series.mld,
            &series.mld_stderr,
        )?;
        manifest.flag(format!("mld_last_change:{}", series.last_change));
        if series.unstable {
            manifest.flag("mld_unstable".to_string());
        }
    }
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        flags: manifest.flags,
        unstable: with_mld && series.unstable,
    })
}

/// `ld`: large-deviation series on the configured grid.
pub fn run_ld(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_deviation(cfg, false)
}

/// `mld`: large and maximal large deviations with the saturation diagnostic.
pub fn run_mld(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_deviation(cfg, true)
}

/// `tails`: recurrence-time tail, exact for abstract towers and Monte Carlo
/// with censoring for the intermittent realization.
pub fn run_tails(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let built = build_tower(cfg)?;
    let mut manifest = Manifest::new(&cfg.raw_text, built.r_max, built.truncation_mass);
    for f in &built.flags {
        manifest.flag(f.clone());
    }
    let est = &cfg.estimator;
    let n_max = est.n_grid.last().copied().unwrap_or(built.r_max);
    let tail = match &cfg.system {
        SystemConfig::Intermittent { gamma, .. } => {
            let g = *gamma;
            let t = stats::recurrence_tail_mc(
                move |x| crate::systems::lsv_map(g, x),
                (0.5, 1.0),
                n_max,
                est.j_max.max(n_max) + est.horizon_margin,
                est.ensemble,
                est.seed,
            );
            if t.censored > 0 {
                manifest.flag(format!("censored_returns:{}", t.censored));
            }
            t
        }
        _ => stats::recurrence_tail_exact(&built.spec, n_max.min(built.spec.max_return())),
    };
    artifacts::write_series(&cfg.out_dir.join("tails.csv"), &tail.n, &tail.value, &tail.stderr)?;
    let ns: Vec<f64> = tail.n.iter().map(|&n| n as f64).collect();
    match fit::fit_rate(&ns, &tail.value, cfg.fit.class, Some((cfg.fit.n_lo, cfg.fit.n_hi))) {
        Ok(f) => artifacts::write_json(&cfg.out_dir.join("fit.json"), &f)?,
        Err(e) => manifest.flag(format!("fit_skipped:{e}")),
    }
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        flags: manifest.flags,
        unstable: false,
    })
}

/// `etime`: expansion-time tail for the smooth systems in the catalog.
pub fn run_etime(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let built = build_tower(cfg)?;
    let mut manifest = Manifest::new(&cfg.raw_text, built.r_max, built.truncation_mass);
    let est = &cfg.estimator;
    let n_compose = match &cfg.observable {
        ObservableConfig::CuDerivative { n_compose } => *n_compose,
        _ => 1,
    };
    let (system, points): (SystemSpec, Vec<AmbientPoint>) = match &cfg.system {
        SystemConfig::Intermittent { gamma, .. } => {
            let sys = SystemSpec::Intermittent { gamma: *gamma };
            let pts = (0..est.ensemble)
                .map(|i| {
                    AmbientPoint::on_line(crate::rng::unit2(
                        crate::rng::member_seed(est.seed, i as u64),
                        0x17,
                    ))
                })
                .collect();
            (sys, pts)
        }
        SystemConfig::Solenoid {
            base_factor,
            fiber_contraction,
            coupling_amplitude,
        } => {
            let real =
                SolenoidRealization::new(*base_factor, *fiber_contraction, *coupling_amplitude)?;
            let pts = crate::systems::solenoid_leaf_sample(&real, est.seed, est.ensemble);
            (real.system().clone(), pts)
        }
        _ => {
            return Err(Error::InvalidParameter(
                "expansion time needs a smooth system with derivative access".into(),
            ))
        }
    };
    let phi = cu_derivative_observable(&system, n_compose)?;
    let sys2 = system.clone();
    let phi2 = phi.clone();
    let (lambda, se) = stats::estimate_space_average(
        points[0],
        move |q| {
            for _ in 0..n_compose {
                *q = ambient_step(&sys2, *q);
            }
        },
        move |q| phi2.eval_ambient(*q),
        cfg.estimator.control_orbit,
    );
    manifest.flag(format!("lambda_hat:{lambda:e}"));
    manifest.flag(format!("lambda_hat_stderr:{se:e}"));
    let n_max = est.n_grid.last().copied().unwrap_or(100);
    let sys3 = system.clone();
    let tail = stats::expansion_time_tail(
        &points,
        move |q| {
            for _ in 0..n_compose {
                *q = ambient_step(&sys3, *q);
            }
        },
        |q| phi.eval_ambient(*q),
        lambda,
        n_max,
        est.horizon_margin,
        est.seed ^ 0xe7,
    )?;
    manifest.flag(format!("etime_margin:{}", est.horizon_margin));
    if tail.censored > 0 {
        manifest.flag(format!("censored_orbits:{}", tail.censored));
    }
    artifacts::write_series(&cfg.out_dir.join("etime.csv"), &tail.n, &tail.value, &tail.stderr)?;
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        flags: manifest.flags,
        unstable: tail.censored > 0,
    })
}

/// `fit`: fit a decay class to an existing `n,value[,stderr]` CSV.
pub fn run_fit(cfg: &ExperimentConfig, input: &Path) -> Result<RunOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let (ns, ys) = artifacts::read_series(input)?;
    let f = fit::fit_rate(&ns, &ys, cfg.fit.class, Some((cfg.fit.n_lo, cfg.fit.n_hi)))?;
    artifacts::write_json(&cfg.out_dir.join("fit.json"), &f)?;
    let mut manifest = Manifest::new(&cfg.raw_text, 0, 0.0);
    if f.trimmed > 0 {
        manifest.flag(format!("fit_trimmed:{}", f.trimmed));
    }
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        flags: manifest.flags,
        unstable: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn cfg(text: &str, dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::from_text(text, Some(11)).unwrap();
        c.out_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn corr_run_writes_deterministic_artifacts() {
        let text = "\
[system]
kind = geometric
r_max = 20
depth = 1

[estimator]
n_grid = 1 2 5 10 20
j_max = 40
ensemble = 200
seed = 3

[fit]
class = exponential
n_lo = 5
n_hi = 20
";
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_corr(&cfg(text, d1.path())).unwrap();
        run_corr(&cfg(text, d2.path())).unwrap();
        for name in ["decay.csv", "fit.json"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} must be byte-identical across runs");
        }
        let manifest = std::fs::read_to_string(d1.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("config_hash"));
        assert!(manifest.contains("truncation_mass"));
    }

    #[test]
    fn mld_run_reports_saturation() {
        let text = "\
[system]
kind = geometric
r_max = 15

[observable]
kind = level_indicator
level = 0

[estimator]
epsilon = 0.35
n_grid = 1 2 5 10
j_max = 120
ensemble = 400
seed = 5
";
        let d = tempfile::tempdir().unwrap();
        let out = run_mld(&cfg(text, d.path())).unwrap();
        assert!(!out.unstable);
        assert!(d.path().join("mld.csv").exists());
        assert!(d.path().join("ld.csv").exists());
    }

    #[test]
    fn tower_run_exports_spec_table() {
        let text = "\
[system]
kind = intermittent
gamma = 0.5
r_max = 30

[estimator]
seed = 1
ensemble = 100
n_grid = 1 2 5
j_max = 10
";
        let d = tempfile::tempdir().unwrap();
        run_tower(&cfg(text, d.path())).unwrap();
        let table = std::fs::read_to_string(d.path().join("spec.txt")).unwrap();
        let spec = ReturnTimeSpec::parse_table(&table).unwrap();
        assert!(spec.branch_count() >= 20);
    }

    #[test]
    fn exported_inducing_scheme_feeds_the_abstract_pipeline() {
        // intermittent -> spec table on disk -> file-backed abstract tower.
        let d = tempfile::tempdir().unwrap();
        let export = "\
[system]
kind = intermittent
gamma = 0.5
r_max = 40

[estimator]
seed = 2
ensemble = 100
n_grid = 1 2 5
j_max = 10
";
        run_tower(&cfg(export, d.path())).unwrap();
        let spec_path = d.path().join("spec.txt");
        let corr = format!(
            "\
[system]
kind = file
path = {}
depth = 1

[estimator]
n_grid = 1 2 5 10
j_max = 30
ensemble = 100
seed = 2

[fit]
class = polynomial
n_lo = 3
n_hi = 20
",
            spec_path.display()
        );
        let d2 = tempfile::tempdir().unwrap();
        run_corr(&cfg(&corr, d2.path())).unwrap();
        let decay = std::fs::read_to_string(d2.path().join("decay.csv")).unwrap();
        assert!(decay.starts_with("n,d,corr"));
        assert!(decay.lines().count() == 32);
    }
}
