//! Concrete realizations tying the symbolic tower to ambient dynamics: an
//! intermittent interval map with first-return inducing, and a skew product
//! with uniformly expanding base and uniformly contracting fibers.

use crate::error::{Error, Result};
use crate::numeric::Kahan;
use crate::tower::{ReturnTimeSpec, Symbol, TowerPoint};

/// A point of an ambient realization. Interval maps use `x` only (`z = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientPoint {
    pub x: f64,
    pub z: f64,
}

impl AmbientPoint {
    pub fn on_line(x: f64) -> Self {
        AmbientPoint { x, z: 0.0 }
    }
}

/// Catalog of shipped systems.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    AbstractTower(ReturnTimeSpec),
    /// Interval map `x (1 + 2^gamma x^gamma)` on `[0, 1/2)`, `2x - 1` on
    /// `[1/2, 1]`. `gamma = 0` is the uniformly expanding limit (doubling).
    Intermittent { gamma: f64 },
    /// Skew product `(x, z) -> (m x mod 1, lambda_s z + a x)` on the unit
    /// square; `a <= 1 - lambda_s` keeps the fiber inside `[0, 1)`.
    Solenoid {
        base_factor: u32,
        fiber_contraction: f64,
        coupling_amplitude: f64,
    },
}

impl SystemSpec {
    pub fn intermittent(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} not in [0, 1)"
            )));
        }
        Ok(SystemSpec::Intermittent { gamma })
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // negated forms reject NaN
    pub fn solenoid(base_factor: u32, fiber_contraction: f64, coupling_amplitude: f64) -> Result<Self> {
        if base_factor < 2 {
            return Err(Error::InvalidParameter("base factor must be >= 2".into()));
        }
        if !(fiber_contraction > 0.0 && fiber_contraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fiber contraction {fiber_contraction} not in (0, 1)"
            )));
        }
        // Domination: the fiber contraction beats the inverse base expansion.
        if fiber_contraction * (1.0 / base_factor as f64) >= 1.0 {
            return Err(Error::InvalidParameter("splitting is not dominated".into()));
        }
        if !(coupling_amplitude >= 0.0 && coupling_amplitude <= 1.0 - fiber_contraction) {
            return Err(Error::InvalidParameter(format!(
                "coupling amplitude {coupling_amplitude} must lie in [0, 1 - lambda_s]"
            )));
        }
        Ok(SystemSpec::Solenoid {
            base_factor,
            fiber_contraction,
            coupling_amplitude,
        })
    }
}

/// The intermittent interval map.
pub fn lsv_map(gamma: f64, x: f64) -> f64 {
    if x < 0.5 {
        x * (1.0 + 2f64.powf(gamma) * pow_gamma(x, gamma))
    } else {
        2.0 * x - 1.0
    }
}

/// Its derivative.
pub fn lsv_deriv(gamma: f64, x: f64) -> f64 {
    if x < 0.5 {
        1.0 + (1.0 + gamma) * 2f64.powf(gamma) * pow_gamma(x, gamma)
    } else {
        2.0
    }
}

// x^gamma with fast paths for the two shipped exponents.
fn pow_gamma(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else if gamma == 0.5 {
        x.sqrt()
    } else {
        x.powf(gamma)
    }
}

fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// One application of the ambient map.
pub fn ambient_step(sys: &SystemSpec, q: AmbientPoint) -> AmbientPoint {
    match sys {
        SystemSpec::AbstractTower(_) => q,
        SystemSpec::Intermittent { gamma } => AmbientPoint::on_line(lsv_map(*gamma, q.x)),
        SystemSpec::Solenoid {
            base_factor,
            fiber_contraction,
            coupling_amplitude,
        } => AmbientPoint {
            x: frac(q.x * *base_factor as f64),
            z: frac(*fiber_contraction * q.z + *coupling_amplitude * q.x),
        },
    }
}

/// One branch of a first-return inducing scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct InducingBranch {
    pub lo: f64,
    pub hi: f64,
    pub return_time: u32,
}

/// First-return structure of `[1/2, 1]` for the intermittent map: branch
/// intervals with return times, endpoint accuracy, and the unresolved mass.
#[derive(Debug, Clone)]
pub struct InducingScheme {
    pub gamma: f64,
    pub domain: (f64, f64),
    pub branches: Vec<InducingBranch>,
    /// Relative mass of the domain not covered by the computed branches.
    pub gap_mass: f64,
    pub endpoint_tol: f64,
}

/// First-return branches computed by backward iteration of the left branch.
/// The branch with return time `n + 1` is the preimage under `x -> 2x - 1` of
/// `[y_{n+1}, y_n)`, where `y_0 = 1`, `y_1 = 1/2` and `f(y_{k+1}) = y_k`.
pub fn build_inducing(gamma: f64, r_max: u32) -> Result<InducingScheme> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} not in [0, 1)"
        )));
    }
    if r_max < 1 {
        return Err(Error::InvalidParameter("r_max must be >= 1".into()));
    }
    let tol = 1e-14;
    let mut branches = Vec::with_capacity(r_max as usize);
    // R = 1 branch: 2x - 1 lands back in [1/2, 1].
    branches.push(InducingBranch {
        lo: 0.75,
        hi: 1.0,
        return_time: 1,
    });
    let mut y_hi = 0.5; // y_1
    for n in 1..r_max {
        // y_{n+1} solves lsv(y) = y_hi on (0, 1/2).
        let y_lo = invert_left_branch(gamma, y_hi, tol);
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also catches NaN endpoints
        if !(y_lo < y_hi) {
            // Float resolution exhausted near the neutral fixed point.
            break;
        }
        branches.push(InducingBranch {
            lo: 0.5 + 0.5 * y_lo,
            hi: 0.5 + 0.5 * y_hi,
            return_time: n + 1,
        });
        y_hi = y_lo;
    }
    let covered: f64 = branches.iter().map(|b| b.hi - b.lo).sum();
    let gap_mass = (0.5 - covered) / 0.5;
    Ok(InducingScheme {
        gamma,
        domain: (0.5, 1.0),
        branches,
        gap_mass,
        endpoint_tol: 1e-12,
    })
}

// Solve lsv_map(y) = target for y in (0, 1/2); the left branch is strictly
// increasing onto [0, 1).
fn invert_left_branch(gamma: f64, target: f64, tol: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 0.5f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lsv_map(gamma, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < tol * hi.max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl InducingScheme {
    /// Normalized tail `Leb{R > n} / |domain|` of the computed branches.
    pub fn tail(&self, n: u32) -> f64 {
        let len = self.domain.1 - self.domain.0;
        let mut acc = Kahan::new();
        for b in &self.branches {
            if b.return_time > n {
                acc.add(b.hi - b.lo);
            }
        }
        acc.value() / len + self.gap_mass
    }

    /// Export as an abstract tower spec: normalized branch lengths become the
    /// branch masses. `beta_s` is a free parameter of the symbolic model (the
    /// interval map has no stable direction).
    pub fn to_spec(&self, beta_s: f64) -> Result<ReturnTimeSpec> {
        let covered: f64 = self.branches.iter().map(|b| b.hi - b.lo).sum();
        let mut max_p = 0.0f64;
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let p = (b.hi - b.lo) / covered;
                max_p = max_p.max(p);
                crate::tower::Branch {
                    index: i as u32 + 1,
                    p,
                    r: b.return_time,
                }
            })
            .collect();
        ReturnTimeSpec::new(branches, (max_p + 0.01).min(0.99), beta_s)
    }
}

/// A realization binds a tower spec to ambient dynamics through a projection
/// satisfying `project . step = ambient_step . project`.
pub trait Realization: Send + Sync {
    fn spec(&self) -> &ReturnTimeSpec;
    fn project(&self, p: &TowerPoint) -> AmbientPoint;
    fn ambient_step(&self, q: AmbientPoint) -> AmbientPoint;
    /// Per-ambient-step contraction factor of stable-leaf distances.
    fn stable_rate(&self) -> f64;
}

/// Skew-product realization over the full `m`-shift. The projection is exact:
/// the base coordinate is the `m`-adic value of the future and the fiber
/// coordinate is the coupling series over the backward orbit, so the
/// semiconjugacy holds to round-off.
#[derive(Debug, Clone)]
pub struct SolenoidRealization {
    pub base_factor: u32,
    pub fiber_contraction: f64,
    pub coupling_amplitude: f64,
    spec: ReturnTimeSpec,
    system: SystemSpec,
}

impl SolenoidRealization {
    pub fn new(base_factor: u32, fiber_contraction: f64, coupling_amplitude: f64) -> Result<Self> {
        let system = SystemSpec::solenoid(base_factor, fiber_contraction, coupling_amplitude)?;
        let spec = ReturnTimeSpec::bernoulli(base_factor as u16, fiber_contraction)?;
        Ok(SolenoidRealization {
            base_factor,
            fiber_contraction,
            coupling_amplitude,
            spec,
            system,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    /// Base coordinate: m-adic expansion of the future itinerary.
    pub fn base_coordinate(&self, p: &TowerPoint) -> f64 {
        let m = self.base_factor as f64;
        let digits = (53.0 / (self.base_factor as f64).log2()).ceil() as usize + 1;
        let mut u = 0.0;
        for j in (0..digits).rev() {
            u = (p.future_symbol(&self.spec, j) as f64 + u) / m;
        }
        u
    }

    /// Fiber coordinate: `a * sum_k lambda^k x_{-k-1}` with the backward orbit
    /// read off the itinerary. Past digits beyond the available history are
    /// treated as zero, which is the distinguished leaf.
    pub fn fiber_coordinate(&self, p: &TowerPoint) -> f64 {
        let m = self.base_factor as f64;
        let lambda = self.fiber_contraction;
        let depth = (-14.0 * std::f64::consts::LN_10 / lambda.ln()).ceil() as usize + 2;
        let mut x_back = self.base_coordinate(p);
        let mut z = 0.0;
        let mut w = self.coupling_amplitude;
        for k in 0..depth {
            let digit = p.past_symbol(&self.spec, k).unwrap_or(0) as f64;
            x_back = (digit + x_back) / m;
            z += w * x_back;
            w *= lambda;
        }
        z
    }

    /// The distinguished unstable leaf as a graph over the base.
    pub fn leaf_height(&self, x: f64) -> f64 {
        self.coupling_amplitude * x / (self.base_factor as f64 - self.fiber_contraction)
    }
}

impl Realization for SolenoidRealization {
    fn spec(&self) -> &ReturnTimeSpec {
        &self.spec
    }

    fn project(&self, p: &TowerPoint) -> AmbientPoint {
        AmbientPoint {
            x: self.base_coordinate(p),
            z: self.fiber_coordinate(p),
        }
    }

    fn ambient_step(&self, q: AmbientPoint) -> AmbientPoint {
        ambient_step(&self.system, q)
    }

    fn stable_rate(&self) -> f64 {
        self.fiber_contraction
    }
}

/// Intermittent realization: the tower over the first-return inducing scheme,
/// projected by nested-interval embedding of the future itinerary followed by
/// `level` forward steps.
#[derive(Debug, Clone)]
pub struct IntermittentRealization {
    pub gamma: f64,
    pub scheme: InducingScheme,
    spec: ReturnTimeSpec,
    system: SystemSpec,
    embed_depth: usize,
}

impl IntermittentRealization {
    pub fn new(gamma: f64, r_max: u32, beta_s: f64) -> Result<Self> {
        let scheme = build_inducing(gamma, r_max)?;
        let spec = scheme.to_spec(beta_s)?;
        Ok(IntermittentRealization {
            gamma,
            scheme,
            spec,
            system: SystemSpec::Intermittent { gamma },
            embed_depth: 40,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    fn branch(&self, s: Symbol) -> &InducingBranch {
        &self.scheme.branches[s as usize]
    }

    // Return map and derivative on the inducing branch containing x.
    fn return_map_with_deriv(&self, s: Symbol, x: f64) -> (f64, f64) {
        let mut y = x;
        let mut d = 1.0;
        for _ in 0..self.branch(s).return_time {
            d *= lsv_deriv(self.gamma, y);
            y = lsv_map(self.gamma, y);
        }
        (y, d)
    }

    // Solve return_map(s, x) = target within branch s, by safeguarded Newton.
    fn invert_return(&self, s: Symbol, target: f64) -> f64 {
        let b = self.branch(s);
        let (mut lo, mut hi) = (b.lo, b.hi);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..80 {
            let (fx, dfx) = self.return_map_with_deriv(s, x);
            if fx < target {
                lo = x;
            } else {
                hi = x;
            }
            let step = (fx - target) / dfx;
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-16 {
                x = next;
                break;
            }
            x = next;
        }
        x
    }

    /// Embed a base itinerary into the inducing domain: the unique point whose
    /// return-map orbit follows the future symbols.
    pub fn embed_base(&self, p: &TowerPoint) -> f64 {
        // Walk back from a deep target interval; each pullback contracts by
        // the return map's expansion, so the float width collapses well below
        // the requested endpoint accuracy.
        let deepest = self.branch(p.future_symbol(&self.spec, self.embed_depth));
        let mut lo = deepest.lo;
        let mut hi = deepest.hi;
        for j in (0..self.embed_depth).rev() {
            let s = p.future_symbol(&self.spec, j);
            let nlo = self.invert_return(s, lo);
            let nhi = self.invert_return(s, hi);
            lo = nlo;
            hi = nhi;
            if hi - lo < 1e-15 {
                // Remaining pullbacks only sharpen an already-resolved point;
                // keep walking to preserve the prescribed itinerary prefix.
            }
        }
        0.5 * (lo + hi)
    }
}

impl Realization for IntermittentRealization {
    fn spec(&self) -> &ReturnTimeSpec {
        &self.spec
    }

    fn project(&self, p: &TowerPoint) -> AmbientPoint {
        let mut x = self.embed_base(p);
        for _ in 0..p.level() {
            x = lsv_map(self.gamma, x);
        }
        AmbientPoint::on_line(x)
    }

    fn ambient_step(&self, q: AmbientPoint) -> AmbientPoint {
        ambient_step(&self.system, q)
    }

    fn stable_rate(&self) -> f64 {
        1.0
    }
}

/// Identity realization for abstract towers: the "ambient" system is the
/// tower itself, projected through the geometric embedding.
#[derive(Debug, Clone)]
pub struct AbstractRealization {
    spec: ReturnTimeSpec,
}

impl AbstractRealization {
    pub fn new(spec: ReturnTimeSpec) -> Self {
        AbstractRealization { spec }
    }
}

impl Realization for AbstractRealization {
    fn spec(&self) -> &ReturnTimeSpec {
        &self.spec
    }

    fn project(&self, p: &TowerPoint) -> AmbientPoint {
        let c = crate::tower::geometric_embed(&self.spec, p, 40);
        AmbientPoint { x: c.u, z: c.s }
    }

    fn ambient_step(&self, q: AmbientPoint) -> AmbientPoint {
        q
    }

    fn stable_rate(&self) -> f64 {
        self.spec.beta_s()
    }
}

/// Logarithm of the inverse derivative along the expanding direction of the
/// `N`-fold map: for interval maps `-log |(f^N)'|`, for the skew product the
/// horizontal direction gives the constant `-N log m`. Fails if the
/// derivative degenerates on a probe grid.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // negated form rejects NaN derivatives
pub fn cu_derivative_observable(sys: &SystemSpec, n_compose: u32) -> Result<crate::observables::Observable> {
    use crate::observables::{HolderData, Observable};
    if n_compose < 1 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    match *sys {
        SystemSpec::AbstractTower(_) => Err(Error::InvalidParameter(
            "abstract towers carry no derivative".into(),
        )),
        SystemSpec::Intermittent { gamma } => {
            for i in 0..512 {
                let x = (i as f64 + 0.5) / 512.0;
                if !(lsv_deriv(gamma, x) > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "singular derivative at x = {x}"
                    )));
                }
            }
            let sup = n_compose as f64 * 2f64.ln();
            let hconst = n_compose as f64 * (1.0 + gamma) * 2f64.powf(gamma) + 1.0;
            let eta = if gamma > 0.0 { gamma } else { 1.0 };
            Ok(Observable::ambient(
                move |q: AmbientPoint| {
                    let mut x = q.x;
                    let mut acc = 0.0;
                    for _ in 0..n_compose {
                        acc -= lsv_deriv(gamma, x).ln();
                        x = lsv_map(gamma, x);
                    }
                    acc
                },
                HolderData {
                    exponent: eta,
                    constant: hconst,
                },
                sup,
            ))
        }
        SystemSpec::Solenoid { base_factor, .. } => {
            let value = -(n_compose as f64) * (base_factor as f64).ln();
            Ok(Observable::ambient(
                move |_q: AmbientPoint| value,
                HolderData {
                    exponent: 1.0,
                    constant: 0.0,
                },
                value.abs(),
            ))
        }
    }
}

/// Sample the skew product's physical measure: uniform base, fiber relaxed by
/// a deterministic burn-in along the symbolic past. Equivalent to projecting
/// exactly sampled tower points.
pub fn solenoid_mu_sample(real: &SolenoidRealization, seed: u64, count: usize) -> Vec<AmbientPoint> {
    crate::measures::srb_sample(real.spec(), seed, count)
        .iter()
        .map(|p| real.project(p))
        .collect()
}

/// Uniform sample of the distinguished leaf, as a curve over the base.
pub fn solenoid_leaf_sample(real: &SolenoidRealization, seed: u64, count: usize) -> Vec<AmbientPoint> {
    (0..count)
        .map(|i| {
            let x = crate::rng::unit2(crate::rng::member_seed(seed, i as u64), 0x1f);
            AmbientPoint {
                x,
                z: real.leaf_height(x),
            }
        })
        .collect()
}
