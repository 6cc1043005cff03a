//! Symbolic tower model: base spec, tower map, separation time, quotient
//! projection and geometric embedding.
//!
//! A point is an itinerary. The future itinerary determines the unstable
//! coordinate and the dynamics; the past itinerary records history through
//! the return map and carries the stable coordinate. Both extend lazily and
//! deterministically from the point's stored seed, so points are immutable
//! values that are safe to share between workers.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numeric::{g17, Kahan};
use crate::rng;

/// Internal branch symbol: position of the branch in the spec's list.
pub type Symbol = u16;

/// One branch of the base partition: external index, mass and return time.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub index: u32,
    pub p: f64,
    pub r: u32,
}

/// Truncated branch distribution defining a tower base, together with the
/// unstable separation base and the stable per-return contraction factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTimeSpec {
    branches: Vec<Branch>,
    beta_u: f64,
    beta_s: f64,
    // cum[j] = sum of p over branches before j; cum[len] is ~1.
    cum: Vec<f64>,
    max_r: u32,
}

impl ReturnTimeSpec {
    /// Validates and builds a spec. Branch masses must sum to 1 within 1e-12,
    /// all masses positive, all return times at least 1, both betas in (0,1),
    /// and branch indices distinct.
    pub fn new(branches: Vec<Branch>, beta_u: f64, beta_s: f64) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidSpec("no branches".into()));
        }
        if branches.len() > u16::MAX as usize {
            return Err(Error::InvalidSpec(format!(
                "{} branches exceed the symbol range",
                branches.len()
            )));
        }
        let mut total = Kahan::new();
        for b in &branches {
            // Negated comparison also rejects NaN.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(b.p > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "branch {} has non-positive mass {}",
                    b.index, b.p
                )));
            }
            if b.r < 1 {
                return Err(Error::InvalidSpec(format!(
                    "branch {} has return time {} < 1",
                    b.index, b.r
                )));
            }
            total.add(b.p);
        }
        if (total.value() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "branch masses sum to {}, not 1",
                total.value()
            )));
        }
        for (beta, name) in [(beta_u, "beta_u"), (beta_s, "beta_s")] {
            // Negated form rejects NaN as well.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidSpec(format!("{name} = {beta} not in (0,1)")));
            }
        }
        let mut seen: Vec<u32> = branches.iter().map(|b| b.index).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != branches.len() {
            return Err(Error::InvalidSpec("branch indices must be distinct".into()));
        }
        let mut cum = Vec::with_capacity(branches.len() + 1);
        let mut acc = Kahan::new();
        cum.push(0.0);
        for b in &branches {
            acc.add(b.p);
            cum.push(acc.value());
        }
        let max_r = branches.iter().map(|b| b.r).max().unwrap();
        Ok(ReturnTimeSpec {
            branches,
            beta_u,
            beta_s,
            cum,
            max_r,
        })
    }

    /// One branch with mass 1 and return time `r`.
    pub fn single(r: u32) -> Self {
        ReturnTimeSpec::new(
            vec![Branch {
                index: 1,
                p: 1.0,
                r,
            }],
            0.5,
            0.5,
        )
        .expect("single-branch spec is valid")
    }

    /// `b` equal branches with return time 1 (full shift base).
    pub fn bernoulli(b: u16, beta_s: f64) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidSpec("need at least one branch".into()));
        }
        let p = 1.0 / b as f64;
        let branches = (0..b)
            .map(|i| Branch {
                index: i as u32 + 1,
                p,
                r: 1,
            })
            .collect();
        let beta_u = if b == 1 { 0.5 } else { p };
        ReturnTimeSpec::new(branches, beta_u, beta_s)
    }

    /// Geometric family `p_i ~ 2^-i`, `R_i = i`, truncated at `r_max` and
    /// renormalized. Returns the spec and the truncated tail mass.
    pub fn geometric(r_max: u32) -> Result<(Self, f64)> {
        if r_max < 1 {
            return Err(Error::InvalidSpec("r_max must be >= 1".into()));
        }
        let dropped = 2f64.powi(-(r_max as i32));
        let norm = 1.0 - dropped;
        let branches = (1..=r_max)
            .map(|i| Branch {
                index: i,
                p: 2f64.powi(-(i as i32)) / norm,
                r: i,
            })
            .collect();
        let spec = ReturnTimeSpec::new(branches, 0.6, 0.5)?;
        Ok((spec, dropped))
    }

    /// Polynomial family `p_i = i^-alpha - (i+1)^-alpha`, `R_i = i`, truncated
    /// at `r_max` and renormalized, so the untruncated tail is `(n+1)^-alpha`.
    /// Returns the spec and the truncated tail mass.
    pub fn polynomial(alpha: f64, r_max: u32) -> Result<(Self, f64)> {
        // Negated form rejects NaN too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(alpha > 0.0) {
            return Err(Error::InvalidSpec(format!("alpha = {alpha} must be > 0")));
        }
        if r_max < 2 {
            return Err(Error::InvalidSpec("r_max must be >= 2".into()));
        }
        let dropped = ((r_max + 1) as f64).powf(-alpha);
        let norm = 1.0 - dropped;
        let branches: Vec<Branch> = (1..=r_max)
            .map(|i| Branch {
                index: i,
                p: ((i as f64).powf(-alpha) - ((i + 1) as f64).powf(-alpha)) / norm,
                r: i,
            })
            .collect();
        let p_max = branches.iter().fold(0.0f64, |m, b| m.max(b.p));
        // beta_u must dominate the widest branch for the nested-interval
        // expansion envelope to hold with constant 1.
        let beta_u = (p_max + 0.01).min(0.99);
        let spec = ReturnTimeSpec::new(branches, beta_u, 0.5)?;
        Ok((spec, dropped))
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch(&self, s: Symbol) -> &Branch {
        &self.branches[s as usize]
    }

    pub fn contains(&self, s: Symbol) -> bool {
        (s as usize) < self.branches.len()
    }

    /// Return time of the column labelled by `s`.
    pub fn r(&self, s: Symbol) -> u32 {
        self.branches[s as usize].r
    }

    pub fn p(&self, s: Symbol) -> f64 {
        self.branches[s as usize].p
    }

    /// Left endpoint of the branch cylinder under the cumulative-mass coding.
    pub fn left(&self, s: Symbol) -> f64 {
        self.cum[s as usize]
    }

    pub fn beta_u(&self) -> f64 {
        self.beta_u
    }

    pub fn beta_s(&self) -> f64 {
        self.beta_s
    }

    pub fn max_return(&self) -> u32 {
        self.max_r
    }

    /// Position of the external branch index `index`, if present.
    pub fn position_of(&self, index: u32) -> Option<Symbol> {
        self.branches
            .iter()
            .position(|b| b.index == index)
            .map(|i| i as Symbol)
    }

    /// Draw a branch symbol from the base distribution.
    pub fn symbol_from_unit(&self, u: f64) -> Symbol {
        // cum has len B+1; find j with cum[j] <= u < cum[j+1].
        let inner = &self.cum[1..self.cum.len() - 1];
        inner.partition_point(|&c| c <= u) as Symbol
    }

    /// The `k`-th symbol of the named stream for a point with seed `seed`.
    pub fn gen_symbol(&self, seed: u64, stream: u64, k: u64) -> Symbol {
        self.symbol_from_unit(rng::unit3(seed, stream, k))
    }

    /// Plain-text table: header line `beta_u beta_s`, then one line `i p_i R_i`
    /// per branch.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", g17(self.beta_u), g17(self.beta_s));
        for b in &self.branches {
            let _ = writeln!(out, "{} {} {}", b.index, g17(b.p), b.r);
        }
        out
    }

    /// Parse the plain-text table written by [`ReturnTimeSpec::to_table`].
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidSpec("empty spec table".into()))?;
        let mut hp = header.split_whitespace();
        let beta_u: f64 = hp
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidSpec(format!("line {ln}: bad beta_u")))?;
        let beta_s: f64 = hp
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidSpec(format!("line {ln}: bad beta_s")))?;
        let mut branches = Vec::new();
        for (ln, line) in lines {
            let mut it = line.split_whitespace();
            let parse = |t: Option<&str>, what: &str| -> Result<f64> {
                t.and_then(|x| x.parse().ok())
                    .ok_or_else(|| Error::InvalidSpec(format!("line {ln}: bad {what}")))
            };
            let index = parse(it.next(), "index")? as u32;
            let p = parse(it.next(), "p")?;
            let r = parse(it.next(), "R")? as u32;
            branches.push(Branch { index, p, r });
        }
        ReturnTimeSpec::new(branches, beta_u, beta_s)
    }
}

/// Past itinerary of a point. The front of the queue is the most recent
/// pre-return symbol.
#[derive(Debug, Clone, PartialEq)]
pub enum Past {
    /// Point on the distinguished leaf: empty past that stays empty under the
    /// dynamics. This is the quotient tower.
    Quotient,
    /// Finite explicit history.
    Recorded(VecDeque<Symbol>),
    /// Explicit history followed by an i.i.d. tail generated from the point's
    /// seed: the stable coordinate of an exactly sampled point.
    Sampled { recorded: VecDeque<Symbol> },
}

/// A tower point: level plus a two-sided symbolic itinerary.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerPoint {
    seed: u64,
    level: u32,
    fut: VecDeque<Symbol>,
    fut_next: u64,
    past: Past,
}

impl TowerPoint {
    /// Build a point with an explicit future prefix. The prefix may be empty,
    /// in which case the first symbol is generated from the seed. Fails if a
    /// symbol is outside the spec's branch set or the level is not strictly
    /// below the column's roof.
    pub fn new(
        spec: &ReturnTimeSpec,
        seed: u64,
        future_prefix: &[Symbol],
        level: u32,
        past: Past,
    ) -> Result<Self> {
        let mut fut: VecDeque<Symbol> = future_prefix.iter().copied().collect();
        let mut fut_next = 0u64;
        for &s in &fut {
            if !spec.contains(s) {
                return Err(Error::InvalidPoint(format!(
                    "future symbol {s} outside the branch set"
                )));
            }
        }
        if fut.is_empty() {
            fut.push_back(spec.gen_symbol(seed, rng::STREAM_FUTURE, fut_next));
            fut_next += 1;
        }
        match &past {
            Past::Recorded(v) | Past::Sampled { recorded: v } => {
                for &s in v {
                    if !spec.contains(s) {
                        return Err(Error::InvalidPoint(format!(
                            "past symbol {s} outside the branch set"
                        )));
                    }
                }
            }
            Past::Quotient => {}
        }
        let p = TowerPoint {
            seed,
            level,
            fut,
            fut_next,
            past,
        };
        if level >= spec.r(p.column()) {
            return Err(Error::InvalidPoint(format!(
                "level {level} not below the roof {}",
                spec.r(p.column())
            )));
        }
        Ok(p)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Current column symbol, `future[0]`.
    pub fn column(&self) -> Symbol {
        *self.fut.front().expect("future prefix is never empty")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_quotient(&self) -> bool {
        matches!(self.past, Past::Quotient)
    }

    /// `k`-th future symbol, generated lazily beyond the explicit prefix.
    pub fn future_symbol(&self, spec: &ReturnTimeSpec, k: usize) -> Symbol {
        if k < self.fut.len() {
            self.fut[k]
        } else {
            let off = (k - self.fut.len()) as u64;
            spec.gen_symbol(self.seed, rng::STREAM_FUTURE, self.fut_next + off)
        }
    }

    /// `k`-th past symbol (0 = most recent), `None` beyond the available
    /// history. Sampled pasts extend indefinitely.
    pub fn past_symbol(&self, spec: &ReturnTimeSpec, k: usize) -> Option<Symbol> {
        match &self.past {
            Past::Quotient => None,
            Past::Recorded(v) => v.get(k).copied(),
            Past::Sampled { recorded } => Some(match recorded.get(k) {
                Some(&s) => s,
                None => {
                    // Invariant under push-front: the tail symbol at logical
                    // depth k is the (k - len)-th draw of the past stream.
                    let off = (k - recorded.len()) as u64;
                    spec.gen_symbol(self.seed, rng::STREAM_PAST, off)
                }
            }),
        }
    }

    /// Number of explicitly recorded past symbols.
    pub fn recorded_past_len(&self) -> usize {
        match &self.past {
            Past::Quotient => 0,
            Past::Recorded(v) => v.len(),
            Past::Sampled { recorded } => recorded.len(),
        }
    }

    fn check_for(&self, spec: &ReturnTimeSpec) -> Result<()> {
        let c = self.column();
        if !spec.contains(c) {
            return Err(Error::InvalidPoint(format!(
                "symbol {c} outside the branch set"
            )));
        }
        if self.level >= spec.r(c) {
            return Err(Error::InvalidPoint(format!(
                "level {} not below the roof {}",
                self.level,
                spec.r(c)
            )));
        }
        Ok(())
    }

    /// In-place tower step; same semantics as [`tower_step`].
    pub fn step_in_place(&mut self, spec: &ReturnTimeSpec) -> Result<()> {
        self.check_for(spec)?;
        if self.level + 1 < spec.r(self.column()) {
            self.level += 1;
            return Ok(());
        }
        let s = self.fut.pop_front().expect("future prefix is never empty");
        if self.fut.is_empty() {
            let next = spec.gen_symbol(self.seed, rng::STREAM_FUTURE, self.fut_next);
            self.fut.push_back(next);
            self.fut_next += 1;
        }
        match &mut self.past {
            Past::Quotient => {}
            Past::Recorded(v) => v.push_front(s),
            Past::Sampled { recorded } => recorded.push_front(s),
        }
        self.level = 0;
        Ok(())
    }
}

/// The tower map: climb one level, or shift the itinerary at the roof. The
/// return map is the left shift and the past records history; on quotient
/// points the past stays empty, which is the quotient tower map.
pub fn tower_step(spec: &ReturnTimeSpec, p: &TowerPoint) -> Result<TowerPoint> {
    let mut q = p.clone();
    q.step_in_place(spec)?;
    Ok(q)
}

/// Separation time of two points, comparing at most `horizon` future symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparationTime {
    Finite(u64),
    /// No difference found within the horizon.
    Infinite,
}

impl SeparationTime {
    pub fn finite(self) -> Option<u64> {
        match self {
            SeparationTime::Finite(s) => Some(s),
            SeparationTime::Infinite => None,
        }
    }
}

/// Points at different levels separate immediately; otherwise the separation
/// time is the index of the first differing future symbol, `Infinite` if none
/// shows up within `horizon` symbols.
pub fn separation_time(
    spec: &ReturnTimeSpec,
    x: &TowerPoint,
    y: &TowerPoint,
    horizon: usize,
) -> SeparationTime {
    if x.level != y.level {
        return SeparationTime::Finite(0);
    }
    for k in 0..horizon {
        if x.future_symbol(spec, k) != y.future_symbol(spec, k) {
            return SeparationTime::Finite(k as u64);
        }
    }
    SeparationTime::Infinite
}

/// `beta^s` as a dynamical distance; 0 at the infinite sentinel.
pub fn dyn_distance(beta: f64, s: SeparationTime) -> f64 {
    match s {
        SeparationTime::Finite(k) => beta.powf(k as f64),
        SeparationTime::Infinite => 0.0,
    }
}

/// Projection onto the distinguished leaf: same future and level, past
/// cleared. Idempotent, and commutes with the tower map on symbols.
pub fn quotient_project(p: &TowerPoint) -> TowerPoint {
    TowerPoint {
        past: Past::Quotient,
        ..p.clone()
    }
}

/// Representative of a point's stable leaf on the distinguished leaf: same
/// future and level, with an empty history that records from now on. Unlike
/// [`quotient_project`], the result is a full tower point, so its orbit
/// tracks the original point's stable leaf and the two orbits approach at
/// the stable contraction rate.
pub fn leaf_representative(p: &TowerPoint) -> TowerPoint {
    TowerPoint {
        past: Past::Recorded(VecDeque::new()),
        ..p.clone()
    }
}

/// Numeric coordinates derived from the itinerary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricCoords {
    /// Unstable coordinate in [0,1): nested-interval expansion of the future
    /// under the affine full-branch coding.
    pub u: f64,
    /// Stable coordinate in [0,1): `beta_s`-weighted expansion of the past.
    pub s: f64,
}

/// Embed a point using `depth` symbols in each direction.
pub fn geometric_embed(spec: &ReturnTimeSpec, p: &TowerPoint, depth: usize) -> GeometricCoords {
    let mut u = 0.0;
    let mut w = 1.0;
    for j in 0..depth {
        let s = p.future_symbol(spec, j);
        u += spec.left(s) * w;
        w *= spec.p(s);
    }
    let mut sc = 0.0;
    let mut v = 1.0 - spec.beta_s();
    for k in 0..depth {
        match p.past_symbol(spec, k) {
            Some(b) => sc += spec.left(b) * v,
            None => break,
        }
        v *= spec.beta_s();
    }
    GeometricCoords { u, s: sc }
}

/// Width of the depth-`d` unstable cylinder through `p`: the nested-interval
/// accuracy bound for the embedded `u` coordinate.
pub fn unstable_cylinder_width(spec: &ReturnTimeSpec, p: &TowerPoint, depth: usize) -> f64 {
    let mut w = 1.0;
    for j in 0..depth {
        w *= spec.p(p.future_symbol(spec, j));
    }
    w
}
