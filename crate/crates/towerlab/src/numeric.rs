//! Small numeric helpers shared across modules.

/// Compensated (Kahan) accumulator. Tail exponents are read off tiny masses,
/// so plain summation is not good enough for the normalization identities.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Kahan::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Kahan::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Decimal text with 17 significant digits, the fixed output format for all
/// numeric artifacts.
pub fn g17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Ordinary least squares of `ys` on `xs`. Returns `(slope, intercept, r_squared)`.
pub fn linreg(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = kahan_sum(xs.iter().copied()) / n;
    let my = kahan_sum(ys.iter().copied()) / n;
    let mut sxx = Kahan::new();
    let mut sxy = Kahan::new();
    let mut syy = Kahan::new();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx.add((x - mx) * (x - mx));
        sxy.add((x - mx) * (y - my));
        syy.add((y - my) * (y - my));
    }
    let sxx = sxx.value();
    let sxy = sxy.value();
    let syy = syy.value();
    if sxx <= 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = syy - slope * sxy;
    let r2 = if syy <= f64::EPSILON * my.abs().max(1.0) {
        if ss_res.abs() <= f64::EPSILON {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut acc = Kahan::new();
        acc.add(1.0);
        for _ in 0..10_000_000 {
            acc.add(1e-16);
        }
        assert!((acc.value() - (1.0 + 1e-9)).abs() < 1e-12);
    }

    #[test]
    fn linreg_exact_line() {
        let xs: Vec<f64> = (1..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.25 * x).collect();
        let (slope, intercept, r2) = linreg(&xs, &ys);
        assert!((slope + 0.25).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g17_roundtrips() {
        for &x in &[0.1, 2.0_f64.powi(-40), std::f64::consts::PI, -3.25e-200] {
            let parsed: f64 = g17(x).parse().unwrap();
            assert_eq!(parsed, x);
        }
    }
}
