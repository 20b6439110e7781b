//! Finite differences, moduli of smoothness and abstract moduli.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::func_core::{FunctionHandle, Grid, PNorm};

/// Log-lattice resolution for step sizes: this many points per octave.
const STEPS_PER_OCTAVE: i32 = 32;
/// The step lattice always reaches at least down to this value.
const STEP_FLOOR: f64 = 1.0 / 65536.0;

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// r-th forward difference with step h at x.
pub fn difference(f: &FunctionHandle, r: usize, h: f64, x: f64) -> Result<f64> {
    if r == 0 {
        return invalid("difference order must be at least 1");
    }
    if !(h > 0.0) {
        return invalid("step must be positive");
    }
    if x < 0.0 || x + r as f64 * h > 1.0 + 1e-12 {
        return invalid(format!("x + r h = {} leaves [0,1]", x + r as f64 * h));
    }
    Ok(raw_difference(f, r, h, x))
}

#[inline]
fn raw_difference(f: &FunctionHandle, r: usize, h: f64, x: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..=r {
        let sign = if (r - j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(r, j) * f.eval(x + j as f64 * h);
    }
    acc
}

/// Step sizes probed for a modulus at `delta`: `delta` itself plus the
/// anchored lattice 2^(-k/32) below it, down to min(delta/256, 2^-16).
/// Anchoring makes the lattices of different deltas nest.
pub fn step_lattice(delta: f64) -> Vec<f64> {
    let floor = (delta / 256.0).min(STEP_FLOOR);
    let mut hs = vec![delta];
    let mut k = (-(delta.log2()) * STEPS_PER_OCTAVE as f64).floor() as i32;
    loop {
        let g = (-(k as f64) / STEPS_PER_OCTAVE as f64).exp2();
        if g <= floor {
            break;
        }
        if g < delta {
            hs.push(g);
        }
        k += 1;
    }
    hs
}

/// Modulus of smoothness ω_r(f, δ)_p sampled on `grid` and the step lattice.
/// The result is a lower bound of the true modulus.
pub fn modulus(f: &FunctionHandle, r: usize, delta: f64, p: PNorm, grid: &Grid) -> Result<f64> {
    if r == 0 {
        return invalid("modulus order must be at least 1");
    }
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    let hs: Vec<f64> = step_lattice(delta)
        .into_iter()
        .filter(|&h| r as f64 * h <= 1.0)
        .collect();
    let vals: Vec<f64> = hs
        .par_iter()
        .map(|&h| difference_norm(f, r, h, p, grid))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// ‖Δ_h^r f‖_p over [0, 1 - r h] on the grid (no normalization of the domain).
pub fn difference_norm(f: &FunctionHandle, r: usize, h: f64, p: PNorm, grid: &Grid) -> Result<f64> {
    let end = 1.0 - r as f64 * h;
    if end < 0.0 {
        return Ok(0.0);
    }
    let check = |x: f64, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { x })
        }
    };
    match p {
        PNorm::Infinity => {
            let mut m: f64 = 0.0;
            for &x in grid.points() {
                if x > end {
                    break;
                }
                m = m.max(check(x, raw_difference(f, r, h, x))?.abs());
            }
            m = m.max(check(end, raw_difference(f, r, h, end))?.abs());
            Ok(m)
        }
        PNorm::Finite(p) => {
            let mut s = 0.0;
            for w in grid.points().windows(2) {
                let a = w[0];
                if a >= end {
                    break;
                }
                let b = w[1].min(end);
                let mid = 0.5 * (a + b);
                let v = check(mid, raw_difference(f, r, h, mid))?;
                s += (b - a) * v.abs().powf(p);
            }
            Ok(s.powf(1.0 / p))
        }
    }
}

/// Σ_{k=0}^r (-1)^k C(r,k) (1 - k/n)^n, the endpoint difference of x^n with
/// step 1/n. Tends to (1 - 1/e)^r.
pub fn modulus_endpoint_limit(r: usize, n: usize) -> Result<f64> {
    if r == 0 || n < r {
        return invalid(format!("need 1 <= r <= n, got r={r}, n={n}"));
    }
    let nf = n as f64;
    Ok((0..=r)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(r, k) * (1.0 - k as f64 / nf).powi(n as i32)
        })
        .sum())
}

pub fn endpoint_limit_value(r: usize) -> f64 {
    (1.0 - (-1.0f64).exp()).powi(r as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AbstractModulus {
    Power { alpha: f64 },
    /// Piecewise linear through (δ, ω) pairs starting at (0, 0), constant
    /// beyond the last point.
    Custom { table: Vec<(f64, f64)> },
}

impl AbstractModulus {
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return invalid(format!("power modulus needs alpha in (0,1], got {alpha}"));
        }
        Ok(AbstractModulus::Power { alpha })
    }

    pub fn custom(table: Vec<(f64, f64)>) -> Result<Self> {
        let m = AbstractModulus::Custom { table };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AbstractModulus::Power { alpha } => AbstractModulus::power(*alpha).map(|_| ()),
            AbstractModulus::Custom { table } => {
                if table.len() < 2 || table[0] != (0.0, 0.0) {
                    return invalid("custom modulus table must start at (0, 0) and have another point");
                }
                for w in table.windows(2) {
                    let ((d0, w0), (d1, w1)) = (w[0], w[1]);
                    if !(d1 > d0) || !d1.is_finite() || !w1.is_finite() {
                        return invalid("table arguments must be finite and strictly increasing");
                    }
                    if !(w1 > 0.0) || w1 < w0 {
                        return invalid("table values must be positive and non-decreasing");
                    }
                }
                for &(a, _) in table {
                    for &(b, _) in table {
                        let lhs = self.value(a + b);
                        let rhs = self.value(a) + self.value(b);
                        if lhs > rhs * (1.0 + 1e-12) {
                            return invalid(format!("table is not subadditive at {a} + {b}"));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, delta: f64) -> Result<f64> {
        if delta < 0.0 || delta.is_nan() {
            return invalid(format!("modulus argument must be >= 0, got {delta}"));
        }
        Ok(self.value(delta))
    }

    /// Unchecked evaluation; negative arguments are treated as 0.
    pub fn value(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 0.0;
        }
        match self {
            AbstractModulus::Power { alpha } => delta.powf(*alpha),
            AbstractModulus::Custom { table } => {
                let last = table[table.len() - 1];
                if delta >= last.0 {
                    return last.1;
                }
                let i = table.partition_point(|&(d, _)| d <= delta);
                let (d0, w0) = table[i - 1];
                let (d1, w1) = table[i];
                w0 + (w1 - w0) * (delta - d0) / (d1 - d0)
            }
        }
    }

    /// Whether ω(δ)/δ → ∞ as δ → 0+. Tables are linear near 0, so only
    /// power moduli with alpha < 1 qualify.
    pub fn satisfies_odd(&self) -> bool {
        matches!(self, AbstractModulus::Power { alpha } if *alpha < 1.0)
    }

    /// Parses `power:<alpha>` or `custom:<d>/<w>,<d>/<w>,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("bad modulus spec '{s}'")))?;
        match head {
            "power" => {
                let a = arg
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad exponent '{arg}'")))?;
                AbstractModulus::power(a)
            }
            "custom" => {
                let mut table = Vec::new();
                for pair in arg.split(',') {
                    let (d, w) = pair
                        .split_once('/')
                        .ok_or_else(|| Error::InvalidArgument(format!("bad table entry '{pair}'")))?;
                    let parse = |t: &str| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::InvalidArgument(format!("bad number '{t}'")))
                    };
                    table.push((parse(d)?, parse(w)?));
                }
                AbstractModulus::custom(table)
            }
            _ => invalid(format!("unknown modulus kind '{head}'")),
        }
    }

    pub fn label(&self) -> String {
        match self {
            AbstractModulus::Power { alpha } => format!("power:{alpha}"),
            AbstractModulus::Custom { table } => format!("custom[{}]", table.len()),
        }
    }
}

const PROBE_TOL: f64 = 1e-12;

/// ω(λδ) <= (λ + 1) ω(δ).
pub fn lomega_holds(w: &AbstractModulus, lambda: f64, delta: f64) -> bool {
    w.value(lambda * delta) <= (lambda + 1.0) * w.value(delta) * (1.0 + PROBE_TOL)
}

/// ω(δ₂)/δ₂ <= 2 ω(δ₁)/δ₁ for 0 < δ₁ <= δ₂.
pub fn la2c_holds(w: &AbstractModulus, d1: f64, d2: f64) -> bool {
    w.value(d2) / d2 <= 2.0 * w.value(d1) / d1 * (1.0 + PROBE_TOL)
}

/// min{1, δ} <= (2/ω(1)) ω(δ).
pub fn omegaab_holds(w: &AbstractModulus, delta: f64) -> bool {
    delta.min(1.0) <= 2.0 / w.value(1.0) * w.value(delta) * (1.0 + PROBE_TOL)
}

pub fn subadditive_holds(w: &AbstractModulus, d1: f64, d2: f64) -> bool {
    w.value(d1 + d2) <= (w.value(d1) + w.value(d2)) * (1.0 + PROBE_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phi {
    /// φ(x) = x^(-r)
    InversePower { r: f64 },
    /// φ(x) = (x (1 + log2 x))^(-r)
    LogCorrected { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mu {
    /// μ(δ) = δ^r
    Power { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFunctions {
    pub phi: Phi,
    pub mu: Mu,
}

impl RateFunctions {
    /// φ = 1/n^r, μ = δ^r.
    pub fn polynomial(r: f64) -> Self {
        RateFunctions {
            phi: Phi::InversePower { r },
            mu: Mu::Power { r },
        }
    }

    /// φ = (1/(n(1+log2 n)))^r, μ = δ^r.
    pub fn log_corrected(r: f64) -> Self {
        RateFunctions {
            phi: Phi::LogCorrected { r },
            mu: Mu::Power { r },
        }
    }

    /// φ = 1/n^2, μ = δ (the elu shape).
    pub fn elu_shape() -> Self {
        RateFunctions {
            phi: Phi::InversePower { r: 2.0 },
            mu: Mu::Power { r: 1.0 },
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        match self.phi {
            Phi::InversePower { r } => x.powf(-r),
            Phi::LogCorrected { r } => (x * (1.0 + x.log2())).powf(-r),
        }
    }

    pub fn mu(&self, delta: f64) -> f64 {
        match self.mu {
            Mu::Power { r } => delta.powf(r),
        }
    }

    /// (X₀(λ), C_λ) with φ(λx) <= C_λ φ(x) for x > X₀(λ).
    pub fn faktor_constants(&self, lambda: f64) -> (f64, f64) {
        match self.phi {
            Phi::InversePower { r } => (1.0 / lambda, lambda.powf(-r)),
            Phi::LogCorrected { r } => (lambda.powi(-2), (2.0 / lambda).powf(r)),
        }
    }

    pub fn faktor_holds(&self, lambda: f64, x: f64) -> bool {
        let (x0, c) = self.faktor_constants(lambda);
        x <= x0 || self.phi(lambda * x) <= c * self.phi(x) * (1.0 + PROBE_TOL)
    }

    pub fn strictly_decreasing_on(&self, xs: &[f64]) -> bool {
        xs.windows(2).all(|w| w[0] >= w[1] || self.phi(w[0]) > self.phi(w[1]))
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    /// Piecewise smooth test function: a kinked polynomial plus a sine.
    fn pw(a: f64, b: f64, k: f64, s: f64) -> FunctionHandle {
        FunctionHandle::new("pw", move |x| {
            let base = a * x + b * x * x + s * (5.0 * x).sin();
            if x < k {
                base
            } else {
                base + (x - k).abs() * 2.0
            }
        })
    }

    fn lattice_delta() -> impl Strategy<Value = f64> {
        (32i32..320).prop_map(|k| (-(k as f64) / 32.0).exp2())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bounded_by_scaled_norm(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 0.1f64..0.9,
                                  s in -1.0f64..1.0, r in 1usize..4, d in 0.01f64..0.3, pinf in any::<bool>()) {
            let g = Grid::uniform(512).unwrap();
            let f = pw(a, b, k, s);
            let p = if pinf { PNorm::Infinity } else { PNorm::Finite(2.0) };
            let w = modulus(&f, r, d, p, &g).unwrap();
            // the discretized norm is itself a lower estimate; compare with a fine-grid norm
            let n = crate::func_core::norm(&f, p, &Grid::uniform(1 << 14).unwrap()).unwrap();
            prop_assert!(w <= 2f64.powi(r as i32) * n * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn bounded_by_derivative(c in -3.0f64..3.0, d in 0.005f64..0.2) {
            // f = c sin(3x): ‖f''‖ = 9|c|
            let f = FunctionHandle::new("csin", move |x| c * (3.0 * x).sin());
            let g = Grid::uniform(1024).unwrap();
            let w = modulus(&f, 2, d, PNorm::Infinity, &g).unwrap();
            prop_assert!(w <= d * d * 9.0 * c.abs() * (1.0 + 1e-6) + 1e-14);
        }

        #[test]
        fn monotone_in_delta_on_lattice(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 0.1f64..0.9,
                                        s in -1.0f64..1.0, d1 in lattice_delta(), d2 in lattice_delta()) {
            let g = Grid::uniform(256).unwrap();
            let f = pw(a, b, k, s);
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let wl = modulus(&f, 1, lo, PNorm::Infinity, &g).unwrap();
            let wh = modulus(&f, 1, hi, PNorm::Infinity, &g).unwrap();
            prop_assert!(wl <= wh);
        }

        #[test]
        fn abstract_probes(alpha in 0.05f64..1.0, d1 in 1e-6f64..10.0, t in 1.0f64..100.0, lambda in 0.0f64..20.0) {
            let w = AbstractModulus::power(alpha).unwrap();
            let d2 = d1 * t;
            prop_assert!(la2c_holds(&w, d1, d2));
            prop_assert!(omegaab_holds(&w, d1));
            prop_assert!(lomega_holds(&w, lambda, d1));
            prop_assert!(subadditive_holds(&w, d1, d2));
            prop_assert!(w.value(d1) <= w.value(d2));
        }

        #[test]
        fn custom_table_probes(d1 in 1e-4f64..3.0, d2 in 1e-4f64..3.0, lambda in 0.0f64..10.0) {
            let w = AbstractModulus::custom(vec![(0.0, 0.0), (0.1, 0.4), (0.5, 0.9), (2.0, 1.6)]).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(la2c_holds(&w, lo, hi));
            prop_assert!(omegaab_holds(&w, d1));
            prop_assert!(lomega_holds(&w, lambda, d1));
            prop_assert!(subadditive_holds(&w, d1, d2));
        }
    }
}
