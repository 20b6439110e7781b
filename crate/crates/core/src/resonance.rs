//! Resonance elements: high-frequency sines and trains of smooth bumps that
//! stay far from every member of an approximation set, plus the analytic
//! lower bounds and a randomized cross-check of those bounds.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::func_core::{discrete_norm, ActivationKind, FunctionHandle, Grid, PNorm, RidgeNetwork, Term};
use crate::spline_approx::{Certificate, FreeKnotSpline, Samples};

pub const SIGN_TOL: f64 = 1e-12;

/// sin(2N·2πx)
pub fn sine_resonance(n: usize) -> Result<FunctionHandle> {
    if n == 0 {
        return invalid("frequency must be at least 1");
    }
    let w = 4.0 * PI * n as f64;
    Ok(FunctionHandle::new(format!("sin(2*{n}*2pi x)"), move |x| (w * x).sin()))
}

/// Sign changes of the sampled values, ignoring samples with |v| <= tol so
/// that touching zeros do not count.
pub fn sign_changes_of(values: &[f64], tol: f64) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in values {
        if v.abs() <= tol {
            continue;
        }
        let s = v.signum();
        if last != 0.0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

pub fn sign_change_count(f: &FunctionHandle, grid: &Grid, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return invalid("tolerance must be nonnegative");
    }
    Ok(sign_changes_of(&f.sample(grid.points())?, tol))
}

/// ∫_0^π sin^p(u) du by composite Simpson on a fine mesh.
fn sine_power_integral(p: f64) -> f64 {
    let m = 200_000;
    let h = PI / m as f64;
    let f = |u: f64| u.sin().max(0.0).powf(p);
    let mut s = f(0.0) + f(PI);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

/// The constant c with ‖sin(2N·2πx) − g‖_p ≥ c for every g with at most N
/// sign changes; independent of N.
pub fn lemma2_lower_bound(n: usize, p: PNorm) -> Result<f64> {
    if n == 0 {
        return invalid("frequency must be at least 1");
    }
    Ok(match p {
        PNorm::Infinity => 1.0,
        PNorm::Finite(q) => (sine_power_integral(q) / (4.0 * PI)).powf(1.0 / q),
    })
}

/// Truncated Taylor coefficients (f^{(k)}(x)/k!, k <= 4) of the bump
/// exp(1 − 1/(1 − x²)).
fn bump_taylor(x: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    if x.abs() >= 1.0 {
        return out;
    }
    let u = [1.0 - x * x, -2.0 * x, -1.0, 0.0, 0.0];
    let mut v = [0.0; 5];
    v[0] = 1.0 / u[0];
    for k in 1..5 {
        let s: f64 = (1..=k).map(|j| u[j] * v[k - j]).sum();
        v[k] = -s / u[0];
    }
    let g: Vec<f64> = (0..5).map(|k| if k == 0 { 1.0 - v[0] } else { -v[k] }).collect();
    out[0] = g[0].exp();
    for k in 1..5 {
        let s: f64 = (1..=k).map(|j| j as f64 * g[j] * out[k - j]).sum();
        out[k] = s / k as f64;
    }
    out
}

pub fn bump(x: f64) -> f64 {
    bump_taylor(x)[0]
}

/// r-th derivative of the bump, r <= 4.
pub fn bump_derivative(r: usize, x: f64) -> f64 {
    assert!(r <= 4, "bump derivatives are kept up to order 4");
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0][r];
    bump_taylor(x)[r] * fact
}

/// sup |h^{(r)}| for r = 0..=4, from dense sampling refined until three
/// digits are stable.
pub fn bump_derivative_norms() -> &'static [f64; 5] {
    static NORMS: OnceLock<[f64; 5]> = OnceLock::new();
    NORMS.get_or_init(|| {
        let sup = |r: usize, m: usize| {
            (0..=m)
                .map(|i| -1.0 + 2.0 * i as f64 / m as f64)
                .map(|x| bump_derivative(r, x).abs())
                .fold(0.0, f64::max)
        };
        let mut out = [0.0; 5];
        for (r, o) in out.iter_mut().enumerate() {
            let mut m = 1 << 12;
            let mut prev = sup(r, m);
            loop {
                m *= 2;
                let cur = sup(r, m);
                if (cur - prev).abs() <= 1e-3 * cur || m >= 1 << 22 {
                    // pad by the last change so the cached value stays an upper estimate
                    *o = cur.max(prev) * (1.0 + 1e-3);
                    break;
                }
                prev = cur;
            }
        }
        out[0] = 1.0;
        out
    })
}

/// Σ s_i h(2τ(x − i/τ)) for i = 0..=τ.
pub fn bump_resonance(signs: &[f64], tau: usize) -> Result<FunctionHandle> {
    if tau == 0 || signs.len() != tau + 1 {
        return invalid(format!("need tau >= 1 and tau+1 signs, got tau={tau} and {} signs", signs.len()));
    }
    if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return invalid("signs must be +1 or -1");
    }
    let signs = signs.to_vec();
    let t = tau as f64;
    Ok(FunctionHandle::new(format!("bumps(tau={tau})"), move |x| {
        // only the nearest lattice point can have a bump covering x
        let i = (x * t).round();
        if i < 0.0 || i > t {
            return 0.0;
        }
        signs[i as usize] * bump(2.0 * t * (x - i / t))
    }))
}

pub fn alternating_signs(count: usize) -> Vec<f64> {
    (0..count).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

/// Grid size rule τ(n) of a bump family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TauRule {
    /// mult·n + add
    Affine { mult: u64, add: u64 },
    /// mult·n²
    Quadratic { mult: u64 },
    /// 2⌊E n (1 + log₂ n)⌋
    LogBudget { e: f64 },
}

impl TauRule {
    pub fn tau(&self, n: usize) -> u64 {
        let nf = n as f64;
        match *self {
            TauRule::Affine { mult, add } => mult * n as u64 + add,
            TauRule::Quadratic { mult } => mult * (n as u64) * (n as u64),
            TauRule::LogBudget { e } => 2 * (e * nf * (1.0 + nf.log2())).floor() as u64,
        }
    }

    /// C with τ(4n) ≤ C/φ(n) for the matching rate φ.
    pub fn alpha_constant(&self) -> f64 {
        match *self {
            TauRule::Affine { mult, add } => (4 * mult + add) as f64,
            TauRule::Quadratic { mult } => (16 * mult) as f64,
            TauRule::LogBudget { e } => 24.0 * e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ResonanceKind {
    /// h_n = sin(2N·2πx) with N = (4n+1)·degree
    Sine { degree: usize },
    /// alternating bumps on the grid of τ(4n)+1 points
    Bump { tau: TauRule },
}

/// Test elements h_n with ‖h_n‖ ≤ C₁, S_δ(h_n) ≤ C₂ min{1, δ^r/φ(n)} for
/// S_δ = ω_r(·, δ)_p, and E_{4n}(h_n) ≥ c₃.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFamily {
    pub kind: ResonanceKind,
    pub r: usize,
    pub p: PNorm,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub n0: usize,
}

impl ResonanceFamily {
    /// Sine family resonating with free-knot splines of the given degree
    /// bound, with rates φ(n) = n^{-r}.
    pub fn sine(degree: usize, r: usize, p: PNorm) -> Result<Self> {
        if degree == 0 || r == 0 {
            return invalid("degree bound and smoothness order must be at least 1");
        }
        let fam = ResonanceFamily {
            kind: ResonanceKind::Sine { degree },
            r,
            p,
            c1: 1.0,
            c2: (degree as f64 * 20.0 * PI).powi(r as i32),
            c3: lemma2_lower_bound(1, p)?,
            n0: 1,
        };
        fam.verify()?;
        Ok(fam)
    }

    /// Bump family for the sup norm; c₃ = 1 holds against any space whose
    /// members miss the alternating pattern on the τ(4n) grid.
    pub fn bump(tau: TauRule, r: usize, n0: usize) -> Result<Self> {
        if r == 0 || r > 4 {
            return invalid("bump families support smoothness orders 1..=4");
        }
        let hr = bump_derivative_norms()[r];
        let c2 = (2f64.powi(r as i32)).max(hr * (2.0 * tau.alpha_constant()).powi(r as i32));
        let fam = ResonanceFamily {
            kind: ResonanceKind::Bump { tau },
            r,
            p: PNorm::Infinity,
            c1: 1.0,
            c2,
            c3: 1.0,
            n0: n0.max(1),
        };
        fam.verify()?;
        Ok(fam)
    }

    fn verify(&self) -> Result<()> {
        let expect = match self.kind {
            ResonanceKind::Sine { .. } => lemma2_lower_bound(1, self.p)?,
            ResonanceKind::Bump { .. } => 1.0,
        };
        if (self.c3 - expect).abs() > 1e-12 {
            return Err(Error::Violation(format!("stored c3 {} differs from {expect}", self.c3)));
        }
        for n in [self.n0, self.n0 + 1, self.n0 + 3] {
            let h = self.element(n)?;
            let g = Grid::uniform(self.sample_cells(n).min(1 << 16))?;
            let sup = discrete_norm(&h.sample(g.points())?, &[], PNorm::Infinity);
            if sup > self.c1 + 1e-12 {
                return Err(Error::Violation(format!("|h_{n}| = {sup} exceeds C1 = {}", self.c1)));
            }
        }
        Ok(())
    }

    /// N(n) for the sine family, τ(4n) for bumps.
    pub fn frequency(&self, n: usize) -> u64 {
        match self.kind {
            ResonanceKind::Sine { degree } => ((4 * n + 1) * degree) as u64,
            ResonanceKind::Bump { tau } => tau.tau(4 * n),
        }
    }

    pub fn element(&self, n: usize) -> Result<FunctionHandle> {
        match self.kind {
            ResonanceKind::Sine { .. } => sine_resonance(self.frequency(n) as usize),
            ResonanceKind::Bump { .. } => {
                let tau = self.frequency(n) as usize;
                bump_resonance(&alternating_signs(tau + 1), tau)
            }
        }
    }

    /// sup |h_n'|
    pub fn lipschitz(&self, n: usize) -> f64 {
        match self.kind {
            ResonanceKind::Sine { .. } => 4.0 * PI * self.frequency(n) as f64,
            ResonanceKind::Bump { .. } => bump_derivative_norms()[1] * 2.0 * self.frequency(n) as f64,
        }
    }

    /// Uniform cell count that places every extremum of h_n on a grid point.
    pub fn sample_cells(&self, n: usize) -> usize {
        let f = self.frequency(n) as usize;
        match self.kind {
            ResonanceKind::Sine { .. } => 512 * f,
            ResonanceKind::Bump { .. } => 64 * f,
        }
    }

    /// Proof bound for S_δ(h_n): C₂ min{1, δ^r / φ(n)}, φ(n) = n^{-r} for
    /// sines; for bumps through τ(4n) directly.
    pub fn smoothness_bound(&self, n: usize, delta: f64) -> f64 {
        let r = self.r as i32;
        match self.kind {
            ResonanceKind::Sine { .. } => self.c2 * (delta.powi(r) * (n as f64).powi(r)).min(1.0),
            ResonanceKind::Bump { .. } => {
                let t = self.frequency(n) as f64;
                let direct = bump_derivative_norms()[self.r] * (2.0 * t * delta).powi(r);
                direct.min(2f64.powi(r))
            }
        }
    }
}

/// Source of random competitors for the cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "kebab-case")]
pub enum CompetitorSpace {
    /// piecewise constants with at most this many pieces
    StepSplines { pieces: usize },
    /// ridge networks with n terms
    Networks { kind: ActivationKind, n: usize },
}

/// Which lower-bound argument applies to h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "argument", rename_all = "kebab-case")]
pub enum GapArgument {
    /// h = sin(2N·2πx); competitors with at most N sign changes
    SineSignChanges { frequency: usize },
    /// h has value s_i at i/τ; competitors whose sign pattern there differs
    BumpPattern { signs: Vec<f64>, tau: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub bound: f64,
    pub certified: Certificate,
    pub checked: usize,
    /// competitors outside the argument's hypothesis (not a violation)
    pub skipped: usize,
    pub min_distance: f64,
}

fn random_competitor(space: &CompetitorSpace, rng: &mut ChaCha8Rng, bmax: f64) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    match *space {
        CompetitorSpace::StepSplines { pieces } => {
            let count = rng.gen_range(1..=pieces.max(1));
            let mut knots: Vec<f64> = (0..count - 1).map(|_| rng.gen::<f64>()).collect();
            knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            knots.dedup();
            let values: Vec<Vec<f64>> = (0..=knots.len()).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
            let s = FreeKnotSpline::new(1, knots, values)?;
            Ok(Box::new(move |x| s.eval(x)))
        }
        CompetitorSpace::Networks { kind, n } => {
            let terms = (0..n)
                .map(|_| {
                    let b = (rng.gen::<f64>() * bmax.ln()).exp() * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    Term::new(rng.gen_range(-2.0..2.0), b, -b * rng.gen::<f64>())
                })
                .collect();
            let net = RidgeNetwork::new(kind, terms)?;
            Ok(Box::new(move |x| net.eval(x)))
        }
    }
}

/// Analytic lower bound for ‖h − g‖_p over the competitor space, checked
/// against `samples` random competitors on `grid`. A competitor closer than
/// the bound is a bug and aborts with its description.
pub fn verify_resonance_gap(
    h: &FunctionHandle,
    arg: &GapArgument,
    space: &CompetitorSpace,
    p: PNorm,
    grid: &Grid,
    samples: usize,
    seed: u64,
) -> Result<GapReport> {
    let bound = match arg {
        GapArgument::SineSignChanges { frequency } => lemma2_lower_bound(*frequency, p)?,
        GapArgument::BumpPattern { signs, tau } => {
            if signs.len() != tau + 1 {
                return invalid("pattern length must be tau + 1");
            }
            if !p.is_sup() {
                return Err(Error::Unsupported("the bump argument is a sup-norm argument".into()));
            }
            1.0
        }
    };
    let hs = Samples::new(h, p, grid)?;
    let pts = grid.points().to_vec();
    let bmax = 4.0 * grid.cells() as f64;
    let outcomes: Vec<Result<Option<f64>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let g = random_competitor(space, &mut rng, bmax)?;
            let eligible = match arg {
                GapArgument::SineSignChanges { frequency } => {
                    let vals: Vec<f64> = pts.iter().map(|&x| g(x)).collect();
                    sign_changes_of(&vals, SIGN_TOL) <= *frequency
                }
                GapArgument::BumpPattern { signs, tau } => (0..=*tau).any(|j| {
                    let v = g(j as f64 / *tau as f64);
                    // σ_h(v) = 1 iff v >= 0
                    (v >= 0.0) != (signs[j] > 0.0)
                }),
            };
            if !eligible {
                return Ok(None);
            }
            let diff: Vec<f64> = hs.xs.iter().zip(&hs.ys).map(|(&x, &y)| y - g(x)).collect();
            let d = discrete_norm(&diff, &hs.ws, p);
            if d < bound - 1e-9 {
                return Err(Error::Violation(format!(
                    "competitor {i} of {space:?} (seed {seed}) is at distance {d} < bound {bound}"
                )));
            }
            Ok(Some(d))
        })
        .collect();
    let mut checked = 0;
    let mut skipped = 0;
    let mut min_distance = f64::INFINITY;
    for o in outcomes {
        match o? {
            Some(d) => {
                checked += 1;
                min_distance = min_distance.min(d);
            }
            None => skipped += 1,
        }
    }
    Ok(GapReport {
        bound,
        certified: Certificate::Analytic,
        checked,
        skipped,
        min_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func_core::norm;
    use crate::spline_approx::best_piecewise_constant;

    #[test]
    fn sine_examples() {
        let h = sine_resonance(1).unwrap();
        assert!((h.eval(0.125) - 1.0).abs() < 1e-15);
        let h2 = sine_resonance(2).unwrap();
        for k in 0..=8 {
            assert!(h2.eval(k as f64 / 8.0).abs() < 1e-12);
        }
        for n in 1..=3 {
            let g = Grid::uniform(4096 * n).unwrap();
            let s = norm(&sine_resonance(n).unwrap(), PNorm::Infinity, &g).unwrap();
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert!(sine_resonance(0).is_err());
    }

    #[test]
    fn sign_change_examples() {
        let g = Grid::uniform(4096).unwrap();
        let lin = FunctionHandle::new("x-1/2", |x| x - 0.5);
        assert_eq!(sign_change_count(&lin, &g, SIGN_TOL).unwrap(), 1);
        let pos = FunctionHandle::new("touch", |x| (x - 0.5) * (x - 0.5));
        assert_eq!(sign_change_count(&pos, &g, SIGN_TOL).unwrap(), 0);
        let s = FunctionHandle::new("sin 8pi x", |x| (8.0 * PI * x).sin());
        assert_eq!(sign_change_count(&s, &g, SIGN_TOL).unwrap(), 7);
    }

    #[test]
    fn lemma2_constants() {
        assert_eq!(lemma2_lower_bound(3, PNorm::Infinity).unwrap(), 1.0);
        let c2 = lemma2_lower_bound(3, PNorm::Finite(2.0)).unwrap();
        assert!((c2 - 0.125f64.sqrt()).abs() < 1e-9);
        let c1 = lemma2_lower_bound(5, PNorm::Finite(1.0)).unwrap();
        assert!((c1 - 1.0 / (2.0 * PI)).abs() < 1e-9);
    }

    #[test]
    fn bump_taylor_matches_differences() {
        for &x in &[-0.7, -0.2, 0.0, 0.35, 0.8] {
            for r in 1..=2 {
                let h = 1e-4;
                let fd = match r {
                    1 => (bump(x + h) - bump(x - h)) / (2.0 * h),
                    _ => (bump(x + h) - 2.0 * bump(x) + bump(x - h)) / (h * h),
                };
                assert!((fd - bump_derivative(r, x)).abs() < 1e-5 * (1.0 + fd.abs()), "r={r} x={x}");
            }
            let h = 1e-3;
            let d3 = (bump_derivative(2, x + h) - bump_derivative(2, x - h)) / (2.0 * h);
            assert!((d3 - bump_derivative(3, x)).abs() < 1e-4 * (1.0 + d3.abs()));
            let d4 = (bump_derivative(3, x + h) - bump_derivative(3, x - h)) / (2.0 * h);
            assert!((d4 - bump_derivative(4, x)).abs() < 1e-3 * (1.0 + d4.abs()));
        }
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        let norms = bump_derivative_norms();
        assert!(norms.iter().skip(1).all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn bump_examples() {
        let h = bump_resonance(&[1.0, 1.0, 1.0], 2).unwrap();
        for x in [0.0, 0.5, 1.0] {
            assert_eq!(h.eval(x), 1.0);
        }
        let alt = bump_resonance(&alternating_signs(5), 4).unwrap();
        for i in 0..=4 {
            assert_eq!(alt.eval(i as f64 / 4.0), if i % 2 == 0 { 1.0 } else { -1.0 });
            if i < 4 {
                assert_eq!(alt.eval((i as f64 + 0.5) / 4.0), 0.0);
            }
        }
        let g = Grid::uniform(4096).unwrap();
        assert_eq!(norm(&alt, PNorm::Infinity, &g).unwrap(), 1.0);
        assert!(bump_resonance(&[1.0, -1.0], 2).is_err());
    }

    #[test]
    fn bump_modulus_bound() {
        use crate::smoothness::modulus;
        let fam = ResonanceFamily::bump(TauRule::Affine { mult: 2, add: 2 }, 1, 1).unwrap();
        let h = fam.element(1).unwrap();
        let g = Grid::uniform(fam.sample_cells(1)).unwrap();
        for j in 3..8 {
            let d = 2f64.powi(-j);
            let w = modulus(&h, 1, d, PNorm::Infinity, &g).unwrap();
            assert!(w <= fam.smoothness_bound(1, d) + 1e-12);
        }
    }

    #[test]
    fn sine_derivative_scaling() {
        // sup |h^{(r)}| = (4Nπ)^r, sampled at the extrema
        for n in [1usize, 3] {
            let w = 4.0 * PI * n as f64;
            for r in 1..=3 {
                let g = Grid::uniform(4096 * n).unwrap();
                let sup = g
                    .points()
                    .iter()
                    .map(|&x| {
                        let v = w.powi(r) * if r % 2 == 1 { (w * x).cos() } else { (w * x).sin() };
                        v.abs()
                    })
                    .fold(0.0, f64::max);
                assert!((sup / w.powi(r) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn step_solver_confirms_sine_gap() {
        for n in 1..=4 {
            let h = sine_resonance(n).unwrap();
            let g = Grid::uniform(512 * 8 * n).unwrap();
            for pieces in 1..=n {
                let e = best_piecewise_constant(&h, pieces, PNorm::Infinity, &g).unwrap();
                assert!(e.error >= 1.0 - 1e-9, "n={n} pieces={pieces}: {}", e.error);
            }
        }
    }

    #[test]
    fn gap_cross_checks() {
        let n = 2;
        let freq = 4 * n + 1;
        let h = sine_resonance(freq).unwrap();
        let g = Grid::uniform(512 * freq).unwrap();
        let space = CompetitorSpace::StepSplines { pieces: 4 * n + 1 };
        let arg = GapArgument::SineSignChanges { frequency: freq };
        let r = verify_resonance_gap(&h, &arg, &space, PNorm::Infinity, &g, 200, 5).unwrap();
        assert_eq!((r.checked, r.skipped), (200, 0));
        assert!(r.min_distance >= 1.0 - 1e-9);
        let r2 = verify_resonance_gap(&h, &arg, &space, PNorm::Finite(2.0), &g, 50, 5).unwrap();
        assert!(r2.min_distance >= 0.353553 - 1e-6);
        // the zero competitor attains the sup bound
        let zero = CompetitorSpace::StepSplines { pieces: 1 };
        let z = verify_resonance_gap(&FunctionHandle::new("s", |x| (4.0 * PI * x).sin()), &GapArgument::SineSignChanges { frequency: 1 }, &zero, PNorm::Infinity, &Grid::uniform(4096).unwrap(), 20, 1).unwrap();
        assert!(z.min_distance >= 1.0 - 1e-9);
    }

    #[test]
    fn bump_gap_against_heaviside() {
        let tau = 6;
        let signs = alternating_signs(tau + 1);
        let h = bump_resonance(&signs, tau).unwrap();
        let g = Grid::uniform(64 * tau).unwrap();
        let space = CompetitorSpace::Networks {
            kind: ActivationKind::Heaviside,
            n: 3,
        };
        let arg = GapArgument::BumpPattern { signs, tau };
        let r = verify_resonance_gap(&h, &arg, &space, PNorm::Infinity, &g, 200, 9).unwrap();
        // three steps cannot follow six sign flips
        assert_eq!(r.skipped, 0);
        assert!(r.min_distance >= 1.0);
    }

    #[test]
    fn families_store_constants() {
        let s = ResonanceFamily::sine(1, 1, PNorm::Infinity).unwrap();
        assert_eq!((s.c1, s.c3, s.n0), (1.0, 1.0, 1));
        assert!((s.c2 - 20.0 * PI).abs() < 1e-12);
        assert_eq!(s.frequency(1), 5);
        let l2 = ResonanceFamily::sine(2, 2, PNorm::Finite(2.0)).unwrap();
        assert!((l2.c3 - 0.125f64.sqrt()).abs() < 1e-9);
        assert_eq!(l2.frequency(1), 10);
        let b = ResonanceFamily::bump(TauRule::Quadratic { mult: 8 }, 2, 2).unwrap();
        assert_eq!(b.c3, 1.0);
        assert_eq!(b.frequency(2), 8 * 64);
    }
}
