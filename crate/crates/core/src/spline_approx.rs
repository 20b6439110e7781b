//! Best approximation by free-knot splines of degree zero and one on grids,
//! and conversions of linear splines into cut and ReLU networks.
//!
//! Knots are restricted to grid points. For p = inf the data are the grid
//! point samples; for p < inf they are midpoint samples weighted by cell
//! widths, matching [`crate::func_core::norm`]. A piece starting at knot t
//! covers x >= t, so jumps have the orientation of the Heaviside function.
//!
//! A network with n Heaviside terms is identified with a step function of at
//! most n pieces: one term with b = 0 carries the base level and each further
//! term one jump (see [`step_spline_to_heaviside_network`]). The paper's space
//! S_n^r with n free knots therefore corresponds to `pieces = n + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::func_core::{discrete_norm, ActivationKind, FunctionHandle, Grid, PNorm, RidgeNetwork, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    ExactOnGrid,
    UpperBound,
    Analytic,
}

impl Certificate {
    pub fn tag(&self) -> &'static str {
        match self {
            Certificate::ExactOnGrid => "exact-on-grid",
            Certificate::UpperBound => "upper-bound",
            Certificate::Analytic => "analytic",
        }
    }
}

/// Piecewise polynomial with coefficients in the global monomial basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeKnotSpline {
    pub degree_bound: usize,
    pub knots: Vec<f64>,
    pub pieces: Vec<Vec<f64>>,
}

impl FreeKnotSpline {
    pub fn new(degree_bound: usize, knots: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        if degree_bound == 0 {
            return invalid("degree bound must be at least 1");
        }
        if pieces.len() != knots.len() + 1 {
            return invalid("need exactly one more piece than knots");
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) || knots.iter().any(|k| !(*k > 0.0 && *k < 1.0)) {
            return invalid("knots must be strictly increasing inside (0,1)");
        }
        if pieces.iter().any(|c| c.len() != degree_bound || c.iter().any(|v| !v.is_finite())) {
            return invalid("each piece needs degree_bound finite coefficients");
        }
        Ok(FreeKnotSpline {
            degree_bound,
            knots,
            pieces,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k <= x);
        self.pieces[i].iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn to_handle(&self, label: impl Into<String>) -> FunctionHandle {
        let s = self.clone();
        FunctionHandle::new(label, move |x| s.eval(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Witness {
    Spline(FreeKnotSpline),
    Network(RidgeNetwork),
}

impl Witness {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Witness::Spline(s) => s.eval(x),
            Witness::Network(n) => n.eval(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult {
    pub error: f64,
    pub witness: Witness,
    pub certified: Certificate,
}

/// Grid data used by the solvers.
pub(crate) struct Samples {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ws: Vec<f64>,
}

impl Samples {
    pub fn new(f: &FunctionHandle, p: PNorm, grid: &Grid) -> Result<Self> {
        let (xs, ws) = match p {
            PNorm::Infinity => (grid.points().to_vec(), vec![1.0; grid.count()]),
            PNorm::Finite(_) => (grid.midpoints(), grid.widths()),
        };
        let ys = f.sample(&xs)?;
        Ok(Samples { xs, ys, ws })
    }
}

/// Error of `witness` against f with the same discretization as the solvers.
pub fn grid_error(f: &FunctionHandle, witness: &Witness, p: PNorm, grid: &Grid) -> Result<f64> {
    let s = Samples::new(f, p, grid)?;
    let r: Vec<f64> = s.xs.iter().zip(&s.ys).map(|(&x, &y)| y - witness.eval(x)).collect();
    Ok(discrete_norm(&r, &s.ws, p))
}

fn check_pieces(pieces: usize, grid: &Grid) -> Result<()> {
    if pieces == 0 {
        return invalid("at least one piece is required");
    }
    if pieces >= grid.cells() {
        return Err(Error::GridTooCoarse {
            pieces,
            cells: grid.cells(),
        });
    }
    Ok(())
}

fn range(ys: &[f64]) -> (f64, f64) {
    ys.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)))
}

/// Greedy left-to-right partition: a new piece starts when the running
/// range exceeds 2 eps. Returns piece start indices or None if more than
/// `max_pieces` are needed.
fn greedy_constant(ys: &[f64], eps: f64, max_pieces: usize) -> Option<Vec<usize>> {
    let mut starts = vec![0];
    let (mut lo, mut hi) = (ys[0], ys[0]);
    for (i, &y) in ys.iter().enumerate().skip(1) {
        let (nlo, nhi) = (lo.min(y), hi.max(y));
        if nhi - nlo > 2.0 * eps {
            if starts.len() == max_pieces {
                return None;
            }
            starts.push(i);
            lo = y;
            hi = y;
        } else {
            lo = nlo;
            hi = nhi;
        }
    }
    Some(starts)
}

fn segments(starts: &[usize], len: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    starts
        .iter()
        .enumerate()
        .map(move |(k, &s)| (s, starts.get(k + 1).copied().unwrap_or(len)))
}

/// Minimal sup error of a step function with at most `pieces` pieces on the
/// samples, and the optimal piece starts.
pub fn sup_step_optimum(ys: &[f64], pieces: usize) -> (f64, Vec<usize>) {
    let part_err = |starts: &[usize]| {
        segments(starts, ys.len())
            .map(|(a, b)| {
                let (lo, hi) = range(&ys[a..b]);
                (hi - lo) / 2.0
            })
            .fold(0.0, f64::max)
    };
    let (lo, hi) = range(ys);
    let mut upper = (hi - lo) / 2.0;
    let mut lower = 0.0;
    let mut best = greedy_constant(ys, upper, pieces).unwrap();
    for _ in 0..200 {
        if upper - lower <= upper * 1e-15 {
            break;
        }
        let mid = 0.5 * (lower + upper);
        match greedy_constant(ys, mid, pieces) {
            Some(s) => {
                upper = part_err(&s);
                best = s;
            }
            None => lower = mid,
        }
    }
    // the optimum is a half range; step down until just below is infeasible
    loop {
        let e = part_err(&best);
        let below = next_down(e);
        if e == 0.0 || below < 0.0 {
            return (e, best);
        }
        match greedy_constant(ys, below, pieces) {
            Some(s) => best = s,
            None => return (e, best),
        }
    }
}

fn next_down(x: f64) -> f64 {
    if x <= 0.0 {
        return -1.0;
    }
    f64::from_bits(x.to_bits() - 1)
}

fn constant_fit_cost(ys: &[f64], ws: &[f64], p: f64) -> (f64, f64) {
    if p == 2.0 {
        let sw: f64 = ws.iter().sum();
        let c = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
        let cost = ys.iter().zip(ws).map(|(y, w)| w * (y - c).powi(2)).sum();
        return (c, cost);
    }
    let cost = |c: f64| ys.iter().zip(ws).map(|(y, w)| w * (y - c).abs().powf(p)).sum::<f64>();
    let (mut a, mut b) = range(ys);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let c1 = b - g * (b - a);
        let c2 = a + g * (b - a);
        if cost(c1) <= cost(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    let c = 0.5 * (a + b);
    (c, cost(c))
}

/// Prefix sums for O(1) weighted least-squares costs of constants and lines.
struct Moments {
    w: Vec<f64>,
    wx: Vec<f64>,
    wxx: Vec<f64>,
    wy: Vec<f64>,
    wxy: Vec<f64>,
    wyy: Vec<f64>,
}

impl Moments {
    fn new(s: &Samples) -> Self {
        let n = s.xs.len();
        let mut m = Moments {
            w: vec![0.0; n + 1],
            wx: vec![0.0; n + 1],
            wxx: vec![0.0; n + 1],
            wy: vec![0.0; n + 1],
            wxy: vec![0.0; n + 1],
            wyy: vec![0.0; n + 1],
        };
        for i in 0..n {
            let (x, y, w) = (s.xs[i], s.ys[i], s.ws[i]);
            m.w[i + 1] = m.w[i] + w;
            m.wx[i + 1] = m.wx[i] + w * x;
            m.wxx[i + 1] = m.wxx[i] + w * x * x;
            m.wy[i + 1] = m.wy[i] + w * y;
            m.wxy[i + 1] = m.wxy[i] + w * x * y;
            m.wyy[i + 1] = m.wyy[i] + w * y * y;
        }
        m
    }

    fn seg(v: &[f64], a: usize, b: usize) -> f64 {
        v[b] - v[a]
    }

    fn constant_cost(&self, a: usize, b: usize) -> f64 {
        let sw = Self::seg(&self.w, a, b);
        let sy = Self::seg(&self.wy, a, b);
        (Self::seg(&self.wyy, a, b) - sy * sy / sw).max(0.0)
    }

    /// Returns (intercept, slope, residual) of the weighted least-squares line.
    fn line_fit(&self, a: usize, b: usize) -> (f64, f64, f64) {
        let sw = Self::seg(&self.w, a, b);
        let sx = Self::seg(&self.wx, a, b);
        let sxx = Self::seg(&self.wxx, a, b);
        let sy = Self::seg(&self.wy, a, b);
        let sxy = Self::seg(&self.wxy, a, b);
        let syy = Self::seg(&self.wyy, a, b);
        let det = sw * sxx - sx * sx;
        if b - a < 2 || det <= 1e-14 * sw * sxx.max(1e-300) {
            let c = sy / sw;
            return (c, 0.0, (syy - sy * c).max(0.0));
        }
        let slope = (sw * sxy - sx * sy) / det;
        let icpt = (sy - slope * sx) / sw;
        let resid = syy - icpt * sy - slope * sxy;
        (icpt, slope, resid.max(0.0))
    }
}

/// Optimal partition of n samples into at most `pieces` contiguous segments
/// minimizing the sum of `cost(a, b)`. Returns segment start indices.
fn partition_dp(n: usize, pieces: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let k_max = pieces.min(n);
    // best[k][j]: minimal cost of the first j samples in k segments
    let mut best = vec![vec![f64::INFINITY; n + 1]; k_max + 1];
    let mut arg = vec![vec![0usize; n + 1]; k_max + 1];
    best[0][0] = 0.0;
    for k in 1..=k_max {
        for j in k..=n {
            let mut bv = f64::INFINITY;
            let mut bi = 0;
            for i in (k - 1)..j {
                let prev = best[k - 1][i];
                if prev.is_finite() {
                    let v = prev + cost(i, j);
                    if v < bv {
                        bv = v;
                        bi = i;
                    }
                }
            }
            best[k][j] = bv;
            arg[k][j] = bi;
        }
    }
    let mut kbest = 1;
    for k in 1..=k_max {
        if best[k][n] < best[kbest][n] {
            kbest = k;
        }
    }
    let mut starts = Vec::with_capacity(kbest);
    let mut j = n;
    for k in (1..=kbest).rev() {
        let i = arg[k][j];
        starts.push(i);
        j = i;
    }
    starts.reverse();
    starts
}

fn spline_from_starts(grid: &Grid, starts: &[usize], pieces: Vec<Vec<f64>>, degree_bound: usize) -> Result<FreeKnotSpline> {
    let pts = grid.points();
    // a piece holding only the right endpoint gets its knot inside the last cell
    let knots = starts
        .iter()
        .skip(1)
        .map(|&s| if pts[s] >= 1.0 { 0.5 * (pts[s - 1] + pts[s]) } else { pts[s] })
        .collect();
    FreeKnotSpline::new(degree_bound, knots, pieces)
}

fn finish(f: &FunctionHandle, spline: FreeKnotSpline, p: PNorm, grid: &Grid) -> Result<ApproxResult> {
    let witness = Witness::Spline(spline);
    let error = grid_error(f, &witness, p, grid)?;
    Ok(ApproxResult {
        error,
        witness,
        certified: Certificate::ExactOnGrid,
    })
}

/// Best step function with at most `pieces` pieces.
pub fn best_piecewise_constant(f: &FunctionHandle, pieces: usize, p: PNorm, grid: &Grid) -> Result<ApproxResult> {
    check_pieces(pieces, grid)?;
    let s = Samples::new(f, p, grid)?;
    let n = s.ys.len();
    let (starts, values): (Vec<usize>, Vec<f64>) = match p {
        PNorm::Infinity => {
            let (_, starts) = sup_step_optimum(&s.ys, pieces);
            let values = segments(&starts, n)
                .map(|(a, b)| {
                    let (lo, hi) = range(&s.ys[a..b]);
                    lo + (hi - lo) / 2.0
                })
                .collect();
            (starts, values)
        }
        PNorm::Finite(q) => {
            let starts = if q == 2.0 {
                let m = Moments::new(&s);
                partition_dp(n, pieces, |a, b| m.constant_cost(a, b))
            } else {
                partition_dp(n, pieces, |a, b| constant_fit_cost(&s.ys[a..b], &s.ws[a..b], q).1)
            };
            let values = segments(&starts, n)
                .map(|(a, b)| constant_fit_cost(&s.ys[a..b], &s.ws[a..b], q).0)
                .collect();
            (starts, values)
        }
    };
    let coeffs = values.into_iter().map(|v: f64| vec![v]).collect();
    finish(f, spline_from_starts(grid, &starts, coeffs, 1)?, p, grid)
}

/// Best sup-norm line on sorted points: (intercept, slope, error). Ties are
/// broken toward the smaller slope.
pub fn chebyshev_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    if n == 1 {
        return (ys[0], 0.0, 0.0);
    }
    if n == 2 {
        let s = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return (ys[0] - s * xs[0], s, 0.0);
    }
    let cross = |o: usize, a: usize, b: usize| {
        (xs[a] - xs[o]) * (ys[b] - ys[o]) - (ys[a] - ys[o]) * (xs[b] - xs[o])
    };
    let mut lower: Vec<usize> = Vec::new();
    for i in 0..n {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= 0.0 {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for i in 0..n {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) >= 0.0 {
            upper.pop();
        }
        upper.push(i);
    }
    let slope_of = |h: &[usize], k: usize| (ys[h[k + 1]] - ys[h[k]]) / (xs[h[k + 1]] - xs[h[k]]);
    let mut cands: Vec<f64> = (0..lower.len() - 1)
        .map(|k| slope_of(&lower, k))
        .chain((0..upper.len() - 1).map(|k| slope_of(&upper, k)))
        .collect();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let band = |s: f64| {
        let hi = upper.iter().map(|&i| ys[i] - s * xs[i]).fold(f64::NEG_INFINITY, f64::max);
        let lo = lower.iter().map(|&i| ys[i] - s * xs[i]).fold(f64::INFINITY, f64::min);
        (lo, hi)
    };
    let width = |s: f64| {
        let (lo, hi) = band(s);
        hi - lo
    };
    // width is convex piecewise linear with breakpoints at the hull slopes:
    // first candidate whose right neighbour is not smaller
    let (mut a, mut b) = (0usize, cands.len() - 1);
    while a < b {
        let m = (a + b) / 2;
        if width(cands[m + 1]) < width(cands[m]) {
            a = m + 1;
        } else {
            b = m;
        }
    }
    let s = cands[a];
    let (lo, hi) = band(s);
    (lo + (hi - lo) / 2.0, s, (hi - lo) / 2.0)
}

fn greedy_linear(xs: &[f64], ys: &[f64], eps: f64, max_pieces: usize) -> Option<Vec<usize>> {
    let n = xs.len();
    let fits = |a: usize, b: usize| chebyshev_line(&xs[a..b], &ys[a..b]).2 <= eps;
    let mut starts = Vec::new();
    let mut a = 0;
    while a < n {
        if starts.len() == max_pieces {
            return None;
        }
        starts.push(a);
        // exponential then binary search for the largest feasible end
        let mut good = (a + 2).min(n);
        let mut step = 2;
        let mut bad = None;
        while good < n {
            let cand = (a + step).min(n);
            if fits(a, cand) {
                good = cand;
                step *= 2;
            } else {
                bad = Some(cand);
                break;
            }
        }
        if let Some(mut hi) = bad {
            while hi - good > 1 {
                let mid = (good + hi) / 2;
                if fits(a, mid) {
                    good = mid;
                } else {
                    hi = mid;
                }
            }
        }
        a = good;
    }
    Some(starts)
}

/// Best piecewise linear function (no continuity) with at most `pieces`
/// pieces. Supported for p = inf and p = 2.
pub fn best_piecewise_linear(f: &FunctionHandle, pieces: usize, p: PNorm, grid: &Grid) -> Result<ApproxResult> {
    check_pieces(pieces, grid)?;
    let s = Samples::new(f, p, grid)?;
    let n = s.ys.len();
    let (starts, coeffs): (Vec<usize>, Vec<Vec<f64>>) = match p {
        PNorm::Infinity => {
            let part_err = |starts: &[usize]| {
                segments(starts, n)
                    .map(|(a, b)| chebyshev_line(&s.xs[a..b], &s.ys[a..b]).2)
                    .fold(0.0, f64::max)
            };
            let mut upper = chebyshev_line(&s.xs, &s.ys).2;
            let mut lower = 0.0;
            let mut best = vec![0];
            for _ in 0..200 {
                if upper - lower <= upper * 1e-14 {
                    break;
                }
                let mid = 0.5 * (lower + upper);
                match greedy_linear(&s.xs, &s.ys, mid, pieces) {
                    Some(st) => {
                        upper = part_err(&st);
                        best = st;
                    }
                    None => lower = mid,
                }
            }
            let coeffs = segments(&best, n)
                .map(|(a, b)| {
                    let (c0, c1, _) = chebyshev_line(&s.xs[a..b], &s.ys[a..b]);
                    vec![c0, c1]
                })
                .collect();
            (best, coeffs)
        }
        PNorm::Finite(q) if q == 2.0 => {
            let m = Moments::new(&s);
            let starts = partition_dp(n, pieces, |a, b| m.line_fit(a, b).2);
            let coeffs = segments(&starts, n)
                .map(|(a, b)| {
                    let (c0, c1, _) = m.line_fit(a, b);
                    vec![c0, c1]
                })
                .collect();
            (starts, coeffs)
        }
        PNorm::Finite(q) => {
            return Err(Error::Unsupported(format!(
                "piecewise linear best approximation for p = {q} (only p = 2 and p = inf)"
            )))
        }
    };
    finish(f, spline_from_starts(grid, &starts, coeffs, 2)?, p, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub cells: Vec<usize>,
    pub errors: Vec<f64>,
    pub stable: bool,
}

/// Solves on the grid and its 2x and 4x refinements; `stable` when all three
/// errors agree to three significant digits.
pub fn refinement_study(
    f: &FunctionHandle,
    pieces: usize,
    degree_bound: usize,
    p: PNorm,
    grid: &Grid,
) -> Result<RefinementStudy> {
    let mut cells = Vec::new();
    let mut errors = Vec::new();
    for factor in [1, 2, 4] {
        let g = grid.refine(factor);
        let r = match degree_bound {
            1 => best_piecewise_constant(f, pieces, p, &g)?,
            2 => best_piecewise_linear(f, pieces, p, &g)?,
            d => return Err(Error::Unsupported(format!("degree bound {d}"))),
        };
        cells.push(g.cells());
        errors.push(r.error);
    }
    let top = errors.iter().cloned().fold(0.0, f64::max);
    let lo = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    // half a unit in the third significant digit
    let stable = top == 0.0 || (top - lo) <= 5e-3 * top;
    Ok(RefinementStudy { cells, errors, stable })
}

/// One b = 0 term for the first level and one unit-slope term per jump.
pub fn step_spline_to_heaviside_network(s: &FreeKnotSpline) -> Result<RidgeNetwork> {
    if s.degree_bound != 1 {
        return invalid("only step functions map to Heaviside networks");
    }
    let mut terms = vec![Term::new(s.pieces[0][0], 0.0, 0.0)];
    for (k, &t) in s.knots.iter().enumerate() {
        terms.push(Term::new(s.pieces[k + 1][0] - s.pieces[k][0], 1.0, -t));
    }
    RidgeNetwork::new(ActivationKind::Heaviside, terms)
}

/// Network in Φ_{n,σ_c} interpolating `values` at the knots k/(n-1).
pub fn linear_spline_to_cut_network(values: &[f64]) -> Result<RidgeNetwork> {
    let n = values.len();
    if n < 2 {
        return invalid("need at least two knot values");
    }
    let m = (n - 1) as f64;
    let mut terms = vec![Term::new(values[0], 1.0, 0.5)];
    for k in 0..n - 1 {
        terms.push(Term::new(values[k + 1] - values[k], m, -(k as f64 + 0.5)));
    }
    RidgeNetwork::new(ActivationKind::Cut, terms)
}

/// Network in Φ_{n,σ_r}: m_0 σ_r(x+1) + Σ m_k σ_r(x - x_{k-1}).
pub fn linear_spline_to_relu_network(values: &[f64]) -> Result<RidgeNetwork> {
    let n = values.len();
    if n < 2 {
        return invalid("need at least two knot values");
    }
    let h = 1.0 / (n - 1) as f64;
    let knot = |k: usize| k as f64 * h;
    let mut m = vec![values[0]];
    let mut acc = values[0];
    for k in 1..n {
        let slope = (values[k] - values[k - 1]) / (knot(k) - knot(k - 1));
        let mk = slope - acc;
        acc += mk;
        m.push(mk);
    }
    let mut terms = vec![Term::new(m[0], 1.0, 1.0)];
    for k in 1..n {
        terms.push(Term::new(m[k], 1.0, -knot(k - 1)));
    }
    RidgeNetwork::new(ActivationKind::Relu, terms)
}

/// Piecewise linear interpolant of `values` at equidistant knots on [0,1].
pub fn linear_interpolant(values: &[f64], x: f64) -> f64 {
    let m = (values.len() - 1) as f64;
    let t = (x * m).clamp(0.0, m);
    let k = (t.floor() as usize).min(values.len() - 2);
    let lam = t - k as f64;
    values[k] + lam * (values[k + 1] - values[k])
}

/// Analytic lower bound for E(S_n^r, x^r)_p.
pub fn monomial_lower_bound(r: usize, n: usize, p: PNorm) -> Result<f64> {
    if r == 0 || n == 0 {
        return invalid("need r >= 1 and n >= 1");
    }
    let rf = r as f64;
    let nf = n as f64;
    let c_inf = (1.0 / (4.0 * (rf + 1.0))).powi(r as i32);
    Ok(match p {
        PNorm::Infinity => c_inf / (2.0 * nf).powi(r as i32),
        PNorm::Finite(p) => {
            let cpp = (1.0 / (2.0 * (rf + 1.0))) / (4.0 * (rf + 1.0)).powf(p * rf);
            cpp.powf(1.0 / p) / (2f64.powf(rf + 1.0 / p) * nf.powi(r as i32))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothness::modulus;

    fn grid() -> Grid {
        Grid::uniform(4096).unwrap()
    }

    fn spline_of(r: &ApproxResult) -> &FreeKnotSpline {
        match &r.witness {
            Witness::Spline(s) => s,
            _ => panic!("expected spline witness"),
        }
    }

    /// Exhaustive oracle: every split index for two pieces.
    fn two_piece_sup_oracle(ys: &[f64]) -> f64 {
        (1..ys.len())
            .map(|j| {
                let (a, b) = (range(&ys[..j]), range(&ys[j..]));
                ((a.1 - a.0) / 2.0).max((b.1 - b.0) / 2.0)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn endpoint_piece_keeps_knot_inside() {
        let f = FunctionHandle::new("kinks", |x| linear_interpolant(&[0.0, 1.0, 0.25, 0.75], x));
        let g = Grid::uniform(512).unwrap();
        let r = best_piecewise_constant(&f, 4, PNorm::Infinity, &g).unwrap();
        let three = best_piecewise_constant(&f, 3, PNorm::Infinity, &g).unwrap();
        assert!(r.error <= three.error);
    }

    #[test]
    fn identity_two_pieces() {
        let f = FunctionHandle::new("x", |x| x);
        let r = best_piecewise_constant(&f, 2, PNorm::Infinity, &grid()).unwrap();
        assert!((r.error - 0.25).abs() < 1e-12);
        let s = spline_of(&r);
        assert_eq!(s.knots.len(), 1);
        assert!((s.knots[0] - 0.5).abs() <= 1.0 / 4096.0 + 1e-15);
        assert!((s.pieces[0][0] - 0.25).abs() < 1e-3 && (s.pieces[1][0] - 0.75).abs() < 1e-3);
        assert_eq!(r.certified, Certificate::ExactOnGrid);
    }

    #[test]
    fn sup_solver_matches_exhaustive_split() {
        let g = Grid::uniform(300).unwrap();
        for f in [
            FunctionHandle::new("sin", |x| (7.0 * x).sin()),
            FunctionHandle::new("sqrt", |x| x.sqrt()),
            FunctionHandle::new("abs", |x| (x - 0.3).abs()),
        ] {
            let ys = f.sample(g.points()).unwrap();
            let r = best_piecewise_constant(&f, 2, PNorm::Infinity, &g).unwrap();
            assert!((r.error - two_piece_sup_oracle(&ys)).abs() < 1e-15, "{}", f.label());
        }
    }

    #[test]
    fn constants_and_debao_shape() {
        let c = FunctionHandle::constant(1.5);
        for p in [PNorm::Infinity, PNorm::Finite(2.0), PNorm::Finite(1.0)] {
            let g = Grid::uniform(64).unwrap();
            assert!(best_piecewise_constant(&c, 3, p, &g).unwrap().error < 1e-14);
        }
        let f = FunctionHandle::new("x", |x| x);
        for n in 1..=8 {
            let e = best_piecewise_constant(&f, n, PNorm::Infinity, &grid()).unwrap().error;
            let w = modulus(&f, 1, 1.0 / n as f64, PNorm::Infinity, &grid()).unwrap();
            // balanced oracle: n pieces of width 1/n, half the range each
            assert!((e - 1.0 / (2.0 * n as f64)).abs() < 1e-3);
            assert!(e <= w);
        }
    }

    #[test]
    fn grid_too_coarse() {
        let f = FunctionHandle::new("x", |x| x);
        let g = Grid::uniform(4).unwrap();
        assert!(matches!(
            best_piecewise_constant(&f, 4, PNorm::Infinity, &g),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(best_piecewise_constant(&f, 0, PNorm::Infinity, &g).is_err());
    }

    #[test]
    fn l2_dp_against_exhaustive() {
        let g = Grid::uniform(40).unwrap();
        let f = FunctionHandle::new("cube", |x| x * x * x - 0.4 * x);
        let r = best_piecewise_constant(&f, 2, PNorm::Finite(2.0), &g).unwrap();
        let s = Samples::new(&f, PNorm::Finite(2.0), &g).unwrap();
        let oracle = (1..s.ys.len())
            .map(|j| {
                let a = constant_fit_cost(&s.ys[..j], &s.ws[..j], 2.0).1;
                let b = constant_fit_cost(&s.ys[j..], &s.ws[j..], 2.0).1;
                (a + b).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((r.error - oracle).abs() < 1e-12);
    }

    #[test]
    fn l1_constant_is_median() {
        let (c, _) = constant_fit_cost(&[0.0, 1.0, 5.0], &[1.0, 1.0, 1.0], 1.0);
        assert!((c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_examples() {
        let aff = FunctionHandle::new("aff", |x| 3.0 * x - 1.0);
        for p in [PNorm::Infinity, PNorm::Finite(2.0)] {
            assert!(best_piecewise_linear(&aff, 2, p, &grid()).unwrap().error < 1e-12);
        }
        let sq = FunctionHandle::new("x^2", |x| x * x);
        let r = best_piecewise_linear(&sq, 1, PNorm::Infinity, &grid()).unwrap();
        assert!((r.error - 0.125).abs() < 1e-12);
        let s = spline_of(&r);
        assert!((s.pieces[0][1] - 1.0).abs() < 1e-12 && (s.pieces[0][0] + 0.125).abs() < 1e-12);
        let kink = FunctionHandle::new("abs", |x| (x - 0.5).abs());
        assert!(best_piecewise_linear(&kink, 2, PNorm::Infinity, &grid()).unwrap().error < 1e-12);
        assert!(matches!(
            best_piecewise_linear(&sq, 2, PNorm::Finite(1.0), &grid()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn chebyshev_line_equioscillates() {
        let xs: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).exp()).collect();
        let (c0, c1, e) = chebyshev_line(&xs, &ys);
        let res: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - c0 - c1 * x).collect();
        let hits = res.iter().filter(|r| (r.abs() - e).abs() < 1e-12).count();
        assert!(hits >= 3);
        assert!(res.iter().all(|r| r.abs() <= e + 1e-12));
        // a perturbed slope is never better
        for ds in [-1e-3, 1e-3] {
            let worse = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| y - (c1 + ds) * x)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            assert!((worse.1 - worse.0) / 2.0 >= e);
        }
    }

    #[test]
    fn chebyshev_line_of_hat() {
        let (_, s, e) = chebyshev_line(&[0.0, 0.5, 1.0], &[0.0, 1.0, 0.0]);
        assert!((e - 0.5).abs() < 1e-15);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn conversion_examples() {
        let g = linear_spline_to_cut_network(&[0.0, 1.0]).unwrap();
        assert_eq!(g.len(), 2);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((g.eval(x) - x).abs() < 1e-15);
        }
        let hat = linear_spline_to_cut_network(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(hat.len(), 3);
        for (x, v) in [(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)] {
            assert!((hat.eval(x) - v).abs() < 1e-15);
        }
        let c = linear_spline_to_cut_network(&[2.5, 2.5, 2.5]).unwrap();
        assert!((0..=30).all(|i| (c.eval(i as f64 / 30.0) - 2.5).abs() < 1e-15));

        let relu = linear_spline_to_relu_network(&[0.0, 1.0, 0.0]).unwrap();
        let m: Vec<f64> = relu.terms.iter().map(|t| t.a).collect();
        assert_eq!(m, vec![0.0, 2.0, -4.0]);
        assert_eq!(relu.eval(1.0), 0.0);
        assert_eq!(relu.terms[0].c, 1.0);
        let cc = linear_spline_to_relu_network(&[1.5, 1.5]).unwrap();
        assert_eq!(cc.terms[1].a, -1.5);
        assert!((0..=10).all(|i| (cc.eval(i as f64 / 10.0) - 1.5).abs() < 1e-15));
        let id = linear_spline_to_relu_network(&[0.0, 1.0]).unwrap();
        assert_eq!((id.terms[0].a, id.terms[1].a), (0.0, 1.0));
        assert!(linear_spline_to_relu_network(&[1.0]).is_err());
        assert!(linear_spline_to_cut_network(&[]).is_err());
    }

    #[test]
    fn heaviside_network_reproduces_steps() {
        let f = FunctionHandle::new("sin", |x| (5.0 * x).sin());
        let r = best_piecewise_constant(&f, 5, PNorm::Infinity, &grid()).unwrap();
        let s = spline_of(&r);
        let net = step_spline_to_heaviside_network(s).unwrap();
        assert_eq!(net.len(), s.pieces.len());
        for &x in grid().points() {
            assert!((net.eval(x) - s.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn monomial_bound_examples() {
        assert!((monomial_lower_bound(1, 1, PNorm::Infinity).unwrap() - 0.0625).abs() < 1e-15);
        let r2 = (1.0f64 / 12.0).powi(2) / 4.0;
        assert!((monomial_lower_bound(2, 1, PNorm::Infinity).unwrap() - r2).abs() < 1e-15);
        assert!((r2 - 0.001_736_1).abs() < 1e-7);
        let mut prev = f64::INFINITY;
        for n in 1..50 {
            let v = monomial_lower_bound(2, n, PNorm::Finite(2.0)).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        // p = 1, r = 1: c_1 = (1/4)/8, bound c_1 / (4 n)
        let v = monomial_lower_bound(1, 1, PNorm::Finite(1.0)).unwrap();
        assert!((v - 1.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn refinement_study_is_stable_for_smooth_function() {
        let f = FunctionHandle::new("x^2", |x| x * x);
        let st = refinement_study(&f, 3, 2, PNorm::Infinity, &Grid::uniform(1024).unwrap()).unwrap();
        assert_eq!(st.cells, vec![1024, 2048, 4096]);
        assert!(st.stable, "{:?}", st.errors);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn trig(c: Vec<f64>) -> FunctionHandle {
        FunctionHandle::new("trig", move |x| {
            c.iter().enumerate().map(|(k, a)| a * ((k as f64 + 1.0) * 4.0 * x).cos()).sum()
        })
    }

    fn coeffs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, 3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn more_pieces_never_hurt(c in coeffs(), n in 1usize..6, sup in any::<bool>(), linear in any::<bool>()) {
            let g = Grid::uniform(128).unwrap();
            let f = trig(c);
            let p = if sup { PNorm::Infinity } else { PNorm::Finite(2.0) };
            let solve = |k| if linear { best_piecewise_linear(&f, k, p, &g) } else { best_piecewise_constant(&f, k, p, &g) };
            let (a, b) = (solve(n).unwrap().error, solve(n + 1).unwrap().error);
            prop_assert!(b <= a + 1e-12);
        }

        #[test]
        fn homogeneous(c in coeffs(), s in -4.0f64..4.0, n in 1usize..5, sup in any::<bool>()) {
            let g = Grid::uniform(128).unwrap();
            let f = trig(c);
            let p = if sup { PNorm::Infinity } else { PNorm::Finite(2.0) };
            let e = best_piecewise_constant(&f, n, p, &g).unwrap().error;
            let es = best_piecewise_constant(&f.scale(s), n, p, &g).unwrap().error;
            prop_assert!((es - s.abs() * e).abs() <= 1e-10 * (s.abs() * e).max(1e-12));
        }

        #[test]
        fn near_subadditive(c1 in coeffs(), c2 in coeffs(), n in 1usize..5) {
            let g = Grid::uniform(128).unwrap();
            let (f, h) = (trig(c1), trig(c2));
            for p in [PNorm::Infinity, PNorm::Finite(2.0)] {
                let lhs = best_piecewise_constant(&f.add(&h), 2 * n, p, &g).unwrap().error;
                let rhs = best_piecewise_constant(&f, n, p, &g).unwrap().error
                    + best_piecewise_constant(&h, n, p, &g).unwrap().error;
                prop_assert!(lhs <= rhs + 1e-10);
            }
        }

        #[test]
        fn error_matches_witness(c in coeffs(), n in 1usize..5, sup in any::<bool>()) {
            let g = Grid::uniform(128).unwrap();
            let f = trig(c);
            let p = if sup { PNorm::Infinity } else { PNorm::Finite(2.0) };
            for r in [best_piecewise_constant(&f, n, p, &g).unwrap(), best_piecewise_linear(&f, n, p, &g).unwrap()] {
                let e = grid_error(&f, &r.witness, p, &g).unwrap();
                prop_assert!((e - r.error).abs() <= 1e-12);
            }
        }

        #[test]
        fn conversions_round_trip(vals in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let n = vals.len();
            let cut = linear_spline_to_cut_network(&vals).unwrap();
            let relu = linear_spline_to_relu_network(&vals).unwrap();
            prop_assert_eq!(cut.len(), n);
            prop_assert_eq!(relu.len(), n);
            for i in 0..=10 * n {
                let x = i as f64 / (10 * n) as f64;
                let s = linear_interpolant(&vals, x);
                prop_assert!((cut.eval(x) - s).abs() <= 1e-12);
                prop_assert!((relu.eval(x) - s).abs() <= 1e-12);
            }
        }
    }
}
