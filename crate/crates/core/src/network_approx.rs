//! Polynomial minimax approximation and network approximation for smooth
//! activations: two constructive lifts of polynomials into networks and a
//! seeded multi-start optimizer for the best network.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::func_core::{
    activation_derivative, discrete_norm, eval_activation, logistic, ActivationKind, FunctionHandle, Grid, PNorm,
    RidgeNetwork, Term,
};
use crate::smoothness::binomial;
use crate::spline_approx::{ApproxResult, Certificate, Samples, Witness};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    /// d_0, d_1, ..., d_m
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("polynomial needs at least one finite coefficient");
        }
        Ok(Polynomial { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn to_handle(&self) -> FunctionHandle {
        let p = self.clone();
        FunctionHandle::new("poly", move |x| p.eval(x))
    }
}

/// γ₀ + Σ γₖ e^{ρₖ x}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSum {
    pub gamma0: f64,
    pub terms: Vec<(f64, f64)>,
}

impl ExpSum {
    pub fn eval(&self, x: f64) -> f64 {
        self.gamma0 + self.terms.iter().map(|&(g, r)| g * (r * x).exp()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemezResult {
    pub poly: Polynomial,
    pub error: f64,
    pub alternations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub certified: Certificate,
}

const REMEZ_MAX_ITER: usize = 100;
const REMEZ_TOL: f64 = 1e-8;

/// Chebyshev polynomials T_0..T_m at t.
fn cheb_row(t: f64, m: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if m >= 1 {
        out[1] = t;
    }
    for j in 2..=m {
        out[j] = 2.0 * t * out[j - 1] - out[j - 2];
    }
}

/// Coefficients in x of Σ a_j T_j(2x - 1).
fn cheb_to_monomial(a: &[f64]) -> Vec<f64> {
    let m = a.len();
    // T_j(2x-1) as monomials in x via the recurrence
    let mut tprev = vec![0.0; m + 1];
    let mut tcur = vec![0.0; m + 1];
    let mut out = vec![0.0; m];
    tprev[0] = 1.0;
    out[0] += a[0];
    if m == 1 {
        return out;
    }
    tcur[0] = -1.0;
    tcur[1] = 2.0;
    for k in 0..2 {
        out[k] += a[1] * tcur[k];
    }
    for j in 2..m {
        let mut next = vec![0.0; m + 1];
        for k in 0..=m {
            // 2 (2x - 1) T_{j-1} - T_{j-2}
            let shifted = if k > 0 { 4.0 * tcur[k - 1] } else { 0.0 };
            next[k] = shifted - 2.0 * tcur[k] - tprev[k];
        }
        for k in 0..m {
            out[k] += a[j] * next[k];
        }
        tprev = tcur;
        tcur = next;
    }
    out
}

fn alternation_count(res: &[f64], level: f64) -> usize {
    let thresh = level * (1.0 - REMEZ_TOL);
    let mut count = 0;
    let mut last = 0.0f64;
    for &r in res {
        if r.abs() >= thresh && r != 0.0 {
            if count == 0 || r.signum() != last {
                count += 1;
                last = r.signum();
            }
        }
    }
    count
}

/// Discrete minimax polynomial of the given degree on the grid points via
/// the exchange iteration.
pub fn remez_poly(f: &FunctionHandle, degree: usize, grid: &Grid) -> Result<RemezResult> {
    let xs = grid.points();
    let ys = f.sample(xs)?;
    let m = degree + 2;
    if xs.len() < m {
        return invalid(format!("grid has {} points, need at least {m}", xs.len()));
    }
    let n = xs.len();
    let mut refs: Vec<usize> = (0..m)
        .map(|i| {
            let x = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / (m - 1) as f64).cos());
            ((x * (n - 1) as f64).round() as usize).min(n - 1)
        })
        .collect();
    for i in 1..m {
        if refs[i] <= refs[i - 1] {
            refs[i] = refs[i - 1] + 1;
        }
    }
    for i in (0..m).rev() {
        let cap = n - m + i;
        if refs[i] > cap {
            refs[i] = cap;
        }
        if i + 1 < m && refs[i] >= refs[i + 1] {
            refs[i] = refs[i + 1] - 1;
        }
    }
    let mut row = vec![0.0; degree + 1];
    let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..REMEZ_MAX_ITER {
        iterations = it + 1;
        let mut a: DMatrix<f64> = DMatrix::zeros(m, m);
        let mut b: DVector<f64> = DVector::zeros(m);
        for (i, &k) in refs.iter().enumerate() {
            cheb_row(2.0 * xs[k] - 1.0, degree, &mut row);
            for j in 0..=degree {
                a[(i, j)] = row[j];
            }
            a[(i, degree + 1)] = if i % 2 == 0 { 1.0 } else { -1.0 };
            b[i] = ys[k];
        }
        let sol = match a.lu().solve(&b) {
            Some(s) => s,
            None => break,
        };
        let coef: Vec<f64> = sol.iter().take(degree + 1).cloned().collect();
        let res: Vec<f64> = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                cheb_row(2.0 * x - 1.0, degree, &mut row);
                y - row.iter().zip(&coef).map(|(t, c)| t * c).sum::<f64>()
            })
            .collect();
        let err = res.iter().fold(0.0f64, |e, r| e.max(r.abs()));
        if best.as_ref().map_or(true, |b| err < b.1) {
            best = Some((coef.clone(), err, res.clone()));
        }
        let ref_min = refs.iter().map(|&k| res[k].abs()).fold(f64::INFINITY, f64::min);
        if err == 0.0 || ref_min >= err * (1.0 - REMEZ_TOL) {
            converged = true;
            best = Some((coef, err, res));
            break;
        }
        refs = exchange(&res, m, &refs);
    }
    let (coef, err, res) = best.ok_or_else(|| Error::Violation("remez system was singular".into()))?;
    let alternations = alternation_count(&res, err);
    let coeffs = cheb_to_monomial(&coef);
    Ok(RemezResult {
        poly: Polynomial::new(coeffs)?,
        error: err,
        alternations,
        iterations,
        converged,
        certified: if converged {
            Certificate::ExactOnGrid
        } else {
            Certificate::UpperBound
        },
    })
}

/// New reference: the extreme point of every sign run of the residual,
/// trimmed from the ends (dropping the smaller end) to `m` points.
fn exchange(res: &[f64], m: usize, old: &[usize]) -> Vec<usize> {
    let mut ext: Vec<usize> = Vec::new();
    for (i, &r) in res.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        match ext.last() {
            Some(&j) if res[j].signum() == r.signum() => {
                if r.abs() > res[j].abs() {
                    *ext.last_mut().unwrap() = i;
                }
            }
            _ => ext.push(i),
        }
    }
    while ext.len() > m {
        if res[ext[0]].abs() < res[*ext.last().unwrap()].abs() {
            ext.remove(0);
        } else {
            ext.pop();
        }
    }
    if ext.len() == m {
        return ext;
    }
    // too few sign runs: single point exchange of the global maximum
    let (imax, _) = res
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, r)| if r.abs() > bv { (i, r.abs()) } else { (bi, bv) });
    let mut refs = old.to_vec();
    if refs.contains(&imax) {
        return refs;
    }
    let pos = refs.partition_point(|&k| k < imax);
    let s = res[imax].signum();
    if pos == 0 {
        if res[refs[0]].signum() == s {
            refs[0] = imax;
        } else {
            refs.insert(0, imax);
            refs.pop();
        }
    } else if pos == refs.len() {
        if res[refs[pos - 1]].signum() == s {
            refs[pos - 1] = imax;
        } else {
            refs.push(imax);
            refs.remove(0);
        }
    } else if res[refs[pos - 1]].signum() == s {
        refs[pos - 1] = imax;
    } else {
        refs[pos] = imax;
    }
    refs
}

/// Weighted least-squares polynomial on the grid points.
pub fn least_squares_poly(f: &FunctionHandle, degree: usize, grid: &Grid) -> Result<Polynomial> {
    let xs = grid.points();
    let ys = f.sample(xs)?;
    let mut a: DMatrix<f64> = DMatrix::zeros(xs.len(), degree + 1);
    let mut row = vec![0.0; degree + 1];
    for (i, &x) in xs.iter().enumerate() {
        cheb_row(2.0 * x - 1.0, degree, &mut row);
        for j in 0..=degree {
            a[(i, j)] = row[j];
        }
    }
    let b = DVector::from_vec(ys);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Violation(format!("least squares failed: {e}")))?;
    Polynomial::new(cheb_to_monomial(sol.as_slice()))
}

/// h_α(x) = α (1 - e^{-x/α}).
pub fn h_alpha(alpha: f64) -> Result<FunctionHandle> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return invalid("alpha must be positive and finite");
    }
    Ok(FunctionHandle::new(format!("h_{alpha}"), move |x| -alpha * (-x / alpha).exp_m1()))
}

/// Binomial expansion of p(h_α(x)) into γ₀ + Σ γₖ e^{-kx/α}.
pub fn poly_to_exp_sum(p: &Polynomial, alpha: f64) -> Result<ExpSum> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return invalid("alpha must be positive and finite");
    }
    let m = p.degree();
    let mut gamma = vec![0.0; m + 1];
    for (j, &d) in p.coeffs.iter().enumerate().take(m + 1) {
        let scale = d * alpha.powi(j as i32);
        for (k, g) in gamma.iter_mut().enumerate().take(j + 1) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *g += scale * binomial(j, k) * sign;
        }
    }
    let terms = (1..=m)
        .filter(|&k| gamma[k] != 0.0)
        .map(|k| (gamma[k], -(k as f64) / alpha))
        .collect();
    Ok(ExpSum {
        gamma0: gamma[0],
        terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearlyExpParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// e^c, bounds sup_{x<=0} |a σ_l(bx + c) + d - e^x|
    pub bound: f64,
}

/// Parameters with which a·σ_l(bx + c) + d approximates e^x on (-∞, 0].
pub fn nearly_exp_params(eps: f64) -> Result<NearlyExpParams> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("need 0 < eps < 1, got {eps}"));
    }
    let c = eps.ln() - 1e-6;
    Ok(NearlyExpParams {
        a: 1.0 / logistic(c),
        b: 1.0,
        c,
        d: 0.0,
        bound: c.exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedNetwork {
    pub network: RidgeNetwork,
    /// Analytic bound on sup_{[0,1]} |network - target|.
    pub bound: f64,
}

/// Logistic network within `eps` of the exponential sum on [0,1]: one b = 0
/// term for the constant and one term per exponential.
pub fn exp_sum_to_network(s: &ExpSum, eps: f64) -> Result<LiftedNetwork> {
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    let active: Vec<(f64, f64)> = s.terms.iter().cloned().filter(|&(g, _)| g != 0.0).collect();
    let n = active.len().max(1) as f64;
    let mut constant = s.gamma0;
    let mut terms = Vec::new();
    let mut bound = 0.0;
    for &(g, rho) in &active {
        if rho == 0.0 {
            constant += g;
            continue;
        }
        // e^{ρx} = e^{shift} e^{ρx - shift} with ρx - shift <= 0 on [0,1]
        let shift = rho.max(0.0);
        let scale = g * shift.exp();
        let budget = (eps / (n * scale.abs())).min(0.5);
        let q = nearly_exp_params(budget)?;
        terms.push(Term::new(scale * q.a, rho * q.b, q.c - shift * q.b));
        constant += scale * q.d;
        bound += scale.abs() * q.bound;
    }
    let mut all = vec![Term::new(constant / logistic(0.0), 0.0, 0.0)];
    all.extend(terms);
    Ok(LiftedNetwork {
        network: RidgeNetwork::new(ActivationKind::Logistic, all)?,
        bound,
    })
}

fn probe_deviation(net: &RidgeNetwork, target: &dyn Fn(f64) -> f64, probes: usize) -> f64 {
    (0..=probes)
        .map(|i| {
            let x = i as f64 / probes as f64;
            (net.eval(x) - target(x)).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearlyExpPipeline {
    pub alpha: f64,
    pub poly_error: f64,
    pub substitution_error: f64,
    pub lift_bound: f64,
    pub total_bound: f64,
    pub measured: f64,
    pub network: RidgeNetwork,
}

/// Remez polynomial of degree n-1, substitution x -> h_α(x) with α doubled
/// until the substitution costs at most eps, then the logistic lift.
pub fn nearly_exp_pipeline(f: &FunctionHandle, n: usize, eps: f64, grid: &Grid) -> Result<NearlyExpPipeline> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let rz = remez_poly(f, n - 1, grid)?;
    let p = rz.poly.clone();
    let mut alpha = 1.0;
    let (sub_err, es) = loop {
        let h = h_alpha(alpha)?;
        let es = poly_to_exp_sum(&p, alpha)?;
        let err = grid
            .points()
            .iter()
            .map(|&x| (p.eval(h.eval(x)) - p.eval(x)).abs())
            .fold(0.0, f64::max);
        if err <= eps || alpha > 1e8 {
            break (err, es);
        }
        alpha *= 2.0;
    };
    let lifted = exp_sum_to_network(&es, eps)?;
    let measured = grid
        .points()
        .iter()
        .map(|&x| (lifted.network.eval(x) - f.eval(x)).abs())
        .fold(0.0, f64::max);
    Ok(NearlyExpPipeline {
        alpha,
        poly_error: rz.error,
        substitution_error: sub_err,
        lift_bound: lifted.bound,
        total_bound: rz.error + sub_err + lifted.bound,
        measured,
        network: lifted.network,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrickResult {
    pub network: RidgeNetwork,
    pub deviation: f64,
    pub beta: f64,
    pub c: f64,
    pub reached: bool,
}

const TRICK_C_CANDIDATES: [f64; 5] = [0.0, 0.5, 1.0, -0.5, -1.0];
const TRICK_PROBES: usize = 2000;

/// Finite-difference weights for derivatives 0..=m at 0 on the nodes
/// (m/2 - j), j = 0..=m (unit spacing).
fn fd_weights(m: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let nodes: Vec<f64> = (0..=m).map(|j| m as f64 / 2.0 - j as f64).collect();
    // Σ_j w_j nodes_j^i / i! = δ_ik
    let mut v: DMatrix<f64> = DMatrix::zeros(m + 1, m + 1);
    let mut fact = 1.0;
    for i in 0..=m {
        if i > 0 {
            fact *= i as f64;
        }
        for (j, &t) in nodes.iter().enumerate() {
            v[(i, j)] = t.powi(i as i32) / fact;
        }
    }
    let inv = v
        .try_inverse()
        .ok_or_else(|| Error::Violation("singular stencil system".into()))?;
    let weights = (0..=m).map(|k| (0..=m).map(|j| inv[(j, k)]).collect()).collect();
    Ok((nodes, weights))
}

/// Lifts p into a network with deg(p)+1 terms σ(b_j x + c) using central
/// difference quotients in b at b = 0.
pub fn poly_to_network_derivative_trick(p: &Polynomial, kind: ActivationKind, eps: f64) -> Result<TrickResult> {
    if !matches!(
        kind,
        ActivationKind::Arctan | ActivationKind::Logistic | ActivationKind::Elu { .. } | ActivationKind::Softplus
    ) {
        return Err(Error::Unsupported(format!("derivative trick for {kind}")));
    }
    kind.validate()?;
    let m = p.degree();
    let deriv = |k: usize, c: f64| activation_derivative(kind, k, c).unwrap_or(0.0);
    let c = TRICK_C_CANDIDATES
        .iter()
        .cloned()
        .map(|c| (c, (0..=m).map(|k| deriv(k, c).abs()).fold(f64::INFINITY, f64::min)))
        .fold((f64::NAN, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
    if !(c.1 > 1e-8) {
        return Err(Error::Violation(format!("no offset with nonzero derivatives up to order {m}")));
    }
    let c = c.0;
    if m == 0 {
        let net = RidgeNetwork::new(kind, vec![Term::new(p.coeffs[0] / deriv(0, c), 0.0, c)])?;
        let dev = probe_deviation(&net, &|x| p.eval(x), TRICK_PROBES);
        return Ok(TrickResult {
            network: net,
            deviation: dev,
            beta: 0.0,
            c,
            reached: dev <= eps,
        });
    }
    let (nodes, weights) = fd_weights(m)?;
    let build = |beta: f64| -> Result<RidgeNetwork> {
        let terms = nodes
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let a: f64 = (0..=m)
                    .map(|k| p.coeffs[k] / deriv(k, c) * weights[k][j] / beta.powi(k as i32))
                    .sum();
                Term::new(a, t * beta, c)
            })
            .collect();
        RidgeNetwork::new(kind, terms)
    };
    let mut beta = 1e-2;
    let mut best: Option<TrickResult> = None;
    while beta >= 1e-6 {
        let net = build(beta)?;
        let dev = probe_deviation(&net, &|x| p.eval(x), TRICK_PROBES);
        if best.as_ref().map_or(true, |b| dev < b.deviation) {
            best = Some(TrickResult {
                network: net,
                deviation: dev,
                beta,
                c,
                reached: dev <= eps,
            });
        }
        if dev <= eps {
            break;
        }
        beta /= 2.0;
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Share one slope variable among all terms.
    pub uniform_scale: bool,
    /// Extra starting points, evaluated and polished like random starts.
    #[serde(default)]
    pub warm_starts: Vec<RidgeNetwork>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 16,
            seed: 0,
            uniform_scale: false,
            warm_starts: Vec::new(),
        }
    }
}

/// Parameter layout: [a_1..a_n, b_1..b_n, c_1..c_n], or with a shared slope
/// [a_1..a_n, B, c_1..c_n].
struct Model<'a> {
    kind: ActivationKind,
    n: usize,
    uniform: bool,
    xs: &'a [f64],
    ys: &'a [f64],
    ws: &'a [f64],
    p: PNorm,
}

impl Model<'_> {
    fn dim(&self) -> usize {
        if self.uniform {
            2 * self.n + 1
        } else {
            3 * self.n
        }
    }

    fn slope(&self, th: &[f64], k: usize) -> f64 {
        if self.uniform {
            th[self.n]
        } else {
            th[self.n + k]
        }
    }

    fn offset(&self, th: &[f64], k: usize) -> f64 {
        if self.uniform {
            th[self.n + 1 + k]
        } else {
            th[2 * self.n + k]
        }
    }

    fn to_network(&self, th: &[f64]) -> Result<RidgeNetwork> {
        let terms = (0..self.n)
            .map(|k| Term::new(th[k], self.slope(th, k), self.offset(th, k)))
            .collect();
        if self.uniform {
            let mut net = RidgeNetwork::new(self.kind, terms)?;
            net.uniform_scale = Some(th[self.n]);
            net.validate()?;
            Ok(net)
        } else {
            RidgeNetwork::new(self.kind, terms)
        }
    }

    fn from_network(&self, net: &RidgeNetwork) -> Vec<f64> {
        let mut th = vec![0.0; self.dim()];
        for k in 0..self.n {
            let t = net.terms.get(k).copied().unwrap_or(Term::new(0.0, 1.0, 0.0));
            th[k] = t.a;
            if self.uniform {
                th[self.n] = net.terms.first().map_or(1.0, |t| t.b);
                th[self.n + 1 + k] = t.c;
            } else {
                th[self.n + k] = t.b;
                th[2 * self.n + k] = t.c;
            }
        }
        th
    }

    fn residuals(&self, th: &[f64]) -> Vec<f64> {
        self.xs
            .iter()
            .zip(self.ys)
            .map(|(&x, &y)| {
                let g: f64 = (0..self.n)
                    .map(|k| th[k] * eval_activation(self.kind, self.slope(th, k) * x + self.offset(th, k)))
                    .sum();
                y - g
            })
            .collect()
    }

    fn error(&self, th: &[f64]) -> f64 {
        let r = self.residuals(th);
        if r.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        discrete_norm(&r, self.ws, self.p)
    }

    /// Jacobian of the model output g with respect to the parameters.
    fn jacobian(&self, th: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut j: DMatrix<f64> = DMatrix::zeros(self.xs.len(), d);
        for (i, &x) in self.xs.iter().enumerate() {
            for k in 0..self.n {
                let (b, c) = (self.slope(th, k), self.offset(th, k));
                let z = b * x + c;
                let s = eval_activation(self.kind, z);
                let ds = activation_derivative(self.kind, 1, z).unwrap_or(0.0);
                j[(i, k)] = s;
                if self.uniform {
                    j[(i, self.n)] += th[k] * ds * x;
                    j[(i, self.n + 1 + k)] = th[k] * ds;
                } else {
                    j[(i, self.n + k)] = th[k] * ds * x;
                    j[(i, 2 * self.n + k)] = th[k] * ds;
                }
            }
        }
        j
    }

    /// Outer coefficients by linear least squares for fixed slopes/offsets.
    fn solve_outer(&self, th: &mut [f64]) {
        let mut a: DMatrix<f64> = DMatrix::zeros(self.xs.len(), self.n);
        for (i, &x) in self.xs.iter().enumerate() {
            let sw = self.ws[i].sqrt();
            for k in 0..self.n {
                a[(i, k)] = sw * eval_activation(self.kind, self.slope(th, k) * x + self.offset(th, k));
            }
        }
        let b = DVector::from_iterator(self.xs.len(), self.ys.iter().zip(self.ws).map(|(y, w)| y * w.sqrt()));
        if let Ok(sol) = a.svd(true, true).solve(&b, 1e-12) {
            if sol.iter().all(|v| v.is_finite()) {
                th[..self.n].copy_from_slice(sol.as_slice());
            }
        }
    }

    /// Levenberg-Marquardt on Σ w_i r_i² with the given weights.
    fn levenberg_marquardt(&self, th: &mut Vec<f64>, weights: &[f64], iters: usize) {
        let cost = |t: &[f64]| -> f64 {
            self.residuals(t)
                .iter()
                .zip(weights)
                .map(|(r, w)| w * r * r)
                .sum()
        };
        let mut lambda: f64 = 1e-3;
        let mut cur = cost(th);
        if !cur.is_finite() {
            return;
        }
        let d = self.dim();
        for _ in 0..iters {
            let r = self.residuals(th);
            let j = self.jacobian(th);
            let mut jtj: DMatrix<f64> = DMatrix::zeros(d, d);
            let mut jtr: DVector<f64> = DVector::zeros(d);
            for i in 0..self.xs.len() {
                let w = weights[i];
                if w == 0.0 {
                    continue;
                }
                for a in 0..d {
                    let ja = j[(i, a)] * w;
                    if ja == 0.0 {
                        continue;
                    }
                    jtr[a] += ja * r[i];
                    for b in a..d {
                        jtj[(a, b)] += ja * j[(i, b)];
                    }
                }
            }
            for a in 0..d {
                for b in 0..a {
                    jtj[(a, b)] = jtj[(b, a)];
                }
            }
            let mut improved = false;
            for _ in 0..12 {
                let mut m = jtj.clone();
                for a in 0..d {
                    m[(a, a)] += lambda * (jtj[(a, a)] + 1e-12);
                }
                let step = match m.cholesky() {
                    Some(ch) => ch.solve(&jtr),
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let cand: Vec<f64> = th.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
                let c = cost(&cand);
                if c.is_finite() && c < cur {
                    *th = cand;
                    cur = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved || cur == 0.0 {
                break;
            }
        }
    }

    /// Lawson reweighting toward the minimax solution.
    fn lawson(&self, th: &mut Vec<f64>, rounds: usize) {
        let mut w: Vec<f64> = self.ws.iter().map(|_| 1.0 / self.xs.len() as f64).collect();
        let mut best = (self.error(th), th.clone());
        for _ in 0..rounds {
            self.levenberg_marquardt(th, &w, 8);
            let r = self.residuals(th);
            let e = self.error(th);
            if e < best.0 {
                best = (e, th.clone());
            }
            let total: f64 = w.iter().zip(&r).map(|(wi, ri)| wi * ri.abs()).sum();
            if !(total > 0.0) {
                break;
            }
            for (wi, ri) in w.iter_mut().zip(&r) {
                *wi = (*wi * ri.abs() / total).max(1e-300);
            }
        }
        *th = best.1;
    }

    /// Annealed log-sum-exp surrogate of the max residual, minimized by
    /// Gauss-Newton steps on the softmax-weighted residuals.
    fn smoothed_max(&self, th: &mut Vec<f64>) {
        for kappa in [10.0, 50.0, 250.0, 1250.0, 6250.0] {
            let r = self.residuals(th);
            let level = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(level > 0.0) || !level.is_finite() {
                return;
            }
            let beta = kappa / level;
            let w: Vec<f64> = r.iter().map(|v| (beta * (v.abs() - level)).exp()).collect();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / s).collect();
            let before = self.error(th);
            let mut cand = th.clone();
            self.levenberg_marquardt(&mut cand, &w, 10);
            if self.error(&cand) < before {
                *th = cand;
            }
        }
    }

    /// Nelder-Mead on the true discretized norm.
    fn polish(&self, th: &mut Vec<f64>, evals: usize) {
        let (best, val) = nelder_mead(|v| self.error(v), th, evals);
        if val < self.error(th) {
            *th = best;
        }
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, bmax: f64) -> Vec<f64> {
        let mut th = vec![0.0; self.dim()];
        let draw_b = |rng: &mut ChaCha8Rng| {
            let b = (rng.gen::<f64>() * bmax.ln()).exp();
            if rng.gen::<bool>() {
                b
            } else {
                -b
            }
        };
        if self.uniform {
            let b = draw_b(rng);
            th[self.n] = b;
            for k in 0..self.n {
                th[self.n + 1 + k] = -b * rng.gen::<f64>();
            }
        } else {
            for k in 0..self.n {
                let b = draw_b(rng);
                th[self.n + k] = b;
                th[2 * self.n + k] = -b * rng.gen::<f64>();
            }
        }
        self.solve_outer(&mut th);
        th
    }

    fn optimize(&self, th: &mut Vec<f64>) {
        let plain: Vec<f64> = self.ws.to_vec();
        match self.p {
            PNorm::Finite(q) if q == 2.0 => {
                self.levenberg_marquardt(th, &plain, 200);
            }
            PNorm::Finite(q) => {
                self.levenberg_marquardt(th, &plain, 100);
                // iteratively reweighted least squares for |r|^q
                for _ in 0..20 {
                    let r = self.residuals(th);
                    let w: Vec<f64> = r
                        .iter()
                        .zip(self.ws)
                        .map(|(v, wi)| wi * v.abs().max(1e-12).powf(q - 2.0))
                        .collect();
                    let mut cand = th.clone();
                    self.levenberg_marquardt(&mut cand, &w, 10);
                    if self.error(&cand) < self.error(th) {
                        *th = cand;
                    }
                }
            }
            PNorm::Infinity => {
                self.levenberg_marquardt(th, &plain, 100);
                self.lawson(th, 25);
                self.smoothed_max(th);
            }
        }
        self.polish(th, 400 * self.dim());
    }
}

/// Nelder-Mead minimization with a small relative initial simplex.
pub(crate) fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], evals: usize) -> (Vec<f64>, f64) {
    let th = x0;
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![th.to_vec()];
    for i in 0..d {
        let mut v = th.to_vec();
        v[i] += if v[i].abs() > 1e-8 { 0.02 * v[i] } else { 1e-3 };
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut used = d + 1;
    while used < evals {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if vals[d] - vals[0] <= 1e-15 * vals[0].abs().max(1e-300) {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64)
            .collect();
        let lerp = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = lerp(-1.0);
        let fr = f(&xr);
        used += 1;
        if fr < vals[0] {
            let xe = lerp(-2.0);
            let fe = f(&xe);
            used += 1;
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = lerp(0.5);
            let fc = f(&xc);
            used += 1;
            if fc < vals[d] {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, v)| b + 0.5 * (v - b))
                        .collect();
                    vals[i] = f(&simplex[i]);
                }
                used += d;
            }
        }
    }
    let best = (0..=d)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    (simplex[best].clone(), vals[best])
}

/// Best network found by seeded multi-start local optimization; always an
/// upper bound of the true error of best approximation.
pub fn best_network(
    f: &FunctionHandle,
    n: usize,
    kind: ActivationKind,
    p: PNorm,
    grid: &Grid,
    opts: &FitOptions,
) -> Result<ApproxResult> {
    if n == 0 || opts.restarts == 0 {
        return invalid("need n >= 1 and restarts >= 1");
    }
    kind.validate()?;
    if matches!(kind, ActivationKind::Heaviside) {
        return Err(Error::Unsupported(
            "heaviside networks have no gradient; use the exact step solver".into(),
        ));
    }
    let s = Samples::new(f, p, grid)?;
    let model = Model {
        kind,
        n,
        uniform: opts.uniform_scale,
        xs: &s.xs,
        ys: &s.ys,
        ws: &s.ws,
        p,
    };
    let bmax = 4.0 * grid.cells() as f64;
    let warm: Vec<Vec<f64>> = opts
        .warm_starts
        .iter()
        .filter(|w| w.kind == kind && w.len() <= n)
        .map(|w| model.from_network(w))
        .collect();
    let total = opts.restarts + warm.len();
    let results: Vec<(f64, Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut th = if i < warm.len() {
                warm[i].clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut th = model.random_start(&mut rng, bmax);
                let mut tries = 0;
                while !model.error(&th).is_finite() && tries < 10 {
                    th = model.random_start(&mut rng, bmax);
                    tries += 1;
                }
                th
            };
            let start = (model.error(&th), th.clone());
            model.optimize(&mut th);
            let e = model.error(&th);
            if e.is_finite() && e <= start.0 {
                (e, th)
            } else {
                start
            }
        })
        .collect();
    let (_, th) = results
        .into_iter()
        .filter(|(e, _)| e.is_finite())
        .fold((f64::INFINITY, Vec::new()), |best, cand| if cand.0 < best.0 { cand } else { best });
    if th.is_empty() {
        return Err(Error::Violation("every restart produced non-finite values".into()));
    }
    let net = model.to_network(&th)?;
    let error = model.error(&th);
    Ok(ApproxResult {
        error,
        witness: Witness::Network(net),
        certified: Certificate::UpperBound,
    })
}
