//! Sign-change counts for exponential sums and network families against
//! their analytic zero caps, and grid shattering searches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::func_core::{eval_activation, ActivationKind, Grid, RidgeNetwork, Term};
use crate::network_approx::nelder_mead;
use crate::resonance::{sign_changes_of, SIGN_TOL};

/// Σ α_k κ_k^x
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSumZeroInstance {
    pub alphas: Vec<f64>,
    pub bases: Vec<f64>,
}

impl ExpSumZeroInstance {
    pub fn new(alphas: Vec<f64>, bases: Vec<f64>) -> Result<Self> {
        if alphas.len() != bases.len() || alphas.is_empty() {
            return invalid("need equally many coefficients and bases, at least one");
        }
        if bases.iter().any(|&k| !(k > 0.0) || !k.is_finite()) || alphas.iter().any(|a| !a.is_finite()) {
            return invalid("bases must be positive and finite, coefficients finite");
        }
        let mut sorted = bases.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return invalid("bases must be distinct");
        }
        Ok(ExpSumZeroInstance { alphas, bases })
    }

    pub fn terms(&self) -> usize {
        self.alphas.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.alphas
            .iter()
            .zip(&self.bases)
            .map(|(a, k)| a * (x * k.ln()).exp())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCount {
    pub changes: usize,
    pub cap: u64,
    pub identically_zero: bool,
}

fn lattice(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    (0..=cells).map(|i| lo + (hi - lo) * i as f64 / cells as f64).collect()
}

fn checked(values: &[f64], cap: u64, what: &str) -> Result<ZeroCount> {
    let identically_zero = values.iter().all(|v| v.abs() < 1e-14);
    let changes = sign_changes_of(values, SIGN_TOL);
    if !identically_zero && changes as u64 > cap {
        return Err(Error::Violation(format!("{what}: {changes} sign changes exceed the cap {cap}")));
    }
    Ok(ZeroCount {
        changes,
        cap,
        identically_zero,
    })
}

/// Strict sign changes on a uniform lattice of [lo, hi]; more than m − 1 is
/// reported as a violation.
pub fn exp_sum_sign_changes(inst: &ExpSumZeroInstance, lo: f64, hi: f64, cells: usize) -> Result<ZeroCount> {
    if !(hi > lo) || cells == 0 {
        return invalid("need lo < hi and at least one cell");
    }
    let vals: Vec<f64> = lattice(lo, hi, cells).iter().map(|&x| inst.eval(x)).collect();
    checked(&vals, inst.terms() as u64 - 1, "exponential sum")
}

/// Cap on sign changes of a logistic network: n − 1 with a shared slope,
/// 16^n − 2 in general.
pub fn logistic_zero_cap(net: &RidgeNetwork) -> u64 {
    let n = net.len() as u32;
    if net.uniform_scale.is_some() {
        n.saturating_sub(1) as u64
    } else {
        16u64.checked_pow(n).map_or(u64::MAX, |v| v - 2)
    }
}

pub fn logistic_network_sign_changes(net: &RidgeNetwork, grid: &Grid) -> Result<ZeroCount> {
    if net.kind != ActivationKind::Logistic {
        return invalid("logistic network expected");
    }
    let vals: Vec<f64> = grid.points().iter().map(|&x| net.eval(x)).collect();
    checked(&vals, logistic_zero_cap(net), "logistic network")
}

/// (n+1)² for n terms.
pub fn elu_network_zero_cap(net: &RidgeNetwork) -> Result<u64> {
    if !matches!(net.kind, ActivationKind::Elu { .. }) {
        return invalid("ELU network expected");
    }
    let n = net.len() as u64;
    Ok((n + 1) * (n + 1))
}

pub fn elu_network_sign_changes(net: &RidgeNetwork, grid: &Grid) -> Result<ZeroCount> {
    let cap = elu_network_zero_cap(net)?;
    let vals: Vec<f64> = grid.points().iter().map(|&x| net.eval(x)).collect();
    checked(&vals, cap, "ELU network")
}

/// Function classes for shattering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "kebab-case")]
pub enum SpaceDescriptor {
    Constants,
    /// n-term Heaviside networks, decided exactly
    Heaviside { n: usize },
    /// n-term networks of a continuous activation, searched numerically
    Smooth {
        kind: ActivationKind,
        n: usize,
        uniform_scale: bool,
        with_constant: bool,
    },
}

impl SpaceDescriptor {
    pub fn is_exact(&self) -> bool {
        !matches!(self, SpaceDescriptor::Smooth { .. })
    }
}

/// Member of a space: a network plus an optional constant a₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceMember {
    pub network: RidgeNetwork,
    pub constant: f64,
}

impl SpaceMember {
    pub fn eval(&self, x: f64) -> f64 {
        self.constant + self.network.eval(x)
    }

    /// σ_h(g(x_i)) = σ_h(s_i) at every point, with σ_h(0) = 1.
    pub fn realizes(&self, points: &[f64], signs: &[f64]) -> bool {
        points
            .iter()
            .zip(signs)
            .all(|(&x, &s)| (self.eval(x) >= 0.0) == (s > 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum ShatterOutcome {
    Achievable { witness: SpaceMember },
    /// proven impossible (exact spaces only)
    Impossible,
    /// search budget spent without a witness
    NotFound,
}

impl ShatterOutcome {
    pub fn achieved(&self) -> bool {
        matches!(self, ShatterOutcome::Achievable { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub restarts: usize,
    pub evals: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            restarts: 12,
            evals: 1500,
            seed: 0,
        }
    }
}

fn sorted_pattern(points: &[f64], signs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
    (idx.iter().map(|&i| points[i]).collect(), idx.iter().map(|&i| signs[i]).collect())
}

/// Heaviside member that is 0 on the "+" runs and −1 on the "−" runs; uses
/// one term per sign change (one term if everything is "−").
fn heaviside_witness(points: &[f64], signs: &[f64], n: usize) -> Result<Option<SpaceMember>> {
    let (xs, ss) = sorted_pattern(points, signs);
    let changes = ss.windows(2).filter(|w| w[0] != w[1]).count();
    let mut terms = Vec::new();
    if ss.iter().all(|&s| s < 0.0) {
        terms.push(Term::new(-1.0, 0.0, 0.0));
    } else if changes > 0 {
        let mut i = 0;
        while i < ss.len() {
            let mut j = i;
            while j + 1 < ss.len() && ss[j + 1] == ss[i] {
                j += 1;
            }
            if ss[i] < 0.0 {
                let left = (i > 0).then(|| 0.5 * (xs[i - 1] + xs[i]));
                let right = (j + 1 < ss.len()).then(|| 0.5 * (xs[j] + xs[j + 1]));
                match (left, right) {
                    // −1 for x ≤ t: −σ_h(t − x)
                    (None, Some(t)) => terms.push(Term::new(-1.0, -1.0, t)),
                    // −1 for x > t: −σ_h(x − t), evaluated off the midpoint
                    (Some(t), None) => terms.push(Term::new(-1.0, 1.0, -t)),
                    (Some(t1), Some(t2)) => {
                        terms.push(Term::new(-1.0, 1.0, -t1));
                        terms.push(Term::new(1.0, 1.0, -t2));
                    }
                    (None, None) => unreachable!(),
                }
            }
            i = j + 1;
        }
    }
    if terms.len() > n.max(1) || (n == 0 && !terms.is_empty()) {
        return Ok(None);
    }
    while terms.len() < n {
        terms.push(Term::new(0.0, 0.0, 0.0));
    }
    let m = SpaceMember {
        network: RidgeNetwork::new(ActivationKind::Heaviside, terms)?,
        constant: 0.0,
    };
    if !m.realizes(points, signs) {
        return Err(Error::Violation("constructed Heaviside witness misses its pattern".into()));
    }
    Ok(Some(m))
}

/// Exact rule for n-term Heaviside sums: a pattern is realizable iff its
/// number of sign changes in sorted order is at most n.
pub fn heaviside_pattern_feasible(points: &[f64], signs: &[f64], n: usize) -> bool {
    let (_, ss) = sorted_pattern(points, signs);
    let changes = ss.windows(2).filter(|w| w[0] != w[1]).count();
    if n == 0 {
        return ss.iter().all(|&s| s > 0.0);
    }
    changes <= n
}

struct SmoothLayout {
    kind: ActivationKind,
    n: usize,
    uniform: bool,
    constant: bool,
}

impl SmoothLayout {
    fn member(&self, th: &[f64]) -> Result<SpaceMember> {
        let n = self.n;
        let terms: Vec<Term> = (0..n)
            .map(|k| {
                let b = if self.uniform { th[n] } else { th[n + k] };
                let c = if self.uniform { th[n + 1 + k] } else { th[2 * n + k] };
                Term::new(th[k], b, c)
            })
            .collect();
        let mut network = RidgeNetwork::new(self.kind, terms)?;
        if self.uniform {
            network.uniform_scale = Some(th[n]);
        }
        Ok(SpaceMember {
            network,
            constant: if self.constant { *th.last().unwrap() } else { 0.0 },
        })
    }

    fn dim(&self) -> usize {
        let base = if self.uniform { 2 * self.n + 1 } else { 3 * self.n };
        base + self.constant as usize
    }

    fn value(&self, th: &[f64], x: f64) -> f64 {
        let n = self.n;
        let mut s = if self.constant { *th.last().unwrap() } else { 0.0 };
        for k in 0..n {
            let b = if self.uniform { th[n] } else { th[n + k] };
            let c = if self.uniform { th[n + 1 + k] } else { th[2 * n + k] };
            s += th[k] * eval_activation(self.kind, b * x + c);
        }
        s
    }

    fn start(&self, rng: &mut ChaCha8Rng, bmax: f64) -> Vec<f64> {
        let n = self.n;
        let mut th = vec![0.0; self.dim()];
        let draw_b = |rng: &mut ChaCha8Rng| {
            let b = (rng.gen::<f64>() * bmax.ln()).exp();
            if rng.gen::<bool>() {
                b
            } else {
                -b
            }
        };
        for a in th.iter_mut().take(n) {
            *a = rng.gen_range(-2.0..2.0);
        }
        if self.uniform {
            let b = draw_b(rng);
            th[n] = b;
            for k in 0..n {
                th[n + 1 + k] = -b * rng.gen_range(-0.1..1.1);
            }
        } else {
            for k in 0..n {
                let b = draw_b(rng);
                th[n + k] = b;
                th[2 * n + k] = -b * rng.gen_range(-0.1..1.1);
            }
        }
        th
    }
}

fn smooth_search(layout: &SmoothLayout, points: &[f64], signs: &[f64], budget: &SearchBudget) -> Result<Option<SpaceMember>> {
    if layout.n == 0 {
        return Ok(None);
    }
    // constant patterns: a single b = 0 term
    if signs.iter().all(|&s| s == signs[0]) {
        let mut th = vec![0.0; layout.dim()];
        th[0] = signs[0] / eval_activation(layout.kind, 0.0).max(1e-300);
        let m = layout.member(&th)?;
        if m.realizes(points, signs) {
            return Ok(Some(m));
        }
    }
    let spread = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - points.iter().cloned().fold(f64::INFINITY, f64::min);
    let bmax = (8.0 * points.len() as f64 / spread.max(1e-9)).max(2.0);
    let loss = |th: &[f64]| -> f64 {
        points
            .iter()
            .zip(signs)
            .map(|(&x, &s)| {
                let v = layout.value(th, x);
                if !v.is_finite() {
                    return 1e6;
                }
                (1.0 - s * v).max(0.0).powi(2)
            })
            .sum()
    };
    for i in 0..budget.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed ^ (i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        let th0 = layout.start(&mut rng, bmax);
        let (th, _) = nelder_mead(loss, &th0, budget.evals);
        if th.iter().all(|v| v.is_finite()) {
            if let Ok(m) = layout.member(&th) {
                let strict = points.iter().zip(signs).all(|(&x, &s)| s * m.eval(x) > 0.0);
                if strict && m.realizes(points, signs) {
                    return Ok(Some(m));
                }
            }
        }
    }
    Ok(None)
}

/// Decides (exact spaces) or searches (smooth spaces) for a member whose
/// Heaviside-thresholded values reproduce the sign pattern.
pub fn shatter_check(space: &SpaceDescriptor, points: &[f64], signs: &[f64], budget: &SearchBudget) -> Result<ShatterOutcome> {
    if points.len() != signs.len() || points.is_empty() {
        return invalid("need equally many points and signs, at least one");
    }
    if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return invalid("signs must be +1 or -1");
    }
    match *space {
        SpaceDescriptor::Constants => {
            if signs.iter().all(|&s| s == signs[0]) {
                let m = SpaceMember {
                    network: RidgeNetwork::new(ActivationKind::Heaviside, vec![])?,
                    constant: signs[0],
                };
                Ok(ShatterOutcome::Achievable { witness: m })
            } else {
                Ok(ShatterOutcome::Impossible)
            }
        }
        SpaceDescriptor::Heaviside { n } => Ok(match heaviside_witness(points, signs, n)? {
            Some(w) => ShatterOutcome::Achievable { witness: w },
            None => ShatterOutcome::Impossible,
        }),
        SpaceDescriptor::Smooth {
            kind,
            n,
            uniform_scale,
            with_constant,
        } => {
            let layout = SmoothLayout {
                kind,
                n,
                uniform: uniform_scale,
                constant: with_constant,
            };
            Ok(match smooth_search(&layout, points, signs, budget)? {
                Some(w) => ShatterOutcome::Achievable { witness: w },
                None => ShatterOutcome::NotFound,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternLog {
    pub signs: Vec<f64>,
    pub outcome: ShatterOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShatterReport {
    pub space: SpaceDescriptor,
    pub grid_points: usize,
    /// largest m with a shattered m-subset found
    pub m: usize,
    pub shattered: Vec<f64>,
    pub patterns: Vec<PatternLog>,
    /// m is the exact answer (exact spaces) rather than a lower bound
    pub exact: bool,
    /// the search for m + 1 ran out of budget instead of proving impossibility
    pub budget_exhausted: bool,
}

fn all_patterns(m: usize) -> Vec<Vec<f64>> {
    (0..1u64 << m)
        .map(|bits| (0..m).map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect()
}

fn candidate_subsets(points: &[f64], m: usize, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let g = points.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let spread: Vec<f64> = (0..m)
        .map(|i| points[if m == 1 { 0 } else { i * (g - 1) / (m - 1) }])
        .collect();
    out.push(spread);
    out.push(points[..m].to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let mut idx: Vec<usize> = (0..g).collect();
        for i in 0..m {
            let j = rng.gen_range(i..g);
            idx.swap(i, j);
        }
        let mut pick: Vec<usize> = idx[..m].to_vec();
        pick.sort_unstable();
        out.push(pick.iter().map(|&i| points[i]).collect());
    }
    out.dedup();
    out
}

/// Greatest m ≤ m_max for which some m-subset of the grid is shattered;
/// exact for Heaviside and constant spaces, a lower bound otherwise.
pub fn vc_lower_bound(space: &SpaceDescriptor, grid: &[f64], m_max: usize, budget: &SearchBudget) -> Result<ShatterReport> {
    if m_max > grid.len() {
        return invalid(format!("m_max {m_max} exceeds the {} grid points", grid.len()));
    }
    let mut report = ShatterReport {
        space: space.clone(),
        grid_points: grid.len(),
        m: 0,
        shattered: vec![],
        patterns: vec![],
        exact: space.is_exact(),
        budget_exhausted: false,
    };
    for m in 1..=m_max {
        // order-only rules make every m-subset equivalent for exact spaces
        let subsets = if space.is_exact() {
            vec![grid[..m].to_vec()]
        } else {
            candidate_subsets(grid, m, 2, budget.seed ^ m as u64)
        };
        let mut found = None;
        let mut proven_impossible = space.is_exact();
        for pts in subsets {
            let logs: Vec<PatternLog> = all_patterns(m)
                .into_par_iter()
                .map(|signs| {
                    let outcome = shatter_check(space, &pts, &signs, budget)?;
                    Ok(PatternLog { signs, outcome })
                })
                .collect::<Result<_>>()?;
            if logs.iter().all(|l| l.outcome.achieved()) {
                found = Some((pts, logs));
                break;
            }
            if !logs.iter().any(|l| matches!(l.outcome, ShatterOutcome::Impossible)) {
                proven_impossible = false;
            }
        }
        match found {
            Some((pts, logs)) => {
                report.m = m;
                report.shattered = pts;
                report.patterns = logs;
            }
            None => {
                report.budget_exhausted = !proven_impossible;
                return Ok(report);
            }
        }
    }
    Ok(report)
}

/// Zeros of a member that realizes the alternating pattern (+, −, +, …) on
/// sorted points: one in each [x_{2k−1}, x_{2k}), located by bisection.
pub fn alternating_zeros(member: &SpaceMember, points: &[f64]) -> Result<Vec<f64>> {
    let signs: Vec<f64> = (0..points.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    if !member.realizes(points, &signs) {
        return invalid("member does not realize the alternating pattern");
    }
    let mut zeros = Vec::new();
    for k in 0..points.len() / 2 {
        let (a, b) = (points[2 * k], points[2 * k + 1]);
        let (mut lo, mut hi) = (a, b);
        if member.eval(lo) == 0.0 {
            zeros.push(lo);
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if member.eval(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        zeros.push(0.5 * (lo + hi));
    }
    // negative values separate consecutive zeros
    for k in 1..zeros.len() {
        let between = points[2 * k - 1];
        if !(zeros[k - 1] < between && between < zeros[k] && member.eval(between) < 0.0) {
            return Err(Error::Violation("zeros are not separated by negative values".into()));
        }
    }
    Ok(zeros)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    /// successive right-hand sides of the VC-dimension estimate
    pub lines: Vec<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub n: usize,
    pub e: f64,
    pub d: u64,
    pub tau: u64,
    pub phi: f64,
    /// VC constant admissible for this E
    pub c: f64,
    pub chain: ChainCheck,
    pub alphacond_lhs: u64,
    pub alphacond_rhs: f64,
    pub alphacond_holds: bool,
}

pub fn log_budget_phi(x: f64) -> f64 {
    1.0 / (x * (1.0 + x.log2()))
}

pub fn budget_d(n: usize, e: f64) -> u64 {
    let n = n as f64;
    (e * n * (1.0 + n.log2())).floor() as u64
}

/// φ(λx) ≤ (2/λ)·φ(x) for x > λ^{-2}.
pub fn log_budget_faktor_holds(lambda: f64, x: f64) -> bool {
    x > lambda.powi(-2) && log_budget_phi(lambda * x) <= 2.0 / lambda * log_budget_phi(x)
}

/// D(n) = ⌊E n (1 + log₂ n)⌋, τ(n) = 2D(n) and φ(n), with the numerical
/// check of the estimate chain for C = 0.99·E/(4(1 + log₂ E)).
pub fn corollary4_budget(n: usize, e: f64) -> Result<Budget> {
    if n < 2 || !(e > 1.0) {
        return invalid("need n >= 2 and E > 1");
    }
    let c = 0.99 * e / (4.0 * (1.0 + e.log2()));
    let nf = n as f64;
    let l = nf.log2();
    let d = budget_d(n, e);
    let lines = vec![
        c * nf * (l + (e * nf * (1.0 + l)).log2()),
        c * nf * (l + (e * nf * (2.0 * l)).log2()),
        c * nf * (2.0 * l + e.log2() + (2.0 * l).log2()),
        c * nf * (3.0 * l + e.log2() + 1.0),
        4.0 * c * nf * l * (1.0 + e.log2()),
        e * nf * l,
        d as f64,
    ];
    let tol = 1e-9;
    let holds = lines.windows(2).enumerate().all(|(i, w)| {
        if i == 4 {
            w[0] < w[1]
        } else {
            w[0] <= w[1] * (1.0 + tol)
        }
    });
    let lhs = 2 * budget_d(4 * n, e);
    let rhs = 24.0 * e / log_budget_phi(nf);
    Ok(Budget {
        n,
        e,
        d,
        tau: 2 * d,
        phi: log_budget_phi(nf),
        c,
        chain: ChainCheck { lines, holds },
        alphacond_lhs: lhs,
        alphacond_rhs: rhs,
        alphacond_holds: (lhs as f64) <= rhs,
    })
}

/// Random instance helpers shared by the Monte-Carlo checks.
pub fn random_exp_sum(rng: &mut ChaCha8Rng, m: usize) -> ExpSumZeroInstance {
    loop {
        let alphas: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bases: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0f64..3.0).exp()).collect();
        if let Ok(inst) = ExpSumZeroInstance::new(alphas, bases) {
            return inst;
        }
    }
}

pub fn random_network(rng: &mut ChaCha8Rng, kind: ActivationKind, n: usize, uniform: bool, bmax: f64) -> RidgeNetwork {
    let draw_b = |rng: &mut ChaCha8Rng| {
        let b = (rng.gen::<f64>() * bmax.ln()).exp();
        if rng.gen::<bool>() {
            b
        } else {
            -b
        }
    };
    if uniform {
        let b = draw_b(rng);
        let outer: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(-2.0..2.0), -b * rng.gen::<f64>())).collect();
        RidgeNetwork::with_uniform_scale(kind, b, &outer).expect("finite parameters")
    } else {
        let terms = (0..n)
            .map(|_| {
                let b = draw_b(rng);
                Term::new(rng.gen_range(-2.0..2.0), b, -b * rng.gen::<f64>())
            })
            .collect();
        RidgeNetwork::new(kind, terms).expect("finite parameters")
    }
}

/// Monte-Carlo run of `trials` random members against their caps; returns
/// the largest count seen and fails on any violation.
pub fn monte_carlo_caps(family: &str, trials: usize, max_terms: usize, seed: u64) -> Result<usize> {
    let grid = Grid::uniform(4096)?;
    let counts: Vec<Result<usize>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 * 7919));
            let m = 1 + i % max_terms;
            let z = match family {
                "exp-sum" => exp_sum_sign_changes(&random_exp_sum(&mut rng, m), -1.0, 1.0, 4096)?,
                "uniform-logistic" => {
                    let net = random_network(&mut rng, ActivationKind::Logistic, m, true, 64.0);
                    logistic_network_sign_changes(&net, &grid)?
                }
                "logistic" => {
                    let net = random_network(&mut rng, ActivationKind::Logistic, m, false, 64.0);
                    logistic_network_sign_changes(&net, &grid)?
                }
                "elu" => {
                    let alpha = rng.gen_range(0.2..2.0);
                    let net = random_network(&mut rng, ActivationKind::elu(alpha)?, m, false, 64.0);
                    elu_network_sign_changes(&net, &grid)?
                }
                other => return invalid(format!("unknown family {other}")),
            };
            Ok(z.changes)
        })
        .collect();
    let mut max = 0;
    for c in counts {
        max = max.max(c?);
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> SearchBudget {
        SearchBudget {
            restarts: 16,
            evals: 2000,
            seed: 3,
        }
    }

    #[test]
    fn exp_sum_examples() {
        let inst = ExpSumZeroInstance::new(vec![1.0, -1.0], vec![1.0, 2.0]).unwrap();
        let z = exp_sum_sign_changes(&inst, -1.0, 1.0, 1001).unwrap();
        assert_eq!(z.changes, 1);
        let one = ExpSumZeroInstance::new(vec![-0.5], vec![3.0]).unwrap();
        assert_eq!(exp_sum_sign_changes(&one, -1.0, 1.0, 100).unwrap().changes, 0);
        assert!(ExpSumZeroInstance::new(vec![1.0, 1.0], vec![2.0, 2.0]).is_err());
        let zero = ExpSumZeroInstance::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(exp_sum_sign_changes(&zero, 0.0, 1.0, 10).unwrap().identically_zero);
    }

    #[test]
    fn exp_sum_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let inst = random_exp_sum(&mut rng, 6);
            let z = exp_sum_sign_changes(&inst, -1.0, 1.0, 2048).unwrap();
            assert!(z.changes <= 5);
        }
    }

    #[test]
    fn logistic_caps() {
        let g = Grid::uniform(2048).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let net = random_network(&mut rng, ActivationKind::Logistic, 3, true, 64.0);
            assert!(logistic_network_sign_changes(&net, &g).unwrap().changes <= 2);
        }
        for _ in 0..50 {
            let uniform = rng.gen();
            let net = random_network(&mut rng, ActivationKind::Logistic, 1, uniform, 64.0);
            assert!(logistic_network_sign_changes(&net, &g).unwrap().changes <= 1);
        }
        // a bump crossing zero twice: two slopes of opposite sign
        let planted = RidgeNetwork::new(
            ActivationKind::Logistic,
            vec![Term::new(1.0, 40.0, -12.0), Term::new(1.0, -40.0, 28.0), Term::new(-3.0, 0.0, 0.0)],
        )
        .unwrap();
        let z = logistic_network_sign_changes(&planted, &g).unwrap();
        assert_eq!(z.changes, 2);
        assert!(z.changes as u64 <= z.cap);
    }

    #[test]
    fn elu_caps() {
        let net = |n: usize| RidgeNetwork::new(ActivationKind::elu(1.0).unwrap(), vec![Term::new(1.0, 1.0, 0.0); n]).unwrap();
        assert_eq!(elu_network_zero_cap(&net(2)).unwrap(), 9);
        assert_eq!(elu_network_zero_cap(&net(1)).unwrap(), 4);
        let empty = net(0);
        assert_eq!(elu_network_zero_cap(&empty).unwrap(), 1);
        assert!(elu_network_sign_changes(&empty, &Grid::uniform(16).unwrap()).unwrap().identically_zero);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = Grid::uniform(2048).unwrap();
        for _ in 0..200 {
            let n = net_count(&mut rng);
            let r = random_network(&mut rng, ActivationKind::elu(1.0).unwrap(), n, false, 64.0);
            let z = elu_network_sign_changes(&r, &g).unwrap();
            assert!(z.changes as u64 <= z.cap);
            if n == 1 {
                assert!(z.changes <= 2);
            }
        }
    }

    fn net_count(rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(1..=3)
    }

    #[test]
    fn heaviside_examples() {
        let b = SearchBudget::default();
        let sp = SpaceDescriptor::Heaviside { n: 1 };
        match shatter_check(&sp, &[0.0, 0.5], &[1.0, -1.0], &b).unwrap() {
            ShatterOutcome::Achievable { witness } => {
                let t = witness.network.terms[0];
                assert_eq!((t.a, t.b, t.c), (-1.0, 1.0, -0.25));
            }
            o => panic!("{o:?}"),
        }
        assert_eq!(
            shatter_check(&sp, &[0.0, 0.5, 1.0], &[1.0, -1.0, 1.0], &b).unwrap(),
            ShatterOutcome::Impossible
        );
        assert!(shatter_check(&SpaceDescriptor::Constants, &[0.1, 0.9], &[-1.0, -1.0], &b)
            .unwrap()
            .achieved());
        assert_eq!(
            shatter_check(&SpaceDescriptor::Constants, &[0.1, 0.9], &[-1.0, 1.0], &b).unwrap(),
            ShatterOutcome::Impossible
        );
    }

    /// Brute force over a finite parameter set that contains every
    /// qualitative configuration for these points.
    fn brute_force(points: &[f64], signs: &[f64], n: usize) -> bool {
        let mut cuts = vec![-0.25, 1.25];
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in sorted.windows(2) {
            cuts.push(0.5 * (w[0] + w[1]));
        }
        let mut choices = vec![];
        for a in [-2.0, -1.0, 1.0, 2.0] {
            choices.push(Term::new(a, 0.0, 0.0));
            for &t in &cuts {
                choices.push(Term::new(a, 1.0, -t));
                choices.push(Term::new(a, -1.0, t));
            }
        }
        choices.push(Term::new(0.0, 0.0, 0.0));
        let k = choices.len();
        let total = k.pow(n as u32);
        (0..total).any(|mut code| {
            let mut terms = vec![];
            for _ in 0..n {
                terms.push(choices[code % k]);
                code /= k;
            }
            let m = SpaceMember {
                network: RidgeNetwork::new(ActivationKind::Heaviside, terms).unwrap(),
                constant: 0.0,
            };
            m.realizes(points, signs)
        })
    }

    #[test]
    fn heaviside_rule_matches_brute_force() {
        let points = [0.0, 0.3, 0.55, 1.0];
        for m in 1..=4 {
            for signs in all_patterns(m) {
                for n in 1..=2 {
                    let exact = heaviside_pattern_feasible(&points[..m], &signs, n);
                    assert_eq!(exact, brute_force(&points[..m], &signs, n), "{signs:?} n={n}");
                    let out = shatter_check(&SpaceDescriptor::Heaviside { n }, &points[..m], &signs, &budget()).unwrap();
                    assert_eq!(out.achieved(), exact);
                }
            }
        }
    }

    #[test]
    fn vc_examples() {
        let grid = [0.0, 0.5, 1.0];
        let r = vc_lower_bound(&SpaceDescriptor::Heaviside { n: 1 }, &grid, 3, &budget()).unwrap();
        assert_eq!(r.m, 2);
        assert!(r.exact && !r.budget_exhausted);
        assert_eq!(r.patterns.len(), 4);
        assert!(r.patterns.iter().all(|p| p.outcome.achieved()));
        let c = vc_lower_bound(&SpaceDescriptor::Constants, &grid, 3, &budget()).unwrap();
        assert_eq!(c.m, 1);
        assert!(c.exact);
    }

    #[test]
    fn uniform_logistic_misses_tau() {
        let n = 2;
        let tau = 2 * n + 2;
        let grid: Vec<f64> = (0..=tau).map(|j| j as f64 / tau as f64).collect();
        let sp = SpaceDescriptor::Smooth {
            kind: ActivationKind::Logistic,
            n,
            uniform_scale: true,
            with_constant: false,
        };
        let r = vc_lower_bound(&sp, &grid, tau, &budget()).unwrap();
        assert!(r.m < tau);
        assert!(r.m >= 1);
        assert!(r.budget_exhausted);
    }

    #[test]
    fn smooth_alternation_gives_zeros() {
        let sp = SpaceDescriptor::Smooth {
            kind: ActivationKind::Logistic,
            n: 2,
            uniform_scale: false,
            with_constant: false,
        };
        let pts = [0.0, 1.0 / 3.0, 2.0 / 3.0];
        let out = shatter_check(&sp, &pts, &[1.0, -1.0, 1.0], &budget()).unwrap();
        match out {
            ShatterOutcome::Achievable { witness } => {
                let z = alternating_zeros(&witness, &pts).unwrap();
                assert_eq!(z.len(), 1);
                assert!(witness.eval(z[0]).abs() < 1e-9);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn corollary4_examples() {
        assert_eq!(log_budget_phi(2.0), 0.25);
        let b = corollary4_budget(8, 2.0).unwrap();
        assert_eq!(b.alphacond_lhs, 768);
        assert_eq!(b.alphacond_rhs, 1536.0);
        assert!(b.alphacond_holds);
        assert!(log_budget_faktor_holds(0.5, 100.0));
        for n in 4..=1024 {
            let b = corollary4_budget(n, 2.0).unwrap();
            assert!(b.chain.holds && b.alphacond_holds, "n={n}: {:?}", b.chain.lines);
            assert_eq!(b.tau, 2 * b.d);
        }
    }

    #[test]
    fn monte_carlo_helpers() {
        assert!(monte_carlo_caps("exp-sum", 60, 6, 1).unwrap() <= 5);
        assert!(monte_carlo_caps("nope", 1, 1, 1).is_err());
    }
}
