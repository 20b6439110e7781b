//! Gliding hump construction: choose a rapidly thinning index schedule,
//! sum weighted resonance elements, and report certified lower bounds for
//! the errors of the truncated counterexample next to measured values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::func_core::{ActivationKind, FunctionHandle, Grid, PNorm};
use crate::network_approx::{best_network, FitOptions};
use crate::resonance::ResonanceFamily;
use crate::smoothness::{modulus, AbstractModulus, RateFunctions};
use crate::spline_approx::{sup_step_optimum, Certificate};

pub const DEFAULT_INDEX_CAP: u64 = 1 << 16;
const MAX_SAMPLE_CELLS: usize = 1 << 23;
const SMOOTHNESS_CELLS: usize = 1 << 16;

/// Lower and upper estimate of a continuous error of best approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

/// The functionals E_n whose slow decay the construction forces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ErrorFunctionalFamily {
    /// sup-norm error of free-knot step functions with n knots
    FreeKnotSteps,
    /// sup-norm error of n-term networks, by multi-start search
    Network {
        kind: ActivationKind,
        restarts: usize,
        seed: u64,
        max_cells: usize,
    },
}

impl ErrorFunctionalFamily {
    pub fn certificate(&self) -> Certificate {
        match self {
            ErrorFunctionalFamily::FreeKnotSteps => Certificate::ExactOnGrid,
            ErrorFunctionalFamily::Network { .. } => Certificate::UpperBound,
        }
    }

    /// Boundedness constant in E_n(f) ≤ D_n ‖f‖.
    pub fn d(&self, _n: usize) -> f64 {
        1.0
    }

    pub fn label(&self) -> String {
        match self {
            ErrorFunctionalFamily::FreeKnotSteps => "free-knot-steps".into(),
            ErrorFunctionalFamily::Network { kind, .. } => format!("network-{kind}"),
        }
    }

    /// Samples f once so that many indices can be evaluated. `lipschitz`
    /// bounds |f'| and turns the grid optimum into a certified upper bound.
    pub fn prepare(&self, f: &FunctionHandle, cells: usize, lipschitz: f64) -> Result<PreparedError> {
        let cells = match self {
            ErrorFunctionalFamily::FreeKnotSteps => cells,
            ErrorFunctionalFamily::Network { max_cells, .. } => cells.min(*max_cells),
        };
        let grid = Grid::uniform(cells)?;
        let ys = f.sample(grid.points())?;
        Ok(PreparedError {
            family: self.clone(),
            f: f.clone(),
            grid,
            ys,
            lipschitz,
        })
    }

    pub fn eval(&self, n: usize, f: &FunctionHandle, cells: usize, lipschitz: f64) -> Result<Bracket> {
        self.prepare(f, cells, lipschitz)?.eval(n)
    }
}

pub struct PreparedError {
    family: ErrorFunctionalFamily,
    f: FunctionHandle,
    grid: Grid,
    ys: Vec<f64>,
    lipschitz: f64,
}

impl PreparedError {
    pub fn cells(&self) -> usize {
        self.grid.cells()
    }

    pub fn eval(&self, n: usize) -> Result<Bracket> {
        let dx = self.grid.max_width();
        match &self.family {
            ErrorFunctionalFamily::FreeKnotSteps => {
                if n + 1 >= self.grid.cells() {
                    return Err(Error::GridTooCoarse {
                        pieces: n + 1,
                        cells: self.grid.cells(),
                    });
                }
                let (e, _) = sup_step_optimum(&self.ys, n + 1);
                // the grid optimum's witness is constant on each cell
                Ok(Bracket {
                    lower: e,
                    upper: e + self.lipschitz * dx,
                })
            }
            ErrorFunctionalFamily::Network { kind, restarts, seed, .. } => {
                let opts = FitOptions {
                    restarts: *restarts,
                    seed: *seed,
                    ..FitOptions::default()
                };
                let r = best_network(&self.f, n, *kind, PNorm::Infinity, &self.grid, &opts)?;
                let lg = match &r.witness {
                    crate::spline_approx::Witness::Network(net) => net
                        .terms
                        .iter()
                        .map(|t| (t.a * t.b).abs() * activation_slope_bound(*kind))
                        .sum::<f64>(),
                    _ => 0.0,
                };
                Ok(Bracket {
                    lower: 0.0,
                    upper: r.error + (self.lipschitz + lg) * dx,
                })
            }
        }
    }
}

fn activation_slope_bound(kind: ActivationKind) -> f64 {
    match kind {
        ActivationKind::Logistic => 0.25,
        ActivationKind::Arctan => 1.0 / std::f64::consts::PI,
        ActivationKind::Elu { alpha } => alpha.max(1.0),
        ActivationKind::Sqnl => 1.0,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub gap: f64,
    pub dominance: f64,
    pub tail: f64,
    pub slack: Option<f64>,
}

impl Margins {
    pub fn all_nonnegative(&self) -> bool {
        self.gap >= 0.0 && self.dominance >= 0.0 && self.tail >= 0.0 && self.slack.map_or(true, |m| m >= 0.0)
    }

    fn failing(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.gap < 0.0 {
            out.push("gap");
        }
        if self.dominance < 0.0 {
            out.push("dominance");
        }
        if self.tail < 0.0 {
            out.push("tail");
        }
        if self.slack.is_some_and(|m| m < 0.0) {
            out.push("slack");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    /// the selected index is n_{k+1}
    pub k: usize,
    pub index: u64,
    pub margins: Margins,
    pub sample_cells: usize,
    /// conditions failing at index − 1 (empty when that index is below the
    /// growth floor)
    pub below_fails: Vec<String>,
    pub minimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumpSchedule {
    pub indices: Vec<u64>,
    pub weights: Vec<f64>,
    pub steps: Vec<StepLog>,
    pub k_target: usize,
    pub cap: u64,
}

impl HumpSchedule {
    pub fn depth(&self) -> usize {
        self.indices.len()
    }

    pub fn complete(&self) -> bool {
        self.indices.len() == self.k_target
    }
}

struct Ctx<'a> {
    family: &'a ResonanceFamily,
    omega: &'a AbstractModulus,
    rates: &'a RateFunctions,
    efam: &'a ErrorFunctionalFamily,
}

impl Ctx<'_> {
    fn w(&self, n: u64) -> f64 {
        self.omega.value(self.rates.phi(n as f64))
    }

    fn cheap_margins(&self, k: usize, idx: &[u64], n: u64) -> Margins {
        let nk = *idx.last().unwrap();
        let wn = self.w(n);
        let sum: f64 = idx.iter().map(|&j| self.w(j) / self.rates.phi(j as f64)).sum();
        Margins {
            gap: 0.5 * self.w(nk) - wn,
            dominance: self.w(nk) / k as f64 - self.efam.d(2 * nk as usize) * wn,
            tail: wn / self.rates.phi(n as f64) - sum,
            slack: None,
        }
    }

    fn partial_sum(&self, idx: &[u64]) -> Result<(FunctionHandle, f64, usize)> {
        let mut terms = Vec::new();
        let mut lip = 0.0;
        let mut cells = 1usize;
        for &n in idx {
            let w = self.w(n);
            terms.push((w, self.family.element(n as usize)?));
            lip += w * self.family.lipschitz(n as usize);
            cells = cells.max(self.family.sample_cells(n as usize));
        }
        let f = FunctionHandle::new("partial", move |x| terms.iter().map(|(w, h)| w * h.eval(x)).sum());
        Ok((f, lip, cells))
    }
}

/// Smallest n in [lo, cap] with pred(n), assuming pred is monotone; doubling
/// from lo, then bisection.
fn first_true(lo: u64, cap: u64, mut pred: impl FnMut(u64) -> Result<bool>) -> Result<Option<u64>> {
    if pred(lo)? {
        return Ok(Some(lo));
    }
    let mut bad = lo;
    let mut step = 1u64;
    let good = loop {
        let cand = (lo + step).min(cap);
        if pred(cand)? {
            break cand;
        }
        if cand == cap {
            return Ok(None);
        }
        bad = cand;
        step *= 2;
    };
    let (mut bad, mut good) = (bad, good);
    while good - bad > 1 {
        let mid = bad + (good - bad) / 2;
        if pred(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(Some(good))
}

/// Runs the schedule search as far as it gets; the error names the step and
/// the condition that could not be met below the cap.
pub fn build_schedule(
    family: &ResonanceFamily,
    efam: &ErrorFunctionalFamily,
    omega: &AbstractModulus,
    rates: &RateFunctions,
    k_target: usize,
    cap: u64,
) -> (HumpSchedule, Option<Error>) {
    let ctx = Ctx {
        family,
        omega,
        rates,
        efam,
    };
    let mut sched = HumpSchedule {
        indices: vec![family.n0 as u64],
        weights: vec![ctx.w(family.n0 as u64)],
        steps: Vec::new(),
        k_target,
        cap,
    };
    for k in 1..k_target {
        match next_index(&ctx, k, &sched.indices, cap) {
            Ok(step) => {
                sched.indices.push(step.index);
                sched.weights.push(ctx.w(step.index));
                sched.steps.push(step);
            }
            Err(e) => return (sched, Some(e)),
        }
    }
    (sched, None)
}

fn next_index(ctx: &Ctx, k: usize, idx: &[u64], cap: u64) -> Result<StepLog> {
    let nk = *idx.last().unwrap();
    let floor = (2 * k as u64).max(nk + 1);
    let cheap_ok = |n: u64| ctx.cheap_margins(k, idx, n).failing().is_empty();
    let lo = match first_true(floor, cap, |n| Ok(cheap_ok(n)))? {
        Some(n) => n,
        None => {
            let m = ctx.cheap_margins(k, idx, cap);
            return Err(Error::SearchCapExceeded {
                step: k + 1,
                cap,
                condition: m.failing().join("+"),
            });
        }
    };
    let (sum, lip, base_cells) = ctx.partial_sum(idx)?;
    let target_min = ctx.w(cap) / (k + 1) as f64;
    let wanted = (20.0 * lip / target_min).ceil().min(MAX_SAMPLE_CELLS as f64) as usize;
    let cells = base_cells * wanted.div_ceil(base_cells).max(1);
    let cells = if cells > MAX_SAMPLE_CELLS { base_cells.max(cells.min(MAX_SAMPLE_CELLS) / base_cells * base_cells) } else { cells };
    let cells = cells.max((cap as usize + 2).next_power_of_two());
    let prepared = ctx.efam.prepare(&sum, cells, lip)?;
    let slack = |n: u64| -> Result<f64> {
        let e = prepared.eval(n as usize)?;
        Ok(ctx.w(n) / (k + 1) as f64 - e.upper)
    };
    if slack(cap)? < 0.0 {
        return Err(Error::SearchCapExceeded {
            step: k + 1,
            cap,
            condition: "slack".into(),
        });
    }
    let chosen = first_true(lo, cap, |n| Ok(slack(n)? >= 0.0))?.expect("cap satisfies slack");
    let mut margins = ctx.cheap_margins(k, idx, chosen);
    margins.slack = Some(slack(chosen)?);
    let (below_fails, minimal) = if chosen > floor {
        let mut m = ctx.cheap_margins(k, idx, chosen - 1);
        m.slack = Some(slack(chosen - 1)?);
        let f: Vec<String> = m.failing().iter().map(|s| s.to_string()).collect();
        let minimal = !f.is_empty();
        (f, minimal)
    } else {
        (vec!["growth-floor".to_string()], true)
    };
    Ok(StepLog {
        k,
        index: chosen,
        margins,
        sample_cells: prepared.cells(),
        below_fails,
        minimal,
    })
}

/// The complete schedule n_1 < … < n_K, or the reason it could not be
/// completed below `cap`.
pub fn select_schedule(
    family: &ResonanceFamily,
    efam: &ErrorFunctionalFamily,
    omega: &AbstractModulus,
    rates: &RateFunctions,
    k_target: usize,
    cap: u64,
) -> Result<HumpSchedule> {
    if k_target == 0 {
        return invalid("truncation depth must be at least 1");
    }
    if !omega.satisfies_odd() {
        return invalid(format!("{} does not grow faster than linear at 0", omega.label()));
    }
    omega.validate()?;
    let (s, err) = build_schedule(family, efam, omega, rates, k_target, cap);
    match err {
        Some(e) => Err(e),
        None => Ok(s),
    }
}

#[derive(Clone)]
pub struct Counterexample {
    pub f: FunctionHandle,
    /// bound on the sup norm of the dropped terms
    pub tail_bound: f64,
    pub next_candidate: u64,
    pub lipschitz: f64,
    pub sample_cells: usize,
}

/// f_ω = Σ_{k≤K} ω(φ(n_k)) h_{n_k}.
pub fn assemble_counterexample(
    schedule: &HumpSchedule,
    family: &ResonanceFamily,
    omega: &AbstractModulus,
    rates: &RateFunctions,
) -> Result<Counterexample> {
    let ctx = Ctx {
        family,
        omega,
        rates,
        efam: &ErrorFunctionalFamily::FreeKnotSteps,
    };
    let (f, lip, cells) = ctx.partial_sum(&schedule.indices)?;
    let k = schedule.indices.len();
    let nk = *schedule.indices.last().unwrap();
    let floor = (2 * k as u64).max(nk + 1);
    // cheap conditions only: slack can only push the next index further out
    let mut n = floor;
    while !ctx.cheap_margins(k, &schedule.indices, n).failing().is_empty() {
        n = n.checked_mul(2).ok_or_else(|| Error::Violation("tail candidate overflow".into()))?;
    }
    let cand = first_true(floor, n, |m| Ok(ctx.cheap_margins(k, &schedule.indices, m).failing().is_empty()))?
        .unwrap_or(n);
    Ok(Counterexample {
        f,
        tail_bound: 2.0 * family.c1 * ctx.w(cand),
        next_candidate: cand,
        lipschitz: lip,
        sample_cells: cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRow {
    pub k: usize,
    pub index: u64,
    pub weight: f64,
    /// (c₃ − (2C₁+1)/k)·ω(φ(n_k))
    pub certified: f64,
    pub vacuous: bool,
    /// grid optimum, a lower estimate of the continuous error
    pub measured: Option<f64>,
    pub measured_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessSample {
    pub delta: f64,
    pub modulus: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub schedule: HumpSchedule,
    pub error_family: String,
    pub rows: Vec<SharpnessRow>,
    pub smoothness: Vec<SmoothnessSample>,
    /// proof constant 6·C₂ for the smoothness ratios
    pub smoothness_reference: f64,
    pub tail_bound: f64,
    pub sample_cells: usize,
}

impl SharpnessReport {
    pub fn certified_rows(&self) -> impl Iterator<Item = &SharpnessRow> {
        self.rows.iter().filter(|r| !r.vacuous)
    }

    /// Measured grid errors never fall below positive certified bounds.
    pub fn consistent(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.vacuous || r.measured.map_or(true, |m| m >= r.certified))
    }

    pub fn smoothness_within_reference(&self) -> bool {
        self.smoothness.iter().all(|s| s.ratio <= self.smoothness_reference)
    }
}

/// Certified and measured columns for the truncated counterexample, and
/// smoothness ratios S_δ(f_ω)/ω(δ^r) at δ = 2^{-j}.
pub fn sharpness_report(
    cx: &Counterexample,
    schedule: &HumpSchedule,
    family: &ResonanceFamily,
    efam: &ErrorFunctionalFamily,
    omega: &AbstractModulus,
    delta_exponents: &[i32],
) -> Result<SharpnessReport> {
    let cells = cx.sample_cells * ((1usize << 12).div_ceil(cx.sample_cells)).max(1);
    let prepared = efam.prepare(&cx.f, cells.min(MAX_SAMPLE_CELLS.max(cx.sample_cells)), cx.lipschitz)?;
    let exact = efam.certificate() == Certificate::ExactOnGrid;
    let mut rows = Vec::new();
    for (i, (&n, &w)) in schedule.indices.iter().zip(&schedule.weights).enumerate() {
        let k = i + 1;
        let certified = (family.c3 - (2.0 * family.c1 + 1.0) / k as f64) * w;
        let e = prepared.eval(n as usize)?;
        rows.push(SharpnessRow {
            k,
            index: n,
            weight: w,
            certified,
            vacuous: certified <= 0.0,
            measured: exact.then_some(e.lower),
            measured_upper: e.upper,
        });
    }
    let sgrid = Grid::uniform(cells.min(SMOOTHNESS_CELLS))?;
    let r = family.r;
    let smoothness: Vec<SmoothnessSample> = delta_exponents
        .par_iter()
        .map(|&j| {
            let delta = 2f64.powi(-j);
            let m = modulus(&cx.f, r, delta, family.p, &sgrid)?;
            Ok(SmoothnessSample {
                delta,
                modulus: m,
                ratio: m / omega.value(delta.powi(r as i32)),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SharpnessReport {
        schedule: schedule.clone(),
        error_family: efam.label(),
        rows,
        smoothness,
        smoothness_reference: 6.0 * family.c2,
        tail_bound: cx.tail_bound,
        sample_cells: prepared.cells(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonance::sine_resonance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ResonanceFamily, AbstractModulus, RateFunctions) {
        (
            ResonanceFamily::sine(1, 1, PNorm::Infinity).unwrap(),
            AbstractModulus::power(0.5).unwrap(),
            RateFunctions::polynomial(1.0),
        )
    }

    #[test]
    fn gap_alone_forces_fourfold_growth() {
        let (fam, om, rates) = setup();
        let ctx = Ctx {
            family: &fam,
            omega: &om,
            rates: &rates,
            efam: &ErrorFunctionalFamily::FreeKnotSteps,
        };
        for nk in [1u64, 3, 10, 37] {
            let first = first_true(nk + 1, 1 << 20, |n| Ok(ctx.cheap_margins(1, &[nk], n).gap >= 0.0))
                .unwrap()
                .unwrap();
            assert_eq!(first, 4 * nk);
        }
    }

    #[test]
    fn dominance_and_gap_coincide_for_first_step() {
        let (fam, om, rates) = setup();
        let ctx = Ctx {
            family: &fam,
            omega: &om,
            rates: &rates,
            efam: &ErrorFunctionalFamily::FreeKnotSteps,
        };
        // with D = 1 and k = 1, dominance is gap with half the slack
        let m = ctx.cheap_margins(1, &[1], 4);
        assert!(m.gap.abs() < 1e-15 && m.dominance > 0.0);
    }

    #[test]
    fn short_schedule_satisfies_conditions() {
        let (fam, om, rates) = setup();
        let efam = ErrorFunctionalFamily::FreeKnotSteps;
        let s = select_schedule(&fam, &efam, &om, &rates, 2, DEFAULT_INDEX_CAP).unwrap();
        assert_eq!(s.indices[0], 1);
        assert!(s.indices[1] >= 4);
        for st in &s.steps {
            assert!(st.margins.all_nonnegative(), "{st:?}");
            assert!(st.minimal, "{st:?}");
        }
        let cx = assemble_counterexample(&s, &fam, &om, &rates).unwrap();
        let rep = sharpness_report(&cx, &s, &fam, &efam, &om, &[3]).unwrap();
        assert!(rep.rows.iter().all(|r| r.vacuous));
        assert!(rep.consistent());
        assert!(rep.smoothness_within_reference());
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"slack\""));
    }

    #[test]
    fn deeper_schedule_hits_the_cap() {
        let (fam, om, rates) = setup();
        let small_cap = 1 << 10;
        let err = select_schedule(&fam, &ErrorFunctionalFamily::FreeKnotSteps, &om, &rates, 3, small_cap).unwrap_err();
        match err {
            Error::SearchCapExceeded { cap, condition, .. } => {
                assert_eq!(cap, small_cap);
                assert!(!condition.is_empty());
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn linear_modulus_rejected() {
        let (fam, _, rates) = setup();
        let lin = AbstractModulus::power(1.0).unwrap();
        assert!(select_schedule(&fam, &ErrorFunctionalFamily::FreeKnotSteps, &lin, &rates, 2, 1 << 8).is_err());
    }

    #[test]
    fn single_term_counterexample() {
        let (fam, om, rates) = setup();
        let s = HumpSchedule {
            indices: vec![1],
            weights: vec![1.0],
            steps: vec![],
            k_target: 1,
            cap: DEFAULT_INDEX_CAP,
        };
        let cx = assemble_counterexample(&s, &fam, &om, &rates).unwrap();
        let h = sine_resonance(5).unwrap();
        for x in [0.1, 0.5, 0.77] {
            assert!((cx.f.eval(x) - om.value(1.0) * h.eval(x)).abs() < 1e-12);
        }
        assert!(cx.tail_bound <= 2.0 * fam.c1 * om.value(rates.phi(1.0)) / 2.0 + 1e-12);
    }

    #[test]
    fn partial_sums_are_cauchy() {
        let (fam, om, rates) = setup();
        let idx = [1u64, 4, 17];
        let ctx = Ctx {
            family: &fam,
            omega: &om,
            rates: &rates,
            efam: &ErrorFunctionalFamily::FreeKnotSteps,
        };
        let g = Grid::uniform(512 * 69).unwrap();
        for i in 1..idx.len() {
            let (gi, _, _) = ctx.partial_sum(&idx[..i]).unwrap();
            let (gk, _, _) = ctx.partial_sum(&idx).unwrap();
            let d = crate::func_core::norm(&gk.sub(&gi), PNorm::Infinity, &g).unwrap();
            assert!(d <= 2.0 * fam.c1 * ctx.w(idx[i]) + 1e-12);
        }
    }

    #[test]
    fn step_error_functional_properties() {
        let efam = ErrorFunctionalFamily::FreeKnotSteps;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cells = 1024;
        for _ in 0..20 {
            let (a, b, c, d) = (rng.gen_range(1.0..9.0), rng.gen_range(-1.0..1.0), rng.gen_range(1.0..7.0), rng.gen_range(-2.0..2.0));
            let f = FunctionHandle::new("f", move |x| (a * x).sin() + b * x);
            let g = FunctionHandle::new("g", move |x| (c * x).cos() * d);
            let e = |n: usize, h: &FunctionHandle| efam.eval(n, h, cells, 0.0).unwrap().lower;
            for n in 1..5 {
                // mono
                assert!(e(n + 1, &f) <= e(n, &f));
                // semilin
                assert!((e(n, &f.scale(-2.5)) - 2.5 * e(n, &f)).abs() < 1e-12);
                // semisub with m = 2
                assert!(e(2 * n, &f.add(&g)) <= e(n, &f) + e(n, &g) + 1e-12);
                // abres
                assert!(e(n, &f.add(&g)) >= e(2 * n, &f) - e(n, &g) - 1e-12);
            }
        }
    }
}
