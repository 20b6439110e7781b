//! Activations, ridge networks, evaluation grids and discretized norms on [0,1].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of equidistant cells used by the norm machinery.
pub const DEFAULT_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "lowercase")]
pub enum ActivationKind {
    Heaviside,
    Cut,
    Arctan,
    Logistic,
    Relu,
    Elu { alpha: f64 },
    Softplus,
    Sqnl,
}

impl ActivationKind {
    pub fn elu(alpha: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return invalid(format!("elu requires a finite nonzero alpha, got {alpha}"));
        }
        Ok(ActivationKind::Elu { alpha })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::Elu { alpha } => ActivationKind::elu(alpha).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Heaviside => "heaviside",
            ActivationKind::Cut => "cut",
            ActivationKind::Arctan => "arctan",
            ActivationKind::Logistic => "logistic",
            ActivationKind::Relu => "relu",
            ActivationKind::Elu { .. } => "elu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Sqnl => "sqnl",
        }
    }

    /// Parses `heaviside`, `logistic`, `elu` (alpha 1), `elu:0.5`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let kind = match head.to_ascii_lowercase().as_str() {
            "heaviside" => ActivationKind::Heaviside,
            "cut" => ActivationKind::Cut,
            "arctan" => ActivationKind::Arctan,
            "logistic" => ActivationKind::Logistic,
            "relu" => ActivationKind::Relu,
            "softplus" => ActivationKind::Softplus,
            "sqnl" => ActivationKind::Sqnl,
            "elu" => {
                let alpha = match arg {
                    Some(a) => a
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad elu alpha '{a}'")))?,
                    None => 1.0,
                };
                return ActivationKind::elu(alpha);
            }
            other => return invalid(format!("unknown activation '{other}'")),
        };
        if arg.is_some() {
            return invalid(format!("activation '{head}' takes no parameter"));
        }
        Ok(kind)
    }

    /// True for the kinds that are infinitely differentiable on the whole line.
    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            ActivationKind::Arctan | ActivationKind::Logistic | ActivationKind::Softplus
        )
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Elu { alpha } => write!(f, "elu:{alpha}"),
            other => f.write_str(other.name()),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn eval_activation(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Heaviside => {
            if x < 0.0 {
                0.0
            } else {
                1.0
            }
        }
        ActivationKind::Cut => {
            if x < -0.5 {
                0.0
            } else if x <= 0.5 {
                x + 0.5
            } else {
                1.0
            }
        }
        ActivationKind::Arctan => 0.5 + x.atan() / PI,
        ActivationKind::Logistic => logistic(x),
        ActivationKind::Relu => x.max(0.0),
        ActivationKind::Elu { alpha } => {
            if x < 0.0 {
                alpha * x.exp_m1()
            } else {
                x
            }
        }
        ActivationKind::Softplus => {
            // log(1 + e^x) without overflow
            if x > 0.0 {
                x + (-x).exp().ln_1p()
            } else {
                x.exp().ln_1p()
            }
        }
        ActivationKind::Sqnl => {
            if x > 2.0 {
                1.0
            } else if x < -2.0 {
                -1.0
            } else {
                x - x.signum() * x * x / 4.0
            }
        }
    }
}

/// k-th derivative of a smooth activation (k >= 0). For elu and sqnl the
/// branch for x >= 0 is used at the kink. Returns None for kinds without a
/// derivative of that order.
pub fn activation_derivative(kind: ActivationKind, k: usize, x: f64) -> Option<f64> {
    if k == 0 {
        return Some(eval_activation(kind, x));
    }
    match kind {
        ActivationKind::Logistic => Some(logistic_derivative(k, x)),
        ActivationKind::Softplus => Some(if k == 1 {
            logistic(x)
        } else {
            logistic_derivative(k - 1, x)
        }),
        ActivationKind::Arctan => {
            // d^k atan(x) = Im((-1)^(k-1) (k-1)! (x - i)^(-k))
            let r = (1.0 + x * x).sqrt();
            let theta = (-1.0f64).atan2(x);
            let kf = k as f64;
            let im = -r.powf(-kf) * (kf * theta).sin();
            let fact: f64 = (1..k).map(|j| j as f64).product();
            let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
            Some(sign * fact * im / PI)
        }
        ActivationKind::Elu { alpha } => Some(if x < 0.0 {
            alpha * x.exp()
        } else if k == 1 {
            1.0
        } else {
            0.0
        }),
        ActivationKind::Relu => Some(if k == 1 && x >= 0.0 { 1.0 } else { 0.0 }),
        ActivationKind::Sqnl => Some(if x.abs() > 2.0 {
            0.0
        } else {
            match k {
                1 => 1.0 - x.abs() / 2.0,
                2 => -x.signum() / 2.0,
                _ => 0.0,
            }
        }),
        ActivationKind::Heaviside | ActivationKind::Cut => None,
    }
}

/// Derivatives of the logistic function are polynomials in s = sigma(x):
/// P_0(s) = s, P_{k+1}(s) = P_k'(s) (s - s^2).
fn logistic_derivative(k: usize, x: f64) -> f64 {
    let mut poly = vec![0.0, 1.0];
    for _ in 0..k {
        let mut next = vec![0.0; poly.len() + 1];
        for (j, &cj) in poly.iter().enumerate().skip(1) {
            let d = cj * j as f64;
            // d * s^(j-1) * (s - s^2)
            next[j] += d;
            next[j + 1] -= d;
        }
        poly = next;
    }
    let s = logistic(x);
    poly.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Term {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Term { a, b, c }
    }
}

/// A ridge sum `sum_k a_k sigma(b_k x + c_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeNetwork {
    pub kind: ActivationKind,
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_scale: Option<f64>,
}

impl RidgeNetwork {
    pub fn new(kind: ActivationKind, terms: Vec<Term>) -> Result<Self> {
        let net = RidgeNetwork {
            kind,
            terms,
            uniform_scale: None,
        };
        net.validate()?;
        Ok(net)
    }

    /// Network whose inner slopes all equal `scale`; `outer` holds (a_k, c_k).
    pub fn with_uniform_scale(kind: ActivationKind, scale: f64, outer: &[(f64, f64)]) -> Result<Self> {
        let terms = outer.iter().map(|&(a, c)| Term::new(a, scale, c)).collect();
        let net = RidgeNetwork {
            kind,
            terms,
            uniform_scale: Some(scale),
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        for (i, t) in self.terms.iter().enumerate() {
            if !(t.a.is_finite() && t.b.is_finite() && t.c.is_finite()) {
                return invalid(format!("term {i} has non-finite parameters"));
            }
        }
        if let Some(s) = self.uniform_scale {
            if !s.is_finite() {
                return invalid("uniform scale must be finite");
            }
            if self.terms.iter().any(|t| t.b.to_bits() != s.to_bits()) {
                return invalid("uniform scale set but some slope differs from it");
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_network(self, x)
    }

    pub fn to_handle(&self, label: impl Into<String>) -> FunctionHandle {
        let net = self.clone();
        FunctionHandle::new(label, move |x| net.eval(x))
    }
}

pub fn eval_network(net: &RidgeNetwork, x: f64) -> f64 {
    net.terms
        .iter()
        .map(|t| t.a * eval_activation(net.kind, t.b * x + t.c))
        .sum()
}

type Evaluator = dyn Fn(f64) -> f64 + Send + Sync;

/// A real function on [0,1], cheap to clone and shareable across threads.
#[derive(Clone)]
pub struct FunctionHandle {
    f: Arc<Evaluator>,
    label: String,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionHandle").field("label", &self.label).finish()
    }
}

impl FunctionHandle {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        FunctionHandle {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn constant(c: f64) -> Self {
        FunctionHandle::new(format!("{c}"), move |_| c)
    }

    pub fn scale(&self, c: f64) -> Self {
        let f = self.clone();
        FunctionHandle::new(format!("{c}*({})", self.label), move |x| c * f.eval(x))
    }

    pub fn add(&self, other: &FunctionHandle) -> Self {
        let (f, g) = (self.clone(), other.clone());
        FunctionHandle::new(format!("({})+({})", self.label, other.label), move |x| {
            f.eval(x) + g.eval(x)
        })
    }

    pub fn sub(&self, other: &FunctionHandle) -> Self {
        let (f, g) = (self.clone(), other.clone());
        FunctionHandle::new(format!("({})-({})", self.label, other.label), move |x| {
            f.eval(x) - g.eval(x)
        })
    }

    /// Evaluates at every point, rejecting non-finite values.
    pub fn sample(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter()
            .map(|&x| {
                let v = self.eval(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite { x })
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    uniform: bool,
}

impl Grid {
    /// `cells` equidistant cells, i.e. `cells + 1` points `i / cells`.
    pub fn uniform(cells: usize) -> Result<Self> {
        if cells == 0 {
            return invalid("a grid needs at least one cell");
        }
        let points = (0..=cells).map(|i| i as f64 / cells as f64).collect();
        Ok(Grid {
            points,
            uniform: true,
        })
    }

    pub fn from_points(mut points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return invalid("grid points must be finite and lie in [0,1]");
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        if points.len() < 2 || points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return invalid("grid must contain both endpoints 0 and 1");
        }
        Ok(Grid {
            points,
            uniform: false,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn cells(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Splits every cell into `factor` equal parts.
    pub fn refine(&self, factor: usize) -> Grid {
        if self.uniform {
            return Grid::uniform(self.cells() * factor.max(1)).unwrap();
        }
        let mut pts = Vec::with_capacity(self.cells() * factor + 1);
        for w in self.points.windows(2) {
            for j in 0..factor.max(1) {
                pts.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
            }
        }
        pts.push(1.0);
        Grid {
            points: pts,
            uniform: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Infinity,
}

impl PNorm {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(PNorm::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(PNorm::Finite(p))
        } else {
            invalid(format!("p must lie in [1, inf], got {p}"))
        }
    }

    pub fn is_sup(&self) -> bool {
        matches!(self, PNorm::Infinity)
    }

    pub fn value(&self) -> f64 {
        match *self {
            PNorm::Finite(p) => p,
            PNorm::Infinity => f64::INFINITY,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "sup" => Ok(PNorm::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad p '{s}'")))
                .and_then(PNorm::new),
        }
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PNorm::Finite(p) => s.serialize_f64(*p),
            PNorm::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let parsed = match &v {
            serde_json::Value::Number(n) => PNorm::new(n.as_f64().unwrap_or(f64::NAN)),
            serde_json::Value::String(s) => PNorm::parse(s),
            _ => invalid("p must be a number or \"inf\""),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Discrete norm of sampled data. For p = inf `values` are point samples; for
/// p < inf they are midpoint samples weighted by `weights` (cell widths).
pub fn discrete_norm(values: &[f64], weights: &[f64], p: PNorm) -> f64 {
    match p {
        PNorm::Infinity => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        PNorm::Finite(p) => {
            let s: f64 = values
                .iter()
                .zip(weights)
                .map(|(v, w)| w * v.abs().powf(p))
                .sum();
            s.powf(1.0 / p)
        }
    }
}

/// Grid norm: max over grid points for p = inf, composite midpoint rule on the
/// grid cells followed by the p-th root otherwise.
pub fn norm(f: &FunctionHandle, p: PNorm, grid: &Grid) -> Result<f64> {
    match p {
        PNorm::Infinity => {
            let v = f.sample(grid.points())?;
            Ok(discrete_norm(&v, &[], p))
        }
        PNorm::Finite(_) => {
            let v = f.sample(&grid.midpoints())?;
            Ok(discrete_norm(&v, &grid.widths(), p))
        }
    }
}

/// Sup norm on uniform grids starting at `start_cells`, doubling until two
/// successive estimates differ by less than `tol` (or `max_cells` is hit).
/// Returns the estimate and the final cell count.
pub fn sup_norm_refined(
    f: &FunctionHandle,
    start_cells: usize,
    tol: f64,
    max_cells: usize,
) -> Result<(f64, usize)> {
    let mut cells = start_cells.max(1);
    let mut prev = norm(f, PNorm::Infinity, &Grid::uniform(cells)?)?;
    while cells < max_cells {
        cells *= 2;
        let cur = norm(f, PNorm::Infinity, &Grid::uniform(cells)?)?;
        let done = (cur - prev).abs() < tol;
        prev = cur;
        if done {
            break;
        }
    }
    Ok((prev, cells))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn sample_fn(coeffs: Vec<f64>) -> FunctionHandle {
        FunctionHandle::new("trig", move |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k as f64 + 1.0) * 3.0 * x).sin())
                .sum()
        })
    }

    fn p_strategy() -> impl Strategy<Value = PNorm> {
        prop_oneof![
            Just(PNorm::Infinity),
            (1.0f64..4.0).prop_map(PNorm::Finite)
        ]
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in prop::collection::vec(-2.0f64..2.0, 4),
                               b in prop::collection::vec(-2.0f64..2.0, 4),
                               p in p_strategy()) {
            let g = Grid::uniform(256).unwrap();
            let (f, h) = (sample_fn(a), sample_fn(b));
            let lhs = norm(&f.add(&h), p, &g).unwrap();
            let rhs = norm(&f, p, &g).unwrap() + norm(&h, p, &g).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-14);
        }

        #[test]
        fn homogeneity(a in prop::collection::vec(-2.0f64..2.0, 4), c in -5.0f64..5.0, p in p_strategy()) {
            let g = Grid::uniform(256).unwrap();
            let f = sample_fn(a);
            let lhs = norm(&f.scale(c), p, &g).unwrap();
            let rhs = c.abs() * norm(&f, p, &g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn sup_refinement_never_decreases(a in prop::collection::vec(-2.0f64..2.0, 4), cells in 2usize..200) {
            let f = sample_fn(a);
            let coarse = norm(&f, PNorm::Infinity, &Grid::uniform(cells).unwrap()).unwrap();
            let fine = norm(&f, PNorm::Infinity, &Grid::uniform(cells * 2).unwrap()).unwrap();
            prop_assert!(fine >= coarse);
        }

        #[test]
        fn cut_symmetry(x in -3.0f64..3.0) {
            let v = eval_activation(ActivationKind::Cut, x);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((eval_activation(ActivationKind::Cut, -x) - (1.0 - v)).abs() < 1e-15);
        }
    }
}
