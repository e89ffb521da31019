//! Instances, cost families, strategy boxes and the equilibrium bifunction.
//!
//! Firm indices are zero-based throughout: firms `0..n` may carry any of the
//! concave families, firms `n..N` must be affine. The interaction matrices
//! `beta * I` and `beta * (ones - I)` are never formed; every bilinear form is
//! evaluated from `beta`, coordinate sums and dot products.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, AffineFn};

/// A closed interval `[lo, hi]`. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(t: f64) -> Self {
        Self { lo: t, hi: t }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.max(self.lo).min(self.hi)
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

/// One firm's separable production cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum CostFunction {
    /// `mu * t + xi`
    #[serde(rename = "affine")]
    Affine { mu: f64, xi: f64 },
    /// `nu * t - d * t^2`
    #[serde(rename = "cquad")]
    ConcaveQuadratic { nu: f64, d: f64 },
    /// `a * t + ln(1 + gamma * t)`
    #[serde(rename = "log")]
    LogConcave { a: f64, gamma: f64 },
    /// Continuous piecewise-linear interpolant of `(breakpoints, values)`.
    #[serde(rename = "pwl")]
    PiecewiseLinearConcave { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl CostFunction {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Affine { mu, xi } => mu * t + xi,
            Self::ConcaveQuadratic { nu, d } => nu * t - d * t * t,
            Self::LogConcave { a, gamma } => a * t + (gamma * t).ln_1p(),
            Self::PiecewiseLinearConcave { breakpoints, values } => {
                let k = pwl_segment(breakpoints, t);
                let slope = (values[k + 1] - values[k]) / (breakpoints[k + 1] - breakpoints[k]);
                values[k] + slope * (t - breakpoints[k])
            }
        }
    }

    /// First derivative; for the piecewise-linear family the slope of the
    /// segment starting at or before `t` (right derivative, last segment at
    /// the right end).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Self::Affine { mu, .. } => *mu,
            Self::ConcaveQuadratic { nu, d } => nu - 2.0 * d * t,
            Self::LogConcave { a, gamma } => a + gamma / (1.0 + gamma * t),
            Self::PiecewiseLinearConcave { breakpoints, values } => {
                let k = pwl_segment(breakpoints, t);
                (values[k + 1] - values[k]) / (breakpoints[k + 1] - breakpoints[k])
            }
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Self::Affine { .. })
    }

    /// Slopes of the linear pieces of a piecewise-linear cost.
    pub fn pwl_slopes(&self) -> Option<Vec<f64>> {
        match self {
            Self::PiecewiseLinearConcave { breakpoints, values } => Some(
                breakpoints
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(b, v)| (v[1] - v[0]) / (b[1] - b[0]))
                    .collect(),
            ),
            _ => None,
        }
    }

    fn validate(&self, firm: usize, domain: Interval) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidCost { firm, reason });
        match self {
            Self::Affine { mu, xi } => {
                if !mu.is_finite() || !xi.is_finite() {
                    return fail("non-finite parameter".into());
                }
                if *mu < 0.0 {
                    return fail(format!("slope mu = {mu} must be >= 0"));
                }
            }
            Self::ConcaveQuadratic { nu, d } => {
                if !nu.is_finite() || !d.is_finite() {
                    return fail("non-finite parameter".into());
                }
                if *nu < 0.0 || *d < 0.0 {
                    return fail(format!("nu = {nu} and d = {d} must be >= 0"));
                }
                if self.derivative(domain.hi) < 0.0 {
                    return fail(format!(
                        "cost decreases at the upper bound (nu - 2 d u = {})",
                        self.derivative(domain.hi)
                    ));
                }
            }
            Self::LogConcave { a, gamma } => {
                if !a.is_finite() || !gamma.is_finite() {
                    return fail("non-finite parameter".into());
                }
                if *a < 0.0 || *gamma <= 0.0 {
                    return fail(format!("need a >= 0 and gamma > 0, got a = {a}, gamma = {gamma}"));
                }
            }
            Self::PiecewiseLinearConcave { breakpoints, values } => {
                if breakpoints.len() != values.len() || breakpoints.len() < 2 {
                    return fail("need at least two breakpoints, one value per breakpoint".into());
                }
                if breakpoints.iter().chain(values).any(|v| !v.is_finite()) {
                    return fail("non-finite breakpoint or value".into());
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return fail("breakpoints must be strictly ascending".into());
                }
                if breakpoints[0] != domain.lo || breakpoints[breakpoints.len() - 1] != domain.hi {
                    return fail(format!(
                        "breakpoints must span the strategy interval [{}, {}]",
                        domain.lo, domain.hi
                    ));
                }
                let slopes = self.pwl_slopes().unwrap_or_default();
                if slopes.iter().any(|s| *s < 0.0) {
                    return fail("segment slopes must be nonnegative".into());
                }
                if slopes.windows(2).any(|s| s[1] > s[0] + 1e-12 * s[0].abs().max(1.0)) {
                    return fail("segment slopes must be nonincreasing".into());
                }
            }
        }
        Ok(())
    }
}

/// Index `k` of the segment `[b_k, b_{k+1}]` used to evaluate at `t`.
fn pwl_segment(breakpoints: &[f64], t: f64) -> usize {
    let last = breakpoints.len() - 2;
    breakpoints.partition_point(|b| *b <= t).saturating_sub(1).min(last)
}

/// A point of the strategy box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyProfile(pub Vec<f64>);

impl StrategyProfile {
    pub fn new(x: Vec<f64>) -> Self {
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl From<Vec<f64>> for StrategyProfile {
    fn from(x: Vec<f64>) -> Self {
        Self(x)
    }
}

impl std::ops::Index<usize> for StrategyProfile {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The complete oligopoly model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct Instance {
    alpha: f64,
    beta: f64,
    n_concave: usize,
    bounds: Vec<Interval>,
    costs: Vec<CostFunction>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    #[serde(rename = "N")]
    firms: usize,
    n: usize,
    alpha: f64,
    beta: f64,
    bounds: Vec<Interval>,
    costs: Vec<CostFunction>,
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;

    fn try_from(r: InstanceRepr) -> Result<Self> {
        if r.bounds.len() != r.firms || r.costs.len() != r.firms {
            return Err(Error::InvalidInstance(format!(
                "N = {} but {} bounds and {} costs given",
                r.firms,
                r.bounds.len(),
                r.costs.len()
            )));
        }
        Instance::new(r.alpha, r.beta, r.n, r.bounds, r.costs)
    }
}

impl From<Instance> for InstanceRepr {
    fn from(inst: Instance) -> Self {
        InstanceRepr {
            firms: inst.bounds.len(),
            n: inst.n_concave,
            alpha: inst.alpha,
            beta: inst.beta,
            bounds: inst.bounds,
            costs: inst.costs,
        }
    }
}

impl Instance {
    pub fn new(
        alpha: f64,
        beta: f64,
        n_concave: usize,
        bounds: Vec<Interval>,
        costs: Vec<CostFunction>,
    ) -> Result<Self> {
        let firms = bounds.len();
        if firms == 0 {
            return Err(Error::InvalidInstance("at least one firm is required".into()));
        }
        if costs.len() != firms {
            return Err(Error::DimensionMismatch {
                expected: firms,
                got: costs.len(),
            });
        }
        if n_concave > firms {
            return Err(Error::InvalidInstance(format!("n = {n_concave} exceeds N = {firms}")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidInstance(format!("alpha = {alpha} must be > 0")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidInstance(format!("beta = {beta} must be > 0")));
        }
        for (i, b) in bounds.iter().enumerate() {
            if !(b.lo.is_finite() && b.hi.is_finite() && 0.0 <= b.lo && b.lo <= b.hi) {
                return Err(Error::InvalidInstance(format!(
                    "firm {i}: bounds [{}, {}] violate 0 <= l <= u",
                    b.lo, b.hi
                )));
            }
        }
        for (i, (cost, b)) in costs.iter().zip(&bounds).enumerate() {
            if i >= n_concave && !cost.is_affine() {
                return Err(Error::InvalidCost {
                    firm: i,
                    reason: format!("firms {n_concave}.. must have affine costs"),
                });
            }
            cost.validate(i, *b)?;
        }
        Ok(Self {
            alpha,
            beta,
            n_concave,
            bounds,
            costs,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInstance(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of firms `N`.
    pub fn firms(&self) -> usize {
        self.bounds.len()
    }

    /// Number of leading concave-cost firms `n`.
    pub fn n_concave(&self) -> usize {
        self.n_concave
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn costs(&self) -> &[CostFunction] {
        &self.costs
    }

    pub fn cost(&self, i: usize) -> &CostFunction {
        &self.costs[i]
    }

    /// `alpha * sum(u)`, an upper bound on the magnitude of the bifunction;
    /// tolerances are expressed relative to it.
    pub fn scale(&self) -> f64 {
        self.alpha * self.bounds.iter().map(|b| b.hi).sum::<f64>()
    }

    /// Total cost `h(x) = sum_i h_i(x_i)`.
    pub fn total_cost(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(h, xi)| h.value(*xi)).sum()
    }

    pub fn check_feasible(&self, x: &StrategyProfile) -> Result<()> {
        check_in_bounds(&self.bounds, x.as_slice())
    }

    /// Profit of firm `i` (zero-based) at `x`.
    pub fn profit(&self, x: &StrategyProfile, i: usize) -> Result<f64> {
        if i >= self.firms() {
            return Err(Error::IndexOutOfRange {
                index: i,
                firms: self.firms(),
            });
        }
        self.check_feasible(x)?;
        let price = self.alpha - self.beta * x.total();
        Ok(price * x[i] - self.costs[i].value(x[i]))
    }

    /// The equilibrium bifunction
    /// `<B~ x - a, y - x> + y'By - x'Bx + h(y) - h(x)`.
    pub fn phi(&self, x: &StrategyProfile, y: &StrategyProfile) -> Result<f64> {
        self.check_feasible(x)?;
        self.check_feasible(y)?;
        let (x, y) = (x.as_slice(), y.as_slice());
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|b| b * b).sum();
        // (B~ x)_i = beta * (sx - x_i)
        let interaction = self.beta * (sx * (sy - sx) - (xy - xx)) - self.alpha * (sy - sx);
        Ok(interaction + self.beta * (yy - xx) + self.total_cost(y) - self.total_cost(x))
    }

    /// Sufficient condition for existence: `h_i'' >= -2 beta` on every
    /// strategy interval.
    pub fn existence_check(&self) -> ExistenceReport {
        let firms: Vec<FirmExistence> = self
            .costs
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .map(|(i, (cost, b))| {
                let (min_curvature, kinks) = match cost {
                    CostFunction::Affine { .. } => (0.0, 0),
                    CostFunction::ConcaveQuadratic { d, .. } => (-2.0 * d, 0),
                    CostFunction::LogConcave { gamma, .. } => {
                        let r = 1.0 + gamma * b.lo;
                        (-(gamma * gamma) / (r * r), 0)
                    }
                    CostFunction::PiecewiseLinearConcave { breakpoints, .. } => (0.0, breakpoints.len() - 2),
                };
                let holds = match cost {
                    CostFunction::ConcaveQuadratic { d, .. } => *d <= self.beta,
                    CostFunction::LogConcave { gamma, .. } => {
                        let r = 1.0 + gamma * b.lo;
                        gamma * gamma <= 2.0 * self.beta * r * r
                    }
                    _ => true,
                };
                FirmExistence {
                    firm: i,
                    holds,
                    min_curvature,
                    kinks,
                }
            })
            .collect();
        ExistenceReport {
            holds: firms.iter().all(|f| f.holds),
            firms,
        }
    }
}

pub(crate) fn check_in_bounds(bounds: &[Interval], x: &[f64]) -> Result<()> {
    if x.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: x.len(),
        });
    }
    for (i, (b, xi)) in bounds.iter().zip(x).enumerate() {
        if !b.contains(*xi) {
            return Err(Error::Infeasible {
                index: i,
                value: *xi,
                lo: b.lo,
                hi: b.hi,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirmExistence {
    pub firm: usize,
    pub holds: bool,
    /// Infimum of the second derivative over the strategy interval (0 for
    /// the affine and piecewise-linear families).
    pub min_curvature: f64,
    /// Interior kinks of a piecewise-linear cost; informational only.
    pub kinks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceReport {
    pub holds: bool,
    pub firms: Vec<FirmExistence>,
}

/// An `n`-dimensional subbox of the concave coordinates together with the
/// chord envelope of each concave cost on its edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcaveBox {
    edges: Vec<Interval>,
    envelopes: Vec<AffineFn>,
}

impl ConcaveBox {
    /// The full box `I^0 = D_0 x ... x D_{n-1}`.
    pub fn root(inst: &Instance) -> Self {
        let edges = inst.bounds[..inst.n_concave].to_vec();
        Self::from_edges(inst, edges).expect("root edges are the instance bounds")
    }

    pub fn from_edges(inst: &Instance, edges: Vec<Interval>) -> Result<Self> {
        if edges.len() != inst.n_concave {
            return Err(Error::DimensionMismatch {
                expected: inst.n_concave,
                got: edges.len(),
            });
        }
        for (j, (e, d)) in edges.iter().zip(&inst.bounds).enumerate() {
            if !(e.lo <= e.hi && d.contains_interval(e)) {
                return Err(Error::InvalidInstance(format!(
                    "edge {j} [{}, {}] is not a subinterval of [{}, {}]",
                    e.lo, e.hi, d.lo, d.hi
                )));
            }
        }
        let envelopes = edges
            .iter()
            .zip(&inst.costs)
            .map(|(e, h)| scalar::chord(h, e.lo, e.hi))
            .collect();
        Ok(Self { edges, envelopes })
    }

    /// Copy of `self` with edge `j` replaced; only that envelope is rebuilt.
    pub fn with_edge(&self, inst: &Instance, j: usize, edge: Interval) -> Self {
        let mut out = self.clone();
        out.envelopes[j] = scalar::chord(&inst.costs[j], edge.lo, edge.hi);
        out.edges[j] = edge;
        out
    }

    pub fn edges(&self) -> &[Interval] {
        &self.edges
    }

    pub fn envelopes(&self) -> &[AffineFn] {
        &self.envelopes
    }

    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    pub fn volume(&self) -> f64 {
        self.edges.iter().map(Interval::width).product()
    }

    /// Whether the concave coordinates of `x` lie in the box.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.edges.iter().zip(x).all(|(e, xi)| e.contains(*xi))
    }

    /// The strategy box `D_I`: concave coordinates restricted to the edges,
    /// the remaining coordinates at their original bounds.
    pub fn strategy_bounds(&self, inst: &Instance) -> Vec<Interval> {
        self.edges
            .iter()
            .chain(&inst.bounds[self.edges.len()..])
            .copied()
            .collect()
    }

    /// Cost of coordinate `i` under this box's envelope model at `t`.
    pub(crate) fn model_cost(&self, inst: &Instance, i: usize, t: f64) -> f64 {
        match self.envelopes.get(i) {
            Some(env) => env.eval(t),
            None => inst.costs[i].value(t),
        }
    }

    /// Linear coefficient of coordinate `i` under the envelope model.
    pub(crate) fn model_slope(&self, inst: &Instance, i: usize) -> f64 {
        match self.envelopes.get(i) {
            Some(env) => env.slope,
            None => inst.costs[i].derivative(0.0),
        }
    }
}
