//! Gap functions used as stopping and pruning criteria.
//!
//! For firm `i` let `q_i(y) = beta*y^2 + (beta*sigma_i(x) - alpha)*y + h_i(y)`,
//! where `sigma_i(x)` is the output of the other firms. `q_i(y)` is minus the
//! profit firm `i` earns by switching to `y`, so
//!
//! ```text
//! g(x) = sum_i [ q_i(x_i) - min_{y in D_i} q_i(y) ]
//! ```
//!
//! is the total unilateral improvement available at `x`. Rearranged, it is
//! `-sum_i min q_i + beta*(sum x)^2 - alpha*sum x + h(x)`, i.e. `-min_y Phi(x, y)`.
//! Writing it as a sum of per-firm improvements keeps every term nonnegative
//! in floating point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_in_bounds, ConcaveBox, CostFunction, Instance, Interval, StrategyProfile};
use crate::scalar::minimize_univariate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapValue {
    pub value: f64,
    /// Best response `y_i*` of each firm.
    pub per_firm_argmins: Vec<f64>,
    /// Profit improvement `q_i(x_i) - q_i(y_i*)` of each firm.
    pub improvements: Vec<f64>,
}

impl GapValue {
    pub fn max_improvement(&self) -> f64 {
        self.improvements.iter().copied().fold(0.0, f64::max)
    }
}

/// `g(x) = -min_{y in D} Phi(x, y)`.
pub fn gap(inst: &Instance, x: &StrategyProfile) -> Result<GapValue> {
    inst.check_feasible(x)?;
    Ok(gap_over(inst, inst.bounds(), x.as_slice()))
}

/// Gap of the model whose strategy sets are shrunk to `bounds`, evaluated at
/// a point of that box.
pub fn gap_restricted(inst: &Instance, bounds: &[Interval], x: &StrategyProfile) -> Result<GapValue> {
    check_in_bounds(inst.bounds(), x.as_slice())?;
    check_subbox(inst, bounds)?;
    check_in_bounds(bounds, x.as_slice())?;
    Ok(gap_over(inst, bounds, x.as_slice()))
}

pub fn is_eps_equilibrium(inst: &Instance, x: &StrategyProfile, eps: f64) -> Result<bool> {
    Ok(gap(inst, x)?.value <= eps)
}

fn check_subbox(inst: &Instance, bounds: &[Interval]) -> Result<()> {
    if bounds.len() != inst.firms() {
        return Err(Error::DimensionMismatch {
            expected: inst.firms(),
            got: bounds.len(),
        });
    }
    for (j, (b, d)) in bounds.iter().zip(inst.bounds()).enumerate() {
        if !(b.lo <= b.hi && d.contains_interval(b)) {
            return Err(Error::InvalidInstance(format!(
                "subbox edge {j} [{}, {}] is not inside [{}, {}]",
                b.lo, b.hi, d.lo, d.hi
            )));
        }
    }
    Ok(())
}

pub(crate) fn gap_over(inst: &Instance, bounds: &[Interval], x: &[f64]) -> GapValue {
    let (alpha, beta) = (inst.alpha(), inst.beta());
    let total: f64 = x.iter().sum();
    let mut argmins = Vec::with_capacity(x.len());
    let mut improvements = Vec::with_capacity(x.len());
    for ((xi, h), b) in x.iter().zip(inst.costs()).zip(bounds) {
        let c = beta * (total - xi) - alpha;
        let (y, best) = minimize_univariate(beta, c, h, b.lo, b.hi);
        let current = beta * xi * xi + c * xi + h.value(*xi);
        argmins.push(y);
        improvements.push(current - best);
    }
    GapValue {
        value: improvements.iter().sum(),
        per_firm_argmins: argmins,
        improvements,
    }
}

/// Gap of the piecewise-linear model built from the chord envelopes of a
/// partition: the maximum over leaves `L` of `-min_{y in D_L} Phi_bar(x, y)`,
/// where `Phi_bar` charges `y` the envelope cost of `L` and `x` the envelope
/// cost of the first leaf containing it.
pub fn gap_pwl(inst: &Instance, partition: &[ConcaveBox], x: &StrategyProfile) -> Result<f64> {
    if partition.is_empty() {
        return Err(Error::EmptyPartition);
    }
    inst.check_feasible(x)?;
    let own = partition
        .iter()
        .find(|leaf| leaf.contains(x.as_slice()))
        .ok_or(Error::NotCovered)?;
    Ok(PwlGap::new(inst, own, x.as_slice()).max_over(partition.iter(), f64::INFINITY))
}

/// Per-point data for evaluating the piecewise-model gap leaf by leaf.
pub(crate) struct PwlGap<'a> {
    inst: &'a Instance,
    linear: Vec<f64>,
    /// `sum_i q_bar_i(x_i)` plus the affine-firm best responses, which do not
    /// depend on the leaf.
    base: f64,
}

impl<'a> PwlGap<'a> {
    pub(crate) fn new(inst: &'a Instance, own: &ConcaveBox, x: &[f64]) -> Self {
        let (alpha, beta) = (inst.alpha(), inst.beta());
        let total: f64 = x.iter().sum();
        let linear: Vec<f64> = x.iter().map(|xi| beta * (total - xi) - alpha).collect();
        let mut base = 0.0;
        for (i, (xi, c)) in x.iter().zip(&linear).enumerate() {
            base += beta * xi * xi + c * xi + own.model_cost(inst, i, *xi);
        }
        for (i, c) in linear.iter().enumerate().skip(inst.n_concave()) {
            let b = inst.bounds()[i];
            base -= minimize_univariate(beta, *c, inst.cost(i), b.lo, b.hi).1;
        }
        Self { inst, linear, base }
    }

    /// Gap contribution of one leaf.
    pub(crate) fn leaf_value(&self, leaf: &ConcaveBox) -> f64 {
        let beta = self.inst.beta();
        let mut v = self.base;
        for ((edge, env), c) in leaf.edges().iter().zip(leaf.envelopes()).zip(&self.linear) {
            let affine = CostFunction::Affine {
                mu: env.slope,
                xi: env.intercept,
            };
            v -= minimize_univariate(beta, *c, &affine, edge.lo, edge.hi).1;
        }
        v
    }

    /// Maximum over `leaves`, returning early once it exceeds `stop_above`.
    pub(crate) fn max_over<'b>(&self, leaves: impl Iterator<Item = &'b ConcaveBox>, stop_above: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for leaf in leaves {
            best = best.max(self.leaf_value(leaf));
            if best > stop_above {
                break;
            }
        }
        best
    }
}

/// Which strategy set the inner minimization of the deletion bound ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum BoundRegion {
    /// The whole strategy box `D`; tends to `g(x)` as the subbox shrinks to `{x}`.
    #[default]
    Strategy,
    /// The subbox itself; valid but never positive on small boxes.
    Subbox,
}

/// Lower bound on `g` over the subbox `[l, u]`:
///
/// ```text
/// -sum_i min_y { beta*y^2 + (beta*sigma_i(u) - alpha)*y + h_i(y) } + beta*(sum l)^2 - alpha*sum u + h(l)
/// ```
///
/// Each term bounds the matching term of `g(x)` from below for every
/// `l <= x <= u`, using `y >= 0` and monotone costs. A positive value
/// certifies that the subbox holds no equilibrium.
pub fn deletion_bound(inst: &Instance, subbox: &[Interval]) -> Result<f64> {
    deletion_bound_over(inst, subbox, BoundRegion::default())
}

pub fn deletion_bound_over(inst: &Instance, subbox: &[Interval], region: BoundRegion) -> Result<f64> {
    check_subbox(inst, subbox)?;
    Ok(deletion_bound_unchecked(inst, subbox, region))
}

pub(crate) fn deletion_bound_unchecked(inst: &Instance, subbox: &[Interval], region: BoundRegion) -> f64 {
    let (alpha, beta) = (inst.alpha(), inst.beta());
    let upper: f64 = subbox.iter().map(|b| b.hi).sum();
    let lower: f64 = subbox.iter().map(|b| b.lo).sum();
    let mut value = beta * lower * lower;
    for (i, (b, h)) in subbox.iter().zip(inst.costs()).enumerate() {
        let c = beta * (upper - b.hi) - alpha;
        let range = match region {
            BoundRegion::Strategy => inst.bounds()[i],
            BoundRegion::Subbox => *b,
        };
        let (_, best) = minimize_univariate(beta, c, h, range.lo, range.hi);
        value += -best - alpha * b.hi + h.value(b.lo);
    }
    value
}
