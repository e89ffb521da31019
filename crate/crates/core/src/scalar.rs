//! Exact one-dimensional machinery: chord envelopes, envelope defects and
//! global minimization of `beta * y^2 + c * y + h(y)` over an interval.
//!
//! Every cost family has a stationary equation that is at most quadratic, so
//! all minimizers and defect maxima come from a finite candidate set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CostFunction;

/// `t -> slope * t + intercept`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFn {
    pub slope: f64,
    pub intercept: f64,
}

impl AffineFn {
    pub fn eval(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

/// Convex envelope of a concave cost on `[lo, hi]`: the chord through the
/// endpoints. A degenerate interval yields the tangent at `lo`.
pub fn chord(cost: &CostFunction, lo: f64, hi: f64) -> AffineFn {
    let h_lo = cost.value(lo);
    let slope = if hi > lo {
        (cost.value(hi) - h_lo) / (hi - lo)
    } else {
        cost.derivative(lo)
    };
    AffineFn {
        slope,
        intercept: h_lo - slope * lo,
    }
}

/// `h(t) - chord(t)` anchored at `lo` to avoid cancellation in the intercept.
fn defect(cost: &CostFunction, lo: f64, h_lo: f64, slope: f64, t: f64) -> f64 {
    cost.value(t) - h_lo - slope * (t - lo)
}

/// Gap between the cost and its chord envelope on `[lo, hi]` at `t`.
pub fn envelope_defect_at(cost: &CostFunction, lo: f64, hi: f64, t: f64) -> Result<f64> {
    if !(lo <= t && t <= hi) {
        return Err(Error::OutsideInterval { value: t, lo, hi });
    }
    if hi <= lo {
        return Ok(0.0);
    }
    let env = chord(cost, lo, hi);
    Ok(defect(cost, lo, cost.value(lo), env.slope, t))
}

/// Maximal envelope defect over `[lo, hi]`.
pub fn rho_edge(cost: &CostFunction, lo: f64, hi: f64) -> f64 {
    rho_edge_with_argmax(cost, lo, hi).1
}

/// Maximal envelope defect over `[lo, hi]` and a point attaining it.
pub fn rho_edge_with_argmax(cost: &CostFunction, lo: f64, hi: f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, 0.0);
    }
    let slope = chord(cost, lo, hi).slope;
    let h_lo = cost.value(lo);
    let mut candidates: Vec<f64> = Vec::with_capacity(4);
    match cost {
        CostFunction::Affine { .. } => return (lo, 0.0),
        CostFunction::ConcaveQuadratic { nu, d } => {
            if *d > 0.0 {
                candidates.push((nu - slope) / (2.0 * d));
            }
        }
        CostFunction::LogConcave { a, gamma } => {
            // a + gamma / (1 + gamma t) = slope
            if slope > *a {
                candidates.push((gamma / (slope - a) - 1.0) / gamma);
            }
        }
        CostFunction::PiecewiseLinearConcave { breakpoints, .. } => {
            candidates.extend(breakpoints.iter().copied().filter(|b| lo < *b && *b < hi));
        }
    }
    candidates
        .into_iter()
        .map(|t| t.clamp(lo, hi))
        .map(|t| (t, defect(cost, lo, h_lo, slope, t)))
        .fold((lo, 0.0), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Real roots of `a y^2 + b y + c = 0`, computed without cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> [Option<f64>; 2] {
    if a == 0.0 {
        return [(b != 0.0).then(|| -c / b), None];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return [Some(0.0), None];
    }
    [Some(q / a), Some(c / q)]
}

/// Running minimum over candidate points; ties go to the smaller argument.
struct Best<F> {
    q: F,
    lo: f64,
    hi: f64,
    arg: f64,
    value: f64,
}

impl<F: Fn(f64) -> f64> Best<F> {
    fn consider(&mut self, y: f64) {
        if !(self.lo <= y && y <= self.hi) {
            return;
        }
        let v = (self.q)(y);
        if v < self.value || (v == self.value && y < self.arg) {
            self.arg = y;
            self.value = v;
        }
    }
}

/// Global minimum of `beta * y^2 + c * y + h(y)` on `[lo, hi]`, returned as
/// `(argmin, value)`. Ties go to the smaller argument.
pub fn minimize_univariate(beta: f64, c: f64, cost: &CostFunction, lo: f64, hi: f64) -> (f64, f64) {
    let q = |y: f64| beta * y * y + c * y + cost.value(y);
    if hi <= lo {
        return (lo, q(lo));
    }
    let mut best = Best {
        q,
        lo,
        hi,
        arg: lo,
        value: f64::INFINITY,
    };
    best.consider(lo);
    best.consider(hi);
    match cost {
        CostFunction::Affine { mu, .. } => best.consider(-(c + mu) / (2.0 * beta)),
        CostFunction::ConcaveQuadratic { nu, d } => {
            // beta == d leaves an affine objective, minimized at an endpoint
            if beta != *d {
                best.consider(-(c + nu) / (2.0 * (beta - d)));
            }
        }
        CostFunction::LogConcave { a, gamma } => {
            let ca = c + a;
            for y in quadratic_roots(2.0 * beta * gamma, 2.0 * beta + ca * gamma, ca + gamma)
                .into_iter()
                .flatten()
            {
                best.consider(y);
            }
        }
        CostFunction::PiecewiseLinearConcave { breakpoints, values } => {
            for (b, v) in breakpoints.windows(2).zip(values.windows(2)) {
                let slope = (v[1] - v[0]) / (b[1] - b[0]);
                let vertex = -(c + slope) / (2.0 * beta);
                if b[0] <= vertex && vertex <= b[1] {
                    best.consider(vertex);
                }
            }
            for b in breakpoints {
                best.consider(*b);
            }
        }
    }
    (best.arg, best.value)
}
