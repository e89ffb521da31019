//! The strongly convex box QP every affine-cost model reduces to:
//!
//! ```text
//! minimize (beta/2) * (sum_i x_i^2 + (sum_i x_i)^2) + c'x   subject to lo <= x <= hi
//! ```
//!
//! The Hessian `beta * (I + 11')` is never formed. Stationarity gives
//! `x_i = clip(-c_i/beta - s)` with `s = sum(x)`, so the whole problem is a
//! monotone scalar equation in the total output `s`.

use crate::error::{Error, Result};
use crate::model::{Interval, StrategyProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    pub beta: f64,
    pub c: Vec<f64>,
    pub bounds: Vec<Interval>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Root accepted once `|s - sum x(s)| <= root_tol * max(1, sum hi)`.
    pub root_tol: f64,
    pub max_bisections: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            root_tol: 1e-12,
            max_bisections: 200,
        }
    }
}

impl BoxQp {
    pub fn new(beta: f64, c: Vec<f64>, bounds: Vec<Interval>) -> Result<Self> {
        let p = Self { beta, c, bounds };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::NonFinite("beta must be finite and positive"));
        }
        if self.c.len() != self.bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: self.bounds.len(),
                got: self.c.len(),
            });
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear term"));
        }
        if self
            .bounds
            .iter()
            .any(|b| !(b.lo.is_finite() && b.hi.is_finite() && b.lo <= b.hi))
        {
            return Err(Error::NonFinite("bounds must be finite with lo <= hi"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().sum();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let lin: f64 = self.c.iter().zip(x).map(|(c, v)| c * v).sum();
        0.5 * self.beta * (sq + s * s) + lin
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s: f64 = x.iter().sum();
        self.c.iter().zip(x).map(|(c, v)| self.beta * (v + s) + c).collect()
    }

    /// `max_i |x_i - clip(x_i - grad_i)|`, zero exactly at the minimizer.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        self.gradient(x)
            .iter()
            .zip(x)
            .zip(&self.bounds)
            .map(|((g, v), b)| (v - b.clamp(v - g)).abs())
            .fold(0.0, f64::max)
    }

    fn response(&self, s: f64, out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for ((o, c), b) in out.iter_mut().zip(&self.c).zip(&self.bounds) {
            *o = b.clamp(-c / self.beta - s);
            total += *o;
        }
        total
    }

    /// The unique minimizer.
    pub fn solve(&self) -> Result<StrategyProfile> {
        self.solve_with(&QpOptions::default())
    }

    pub fn solve_with(&self, opts: &QpOptions) -> Result<StrategyProfile> {
        self.validate()?;
        let n = self.dim();
        let mut x = vec![0.0; n];
        let mut lo: f64 = self.bounds.iter().map(|b| b.lo).sum();
        let mut hi: f64 = self.bounds.iter().map(|b| b.hi).sum();
        let tol = opts.root_tol * hi.abs().max(1.0);

        // r(s) = s - sum x(s) is continuous, strictly increasing, r(lo) <= 0 <= r(hi)
        let mut s = lo;
        let mut r = s - self.response(s, &mut x);
        if r < -tol {
            s = hi;
            r = s - self.response(s, &mut x);
            for _ in 0..opts.max_bisections {
                if r.abs() <= tol {
                    break;
                }
                s = 0.5 * (lo + hi);
                if s <= lo || s >= hi {
                    break;
                }
                r = s - self.response(s, &mut x);
                if r < 0.0 {
                    lo = s;
                } else {
                    hi = s;
                }
            }
        }

        // r is affine between clip kinks: solve it exactly on the current active set
        let (mut fixed, mut free_sum, mut free) = (0.0, 0.0, 0usize);
        for (c, b) in self.c.iter().zip(&self.bounds) {
            let t = -c / self.beta;
            let v = t - s;
            if v <= b.lo {
                fixed += b.lo;
            } else if v >= b.hi {
                fixed += b.hi;
            } else {
                free_sum += t;
                free += 1;
            }
        }
        if free > 0 {
            let polished = (fixed + free_sum) / (1 + free) as f64;
            let mut y = vec![0.0; n];
            let r_pol = polished - self.response(polished, &mut y);
            if r_pol.abs() <= r.abs() {
                x = y;
            }
        }
        Ok(StrategyProfile::new(x))
    }
}

/// Convenience wrapper around [`BoxQp::solve`].
pub fn solve_box_qp(p: &BoxQp) -> Result<StrategyProfile> {
    p.solve()
}
