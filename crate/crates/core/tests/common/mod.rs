//! Independent brute-force oracles shared by the integration tests. None of
//! them call the closed-form routines they are used to check.
#![allow(dead_code)]

use cournot::harness::{self, CostFamily, GenSpec};
use cournot::model::{CostFunction, Instance, Interval, StrategyProfile};
use cournot::qp::BoxQp;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Projected gradient with step `1 / L`, `L = beta (N + 1)` the largest
/// Hessian eigenvalue, run until the iterate stops moving.
pub fn projected_gradient(p: &BoxQp) -> Vec<f64> {
    let n = p.c.len();
    let step = 1.0 / (p.beta * (n as f64 + 1.0));
    let mut x: Vec<f64> = p.bounds.iter().map(|b| b.lo).collect();
    for _ in 0..2_000_000 {
        let s: f64 = x.iter().sum();
        let mut moved: f64 = 0.0;
        for ((xi, c), b) in x.iter_mut().zip(&p.c).zip(&p.bounds) {
            let g = p.beta * (*xi + s) + c;
            let v = (*xi - step * g).clamp(b.lo, b.hi);
            moved = moved.max((v - *xi).abs());
            *xi = v;
        }
        if moved <= 1e-14 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            break;
        }
    }
    x
}

/// Minimum of `f` over `k + 1` equispaced points, refined by golden-section
/// search on the two cells around the best grid point.
pub fn grid_golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, k: usize) -> f64 {
    if hi <= lo {
        return f(lo);
    }
    let h = (hi - lo) / k as f64;
    let (mut best_i, mut best) = (0, f(lo));
    for i in 1..=k {
        let v = f(lo + h * i as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut a = (lo + h * (best_i as f64 - 1.0)).max(lo);
    let mut b = (lo + h * (best_i as f64 + 1.0)).min(hi);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        best = best.min(fc).min(fd);
    }
    best
}

/// Maximum of `f` over `k + 1` equispaced points.
pub fn grid_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, k: usize) -> f64 {
    (0..=k)
        .map(|i| f(lo + (hi - lo) * i as f64 / k as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Phi(x, y)` with the interaction matrices written out densely.
pub fn dense_phi(inst: &Instance, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let beta = inst.beta();
    // B = beta I, B~ = beta (11' - I), a = alpha 1
    let b_tilde = |i: usize, j: usize| if i == j { 0.0 } else { beta };
    let mut value = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| b_tilde(i, j) * x[j]).sum();
        value += (row - inst.alpha()) * (y[i] - x[i]);
        value += beta * (y[i] * y[i] - x[i] * x[i]);
        value += inst.cost(i).value(y[i]) - inst.cost(i).value(x[i]);
    }
    value
}

/// `-min_y Phi(x, y)` over a `k`-per-axis product grid, and a bound on how far
/// the grid minimum can sit above the true minimum.
pub fn brute_force_gap(inst: &Instance, x: &[f64], k: usize) -> (f64, f64) {
    let n = x.len();
    let beta = inst.beta();
    // Phi(x, .) is separable: tabulate Phi(x, x + (t - x_i) e_i) per axis
    let mut tables = Vec::with_capacity(n);
    let mut resolution = 0.0;
    for i in 0..n {
        let b = inst.bounds()[i];
        let mut y = x.to_vec();
        let row: Vec<f64> = (0..k)
            .map(|j| {
                y[i] = b.lo + b.width() * j as f64 / (k - 1) as f64;
                dense_phi(inst, x, &y)
            })
            .collect();
        tables.push(row);
        // Lipschitz bound of the i-th term on D_i
        let sigma: f64 = x.iter().sum::<f64>() - x[i];
        let slope = (beta * sigma - inst.alpha()).abs()
            + 2.0 * beta * b.lo.abs().max(b.hi.abs())
            + inst.cost(i).derivative(b.lo).abs();
        resolution += slope * b.width() / (k - 1) as f64 / 2.0;
    }
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    'outer: loop {
        let v: f64 = (0..n).map(|i| tables[i][idx[i]]).sum();
        best = best.min(v);
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < k {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    (-best, resolution)
}

pub fn random_point(rng: &mut ChaCha8Rng, inst: &Instance) -> StrategyProfile {
    StrategyProfile::new(
        inst.bounds()
            .iter()
            .map(|b| {
                if b.width() > 0.0 {
                    rng.gen_range(b.lo..=b.hi)
                } else {
                    b.lo
                }
            })
            .collect(),
    )
}

/// A concave increasing cost on `[lo, hi]` from any family.
pub fn random_cost(rng: &mut ChaCha8Rng, lo: f64, hi: f64, beta: f64) -> CostFunction {
    match rng.gen_range(0..4) {
        0 => CostFunction::Affine {
            mu: rng.gen_range(0.0..20.0),
            xi: rng.gen_range(-5.0..5.0),
        },
        1 => {
            let d = rng.gen_range(0.0..2.0 * beta);
            CostFunction::ConcaveQuadratic {
                nu: 2.0 * d * hi + rng.gen_range(0.0..25.0),
                d,
            }
        }
        2 => CostFunction::LogConcave {
            a: rng.gen_range(0.0..7.0),
            gamma: rng.gen_range(0.1..15.0),
        },
        _ => {
            let pieces = rng.gen_range(1..5);
            let mut inner: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(lo..hi)).collect();
            inner.sort_by(f64::total_cmp);
            inner.dedup();
            let mut breakpoints = vec![lo];
            breakpoints.extend(inner.into_iter().filter(|b| *b > lo && *b < hi));
            breakpoints.push(hi);
            let mut slope = rng.gen_range(5.0..25.0);
            let mut values = vec![rng.gen_range(0.0..3.0)];
            for w in breakpoints.windows(2) {
                let last = *values.last().unwrap();
                values.push(last + slope * (w[1] - w[0]));
                slope *= rng.gen_range(0.2..1.0);
            }
            CostFunction::PiecewiseLinearConcave { breakpoints, values }
        }
    }
}

/// Instance with `firms` firms and costs drawn from every family, concave
/// firms first.
pub fn random_mixed_instance(rng: &mut ChaCha8Rng, firms: usize) -> Instance {
    let alpha = rng.gen_range(2.0..30.0);
    let beta = 10f64.powf(rng.gen_range(-3.0..-1.0));
    let mut parts: Vec<(Interval, CostFunction)> = (0..firms)
        .map(|_| {
            let lo = if rng.gen_bool(0.3) {
                rng.gen_range(0.0..50.0)
            } else {
                0.0
            };
            let hi = lo + rng.gen_range(50.0..450.0);
            (Interval::new(lo, hi), random_cost(rng, lo, hi, beta))
        })
        .collect();
    parts.sort_by_key(|(_, h)| h.is_affine());
    let n = parts.iter().filter(|(_, h)| !h.is_affine()).count();
    let (bounds, costs) = parts.into_iter().unzip();
    Instance::new(alpha, beta, n, bounds, costs).expect("generated costs are valid")
}

pub fn cquad_instance(firms: usize, seed: u64) -> Instance {
    harness::generate(&GenSpec::new(firms, firms, seed).with_family(CostFamily::Cquad)).unwrap()
}

/// Log-cost instance with a low demand intercept, so equilibria are interior
/// and the global solver has to branch.
pub fn hard_log_instance(firms: usize, n: usize, seed: u64) -> Instance {
    let mut spec = GenSpec::new(firms, n, seed);
    spec.alpha = Interval::new(8.0, 12.0);
    harness::generate(&spec).unwrap()
}

/// `-min_{y in box} Phi(x, y)` with every one-variable minimum taken by
/// [`grid_golden_min`] on `k` cells. Grid minima sit above true minima, so
/// this never exceeds the true value beyond rounding.
pub fn golden_gap(inst: &Instance, bounds: &[Interval], x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let beta = inst.beta();
    let mut total = 0.0;
    for i in 0..n {
        // Phi(x, x + (t - x_i) e_i) = term(t) - term(x_i)
        let row: f64 = (0..n).filter(|j| *j != i).map(|j| beta * x[j]).sum();
        let h = inst.cost(i);
        let term = |t: f64| (row - inst.alpha()) * t + beta * t * t + h.value(t);
        total += grid_golden_min(term, bounds[i].lo, bounds[i].hi, k) - term(x[i]);
    }
    -total
}
