//! Seeded instance generation, brute-force oracles and the benchmark driver.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). A spec's seed selects the
//! key; stream 0 draws `alpha` then `beta`, and firm `i` draws from stream
//! `i + 1` (upper bound first, then its cost parameters). Adding firms
//! therefore never perturbs the draws of earlier firms.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gap;
use crate::model::{CostFunction, Instance, Interval, StrategyProfile};
use crate::scalar::minimize_univariate;
use crate::solvers::{self, Algorithm, SolveLimits, SolveOptions, SolveStatus};

/// Cost family of the concave firms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostFamily {
    /// `a t + ln(1 + gamma t)`
    #[default]
    Log,
    /// `nu t - d t^2` with `d` a fraction of `beta`, so best responses are
    /// convex and an equilibrium exists.
    Cquad,
}

impl std::str::FromStr for CostFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "log" => Ok(Self::Log),
            "cquad" => Ok(Self::Cquad),
            other => Err(format!("unknown cost family {other:?} (expected log or cquad)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub firms: usize,
    pub n_concave: usize,
    pub seed: u64,
    pub family: CostFamily,
    pub alpha: Interval,
    pub beta: Interval,
    /// Slopes of the affine firms.
    pub mu: Interval,
    /// Linear coefficient `a` of the log family.
    pub a: Interval,
    pub gamma: Interval,
    pub upper: Interval,
    /// `d / beta` for the quadratic family.
    pub d_over_beta: Interval,
    /// `(nu - 2 d u) / alpha` for the quadratic family: the marginal cost at
    /// the upper bound as a fraction of the demand intercept.
    pub nu_margin: Interval,
}

impl GenSpec {
    pub fn new(firms: usize, n_concave: usize, seed: u64) -> Self {
        Self {
            firms,
            n_concave,
            seed,
            family: CostFamily::Log,
            alpha: Interval::new(20.0, 30.0),
            beta: Interval::new(0.001, 0.005),
            mu: Interval::new(10.0, 20.0),
            a: Interval::new(2.0, 7.0),
            gamma: Interval::new(7.0, 15.0),
            upper: Interval::new(100.0, 500.0),
            d_over_beta: Interval::new(0.1, 0.9),
            nu_margin: Interval::new(0.8, 1.0),
        }
    }

    pub fn with_family(mut self, family: CostFamily) -> Self {
        self.family = family;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.firms == 0 || self.n_concave > self.firms {
            return Err(Error::InvalidSpec(format!(
                "need 0 <= n <= N and N >= 1, got N = {}, n = {}",
                self.firms, self.n_concave
            )));
        }
        let ranges = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("mu", self.mu),
            ("a", self.a),
            ("gamma", self.gamma),
            ("upper", self.upper),
            ("d_over_beta", self.d_over_beta),
            ("nu_margin", self.nu_margin),
        ];
        for (name, r) in ranges {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(Error::InvalidSpec(format!("range {name} = [{}, {}]", r.lo, r.hi)));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, r: Interval) -> f64 {
    if r.lo == r.hi {
        r.lo
    } else {
        rng.gen_range(r.lo..=r.hi)
    }
}

/// Deterministic random instance for `spec`.
pub fn generate(spec: &GenSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let alpha = draw(&mut rng, spec.alpha);
    let beta = draw(&mut rng, spec.beta);
    let mut bounds = Vec::with_capacity(spec.firms);
    let mut costs = Vec::with_capacity(spec.firms);
    for i in 0..spec.firms {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let u = draw(&mut rng, spec.upper);
        let cost = if i >= spec.n_concave {
            CostFunction::Affine {
                mu: draw(&mut rng, spec.mu),
                xi: 0.0,
            }
        } else {
            match spec.family {
                CostFamily::Log => CostFunction::LogConcave {
                    a: draw(&mut rng, spec.a),
                    gamma: draw(&mut rng, spec.gamma),
                },
                CostFamily::Cquad => {
                    let d = beta * draw(&mut rng, spec.d_over_beta);
                    let nu = 2.0 * d * u + alpha * draw(&mut rng, spec.nu_margin);
                    CostFunction::ConcaveQuadratic { nu, d }
                }
            }
        };
        bounds.push(Interval::new(0.0, u));
        costs.push(cost);
    }
    Instance::new(alpha, beta, spec.n_concave, bounds, costs)
}

/// Largest unilateral profit improvement available to any firm at `x`.
pub fn max_improvement(inst: &Instance, x: &[f64]) -> f64 {
    let (alpha, beta) = (inst.alpha(), inst.beta());
    let total: f64 = x.iter().sum();
    x.iter()
        .zip(inst.costs())
        .zip(inst.bounds())
        .map(|((xi, h), b)| {
            let c = beta * (total - xi) - alpha;
            let current = beta * xi * xi + c * xi + h.value(*xi);
            current - minimize_univariate(beta, c, h, b.lo, b.hi).1
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub point: StrategyProfile,
    pub max_improvement: f64,
    pub grid_points: u64,
}

const ORACLE_MAX_FIRMS: usize = 4;
const ORACLE_MAX_POINTS: u64 = 400_000_000;

fn grid_value(b: &Interval, k: usize, i: usize) -> f64 {
    if k == 1 {
        b.lo
    } else {
        b.lo + b.width() * i as f64 / (k - 1) as f64
    }
}

/// Exhaustive search over a `k`-per-axis grid of `D` for the point with the
/// smallest maximal best-response improvement. Ties keep the first point in
/// lexicographic grid order.
pub fn oracle_equilibrium(inst: &Instance, k: usize) -> Result<OracleResult> {
    let n = inst.firms();
    if n > ORACLE_MAX_FIRMS {
        return Err(Error::OracleBudget(format!(
            "{n} firms exceeds the oracle limit of {ORACLE_MAX_FIRMS}"
        )));
    }
    if k == 0 {
        return Err(Error::OracleBudget("grid needs at least one point per axis".into()));
    }
    let total = (k as u64)
        .checked_pow(n as u32)
        .filter(|t| *t <= ORACLE_MAX_POINTS)
        .ok_or_else(|| Error::OracleBudget(format!("{k}^{n} grid points")))?;
    let axes: Vec<Vec<f64>> = inst
        .bounds()
        .iter()
        .map(|b| (0..k).map(|i| grid_value(b, k, i)).collect())
        .collect();
    let inner = total / k as u64;
    let (index, value) = (0..k)
        .into_par_iter()
        .map(|first| {
            let mut x = vec![0.0; n];
            let mut best = (u64::MAX, f64::INFINITY);
            for rest in 0..inner {
                let linear = first as u64 * inner + rest;
                let mut r = linear;
                for j in (0..n).rev() {
                    x[j] = axes[j][(r % k as u64) as usize];
                    r /= k as u64;
                }
                let v = max_improvement(inst, &x);
                if v < best.1 {
                    best = (linear, v);
                }
            }
            best
        })
        .reduce(
            || (u64::MAX, f64::INFINITY),
            |a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a },
        );
    let mut r = index;
    let mut point = vec![0.0; n];
    for j in (0..n).rev() {
        point[j] = axes[j][(r % k as u64) as usize];
        r /= k as u64;
    }
    Ok(OracleResult {
        point: StrategyProfile::new(point),
        max_improvement: value,
        grid_points: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponseResult {
    pub point: StrategyProfile,
    pub converged: bool,
    pub sweeps: usize,
    pub gap: f64,
}

/// Gauss-Seidel sweeps of exact best responses. Stops once a sweep moves no
/// coordinate by more than `1e-10 * scale`; concave costs may cycle, which is
/// reported through `converged = false`.
pub fn best_response_iteration(inst: &Instance, x0: &StrategyProfile, max_sweeps: usize) -> Result<BestResponseResult> {
    inst.check_feasible(x0)?;
    let (alpha, beta) = (inst.alpha(), inst.beta());
    let tol = 1e-10 * inst.scale();
    let mut x = x0.as_slice().to_vec();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut moved: f64 = 0.0;
        for i in 0..x.len() {
            let others: f64 = x.iter().sum::<f64>() - x[i];
            let b = inst.bounds()[i];
            let (y, _) = minimize_univariate(beta, beta * others - alpha, inst.cost(i), b.lo, b.hi);
            moved = moved.max((y - x[i]).abs());
            x[i] = y;
        }
        if moved <= tol {
            converged = true;
            break;
        }
    }
    let point = StrategyProfile::new(x);
    let gap = gap::gap(inst, &point)?.value;
    Ok(BestResponseResult {
        point,
        converged,
        sweeps,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// `(N, n)` cells.
    pub cells: Vec<(usize, usize)>,
    pub algorithm: Algorithm,
    /// Tolerance relative to each instance's scale `alpha * sum(u)`.
    pub eps_rel: f64,
    pub limits: SolveLimits,
    pub instances_per_cell: usize,
    pub base_seed: u64,
    pub family: CostFamily,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl BenchConfig {
    pub fn new(cells: Vec<(usize, usize)>, algorithm: Algorithm) -> Self {
        Self {
            cells,
            algorithm,
            eps_rel: 1e-4,
            limits: SolveLimits::default(),
            instances_per_cell: 10,
            base_seed: 0,
            family: CostFamily::Log,
            threads: None,
        }
    }
}

/// Parse `"5x5,50x5"` into `[(5, 5), (50, 5)]`.
pub fn parse_cells(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|cell| {
            let (big, small) = cell
                .split_once(['x', 'X'])
                .ok_or_else(|| Error::InvalidSpec(format!("cell {cell:?} is not NxN")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidSpec(format!("cell {cell:?}: {e}")))
            };
            Ok((parse(big)?, parse(small)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRun {
    #[serde(rename = "N")]
    pub firms: usize,
    pub n: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub eps: f64,
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    pub qp_solves: usize,
    pub time_s: f64,
    pub gap_value: f64,
    pub full_gap: f64,
    pub globally_certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    #[serde(rename = "N")]
    pub firms: usize,
    pub n: usize,
    pub algorithm: Algorithm,
    pub avg_time_s: f64,
    pub avg_iterations: f64,
    pub eps_equilibria_found: usize,
    #[serde(skip)]
    pub instances: usize,
    #[serde(skip)]
    pub globally_certified: usize,
    #[serde(skip)]
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Individual runs, ordered by cell then seed.
    pub runs: Vec<BenchRun>,
}

fn run_one(cfg: &BenchConfig, firms: usize, n: usize, seed: u64) -> BenchRun {
    let mut run = BenchRun {
        firms,
        n,
        seed,
        algorithm: cfg.algorithm,
        eps: f64::NAN,
        status: None,
        iterations: 0,
        qp_solves: 0,
        time_s: 0.0,
        gap_value: f64::NAN,
        full_gap: f64::NAN,
        globally_certified: false,
        error: None,
    };
    let inst = match generate(&GenSpec::new(firms, n, seed).with_family(cfg.family)) {
        Ok(inst) => inst,
        Err(e) => {
            run.error = Some(e.to_string());
            return run;
        }
    };
    let eps = cfg.eps_rel * inst.scale();
    let report = solvers::solve(&inst, cfg.algorithm, &SolveOptions::new(eps).with_limits(cfg.limits));
    run.eps = eps;
    run.status = Some(report.status);
    run.iterations = report.iterations;
    run.qp_solves = report.qp_solves;
    run.time_s = report.elapsed_s;
    run.gap_value = report.gap_value;
    run.full_gap = report.full_gap;
    run.globally_certified = report.globally_certified(eps);
    run
}

/// Run every cell of `cfg` and aggregate one row per cell. Failures are
/// recorded per run and never abort the batch.
pub fn bench(cfg: &BenchConfig) -> BenchResult {
    let jobs: Vec<(usize, usize, u64)> = cfg
        .cells
        .iter()
        .flat_map(|&(big, small)| (0..cfg.instances_per_cell as u64).map(move |s| (big, small, cfg.base_seed + s)))
        .collect();
    let work = || -> Vec<BenchRun> {
        jobs.par_iter()
            .map(|&(big, small, seed)| run_one(cfg, big, small, seed))
            .collect()
    };
    let runs = match cfg.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        },
        None => work(),
    };

    let rows = cfg
        .cells
        .iter()
        .enumerate()
        .map(|(c, &(big, small))| {
            let per = cfg.instances_per_cell;
            let mut cell: Vec<&BenchRun> = runs[c * per..(c + 1) * per].iter().collect();
            cell.sort_by_key(|r| r.seed);
            let ok: Vec<&&BenchRun> = cell.iter().filter(|r| r.status.is_some()).collect();
            let denom = ok.len().max(1) as f64;
            BenchRow {
                firms: big,
                n: small,
                algorithm: cfg.algorithm,
                avg_time_s: ok.iter().map(|r| r.time_s).sum::<f64>() / denom,
                avg_iterations: ok.iter().map(|r| r.iterations as f64).sum::<f64>() / denom,
                eps_equilibria_found: ok
                    .iter()
                    .filter(|r| r.status == Some(SolveStatus::EpsEquilibrium))
                    .count(),
                instances: cell.len(),
                globally_certified: ok.iter().filter(|r| r.globally_certified).count(),
                failures: cell.len() - ok.len(),
            }
        })
        .collect();
    BenchResult { rows, runs }
}

/// Write rows as CSV with header
/// `N,n,algorithm,avg_time_s,avg_iterations,eps_equilibria_found`.
pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// Wall-clock limit from seconds; a nonpositive value means none.
pub fn time_limit(seconds: Option<f64>) -> Option<Duration> {
    seconds.filter(|s| *s > 0.0).map(Duration::from_secs_f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec::new(6, 3, 42);
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_eq!(a.to_json(), generate(&spec).unwrap().to_json());
        assert_ne!(a, generate(&GenSpec::new(6, 3, 43)).unwrap());
    }

    #[test]
    fn adding_firms_keeps_earlier_draws() {
        let small = generate(&GenSpec::new(3, 2, 7)).unwrap();
        let large = generate(&GenSpec::new(8, 2, 7)).unwrap();
        assert_eq!(small.alpha(), large.alpha());
        assert_eq!(small.bounds(), &large.bounds()[..3]);
        assert_eq!(small.costs(), &large.costs()[..3]);
    }

    #[test]
    fn parameters_in_range() {
        for seed in 0..20 {
            let inst = generate(&GenSpec::new(5, 5, seed)).unwrap();
            assert!((20.0..=30.0).contains(&inst.alpha()));
            assert!((0.001..=0.005).contains(&inst.beta()));
            for (b, h) in inst.bounds().iter().zip(inst.costs()) {
                assert_eq!(b.lo, 0.0);
                assert!((100.0..=500.0).contains(&b.hi));
                let CostFunction::LogConcave { a, gamma } = h else {
                    panic!("expected log cost")
                };
                assert!((2.0..=7.0).contains(a) && (7.0..=15.0).contains(gamma));
            }
        }
        let inst = generate(&GenSpec::new(4, 0, 1)).unwrap();
        assert!(inst
            .costs()
            .iter()
            .all(|h| matches!(h, CostFunction::Affine { mu, xi } if (10.0..=20.0).contains(mu) && *xi == 0.0)));
    }

    #[test]
    fn quadratic_family_satisfies_existence() {
        for seed in 0..20 {
            let inst = generate(&GenSpec::new(3, 3, seed).with_family(CostFamily::Cquad)).unwrap();
            assert!(inst.existence_check().holds);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GenSpec::new(2, 3, 0)).is_err());
        assert!(generate(&GenSpec::new(0, 0, 0)).is_err());
        let mut s = GenSpec::new(2, 1, 0);
        s.alpha = Interval::new(3.0, 1.0);
        assert!(generate(&s).is_err());
    }

    #[test]
    fn monopoly_oracle() {
        let inst = Instance::new(
            10.0,
            1.0,
            0,
            vec![Interval::new(0.0, 10.0)],
            vec![CostFunction::Affine { mu: 2.0, xi: 0.0 }],
        )
        .unwrap();
        let r = oracle_equilibrium(&inst, 101).unwrap();
        assert_eq!(r.point.as_slice(), &[4.0]);
        assert_eq!(r.max_improvement, 0.0);
        let coarse = oracle_equilibrium(&inst, 4).unwrap();
        assert!((coarse.point[0] - 10.0 / 3.0).abs() < 1e-12);
        assert!(coarse.max_improvement > 0.0);
    }

    #[test]
    fn oracle_budget() {
        let inst = generate(&GenSpec::new(5, 0, 0)).unwrap();
        assert!(matches!(oracle_equilibrium(&inst, 3), Err(Error::OracleBudget(_))));
        let inst = generate(&GenSpec::new(3, 0, 0)).unwrap();
        assert!(matches!(oracle_equilibrium(&inst, 1000), Err(Error::OracleBudget(_))));
    }

    #[test]
    fn best_response_fixed_point() {
        let inst = generate(&GenSpec::new(4, 0, 3)).unwrap();
        let x0 = StrategyProfile::new(vec![0.0; 4]);
        let r = best_response_iteration(&inst, &x0, 10_000).unwrap();
        assert!(r.converged);
        let again = best_response_iteration(&inst, &r.point, 10).unwrap();
        assert!(again.converged);
        assert_eq!(again.sweeps, 1);
    }

    #[test]
    fn cells() {
        assert_eq!(parse_cells("5x5, 50x5,10X10").unwrap(), vec![(5, 5), (50, 5), (10, 10)]);
        assert!(parse_cells("5by5").is_err());
        assert!(parse_cells("ax5").is_err());
    }

    #[test]
    fn csv_header() {
        let rows = vec![BenchRow {
            firms: 5,
            n: 0,
            algorithm: Algorithm::Global,
            avg_time_s: 0.5,
            avg_iterations: 1.0,
            eps_equilibria_found: 10,
            instances: 10,
            globally_certified: 10,
            failures: 0,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "N,n,algorithm,avg_time_s,avg_iterations,eps_equilibria_found\n5,0,global,0.5,1.0,10\n"
        );
    }
}
