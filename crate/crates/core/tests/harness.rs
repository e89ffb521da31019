mod common;

use common::*;
use cournot::gap;
use cournot::harness::{self, BenchConfig, CostFamily, GenSpec};
use cournot::model::{CostFunction, Instance, Interval};
use cournot::qp::BoxQp;
use cournot::solvers::{solve_global, Algorithm, SolveOptions};
use cournot::StrategyProfile;

fn affine_qp(inst: &Instance) -> StrategyProfile {
    let c = inst.costs().iter().map(|h| h.derivative(0.0) - inst.alpha()).collect();
    BoxQp::new(inst.beta(), c, inst.bounds().to_vec())
        .unwrap()
        .solve()
        .unwrap()
}

#[test]
fn oracle_agrees_with_qp_on_affine_instances() {
    for seed in 0..5 {
        let inst = harness::generate(&GenSpec::new(2, 0, seed)).unwrap();
        let k = 301;
        let r = harness::oracle_equilibrium(&inst, k).unwrap();
        let x = affine_qp(&inst);
        for (j, b) in inst.bounds().iter().enumerate() {
            assert!((r.point[j] - x[j]).abs() <= b.width() / (k - 1) as f64);
        }
    }
}

#[test]
fn oracle_improvement_shrinks_with_the_grid() {
    let inst = Instance::new(
        10.0,
        1.0,
        0,
        vec![Interval::new(0.0, 10.0)],
        vec![CostFunction::Affine { mu: 2.0, xi: 0.0 }],
    )
    .unwrap();
    let coarse = harness::oracle_equilibrium(&inst, 8).unwrap();
    let fine = harness::oracle_equilibrium(&inst, 98).unwrap();
    assert!(fine.max_improvement < coarse.max_improvement);
    assert!((fine.point[0] - 4.0).abs() < 0.1);
}

#[test]
fn global_point_is_no_worse_than_the_oracle() {
    for seed in 0..4 {
        let inst = cquad_instance(2, seed);
        let eps = 1e-4 * inst.scale();
        let r = solve_global(&inst, &SolveOptions::new(eps));
        let oracle = harness::oracle_equilibrium(&inst, 300).unwrap();
        assert!(harness::max_improvement(&inst, r.point.as_slice()) <= oracle.max_improvement + eps);
    }
}

#[test]
fn best_response_reaches_the_affine_equilibrium() {
    for seed in 0..5 {
        let inst = harness::generate(&GenSpec::new(6, 0, seed)).unwrap();
        let x0 = StrategyProfile::new(vec![0.0; 6]);
        let r = harness::best_response_iteration(&inst, &x0, 100_000).unwrap();
        assert!(r.converged);
        let x = affine_qp(&inst);
        for j in 0..6 {
            assert!((r.point[j] - x[j]).abs() <= 1e-6, "{} vs {}", r.point[j], x[j]);
        }
    }
}

#[test]
fn best_response_reports_without_failing() {
    let inst = hard_log_instance(5, 5, 1);
    let x0 = StrategyProfile::new(inst.bounds().iter().map(|b| b.hi).collect());
    let r = harness::best_response_iteration(&inst, &x0, 3).unwrap();
    assert!(r.sweeps <= 3);
    assert!(r.gap.is_finite());
    assert_eq!(r.gap, gap::gap(&inst, &r.point).unwrap().value);
    assert!(harness::best_response_iteration(&inst, &StrategyProfile::new(vec![-1.0; 5]), 3).is_err());
}

#[test]
fn all_affine_cells_take_one_iteration() {
    for algorithm in [Algorithm::Global, Algorithm::Local] {
        let result = harness::bench(&BenchConfig::new(vec![(5, 0), (20, 0)], algorithm));
        for row in &result.rows {
            assert_eq!(row.eps_equilibria_found, 10);
            assert_eq!(row.avg_iterations, 1.0);
        }
    }
}

#[test]
fn bench_is_deterministic_apart_from_time() {
    let mut cfg = BenchConfig::new(vec![(5, 5), (4, 2)], Algorithm::Global);
    cfg.family = CostFamily::Cquad;
    cfg.eps_rel = 1e-5;
    cfg.threads = Some(2);
    let strip = |r: harness::BenchResult| {
        r.runs
            .into_iter()
            .map(|mut run| {
                run.time_s = 0.0;
                serde_json::to_string(&run).unwrap()
            })
            .collect::<Vec<_>>()
    };
    let a = harness::bench(&cfg);
    let b = harness::bench(&cfg);
    let rows = |r: &harness::BenchResult| {
        r.rows
            .iter()
            .map(|row| (row.firms, row.n, row.avg_iterations, row.eps_equilibria_found))
            .collect::<Vec<_>>()
    };
    assert_eq!(rows(&a), rows(&b));
    assert_eq!(strip(a), strip(b));
}

#[test]
fn bench_records_bad_cells() {
    let result = harness::bench(&BenchConfig::new(vec![(2, 3), (3, 0)], Algorithm::Global));
    assert_eq!(result.rows[0].failures, 10);
    assert_eq!(result.rows[0].eps_equilibria_found, 0);
    assert!(result.runs[0].error.is_some());
    assert_eq!(result.rows[1].eps_equilibria_found, 10);
}

#[test]
fn generated_quadratic_costs_are_increasing() {
    for seed in 0..50 {
        let inst = harness::generate(&GenSpec::new(4, 4, seed).with_family(CostFamily::Cquad)).unwrap();
        for (j, b) in inst.bounds().iter().enumerate() {
            assert!(inst.cost(j).derivative(b.hi) > 0.0);
        }
    }
}
