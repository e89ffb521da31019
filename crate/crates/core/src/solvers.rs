//! Search-check-branch solvers.
//!
//! Each leaf of a partition of the concave coordinates replaces the concave
//! costs by their chords on the leaf's edges. The resulting affine-cost model
//! restricted to the leaf is a strongly convex box QP ([`crate::qp`]). Leaf
//! solutions are checked with the gap function; leaves are refined by
//! bisecting, at its midpoint, the edge whose envelope defect at a witness
//! point is largest; leaves whose deletion bound is positive are discarded.
//!
//! * [`search_check`] scans a fixed partition for an approximate equilibrium
//!   of the piecewise-linear model.
//! * [`solve_global`] refines the leaf of largest envelope defect until the
//!   best point found has gap at most `eps`.
//! * [`solve_local`] does the same with the gap restricted to each leaf and
//!   returns the certifying leaf.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gap::{self, BoundRegion, PwlGap};
use crate::model::{ConcaveBox, Instance, Interval, StrategyProfile};
use crate::qp::{BoxQp, QpOptions};
use crate::scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveLimits {
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            time_limit: None,
        }
    }
}

/// Which children the local solver discards after a bisection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum LocalPrune {
    /// Discard a child whose deletion bound is positive (no global
    /// equilibrium inside).
    #[default]
    DeletionBound,
    /// Discard a child whose QP solution has positive (full) gap.
    PositiveGap,
    /// Keep every child.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub eps: f64,
    pub limits: SolveLimits,
    /// Keep a per-iteration log and the list of deleted boxes.
    pub record_trace: bool,
    pub local_prune: LocalPrune,
    pub bound_region: BoundRegion,
    pub qp: QpOptions,
}

impl SolveOptions {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            limits: SolveLimits::default(),
            record_trace: false,
            local_prune: LocalPrune::default(),
            bound_region: BoundRegion::default(),
            qp: QpOptions::default(),
        }
    }

    pub fn with_limits(mut self, limits: SolveLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn with_local_prune(mut self, prune: LocalPrune) -> Self {
        self.local_prune = prune;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    EpsEquilibrium,
    NoEquilibrium,
    IterationLimit,
    TimeLimit,
}

impl SolveStatus {
    /// Process exit code used by the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::EpsEquilibrium => 0,
            Self::NoEquilibrium => 2,
            Self::IterationLimit | Self::TimeLimit => 3,
        }
    }
}

/// A leaf of the partition with its cached QP solution and bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub cbox: ConcaveBox,
    /// Solution of the envelope QP over this leaf's strategy box.
    pub qp_solution: StrategyProfile,
    /// Largest envelope defect over the edges, and the edge attaining it.
    pub rho: f64,
    pub rho_edge_index: usize,
    pub deletion_bound: f64,
}

impl PartitionNode {
    fn build(inst: &Instance, cbox: ConcaveBox, id: usize, parent: Option<usize>, opts: &SolveOptions) -> Self {
        let bounds = cbox.strategy_bounds(inst);
        let deletion_bound = gap::deletion_bound_unchecked(inst, &bounds, opts.bound_region);
        let qp_solution = envelope_qp(inst, &cbox)
            .solve_with(&opts.qp)
            .expect("envelope QP inputs are validated");
        let (rho_edge_index, rho) = box_rho(inst, &cbox);
        Self {
            id,
            parent,
            cbox,
            qp_solution,
            rho,
            rho_edge_index,
            deletion_bound,
        }
    }

    pub fn strategy_bounds(&self, inst: &Instance) -> Vec<Interval> {
        self.cbox.strategy_bounds(inst)
    }
}

/// The QP whose minimizer is the equilibrium of the envelope model on `cbox`.
pub fn envelope_qp(inst: &Instance, cbox: &ConcaveBox) -> BoxQp {
    let c = (0..inst.firms())
        .map(|i| cbox.model_slope(inst, i) - inst.alpha())
        .collect();
    BoxQp {
        beta: inst.beta(),
        c,
        bounds: cbox.strategy_bounds(inst),
    }
}

/// `(argmax edge, max over edges of rho_edge)`; ties go to the smaller index.
fn box_rho(inst: &Instance, cbox: &ConcaveBox) -> (usize, f64) {
    cbox.edges()
        .iter()
        .enumerate()
        .map(|(j, e)| (j, scalar::rho_edge(inst.cost(j), e.lo, e.hi)))
        .fold((0, 0.0), |best, cand| if cand.1 > best.1 { cand } else { best })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bisection {
    pub left: ConcaveBox,
    pub right: ConcaveBox,
    pub edge: usize,
    pub point: f64,
    /// Envelope defect of the chosen edge at the witness.
    pub defect: f64,
}

/// Split `cbox` at the midpoint of the edge with the largest envelope defect
/// at `witness` (smallest index on ties). When every defect vanishes the
/// longest edge is split instead.
pub fn rule1_bisect(inst: &Instance, cbox: &ConcaveBox, witness: &[f64]) -> Result<Bisection> {
    let n = cbox.dim();
    if n == 0 {
        return Err(Error::InvalidInstance("no concave coordinates to bisect".into()));
    }
    if witness.len() < n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: witness.len(),
        });
    }
    let mut best = (0, 0.0);
    for (j, ((edge, env), w)) in cbox.edges().iter().zip(cbox.envelopes()).zip(witness).enumerate() {
        if !edge.contains(*w) {
            return Err(Error::Infeasible {
                index: j,
                value: *w,
                lo: edge.lo,
                hi: edge.hi,
            });
        }
        let hw = inst.cost(j).value(*w);
        let defect = if edge.width() > 0.0 { hw - env.eval(*w) } else { 0.0 };
        // rounding noise at the chord's endpoints counts as zero
        let defect = if defect <= 1e-12 * (1.0 + hw.abs()) {
            0.0
        } else {
            defect
        };
        if defect > best.1 {
            best = (j, defect);
        }
    }
    let (edge, defect) = if best.1 > 0.0 {
        best
    } else {
        let longest = cbox
            .edges()
            .iter()
            .enumerate()
            .fold(0, |b, (j, e)| if e.width() > cbox.edges()[b].width() { j } else { b });
        (longest, 0.0)
    };
    let e = cbox.edges()[edge];
    let point = e.midpoint();
    Ok(Bisection {
        left: cbox.with_edge(inst, edge, Interval::new(e.lo, point)),
        right: cbox.with_edge(inst, edge, Interval::new(point, e.hi)),
        edge,
        point,
        defect,
    })
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub selected_id: usize,
    pub selected_box: Vec<Interval>,
    pub rho: f64,
    pub j_max: usize,
    pub bisection_point: f64,
    pub bisection_defect: f64,
    pub children: [usize; 2],
    /// Gap of the incumbent at the start of the iteration.
    pub g_incumbent: f64,
    /// Best restricted gap so far (local solver only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_k: Option<f64>,
    /// Leaves alive after the iteration.
    pub leaves: usize,
    /// Children deleted in this iteration.
    pub deleted: usize,
    pub leaf_volume: f64,
    pub deleted_volume: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub root_volume: f64,
    pub records: Vec<IterationRecord>,
    /// Concave edges of every deleted box, in deletion order.
    pub deleted_boxes: Vec<Vec<Interval>>,
}

impl RunTrace {
    /// The log as JSON lines.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serialization cannot fail") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub point: StrategyProfile,
    /// Gap certified by the solver: `g` for the global solver, the restricted
    /// gap on `certificate` for the local one.
    pub gap_value: f64,
    /// Unrestricted gap `g(point)`.
    pub full_gap: f64,
    pub iterations: usize,
    pub qp_solves: usize,
    pub leaves_explored: usize,
    pub status: SolveStatus,
    /// Strategy box on which `gap_value` was computed (local solver).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<Interval>>,
    pub elapsed_s: f64,
    #[serde(skip)]
    pub trace: Option<RunTrace>,
}

impl SolveReport {
    /// Local results are globally certified when their full gap is within
    /// tolerance.
    pub fn globally_certified(&self, eps: f64) -> bool {
        self.full_gap <= eps
    }
}

/// Outcome of a search-and-check pass.
#[derive(Debug, Clone, PartialEq)]
struct SearchOutcome {
    /// Index into the leaf slice.
    leaf: usize,
    point: StrategyProfile,
    pwl_gap: f64,
    found: bool,
}

/// Scan `leaves` in ascending deletion-bound order, skipping positive bounds,
/// and return the first leaf solution whose piecewise-model gap is at most
/// `eps`, or the lowest-gap solution seen.
fn search_leaves(inst: &Instance, leaves: &[PartitionNode], eps: f64) -> Option<SearchOutcome> {
    let mut order: Vec<usize> = (0..leaves.len()).filter(|&i| leaves[i].deletion_bound <= 0.0).collect();
    order.sort_by(|&a, &b| leaves[a].deletion_bound.total_cmp(&leaves[b].deletion_bound));
    let mut best: Option<SearchOutcome> = None;
    for i in order {
        let node = &leaves[i];
        let eval = PwlGap::new(inst, &node.cbox, node.qp_solution.as_slice());
        let cutoff = best.as_ref().map_or(f64::INFINITY, |b| b.pwl_gap).max(eps);
        let value = eval.max_over(leaves.iter().map(|l| &l.cbox), cutoff);
        if value <= eps {
            return Some(SearchOutcome {
                leaf: i,
                point: node.qp_solution.clone(),
                pwl_gap: value,
                found: true,
            });
        }
        if best.as_ref().is_none_or(|b| value < b.pwl_gap) {
            best = Some(SearchOutcome {
                leaf: i,
                point: node.qp_solution.clone(),
                pwl_gap: value,
                found: false,
            });
        }
    }
    best
}

/// Search-and-check over a fixed partition of the concave coordinates.
///
/// Leaves with a positive deletion bound are never QP-solved. The returned
/// `gap_value` is the piecewise-model gap of the returned point.
pub fn search_check(inst: &Instance, partition: &[ConcaveBox], eps: f64) -> Result<SolveReport> {
    if partition.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let start = Instant::now();
    let opts = SolveOptions::new(eps);
    let mut order: Vec<(f64, usize)> = partition
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let bound = gap::deletion_bound_unchecked(inst, &b.strategy_bounds(inst), opts.bound_region);
            (bound, i)
        })
        .filter(|(bound, _)| *bound <= 0.0)
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best: Option<(f64, StrategyProfile)> = None;
    let mut qp_solves = 0;
    let mut status = SolveStatus::NoEquilibrium;
    for (_, i) in order {
        let x = envelope_qp(inst, &partition[i]).solve_with(&opts.qp)?;
        qp_solves += 1;
        let value = PwlGap::new(inst, &partition[i], x.as_slice()).max_over(partition.iter(), f64::INFINITY);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, x));
        }
        if value <= eps {
            status = SolveStatus::EpsEquilibrium;
            break;
        }
    }
    // every leaf pruned: report the root-box solution for reference
    let (pwl_gap, point) = match best {
        Some(b) => b,
        None => {
            let root = ConcaveBox::root(inst);
            let x = envelope_qp(inst, &root).solve_with(&opts.qp)?;
            qp_solves += 1;
            (f64::INFINITY, x)
        }
    };
    let full_gap = gap::gap_over(inst, inst.bounds(), point.as_slice()).value;
    Ok(SolveReport {
        point,
        gap_value: pwl_gap,
        full_gap,
        iterations: qp_solves,
        qp_solves,
        leaves_explored: partition.len(),
        status,
        certificate: None,
        elapsed_s: start.elapsed().as_secs_f64(),
        trace: None,
    })
}

struct Clock {
    start: Instant,
    limits: SolveLimits,
}

impl Clock {
    fn exhausted(&self, iteration: usize) -> Option<SolveStatus> {
        if iteration >= self.limits.max_iterations {
            return Some(SolveStatus::IterationLimit);
        }
        match self.limits.time_limit {
            Some(t) if self.start.elapsed() >= t => Some(SolveStatus::TimeLimit),
            _ => None,
        }
    }
}

fn select_max_rho(leaves: &[PartitionNode]) -> usize {
    leaves
        .iter()
        .enumerate()
        .fold(0, |b, (i, l)| if l.rho > leaves[b].rho { i } else { b })
}

fn volume(leaves: &[PartitionNode]) -> f64 {
    leaves.iter().map(|l| l.cbox.volume()).sum()
}

/// Search-check-branch for a global `eps`-equilibrium.
///
/// The incumbent is the best point (by gap) among all leaf QP solutions
/// computed so far, so its gap is nonincreasing over the iterations.
pub fn solve_global(inst: &Instance, opts: &SolveOptions) -> SolveReport {
    let clock = Clock {
        start: Instant::now(),
        limits: opts.limits,
    };
    let root = PartitionNode::build(inst, ConcaveBox::root(inst), 0, None, opts);
    let mut next_id = 1;
    let mut qp_solves = 1;
    let mut explored = 1;
    let mut incumbent = root.qp_solution.clone();
    let mut g_incumbent = gap::gap_over(inst, inst.bounds(), incumbent.as_slice()).value;
    // witness for the bisection rule: equilibrium of the current piecewise model
    let mut witness = root.qp_solution.clone();
    let mut trace = opts.record_trace.then(|| RunTrace {
        root_volume: root.cbox.volume(),
        ..RunTrace::default()
    });
    let mut deleted_volume = 0.0;
    let mut leaves = Vec::new();
    if root.deletion_bound > 0.0 {
        deleted_volume += root.cbox.volume();
        if let Some(t) = trace.as_mut() {
            t.deleted_boxes.push(root.cbox.edges().to_vec());
        }
    } else {
        leaves.push(root);
    }

    let mut k = 0;
    let status = loop {
        if g_incumbent <= opts.eps {
            break SolveStatus::EpsEquilibrium;
        }
        if let Some(s) = clock.exhausted(k) {
            break s;
        }
        if leaves.is_empty() || inst.n_concave() == 0 {
            break SolveStatus::NoEquilibrium;
        }
        let sel = select_max_rho(&leaves);
        if leaves[sel].rho <= 0.0 {
            // every leaf model is exact and none of their equilibria qualified
            break SolveStatus::NoEquilibrium;
        }
        let parent = leaves.swap_remove(sel);
        let w = if parent.cbox.contains(witness.as_slice()) {
            witness.as_slice()
        } else {
            parent.qp_solution.as_slice()
        };
        let split = rule1_bisect(inst, &parent.cbox, w).expect("witness lies in the selected box");
        let children = [
            PartitionNode::build(inst, split.left.clone(), next_id, Some(parent.id), opts),
            PartitionNode::build(inst, split.right.clone(), next_id + 1, Some(parent.id), opts),
        ];
        next_id += 2;
        qp_solves += 2;
        explored += 2;

        let g_start = g_incumbent;
        for child in &children {
            let g = gap::gap_over(inst, inst.bounds(), child.qp_solution.as_slice()).value;
            if g < g_incumbent {
                g_incumbent = g;
                incumbent = child.qp_solution.clone();
            }
        }
        let mut deleted = 0;
        for child in children.iter() {
            if child.deletion_bound > 0.0 {
                deleted += 1;
                deleted_volume += child.cbox.volume();
                if let Some(t) = trace.as_mut() {
                    t.deleted_boxes.push(child.cbox.edges().to_vec());
                }
            }
        }
        let ids = [children[0].id, children[1].id];
        leaves.extend(children.into_iter().filter(|c| c.deletion_bound <= 0.0));

        if g_incumbent > opts.eps && !leaves.is_empty() {
            if let Some(found) = search_leaves(inst, &leaves, opts.eps) {
                witness = found.point;
            }
        }
        if let Some(t) = trace.as_mut() {
            t.records.push(IterationRecord {
                k,
                selected_id: parent.id,
                selected_box: parent.cbox.edges().to_vec(),
                rho: parent.rho,
                j_max: split.edge,
                bisection_point: split.point,
                bisection_defect: split.defect,
                children: ids,
                g_incumbent: g_start,
                eps_k: None,
                leaves: leaves.len(),
                deleted,
                leaf_volume: volume(&leaves),
                deleted_volume,
            });
        }
        k += 1;
    };

    SolveReport {
        point: incumbent,
        gap_value: g_incumbent,
        full_gap: g_incumbent,
        iterations: k + 1,
        qp_solves,
        leaves_explored: explored,
        status,
        certificate: None,
        elapsed_s: clock.start.elapsed().as_secs_f64(),
        trace,
    }
}

/// Search-check-branch for an `eps`-local equilibrium: a point whose gap,
/// restricted to the leaf it was computed on, is at most `eps`.
pub fn solve_local(inst: &Instance, opts: &SolveOptions) -> SolveReport {
    let clock = Clock {
        start: Instant::now(),
        limits: opts.limits,
    };
    let root = PartitionNode::build(inst, ConcaveBox::root(inst), 0, None, opts);
    let mut next_id = 1;
    let mut qp_solves = 1;
    let mut explored = 1;
    let root_bounds = root.strategy_bounds(inst);
    let mut best_value = gap::gap_over(inst, &root_bounds, root.qp_solution.as_slice()).value;
    let mut best_point = root.qp_solution.clone();
    let mut best_box = root_bounds;
    let mut trace = opts.record_trace.then(|| RunTrace {
        root_volume: root.cbox.volume(),
        ..RunTrace::default()
    });
    let mut deleted_volume = 0.0;
    let mut leaves = vec![root];

    let mut k = 0;
    let status = loop {
        if best_value <= opts.eps {
            break SolveStatus::EpsEquilibrium;
        }
        if let Some(s) = clock.exhausted(k) {
            break s;
        }
        if leaves.is_empty() || inst.n_concave() == 0 {
            break SolveStatus::NoEquilibrium;
        }
        let sel = select_max_rho(&leaves);
        if leaves[sel].rho <= 0.0 {
            break SolveStatus::NoEquilibrium;
        }
        let parent = leaves.swap_remove(sel);
        let split =
            rule1_bisect(inst, &parent.cbox, parent.qp_solution.as_slice()).expect("leaf solution lies in its own box");
        let children = [
            PartitionNode::build(inst, split.left.clone(), next_id, Some(parent.id), opts),
            PartitionNode::build(inst, split.right.clone(), next_id + 1, Some(parent.id), opts),
        ];
        next_id += 2;
        qp_solves += 2;
        explored += 2;

        let eps_start = best_value;
        let mut deleted = 0;
        let ids = [children[0].id, children[1].id];
        for child in children {
            let bounds = child.strategy_bounds(inst);
            let restricted = gap::gap_over(inst, &bounds, child.qp_solution.as_slice()).value;
            if restricted < best_value {
                best_value = restricted;
                best_point = child.qp_solution.clone();
                best_box = bounds;
            }
            let prune = match opts.local_prune {
                LocalPrune::DeletionBound => child.deletion_bound > 0.0,
                LocalPrune::PositiveGap => gap::gap_over(inst, inst.bounds(), child.qp_solution.as_slice()).value > 0.0,
                LocalPrune::Off => false,
            };
            if prune {
                deleted += 1;
                deleted_volume += child.cbox.volume();
                if let Some(t) = trace.as_mut() {
                    t.deleted_boxes.push(child.cbox.edges().to_vec());
                }
            } else {
                leaves.push(child);
            }
        }
        if let Some(t) = trace.as_mut() {
            t.records.push(IterationRecord {
                k,
                selected_id: parent.id,
                selected_box: parent.cbox.edges().to_vec(),
                rho: parent.rho,
                j_max: split.edge,
                bisection_point: split.point,
                bisection_defect: split.defect,
                children: ids,
                g_incumbent: eps_start,
                eps_k: Some(eps_start),
                leaves: leaves.len(),
                deleted,
                leaf_volume: volume(&leaves),
                deleted_volume,
            });
        }
        k += 1;
    };

    let full_gap = gap::gap_over(inst, inst.bounds(), best_point.as_slice()).value;
    SolveReport {
        point: best_point,
        gap_value: best_value,
        full_gap,
        iterations: k + 1,
        qp_solves,
        leaves_explored: explored,
        status,
        certificate: Some(best_box),
        elapsed_s: clock.start.elapsed().as_secs_f64(),
        trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Global,
    Local,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::Local => "local",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            other => Err(format!("unknown algorithm {other:?} (expected global or local)")),
        }
    }
}

pub fn solve(inst: &Instance, algorithm: Algorithm, opts: &SolveOptions) -> SolveReport {
    match algorithm {
        Algorithm::Global => solve_global(inst, opts),
        Algorithm::Local => solve_local(inst, opts),
    }
}
