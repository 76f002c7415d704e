//! Exact optimum of the integer program, for benchmarking the heuristics.
//!
//! [`brute_force`] enumerates every per-block decision on tiny instances.
//! [`branch_and_bound`] solves LP relaxations best-first, moving one warm
//! simplex between nodes with the dual simplex. Rounding cuts on the demand
//! rows tighten the relaxation, and a greedy rounding of each node LP feeds
//! the incumbent.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assign::{ba, run_pipeline, seed_from_lp, Mode, PipelineParams, Provenance, UtilityMatrix};
use crate::error::{Error, Result};
use crate::instance::{demand_met, Assignment, Instance};
use crate::lp::{Constraint, LinearProgram, LpStatus, Sense, Simplex};

/// Node budget of [`brute_force`].
pub const BRUTE_FORCE_NODE_LIMIT: u64 = 10_000_000;

const CUT_DIVISORS: usize = 5;
const ROOT_CUT_ROUNDS: usize = 20;
const NODE_CUT_ROUNDS: usize = 2;
const MAX_CUTS: usize = 400;
const CUTS_PER_ROW: usize = 3;
const CUT_VIOLATION: f64 = 1e-6;

/// Default time limit of [`branch_and_bound`].
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(300);

const INTEGRALITY_TOL: f64 = 1e-6;
const NODE_LP_ITERS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactMethod {
    BruteForce,
    BranchAndBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub method: ExactMethod,
    /// Best assignment found; the empty assignment when none is feasible.
    pub assignment: Assignment,
    /// Objective of `assignment` (bits); 0 when infeasible.
    pub value: f64,
    /// Some assignment meets every latency demand.
    pub feasible: bool,
    /// `value` is the optimum (or infeasibility is proven).
    pub proven: bool,
    pub nodes: u64,
    /// Upper bound on the optimum still open at termination.
    pub bound: f64,
    /// `(bound - value) / bound` when stopped early, else 0.
    pub bound_gap: f64,
    /// Not serialized, so result files stay reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Exhaustive search over "unassigned or one positive-rate service" for every
/// block, skipping overlaps and branches that can no longer meet a demand.
pub fn brute_force(inst: &Instance) -> Result<ExactResult> {
    let start = Instant::now();
    let nb = inst.num_blocks();
    let ns = inst.num_services();
    // rate still reachable from blocks b.. for each service
    let mut suffix = vec![0.0; (nb + 1) * ns];
    for b in (0..nb).rev() {
        for k in 0..ns {
            suffix[b * ns + k] = suffix[(b + 1) * ns + k] + inst.rate(b, k);
        }
    }
    let demands: Vec<(usize, f64)> = inst.latency_services().map(|s| (s.id, s.demand().unwrap_or(0.0))).collect();
    let mut search = BruteSearch {
        inst,
        suffix,
        demands,
        used: vec![false; inst.num_units()],
        delivered: vec![0.0; ns],
        pairs: Vec::new(),
        best: None,
        nodes: 0,
    };
    search.visit(0, 0.0)?;
    let nodes = search.nodes;
    let (assignment, feasible) = match search.best {
        Some((_, pairs)) => (Assignment::evaluate(inst, pairs)?, true),
        None => (Assignment::empty(inst), false),
    };
    let value = if feasible { assignment.objective } else { 0.0 };
    Ok(ExactResult {
        method: ExactMethod::BruteForce,
        assignment,
        value,
        feasible,
        proven: true,
        nodes,
        bound: value,
        bound_gap: 0.0,
        wall_time: start.elapsed(),
    })
}

struct BruteSearch<'a> {
    inst: &'a Instance,
    suffix: Vec<f64>,
    demands: Vec<(usize, f64)>,
    used: Vec<bool>,
    delivered: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    best: Option<(f64, Vec<(usize, usize)>)>,
    nodes: u64,
}

impl BruteSearch<'_> {
    fn visit(&mut self, b: usize, objective: f64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > BRUTE_FORCE_NODE_LIMIT {
            return Err(Error::SizeGuard { limit: BRUTE_FORCE_NODE_LIMIT });
        }
        let ns = self.inst.num_services();
        for &(k, q) in &self.demands {
            if !demand_met(self.delivered[k] + self.suffix[b * ns + k], q) {
                return Ok(());
            }
        }
        if b == self.inst.num_blocks() {
            if self.best.as_ref().is_none_or(|(v, _)| objective > *v) {
                self.best = Some((objective, self.pairs.clone()));
            }
            return Ok(());
        }
        self.visit(b + 1, objective)?;
        let cover = &self.inst.blocks[b].coverage;
        if cover.iter().any(|&i| self.used[i]) {
            return Ok(());
        }
        for &i in cover {
            self.used[i] = true;
        }
        for k in 0..ns {
            let r = self.inst.rate(b, k);
            if r <= 0.0 {
                continue;
            }
            let latency = self.inst.services[k].is_latency();
            self.pairs.push((b, k));
            self.delivered[k] += r;
            let gain = if latency { 0.0 } else { r };
            let res = self.visit(b + 1, objective + gain);
            self.delivered[k] -= r;
            self.pairs.pop();
            res?;
        }
        for &i in cover {
            self.used[i] = false;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchAndBoundOptions {
    /// `None` runs to completion.
    pub time_limit: Option<Duration>,
    /// Seed the incumbent with the LP+LD heuristic.
    pub heuristic_incumbent: bool,
    pub pipeline: PipelineParams,
}

impl Default for BranchAndBoundOptions {
    fn default() -> Self {
        Self { time_limit: Some(DEFAULT_TIME_LIMIT), heuristic_incumbent: true, pipeline: PipelineParams::default() }
    }
}

/// The integer program over the columns that can matter. Blocks with the
/// same footprint exclude each other, so each footprint keeps, per latency
/// service, its best block with positive rate, and one column for its best
/// capacity pair (lowest ids on ties). Any solution maps onto these columns
/// without losing rate, so the optimum is unchanged.
pub fn reduced_program(inst: &Instance) -> LinearProgram {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut by_footprint: HashMap<&[usize], usize> = HashMap::new();
    for (b, block) in inst.blocks.iter().enumerate() {
        let g = *by_footprint.entry(&block.coverage).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(b);
    }
    let best = |group: &[usize], services: &mut dyn Iterator<Item = usize>| {
        let mut best: Option<(usize, usize, f64)> = None;
        for k in services {
            for &b in group {
                let r = inst.rate(b, k);
                if r > 0.0 && best.is_none_or(|(_, _, br)| r > br) {
                    best = Some((b, k, r));
                }
            }
        }
        best
    };
    let mut keys = Vec::new();
    let mut objective = Vec::new();
    for group in &groups {
        for s in inst.latency_services() {
            if let Some((b, k, _)) = best(group, &mut std::iter::once(s.id)) {
                keys.push((b, k));
                objective.push(0.0);
            }
        }
        if let Some((b, k, r)) = best(group, &mut inst.capacity_services().map(|s| s.id)) {
            keys.push((b, k));
            objective.push(r);
        }
    }
    let mut lp = LinearProgram::with_columns(objective);
    lp.num_blocks = inst.num_blocks();
    lp.num_services = inst.num_services();
    let mut demand: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.num_services()];
    let mut units: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.num_units()];
    for (j, &(b, k)) in keys.iter().enumerate() {
        if inst.services[k].is_latency() {
            demand[k].push((j, inst.rate(b, k)));
        }
        for &i in &inst.blocks[b].coverage {
            units[i].push((j, 1.0));
        }
    }
    for s in inst.latency_services() {
        lp.add_row(std::mem::take(&mut demand[s.id]), Sense::Ge, s.demand().unwrap_or(0.0));
    }
    for row in units.into_iter().filter(|r| !r.is_empty()) {
        lp.add_row(row, Sense::Le, 1.0);
    }
    lp.column_keys = keys;
    lp
}

struct Node {
    fixes: Vec<(usize, f64)>,
    /// Parent LP bound.
    bound: f64,
    depth: usize,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Highest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then(self.depth.cmp(&other.depth)).then(other.seq.cmp(&self.seq))
    }
}

/// Best-first LP-based branch and bound on the variable closest to 0.5.
pub fn branch_and_bound(inst: &Instance, opts: &BranchAndBoundOptions) -> Result<ExactResult> {
    let start = Instant::now();
    let mut lp = reduced_program(inst);
    let n = lp.num_cols();

    let mut incumbent: Option<Assignment> = None;
    if opts.heuristic_incumbent {
        let h = run_pipeline(inst, Mode::LpPlusLd, &opts.pipeline)?.assignment;
        if h.feasible {
            incumbent = Some(h);
        }
    }
    let done = |incumbent: Option<Assignment>, proven: bool, nodes: u64, bound: f64| {
        let (assignment, feasible) = match incumbent {
            Some(a) => (a, true),
            None => (Assignment::empty(inst), false),
        };
        let value = if feasible { assignment.objective } else { 0.0 };
        let bound = if proven { value } else { bound.max(value) };
        let bound_gap = if proven || bound <= 0.0 { 0.0 } else { (bound - value) / bound };
        ExactResult {
            method: ExactMethod::BranchAndBound,
            assignment,
            value,
            feasible,
            proven,
            nodes,
            bound,
            bound_gap,
            wall_time: start.elapsed(),
        }
    };

    let mut sx = Simplex::new(&lp);
    let root = sx.solve(NODE_LP_ITERS);
    match root {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(done(None, true, 1, 0.0)),
        other => return Err(Error::NotOptimal(other)),
    }
    let deadline = opts.time_limit.map(|limit| start + limit);
    sx.set_deadline(deadline);
    let uncut_bound = sx.objective();
    let mut cuts = CutPool::new(&lp, inst.latency_services().count());
    match cuts.run(&mut lp, &mut sx, ROOT_CUT_ROUNDS) {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(done(None, true, 1, 0.0)),
        LpStatus::IterationLimit if past(deadline) => return Ok(done(incumbent, false, 1, uncut_bound)),
        other => return Err(Error::NotOptimal(other)),
    }

    let mut bounds: Vec<(f64, f64)> = vec![(0.0, 1.0); n];
    let root_bound = sx.objective();
    let mut heap = BinaryHeap::new();
    heap.push(Node { fixes: Vec::new(), bound: root_bound, depth: 0, seq: 0 });
    let mut seq: u64 = 1;
    let mut nodes: u64 = 1;
    let mut proven = true;
    // Highest bound among nodes dropped without an LP answer.
    let mut lost_bound = f64::NEG_INFINITY;
    let mut first = true;
    let inc_value = |inc: &Option<Assignment>| inc.as_ref().map_or(f64::NEG_INFINITY, |a| a.objective);
    let offer = |cand: Assignment, incumbent: &mut Option<Assignment>| {
        if cand.feasible && incumbent.as_ref().is_none_or(|inc| cand.objective > inc.objective) {
            *incumbent = Some(cand);
        }
    };

    while let Some(node) = heap.pop() {
        if let Some(limit) = opts.time_limit {
            if start.elapsed() >= limit {
                return Ok(done(incumbent, false, nodes, node.bound.max(lost_bound)));
            }
        }
        if prunable(node.bound, inc_value(&incumbent)) {
            // Every remaining node has a lower bound.
            break;
        }
        if !first {
            nodes += 1;
        }
        // Move the warm simplex to this node's bounds.
        let mut target: Vec<(f64, f64)> = vec![(0.0, 1.0); n];
        for &(j, v) in &node.fixes {
            target[j] = (v, v);
        }
        for j in 0..n {
            if bounds[j] != target[j] {
                sx.set_bounds(j, target[j].0, target[j].1);
                bounds[j] = target[j];
            }
        }
        let status = if first {
            first = false;
            LpStatus::Optimal
        } else {
            let s = sx.reoptimize(NODE_LP_ITERS);
            if s == LpStatus::IterationLimit {
                // Lost the warm basis; solve this node from scratch.
                let mut node_lp = lp.clone();
                for (j, &(l, u)) in bounds.iter().enumerate() {
                    node_lp.lower[j] = l;
                    node_lp.upper[j] = u;
                }
                sx = Simplex::new(&node_lp);
                sx.set_deadline(deadline);
                sx.solve(NODE_LP_ITERS)
            } else {
                s
            }
        };
        let status = if status == LpStatus::Optimal && cuts.added < MAX_CUTS {
            cuts.run(&mut lp, &mut sx, NODE_CUT_ROUNDS)
        } else {
            status
        };
        match status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            _ => {
                proven = false;
                lost_bound = lost_bound.max(node.bound);
                continue;
            }
        }
        let bound = sx.objective();
        if prunable(bound, inc_value(&incumbent)) {
            continue;
        }
        let x = sx.values();
        let mut branch: Option<(usize, f64)> = None;
        for (j, &v) in x.iter().enumerate() {
            let frac = (v - v.round()).abs();
            if frac > INTEGRALITY_TOL {
                let dist = (v - 0.5).abs();
                if branch.is_none_or(|(_, d)| dist < d) {
                    branch = Some((j, dist));
                }
            }
        }
        match branch {
            None => {
                let pairs: Vec<(usize, usize)> =
                    x.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(j, _)| lp.column_keys[j]).collect();
                offer(Assignment::evaluate(inst, pairs)?, &mut incumbent);
            }
            Some((j, _)) => {
                offer(round_lp_point(inst, &lp, x)?, &mut incumbent);
                let inc = inc_value(&incumbent);
                if prunable(bound, inc) {
                    continue;
                }
                let mut fixes = node.fixes.clone();
                if inc.is_finite() {
                    fixes.extend(reduced_cost_fixes(&sx, &bounds, bound, inc));
                }
                // The rounding direction gets the older sequence number.
                let up_first = x[j] >= 0.5;
                for v in if up_first { [1.0, 0.0] } else { [0.0, 1.0] } {
                    let mut fixes = fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node { fixes, bound, depth: node.depth + 1, seq });
                    seq += 1;
                }
            }
        }
    }
    Ok(done(incumbent, proven, nodes, lost_bound))
}

fn past(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}

/// Greedy rounding of a fractional LP point: [`ba`] under the LP values,
/// seeded with the pairs at or above one half.
fn round_lp_point(inst: &Instance, lp: &LinearProgram, x: &[f64]) -> Result<Assignment> {
    let mut values = vec![0.0; inst.num_blocks() * inst.num_services()];
    for (&(b, k), &v) in lp.column_keys.iter().zip(x) {
        values[b * inst.num_services() + k] = v.max(0.0);
    }
    let u = UtilityMatrix::from_values(inst.num_blocks(), inst.num_services(), values, Provenance::Lp)?;
    let seed = seed_from_lp(inst, &u, 0.5)?;
    ba(inst, &seed, &u)
}

/// Rounding cuts of a demand row `sum a_j x_j >= q`: for a divisor `d`,
/// binary `x` also satisfies `sum ceil(a_j / d) x_j >= ceil(q / d)`. Divisors
/// are the row's distinct rates and `q / 1, ..., q / 5`.
pub fn rounding_cuts(row: &Constraint) -> Vec<Constraint> {
    let q = row.rhs;
    if row.sense != Sense::Ge || q <= 0.0 {
        return Vec::new();
    }
    let mut divisors: Vec<f64> = row.coeffs.iter().map(|&(_, a)| a).filter(|&a| a > 0.0).collect();
    divisors.extend((1..=CUT_DIVISORS).map(|k| q / k as f64));
    divisors.sort_by(f64::total_cmp);
    divisors.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let mut cuts: Vec<Constraint> = Vec::new();
    for d in divisors {
        let rhs = (q / d - 1e-6).ceil();
        if rhs <= 0.0 {
            continue;
        }
        let coeffs: Vec<(usize, f64)> =
            row.coeffs.iter().map(|&(j, a)| (j, (a / d - 1e-9).ceil().max(0.0))).filter(|c| c.1 > 0.0).collect();
        if cuts.iter().any(|c| c.rhs == rhs && c.coeffs == coeffs) {
            continue;
        }
        cuts.push(Constraint { coeffs, sense: Sense::Ge, rhs });
    }
    cuts
}

/// Rounding cuts of the demand rows, added to the LP when violated. Every
/// cut is globally valid, so cuts found at a node stay for the whole tree.
struct CutPool {
    pools: Vec<Vec<Constraint>>,
    used: Vec<Vec<bool>>,
    added: usize,
}

impl CutPool {
    fn new(lp: &LinearProgram, demand_rows: usize) -> CutPool {
        let pools: Vec<Vec<Constraint>> = lp.rows[..demand_rows].iter().map(rounding_cuts).collect();
        let used = pools.iter().map(|p| vec![false; p.len()]).collect();
        CutPool { pools, used, added: 0 }
    }

    /// Adds the most violated unused cuts of each row to `lp` and `sx`.
    fn separate(&mut self, lp: &mut LinearProgram, sx: &mut Simplex) -> usize {
        let x = sx.values().to_vec();
        let mut added = 0;
        for (pool, used) in self.pools.iter().zip(&mut self.used) {
            let mut violated: Vec<(usize, f64)> = pool
                .iter()
                .enumerate()
                .filter(|(c, _)| !used[*c])
                .map(|(c, cut)| (c, cut.rhs - cut.coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>()))
                .filter(|&(_, v)| v > CUT_VIOLATION)
                .collect();
            violated.sort_by(|a, b| b.1.total_cmp(&a.1));
            for &(c, _) in violated.iter().take(CUTS_PER_ROW) {
                used[c] = true;
                let cut = &pool[c];
                sx.add_row(&cut.coeffs, cut.sense, cut.rhs);
                lp.add_row(cut.coeffs.clone(), cut.sense, cut.rhs);
                added += 1;
            }
        }
        self.added += added;
        added
    }

    /// Separates and re-solves until no cut is violated or `rounds` runs out.
    fn run(&mut self, lp: &mut LinearProgram, sx: &mut Simplex, rounds: usize) -> LpStatus {
        for _ in 0..rounds {
            if self.separate(lp, sx) == 0 {
                break;
            }
            let status = sx.reoptimize(NODE_LP_ITERS);
            if status != LpStatus::Optimal {
                return status;
            }
        }
        LpStatus::Optimal
    }
}

/// Columns whose move off their current bound would cost more than the
/// slack between the node bound and the incumbent; valid for the subtree.
fn reduced_cost_fixes(sx: &Simplex, bounds: &[(f64, f64)], bound: f64, incumbent: f64) -> Vec<(usize, f64)> {
    let slack = bound - incumbent + 1e-7 * incumbent.abs().max(1.0);
    let mut fixes = Vec::new();
    for (j, &(l, u)) in bounds.iter().enumerate() {
        if l == u || sx.is_basic(j) {
            continue;
        }
        let (d, at_upper) = sx.reduced_cost(j);
        if at_upper && d > slack {
            fixes.push((j, 1.0));
        } else if !at_upper && -d > slack {
            fixes.push((j, 0.0));
        }
    }
    fixes
}

fn prunable(bound: f64, incumbent: f64) -> bool {
    bound <= incumbent + 1e-9 * incumbent.abs().max(1.0)
}

/// `(exact - heuristic) / exact`, 0 when both are 0.
///
/// # Panics
/// When the heuristic beats the optimum by more than `1e-6`, which means a
/// solver bug.
pub fn optimality_gap(heuristic_value: f64, exact_value: f64) -> f64 {
    assert!(
        heuristic_value <= exact_value + 1e-6,
        "heuristic value {heuristic_value} exceeds the optimum {exact_value}"
    );
    if exact_value <= 0.0 {
        return 0.0;
    }
    ((exact_value - heuristic_value) / exact_value).max(0.0)
}
