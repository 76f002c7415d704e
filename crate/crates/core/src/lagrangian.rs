//! Lagrangian relaxation of the non-overlap rows.
//!
//! Pricing unit `i` at `lambda_i >= 0` splits the problem into a per-block
//! choice over capacity services (P2) and one covering knapsack per latency
//! service (P3[k]). The dual function is
//! `g(lambda) = sum(lambda) + P2 - sum_k P3[k]`, an upper bound on the
//! integer optimum for every `lambda >= 0`. Subgradient steps drive it down;
//! the subproblem choices summed over iterations form the LD utility.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{Provenance, UtilityMatrix};
use crate::error::{Error, Result};
use crate::grid::Block;
use crate::instance::Instance;

/// Largest DP table (items x states) a refinement step may allocate.
const MAX_REFINED_CELLS: usize = 4_000_000;

/// `alpha_b = sum of lambda over the block's units`.
pub fn alpha(lambda: &[f64], block: &Block) -> f64 {
    block.coverage.iter().map(|&i| lambda[i]).sum()
}

pub fn alphas(inst: &Instance, lambda: &[f64]) -> Vec<f64> {
    inst.blocks.iter().map(|b| alpha(lambda, b)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct P2Solution {
    /// Capacity service chosen for each block, if any.
    pub choice: Vec<Option<usize>>,
    pub value: f64,
}

/// Each block goes to its best capacity service when `r - alpha > 0`.
pub fn solve_p2(inst: &Instance, lambda: &[f64]) -> P2Solution {
    solve_p2_with_alpha(inst, &alphas(inst, lambda))
}

pub fn solve_p2_with_alpha(inst: &Instance, alpha: &[f64]) -> P2Solution {
    let capacity: Vec<usize> = inst.capacity_services().map(|s| s.id).collect();
    let mut choice = vec![None; inst.num_blocks()];
    let mut value = 0.0;
    for b in 0..inst.num_blocks() {
        let mut best: Option<(usize, f64)> = None;
        for &k in &capacity {
            let margin = inst.rate(b, k) - alpha[b];
            if margin > 0.0 && best.is_none_or(|(_, m)| margin > m) {
                best = Some((k, margin));
            }
        }
        if let Some((k, m)) = best {
            choice[b] = Some(k);
            value += m;
        }
    }
    P2Solution { choice, value }
}

/// Minimum-cost cover of one latency demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackResult {
    pub service: usize,
    /// Chosen blocks (ascending ids).
    pub blocks: Vec<usize>,
    /// Cost of the chosen blocks.
    pub cost: f64,
    /// Unrounded rate of the chosen blocks.
    pub rate: f64,
    /// A lower bound on the true minimum cost; equals `cost` when `exact`.
    pub cost_lower_bound: f64,
    /// The chosen blocks meet the demand.
    pub optimal: bool,
    /// `cost` is proven minimal.
    pub exact: bool,
    /// Even every block together cannot meet the demand.
    pub no_cover: bool,
    /// Granularity the answer was obtained at.
    pub delta: f64,
}

/// Result of the generic covering knapsack on `(cost, value)` items.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverSolution {
    pub items: Vec<usize>,
    pub cost: f64,
    pub value: f64,
    pub cost_lower_bound: f64,
    pub covered: bool,
    pub exact: bool,
    pub no_cover: bool,
    pub delta: f64,
}

/// Default DP granularity for a demand of `q` bits.
pub fn default_delta(q: f64) -> f64 {
    (q / 10_000.0).max(1.0)
}

/// `min sum cost_j x_j  s.t.  sum value_j x_j >= demand`, `x` binary.
///
/// Values are floored to multiples of `delta` for the returned selection
/// (which therefore meets the demand with the true values) and ceiled for a
/// lower bound on the optimum. When the two disagree the granularity is
/// refined tenfold while the DP table stays under a fixed size.
pub fn covering_knapsack(items: &[(f64, f64)], demand: f64, delta: f64) -> CoverSolution {
    assert!(delta > 0.0, "granularity must be positive");
    if demand <= 0.0 {
        return CoverSolution {
            items: Vec::new(),
            cost: 0.0,
            value: 0.0,
            cost_lower_bound: 0.0,
            covered: true,
            exact: true,
            no_cover: false,
            delta,
        };
    }
    let total: f64 = items.iter().map(|&(_, v)| v).sum();
    if total < demand {
        return CoverSolution {
            items: Vec::new(),
            cost: f64::INFINITY,
            value: 0.0,
            cost_lower_bound: f64::INFINITY,
            covered: false,
            exact: true,
            no_cover: true,
            delta,
        };
    }
    let mut delta = delta;
    loop {
        let target = (demand / delta).ceil() as usize;
        let floor_w: Vec<usize> = items.iter().map(|&(_, v)| (v / delta).floor() as usize).collect();
        let ceil_w: Vec<usize> = items.iter().map(|&(_, v)| (v / delta).ceil() as usize).collect();
        let upper = dp_cover(items, &floor_w, target, true);
        let lower = dp_cover(items, &ceil_w, target, false);
        let lb = lower.map_or(f64::INFINITY, |(c, _)| c);
        let exact = upper.as_ref().is_some_and(|(c, _)| *c <= lb);
        let next = delta / 10.0;
        let can_refine = items.len().saturating_mul((demand / next).ceil() as usize + 1) <= MAX_REFINED_CELLS;
        if exact || !can_refine {
            let (items_sel, cost, covered) = match upper {
                Some((c, sel)) => (sel.unwrap_or_default(), c, true),
                None => {
                    // Rounding lost the cover; everything together still meets it.
                    let all: Vec<usize> = (0..items.len()).filter(|&j| items[j].1 > 0.0).collect();
                    let c = all.iter().map(|&j| items[j].0).sum();
                    (all, c, true)
                }
            };
            let value = items_sel.iter().map(|&j| items[j].1).sum();
            return CoverSolution {
                items: items_sel,
                cost,
                value,
                cost_lower_bound: lb.min(cost),
                covered,
                exact,
                no_cover: false,
                delta,
            };
        }
        delta = next;
    }
}

/// 0/1 covering DP over integer weights; `dp[c]` is the cheapest way to
/// reach at least `c`. Returns the optimum and, if `recover`, the items.
fn dp_cover(items: &[(f64, f64)], w: &[usize], target: usize, recover: bool) -> Option<(f64, Option<Vec<usize>>)> {
    let width = target + 1;
    let mut dp = vec![f64::INFINITY; width];
    dp[0] = 0.0;
    let mut keep = if recover { vec![false; items.len() * width] } else { Vec::new() };
    for (j, &(cost, _)) in items.iter().enumerate() {
        let wj = w[j];
        if wj == 0 {
            continue;
        }
        for c in (1..width).rev() {
            let from = dp[c.saturating_sub(wj)];
            let cand = from + cost;
            if cand < dp[c] {
                dp[c] = cand;
                if recover {
                    keep[j * width + c] = true;
                }
            }
        }
    }
    let best = dp[target];
    if !best.is_finite() {
        return None;
    }
    if !recover {
        return Some((best, None));
    }
    let mut chosen = Vec::new();
    let mut c = target;
    for j in (0..items.len()).rev() {
        if c == 0 {
            break;
        }
        if keep[j * width + c] {
            chosen.push(j);
            c = c.saturating_sub(w[j]);
        }
    }
    chosen.reverse();
    Some((best, Some(chosen)))
}

/// P3[k] at the given multipliers.
pub fn solve_p3k(inst: &Instance, lambda: &[f64], k: usize, delta: f64) -> Result<KnapsackResult> {
    solve_p3k_with_alpha(inst, &alphas(inst, lambda), k, delta)
}

pub fn solve_p3k_with_alpha(inst: &Instance, alpha: &[f64], k: usize, delta: f64) -> Result<KnapsackResult> {
    let service = inst.services.get(k).ok_or(Error::UnknownId { kind: "service", id: k })?;
    let Some(q) = service.demand() else {
        return Err(Error::InvalidInput(format!("service {k} is not latency-critical")));
    };
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("knapsack granularity must be positive".into()));
    }
    let blocks: Vec<usize> = (0..inst.num_blocks()).filter(|&b| inst.rate(b, k) > 0.0).collect();
    let items: Vec<(f64, f64)> = blocks.iter().map(|&b| (alpha[b], inst.rate(b, k))).collect();
    let sol = covering_knapsack(&items, q, delta);
    Ok(KnapsackResult {
        service: k,
        blocks: sol.items.iter().map(|&j| blocks[j]).collect(),
        cost: sol.cost,
        rate: sol.value,
        cost_lower_bound: sol.cost_lower_bound,
        optimal: sol.covered,
        exact: sol.exact,
        no_cover: sol.no_cover,
        delta: sol.delta,
    })
}

/// `g(lambda)`; `+inf` when some latency demand has no cover at all.
pub fn dual_value(lambda: &[f64], p2_value: f64, p3: &[KnapsackResult]) -> f64 {
    if p3.iter().any(|r| r.no_cover) {
        return f64::INFINITY;
    }
    lambda.iter().sum::<f64>() + p2_value - p3.iter().map(|r| r.cost_lower_bound).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradientOptions {
    pub max_iters: usize,
    /// Stop once no multiplier moves by more than this.
    pub lambda_tol: f64,
    /// Knapsack granularity; `None` picks [`default_delta`] per service.
    pub delta: Option<f64>,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self { max_iters: 200, lambda_tol: 1e-9, delta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// Iterations completed.
    pub iteration: usize,
    pub g_best: f64,
    /// `g(lambda^(h))` for every iterate.
    pub g_history: Vec<f64>,
    pub u_acc: UtilityMatrix,
    pub theta0: f64,
    /// Latency services with no cover (the dual is `+inf`).
    pub no_cover: Vec<usize>,
}

/// One iterate: multipliers in, subproblem choice and dual value out.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEvaluation {
    pub g: f64,
    pub p2: P2Solution,
    pub p3: Vec<KnapsackResult>,
    /// Chosen `(block, service)` pairs, P2 first, then each P3[k].
    pub pairs: Vec<(usize, usize)>,
    /// Basic-unit usage of `pairs`.
    pub usage: Vec<f64>,
}

pub fn evaluate_dual(inst: &Instance, lambda: &[f64], delta: Option<f64>) -> Result<DualEvaluation> {
    let alpha = alphas(inst, lambda);
    let p2 = solve_p2_with_alpha(inst, &alpha);
    let latency: Vec<usize> = inst.latency_services().map(|s| s.id).collect();
    let p3 = latency
        .par_iter()
        .map(|&k| {
            let q = inst.services[k].demand().unwrap_or(0.0);
            solve_p3k_with_alpha(inst, &alpha, k, delta.unwrap_or_else(|| default_delta(q)))
        })
        .collect::<Result<Vec<_>>>()?;
    let g = dual_value(lambda, p2.value, &p3);
    let mut pairs: Vec<(usize, usize)> = p2.choice.iter().enumerate().filter_map(|(b, c)| c.map(|k| (b, k))).collect();
    for r in p3.iter().filter(|r| !r.no_cover) {
        pairs.extend(r.blocks.iter().map(|&b| (b, r.service)));
    }
    let mut usage = vec![0.0; inst.num_units()];
    for &(b, _) in &pairs {
        for &i in &inst.blocks[b].coverage {
            usage[i] += 1.0;
        }
    }
    Ok(DualEvaluation { g, p2, p3, pairs, usage })
}

/// `theta_0 = max rate / largest block coverage`.
pub fn initial_step(inst: &Instance) -> f64 {
    let cover = inst.blocks.iter().map(|b| b.coverage.len()).max().unwrap_or(1).max(1);
    inst.max_rate() / cover as f64
}

/// Subgradient descent on the dual from `lambda = 0` with steps
/// `theta_0 / sqrt(h)`. `trace` receives `h,g,s_inf,assigned` rows.
pub fn subgradient_run(
    inst: &Instance,
    opts: &SubgradientOptions,
    mut trace: Option<&mut dyn Write>,
) -> Result<DualState> {
    let theta0 = initial_step(inst);
    let mut lambda = vec![0.0; inst.num_units()];
    let mut u_acc = UtilityMatrix::zeros(inst.num_blocks(), inst.num_services(), Provenance::Ld);
    let mut g_history = Vec::new();
    let mut g_best = f64::INFINITY;
    let mut no_cover = Vec::new();
    if let Some(w) = trace.as_mut() {
        writeln!(w, "h,g,s_inf,assigned")?;
    }
    let mut h = 0;
    while h < opts.max_iters {
        h += 1;
        let eval = evaluate_dual(inst, &lambda, opts.delta)?;
        if h == 1 {
            no_cover = eval.p3.iter().filter(|r| r.no_cover).map(|r| r.service).collect();
        }
        for &(b, k) in &eval.pairs {
            u_acc.add(b, k, 1.0);
        }
        g_best = g_best.min(eval.g);
        g_history.push(eval.g);
        let theta = theta0 / (h as f64).sqrt();
        let mut s_inf: f64 = 0.0;
        let mut moved: f64 = 0.0;
        for (l, used) in lambda.iter_mut().zip(&eval.usage) {
            let s = 1.0 - used;
            s_inf = s_inf.max(s.abs());
            let next = (*l - theta * s).max(0.0);
            moved = moved.max((next - *l).abs());
            *l = next;
        }
        if let Some(w) = trace.as_mut() {
            writeln!(w, "{h},{},{s_inf},{}", eval.g, eval.pairs.len())?;
        }
        if moved < opts.lambda_tol {
            break;
        }
    }
    Ok(DualState { lambda, iteration: h, g_best, g_history, u_acc, theta0, no_cover })
}

/// `u_LD = sum_h x^(h)`.
pub fn ld_utility(state: &DualState) -> UtilityMatrix {
    state.u_acc.clone()
}
