//! Greedy block assignment driven by a utility matrix, and the heuristic
//! pipeline built on it (rate, LP and Lagrangian utilities).
//!
//! [`ba`] first serves latency demands in descending-utility order, then
//! hands the remaining free blocks to capacity services. Ties are broken by
//! (utility desc, rate desc, block asc, service asc) everywhere.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{demand_met, Assignment, Instance};
use crate::lagrangian::{ld_utility, subgradient_run, SubgradientOptions};
use crate::lp::{build_lp, lp_utility, solve_lp, LpStatus, LP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Rate,
    Lp,
    Ld,
}

/// Nonnegative `|B| x |K|` scores, row-major by block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityMatrix {
    num_blocks: usize,
    num_services: usize,
    values: Vec<f64>,
    provenance: Provenance,
}

impl UtilityMatrix {
    pub fn zeros(num_blocks: usize, num_services: usize, provenance: Provenance) -> UtilityMatrix {
        UtilityMatrix { num_blocks, num_services, values: vec![0.0; num_blocks * num_services], provenance }
    }

    /// `u = r`.
    pub fn from_rates(inst: &Instance) -> UtilityMatrix {
        let mut u = UtilityMatrix::zeros(inst.num_blocks(), inst.num_services(), Provenance::Rate);
        for b in 0..inst.num_blocks() {
            u.values[b * inst.num_services()..(b + 1) * inst.num_services()].copy_from_slice(inst.block_rates(b));
        }
        u
    }

    pub fn from_values(
        num_blocks: usize,
        num_services: usize,
        values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<UtilityMatrix> {
        if values.len() != num_blocks * num_services {
            return Err(Error::InvalidInput(format!(
                "utility matrix needs {} entries, got {}",
                num_blocks * num_services,
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("utilities must be finite and nonnegative".into()));
        }
        Ok(UtilityMatrix { num_blocks, num_services, values, provenance })
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn num_services(&self) -> usize {
        self.num_services
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, b: usize, k: usize) -> f64 {
        self.values[b * self.num_services + k]
    }

    pub fn set(&mut self, b: usize, k: usize, v: f64) {
        debug_assert!(v >= 0.0);
        self.values[b * self.num_services + k] = v;
    }

    pub fn add(&mut self, b: usize, k: usize, v: f64) {
        self.values[b * self.num_services + k] += v;
    }

    pub fn scaled(&self, c: f64) -> UtilityMatrix {
        UtilityMatrix { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    fn check_dims(&self, inst: &Instance) -> Result<()> {
        if self.num_blocks != inst.num_blocks() || self.num_services != inst.num_services() {
            return Err(Error::InvalidInput(format!(
                "utility matrix is {}x{}, instance is {}x{}",
                self.num_blocks,
                self.num_services,
                inst.num_blocks(),
                inst.num_services()
            )));
        }
        Ok(())
    }
}

/// Initial pairs for [`ba`]: distinct blocks, no shared basic unit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pairs: Vec<(usize, usize)>,
}

impl SeedSet {
    pub fn empty() -> SeedSet {
        SeedSet::default()
    }

    /// Validates `pairs` against `inst`.
    pub fn new(inst: &Instance, pairs: Vec<(usize, usize)>) -> Result<SeedSet> {
        let mut occ = Occupancy::new(inst);
        for &(b, k) in &pairs {
            if b >= inst.num_blocks() {
                return Err(Error::UnknownId { kind: "block", id: b });
            }
            if k >= inst.num_services() {
                return Err(Error::UnknownId { kind: "service", id: k });
            }
            if !occ.is_free(inst, b) {
                return Err(Error::InvalidInput(format!("seed block {b} overlaps another seed block")));
            }
            occ.take(inst, b);
        }
        Ok(SeedSet { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

struct Occupancy {
    units: Vec<bool>,
}

impl Occupancy {
    fn new(inst: &Instance) -> Occupancy {
        Occupancy { units: vec![false; inst.num_units()] }
    }

    fn is_free(&self, inst: &Instance, b: usize) -> bool {
        inst.blocks[b].coverage.iter().all(|&i| !self.units[i])
    }

    fn take(&mut self, inst: &Instance, b: usize) {
        for &i in &inst.blocks[b].coverage {
            self.units[i] = true;
        }
    }
}

/// Admits pairs with `u >= rho` in descending-utility order (ties by block,
/// then service), skipping any that would overlap an admitted block.
pub fn seed_from_lp(inst: &Instance, u: &UtilityMatrix, rho: f64) -> Result<SeedSet> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidInput(format!("seeding threshold {rho} is outside (0, 1]")));
    }
    u.check_dims(inst)?;
    let mut cand: Vec<(usize, usize)> = (0..inst.num_blocks())
        .flat_map(|b| (0..inst.num_services()).map(move |k| (b, k)))
        .filter(|&(b, k)| u.get(b, k) >= rho)
        .collect();
    cand.sort_by(|&(b1, k1), &(b2, k2)| u.get(b2, k2).total_cmp(&u.get(b1, k1)).then((b1, k1).cmp(&(b2, k2))));
    let mut occ = Occupancy::new(inst);
    let mut pairs = Vec::new();
    for (b, k) in cand {
        if occ.is_free(inst, b) {
            occ.take(inst, b);
            pairs.push((b, k));
        }
    }
    Ok(SeedSet { pairs })
}

/// The shared selection order: utility desc, rate desc, block asc, service asc.
fn selection_order(inst: &Instance, u: &UtilityMatrix, a: (usize, usize), b: (usize, usize)) -> Ordering {
    u.get(b.0, b.1)
        .total_cmp(&u.get(a.0, a.1))
        .then(inst.rate(b.0, b.1).total_cmp(&inst.rate(a.0, a.1)))
        .then(a.cmp(&b))
}

/// Greedy assignment from seed `s` under utility `u`.
///
/// Phase 1 serves latency services with pairs of positive utility and
/// positive rate until every demand is met or no pair fits. Phase 2 gives
/// the remaining free blocks to capacity services; zero-utility pairs come
/// after all positive ones, ordered by rate. Zero-rate pairs are never
/// chosen.
pub fn ba(inst: &Instance, s: &SeedSet, u: &UtilityMatrix) -> Result<Assignment> {
    u.check_dims(inst)?;
    let n = inst.num_services();
    let mut occ = Occupancy::new(inst);
    let mut pairs = Vec::with_capacity(inst.num_blocks());
    let mut delivered = vec![0.0; n];
    for &(b, k) in s.pairs() {
        occ.take(inst, b);
        pairs.push((b, k));
        delivered[k] += inst.rate(b, k);
    }

    let mut open: Vec<bool> =
        inst.services.iter().map(|sv| sv.demand().is_some_and(|q| !demand_met(delivered[sv.id], q))).collect();
    let mut remaining = open.iter().filter(|&&o| o).count();

    if remaining > 0 {
        let mut cand: Vec<(usize, usize)> = Vec::new();
        for b in 0..inst.num_blocks() {
            for k in (0..n).filter(|&k| open[k]) {
                if u.get(b, k) > 0.0 && inst.rate(b, k) > 0.0 {
                    cand.push((b, k));
                }
            }
        }
        cand.sort_unstable_by(|&x, &y| selection_order(inst, u, x, y));
        for (b, k) in cand {
            if remaining == 0 {
                break;
            }
            if !open[k] || !occ.is_free(inst, b) {
                continue;
            }
            occ.take(inst, b);
            pairs.push((b, k));
            delivered[k] += inst.rate(b, k);
            if demand_met(delivered[k], inst.services[k].demand().unwrap_or(0.0)) {
                open[k] = false;
                remaining -= 1;
            }
        }
    }

    let capacity: Vec<usize> = inst.capacity_services().map(|sv| sv.id).collect();
    let mut cand: Vec<(usize, usize)> = Vec::new();
    for b in 0..inst.num_blocks() {
        for &k in &capacity {
            if inst.rate(b, k) > 0.0 {
                cand.push((b, k));
            }
        }
    }
    cand.sort_unstable_by(|&x, &y| selection_order(inst, u, x, y));
    for (b, k) in cand {
        if occ.is_free(inst, b) {
            occ.take(inst, b);
            pairs.push((b, k));
        }
    }
    Assignment::evaluate(inst, pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Rate,
    Lp,
    Ld,
    LpPlusLd,
}

/// The nineteen thresholds 0.05, 0.10, ..., 0.95.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub rho_grid: Vec<f64>,
    pub subgradient: SubgradientOptions,
    pub lp_max_iters: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self { rho_grid: default_rho_grid(), subgradient: SubgradientOptions::default(), lp_max_iters: 200_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: Option<Mode>,
    /// Arm that produced the result (`LP` or `LD`).
    pub arm: Option<Mode>,
    /// Winning seeding threshold of the LP arm.
    pub rho: Option<f64>,
    pub lp_status: Option<LpStatus>,
    pub lp_objective: Option<f64>,
    pub lp_iterations: Option<usize>,
    pub subgradient_iterations: Option<usize>,
    /// Best dual value seen (an upper bound on the optimum).
    pub dual_bound: Option<f64>,
    pub objective: f64,
    pub feasible: bool,
    pub unmet: Vec<usize>,
    pub blocks_used: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub assignment: Assignment,
    pub diagnostics: Diagnostics,
}

/// Feasible beats infeasible, then higher objective, then fewer blocks.
pub fn better(a: &Assignment, b: &Assignment) -> bool {
    if a.feasible != b.feasible {
        return a.feasible;
    }
    if a.objective != b.objective {
        return a.objective > b.objective;
    }
    a.blocks_used() < b.blocks_used()
}

pub fn run_pipeline(inst: &Instance, mode: Mode, params: &PipelineParams) -> Result<PipelineResult> {
    let mut diag = Diagnostics { mode: Some(mode), ..Default::default() };
    let assignment = match mode {
        Mode::Rate => ba(inst, &SeedSet::empty(), &UtilityMatrix::from_rates(inst))?,
        Mode::Lp => lp_arm(inst, params, &mut diag)?,
        Mode::Ld => ld_arm(inst, params, &mut diag)?,
        Mode::LpPlusLd => {
            let lp = lp_arm(inst, params, &mut diag)?;
            let ld = ld_arm(inst, params, &mut diag)?;
            if !better(&ld, &lp) {
                diag.arm = Some(Mode::Lp);
                lp
            } else {
                diag.arm = Some(Mode::Ld);
                diag.rho = None;
                ld
            }
        }
    };
    diag.objective = assignment.objective;
    diag.feasible = assignment.feasible;
    diag.unmet = assignment.unmet.clone();
    diag.blocks_used = assignment.blocks_used();
    Ok(PipelineResult { assignment, diagnostics: diag })
}

fn lp_arm(inst: &Instance, params: &PipelineParams, diag: &mut Diagnostics) -> Result<Assignment> {
    for &rho in &params.rho_grid {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidInput(format!("seeding threshold {rho} is outside (0, 1]")));
        }
    }
    let sol = solve_lp(&build_lp(inst), LP_TOL, params.lp_max_iters);
    diag.lp_status = Some(sol.status);
    diag.lp_iterations = Some(sol.iterations);
    if !sol.is_optimal() {
        diag.notes.push(format!("LP arm skipped: relaxation is {:?}", sol.status));
        return ba(
            inst,
            &SeedSet::empty(),
            &UtilityMatrix::zeros(inst.num_blocks(), inst.num_services(), Provenance::Lp),
        );
    }
    diag.lp_objective = Some(sol.objective);
    let u = lp_utility(&sol)?;
    let arms = params
        .rho_grid
        .par_iter()
        .map(|&rho| Ok((rho, ba(inst, &seed_from_lp(inst, &u, rho)?, &u)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, Assignment)> = None;
    for (rho, a) in arms {
        if best.as_ref().is_none_or(|(_, cur)| better(&a, cur)) {
            best = Some((rho, a));
        }
    }
    let (rho, a) = match best {
        Some(x) => x,
        // Empty grid: plain BA under the LP utility.
        None => return ba(inst, &SeedSet::empty(), &u),
    };
    diag.rho = Some(rho);
    diag.arm = Some(Mode::Lp);
    Ok(a)
}

fn ld_arm(inst: &Instance, params: &PipelineParams, diag: &mut Diagnostics) -> Result<Assignment> {
    let state = subgradient_run(inst, &params.subgradient, None)?;
    diag.subgradient_iterations = Some(state.iteration);
    diag.dual_bound = Some(state.g_best);
    if !state.no_cover.is_empty() {
        diag.notes.push(format!("LD arm: no cover exists for latency services {:?}", state.no_cover));
    }
    if diag.arm.is_none() {
        diag.arm = Some(Mode::Ld);
    }
    ba(inst, &SeedSet::empty(), &ld_utility(&state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{builtin_shapes, NumerologyShape, ResourceGrid};
    use crate::instance::{
        check_assignment, partition_instance, random_instance, InstanceParams, ServiceClass, ServiceSpec,
    };
    use proptest::prelude::*;

    fn cap() -> ServiceSpec {
        ServiceSpec { class: ServiceClass::Capacity, snr_db: 0.0 }
    }

    /// 2x2 grid holding two stacked 1x2 blocks and one 2x2 block.
    fn stacked_instance() -> Instance {
        let short = NumerologyShape::new("short", 30.0, 0.125, 33.3, 2.3, 3).unwrap();
        let square = builtin_shapes()[1].clone();
        let grid = ResourceGrid::with_units(2, 2, 0.125, 180.0).unwrap();
        Instance::with_rates(grid, vec![short, square], 12, vec![cap()], vec![vec![3.0], vec![3.0], vec![5.0]]).unwrap()
    }

    #[test]
    fn greedy_gap_on_stacked_blocks() {
        let inst = stacked_instance();
        assert_eq!(inst.blocks.iter().map(|b| (b.t_span, b.f_span)).collect::<Vec<_>>(), vec![(1, 2), (1, 2), (2, 2)]);
        let a = ba(&inst, &SeedSet::empty(), &UtilityMatrix::from_rates(&inst)).unwrap();
        assert_eq!(a.pairs, vec![(2, 0)]);
        assert_eq!(a.objective, 5.0);
        let opt = crate::exact::brute_force(&inst).unwrap();
        assert_eq!(opt.value, 6.0);
    }

    #[test]
    fn single_pair_assignment() {
        let grid = ResourceGrid::with_units(1, 1, 0.125, 720.0).unwrap();
        let inst =
            Instance::with_rates(grid, vec![builtin_shapes()[2].clone()], 12, vec![cap()], vec![vec![7.0]]).unwrap();
        let a = ba(&inst, &SeedSet::empty(), &UtilityMatrix::from_rates(&inst)).unwrap();
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.objective, 7.0);
    }

    #[test]
    fn oversized_demand_is_flagged_and_phase_two_runs() {
        let grid = ResourceGrid::with_units(1, 3, 0.125, 720.0).unwrap();
        let lat = ServiceSpec { class: ServiceClass::Latency { demand_bits: 100.0, latency_ms: 1.0 }, snr_db: 0.0 };
        let inst = Instance::with_rates(
            grid,
            vec![builtin_shapes()[2].clone()],
            12,
            vec![lat, cap()],
            vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]],
        )
        .unwrap();
        let a = ba(&inst, &SeedSet::empty(), &UtilityMatrix::from_rates(&inst)).unwrap();
        assert!(!a.feasible);
        assert_eq!(a.unmet, vec![0]);
        // all three blocks went to the latency service first
        assert_eq!(a.objective, 0.0);
        assert_eq!(a.pairs.len(), 3);
    }

    #[test]
    fn seeding_examples() {
        let inst = partition_instance(&[1, 1]).unwrap();
        let mut u = UtilityMatrix::zeros(2, 2, Provenance::Lp);
        assert!(seed_from_lp(&inst, &u, 0.5).unwrap().is_empty());
        u.set(1, 0, 1.0);
        assert_eq!(seed_from_lp(&inst, &u, 0.95).unwrap().pairs(), &[(1, 0)]);
        // same block twice: only the higher pair survives
        let mut u = UtilityMatrix::zeros(2, 2, Provenance::Lp);
        u.set(0, 0, 0.8);
        u.set(0, 1, 0.9);
        assert_eq!(seed_from_lp(&inst, &u, 0.5).unwrap().pairs(), &[(0, 1)]);
        assert!(seed_from_lp(&inst, &u, 0.0).is_err());
        assert!(seed_from_lp(&inst, &u, 1.5).is_err());
    }

    #[test]
    fn seed_overlap_rejected() {
        let inst = partition_instance(&[1, 1]).unwrap();
        assert!(SeedSet::new(&inst, vec![(0, 0), (0, 1)]).is_err());
        assert!(SeedSet::new(&inst, vec![(0, 0), (1, 1)]).is_ok());
    }

    #[test]
    fn rate_mode_on_small_partition() {
        let inst = partition_instance(&[1, 1]).unwrap();
        let r = run_pipeline(&inst, Mode::Rate, &PipelineParams::default()).unwrap();
        assert!(r.assignment.feasible);
        assert_eq!(r.assignment.objective, 1.0);
    }

    #[test]
    fn integral_lp_is_reproduced() {
        // one capacity service, disjoint unit blocks: LP optimum is all ones
        let grid = ResourceGrid::with_units(2, 2, 0.125, 720.0).unwrap();
        let inst = Instance::with_rates(
            grid,
            vec![builtin_shapes()[2].clone()],
            12,
            vec![cap()],
            vec![vec![3.0], vec![4.0], vec![5.0], vec![6.0]],
        )
        .unwrap();
        let r = run_pipeline(&inst, Mode::Lp, &PipelineParams::default()).unwrap();
        assert_eq!(r.assignment.objective, 18.0);
        assert_eq!(r.diagnostics.lp_objective, Some(18.0));
    }

    #[test]
    fn combiner_is_at_least_each_arm() {
        for seed in 0..3 {
            let params = InstanceParams {
                horizon_ms: 1.0,
                bandwidth_khz: 1000.0,
                num_latency: 2,
                num_capacity: 2,
                ..Default::default()
            };
            let inst = random_instance(&params, seed).unwrap();
            let p = PipelineParams {
                subgradient: SubgradientOptions { max_iters: 30, ..Default::default() },
                ..Default::default()
            };
            let lp = run_pipeline(&inst, Mode::Lp, &p).unwrap().assignment;
            let ld = run_pipeline(&inst, Mode::Ld, &p).unwrap().assignment;
            let both = run_pipeline(&inst, Mode::LpPlusLd, &p).unwrap().assignment;
            assert!(!better(&lp, &both) && !better(&ld, &both));
            for a in [&lp, &ld, &both] {
                let rep = check_assignment(&inst, &a.pairs).unwrap();
                assert!(rep.overlaps.is_empty() && rep.repeated_blocks.is_empty());
            }
        }
    }

    #[test]
    fn infeasible_lp_skips_arm() {
        let inst = partition_instance(&[2, 4, 10]).unwrap();
        let mut tight = inst.clone();
        // demand above the total rate
        tight.services[0].class = ServiceClass::Latency { demand_bits: 100.0, latency_ms: 0.125 };
        let r = run_pipeline(&tight, Mode::LpPlusLd, &PipelineParams::default()).unwrap();
        assert_eq!(r.diagnostics.lp_status, Some(LpStatus::Infeasible));
        assert!(!r.assignment.feasible);
        assert!(!r.diagnostics.notes.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn scaling_utility_keeps_output(seed in 0u64..1000, c in 0.01f64..100.0) {
            let params = InstanceParams { horizon_ms: 1.0, bandwidth_khz: 720.0, num_latency: 2, num_capacity: 2, ..Default::default() };
            let inst = random_instance(&params, seed).unwrap();
            let u = UtilityMatrix::from_rates(&inst);
            let a = ba(&inst, &SeedSet::empty(), &u).unwrap();
            let b = ba(&inst, &SeedSet::empty(), &u.scaled(c)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn output_never_overlaps(seed in 0u64..1000) {
            let params = InstanceParams { horizon_ms: 1.0, bandwidth_khz: 1000.0, num_latency: 2, num_capacity: 2, ..Default::default() };
            let inst = random_instance(&params, seed).unwrap();
            let a = ba(&inst, &SeedSet::empty(), &UtilityMatrix::from_rates(&inst)).unwrap();
            let rep = check_assignment(&inst, &a.pairs).unwrap();
            prop_assert!(rep.overlaps.is_empty() && rep.repeated_blocks.is_empty());
        }
    }
}
