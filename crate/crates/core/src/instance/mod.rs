//! The allocation problem: blocks, services and the block-service rate matrix.
//!
//! Latency services carry a demand `q_k` (bits) that must be delivered by
//! blocks ending no later than the deadline `tau_k`; capacity services are
//! full-buffer and their total rate is the objective. A block that ends after
//! a latency service's deadline gets rate zero for that service.

mod file;
mod generate;

use serde::{Deserialize, Serialize};

use crate::channel::{block_rate, realize_channel, ChannelRealization, MultipathProfile, RateConfig};
use crate::error::{Error, Result};
use crate::grid::{enumerate_blocks, Block, NumerologyShape, ResourceGrid};
use crate::seed;

pub use file::{write_rates_csv, InstanceFile};
pub use generate::{partition_instance, random_instance, InstanceParams, ValueChoice};

/// Relative slack used when comparing delivered bits against a demand.
pub const DEMAND_TOL: f64 = 1e-7;

/// Relative slack on deadline comparisons (block end times are computed).
const DEADLINE_TOL: f64 = 1e-9;

/// True when `delivered` bits satisfy `demand`.
pub fn demand_met(delivered: f64, demand: f64) -> bool {
    delivered >= demand - DEMAND_TOL * demand.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ServiceClass {
    Latency { demand_bits: f64, latency_ms: f64 },
    Capacity,
}

impl ServiceClass {
    pub fn is_latency(&self) -> bool {
        matches!(self, ServiceClass::Latency { .. })
    }
}

/// Input description of one service before its channel is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceSpec {
    pub class: ServiceClass,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Service {
    pub id: usize,
    pub class: ServiceClass,
    pub snr_db: f64,
    /// `None` when the instance was built from an explicit rate matrix.
    pub channel: Option<ChannelRealization>,
}

impl Service {
    pub fn demand(&self) -> Option<f64> {
        match self.class {
            ServiceClass::Latency { demand_bits, .. } => Some(demand_bits),
            ServiceClass::Capacity => None,
        }
    }

    pub fn deadline(&self) -> Option<f64> {
        match self.class {
            ServiceClass::Latency { latency_ms, .. } => Some(latency_ms),
            ServiceClass::Capacity => None,
        }
    }

    pub fn is_latency(&self) -> bool {
        self.class.is_latency()
    }
}

/// Free-form provenance carried along with an instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// How demands given as bit rates were turned into bits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_convention: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceFile", try_from = "InstanceFile")]
pub struct Instance {
    pub grid: ResourceGrid,
    pub shapes: Vec<NumerologyShape>,
    pub subcarriers_per_block: u32,
    pub profile: MultipathProfile,
    pub rate_config: RateConfig,
    pub blocks: Vec<Block>,
    pub services: Vec<Service>,
    /// Row-major `|B| x |K|`.
    rates: Vec<f64>,
    explicit_rates: bool,
    pub metadata: InstanceMetadata,
}

impl Instance {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_services(&self) -> usize {
        self.services.len()
    }

    pub fn num_units(&self) -> usize {
        self.grid.num_units()
    }

    #[inline]
    pub fn rate(&self, b: usize, k: usize) -> f64 {
        self.rates[b * self.services.len() + k]
    }

    /// Rates of block `b` for every service.
    pub fn block_rates(&self, b: usize) -> &[f64] {
        let n = self.services.len();
        &self.rates[b * n..(b + 1) * n]
    }

    pub fn has_explicit_rates(&self) -> bool {
        self.explicit_rates
    }

    pub fn latency_services(&self) -> impl Iterator<Item = &Service> + '_ {
        self.services.iter().filter(|s| s.is_latency())
    }

    pub fn capacity_services(&self) -> impl Iterator<Item = &Service> + '_ {
        self.services.iter().filter(|s| !s.is_latency())
    }

    pub fn num_latency(&self) -> usize {
        self.latency_services().count()
    }

    pub fn num_capacity(&self) -> usize {
        self.capacity_services().count()
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }

    /// Keeps only the blocks of one shape (ids are re-densified).
    pub fn restrict_to_shape(&self, shape: usize) -> Instance {
        let mut rates = Vec::new();
        let mut blocks = Vec::new();
        for b in self.blocks.iter().filter(|b| b.shape == shape) {
            rates.extend_from_slice(self.block_rates(b.id));
            blocks.push(Block { id: blocks.len(), ..b.clone() });
        }
        Instance { blocks, rates, ..self.clone() }
    }

    /// An instance over the given parts with a caller-supplied rate matrix
    /// (`rates[b][k]`). The latency mask is still applied.
    pub fn with_rates(
        grid: ResourceGrid,
        shapes: Vec<NumerologyShape>,
        subcarriers_per_block: u32,
        services: Vec<ServiceSpec>,
        rates: Vec<Vec<f64>>,
    ) -> Result<Instance> {
        let blocks = enumerate_blocks(&grid, &shapes, subcarriers_per_block)?;
        if rates.len() != blocks.len() || rates.iter().any(|row| row.len() != services.len()) {
            return Err(Error::InvalidInput(format!("rate matrix must be {} x {}", blocks.len(), services.len())));
        }
        let services = services
            .into_iter()
            .enumerate()
            .map(|(id, s)| Service { id, class: s.class, snr_db: s.snr_db, channel: None })
            .collect();
        Self::assemble(
            grid,
            shapes,
            subcarriers_per_block,
            MultipathProfile::single_tap(),
            RateConfig::default(),
            blocks,
            services,
            rates.into_iter().flatten().collect(),
            true,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        grid: ResourceGrid,
        shapes: Vec<NumerologyShape>,
        subcarriers_per_block: u32,
        profile: MultipathProfile,
        rate_config: RateConfig,
        blocks: Vec<Block>,
        services: Vec<Service>,
        mut rates: Vec<f64>,
        explicit_rates: bool,
    ) -> Result<Instance> {
        for s in &services {
            if let ServiceClass::Latency { demand_bits, latency_ms } = s.class {
                if !(demand_bits > 0.0 && latency_ms > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "latency service {} needs positive demand and deadline",
                        s.id
                    )));
                }
            }
            if !s.snr_db.is_finite() {
                return Err(Error::InvalidInput(format!("service {} has non-finite SNR", s.id)));
            }
        }
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidInput("rates must be finite and nonnegative".into()));
        }
        let n = services.len();
        for b in &blocks {
            for s in &services {
                if let Some(tau) = s.deadline() {
                    if b.end_time_ms > tau * (1.0 + DEADLINE_TOL) {
                        rates[b.id * n + s.id] = 0.0;
                    }
                }
            }
        }
        Ok(Instance {
            grid,
            shapes,
            subcarriers_per_block,
            profile,
            rate_config,
            blocks,
            services,
            rates,
            explicit_rates,
            metadata: InstanceMetadata::default(),
        })
    }
}

/// Draws one channel per service and fills the latency-masked rate matrix.
pub fn build_instance(
    grid: ResourceGrid,
    shapes: Vec<NumerologyShape>,
    subcarriers_per_block: u32,
    services: &[ServiceSpec],
    profile: MultipathProfile,
    rate_config: RateConfig,
    seed: u64,
) -> Result<Instance> {
    let channels = services
        .iter()
        .enumerate()
        .map(|(k, _)| {
            realize_channel(&profile, grid.n_freq, grid.unit_bw_khz, seed::derive(seed, seed::STREAM_CHANNEL, k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let services = services
        .iter()
        .zip(channels)
        .enumerate()
        .map(|(id, (s, ch))| Service { id, class: s.class, snr_db: s.snr_db, channel: Some(ch) })
        .collect();
    let mut inst = from_channels(grid, shapes, subcarriers_per_block, profile, rate_config, services)?;
    inst.metadata.seed = Some(seed);
    Ok(inst)
}

/// Builds an instance whose services already carry their channels.
pub(crate) fn from_channels(
    grid: ResourceGrid,
    shapes: Vec<NumerologyShape>,
    subcarriers_per_block: u32,
    profile: MultipathProfile,
    rate_config: RateConfig,
    services: Vec<Service>,
) -> Result<Instance> {
    for s in &shapes {
        s.validate()?;
    }
    rate_config.validate(&shapes)?;
    profile.validate()?;
    let blocks = enumerate_blocks(&grid, &shapes, subcarriers_per_block)?;
    let mut rates = Vec::with_capacity(blocks.len() * services.len());
    for b in &blocks {
        for s in &services {
            let ch = s.channel.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("service {} has neither a channel nor explicit rates", s.id))
            })?;
            rates.push(block_rate(b, &shapes[b.shape], &grid, s.snr_db, ch, &rate_config)?);
        }
    }
    Instance::assemble(grid, shapes, subcarriers_per_block, profile, rate_config, blocks, services, rates, false)
}

/// A set of block-service pairs with its evaluation against an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    /// Sum of rates over capacity-service pairs (bits).
    pub objective: f64,
    pub feasible: bool,
    /// Latency services whose demand is not met.
    pub unmet: Vec<usize>,
}

impl Assignment {
    /// Evaluates `pairs` (sorted on the way in).
    pub fn evaluate(inst: &Instance, mut pairs: Vec<(usize, usize)>) -> Result<Assignment> {
        pairs.sort_unstable();
        let report = check_assignment(inst, &pairs)?;
        Ok(Assignment { pairs, objective: report.objective, feasible: report.feasible, unmet: report.unmet })
    }

    pub fn empty(inst: &Instance) -> Assignment {
        Assignment::evaluate(inst, Vec::new()).expect("empty assignment always has valid ids")
    }

    pub fn blocks_used(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandStatus {
    pub service: usize,
    pub demand_bits: f64,
    pub delivered_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub objective: f64,
    pub feasible: bool,
    pub demands: Vec<DemandStatus>,
    pub unmet: Vec<usize>,
    /// Pairs of block ids that share a basic unit.
    pub overlaps: Vec<(usize, usize)>,
    /// Blocks assigned more than once.
    pub repeated_blocks: Vec<usize>,
}

/// Recomputes non-overlap, demand satisfaction and the capacity objective.
pub fn check_assignment(inst: &Instance, pairs: &[(usize, usize)]) -> Result<FeasibilityReport> {
    for &(b, k) in pairs {
        if b >= inst.num_blocks() {
            return Err(Error::UnknownId { kind: "block", id: b });
        }
        if k >= inst.num_services() {
            return Err(Error::UnknownId { kind: "service", id: k });
        }
    }
    let mut owner: Vec<Option<usize>> = vec![None; inst.num_units()];
    let mut seen = vec![false; inst.num_blocks()];
    let mut overlaps = Vec::new();
    let mut repeated_blocks = Vec::new();
    let mut delivered = vec![0.0; inst.num_services()];
    let mut objective = 0.0;
    for &(b, k) in pairs {
        if seen[b] {
            repeated_blocks.push(b);
        }
        seen[b] = true;
        for &i in &inst.blocks[b].coverage {
            match owner[i] {
                Some(other) if other != b => {
                    let key = (other.min(b), other.max(b));
                    if !overlaps.contains(&key) {
                        overlaps.push(key);
                    }
                }
                _ => owner[i] = Some(b),
            }
        }
        let r = inst.rate(b, k);
        delivered[k] += r;
        if !inst.services[k].is_latency() {
            objective += r;
        }
    }
    let demands: Vec<DemandStatus> = inst
        .latency_services()
        .map(|s| DemandStatus {
            service: s.id,
            demand_bits: s.demand().unwrap_or(0.0),
            delivered_bits: delivered[s.id],
        })
        .collect();
    let unmet: Vec<usize> =
        demands.iter().filter(|d| !demand_met(d.delivered_bits, d.demand_bits)).map(|d| d.service).collect();
    repeated_blocks.sort_unstable();
    repeated_blocks.dedup();
    overlaps.sort_unstable();
    let feasible = unmet.is_empty() && overlaps.is_empty() && repeated_blocks.is_empty();
    Ok(FeasibilityReport { objective, feasible, demands, unmet, overlaps, repeated_blocks })
}
