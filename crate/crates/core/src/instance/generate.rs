use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{from_channels, Instance, Service, ServiceClass, ServiceSpec};
use crate::channel::{realize_channel, MultipathProfile, RateConfig};
use crate::error::{Error, Result};
use crate::grid::{builtin_shapes, NumerologyShape, ResourceGrid};
use crate::seed;

pub const DEMAND_CONVENTION: &str = "demand_bits = demand_kbps * horizon_ms";

/// A parameter that is either pinned or drawn uniformly from a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueChoice {
    Fixed(f64),
    OneOf(Vec<f64>),
}

impl ValueChoice {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ValueChoice::Fixed(v) => *v,
            ValueChoice::OneOf(vs) => vs[rng.random_range(0..vs.len())],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            ValueChoice::Fixed(v) => std::slice::from_ref(v),
            ValueChoice::OneOf(vs) => vs,
        }
    }
}

/// Random-instance generator settings. Defaults reproduce the benchmark
/// table: 2 ms x 2 MHz, 5 latency + 5 capacity services, SNR in [5, 30] dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceParams {
    pub horizon_ms: f64,
    pub bandwidth_khz: f64,
    pub subcarriers_per_block: u32,
    pub shapes: Vec<NumerologyShape>,
    pub num_latency: usize,
    pub num_capacity: usize,
    pub snr_db_range: [f64; 2],
    pub demand_kbps: ValueChoice,
    pub latency_ms: ValueChoice,
    pub profile: MultipathProfile,
    pub rate_config: RateConfig,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            horizon_ms: 2.0,
            bandwidth_khz: 2000.0,
            subcarriers_per_block: 12,
            shapes: builtin_shapes(),
            num_latency: 5,
            num_capacity: 5,
            snr_db_range: [5.0, 30.0],
            demand_kbps: ValueChoice::OneOf(vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0]),
            latency_ms: ValueChoice::OneOf(vec![0.25, 0.5, 1.0, 1.5, 2.0]),
            profile: MultipathProfile::extended_vehicular_a(),
            rate_config: RateConfig::default(),
        }
    }
}

impl InstanceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.horizon_ms > 0.0 && self.bandwidth_khz > 0.0) {
            return bad("horizon_ms and bandwidth_khz must be positive");
        }
        if self.shapes.is_empty() {
            return bad("at least one shape is required");
        }
        let [lo, hi] = self.snr_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("snr_db_range must be [low, high] with low <= high");
        }
        for (name, choice) in [("demand_kbps", &self.demand_kbps), ("latency_ms", &self.latency_ms)] {
            if choice.values().is_empty() || choice.values().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput(format!("{name} must hold positive values")));
            }
        }
        for s in &self.shapes {
            s.validate()?;
        }
        self.profile.validate()?;
        self.rate_config.validate(&self.shapes)
    }

    pub fn grid(&self) -> Result<ResourceGrid> {
        ResourceGrid::for_shapes(self.horizon_ms, self.bandwidth_khz, &self.shapes, self.subcarriers_per_block)
    }

    pub fn demand_bits(&self, demand_kbps: f64) -> f64 {
        demand_kbps * self.horizon_ms
    }
}

/// Draws service parameters and channels from `params`.
///
/// Services `0..num_latency` are latency-critical, the rest capacity. Each
/// service draws from its own sub-stream, so changing one parameter choice
/// leaves the other services' draws (and all channels) untouched.
pub fn random_instance(params: &InstanceParams, seed: u64) -> Result<Instance> {
    params.validate()?;
    let grid = params.grid()?;
    let [lo, hi] = params.snr_db_range;
    let total = params.num_latency + params.num_capacity;
    let mut services = Vec::with_capacity(total);
    for k in 0..total {
        let mut rng = seed::rng(seed::derive(seed, seed::STREAM_SERVICE, k as u64));
        let snr_db = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let class = if k < params.num_latency {
            let demand_bits = params.demand_bits(params.demand_kbps.draw(&mut rng));
            let latency_ms = params.latency_ms.draw(&mut rng);
            ServiceClass::Latency { demand_bits, latency_ms }
        } else {
            ServiceClass::Capacity
        };
        let channel = realize_channel(
            &params.profile,
            grid.n_freq,
            grid.unit_bw_khz,
            seed::derive(seed, seed::STREAM_CHANNEL, k as u64),
        )?;
        services.push(Service { id: k, class, snr_db, channel: Some(channel) });
    }
    let mut inst = from_channels(
        grid,
        params.shapes.clone(),
        params.subcarriers_per_block,
        params.profile.clone(),
        params.rate_config.clone(),
        services,
    )?;
    inst.metadata.seed = Some(seed);
    inst.metadata.source = Some("random".into());
    inst.metadata.demand_convention = Some(DEMAND_CONVENTION.into());
    Ok(inst)
}

/// Instance encoding an equal-sum partition question over `values`.
///
/// One TTI of `n` single-unit blocks, a latency service demanding half the
/// total and a capacity service, both getting rate `d_b` on block `b`. The
/// optimum reaches half the total exactly when an equal partition exists.
pub fn partition_instance(values: &[u64]) -> Result<Instance> {
    if values.len() < 2 {
        return Err(Error::InvalidInput("partition needs at least two integers".into()));
    }
    let total: u64 = values.iter().sum();
    if !total.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("partition total {total} is odd")));
    }
    if total == 0 {
        return Err(Error::InvalidInput("partition integers must not all be zero".into()));
    }
    let shape = builtin_shapes().swap_remove(2);
    let unit_bw = shape.scs_khz * 12.0;
    let grid = ResourceGrid::with_units(1, values.len(), shape.tti_ms, unit_bw)?;
    let tti = shape.tti_ms;
    let services = vec![
        ServiceSpec { class: ServiceClass::Latency { demand_bits: (total / 2) as f64, latency_ms: tti }, snr_db: 0.0 },
        ServiceSpec { class: ServiceClass::Capacity, snr_db: 0.0 },
    ];
    let rates = values.iter().map(|&d| vec![d as f64, d as f64]).collect();
    let mut inst = Instance::with_rates(grid, vec![shape], 12, services, rates)?;
    inst.metadata.source = Some("partition".into());
    Ok(inst)
}
