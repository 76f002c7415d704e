//! JSON instance document and CSV rate export.
//!
//! Blocks are not stored: they are re-enumerated from the grid and shapes on
//! load. Rates are stored only when the instance was built from an explicit
//! rate matrix; otherwise they are recomputed from the stored channel gains.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{from_channels, Instance, InstanceMetadata, Service, ServiceClass, ServiceSpec};
use crate::channel::{ChannelRealization, MultipathProfile, RateConfig};
use crate::error::{Error, Result};
use crate::grid::{NumerologyShape, ResourceGrid};

pub const FORMAT: &str = "flexalloc-instance/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRecord {
    pub total_time_ms: f64,
    pub total_bw_khz: f64,
    pub unit_time_ms: f64,
    pub unit_bw_khz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRecord {
    pub seed: u64,
    pub freq_gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub id: usize,
    #[serde(flatten)]
    pub class: ServiceClass,
    pub snr_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format: String,
    pub grid: GridRecord,
    pub subcarriers_per_block: u32,
    pub shapes: Vec<NumerologyShape>,
    pub profile: MultipathProfile,
    pub rate_config: RateConfig,
    pub services: Vec<ServiceRecord>,
    /// Explicit `rates[b][k]`, overriding the channel model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub metadata: InstanceMetadata,
}

impl From<Instance> for InstanceFile {
    fn from(inst: Instance) -> Self {
        let rates = inst.explicit_rates.then(|| (0..inst.num_blocks()).map(|b| inst.block_rates(b).to_vec()).collect());
        let services = inst
            .services
            .iter()
            .map(|s| ServiceRecord {
                id: s.id,
                class: s.class,
                snr_db: s.snr_db,
                channel: s.channel.as_ref().map(|c| ChannelRecord { seed: c.seed, freq_gains: c.freq_gains.clone() }),
            })
            .collect();
        InstanceFile {
            format: FORMAT.into(),
            grid: GridRecord {
                total_time_ms: inst.grid.total_time_ms,
                total_bw_khz: inst.grid.total_bw_khz,
                unit_time_ms: inst.grid.unit_time_ms,
                unit_bw_khz: inst.grid.unit_bw_khz,
            },
            subcarriers_per_block: inst.subcarriers_per_block,
            shapes: inst.shapes,
            profile: inst.profile,
            rate_config: inst.rate_config,
            services,
            rates,
            metadata: inst.metadata,
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Instance> {
        if file.format != FORMAT {
            return Err(Error::InvalidInput(format!(
                "unsupported instance format `{}` (expected `{FORMAT}`)",
                file.format
            )));
        }
        for (i, s) in file.services.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidInput(format!("service ids must be dense; found {} at {i}", s.id)));
            }
        }
        let g = &file.grid;
        let grid = ResourceGrid::new(g.total_time_ms, g.total_bw_khz, g.unit_time_ms, g.unit_bw_khz)?;
        let mut inst = match file.rates {
            Some(rates) => {
                let specs = file.services.iter().map(|s| ServiceSpec { class: s.class, snr_db: s.snr_db }).collect();
                let mut inst = Instance::with_rates(grid, file.shapes, file.subcarriers_per_block, specs, rates)?;
                inst.profile = file.profile;
                inst.rate_config = file.rate_config;
                inst
            }
            None => {
                let services = file
                    .services
                    .into_iter()
                    .map(|s| {
                        let ch = s.channel.ok_or_else(|| {
                            Error::InvalidInput(format!("service {} has no channel and no rates are given", s.id))
                        })?;
                        if ch.freq_gains.len() != grid.n_freq {
                            return Err(Error::InvalidInput(format!(
                                "service {} has {} channel gains, grid has {} frequency units",
                                s.id,
                                ch.freq_gains.len(),
                                grid.n_freq
                            )));
                        }
                        Ok(Service {
                            id: s.id,
                            class: s.class,
                            snr_db: s.snr_db,
                            channel: Some(ChannelRealization {
                                freq_gains: ch.freq_gains,
                                seed: ch.seed,
                                profile: file.profile.clone(),
                            }),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                from_channels(grid, file.shapes, file.subcarriers_per_block, file.profile, file.rate_config, services)?
            }
        };
        inst.metadata = file.metadata;
        Ok(inst)
    }
}

impl Instance {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
        Instance::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// One row per block: geometry followed by its rate for every service.
pub fn write_rates_csv<W: Write>(inst: &Instance, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["block", "shape", "t0", "f0", "t_span", "f_span", "end_time_ms"].iter().map(|s| s.to_string()).collect();
    header.extend(inst.services.iter().map(|s| format!("r_{}", s.id)));
    w.write_record(&header)?;
    for b in &inst.blocks {
        let mut row = vec![
            b.id.to_string(),
            inst.shapes[b.shape].id.clone(),
            b.t0.to_string(),
            b.f0.to_string(),
            b.t_span.to_string(),
            b.f_span.to_string(),
            b.end_time_ms.to_string(),
        ];
        row.extend(inst.block_rates(b.id).iter().map(|r| r.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
