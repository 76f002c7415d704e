//! Basic-unit resource grid and candidate block enumeration.
//!
//! A [`ResourceGrid`] discretizes the scheduling horizon and the carrier
//! bandwidth into basic units. Each [`NumerologyShape`] (subcarrier spacing,
//! TTI, cyclic prefix) has a fixed footprint in basic units, and placing that
//! footprint at every offset of the grid yields the candidate [`Block`]s.
//!
//! Basic units are indexed `t * n_freq + f`, i.e. frequency-major within each
//! time unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FOOTPRINT_TOL: f64 = 1e-6;

/// One block template: an OFDM numerology together with its TTI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumerologyShape {
    pub id: String,
    pub scs_khz: f64,
    pub tti_ms: f64,
    pub symbol_us: f64,
    pub cp_us: f64,
    pub num_symbols: u32,
}

impl NumerologyShape {
    pub fn new(
        id: impl Into<String>,
        scs_khz: f64,
        tti_ms: f64,
        symbol_us: f64,
        cp_us: f64,
        num_symbols: u32,
    ) -> Result<Self> {
        let shape = Self { id: id.into(), scs_khz, tti_ms, symbol_us, cp_us, num_symbols };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidShape { id: self.id.clone(), reason };
        let fields = [self.scs_khz, self.tti_ms, self.symbol_us, self.cp_us];
        if fields.iter().any(|v| !v.is_finite() || *v <= 0.0) || self.num_symbols == 0 {
            return Err(bad("all fields must be strictly positive".into()));
        }
        let occupied_us = f64::from(self.num_symbols) * (self.symbol_us + self.cp_us);
        if occupied_us > self.tti_ms * 1000.0 * 1.01 {
            return Err(bad(format!(
                "{} symbols occupy {occupied_us:.2} us, more than the {} ms TTI",
                self.num_symbols, self.tti_ms
            )));
        }
        let product = self.symbol_us * self.scs_khz;
        if (product - 1000.0).abs() > 10.0 {
            return Err(bad(format!("symbol duration x SCS = {product:.2}, expected 1000 within 1%")));
        }
        Ok(())
    }

    /// Label in the `TTI-SCS` style, e.g. `0.25ms-30kHz`.
    pub fn tti_scs_label(&self) -> String {
        format!("{}ms-{}kHz", self.tti_ms, self.scs_khz)
    }

    /// Footprint `(t_span, f_span)` in basic units.
    pub fn footprint(&self, grid: &ResourceGrid, subcarriers_per_block: u32) -> Result<(usize, usize)> {
        let t = self.tti_ms / grid.unit_time_ms;
        let f = self.scs_khz * f64::from(subcarriers_per_block) / grid.unit_bw_khz;
        let t_span = integral_span(&self.id, "time", t)?;
        let f_span = integral_span(&self.id, "frequency", f)?;
        Ok((t_span, f_span))
    }
}

fn integral_span(id: &str, axis: &'static str, span: f64) -> Result<usize> {
    let rounded = span.round();
    if rounded < 1.0 || (span - rounded).abs() > FOOTPRINT_TOL * span.max(1.0) {
        return Err(Error::NonIntegralFootprint { id: id.to_string(), axis, span });
    }
    Ok(rounded as usize)
}

/// The four shapes considered for benchmarking: 15/30/60 kHz SCS with normal
/// CP and a 60 kHz variant with extended CP.
pub fn builtin_shapes() -> Vec<NumerologyShape> {
    vec![
        NumerologyShape {
            id: "shape1".into(),
            scs_khz: 15.0,
            tti_ms: 0.5,
            symbol_us: 66.7,
            cp_us: 4.7,
            num_symbols: 7,
        },
        NumerologyShape {
            id: "shape2".into(),
            scs_khz: 30.0,
            tti_ms: 0.25,
            symbol_us: 33.3,
            cp_us: 2.3,
            num_symbols: 7,
        },
        NumerologyShape {
            id: "shape3".into(),
            scs_khz: 60.0,
            tti_ms: 0.125,
            symbol_us: 16.7,
            cp_us: 1.2,
            num_symbols: 7,
        },
        NumerologyShape {
            id: "shape3e".into(),
            scs_khz: 60.0,
            tti_ms: 0.125,
            symbol_us: 16.7,
            cp_us: 4.17,
            num_symbols: 6,
        },
    ]
}

/// Time-frequency plane split into basic units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceGrid {
    pub total_time_ms: f64,
    pub total_bw_khz: f64,
    pub unit_time_ms: f64,
    pub unit_bw_khz: f64,
    pub n_time: usize,
    pub n_freq: usize,
}

impl ResourceGrid {
    pub fn new(total_time_ms: f64, total_bw_khz: f64, unit_time_ms: f64, unit_bw_khz: f64) -> Result<Self> {
        let all = [total_time_ms, total_bw_khz, unit_time_ms, unit_bw_khz];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidGrid("all dimensions must be positive and finite".into()));
        }
        // Guard the floor against 2.0 / 0.125 landing at 15.999...
        let n_time = (total_time_ms / unit_time_ms + 1e-9).floor() as usize;
        let n_freq = (total_bw_khz / unit_bw_khz + 1e-9).floor() as usize;
        if n_time == 0 || n_freq == 0 {
            return Err(Error::InvalidGrid("grid holds no basic unit".into()));
        }
        Ok(Self { total_time_ms, total_bw_khz, unit_time_ms, unit_bw_khz, n_time, n_freq })
    }

    /// Grid whose basic unit is the smallest TTI by the bandwidth of
    /// `subcarriers_per_block` subcarriers at the smallest SCS.
    pub fn for_shapes(
        total_time_ms: f64,
        total_bw_khz: f64,
        shapes: &[NumerologyShape],
        subcarriers_per_block: u32,
    ) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::InvalidGrid("at least one shape is required".into()));
        }
        let min_tti = shapes.iter().map(|s| s.tti_ms).fold(f64::INFINITY, f64::min);
        let min_scs = shapes.iter().map(|s| s.scs_khz).fold(f64::INFINITY, f64::min);
        Self::new(total_time_ms, total_bw_khz, min_tti, min_scs * f64::from(subcarriers_per_block))
    }

    /// Grid of `n_time x n_freq` units of the given size.
    pub fn with_units(n_time: usize, n_freq: usize, unit_time_ms: f64, unit_bw_khz: f64) -> Result<Self> {
        Self::new(n_time as f64 * unit_time_ms, n_freq as f64 * unit_bw_khz, unit_time_ms, unit_bw_khz)
    }

    pub fn num_units(&self) -> usize {
        self.n_time * self.n_freq
    }

    #[inline]
    pub fn unit_index(&self, t: usize, f: usize) -> usize {
        t * self.n_freq + f
    }
}

/// A shape placed at one position of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    /// Index into the shape list the block was enumerated from.
    pub shape: usize,
    pub t0: usize,
    pub f0: usize,
    pub t_span: usize,
    pub f_span: usize,
    /// Sorted basic-unit indices covered by the block.
    pub coverage: Vec<usize>,
    pub end_time_ms: f64,
}

impl Block {
    pub fn freq_units(&self) -> std::ops::Range<usize> {
        self.f0..self.f0 + self.f_span
    }

    pub fn time_units(&self) -> std::ops::Range<usize> {
        self.t0..self.t0 + self.t_span
    }

    pub fn covers(&self, unit: usize) -> bool {
        self.coverage.binary_search(&unit).is_ok()
    }
}

/// True iff the two blocks share at least one basic unit.
pub fn overlaps(b: &Block, other: &Block) -> bool {
    b.t0 < other.t0 + other.t_span
        && other.t0 < b.t0 + b.t_span
        && b.f0 < other.f0 + other.f_span
        && other.f0 < b.f0 + b.f_span
}

/// Places every shape at every grid offset where it fits.
///
/// Shapes whose footprint exceeds the grid contribute nothing; shapes whose
/// footprint is not a whole number of basic units are rejected.
pub fn enumerate_blocks(
    grid: &ResourceGrid,
    shapes: &[NumerologyShape],
    subcarriers_per_block: u32,
) -> Result<Vec<Block>> {
    let mut blocks = Vec::new();
    for (shape_idx, shape) in shapes.iter().enumerate() {
        let (t_span, f_span) = shape.footprint(grid, subcarriers_per_block)?;
        if t_span > grid.n_time || f_span > grid.n_freq {
            continue;
        }
        for t0 in 0..=grid.n_time - t_span {
            for f0 in 0..=grid.n_freq - f_span {
                let mut coverage = Vec::with_capacity(t_span * f_span);
                for t in t0..t0 + t_span {
                    for f in f0..f0 + f_span {
                        coverage.push(grid.unit_index(t, f));
                    }
                }
                blocks.push(Block {
                    id: blocks.len(),
                    shape: shape_idx,
                    t0,
                    f0,
                    t_span,
                    f_span,
                    coverage,
                    end_time_ms: (t0 + t_span) as f64 * grid.unit_time_ms,
                });
            }
        }
    }
    Ok(blocks)
}
