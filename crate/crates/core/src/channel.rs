//! Per-block achievable rate.
//!
//! A multipath profile is turned into a frequency-selective power gain per
//! basic frequency unit by a tapped-delay-line draw. The rate of a block is a
//! Shannon surrogate summed over its frequency units, degraded by the share of
//! multipath energy that falls outside the cyclic prefix (ISI), an optional
//! same-numerology ICI penalty, control-symbol overhead and a guardband loss.
//!
//! With ISI fraction `beta` and linear SNR-times-gain `gamma` on a unit,
//!
//! ```text
//! sinr = (1 - beta) * gamma / (1 + beta * gamma + (ici_penalty - 1))
//! ```

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Block, NumerologyShape, ResourceGrid};
use crate::seed;

/// Gains are clamped away from zero so every unit keeps a positive gain.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathProfile {
    pub tap_delays_us: Vec<f64>,
    pub tap_powers_db: Vec<f64>,
}

impl MultipathProfile {
    pub fn new(tap_delays_us: Vec<f64>, tap_powers_db: Vec<f64>) -> Result<Self> {
        let p = Self { tap_delays_us, tap_powers_db };
        p.validate()?;
        Ok(p)
    }

    /// Nine-tap Extended Vehicular A profile.
    pub fn extended_vehicular_a() -> Self {
        Self {
            tap_delays_us: vec![0.0, 0.03, 0.15, 0.31, 0.37, 0.71, 1.09, 1.73, 2.51],
            tap_powers_db: vec![0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9],
        }
    }

    pub fn single_tap() -> Self {
        Self { tap_delays_us: vec![0.0], tap_powers_db: vec![0.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tap_delays_us.is_empty() {
            return Err(Error::InvalidProfile("profile has no taps".into()));
        }
        if self.tap_delays_us.len() != self.tap_powers_db.len() {
            return Err(Error::InvalidProfile("delay and power lists differ in length".into()));
        }
        if self.tap_delays_us[0] != 0.0 {
            return Err(Error::InvalidProfile("first tap delay must be 0".into()));
        }
        if self.tap_delays_us.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidProfile("tap delays must be nondecreasing".into()));
        }
        if self.tap_delays_us.iter().chain(&self.tap_powers_db).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite tap parameter".into()));
        }
        Ok(())
    }

    /// Tap powers in linear scale, normalized to sum 1.
    pub fn linear_powers(&self) -> Vec<f64> {
        let raw: Vec<f64> = self.tap_powers_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    pub fn max_delay_us(&self) -> f64 {
        self.tap_delays_us.last().copied().unwrap_or(0.0)
    }
}

/// Power gain of one service's link on every basic frequency unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub freq_gains: Vec<f64>,
    pub seed: u64,
    pub profile: MultipathProfile,
}

/// Draws independent circular-Gaussian tap coefficients (variance = tap
/// power) and evaluates `|H(f)|^2` at the center of each frequency unit.
pub fn realize_channel(
    profile: &MultipathProfile,
    n_freq: usize,
    unit_bw_khz: f64,
    seed: u64,
) -> Result<ChannelRealization> {
    profile.validate()?;
    if n_freq == 0 {
        return Err(Error::InvalidInput("channel needs at least one frequency unit".into()));
    }
    let mut rng = seed::rng(seed);
    let taps: Vec<(f64, f64)> = profile
        .linear_powers()
        .into_iter()
        .map(|p| {
            let sd = (p / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            (sd * re, sd * im)
        })
        .collect();
    let freq_gains = (0..n_freq)
        .map(|u| {
            let f_khz = (u as f64 + 0.5) * unit_bw_khz;
            let (mut re, mut im) = (0.0, 0.0);
            for ((hr, hi), delay_us) in taps.iter().zip(&profile.tap_delays_us) {
                // kHz * us = 1e-3 cycles
                let phase = -2.0 * PI * f_khz * delay_us * 1e-3;
                let (s, c) = phase.sin_cos();
                re += hr * c - hi * s;
                im += hr * s + hi * c;
            }
            (re * re + im * im).max(MIN_GAIN)
        })
        .collect();
    Ok(ChannelRealization { freq_gains, seed, profile: profile.clone() })
}

/// Share of multipath power arriving later than the cyclic prefix.
pub fn isi_fraction(profile: &MultipathProfile, cp_us: f64) -> f64 {
    profile
        .linear_powers()
        .iter()
        .zip(&profile.tap_delays_us)
        .filter(|(_, &d)| d > cp_us)
        .fold(0.0, |acc, (p, _)| acc + p)
        .clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Control symbols per TTI.
    pub overhead_symbols: u32,
    /// Fractional rate loss per block from the guardband.
    pub guardband_fraction: f64,
    /// Noise inflation from same-numerology neighbours; 1.0 disables it.
    pub ici_penalty: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self { overhead_symbols: 2, guardband_fraction: 1.0 / 12.0, ici_penalty: 1.0 }
    }
}

impl RateConfig {
    /// Zero overhead, no guardband, no ICI.
    pub fn ideal() -> Self {
        Self { overhead_symbols: 0, guardband_fraction: 0.0, ici_penalty: 1.0 }
    }

    pub fn validate(&self, shapes: &[NumerologyShape]) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidRateConfig(m));
        if !(0.0..1.0).contains(&self.guardband_fraction) {
            return bad(format!("guardband_fraction {} outside [0, 1)", self.guardband_fraction));
        }
        if !(self.ici_penalty >= 1.0 && self.ici_penalty.is_finite()) {
            return bad(format!("ici_penalty {} must be >= 1", self.ici_penalty));
        }
        if let Some(min) = shapes.iter().map(|s| s.num_symbols).min() {
            if self.overhead_symbols >= min {
                return bad(format!(
                    "{} overhead symbols leave no data symbol in a {min}-symbol TTI",
                    self.overhead_symbols
                ));
            }
        }
        Ok(())
    }
}

/// Bits delivered by `block` on a link with the given SNR and channel.
pub fn block_rate(
    block: &Block,
    shape: &NumerologyShape,
    grid: &ResourceGrid,
    snr_db: f64,
    channel: &ChannelRealization,
    cfg: &RateConfig,
) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidInput(format!("SNR must be finite, got {snr_db}")));
    }
    if block.f0 + block.f_span > channel.freq_gains.len() {
        return Err(Error::InvalidInput(format!(
            "block {} extends beyond the {} channel frequency units",
            block.id,
            channel.freq_gains.len()
        )));
    }
    let beta = isi_fraction(&channel.profile, shape.cp_us);
    let data_symbols = f64::from(shape.num_symbols.saturating_sub(cfg.overhead_symbols));
    let subcarriers_per_unit = grid.unit_bw_khz / shape.scs_khz;
    let ttis = block.t_span as f64 * grid.unit_time_ms / shape.tti_ms;
    let snr = 10f64.powf(snr_db / 10.0);
    let per_unit_scale = subcarriers_per_unit * data_symbols * ttis;
    let spectral: f64 = channel.freq_gains[block.freq_units()]
        .iter()
        .map(|g| {
            let gamma = snr * g;
            let sinr = (1.0 - beta) * gamma / (1.0 + beta * gamma + (cfg.ici_penalty - 1.0));
            (1.0 + sinr).log2()
        })
        .sum();
    Ok(((1.0 - cfg.guardband_fraction) * per_unit_scale * spectral).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{builtin_shapes, enumerate_blocks};
    use proptest::prelude::*;

    fn flat(n: usize, profile: MultipathProfile) -> ChannelRealization {
        ChannelRealization { freq_gains: vec![1.0; n], seed: 0, profile }
    }

    fn block_of(shape_idx: usize, f0: usize) -> (Block, NumerologyShape, ResourceGrid) {
        let shapes = builtin_shapes();
        let grid = ResourceGrid::with_units(16, 11, 0.125, 180.0).unwrap();
        let blocks = enumerate_blocks(&grid, &shapes, 12).unwrap();
        let b = blocks.into_iter().find(|b| b.shape == shape_idx && b.t0 == 0 && b.f0 == f0).unwrap();
        (b, shapes[shape_idx].clone(), grid)
    }

    #[test]
    fn empty_profile_rejected() {
        let p = MultipathProfile { tap_delays_us: vec![], tap_powers_db: vec![] };
        assert!(realize_channel(&p, 8, 180.0, 1).is_err());
    }

    #[test]
    fn single_tap_is_flat() {
        let ch = realize_channel(&MultipathProfile::single_tap(), 32, 180.0, 9).unwrap();
        let g0 = ch.freq_gains[0];
        assert!(ch.freq_gains.iter().all(|g| (g - g0).abs() < 1e-12 * g0.max(1.0)));
    }

    #[test]
    fn deterministic_for_seed() {
        let p = MultipathProfile::extended_vehicular_a();
        let a = realize_channel(&p, 64, 180.0, 42).unwrap();
        let b = realize_channel(&p, 64, 180.0, 42).unwrap();
        assert_eq!(a, b);
        let c = realize_channel(&p, 64, 180.0, 43).unwrap();
        assert_ne!(a.freq_gains, c.freq_gains);
    }

    #[test]
    fn eva_gains_are_selective_and_unit_mean() {
        let p = MultipathProfile::extended_vehicular_a();
        let mut total = 0.0;
        let mut count = 0usize;
        for s in 0..2000u64 {
            let ch = realize_channel(&p, 64, 180.0, seed::derive(s, seed::STREAM_CHANNEL, 0)).unwrap();
            let mean = ch.freq_gains.iter().sum::<f64>() / 64.0;
            let var = ch.freq_gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / 63.0;
            assert!(var > 0.0);
            assert!(ch.freq_gains.iter().all(|g| *g > 0.0));
            total += ch.freq_gains.iter().sum::<f64>();
            count += 64;
        }
        let mean = total / count as f64;
        assert!((mean - 1.0).abs() <= 0.05, "ensemble mean gain {mean}");
    }

    #[test]
    fn isi_examples() {
        let eva = MultipathProfile::extended_vehicular_a();
        assert_eq!(isi_fraction(&eva, 4.7), 0.0);
        assert_eq!(isi_fraction(&eva, 4.17), 0.0);
        // taps beyond 1.2 us: 1.73 us at -12 dB and 2.51 us at -16.9 dB
        let lin: Vec<f64> = eva.tap_powers_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
        let expected = (lin[7] + lin[8]) / lin.iter().sum::<f64>();
        assert!((isi_fraction(&eva, 1.2) - expected).abs() < 1e-15);
        assert!(isi_fraction(&eva, 1.2) > 0.0);

        let zero_cp = isi_fraction(&eva, 0.0);
        let p = eva.linear_powers();
        assert!((zero_cp - (1.0 - p[0])).abs() < 1e-12);
    }

    #[test]
    fn isi_is_step_function_at_tap_delays() {
        let eva = MultipathProfile::extended_vehicular_a();
        for w in eva.tap_delays_us.windows(2) {
            let lo = isi_fraction(&eva, w[0]);
            let mid = isi_fraction(&eva, 0.5 * (w[0] + w[1]));
            assert_eq!(lo, mid);
            assert!(isi_fraction(&eva, w[1]) < lo);
        }
    }

    #[test]
    fn shape1_closed_form_84_bits() {
        let (b, shape, grid) = block_of(0, 0);
        let ch = flat(11, MultipathProfile::single_tap());
        let r = block_rate(&b, &shape, &grid, 0.0, &ch, &RateConfig::ideal()).unwrap();
        assert!((r - 84.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn rate_vanishes_at_very_low_snr() {
        let (b, shape, grid) = block_of(1, 0);
        let ch = flat(11, MultipathProfile::extended_vehicular_a());
        let r = block_rate(&b, &shape, &grid, -300.0, &ch, &RateConfig::default()).unwrap();
        assert!(r < 1e-20);
        assert!(block_rate(&b, &shape, &grid, f64::NEG_INFINITY, &ch, &RateConfig::default()).is_err());
    }

    #[test]
    fn extended_cp_wins_on_long_delay_spread() {
        // Evaluate both closed forms at 30 dB with the EVA profile.
        let (b3, s3, grid) = block_of(2, 0);
        let (b3e, s3e, _) = block_of(3, 0);
        let ch = flat(11, MultipathProfile::extended_vehicular_a());
        let cfg = RateConfig::default();
        let r3 = block_rate(&b3, &s3, &grid, 30.0, &ch, &cfg).unwrap();
        let r3e = block_rate(&b3e, &s3e, &grid, 30.0, &ch, &cfg).unwrap();

        let beta = isi_fraction(&ch.profile, 1.2);
        let gamma = 1000.0;
        let per_sc = |beta: f64, syms: f64| syms * (1.0 + (1.0 - beta) * gamma / (1.0 + beta * gamma)).log2();
        let oracle3 = (11.0 / 12.0) * 12.0 * per_sc(beta, 5.0);
        let oracle3e = (11.0 / 12.0) * 12.0 * per_sc(0.0, 4.0);
        assert!((r3 - oracle3).abs() < 1e-9 && (r3e - oracle3e).abs() < 1e-9);
        assert!(r3e > r3);
    }

    #[test]
    fn rate_is_additive_over_frequency_units() {
        let (b, shape, grid) = block_of(2, 3);
        let ch = realize_channel(&MultipathProfile::extended_vehicular_a(), 11, 180.0, 5).unwrap();
        let cfg = RateConfig::default();
        let whole = block_rate(&b, &shape, &grid, 12.0, &ch, &cfg).unwrap();
        let parts: f64 = b
            .freq_units()
            .map(|f| {
                let piece = Block { f0: f, f_span: 1, ..b.clone() };
                block_rate(&piece, &shape, &grid, 12.0, &ch, &cfg).unwrap()
            })
            .sum();
        assert!((whole - parts).abs() < 1e-9 * whole);
    }

    #[test]
    fn config_validation() {
        let shapes = builtin_shapes();
        RateConfig::default().validate(&shapes).unwrap();
        let cfg = RateConfig { overhead_symbols: 6, ..RateConfig::default() };
        assert!(cfg.validate(&shapes).is_err());
        let cfg = RateConfig { guardband_fraction: 1.0, ..RateConfig::default() };
        assert!(cfg.validate(&shapes).is_err());
        let cfg = RateConfig { ici_penalty: 0.5, ..RateConfig::default() };
        assert!(cfg.validate(&shapes).is_err());
    }

    #[test]
    fn monotone_on_dense_snr_sweep() {
        let (b, shape, grid) = block_of(0, 4);
        let ch = realize_channel(&MultipathProfile::extended_vehicular_a(), 11, 180.0, 3).unwrap();
        let cfg = RateConfig::default();
        let mut prev = 0.0;
        for i in 0..1000 {
            let snr = -20.0 + 60.0 * i as f64 / 999.0;
            let r = block_rate(&b, &shape, &grid, snr, &ch, &cfg).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }

    proptest! {
        #[test]
        fn rate_monotonicity(
            snr in -10.0f64..40.0,
            dsnr in 0.0f64..10.0,
            gb in 0.0f64..0.5,
            dgb in 0.0f64..0.4,
            oh in 0u32..3,
            cp in 0.0f64..3.0,
            dcp in 0.0f64..3.0,
            seed in 0u64..1000,
        ) {
            let (b, shape, grid) = block_of(1, 2);
            let ch = realize_channel(&MultipathProfile::extended_vehicular_a(), 11, 180.0, seed).unwrap();
            let cfg = RateConfig { overhead_symbols: oh, guardband_fraction: gb, ici_penalty: 1.0 };
            let base = block_rate(&b, &shape, &grid, snr, &ch, &cfg).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!(block_rate(&b, &shape, &grid, snr + dsnr, &ch, &cfg).unwrap() >= base);
            let more_gb = RateConfig { guardband_fraction: gb + dgb, ..cfg.clone() };
            prop_assert!(block_rate(&b, &shape, &grid, snr, &ch, &more_gb).unwrap() <= base);
            let more_oh = RateConfig { overhead_symbols: oh + 1, ..cfg.clone() };
            prop_assert!(block_rate(&b, &shape, &grid, snr, &ch, &more_oh).unwrap() <= base);
            // Larger CP means smaller ISI fraction, which never lowers the rate.
            let short = NumerologyShape { cp_us: cp, ..shape.clone() };
            let long = NumerologyShape { cp_us: cp + dcp, ..shape.clone() };
            prop_assert!(isi_fraction(&ch.profile, cp + dcp) <= isi_fraction(&ch.profile, cp));
            prop_assert!(
                block_rate(&b, &long, &grid, snr, &ch, &cfg).unwrap()
                    >= block_rate(&b, &short, &grid, snr, &ch, &cfg).unwrap()
            );
        }
    }
}
