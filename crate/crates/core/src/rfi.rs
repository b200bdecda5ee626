//! Interference excision on chunks, in place.
//!
//! Narrowband interference shows up as channels whose mean or variance
//! stands out from the rest of the band; broadband interference as spikes in
//! the zero-DM time series. Both detectors use median/MAD statistics.

use std::collections::BTreeSet;

use crate::fbio::Chunk;

pub const DEFAULT_K_MAD: f64 = 5.0;
pub const DEFAULT_K_SIGMA: f64 = 6.0;
/// Samples in the running-mean replacement window.
pub const LOCAL_MEAN_WINDOW: usize = 64;

/// MAD to standard deviation for Gaussian data.
const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RfiError {
    #[error("narrowband statistics need at least 4 channels, chunk has {0}")]
    InsufficientChannels(usize),
    #[error("mask index out of range: {0}")]
    OutOfRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Replacement {
    Zero,
    #[default]
    LocalMean,
}

/// Cells to replace: whole channels and whole time samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RfiMask {
    pub bad_channels: BTreeSet<usize>,
    pub bad_samples: BTreeSet<usize>,
    pub replacement: Replacement,
}

impl RfiMask {
    pub fn is_empty(&self) -> bool {
        self.bad_channels.is_empty() && self.bad_samples.is_empty()
    }
}

/// Which passes run and at what thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfiConfig {
    pub broadband: bool,
    pub narrowband: bool,
    pub k_sigma: f64,
    pub k_mad: f64,
    pub replacement: Replacement,
}

impl Default for RfiConfig {
    fn default() -> Self {
        Self {
            broadband: true,
            narrowband: true,
            k_sigma: DEFAULT_K_SIGMA,
            k_mad: DEFAULT_K_MAD,
            replacement: Replacement::LocalMean,
        }
    }
}

impl RfiConfig {
    pub fn disabled() -> Self {
        Self { broadband: false, narrowband: false, ..Self::default() }
    }

    pub fn enabled(&self) -> bool {
        self.broadband || self.narrowband
    }
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let lower = v[..mid].iter().cloned().fold(f64::MIN, f64::max);
        0.5 * (lower + m)
    }
}

/// Median and MAD-derived sigma.
fn robust_center_scale(values: &[f64]) -> (f64, f64) {
    let mut tmp = values.to_vec();
    let med = median(&mut tmp);
    for (t, v) in tmp.iter_mut().zip(values) {
        *t = (v - med).abs();
    }
    (med, MAD_TO_SIGMA * median(&mut tmp))
}

fn outliers(stat: &[f64], k: f64) -> impl Iterator<Item = usize> + '_ {
    let (center, scale) = robust_center_scale(stat);
    stat.iter().enumerate().filter_map(move |(i, &v)| {
        let dev = (v - center).abs();
        let flagged = if scale > 0.0 { dev > k * scale } else { false };
        flagged.then_some(i)
    })
}

/// Channels whose mean or variance departs from the band median by more
/// than `k_mad` robust deviations.
pub fn flag_narrowband(chunk: &Chunk, k_mad: f64) -> Result<BTreeSet<usize>, RfiError> {
    let nc = chunk.nchans;
    if nc < 4 {
        return Err(RfiError::InsufficientChannels(nc));
    }
    let n = chunk.len().max(1) as f64;
    let mut sum = vec![0.0f64; nc];
    let mut sq = vec![0.0f64; nc];
    for row in chunk.data.chunks_exact(nc) {
        for (c, &v) in row.iter().enumerate() {
            let v = v as f64;
            sum[c] += v;
            sq[c] += v * v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let var: Vec<f64> = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0)).collect();
    let mut flagged: BTreeSet<usize> = outliers(&mean, k_mad).collect();
    flagged.extend(outliers(&var, k_mad));
    Ok(flagged)
}

/// Zero-DM series: per-sample sum across channels.
pub fn zero_dm_series(chunk: &Chunk) -> Vec<f64> {
    chunk.data.chunks_exact(chunk.nchans).map(|row| row.iter().map(|&v| v as f64).sum()).collect()
}

/// Time samples whose zero-DM value has robust |z| above `k_sigma`.
pub fn flag_broadband(chunk: &Chunk, k_sigma: f64) -> BTreeSet<usize> {
    if chunk.is_empty() {
        return BTreeSet::new();
    }
    let series = zero_dm_series(chunk);
    outliers(&series, k_sigma).collect()
}

/// Replaces masked cells per the mask policy. Unmasked cells are untouched;
/// local means are taken over unmasked neighbours only, so reapplying the
/// same mask is a no-op.
pub fn apply_mask(chunk: &mut Chunk, mask: &RfiMask) -> Result<(), RfiError> {
    let n = chunk.len();
    let nc = chunk.nchans;
    if let Some(&c) = mask.bad_channels.iter().next_back().filter(|&&c| c >= nc) {
        return Err(RfiError::OutOfRange(format!("channel {c} of {nc}")));
    }
    if let Some(&t) = mask.bad_samples.iter().next_back().filter(|&&t| t >= n) {
        return Err(RfiError::OutOfRange(format!("sample {t} of {n}")));
    }
    if mask.is_empty() {
        return Ok(());
    }
    match mask.replacement {
        Replacement::Zero => {
            for &c in &mask.bad_channels {
                for t in 0..n {
                    chunk.data[t * nc + c] = 0.0;
                }
            }
            for &t in &mask.bad_samples {
                chunk.data[t * nc..(t + 1) * nc].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Replacement::LocalMean => {
            let mut sample_bad = vec![false; n];
            for &t in &mask.bad_samples {
                sample_bad[t] = true;
            }
            let half = LOCAL_MEAN_WINDOW / 2;
            let mut column = vec![0.0f64; n];
            let mut good_prefix = vec![0.0f64; n + 1];
            let mut count_prefix = vec![0u32; n + 1];
            for c in 0..nc {
                let channel_bad = mask.bad_channels.contains(&c);
                if channel_bad {
                    // No unmasked neighbours in this channel.
                    for t in 0..n {
                        chunk.data[t * nc + c] = 0.0;
                    }
                    continue;
                }
                if mask.bad_samples.is_empty() {
                    continue;
                }
                for t in 0..n {
                    column[t] = chunk.data[t * nc + c] as f64;
                    let good = !sample_bad[t];
                    good_prefix[t + 1] = good_prefix[t] + if good { column[t] } else { 0.0 };
                    count_prefix[t + 1] = count_prefix[t] + good as u32;
                }
                for &t in &mask.bad_samples {
                    let lo = t.saturating_sub(half);
                    let hi = (t + half + 1).min(n);
                    let cnt = count_prefix[hi] - count_prefix[lo];
                    let v = if cnt > 0 { (good_prefix[hi] - good_prefix[lo]) / cnt as f64 } else { 0.0 };
                    chunk.data[t * nc + c] = v as f32;
                }
            }
        }
    }
    Ok(())
}

/// Runs the enabled passes and applies the resulting mask. Returns the mask.
pub fn excise(chunk: &mut Chunk, cfg: &RfiConfig) -> Result<RfiMask, RfiError> {
    let mut mask = RfiMask { replacement: cfg.replacement, ..Default::default() };
    if cfg.narrowband {
        mask.bad_channels = flag_narrowband(chunk, cfg.k_mad)?;
    }
    if cfg.broadband {
        mask.bad_samples = flag_broadband(chunk, cfg.k_sigma);
    }
    apply_mask(chunk, &mask)?;
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedisp::{dedisperse, DmTrialPlan};
    use crate::fbio::FilterbankHeader;
    use crate::synth::{generate_noise, inject_pulse, PulseSpec};

    fn header(nchans: usize) -> FilterbankHeader {
        FilterbankHeader::new(1500.0, -1.0, nchans, 6.4e-5, 32)
    }

    fn noise(nchans: usize, n: usize, seed: u64) -> Chunk {
        Chunk::whole(nchans, generate_noise(&header(nchans), n, 0.0, 1.0, seed))
    }

    #[test]
    fn homogeneous_noise_flags_nothing() {
        let mut flagged = 0;
        let trials = 200;
        for seed in 0..trials {
            flagged += flag_narrowband(&noise(64, 512, seed), DEFAULT_K_MAD).unwrap().len();
        }
        // Per-channel false-flag rate below 1e-3.
        assert!((flagged as f64) / (trials as f64 * 64.0) < 1e-3, "{flagged} flags");
    }

    #[test]
    fn loud_channel_flagged() {
        let mut c = noise(32, 2000, 1);
        for t in 0..c.len() {
            c.data[t * 32 + 9] *= 10.0;
        }
        let f = flag_narrowband(&c, DEFAULT_K_MAD).unwrap();
        assert!(f.contains(&9));
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn constant_grid_flags_nothing() {
        let c = Chunk::whole(16, vec![3.0; 16 * 100]);
        assert!(flag_narrowband(&c, DEFAULT_K_MAD).unwrap().is_empty());
        assert!(flag_broadband(&c, DEFAULT_K_SIGMA).is_empty());
    }

    #[test]
    fn too_few_channels() {
        let c = Chunk::whole(3, vec![0.0; 30]);
        assert_eq!(flag_narrowband(&c, 5.0), Err(RfiError::InsufficientChannels(3)));
    }

    #[test]
    fn pure_noise_broadband_rate() {
        // 2·Φ̄(6) ≈ 1.97e-9 per sample: essentially no flags expected.
        let mut total = 0;
        for seed in 0..10 {
            total += flag_broadband(&noise(16, 20_000, 100 + seed), 6.0).len();
        }
        assert!(total <= 2, "{total} flags");
    }

    #[test]
    fn broadband_spike_flagged() {
        let mut c = noise(64, 4000, 7);
        // +10σ of the zero-DM series spread over all channels.
        let per_chan = 10.0 * (64f32).sqrt() / 64.0;
        for ch in 0..64 {
            c.data[1234 * 64 + ch] += per_chan;
        }
        let f = flag_broadband(&c, 6.0);
        assert!(f.contains(&1234));
    }

    #[test]
    fn dispersed_pulse_spared() {
        let h = header(64);
        let mut grid = generate_noise(&h, 20_000, 0.0, 1.0, 9);
        let pulse = PulseSpec { dm: 500.0, t0: 0.1, width: 4, amplitude: 1.0, seed: 9 };
        inject_pulse(&mut grid, &h, &pulse).unwrap();
        let c = Chunk::whole(64, grid);
        let track: Vec<usize> = (0..64)
            .map(|ch| (0.1f64 / h.tsamp).round() as usize + crate::dedisp::delay_samples(500.0, &h, ch) as usize)
            .collect();
        let f = flag_broadband(&c, 6.0);
        assert!(track.iter().all(|t| !f.contains(t)));
    }

    #[test]
    fn empty_mask_is_identity() {
        let mut c = noise(8, 100, 2);
        let before = c.clone();
        apply_mask(&mut c, &RfiMask::default()).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn zero_channel_mask() {
        let mut c = noise(8, 100, 3);
        let before = c.clone();
        let mask = RfiMask { bad_channels: [5].into(), replacement: Replacement::Zero, ..Default::default() };
        apply_mask(&mut c, &mask).unwrap();
        for t in 0..100 {
            assert_eq!(c.get(t, 5), 0.0);
            for ch in (0..8).filter(|&ch| ch != 5) {
                assert_eq!(c.get(t, ch).to_bits(), before.get(t, ch).to_bits());
            }
        }
    }

    #[test]
    fn masked_channel_contributes_nothing() {
        let h = FilterbankHeader::new(1500.0, -2.0, 8, 6.4e-5, 32);
        let plan = DmTrialPlan::from_dms(vec![0.0, 30.0, 80.0], &h);
        let mut c = noise(8, 300, 4);
        let mask = RfiMask { bad_channels: [2].into(), replacement: Replacement::Zero, ..Default::default() };
        apply_mask(&mut c, &mask).unwrap();
        for t in 0..plan.len() {
            let s = dedisperse(&c, &plan, t).unwrap();
            let d = plan.delays(t);
            for (i, &v) in s.values.iter().enumerate() {
                let mut oracle = 0.0f32;
                for ch in 0..8 {
                    if ch != 2 {
                        oracle += c.get(i + d[ch] as usize, ch);
                    } else {
                        oracle += 0.0;
                    }
                }
                assert_eq!(v, oracle);
            }
        }
    }

    #[test]
    fn local_mean_idempotent_and_local() {
        let mut c = noise(8, 300, 5);
        let before = c.clone();
        let mask = RfiMask { bad_channels: [1].into(), bad_samples: [0, 10, 11, 299].into(), replacement: Replacement::LocalMean };
        apply_mask(&mut c, &mask).unwrap();
        let once = c.clone();
        apply_mask(&mut c, &mask).unwrap();
        assert_eq!(c, once);
        for t in 0..300 {
            for ch in 0..8 {
                if ch != 1 && !mask.bad_samples.contains(&t) {
                    assert_eq!(once.get(t, ch).to_bits(), before.get(t, ch).to_bits());
                }
            }
        }
        // Replacement is the mean of unmasked neighbours within the window.
        let ch = 4;
        let expect: f64 = (0..=42).filter(|t| ![0, 10, 11].contains(t)).map(|t| before.get(t, ch) as f64).sum::<f64>() / 40.0;
        assert!((once.get(10, ch) as f64 - expect).abs() < 1e-5);
    }

    #[test]
    fn mask_out_of_range() {
        let mut c = noise(8, 10, 6);
        let mask = RfiMask { bad_samples: [10].into(), ..Default::default() };
        assert!(apply_mask(&mut c, &mask).is_err());
    }
}
