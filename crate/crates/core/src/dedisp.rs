//! DM-trial planning and brute-force incoherent dedispersion.

use crate::fbio::{Chunk, FilterbankHeader};

/// Dispersion constant in s·MHz²·pc⁻¹·cm³.
pub const K_DM: f64 = 4.148808e3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DedispError {
    #[error("invalid DM range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("invalid DM spacing: {0}")]
    InvalidSpacing(String),
    #[error("chunk of {len} samples too short for trial {trial} (max delay {max_delay})")]
    ChunkTooShort { trial: usize, len: usize, max_delay: usize },
    #[error("trial index {0} out of range")]
    NoSuchTrial(usize),
}

/// How consecutive trial DMs are spaced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DmSpacing {
    Linear(f64),
    /// Step chosen so the worst-case residual smearing across the band stays
    /// within `tol` samples of one sample.
    Adaptive(f64),
}

/// Exact (unrounded) delay in samples of `freq_mhz` relative to `ref_mhz`.
pub fn exact_delay(dm: f64, freq_mhz: f64, ref_mhz: f64, tsamp: f64) -> f64 {
    K_DM * dm * (freq_mhz.powi(-2) - ref_mhz.powi(-2)) / tsamp
}

/// Integer delay of `channel` relative to the highest-frequency channel,
/// rounded half up.
pub fn delay_samples(dm: f64, header: &FilterbankHeader, channel: usize) -> u32 {
    let d = exact_delay(dm, header.chan_freq(channel), header.max_freq(), header.tsamp);
    (d + 0.5).floor().max(0.0) as u32
}

/// Ordered trial DMs with their per-channel sample delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DmTrialPlan {
    pub dms: Vec<f64>,
    nchans: usize,
    tsamp: f64,
    delays: Vec<u32>,
    max_delay: usize,
}

impl DmTrialPlan {
    pub fn from_dms(dms: Vec<f64>, header: &FilterbankHeader) -> Self {
        let nchans = header.nchans;
        let mut delays = Vec::with_capacity(dms.len() * nchans);
        for &dm in &dms {
            delays.extend((0..nchans).map(|c| delay_samples(dm, header, c)));
        }
        let max_delay = delays.iter().copied().max().unwrap_or(0) as usize;
        Self { dms, nchans, tsamp: header.tsamp, delays, max_delay }
    }

    pub fn len(&self) -> usize {
        self.dms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dms.is_empty()
    }

    pub fn nchans(&self) -> usize {
        self.nchans
    }

    /// Sampling interval of the header the plan was built for.
    pub fn tsamp(&self) -> f64 {
        self.tsamp
    }

    pub fn delays(&self, trial: usize) -> &[u32] {
        &self.delays[trial * self.nchans..(trial + 1) * self.nchans]
    }

    pub fn trial_max_delay(&self, trial: usize) -> usize {
        self.delays(trial).iter().copied().max().unwrap_or(0) as usize
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }
}

/// DM step of the adaptive criterion: `K_DM·ΔDM·(f_lo⁻² − f_hi⁻²) = (tol − 1)·tsamp`.
pub fn adaptive_step(header: &FilterbankHeader, tol: f64) -> f64 {
    let span = header.min_freq().powi(-2) - header.max_freq().powi(-2);
    (tol - 1.0) * header.tsamp / (K_DM * span)
}

pub fn generate_dm_trials(
    dm_lo: f64,
    dm_hi: f64,
    header: &FilterbankHeader,
    spacing: DmSpacing,
) -> Result<DmTrialPlan, DedispError> {
    if !(dm_lo >= 0.0) || !(dm_hi >= dm_lo) || !dm_hi.is_finite() {
        return Err(DedispError::InvalidRange { lo: dm_lo, hi: dm_hi });
    }
    let step = match spacing {
        DmSpacing::Linear(step) if step > 0.0 && step.is_finite() => step,
        DmSpacing::Linear(step) => return Err(DedispError::InvalidSpacing(format!("linear step {step}"))),
        DmSpacing::Adaptive(tol) if tol > 1.0 && tol.is_finite() => {
            let step = adaptive_step(header, tol);
            if !(step > 0.0) || !step.is_finite() {
                // A single-channel band has no dispersion sweep.
                f64::INFINITY
            } else {
                step
            }
        }
        DmSpacing::Adaptive(tol) => return Err(DedispError::InvalidSpacing(format!("tolerance {tol} must exceed 1"))),
    };
    let mut dms = vec![dm_lo];
    let eps = 1e-9 * dm_hi.max(1.0);
    let mut i = 1u64;
    loop {
        let dm = dm_lo + i as f64 * step;
        if dm >= dm_hi - eps {
            break;
        }
        dms.push(dm);
        i += 1;
    }
    if dm_hi > dm_lo {
        dms.push(dm_hi);
    }
    Ok(DmTrialPlan::from_dms(dms, header))
}

/// One trial's dedispersed time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DedispersedSeries {
    pub trial_index: usize,
    pub dm: f64,
    pub values: Vec<f32>,
    /// Absolute sample index of `values[0]`.
    pub start_sample: u64,
}

pub fn max_delay(plan: &DmTrialPlan) -> usize {
    plan.max_delay()
}

/// `values[i] = Σ_c chunk[i + delay_c][c]`.
pub fn dedisperse(chunk: &Chunk, plan: &DmTrialPlan, trial: usize) -> Result<DedispersedSeries, DedispError> {
    if trial >= plan.len() {
        return Err(DedispError::NoSuchTrial(trial));
    }
    let cm = ChannelMajor::from_chunk(chunk);
    let out_len = series_len(chunk.len(), plan, trial)?;
    let mut values = vec![0.0f32; out_len];
    cm.dedisperse_into(plan.delays(trial), &mut values);
    Ok(DedispersedSeries { trial_index: trial, dm: plan.dms[trial], values, start_sample: chunk.spec.start_sample })
}

/// Output length of `trial` over a chunk of `len` samples.
pub fn series_len(len: usize, plan: &DmTrialPlan, trial: usize) -> Result<usize, DedispError> {
    let md = plan.trial_max_delay(trial);
    if len <= md {
        return Err(DedispError::ChunkTooShort { trial, len, max_delay: md });
    }
    Ok(len - md)
}

/// Channel-major copy of a chunk, the layout the shift-and-add kernel
/// streams through.
pub struct ChannelMajor {
    data: Vec<f32>,
    len: usize,
    nchans: usize,
}

const TILE: usize = 32;

impl ChannelMajor {
    pub fn from_chunk(chunk: &Chunk) -> Self {
        Self { data: chunk.to_channel_major(), len: chunk.len(), nchans: chunk.nchans }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    /// Sums channels in index order into `out`, whose length must not exceed
    /// `len - max(delays)`. Accumulation happens in `f32`, per output element
    /// in channel order, so results match a naive loop bit for bit.
    pub fn dedisperse_into<T: From<f32> + Copy>(&self, delays: &[u32], out: &mut [T]) {
        assert_eq!(delays.len(), self.nchans);
        let n = out.len();
        debug_assert!(delays.iter().all(|&d| d as usize + n <= self.len));
        let mut i0 = 0;
        while i0 + TILE <= n {
            let mut acc = [0.0f32; TILE];
            for (c, &d) in delays.iter().enumerate() {
                let src = &self.channel(c)[i0 + d as usize..i0 + d as usize + TILE];
                for k in 0..TILE {
                    acc[k] += src[k];
                }
            }
            for k in 0..TILE {
                out[i0 + k] = T::from(acc[k]);
            }
            i0 += TILE;
        }
        for i in i0..n {
            let mut acc = 0.0f32;
            for (c, &d) in delays.iter().enumerate() {
                acc += self.channel(c)[i + d as usize];
            }
            out[i] = T::from(acc);
        }
    }
}
