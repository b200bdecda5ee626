//! Per-trial post-processing: baseline removal, RMS normalization, the
//! boxcar matched-filter bank and threshold peak extraction.
//!
//! Each stage has an allocating convenience form and a slice form that works
//! in caller-provided buffers; the engine uses the latter with pooled
//! temporaries. Both forms share one code path, so their outputs agree bit
//! for bit.

use std::ops::Range;

/// Default detection threshold (S/N).
pub const DEFAULT_THRESHOLD: f64 = 6.0;
/// Default widest boxcar in samples.
pub const DEFAULT_MAX_BOXCAR: usize = 4096;
/// Default baseline window in seconds.
pub const DEFAULT_BASELINE_S: f64 = 2.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectError {
    #[error("series has zero RMS")]
    Degenerate,
    #[error("series needs at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("boxcar width {0} is not a power of two")]
    InvalidWidth(usize),
}

/// A single above-threshold detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub snr: f64,
    pub peak_sample: u64,
    pub time_s: f64,
    pub width_index: u32,
    pub width_samples: u32,
    pub dm_trial: u32,
    pub dm: f64,
    pub begin_sample: u64,
    /// Inclusive.
    pub end_sample: u64,
}

/// Context of the series being searched.
#[derive(Debug, Clone)]
pub struct TrialMeta {
    pub dm_trial: u32,
    pub dm: f64,
    /// Absolute sample index of series element 0.
    pub start_sample: u64,
    pub tsamp: f64,
    /// Peaks outside this absolute range are dropped.
    pub valid_range: Range<u64>,
}

/// Baseline window length in samples for `seconds`, forced odd.
pub fn baseline_window_samples(seconds: f64, tsamp: f64) -> usize {
    force_odd((seconds / tsamp).round().max(1.0) as usize)
}

fn force_odd(w: usize) -> usize {
    if w % 2 == 0 {
        w + 1
    } else {
        w.max(1)
    }
}

/// `out[i] = in[i] − mean(in[i−h ..= i+h])`, window truncated at the ends.
pub fn remove_baseline(series: &[f64], window: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    let mut prefix = vec![0.0; series.len() + 1];
    remove_baseline_in_place(&mut out, window, &mut prefix);
    out
}

/// In-place baseline removal; `prefix` must hold at least `len + 1` values.
pub fn remove_baseline_in_place(x: &mut [f64], window: usize, prefix: &mut [f64]) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let half = force_odd(window) / 2;
    let prefix = &mut prefix[..n + 1];
    prefix[0] = 0.0;
    let mut acc = 0.0;
    for (i, &v) in x.iter().enumerate() {
        acc += v;
        prefix[i + 1] = acc;
    }
    for (i, v) in x.iter_mut().enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        *v -= mean;
    }
}

/// Robust RMS: plain RMS first, then recomputed over samples within three
/// times that value. `None` for an all-zero (or empty) series.
pub fn robust_rms(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let rms0 = ms.sqrt();
    if !(rms0 > 0.0) || !rms0.is_finite() {
        return None;
    }
    let clip = 3.0 * rms0;
    let (sum, count) = x
        .iter()
        .filter(|v| v.abs() <= clip)
        .fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    let rms = (sum / count as f64).sqrt();
    (rms > 0.0).then_some(rms)
}

/// Scales `series` to unit noise; returns the normalized copy and the RMS.
pub fn normalize(series: &[f64]) -> Result<(Vec<f64>, f64), DetectError> {
    if series.len() < 2 {
        return Err(DetectError::TooShort { need: 2, got: series.len() });
    }
    let mut out = series.to_vec();
    let rms = normalize_in_place(&mut out)?;
    Ok((out, rms))
}

pub fn normalize_in_place(x: &mut [f64]) -> Result<f64, DetectError> {
    let rms = robust_rms(x).ok_or(DetectError::Degenerate)?;
    scale_in_place(x, rms);
    Ok(rms)
}

pub fn scale_in_place(x: &mut [f64], rms: f64) {
    for v in x.iter_mut() {
        *v /= rms;
    }
}

/// Boxcar widths actually used for a series of `len` samples.
pub fn bank_widths(len: usize, max_width: usize) -> Vec<usize> {
    let mut widths = Vec::new();
    let mut w = 1;
    while w <= max_width && w <= len {
        widths.push(w);
        w *= 2;
    }
    widths
}

/// Matched-filter bank: for each width `w = 2^k ≤ max_width`,
/// `snr_w[i] = Σ_{j=i}^{i+w−1} series[j] / √w`.
pub fn boxcar_bank(series: &[f64], max_width: usize) -> Result<Vec<Vec<f64>>, DetectError> {
    if !max_width.is_power_of_two() {
        return Err(DetectError::InvalidWidth(max_width));
    }
    let mut bank = Vec::new();
    let mut a = vec![0.0; series.len()];
    let mut b = vec![0.0; series.len()];
    scan_boxcars(series, max_width, &mut a, &mut b, |_, w, sums| {
        let norm = (w as f64).sqrt();
        bank.push(sums.iter().map(|s| s / norm).collect());
    });
    Ok(bank)
}

/// Drives the doubling recurrence `sum_2w[i] = sum_w[i] + sum_w[i + w]`,
/// handing each width's window sums to `visit(width_index, width, sums)`.
/// `a` and `b` are scratch buffers of at least `series.len()` values.
pub fn scan_boxcars<F>(series: &[f64], max_width: usize, a: &mut [f64], b: &mut [f64], mut visit: F)
where
    F: FnMut(u32, usize, &[f64]),
{
    let n = series.len();
    if n == 0 || max_width == 0 {
        return;
    }
    visit(0, 1, series);
    let (mut w, mut k) = (1usize, 0u32);
    // Which buffer holds the current sums: series, a or b.
    let mut held = Held::Series;
    while 2 * w <= max_width && 2 * w <= n {
        let len = n - 2 * w + 1;
        held = match held {
            Held::Series => {
                double(series, &mut a[..len], w);
                Held::A
            }
            Held::A => {
                double(a, &mut b[..len], w);
                Held::B
            }
            Held::B => {
                double(b, &mut a[..len], w);
                Held::A
            }
        };
        w *= 2;
        k += 1;
        let sums = if held == Held::A { &a[..len] } else { &b[..len] };
        visit(k, w, sums);
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Held {
    Series,
    A,
    B,
}

#[inline]
fn double(src: &[f64], dst: &mut [f64], w: usize) {
    let len = dst.len();
    for (i, d) in dst.iter_mut().enumerate() {
        *d = src[i] + src[i + w];
    }
    debug_assert!(len + w <= src.len());
}

/// One candidate per maximal run of `snr > threshold`, located at the run's
/// maximum (earliest on ties).
pub fn find_peaks(snr: &[f64], threshold: f64, width_index: u32, meta: &TrialMeta) -> Vec<Candidate> {
    let mut out = Vec::new();
    find_peaks_scaled(snr, 1.0, threshold, width_index, meta, &mut out);
    out
}

/// As [`find_peaks`] over `sums[i] / norm`, appending to `out`.
pub fn find_peaks_scaled(
    sums: &[f64],
    norm: f64,
    threshold: f64,
    width_index: u32,
    meta: &TrialMeta,
    out: &mut Vec<Candidate>,
) {
    // A cheap pre-check on the raw sums skips the division for the bulk of
    // below-threshold samples.
    let raw_cut = threshold * norm * (1.0 - 1e-12);
    let mut i = 0;
    let n = sums.len();
    while i < n {
        if sums[i] <= raw_cut || sums[i] / norm <= threshold {
            i += 1;
            continue;
        }
        let begin = i;
        let mut best = i;
        let mut best_snr = sums[i] / norm;
        i += 1;
        while i < n {
            let s = sums[i] / norm;
            if s <= threshold {
                break;
            }
            if s > best_snr {
                best_snr = s;
                best = i;
            }
            i += 1;
        }
        let peak = meta.start_sample + best as u64;
        if meta.valid_range.contains(&peak) {
            out.push(Candidate {
                snr: best_snr,
                peak_sample: peak,
                time_s: peak as f64 * meta.tsamp,
                width_index,
                width_samples: 1 << width_index,
                dm_trial: meta.dm_trial,
                dm: meta.dm,
                begin_sample: meta.start_sample + begin as u64,
                end_sample: meta.start_sample + (i - 1) as u64,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn meta() -> TrialMeta {
        TrialMeta { dm_trial: 0, dm: 0.0, start_sample: 0, tsamp: 1.0, valid_range: 0..u64::MAX }
    }

    #[test]
    fn constant_series_baselines_to_zero() {
        let x = vec![4.25; 50];
        for w in [1, 2, 5, 101] {
            assert!(remove_baseline(&x, w).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unit_window_is_zero() {
        let x: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        assert!(remove_baseline(&x, 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_interior_cancels() {
        let x: Vec<f64> = (0..40).map(|i| 0.5 * i as f64 + 3.0).collect();
        let out = remove_baseline(&x, 5);
        // Direct windowed-mean oracle.
        for i in 0..x.len() {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(x.len());
            let mean = x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            assert!((out[i] - (x[i] - mean)).abs() < 1e-12);
        }
        assert!(out[2..38].iter().all(|v| v.abs() < 1e-12));
        assert!(out[0] < 0.0 && out[39] > 0.0);
    }

    #[test]
    fn even_window_forced_odd() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 7) % 5) as f64).collect();
        assert_eq!(remove_baseline(&x, 4), remove_baseline(&x, 5));
        assert!(remove_baseline(&[], 9).is_empty());
    }

    #[test]
    fn alternating_series_normalizes_to_itself() {
        let (out, rms) = normalize(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(rms, 1.0);
        assert_eq!(out, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn normalize_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (a, _) = normalize(&x).unwrap();
        let (b, _) = normalize(&x.iter().map(|v| v * 8.0).collect::<Vec<_>>()).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_series_degenerate() {
        assert_eq!(normalize(&[0.0; 10]), Err(DetectError::Degenerate));
        assert!(matches!(normalize(&[1.0]), Err(DetectError::TooShort { .. })));
    }

    #[test]
    fn gaussian_rms_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sigma = 3.5;
        let dist = Normal::new(0.0, sigma).unwrap();
        let x: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
        let (_, rms) = normalize(&x).unwrap();
        assert!((rms / sigma - 1.0).abs() < 0.02, "rms {rms}");
    }

    #[test]
    fn spike_and_tophat_snr() {
        let mut x = vec![0.0; 64];
        x[20] = 8.0;
        let bank = boxcar_bank(&x, 1).unwrap();
        let c = find_peaks(&bank[0], 6.0, 0, &meta());
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].snr, c[0].peak_sample), (8.0, 20));

        let mut y = vec![0.0; 64];
        y[10..14].iter_mut().for_each(|v| *v = 2.0);
        let bank = boxcar_bank(&y, 4).unwrap();
        let peak = bank[2].iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, 4.0);
        assert_eq!(bank[2].iter().position(|&v| v == 4.0), Some(10));
    }

    #[test]
    fn bank_matches_naive_windowed_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let bank = boxcar_bank(&x, 256).unwrap();
        assert_eq!(bank.len(), 9);
        for (k, snr) in bank.iter().enumerate() {
            let w = 1usize << k;
            assert_eq!(snr.len(), x.len() - w + 1);
            for i in 0..snr.len() {
                let window = &x[i..i + w];
                let naive = window.iter().sum::<f64>() / (w as f64).sqrt();
                let scale = window.iter().map(|v| v.abs()).sum::<f64>() / (w as f64).sqrt();
                assert!((snr[i] - naive).abs() <= 1e-9 * scale.max(1e-300), "w {w} i {i}");
            }
        }
    }

    #[test]
    fn bank_truncates_at_series_length() {
        let x = vec![1.0; 10];
        let bank = boxcar_bank(&x, 64).unwrap();
        assert_eq!(bank.len(), 4);
        assert_eq!(bank[3].len(), 3);
        assert!(matches!(boxcar_bank(&x, 12), Err(DetectError::InvalidWidth(12))));
    }

    #[test]
    fn tophat_width_is_recovered() {
        for k in 0..7u32 {
            let w = 1usize << k;
            let mut x = vec![0.0; 512];
            x[100..100 + w].iter_mut().for_each(|v| *v = 1.0);
            let bank = boxcar_bank(&x, 64).unwrap();
            let best = bank
                .iter()
                .enumerate()
                .map(|(j, s)| (j, s.iter().cloned().fold(f64::MIN, f64::max)))
                .fold((0, f64::MIN), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
            assert_eq!(best.0, k as usize);
        }
    }

    #[test]
    fn peaks_below_threshold_empty() {
        let snr = vec![1.0, 5.9, 6.0, 2.0];
        assert!(find_peaks(&snr, 6.0, 0, &meta()).is_empty());
    }

    #[test]
    fn single_run_one_candidate() {
        let snr = vec![0.0, 1.0, 7.0, 9.0, 8.0, 1.0, 0.0];
        let c = find_peaks(&snr, 6.0, 2, &meta());
        assert_eq!(c.len(), 1);
        let c = &c[0];
        assert_eq!((c.snr, c.peak_sample, c.begin_sample, c.end_sample), (9.0, 3, 2, 4));
        assert_eq!((c.width_index, c.width_samples), (2, 4));
    }

    #[test]
    fn ties_take_earliest_and_runs_split() {
        let snr = vec![7.0, 9.0, 9.0, 2.0, 8.0, 7.5];
        let c = find_peaks(&snr, 6.0, 0, &meta());
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].peak_sample, 1);
        assert_eq!((c[1].peak_sample, c[1].begin_sample, c[1].end_sample), (4, 4, 5));
    }

    #[test]
    fn peaks_outside_valid_range_dropped() {
        let snr = vec![0.0, 9.0, 0.0, 0.0, 9.0, 0.0];
        let mut m = meta();
        m.start_sample = 100;
        m.valid_range = 102..110;
        let c = find_peaks(&snr, 6.0, 0, &m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].peak_sample, 104);
    }

    #[test]
    fn baseline_window_from_seconds() {
        assert_eq!(baseline_window_samples(2.0, 6.4e-5), 31251);
        assert_eq!(baseline_window_samples(0.001, 0.01), 1);
    }
}
