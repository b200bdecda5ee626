#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pulsegrid::synth::{Observation, PulseSpec};
use pulsegrid::FilterbankHeader;

pub const MEAN: f64 = 100.0;
pub const SIGMA: f64 = 16.0;

/// 64 channels of 0.25 MHz from 1500 MHz at 64 µs, 8-bit.
pub fn narrow_band(nsamples: u64) -> FilterbankHeader {
    FilterbankHeader::new(1500.0, -0.25, 64, 64e-6, 8).with_nsamples(nsamples)
}

pub fn pulse(dm: f64, t0: f64, width: u32, snr: f64, nchans: usize) -> PulseSpec {
    PulseSpec { dm, t0, width, amplitude: PulseSpec::amplitude_for_snr(snr, SIGMA, nchans, width), seed: 0 }
}

/// Writes noise plus `pulses` to `dir/name` and returns the path.
pub fn write_obs(dir: &Path, name: &str, header: FilterbankHeader, seed: u64, pulses: Vec<PulseSpec>) -> PathBuf {
    let path = dir.join(name);
    Observation { header, mean: MEAN, sigma: SIGMA, seed, pulses }.write(&path).expect("write synthetic file");
    path
}

/// Naive shift-and-add over a time-major grid, accumulating in channel order.
pub fn naive_dedisperse(grid: &[f32], nchans: usize, delays: &[u32]) -> Vec<f32> {
    let len = grid.len() / nchans;
    let md = *delays.iter().max().unwrap() as usize;
    (0..len - md)
        .map(|t| {
            let mut s = 0.0f32;
            for c in 0..nchans {
                s += grid[(t + delays[c] as usize) * nchans + c];
            }
            s
        })
        .collect()
}
