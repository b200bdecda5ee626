//! Synthetic filterbank data: Gaussian noise plus dispersed top-hat pulses
//! with a known matched-filter S/N.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dedisp::delay_samples;
use crate::fbio::FilterbankHeader;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("pulse spans samples up to {end} but grid holds {len}")]
    OutOfRange { end: u64, len: u64 },
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
}

/// A dispersed top-hat pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    pub dm: f64,
    /// Arrival time at the highest-frequency channel, seconds.
    pub t0: f64,
    /// Duration in samples in every channel.
    pub width: u32,
    /// Added to each covered cell.
    pub amplitude: f64,
    /// Seed of the accompanying noise field.
    pub seed: u64,
}

impl PulseSpec {
    pub fn start_sample(&self, tsamp: f64) -> u64 {
        (self.t0 / tsamp + 0.5).floor().max(0.0) as u64
    }

    /// Amplitude that gives a top-hat of `width` samples the matched S/N
    /// `snr` over `nchans` channels of noise `sigma`.
    pub fn amplitude_for_snr(snr: f64, sigma: f64, nchans: usize, width: u32) -> f64 {
        snr * sigma / (nchans as f64 * width as f64).sqrt()
    }
}

/// I.i.d. Gaussian grid of `nsamples × header.nchans`, time-major.
pub fn generate_noise(header: &FilterbankHeader, nsamples: usize, mean: f64, sigma: f64, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(mean, sigma).expect("sigma must be positive and finite");
    (0..nsamples * header.nchans).map(|_| dist.sample(&mut rng) as f32).collect()
}

/// Adds `pulse.amplitude` to `width` samples per channel along the dispersed
/// track. Cells off the track are untouched.
pub fn inject_pulse(grid: &mut [f32], header: &FilterbankHeader, pulse: &PulseSpec) -> Result<(), SynthError> {
    if !(pulse.dm >= 0.0) || pulse.width == 0 {
        return Err(SynthError::InvalidPulse(format!("dm {} width {}", pulse.dm, pulse.width)));
    }
    let nc = header.nchans;
    let len = (grid.len() / nc) as u64;
    let start = pulse.start_sample(header.tsamp);
    let end = (0..nc)
        .map(|c| start + delay_samples(pulse.dm, header, c) as u64 + pulse.width as u64)
        .max()
        .unwrap_or(0);
    if end > len {
        return Err(SynthError::OutOfRange { end, len });
    }
    let amp = pulse.amplitude as f32;
    for c in 0..nc {
        let s0 = start + delay_samples(pulse.dm, header, c) as u64;
        for t in s0..s0 + pulse.width as u64 {
            grid[t as usize * nc + c] += amp;
        }
    }
    Ok(())
}

/// Matched-filter S/N of a top-hat at its true DM and width.
pub fn expected_snr(amplitude: f64, sigma: f64, nchans: usize, width_samples: u32) -> f64 {
    amplitude * (nchans as f64 * width_samples as f64).sqrt() / sigma
}

/// Samples spanned by a pulse including its dispersion sweep.
pub fn dispersed_extent(header: &FilterbankHeader, pulse: &PulseSpec) -> u64 {
    let sweep = (0..header.nchans).map(|c| delay_samples(pulse.dm, header, c)).max().unwrap_or(0);
    sweep as u64 + pulse.width as u64
}

/// Ground-truth sidecar line: `dm t0 width amplitude expected_snr`.
pub fn truth_line(pulse: &PulseSpec, snr: f64) -> String {
    format!("{:.6}\t{:.9}\t{}\t{:.9}\t{:.6}", pulse.dm, pulse.t0, pulse.width, pulse.amplitude, snr)
}

/// Noise field and pulses of a synthetic observation.
#[derive(Debug, Clone)]
pub struct Observation {
    /// `nsamples` must be set.
    pub header: FilterbankHeader,
    pub mean: f64,
    pub sigma: f64,
    pub seed: u64,
    pub pulses: Vec<PulseSpec>,
}

impl Observation {
    /// Noise plus pulses, time-major, before quantization.
    pub fn render(&self) -> Result<Vec<f32>, SynthError> {
        let mut grid = generate_noise(&self.header, self.header.nsamples as usize, self.mean, self.sigma, self.seed);
        for p in &self.pulses {
            inject_pulse(&mut grid, &self.header, p)?;
        }
        Ok(grid)
    }

    pub fn expected_snr(&self, pulse: &PulseSpec) -> f64 {
        expected_snr(pulse.amplitude, self.sigma, self.header.nchans, pulse.width)
    }

    /// Writes the filterbank to `path` and the ground truth, one
    /// [`truth_line`] per pulse, to `path` with extension `truth`.
    pub fn write(&self, path: &std::path::Path) -> Result<std::path::PathBuf, Box<dyn std::error::Error + Send + Sync>> {
        let grid = self.render()?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        crate::fbio::write_filterbank(&self.header, &grid, crate::fbio::Quantizer::default(), &mut out)?;
        std::io::Write::flush(&mut out)?;
        let truth = path.with_extension("truth");
        let text: String = self.pulses.iter().map(|p| truth_line(p, self.expected_snr(p)) + "\n").collect();
        std::fs::write(&truth, text)?;
        Ok(truth)
    }
}
