//! Runs baseline removal, normalization, the boxcar bank and peak finding on
//! a single hand-made time series.

use pulsegrid::detect::{bank_widths, boxcar_bank, find_peaks, normalize, remove_baseline, TrialMeta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    // Slow drift plus noise, with a 16-sample top-hat of height 2.5 at 12000.
    let mut x: Vec<f64> = (0..n).map(|i| 50.0 + 5.0 * (i as f64 / 3000.0).sin() + noise.sample(&mut rng)).collect();
    x[12_000..12_016].iter_mut().for_each(|v| *v += 2.5);

    let flat = remove_baseline(&x, 1001);
    let (norm, rms) = normalize(&flat).unwrap();
    println!("robust rms {rms:.3}, widths {:?}", bank_widths(n, 64));

    let meta = TrialMeta { dm_trial: 0, dm: 0.0, start_sample: 0, tsamp: 64e-6, valid_range: 0..n as u64 };
    for (k, snr) in boxcar_bank(&norm, 64).unwrap().iter().enumerate() {
        let peaks = find_peaks(snr, 6.0, k as u32, &meta);
        let best = peaks.iter().max_by(|a, b| a.snr.total_cmp(&b.snr));
        match best {
            Some(c) => println!("width {:>2}: {} peaks, best S/N {:.2} at {}", 1 << k, peaks.len(), c.snr, c.peak_sample),
            None => println!("width {:>2}: nothing above 6", 1 << k),
        }
    }
}
