//! Reads a file chunk by chunk with and without read-ahead while a fake
//! computation runs, and compares wall times.

use std::time::{Duration, Instant};

use pulsegrid::fbio::{open_prefetching_reader_with, write_filterbank, PrefetchOptions, Quantizer};
use pulsegrid::synth::generate_noise;
use pulsegrid::{plan_chunks, FilterbankHeader};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = FilterbankHeader::new(1500.0, -1.0, 32, 64e-6, 8).with_nsamples(6 * 1024);
    let path = std::env::temp_dir().join(format!("prefetch-{}.fil", std::process::id()));
    let grid = generate_noise(&h, h.nsamples as usize, 100.0, 16.0, 1);
    write_filterbank(&h, &grid, Quantizer::default(), &mut std::fs::File::create(&path)?)?;

    let plan = plan_chunks(h.nsamples, 1024, 128)?;
    let step = Duration::from_millis(40);
    for lookahead in [0, 1, 2] {
        let start = Instant::now();
        let mut samples = 0;
        for chunk in open_prefetching_reader_with(&path, plan.clone(), PrefetchOptions { lookahead, read_latency: step })? {
            samples += chunk?.len();
            std::thread::sleep(step);
        }
        println!("lookahead {lookahead}: {samples} samples in {:.0} ms", start.elapsed().as_secs_f64() * 1e3);
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
