//! Searches a batch of files with separate creation and execution workers
//! and prints the run summary.

use std::time::Duration;

use pulsegrid::pipeline::{run_multi_file, run_sequential, SearchParams, StageDelays};
use pulsegrid::synth::{Observation, PulseSpec};
use pulsegrid::FilterbankHeader;

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let dir = std::env::temp_dir().join(format!("batch-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let header = FilterbankHeader::new(1500.0, -0.25, 64, 64e-6, 8).with_nsamples(20_000);
    let mut files = Vec::new();
    for i in 0..6 {
        let pulse = PulseSpec { dm: 50.0 + 20.0 * i as f64, t0: 0.4, width: 4, amplitude: PulseSpec::amplitude_for_snr(18.0, 16.0, 64, 4), seed: 0 };
        let path = dir.join(format!("obs{i}.fil"));
        Observation { header: header.clone(), mean: 100.0, sigma: 16.0, seed: i, pulses: vec![pulse] }.write(&path)?;
        files.push(path);
    }
    files.push(dir.join("missing.fil"));

    let mut params = SearchParams::default();
    params.dm_hi = 200.0;
    params.engine.max_boxcar = 32;
    params.baseline_s = 0.2;
    params.norm_calib_len = 4096;
    params.output_dir = dir.clone();
    // Simulated setup and teardown cost shows the stage overlap.
    params.delays = StageDelays { create: Duration::from_millis(80), execute: Duration::from_millis(80), read: Duration::ZERO };

    let serial = run_sequential(&files, &params);
    let piped = run_multi_file(&files, &params, 1, 1)?;
    println!("sequential {:.2} s, pipelined {:.2} s", serial.total_wall.as_secs_f64(), piped.total_wall.as_secs_f64());
    println!("{} submitted, {} processed, {} failed", piped.submitted(), piped.processed(), piped.failed());
    piped.write_to(std::io::stdout())?;
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
