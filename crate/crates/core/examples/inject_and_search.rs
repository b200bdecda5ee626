//! Writes a synthetic observation with one dispersed pulse, searches it and
//! prints the recovered clusters next to the injected truth.
//!
//!     cargo run --release --example inject_and_search

use pulsegrid::pipeline::{run_single, SearchParams};
use pulsegrid::synth::{Observation, PulseSpec};
use pulsegrid::{DmSpacing, FilterbankHeader};

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let dir = tempfile_dir()?;
    let header = FilterbankHeader::new(1500.0, -0.25, 64, 64e-6, 8).with_nsamples(80_000);
    let pulse = PulseSpec {
        dm: 320.0,
        t0: 1.5,
        width: 8,
        amplitude: PulseSpec::amplitude_for_snr(20.0, 16.0, 64, 8),
        seed: 0,
    };
    let obs = Observation { header, mean: 100.0, sigma: 16.0, seed: 42, pulses: vec![pulse] };
    let fil = dir.join("burst.fil");
    let truth = obs.write(&fil)?;
    println!("truth: {}", std::fs::read_to_string(&truth)?.trim());

    let mut params = SearchParams::default();
    params.dm_hi = 500.0;
    params.spacing = DmSpacing::Adaptive(1.25);
    params.engine.max_boxcar = 64;
    params.baseline_s = 0.5;
    params.norm_calib_len = 16_384;
    params.output_dir = dir.clone();
    let report = run_single(&fil, &params, dir.join("burst.cand"));
    println!("status {:?}, {} clusters in {:.2} s", report.status, report.candidates, report.wall().as_secs_f64());
    println!("snr\tpeak\ttime_s\twidth_idx\ttrial\tdm\tmembers\tbegin\tend");
    print!("{}", std::fs::read_to_string(&report.output)?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join(format!("pulsegrid-example-{}", std::process::id()));
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
