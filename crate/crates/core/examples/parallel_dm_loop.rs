//! Runs the DM-trial loop on an in-memory chunk with several worker counts
//! and shows that the candidate list does not depend on them.

use std::time::Instant;

use pulsegrid::engine::Engine;
use pulsegrid::synth::{Observation, PulseSpec};
use pulsegrid::{generate_dm_trials, Chunk, DmSpacing, EngineConfig, FilterbankHeader};

fn main() {
    let header = FilterbankHeader::new(1500.0, -0.25, 64, 64e-6, 8).with_nsamples(32_768);
    let pulse = PulseSpec { dm: 150.0, t0: 0.8, width: 4, amplitude: PulseSpec::amplitude_for_snr(15.0, 16.0, 64, 4), seed: 0 };
    let obs = Observation { header: header.clone(), mean: 100.0, sigma: 16.0, seed: 3, pulses: vec![pulse] };
    let chunk = Chunk::whole(64, obs.render().unwrap());
    let plan = generate_dm_trials(0.0, 300.0, &header, DmSpacing::Adaptive(1.25)).unwrap();
    println!("{} trials over {} samples", plan.len(), chunk.len());

    let mut reference = None;
    for workers in [1, 2, 4] {
        let cfg = EngineConfig { n_workers: workers, max_boxcar: 64, baseline_window: 4097, ..Default::default() };
        let engine = Engine::new(cfg);
        let start = Instant::now();
        let out = engine.run_dm_loop(&chunk, &plan).unwrap();
        let stats = engine.pool().stats();
        println!(
            "{workers} worker(s): {} candidates in {:.0} ms, pool {} acquires / {} raw allocations",
            out.candidates.len(),
            start.elapsed().as_secs_f64() * 1e3,
            stats.acquires(),
            stats.raw_allocations
        );
        match &reference {
            None => reference = Some(out.candidates),
            Some(r) => assert_eq!(r, &out.candidates),
        }
    }
    let best = reference.unwrap().into_iter().max_by(|a, b| a.snr.total_cmp(&b.snr)).unwrap();
    println!("strongest: dm {:.2} width {} snr {:.2} at sample {}", best.dm, best.width_samples, best.snr, best.peak_sample);
}
