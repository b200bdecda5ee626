mod common;

use std::sync::{Arc, Barrier};

use pulsegrid::engine::{run_dm_loop, trial_working_set, BufferPool, Engine, EngineConfig};
use pulsegrid::synth::{generate_noise, inject_pulse};
use pulsegrid::{generate_dm_trials, Chunk, DmSpacing, DmTrialPlan, FilterbankHeader};
use rand::{Rng, SeedableRng};

fn workload(len: usize, n_trials: usize) -> (Chunk, DmTrialPlan) {
    let h = common::narrow_band(len as u64);
    let mut grid = generate_noise(&h, len, 100.0, 16.0, 5);
    for g in grid.iter_mut() {
        *g = g.round();
    }
    inject_pulse(&mut grid, &h, &common::pulse(120.0, 0.15, 4, 25.0, 64)).unwrap();
    inject_pulse(&mut grid, &h, &common::pulse(40.0, 0.4, 16, 18.0, 64)).unwrap();
    let step = 200.0 / n_trials as f64;
    let plan = generate_dm_trials(0.0, 200.0 - step, &h, DmSpacing::Linear(step)).unwrap();
    assert_eq!(plan.len(), n_trials);
    (Chunk::whole(64, grid), plan)
}

fn cfg(n_workers: usize) -> EngineConfig {
    EngineConfig { n_workers, max_boxcar: 64, baseline_window: 2001, threshold: 6.0, ..Default::default() }
}

#[test]
fn output_independent_of_worker_count_and_in_flight_limit() {
    let (chunk, plan) = workload(20_000, 40);
    let reference = run_dm_loop(&chunk, &plan, &cfg(1)).unwrap();
    assert!(!reference.candidates.is_empty());
    for t in [2, 3, 8, 64] {
        for cap in [None, Some(1), Some(2)] {
            let out = run_dm_loop(&chunk, &plan, &EngineConfig { in_flight_cap: cap, ..cfg(t) }).unwrap();
            assert_eq!(out.candidates, reference.candidates, "T={t} cap={cap:?}");
        }
    }
}

#[test]
fn budget_throttle_matches_unthrottled() {
    let (chunk, plan) = workload(20_000, 24);
    let ws = trial_working_set(chunk.len());
    let tight = run_dm_loop(&chunk, &plan, &EngineConfig { memory_budget: ws, ..cfg(4) }).unwrap();
    let loose = run_dm_loop(&chunk, &plan, &cfg(4)).unwrap();
    assert_eq!(tight.candidates, loose.candidates);
}

#[test]
fn pulses_found_at_injected_trials() {
    let (chunk, plan) = workload(20_000, 40);
    let out = run_dm_loop(&chunk, &plan, &cfg(2)).unwrap();
    let best = out.candidates.iter().max_by(|a, b| a.snr.total_cmp(&b.snr)).unwrap();
    assert!((best.dm - 120.0).abs() <= 10.0, "{best:?}");
    assert!((best.peak_sample as i64 - 2344).abs() <= 4);
}

#[test]
fn pooled_run_reuses_blocks() {
    let (chunk, plan) = workload(8_000, 500);
    let engine = Engine::new(cfg(4));
    engine.run_dm_loop(&chunk, &plan).unwrap();
    let s = engine.pool().stats();
    assert_eq!(s.acquires(), 4 * 500);
    assert!(s.raw_allocations * 10 <= s.acquires(), "{s:?}");
    assert!(s.raw_allocations <= 4 * 4);

    let bypass = Engine::with_pool(cfg(4), Arc::new(BufferPool::bypass(1 << 30)));
    let b = bypass.run_dm_loop(&chunk, &plan).unwrap();
    let bs = bypass.pool().stats();
    assert_eq!(bs.raw_allocations, bs.acquires());
    assert_eq!(bs.reuses, 0);
    assert_eq!(b.candidates, engine.run_dm_loop(&chunk, &plan).unwrap().candidates);
}

#[test]
fn peak_pool_bytes_respect_budget() {
    let (chunk, plan) = workload(8_000, 64);
    let ws = trial_working_set(chunk.len());
    let engine = Engine::new(EngineConfig { memory_budget: 3 * ws, ..cfg(8) });
    engine.run_dm_loop(&chunk, &plan).unwrap();
    assert!(engine.pool().stats().peak_bytes <= 3 * ws);
}

/// Eight threads hammer one pool; after every operation a snapshot must
/// show no block in both queues, and at the end every block is free.
#[test]
fn concurrent_pool_stress_audit() {
    let pool = Arc::new(BufferPool::new(1 << 28));
    let ops_per_worker = 100_000 / 8;
    let start = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8u64)
        .map(|w| {
            let pool = Arc::clone(&pool);
            let start = Arc::clone(&start);
            std::thread::spawn(move || {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(w);
                let mut held = Vec::new();
                let (mut violations, mut acquires) = (0usize, 0u64);
                start.wait();
                for op in 0..ops_per_worker {
                    if held.is_empty() || (held.len() < 8 && rng.random_bool(0.5)) {
                        held.push(pool.acquire(rng.random_range(1..20_000)).unwrap());
                        acquires += 1;
                    } else {
                        let i = rng.random_range(0..held.len());
                        pool.release(held.swap_remove(i)).unwrap();
                    }
                    if op % 64 == 0 && !pool.snapshot().overlap().is_empty() {
                        violations += 1;
                    }
                }
                for b in held {
                    pool.release(b).unwrap();
                }
                (violations, acquires)
            })
        })
        .collect();
    let (violations, acquires) =
        handles.into_iter().map(|h| h.join().unwrap()).fold((0, 0), |(v, a), (x, y)| (v + x, a + y));
    assert_eq!(violations, 0);
    let snap = pool.snapshot();
    assert!(snap.allocated.is_empty());
    let mut ids = snap.free.clone();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), snap.free.len(), "a block id appears twice in the free queue");
    assert_eq!(pool.stats().acquires(), acquires);
}

#[test]
fn single_channel_plan_runs() {
    let h = FilterbankHeader::new(1400.0, -1.0, 1, 1e-3, 32).with_nsamples(4000);
    let grid = generate_noise(&h, 4000, 0.0, 1.0, 3);
    let plan = generate_dm_trials(0.0, 100.0, &h, DmSpacing::Adaptive(1.25)).unwrap();
    assert_eq!(plan.len(), 2);
    let out = run_dm_loop(&Chunk::whole(1, grid), &plan, &cfg(2)).unwrap();
    assert_eq!(out.trial_times.len(), 2);
}
