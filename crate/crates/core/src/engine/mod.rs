//! Parallel DM-trial loop.
//!
//! Worker `t` of `T` owns the trials `{i : i ≡ t (mod T)}` and runs each
//! through dedispersion, baseline removal, normalization, the boxcar bank
//! and peak finding, with all temporaries drawn from one shared
//! [`BufferPool`]. Workers fill private candidate buffers that are merged
//! and sorted once every worker has finished, so the output does not depend
//! on `T`, on scheduling, or on how many trials are in flight.

mod pool;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

pub use pool::{aligned_size, Block, BufferPool, PoolError, PoolSnapshot, PoolStats, MIN_BLOCK_BYTES};

use crate::cluster::LinkRadii;
use crate::dedisp::{series_len, ChannelMajor, DedispError, DmTrialPlan};
use crate::detect::{self, Candidate, TrialMeta};
use crate::fbio::Chunk;

/// Pooled blocks held by one trial: series, prefix sums, two boxcar buffers.
pub const BLOCKS_PER_TRIAL: usize = 4;
/// Default memory budget (1 GiB).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("trial {trial}: {source}")]
    BudgetExhausted {
        trial: usize,
        #[source]
        source: PoolError,
    },
    #[error(transparent)]
    Dedisp(#[from] DedispError),
    #[error("pool error: {0}")]
    Pool(#[from] PoolError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub n_workers: usize,
    pub threshold: f64,
    /// Widest boxcar, a power of two.
    pub max_boxcar: usize,
    /// Baseline window in samples (forced odd).
    pub baseline_window: usize,
    pub radii: LinkRadii,
    pub memory_budget: usize,
    /// Optional ceiling on concurrently processed trials, below what the
    /// budget allows.
    pub in_flight_cap: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            threshold: detect::DEFAULT_THRESHOLD,
            max_boxcar: detect::DEFAULT_MAX_BOXCAR,
            baseline_window: 31251,
            radii: LinkRadii::default(),
            memory_budget: DEFAULT_MEMORY_BUDGET,
            in_flight_cap: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n_workers == 0 {
            return Err(EngineError::Config("n_workers must be at least 1".into()));
        }
        if !self.max_boxcar.is_power_of_two() {
            return Err(EngineError::Config(format!("max boxcar {} is not a power of two", self.max_boxcar)));
        }
        if !(self.threshold > 0.0) {
            return Err(EngineError::Config(format!("threshold {} must be positive", self.threshold)));
        }
        if self.in_flight_cap == Some(0) {
            return Err(EngineError::Config("in-flight cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Bytes requested per pooled block for a chunk of `len` samples.
pub fn block_request_bytes(len: usize) -> usize {
    (len + 1) * std::mem::size_of::<f64>()
}

/// Pool bytes one trial holds while processing a chunk of `len` samples.
pub fn trial_working_set(len: usize) -> usize {
    BLOCKS_PER_TRIAL * aligned_size(block_request_bytes(len))
}

/// Number of trials whose working sets fit the budget at once.
pub fn in_flight_limit(plan: &DmTrialPlan, chunk: &Chunk, cfg: &EngineConfig) -> Result<usize, EngineError> {
    let _ = plan;
    in_flight_for_len(chunk.len(), cfg)
}

fn in_flight_for_len(len: usize, cfg: &EngineConfig) -> Result<usize, EngineError> {
    let ws = trial_working_set(len);
    let limit = cfg.memory_budget / ws;
    if limit == 0 {
        return Err(EngineError::Config(format!(
            "budget below one trial: {} bytes available, {} needed",
            cfg.memory_budget, ws
        )));
    }
    Ok(cfg.in_flight_cap.map_or(limit, |cap| cap.min(limit)))
}

/// Trials of worker `worker` among `n_workers` over `n_trials`.
pub fn worker_partition(n_trials: usize, n_workers: usize, worker: usize) -> Vec<usize> {
    (worker..n_trials).step_by(n_workers.max(1)).collect()
}

/// How each trial's series is scaled to unit noise.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    /// Robust RMS of the whole series of this chunk.
    PerSeries,
    /// RMS of the first `window` samples the first time a trial is seen,
    /// then reused for every later chunk of the same file.
    Calibrated { window: usize, store: &'a NoiseStore },
}

/// Per-trial RMS values frozen at calibration.
#[derive(Debug, Default)]
pub struct NoiseStore {
    rms: Vec<OnceLock<f64>>,
}

impl NoiseStore {
    pub fn new(n_trials: usize) -> Self {
        Self { rms: (0..n_trials).map(|_| OnceLock::new()).collect() }
    }

    pub fn get(&self, trial: usize) -> Option<f64> {
        self.rms.get(trial).and_then(|c| c.get().copied())
    }
}

/// Wall time per stage, summed over trials.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub dedisperse: Duration,
    pub baseline: Duration,
    pub normalize: Duration,
    pub filter_and_peaks: Duration,
}

impl StageTimes {
    pub fn add(&mut self, o: &StageTimes) {
        self.dedisperse += o.dedisperse;
        self.baseline += o.baseline;
        self.normalize += o.normalize;
        self.filter_and_peaks += o.filter_and_peaks;
    }

    pub fn total(&self) -> Duration {
        self.dedisperse + self.baseline + self.normalize + self.filter_and_peaks
    }
}

#[derive(Debug, Clone, Default)]
pub struct DmLoopOutput {
    /// Sorted by (peak_sample, dm_trial, width_index).
    pub candidates: Vec<Candidate>,
    /// Trials skipped because their series had zero RMS.
    pub skipped: Vec<usize>,
    /// Per-trial stage times, indexed by trial.
    pub trial_times: Vec<StageTimes>,
}

impl DmLoopOutput {
    pub fn stage_totals(&self) -> StageTimes {
        let mut t = StageTimes::default();
        for s in &self.trial_times {
            t.add(s);
        }
        t
    }
}

pub fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| {
        a.peak_sample
            .cmp(&b.peak_sample)
            .then(a.dm_trial.cmp(&b.dm_trial))
            .then(a.width_index.cmp(&b.width_index))
    });
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { permits: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *p == 0 {
            p = self.cv.wait(p).unwrap_or_else(|e| e.into_inner());
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// DM-loop executor bound to a (possibly shared) buffer pool.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    pool: Arc<BufferPool>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Self {
        let pool = Arc::new(BufferPool::new(cfg.memory_budget));
        Self { cfg, pool }
    }

    pub fn with_pool(cfg: EngineConfig, pool: Arc<BufferPool>) -> Self {
        Self { cfg, pool }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &Arc<BufferPool> {
        &self.pool
    }

    pub fn run_dm_loop(&self, chunk: &Chunk, plan: &DmTrialPlan) -> Result<DmLoopOutput, EngineError> {
        self.run_dm_loop_with(chunk, plan, Noise::PerSeries)
    }

    pub fn run_dm_loop_with(&self, chunk: &Chunk, plan: &DmTrialPlan, noise: Noise<'_>) -> Result<DmLoopOutput, EngineError> {
        self.run_dm_loop_sized(chunk, plan, noise, chunk.len())
    }

    /// As [`Engine::run_dm_loop_with`], sizing pooled blocks and the
    /// in-flight limit for chunks of up to `reserve_len` samples. A file
    /// whose chunks differ in length then requests one block size
    /// throughout, so blocks are reused across chunks and the budget holds.
    pub fn run_dm_loop_sized(
        &self,
        chunk: &Chunk,
        plan: &DmTrialPlan,
        noise: Noise<'_>,
        reserve_len: usize,
    ) -> Result<DmLoopOutput, EngineError> {
        let cfg = &self.cfg;
        cfg.validate()?;
        if plan.is_empty() {
            return Ok(DmLoopOutput::default());
        }
        if chunk.len() <= plan.max_delay() {
            let trial = (0..plan.len()).find(|&t| plan.trial_max_delay(t) >= chunk.len()).unwrap_or(0);
            return Err(DedispError::ChunkTooShort { trial, len: chunk.len(), max_delay: plan.max_delay() }.into());
        }
        let reserve_len = reserve_len.max(chunk.len());
        let limit = in_flight_for_len(reserve_len, &self.cfg_for_pool())?;
        let n_trials = plan.len();
        let workers = cfg.n_workers.min(n_trials);
        let gate = Semaphore::new(limit.min(workers));
        let cm = ChannelMajor::from_chunk(chunk);
        let abort = AtomicBool::new(false);
        let request = block_request_bytes(reserve_len);

        let ctx = TrialCtx { chunk, plan, cfg, cm: &cm, noise, request, pool: &self.pool };
        let results: Vec<Result<WorkerOut, EngineError>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let ctx = &ctx;
                    let gate = &gate;
                    let abort = &abort;
                    s.spawn(move || {
                        let mut out = WorkerOut::default();
                        for trial in (w..n_trials).step_by(workers) {
                            if abort.load(Ordering::Relaxed) {
                                break;
                            }
                            let _permit = gate.acquire();
                            match ctx.run_trial(trial, &mut out.candidates) {
                                Ok(TrialResult { times, skipped }) => {
                                    out.times.push((trial, times));
                                    if skipped {
                                        out.skipped.push(trial);
                                    }
                                }
                                Err(e) => {
                                    abort.store(true, Ordering::Relaxed);
                                    return Err(e);
                                }
                            }
                        }
                        Ok(out)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("DM-loop worker panicked")).collect()
        });

        let mut output = DmLoopOutput { trial_times: vec![StageTimes::default(); n_trials], ..Default::default() };
        let mut first_err = None;
        for r in results {
            match r {
                Ok(w) => {
                    output.candidates.extend(w.candidates);
                    output.skipped.extend(w.skipped);
                    for (t, times) in w.times {
                        output.trial_times[t] = times;
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        sort_candidates(&mut output.candidates);
        output.skipped.sort_unstable();
        Ok(output)
    }

    /// This engine's share of the pool: its own budget, never more than the
    /// pool holds.
    fn cfg_for_pool(&self) -> EngineConfig {
        EngineConfig { memory_budget: self.cfg.memory_budget.min(self.pool.budget()), ..self.cfg.clone() }
    }
}

#[derive(Default)]
struct WorkerOut {
    candidates: Vec<Candidate>,
    skipped: Vec<usize>,
    times: Vec<(usize, StageTimes)>,
}

struct TrialResult {
    times: StageTimes,
    skipped: bool,
}

struct TrialCtx<'a> {
    chunk: &'a Chunk,
    plan: &'a DmTrialPlan,
    cfg: &'a EngineConfig,
    cm: &'a ChannelMajor,
    noise: Noise<'a>,
    request: usize,
    pool: &'a BufferPool,
}

impl TrialCtx<'_> {
    fn run_trial(&self, trial: usize, out: &mut Vec<Candidate>) -> Result<TrialResult, EngineError> {
        let n = series_len(self.chunk.len(), self.plan, trial)?;
        let mut blocks: Vec<Block> = Vec::with_capacity(BLOCKS_PER_TRIAL);
        for _ in 0..BLOCKS_PER_TRIAL {
            match self.pool.acquire(self.request) {
                Ok(b) => blocks.push(b),
                Err(source) => {
                    for b in blocks {
                        self.pool.release(b)?;
                    }
                    return Err(EngineError::BudgetExhausted { trial, source });
                }
            }
        }
        let result = self.process(trial, n, &mut blocks, out);
        for b in blocks {
            self.pool.release(b)?;
        }
        Ok(result)
    }

    fn process(&self, trial: usize, n: usize, blocks: &mut [Block], out: &mut Vec<Candidate>) -> TrialResult {
        let mut times = StageTimes::default();
        let (series_blk, rest) = blocks.split_first_mut().expect("four blocks");
        let (prefix_blk, rest) = rest.split_first_mut().expect("four blocks");
        let (a_blk, rest) = rest.split_first_mut().expect("four blocks");
        let b_blk = &mut rest[0];
        let series = series_blk.slice_mut(n);

        let t0 = Instant::now();
        self.cm.dedisperse_into(self.plan.delays(trial), series);
        let t1 = Instant::now();
        detect::remove_baseline_in_place(series, self.cfg.baseline_window, prefix_blk.as_mut_slice());
        let t2 = Instant::now();
        let rms = match self.noise {
            Noise::PerSeries => detect::robust_rms(series),
            Noise::Calibrated { window, store } => match store.get(trial) {
                Some(r) => Some(r),
                None => {
                    let r = detect::robust_rms(&series[..window.min(n)]);
                    if let (Some(r), Some(cell)) = (r, store.rms.get(trial)) {
                        let _ = cell.set(r);
                    }
                    r
                }
            },
        };
        let Some(rms) = rms else {
            log::warn!("trial {trial} (DM {:.3}) has a degenerate series; skipped", self.plan.dms[trial]);
            times.dedisperse = t1 - t0;
            times.baseline = t2 - t1;
            return TrialResult { times, skipped: true };
        };
        detect::scale_in_place(series, rms);
        let t3 = Instant::now();

        let meta = TrialMeta {
            dm_trial: trial as u32,
            dm: self.plan.dms[trial],
            start_sample: self.chunk.spec.start_sample,
            tsamp: self.plan.tsamp(),
            valid_range: self.chunk.spec.valid_range.clone(),
        };
        let threshold = self.cfg.threshold;
        detect::scan_boxcars(series, self.cfg.max_boxcar, a_blk.as_mut_slice(), b_blk.as_mut_slice(), |k, w, sums| {
            detect::find_peaks_scaled(sums, (w as f64).sqrt(), threshold, k, &meta, out);
        });
        let t4 = Instant::now();
        times.dedisperse = t1 - t0;
        times.baseline = t2 - t1;
        times.normalize = t3 - t2;
        times.filter_and_peaks = t4 - t3;
        TrialResult { times, skipped: false }
    }
}

/// Runs the DM loop over `chunk` with a fresh pool sized by the config.
pub fn run_dm_loop(chunk: &Chunk, plan: &DmTrialPlan, cfg: &EngineConfig) -> Result<DmLoopOutput, EngineError> {
    Engine::new(cfg.clone()).run_dm_loop(chunk, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbio::FilterbankHeader;

    #[test]
    fn modulo_partition_of_seven() {
        assert_eq!(worker_partition(7, 3, 0), vec![0, 3, 6]);
        assert_eq!(worker_partition(7, 3, 1), vec![1, 4]);
        assert_eq!(worker_partition(7, 3, 2), vec![2, 5]);
    }

    #[test]
    fn partitions_cover_exactly_once() {
        for n in [1, 5, 64, 101] {
            for t in 1..10 {
                let mut seen = vec![0; n];
                for w in 0..t {
                    for i in worker_partition(n, t, w) {
                        assert_eq!(i % t, w);
                        seen[i] += 1;
                    }
                }
                assert!(seen.iter().all(|&s| s == 1));
            }
        }
    }

    fn chunk(len: usize) -> (Chunk, DmTrialPlan) {
        let h = FilterbankHeader::new(1500.0, -1.0, 8, 6.4e-5, 32);
        let plan = DmTrialPlan::from_dms(vec![0.0, 10.0], &h);
        (Chunk::whole(8, vec![0.0; 8 * len]), plan)
    }

    #[test]
    fn in_flight_floor_arithmetic() {
        let (c, plan) = chunk(1000);
        let ws = trial_working_set(1000);
        let mut cfg = EngineConfig { memory_budget: ws, ..Default::default() };
        assert_eq!(in_flight_limit(&plan, &c, &cfg).unwrap(), 1);
        cfg.memory_budget = ws * 21 / 2;
        assert_eq!(in_flight_limit(&plan, &c, &cfg).unwrap(), 10);
        cfg.memory_budget = ws - 1;
        assert!(matches!(in_flight_limit(&plan, &c, &cfg), Err(EngineError::Config(_))));
        cfg.memory_budget = ws * 8;
        cfg.in_flight_cap = Some(3);
        assert_eq!(in_flight_limit(&plan, &c, &cfg).unwrap(), 3);
    }

    #[test]
    fn zero_series_trials_are_skipped() {
        let (c, plan) = chunk(500);
        let cfg = EngineConfig { n_workers: 2, baseline_window: 11, max_boxcar: 4, ..Default::default() };
        let out = run_dm_loop(&c, &plan, &cfg).unwrap();
        assert!(out.candidates.is_empty());
        assert_eq!(out.skipped, vec![0, 1]);
    }

    #[test]
    fn short_chunk_rejected() {
        let h = FilterbankHeader::new(1500.0, -1.0, 8, 6.4e-5, 32);
        let plan = DmTrialPlan::from_dms(vec![0.0, 1000.0], &h);
        let c = Chunk::whole(8, vec![1.0; 8 * 10]);
        let err = run_dm_loop(&c, &plan, &EngineConfig::default()).unwrap_err();
        assert!(matches!(err, EngineError::Dedisp(DedispError::ChunkTooShort { trial: 1, .. })));
    }

    #[test]
    fn budget_exhaustion_names_trial() {
        let (c, plan) = chunk(1000);
        let engine = Engine::with_pool(
            EngineConfig { n_workers: 1, ..Default::default() },
            Arc::new(BufferPool::new(trial_working_set(1000) - 1)),
        );
        assert!(matches!(engine.run_dm_loop(&c, &plan), Err(EngineError::Config(_))));
    }
}
