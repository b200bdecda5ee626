//! Per-file search and the two-stage multi-file pipeline.
//!
//! A creation stage parses headers and builds [`PipelineTask`]s while an
//! execution stage streams chunks through the engine. The stages are joined
//! by bounded queues (paths → creation queue → tasks → execution queue), so
//! setting up file k+1 overlaps the search of file k and creation cannot run
//! arbitrarily far ahead.
//!
//! Chunked output matches whole-file output exactly. Each chunk is read with
//! extra context on both sides (baseline half-window plus boxcar slack) while
//! its valid range stays untouched, and every trial's noise level is frozen
//! from the first `norm_calib_len` samples of the file and reused for all
//! later chunks.

mod queue;

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub use queue::{BoundedQueue, Closed};

use crate::candfile::write_candidates;
use crate::cluster::{link_grid, ClusterResult};
use crate::dedisp::{generate_dm_trials, DedispError, DmSpacing, DmTrialPlan};
use crate::detect::{self, Candidate};
use crate::engine::{BufferPool, Engine, EngineConfig, EngineError, Noise, NoiseStore, StageTimes};
use crate::fbio::{self, open_prefetching_reader_with, plan_chunks, ChunkSpec, FbError, FilterbankHeader, FilterbankReader, PrefetchOptions};
use crate::rfi::{self, RfiConfig};

/// Default DM range and adaptive tolerance.
pub const DEFAULT_DM_LO: f64 = 0.0;
pub const DEFAULT_DM_HI: f64 = 1000.0;
pub const DEFAULT_DM_TOL: f64 = 1.25;
/// Samples used to calibrate each trial's noise level.
pub const DEFAULT_NORM_CALIB_LEN: usize = 1 << 16;
/// Name of the batch summary file written next to the `.cand` outputs.
pub const SUMMARY_FILE: &str = "run_summary.txt";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: FbError,
    },
    #[error("{path}: {source}")]
    Plan {
        path: PathBuf,
        #[source]
        source: DedispError,
    },
    #[error("{path}: {source}")]
    Engine {
        path: PathBuf,
        #[source]
        source: EngineError,
    },
    #[error("{path}: RFI excision failed: {reason}")]
    Rfi { path: PathBuf, reason: String },
    #[error("{path}: cannot write candidates: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// Artificial per-stage delays, for modelling slow setup, compute or
/// storage in timing experiments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageDelays {
    pub create: Duration,
    pub execute: Duration,
    pub read: Duration,
}

/// Everything that controls a search, independent of the input file.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub dm_lo: f64,
    pub dm_hi: f64,
    pub spacing: DmSpacing,
    /// Worker count, threshold, boxcars, radii, memory budget. The baseline
    /// window is derived from `baseline_s` per file.
    pub engine: EngineConfig,
    pub baseline_s: f64,
    pub chunk_len: u64,
    pub rfi: RfiConfig,
    pub lookahead: usize,
    pub norm_calib_len: usize,
    pub output_dir: PathBuf,
    pub delays: StageDelays,
    /// Execution-queue capacity; `None` means twice the execution workers.
    pub queue_capacity: Option<usize>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            dm_lo: DEFAULT_DM_LO,
            dm_hi: DEFAULT_DM_HI,
            spacing: DmSpacing::Adaptive(DEFAULT_DM_TOL),
            engine: EngineConfig::default(),
            baseline_s: detect::DEFAULT_BASELINE_S,
            chunk_len: fbio::DEFAULT_CHUNK_LEN,
            rfi: RfiConfig::default(),
            lookahead: 1,
            norm_calib_len: DEFAULT_NORM_CALIB_LEN,
            output_dir: PathBuf::from("."),
            delays: StageDelays::default(),
            queue_capacity: None,
        }
    }
}

/// Immutable description of one file's search.
#[derive(Debug, Clone)]
pub struct PipelineTask {
    pub path: PathBuf,
    pub header: FilterbankHeader,
    pub engine: EngineConfig,
    pub plan: DmTrialPlan,
    /// Chunk tiling; each overlap is `max_delay + max_boxcar`.
    pub chunks: Vec<ChunkSpec>,
    /// Read windows: `chunks` widened by context, same valid ranges.
    pub windows: Vec<ChunkSpec>,
    pub output: PathBuf,
}

impl PipelineTask {
    pub fn overlap(&self) -> u64 {
        (self.plan.max_delay() + self.engine.max_boxcar) as u64
    }

    /// Longest read window, which sizes the pooled blocks.
    pub fn max_window(&self) -> usize {
        self.windows.iter().map(|w| w.length as usize).max().unwrap_or(0)
    }
}

/// `<stem>.cand` in `dir`.
pub fn default_output(path: &Path, dir: &Path) -> PathBuf {
    dir.join(format!("{}.cand", stem(path)))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

/// Output paths for a batch: the first file with a given stem gets
/// `<stem>.cand`, later ones `<stem>_1.cand`, `<stem>_2.cand`, ...
pub fn assign_outputs(paths: &[PathBuf], dir: &Path) -> Vec<PathBuf> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut taken: BTreeSet<String> = BTreeSet::new();
    paths
        .iter()
        .map(|p| {
            let s = stem(p);
            let n = seen.entry(s.clone()).or_insert(0);
            let mut name = if *n == 0 { format!("{s}.cand") } else { format!("{s}_{n}.cand") };
            while !taken.insert(name.clone()) {
                *n += 1;
                name = format!("{s}_{n}.cand");
            }
            *n += 1;
            dir.join(name)
        })
        .collect()
}

/// Parses the header of `path` and plans its search.
pub fn create_task(path: &Path, params: &SearchParams, output: PathBuf) -> Result<PipelineTask, PipelineError> {
    let header = FilterbankReader::open(path)
        .map(|r| r.header().clone())
        .map_err(|source| PipelineError::Read { path: path.into(), source })?;
    let plan = generate_dm_trials(params.dm_lo, params.dm_hi, &header, params.spacing)
        .map_err(|source| PipelineError::Plan { path: path.into(), source })?;
    let mut engine = params.engine.clone();
    engine.baseline_window = detect::baseline_window_samples(params.baseline_s, header.tsamp);
    engine.validate().map_err(|source| PipelineError::Engine { path: path.into(), source })?;

    let overlap = (plan.max_delay() + engine.max_boxcar) as u64;
    let n = header.nsamples;
    let chunk_len = params.chunk_len.max(overlap + 1);
    let chunks = plan_chunks(n, chunk_len, overlap).map_err(|source| PipelineError::Read { path: path.into(), source })?;

    let half = (engine.baseline_window / 2) as u64;
    let slack = 4 * engine.max_boxcar as u64;
    let min_len = (params.norm_calib_len + plan.max_delay()) as u64 + half + 1;
    let windows = chunks.iter().map(|c| c.with_context(half + slack, half + slack, min_len, n)).collect();
    Ok(PipelineTask { path: path.into(), header, engine, plan, chunks, windows, output })
}

/// Wall time per stage for one file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FileStages {
    pub read: Duration,
    pub rfi: Duration,
    pub dm_loop: StageTimes,
    pub cluster: Duration,
    pub write: Duration,
}

/// In-memory result of searching one file.
#[derive(Debug, Clone)]
pub struct FileResult {
    pub clusters: Vec<ClusterResult>,
    pub candidates: Vec<Candidate>,
    pub skipped_trials: Vec<usize>,
    pub stages: FileStages,
    /// Per-trial stage times summed over chunks.
    pub trial_times: Vec<StageTimes>,
}

/// Searches one file: RFI excision, dedispersion and the DM loop per chunk,
/// then clustering over the whole file.
pub fn search_task(
    task: &PipelineTask,
    engine: &Engine,
    lookahead: usize,
    rfi_cfg: &RfiConfig,
    read_latency: Duration,
    norm_calib_len: usize,
) -> Result<FileResult, PipelineError> {
    let path = &task.path;
    let opts = PrefetchOptions { lookahead, read_latency };
    let mut stream = open_prefetching_reader_with(path, task.windows.clone(), opts)
        .map_err(|source| PipelineError::Read { path: path.clone(), source })?;
    let store = NoiseStore::new(task.plan.len());
    let noise = Noise::Calibrated { window: norm_calib_len, store: &store };
    let reserve = task.max_window();

    let mut stages = FileStages::default();
    let mut candidates = Vec::new();
    let mut skipped = BTreeSet::new();
    let mut trial_times = vec![StageTimes::default(); task.plan.len()];
    loop {
        let t0 = Instant::now();
        let Some(chunk) = stream.next() else { break };
        let mut chunk = chunk.map_err(|source| PipelineError::Read { path: path.clone(), source })?;
        stages.read += t0.elapsed();

        if rfi_cfg.enabled() {
            let t = Instant::now();
            rfi::excise(&mut chunk, rfi_cfg).map_err(|e| PipelineError::Rfi { path: path.clone(), reason: e.to_string() })?;
            stages.rfi += t.elapsed();
        }
        let out = engine
            .run_dm_loop_sized(&chunk, &task.plan, noise, reserve)
            .map_err(|source| PipelineError::Engine { path: path.clone(), source })?;
        stages.dm_loop.add(&out.stage_totals());
        for (acc, t) in trial_times.iter_mut().zip(&out.trial_times) {
            acc.add(t);
        }
        skipped.extend(out.skipped);
        candidates.extend(out.candidates);
    }
    crate::engine::sort_candidates(&mut candidates);
    let t = Instant::now();
    let clusters = link_grid(&candidates, &task.engine.radii);
    stages.cluster = t.elapsed();
    Ok(FileResult { clusters, candidates, skipped_trials: skipped.into_iter().collect(), stages, trial_times })
}

/// Outcome of one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct FileReport {
    pub path: PathBuf,
    pub output: PathBuf,
    pub status: FileStatus,
    /// Clusters written.
    pub candidates: usize,
    pub skipped_trials: Vec<usize>,
    pub stages: FileStages,
    pub create_wall: Duration,
    pub execute_wall: Duration,
}

impl FileReport {
    fn failed(path: PathBuf, output: PathBuf, err: &PipelineError, create_wall: Duration) -> Self {
        Self {
            path,
            output,
            status: FileStatus::Failed(err.to_string()),
            candidates: 0,
            skipped_trials: Vec::new(),
            stages: FileStages::default(),
            create_wall,
            execute_wall: Duration::ZERO,
        }
    }

    pub fn wall(&self) -> Duration {
        self.create_wall + self.execute_wall
    }
}

/// Per-file reports in submission order plus the batch wall time.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<FileReport>,
    pub total_wall: Duration,
}

impl RunSummary {
    pub fn submitted(&self) -> usize {
        self.files.len()
    }

    pub fn failed(&self) -> usize {
        self.files.iter().filter(|f| f.status != FileStatus::Ok).count()
    }

    pub fn processed(&self) -> usize {
        self.submitted() - self.failed()
    }

    /// Tab-separated: path, status, candidate count, wall ms.
    pub fn write_to<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for f in &self.files {
            let status = match &f.status {
                FileStatus::Ok => "ok".to_string(),
                FileStatus::Failed(msg) => format!("failed: {}", msg.replace(['\t', '\n'], " ")),
            };
            writeln!(sink, "{}\t{}\t{}\t{}", f.path.display(), status, f.candidates, f.wall().as_millis())?;
        }
        sink.flush()
    }
}

/// Runs a created task to completion and writes its `.cand` file.
pub fn execute_task(task: &PipelineTask, engine: &Engine, params: &SearchParams) -> Result<FileReport, PipelineError> {
    let t0 = Instant::now();
    if !params.delays.execute.is_zero() {
        std::thread::sleep(params.delays.execute);
    }
    let res = search_task(task, engine, params.lookahead, &params.rfi, params.delays.read, params.norm_calib_len)?;
    let t = Instant::now();
    let wrap = |source| PipelineError::Write { path: task.output.clone(), source };
    let file = File::create(&task.output).map_err(wrap)?;
    let n = write_candidates(&res.clusters, &task.header, BufWriter::new(file)).map_err(wrap)?;
    let mut stages = res.stages;
    stages.write = t.elapsed();
    Ok(FileReport {
        path: task.path.clone(),
        output: task.output.clone(),
        status: FileStatus::Ok,
        candidates: n,
        skipped_trials: res.skipped_trials,
        stages,
        create_wall: Duration::ZERO,
        execute_wall: t0.elapsed(),
    })
}

fn timed_create(path: &Path, params: &SearchParams, output: PathBuf) -> (Result<PipelineTask, PipelineError>, Duration) {
    let t0 = Instant::now();
    if !params.delays.create.is_zero() {
        std::thread::sleep(params.delays.create);
    }
    (create_task(path, params, output), t0.elapsed())
}

fn exec_engine(task: &PipelineTask, pool: &Arc<BufferPool>, share: usize) -> Engine {
    Engine::with_pool(EngineConfig { memory_budget: share, ..task.engine.clone() }, Arc::clone(pool))
}

/// Searches a single file, writing its `.cand` to `output`.
pub fn run_single(path: &Path, params: &SearchParams, output: PathBuf) -> FileReport {
    let (task, create_wall) = timed_create(path, params, output.clone());
    let task = match task {
        Ok(t) => t,
        Err(e) => return FileReport::failed(path.into(), output, &e, create_wall),
    };
    let pool = Arc::new(BufferPool::new(params.engine.memory_budget));
    let engine = exec_engine(&task, &pool, params.engine.memory_budget);
    match execute_task(&task, &engine, params) {
        Ok(mut r) => {
            r.create_wall = create_wall;
            r
        }
        Err(e) => FileReport::failed(path.into(), output, &e, create_wall),
    }
}

/// Creates and executes each file in turn on the calling thread.
pub fn run_sequential(paths: &[PathBuf], params: &SearchParams) -> RunSummary {
    let t0 = Instant::now();
    let outputs = assign_outputs(paths, &params.output_dir);
    let pool = Arc::new(BufferPool::new(params.engine.memory_budget));
    let mut files = Vec::with_capacity(paths.len());
    for (path, output) in paths.iter().zip(outputs) {
        let (task, create_wall) = timed_create(path, params, output.clone());
        let report = match task {
            Ok(task) => match execute_task(&task, &exec_engine(&task, &pool, params.engine.memory_budget), params) {
                Ok(mut r) => {
                    r.create_wall = create_wall;
                    r
                }
                Err(e) => FileReport::failed(path.clone(), output, &e, create_wall),
            },
            Err(e) => FileReport::failed(path.clone(), output, &e, create_wall),
        };
        files.push(report);
    }
    RunSummary { files, total_wall: t0.elapsed() }
}

/// The bounded queues joining the two stages.
#[derive(Debug)]
pub struct StageQueues {
    pub creation: BoundedQueue<(usize, PathBuf, PathBuf)>,
    pub execution: BoundedQueue<(usize, PipelineTask, Duration)>,
}

impl StageQueues {
    pub fn new(creation_capacity: usize, execution_capacity: usize) -> Self {
        Self { creation: BoundedQueue::new(creation_capacity), execution: BoundedQueue::new(execution_capacity) }
    }
}

/// Two-stage batch search: `n_create` setup workers feed `n_exec`
/// execution workers that share one buffer pool. A failing file is
/// recorded and the batch continues.
pub fn run_multi_file(paths: &[PathBuf], params: &SearchParams, n_create: usize, n_exec: usize) -> Result<RunSummary, PipelineError> {
    if n_create == 0 || n_exec == 0 {
        return Err(PipelineError::Params("n_create and n_exec must be at least 1".into()));
    }
    if paths.is_empty() {
        return Err(PipelineError::Params("no input files".into()));
    }
    let t0 = Instant::now();
    let outputs = assign_outputs(paths, &params.output_dir);
    let queues = StageQueues::new(2 * n_create, params.queue_capacity.unwrap_or(2 * n_exec).max(1));
    let pool = Arc::new(BufferPool::new(params.engine.memory_budget));
    let share = params.engine.memory_budget / n_exec;
    let reports: Mutex<Vec<Option<FileReport>>> = Mutex::new(vec![None; paths.len()]);
    let record = |i: usize, r: FileReport| reports.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);

    std::thread::scope(|s| {
        let creators: Vec<_> = (0..n_create)
            .map(|_| {
                s.spawn(|| {
                    while let Some((i, path, output)) = queues.creation.pop() {
                        match timed_create(&path, params, output.clone()) {
                            (Ok(task), wall) => {
                                if queues.execution.push((i, task, wall)).is_err() {
                                    break;
                                }
                            }
                            (Err(e), wall) => {
                                log::error!("{e}");
                                record(i, FileReport::failed(path, output, &e, wall));
                            }
                        }
                    }
                })
            })
            .collect();
        for _ in 0..n_exec {
            s.spawn(|| {
                while let Some((i, task, create_wall)) = queues.execution.pop() {
                    let engine = exec_engine(&task, &pool, share);
                    let report = match execute_task(&task, &engine, params) {
                        Ok(mut r) => {
                            r.create_wall = create_wall;
                            r
                        }
                        Err(e) => {
                            log::error!("{e}");
                            FileReport::failed(task.path.clone(), task.output.clone(), &e, create_wall)
                        }
                    };
                    record(i, report);
                }
            });
        }
        for (i, (p, o)) in paths.iter().zip(outputs).enumerate() {
            if queues.creation.push((i, p.clone(), o)).is_err() {
                break;
            }
        }
        queues.creation.close();
        for c in creators {
            if c.join().is_err() {
                log::error!("creation worker panicked");
            }
        }
        queues.execution.close();
    });

    let files = reports
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .zip(paths)
        .map(|(r, p)| {
            r.unwrap_or_else(|| FileReport {
                path: p.clone(),
                output: PathBuf::new(),
                status: FileStatus::Failed("worker terminated before finishing this file".into()),
                candidates: 0,
                skipped_trials: Vec::new(),
                stages: FileStages::default(),
                create_wall: Duration::ZERO,
                execute_wall: Duration::ZERO,
            })
        })
        .collect();
    Ok(RunSummary { files, total_wall: t0.elapsed() })
}
