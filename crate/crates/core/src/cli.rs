//! Command-line front end: `search`, `batch`, `inject` and `bench`.
//!
//! Single-dash Heimdall-style flags (`-dm 0 1000`, `-detect_thresh 6`,
//! `-boxcar_max 4096`, `-output_dir out`) are accepted and rewritten to their
//! long forms before parsing.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::cluster::LinkRadii;
use crate::dedisp::DmSpacing;
use crate::engine::{Engine, EngineConfig, DEFAULT_MEMORY_BUDGET};
use crate::fbio::{FilterbankHeader, DEFAULT_CHUNK_LEN};
use crate::pipeline::{self, FileStatus, SearchParams, DEFAULT_DM_TOL, DEFAULT_NORM_CALIB_LEN, SUMMARY_FILE};
use crate::rfi::{RfiConfig, DEFAULT_K_MAD, DEFAULT_K_SIGMA};
use crate::synth::{Observation, PulseSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pulsegrid", version, about = "Single-pulse search over SIGPROC filterbank files")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search one file and write <stem>.cand.
    Search {
        input: PathBuf,
        #[command(flatten)]
        opts: SearchOpts,
    },
    /// Search many files through the two-stage pipeline.
    Batch {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Task-creation workers.
        #[arg(long, default_value_t = 1)]
        n_create: usize,
        /// Execution workers; each runs the parallel DM loop.
        #[arg(long, default_value_t = 1)]
        n_exec: usize,
        #[command(flatten)]
        opts: SearchOpts,
    },
    /// Write a synthetic filterbank with one dispersed pulse and a .truth sidecar.
    Inject(InjectOpts),
    /// Search files and print per-stage wall times as CSV (stage,trial_or_file,ms).
    Bench {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        opts: SearchOpts,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SearchOpts {
    /// DM range (pc cm^-3).
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [pipeline::DEFAULT_DM_LO, pipeline::DEFAULT_DM_HI])]
    pub dm: Vec<f64>,
    /// Linear DM step; overrides the adaptive tolerance.
    #[arg(long)]
    pub dm_step: Option<f64>,
    /// Adaptive spacing tolerance (smearing growth per step, > 1).
    #[arg(long, default_value_t = DEFAULT_DM_TOL)]
    pub dm_tol: f64,
    /// Detection threshold in S/N.
    #[arg(long, default_value_t = crate::detect::DEFAULT_THRESHOLD)]
    pub detect_thresh: f64,
    /// Widest boxcar in samples (power of two).
    #[arg(long, default_value_t = crate::detect::DEFAULT_MAX_BOXCAR)]
    pub boxcar_max: usize,
    /// Baseline window in seconds.
    #[arg(long, default_value_t = crate::detect::DEFAULT_BASELINE_S)]
    pub baseline_len_s: f64,
    /// Chunk length in samples.
    #[arg(long, default_value_t = DEFAULT_CHUNK_LEN)]
    pub nsamps_chunk: u64,
    /// DM-loop worker threads [default: available cores].
    #[arg(long)]
    pub n_workers: Option<usize>,
    /// Disable zero-DM broadband excision.
    #[arg(long)]
    pub rfi_no_broad: bool,
    /// Disable narrowband channel excision.
    #[arg(long)]
    pub rfi_no_narrow: bool,
    /// Broadband threshold in standard deviations.
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
    /// Narrowband threshold in MADs.
    #[arg(long, default_value_t = DEFAULT_K_MAD)]
    pub k_mad: f64,
    /// Cluster time radius, in multiples of the wider boxcar.
    #[arg(long, default_value_t = LinkRadii::default().sep_time)]
    pub sep_time: u64,
    /// Cluster radius in DM trials.
    #[arg(long, default_value_t = LinkRadii::default().sep_dm_trials)]
    pub sep_dm: u32,
    /// Cluster radius in boxcar width indices.
    #[arg(long, default_value_t = LinkRadii::default().sep_width)]
    pub sep_width: u32,
    /// Buffer-pool budget in bytes.
    #[arg(long, default_value_t = DEFAULT_MEMORY_BUDGET)]
    pub memory_budget: usize,
    /// Ceiling on concurrently processed trials.
    #[arg(long)]
    pub in_flight: Option<usize>,
    /// Chunks read ahead of the one being searched.
    #[arg(long, default_value_t = 1)]
    pub lookahead: usize,
    /// Samples used to calibrate each trial's noise level.
    #[arg(long, default_value_t = DEFAULT_NORM_CALIB_LEN)]
    pub norm_calib_len: usize,
    /// Directory for .cand files and the run summary.
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
}

impl SearchOpts {
    pub fn to_params(&self) -> Result<SearchParams, String> {
        let (lo, hi) = (self.dm[0], self.dm[1]);
        if !(lo >= 0.0 && lo <= hi) {
            return Err(format!("invalid DM range {lo}..{hi}"));
        }
        let spacing = match self.dm_step {
            Some(s) if s > 0.0 => DmSpacing::Linear(s),
            Some(s) => return Err(format!("DM step {s} must be positive")),
            None if self.dm_tol > 1.0 => DmSpacing::Adaptive(self.dm_tol),
            None => return Err(format!("DM tolerance {} must exceed 1", self.dm_tol)),
        };
        let n_workers = self.n_workers.unwrap_or_else(|| EngineConfig::default().n_workers);
        let engine = EngineConfig {
            n_workers,
            threshold: self.detect_thresh,
            max_boxcar: self.boxcar_max,
            radii: LinkRadii { sep_time: self.sep_time, sep_dm_trials: self.sep_dm, sep_width: self.sep_width },
            memory_budget: self.memory_budget,
            in_flight_cap: self.in_flight,
            ..EngineConfig::default()
        };
        engine.validate().map_err(|e| e.to_string())?;
        if !(self.baseline_len_s > 0.0) {
            return Err(format!("baseline length {} must be positive", self.baseline_len_s));
        }
        if self.nsamps_chunk == 0 {
            return Err("chunk length must be positive".into());
        }
        Ok(SearchParams {
            dm_lo: lo,
            dm_hi: hi,
            spacing,
            engine,
            baseline_s: self.baseline_len_s,
            chunk_len: self.nsamps_chunk,
            rfi: RfiConfig {
                broadband: !self.rfi_no_broad,
                narrowband: !self.rfi_no_narrow,
                k_sigma: self.k_sigma,
                k_mad: self.k_mad,
                ..RfiConfig::default()
            },
            lookahead: self.lookahead,
            norm_calib_len: self.norm_calib_len,
            output_dir: self.output_dir.clone(),
            ..SearchParams::default()
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct InjectOpts {
    /// Output filterbank path.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub nchans: usize,
    /// Highest channel frequency (MHz).
    #[arg(long, default_value_t = 1500.0)]
    pub fch1: f64,
    /// Channel width (MHz, negative for descending).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub foff: f64,
    /// Sampling time (s).
    #[arg(long, default_value_t = 64e-6)]
    pub tsamp: f64,
    #[arg(long, default_value_t = 8)]
    pub nbits: u32,
    /// Observation length (s).
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Noise mean per cell.
    #[arg(long, default_value_t = 100.0)]
    pub mean: f64,
    /// Noise standard deviation per cell.
    #[arg(long, default_value_t = 16.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Pulse DM.
    #[arg(long, default_value_t = 300.0)]
    pub pulse_dm: f64,
    /// Pulse arrival at the top of the band (s).
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    /// Pulse width in samples.
    #[arg(long, default_value_t = 8)]
    pub width: u32,
    /// Target matched-filter S/N; sets the amplitude.
    #[arg(long, default_value_t = 20.0)]
    pub snr: f64,
    /// Write noise only.
    #[arg(long)]
    pub no_pulse: bool,
}

impl InjectOpts {
    pub fn observation(&self) -> Result<Observation, String> {
        let header = FilterbankHeader::new(self.fch1, self.foff, self.nchans, self.tsamp, self.nbits)
            .with_nsamples((self.duration / self.tsamp).round() as u64);
        header.validate().map_err(|e| e.to_string())?;
        if !(self.sigma > 0.0) {
            return Err(format!("sigma {} must be positive", self.sigma));
        }
        let pulses = if self.no_pulse {
            Vec::new()
        } else {
            vec![PulseSpec {
                dm: self.pulse_dm,
                t0: self.t0,
                width: self.width,
                amplitude: PulseSpec::amplitude_for_snr(self.snr, self.sigma, self.nchans, self.width),
                seed: self.seed,
            }]
        };
        Ok(Observation { header, mean: self.mean, sigma: self.sigma, seed: self.seed, pulses })
    }
}

/// Rewrites single-dash multi-letter flags to long form: `-detect_thresh`
/// becomes `--detect-thresh`. Negative numbers and short flags pass through.
pub fn normalize_args<I, T>(args: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    args.into_iter()
        .map(|a| {
            let a: OsString = a.into();
            match a.to_str() {
                Some(s)
                    if s.len() > 2
                        && s.starts_with('-')
                        && !s.starts_with("--")
                        && s[1..].chars().all(|c| c.is_ascii_alphabetic() || c == '_') =>
                {
                    OsString::from(format!("--{}", s[1..].replace('_', "-")))
                }
                _ => a,
            }
        })
        .collect()
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut out = std::io::stdout().lock();
    match dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn dispatch<W: Write>(cmd: Command, out: &mut W) -> Result<i32, Failure> {
    match cmd {
        Command::Search { input, opts } => {
            let params = opts.to_params().map_err(Failure::Usage)?;
            run_search(&input, &params, out)
        }
        Command::Batch { inputs, n_create, n_exec, opts } => {
            let params = opts.to_params().map_err(Failure::Usage)?;
            if n_create == 0 || n_exec == 0 {
                return Err(Failure::Usage("--n-create and --n-exec must be at least 1".into()));
            }
            run_batch(&inputs, &params, n_create, n_exec, out)
        }
        Command::Inject(opts) => {
            let obs = opts.observation().map_err(Failure::Usage)?;
            let truth = obs.write(&opts.output).map_err(runtime)?;
            writeln!(out, "wrote {} and {}", opts.output.display(), truth.display()).map_err(runtime)?;
            Ok(EXIT_OK)
        }
        Command::Bench { inputs, opts } => {
            let params = opts.to_params().map_err(Failure::Usage)?;
            run_bench(&inputs, &params, out)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

/// Searches one file into `<output_dir>/<stem>.cand`.
pub fn run_search_file(input: &Path, params: &SearchParams) -> pipeline::FileReport {
    pipeline::run_single(input, params, pipeline::default_output(input, &params.output_dir))
}

fn run_search<W: Write>(input: &Path, params: &SearchParams, out: &mut W) -> Result<i32, Failure> {
    ensure_dir(&params.output_dir)?;
    let t0 = Instant::now();
    let report = run_search_file(input, params);
    match &report.status {
        FileStatus::Ok => {
            writeln!(
                out,
                "{}: {} candidates in {} ms -> {}",
                input.display(),
                report.candidates,
                t0.elapsed().as_millis(),
                report.output.display()
            )
            .map_err(runtime)?;
            Ok(EXIT_OK)
        }
        FileStatus::Failed(msg) => Err(Failure::Runtime(msg.clone())),
    }
}

fn run_batch<W: Write>(inputs: &[PathBuf], params: &SearchParams, n_create: usize, n_exec: usize, out: &mut W) -> Result<i32, Failure> {
    ensure_dir(&params.output_dir)?;
    let summary = pipeline::run_multi_file(inputs, params, n_create, n_exec).map_err(|e| Failure::Usage(e.to_string()))?;
    let path = params.output_dir.join(SUMMARY_FILE);
    let file = std::fs::File::create(&path).map_err(runtime)?;
    summary.write_to(std::io::BufWriter::new(file)).map_err(runtime)?;
    for f in &summary.files {
        if let FileStatus::Failed(msg) = &f.status {
            eprintln!("error: {msg}");
        }
    }
    writeln!(
        out,
        "{} of {} files searched in {} ms; summary in {}",
        summary.processed(),
        summary.submitted(),
        summary.total_wall.as_millis(),
        path.display()
    )
    .map_err(runtime)?;
    Ok(if summary.failed() > 0 { EXIT_FAILURE } else { EXIT_OK })
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

fn run_bench<W: Write>(inputs: &[PathBuf], params: &SearchParams, out: &mut W) -> Result<i32, Failure> {
    writeln!(out, "stage,trial_or_file,ms").map_err(runtime)?;
    for input in inputs {
        let t0 = Instant::now();
        let task = pipeline::create_task(input, params, PathBuf::new()).map_err(runtime)?;
        let create = t0.elapsed();
        let engine = Engine::new(task.engine.clone());
        let res = pipeline::search_task(&task, &engine, params.lookahead, &params.rfi, Duration::ZERO, params.norm_calib_len)
            .map_err(runtime)?;
        let total = t0.elapsed();
        for (trial, t) in res.trial_times.iter().enumerate() {
            for (stage, d) in [
                ("dedisperse", t.dedisperse),
                ("baseline", t.baseline),
                ("normalize", t.normalize),
                ("filter_and_peaks", t.filter_and_peaks),
            ] {
                writeln!(out, "{stage},{trial},{}", ms(d)).map_err(runtime)?;
            }
        }
        let name = input.display();
        let s = &res.stages;
        for (stage, d) in [
            ("create", create),
            ("read", s.read),
            ("rfi", s.rfi),
            ("dm_loop", s.dm_loop.total()),
            ("cluster", s.cluster),
            ("total", total),
        ] {
            writeln!(out, "{stage},{name},{}", ms(d)).map_err(runtime)?;
        }
    }
    Ok(EXIT_OK)
}
