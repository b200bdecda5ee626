//! Portable single-pulse search engine.
//!
//! The search follows the classic transient pipeline: optional RFI excision,
//! brute-force incoherent dedispersion over a plan of DM trials, per-trial
//! baseline removal, normalization, a boxcar matched-filter bank and peak
//! extraction, then three-axis candidate clustering. On top of that sit the
//! execution pieces: a DM-trial loop statically partitioned across worker
//! threads with a shared two-queue buffer pool ([`engine`]), and a two-stage
//! multi-file pipeline that overlaps task setup with execution
//! ([`pipeline`]).

pub mod candfile;
pub mod cli;
pub mod cluster;
pub mod dedisp;
pub mod detect;
pub mod engine;
pub mod fbio;
pub mod pipeline;
pub mod rfi;
pub mod synth;

pub use cluster::{link_grid, link_reference, ClusterResult, LinkRadii};
pub use dedisp::{delay_samples, dedisperse, generate_dm_trials, DmSpacing, DmTrialPlan};
pub use detect::Candidate;
pub use engine::{BufferPool, EngineConfig, PoolStats};
pub use fbio::{plan_chunks, Chunk, ChunkSpec, FilterbankHeader};
pub use pipeline::{SearchParams, PipelineTask, RunSummary};
