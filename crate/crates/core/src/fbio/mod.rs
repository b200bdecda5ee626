//! Filterbank I/O: SIGPROC headers, quantized writes, overlap-aware chunk
//! planning and a prefetching chunk reader.

mod chunk;
mod header;
mod reader;

pub use chunk::{plan_chunks, Chunk, ChunkSpec};
pub use header::{encode_header, parse_header, write_filterbank, FilterbankHeader, Quantizer};
pub use reader::{
    open_prefetching_reader, open_prefetching_reader_with, read_filterbank, ChunkStream, FilterbankReader,
    PrefetchOptions,
};

/// Default chunk length in samples (256K).
pub const DEFAULT_CHUNK_LEN: u64 = 1 << 18;

#[derive(Debug, thiserror::Error)]
pub enum FbError {
    #[error("malformed filterbank at byte {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error("unsupported filterbank format: {0}")]
    Unsupported(String),
    #[error("filterbank truncated at byte {offset}")]
    Truncated { offset: u64 },
    #[error("I/O error at byte {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("failed reading chunk {index} at byte {offset}: {source}")]
    ChunkRead {
        index: usize,
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid chunk plan: {0}")]
    InvalidPlan(String),
}
