use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;
use std::time::Duration;

use super::header::decode_samples;
use super::{parse_header, Chunk, ChunkSpec, FbError, FilterbankHeader};

/// Random-access reader over the payload of one filterbank file.
pub struct FilterbankReader {
    file: BufReader<File>,
    header: FilterbankHeader,
    data_start: u64,
    raw: Vec<u8>,
}

impl FilterbankReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FbError> {
        let file = File::open(path.as_ref()).map_err(|source| FbError::Io { offset: 0, source })?;
        let mut file = BufReader::with_capacity(1 << 20, file);
        let header = parse_header(&mut file)?;
        let data_start = file.stream_position().map_err(|source| FbError::Io { offset: 0, source })?;
        Ok(Self { file, header, data_start, raw: Vec::new() })
    }

    pub fn header(&self) -> &FilterbankHeader {
        &self.header
    }

    pub fn read_chunk(&mut self, spec: &ChunkSpec) -> Result<Chunk, FbError> {
        if spec.end_sample() > self.header.nsamples {
            return Err(FbError::InvalidPlan(format!(
                "chunk {} ends at sample {} beyond file length {}",
                spec.index,
                spec.end_sample(),
                self.header.nsamples
            )));
        }
        let per = self.header.bytes_per_spectrum() as u64;
        let offset = self.data_start + spec.start_sample * per;
        let nbytes = (spec.length * per) as usize;
        let wrap = |source: std::io::Error| FbError::ChunkRead { index: spec.index, offset, source };
        self.file.seek(SeekFrom::Start(offset)).map_err(wrap)?;
        self.raw.resize(nbytes, 0);
        self.file.read_exact(&mut self.raw).map_err(wrap)?;
        let mut data = Vec::with_capacity(spec.length as usize * self.header.nchans);
        decode_samples(self.header.nbits, &self.raw, &mut data);
        Ok(Chunk::new(spec.clone(), self.header.nchans, data))
    }

    /// Whole payload as a single chunk.
    pub fn read_all(&mut self) -> Result<Chunk, FbError> {
        let n = self.header.nsamples;
        let spec = ChunkSpec { index: 0, start_sample: 0, length: n, overlap: 0, valid_range: 0..n };
        self.read_chunk(&spec)
    }
}

/// Reads a whole file into memory.
pub fn read_filterbank(path: impl AsRef<Path>) -> Result<(FilterbankHeader, Chunk), FbError> {
    let mut r = FilterbankReader::open(path)?;
    let chunk = r.read_all()?;
    Ok((r.header.clone(), chunk))
}

/// Tuning for [`open_prefetching_reader_with`].
#[derive(Debug, Clone, Default)]
pub struct PrefetchOptions {
    /// Chunks that may be read ahead of the one the consumer holds.
    pub lookahead: usize,
    /// Added to every chunk read; used to model slow storage.
    pub read_latency: Duration,
}

enum Source {
    Sync { reader: FilterbankReader, plan: std::vec::IntoIter<ChunkSpec>, latency: Duration },
    Prefetch { rx: Option<Receiver<Result<Chunk, FbError>>>, worker: Option<JoinHandle<()>> },
}

/// Stream of chunks in plan order.
pub struct ChunkStream {
    header: FilterbankHeader,
    source: Source,
    failed: bool,
}

impl ChunkStream {
    pub fn header(&self) -> &FilterbankHeader {
        &self.header
    }
}

impl Iterator for ChunkStream {
    type Item = Result<Chunk, FbError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = match &mut self.source {
            Source::Sync { reader, plan, latency } => {
                let spec = plan.next()?;
                if !latency.is_zero() {
                    std::thread::sleep(*latency);
                }
                Some(reader.read_chunk(&spec))
            }
            Source::Prefetch { rx, .. } => rx.as_ref()?.recv().ok(),
        };
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

impl Drop for ChunkStream {
    fn drop(&mut self) {
        if let Source::Prefetch { rx, worker } = &mut self.source {
            // Closing the channel unblocks the producer.
            drop(rx.take());
            if let Some(h) = worker.take() {
                let _ = h.join();
            }
        }
    }
}

pub fn open_prefetching_reader(
    path: impl AsRef<Path>,
    plan: Vec<ChunkSpec>,
    lookahead: usize,
) -> Result<ChunkStream, FbError> {
    open_prefetching_reader_with(path, plan, PrefetchOptions { lookahead, ..Default::default() })
}

/// Opens `path` and yields the chunks of `plan` in order. With
/// `lookahead = k > 0` a producer thread keeps up to `k` chunks read ahead of
/// the consumer; `k = 1` is classic double buffering.
pub fn open_prefetching_reader_with(
    path: impl AsRef<Path>,
    plan: Vec<ChunkSpec>,
    opts: PrefetchOptions,
) -> Result<ChunkStream, FbError> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut reader = FilterbankReader::open(&path)?;
    let header = reader.header().clone();
    if let Some(bad) = plan.iter().find(|s| s.end_sample() > header.nsamples) {
        return Err(FbError::InvalidPlan(format!(
            "chunk {} ends at sample {} beyond file length {}",
            bad.index,
            bad.end_sample(),
            header.nsamples
        )));
    }
    let latency = opts.read_latency;
    if opts.lookahead == 0 {
        return Ok(ChunkStream {
            header,
            source: Source::Sync { reader, plan: plan.into_iter(), latency },
            failed: false,
        });
    }

    // A rendezvous channel already gives one chunk of lookahead: the
    // producer finishes reading chunk i+1 and blocks in `send`.
    let (tx, rx) = sync_channel(opts.lookahead - 1);
    let worker = std::thread::Builder::new()
        .name("fb-prefetch".into())
        .spawn(move || {
            for spec in plan {
                if !latency.is_zero() {
                    std::thread::sleep(latency);
                }
                let item = reader.read_chunk(&spec);
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        })
        .map_err(|source| FbError::Io { offset: 0, source })?;
    Ok(ChunkStream {
        header,
        source: Source::Prefetch { rx: Some(rx), worker: Some(worker) },
        failed: false,
    })
}
