use std::ops::Range;

use super::FbError;

/// Placement of one processing block within a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkSpec {
    pub index: usize,
    pub start_sample: u64,
    pub length: u64,
    /// Samples shared with the next chunk.
    pub overlap: u64,
    /// Samples for which this chunk is the authoritative candidate source.
    pub valid_range: Range<u64>,
}

impl ChunkSpec {
    pub fn end_sample(&self) -> u64 {
        self.start_sample + self.length
    }

    /// Widens the read window by `lead` samples before and `tail` samples
    /// after, clamped to `[0, nsamples)`, and grows it further (leftwards
    /// first) if needed to reach `min_length`. The valid range is left untouched so
    /// candidate attribution still tiles the file.
    pub fn with_context(&self, lead: u64, tail: u64, min_length: u64, nsamples: u64) -> ChunkSpec {
        let mut end = (self.end_sample() + tail).min(nsamples);
        let mut start = self.start_sample.saturating_sub(lead);
        if end - start < min_length {
            start = end.saturating_sub(min_length);
            end = (start + min_length).min(nsamples);
        }
        ChunkSpec {
            index: self.index,
            start_sample: start,
            length: end - start,
            overlap: self.overlap,
            valid_range: self.valid_range.clone(),
        }
    }
}

/// Splits `[0, nsamples)` into overlapping chunks whose valid ranges tile
/// the file.
pub fn plan_chunks(nsamples: u64, chunk_len: u64, overlap: u64) -> Result<Vec<ChunkSpec>, FbError> {
    if chunk_len == 0 {
        return Err(FbError::InvalidPlan("chunk length must be positive".into()));
    }
    if nsamples == 0 {
        return Err(FbError::InvalidPlan("file holds no samples".into()));
    }
    if chunk_len >= nsamples {
        return Ok(vec![ChunkSpec {
            index: 0,
            start_sample: 0,
            length: nsamples,
            overlap: 0,
            valid_range: 0..nsamples,
        }]);
    }
    if overlap >= chunk_len {
        return Err(FbError::InvalidPlan(format!("overlap {overlap} must be below chunk length {chunk_len}")));
    }
    let step = chunk_len - overlap;
    let mut specs = Vec::new();
    let mut start = 0u64;
    loop {
        let last = start + chunk_len >= nsamples;
        let spec = ChunkSpec {
            index: specs.len(),
            start_sample: start,
            length: chunk_len.min(nsamples - start),
            overlap: if last { 0 } else { overlap },
            valid_range: start..if last { nsamples } else { start + step },
        };
        specs.push(spec);
        if last {
            break;
        }
        start += step;
    }
    Ok(specs)
}

/// A block of time-major samples widened to `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub spec: ChunkSpec,
    pub nchans: usize,
    pub data: Vec<f32>,
}

impl Chunk {
    pub fn new(spec: ChunkSpec, nchans: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len() as u64, spec.length * nchans as u64, "chunk extent mismatch");
        Self { spec, nchans, data }
    }

    /// Wraps an in-memory grid as a single chunk covering all of it.
    pub fn whole(nchans: usize, data: Vec<f32>) -> Self {
        let n = (data.len() / nchans.max(1)) as u64;
        let spec = ChunkSpec { index: 0, start_sample: 0, length: n, overlap: 0, valid_range: 0..n };
        Self::new(spec, nchans, data)
    }

    pub fn len(&self) -> usize {
        self.spec.length as usize
    }

    pub fn is_empty(&self) -> bool {
        self.spec.length == 0
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> f32 {
        self.data[t * self.nchans + c]
    }

    pub fn spectrum(&self, t: usize) -> &[f32] {
        &self.data[t * self.nchans..(t + 1) * self.nchans]
    }

    /// Channel-major copy: `out[c * len + t]`.
    pub fn to_channel_major(&self) -> Vec<f32> {
        let n = self.len();
        let nc = self.nchans;
        let mut out = vec![0.0f32; n * nc];
        for (t, row) in self.data.chunks_exact(nc).enumerate() {
            for (c, &v) in row.iter().enumerate() {
                out[c * n + t] = v;
            }
        }
        out
    }
}
