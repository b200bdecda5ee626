//! SIGPROC filterbank header parsing and the quantizing writer.
//!
//! The container is little-endian throughout. Each header item is a
//! length-prefixed keyword (4-byte length, then the keyword bytes) followed
//! by its value, bracketed by the `HEADER_START` / `HEADER_END` sentinels.
//! The payload that follows is time-major: one spectrum of `nchans` samples
//! per time step.

use std::io::{Read, Seek, SeekFrom, Write};

use super::FbError;

const HEADER_START: &str = "HEADER_START";
const HEADER_END: &str = "HEADER_END";
const MAX_KEYWORD_LEN: u32 = 256;

/// Observation metadata of a filterbank file.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankHeader {
    pub source_name: String,
    pub telescope_id: i32,
    pub machine_id: i32,
    /// Frequency of channel 0 in MHz.
    pub fch1: f64,
    /// Channel step in MHz; negative when channel 0 is the highest.
    pub foff: f64,
    pub nchans: usize,
    pub nbits: u32,
    /// Seconds per sample.
    pub tsamp: f64,
    /// Start time (MJD).
    pub tstart: f64,
    pub nifs: u32,
    pub nsamples: u64,
}

impl FilterbankHeader {
    /// A header with the given channel grid and sampling, remaining fields
    /// at neutral defaults.
    pub fn new(fch1: f64, foff: f64, nchans: usize, tsamp: f64, nbits: u32) -> Self {
        Self {
            source_name: "synthetic".to_string(),
            telescope_id: 0,
            machine_id: 0,
            fch1,
            foff,
            nchans,
            nbits,
            tsamp,
            tstart: 60000.0,
            nifs: 1,
            nsamples: 0,
        }
    }

    pub fn with_nsamples(mut self, nsamples: u64) -> Self {
        self.nsamples = nsamples;
        self
    }

    /// Centre frequency of channel `c` in MHz.
    pub fn chan_freq(&self, c: usize) -> f64 {
        self.fch1 + c as f64 * self.foff
    }

    pub fn max_freq(&self) -> f64 {
        self.chan_freq(0).max(self.chan_freq(self.nchans.saturating_sub(1)))
    }

    pub fn min_freq(&self) -> f64 {
        self.chan_freq(0).min(self.chan_freq(self.nchans.saturating_sub(1)))
    }

    pub fn bytes_per_sample(&self) -> usize {
        self.nbits as usize / 8
    }

    /// Bytes of one time step (a full spectrum).
    pub fn bytes_per_spectrum(&self) -> usize {
        self.nchans * self.bytes_per_sample()
    }

    pub fn duration_s(&self) -> f64 {
        self.nsamples as f64 * self.tsamp
    }

    pub fn validate(&self) -> Result<(), FbError> {
        if !matches!(self.nbits, 8 | 16 | 32) {
            return Err(FbError::Unsupported(format!("nbits = {}", self.nbits)));
        }
        if self.nifs != 1 {
            return Err(FbError::Unsupported(format!("nifs = {}", self.nifs)));
        }
        if self.nchans == 0 {
            return Err(FbError::Malformed { offset: 0, reason: "nchans must be at least 1".into() });
        }
        if !(self.tsamp > 0.0) {
            return Err(FbError::Malformed { offset: 0, reason: format!("tsamp must be positive, got {}", self.tsamp) });
        }
        if self.min_freq() <= 0.0 {
            return Err(FbError::Malformed {
                offset: 0,
                reason: format!("channel frequencies must be positive (lowest is {} MHz)", self.min_freq()),
            });
        }
        Ok(())
    }
}

enum Value {
    Int,
    Double,
    Text,
}

fn keyword_type(key: &str) -> Option<Value> {
    Some(match key {
        "telescope_id" | "machine_id" | "nchans" | "nbits" | "nifs" | "nsamples" | "data_type"
        | "barycentric" | "pulsarcentric" | "nbeams" | "ibeam" | "nbins" => Value::Int,
        "fch1" | "foff" | "tsamp" | "tstart" | "src_raj" | "src_dej" | "az_start" | "za_start"
        | "refdm" | "period" | "fchannel" => Value::Double,
        "source_name" | "rawdatafile" => Value::Text,
        _ => return None,
    })
}

struct HeaderCursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> HeaderCursor<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), FbError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(FbError::Truncated { offset: self.offset })
            }
            Err(source) => Err(FbError::Io { offset: self.offset, source }),
        }
    }

    fn read_i32(&mut self) -> Result<i32, FbError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(i32::from_le_bytes(b))
    }

    fn read_f64(&mut self) -> Result<f64, FbError> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn read_string(&mut self) -> Result<String, FbError> {
        let at = self.offset;
        let len = self.read_i32()?;
        if len < 0 || len as u32 > MAX_KEYWORD_LEN {
            return Err(FbError::Malformed { offset: at, reason: format!("string length {len} out of range") });
        }
        let mut buf = vec![0u8; len as usize];
        self.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| FbError::Malformed { offset: at, reason: "non-UTF-8 header string".into() })
    }
}

/// Parses a header from the start of `stream`.
///
/// On success the stream is positioned at the first payload byte. When the
/// header does not declare `nsamples` it is derived from the payload size.
pub fn parse_header<R: Read + Seek>(stream: &mut R) -> Result<FilterbankHeader, FbError> {
    let start = stream.stream_position().map_err(|source| FbError::Io { offset: 0, source })?;
    let mut cur = HeaderCursor { inner: &mut *stream, offset: 0 };

    let first = match cur.read_string() {
        Ok(s) => s,
        Err(FbError::Truncated { .. }) | Err(FbError::Malformed { .. }) => String::new(),
        Err(e) => return Err(e),
    };
    if first != HEADER_START {
        return Err(FbError::Malformed { offset: 0, reason: "missing HEADER_START sentinel".into() });
    }

    let mut hdr = FilterbankHeader::new(0.0, 0.0, 0, 0.0, 0);
    hdr.source_name.clear();
    let mut declared_nsamples = None;
    let mut nbits = None;
    loop {
        let at = cur.offset;
        let key = cur.read_string()?;
        if key == HEADER_END {
            break;
        }
        match keyword_type(&key) {
            Some(Value::Int) => {
                let v = cur.read_i32()?;
                match key.as_str() {
                    "telescope_id" => hdr.telescope_id = v,
                    "machine_id" => hdr.machine_id = v,
                    "nchans" => hdr.nchans = v.max(0) as usize,
                    "nbits" => nbits = Some(v),
                    "nifs" => hdr.nifs = v.max(0) as u32,
                    "nsamples" => declared_nsamples = Some(v.max(0) as u64),
                    _ => {}
                }
            }
            Some(Value::Double) => {
                let v = cur.read_f64()?;
                match key.as_str() {
                    "fch1" => hdr.fch1 = v,
                    "foff" => hdr.foff = v,
                    "tsamp" => hdr.tsamp = v,
                    "tstart" => hdr.tstart = v,
                    _ => {}
                }
            }
            Some(Value::Text) => {
                let v = cur.read_string()?;
                if key == "source_name" {
                    hdr.source_name = v;
                }
            }
            None => {
                return Err(FbError::Malformed { offset: at, reason: format!("unknown header keyword {key:?}") });
            }
        }
    }
    let header_len = cur.offset;

    let nbits = nbits.ok_or(FbError::Malformed { offset: header_len, reason: "header lacks nbits".into() })?;
    if !matches!(nbits, 8 | 16 | 32) {
        return Err(FbError::Unsupported(format!("nbits = {nbits}")));
    }
    hdr.nbits = nbits as u32;
    hdr.validate()?;

    let end = stream.seek(SeekFrom::End(0)).map_err(|source| FbError::Io { offset: header_len, source })?;
    let data_start = start + header_len;
    stream.seek(SeekFrom::Start(data_start)).map_err(|source| FbError::Io { offset: header_len, source })?;
    let payload = end.saturating_sub(data_start);
    let per_spectrum = hdr.bytes_per_spectrum() as u64;
    if payload % per_spectrum != 0 {
        return Err(FbError::Malformed {
            offset: header_len,
            reason: format!("payload of {payload} bytes is not a multiple of {per_spectrum}-byte spectra"),
        });
    }
    let available = payload / per_spectrum;
    hdr.nsamples = match declared_nsamples {
        Some(n) if n > available => return Err(FbError::Truncated { offset: end }),
        Some(n) => n,
        None => available,
    };
    Ok(hdr)
}

/// Affine float-to-code map used when writing integer payloads:
/// `code = clamp(floor(x * scale + offset + 0.5), 0, max_code)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub offset: f64,
    pub scale: f64,
}

impl Default for Quantizer {
    fn default() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }
}

impl Quantizer {
    pub fn new(offset: f64, scale: f64) -> Self {
        Self { offset, scale }
    }

    /// Quantized value for `nbits`, returned as the float the reader will
    /// widen it back to.
    pub fn quantize(&self, x: f32, nbits: u32) -> f32 {
        let y = x as f64 * self.scale + self.offset;
        match nbits {
            32 => y as f32,
            bits => {
                let max = ((1u64 << bits) - 1) as f64;
                let code = (y + 0.5).floor();
                // NaN lands on 0.
                if code >= max {
                    max as f32
                } else if code > 0.0 {
                    code as f32
                } else {
                    0.0
                }
            }
        }
    }
}

fn put_str<W: Write>(out: &mut Vec<u8>, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as i32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

fn put_int(out: &mut Vec<u8>, key: &str, v: i32) -> std::io::Result<()> {
    put_str::<Vec<u8>>(out, key)?;
    out.write_all(&v.to_le_bytes())
}

fn put_double(out: &mut Vec<u8>, key: &str, v: f64) -> std::io::Result<()> {
    put_str::<Vec<u8>>(out, key)?;
    out.write_all(&v.to_le_bytes())
}

/// Serializes the header block (sentinels included).
pub fn encode_header(hdr: &FilterbankHeader) -> Vec<u8> {
    let mut out = Vec::with_capacity(512);
    // Writes into a Vec cannot fail.
    let _ = (|| -> std::io::Result<()> {
        put_str::<Vec<u8>>(&mut out, HEADER_START)?;
        put_str::<Vec<u8>>(&mut out, "source_name")?;
        put_str::<Vec<u8>>(&mut out, &hdr.source_name)?;
        put_int(&mut out, "telescope_id", hdr.telescope_id)?;
        put_int(&mut out, "machine_id", hdr.machine_id)?;
        put_int(&mut out, "data_type", 1)?;
        put_double(&mut out, "fch1", hdr.fch1)?;
        put_double(&mut out, "foff", hdr.foff)?;
        put_int(&mut out, "nchans", hdr.nchans as i32)?;
        put_int(&mut out, "nbits", hdr.nbits as i32)?;
        put_double(&mut out, "tsamp", hdr.tsamp)?;
        put_double(&mut out, "tstart", hdr.tstart)?;
        put_int(&mut out, "nifs", hdr.nifs as i32)?;
        put_int(&mut out, "nsamples", hdr.nsamples as i32)?;
        put_str::<Vec<u8>>(&mut out, HEADER_END)
    })();
    out
}

/// Writes `samples` (time-major, `nchans` wide) as a filterbank file and
/// returns the number of bytes emitted. Values are quantized with `quant`
/// for 8- and 16-bit payloads and clipped to the code range.
pub fn write_filterbank<W: Write>(
    hdr: &FilterbankHeader,
    samples: &[f32],
    quant: Quantizer,
    sink: &mut W,
) -> Result<u64, FbError> {
    hdr.validate()?;
    if samples.len() as u64 != hdr.nsamples * hdr.nchans as u64 {
        return Err(FbError::Malformed {
            offset: 0,
            reason: format!(
                "grid has {} cells, header describes {} x {}",
                samples.len(),
                hdr.nsamples,
                hdr.nchans
            ),
        });
    }
    let head = encode_header(hdr);
    let io = |offset: u64| move |source| FbError::Io { offset, source };
    sink.write_all(&head).map_err(io(0))?;
    let mut written = head.len() as u64;

    let bps = hdr.bytes_per_sample();
    let mut buf = Vec::with_capacity(hdr.bytes_per_spectrum() * 1024);
    for block in samples.chunks(hdr.nchans * 1024) {
        buf.clear();
        for &x in block {
            let q = quant.quantize(x, hdr.nbits);
            match hdr.nbits {
                8 => buf.push(q as u8),
                16 => buf.extend_from_slice(&(q as u16).to_le_bytes()),
                _ => buf.extend_from_slice(&q.to_le_bytes()),
            }
        }
        sink.write_all(&buf).map_err(io(written))?;
        written += buf.len() as u64;
    }
    debug_assert_eq!(written, head.len() as u64 + samples.len() as u64 * bps as u64);
    Ok(written)
}

/// Widens raw payload bytes into floats.
pub(crate) fn decode_samples(nbits: u32, raw: &[u8], out: &mut Vec<f32>) {
    out.clear();
    match nbits {
        8 => out.extend(raw.iter().map(|&b| b as f32)),
        16 => out.extend(raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as f32)),
        _ => out.extend(raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))),
    }
}
