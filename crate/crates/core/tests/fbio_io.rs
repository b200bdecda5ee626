mod common;

use std::time::{Duration, Instant};

use pulsegrid::fbio::{
    open_prefetching_reader, open_prefetching_reader_with, read_filterbank, write_filterbank, FbError,
    FilterbankReader, PrefetchOptions, Quantizer,
};
use pulsegrid::{plan_chunks, FilterbankHeader};

fn ramp(h: &FilterbankHeader) -> Vec<f32> {
    (0..h.nsamples as usize * h.nchans).map(|i| ((i * 7) % 251) as f32).collect()
}

#[test]
fn write_read_round_trip_all_depths() {
    let dir = tempfile::tempdir().unwrap();
    for nbits in [8, 16, 32] {
        let h = FilterbankHeader::new(1400.0, -0.5, 16, 1e-4, nbits).with_nsamples(300);
        let data = ramp(&h);
        let path = dir.path().join(format!("r{nbits}.fil"));
        let mut f = std::fs::File::create(&path).unwrap();
        write_filterbank(&h, &data, Quantizer::default(), &mut f).unwrap();
        drop(f);
        let (h2, chunk) = read_filterbank(&path).unwrap();
        assert_eq!(h2.nsamples, 300);
        assert_eq!((h2.nchans, h2.nbits, h2.fch1, h2.foff, h2.tsamp), (16, nbits, 1400.0, -0.5, 1e-4));
        assert_eq!(chunk.data, data, "nbits {nbits}");
    }
}

#[test]
fn chunks_reassemble_to_whole_file() {
    let dir = tempfile::tempdir().unwrap();
    let h = FilterbankHeader::new(1400.0, -0.5, 8, 1e-4, 8).with_nsamples(1000);
    let data = ramp(&h);
    let path = dir.path().join("c.fil");
    write_filterbank(&h, &data, Quantizer::default(), &mut std::fs::File::create(&path).unwrap()).unwrap();
    let plan = plan_chunks(1000, 300, 40).unwrap();
    for lookahead in [0, 1, 2] {
        let mut rebuilt = vec![f32::NAN; data.len()];
        let mut n = 0;
        for c in open_prefetching_reader(&path, plan.clone(), lookahead).unwrap() {
            let c = c.unwrap();
            assert_eq!(c.spec.index, n);
            n += 1;
            let off = c.spec.start_sample as usize * 8;
            rebuilt[off..off + c.data.len()].copy_from_slice(&c.data);
        }
        assert_eq!(n, plan.len());
        assert_eq!(rebuilt, data);
    }
}

#[test]
fn truncated_payload_fails_mid_stream_with_chunk_index() {
    let dir = tempfile::tempdir().unwrap();
    let h = FilterbankHeader::new(1400.0, -0.5, 8, 1e-4, 8).with_nsamples(1000);
    let path = dir.path().join("t.fil");
    write_filterbank(&h, &ramp(&h), Quantizer::default(), &mut std::fs::File::create(&path).unwrap()).unwrap();
    let plan = plan_chunks(1000, 300, 40).unwrap();
    let mut reader = FilterbankReader::open(&path).unwrap();
    // Cut the file after the reader has parsed its header.
    let len = std::fs::metadata(&path).unwrap().len();
    std::fs::OpenOptions::new().write(true).open(&path).unwrap().set_len(len - 8 * 500).unwrap();
    assert!(reader.read_chunk(&plan[0]).is_ok());
    match reader.read_chunk(&plan[2]) {
        Err(FbError::ChunkRead { index, .. }) => assert_eq!(index, 2),
        other => panic!("expected chunk read error, got {other:?}"),
    }
}

#[test]
fn garbage_file_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.fil");
    std::fs::write(&path, b"definitely not a filterbank").unwrap();
    assert!(matches!(FilterbankReader::open(&path), Err(FbError::Malformed { .. })));
}

/// With a fixed read latency R and compute time C per chunk, synchronous
/// reading costs about n(R + C) while lookahead 1 costs about R + n·max(R, C).
#[test]
fn prefetch_hides_read_latency() {
    let dir = tempfile::tempdir().unwrap();
    let h = FilterbankHeader::new(1400.0, -0.5, 8, 1e-4, 8).with_nsamples(800);
    let path = dir.path().join("p.fil");
    write_filterbank(&h, &ramp(&h), Quantizer::default(), &mut std::fs::File::create(&path).unwrap()).unwrap();
    let plan = plan_chunks(800, 100, 0).unwrap();
    let lat = Duration::from_millis(50);
    let run = |lookahead| {
        let t = Instant::now();
        let opts = PrefetchOptions { lookahead, read_latency: lat };
        for c in open_prefetching_reader_with(&path, plan.clone(), opts).unwrap() {
            c.unwrap();
            std::thread::sleep(lat);
        }
        t.elapsed()
    };
    let sync = run(0);
    let ahead = run(1);
    assert!(sync >= Duration::from_millis(800));
    assert!(ahead.as_secs_f64() <= 0.65 * sync.as_secs_f64(), "{ahead:?} vs {sync:?}");
}

#[test]
fn plan_beyond_file_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let h = FilterbankHeader::new(1400.0, -0.5, 8, 1e-4, 8).with_nsamples(100);
    let path = dir.path().join("s.fil");
    write_filterbank(&h, &ramp(&h), Quantizer::default(), &mut std::fs::File::create(&path).unwrap()).unwrap();
    let plan = plan_chunks(200, 50, 0).unwrap();
    assert!(matches!(open_prefetching_reader(&path, plan, 1), Err(FbError::InvalidPlan(_))));
}
