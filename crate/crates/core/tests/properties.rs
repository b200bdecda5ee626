mod common;

use std::io::Cursor;

use proptest::prelude::*;
use pulsegrid::detect::{self, Candidate, TrialMeta};
use pulsegrid::fbio::{parse_header, write_filterbank, Quantizer};
use pulsegrid::{dedisperse, link_grid, link_reference, plan_chunks, Chunk, DmTrialPlan, FilterbankHeader, LinkRadii};

fn header(nchans: usize) -> FilterbankHeader {
    FilterbankHeader::new(1500.0, -4.0, nchans, 1e-3, 32)
}

fn cand(peak: u64, trial: u32, wi: u32, snr: f64) -> Candidate {
    Candidate {
        snr,
        peak_sample: peak,
        time_s: 0.0,
        width_index: wi,
        width_samples: 1 << wi,
        dm_trial: trial,
        dm: trial as f64,
        begin_sample: peak,
        end_sample: peak,
    }
}

fn partition(c: &[pulsegrid::ClusterResult]) -> Vec<Vec<usize>> {
    let mut p: Vec<Vec<usize>> = c.iter().map(|r| r.member_ids.clone()).collect();
    p.sort();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunk_valid_ranges_tile(n in 1u64..5000, len in 1u64..600, ov in 0u64..600) {
        prop_assume!(ov < len);
        let plan = plan_chunks(n, len, ov).unwrap();
        let mut next = 0;
        for c in &plan {
            prop_assert_eq!(c.valid_range.start, next);
            prop_assert!(c.valid_range.end > c.valid_range.start);
            prop_assert!(c.start_sample <= c.valid_range.start && c.valid_range.end <= c.end_sample());
            prop_assert!(c.end_sample() <= n);
            next = c.valid_range.end;
        }
        prop_assert_eq!(next, n);
    }

    #[test]
    fn header_round_trip(nchans in 1usize..300, fch1 in 2000.0f64..5000.0, foff in -5.0f64..-0.01,
                         tsamp in 1e-6f64..1e-2, nbits in prop::sample::select(vec![8u32, 16, 32]), ns in 1u64..50) {
        let h = FilterbankHeader::new(fch1, foff, nchans, tsamp, nbits).with_nsamples(ns);
        let data = vec![3.0f32; nchans * ns as usize];
        let mut buf = Vec::new();
        write_filterbank(&h, &data, Quantizer::default(), &mut buf).unwrap();
        let back = parse_header(&mut Cursor::new(buf)).unwrap();
        prop_assert_eq!(back, h);
    }

    #[test]
    fn dedispersion_is_linear(seed in 0u64..1000, nchans in 1usize..16, len in 40usize..120, dm in 0.0f64..60.0) {
        let h = header(nchans);
        let mut x = seed;
        let mut rnd = || { x = x.wrapping_mul(6364136223846793005).wrapping_add(1); ((x >> 40) % 64) as f32 };
        let a: Vec<f32> = (0..nchans * len).map(|_| rnd()).collect();
        let b: Vec<f32> = (0..nchans * len).map(|_| rnd()).collect();
        let sum: Vec<f32> = a.iter().zip(&b).map(|(p, q)| p + 2.0 * q).collect();
        let plan = DmTrialPlan::from_dms(vec![dm], &h);
        prop_assume!(plan.max_delay() < len);
        let da = dedisperse(&Chunk::whole(nchans, a), &plan, 0).unwrap().values;
        let db = dedisperse(&Chunk::whole(nchans, b), &plan, 0).unwrap().values;
        let ds = dedisperse(&Chunk::whole(nchans, sum), &plan, 0).unwrap().values;
        for i in 0..ds.len() {
            prop_assert_eq!(ds[i], da[i] + 2.0 * db[i]);
        }
    }

    #[test]
    fn grid_matches_reference(pts in prop::collection::vec((0u64..400, 0u32..40, 0u32..6, 6.0f64..30.0), 0..150),
                              st in 0u64..4, sd in 0u32..12, sw in 0u32..4) {
        let cands: Vec<_> = pts.iter().map(|&(p, t, w, s)| cand(p, t, w, s)).collect();
        let r = LinkRadii { sep_time: st, sep_dm_trials: sd, sep_width: sw };
        prop_assert_eq!(link_grid(&cands, &r), link_reference(&cands, &r));
    }

    #[test]
    fn clustering_ignores_input_order(pts in prop::collection::vec((0u64..300, 0u32..30, 0u32..5, 6.0f64..30.0), 1..80),
                                      shift in 1usize..79) {
        let cands: Vec<_> = pts.iter().map(|&(p, t, w, s)| cand(p, t, w, s)).collect();
        let mut rotated = cands.clone();
        rotated.rotate_left(shift % cands.len());
        let a = link_grid(&cands, &LinkRadii::default());
        let b = link_grid(&rotated, &LinkRadii::default());
        let reps = |v: &[pulsegrid::ClusterResult]| v.iter().map(|c| (c.representative.clone(), c.members)).collect::<Vec<_>>();
        prop_assert_eq!(reps(&a), reps(&b));
        prop_assert_eq!(partition(&a).len(), partition(&b).len());
    }

    #[test]
    fn boxcar_matches_direct_sums(v in prop::collection::vec(-5.0f64..5.0, 1..300), k in 0u32..7) {
        let bank = detect::boxcar_bank(&v, 1 << k).unwrap();
        for (j, row) in bank.iter().enumerate() {
            let w = 1usize << j;
            prop_assert_eq!(row.len(), v.len() - w + 1);
            for (i, &got) in row.iter().enumerate() {
                let direct: f64 = v[i..i + w].iter().sum::<f64>() / (w as f64).sqrt();
                prop_assert!((got - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shifting_series_shifts_peaks(v in prop::collection::vec(-1.0f64..1.0, 50..200), pos in 10usize..40, s in 1usize..30) {
        let mut series = v.clone();
        series[pos] += 20.0;
        let meta = TrialMeta { dm_trial: 0, dm: 0.0, start_sample: 0, tsamp: 1.0, valid_range: 0..u64::MAX };
        let base = detect::find_peaks(&series, 6.0, 0, &meta);
        let mut shifted = vec![0.0; s];
        shifted.extend_from_slice(&series);
        let moved = detect::find_peaks(&shifted, 6.0, 0, &meta);
        prop_assert_eq!(base.len(), moved.len());
        for (a, b) in base.iter().zip(&moved) {
            prop_assert_eq!(a.peak_sample + s as u64, b.peak_sample);
        }
    }
}

#[test]
fn dedispersion_matches_naive_oracle_on_random_instances() {
    let mut x = 99u64;
    let mut rnd = |m: u64| {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 33) % m
    };
    for _ in 0..300 {
        let nchans = 1 + rnd(16) as usize;
        let len = 16 + rnd(49) as usize;
        let h = header(nchans);
        let grid: Vec<f32> = (0..nchans * len).map(|_| rnd(256) as f32).collect();
        let dms: Vec<f64> = (0..1 + rnd(8)).map(|_| rnd(2000) as f64 / 100.0).collect();
        let plan = DmTrialPlan::from_dms(dms, &h);
        let chunk = Chunk::whole(nchans, grid.clone());
        for t in 0..plan.len() {
            if plan.trial_max_delay(t) >= len {
                continue;
            }
            let got = dedisperse(&chunk, &plan, t).unwrap().values;
            assert_eq!(got, common::naive_dedisperse(&grid, nchans, plan.delays(t)));
        }
    }
}
