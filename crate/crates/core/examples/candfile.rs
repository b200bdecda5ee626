//! Writes clusters as a `.cand` file and reads them back.

use pulsegrid::candfile::{parse_candidates, write_candidates};
use pulsegrid::{link_grid, Candidate, FilterbankHeader, LinkRadii};

fn main() {
    let h = FilterbankHeader::new(1500.0, -0.25, 64, 64e-6, 8);
    let cands: Vec<Candidate> = [(1200u64, 40u32, 2u32, 11.5), (1201, 41, 2, 12.25), (70_000, 300, 5, 8.1)]
        .iter()
        .map(|&(peak, trial, wi, snr)| Candidate {
            snr,
            peak_sample: peak,
            time_s: peak as f64 * h.tsamp,
            width_index: wi,
            width_samples: 1 << wi,
            dm_trial: trial,
            dm: trial as f64 * 1.6,
            begin_sample: peak,
            end_sample: peak + (1 << wi) - 1,
        })
        .collect();
    let clusters = link_grid(&cands, &LinkRadii::default());
    let mut buf = Vec::new();
    let n = write_candidates(&clusters, &h, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    println!("{n} lines:\n{text}");
    for r in parse_candidates(&text).unwrap() {
        println!("t={:.4} s dm={} snr={} members={}", r.time_s, r.dm, r.snr, r.members);
    }
}
