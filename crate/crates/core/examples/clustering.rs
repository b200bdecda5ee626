//! Clusters a synthetic candidate list with both linkers and checks they
//! agree.

use pulsegrid::{link_grid, link_reference, Candidate, LinkRadii};

fn cand(peak: u64, trial: u32, width_index: u32, snr: f64) -> Candidate {
    Candidate {
        snr,
        peak_sample: peak,
        time_s: peak as f64 * 64e-6,
        width_index,
        width_samples: 1 << width_index,
        dm_trial: trial,
        dm: trial as f64 * 0.75,
        begin_sample: peak,
        end_sample: peak + (1 << width_index) - 1,
    }
}

fn main() {
    let mut cands = Vec::new();
    // A bright event smeared over DM and width.
    for trial in 90..110u32 {
        let d = (trial as i64 - 100).unsigned_abs() as f64;
        cands.push(cand(5000 + trial as u64 % 3, trial, 3, 25.0 - d));
        cands.push(cand(4998, trial, 4, 20.0 - d));
    }
    // Two isolated noise peaks.
    cands.push(cand(100, 5, 0, 6.3));
    cands.push(cand(9000, 400, 1, 6.8));

    let radii = LinkRadii::default();
    let grid = link_grid(&cands, &radii);
    assert_eq!(grid, link_reference(&cands, &radii));
    println!("{} candidates -> {} clusters", cands.len(), grid.len());
    for c in &grid {
        let r = &c.representative;
        println!(
            "  peak {:>5} dm {:>6.2} width {:>2} snr {:>5.2} members {:>2} dm range {:.2}..{:.2}",
            r.peak_sample, r.dm, r.width_samples, r.snr, c.members, c.dm_min, c.dm_max
        );
    }
}
