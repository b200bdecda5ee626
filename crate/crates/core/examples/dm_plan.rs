//! Prints linear and adaptive DM trial plans for a band and the per-channel
//! delays of a few trials.

use pulsegrid::dedisp::adaptive_step;
use pulsegrid::{generate_dm_trials, DmSpacing, FilterbankHeader};

fn main() {
    let h = FilterbankHeader::new(1500.0, -0.25, 64, 64e-6, 8);
    for tol in [1.1, 1.25, 2.0] {
        let plan = generate_dm_trials(0.0, 1000.0, &h, DmSpacing::Adaptive(tol)).unwrap();
        println!(
            "tolerance {tol:>4}: step {:.4} pc/cm^3, {} trials, max delay {} samples",
            adaptive_step(&h, tol),
            plan.len(),
            plan.max_delay()
        );
    }
    let linear = generate_dm_trials(0.0, 1000.0, &h, DmSpacing::Linear(5.0)).unwrap();
    println!("linear step 5: {} trials", linear.len());

    // Delays are relative to the highest channel, so channel 0 is always 0.
    let plan = generate_dm_trials(0.0, 400.0, &h, DmSpacing::Linear(100.0)).unwrap();
    for t in 0..plan.len() {
        let d = plan.delays(t);
        println!("dm {:>5.1}: ch0 {} ch16 {} ch32 {} ch63 {}", plan.dms[t], d[0], d[16], d[32], d[63]);
    }
}
