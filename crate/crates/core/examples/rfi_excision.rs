//! Contaminates a chunk with a narrowband carrier and a broadband burst, then
//! flags and repairs them.

use pulsegrid::rfi::{excise, RfiConfig};
use pulsegrid::synth::generate_noise;
use pulsegrid::{Chunk, FilterbankHeader};

fn main() {
    let h = FilterbankHeader::new(1500.0, -1.0, 64, 64e-6, 8);
    let (len, nchans) = (8192, 64);
    let mut grid = generate_noise(&h, len, 100.0, 16.0, 9);
    for t in 0..len {
        grid[t * nchans + 17] += 400.0;
    }
    for t in 3000..3004 {
        for c in 0..nchans {
            grid[t * nchans + c] += 120.0;
        }
    }
    let mut chunk = Chunk::whole(nchans, grid);
    let mask = excise(&mut chunk, &RfiConfig::default()).unwrap();
    println!("bad channels {:?}", mask.bad_channels);
    println!("bad samples {:?}", mask.bad_samples);
    let ch17: f64 = (0..len).map(|t| chunk.get(t, 17) as f64).sum::<f64>() / len as f64;
    println!("channel 17 mean after repair {ch17:.1}, sample 3001 channel 5 {:.1}", chunk.get(3001, 5));
}
