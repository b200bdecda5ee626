//! Shows block reuse in the shared buffer pool, the bypass mode and budget
//! enforcement.

use pulsegrid::engine::BufferPool;

fn main() {
    let pool = BufferPool::new(1 << 20);
    for _ in 0..100 {
        let a = pool.acquire(64 * 1024).unwrap();
        let b = pool.acquire(64 * 1024).unwrap();
        pool.release(a).unwrap();
        pool.release(b).unwrap();
    }
    let s = pool.stats();
    println!("pooled: {} acquires, {} raw allocations", s.acquires(), s.raw_allocations);

    let bypass = BufferPool::bypass(1 << 20);
    for _ in 0..100 {
        let a = bypass.acquire(64 * 1024).unwrap();
        bypass.release(a).unwrap();
    }
    let s = bypass.stats();
    println!("bypass: {} acquires, {} raw allocations", s.acquires(), s.raw_allocations);

    let small = BufferPool::new(256 * 1024);
    let held: Vec<_> = (0..4).map(|_| small.acquire(60 * 1024).unwrap()).collect();
    match small.acquire(60 * 1024) {
        Ok(_) => println!("unexpected: budget not enforced"),
        Err(e) => println!("fifth block refused: {e}"),
    }
    for b in held {
        small.release(b).unwrap();
    }
    println!("after release: {} blocks outstanding", small.snapshot().allocated.len());
}
