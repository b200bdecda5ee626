//! Shared two-queue buffer pool.
//!
//! Blocks are tracked in an allocated queue (handed out) and a free queue
//! (ready for reuse). A request is rounded up to a power of two of at least
//! [`MIN_BLOCK_BYTES`]; the free queue is scanned first-fit and a fresh block
//! is only allocated on a miss. Released blocks go back to the free queue;
//! idle blocks are only handed back to the system allocator when a miss
//! would otherwise exceed the budget.
//!
//! Queue mutation takes the write half of a reader-writer lock; statistics
//! reads take the read half.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

pub const MIN_BLOCK_BYTES: usize = 256;

static NEXT_POOL_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PoolError {
    #[error("memory budget of {budget} bytes exhausted: {in_use} bytes held, {requested} more requested")]
    BudgetExhausted { budget: usize, in_use: usize, requested: usize },
    #[error("block {0} is not currently allocated from this pool")]
    InvalidHandle(u64),
    #[error("zero-byte request")]
    EmptyRequest,
}

/// Allocation counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PoolStats {
    pub raw_allocations: u64,
    pub reuses: u64,
    /// High-water mark of bytes owned by the pool (or, in bypass mode, of
    /// bytes outstanding).
    pub peak_bytes: usize,
}

impl PoolStats {
    pub fn acquires(&self) -> u64 {
        self.raw_allocations + self.reuses
    }
}

/// A pooled buffer of `f64` storage.
#[derive(Debug)]
pub struct Block {
    pool: u64,
    id: u64,
    aligned: usize,
    data: Vec<f64>,
}

impl Block {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn aligned_bytes(&self) -> usize {
        self.aligned
    }

    /// First `n` values; panics if the block is smaller.
    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[..n]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Default)]
struct Queues {
    allocated: VecDeque<(u64, usize)>,
    free: VecDeque<(u64, usize, Vec<f64>)>,
    owned_bytes: usize,
    outstanding_bytes: usize,
    next_id: u64,
    stats: PoolStats,
}

/// Rounds `nbytes` up to the next power of two, floored at 256.
pub fn aligned_size(nbytes: usize) -> usize {
    nbytes.max(MIN_BLOCK_BYTES).next_power_of_two()
}

#[derive(Debug)]
pub struct BufferPool {
    id: u64,
    budget: usize,
    bypass: bool,
    queues: RwLock<Queues>,
}

impl BufferPool {
    pub fn new(budget: usize) -> Self {
        Self::build(budget, false)
    }

    /// Pool that never reuses: every acquire allocates and every release
    /// frees. Used as the unpooled baseline.
    pub fn bypass(budget: usize) -> Self {
        Self::build(budget, true)
    }

    fn build(budget: usize, bypass: bool) -> Self {
        Self {
            id: NEXT_POOL_ID.fetch_add(1, Ordering::Relaxed),
            budget,
            bypass,
            queues: RwLock::new(Queues::default()),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_bypass(&self) -> bool {
        self.bypass
    }

    pub fn acquire(&self, nbytes: usize) -> Result<Block, PoolError> {
        if nbytes == 0 {
            return Err(PoolError::EmptyRequest);
        }
        let aligned = aligned_size(nbytes);
        let mut q = self.queues.write().unwrap_or_else(|e| e.into_inner());
        if !self.bypass {
            if let Some(pos) = q.free.iter().position(|(_, size, _)| *size >= aligned) {
                let (id, size, data) = q.free.remove(pos).expect("position is in range");
                q.allocated.push_back((id, size));
                q.outstanding_bytes += size;
                q.stats.reuses += 1;
                return Ok(Block { pool: self.id, id, aligned: size, data });
            }
        }
        if !self.bypass && q.owned_bytes + aligned > self.budget {
            // Idle blocks that did not fit are dropped to make room.
            while q.owned_bytes + aligned > self.budget {
                let Some((_, size, _)) = q.free.pop_front() else { break };
                q.owned_bytes -= size;
            }
        }
        let held = if self.bypass { q.outstanding_bytes } else { q.owned_bytes };
        if held + aligned > self.budget {
            return Err(PoolError::BudgetExhausted { budget: self.budget, in_use: held, requested: aligned });
        }
        let id = q.next_id;
        q.next_id += 1;
        q.owned_bytes += aligned;
        q.outstanding_bytes += aligned;
        q.stats.raw_allocations += 1;
        let level = if self.bypass { q.outstanding_bytes } else { q.owned_bytes };
        q.stats.peak_bytes = q.stats.peak_bytes.max(level);
        q.allocated.push_back((id, aligned));
        drop(q);
        Ok(Block { pool: self.id, id, aligned, data: vec![0.0; aligned / 8] })
    }

    pub fn release(&self, block: Block) -> Result<(), PoolError> {
        if block.pool != self.id {
            return Err(PoolError::InvalidHandle(block.id));
        }
        let mut q = self.queues.write().unwrap_or_else(|e| e.into_inner());
        let pos = q
            .allocated
            .iter()
            .position(|&(id, _)| id == block.id)
            .ok_or(PoolError::InvalidHandle(block.id))?;
        q.allocated.remove(pos);
        q.outstanding_bytes -= block.aligned;
        if self.bypass {
            q.owned_bytes -= block.aligned;
        } else {
            q.free.push_back((block.id, block.aligned, block.data));
        }
        Ok(())
    }

    pub fn stats(&self) -> PoolStats {
        self.queues.read().unwrap_or_else(|e| e.into_inner()).stats
    }

    /// Snapshot for auditing: ids in the allocated and free queues.
    pub fn snapshot(&self) -> PoolSnapshot {
        let q = self.queues.read().unwrap_or_else(|e| e.into_inner());
        PoolSnapshot {
            allocated: q.allocated.iter().map(|&(id, _)| id).collect(),
            free: q.free.iter().map(|&(id, _, _)| id).collect(),
            owned_bytes: q.owned_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSnapshot {
    pub allocated: Vec<u64>,
    pub free: Vec<u64>,
    pub owned_bytes: usize,
}

impl PoolSnapshot {
    /// Ids present in both queues (must be empty).
    pub fn overlap(&self) -> Vec<u64> {
        let free: std::collections::HashSet<_> = self.free.iter().collect();
        self.allocated.iter().filter(|id| free.contains(id)).copied().collect()
    }
}
