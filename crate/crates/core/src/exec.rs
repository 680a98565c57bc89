//! Work splitting. Heavy loops are cut into numbered chunks; an executor runs
//! them in any order it likes but hands results back in chunk order, so every
//! reduction is done in the same sequence no matter how many threads ran.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map_chunks<A, F>(&self, chunks: usize, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(usize) -> A + Sync + Send;
}

/// Runs chunks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_chunks<A, F>(&self, chunks: usize, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(usize) -> A + Sync + Send,
    {
        (0..chunks).map(f).collect()
    }
}
