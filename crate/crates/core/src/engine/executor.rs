//! Where sub-question gathering runs. The core crate ships a sequential
//! executor; the std crate adds a threaded one.

use alloc::vec::Vec;

use super::GatherResult;

pub trait Executor: Sync {
    /// Calls `f(0..n)` and returns the results in index order.
    fn map(&self, n: usize, f: &(dyn Fn(usize) -> GatherResult + Sync)) -> Vec<GatherResult>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map(&self, n: usize, f: &(dyn Fn(usize) -> GatherResult + Sync)) -> Vec<GatherResult> {
        (0..n).map(f).collect()
    }
}
