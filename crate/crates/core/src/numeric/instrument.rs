//! Per-thread kernel counters. Training runs are single-threaded, so a
//! thread-local view isolates concurrent trials (and concurrent tests).

use std::cell::Cell;

thread_local! {
    static SPMM_CALLS: Cell<u64> = const { Cell::new(0) };
    static PROPAGATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of sparse-dense products executed on this thread.
pub fn spmm_calls() -> u64 {
    SPMM_CALLS.with(Cell::get)
}

/// Number of GCN forward passes on this thread that propagated through a graph.
pub fn propagation_passes() -> u64 {
    PROPAGATIONS.with(Cell::get)
}

pub fn reset() {
    SPMM_CALLS.with(|c| c.set(0));
    PROPAGATIONS.with(|c| c.set(0));
}

pub(crate) fn record_spmm() {
    SPMM_CALLS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_propagation() {
    PROPAGATIONS.with(|c| c.set(c.get() + 1));
}
