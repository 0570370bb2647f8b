//! Per-thread instrumentation for tensor storage and multiply-accumulates.
//!
//! Every tensor buffer registers its byte size here on creation and
//! deregisters on drop, so the live/peak figures are exact and independent
//! of the system allocator. Counters are thread-local: a forward pass run on
//! one thread sees only its own allocations and MACs.

use std::cell::Cell;

use super::TensorError;

thread_local! {
    static LIVE: Cell<u64> = const { Cell::new(0) };
    static PEAK: Cell<u64> = const { Cell::new(0) };
    static LIMIT: Cell<Option<u64>> = const { Cell::new(None) };
    static MACS: Cell<u64> = const { Cell::new(0) };
}

/// Bytes currently held by tensor buffers on this thread.
pub fn live_bytes() -> u64 {
    LIVE.with(Cell::get)
}

/// High-water mark of [`live_bytes`] since the last [`reset_peak`].
pub fn peak_bytes() -> u64 {
    PEAK.with(Cell::get)
}

/// Restart peak tracking from the current live size.
pub fn reset_peak() {
    let live = live_bytes();
    PEAK.with(|p| p.set(live));
}

/// Cap on live tensor bytes for this thread; allocations beyond it fail
/// with [`TensorError::OutOfMemory`] instead of aborting the process.
pub fn set_memory_limit(limit: Option<u64>) {
    LIMIT.with(|l| l.set(limit));
}

pub fn memory_limit() -> Option<u64> {
    LIMIT.with(Cell::get)
}

/// Multiply-accumulates performed by forward kernels since the last reset.
/// Backward passes are not counted.
pub fn mac_tally() -> u64 {
    MACS.with(Cell::get)
}

pub fn reset_mac_tally() {
    MACS.with(|m| m.set(0));
}

pub(crate) fn count_macs(n: u64) {
    MACS.with(|m| m.set(m.get() + n));
}

pub(crate) fn reserve(bytes: u64) -> Result<(), TensorError> {
    let live = live_bytes();
    if let Some(limit) = memory_limit() {
        if live + bytes > limit {
            return Err(TensorError::OutOfMemory {
                requested: bytes,
                live,
                limit,
            });
        }
    }
    let now = live + bytes;
    LIVE.with(|l| l.set(now));
    PEAK.with(|p| p.set(p.get().max(now)));
    Ok(())
}

pub(crate) fn release(bytes: u64) {
    LIVE.with(|l| l.set(l.get().saturating_sub(bytes)));
}
