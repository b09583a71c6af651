//! Timing harness for the `bench` command.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

static ALLOCATIONS: AtomicU64 = AtomicU64::new(0);

/// System allocator that counts allocation calls. The `gp` binary installs
/// it as the global allocator; elsewhere the count stays at zero.
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        System.alloc(layout)
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        System.alloc_zeroed(layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        System.realloc(ptr, layout, new_size)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }
}

pub fn allocation_count() -> u64 {
    ALLOCATIONS.load(Ordering::Relaxed)
}

/// Fastest of `runs` executions, with the allocation count of that run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub min_ms: f64,
    pub allocs: u64,
}

pub fn time_min<E>(runs: usize, mut f: impl FnMut() -> Result<(), E>) -> Result<Timing, E> {
    let mut best = Timing { min_ms: f64::INFINITY, allocs: 0 };
    for _ in 0..runs.max(1) {
        let before = allocation_count();
        let start = Instant::now();
        f()?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let allocs = allocation_count() - before;
        if ms < best.min_ms {
            best = Timing { min_ms: ms, allocs };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_the_fastest_run() {
        let mut calls = 0;
        let t = time_min::<()>(3, || {
            calls += 1;
            std::thread::sleep(std::time::Duration::from_millis(if calls == 2 { 1 } else { 20 }));
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 3);
        assert!(t.min_ms < 15.0, "{t:?}");
    }

    #[test]
    fn errors_stop_the_loop() {
        let mut calls = 0;
        let r = time_min(5, || {
            calls += 1;
            Err::<(), _>("boom")
        });
        assert_eq!(r, Err("boom"));
        assert_eq!(calls, 1);
    }
}
