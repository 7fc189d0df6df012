//! Process-level tuning for timed runs.

/// Keeps freed heap memory mapped so repeated forward passes reuse pages
/// instead of faulting in fresh ones. A no-op outside glibc.
pub fn retain_heap() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
