//! Per-thread CPU clock.

use std::time::Duration;

/// CPU time consumed by the calling thread.
#[cfg(unix)]
pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[cfg(not(unix))]
pub fn thread_cpu_time() -> Duration {
    use std::sync::OnceLock;
    use std::time::Instant;
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed()
}

/// Runs `f` and returns its value with the CPU milliseconds it used.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = thread_cpu_time();
    let out = f();
    let dt = thread_cpu_time().saturating_sub(t0);
    (out, dt.as_secs_f64() * 1e3)
}
