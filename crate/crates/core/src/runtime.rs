//! Worker-pool setup from the environment.
//!
//! - `OKANNET_THREADS=N` caps the rayon pool at `N` threads.
//! - `OKANNET_DETERMINISTIC=1` forces a single thread.
//!
//! Kernels reduce in a fixed order, so results do not depend on the thread count; the
//! deterministic switch exists for runs that must rule scheduling out entirely.

use std::env;

use crate::error::{Error, Result};

pub const THREADS_VAR: &str = "OKANNET_THREADS";
pub const DETERMINISTIC_VAR: &str = "OKANNET_DETERMINISTIC";

/// Thread count requested by the environment, `None` for the rayon default.
pub fn requested_threads() -> Result<Option<usize>> {
    if env::var(DETERMINISTIC_VAR).is_ok_and(|v| v == "1") {
        return Ok(Some(1));
    }
    match env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Configures the global pool. Returns the number of threads in use.
pub fn init_thread_pool() -> Result<usize> {
    if let Some(n) = requested_threads()? {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialised; {THREADS_VAR} ignored");
        }
    }
    Ok(rayon::current_num_threads())
}
