//! IO formats, training driver and subcommand logic for the deco-mamba CLI.

pub mod checkpoint;
pub mod commands;
pub mod dataset_dir;
pub mod pnm;
pub mod train;

/// Thread cap from the DM_THREADS environment variable (0 or unset means
/// one thread per available core). Must run before any parallel kernel.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("DM_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
