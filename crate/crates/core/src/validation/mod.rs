//! Monte Carlo harness: deterministic parallel replications, statistical
//! comparisons, and the checks that pit each closed form against simulation.

pub mod checks;
pub mod runner;
pub mod stats;

pub use runner::{par_map, substream, threads_from_env, Runner};
pub use stats::{ks_critical, ks_distance, Ecdf, HistogramReport, McReport};
