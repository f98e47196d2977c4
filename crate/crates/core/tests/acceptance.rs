//! Acceptance suite: runs every criterion at full scale and prints one
//! PASS/FAIL line per criterion.
//!
//! Arguments restrict the run to the listed criterion ids. The environment
//! variables `ACCEPTANCE_SEED` and `ACCEPTANCE_SCALE` override the defaults;
//! `RELAY_SIM_THREADS` caps the workers.

use std::process::ExitCode;
use std::time::Instant;

use relay_core::validation::checks::{run_check, CheckOptions, CHECKS};
use relay_core::validation::threads_from_env;

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> ExitCode {
    let defaults = CheckOptions::default();
    let opts = CheckOptions {
        seed: env_or("ACCEPTANCE_SEED", defaults.seed),
        threads: threads_from_env(),
        scale: env_or("ACCEPTANCE_SCALE", 1.0),
        sabotage: false,
    };
    // Ignore libtest-style flags that cargo may forward.
    let wanted: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name) in CHECKS {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        match run_check(id, &opts) {
            Ok(out) => {
                failed += !out.passed as usize;
                println!("{}  [{:.1} s]", out.summary(), t0.elapsed().as_secs_f64());
            }
            Err(e) => {
                failed += 1;
                println!("criterion {id:>2} ({name}): FAIL error: {e}");
            }
        }
    }
    println!("acceptance: {failed} failing criteria (seed {}, scale {})", opts.seed, opts.scale);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
