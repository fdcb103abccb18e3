//! Shared fixtures for the benchmarks.

use ctxlm::eval::{self, Resources, SeedRun};
use ctxlm::Config;

/// One trained seed of the default configuration.
pub fn default_run() -> (Config, Resources, SeedRun) {
    let cfg = Config::default();
    let res = Resources::load(&cfg).expect("built-in resources");
    let run = eval::run_seed(&cfg, &res, cfg.seed).expect("default pipeline");
    (cfg, res, run)
}
