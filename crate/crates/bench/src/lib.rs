//! Fixtures shared by the benchmarks.

use coopvod::scenario::{build_world, generate_workload, World};
use coopvod::{RunMode, ScenarioConfig, Trace};

/// Default scenario with `duration_min` of traffic.
pub fn scenario(duration_min: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.workload.duration_min = duration_min;
    cfg
}

/// World and trace for `cfg`, generated with the configured seed.
pub fn fixture(cfg: &ScenarioConfig, mode: RunMode) -> (World, Trace) {
    let world = build_world(cfg, mode).expect("valid scenario");
    let trace = generate_workload(cfg, &world, cfg.workload.seed).expect("trace");
    (world, trace)
}
