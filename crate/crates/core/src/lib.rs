//! Discrete-event simulator for a cooperative proxy-server video-on-demand
//! architecture: proxies grouped on rings under trackers, groups linked on a
//! tracker ring, and a central server behind them all.

pub mod catalog;
pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod placement;
pub mod scenario;
pub mod topology;
pub mod workload;

pub use catalog::{build_catalog, zipf_weights, Catalog, PopularityModel, Video, VideoId};
pub use config::{RunMode, ScenarioConfig};
pub use engine::{
    classify, run, simulate, startup_delay_ms, CacheView, Classification, DelayModel,
    EngineConfig, LinkCapacity, ServingTier, StreamSession,
};
pub use error::{Error, Result};
pub use metrics::{compare, Comparison, ExportFormat, MetricsReport, TierStats};
pub use placement::{
    build_placement, build_single_proxy, CacheSite, Directory, Placement, PlacementMode,
    PlacementParams, Sizing,
};
pub use scenario::{build_world, run_on_trace, run_scenario, write_outputs, World};
pub use topology::{build_topology, DelayCostTable, LinkKind, NodeRef, ProxyId, Topology};
pub use workload::{generate_trace, load_trace, save_trace, Request, Trace};
