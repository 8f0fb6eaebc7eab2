//! Discrete-event core.
//!
//! Each arriving request is classified into one of five serving tiers, its
//! startup delay is computed from the hop path, and the session occupies every
//! link on that path for the playback length of the video. A request is
//! rejected when any link on its path is at capacity.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, VideoId};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, Outcome};
use crate::placement::{CacheSite, Directory, Placement};
use crate::topology::{
    is_ring_neighbor, path_cost, path_delay_ms, NodeRef, Path, PerKind, ProxyId, Topology,
};
use crate::workload::{Request, Trace};

/// Where a request is served from, in the order the tracker searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServingTier {
    /// Cached at the requesting proxy.
    LocalHit,
    /// Cached at a proxy-ring neighbour in the same group.
    NeighborProxy,
    /// Cached elsewhere in the same group.
    IntraGroupRemote,
    /// Cached in the left or right neighbour group.
    NeighborGroup,
    /// Fetched from the central server.
    CmsFetch,
}

impl ServingTier {
    pub const ALL: [ServingTier; 5] = [
        ServingTier::LocalHit,
        ServingTier::NeighborProxy,
        ServingTier::IntraGroupRemote,
        ServingTier::NeighborGroup,
        ServingTier::CmsFetch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ServingTier::LocalHit => "local_hit",
            ServingTier::NeighborProxy => "neighbor_proxy",
            ServingTier::IntraGroupRemote => "intra_group_remote",
            ServingTier::NeighborGroup => "neighbor_group",
            ServingTier::CmsFetch => "cms_fetch",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// What the engine can see of the caches.
#[derive(Debug, Clone, Copy)]
pub enum CacheView<'a> {
    /// Proxies and groups cooperate through their trackers.
    Cooperative(&'a Placement),
    /// Every proxy holds the same stand-alone cache and never asks anyone else.
    SingleProxy(&'a Directory),
}

/// Result of the tracker search for one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub tier: ServingTier,
    pub serving: NodeRef,
    /// Cached prefix available at the serving node; 0 for a CMS fetch.
    pub w_minutes: u32,
}

/// Runs the five-case search for `video` requested at `at`.
pub fn classify(
    at: ProxyId,
    video: VideoId,
    cache: CacheView<'_>,
    topology: &Topology,
) -> Classification {
    let cms = Classification {
        tier: ServingTier::CmsFetch,
        serving: NodeRef::Cms,
        w_minutes: 0,
    };
    let placement = match cache {
        CacheView::SingleProxy(dir) => {
            return match dir.get(video) {
                Some(e) => Classification {
                    tier: ServingTier::LocalHit,
                    serving: at.into(),
                    w_minutes: e.w_minutes,
                },
                None => cms,
            };
        }
        CacheView::Cooperative(p) => p,
    };
    let m = topology.proxies_per_group();
    if let Some(e) = placement.group(at.group).get(video) {
        let (tier, serving) = match e.site {
            CacheSite::Proxy(q) if q == at.index => (ServingTier::LocalHit, at.into()),
            CacheSite::Proxy(q) => {
                let tier = if is_ring_neighbor(m, q, at.index).unwrap_or(false) {
                    ServingTier::NeighborProxy
                } else {
                    ServingTier::IntraGroupRemote
                };
                (tier, ProxyId::new(at.group, q).into())
            }
            CacheSite::Tracker => (ServingTier::IntraGroupRemote, NodeRef::Tracker { group: at.group }),
        };
        return Classification {
            tier,
            serving,
            w_minutes: e.w_minutes,
        };
    }
    let left = topology.left_group(at.group);
    let right = topology.right_group(at.group).filter(|r| Some(*r) != left);
    for g in left.into_iter().chain(right) {
        if let Some(e) = placement.group(g).get(video) {
            let serving = match e.site {
                CacheSite::Proxy(q) => NodeRef::Proxy { group: g, index: q },
                CacheSite::Tracker => NodeRef::Tracker { group: g },
            };
            return Classification {
                tier: ServingTier::NeighborGroup,
                serving,
                w_minutes: e.w_minutes,
            };
        }
    }
    cms
}

/// How the CMS suffix transfer contributes to startup delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayModel {
    /// The whole suffix transfer time is added to the path delay.
    Literal,
    /// The suffix is prefetched while the cached prefix plays; only the part
    /// of the transfer that outlasts the prefix delays startup.
    #[default]
    Pipelined,
}

/// Startup delay in milliseconds for a session with a `w`-minute prefix of an
/// `s`-minute video, fetching the rest from the CMS at `b` minutes of video per
/// minute of wall time.
pub fn startup_delay_ms(
    path_delay: f64,
    w_min: u32,
    s_min: u32,
    suffix_rate: f64,
    model: DelayModel,
) -> Result<f64> {
    if !(suffix_rate.is_finite() && suffix_rate > 0.0) {
        return Err(Error::invalid(format!(
            "suffix rate b_i must be positive, got {suffix_rate}"
        )));
    }
    let suffix = f64::from(s_min.saturating_sub(w_min));
    let transfer_min = suffix / suffix_rate;
    let extra_min = match model {
        DelayModel::Literal => transfer_min,
        DelayModel::Pipelined => (transfer_min - f64::from(w_min)).max(0.0),
    };
    Ok(path_delay + extra_min * 60_000.0)
}

/// Concurrent-stream limit of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkCapacity {
    Limited(u32),
    Unlimited,
}

impl LinkCapacity {
    fn allows(self, in_use: u32) -> bool {
        match self {
            LinkCapacity::Limited(c) => in_use < c,
            LinkCapacity::Unlimited => true,
        }
    }

    fn exceeded_by(self, in_use: u32) -> bool {
        match self {
            LinkCapacity::Limited(c) => in_use > c,
            LinkCapacity::Unlimited => false,
        }
    }
}

impl Serialize for LinkCapacity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LinkCapacity::Limited(c) => s.serialize_u32(*c),
            LinkCapacity::Unlimited => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for LinkCapacity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => u32::try_from(n)
                .map(LinkCapacity::Limited)
                .map_err(|_| serde::de::Error::custom(format!("capacity {n} out of range"))),
            Raw::Text(t) if t == "unlimited" => Ok(LinkCapacity::Unlimited),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "capacity must be an integer or \"unlimited\", got {t:?}"
            ))),
        }
    }
}

/// Per-link concurrent-stream counters.
#[derive(Debug, Clone)]
pub struct LinkCapacityState {
    in_use: Vec<u32>,
    limit: Vec<LinkCapacity>,
}

impl LinkCapacityState {
    pub fn new(topology: &Topology, capacity: &PerKind<LinkCapacity>) -> Self {
        let limit = (0..topology.link_count())
            .map(|id| capacity.get(topology.link_at(id).kind))
            .collect();
        Self {
            in_use: vec![0; topology.link_count()],
            limit,
        }
    }

    pub fn in_use(&self, link_id: usize) -> u32 {
        self.in_use[link_id]
    }

    /// Links whose counter exceeds their limit. Always empty unless the engine is broken.
    pub fn violations(&self) -> usize {
        self.in_use
            .iter()
            .zip(&self.limit)
            .filter(|(&n, &c)| c.exceeded_by(n))
            .count()
    }
}

/// Admission decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    Rejected,
}

/// Claims one stream slot on every link in `link_ids`, or nothing.
pub fn admit(link_ids: &[usize], state: &mut LinkCapacityState) -> Admission {
    if link_ids
        .iter()
        .all(|&id| state.limit[id].allows(state.in_use[id]))
    {
        for &id in link_ids {
            state.in_use[id] += 1;
        }
        Admission::Admitted
    } else {
        Admission::Rejected
    }
}

fn release(link_ids: &[usize], state: &mut LinkCapacityState) {
    for &id in link_ids {
        state.in_use[id] -= 1;
    }
}

/// One admitted stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSession {
    pub request: Request,
    pub tier: ServingTier,
    pub serving: NodeRef,
    pub start_delay_ms: f64,
    pub start_min: f64,
    pub end_min: f64,
    pub minutes_from_group: u32,
    pub minutes_from_cms: u32,
    /// Transmission cost of the prefix path plus the CMS suffix path.
    pub cost: f64,
    #[serde(skip)]
    pub path: Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// b_i: minutes of video the CMS delivers per minute of wall time.
    pub suffix_rate: f64,
    pub delay_model: DelayModel,
    pub capacity: PerKind<LinkCapacity>,
    /// Width of the time buckets in the blocks-served series.
    pub bucket_min: f64,
    /// Check every link counter after every event.
    pub audit: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            suffix_rate: 2.0,
            delay_model: DelayModel::Pipelined,
            capacity: PerKind::uniform(LinkCapacity::Limited(DEFAULT_LINK_CAPACITY)),
            bucket_min: 10.0,
            audit: false,
        }
    }
}

/// Default concurrent streams per link.
pub const DEFAULT_LINK_CAPACITY: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Arrival(usize),
    SessionEnd(usize),
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Time-ordered event queue, FIFO among equal times.
#[derive(Debug, Default)]
struct EventQueue {
    heap: BinaryHeap<Scheduled>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: f64, event: Event) {
        self.heap.push(Scheduled {
            time,
            seq: self.next_seq,
            event,
        });
        self.next_seq += 1;
    }

    fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|s| (s.time, s.event))
    }
}

/// Checks that the trace, caches and topology all agree.
fn validate_inputs(
    trace: &Trace,
    topology: &Topology,
    cache: CacheView<'_>,
    catalog: &Catalog,
    config: &EngineConfig,
) -> Result<()> {
    if !(config.suffix_rate.is_finite() && config.suffix_rate > 0.0) {
        return Err(Error::config("engine.suffix_rate", "must be positive"));
    }
    if !(config.bucket_min.is_finite() && config.bucket_min > 0.0) {
        return Err(Error::config("engine.bucket_min", "must be positive"));
    }
    let check_dir = |dir: &Directory, what: &str| -> Result<()> {
        if dir.n_videos() != catalog.len() {
            return Err(Error::config(
                "placement",
                format!("{what} covers {} videos, catalog has {}", dir.n_videos(), catalog.len()),
            ));
        }
        for (id, e) in dir.entries() {
            if e.w_minutes > catalog.length_of(id) {
                return Err(Error::config(
                    "placement",
                    format!("{what}: prefix of {id} longer than the video"),
                ));
            }
        }
        Ok(())
    };
    match cache {
        CacheView::Cooperative(p) => {
            if p.groups().len() != topology.groups() as usize {
                return Err(Error::config(
                    "placement",
                    format!(
                        "placement has {} groups, topology has {}",
                        p.groups().len(),
                        topology.groups()
                    ),
                ));
            }
            for (g, dir) in p.groups().iter().enumerate() {
                if dir.m_proxies() != topology.proxies_per_group() {
                    return Err(Error::config(
                        "placement",
                        format!("group {} directory has {} proxies", g + 1, dir.m_proxies()),
                    ));
                }
                check_dir(dir, &format!("group {}", g + 1))?;
            }
        }
        CacheView::SingleProxy(dir) => check_dir(dir, "single-proxy cache")?,
    }
    for (i, r) in trace.requests.iter().enumerate() {
        if !topology.contains(r.proxy) {
            return Err(Error::config(
                "workload",
                format!("request {} targets unknown proxy {}", i + 1, r.proxy),
            ));
        }
        if !catalog.contains(r.video) {
            return Err(Error::config(
                "workload",
                format!("request {} asks for unknown video {}", i + 1, r.video.0),
            ));
        }
    }
    Ok(())
}

/// Builds the session for a classified request. Capacity is not checked here.
pub fn plan_session(
    request: &Request,
    class: Classification,
    topology: &Topology,
    catalog: &Catalog,
    config: &EngineConfig,
) -> Result<StreamSession> {
    let table = topology.table();
    let path = topology.path_for_tier(class.tier, class.serving, request.proxy)?;
    let s = catalog.length_of(request.video);
    let w = class.w_minutes.min(s);
    let from_cms = s - w;
    let delay = startup_delay_ms(
        path_delay_ms(table, &path),
        w,
        s,
        config.suffix_rate,
        config.delay_model,
    )?;
    let cost = if class.tier == ServingTier::CmsFetch {
        path_cost(table, &path, f64::from(s))
    } else {
        path_cost(table, &path, f64::from(w))
            + path_cost(table, &topology.suffix_path(request.proxy), f64::from(from_cms))
    };
    Ok(StreamSession {
        request: *request,
        tier: class.tier,
        serving: class.serving,
        start_delay_ms: delay,
        start_min: request.arrival_time_min,
        end_min: request.arrival_time_min + f64::from(s),
        minutes_from_group: w,
        minutes_from_cms: from_cms,
        cost,
        path,
    })
}

/// Dense link ids a session occupies: its path plus the CMS uplink when a suffix is fetched.
fn occupied_links(session: &StreamSession, topology: &Topology) -> Vec<usize> {
    let mut ids: Vec<usize> = session.path.iter().map(|&l| topology.link_id(l)).collect();
    if session.minutes_from_cms > 0 {
        let cms = topology.link_id(topology.cms_proxy(session.request.proxy));
        if !ids.contains(&cms) {
            ids.push(cms);
        }
    }
    ids
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    /// Admitted sessions in admission order, when requested.
    pub sessions: Option<Vec<StreamSession>>,
}

/// Simulates `trace` and returns the aggregated metrics.
pub fn run(
    trace: &Trace,
    topology: &Topology,
    cache: CacheView<'_>,
    catalog: &Catalog,
    config: &EngineConfig,
) -> Result<MetricsReport> {
    simulate(trace, topology, cache, catalog, config, false).map(|o| o.report)
}

/// [`run`], optionally keeping a log of every admitted session.
pub fn simulate(
    trace: &Trace,
    topology: &Topology,
    cache: CacheView<'_>,
    catalog: &Catalog,
    config: &EngineConfig,
    keep_sessions: bool,
) -> Result<RunOutput> {
    validate_inputs(trace, topology, cache, catalog, config)?;
    let mut report = MetricsReport::new(config.bucket_min);
    let mut state = LinkCapacityState::new(topology, &config.capacity);
    let mut queue = EventQueue::default();
    for (i, r) in trace.requests.iter().enumerate() {
        queue.push(r.arrival_time_min, Event::Arrival(i));
    }
    // held link ids per live session, indexed by session slot
    let mut holding: Vec<Vec<usize>> = Vec::new();
    let mut free_slots: Vec<usize> = Vec::new();
    let mut log = keep_sessions.then(Vec::new);

    while let Some((time, event)) = queue.pop() {
        match event {
            Event::Arrival(i) => {
                let request = &trace.requests[i];
                let class = classify(request.proxy, request.video, cache, topology);
                let session = plan_session(request, class, topology, catalog, config)?;
                let links = occupied_links(&session, topology);
                match admit(&links, &mut state) {
                    Admission::Admitted => {
                        let slot = match free_slots.pop() {
                            Some(s) => {
                                holding[s] = links;
                                s
                            }
                            None => {
                                holding.push(links);
                                holding.len() - 1
                            }
                        };
                        queue.push(session.end_min, Event::SessionEnd(slot));
                        report.record(Outcome::Served(&session));
                        if let Some(log) = log.as_mut() {
                            log.push(session);
                        }
                    }
                    Admission::Rejected => report.record(Outcome::Rejected { at_min: time }),
                }
            }
            Event::SessionEnd(slot) => {
                release(&holding[slot], &mut state);
                holding[slot].clear();
                free_slots.push(slot);
            }
        }
        if config.audit {
            report.capacity_violations += state.violations() as u64;
        }
    }
    report.finish();
    Ok(RunOutput {
        report,
        sessions: log,
    })
}
