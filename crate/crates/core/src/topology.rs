//! Two-level ring topology: one CMS, J trackers on a ring, and M proxies on a
//! ring behind each tracker.
//!
//! Clients are not modelled as nodes. Every proxy owns one `ProxyClient`
//! link that stands for all of its attached clients.

use serde::{Deserialize, Serialize};

use crate::engine::ServingTier;
use crate::error::{Error, Result};

/// A proxy server, addressed by 1-based group and 1-based ring position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProxyId {
    pub group: u32,
    pub index: u32,
}

impl ProxyId {
    pub fn new(group: u32, index: u32) -> Self {
        Self { group, index }
    }
}

impl std::fmt::Display for ProxyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PS{}@L{}", self.index, self.group)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NodeRef {
    Cms,
    Tracker { group: u32 },
    Proxy { group: u32, index: u32 },
    /// The client population attached to one proxy.
    Client { group: u32, index: u32 },
}

impl From<ProxyId> for NodeRef {
    fn from(p: ProxyId) -> Self {
        NodeRef::Proxy {
            group: p.group,
            index: p.index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    ProxyClient,
    ProxyProxy,
    TrackerProxy,
    TrackerTracker,
    CmsProxy,
}

impl LinkKind {
    pub const ALL: [LinkKind; 5] = [
        LinkKind::ProxyClient,
        LinkKind::ProxyProxy,
        LinkKind::TrackerProxy,
        LinkKind::TrackerTracker,
        LinkKind::CmsProxy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinkKind::ProxyClient => "proxy_client",
            LinkKind::ProxyProxy => "proxy_proxy",
            LinkKind::TrackerProxy => "tracker_proxy",
            LinkKind::TrackerTracker => "tracker_tracker",
            LinkKind::CmsProxy => "cms_proxy",
        }
    }
}

/// One value per link kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerKind<T> {
    pub proxy_client: T,
    pub proxy_proxy: T,
    pub tracker_proxy: T,
    pub tracker_tracker: T,
    pub cms_proxy: T,
}

impl<T: Copy> PerKind<T> {
    pub fn uniform(value: T) -> Self {
        Self {
            proxy_client: value,
            proxy_proxy: value,
            tracker_proxy: value,
            tracker_tracker: value,
            cms_proxy: value,
        }
    }

    pub fn get(&self, kind: LinkKind) -> T {
        match kind {
            LinkKind::ProxyClient => self.proxy_client,
            LinkKind::ProxyProxy => self.proxy_proxy,
            LinkKind::TrackerProxy => self.tracker_proxy,
            LinkKind::TrackerTracker => self.tracker_tracker,
            LinkKind::CmsProxy => self.cms_proxy,
        }
    }
}

/// Per-hop delay and per-minute transmission cost of each link kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayCostTable {
    pub delay_ms: PerKind<f64>,
    /// Abstract cost units per delivered video-minute per hop.
    pub cost_per_min: PerKind<f64>,
}

impl Default for DelayCostTable {
    fn default() -> Self {
        Self {
            delay_ms: PerKind {
                proxy_client: 100.0,
                proxy_proxy: 200.0,
                tracker_proxy: 200.0,
                tracker_tracker: 300.0,
                cms_proxy: 1200.0,
            },
            cost_per_min: PerKind {
                proxy_client: 1.0,
                proxy_proxy: 2.0,
                tracker_proxy: 2.0,
                tracker_tracker: 3.0,
                cms_proxy: 12.0,
            },
        }
    }
}

impl DelayCostTable {
    pub fn validate(&self) -> Result<()> {
        for kind in LinkKind::ALL {
            let d = self.delay_ms.get(kind);
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::config(
                    format!("topology.delay_ms.{}", kind.name()),
                    format!("delay must be finite and >= 0, got {d}"),
                ));
            }
            let c = self.cost_per_min.get(kind);
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::config(
                    format!("topology.cost_per_min.{}", kind.name()),
                    format!("cost must be finite and >= 0, got {c}"),
                ));
            }
        }
        Ok(())
    }
}

/// A physical link. `slot` is dense within its kind; see [`Topology::link_id`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub kind: LinkKind,
    pub slot: u32,
}

pub type Path = Vec<Link>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Ascending ring index (wrapping N -> 1).
    Clockwise,
    CounterClockwise,
}

/// Shortest arc between two positions on a ring of `ring_size` nodes.
///
/// Ties go clockwise. Indices are 1-based.
pub fn ring_distance(ring_size: u32, from: u32, to: u32) -> Result<(u32, Direction)> {
    check_ring_index(ring_size, from)?;
    check_ring_index(ring_size, to)?;
    let cw = (to + ring_size - from) % ring_size;
    let ccw = (ring_size - cw) % ring_size;
    if cw <= ccw {
        Ok((cw, Direction::Clockwise))
    } else {
        Ok((ccw, Direction::CounterClockwise))
    }
}

pub fn is_ring_neighbor(ring_size: u32, a: u32, b: u32) -> Result<bool> {
    Ok(ring_distance(ring_size, a, b)?.0 == 1)
}

fn check_ring_index(ring_size: u32, idx: u32) -> Result<()> {
    if ring_size == 0 || idx == 0 || idx > ring_size {
        return Err(Error::invalid(format!(
            "ring index {idx} outside 1..={ring_size}"
        )));
    }
    Ok(())
}

/// Number of distinct edges in a ring of `n` nodes.
fn ring_edge_count(n: u32) -> u32 {
    match n {
        0 | 1 => 0,
        2 => 1,
        n => n,
    }
}

/// Edge label for the hop leaving `from` in `dir`. Edge `e` joins `e` and `e + 1`.
fn ring_edge(n: u32, from: u32, dir: Direction) -> u32 {
    if n == 2 {
        return 1;
    }
    match dir {
        Direction::Clockwise => from,
        Direction::CounterClockwise => {
            if from == 1 {
                n
            } else {
                from - 1
            }
        }
    }
}

fn ring_step(n: u32, from: u32, dir: Direction) -> u32 {
    match dir {
        Direction::Clockwise => from % n + 1,
        Direction::CounterClockwise => {
            if from == 1 {
                n
            } else {
                from - 1
            }
        }
    }
}

/// Edges crossed walking the shortest arc from `from` to `to`.
fn ring_walk(n: u32, from: u32, to: u32) -> Vec<u32> {
    let (hops, dir) = ring_distance(n, from, to).expect("validated ring indices");
    let mut at = from;
    (0..hops)
        .map(|_| {
            let e = ring_edge(n, at, dir);
            at = ring_step(n, at, dir);
            e
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    j_groups: u32,
    m_proxies: u32,
    table: DelayCostTable,
    offsets: [usize; 5],
    n_links: usize,
}

pub fn build_topology(j_groups: u32, m_proxies: u32, table: DelayCostTable) -> Result<Topology> {
    if j_groups == 0 {
        return Err(Error::invalid("build_topology: J (groups) must be at least 1"));
    }
    if m_proxies == 0 {
        return Err(Error::invalid("build_topology: M (proxies per group) must be at least 1"));
    }
    table.validate()?;
    let per_proxy = (j_groups * m_proxies) as usize;
    let counts = [
        per_proxy,
        (j_groups * ring_edge_count(m_proxies)) as usize,
        per_proxy,
        ring_edge_count(j_groups) as usize,
        per_proxy,
    ];
    let mut offsets = [0usize; 5];
    let mut acc = 0;
    for (o, c) in offsets.iter_mut().zip(counts) {
        *o = acc;
        acc += c;
    }
    Ok(Topology {
        j_groups,
        m_proxies,
        table,
        offsets,
        n_links: acc,
    })
}

impl Topology {
    pub fn groups(&self) -> u32 {
        self.j_groups
    }

    pub fn proxies_per_group(&self) -> u32 {
        self.m_proxies
    }

    pub fn proxy_count(&self) -> u32 {
        self.j_groups * self.m_proxies
    }

    pub fn table(&self) -> &DelayCostTable {
        &self.table
    }

    /// Total node count: CMS, trackers and proxies.
    pub fn node_count(&self) -> u32 {
        1 + self.j_groups + self.proxy_count()
    }

    pub fn proxies(&self) -> impl Iterator<Item = ProxyId> + '_ {
        (1..=self.j_groups)
            .flat_map(move |g| (1..=self.m_proxies).map(move |q| ProxyId::new(g, q)))
    }

    pub fn contains(&self, p: ProxyId) -> bool {
        (1..=self.j_groups).contains(&p.group) && (1..=self.m_proxies).contains(&p.index)
    }

    /// Position of `p` in `proxies()` order.
    pub fn proxy_ordinal(&self, p: ProxyId) -> usize {
        ((p.group - 1) * self.m_proxies + (p.index - 1)) as usize
    }

    pub fn proxy_at(&self, ordinal: usize) -> ProxyId {
        let m = self.m_proxies as usize;
        ProxyId::new((ordinal / m) as u32 + 1, (ordinal % m) as u32 + 1)
    }

    /// Distinct proxy-ring neighbours of `p`: 2 when M >= 3, 1 when M = 2, none when M = 1.
    pub fn proxy_neighbors(&self, p: ProxyId) -> Vec<ProxyId> {
        let m = self.m_proxies;
        let mut out = Vec::with_capacity(2);
        for dir in [Direction::CounterClockwise, Direction::Clockwise] {
            let q = ring_step(m, p.index, dir);
            if q != p.index && !out.iter().any(|n: &ProxyId| n.index == q) {
                out.push(ProxyId::new(p.group, q));
            }
        }
        out
    }

    /// Group on the counter-clockwise side of `group`, if it is a different group.
    pub fn left_group(&self, group: u32) -> Option<u32> {
        let g = ring_step(self.j_groups, group, Direction::CounterClockwise);
        (g != group).then_some(g)
    }

    pub fn right_group(&self, group: u32) -> Option<u32> {
        let g = ring_step(self.j_groups, group, Direction::Clockwise);
        (g != group).then_some(g)
    }

    pub fn link_count(&self) -> usize {
        self.n_links
    }

    /// Dense index of a link in `0..link_count()`.
    pub fn link_id(&self, link: Link) -> usize {
        self.offsets[link.kind as usize] + link.slot as usize
    }

    /// Inverse of [`Topology::link_id`].
    pub fn link_at(&self, id: usize) -> Link {
        let k = self.offsets.iter().rposition(|&o| o <= id).expect("offset 0 exists");
        Link {
            kind: LinkKind::ALL[k],
            slot: (id - self.offsets[k]) as u32,
        }
    }

    pub fn proxy_client(&self, p: ProxyId) -> Link {
        Link {
            kind: LinkKind::ProxyClient,
            slot: self.proxy_ordinal(p) as u32,
        }
    }

    pub fn tracker_proxy(&self, p: ProxyId) -> Link {
        Link {
            kind: LinkKind::TrackerProxy,
            slot: self.proxy_ordinal(p) as u32,
        }
    }

    pub fn cms_proxy(&self, p: ProxyId) -> Link {
        Link {
            kind: LinkKind::CmsProxy,
            slot: self.proxy_ordinal(p) as u32,
        }
    }

    fn proxy_proxy(&self, group: u32, edge: u32) -> Link {
        Link {
            kind: LinkKind::ProxyProxy,
            slot: (group - 1) * ring_edge_count(self.m_proxies) + (edge - 1),
        }
    }

    fn tracker_tracker(&self, edge: u32) -> Link {
        Link {
            kind: LinkKind::TrackerTracker,
            slot: edge - 1,
        }
    }

    /// Hop sequence from `serving` to the clients of `requesting` for a given tier.
    pub fn path_for_tier(
        &self,
        tier: ServingTier,
        serving: NodeRef,
        requesting: ProxyId,
    ) -> Result<Path> {
        if !self.contains(requesting) {
            return Err(Error::invalid(format!("unknown requesting proxy {requesting}")));
        }
        let inconsistent = || {
            Error::invalid(format!(
                "serving node {serving:?} inconsistent with tier {tier:?} for {requesting}"
            ))
        };
        let m = self.m_proxies;
        let last = self.proxy_client(requesting);
        let path = match (tier, serving) {
            (ServingTier::LocalHit, NodeRef::Proxy { group, index })
                if ProxyId::new(group, index) == requesting =>
            {
                vec![last]
            }
            (ServingTier::NeighborProxy, NodeRef::Proxy { group, index })
                if group == requesting.group
                    && index <= m
                    && is_ring_neighbor(m, index, requesting.index)? =>
            {
                let edges = ring_walk(m, index, requesting.index);
                vec![self.proxy_proxy(group, edges[0]), last]
            }
            (ServingTier::IntraGroupRemote, NodeRef::Proxy { group, index })
                if group == requesting.group && (1..=m).contains(&index) && index != requesting.index =>
            {
                let mut p: Path = ring_walk(m, index, requesting.index)
                    .into_iter()
                    .map(|e| self.proxy_proxy(group, e))
                    .collect();
                p.push(last);
                p
            }
            (ServingTier::IntraGroupRemote, NodeRef::Tracker { group })
                if group == requesting.group =>
            {
                vec![self.tracker_proxy(requesting), last]
            }
            (ServingTier::NeighborGroup, NodeRef::Proxy { group, index })
                if group != requesting.group && self.contains(ProxyId::new(group, index)) =>
            {
                let mut p = vec![self.tracker_proxy(ProxyId::new(group, index))];
                p.extend(self.tracker_ring_path(group, requesting.group));
                p.push(self.tracker_proxy(requesting));
                p.push(last);
                p
            }
            (ServingTier::NeighborGroup, NodeRef::Tracker { group })
                if group != requesting.group && (1..=self.j_groups).contains(&group) =>
            {
                let mut p = self.tracker_ring_path(group, requesting.group);
                p.push(self.tracker_proxy(requesting));
                p.push(last);
                p
            }
            (ServingTier::CmsFetch, NodeRef::Cms) => vec![self.cms_proxy(requesting), last],
            _ => return Err(inconsistent()),
        };
        Ok(path)
    }

    fn tracker_ring_path(&self, from_group: u32, to_group: u32) -> Vec<Link> {
        ring_walk(self.j_groups, from_group, to_group)
            .into_iter()
            .map(|e| self.tracker_tracker(e))
            .collect()
    }

    /// Route used for the CMS-sourced suffix of a partially cached video.
    pub fn suffix_path(&self, requesting: ProxyId) -> Path {
        vec![self.cms_proxy(requesting), self.proxy_client(requesting)]
    }
}

/// Sum of per-hop delays along `path`.
pub fn path_delay_ms(table: &DelayCostTable, path: &[Link]) -> f64 {
    path.iter().map(|l| table.delay_ms.get(l.kind)).sum()
}

/// Cost of delivering `minutes` of video along every hop of `path`.
pub fn path_cost(table: &DelayCostTable, path: &[Link], minutes: f64) -> f64 {
    minutes * path.iter().map(|l| table.cost_per_min.get(l.kind)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_topo(j: u32, m: u32) -> Topology {
        build_topology(j, m, DelayCostTable::default()).unwrap()
    }

    fn kinds(p: &[Link]) -> Vec<LinkKind> {
        p.iter().map(|l| l.kind).collect()
    }

    #[test]
    fn default_world_sizes() {
        let t = default_topo(6, 6);
        assert_eq!(t.node_count(), 1 + 6 + 36);
        assert_eq!(t.proxies().count(), 36);
        // 36 client links, 36 proxy ring edges, 36 tracker uplinks, 6 tracker ring edges, 36 CMS links
        assert_eq!(t.link_count(), 36 + 36 + 36 + 6 + 36);
    }

    #[test]
    fn single_proxy_ring_has_no_ring_edges() {
        let t = default_topo(1, 1);
        assert!(t.proxy_neighbors(ProxyId::new(1, 1)).is_empty());
        assert_eq!(t.link_count(), 3);
        assert_eq!(t.left_group(1), None);
        assert_eq!(t.right_group(1), None);
    }

    #[test]
    fn three_ring_every_proxy_has_two_neighbors() {
        let t = default_topo(3, 3);
        for p in t.proxies() {
            assert_eq!(t.proxy_neighbors(p).len(), 2, "{p}");
        }
    }

    #[test]
    fn neighbor_counts_by_ring_size() {
        assert_eq!(default_topo(1, 2).proxy_neighbors(ProxyId::new(1, 1)).len(), 1);
        assert_eq!(default_topo(1, 4).proxy_neighbors(ProxyId::new(1, 1)).len(), 2);
    }

    #[test]
    fn build_rejects_empty_dimensions() {
        assert!(build_topology(0, 6, DelayCostTable::default()).is_err());
        assert!(build_topology(6, 0, DelayCostTable::default()).is_err());
        let mut bad = DelayCostTable::default();
        bad.delay_ms.proxy_proxy = -1.0;
        assert!(matches!(build_topology(2, 2, bad), Err(Error::Config { .. })));
    }

    #[test]
    fn ring_distance_examples() {
        assert_eq!(ring_distance(6, 1, 3).unwrap(), (2, Direction::Clockwise));
        assert_eq!(ring_distance(6, 1, 4).unwrap(), (3, Direction::Clockwise));
        assert_eq!(ring_distance(6, 2, 1).unwrap(), (1, Direction::CounterClockwise));
        assert_eq!(ring_distance(6, 5, 5).unwrap(), (0, Direction::Clockwise));
        assert!(ring_distance(6, 0, 1).is_err());
        assert!(ring_distance(6, 1, 7).is_err());
    }

    #[test]
    fn ring_neighbor_examples() {
        assert!(is_ring_neighbor(6, 1, 2).unwrap());
        assert!(!is_ring_neighbor(6, 1, 4).unwrap());
        assert!(is_ring_neighbor(2, 1, 2).unwrap());
        assert!(is_ring_neighbor(6, 6, 1).unwrap());
    }

    #[test]
    fn local_hit_path() {
        let t = default_topo(1, 6);
        let p = ProxyId::new(1, 2);
        let path = t.path_for_tier(ServingTier::LocalHit, p.into(), p).unwrap();
        assert_eq!(kinds(&path), vec![LinkKind::ProxyClient]);
        assert_eq!(path_delay_ms(t.table(), &path), 100.0);
    }

    #[test]
    fn neighbor_proxy_path() {
        let t = default_topo(1, 6);
        let path = t
            .path_for_tier(ServingTier::NeighborProxy, ProxyId::new(1, 1).into(), ProxyId::new(1, 2))
            .unwrap();
        assert_eq!(kinds(&path), vec![LinkKind::ProxyProxy, LinkKind::ProxyClient]);
        assert_eq!(path_delay_ms(t.table(), &path), 300.0);
    }

    #[test]
    fn cms_path() {
        let t = default_topo(6, 6);
        let q = ProxyId::new(4, 3);
        let path = t.path_for_tier(ServingTier::CmsFetch, NodeRef::Cms, q).unwrap();
        assert_eq!(kinds(&path), vec![LinkKind::CmsProxy, LinkKind::ProxyClient]);
        assert_eq!(path_delay_ms(t.table(), &path), 1300.0);
        assert_eq!(path, t.suffix_path(q));
    }

    #[test]
    fn intra_group_remote_takes_short_arc() {
        let t = default_topo(1, 6);
        let path = t
            .path_for_tier(ServingTier::IntraGroupRemote, ProxyId::new(1, 5).into(), ProxyId::new(1, 1))
            .unwrap();
        // 5 -> 6 -> 1 clockwise
        assert_eq!(path.len(), 3);
        assert_eq!(path_delay_ms(t.table(), &path), 200.0 + 200.0 + 100.0);
        let opposite = t
            .path_for_tier(ServingTier::IntraGroupRemote, ProxyId::new(1, 4).into(), ProxyId::new(1, 1))
            .unwrap();
        assert_eq!(path_delay_ms(t.table(), &opposite), 700.0);
    }

    #[test]
    fn neighbor_group_path_through_trackers() {
        let t = default_topo(6, 6);
        let path = t
            .path_for_tier(ServingTier::NeighborGroup, ProxyId::new(2, 4).into(), ProxyId::new(1, 1))
            .unwrap();
        assert_eq!(
            kinds(&path),
            vec![
                LinkKind::TrackerProxy,
                LinkKind::TrackerTracker,
                LinkKind::TrackerProxy,
                LinkKind::ProxyClient
            ]
        );
        assert_eq!(path_delay_ms(t.table(), &path), 800.0);
        assert_eq!(path[0], t.tracker_proxy(ProxyId::new(2, 4)));
        assert_eq!(path[2], t.tracker_proxy(ProxyId::new(1, 1)));
    }

    #[test]
    fn tracker_sites() {
        let t = default_topo(3, 3);
        let q = ProxyId::new(1, 2);
        let local = t
            .path_for_tier(ServingTier::IntraGroupRemote, NodeRef::Tracker { group: 1 }, q)
            .unwrap();
        assert_eq!(kinds(&local), vec![LinkKind::TrackerProxy, LinkKind::ProxyClient]);
        let remote = t
            .path_for_tier(ServingTier::NeighborGroup, NodeRef::Tracker { group: 3 }, q)
            .unwrap();
        assert_eq!(
            kinds(&remote),
            vec![LinkKind::TrackerTracker, LinkKind::TrackerProxy, LinkKind::ProxyClient]
        );
    }

    #[test]
    fn inconsistent_tier_rejected() {
        let t = default_topo(2, 6);
        let q = ProxyId::new(1, 1);
        assert!(t.path_for_tier(ServingTier::CmsFetch, q.into(), q).is_err());
        assert!(t.path_for_tier(ServingTier::LocalHit, ProxyId::new(1, 2).into(), q).is_err());
        assert!(t
            .path_for_tier(ServingTier::NeighborProxy, ProxyId::new(1, 4).into(), q)
            .is_err());
        assert!(t
            .path_for_tier(ServingTier::NeighborGroup, ProxyId::new(1, 4).into(), q)
            .is_err());
        assert!(t.path_for_tier(ServingTier::LocalHit, NodeRef::Cms, ProxyId::new(3, 1)).is_err());
    }

    #[test]
    fn cost_examples() {
        let table = DelayCostTable::default();
        assert_eq!(path_cost(&table, &[], 42.0), 0.0);
        let t = default_topo(1, 1);
        let q = ProxyId::new(1, 1);
        assert_eq!(path_cost(&table, &t.suffix_path(q), 30.0), 390.0);
        let tt = default_topo(2, 1);
        let path = tt
            .path_for_tier(ServingTier::NeighborGroup, ProxyId::new(2, 1).into(), q)
            .unwrap();
        assert_eq!(path_delay_ms(&table, &path), 800.0);
    }

    #[test]
    fn link_ids_are_dense_and_invertible() {
        let t = default_topo(3, 4);
        for id in 0..t.link_count() {
            assert_eq!(t.link_id(t.link_at(id)), id);
        }
    }

    #[test]
    fn two_ring_shares_one_edge() {
        let t = default_topo(1, 2);
        let a = t
            .path_for_tier(ServingTier::NeighborProxy, ProxyId::new(1, 1).into(), ProxyId::new(1, 2))
            .unwrap();
        let b = t
            .path_for_tier(ServingTier::NeighborProxy, ProxyId::new(1, 2).into(), ProxyId::new(1, 1))
            .unwrap();
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn default_tier_delays_are_ordered() {
        let t = default_topo(6, 6);
        let table = t.table();
        let q = ProxyId::new(1, 1);
        let d = |tier, node| path_delay_ms(table, &t.path_for_tier(tier, node, q).unwrap());
        let local = d(ServingTier::LocalHit, q.into());
        let nbr = d(ServingTier::NeighborProxy, ProxyId::new(1, 2).into());
        let far = (3..=5)
            .map(|i| d(ServingTier::IntraGroupRemote, ProxyId::new(1, i).into()))
            .fold(f64::INFINITY, f64::min);
        let far_max = (3..=5)
            .map(|i| d(ServingTier::IntraGroupRemote, ProxyId::new(1, i).into()))
            .fold(0.0, f64::max);
        let group = d(ServingTier::NeighborGroup, ProxyId::new(2, 1).into());
        let cms = d(ServingTier::CmsFetch, NodeRef::Cms);
        assert!(local < nbr && nbr <= far && far_max < group && group < cms);
    }

    proptest! {
        #[test]
        fn ring_distance_symmetric_and_bounded(n in 1u32..50, a in 1u32..50, b in 1u32..50) {
            prop_assume!(a <= n && b <= n);
            let (h1, _) = ring_distance(n, a, b).unwrap();
            let (h2, _) = ring_distance(n, b, a).unwrap();
            prop_assert_eq!(h1, h2);
            prop_assert!(h1 <= n / 2);
            prop_assert_eq!(ring_walk(n, a, b).len() as u32, h1);
        }

        #[test]
        fn delay_monotone_under_extension(kinds in proptest::collection::vec(0usize..5, 0..12), extra in 0usize..5) {
            let table = DelayCostTable::default();
            let mut path: Path = kinds.iter().map(|&k| Link { kind: LinkKind::ALL[k], slot: 0 }).collect();
            let before = path_delay_ms(&table, &path);
            path.push(Link { kind: LinkKind::ALL[extra], slot: 0 });
            prop_assert!(path_delay_ms(&table, &path) >= before);
        }
    }
}
