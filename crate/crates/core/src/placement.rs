//! Popularity-proportional prefix caching.
//!
//! Each group caches a prefix of W_i minutes of a video on exactly one of its
//! proxies. Prefix sizes follow the Zipf weights, clamped to `[w_min, w_max]`,
//! and are packed into the M proxy buffers of B minutes each with
//! first-fit-decreasing. The tracker keeps the resulting [`Directory`].

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, PopularityModel, VideoId};
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Where a prefix lives inside a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CacheSite {
    /// 1-based proxy ring position.
    Proxy(u32),
    Tracker,
}

/// Target prefix lengths W_i (minutes) for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixAllocation {
    /// Indexed by video index; 0 means uncached.
    pub prefix_min: Vec<u32>,
    /// Per-proxy buffer B in minutes.
    pub b_minutes: u32,
    /// Number of buffers the allocation was sized for.
    pub bins: u32,
}

impl PrefixAllocation {
    pub fn from_prefixes(prefix_min: Vec<u32>, b_minutes: u32, bins: u32) -> Self {
        Self {
            prefix_min,
            b_minutes,
            bins,
        }
    }

    pub fn capacity(&self) -> u64 {
        u64::from(self.b_minutes) * u64::from(self.bins)
    }

    pub fn total(&self) -> u64 {
        self.prefix_min.iter().map(|&w| u64::from(w)).sum()
    }

    pub fn prefix(&self, id: VideoId) -> u32 {
        self.prefix_min[id.index()]
    }

    /// Cached videos in rank order.
    pub fn cached(&self) -> impl Iterator<Item = (VideoId, u32)> + '_ {
        self.prefix_min
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0)
            .map(|(i, &w)| (VideoId(i as u32 + 1), w))
    }
}

/// Sizing inputs shared by every group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sizing {
    pub b_minutes: u32,
    pub w_min: u32,
    pub w_max: u32,
}

impl Sizing {
    fn validate(&self) -> Result<()> {
        if self.b_minutes == 0 {
            return Err(Error::config("placement.buffer_min", "must be positive"));
        }
        if self.w_min == 0 {
            return Err(Error::config("placement.w_min", "must be positive"));
        }
        if self.w_min > self.w_max {
            return Err(Error::config(
                "placement.w_min",
                format!("w_min {} exceeds w_max {}", self.w_min, self.w_max),
            ));
        }
        Ok(())
    }

    /// Clamp bounds for a video of length `s`: never above the video or one buffer.
    fn bounds(&self, s: u32) -> (u32, u32) {
        let hi = self.w_max.min(s).min(self.b_minutes);
        (self.w_min.min(hi), hi)
    }
}

/// Proportional prefix sizes for the whole catalog over `m_proxies` buffers.
pub fn allocate_prefixes(
    catalog: &Catalog,
    popularity: &PopularityModel,
    b_minutes: u32,
    m_proxies: u32,
    w_min: u32,
    w_max: u32,
) -> Result<PrefixAllocation> {
    let all: Vec<VideoId> = catalog.videos().iter().map(|v| v.id).collect();
    let sizing = Sizing {
        b_minutes,
        w_min,
        w_max,
    };
    allocate_subset(catalog, popularity, &all, m_proxies, sizing)
}

/// Proportional prefix sizes restricted to `candidates` (rank order).
///
/// The cached set is the largest popularity prefix of `candidates` whose
/// least popular member still earns at least `w_min` minutes from the
/// proportional split, so the lower clamp never inflates the tail.
pub fn allocate_subset(
    catalog: &Catalog,
    popularity: &PopularityModel,
    candidates: &[VideoId],
    bins: u32,
    sizing: Sizing,
) -> Result<PrefixAllocation> {
    sizing.validate()?;
    if bins == 0 {
        return Err(Error::config("topology.proxies", "no cache buffers to allocate into"));
    }
    let mut prefix_min = vec![0u32; catalog.len()];
    let capacity = u64::from(sizing.b_minutes) * u64::from(bins);
    let items: Vec<Item> = candidates
        .iter()
        .map(|&id| {
            let (lo, hi) = sizing.bounds(catalog.length_of(id));
            Item {
                id,
                p: popularity.probability(id),
                lo: f64::from(lo),
                hi: f64::from(hi),
            }
        })
        .collect();
    let Some(first) = items.first() else {
        return Ok(PrefixAllocation::from_prefixes(prefix_min, sizing.b_minutes, bins));
    };
    let first_min = sizing.w_min.min(catalog.length_of(first.id));
    if first_min > sizing.b_minutes {
        return Err(Error::config(
            "placement.buffer_min",
            format!(
                "buffer of {} min cannot cache {} at w_min {first_min}",
                sizing.b_minutes, first.id
            ),
        ));
    }

    let cap = capacity as f64;
    let fits = |k: usize| -> bool {
        let head = &items[..k];
        if head.iter().map(|it| it.lo).sum::<f64>() > cap {
            return false;
        }
        let (t, _) = solve_scale(head, cap);
        let tail = &head[k - 1];
        // relative slack absorbs bisection error
        t * tail.p >= tail.lo * (1.0 - 1e-9)
    };
    // `fits` is monotone: more items lower the scale and the tail weight.
    let (mut lo_k, mut hi_k) = (1usize, items.len());
    while lo_k < hi_k {
        let mid = (lo_k + hi_k).div_ceil(2);
        if fits(mid) {
            lo_k = mid;
        } else {
            hi_k = mid - 1;
        }
    }
    let head = &items[..lo_k];
    let (t, target) = solve_scale(head, cap);
    let real: Vec<f64> = head.iter().map(|it| (t * it.p).clamp(it.lo, it.hi)).collect();
    let rounded = round_to_total(head, &real, target.round() as u64);
    for (it, w) in head.iter().zip(rounded) {
        prefix_min[it.id.index()] = w;
    }
    Ok(PrefixAllocation::from_prefixes(prefix_min, sizing.b_minutes, bins))
}

#[derive(Debug, Clone, Copy)]
struct Item {
    id: VideoId,
    p: f64,
    lo: f64,
    hi: f64,
}

/// Finds `t` with `sum clamp(t p_i, lo_i, hi_i) = min(cap, sum hi_i)`.
fn solve_scale(items: &[Item], cap: f64) -> (f64, f64) {
    let ceiling: f64 = items.iter().map(|it| it.hi).sum();
    let target = cap.min(ceiling);
    let total = |t: f64| -> f64 { items.iter().map(|it| (t * it.p).clamp(it.lo, it.hi)).sum() };
    let mut lo = 0.0;
    let mut hi = items
        .iter()
        .map(|it| it.hi / it.p)
        .fold(0.0f64, f64::max);
    if total(hi) <= target {
        return (hi, target);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, target)
}

/// Largest-remainder rounding of `real` to integers summing to `total`,
/// staying inside each item's bounds. Ties favour the more popular video.
fn round_to_total(items: &[Item], real: &[f64], total: u64) -> Vec<u32> {
    let mut out: Vec<u32> = items
        .iter()
        .zip(real)
        .map(|(it, &x)| x.floor().clamp(it.lo, it.hi) as u32)
        .collect();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = real[a] - real[a].floor();
        let rb = real[b] - real[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut sum: u64 = out.iter().map(|&w| u64::from(w)).sum();
    while sum < total {
        let before = sum;
        for &i in &order {
            if sum == total {
                break;
            }
            if f64::from(out[i]) < items[i].hi {
                out[i] += 1;
                sum += 1;
            }
        }
        if sum == before {
            break;
        }
    }
    while sum > total {
        let before = sum;
        for &i in order.iter().rev() {
            if sum == total {
                break;
            }
            if f64::from(out[i]) > items[i].lo {
                out[i] -= 1;
                sum -= 1;
            }
        }
        if sum == before {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub site: CacheSite,
    pub w_minutes: u32,
}

/// A tracker's view of its group: which site holds which prefix.
///
/// Lookups are a direct index by video id.
#[derive(Debug, Clone, PartialEq)]
pub struct Directory {
    entries: Vec<Option<DirectoryEntry>>,
    site_videos: Vec<Vec<VideoId>>,
    loads: Vec<u32>,
    m_proxies: u32,
    tracker: bool,
    b_minutes: u32,
}

impl Directory {
    pub fn empty(n_videos: usize, m_proxies: u32, tracker: bool, b_minutes: u32) -> Self {
        let sites = m_proxies as usize + usize::from(tracker);
        Self {
            entries: vec![None; n_videos],
            site_videos: vec![Vec::new(); sites],
            loads: vec![0; sites],
            m_proxies,
            tracker,
            b_minutes,
        }
    }

    pub fn b_minutes(&self) -> u32 {
        self.b_minutes
    }

    pub fn m_proxies(&self) -> u32 {
        self.m_proxies
    }

    pub fn has_tracker_cache(&self) -> bool {
        self.tracker
    }

    pub fn n_videos(&self) -> usize {
        self.entries.len()
    }

    /// Sites in bin order: proxies 1..=M, then the tracker if enabled.
    pub fn sites(&self) -> Vec<CacheSite> {
        let mut s: Vec<CacheSite> = (1..=self.m_proxies).map(CacheSite::Proxy).collect();
        if self.tracker {
            s.push(CacheSite::Tracker);
        }
        s
    }

    fn slot(&self, site: CacheSite) -> Option<usize> {
        match site {
            CacheSite::Proxy(q) if (1..=self.m_proxies).contains(&q) => Some(q as usize - 1),
            CacheSite::Tracker if self.tracker => Some(self.m_proxies as usize),
            _ => None,
        }
    }

    /// Constant-time lookup; `None` when the group does not cache the video.
    pub fn lookup(&self, id: VideoId) -> Result<Option<DirectoryEntry>> {
        if id.0 == 0 || id.index() >= self.entries.len() {
            return Err(Error::invalid(format!("unknown video id {}", id.0)));
        }
        Ok(self.entries[id.index()])
    }

    /// Unchecked variant of [`Directory::lookup`] for validated ids.
    pub(crate) fn get(&self, id: VideoId) -> Option<DirectoryEntry> {
        self.entries[id.index()]
    }

    pub fn videos_on(&self, site: CacheSite) -> &[VideoId] {
        self.slot(site).map_or(&[], |s| &self.site_videos[s])
    }

    pub fn load(&self, site: CacheSite) -> u32 {
        self.slot(site).map_or(0, |s| self.loads[s])
    }

    pub fn total_cached(&self) -> u64 {
        self.loads.iter().map(|&l| u64::from(l)).sum()
    }

    pub fn cached_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// Cached prefixes in rank order.
    pub fn entries(&self) -> impl Iterator<Item = (VideoId, DirectoryEntry)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|e| (VideoId(i as u32 + 1), e)))
    }

    fn gap(&self, slot: usize) -> u32 {
        self.b_minutes - self.loads[slot]
    }

    /// Records `w` minutes of `id` on `site`.
    pub fn insert(&mut self, id: VideoId, site: CacheSite, w: u32) -> Result<()> {
        let slot = self
            .slot(site)
            .ok_or_else(|| Error::invalid(format!("no cache site {site:?} in this group")))?;
        if id.0 == 0 || id.index() >= self.entries.len() {
            return Err(Error::invalid(format!("unknown video id {}", id.0)));
        }
        if self.entries[id.index()].is_some() {
            return Err(Error::invalid(format!("{id} is already cached in this group")));
        }
        if w == 0 {
            return Err(Error::invalid(format!("{id}: cached prefix must be positive")));
        }
        if w > self.gap(slot) {
            return Err(Error::config(
                "placement.buffer_min",
                format!("{id} ({w} min) overflows {site:?} (free {} min)", self.gap(slot)),
            ));
        }
        self.entries[id.index()] = Some(DirectoryEntry { site, w_minutes: w });
        self.site_videos[slot].push(id);
        self.loads[slot] += w;
        Ok(())
    }

    fn grow(&mut self, id: VideoId, by: u32) {
        let e = self.entries[id.index()].as_mut().expect("cached");
        e.w_minutes += by;
        let slot = match e.site {
            CacheSite::Proxy(q) => q as usize - 1,
            CacheSite::Tracker => self.m_proxies as usize,
        };
        self.loads[slot] += by;
    }

    fn remove(&mut self, id: VideoId) -> DirectoryEntry {
        let e = self.entries[id.index()].take().expect("cached");
        let slot = self.slot(e.site).expect("valid site");
        self.site_videos[slot].retain(|&v| v != id);
        self.loads[slot] -= e.w_minutes;
        e
    }

    /// Slot with the most free space; lowest index wins ties.
    fn widest_gap(&self) -> (usize, u32) {
        (0..self.loads.len())
            .map(|s| (s, self.gap(s)))
            .fold((0, 0), |best, cur| if cur.1 > best.1 { cur } else { best })
    }

    fn site_of_slot(&self, slot: usize) -> CacheSite {
        if slot < self.m_proxies as usize {
            CacheSite::Proxy(slot as u32 + 1)
        } else {
            CacheSite::Tracker
        }
    }
}

/// Result of packing an allocation into a group's buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub directory: Directory,
    /// Allocated videos that fit in no buffer, in rank order. They stay uncached.
    pub unplaced: Vec<VideoId>,
}

/// First-fit-decreasing packing of the allocation into M proxy buffers.
pub fn assign_to_proxies(allocation: &PrefixAllocation, m_proxies: u32) -> Result<Assignment> {
    assign_to_sites(allocation, m_proxies, false)
}

/// Like [`assign_to_proxies`], optionally with the tracker as an extra last bin.
pub fn assign_to_sites(
    allocation: &PrefixAllocation,
    m_proxies: u32,
    tracker: bool,
) -> Result<Assignment> {
    if m_proxies == 0 {
        return Err(Error::invalid("assign_to_proxies: no proxies"));
    }
    let b = allocation.b_minutes;
    let mut dir = Directory::empty(allocation.prefix_min.len(), m_proxies, tracker, b);
    let mut items: Vec<(VideoId, u32)> = allocation.cached().collect();
    if let Some(&(id, w)) = items.iter().find(|(_, w)| *w > b) {
        return Err(Error::config(
            "placement.buffer_min",
            format!("{id} prefix of {w} min exceeds the {b} min proxy buffer"),
        ));
    }
    // longest first; equal lengths in rank order
    items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut unplaced = Vec::new();
    for (id, w) in items {
        match (0..dir.loads.len()).find(|&s| dir.gap(s) >= w) {
            Some(slot) => {
                let site = dir.site_of_slot(slot);
                dir.insert(id, site, w)?;
            }
            None => unplaced.push(id),
        }
    }
    unplaced.sort();
    Ok(Assignment {
        directory: dir,
        unplaced,
    })
}

/// Closes leftover buffer space after packing.
///
/// In order: unplaced videos are trimmed into the widest gap when it still
/// holds `w_min`; cached prefixes grow toward their upper clamp; further
/// candidates (rank order) are added at most as long as the last added
/// prefix. A final pass fills gaps narrower than `w_min` with short prefixes.
pub fn fill_gaps(
    assignment: Assignment,
    catalog: &Catalog,
    candidates: &[VideoId],
    sizing: Sizing,
) -> Result<Directory> {
    let Assignment {
        directory: mut dir,
        unplaced,
    } = assignment;
    // newcomers never exceed the shortest prefix already packed
    let mut last_added = dir
        .entries()
        .map(|(_, e)| e.w_minutes)
        .min()
        .unwrap_or(u32::MAX);

    for id in unplaced {
        let (lo, _) = sizing.bounds(catalog.length_of(id));
        let (slot, gap) = dir.widest_gap();
        if gap >= lo && gap > 0 {
            let w = gap;
            let site = dir.site_of_slot(slot);
            dir.insert(id, site, w)?;
            last_added = last_added.min(w);
        }
    }

    grow_in_place(&mut dir, catalog, sizing);

    // cursor into `candidates`; entries already cached are skipped
    let mut cursor = 0;
    let next_uncached = |dir: &Directory, cursor: &mut usize| {
        while let Some(&id) = candidates.get(*cursor) {
            *cursor += 1;
            if dir.get(id).is_none() {
                return Some(id);
            }
        }
        None
    };
    let mut pending = None;
    loop {
        let (slot, gap) = dir.widest_gap();
        if gap == 0 {
            break;
        }
        let Some(id) = pending.take().or_else(|| next_uncached(&dir, &mut cursor)) else {
            break;
        };
        let (lo, hi) = sizing.bounds(catalog.length_of(id));
        if gap < lo {
            pending = Some(id);
            break;
        }
        let w = hi.min(gap).min(last_added);
        let site = dir.site_of_slot(slot);
        dir.insert(id, site, w)?;
        last_added = w;
    }

    grow_in_place(&mut dir, catalog, sizing);

    // Gaps left here are narrower than w_min and every prefix already sits at its ceiling.
    loop {
        let (slot, gap) = dir.widest_gap();
        if gap == 0 {
            break;
        }
        let Some(id) = pending.take().or_else(|| next_uncached(&dir, &mut cursor)) else {
            break;
        };
        let (_, hi) = sizing.bounds(catalog.length_of(id));
        let w = hi.min(gap);
        let site = dir.site_of_slot(slot);
        dir.insert(id, site, w)?;
    }

    rebalance(&mut dir, catalog, sizing)?;
    Ok(dir)
}

/// Moves prefixes into gaps the candidate list could not close.
///
/// A prefix leaves its site only when the remaining prefixes there can grow
/// by as much as it held, so every move raises the cached total. Least
/// popular prefixes move first.
fn rebalance(dir: &mut Directory, catalog: &Catalog, sizing: Sizing) -> Result<()> {
    let hi = |id: VideoId| sizing.bounds(catalog.length_of(id)).1;
    loop {
        let (to, gap) = dir.widest_gap();
        if gap == 0 {
            return Ok(());
        }
        let slack = |dir: &Directory, slot: usize| -> u32 {
            dir.site_videos[slot]
                .iter()
                .map(|&v| hi(v) - dir.get(v).expect("cached").w_minutes)
                .sum()
        };
        let mover = dir
            .entries()
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .find(|&(id, e)| {
                let from = dir.slot(e.site).expect("valid site");
                from != to && slack(dir, from) - (hi(id) - e.w_minutes) >= e.w_minutes
            });
        let Some((id, e)) = mover else {
            return Ok(());
        };
        let from = dir.slot(e.site).expect("valid site");
        dir.remove(id);
        dir.insert(id, dir.site_of_slot(to), hi(id).min(gap))?;
        grow_slot(dir, from, catalog, sizing);
    }
}

fn grow_in_place(dir: &mut Directory, catalog: &Catalog, sizing: Sizing) {
    for slot in 0..dir.loads.len() {
        grow_slot(dir, slot, catalog, sizing);
    }
}

/// Grows the prefixes of one site toward their ceilings, most popular first.
fn grow_slot(dir: &mut Directory, slot: usize, catalog: &Catalog, sizing: Sizing) {
    let mut ids = dir.site_videos[slot].clone();
    ids.sort();
    for id in ids {
        let gap = dir.gap(slot);
        if gap == 0 {
            break;
        }
        let (_, hi) = sizing.bounds(catalog.length_of(id));
        let w = dir.get(id).expect("cached").w_minutes;
        if w < hi {
            dir.grow(id, (hi - w).min(gap));
        }
    }
}

/// How the cached set is spread over the group ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// Every group caches the same videos.
    Identical,
    /// The catalog is dealt round-robin into `partitions` disjoint subsets;
    /// group g caches subset `(g - 1) mod partitions`.
    Partitioned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementParams {
    pub sizing: Sizing,
    pub mode: PlacementMode,
    /// Subset count for [`PlacementMode::Partitioned`].
    pub partitions: u32,
    pub tracker_cache: bool,
}

/// Per-group directories for the cooperative architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    groups: Vec<Directory>,
}

impl Placement {
    pub fn from_groups(groups: Vec<Directory>) -> Self {
        Self { groups }
    }

    /// Directory of 1-based `group`.
    pub fn group(&self, group: u32) -> &Directory {
        &self.groups[group as usize - 1]
    }

    pub fn groups(&self) -> &[Directory] {
        &self.groups
    }

    /// Minutes cached in each group.
    pub fn utilization(&self) -> Vec<u64> {
        self.groups.iter().map(Directory::total_cached).collect()
    }

    /// Writes `group,proxy,video_id,w_minutes` rows; proxy 0 is the tracker.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let (b, tracker) = self
            .groups
            .first()
            .map_or((0, false), |d| (d.b_minutes, d.tracker));
        let _ = writeln!(out, "# b_minutes={b} tracker_cache={tracker}");
        out.push_str("group,proxy,video_id,w_minutes\n");
        for (g, dir) in self.groups.iter().enumerate() {
            for site in dir.sites() {
                let proxy = match site {
                    CacheSite::Proxy(q) => q,
                    CacheSite::Tracker => 0,
                };
                for &id in dir.videos_on(site) {
                    let w = dir.get(id).expect("listed").w_minutes;
                    let _ = writeln!(out, "{},{},{},{}", g + 1, proxy, id.0, w);
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, catalog: &Catalog, topology: &Topology) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, catalog, topology)
    }

    /// Parses the [`Placement::dump`] format, re-checking every placement invariant.
    pub fn parse(text: &str, catalog: &Catalog, topology: &Topology) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut b_minutes = None;
        let mut tracker = false;
        let mut groups: Option<Vec<Directory>> = None;
        let perr = |line: usize, message: String| Error::Parse {
            line: line + 1,
            message,
        };
        for (n, raw) in lines.by_ref() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("b_minutes", v)) => {
                            b_minutes = Some(v.parse::<u32>().map_err(|e| perr(n, e.to_string()))?)
                        }
                        Some(("tracker_cache", v)) => {
                            tracker = v.parse::<bool>().map_err(|e| perr(n, e.to_string()))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line == "group,proxy,video_id,w_minutes" {
                continue;
            }
            let dirs = groups.get_or_insert_with(|| {
                let b = b_minutes.unwrap_or(u32::MAX);
                (0..topology.groups())
                    .map(|_| Directory::empty(catalog.len(), topology.proxies_per_group(), tracker, b))
                    .collect()
            });
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(perr(n, format!("expected 4 fields, found {}", fields.len())));
            }
            let num = |i: usize| -> Result<u32> {
                fields[i]
                    .parse::<u32>()
                    .map_err(|e| perr(n, format!("field {}: {e}", i + 1)))
            };
            let (g, q, v, w) = (num(0)?, num(1)?, num(2)?, num(3)?);
            if g == 0 || g > topology.groups() {
                return Err(perr(n, format!("group {g} out of range")));
            }
            let id = VideoId(v);
            if !catalog.contains(id) {
                return Err(perr(n, format!("unknown video {v}")));
            }
            if w > catalog.length_of(id) {
                return Err(perr(n, format!("{id}: prefix {w} exceeds video length")));
            }
            let site = if q == 0 {
                CacheSite::Tracker
            } else {
                CacheSite::Proxy(q)
            };
            dirs[g as usize - 1]
                .insert(id, site, w)
                .map_err(|e| perr(n, e.to_string()))?;
        }
        let groups = groups.unwrap_or_else(|| {
            let b = b_minutes.unwrap_or(0);
            (0..topology.groups())
                .map(|_| Directory::empty(catalog.len(), topology.proxies_per_group(), tracker, b))
                .collect()
        });
        Ok(Self { groups })
    }
}

/// Builds one group's directory from a candidate list: allocate, pack, fill.
pub fn place_group(
    catalog: &Catalog,
    popularity: &PopularityModel,
    candidates: &[VideoId],
    m_proxies: u32,
    tracker_cache: bool,
    sizing: Sizing,
) -> Result<Directory> {
    let bins = m_proxies + u32::from(tracker_cache);
    let allocation = allocate_subset(catalog, popularity, candidates, bins, sizing)?;
    let assignment = assign_to_sites(&allocation, m_proxies, tracker_cache)?;
    fill_gaps(assignment, catalog, candidates, sizing)
}

/// Cooperative placement for every group of the topology.
pub fn build_placement(
    catalog: &Catalog,
    popularity: &PopularityModel,
    topology: &Topology,
    params: &PlacementParams,
) -> Result<Placement> {
    let partitions = match params.mode {
        PlacementMode::Identical => 1,
        PlacementMode::Partitioned => {
            if params.partitions == 0 {
                return Err(Error::config("placement.partitions", "must be at least 1"));
            }
            params.partitions.min(topology.groups())
        }
    };
    let per_partition = (0..partitions)
        .map(|c| {
            let candidates: Vec<VideoId> = catalog
                .videos()
                .iter()
                .map(|v| v.id)
                .filter(|id| (id.0 - 1) % partitions == c)
                .collect();
            if candidates.is_empty() {
                return Ok(Directory::empty(
                    catalog.len(),
                    topology.proxies_per_group(),
                    params.tracker_cache,
                    params.sizing.b_minutes,
                ));
            }
            place_group(
                catalog,
                popularity,
                &candidates,
                topology.proxies_per_group(),
                params.tracker_cache,
                params.sizing,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let groups = (0..topology.groups())
        .map(|g| per_partition[(g % partitions) as usize].clone())
        .collect();
    Ok(Placement { groups })
}

/// Stand-alone proxy cache for the single-proxy baseline: one buffer of B
/// minutes filled from the whole catalog.
pub fn build_single_proxy(
    catalog: &Catalog,
    popularity: &PopularityModel,
    sizing: Sizing,
) -> Result<Directory> {
    let all: Vec<VideoId> = catalog.videos().iter().map(|v| v.id).collect();
    place_group(catalog, popularity, &all, 1, false, sizing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::build_catalog;
    use crate::topology::{build_topology, DelayCostTable};

    fn world(lengths: &[u32], alpha: f64) -> (Catalog, PopularityModel) {
        build_catalog(lengths, alpha, 1.0).unwrap()
    }

    #[test]
    fn proportional_split_of_two() {
        let (cat, pop) = world(&[1000, 1000], 1.0);
        let a = allocate_prefixes(&cat, &pop, 90, 1, 1, 1000).unwrap();
        assert_eq!(a.prefix_min, vec![60, 30]);
    }

    #[test]
    fn single_video_takes_all_capacity() {
        let (cat, pop) = world(&[60], 0.986);
        let a = allocate_prefixes(&cat, &pop, 10, 1, 5, 60).unwrap();
        assert_eq!(a.prefix_min, vec![10]);
    }

    #[test]
    fn default_clamps_hold() {
        let (cat, pop) = world(&vec![60; 1000], 0.986);
        let a = allocate_prefixes(&cat, &pop, 180, 6, 25, 60).unwrap();
        let cached: Vec<u32> = a.cached().map(|(_, w)| w).collect();
        assert!(!cached.is_empty());
        assert!(cached.iter().all(|&w| (25..=60).contains(&w)), "{cached:?}");
        assert_eq!(cached[0], 60);
        assert_eq!(a.total(), 6 * 180);
        assert!(cached.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn capacity_below_w_min_is_config_error() {
        let (cat, pop) = world(&[60, 60], 1.0);
        let err = allocate_prefixes(&cat, &pop, 10, 1, 25, 60).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }

    #[test]
    fn w_min_above_w_max_rejected() {
        let (cat, pop) = world(&[60], 1.0);
        assert!(allocate_prefixes(&cat, &pop, 100, 1, 30, 20).is_err());
    }

    #[test]
    fn ffd_hand_example() {
        let alloc = PrefixAllocation::from_prefixes(vec![60, 30, 30], 60, 2);
        let a = assign_to_proxies(&alloc, 2).unwrap();
        let d = &a.directory;
        assert_eq!(d.videos_on(CacheSite::Proxy(1)), &[VideoId(1)]);
        assert_eq!(d.videos_on(CacheSite::Proxy(2)), &[VideoId(2), VideoId(3)]);
        assert!(a.unplaced.is_empty());
    }

    #[test]
    fn single_item_goes_to_first_proxy() {
        let alloc = PrefixAllocation::from_prefixes(vec![20], 60, 3);
        let a = assign_to_proxies(&alloc, 3).unwrap();
        assert_eq!(a.directory.videos_on(CacheSite::Proxy(1)), &[VideoId(1)]);
        assert!(a.directory.videos_on(CacheSite::Proxy(2)).is_empty());
    }

    #[test]
    fn overflow_reported_as_uncached() {
        let alloc = PrefixAllocation::from_prefixes(vec![50, 50], 60, 1);
        let a = assign_to_proxies(&alloc, 1).unwrap();
        assert_eq!(a.unplaced, vec![VideoId(2)]);
        assert_eq!(a.directory.lookup(VideoId(2)).unwrap(), None);
    }

    #[test]
    fn prefix_larger_than_buffer_is_error() {
        let alloc = PrefixAllocation::from_prefixes(vec![70], 60, 1);
        assert!(matches!(assign_to_proxies(&alloc, 1), Err(Error::Config { .. })));
    }

    #[test]
    fn lookup_examples() {
        let mut d = Directory::empty(100, 3, false, 120);
        d.insert(VideoId(3), CacheSite::Proxy(2), 40).unwrap();
        assert_eq!(
            d.lookup(VideoId(3)).unwrap(),
            Some(DirectoryEntry {
                site: CacheSite::Proxy(2),
                w_minutes: 40
            })
        );
        assert_eq!(d.lookup(VideoId(99)).unwrap(), None);
        assert!(d.lookup(VideoId(101)).is_err());
        assert!(d.lookup(VideoId(0)).is_err());
    }

    #[test]
    fn duplicate_insert_rejected() {
        let mut d = Directory::empty(5, 2, false, 100);
        d.insert(VideoId(1), CacheSite::Proxy(1), 10).unwrap();
        assert!(d.insert(VideoId(1), CacheSite::Proxy(2), 10).is_err());
        assert!(d.insert(VideoId(2), CacheSite::Tracker, 10).is_err());
    }

    #[test]
    fn lookup_agrees_with_inverse_map() {
        let (cat, pop) = world(&vec![90; 300], 0.8);
        let alloc = allocate_prefixes(&cat, &pop, 150, 5, 10, 70).unwrap();
        let a = assign_to_proxies(&alloc, 5).unwrap();
        let d = &a.directory;
        for v in cat.videos() {
            let found = d.lookup(v.id).unwrap();
            let holders: Vec<CacheSite> = d
                .sites()
                .into_iter()
                .filter(|&s| d.videos_on(s).contains(&v.id))
                .collect();
            match found {
                Some(e) => {
                    assert_eq!(holders, vec![e.site]);
                    assert_eq!(e.w_minutes, alloc.prefix(v.id));
                }
                None => assert!(holders.is_empty()),
            }
        }
        let packed: u64 = d.sites().iter().map(|&s| u64::from(d.load(s))).sum();
        let unplaced: u64 = a.unplaced.iter().map(|&id| u64::from(alloc.prefix(id))).sum();
        assert_eq!(packed + unplaced, alloc.total());
    }

    #[test]
    fn fill_closes_fragmentation() {
        // w_min = w_max forces equal items that cannot tile a 100-minute buffer
        let (cat, pop) = world(&[60; 50], 1.0);
        let sizing = Sizing {
            b_minutes: 100,
            w_min: 30,
            w_max: 60,
        };
        let all: Vec<VideoId> = cat.videos().iter().map(|v| v.id).collect();
        let d = place_group(&cat, &pop, &all, 4, false, sizing).unwrap();
        assert_eq!(d.total_cached(), 400);
        for s in d.sites() {
            assert!(d.load(s) <= 100);
        }
    }

    #[test]
    fn partitioned_groups_differ_from_neighbours() {
        let (cat, pop) = world(&vec![60; 500], 0.986);
        let topo = build_topology(6, 6, DelayCostTable::default()).unwrap();
        let params = PlacementParams {
            sizing: Sizing {
                b_minutes: 180,
                w_min: 25,
                w_max: 60,
            },
            mode: PlacementMode::Partitioned,
            partitions: 3,
            tracker_cache: false,
        };
        let p = build_placement(&cat, &pop, &topo, &params).unwrap();
        for g in 1..=6u32 {
            let right = g % 6 + 1;
            for (id, _) in p.group(g).entries() {
                assert!(p.group(right).get(id).is_none());
            }
        }
        assert_eq!(p.group(1), p.group(4));
        assert!(p.group(1).get(VideoId(1)).is_some());
        assert!(p.group(2).get(VideoId(2)).is_some());
    }

    #[test]
    fn identical_mode_replicates() {
        let (cat, pop) = world(&vec![60; 100], 0.986);
        let topo = build_topology(3, 4, DelayCostTable::default()).unwrap();
        let params = PlacementParams {
            sizing: Sizing {
                b_minutes: 120,
                w_min: 25,
                w_max: 60,
            },
            mode: PlacementMode::Identical,
            partitions: 3,
            tracker_cache: true,
        };
        let p = build_placement(&cat, &pop, &topo, &params).unwrap();
        assert_eq!(p.group(1), p.group(3));
        assert!(p.group(1).load(CacheSite::Tracker) > 0);
        assert_eq!(p.group(1).total_cached(), 5 * 120);
    }

    #[test]
    fn dump_parse_round_trip() {
        let (cat, pop) = world(&vec![60; 200], 0.986);
        let topo = build_topology(3, 3, DelayCostTable::default()).unwrap();
        let params = PlacementParams {
            sizing: Sizing {
                b_minutes: 100,
                w_min: 20,
                w_max: 60,
            },
            mode: PlacementMode::Partitioned,
            partitions: 3,
            tracker_cache: true,
        };
        let p = build_placement(&cat, &pop, &topo, &params).unwrap();
        let back = Placement::parse(&p.dump(), &cat, &topo).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn parse_rejects_duplicates_and_overflow() {
        let (cat, _) = world(&[60; 10], 1.0);
        let topo = build_topology(2, 2, DelayCostTable::default()).unwrap();
        let dup = "# b_minutes=100 tracker_cache=false\ngroup,proxy,video_id,w_minutes\n1,1,3,20\n1,2,3,20\n";
        let err = Placement::parse(dup, &cat, &topo).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let over = "# b_minutes=30\n1,1,1,20\n1,1,2,20\n";
        assert!(matches!(
            Placement::parse(over, &cat, &topo),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(Placement::parse("1,1,11,5\n", &cat, &topo).is_err());
        assert!(Placement::parse("3,1,1,5\n", &cat, &topo).is_err());
    }

    #[test]
    fn single_proxy_cache_fills_one_buffer() {
        let (cat, pop) = world(&vec![60; 1000], 0.986);
        let d = build_single_proxy(
            &cat,
            &pop,
            Sizing {
                b_minutes: 180,
                w_min: 25,
                w_max: 60,
            },
        )
        .unwrap();
        assert_eq!(d.total_cached(), 180);
        assert!(d.get(VideoId(1)).is_some());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_sizing() -> impl Strategy<Value = Sizing> {
            (1u32..40, 0u32..60, 20u32..300).prop_map(|(w_min, extra, b)| Sizing {
                b_minutes: b.max(w_min),
                w_min,
                w_max: w_min + extra,
            })
        }

        proptest! {
            #[test]
            fn allocation_invariants(
                n in 1usize..300,
                alpha in 0.0f64..1.6,
                m in 1u32..8,
                length in 10u32..120,
                sizing in arb_sizing(),
            ) {
                let (cat, pop) = build_catalog(&vec![length; n], alpha, 1.0).unwrap();
                let a = allocate_prefixes(&cat, &pop, sizing.b_minutes, m, sizing.w_min, sizing.w_max).unwrap();
                prop_assert!(a.total() <= a.capacity());
                let mut seen_zero = false;
                for (i, &w) in a.prefix_min.iter().enumerate() {
                    prop_assert!(w <= length && w <= sizing.b_minutes);
                    // cached videos form a rank prefix
                    if w == 0 { seen_zero = true } else { prop_assert!(!seen_zero, "gap before v{}", i + 1) }
                }
                prop_assert!(a.prefix_min.windows(2).all(|p| p[0] >= p[1]));
            }

            #[test]
            fn packed_directory_invariants(
                lengths in proptest::collection::vec(10u32..150, 1..200),
                alpha in 0.0f64..1.6,
                m in 1u32..8,
                tracker in any::<bool>(),
                sizing in arb_sizing(),
            ) {
                let (cat, pop) = build_catalog(&lengths, alpha, 1.0).unwrap();
                let all: Vec<VideoId> = cat.videos().iter().map(|v| v.id).collect();
                let Ok(dir) = place_group(&cat, &pop, &all, m, tracker, sizing) else {
                    // only a buffer narrower than the first prefix may refuse
                    prop_assert!(sizing.w_min.min(lengths[0]) > sizing.b_minutes);
                    return Ok(());
                };
                let mut total = 0u64;
                let mut seen = vec![false; lengths.len()];
                for site in dir.sites() {
                    prop_assert!(dir.load(site) <= sizing.b_minutes);
                    let mut load = 0;
                    for &id in dir.videos_on(site) {
                        prop_assert!(!seen[id.index()]);
                        seen[id.index()] = true;
                        let e = dir.lookup(id).unwrap().unwrap();
                        prop_assert_eq!(e.site, site);
                        prop_assert!(e.w_minutes > 0 && e.w_minutes <= lengths[id.index()]);
                        load += e.w_minutes;
                    }
                    prop_assert_eq!(load, dir.load(site));
                    total += u64::from(load);
                }
                prop_assert_eq!(total, dir.total_cached());
                prop_assert_eq!(seen.iter().filter(|&&x| x).count(), dir.cached_count());
                let bins = u64::from(m + u32::from(tracker));
                prop_assert!(total <= bins * u64::from(sizing.b_minutes));
            }
        }
    }
}
