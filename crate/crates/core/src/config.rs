//! Scenario configuration: TOML sections merged onto the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::DEFAULT_ALPHA;
use crate::engine::{DelayModel, EngineConfig, LinkCapacity, DEFAULT_LINK_CAPACITY};
use crate::error::{Error, Result};
use crate::placement::{PlacementMode, PlacementParams, Sizing};
use crate::topology::{DelayCostTable, PerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSection {
    pub n_videos: u32,
    /// Length of every video when `lengths` is absent.
    pub length_min: u32,
    /// Explicit per-rank lengths; overrides `n_videos` and `length_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<u32>>,
    pub alpha: f64,
    /// Requests per minute over the whole system.
    pub total_rate: f64,
}

impl Default for CatalogSection {
    fn default() -> Self {
        Self {
            n_videos: 1000,
            length_min: 60,
            lengths: None,
            alpha: DEFAULT_ALPHA,
            total_rate: 60.0,
        }
    }
}

impl CatalogSection {
    pub fn video_lengths(&self) -> Vec<u32> {
        match &self.lengths {
            Some(l) => l.clone(),
            None => vec![self.length_min; self.n_videos as usize],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub groups: u32,
    pub proxies: u32,
    pub delay_ms: PerKind<f64>,
    pub cost_per_min: PerKind<f64>,
    pub capacity: PerKind<LinkCapacity>,
}

impl Default for TopologySection {
    fn default() -> Self {
        let table = DelayCostTable::default();
        Self {
            groups: 6,
            proxies: 6,
            delay_ms: table.delay_ms,
            cost_per_min: table.cost_per_min,
            capacity: PerKind::uniform(LinkCapacity::Limited(DEFAULT_LINK_CAPACITY)),
        }
    }
}

impl TopologySection {
    pub fn table(&self) -> DelayCostTable {
        DelayCostTable {
            delay_ms: self.delay_ms,
            cost_per_min: self.cost_per_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSection {
    /// Per-proxy buffer B in video-minutes.
    pub buffer_min: u32,
    pub w_min: u32,
    pub w_max: u32,
    pub mode: PlacementMode,
    pub partitions: u32,
    pub tracker_cache: bool,
}

impl Default for PlacementSection {
    fn default() -> Self {
        Self {
            buffer_min: 180,
            w_min: 25,
            w_max: 60,
            mode: PlacementMode::Partitioned,
            partitions: 3,
            tracker_cache: false,
        }
    }
}

impl PlacementSection {
    pub fn params(&self) -> PlacementParams {
        PlacementParams {
            sizing: Sizing {
                b_minutes: self.buffer_min,
                w_min: self.w_min,
                w_max: self.w_max,
            },
            mode: self.mode,
            partitions: self.partitions,
            tracker_cache: self.tracker_cache,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub suffix_rate: f64,
    pub delay_model: DelayModel,
    pub bucket_min: f64,
    pub audit: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            suffix_rate: e.suffix_rate,
            delay_model: e.delay_model,
            bucket_min: e.bucket_min,
            audit: e.audit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub duration_min: f64,
    pub seed: u64,
    /// Relative request weight per proxy, group-major; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy_weights: Option<Vec<f64>>,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        Self {
            duration_min: 1000.0,
            seed: 1,
            proxy_weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Cooperative,
    SingleProxy,
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cooperative" => Ok(RunMode::Cooperative),
            "single_proxy" => Ok(RunMode::SingleProxy),
            _ => Err(Error::config(
                "run.mode",
                format!("expected cooperative or single_proxy, got {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: RunMode,
    pub repeat: u32,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: RunMode::Cooperative,
            repeat: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every input of one scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub catalog: CatalogSection,
    pub topology: TopologySection,
    pub placement: PlacementSection,
    pub engine: EngineSection,
    pub workload: WorkloadSection,
    pub run: RunSection,
}

/// Short names accepted by [`ScenarioConfig::set`].
const ALIASES: &[(&str, &str)] = &[
    ("J", "topology.groups"),
    ("M", "topology.proxies"),
    ("B", "placement.buffer_min"),
    ("N", "catalog.n_videos"),
    ("alpha", "catalog.alpha"),
    ("lambda", "catalog.total_rate"),
    ("seed", "workload.seed"),
    ("duration", "workload.duration_min"),
    ("mode", "run.mode"),
];

impl ScenarioConfig {
    /// Parses TOML text; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
            line: toml_line(text, e.span()),
            message: e.message().to_string(),
        })?;
        let mut merged = Self::default_table();
        check_keys(&user, &merged, "")?;
        merge(&mut merged, user);
        let cfg = Self::from_table(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies one `key=value` override. `key` is `section.field`, a unique
    /// bare field name, or an alias such as `J` or `lambda`.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (raw_key, raw_value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override {assignment:?} is not key=value")))?;
        let raw_key = raw_key.trim();
        let key = resolve_key(raw_key)?;
        let value = parse_value(raw_value.trim());

        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        let mut slot = &mut table;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            slot = match slot.get_mut(*part) {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(Error::config(raw_key, "unknown key")),
            };
        }
        let leaf = parts[parts.len() - 1];
        let optional = matches!(leaf, "lengths" | "proxy_weights");
        if !slot.contains_key(leaf) && !optional {
            return Err(Error::config(raw_key, "unknown key"));
        }
        let value = match (slot.get(leaf), value) {
            // integers are valid floats on the command line
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        slot.insert(leaf.to_string(), value);
        let cfg = Self::from_table(table).map_err(|e| match e {
            Error::Config { message, .. } => Error::config(raw_key, message),
            other => other,
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Config { key: k, message } if k == key => Error::config(raw_key, message),
            other => other,
        })?;
        *self = cfg;
        Ok(())
    }

    /// Range checks. Errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let c = &self.catalog;
        if c.lengths.is_none() && c.n_videos == 0 {
            return Err(Error::config("catalog.n_videos", "must be at least 1"));
        }
        if c.lengths.is_none() && c.length_min == 0 {
            return Err(Error::config("catalog.length_min", "must be positive"));
        }
        if let Some(l) = &c.lengths {
            if l.is_empty() {
                return Err(Error::config("catalog.lengths", "must not be empty"));
            }
            if let Some(i) = l.iter().position(|&s| s == 0) {
                return Err(Error::config("catalog.lengths", format!("entry {} is zero", i + 1)));
            }
        }
        if !(c.alpha.is_finite() && c.alpha >= 0.0) {
            return Err(Error::config("catalog.alpha", "must be finite and >= 0"));
        }
        if !(c.total_rate.is_finite() && c.total_rate > 0.0) {
            return Err(Error::config("catalog.total_rate", "must be positive"));
        }
        let t = &self.topology;
        if t.groups == 0 {
            return Err(Error::config("J", "topology.groups must be at least 1"));
        }
        if t.proxies == 0 {
            return Err(Error::config("M", "topology.proxies must be at least 1"));
        }
        t.table().validate()?;
        let p = &self.placement;
        if p.buffer_min == 0 {
            return Err(Error::config("placement.buffer_min", "must be positive"));
        }
        if p.w_min == 0 {
            return Err(Error::config("placement.w_min", "must be positive"));
        }
        if p.w_min > p.w_max {
            return Err(Error::config("placement.w_min", "must not exceed placement.w_max"));
        }
        if p.partitions == 0 {
            return Err(Error::config("placement.partitions", "must be at least 1"));
        }
        let e = &self.engine;
        if !(e.suffix_rate.is_finite() && e.suffix_rate > 0.0) {
            return Err(Error::config("engine.suffix_rate", "must be positive"));
        }
        if !(e.bucket_min.is_finite() && e.bucket_min > 0.0) {
            return Err(Error::config("engine.bucket_min", "must be positive"));
        }
        let w = &self.workload;
        if !(w.duration_min.is_finite() && w.duration_min >= 0.0) {
            return Err(Error::config("workload.duration_min", "must be finite and >= 0"));
        }
        if let Some(pw) = &w.proxy_weights {
            let want = (t.groups * t.proxies) as usize;
            if pw.len() != want {
                return Err(Error::config(
                    "workload.proxy_weights",
                    format!("expected {want} weights, got {}", pw.len()),
                ));
            }
            if pw.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || pw.iter().all(|&x| x == 0.0) {
                return Err(Error::config(
                    "workload.proxy_weights",
                    "weights must be finite, >= 0, and not all zero",
                ));
            }
        }
        if self.run.repeat == 0 {
            return Err(Error::config("run.repeat", "must be at least 1"));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            suffix_rate: self.engine.suffix_rate,
            delay_model: self.engine.delay_model,
            capacity: self.topology.capacity,
            bucket_min: self.engine.bucket_min,
            audit: self.engine.audit,
        }
    }

    fn default_table() -> toml::Table {
        toml::Table::try_from(Self::default()).expect("defaults serialize")
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))
    }
}

fn toml_line(text: &str, span: Option<std::ops::Range<usize>>) -> usize {
    span.map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

/// Rejects keys absent from the defaults, naming the full dotted key.
fn check_keys(user: &toml::Table, defaults: &toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in user {
        let full = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match defaults.get(k) {
            Some(toml::Value::Table(d)) => {
                if let toml::Value::Table(u) = v {
                    check_keys(u, d, &full)?;
                } else {
                    return Err(Error::config(full, "expected a table"));
                }
            }
            Some(_) => {}
            None if matches!(full.as_str(), "catalog.lengths" | "workload.proxy_weights") => {}
            None => return Err(Error::config(full, "unknown key")),
        }
    }
    Ok(())
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn resolve_key(raw: &str) -> Result<String> {
    if let Some((_, full)) = ALIASES.iter().find(|(a, _)| *a == raw) {
        return Ok((*full).to_string());
    }
    if raw.contains('.') {
        return Ok(raw.to_string());
    }
    let defaults = ScenarioConfig::default_table();
    let mut hits = Vec::new();
    for (section, v) in &defaults {
        if let toml::Value::Table(t) = v {
            if t.contains_key(raw) || matches!((section.as_str(), raw), ("catalog", "lengths") | ("workload", "proxy_weights")) {
                hits.push(format!("{section}.{raw}"));
            }
        }
    }
    match hits.len() {
        1 => Ok(hits.pop().expect("one hit")),
        0 => Err(Error::config(raw, "unknown key")),
        _ => Err(Error::config(raw, format!("ambiguous key; use one of {}", hits.join(", ")))),
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
