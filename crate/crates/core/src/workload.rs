//! Poisson request traces and their CSV file format.
//!
//! A trace file is one `#` header line carrying the generation parameters,
//! a column line, then one `time_min,group,proxy,video` row per request.
//! Times are written with 17 significant digits so they reload bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::catalog::{PopularityModel, VideoId};
use crate::error::{Error, Result};
use crate::topology::{ProxyId, Topology};

const HEADER_TAG: &str = "coopvod-trace";
const COLUMNS: &str = "time_min,group,proxy,video";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub arrival_time_min: f64,
    pub proxy: ProxyId,
    pub video: VideoId,
}

/// Parameters a trace was generated with.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceParams {
    pub seed: u64,
    pub total_rate: f64,
    pub duration_min: f64,
    pub n_videos: u32,
    pub alpha: f64,
    pub groups: u32,
    pub proxies: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub params: TraceParams,
    /// Non-decreasing in arrival time.
    pub requests: Vec<Request>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

/// Generates a trace with clients attached uniformly across all proxies.
pub fn generate_trace(
    popularity: &PopularityModel,
    topology: &Topology,
    total_rate: f64,
    duration_min: f64,
    seed: u64,
) -> Result<Trace> {
    generate_trace_weighted(popularity, topology, total_rate, duration_min, seed, None)
}

/// Like [`generate_trace`], with an optional relative request weight per proxy
/// (in [`Topology::proxies`] order).
pub fn generate_trace_weighted(
    popularity: &PopularityModel,
    topology: &Topology,
    total_rate: f64,
    duration_min: f64,
    seed: u64,
    proxy_weights: Option<&[f64]>,
) -> Result<Trace> {
    if !(total_rate.is_finite() && total_rate > 0.0) {
        return Err(Error::invalid(format!("request rate must be positive, got {total_rate}")));
    }
    if !(duration_min.is_finite() && duration_min >= 0.0) {
        return Err(Error::invalid(format!(
            "duration must be finite and >= 0, got {duration_min}"
        )));
    }
    let n_proxies = topology.proxy_count() as usize;
    if n_proxies == 0 {
        return Err(Error::invalid("trace needs at least one proxy"));
    }
    let params = TraceParams {
        seed,
        total_rate,
        duration_min,
        n_videos: popularity.weights.len() as u32,
        alpha: popularity.alpha,
        groups: topology.groups(),
        proxies: topology.proxies_per_group(),
    };
    let proxy_pick = match proxy_weights {
        Some(w) => {
            if w.len() != n_proxies {
                return Err(Error::config(
                    "workload.proxy_weights",
                    format!("expected {n_proxies} weights, got {}", w.len()),
                ));
            }
            Some(
                WeightedIndex::new(w)
                    .map_err(|e| Error::config("workload.proxy_weights", e.to_string()))?,
            )
        }
        None => None,
    };
    let video_pick = WeightedIndex::new(&popularity.weights)
        .map_err(|e| Error::invalid(format!("popularity weights: {e}")))?;
    let gap = Exp::new(total_rate).map_err(|e| Error::invalid(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut requests = Vec::with_capacity((total_rate * duration_min * 1.05) as usize + 16);
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= duration_min {
            break;
        }
        let video = VideoId(video_pick.sample(&mut rng) as u32 + 1);
        let ordinal = match &proxy_pick {
            Some(p) => p.sample(&mut rng),
            None => rng.random_range(0..n_proxies),
        };
        requests.push(Request {
            arrival_time_min: t,
            proxy: topology.proxy_at(ordinal),
            video,
        });
    }
    Ok(Trace { params, requests })
}

/// Serializes a trace to its text format.
pub fn format_trace(trace: &Trace) -> String {
    let p = &trace.params;
    let mut out = String::with_capacity(64 + trace.len() * 40);
    let _ = writeln!(
        out,
        "# {HEADER_TAG} seed={} total_rate={:?} duration_min={:?} n_videos={} alpha={:?} groups={} proxies={}",
        p.seed, p.total_rate, p.duration_min, p.n_videos, p.alpha, p.groups, p.proxies
    );
    out.push_str(COLUMNS);
    out.push('\n');
    for r in &trace.requests {
        let _ = writeln!(
            out,
            "{:.16e},{},{},{}",
            r.arrival_time_min, r.proxy.group, r.proxy.index, r.video.0
        );
    }
    out
}

pub fn save_trace(trace: &Trace, path: &Path) -> Result<()> {
    std::fs::write(path, format_trace(trace)).map_err(|e| Error::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<Trace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text)
}

#[derive(Debug, Deserialize)]
struct Row {
    time_min: f64,
    group: u32,
    proxy: u32,
    video: u32,
}

/// Parses the trace text format. Errors carry 1-based line numbers.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let params = parse_header(first.trim_end_matches('\r'))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(rest.as_bytes());
    let columns = reader.headers().map_err(|e| Error::Parse {
        line: 2,
        message: e.to_string(),
    })?;
    if columns.iter().collect::<Vec<_>>().join(",") != COLUMNS {
        return Err(Error::Parse {
            line: 2,
            message: format!("expected column line `{COLUMNS}`"),
        });
    }
    let mut requests = Vec::new();
    let mut last = 0.0f64;
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Error::Parse {
            // csv lines are counted after the header line we split off
            line: e.position().map_or(0, |p| p.line() as usize + 1),
            message: e.to_string(),
        })?;
        let line = requests.len() + 3;
        let bad = |message: String| Error::Parse { line, message };
        if !(row.time_min.is_finite() && row.time_min >= 0.0) {
            return Err(bad(format!("arrival time {} must be finite and >= 0", row.time_min)));
        }
        if row.time_min < last {
            return Err(bad(format!(
                "arrival time {} precedes previous {}",
                row.time_min, last
            )));
        }
        if row.group == 0 || row.proxy == 0 || row.video == 0 {
            return Err(bad("group, proxy and video are 1-based".to_string()));
        }
        last = row.time_min;
        requests.push(Request {
            arrival_time_min: row.time_min,
            proxy: ProxyId::new(row.group, row.proxy),
            video: VideoId(row.video),
        });
    }
    Ok(Trace { params, requests })
}

fn parse_header(line: &str) -> Result<TraceParams> {
    let bad = |message: String| Error::Parse { line: 1, message };
    let body = line
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|b| b.strip_prefix(HEADER_TAG))
        .ok_or_else(|| bad(format!("missing `# {HEADER_TAG}` header")))?;
    let mut p = TraceParams::default();
    for kv in body.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field `{kv}`")))?;
        let num_err = |e: &dyn std::fmt::Display| bad(format!("header `{k}`: {e}"));
        match k {
            "seed" => p.seed = v.parse().map_err(|e| num_err(&e))?,
            "total_rate" => p.total_rate = v.parse().map_err(|e| num_err(&e))?,
            "duration_min" => p.duration_min = v.parse().map_err(|e| num_err(&e))?,
            "n_videos" => p.n_videos = v.parse().map_err(|e| num_err(&e))?,
            "alpha" => p.alpha = v.parse().map_err(|e| num_err(&e))?,
            "groups" => p.groups = v.parse().map_err(|e| num_err(&e))?,
            "proxies" => p.proxies = v.parse().map_err(|e| num_err(&e))?,
            _ => return Err(bad(format!("unknown header field `{k}`"))),
        }
    }
    Ok(p)
}

/// Quick facts about a trace for `trace show`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub requests: usize,
    pub first_min: f64,
    pub last_min: f64,
    pub mean_gap_min: f64,
    pub distinct_videos: usize,
    /// Most requested videos with their counts, most popular first.
    pub top_videos: Vec<(u32, usize)>,
}

pub fn summarize(trace: &Trace, top: usize) -> TraceSummary {
    let n = trace.len();
    let first = trace.requests.first().map_or(0.0, |r| r.arrival_time_min);
    let last = trace.requests.last().map_or(0.0, |r| r.arrival_time_min);
    let mut counts = std::collections::BTreeMap::<u32, usize>::new();
    for r in &trace.requests {
        *counts.entry(r.video.0).or_default() += 1;
    }
    let distinct = counts.len();
    let mut ranked: Vec<(u32, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top);
    TraceSummary {
        requests: n,
        first_min: first,
        last_min: last,
        mean_gap_min: if n > 1 { last / n as f64 } else { 0.0 },
        distinct_videos: distinct,
        top_videos: ranked,
    }
}
