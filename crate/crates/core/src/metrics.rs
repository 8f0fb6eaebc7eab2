//! Per-run counters and report export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::engine::{ServingTier, StreamSession};
use crate::error::{Error, Result};

/// How VHR is counted; embedded in every report.
pub const VHR_DEFINITION: &str =
    "vhr = requests served without a CMS startup (tiers 1-4) / all requests, rejections included";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    pub tier: String,
    pub count: u64,
    pub mean_delay_ms: f64,
    pub min_delay_ms: f64,
    pub max_delay_ms: f64,
    pub delay_sum_ms: f64,
    pub minutes_delivered: u64,
    pub minutes_from_group: u64,
    pub minutes_from_cms: u64,
    pub tcost: f64,
}

impl TierStats {
    fn new(tier: ServingTier) -> Self {
        Self {
            tier: tier.name().to_string(),
            ..Self::default()
        }
    }

    fn add(&mut self, s: &StreamSession) {
        let d = s.start_delay_ms;
        if self.count == 0 {
            self.min_delay_ms = d;
            self.max_delay_ms = d;
        } else {
            self.min_delay_ms = self.min_delay_ms.min(d);
            self.max_delay_ms = self.max_delay_ms.max(d);
        }
        self.count += 1;
        self.delay_sum_ms += d;
        self.mean_delay_ms = self.delay_sum_ms / self.count as f64;
        let group = u64::from(s.minutes_from_group);
        let cms = u64::from(s.minutes_from_cms);
        self.minutes_from_group += group;
        self.minutes_from_cms += cms;
        self.minutes_delivered += group + cms;
        self.tcost += s.cost;
    }
}

/// Video-minutes started in one time bucket, split by source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub bucket_start_min: f64,
    /// Minutes streamed from the local group or a neighbour group.
    pub lp_blocks: u64,
    pub cms_blocks: u64,
}

/// What happened to one request.
#[derive(Debug, Clone, Copy)]
pub enum Outcome<'a> {
    Served(&'a StreamSession),
    Rejected { at_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total_requests: u64,
    pub served: u64,
    /// One entry per serving tier, in tier order.
    pub tiers: Vec<TierStats>,
    pub vhr: f64,
    /// Requests whose startup came from the CMS.
    pub cms_accesses: u64,
    /// Sessions served from a proxy cache that still pulled a suffix from the CMS.
    pub cms_suffix_fetches: u64,
    pub group_minutes: u64,
    pub cms_minutes: u64,
    pub cms_block_share: f64,
    pub lp_block_share: f64,
    pub tcost_total: f64,
    pub mean_delay_ms: f64,
    pub rejections: u64,
    pub rejection_ratio: f64,
    /// Link-counter overruns seen by the audit; always 0 for a correct engine.
    pub capacity_violations: u64,
    pub bucket_min: f64,
    pub series: Vec<SeriesPoint>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ScenarioConfig>,
}

impl MetricsReport {
    pub fn new(bucket_min: f64) -> Self {
        Self {
            total_requests: 0,
            served: 0,
            tiers: ServingTier::ALL.iter().map(|&t| TierStats::new(t)).collect(),
            vhr: 0.0,
            cms_accesses: 0,
            cms_suffix_fetches: 0,
            group_minutes: 0,
            cms_minutes: 0,
            cms_block_share: 0.0,
            lp_block_share: 0.0,
            tcost_total: 0.0,
            mean_delay_ms: 0.0,
            rejections: 0,
            rejection_ratio: 0.0,
            capacity_violations: 0,
            bucket_min,
            series: Vec::new(),
            notes: vec![VHR_DEFINITION.to_string()],
            config: None,
        }
    }

    pub fn tier(&self, tier: ServingTier) -> &TierStats {
        &self.tiers[tier.index()]
    }

    fn bucket(&mut self, at_min: f64) -> &mut SeriesPoint {
        let idx = (at_min / self.bucket_min).floor().max(0.0) as usize;
        while self.series.len() <= idx {
            let start = self.series.len() as f64 * self.bucket_min;
            self.series.push(SeriesPoint {
                bucket_start_min: start,
                ..SeriesPoint::default()
            });
        }
        &mut self.series[idx]
    }

    /// Folds one request outcome into the counters.
    pub fn record(&mut self, outcome: Outcome<'_>) {
        self.total_requests += 1;
        match outcome {
            Outcome::Served(s) => {
                self.served += 1;
                self.tiers[s.tier.index()].add(s);
                if s.tier == ServingTier::CmsFetch {
                    self.cms_accesses += 1;
                } else if s.minutes_from_cms > 0 {
                    self.cms_suffix_fetches += 1;
                }
                self.group_minutes += u64::from(s.minutes_from_group);
                self.cms_minutes += u64::from(s.minutes_from_cms);
                self.tcost_total += s.cost;
                let point = self.bucket(s.start_min);
                point.lp_blocks += u64::from(s.minutes_from_group);
                point.cms_blocks += u64::from(s.minutes_from_cms);
            }
            Outcome::Rejected { at_min } => {
                self.rejections += 1;
                self.bucket(at_min);
            }
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        let total = self.total_requests as f64;
        let non_cms = self.served - self.cms_accesses;
        self.vhr = if total > 0.0 { non_cms as f64 / total } else { 0.0 };
        self.rejection_ratio = if total > 0.0 {
            self.rejections as f64 / total
        } else {
            0.0
        };
        let minutes = (self.group_minutes + self.cms_minutes) as f64;
        if minutes > 0.0 {
            self.cms_block_share = self.cms_minutes as f64 / minutes;
            self.lp_block_share = self.group_minutes as f64 / minutes;
        } else {
            self.cms_block_share = 0.0;
            self.lp_block_share = 0.0;
        }
        let delay_sum: f64 = self.tiers.iter().map(|t| t.delay_sum_ms).sum();
        self.mean_delay_ms = if self.served > 0 {
            delay_sum / self.served as f64
        } else {
            0.0
        };
    }

    /// Recomputes derived ratios. Called by the engine at the end of a run.
    pub fn finish(&mut self) {
        self.refresh();
    }

    /// Served-per-tier plus rejections must equal the number of requests.
    pub fn check_conservation(&self) -> Result<()> {
        let tiers: u64 = self.tiers.iter().map(|t| t.count).sum();
        if tiers + self.rejections != self.total_requests || tiers != self.served {
            return Err(Error::invalid(format!(
                "conservation violated: tiers {tiers} + rejections {} != requests {}",
                self.rejections, self.total_requests
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.check_conservation()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// One row per tier plus a `total` row.
    pub fn tiers_csv(&self) -> Result<String> {
        self.check_conservation()?;
        let mut out = String::from(
            "tier,count,mean_delay_ms,min_delay_ms,max_delay_ms,minutes_delivered,minutes_from_group,minutes_from_cms,tcost\n",
        );
        for t in &self.tiers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                t.tier,
                t.count,
                t.mean_delay_ms,
                t.min_delay_ms,
                t.max_delay_ms,
                t.minutes_delivered,
                t.minutes_from_group,
                t.minutes_from_cms,
                t.tcost
            );
        }
        let served: Vec<&TierStats> = self.tiers.iter().filter(|t| t.count > 0).collect();
        let min = served.iter().map(|t| t.min_delay_ms).fold(f64::INFINITY, f64::min);
        let max = served.iter().map(|t| t.max_delay_ms).fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "total,{},{},{},{},{},{},{},{}",
            self.served,
            self.mean_delay_ms,
            if min.is_finite() { min } else { 0.0 },
            max,
            self.group_minutes + self.cms_minutes,
            self.group_minutes,
            self.cms_minutes,
            self.tcost_total
        );
        Ok(out)
    }

    /// `bucket_start_min,lp_blocks,cms_blocks` rows.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("bucket_start_min,lp_blocks,cms_blocks\n");
        for p in &self.series {
            let _ = writeln!(out, "{},{},{}", p.bucket_start_min, p.lp_blocks, p.cms_blocks);
        }
        out
    }

    pub fn export(&self, format: ExportFormat, path: &Path) -> Result<()> {
        let body = match format {
            ExportFormat::Json => self.to_json()?,
            ExportFormat::Csv => self.tiers_csv()?,
            ExportFormat::Series => self.series_csv(),
        };
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    /// Per-tier summary with a totals row.
    Csv,
    /// Blocks-served time series.
    Series,
}

/// One line of a report comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `(b - a) / a` in percent; `None` when `a` is 0 and `b` is not.
    pub pct: Option<f64>,
}

/// Side-by-side comparison of two reports, `a` being the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<DeltaRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<34} {:>16} {:>16} {:>16} {:>9}\n",
            "metric", "a", "b", "delta", "pct"
        );
        for r in &self.rows {
            let pct = match r.pct {
                Some(p) => format!("{p:+.1}%"),
                None => "n/a".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<34} {:>16.4} {:>16.4} {:>16.4} {:>9}",
                r.metric, r.a, r.b, r.delta, pct
            );
        }
        out
    }
}

/// Deltas of `b` against `a` for the headline metrics.
pub fn compare(a: &MetricsReport, b: &MetricsReport) -> Result<Comparison> {
    if a.total_requests != b.total_requests {
        return Err(Error::invalid(format!(
            "reports cover different traces: {} vs {} requests",
            a.total_requests, b.total_requests
        )));
    }
    let mut pairs: Vec<(String, f64, f64)> = vec![
        ("vhr".into(), a.vhr, b.vhr),
        ("cms_accesses".into(), a.cms_accesses as f64, b.cms_accesses as f64),
        ("tcost_total".into(), a.tcost_total, b.tcost_total),
        ("mean_delay_ms".into(), a.mean_delay_ms, b.mean_delay_ms),
        ("cms_block_share".into(), a.cms_block_share, b.cms_block_share),
        ("rejection_ratio".into(), a.rejection_ratio, b.rejection_ratio),
    ];
    for tier in ServingTier::ALL {
        pairs.push((
            format!("mean_delay_ms.{}", tier.name()),
            a.tier(tier).mean_delay_ms,
            b.tier(tier).mean_delay_ms,
        ));
    }
    let rows = pairs
        .into_iter()
        .map(|(metric, a, b)| {
            let pct = if a != 0.0 {
                Some((b - a) / a * 100.0)
            } else if b == 0.0 {
                Some(0.0)
            } else {
                None
            };
            DeltaRow {
                metric,
                a,
                b,
                delta: b - a,
                pct,
            }
        })
        .collect();
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::VideoId;
    use crate::topology::{NodeRef, ProxyId};
    use crate::workload::Request;

    fn session(tier: ServingTier, w: u32, s: u32, delay: f64, cost: f64, at: f64) -> StreamSession {
        StreamSession {
            request: Request {
                arrival_time_min: at,
                proxy: ProxyId::new(1, 1),
                video: VideoId(1),
            },
            tier,
            serving: NodeRef::Cms,
            start_delay_ms: delay,
            start_min: at,
            end_min: at + f64::from(s),
            minutes_from_group: w,
            minutes_from_cms: s - w,
            cost,
            path: Vec::new(),
        }
    }

    #[test]
    fn local_hit_fully_cached() {
        let mut r = MetricsReport::new(10.0);
        r.record(Outcome::Served(&session(ServingTier::LocalHit, 60, 60, 100.0, 60.0, 0.0)));
        assert_eq!(r.vhr, 1.0);
        assert_eq!(r.cms_block_share, 0.0);
        assert_eq!(r.cms_accesses, 0);
        assert_eq!(r.tier(ServingTier::LocalHit).count, 1);
    }

    #[test]
    fn single_cms_fetch() {
        let mut r = MetricsReport::new(10.0);
        r.record(Outcome::Served(&session(ServingTier::CmsFetch, 0, 30, 1300.0, 390.0, 3.0)));
        assert_eq!(r.vhr, 0.0);
        assert_eq!(r.cms_accesses, 1);
        assert_eq!(r.cms_block_share, 1.0);
        assert_eq!(r.cms_suffix_fetches, 0);
    }

    #[test]
    fn single_rejection() {
        let mut r = MetricsReport::new(10.0);
        r.record(Outcome::Rejected { at_min: 1.0 });
        assert_eq!(r.rejection_ratio, 1.0);
        assert_eq!(r.served, 0);
        assert!(r.tiers.iter().all(|t| t.count == 0));
        r.check_conservation().unwrap();
    }

    #[test]
    fn suffix_fetch_counted_separately() {
        let mut r = MetricsReport::new(10.0);
        r.record(Outcome::Served(&session(ServingTier::NeighborProxy, 40, 60, 300.0, 0.0, 25.0)));
        assert_eq!(r.cms_suffix_fetches, 1);
        assert_eq!(r.cms_accesses, 0);
        assert!((r.cms_block_share - 20.0 / 60.0).abs() < 1e-12);
        assert_eq!(r.series.len(), 3);
        assert_eq!(r.series[2].lp_blocks, 40);
        assert_eq!(r.series[2].cms_blocks, 20);
        assert_eq!(r.series[2].bucket_start_min, 20.0);
    }

    #[test]
    fn delay_extremes_bracket_mean() {
        let mut r = MetricsReport::new(10.0);
        for d in [100.0, 700.0, 300.0] {
            r.record(Outcome::Served(&session(ServingTier::IntraGroupRemote, 30, 30, d, 1.0, 0.0)));
        }
        let t = r.tier(ServingTier::IntraGroupRemote);
        assert_eq!((t.min_delay_ms, t.max_delay_ms), (100.0, 700.0));
        assert!((t.mean_delay_ms - 1100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_report_exports_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let r = MetricsReport::new(10.0);
        let json = dir.path().join("r.json");
        r.export(ExportFormat::Json, &json).unwrap();
        let back = MetricsReport::load_json(&json).unwrap();
        assert_eq!(back, r);
        let csv = dir.path().join("r.csv");
        r.export(ExportFormat::Csv, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.lines().last().unwrap().starts_with("total,0,0,0,0,0,0,0,0"));
        r.export(ExportFormat::Series, &dir.path().join("s.csv")).unwrap();
    }

    #[test]
    fn json_round_trip_is_field_identical() {
        let mut r = MetricsReport::new(10.0);
        r.record(Outcome::Served(&session(ServingTier::LocalHit, 33, 60, 100.0, 0.1 + 0.2, 1.5)));
        r.record(Outcome::Served(&session(ServingTier::CmsFetch, 0, 60, 1.0 / 3.0, 780.0, 11.0)));
        r.record(Outcome::Rejected { at_min: 12.0 });
        let back = MetricsReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn totals_row_is_column_sum() {
        let mut r = MetricsReport::new(10.0);
        r.record(Outcome::Served(&session(ServingTier::LocalHit, 60, 60, 100.0, 60.0, 0.0)));
        r.record(Outcome::Served(&session(ServingTier::NeighborGroup, 25, 60, 800.0, 655.0, 0.0)));
        r.record(Outcome::Served(&session(ServingTier::CmsFetch, 0, 45, 1300.0, 585.0, 0.0)));
        let csv = r.tiers_csv().unwrap();
        let rows: Vec<Vec<f64>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect())
            .collect();
        let (tiers, total) = rows.split_at(5);
        for col in [0usize, 4, 5, 6, 7] {
            let sum: f64 = tiers.iter().map(|r| r[col]).sum();
            assert!((sum - total[0][col]).abs() < 1e-9, "column {col}");
        }
    }

    #[test]
    fn compare_identical_is_zero() {
        let mut r = MetricsReport::new(10.0);
        r.record(Outcome::Served(&session(ServingTier::LocalHit, 60, 60, 100.0, 60.0, 0.0)));
        let c = compare(&r, &r).unwrap();
        assert!(c.rows.iter().all(|row| row.delta == 0.0 && row.pct == Some(0.0)));
    }

    #[test]
    fn compare_percentage() {
        let mut a = MetricsReport::new(10.0);
        let mut b = MetricsReport::new(10.0);
        a.total_requests = 5000;
        b.total_requests = 5000;
        a.cms_accesses = 1000;
        b.cms_accesses = 620;
        let c = compare(&a, &b).unwrap();
        let row = c.row("cms_accesses").unwrap();
        assert!((row.pct.unwrap() + 38.0).abs() < 1e-9);
        assert!(c.render().contains("-38.0%"));
    }

    #[test]
    fn compare_rejects_different_lengths() {
        let a = MetricsReport::new(10.0);
        let mut b = MetricsReport::new(10.0);
        b.record(Outcome::Rejected { at_min: 0.0 });
        assert!(compare(&a, &b).is_err());
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let err = MetricsReport::load_json(Path::new("/nonexistent/report.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
