//! Builds a world from a [`ScenarioConfig`], runs it and writes the reports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{build_catalog, Catalog, PopularityModel};
use crate::config::{RunMode, ScenarioConfig};
use crate::engine::{run, CacheView};
use crate::error::{Error, Result};
use crate::metrics::{ExportFormat, MetricsReport};
use crate::placement::{build_placement, build_single_proxy, Directory, Placement};
use crate::topology::{build_topology, Topology};
use crate::workload::{generate_trace_weighted, Trace};

/// Caches for one run mode.
#[derive(Debug, Clone)]
pub enum Caches {
    Cooperative(Placement),
    SingleProxy(Directory),
}

/// Catalog, topology and caches of one scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub catalog: Catalog,
    pub popularity: PopularityModel,
    pub topology: Topology,
    pub caches: Caches,
}

impl World {
    pub fn cache_view(&self) -> CacheView<'_> {
        match &self.caches {
            Caches::Cooperative(p) => CacheView::Cooperative(p),
            Caches::SingleProxy(d) => CacheView::SingleProxy(d),
        }
    }

    /// Placement file contents; the single-proxy cache is shown as group 1.
    pub fn placement_dump(&self) -> String {
        match &self.caches {
            Caches::Cooperative(p) => p.dump(),
            Caches::SingleProxy(d) => Placement::from_groups(vec![d.clone()]).dump(),
        }
    }
}

pub fn build_world(cfg: &ScenarioConfig, mode: RunMode) -> Result<World> {
    cfg.validate()?;
    let (catalog, popularity) = build_catalog(
        &cfg.catalog.video_lengths(),
        cfg.catalog.alpha,
        cfg.catalog.total_rate,
    )?;
    let topology = build_topology(cfg.topology.groups, cfg.topology.proxies, cfg.topology.table())?;
    let params = cfg.placement.params();
    let caches = match mode {
        RunMode::Cooperative => {
            Caches::Cooperative(build_placement(&catalog, &popularity, &topology, &params)?)
        }
        RunMode::SingleProxy => {
            Caches::SingleProxy(build_single_proxy(&catalog, &popularity, params.sizing)?)
        }
    };
    Ok(World {
        catalog,
        popularity,
        topology,
        caches,
    })
}

/// The request trace for `seed`, independent of run mode.
pub fn generate_workload(cfg: &ScenarioConfig, world: &World, seed: u64) -> Result<Trace> {
    generate_trace_weighted(
        &world.popularity,
        &world.topology,
        cfg.catalog.total_rate,
        cfg.workload.duration_min,
        seed,
        cfg.workload.proxy_weights.as_deref(),
    )
}

/// Runs `trace` through `world` and embeds the effective config in the report.
pub fn run_on_trace(cfg: &ScenarioConfig, world: &World, trace: &Trace) -> Result<MetricsReport> {
    let mut report = run(
        trace,
        &world.topology,
        world.cache_view(),
        &world.catalog,
        &cfg.engine_config(),
    )?;
    let mut echo = cfg.clone();
    echo.run.mode = match world.caches {
        Caches::Cooperative(_) => RunMode::Cooperative,
        Caches::SingleProxy(_) => RunMode::SingleProxy,
    };
    echo.run.repeat = 1;
    echo.workload.seed = trace.params.seed;
    report.config = Some(echo);
    Ok(report)
}

/// Mean and sample standard deviation of one metric across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub seeds: Vec<u64>,
    pub metrics: Vec<MetricSummary>,
}

impl RepeatSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

fn summary_values(r: &MetricsReport) -> Vec<(String, f64)> {
    let mut v = vec![
        ("total_requests".to_string(), r.total_requests as f64),
        ("vhr".to_string(), r.vhr),
        ("cms_accesses".to_string(), r.cms_accesses as f64),
        ("cms_suffix_fetches".to_string(), r.cms_suffix_fetches as f64),
        ("cms_block_share".to_string(), r.cms_block_share),
        ("lp_block_share".to_string(), r.lp_block_share),
        ("tcost_total".to_string(), r.tcost_total),
        ("mean_delay_ms".to_string(), r.mean_delay_ms),
        ("rejection_ratio".to_string(), r.rejection_ratio),
    ];
    for t in &r.tiers {
        v.push((format!("{}.count", t.tier), t.count as f64));
        v.push((format!("{}.mean_delay_ms", t.tier), t.mean_delay_ms));
    }
    v
}

pub fn summarize_repeats(reports: &[MetricsReport], seeds: &[u64]) -> RepeatSummary {
    let rows: Vec<Vec<(String, f64)>> = reports.iter().map(summary_values).collect();
    let n = rows.len() as f64;
    let metrics = rows
        .first()
        .map(|first| {
            first
                .iter()
                .enumerate()
                .map(|(i, (name, _))| {
                    let xs: Vec<f64> = rows.iter().map(|r| r[i].1).collect();
                    let mean = xs.iter().sum::<f64>() / n;
                    let std = if xs.len() > 1 {
                        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    MetricSummary {
                        metric: name.clone(),
                        mean,
                        std,
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    RepeatSummary {
        seeds: seeds.to_vec(),
        metrics,
    }
}

/// Reports of one scenario invocation, one per seed.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub world: World,
    pub seeds: Vec<u64>,
    pub reports: Vec<MetricsReport>,
    /// Present when more than one seed ran.
    pub summary: Option<RepeatSummary>,
}

/// Runs `cfg.run.repeat` seeds starting at `cfg.workload.seed`, or the given
/// trace once.
pub fn run_scenario(cfg: &ScenarioConfig, trace: Option<&Trace>) -> Result<ScenarioResult> {
    let world = build_world(cfg, cfg.run.mode)?;
    if let Some(trace) = trace {
        if cfg.run.repeat > 1 {
            return Err(Error::config("run.repeat", "a fixed trace runs exactly once"));
        }
        let mut report = run_on_trace(cfg, &world, trace)?;
        report
            .notes
            .push("requests replayed from a trace file".to_string());
        return Ok(ScenarioResult {
            world,
            seeds: vec![trace.params.seed],
            reports: vec![report],
            summary: None,
        });
    }
    let seeds: Vec<u64> = (0..u64::from(cfg.run.repeat))
        .map(|i| cfg.workload.seed.wrapping_add(i))
        .collect();
    let reports = seeds
        .par_iter()
        .map(|&seed| {
            let trace = generate_workload(cfg, &world, seed)?;
            run_on_trace(cfg, &world, &trace)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = (reports.len() > 1).then(|| summarize_repeats(&reports, &seeds));
    Ok(ScenarioResult {
        world,
        seeds,
        reports,
        summary,
    })
}

/// Writes report files into `out_dir` and returns their paths.
///
/// A single run writes `report.json`, `tiers.csv` and `series.csv`; repeats
/// write one `report_seed<n>.json` per seed plus `summary.json`. Every run
/// also writes `config.toml` and `placement.csv`.
pub fn write_outputs(
    result: &ScenarioResult,
    cfg: &ScenarioConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    {
        let mut put = |name: &str, body: String| -> Result<()> {
            let path = out_dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("config.toml", cfg.to_toml())?;
        put("placement.csv", result.world.placement_dump())?;
        if let [report] = result.reports.as_slice() {
            put("report.json", report.to_json()?)?;
            put("tiers.csv", report.tiers_csv()?)?;
            put("series.csv", report.series_csv())?;
        } else {
            for (seed, report) in result.seeds.iter().zip(&result.reports) {
                put(&format!("report_seed{seed}.json"), report.to_json()?)?;
            }
            if let Some(summary) = &result.summary {
                put("summary.json", serde_json::to_string_pretty(summary)?)?;
            }
        }
    }
    Ok(written)
}

/// Exports one report in every format next to `stem`.
pub fn export_all(report: &MetricsReport, stem: &Path) -> Result<()> {
    report.export(ExportFormat::Json, &stem.with_extension("json"))?;
    report.export(ExportFormat::Csv, &stem.with_extension("tiers.csv"))?;
    report.export(ExportFormat::Series, &stem.with_extension("series.csv"))
}
