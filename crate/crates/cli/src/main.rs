use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use coopvod::scenario::{build_world, generate_workload, run_scenario, write_outputs};
use coopvod::workload::{summarize, TraceSummary};
use coopvod::{compare, load_trace, save_trace, MetricsReport, RunMode, ScenarioConfig};

/// Cooperative proxy-server video-on-demand simulator.
#[derive(Debug, Parser)]
#[command(name = "coopvod", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its reports.
    Run(RunArgs),
    /// Print metric deltas between two JSON reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
    },
    /// Generate or inspect request traces.
    #[command(subcommand)]
    Trace(TraceCommand),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Scenario file (TOML). Defaults apply to anything it leaves out.
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set J=4` or `--set placement.mode=identical`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)
                .with_context(|| format!("loading {}", path.display()))?,
            None => ScenarioConfig::default(),
        };
        for o in &self.overrides {
            cfg.set(o).with_context(|| format!("--set {o}"))?;
        }
        if let Some(seed) = self.seed {
            cfg.workload.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of seeds to average, starting at the configured seed.
    #[arg(long)]
    repeat: Option<u32>,
    #[arg(long, value_parser = ["cooperative", "single_proxy"])]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replay requests from a trace file instead of generating them.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum TraceCommand {
    /// Generate a trace from a scenario's catalog, topology and workload settings.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a trace file.
    Show {
        file: PathBuf,
        /// Most requested videos to list.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare { a, b } => compare_reports(&a, &b),
        Command::Trace(TraceCommand::Gen { config, out }) => trace_gen(&config, &out),
        Command::Trace(TraceCommand::Show { file, top }) => trace_show(&file, top),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(k) = args.repeat {
        cfg.set(&format!("run.repeat={k}"))?;
    }
    if let Some(mode) = &args.mode {
        cfg.run.mode = mode.parse()?;
    }
    if let Some(out) = args.out {
        cfg.run.out_dir = out;
    }
    let trace = match &args.trace {
        Some(path) => Some(load_trace(path).with_context(|| format!("loading {}", path.display()))?),
        None => None,
    };
    let result = run_scenario(&cfg, trace.as_ref())?;
    let written = write_outputs(&result, &cfg, &cfg.run.out_dir)?;

    match &result.summary {
        Some(summary) => {
            println!("{} runs, seeds {:?}", result.reports.len(), summary.seeds);
            for name in ["vhr", "cms_accesses", "cms_block_share", "tcost_total", "mean_delay_ms"] {
                if let Some(m) = summary.metric(name) {
                    println!("  {name:<16} {:>14.4} +- {:.4}", m.mean, m.std);
                }
            }
        }
        None => print_report(&result.reports[0]),
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_report(r: &MetricsReport) {
    println!(
        "{} requests, {} served, {} rejected",
        r.total_requests, r.served, r.rejections
    );
    println!("  vhr              {:.4}", r.vhr);
    println!("  cms_accesses     {}", r.cms_accesses);
    println!("  cms_block_share  {:.4}", r.cms_block_share);
    println!("  tcost_total      {:.1}", r.tcost_total);
    println!("  mean_delay_ms    {:.1}", r.mean_delay_ms);
    for t in &r.tiers {
        println!("  {:<20} {:>8} {:>14.1} ms", t.tier, t.count, t.mean_delay_ms);
    }
}

fn compare_reports(a: &Path, b: &Path) -> Result<()> {
    let ra = MetricsReport::load_json(a).with_context(|| format!("reading {}", a.display()))?;
    let rb = MetricsReport::load_json(b).with_context(|| format!("reading {}", b.display()))?;
    let table = compare(&ra, &rb)?;
    print!("{}", table.render());
    Ok(())
}

fn trace_gen(config: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = config.load()?;
    let world = build_world(&cfg, RunMode::Cooperative)?;
    let trace = generate_workload(&cfg, &world, cfg.workload.seed)?;
    if trace.is_empty() {
        bail!("trace is empty; raise workload.duration_min or catalog.total_rate");
    }
    save_trace(&trace, out)?;
    println!("wrote {} requests to {}", trace.len(), out.display());
    Ok(())
}

fn trace_show(file: &Path, top: usize) -> Result<()> {
    let trace = load_trace(file).with_context(|| format!("loading {}", file.display()))?;
    let p = &trace.params;
    let TraceSummary {
        requests,
        first_min,
        last_min,
        mean_gap_min,
        distinct_videos,
        top_videos,
    } = summarize(&trace, top);
    println!(
        "seed {} rate {}/min duration {} min, {} videos alpha {}, {}x{} proxies",
        p.seed, p.total_rate, p.duration_min, p.n_videos, p.alpha, p.groups, p.proxies
    );
    println!("{requests} requests from {first_min:.3} to {last_min:.3} min, mean gap {mean_gap_min:.4} min");
    println!("{distinct_videos} distinct videos");
    for (video, count) in top_videos {
        println!("  v{video:<6} {count}");
    }
    Ok(())
}
