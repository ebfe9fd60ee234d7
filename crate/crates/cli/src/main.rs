use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eonplan::baselines::Planner;
use eonplan::harness::{self, RunConfig};
use eonplan::plan::{validate_plan, PlanDoc};
use eonplan::state::PlanContext;
use eonplan::topology::{generate_traffic, load_topology, write_traffic_csv};
use eonplan::PowerCatalog;

/// Energy-aware IP-over-EON network planner.
#[derive(Parser)]
#[command(name = "eonplan", version)]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one or more traffic matrices and write reports.
    Plan(Box<PlanArgs>),
    /// Generate a random traffic matrix as CSV.
    GenTraffic(GenArgs),
    /// Rebuild a plan file from scratch and check every invariant.
    ValidatePlan(CheckArgs),
    /// Re-provision a plan's recorded order and compare the power.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Traffic CSV (src,dst,gbps).
    #[arg(long, conflicts_with = "atd")]
    traffic: Option<PathBuf>,
    /// Average traffic demand per node pair in Gbps; generates the matrices.
    #[arg(long)]
    atd: Option<f64>,
    /// Seed of the first generated matrix; replica r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the first learning run; replica r uses learn-seed + r.
    #[arg(long)]
    learn_seed: Option<u64>,
    /// sp, d-gh, a-gh, i-gh or qag.
    #[arg(long)]
    planner: Option<Planner>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transmission option table CSV (capacity,mtr_km,slots,pc_w).
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_max: Option<f64>,
    #[arg(long)]
    eps_decay: Option<f64>,
    /// Penalty for a failed provisioning step.
    #[arg(long)]
    penalty: Option<f64>,
    /// Bonus for provisioning the last demand.
    #[arg(long)]
    bonus: Option<f64>,
    /// Skip replaying the greedy orders before learning.
    #[arg(long)]
    no_seed_baselines: bool,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Replica worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    atd: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    input: CheckArgs,
    /// Write the replayed plan here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn context(topology: &PathBuf, catalog: &Option<PathBuf>) -> Result<std::sync::Arc<PlanContext>> {
    let topo = load_topology(topology)?;
    let cat = match catalog {
        Some(p) => PowerCatalog::load_options(p)?,
        None => PowerCatalog::default(),
    };
    Ok(PlanContext::new(topo, cat))
}

fn plan_config(a: PlanArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = a.topology {
        cfg.topology = v;
    }
    if let Some(v) = a.traffic {
        cfg.traffic = Some(v);
        cfg.atd_gbps = None;
    }
    if let Some(v) = a.atd {
        cfg.atd_gbps = Some(v);
        cfg.traffic = None;
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag { cfg.$($field).+ = v; })*
        };
    }
    set!(
        seed => traffic_seed,
        learn_seed => learn_seed,
        planner => planner,
        replicas => replicas,
        out => output,
        episodes => qlearn.total_episodes,
        alpha => qlearn.alpha,
        gamma => qlearn.gamma,
        eps_min => qlearn.eps_min,
        eps_max => qlearn.eps_max,
        eps_decay => qlearn.eps_decay,
        penalty => qlearn.penalty_p,
        bonus => qlearn.bonus_r,
        checkpoint_every => checkpoint_every,
        jobs => jobs,
    );
    if let Some(v) = a.catalog {
        cfg.catalog = Some(v);
    }
    if a.no_seed_baselines {
        cfg.qlearn.seed_baselines = false;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Plan(args) => {
            let cfg = plan_config(*args)?;
            let report = harness::run(&cfg)?;
            for r in &report.replicas {
                let pc = r.metrics.as_ref().map(|m| format!("{:.1} W", m.total_pc_w)).unwrap_or_else(|| "-".into());
                println!("replica {}: {} {pc}", r.replica, if r.success { "ok" } else { "infeasible" });
            }
            println!("report written to {}", cfg.output.join("report.csv").display());
            if report.any_infeasible_baseline() {
                eprintln!("at least one replica could not be fully provisioned");
                return Ok(ExitCode::from(2));
            }
        }
        Command::GenTraffic(a) => {
            let topo = load_topology(&a.topology)?;
            let demands = generate_traffic(&topo, a.atd, a.seed)?;
            match &a.out {
                Some(p) => {
                    let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                    write_traffic_csv(f, &demands)?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    write_traffic_csv(&mut lock, &demands)?;
                    lock.flush()?;
                }
            }
        }
        Command::ValidatePlan(a) => {
            let ctx = context(&a.topology, &a.catalog)?;
            let doc = PlanDoc::load(&a.plan)?;
            let issues = validate_plan(&doc, ctx);
            if issues.is_empty() {
                println!("plan is valid: {} lightpaths, {} W", doc.lightpaths.len(), doc.total_pc_w);
            } else {
                for i in &issues {
                    eprintln!("{i}");
                }
                bail!("{} problem(s) found in {}", issues.len(), a.plan.display());
            }
        }
        Command::Replay(a) => {
            let ctx = context(&a.input.topology, &a.input.catalog)?;
            let doc = PlanDoc::load(&a.input.plan)?;
            let result = harness::replay(&doc, &ctx);
            println!("recorded {} W, replayed {} W", doc.total_pc_w, result.total_pc_w);
            if let Some(p) = &a.out {
                let mut out = PlanDoc::from_result(&doc.planner, &result, &doc.demands);
                out.traffic_seed = doc.traffic_seed;
                out.learn_seed = doc.learn_seed;
                out.save(p)?;
            }
            if result.success != doc.success || result.total_pc_w != doc.total_pc_w {
                bail!("replay does not reproduce the recorded plan");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
