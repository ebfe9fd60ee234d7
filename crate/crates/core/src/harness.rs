//! Experiment runner: loads inputs, plans every replica, writes per-replica artifacts
//! and an aggregated report.
//!
//! Output layout under the output directory:
//!
//! ```text
//! report.csv                one row per replica, then `mean` and `std` rows
//! timing.csv                wall time per replica
//! replica_<r>/plan.json     the plan (absent when a qag replica never succeeded)
//! replica_<r>/pc_breakdown.csv
//! replica_<r>/training_log.csv, qtable.csv, success_blocks.csv, seed_replays.csv   (qag only)
//! ```
//!
//! CSV files start with a `# traffic_seed=..,learn_seed=..` comment line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{plan_gh, plan_in_order, plan_sp, PlanResult, Planner};
use crate::plan::PlanDoc;
use crate::power::{PowerCatalog, PowerError};
use crate::qlearn::{train, QLearnConfig, QLearnError, TrainOutcome};
use crate::state::{NetworkState, PlanContext};
use crate::topology::{generate_traffic, load_topology, load_traffic, Topology, TopologyError, TrafficDemand};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    QLearn(#[from] QLearnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Everything a `plan` run needs. Deserializes from the TOML config file; absent keys
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topology: PathBuf,
    /// Traffic CSV; mutually exclusive with `atd_gbps`.
    pub traffic: Option<PathBuf>,
    pub atd_gbps: Option<f64>,
    pub traffic_seed: u64,
    pub learn_seed: u64,
    #[serde(with = "planner_name")]
    pub planner: Planner,
    pub replicas: usize,
    pub output: PathBuf,
    /// Option table CSV replacing the built-in one.
    pub catalog: Option<PathBuf>,
    /// Q-table checkpoint interval in episodes; 0 writes only the final table.
    pub checkpoint_every: usize,
    /// Worker threads for replicas; 0 uses the available parallelism.
    pub jobs: usize,
    pub qlearn: QLearnConfig,
}

mod planner_name {
    use super::Planner;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Planner, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(p.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Planner, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            topology: PathBuf::new(),
            traffic: None,
            atd_gbps: None,
            traffic_seed: 1,
            learn_seed: 1,
            planner: Planner::Qag,
            replicas: 10,
            output: PathBuf::from("out"),
            catalog: None,
            checkpoint_every: 1000,
            jobs: 1,
            qlearn: QLearnConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.topology.as_os_str().is_empty() {
            return Err(HarnessError::Config("no topology given".into()));
        }
        match (&self.traffic, self.atd_gbps) {
            (Some(_), Some(_)) => {
                return Err(HarnessError::Config("give either a traffic file or an ATD, not both".into()))
            }
            (None, None) => return Err(HarnessError::Config("give a traffic file or an ATD".into())),
            _ => {}
        }
        if self.replicas == 0 {
            return Err(HarnessError::Config("replicas must be at least 1".into()));
        }
        self.qlearn.validate()?;
        Ok(())
    }

    fn seed_header(&self, r: Option<usize>) -> String {
        let off = r.unwrap_or(0) as u64;
        format!("# traffic_seed={},learn_seed={}\n", self.traffic_seed + off, self.learn_seed + off)
    }
}

/// Loads the topology and catalog named by `cfg`.
pub fn load_context(cfg: &RunConfig) -> Result<Arc<PlanContext>, HarnessError> {
    let topo = load_topology(&cfg.topology)?;
    let catalog = match &cfg.catalog {
        Some(p) => PowerCatalog::load_options(p)?,
        None => PowerCatalog::default(),
    };
    Ok(PlanContext::new(topo, catalog))
}

/// Demands of replica `r`: the traffic file, or a matrix generated with `traffic_seed + r`.
pub fn replica_traffic(cfg: &RunConfig, topo: &Topology, r: usize) -> Result<Vec<TrafficDemand>, HarnessError> {
    match (&cfg.traffic, cfg.atd_gbps) {
        (Some(p), _) => Ok(load_traffic(p, topo.num_nodes())?),
        (None, Some(atd)) => Ok(generate_traffic(topo, atd, cfg.traffic_seed + r as u64)?),
        (None, None) => Err(HarnessError::Config("no traffic source".into())),
    }
}

/// Runs `planner` on a fresh state.
pub fn run_planner(
    planner: Planner,
    ctx: &Arc<PlanContext>,
    demands: &[TrafficDemand],
    qlearn: &QLearnConfig,
    checkpoint_every: usize,
    checkpoint: impl FnMut(usize, &crate::qlearn::QTable),
) -> Result<(Option<PlanResult>, Option<TrainOutcome>), HarnessError> {
    let state = NetworkState::new(Arc::clone(ctx));
    Ok(match planner {
        Planner::Sp => (Some(plan_sp(state, demands)), None),
        Planner::DGh | Planner::AGh | Planner::IGh => {
            let policy = planner.ordering().expect("greedy planners have an ordering");
            (Some(plan_gh(state, demands, policy)), None)
        }
        Planner::Qag => {
            let out = train(&state, demands, qlearn, checkpoint_every, checkpoint)?;
            (out.best.clone(), Some(out))
        }
    })
}

/// Metrics of one replica. Equipment and power fields are `None` when no plan exists.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaReport {
    pub replica: usize,
    pub traffic_seed: u64,
    pub learn_seed: u64,
    pub demands: usize,
    pub success: bool,
    pub metrics: Option<PlanMetrics>,
    /// Successful learning episodes, qag only.
    pub episode_successes: Option<usize>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanMetrics {
    pub total_pc_w: f64,
    pub router_w: f64,
    pub sbvt_w: f64,
    pub amp_w: f64,
    pub ver_w: f64,
    pub oxc_w: f64,
    /// Lightpaths per capacity class, every class of the catalog present.
    pub lightpaths_by_capacity: BTreeMap<u32, usize>,
    pub router_ports: usize,
    /// Active SBVT devices.
    pub sbvts: usize,
    /// Transmitting and receiving lightpath ends over all SBVTs.
    pub sbvt_tx: usize,
    pub sbvt_rx: usize,
    pub vers: usize,
    pub ssrs: usize,
}

impl PlanMetrics {
    pub fn of(state: &NetworkState) -> Self {
        let l = state.ledger();
        let mut by_cap: BTreeMap<u32, usize> = state.catalog().capacity_classes().into_iter().map(|c| (c, 0)).collect();
        for lp in state.lightpaths() {
            *by_cap.entry(lp.capacity_gbps).or_default() += 1;
        }
        let mut m = PlanMetrics {
            total_pc_w: l.total_w,
            router_w: l.router_w,
            sbvt_w: l.sbvt_w,
            amp_w: l.amp_w,
            ver_w: l.ver_w,
            oxc_w: l.oxc_w,
            lightpaths_by_capacity: by_cap,
            router_ports: 0,
            sbvts: 0,
            sbvt_tx: 0,
            sbvt_rx: 0,
            vers: 0,
            ssrs: 0,
        };
        for n in 0..state.topology().num_nodes() {
            let u = state.node_usage(n);
            m.router_ports += u.router_ports_active();
            m.sbvts += u.sbvts.iter().filter(|s| s.ends() > 0).count();
            m.sbvt_tx += u.sbvts.iter().map(|s| s.tx_ends as usize).sum::<usize>();
            m.sbvt_rx += u.sbvts.iter().map(|s| s.rx_ends as usize).sum::<usize>();
            m.vers += u.vers.iter().filter(|v| v.ssrs_used > 0).count();
            m.ssrs += u.vers.iter().map(|v| v.ssrs_used as usize).sum::<usize>();
        }
        m
    }

    pub fn lightpaths(&self) -> usize {
        self.lightpaths_by_capacity.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub planner: Planner,
    pub capacity_classes: Vec<u32>,
    pub replicas: Vec<ReplicaReport>,
}

impl Report {
    /// True when a non-learning planner failed on some replica.
    pub fn any_infeasible_baseline(&self) -> bool {
        self.planner != Planner::Qag && self.replicas.iter().any(|r| !r.success)
    }

    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = [
            "replica",
            "planner",
            "traffic_seed",
            "learn_seed",
            "demands",
            "success",
            "total_pc_w",
            "router_w",
            "sbvt_w",
            "amp_w",
            "ver_w",
            "oxc_w",
            "lightpaths",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        c.extend(self.capacity_classes.iter().map(|cap| format!("lp_{cap}")));
        c.extend(
            ["router_ports", "sbvts", "sbvt_tx", "sbvt_rx", "vers", "ssrs", "episode_successes"]
                .iter()
                .map(|s| s.to_string()),
        );
        c
    }

    /// Numeric fields of a replica in column order after `success`.
    fn values(&self, r: &ReplicaReport) -> Vec<Option<f64>> {
        let mut v = Vec::new();
        match &r.metrics {
            Some(m) => {
                v.extend([m.total_pc_w, m.router_w, m.sbvt_w, m.amp_w, m.ver_w, m.oxc_w].map(Some));
                v.push(Some(m.lightpaths() as f64));
                v.extend(
                    self.capacity_classes.iter().map(|c| Some(*m.lightpaths_by_capacity.get(c).unwrap_or(&0) as f64)),
                );
                v.extend([m.router_ports, m.sbvts, m.sbvt_tx, m.sbvt_rx, m.vers, m.ssrs].map(|x| Some(x as f64)));
            }
            None => v.extend(std::iter::repeat_n(None, 13 + self.capacity_classes.len())),
        }
        v.push(r.episode_successes.map(|x| x as f64));
        v
    }

    /// Mean and population standard deviation of every numeric column over the
    /// successful replicas; `None` where no successful replica has a value.
    pub fn aggregates(&self) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        let rows: Vec<Vec<Option<f64>>> = self.replicas.iter().filter(|r| r.success).map(|r| self.values(r)).collect();
        let width = 14 + self.capacity_classes.len();
        let mut mean = Vec::with_capacity(width);
        let mut std = Vec::with_capacity(width);
        for col in 0..width {
            let xs: Vec<f64> = rows.iter().filter_map(|r| r[col]).collect();
            if xs.is_empty() {
                mean.push(None);
                std.push(None);
                continue;
            }
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
            mean.push(Some(m));
            std.push(Some(var.sqrt()));
        }
        (mean, std)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let fmt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(header);
        out += &self.columns().join(",");
        out.push('\n');
        for r in &self.replicas {
            let mut cells = vec![
                r.replica.to_string(),
                self.planner.name().to_string(),
                r.traffic_seed.to_string(),
                r.learn_seed.to_string(),
                r.demands.to_string(),
                (r.success as u8).to_string(),
            ];
            cells.extend(self.values(r).iter().map(fmt));
            out += &cells.join(",");
            out.push('\n');
        }
        let (mean, std) = self.aggregates();
        let ok = self.replicas.iter().filter(|r| r.success).count() as f64 / self.replicas.len().max(1) as f64;
        for (label, vals, success) in [("mean", &mean, ok.to_string()), ("std", &std, String::new())] {
            let mut cells = vec![
                label.to_string(),
                self.planner.name().to_string(),
                String::new(),
                String::new(),
                String::new(),
                success,
            ];
            cells.extend(vals.iter().map(fmt));
            out += &cells.join(",");
            out.push('\n');
        }
        out
    }
}

fn pc_breakdown_csv(header: &str, m: &PlanMetrics) -> String {
    let mut out = format!("{header}category,watts,share\n");
    for (name, w) in [
        ("router", m.router_w),
        ("sbvt", m.sbvt_w),
        ("amplifier", m.amp_w),
        ("ver", m.ver_w),
        ("oxc", m.oxc_w),
        ("total", m.total_pc_w),
    ] {
        let share = if m.total_pc_w > 0.0 { w / m.total_pc_w } else { 0.0 };
        let _ = writeln!(out, "{name},{w},{share}");
    }
    out
}

fn training_csvs(header: &str, t: &TrainOutcome) -> [(&'static str, String); 3] {
    let mut log = format!("{header}episode,epsilon,success,total_pc_w,steps\n");
    for e in &t.log {
        let _ = writeln!(log, "{},{},{},{},{}", e.episode, e.epsilon, e.success as u8, e.total_pc_w, e.steps);
    }
    let mut blocks = format!("{header}first_episode,episodes,successes\n");
    for b in t.success_blocks() {
        let _ = writeln!(blocks, "{},{},{}", b.first_episode, b.episodes, b.successes);
    }
    let mut seeds = format!("{header}policy,success,total_pc_w,steps,order\n");
    for s in &t.seed_replays {
        let order: Vec<String> = s.result.order.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            seeds,
            "{:?},{},{},{},{}",
            s.policy,
            s.result.success as u8,
            s.result.total_pc_w,
            s.result.steps,
            order.join(" ")
        );
    }
    [("training_log.csv", log), ("success_blocks.csv", blocks), ("seed_replays.csv", seeds)]
}

fn run_replica(cfg: &RunConfig, ctx: &Arc<PlanContext>, r: usize) -> Result<ReplicaReport, HarnessError> {
    let started = Instant::now();
    let dir = cfg.output.join(format!("replica_{r}"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let header = cfg.seed_header(Some(r));
    let demands = replica_traffic(cfg, &ctx.topology, r)?;
    let qlearn = QLearnConfig { seed: cfg.learn_seed + r as u64, ..cfg.qlearn.clone() };

    let qtable_path = dir.join("qtable.csv");
    let mut checkpoint_err = None;
    let (plan, training) = run_planner(cfg.planner, ctx, &demands, &qlearn, cfg.checkpoint_every, |ep, table| {
        let mut buf = header.clone().into_bytes();
        let res = table
            .write_csv(&mut buf)
            .map_err(|e| HarnessError::Config(e.to_string()))
            .and_then(|_| fs::write(&qtable_path, &buf).map_err(io_err(&qtable_path)));
        match res {
            Ok(()) => log::debug!("replica {r}: checkpoint after {ep} episodes"),
            Err(e) => checkpoint_err = Some(e),
        }
    })?;
    if let Some(e) = checkpoint_err {
        return Err(e);
    }

    let metrics = plan.as_ref().map(|p| PlanMetrics::of(&p.state));
    if let (Some(p), Some(m)) = (&plan, &metrics) {
        let mut doc = PlanDoc::from_result(cfg.planner.name(), p, &demands);
        doc.traffic_seed = cfg.atd_gbps.map(|_| cfg.traffic_seed + r as u64);
        doc.learn_seed = (cfg.planner == Planner::Qag).then_some(qlearn.seed);
        doc.save(&dir.join("plan.json"))?;
        write_file(&dir.join("pc_breakdown.csv"), &pc_breakdown_csv(&header, m))?;
    }
    if let Some(t) = &training {
        for (name, body) in training_csvs(&header, t) {
            write_file(&dir.join(name), &body)?;
        }
    }
    let report = ReplicaReport {
        replica: r,
        traffic_seed: cfg.traffic_seed + r as u64,
        learn_seed: qlearn.seed,
        demands: demands.len(),
        success: plan.as_ref().is_some_and(|p| p.success),
        metrics,
        episode_successes: training.as_ref().map(|t| t.log.iter().filter(|e| e.success).count()),
        wall_s: started.elapsed().as_secs_f64(),
    };
    log::info!(
        "replica {r}: {} {} W",
        if report.success { "planned" } else { "infeasible" },
        report.metrics.as_ref().map_or(f64::NAN, |m| m.total_pc_w)
    );
    Ok(report)
}

/// Plans every replica, writes all artifacts and returns the report.
pub fn run(cfg: &RunConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let ctx = load_context(cfg)?;
    fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;

    let jobs = match cfg.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        j => j,
    }
    .min(cfg.replicas);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ReplicaReport, HarnessError>>>> =
        Mutex::new((0..cfg.replicas).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= cfg.replicas {
                    break;
                }
                let out = run_replica(cfg, &ctx, r);
                results.lock().expect("no worker panicked")[r] = Some(out);
            });
        }
    });
    let replicas = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every replica ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let report = Report { planner: cfg.planner, capacity_classes: ctx.catalog.capacity_classes(), replicas };
    let header = cfg.seed_header(None);
    write_file(&cfg.output.join("report.csv"), &report.to_csv(&header))?;
    let mut timing = format!("{header}replica,wall_s\n");
    for r in &report.replicas {
        let _ = writeln!(timing, "{},{}", r.replica, r.wall_s);
    }
    write_file(&cfg.output.join("timing.csv"), &timing)?;
    Ok(report)
}

/// Re-provisions a plan's recorded order on a fresh state.
pub fn replay(doc: &PlanDoc, ctx: &Arc<PlanContext>) -> PlanResult {
    plan_in_order(NetworkState::new(Arc::clone(ctx)), &doc.demands, &doc.order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_validation() {
        let cfg = RunConfig::from_toml_str(
            "topology = \"t.json\"\natd_gbps = 40\nplanner = \"d-gh\"\nreplicas = 2\n[qlearn]\ntotal_episodes = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.planner, Planner::DGh);
        assert_eq!(cfg.qlearn.total_episodes, 7);
        assert_eq!(cfg.qlearn.alpha, 0.1);
        assert!(cfg.validate().is_ok());
        assert!(RunConfig { traffic: Some("x.csv".into()), ..cfg.clone() }.validate().is_err());
        assert!(RunConfig { atd_gbps: None, ..cfg.clone() }.validate().is_err());
        assert!(RunConfig::from_toml_str("planner = \"bogus\"").is_err());
        assert!(RunConfig::from_toml_str("unknown_key = 1").is_err());
    }

    #[test]
    fn aggregates_use_population_std() {
        let metrics = |w: f64| PlanMetrics {
            total_pc_w: w,
            router_w: 0.0,
            sbvt_w: 0.0,
            amp_w: 0.0,
            ver_w: 0.0,
            oxc_w: w,
            lightpaths_by_capacity: BTreeMap::new(),
            router_ports: 0,
            sbvts: 0,
            sbvt_tx: 0,
            sbvt_rx: 0,
            vers: 0,
            ssrs: 0,
        };
        let rep = |replica, w, success| ReplicaReport {
            replica,
            traffic_seed: 0,
            learn_seed: 0,
            demands: 1,
            success,
            metrics: Some(metrics(w)),
            episode_successes: None,
            wall_s: 0.0,
        };
        let report = Report {
            planner: Planner::DGh,
            capacity_classes: vec![],
            replicas: vec![rep(0, 10.0, true), rep(1, 20.0, true), rep(2, 1e6, false)],
        };
        let (mean, std) = report.aggregates();
        assert_eq!(mean[0], Some(15.0));
        assert_eq!(std[0], Some(5.0));
        assert_eq!(mean[13], None);
        assert!(report.any_infeasible_baseline());
        let csv = report.to_csv("# h\n");
        assert!(csv.lines().nth(5).unwrap().starts_with("mean,d-gh,,,,0.6666666666666666,15,"));
    }
}
