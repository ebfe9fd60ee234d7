//! Tabular Q-learning over the order in which demands are provisioned.
//!
//! The state is the number of demands already provisioned and an action picks the
//! next demand, so the table has `n + 2` rows and `n` columns. Every step provisions
//! the chosen demand with the auxiliary-graph planner; the reward is the negated
//! power increase, `-P` when provisioning fails and `+R` on top when the last demand
//! succeeds.
//!
//! All randomness comes from one [`ChaCha8Rng`] seeded from the config. Each step
//! draws the exploration coin `u` first and, only when exploring, an index into the
//! unmasked actions.

use std::io;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxgraph::provision;
use crate::baselines::{order_demands, plan_in_order, OrderingPolicy, PlanResult};
use crate::state::NetworkState;
use crate::topology::TrafficDemand;

/// Episodes per success-count block.
pub const SUCCESS_BLOCK: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum QLearnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no unmasked action left")]
    NoAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearnConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_decay: f64,
    pub total_episodes: usize,
    pub penalty_p: f64,
    pub bonus_r: f64,
    pub seed: u64,
    /// Replay the descending, ascending and index orders before the first episode.
    pub seed_baselines: bool,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            eps_min: 0.01,
            eps_max: 1.0,
            eps_decay: 0.001,
            total_episodes: 10_000,
            penalty_p: 1e9,
            bonus_r: 1e6,
            seed: 0,
            seed_baselines: true,
        }
    }
}

impl QLearnConfig {
    pub fn validate(&self) -> Result<(), QLearnError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(QLearnError::Config(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("gamma", self.gamma)?;
        unit("eps_min", self.eps_min)?;
        unit("eps_max", self.eps_max)?;
        if self.eps_min > self.eps_max {
            return Err(QLearnError::Config("eps_min exceeds eps_max".into()));
        }
        if !(self.eps_decay >= 0.0 && self.eps_decay.is_finite()) {
            return Err(QLearnError::Config(format!("eps_decay = {} must be non-negative", self.eps_decay)));
        }
        for (name, v) in [("penalty_p", self.penalty_p), ("bonus_r", self.bonus_r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QLearnError::Config(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Exploration rate for `episode`.
pub fn epsilon(episode: usize, cfg: &QLearnConfig) -> f64 {
    cfg.eps_min + (cfg.eps_max - cfg.eps_min) * (-cfg.eps_decay * episode as f64).exp()
}

pub fn q_update(q: f64, reward: f64, max_next_q: f64, cfg: &QLearnConfig) -> f64 {
    (1.0 - cfg.alpha) * q + cfg.alpha * (reward + cfg.gamma * max_next_q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(num_demands: usize) -> Self {
        let states = num_demands + 2;
        Self { states, actions: num_demands, values: vec![0.0; states * num_demands] }
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, q: f64) {
        self.values[state * self.actions + action] = q;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Best unmasked action in `state`, lowest id on ties.
    pub fn argmax(&self, state: usize, mask: &[bool]) -> Option<(usize, f64)> {
        let row = &self.values[state * self.actions..(state + 1) * self.actions];
        let mut best: Option<(usize, f64)> = None;
        for (a, &q) in row.iter().enumerate() {
            if mask[a] {
                continue;
            }
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        best
    }

    /// Writes `state,action,q` rows, state-major.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["state", "action", "q"])?;
        for s in 0..self.states {
            for a in 0..self.actions {
                out.write_record([s.to_string(), a.to_string(), format!("{:?}", self.get(s, a))])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Epsilon-greedy choice among actions whose `mask` entry is false.
pub fn select_action<R: Rng>(
    table: &QTable,
    state: usize,
    mask: &[bool],
    eps: f64,
    rng: &mut R,
) -> Result<usize, QLearnError> {
    let open = mask.iter().filter(|&&m| !m).count();
    if open == 0 {
        return Err(QLearnError::NoAction);
    }
    let u: f64 = rng.gen();
    if u > eps {
        return table.argmax(state, mask).map(|(a, _)| a).ok_or(QLearnError::NoAction);
    }
    let pick = rng.gen_range(0..open);
    Ok(mask.iter().enumerate().filter(|(_, &m)| !m).nth(pick).map(|(a, _)| a).expect("pick is below the open count"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    /// Network power after the last step, partial when the episode failed.
    pub total_pc_w: f64,
    /// Demands attempted, in order.
    pub order: Vec<usize>,
    pub steps: usize,
}

/// One learning episode. `state` is restored to its entry value before returning.
pub fn run_episode<R: Rng>(
    state: &mut NetworkState,
    demands: &[TrafficDemand],
    table: &mut QTable,
    eps: f64,
    cfg: &QLearnConfig,
    rng: &mut R,
) -> EpisodeResult {
    episode(state, demands, table, cfg, |t, s, mask| {
        select_action(t, s, mask, eps, rng).expect("an unmasked action remains")
    })
}

/// Plays `order` as an episode with ordinary Q updates.
pub fn run_forced_episode(
    state: &mut NetworkState,
    demands: &[TrafficDemand],
    table: &mut QTable,
    cfg: &QLearnConfig,
    order: &[usize],
) -> EpisodeResult {
    let mut next = order.iter().copied();
    episode(state, demands, table, cfg, |_, _, _| next.next().expect("order covers every demand"))
}

fn episode(
    state: &mut NetworkState,
    demands: &[TrafficDemand],
    table: &mut QTable,
    cfg: &QLearnConfig,
    mut choose: impl FnMut(&QTable, usize, &[bool]) -> usize,
) -> EpisodeResult {
    let n = demands.len();
    let snapshot = state.snapshot();
    let mut mask = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut s = 0;
    let mut success = n > 0;
    while s < n {
        let a = choose(table, s, &mask);
        order.push(a);
        let outcome = provision(state, &demands[a]);
        let (reward, max_next) = if outcome.provisioned {
            mask[a] = true;
            let done = s + 1 == n;
            let reward = -outcome.delta_pc_w + if done { cfg.bonus_r } else { 0.0 };
            let max_next = if done { 0.0 } else { table.argmax(s + 1, &mask).map_or(0.0, |(_, q)| q) };
            (reward, max_next)
        } else {
            success = false;
            (-cfg.penalty_p, 0.0)
        };
        table.set(s, a, q_update(table.get(s, a), reward, max_next, cfg));
        s += 1;
        if !outcome.provisioned {
            break;
        }
    }
    let result = EpisodeResult { success, total_pc_w: state.total_pc(), steps: order.len(), order };
    state.restore(&snapshot);
    result
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub epsilon: f64,
    pub success: bool,
    pub total_pc_w: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedReplay {
    pub policy: OrderingPolicy,
    pub result: EpisodeResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SuccessBlock {
    pub first_episode: usize,
    pub episodes: usize,
    pub successes: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Cheapest successful plan, replayed from its order; `None` when no episode succeeded.
    pub best: Option<PlanResult>,
    pub best_pc_w: Option<f64>,
    /// Running minimum of successful PC after each logged episode.
    pub best_so_far: Vec<Option<f64>>,
    pub log: Vec<EpisodeLog>,
    pub seed_replays: Vec<SeedReplay>,
    pub table: QTable,
}

impl TrainOutcome {
    /// Success counts per block of [`SUCCESS_BLOCK`] episodes; the last block may be partial.
    pub fn success_blocks(&self) -> Vec<SuccessBlock> {
        self.log
            .chunks(SUCCESS_BLOCK)
            .enumerate()
            .map(|(i, chunk)| SuccessBlock {
                first_episode: i * SUCCESS_BLOCK,
                episodes: chunk.len(),
                successes: chunk.iter().filter(|e| e.success).count(),
            })
            .collect()
    }
}

/// Trains on `demands` starting from `state` (normally empty) and returns the best plan.
/// `checkpoint` is called with the episode count and table every `checkpoint_every`
/// episodes (0 disables it) and once at the end.
pub fn train(
    state: &NetworkState,
    demands: &[TrafficDemand],
    cfg: &QLearnConfig,
    checkpoint_every: usize,
    mut checkpoint: impl FnMut(usize, &QTable),
) -> Result<TrainOutcome, QLearnError> {
    cfg.validate()?;
    let mut work = state.clone();
    let mut table = QTable::new(demands.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let consider = |r: &EpisodeResult, best: &mut Option<(f64, Vec<usize>)>| {
        if r.success && best.as_ref().is_none_or(|(pc, _)| r.total_pc_w < *pc) {
            *best = Some((r.total_pc_w, r.order.clone()));
        }
    };

    let mut seed_replays = Vec::new();
    if cfg.seed_baselines && !demands.is_empty() && cfg.total_episodes > 0 {
        for policy in [OrderingPolicy::Descending, OrderingPolicy::Ascending, OrderingPolicy::IndexOrder] {
            let order = order_demands(demands, policy);
            let result = run_forced_episode(&mut work, demands, &mut table, cfg, &order);
            consider(&result, &mut best);
            seed_replays.push(SeedReplay { policy, result });
        }
    }

    let mut log = Vec::with_capacity(cfg.total_episodes);
    let mut best_so_far = Vec::with_capacity(cfg.total_episodes);
    for ep in 0..cfg.total_episodes {
        let eps = epsilon(ep, cfg);
        let result = run_episode(&mut work, demands, &mut table, eps, cfg, &mut rng);
        consider(&result, &mut best);
        best_so_far.push(best.as_ref().map(|(pc, _)| *pc));
        log.push(EpisodeLog {
            episode: ep,
            epsilon: eps,
            success: result.success,
            total_pc_w: result.total_pc_w,
            steps: result.steps,
        });
        if checkpoint_every > 0 && (ep + 1) % checkpoint_every == 0 && ep + 1 < cfg.total_episodes {
            checkpoint(ep + 1, &table);
        }
    }
    checkpoint(cfg.total_episodes, &table);

    let (best_pc_w, best) = match best {
        Some((pc, order)) => {
            let plan = plan_in_order(state.clone(), demands, &order);
            debug_assert!(plan.success && plan.total_pc_w == pc);
            if plan.total_pc_w != pc {
                log::warn!("replay of the best order gave {} W instead of {pc} W", plan.total_pc_w);
            }
            (Some(pc), Some(plan))
        }
        None => (None, None),
    };
    Ok(TrainOutcome { best, best_pc_w, best_so_far, log, seed_replays, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::PowerCatalog;
    use crate::state::PlanContext;
    use crate::topology::Topology;

    fn cfg() -> QLearnConfig {
        QLearnConfig::default()
    }

    #[test]
    fn epsilon_schedule() {
        let c = cfg();
        assert_eq!(epsilon(0, &c), 1.0);
        assert!((epsilon(1000, &c) - (0.01 + 0.99 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((epsilon(1000, &c) - 0.374201).abs() < 1e-6);
        assert!((epsilon(1_000_000, &c) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn bellman_update() {
        let c = cfg();
        assert!((q_update(0.0, -100.0, 0.0, &c) + 10.0).abs() < 1e-12);
        assert!((q_update(-10.0, -50.0, -20.0, &c) + 15.98).abs() < 1e-9);
        let frozen = QLearnConfig { alpha: 0.0, ..c };
        assert_eq!(q_update(3.5, -1e6, 7.0, &frozen), 3.5);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(QLearnConfig { alpha: 1.5, ..cfg() }.validate().is_err());
        assert!(QLearnConfig { eps_min: 0.5, eps_max: 0.4, ..cfg() }.validate().is_err());
        assert!(QLearnConfig { penalty_p: 0.0, ..cfg() }.validate().is_err());
        let parsed: QLearnConfig = toml::from_str("alpha = 0.2\ntotal_episodes = 5").unwrap();
        assert_eq!(parsed, QLearnConfig { alpha: 0.2, total_episodes: 5, ..cfg() });
    }

    #[test]
    fn greedy_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = QTable::new(10);
        let mut mask = vec![true; 10];
        mask[7] = false;
        assert_eq!(select_action(&t, 0, &mask, 0.0, &mut rng), Ok(7));
        for a in 0..10 {
            t.set(2, a, -10.0 - a as f64);
        }
        t.set(2, 3, -5.0);
        t.set(2, 9, 0.0);
        let mut mask = vec![false; 10];
        mask[9] = true;
        assert_eq!(select_action(&t, 2, &mask, 0.0, &mut rng), Ok(3));
        assert_eq!(select_action(&t, 2, &[true; 10], 0.0, &mut rng), Err(QLearnError::NoAction));
        // ties go to the lowest id
        assert_eq!(select_action(&QTable::new(4), 1, &[true, false, false, false], 0.0, &mut rng), Ok(1));
    }

    #[test]
    fn table_csv() {
        let mut t = QTable::new(1);
        t.set(0, 0, -2.5);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "state,action,q\n0,0,-2.5\n1,0,0.0\n2,0,0.0\n");
    }

    fn two_node(slots: u32) -> NetworkState {
        let topo = Topology::from_edges(2, &[(0, 1, 160.0)], 80.0, slots).unwrap();
        NetworkState::new(PlanContext::new(topo, PowerCatalog::default()))
    }

    fn demand(id: usize, rate: f64) -> TrafficDemand {
        TrafficDemand { demand_id: id, src: 0, dst: 1, rate_gbps: rate }
    }

    #[test]
    fn single_demand_episode() {
        let c = cfg();
        let mut s = two_node(320);
        let before = s.snapshot();
        let mut t = QTable::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = run_episode(&mut s, &[demand(0, 100.0)], &mut t, 1.0, &c, &mut rng);
        assert!(r.success);
        assert_eq!(r.order, vec![0]);
        assert!(s.same_as(&before));
        let delta = r.total_pc_w - s.total_pc();
        let expected = c.alpha * (-delta + c.bonus_r);
        assert!((t.get(0, 0) - expected).abs() < 1e-6, "{} vs {expected}", t.get(0, 0));
    }

    #[test]
    fn failing_first_step() {
        let c = cfg();
        // 400G on one slot cannot fit, and its split parts cannot share the single slot
        let mut s = two_node(1);
        let mut t = QTable::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = run_episode(&mut s, &[demand(0, 400.0)], &mut t, 0.0, &c, &mut rng);
        assert!(!r.success);
        assert_eq!(r.steps, 1);
        assert!((t.get(0, 0) + c.alpha * c.penalty_p).abs() < 1e-6);
    }

    #[test]
    fn episodes_are_permutations() {
        let c = cfg();
        let mut s = two_node(320);
        let demands = [demand(0, 10.0), demand(1, 20.0), demand(2, 30.0)];
        let mut t = QTable::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let r = run_episode(&mut s, &demands, &mut t, 0.5, &c, &mut rng);
            let mut sorted = r.order.clone();
            sorted.sort();
            assert_eq!(sorted, vec![0, 1, 2]);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let c = QLearnConfig { total_episodes: 50, seed: 11, ..cfg() };
        let s = two_node(320);
        let demands = [demand(0, 150.0), demand(1, 60.0), demand(2, 300.0)];
        let a = train(&s, &demands, &c, 0, |_, _| {}).unwrap();
        let b = train(&s, &demands, &c, 0, |_, _| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.table, b.table);
        assert_eq!(a.best_pc_w, b.best_pc_w);
        let best = a.best.unwrap();
        assert_eq!(Some(best.total_pc_w), a.best_pc_w);
        assert_eq!(a.seed_replays.len(), 3);
        assert!(a.best_so_far.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_episodes() {
        let c = QLearnConfig { total_episodes: 0, ..cfg() };
        let mut calls = Vec::new();
        let out = train(&two_node(320), &[demand(0, 10.0)], &c, 10, |e, _| calls.push(e)).unwrap();
        assert!(out.log.is_empty() && out.best.is_none() && out.seed_replays.is_empty());
        assert!(out.success_blocks().is_empty());
        assert_eq!(calls, vec![0]);
    }

    #[test]
    fn checkpoints_and_blocks() {
        let c = QLearnConfig { total_episodes: 2500, seed_baselines: false, ..cfg() };
        let mut calls = Vec::new();
        let out = train(&two_node(320), &[demand(0, 10.0)], &c, 1000, |e, _| calls.push(e)).unwrap();
        assert_eq!(calls, vec![1000, 2000, 2500]);
        let blocks = out.success_blocks();
        assert_eq!(blocks.iter().map(|b| b.episodes).collect::<Vec<_>>(), vec![1000, 1000, 500]);
        assert!(blocks.iter().all(|b| b.successes == b.episodes));
    }
}
