//! Plan files: a JSON record of a finished plan, and a validator that rebuilds the
//! plan from scratch on a fresh state and checks it against the record.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::PlanResult;
use crate::state::{
    Flow, Lightpath, LightpathRequest, NetworkState, NodeUsage, PlanContext, PowerLedger, SegmentRequest,
};
use crate::topology::{TopologyError, TrafficDemand};

const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub planner: String,
    pub topology: String,
    pub traffic_seed: Option<u64>,
    pub learn_seed: Option<u64>,
    pub success: bool,
    pub total_pc_w: f64,
    pub ledger: PowerLedger,
    /// Demand ids in provisioning order; ends with the failed demand when `success` is false.
    pub order: Vec<usize>,
    pub failed_demand: Option<usize>,
    pub demands: Vec<TrafficDemand>,
    pub lightpaths: Vec<Lightpath>,
    pub nodes: Vec<NodeUsage>,
    pub flows: Vec<Flow>,
}

impl PlanDoc {
    pub fn from_result(planner: &str, result: &PlanResult, demands: &[TrafficDemand]) -> Self {
        let state = &result.state;
        Self {
            planner: planner.to_string(),
            topology: state.topology().name.clone().unwrap_or_default(),
            traffic_seed: None,
            learn_seed: None,
            success: result.success,
            total_pc_w: result.total_pc_w,
            ledger: *state.ledger(),
            order: result.order.clone(),
            failed_demand: result.failed_demand,
            demands: demands.to_vec(),
            lightpaths: state.lightpaths().to_vec(),
            nodes: (0..state.topology().num_nodes()).map(|n| state.node_usage(n).clone()).collect(),
            flows: state.flows().to_vec(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan documents serialize")
    }

    pub fn from_json_str(s: &str) -> Result<Self, TopologyError> {
        serde_json::from_str(s).map_err(|e| TopologyError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        fs::write(path, self.to_json_string() + "\n")
            .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        let s = fs::read_to_string(path)
            .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&s)
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Rebuilds `doc` on an empty state over `ctx` and lists every discrepancy or invariant
/// violation found. An empty list means the plan is valid.
pub fn validate_plan(doc: &PlanDoc, ctx: Arc<PlanContext>) -> Vec<String> {
    let mut issues = Vec::new();
    let mut state = NetworkState::new(ctx);
    let n = state.topology().num_nodes();

    if doc.nodes.len() != n {
        issues.push(format!("plan lists {} nodes, topology has {n}", doc.nodes.len()));
    }
    for (i, d) in doc.demands.iter().enumerate() {
        if d.demand_id != i {
            issues.push(format!("demand at position {i} has id {}", d.demand_id));
        }
        if d.src >= n || d.dst >= n || d.src == d.dst {
            issues.push(format!("demand {} has invalid endpoints {} -> {}", d.demand_id, d.src, d.dst));
        }
    }
    let mut seen = vec![false; doc.demands.len()];
    for &id in &doc.order {
        match seen.get_mut(id) {
            Some(s) if !*s => *s = true,
            Some(_) => issues.push(format!("demand {id} appears twice in the order")),
            None => issues.push(format!("order references unknown demand {id}")),
        }
    }
    if doc.success && seen.iter().any(|s| !s) {
        issues.push("plan marked successful but the order misses demands".into());
    }
    if !issues.is_empty() {
        return issues;
    }

    for (i, lp) in doc.lightpaths.iter().enumerate() {
        if lp.id != i {
            issues.push(format!("lightpath at position {i} has id {}", lp.id));
            return issues;
        }
        let req = LightpathRequest {
            src: lp.src,
            dst: lp.dst,
            capacity_gbps: lp.capacity_gbps,
            initial_gbps: 0.0,
            segments: lp
                .segments
                .iter()
                .map(|s| SegmentRequest {
                    fiber_route: s.fiber_route.clone(),
                    option: s.option,
                    slot_start: Some(s.slot_start),
                })
                .collect(),
        };
        if let Err(e) = state.commit_lightpath(&req) {
            issues.push(format!("lightpath {i} cannot be set up: {e}"));
            return issues;
        }
    }
    for f in &doc.flows {
        for &lp in &f.lightpaths {
            if let Err(e) = state.groom(lp, f.rate_gbps) {
                issues.push(format!("flow of demand {} on lightpath {lp}: {e}", f.demand_id));
            }
        }
        state.record_flow(f.clone());
    }

    for (rebuilt, recorded) in state.lightpaths().iter().zip(&doc.lightpaths) {
        let same_shape = Lightpath { used_gbps: recorded.used_gbps, ..rebuilt.clone() } == *recorded;
        if !same_shape || rel_diff(rebuilt.used_gbps, recorded.used_gbps) > REL_TOL {
            issues.push(format!("lightpath {} differs from its rebuild", recorded.id));
        }
    }
    for (node, recorded) in doc.nodes.iter().enumerate() {
        if state.node_usage(node) != recorded {
            issues.push(format!("node {node} equipment differs from its rebuild"));
        }
    }
    let ledger = state.ledger();
    if ledger.max_rel_diff(&doc.ledger) > REL_TOL {
        issues.push(format!("recorded ledger {:?} differs from rebuilt {:?}", doc.ledger, ledger));
    }
    if rel_diff(doc.total_pc_w, ledger.total_w) > REL_TOL {
        issues.push(format!("recorded total {} W differs from rebuilt {} W", doc.total_pc_w, ledger.total_w));
    }
    if rel_diff(doc.ledger.category_sum(), doc.ledger.total_w) > REL_TOL {
        issues.push("recorded categories do not sum to the total".into());
    }
    issues.extend(state.check_invariants());

    let mut carried = vec![0.0; doc.demands.len()];
    for f in &doc.flows {
        let Some(d) = doc.demands.get(f.demand_id) else {
            issues.push(format!("flow references unknown demand {}", f.demand_id));
            continue;
        };
        carried[f.demand_id] += f.rate_gbps;
        let mut at = d.src;
        for &lp in &f.lightpaths {
            match doc.lightpaths.get(lp) {
                Some(l) if l.src == at => at = l.dst,
                _ => {
                    issues.push(format!("flow of demand {} breaks at lightpath {lp}", f.demand_id));
                    break;
                }
            }
        }
        if at != d.dst {
            issues.push(format!("flow of demand {} does not reach node {}", f.demand_id, d.dst));
        }
    }
    let placed = &doc.order[..doc.order.len() - usize::from(!doc.success && !doc.order.is_empty())];
    for &id in placed {
        let want = doc.demands[id].rate_gbps;
        if (carried[id] - want).abs() > 1e-6 * want.max(1.0) {
            issues.push(format!("demand {id} carries {} of {want} Gbps", carried[id]));
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{plan_gh, OrderingPolicy};
    use crate::power::PowerCatalog;
    use crate::topology::Topology;

    fn planned() -> (PlanDoc, Arc<PlanContext>) {
        let topo = Topology::from_edges(3, &[(0, 1, 400.0), (1, 2, 700.0), (0, 2, 1500.0)], 80.0, 320).unwrap();
        let ctx = PlanContext::new(topo, PowerCatalog::default());
        let demands = vec![
            TrafficDemand { demand_id: 0, src: 0, dst: 2, rate_gbps: 230.0 },
            TrafficDemand { demand_id: 1, src: 1, dst: 2, rate_gbps: 35.0 },
            TrafficDemand { demand_id: 2, src: 2, dst: 0, rate_gbps: 520.0 },
        ];
        let r = plan_gh(NetworkState::new(Arc::clone(&ctx)), &demands, OrderingPolicy::Descending);
        assert!(r.success);
        (PlanDoc::from_result("d-gh", &r, &demands), ctx)
    }

    #[test]
    fn valid_plan_round_trips() {
        let (doc, ctx) = planned();
        assert_eq!(validate_plan(&doc, Arc::clone(&ctx)), Vec::<String>::new());
        let back = PlanDoc::from_json_str(&doc.to_json_string()).unwrap();
        assert_eq!(back, doc);
        assert!(validate_plan(&back, ctx).is_empty());
    }

    #[test]
    fn tampering_is_detected() {
        let (doc, ctx) = planned();
        let mut bad = doc.clone();
        bad.total_pc_w += 1.0;
        assert!(!validate_plan(&bad, Arc::clone(&ctx)).is_empty());

        let mut bad = doc.clone();
        bad.flows[0].rate_gbps += 5.0;
        assert!(!validate_plan(&bad, Arc::clone(&ctx)).is_empty());

        let mut bad = doc.clone();
        bad.order.push(bad.order[0]);
        assert!(!validate_plan(&bad, Arc::clone(&ctx)).is_empty());

        if doc.lightpaths.len() > 1 {
            let mut bad = doc.clone();
            let s = bad.lightpaths[0].segments[0].slot_start;
            let route = bad.lightpaths[0].segments[0].fiber_route.clone();
            bad.lightpaths[1].segments[0].fiber_route = route;
            bad.lightpaths[1].segments[0].slot_start = s;
            assert!(!validate_plan(&bad, Arc::clone(&ctx)).is_empty());
        }
    }
}
