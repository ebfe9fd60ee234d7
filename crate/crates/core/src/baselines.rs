//! Comparison planners: fixed-order greedy (descending, ascending, index order) and
//! distance-shortest-path provisioning.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::auxgraph::{provision, split_demand};
use crate::power::CapacityFit;
use crate::state::{Flow, LightpathRequest, NetworkState, SegmentRequest, SlotMask};
use crate::topology::{FiberDir, Topology, TrafficDemand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderingPolicy {
    Descending,
    Ascending,
    IndexOrder,
}

/// Demand ids in the order a policy provisions them. Rate ties keep id order.
pub fn order_demands(demands: &[TrafficDemand], policy: OrderingPolicy) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..demands.len()).collect();
    match policy {
        OrderingPolicy::IndexOrder => {}
        OrderingPolicy::Ascending => {
            ids.sort_by(|&a, &b| demands[a].rate_gbps.total_cmp(&demands[b].rate_gbps).then(a.cmp(&b)))
        }
        OrderingPolicy::Descending => {
            ids.sort_by(|&a, &b| demands[b].rate_gbps.total_cmp(&demands[a].rate_gbps).then(a.cmp(&b)))
        }
    }
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planner {
    Sp,
    DGh,
    AGh,
    IGh,
    Qag,
}

impl Planner {
    pub fn name(self) -> &'static str {
        match self {
            Planner::Sp => "sp",
            Planner::DGh => "d-gh",
            Planner::AGh => "a-gh",
            Planner::IGh => "i-gh",
            Planner::Qag => "qag",
        }
    }

    pub fn ordering(self) -> Option<OrderingPolicy> {
        match self {
            Planner::DGh => Some(OrderingPolicy::Descending),
            Planner::AGh => Some(OrderingPolicy::Ascending),
            Planner::IGh => Some(OrderingPolicy::IndexOrder),
            Planner::Sp | Planner::Qag => None,
        }
    }
}

impl fmt::Display for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Planner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sp" => Ok(Planner::Sp),
            "d-gh" => Ok(Planner::DGh),
            "a-gh" => Ok(Planner::AGh),
            "i-gh" => Ok(Planner::IGh),
            "qag" => Ok(Planner::Qag),
            other => Err(format!("unknown planner `{other}` (expected sp, d-gh, a-gh, i-gh or qag)")),
        }
    }
}

/// Outcome of provisioning a demand list in some order.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub success: bool,
    pub total_pc_w: f64,
    /// Demands attempted, in order; the last one failed when `success` is false.
    pub order: Vec<usize>,
    pub failed_demand: Option<usize>,
    pub state: NetworkState,
}

/// Provisions `order` one by one with the auxiliary-graph planner, stopping at the
/// first failure.
pub fn plan_in_order(mut state: NetworkState, demands: &[TrafficDemand], order: &[usize]) -> PlanResult {
    let failed = plan_with(&mut state, demands, order, |s, d| provision(s, d).provisioned);
    finish(state, order, failed)
}

/// Runs `step` over `order`; returns the position of the first failure.
fn plan_with(
    state: &mut NetworkState,
    demands: &[TrafficDemand],
    order: &[usize],
    mut step: impl FnMut(&mut NetworkState, &TrafficDemand) -> bool,
) -> Option<usize> {
    let failed = order.iter().position(|&id| !step(state, &demands[id]));
    if let Some(pos) = failed {
        log::debug!("demand {} could not be provisioned", order[pos]);
    }
    failed
}

fn finish(state: NetworkState, order: &[usize], failed: Option<usize>) -> PlanResult {
    PlanResult {
        success: failed.is_none(),
        total_pc_w: state.total_pc(),
        order: order[..failed.map_or(order.len(), |p| p + 1)].to_vec(),
        failed_demand: failed.map(|p| order[p]),
        state,
    }
}

/// Greedy planner with a fixed ordering policy.
pub fn plan_gh(state: NetworkState, demands: &[TrafficDemand], policy: OrderingPolicy) -> PlanResult {
    plan_in_order(state, demands, &order_demands(demands, policy))
}

/// Shortest-distance route as fiber directions plus its length, ties broken by fewer
/// hops and then by node ids.
pub fn shortest_route(topo: &Topology, src: usize, dst: usize) -> Option<(Vec<FiberDir>, f64)> {
    let n = topo.num_nodes();
    let mut best: Vec<Option<(f64, u32)>> = vec![None; n];
    let mut pred: Vec<Option<FiberDir>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    best[src] = Some((0.0, 0));
    heap.push(Reverse((OrderedFloat(0.0), 0u32, src)));
    while let Some(Reverse((OrderedFloat(d), h, u))) = heap.pop() {
        if best[u] != Some((d, h)) {
            continue;
        }
        if u == dst {
            break;
        }
        for adj in topo.adjacent(u) {
            let cand = (d + topo.length(adj.dir), h + 1);
            let better = match best[adj.neighbor] {
                None => true,
                Some(cur) => cand.0 < cur.0 || (cand.0 == cur.0 && cand.1 < cur.1),
            };
            if better {
                best[adj.neighbor] = Some(cand);
                pred[adj.neighbor] = Some(adj.dir);
                heap.push(Reverse((OrderedFloat(cand.0), cand.1, adj.neighbor)));
            }
        }
    }
    let (dist, _) = best[dst]?;
    let mut route = Vec::new();
    let mut at = dst;
    while at != src {
        let d = pred[at]?;
        route.push(d);
        at = topo.tail(d);
    }
    route.reverse();
    Some((route, dist))
}

/// Shortest-path planner: demands in descending order; each one grooms onto a direct
/// lightpath when one has room, otherwise rides new lightpaths along the
/// distance-shortest route.
pub fn plan_sp(mut state: NetworkState, demands: &[TrafficDemand]) -> PlanResult {
    let order = order_demands(demands, OrderingPolicy::Descending);
    let failed = plan_with(&mut state, demands, &order, sp_provision);
    finish(state, &order, failed)
}

/// Provisions one demand the shortest-path way, restoring the state on failure.
pub fn sp_provision(state: &mut NetworkState, demand: &TrafficDemand) -> bool {
    let snapshot = state.snapshot();
    let ok = sp_part(state, demand);
    if !ok {
        state.restore(&snapshot);
    }
    ok
}

fn sp_part(state: &mut NetworkState, demand: &TrafficDemand) -> bool {
    if demand.rate_gbps <= 0.0 {
        return true;
    }
    let capacity = match state.catalog().capacity_class(demand.rate_gbps) {
        CapacityFit::Class(c) => c,
        CapacityFit::SplitRequired => return sp_split(state, demand),
    };
    let direct = state
        .lightpaths()
        .iter()
        .find(|lp| lp.src == demand.src && lp.dst == demand.dst && lp.free_gbps() + 1e-9 >= demand.rate_gbps)
        .map(|lp| lp.id);
    if let Some(lp) = direct {
        if state.groom(lp, demand.rate_gbps).is_ok() {
            state.record_flow(Flow { demand_id: demand.demand_id, rate_gbps: demand.rate_gbps, lightpaths: vec![lp] });
            return true;
        }
    }
    let Some((route, _)) = shortest_route(state.topology(), demand.src, demand.dst) else {
        return false;
    };
    let snapshot = state.snapshot();
    match setup_along(state, &route, capacity, demand.rate_gbps) {
        Some(lightpaths) => {
            state.record_flow(Flow { demand_id: demand.demand_id, rate_gbps: demand.rate_gbps, lightpaths });
            true
        }
        None => {
            state.restore(&snapshot);
            sp_split(state, demand)
        }
    }
}

fn sp_split(state: &mut NetworkState, demand: &TrafficDemand) -> bool {
    match split_demand(state.catalog(), demand) {
        Ok((a, b)) => sp_part(state, &a) && sp_part(state, &b),
        Err(_) => false,
    }
}

/// Cheapest option of `capacity` that reaches `route` and finds a common free block.
fn feasible_option(state: &NetworkState, route: &[FiberDir], capacity: u32) -> Option<usize> {
    let topo = state.topology();
    let km = topo.route_length(route);
    let cat = state.catalog();
    let mut candidates: Vec<usize> =
        cat.options_for(capacity).filter(|(_, o)| o.mtr_km >= km).map(|(i, _)| i).collect();
    candidates.sort_by(|&a, &b| {
        let (oa, ob) = (&cat.options[a], &cat.options[b]);
        oa.pc_watts.total_cmp(&ob.pc_watts).then(oa.data_slots.cmp(&ob.data_slots)).then(a.cmp(&b))
    });
    candidates.into_iter().find(|&opt| {
        let mut occ = SlotMask::empty(topo.slots_total);
        for d in route {
            occ.union_with(state.occupancy(*d));
        }
        !occ.free_starts(state.block_width(opt)).none()
    })
}

/// Sets up the chain of lightpaths a shortest-path planner needs along `route`,
/// regenerating at VER nodes when reach runs out and terminating electrically where
/// no VER is available. Returns the lightpath ids, or `None` (state possibly modified).
fn setup_along(state: &mut NetworkState, route: &[FiberDir], capacity: u32, rate: f64) -> Option<Vec<usize>> {
    let ctx = std::sync::Arc::clone(state.context());
    let topo = &ctx.topology;
    let nodes: Vec<usize> = std::iter::once(topo.tail(route[0])).chain(route.iter().map(|d| topo.head(*d))).collect();
    let k = route.len();
    let mut lightpaths = Vec::new();
    let mut lp_start = 0;
    let mut segments: Vec<SegmentRequest> = Vec::new();
    let mut seg_start = 0;
    while seg_start < k {
        // furthest node reachable transparently from seg_start
        let reach = (seg_start + 1..=k)
            .take_while(|&j| feasible_option(state, &route[seg_start..j], capacity).is_some())
            .last()?;
        let (end, regenerate) = if reach == k {
            (k, false)
        } else {
            match (seg_start + 1..=reach).rev().find(|&m| state.ver_slot(nodes[m]).is_some()) {
                Some(m) => (m, true),
                None => (reach, false),
            }
        };
        let option = feasible_option(state, &route[seg_start..end], capacity)?;
        segments.push(SegmentRequest { fiber_route: route[seg_start..end].to_vec(), option, slot_start: None });
        if !regenerate {
            let req = LightpathRequest {
                src: nodes[lp_start],
                dst: nodes[end],
                capacity_gbps: capacity,
                initial_gbps: rate,
                segments: std::mem::take(&mut segments),
            };
            let (id, _) = state.commit_lightpath(&req).ok()?;
            lightpaths.push(id);
            lp_start = end;
        }
        seg_start = end;
    }
    Some(lightpaths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::PowerCatalog;
    use crate::state::PlanContext;

    fn demands(rates: &[f64]) -> Vec<TrafficDemand> {
        rates.iter().enumerate().map(|(i, &r)| TrafficDemand { demand_id: i, src: 0, dst: 1, rate_gbps: r }).collect()
    }

    #[test]
    fn ordering_policies() {
        let d = demands(&[10.0, 40.0, 25.0]);
        assert_eq!(order_demands(&d, OrderingPolicy::Descending), vec![1, 2, 0]);
        assert_eq!(order_demands(&d, OrderingPolicy::Ascending), vec![0, 2, 1]);
        assert_eq!(order_demands(&d, OrderingPolicy::IndexOrder), vec![0, 1, 2]);
        let flat = demands(&[7.0, 7.0, 7.0]);
        assert_eq!(order_demands(&flat, OrderingPolicy::Descending), vec![0, 1, 2]);
    }

    #[test]
    fn planner_names_round_trip() {
        for p in [Planner::Sp, Planner::DGh, Planner::AGh, Planner::IGh, Planner::Qag] {
            assert_eq!(p.name().parse::<Planner>().unwrap(), p);
        }
        assert!("x-gh".parse::<Planner>().is_err());
    }

    #[test]
    fn sp_equals_dgh_on_two_nodes() {
        let topo = Topology::from_edges(2, &[(0, 1, 300.0)], 80.0, 320).unwrap();
        let ctx = PlanContext::new(topo, PowerCatalog::default());
        let d = demands(&[30.0, 80.0, 15.0, 150.0]);
        let sp = plan_sp(NetworkState::new(ctx.clone()), &d);
        let gh = plan_gh(NetworkState::new(ctx), &d, OrderingPolicy::Descending);
        assert!(sp.success && gh.success);
        assert_eq!(sp.total_pc_w, gh.total_pc_w);
        assert!(sp.state.check_invariants().is_empty());
    }

    #[test]
    fn sp_splits_large_demands() {
        let topo = Topology::from_edges(3, &[(0, 1, 300.0), (1, 2, 300.0)], 80.0, 320).unwrap();
        let ctx = PlanContext::new(topo, PowerCatalog::default());
        let d = vec![TrafficDemand { demand_id: 0, src: 0, dst: 2, rate_gbps: 500.0 }];
        let sp = plan_sp(NetworkState::new(ctx), &d);
        assert!(sp.success);
        let caps: Vec<u32> = sp.state.lightpaths().iter().map(|l| l.capacity_gbps).collect();
        assert_eq!(caps, vec![400, 100]);
        assert!(sp.state.check_invariants().is_empty(), "{:?}", sp.state.check_invariants());
    }

    #[test]
    fn sp_regenerates_or_terminates_when_reach_runs_out() {
        // 0 -(1500)- 1 -(1500)- 2; 400G reaches 2500 km at most
        let topo = Topology::from_edges(3, &[(0, 1, 1500.0), (1, 2, 1500.0)], 80.0, 320).unwrap();
        let ctx = PlanContext::new(topo.clone(), PowerCatalog::default());
        let d = vec![TrafficDemand { demand_id: 0, src: 0, dst: 2, rate_gbps: 300.0 }];
        let sp = plan_sp(NetworkState::new(ctx), &d);
        assert!(sp.success);
        assert_eq!(sp.state.lightpaths().len(), 1);
        assert_eq!(sp.state.lightpaths()[0].regens.len(), 1);

        let mut no_ver = topo;
        for n in &mut no_ver.nodes {
            n.max_vers = 0;
        }
        let ctx = PlanContext::new(no_ver, PowerCatalog::default());
        let sp = plan_sp(NetworkState::new(ctx), &d);
        assert!(sp.success);
        assert_eq!(sp.state.lightpaths().len(), 2);
        assert!(sp.state.check_invariants().is_empty(), "{:?}", sp.state.check_invariants());
    }

    #[test]
    fn infeasible_plan_reports_failure() {
        let topo = Topology::from_edges(2, &[(0, 1, 100.0)], 80.0, 1).unwrap();
        let ctx = PlanContext::new(topo, PowerCatalog::default());
        let d = demands(&[40.0, 40.0, 40.0]);
        let r = plan_gh(NetworkState::new(ctx), &d, OrderingPolicy::IndexOrder);
        assert!(!r.success);
        assert_eq!(r.failed_demand, Some(1));
        assert_eq!(r.order, vec![0, 1]);
    }
}
