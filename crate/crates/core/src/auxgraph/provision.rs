//! Greedy provisioning of one demand: build the auxiliary graph, take the cheapest
//! path, split the demand when no path exists.

use thiserror::Error;

use super::{build_aux_graph, min_pc_path, AuxPath, PathStep};
use crate::power::{CapacityFit, PowerCatalog};
use crate::state::{Flow, LightpathRequest, NetworkState, SegmentRequest, StateError};
use crate::topology::TrafficDemand;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProvisionOutcome {
    pub provisioned: bool,
    pub delta_pc_w: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("{0} Gbps does not exceed the smallest capacity class")]
    Unsplittable(f64),
}

/// Splits a demand so that the first part equals a capacity class: the largest class
/// strictly below the rate, or the largest class outright when the rate exceeds it.
pub fn split_demand(
    catalog: &PowerCatalog,
    demand: &TrafficDemand,
) -> Result<(TrafficDemand, TrafficDemand), SplitError> {
    let rate = demand.rate_gbps;
    let classes = catalog.capacity_classes();
    let first = if rate > catalog.max_capacity() as f64 {
        catalog.max_capacity()
    } else {
        classes.iter().copied().filter(|&c| (c as f64) < rate).max().ok_or(SplitError::Unsplittable(rate))?
    };
    let part = |rate_gbps| TrafficDemand { rate_gbps, ..demand.clone() };
    Ok((part(first as f64), part(rate - first as f64)))
}

/// Executes a path found by [`min_pc_path`] for `rate_gbps` of demand `demand_id`:
/// grooms onto lightpath edges and sets up a lightpath for every optical chain.
/// Atomic: on error the state is unchanged.
pub fn apply_path(
    state: &mut NetworkState,
    path: &AuxPath,
    demand_id: usize,
    rate_gbps: f64,
) -> Result<f64, StateError> {
    let snapshot = (path.steps.len() > 1).then(|| state.snapshot());
    let result = apply_steps(state, path, rate_gbps);
    match result {
        Ok((delta, lightpaths)) => {
            state.record_flow(Flow { demand_id, rate_gbps, lightpaths });
            Ok(delta)
        }
        Err(e) => {
            if let Some(s) = snapshot {
                state.restore(&s);
            }
            Err(e)
        }
    }
}

fn apply_steps(state: &mut NetworkState, path: &AuxPath, rate_gbps: f64) -> Result<(f64, Vec<usize>), StateError> {
    let mut delta = 0.0;
    let mut ridden = Vec::new();
    let mut pending: Option<LightpathRequest> = None;
    for step in &path.steps {
        match step {
            PathStep::Groom { lightpath, .. } => {
                delta += state.groom(*lightpath, rate_gbps)?;
                ridden.push(*lightpath);
            }
            PathStep::Tx { node, option } => {
                let capacity_gbps = state.catalog().options[*option].capacity_gbps;
                pending = Some(LightpathRequest {
                    src: *node,
                    dst: *node,
                    capacity_gbps,
                    initial_gbps: rate_gbps,
                    segments: vec![SegmentRequest { fiber_route: Vec::new(), option: *option, slot_start: None }],
                });
            }
            PathStep::Hop { dir, .. } => {
                let req = pending.as_mut().ok_or_else(|| StateError::BadRoute("hop outside a lightpath".into()))?;
                req.segments.last_mut().expect("open segment").fiber_route.push(*dir);
            }
            PathStep::Regen { to_option, .. } => {
                let req =
                    pending.as_mut().ok_or_else(|| StateError::BadRoute("regeneration outside a lightpath".into()))?;
                req.segments.push(SegmentRequest { fiber_route: Vec::new(), option: *to_option, slot_start: None });
            }
            PathStep::Rx { node, .. } => {
                let mut req =
                    pending.take().ok_or_else(|| StateError::BadRoute("termination without origin".into()))?;
                req.dst = *node;
                let (id, d) = state.commit_lightpath(&req)?;
                delta += d;
                ridden.push(id);
            }
        }
    }
    if pending.is_some() {
        return Err(StateError::BadRoute("lightpath left open".into()));
    }
    Ok((delta, ridden))
}

/// Provisions one demand with the least power increase. On failure the state is
/// restored to what it was before the call.
pub fn provision(state: &mut NetworkState, demand: &TrafficDemand) -> ProvisionOutcome {
    let before = state.total_pc();
    let snapshot = state.snapshot();
    if provision_part(state, demand) {
        ProvisionOutcome { provisioned: true, delta_pc_w: state.total_pc() - before }
    } else {
        state.restore(&snapshot);
        ProvisionOutcome { provisioned: false, delta_pc_w: 0.0 }
    }
}

fn provision_part(state: &mut NetworkState, demand: &TrafficDemand) -> bool {
    if demand.rate_gbps <= 0.0 {
        return true;
    }
    if let CapacityFit::Class(capacity) = state.catalog().capacity_class(demand.rate_gbps) {
        let graph = build_aux_graph(state, demand.rate_gbps, capacity);
        if let Some(path) = min_pc_path(&graph, state, demand.src, demand.dst) {
            match apply_path(state, &path, demand.demand_id, demand.rate_gbps) {
                Ok(delta) => {
                    log::trace!(
                        "{}",
                        serde_json::json!({
                            "demand": demand.demand_id,
                            "src": demand.src,
                            "dst": demand.dst,
                            "rate_gbps": demand.rate_gbps,
                            "path_cost_w": path.cost_w,
                            "delta_pc_w": delta,
                            "steps": format!("{:?}", path.steps),
                        })
                    );
                    return true;
                }
                Err(e) => log::debug!("demand {}: path rejected at commit: {e}", demand.demand_id),
            }
        }
    }
    match split_demand(state.catalog(), demand) {
        Ok((first, second)) => provision_part(state, &first) && provision_part(state, &second),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::PlanContext;
    use crate::topology::Topology;

    fn demand(rate: f64) -> TrafficDemand {
        TrafficDemand { demand_id: 0, src: 0, dst: 1, rate_gbps: rate }
    }

    #[test]
    fn split_rule() {
        let cat = PowerCatalog::default();
        let rates = |d: &TrafficDemand| {
            let (a, b) = split_demand(&cat, d).unwrap();
            (a.rate_gbps, b.rate_gbps)
        };
        assert_eq!(rates(&demand(500.0)), (400.0, 100.0));
        assert_eq!(rates(&demand(150.0)), (100.0, 50.0));
        assert_eq!(rates(&demand(100.0)), (40.0, 60.0));
        assert_eq!(split_demand(&cat, &demand(40.0)), Err(SplitError::Unsplittable(40.0)));
    }

    fn two_node(len: f64, slots: u32) -> NetworkState {
        let topo = Topology::from_edges(2, &[(0, 1, len)], 80.0, slots).unwrap();
        NetworkState::new(PlanContext::new(topo, PowerCatalog::default()))
    }

    #[test]
    fn two_node_provisioning() {
        let mut s = two_node(160.0, 320);
        let first = provision(&mut s, &demand(100.0));
        assert!(first.provisioned);
        // cheapest 100G row reaching 160 km is MTR 600 at 198 W:
        // two ports + two half-transponders + three amplifier sites, one direction
        assert!((first.delta_pc_w - (2.0 * 560.0 + 198.0 + 3.0 * 170.0)).abs() < 1e-9);
        let second = provision(&mut s, &TrafficDemand { demand_id: 1, ..demand(100.0) });
        assert!(second.provisioned);
        assert!(second.delta_pc_w < first.delta_pc_w);
        // both SBVTs have a free slice, the amplifiers are already on
        assert!((second.delta_pc_w - 198.0).abs() < 1e-9, "{}", second.delta_pc_w);
        let groomed = provision(&mut s, &TrafficDemand { demand_id: 2, ..demand(0.0) });
        assert!(groomed.provisioned && groomed.delta_pc_w == 0.0);
        assert!(s.check_invariants().is_empty(), "{:?}", s.check_invariants());
    }

    #[test]
    fn grooming_is_free() {
        let mut s = two_node(160.0, 320);
        provision(&mut s, &demand(30.0));
        let out = provision(&mut s, &TrafficDemand { demand_id: 1, ..demand(10.0) });
        assert_eq!(out, ProvisionOutcome { provisioned: true, delta_pc_w: 0.0 });
        assert_eq!(s.lightpaths().len(), 1);
        assert_eq!(s.lightpaths()[0].used_gbps, 40.0);
    }

    #[test]
    fn exhausted_network_rejects_without_mutation() {
        let mut s = two_node(160.0, 1);
        assert!(provision(&mut s, &demand(40.0)).provisioned);
        let snap = s.snapshot();
        let out = provision(&mut s, &TrafficDemand { demand_id: 1, ..demand(40.0) });
        assert!(!out.provisioned);
        assert!(s.same_as(&snap));
    }

    #[test]
    fn oversized_demand_is_split() {
        let mut s = two_node(160.0, 320);
        let out = provision(&mut s, &demand(500.0));
        assert!(out.provisioned);
        let caps: Vec<u32> = s.lightpaths().iter().map(|l| l.capacity_gbps).collect();
        assert_eq!(caps, vec![400, 100]);
        assert_eq!(s.flows().len(), 2);
        assert!(s.check_invariants().is_empty(), "{:?}", s.check_invariants());
    }
}
