#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use eonplan::state::PlanContext;
use eonplan::{NetworkState, PowerCatalog, Topology, TrafficDemand};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Connected topology: random spanning tree plus each remaining pair with probability `extra`.
pub fn random_topology(rng: &mut ChaCha8Rng, n: usize, extra: f64, km: (f64, f64), slots: u32) -> Topology {
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push((u, v, rng.gen_range(km.0..km.1).round()));
    }
    for u in 0..n {
        for v in u + 1..n {
            if !edges.iter().any(|&(a, b, _)| (a, b) == (u, v)) && rng.gen_bool(extra) {
                edges.push((u, v, rng.gen_range(km.0..km.1).round()));
            }
        }
    }
    Topology::from_edges(n, &edges, 80.0, slots).unwrap()
}

pub fn random_demand(rng: &mut ChaCha8Rng, n: usize, id: usize, rate: (u32, u32)) -> TrafficDemand {
    let src = rng.gen_range(0..n);
    let dst = (src + rng.gen_range(1..n)) % n;
    TrafficDemand { demand_id: id, src, dst, rate_gbps: rng.gen_range(rate.0..=rate.1) as f64 }
}

/// `count` demands on distinct ordered pairs, ids in row-major order.
pub fn distinct_demands(rng: &mut ChaCha8Rng, n: usize, count: usize, rate: (u32, u32)) -> Vec<TrafficDemand> {
    let mut pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d))).collect();
    rand::seq::SliceRandom::shuffle(pairs.as_mut_slice(), rng);
    pairs.truncate(count);
    pairs.sort();
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, (src, dst))| TrafficDemand {
            demand_id: i,
            src,
            dst,
            rate_gbps: rng.gen_range(rate.0..=rate.1) as f64,
        })
        .collect()
}

pub fn context(topo: Topology) -> Arc<PlanContext> {
    PlanContext::new(topo, PowerCatalog::default())
}

pub fn empty_state(ctx: &Arc<PlanContext>) -> NetworkState {
    NetworkState::new(Arc::clone(ctx))
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
