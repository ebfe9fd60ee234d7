//! Reach-constrained minimum-power path search over an [`AuxGraph`].
//!
//! Labels carry the distance travelled since the last electrical or regeneration
//! point and the block starts still free along the current transparent segment.
//! Pareto dominance over those resources keeps the label sets small; labels are
//! settled in the order (cost, hops, more lightpath edges, aux node), so the first
//! label to settle at the destination is the deterministic optimum. Edge weights are
//! nonnegative, so a label returning to an aux node is only kept when it arrives with
//! more reach or more free spectrum than its ancestor there, as after a regeneration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{AuxGraph, EdgeKind, Layer};
use crate::state::{NetworkState, Slot, SlotMask};
use crate::topology::FiberDir;

#[derive(Debug, Clone, PartialEq)]
pub enum PathStep {
    Groom { lightpath: usize, from: usize, to: usize },
    Tx { node: usize, option: usize },
    Hop { dir: FiberDir, option: usize },
    Regen { node: usize, from_option: usize, to_option: usize },
    Rx { node: usize, option: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxPath {
    pub steps: Vec<PathStep>,
    pub cost_w: f64,
    pub hops: u32,
    pub lightpath_edges: u32,
}

impl AuxPath {
    pub fn grooms_only(&self) -> bool {
        self.steps.iter().all(|s| matches!(s, PathStep::Groom { .. }))
    }

    pub fn new_lightpaths(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, PathStep::Tx { .. })).count()
    }
}

#[derive(Debug, Clone)]
struct Label {
    aux: usize,
    cost: f64,
    hops: u32,
    lp_edges: u32,
    km: f64,
    seg_hops: u32,
    /// `None` while the segment has no fiber yet.
    starts: Option<SlotMask>,
    /// Source node of the lightpath being built.
    lp_src: usize,
    pred: Option<usize>,
    step: Option<PathStep>,
    alive: bool,
}

impl Label {
    fn dominates(&self, other: &Label) -> bool {
        self.cost <= other.cost
            && self.hops <= other.hops
            && self.lp_edges >= other.lp_edges
            && self.km <= other.km
            && (self.seg_hops > 0 || other.seg_hops == 0)
            && match (&self.starts, &other.starts) {
                (None, _) => true,
                (Some(_), None) => false,
                (Some(a), Some(b)) => a.is_superset(b),
            }
    }
}

struct Queued {
    cost: f64,
    hops: u32,
    lp_edges: u32,
    aux: usize,
    label: usize,
}

impl Queued {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.hops.cmp(&other.hops))
            .then(other.lp_edges.cmp(&self.lp_edges))
            .then(self.aux.cmp(&other.aux))
            .then(self.label.cmp(&other.label))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap pops the smallest key first
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

struct Search {
    labels: Vec<Label>,
    frontier: Vec<Vec<usize>>,
    queue: BinaryHeap<Queued>,
}

impl Search {
    fn offer(&mut self, label: Label) {
        let at = label.aux;
        if self.frontier[at].iter().any(|&i| self.labels[i].dominates(&label)) {
            return;
        }
        let labels = &mut self.labels;
        self.frontier[at].retain(|&i| {
            if label.dominates(&labels[i]) {
                labels[i].alive = false;
                false
            } else {
                true
            }
        });
        let id = self.labels.len();
        self.queue.push(Queued { cost: label.cost, hops: label.hops, lp_edges: label.lp_edges, aux: at, label: id });
        self.labels.push(label);
        self.frontier[at].push(id);
    }

    fn extend(&self, from: usize, aux: usize, cost: f64, step: PathStep) -> Label {
        let p = &self.labels[from];
        Label {
            aux,
            cost: p.cost + cost,
            hops: p.hops + 1,
            lp_edges: p.lp_edges,
            km: 0.0,
            seg_hops: 0,
            starts: None,
            lp_src: p.lp_src,
            pred: Some(from),
            step: Some(step),
            alive: true,
        }
    }

    fn path_to(&self, mut id: usize) -> AuxPath {
        let last = &self.labels[id];
        let (cost_w, hops, lightpath_edges) = (last.cost, last.hops, last.lp_edges);
        let mut steps = Vec::new();
        while let Some(step) = &self.labels[id].step {
            steps.push(step.clone());
            id = self.labels[id].pred.expect("non-root label has a predecessor");
        }
        steps.reverse();
        AuxPath { steps, cost_w, hops, lightpath_edges }
    }
}

/// Labels settled per aux node by [`min_pc_path`].
pub const DEFAULT_SETTLED_PER_NODE: usize = 16;

/// Least-power path from the electrical node of `src` to that of `dst`, or `None`.
pub fn min_pc_path(graph: &AuxGraph, state: &NetworkState, src: usize, dst: usize) -> Option<AuxPath> {
    min_pc_path_bounded(graph, state, src, dst, DEFAULT_SETTLED_PER_NODE)
}

/// As [`min_pc_path`], settling at most `max_settled` labels per aux node. Labels
/// settle cheapest first, so the result is exact unless some aux node needs more
/// than `max_settled` mutually nondominated labels.
pub fn min_pc_path_bounded(
    graph: &AuxGraph,
    state: &NetworkState,
    src: usize,
    dst: usize,
    max_settled: usize,
) -> Option<AuxPath> {
    if src == dst {
        return None;
    }
    let topo = state.topology();
    let cat = state.catalog();
    let mut search =
        Search { labels: Vec::new(), frontier: vec![Vec::new(); graph.num_aux_nodes()], queue: BinaryHeap::new() };
    search.offer(Label {
        aux: graph.electrical(src),
        cost: 0.0,
        hops: 0,
        lp_edges: 0,
        km: 0.0,
        seg_hops: 0,
        starts: None,
        lp_src: src,
        pred: None,
        step: None,
        alive: true,
    });
    let target = graph.electrical(dst);
    let mut settled = vec![0usize; graph.num_aux_nodes()];

    while let Some(q) = search.queue.pop() {
        let id = q.label;
        if !search.labels[id].alive || settled[q.aux] >= max_settled {
            continue;
        }
        settled[q.aux] += 1;
        if q.aux == target {
            return Some(search.path_to(id));
        }
        let here = graph.aux_node(q.aux);
        let u = here.physical_node;

        for (_, edge) in graph.out_edges(q.aux) {
            let p = &search.labels[id];
            let next = match &edge.kind {
                EdgeKind::Tx { .. } => {
                    let Layer::Optical(pos) = graph.aux_node(edge.to).layer else { continue };
                    let option = graph.options[pos];
                    let mut l = search.extend(id, edge.to, edge.weight_w, PathStep::Tx { node: u, option });
                    l.lp_src = u;
                    l
                }
                EdgeKind::Rx { .. } => {
                    if p.seg_hops == 0 || p.lp_src == u {
                        continue;
                    }
                    let Layer::Optical(pos) = here.layer else { continue };
                    let option = graph.options[pos];
                    search.extend(id, edge.to, edge.weight_w, PathStep::Rx { node: u, option })
                }
                EdgeKind::Transmission { dir, free_starts } => {
                    let Layer::Optical(pos) = here.layer else { continue };
                    let option = graph.options[pos];
                    let km = p.km + topo.length(*dir);
                    if km > cat.options[option].mtr_km + 1e-9 {
                        continue;
                    }
                    let starts = match &p.starts {
                        None => free_starts.clone(),
                        Some(s) => s.intersection(free_starts),
                    };
                    if starts.none() {
                        continue;
                    }
                    let mut l = search.extend(id, edge.to, edge.weight_w, PathStep::Hop { dir: *dir, option });
                    l.km = km;
                    l.seg_hops = p.seg_hops + 1;
                    l.starts = Some(starts);
                    l
                }
                EdgeKind::Lightpath { lightpath } => {
                    let v = graph.aux_node(edge.to).physical_node;
                    let mut l = search.extend(
                        id,
                        edge.to,
                        edge.weight_w,
                        PathStep::Groom { lightpath: *lightpath, from: u, to: v },
                    );
                    l.lp_edges += 1;
                    l
                }
            };
            search.offer(next);
        }

        if let (Layer::Optical(pos), Some(slot)) = (here.layer, graph.regen[u]) {
            if search.labels[id].seg_hops > 0 {
                let incoming = graph.options[pos];
                let overhead = match slot {
                    Slot::New => cat.ver_overhead_pc,
                    Slot::Existing(_) => 0.0,
                };
                for (to_pos, &outgoing) in graph.options.iter().enumerate() {
                    let cost = cat.regen_pc(&cat.options[incoming], &cat.options[outgoing]) + overhead;
                    let step = PathStep::Regen { node: u, from_option: incoming, to_option: outgoing };
                    let l = search.extend(id, graph.optical(u, to_pos), cost, step);
                    search.offer(l);
                }
            }
        }
    }
    None
}
