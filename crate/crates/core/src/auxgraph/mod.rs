//! Per-demand auxiliary graph and the greedy minimum-power provisioning built on it.
//!
//! Every physical node contributes one electrical auxiliary node and one optical
//! auxiliary node per transmission option of the demand's capacity class. Edge
//! weights are the power the current state would additionally draw if the edge were
//! used. Regeneration is not an edge: the path search resets transparent reach at
//! nodes that can host a VER.

mod provision;
mod search;

pub use provision::{apply_path, provision, split_demand, ProvisionOutcome, SplitError};
pub use search::{min_pc_path, min_pc_path_bounded, AuxPath, PathStep, DEFAULT_SETTLED_PER_NODE};

use crate::state::{NetworkState, Slot, SlotMask};
use crate::topology::FiberDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Layer {
    Electrical,
    /// Position within [`AuxGraph::options`].
    Optical(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AuxNode {
    pub physical_node: usize,
    pub layer: Layer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeKind {
    /// Optical hop over one fiber direction; `free_starts` lists the block starts
    /// still free on it for this option's width.
    Transmission { dir: FiberDir, free_starts: SlotMask },
    /// Electrical to optical: originate a lightpath on an SBVT.
    Tx { sbvt: Slot },
    /// Optical to electrical: terminate a lightpath on an SBVT.
    Rx { sbvt: Slot },
    /// Ride an existing lightpath that has room for the whole demand.
    Lightpath { lightpath: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub weight_w: f64,
}

#[derive(Debug, Clone)]
pub struct AuxGraph {
    pub rate_gbps: f64,
    pub capacity_gbps: u32,
    /// Catalog indices of the class's options, in catalog order.
    pub options: Vec<usize>,
    /// VER availability per physical node, `None` where no regeneration is possible.
    pub regen: Vec<Option<Slot>>,
    num_physical: usize,
    pub edges: Vec<AuxEdge>,
    out: Vec<Vec<usize>>,
}

impl AuxGraph {
    pub fn num_aux_nodes(&self) -> usize {
        self.num_physical * (1 + self.options.len())
    }

    pub fn electrical(&self, node: usize) -> usize {
        node
    }

    pub fn optical(&self, node: usize, option_pos: usize) -> usize {
        self.num_physical + node * self.options.len() + option_pos
    }

    pub fn aux_node(&self, id: usize) -> AuxNode {
        if id < self.num_physical {
            AuxNode { physical_node: id, layer: Layer::Electrical }
        } else {
            let k = self.options.len();
            let rel = id - self.num_physical;
            AuxNode { physical_node: rel / k, layer: Layer::Optical(rel % k) }
        }
    }

    pub fn out_edges(&self, aux: usize) -> impl Iterator<Item = (usize, &AuxEdge)> {
        self.out[aux].iter().map(move |&e| (e, &self.edges[e]))
    }

    /// First edge between two auxiliary nodes, if any.
    pub fn edge_between(&self, from: AuxNode, to: AuxNode) -> Option<&AuxEdge> {
        let f = self.id_of(from);
        let t = self.id_of(to);
        self.out_edges(f).map(|(_, e)| e).find(|e| e.to == t)
    }

    pub fn id_of(&self, node: AuxNode) -> usize {
        match node.layer {
            Layer::Electrical => self.electrical(node.physical_node),
            Layer::Optical(k) => self.optical(node.physical_node, k),
        }
    }

    fn push(&mut self, edge: AuxEdge) {
        self.out[edge.from].push(self.edges.len());
        self.edges.push(edge);
    }
}

/// Builds the auxiliary graph of one demand of `rate_gbps` against the current state,
/// for lightpaths of `capacity_gbps`.
pub fn build_aux_graph(state: &NetworkState, rate_gbps: f64, capacity_gbps: u32) -> AuxGraph {
    let topo = state.topology();
    let cat = state.catalog();
    let n = topo.num_nodes();
    let options: Vec<usize> = cat.options_for(capacity_gbps).map(|(i, _)| i).collect();
    let k = options.len();
    let mut g = AuxGraph {
        rate_gbps,
        capacity_gbps,
        regen: (0..n).map(|u| state.ver_slot(u)).collect(),
        options,
        num_physical: n,
        edges: Vec::new(),
        out: vec![Vec::new(); n * (1 + k)],
    };

    for u in 0..n {
        let Some(sbvt) = state.sbvt_slot(u, capacity_gbps) else {
            continue;
        };
        let port = state.port_increment(u, rate_gbps);
        for pos in 0..k {
            let half = cat.options[g.options[pos]].pc_watts / 2.0;
            let (e, o) = (g.electrical(u), g.optical(u, pos));
            g.push(AuxEdge { from: e, to: o, kind: EdgeKind::Tx { sbvt }, weight_w: port + half });
            g.push(AuxEdge { from: o, to: e, kind: EdgeKind::Rx { sbvt }, weight_w: port + half });
        }
    }

    for u in 0..n {
        for adj in topo.adjacent(u) {
            let len = topo.length(adj.dir);
            let weight_w = state.amp_increment(adj.dir);
            for pos in 0..k {
                let opt = g.options[pos];
                if len > cat.options[opt].mtr_km {
                    continue;
                }
                let free_starts = state.free_starts(adj.dir, state.block_width(opt));
                if free_starts.none() {
                    continue;
                }
                let (from, to) = (g.optical(u, pos), g.optical(adj.neighbor, pos));
                g.push(AuxEdge { from, to, kind: EdgeKind::Transmission { dir: adj.dir, free_starts }, weight_w });
            }
        }
    }

    for lp in state.lightpaths() {
        if lp.free_gbps() + 1e-9 >= rate_gbps {
            let (from, to) = (g.electrical(lp.src), g.electrical(lp.dst));
            let weight_w = state.port_increment(lp.src, rate_gbps) + state.port_increment(lp.dst, rate_gbps);
            g.push(AuxEdge { from, to, kind: EdgeKind::Lightpath { lightpath: lp.id }, weight_w });
        }
    }
    g
}
