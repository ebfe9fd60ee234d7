//! Physical network, equipment budgets and static traffic matrices.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frequency slots per fiber direction when a topology file does not say otherwise
/// (4 THz of C-band at 12.5 GHz granularity).
pub const DEFAULT_SLOTS_TOTAL: u32 = 320;
pub const DEFAULT_SPAN_KM: f64 = 80.0;
pub const DEFAULT_MAX_SBVTS: u32 = 64;
pub const DEFAULT_MAX_VERS: u32 = 3;
pub const DEFAULT_VER_FRACTION: f64 = 0.30;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("topology has no fibers or is degenerate")]
    Degenerate,
    #[error("topology is not connected")]
    Disconnected,
    #[error("duplicate fiber between nodes {0} and {1}")]
    DuplicateFiber(usize, usize),
    #[error("fiber {0} has nonpositive length")]
    NonPositiveLength(usize),
    #[error("fiber {fiber} references unknown node {node}")]
    UnknownNode { fiber: usize, node: usize },
    #[error("fiber {0} is a self loop")]
    SelfLoop(usize),
    #[error("node ids must form the range 0..{0}")]
    NodeIds(usize),
    #[error("fiber ids must form the range 0..{0}")]
    FiberIds(usize),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("traffic: {0}")]
    Traffic(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Physical degree, derived from the fiber list.
    #[serde(skip)]
    pub degree: u32,
    /// Set by [`Topology::mark_ver_nodes`].
    #[serde(skip)]
    pub ver_eligible: bool,
    #[serde(default = "default_max_sbvts")]
    pub max_sbvts: u32,
    #[serde(default = "default_max_vers")]
    pub max_vers: u32,
}

fn default_max_sbvts() -> u32 {
    DEFAULT_MAX_SBVTS
}

fn default_max_vers() -> u32 {
    DEFAULT_MAX_VERS
}

impl Node {
    pub fn new(id: usize) -> Self {
        Self {
            id,
            name: None,
            degree: 0,
            ver_eligible: false,
            max_sbvts: DEFAULT_MAX_SBVTS,
            max_vers: DEFAULT_MAX_VERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub length_km: f64,
}

impl Fiber {
    pub fn endpoints(&self) -> (usize, usize) {
        (self.a, self.b)
    }
}

/// One unidirectional half of a fiber. `reverse == false` runs `a -> b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FiberDir {
    pub fiber: usize,
    pub reverse: bool,
}

impl FiberDir {
    pub fn new(fiber: usize, reverse: bool) -> Self {
        Self { fiber, reverse }
    }

    /// Dense index in `0..2 * num_fibers`.
    pub fn index(self) -> usize {
        self.fiber * 2 + self.reverse as usize
    }

    pub fn opposite(self) -> Self {
        Self { fiber: self.fiber, reverse: !self.reverse }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjacent {
    pub neighbor: usize,
    pub dir: FiberDir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub name: Option<String>,
    pub nodes: Vec<Node>,
    pub fibers: Vec<Fiber>,
    pub span_km: f64,
    pub slots_total: u32,
    pub ver_fraction: f64,
    adjacency: Vec<Vec<Adjacent>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    span_km: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slots_total: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ver_fraction: Option<f64>,
    nodes: Vec<Node>,
    fibers: Vec<Fiber>,
}

impl Topology {
    /// Validates and assembles a topology, computing degrees and marking VER nodes
    /// with the default top-degree fraction.
    pub fn new(nodes: Vec<Node>, fibers: Vec<Fiber>, span_km: f64, slots_total: u32) -> Result<Self, TopologyError> {
        Self::build(None, nodes, fibers, span_km, slots_total, DEFAULT_VER_FRACTION)
    }

    /// Convenience constructor: nodes `0..n` with default budgets and fibers given as
    /// `(a, b, length_km)`.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        span_km: f64,
        slots_total: u32,
    ) -> Result<Self, TopologyError> {
        let nodes = (0..n).map(Node::new).collect();
        let fibers = edges.iter().enumerate().map(|(id, &(a, b, length_km))| Fiber { id, a, b, length_km }).collect();
        Self::new(nodes, fibers, span_km, slots_total)
    }

    fn build(
        name: Option<String>,
        mut nodes: Vec<Node>,
        mut fibers: Vec<Fiber>,
        span_km: f64,
        slots_total: u32,
        ver_fraction: f64,
    ) -> Result<Self, TopologyError> {
        if !(span_km > 0.0) || !span_km.is_finite() {
            return Err(TopologyError::Invalid(format!("span_km must be positive, got {span_km}")));
        }
        if slots_total == 0 {
            return Err(TopologyError::Invalid("slots_total must be positive".into()));
        }
        if !(ver_fraction > 0.0 && ver_fraction <= 1.0) {
            return Err(TopologyError::Invalid(format!("ver_fraction must lie in (0, 1], got {ver_fraction}")));
        }
        if nodes.len() < 2 || fibers.is_empty() {
            return Err(TopologyError::Degenerate);
        }
        nodes.sort_by_key(|n| n.id);
        if nodes.iter().enumerate().any(|(i, n)| n.id != i) {
            return Err(TopologyError::NodeIds(nodes.len()));
        }
        fibers.sort_by_key(|f| f.id);
        if fibers.iter().enumerate().any(|(i, f)| f.id != i) {
            return Err(TopologyError::FiberIds(fibers.len()));
        }
        if let Some(n) = nodes.iter().find(|n| n.max_sbvts == 0) {
            return Err(TopologyError::Invalid(format!("node {} has max_sbvts = 0", n.id)));
        }

        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for f in &fibers {
            for end in [f.a, f.b] {
                if end >= nodes.len() {
                    return Err(TopologyError::UnknownNode { fiber: f.id, node: end });
                }
            }
            if f.a == f.b {
                return Err(TopologyError::SelfLoop(f.id));
            }
            if !(f.length_km > 0.0) || !f.length_km.is_finite() {
                return Err(TopologyError::NonPositiveLength(f.id));
            }
            if !seen.insert((f.a.min(f.b), f.a.max(f.b))) {
                return Err(TopologyError::DuplicateFiber(f.a, f.b));
            }
            adjacency[f.a].push(Adjacent { neighbor: f.b, dir: FiberDir::new(f.id, false) });
            adjacency[f.b].push(Adjacent { neighbor: f.a, dir: FiberDir::new(f.id, true) });
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|a| (a.neighbor, a.dir));
        }
        for (node, adj) in nodes.iter_mut().zip(&adjacency) {
            node.degree = adj.len() as u32;
        }

        let mut topo = Self { name, nodes, fibers, span_km, slots_total, ver_fraction, adjacency };
        if !topo.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        topo.mark_ver_nodes(ver_fraction);
        Ok(topo)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for a in &self.adjacency[u] {
                if !seen[a.neighbor] {
                    seen[a.neighbor] = true;
                    stack.push(a.neighbor);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Marks the `ceil(fraction * N)` highest-degree nodes as VER-eligible, lower node id
    /// first on equal degree. All other nodes lose eligibility.
    pub fn mark_ver_nodes(&mut self, fraction: f64) {
        let n = self.nodes.len();
        let count = ((fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(self.nodes[i].degree), i));
        for node in &mut self.nodes {
            node.ver_eligible = false;
        }
        for &i in order.iter().take(count) {
            self.nodes[i].ver_eligible = true;
        }
        self.ver_fraction = fraction;
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_fibers(&self) -> usize {
        self.fibers.len()
    }

    pub fn num_dirs(&self) -> usize {
        self.fibers.len() * 2
    }

    pub fn adjacent(&self, node: usize) -> &[Adjacent] {
        &self.adjacency[node]
    }

    pub fn tail(&self, dir: FiberDir) -> usize {
        let f = &self.fibers[dir.fiber];
        if dir.reverse {
            f.b
        } else {
            f.a
        }
    }

    pub fn head(&self, dir: FiberDir) -> usize {
        let f = &self.fibers[dir.fiber];
        if dir.reverse {
            f.a
        } else {
            f.b
        }
    }

    pub fn length(&self, dir: FiberDir) -> f64 {
        self.fibers[dir.fiber].length_km
    }

    pub fn route_length(&self, route: &[FiberDir]) -> f64 {
        route.iter().map(|&d| self.length(d)).sum()
    }

    /// Directed fiber from `u` to `v`, if the two are adjacent.
    pub fn dir_between(&self, u: usize, v: usize) -> Option<FiberDir> {
        self.adjacency.get(u)?.iter().find(|a| a.neighbor == v).map(|a| a.dir)
    }

    pub fn total_degree(&self) -> u64 {
        self.nodes.iter().map(|n| n.degree as u64).sum()
    }

    pub fn ver_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.ver_eligible).map(|n| n.id).collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile = serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
        Self::build(
            file.name,
            file.nodes,
            file.fibers,
            file.span_km,
            file.slots_total.unwrap_or(DEFAULT_SLOTS_TOTAL),
            file.ver_fraction.unwrap_or(DEFAULT_VER_FRACTION),
        )
    }

    pub fn to_json_string(&self) -> String {
        let file = TopologyFile {
            name: self.name.clone(),
            span_km: self.span_km,
            slots_total: Some(self.slots_total),
            ver_fraction: Some(self.ver_fraction),
            nodes: self.nodes.clone(),
            fibers: self.fibers.clone(),
        };
        serde_json::to_string_pretty(&file).expect("topology serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TopologyError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string() + "\n")
            .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })
    }
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<Topology, TopologyError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
    Topology::from_json_str(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficDemand {
    pub demand_id: usize,
    pub src: usize,
    pub dst: usize,
    pub rate_gbps: f64,
}

/// One demand per ordered node pair, flattened row-major (source-major), with integer
/// rates drawn uniformly from `[5, 2 * atd - 5]` Gbps.
pub fn generate_traffic(topology: &Topology, atd_gbps: f64, seed: u64) -> Result<Vec<TrafficDemand>, TopologyError> {
    if !(atd_gbps >= 5.0) || !atd_gbps.is_finite() {
        return Err(TopologyError::Invalid(format!("atd must be at least 5 Gbps, got {atd_gbps}")));
    }
    let lo = 5u32;
    let hi = (2.0 * atd_gbps - 5.0 + 1e-9).floor() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = topology.num_nodes();
    let mut demands = Vec::with_capacity(n * (n - 1));
    for src in 0..n {
        for dst in 0..n {
            if src == dst {
                continue;
            }
            let rate = rng.gen_range(lo..=hi.max(lo));
            demands.push(TrafficDemand { demand_id: demands.len(), src, dst, rate_gbps: rate as f64 });
        }
    }
    Ok(demands)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrafficRow {
    src: usize,
    dst: usize,
    gbps: f64,
}

/// Reads a `src,dst,gbps` CSV. Zero-rate rows are dropped and the rest are
/// re-indexed in row-major order.
pub fn read_traffic_csv<R: std::io::Read>(reader: R, num_nodes: usize) -> Result<Vec<TrafficDemand>, TopologyError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<TrafficRow>() {
        let row = rec.map_err(|e| TopologyError::Traffic(e.to_string()))?;
        if row.src >= num_nodes || row.dst >= num_nodes {
            return Err(TopologyError::Traffic(format!("demand {}->{} references an unknown node", row.src, row.dst)));
        }
        if row.src == row.dst {
            return Err(TopologyError::Traffic(format!("self demand at node {}", row.src)));
        }
        if !row.gbps.is_finite() || row.gbps < 0.0 {
            return Err(TopologyError::Traffic(format!(
                "demand {}->{} has invalid rate {}",
                row.src, row.dst, row.gbps
            )));
        }
        if row.gbps > 0.0 {
            rows.push(row);
        }
    }
    rows.sort_by_key(|r| (r.src, r.dst));
    if let Some(w) = rows.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
        return Err(TopologyError::Traffic(format!("duplicate demand {}->{}", w[0].src, w[0].dst)));
    }
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(demand_id, r)| TrafficDemand { demand_id, src: r.src, dst: r.dst, rate_gbps: r.gbps })
        .collect())
}

pub fn load_traffic(path: impl AsRef<Path>, num_nodes: usize) -> Result<Vec<TrafficDemand>, TopologyError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
    read_traffic_csv(file, num_nodes)
}

pub fn write_traffic_csv<W: std::io::Write>(writer: W, demands: &[TrafficDemand]) -> Result<(), TopologyError> {
    let mut w = csv::Writer::from_writer(writer);
    for d in demands {
        w.serialize(TrafficRow { src: d.src, dst: d.dst, gbps: d.rate_gbps })
            .map_err(|e| TopologyError::Traffic(e.to_string()))?;
    }
    w.flush().map_err(|e| TopologyError::Traffic(e.to_string()))
}
