//! Mutable provisioning substrate: spectrum occupancy, the lightpath registry,
//! per-node equipment and an incrementally maintained power ledger.
//!
//! All mutating operations either succeed completely or leave the state untouched.
//! Snapshots copy the mutable part only; topology and catalog are shared.

mod spectrum;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use spectrum::SlotMask;

use crate::power::{amp_sites, PowerCatalog, TransmissionOption};
use crate::topology::{FiberDir, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("no free contiguous spectrum block of {0} slots")]
    NoSpectrum(u32),
    #[error("spectrum conflict on fiber {fiber} at slot {slot_start}")]
    SpectrumConflict { fiber: usize, slot_start: u32 },
    #[error("SBVT budget exhausted at node {0}")]
    SbvtBudget(usize),
    #[error("VER budget exhausted at node {0}")]
    VerBudget(usize),
    #[error("node {0} cannot host a VER")]
    NotVerEligible(usize),
    #[error("segment of {length_km} km exceeds option reach {mtr_km} km")]
    ReachExceeded { length_km: f64, mtr_km: f64 },
    #[error("malformed lightpath route: {0}")]
    BadRoute(String),
    #[error("option {option} does not carry {capacity} Gbps")]
    CapacityMismatch { option: usize, capacity: u32 },
    #[error("lightpath {lightpath} has {free} Gbps free, {requested} requested")]
    InsufficientCapacity { lightpath: usize, free: f64, requested: f64 },
    #[error("unknown lightpath {0}")]
    UnknownLightpath(usize),
}

/// Immutable inputs shared by every state derived from one planning instance.
#[derive(Debug)]
pub struct PlanContext {
    pub topology: Topology,
    pub catalog: PowerCatalog,
    /// Extra free slots reserved after each segment's block.
    pub guard_band: u32,
    fiber_sites: Vec<u32>,
    oxc_w: f64,
}

impl PlanContext {
    pub fn new(topology: Topology, catalog: PowerCatalog) -> Arc<Self> {
        Self::with_guard_band(topology, catalog, 0)
    }

    pub fn with_guard_band(topology: Topology, catalog: PowerCatalog, guard_band: u32) -> Arc<Self> {
        let fiber_sites = topology
            .fibers
            .iter()
            .map(|f| amp_sites(f.length_km, topology.span_km).expect("validated fiber"))
            .collect();
        let oxc_w = topology.nodes.iter().map(|n| catalog.oxc_pc(n.degree as i64).expect("nonnegative degree")).sum();
        Arc::new(Self { topology, catalog, guard_band, fiber_sites, oxc_w })
    }

    /// Amplifier sites on a fiber, node-end sites included.
    pub fn fiber_sites(&self, fiber: usize) -> u32 {
        self.fiber_sites[fiber]
    }

    pub fn oxc_total(&self) -> f64 {
        self.oxc_w
    }

    pub fn option(&self, index: usize) -> &TransmissionOption {
        &self.catalog.options[index]
    }

    /// Router ports needed for `gbps` of add/drop traffic.
    pub fn ports_for(&self, gbps: f64) -> u32 {
        (gbps / self.catalog.router_port_capacity - EPS).ceil().max(0.0) as u32
    }

    fn fiber_amp_pc(&self, fiber: usize, active_dirs: u32) -> f64 {
        self.fiber_sites[fiber] as f64 * self.catalog.amp_site_pc(active_dirs).expect("0..=2 dirs")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransparentSegment {
    pub fiber_route: Vec<FiberDir>,
    /// Catalog index of the transmission option.
    pub option: usize,
    pub slot_start: u32,
    pub slot_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegenPoint {
    pub node: usize,
    pub ver: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lightpath {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub capacity_gbps: u32,
    pub used_gbps: f64,
    pub segments: Vec<TransparentSegment>,
    pub tx_sbvt: usize,
    pub rx_sbvt: usize,
    pub regens: Vec<RegenPoint>,
}

impl Lightpath {
    pub fn free_gbps(&self) -> f64 {
        self.capacity_gbps as f64 - self.used_gbps
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sbvt {
    pub tx_ends: u32,
    pub rx_ends: u32,
    pub attached_gbps: u32,
}

impl Sbvt {
    pub fn ends(&self) -> u32 {
        self.tx_ends + self.rx_ends
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ver {
    pub ssrs_used: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeUsage {
    pub sbvts: Vec<Sbvt>,
    pub vers: Vec<Ver>,
    /// Traffic the router exchanges with lightpath ends at this node, both directions.
    pub router_gbps: f64,
    /// Active router ports, enough to carry `router_gbps`.
    pub router_ports: u32,
}

impl NodeUsage {
    pub fn router_ports_active(&self) -> usize {
        self.router_ports as usize
    }
}

/// Where a new lightpath end or regeneration would land.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Existing(usize),
    New,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerLedger {
    pub router_w: f64,
    pub sbvt_w: f64,
    pub amp_w: f64,
    pub ver_w: f64,
    pub oxc_w: f64,
    pub total_w: f64,
}

impl PowerLedger {
    pub fn category_sum(&self) -> f64 {
        self.router_w + self.sbvt_w + self.amp_w + self.ver_w + self.oxc_w
    }

    fn add(&mut self, d: &PowerLedger) {
        self.router_w += d.router_w;
        self.sbvt_w += d.sbvt_w;
        self.amp_w += d.amp_w;
        self.ver_w += d.ver_w;
        self.oxc_w += d.oxc_w;
        self.total_w += d.category_sum();
    }

    /// Largest relative deviation between two ledgers over all categories and the total.
    pub fn max_rel_diff(&self, other: &PowerLedger) -> f64 {
        let pairs = [
            (self.router_w, other.router_w),
            (self.sbvt_w, other.sbvt_w),
            (self.amp_w, other.amp_w),
            (self.ver_w, other.ver_w),
            (self.oxc_w, other.oxc_w),
            (self.total_w, other.total_w),
        ];
        pairs.iter().map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0)).fold(0.0, f64::max)
    }
}

/// A demand (or split part of one) and the lightpaths it rides, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub demand_id: usize,
    pub rate_gbps: f64,
    pub lightpaths: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SegmentRequest {
    pub fiber_route: Vec<FiberDir>,
    pub option: usize,
    /// `None` assigns the first fit.
    pub slot_start: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct LightpathRequest {
    pub src: usize,
    pub dst: usize,
    pub capacity_gbps: u32,
    pub initial_gbps: f64,
    pub segments: Vec<SegmentRequest>,
}

#[derive(Debug, Clone, PartialEq)]
struct StateData {
    occupancy: Vec<SlotMask>,
    dir_users: Vec<u32>,
    lightpaths: Vec<Lightpath>,
    nodes: Vec<NodeUsage>,
    flows: Vec<Flow>,
    ledger: PowerLedger,
}

/// Opaque copy of the mutable state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot(StateData);

#[derive(Debug, Clone)]
pub struct NetworkState {
    ctx: Arc<PlanContext>,
    data: StateData,
}

const EPS: f64 = 1e-9;

impl NetworkState {
    pub fn new(ctx: Arc<PlanContext>) -> Self {
        let topo = &ctx.topology;
        let ledger = PowerLedger { oxc_w: ctx.oxc_total(), total_w: ctx.oxc_total(), ..Default::default() };
        let data = StateData {
            occupancy: vec![SlotMask::empty(topo.slots_total); topo.num_dirs()],
            dir_users: vec![0; topo.num_dirs()],
            lightpaths: Vec::new(),
            nodes: vec![NodeUsage::default(); topo.num_nodes()],
            flows: Vec::new(),
            ledger,
        };
        Self { ctx, data }
    }

    pub fn context(&self) -> &Arc<PlanContext> {
        &self.ctx
    }

    pub fn topology(&self) -> &Topology {
        &self.ctx.topology
    }

    pub fn catalog(&self) -> &PowerCatalog {
        &self.ctx.catalog
    }

    pub fn ledger(&self) -> &PowerLedger {
        &self.data.ledger
    }

    pub fn total_pc(&self) -> f64 {
        self.data.ledger.total_w
    }

    pub fn lightpaths(&self) -> &[Lightpath] {
        &self.data.lightpaths
    }

    pub fn lightpath(&self, id: usize) -> Option<&Lightpath> {
        self.data.lightpaths.get(id)
    }

    pub fn node_usage(&self, node: usize) -> &NodeUsage {
        &self.data.nodes[node]
    }

    pub fn flows(&self) -> &[Flow] {
        &self.data.flows
    }

    pub fn occupancy(&self, dir: FiberDir) -> &SlotMask {
        &self.data.occupancy[dir.index()]
    }

    pub fn dir_active(&self, dir: FiberDir) -> bool {
        self.data.dir_users[dir.index()] > 0
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot(self.data.clone())
    }

    pub fn restore(&mut self, snapshot: &Snapshot) {
        self.data.clone_from(&snapshot.0);
    }

    pub fn same_as(&self, snapshot: &Snapshot) -> bool {
        self.data == snapshot.0
    }

    /// Occupied width for a segment using `option`, guard band included.
    pub fn block_width(&self, option: usize) -> u32 {
        self.ctx.option(option).data_slots + self.ctx.guard_band
    }

    /// Lowest start index whose block is free on every listed fiber direction.
    pub fn first_fit_slots(&self, dirs: &[FiberDir], slot_count: u32) -> Result<u32, StateError> {
        let mut occ = SlotMask::empty(self.topology().slots_total);
        for d in dirs {
            occ.union_with(&self.data.occupancy[d.index()]);
        }
        occ.free_starts(slot_count).first_one().ok_or(StateError::NoSpectrum(slot_count))
    }

    /// Candidate start indices for a block of `width` on one fiber direction.
    pub fn free_starts(&self, dir: FiberDir, width: u32) -> SlotMask {
        self.data.occupancy[dir.index()].free_starts(width)
    }

    /// SBVT that would host a new lightpath end of `capacity` at `node`, or `None`
    /// when every SBVT is full and the budget is spent.
    pub fn sbvt_slot(&self, node: usize, capacity: u32) -> Option<Slot> {
        sbvt_slot_in(&self.data.nodes[node], &self.ctx, node, capacity)
    }

    /// VER that would host a regeneration at `node`.
    pub fn ver_slot(&self, node: usize) -> Option<Slot> {
        ver_slot_in(&self.data.nodes[node], &self.ctx, node)
    }

    /// Marginal router-port power of `gbps` more traffic through the router at `node`.
    pub fn port_increment(&self, node: usize, gbps: f64) -> f64 {
        let u = &self.data.nodes[node];
        let extra = self.ctx.ports_for(u.router_gbps + gbps).saturating_sub(u.router_ports);
        extra as f64 * self.ctx.catalog.router_port_pc
    }

    /// Marginal amplifier power of starting to use `dir`.
    pub fn amp_increment(&self, dir: FiberDir) -> f64 {
        if self.dir_active(dir) {
            return 0.0;
        }
        let before = self.dir_active(dir.opposite()) as u32;
        self.ctx.fiber_amp_pc(dir.fiber, before + 1) - self.ctx.fiber_amp_pc(dir.fiber, before)
    }

    /// Sets up a new lightpath. On error nothing is modified. Returns the new id and the
    /// power increment.
    pub fn commit_lightpath(&mut self, req: &LightpathRequest) -> Result<(usize, f64), StateError> {
        let ctx = Arc::clone(&self.ctx);
        let topo = &ctx.topology;
        let cat = &ctx.catalog;

        if req.segments.is_empty() {
            return Err(StateError::BadRoute("no segments".into()));
        }
        if req.src == req.dst {
            return Err(StateError::BadRoute("source equals destination".into()));
        }
        if req.initial_gbps < 0.0 || req.initial_gbps > req.capacity_gbps as f64 + EPS {
            return Err(StateError::InsufficientCapacity {
                lightpath: self.data.lightpaths.len(),
                free: req.capacity_gbps as f64,
                requested: req.initial_gbps,
            });
        }

        let mut at = req.src;
        let mut joins = Vec::new();
        for (k, seg) in req.segments.iter().enumerate() {
            if seg.option >= cat.options.len() || cat.options[seg.option].capacity_gbps != req.capacity_gbps {
                return Err(StateError::CapacityMismatch { option: seg.option, capacity: req.capacity_gbps });
            }
            if seg.fiber_route.is_empty() {
                return Err(StateError::BadRoute(format!("segment {k} is empty")));
            }
            if k > 0 {
                joins.push(at);
            }
            for (i, d) in seg.fiber_route.iter().enumerate() {
                if d.fiber >= topo.num_fibers() || topo.tail(*d) != at {
                    return Err(StateError::BadRoute(format!("segment {k} breaks at hop {i}")));
                }
                if seg.fiber_route[..i].contains(d) {
                    return Err(StateError::BadRoute(format!("segment {k} repeats a fiber direction")));
                }
                at = topo.head(*d);
            }
            let length_km = topo.route_length(&seg.fiber_route);
            let mtr_km = cat.options[seg.option].mtr_km;
            if length_km > mtr_km + EPS {
                return Err(StateError::ReachExceeded { length_km, mtr_km });
            }
        }
        if at != req.dst {
            return Err(StateError::BadRoute("route does not end at destination".into()));
        }

        // spectrum, against the state plus blocks claimed earlier in this request
        let mut overlay: BTreeMap<usize, SlotMask> = BTreeMap::new();
        let mut starts = Vec::with_capacity(req.segments.len());
        for seg in &req.segments {
            let width = self.block_width(seg.option);
            let mut occ = SlotMask::empty(topo.slots_total);
            for d in &seg.fiber_route {
                occ.union_with(overlay.get(&d.index()).unwrap_or(&self.data.occupancy[d.index()]));
            }
            let start = match seg.slot_start {
                Some(s) => {
                    if s + width > topo.slots_total || occ.any_in_range(s, width) {
                        return Err(StateError::SpectrumConflict { fiber: seg.fiber_route[0].fiber, slot_start: s });
                    }
                    s
                }
                None => occ.free_starts(width).first_one().ok_or(StateError::NoSpectrum(width))?,
            };
            for d in &seg.fiber_route {
                overlay
                    .entry(d.index())
                    .or_insert_with(|| self.data.occupancy[d.index()].clone())
                    .set_range(start, width);
            }
            starts.push(start);
        }

        // equipment, simulated on copies of the touched nodes
        let mut touched: BTreeMap<usize, NodeUsage> = BTreeMap::new();
        let mut delta = PowerLedger::default();
        let tx_sbvt = attach_end(&mut touched, &self.data.nodes, &ctx, req.src, req.capacity_gbps, true)?;
        let rx_sbvt = attach_end(&mut touched, &self.data.nodes, &ctx, req.dst, req.capacity_gbps, false)?;
        let mut regens = Vec::with_capacity(joins.len());
        for (k, &node) in joins.iter().enumerate() {
            if !topo.nodes[node].ver_eligible {
                return Err(StateError::NotVerEligible(node));
            }
            let usage = touched.entry(node).or_insert_with(|| self.data.nodes[node].clone());
            let ver = match ver_slot_in(usage, &ctx, node).ok_or(StateError::VerBudget(node))? {
                Slot::Existing(i) => i,
                Slot::New => {
                    usage.vers.push(Ver::default());
                    delta.ver_w += cat.ver_overhead_pc;
                    usage.vers.len() - 1
                }
            };
            usage.vers[ver].ssrs_used += 1;
            let incoming = &cat.options[req.segments[k].option];
            let outgoing = &cat.options[req.segments[k + 1].option];
            delta.ver_w += cat.regen_pc(incoming, outgoing);
            regens.push(RegenPoint { node, ver });
        }
        let first = &cat.options[req.segments[0].option];
        let last = &cat.options[req.segments[req.segments.len() - 1].option];
        delta.sbvt_w += first.pc_watts / 2.0 + last.pc_watts / 2.0;
        for node in [req.src, req.dst] {
            let usage = touched.get_mut(&node).expect("end nodes are touched");
            delta.router_w += add_router_traffic(usage, &ctx, req.initial_gbps);
        }

        // amplifiers, per fiber before/after
        let mut fiber_new_dirs: BTreeMap<usize, [bool; 2]> = BTreeMap::new();
        for seg in &req.segments {
            for d in &seg.fiber_route {
                if self.data.dir_users[d.index()] == 0 {
                    fiber_new_dirs.entry(d.fiber).or_default()[d.reverse as usize] = true;
                }
            }
        }
        for (&fiber, new_dirs) in &fiber_new_dirs {
            let active = |i: usize| self.data.dir_users[fiber * 2 + i] > 0;
            let before = active(0) as u32 + active(1) as u32;
            let after = (active(0) || new_dirs[0]) as u32 + (active(1) || new_dirs[1]) as u32;
            delta.amp_w += ctx.fiber_amp_pc(fiber, after) - ctx.fiber_amp_pc(fiber, before);
        }

        // apply
        for (idx, mask) in overlay {
            self.data.occupancy[idx] = mask;
        }
        for seg in &req.segments {
            for d in &seg.fiber_route {
                self.data.dir_users[d.index()] += 1;
            }
        }
        for (node, usage) in touched {
            self.data.nodes[node] = usage;
        }
        let id = self.data.lightpaths.len();
        self.data.lightpaths.push(Lightpath {
            id,
            src: req.src,
            dst: req.dst,
            capacity_gbps: req.capacity_gbps,
            used_gbps: req.initial_gbps,
            segments: req
                .segments
                .iter()
                .zip(starts)
                .map(|(s, slot_start)| TransparentSegment {
                    fiber_route: s.fiber_route.clone(),
                    option: s.option,
                    slot_start,
                    slot_count: cat.options[s.option].data_slots,
                })
                .collect(),
            tx_sbvt,
            rx_sbvt,
            regens,
        });
        let total = delta.category_sum();
        self.data.ledger.add(&delta);
        Ok((id, total))
    }

    /// Adds traffic to an existing lightpath. Only router ports at its two ends can
    /// grow; returns their power increment.
    pub fn groom(&mut self, lp_id: usize, rate_gbps: f64) -> Result<f64, StateError> {
        let lp = self.data.lightpaths.get_mut(lp_id).ok_or(StateError::UnknownLightpath(lp_id))?;
        if rate_gbps <= 0.0 {
            return Ok(0.0);
        }
        if lp.free_gbps() + EPS < rate_gbps {
            return Err(StateError::InsufficientCapacity {
                lightpath: lp_id,
                free: lp.free_gbps(),
                requested: rate_gbps,
            });
        }
        lp.used_gbps = (lp.used_gbps + rate_gbps).min(lp.capacity_gbps as f64);
        let (src, dst) = (lp.src, lp.dst);
        let mut delta = PowerLedger::default();
        for node in [src, dst] {
            delta.router_w += add_router_traffic(&mut self.data.nodes[node], &self.ctx, rate_gbps);
        }
        self.data.ledger.add(&delta);
        Ok(delta.router_w)
    }

    pub fn record_flow(&mut self, flow: Flow) {
        self.data.flows.push(flow);
    }

    /// Power of all active equipment, computed from the lightpath registry and the
    /// node equipment lists without consulting the running ledger.
    pub fn recompute_ledger(&self) -> PowerLedger {
        let ctx = &self.ctx;
        let cat = &ctx.catalog;
        let mut l = PowerLedger { oxc_w: ctx.oxc_total(), ..Default::default() };
        let mut used = vec![false; self.topology().num_dirs()];
        let mut router_gbps = vec![0.0; self.topology().num_nodes()];
        for lp in &self.data.lightpaths {
            router_gbps[lp.src] += lp.used_gbps;
            router_gbps[lp.dst] += lp.used_gbps;
            let first = &cat.options[lp.segments[0].option];
            let last = &cat.options[lp.segments[lp.segments.len() - 1].option];
            l.sbvt_w += first.pc_watts / 2.0 + last.pc_watts / 2.0;
            for w in lp.segments.windows(2) {
                l.ver_w += cat.regen_pc(&cat.options[w[0].option], &cat.options[w[1].option]);
            }
            for seg in &lp.segments {
                for d in &seg.fiber_route {
                    used[d.index()] = true;
                }
            }
        }
        for (usage, gbps) in self.data.nodes.iter().zip(&router_gbps) {
            l.router_w += cat.router_port_pc * ctx.ports_for(*gbps) as f64;
            l.ver_w += cat.ver_overhead_pc * usage.vers.iter().filter(|v| v.ssrs_used > 0).count() as f64;
        }
        for f in 0..self.topology().num_fibers() {
            let active = used[2 * f] as u32 + used[2 * f + 1] as u32;
            l.amp_w += ctx.fiber_amp_pc(f, active);
        }
        l.total_w = l.category_sum();
        l
    }

    /// Exhaustive check of every state invariant; returns human-readable violations.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut v = Vec::new();
        let ctx = &self.ctx;
        let topo = &ctx.topology;
        let cat = &ctx.catalog;

        let mut occ = vec![SlotMask::empty(topo.slots_total); topo.num_dirs()];
        let mut users = vec![0u32; topo.num_dirs()];
        let mut ends: Vec<BTreeMap<usize, (u32, u32, u32)>> = vec![BTreeMap::new(); topo.num_nodes()];
        let mut ssrs: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); topo.num_nodes()];
        for lp in &self.data.lightpaths {
            if lp.used_gbps < -EPS || lp.used_gbps > lp.capacity_gbps as f64 + EPS {
                v.push(format!("lightpath {} carries {} of {}", lp.id, lp.used_gbps, lp.capacity_gbps));
            }
            let mut at = lp.src;
            for (k, seg) in lp.segments.iter().enumerate() {
                let opt = &cat.options[seg.option];
                if opt.capacity_gbps != lp.capacity_gbps {
                    v.push(format!("lightpath {} segment {k} option capacity mismatch", lp.id));
                }
                if seg.slot_count != opt.data_slots {
                    v.push(format!("lightpath {} segment {k} width {} != {}", lp.id, seg.slot_count, opt.data_slots));
                }
                let width = seg.slot_count + ctx.guard_band;
                if seg.slot_start + width > topo.slots_total {
                    v.push(format!("lightpath {} segment {k} exceeds the grid", lp.id));
                }
                let len = topo.route_length(&seg.fiber_route);
                if len > opt.mtr_km + EPS {
                    v.push(format!("lightpath {} segment {k} length {len} > MTR {}", lp.id, opt.mtr_km));
                }
                if k > 0 {
                    match lp.regens.get(k - 1) {
                        Some(r) if r.node == at && topo.nodes[at].ver_eligible => {
                            *ssrs[at].entry(r.ver).or_default() += 1;
                        }
                        _ => v.push(format!("lightpath {} lacks a valid regeneration at node {at}", lp.id)),
                    }
                }
                for d in &seg.fiber_route {
                    if topo.tail(*d) != at {
                        v.push(format!("lightpath {} segment {k} is discontinuous", lp.id));
                    }
                    at = topo.head(*d);
                    let m = &mut occ[d.index()];
                    let end = (seg.slot_start + width).min(topo.slots_total);
                    if m.any_in_range(seg.slot_start, end - seg.slot_start) {
                        v.push(format!("spectrum overlap on fiber {} dir {}", d.fiber, d.reverse as u8));
                    }
                    m.set_range(seg.slot_start, width);
                    users[d.index()] += 1;
                }
            }
            if at != lp.dst {
                v.push(format!("lightpath {} does not end at its destination", lp.id));
            }
            let e = ends[lp.src].entry(lp.tx_sbvt).or_default();
            e.0 += 1;
            e.2 += lp.capacity_gbps;
            let e = ends[lp.dst].entry(lp.rx_sbvt).or_default();
            e.1 += 1;
            e.2 += lp.capacity_gbps;
        }
        if occ != self.data.occupancy {
            v.push("stored occupancy differs from lightpath segments".into());
        }
        if users != self.data.dir_users {
            v.push("stored direction usage differs from lightpath segments".into());
        }

        for (node, usage) in self.data.nodes.iter().enumerate() {
            let limits = &topo.nodes[node];
            if usage.sbvts.len() > limits.max_sbvts as usize {
                v.push(format!("node {node} has {} SBVTs > {}", usage.sbvts.len(), limits.max_sbvts));
            }
            if usage.vers.len() > limits.max_vers as usize {
                v.push(format!("node {node} has {} VERs > {}", usage.vers.len(), limits.max_vers));
            }
            if !usage.vers.is_empty() && !limits.ver_eligible {
                v.push(format!("node {node} hosts a VER but is not eligible"));
            }
            for (i, s) in usage.sbvts.iter().enumerate() {
                if s.ends() > cat.sbvt_sliceability {
                    v.push(format!("node {node} SBVT {i} has {} ends", s.ends()));
                }
                if s.attached_gbps as f64 > cat.router_port_capacity + EPS {
                    v.push(format!("node {node} SBVT {i} carries {} Gbps", s.attached_gbps));
                }
                let want = ends[node].get(&i).copied().unwrap_or_default();
                if (s.tx_ends, s.rx_ends, s.attached_gbps) != want {
                    v.push(format!("node {node} SBVT {i} bookkeeping disagrees with lightpaths"));
                }
            }
            if ends[node].keys().any(|&i| i >= usage.sbvts.len()) {
                v.push(format!("node {node} lightpath references a missing SBVT"));
            }
            for (i, ver) in usage.vers.iter().enumerate() {
                if ver.ssrs_used > cat.ver_ssr_count {
                    v.push(format!("node {node} VER {i} uses {} SSRs", ver.ssrs_used));
                }
                if ver.ssrs_used != ssrs[node].get(&i).copied().unwrap_or(0) {
                    v.push(format!("node {node} VER {i} bookkeeping disagrees with lightpaths"));
                }
            }
            if ssrs[node].keys().any(|&i| i >= usage.vers.len()) {
                v.push(format!("node {node} lightpath references a missing VER"));
            }
        }

        let mut router_gbps = vec![0.0; topo.num_nodes()];
        for lp in &self.data.lightpaths {
            router_gbps[lp.src] += lp.used_gbps;
            router_gbps[lp.dst] += lp.used_gbps;
        }
        for (node, usage) in self.data.nodes.iter().enumerate() {
            if (usage.router_gbps - router_gbps[node]).abs() > 1e-6 {
                v.push(format!("node {node} router traffic {} != {}", usage.router_gbps, router_gbps[node]));
            }
            if usage.router_ports != ctx.ports_for(router_gbps[node]) {
                v.push(format!("node {node} has {} router ports for {} Gbps", usage.router_ports, router_gbps[node]));
            }
        }

        let mut carried = vec![0.0; self.data.lightpaths.len()];
        for f in &self.data.flows {
            for &lp in &f.lightpaths {
                match carried.get_mut(lp) {
                    Some(c) => *c += f.rate_gbps,
                    None => v.push(format!("flow of demand {} references lightpath {lp}", f.demand_id)),
                }
            }
        }
        for (lp, c) in self.data.lightpaths.iter().zip(&carried) {
            if (lp.used_gbps - c).abs() > 1e-6 {
                v.push(format!("lightpath {} used {} but flows carry {c}", lp.id, lp.used_gbps));
            }
        }

        let ledger = &self.data.ledger;
        if (ledger.total_w - ledger.category_sum()).abs() > 1e-9 * ledger.total_w.abs().max(1.0) {
            v.push("ledger total differs from the category sum".into());
        }
        let fresh = self.recompute_ledger();
        if fresh.max_rel_diff(ledger) > 1e-6 {
            v.push(format!("ledger {ledger:?} differs from recomputation {fresh:?}"));
        }
        v
    }
}

/// Adds router traffic at a node, activating ports as needed; returns their power.
fn add_router_traffic(usage: &mut NodeUsage, ctx: &PlanContext, gbps: f64) -> f64 {
    usage.router_gbps += gbps;
    let ports = ctx.ports_for(usage.router_gbps);
    let extra = ports.saturating_sub(usage.router_ports);
    usage.router_ports = ports.max(usage.router_ports);
    extra as f64 * ctx.catalog.router_port_pc
}

fn sbvt_slot_in(usage: &NodeUsage, ctx: &PlanContext, node: usize, capacity: u32) -> Option<Slot> {
    let cat = &ctx.catalog;
    usage
        .sbvts
        .iter()
        .position(|s| {
            s.ends() < cat.sbvt_sliceability && (s.attached_gbps + capacity) as f64 <= cat.router_port_capacity + EPS
        })
        .map(Slot::Existing)
        .or_else(|| (usage.sbvts.len() < ctx.topology.nodes[node].max_sbvts as usize).then_some(Slot::New))
}

fn ver_slot_in(usage: &NodeUsage, ctx: &PlanContext, node: usize) -> Option<Slot> {
    let limits = &ctx.topology.nodes[node];
    if !limits.ver_eligible {
        return None;
    }
    usage
        .vers
        .iter()
        .position(|v| v.ssrs_used < ctx.catalog.ver_ssr_count)
        .map(Slot::Existing)
        .or_else(|| (usage.vers.len() < limits.max_vers as usize).then_some(Slot::New))
}

fn attach_end(
    touched: &mut BTreeMap<usize, NodeUsage>,
    nodes: &[NodeUsage],
    ctx: &PlanContext,
    node: usize,
    capacity: u32,
    tx: bool,
) -> Result<usize, StateError> {
    let usage = touched.entry(node).or_insert_with(|| nodes[node].clone());
    let idx = match sbvt_slot_in(usage, ctx, node, capacity).ok_or(StateError::SbvtBudget(node))? {
        Slot::Existing(i) => i,
        Slot::New => {
            usage.sbvts.push(Sbvt::default());
            usage.sbvts.len() - 1
        }
    };
    let s = &mut usage.sbvts[idx];
    if tx {
        s.tx_ends += 1;
    } else {
        s.rx_ends += 1;
    }
    s.attached_gbps += capacity;
    Ok(idx)
}
