//! Equipment power-consumption formulas and the sub-transponder transmission catalog.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("degree must be nonnegative, got {0}")]
    NegativeDegree(i64),
    #[error("length and span must be positive (length {length_km}, span {span_km})")]
    NonPositiveLength { length_km: f64, span_km: f64 },
    #[error("amplifier site has two directions, got {0}")]
    DirectionCount(u32),
    #[error("no {capacity} Gbps option reaches {distance_km} km")]
    Unreachable { capacity: u32, distance_km: f64 },
    #[error("catalog: {0}")]
    Catalog(String),
}

/// One row of the sub-transponder option table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionOption {
    #[serde(rename = "capacity")]
    pub capacity_gbps: u32,
    pub mtr_km: f64,
    #[serde(rename = "slots")]
    pub data_slots: u32,
    #[serde(rename = "pc_w")]
    pub pc_watts: f64,
}

const fn opt(capacity_gbps: u32, mtr_km: f64, data_slots: u32, pc_watts: f64) -> TransmissionOption {
    TransmissionOption { capacity_gbps, mtr_km, data_slots, pc_watts }
}

/// The 22-row catalog of capacity / reach / slot / power options.
pub const DEFAULT_OPTIONS: [TransmissionOption; 22] = [
    opt(40, 600.0, 1, 154.8),
    opt(40, 1900.0, 1, 183.6),
    opt(40, 2500.0, 2, 183.6),
    opt(40, 3000.0, 3, 183.6),
    opt(40, 4000.0, 4, 183.6),
    opt(100, 600.0, 1, 198.0),
    opt(100, 1900.0, 1, 270.0),
    opt(100, 2500.0, 2, 270.0),
    opt(100, 3000.0, 3, 270.0),
    opt(100, 3500.0, 4, 270.0),
    opt(200, 500.0, 1, 333.0),
    opt(200, 600.0, 2, 333.0),
    opt(200, 750.0, 3, 333.0),
    opt(200, 1900.0, 4, 432.0),
    opt(200, 2200.0, 5, 432.0),
    opt(200, 2500.0, 6, 432.0),
    opt(400, 500.0, 4, 432.0),
    opt(400, 600.0, 6, 432.0),
    opt(400, 750.0, 8, 432.0),
    opt(400, 1900.0, 10, 630.0),
    opt(400, 2200.0, 12, 630.0),
    opt(400, 2500.0, 14, 630.0),
];

/// Result of mapping a demand rate onto the lightpath capacity classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityFit {
    Class(u32),
    SplitRequired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCatalog {
    /// Router port power `P_R` (W).
    pub router_port_pc: f64,
    /// Router port capacity `C_R` (Gbps); also caps the capacity attached to one SBVT.
    pub router_port_capacity: f64,
    /// Power of one unidirectional amplifier `P_Ad` (W).
    pub amp_dir_pc: f64,
    /// Per-site amplifier overhead `P_AO` (W).
    pub amp_overhead_pc: f64,
    /// Per-SSR overhead `P_VS` (W).
    pub ver_ssr_pc: f64,
    /// Per-VER overhead `P_VO` (W).
    pub ver_overhead_pc: f64,
    pub oxc_base: f64,
    pub oxc_per_degree: f64,
    pub sbvt_sliceability: u32,
    pub ver_ssr_count: u32,
    pub options: Vec<TransmissionOption>,
}

impl Default for PowerCatalog {
    fn default() -> Self {
        Self {
            router_port_pc: 560.0,
            router_port_capacity: 400.0,
            amp_dir_pc: 30.0,
            amp_overhead_pc: 140.0,
            ver_ssr_pc: 10.0,
            ver_overhead_pc: 25.0,
            oxc_base: 150.0,
            oxc_per_degree: 135.0,
            sbvt_sliceability: 3,
            ver_ssr_count: 16,
            options: DEFAULT_OPTIONS.to_vec(),
        }
    }
}

impl PowerCatalog {
    /// Builds a catalog with default equipment constants and a custom option table.
    pub fn with_options(options: Vec<TransmissionOption>) -> Result<Self, PowerError> {
        let cat = Self { options, ..Self::default() };
        cat.validate()?;
        Ok(cat)
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        let scalars = [
            self.router_port_pc,
            self.router_port_capacity,
            self.amp_dir_pc,
            self.amp_overhead_pc,
            self.ver_ssr_pc,
            self.ver_overhead_pc,
            self.oxc_base,
            self.oxc_per_degree,
        ];
        if scalars.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(PowerError::Catalog("equipment constants must be positive".into()));
        }
        if self.sbvt_sliceability == 0 || self.ver_ssr_count == 0 {
            return Err(PowerError::Catalog("sliceability and SSR count must be positive".into()));
        }
        if self.options.is_empty() {
            return Err(PowerError::Catalog("no transmission options".into()));
        }
        for o in &self.options {
            if o.capacity_gbps == 0 || !(o.mtr_km > 0.0) || o.data_slots == 0 || !(o.pc_watts > 0.0) {
                return Err(PowerError::Catalog(format!("non-positive field in option {o:?}")));
            }
            if o.capacity_gbps as f64 > self.router_port_capacity {
                return Err(PowerError::Catalog(format!(
                    "option capacity {} exceeds router port capacity",
                    o.capacity_gbps
                )));
            }
        }
        for class in self.capacity_classes() {
            let mut rows: Vec<_> = self.options_for(class).map(|(_, o)| *o).collect();
            rows.sort_by(|a, b| a.mtr_km.total_cmp(&b.mtr_km));
            if rows.windows(2).any(|w| w[1].pc_watts < w[0].pc_watts) {
                return Err(PowerError::Catalog(format!("{class} Gbps power is not nondecreasing in reach")));
            }
        }
        Ok(())
    }

    /// Distinct option capacities, ascending.
    pub fn capacity_classes(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.options.iter().map(|o| o.capacity_gbps).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn max_capacity(&self) -> u32 {
        self.options.iter().map(|o| o.capacity_gbps).max().unwrap_or(0)
    }

    /// `(catalog index, option)` pairs of one capacity class, in catalog order.
    pub fn options_for(&self, capacity: u32) -> impl Iterator<Item = (usize, &TransmissionOption)> {
        self.options.iter().enumerate().filter(move |(_, o)| o.capacity_gbps == capacity)
    }

    pub fn max_reach(&self, capacity: u32) -> f64 {
        self.options_for(capacity).map(|(_, o)| o.mtr_km).fold(0.0, f64::max)
    }

    pub fn lookup(&self, capacity: u32, mtr_km: f64) -> Option<&TransmissionOption> {
        self.options.iter().find(|o| o.capacity_gbps == capacity && o.mtr_km == mtr_km)
    }

    /// Smallest capacity class that carries `rate_gbps`.
    pub fn capacity_class(&self, rate_gbps: f64) -> CapacityFit {
        self.capacity_classes()
            .into_iter()
            .find(|&c| c as f64 >= rate_gbps - 1e-9)
            .map_or(CapacityFit::SplitRequired, CapacityFit::Class)
    }

    /// Cheapest option of `capacity` whose reach covers `transparent_km`; ties go to
    /// fewer data slots, then catalog order.
    pub fn select_option_index(&self, capacity: u32, transparent_km: f64) -> Result<usize, PowerError> {
        self.options_for(capacity)
            .filter(|(_, o)| o.mtr_km >= transparent_km)
            .min_by(|(ia, a), (ib, b)| {
                a.pc_watts.total_cmp(&b.pc_watts).then(a.data_slots.cmp(&b.data_slots)).then(ia.cmp(ib))
            })
            .map(|(i, _)| i)
            .ok_or(PowerError::Unreachable { capacity, distance_km: transparent_km })
    }

    pub fn select_option(&self, capacity: u32, transparent_km: f64) -> Result<TransmissionOption, PowerError> {
        self.select_option_index(capacity, transparent_km).map(|i| self.options[i])
    }

    pub fn oxc_pc(&self, degree: i64) -> Result<f64, PowerError> {
        if degree < 0 {
            return Err(PowerError::NegativeDegree(degree));
        }
        Ok(self.oxc_per_degree * degree as f64 + self.oxc_base)
    }

    /// Power of one amplifier site with the given number of active directions.
    pub fn amp_site_pc(&self, active_directions: u32) -> Result<f64, PowerError> {
        match active_directions {
            0 => Ok(0.0),
            1 | 2 => Ok(self.amp_overhead_pc + active_directions as f64 * self.amp_dir_pc),
            n => Err(PowerError::DirectionCount(n)),
        }
    }

    /// Regenerating a lightpath through one SSR with the same option on both sides.
    pub fn ver_regen_pc(&self, option: &TransmissionOption) -> f64 {
        self.regen_pc(option, option)
    }

    /// Terminating `incoming` and re-originating `outgoing` through one SSR.
    /// The VER overhead is charged separately when the VER first activates.
    pub fn regen_pc(&self, incoming: &TransmissionOption, outgoing: &TransmissionOption) -> f64 {
        incoming.pc_watts / 2.0 + outgoing.pc_watts / 2.0 + self.ver_ssr_pc
    }

    pub fn read_options_csv<R: std::io::Read>(reader: R) -> Result<Vec<TransmissionOption>, PowerError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        rdr.deserialize()
            .collect::<Result<Vec<TransmissionOption>, _>>()
            .map_err(|e| PowerError::Catalog(e.to_string()))
    }

    pub fn write_options_csv<W: std::io::Write>(&self, writer: W) -> Result<(), PowerError> {
        let mut w = csv::Writer::from_writer(writer);
        for o in &self.options {
            w.serialize(o).map_err(|e| PowerError::Catalog(e.to_string()))?;
        }
        w.flush().map_err(|e| PowerError::Catalog(e.to_string()))
    }

    /// Default equipment constants with the option table read from a
    /// `capacity,mtr_km,slots,pc_w` file.
    pub fn load_options(path: impl AsRef<Path>) -> Result<Self, PowerError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| PowerError::Catalog(format!("{}: {e}", path.as_ref().display())))?;
        Self::with_options(Self::read_options_csv(file)?)
    }
}

/// Inline amplifier sites on a fiber; the two node-end sites are not included.
pub fn inline_amp_count(length_km: f64, span_km: f64) -> Result<u32, PowerError> {
    if !(length_km > 0.0) || !(span_km > 0.0) {
        return Err(PowerError::NonPositiveLength { length_km, span_km });
    }
    let spans = (length_km / span_km - 1e-9).ceil();
    Ok((spans - 1.0).max(0.0) as u32)
}

/// All amplifier sites along a fiber: inline ones plus one at each end node.
pub fn amp_sites(length_km: f64, span_km: f64) -> Result<u32, PowerError> {
    Ok(inline_amp_count(length_km, span_km)? + 2)
}
