//! Grid data model: buses, branches, generators, load scaling and topology
//! classification.
//!
//! A [`Network`] is plain immutable data. Case files are read with
//! [`parse_case`], which accepts both MATPOWER `.m` text and the native JSON
//! schema (see [`json`]). All analysis code works on branch *positions*
//! (indices into [`Network::branches`]); external identifiers are the
//! [`BusId`]/[`BranchId`] newtypes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};

pub mod json;
pub mod matpower;
pub mod topology;

pub use topology::{classify_topology, TopologyClassification};

/// External bus identifier (MATPOWER bus numbers are arbitrary integers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

/// External branch identifier; for parsed cases this is the 1-based row
/// number of the branch table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    /// Real-power demand in MW. Zero-load buses are allowed.
    pub load_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series reactance in per-unit on the system base. Must be nonzero.
    pub reactance: f64,
    /// Normal thermal rating in MW. `null` in JSON means unrated and maps
    /// to +inf: such a branch never counts toward a violation.
    #[serde(with = "rating_serde")]
    pub rating_mw: f64,
    pub in_service: bool,
    #[serde(default)]
    pub is_transformer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    pub output_mw: f64,
    pub max_output_mw: f64,
}

/// A validated grid model. Construct via [`parse_case`] or build the fields
/// directly and call [`Network::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// System base power in MVA.
    pub base_mva: f64,
    pub slack_bus: BusId,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

/// Serialize +inf ratings as JSON null so round-trips are lossless.
mod rating_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Branch {
    /// True when removing this branch leaves its endpoints connected only
    /// through the rest of the graph; orientation is from -> to.
    pub fn endpoints(&self) -> (BusId, BusId) {
        (self.from_bus, self.to_bus)
    }
}

impl Network {
    /// Map bus id -> position in `buses`.
    pub fn bus_positions(&self) -> BTreeMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Map branch id -> position in `branches`.
    pub fn branch_positions(&self) -> BTreeMap<BranchId, usize> {
        self.branches.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    /// First branch joining the two buses in either orientation.
    pub fn branch_between(&self, a: BusId, b: BusId) -> Option<&Branch> {
        self.branches.iter().find(|br| {
            (br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a)
        })
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_mw).sum()
    }

    pub fn total_generation_mw(&self) -> f64 {
        self.generators.iter().map(|g| g.output_mw).sum()
    }

    /// Human-readable branch label, e.g. `"15 FtWayne - 17 Sorenson"` when
    /// bus names are known, else `"15-17"`.
    pub fn branch_label(&self, id: BranchId) -> String {
        match self.branch(id) {
            Some(br) => {
                let name = |bus: BusId| -> String {
                    match self.buses.iter().find(|b| b.id == bus).and_then(|b| b.name.as_deref()) {
                        Some(n) => format!("{bus} {n}"),
                        None => format!("{bus}"),
                    }
                };
                format!("{} - {}", name(br.from_bus), name(br.to_bus))
            }
            None => format!("branch {id}"),
        }
    }

    /// Copy of the network with one branch switched out of service.
    pub fn with_branch_open(&self, id: BranchId) -> Result<Network> {
        let mut net = self.clone();
        let branch = net
            .branches
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or(GridError::UnknownBranch(id))?;
        if !branch.in_service {
            return Err(GridError::BranchOutOfService(id));
        }
        branch.in_service = false;
        Ok(net)
    }

    /// Check every structural invariant. Parsers call this before returning.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(GridError::InvalidBasePower(self.base_mva));
        }
        let mut seen_bus = BTreeMap::new();
        for bus in &self.buses {
            if seen_bus.insert(bus.id, ()).is_some() {
                return Err(GridError::DuplicateBus(bus.id));
            }
        }
        if !seen_bus.contains_key(&self.slack_bus) {
            return Err(GridError::UnknownSlack(self.slack_bus));
        }
        let mut seen_branch = BTreeMap::new();
        for br in &self.branches {
            if seen_branch.insert(br.id, ()).is_some() {
                return Err(GridError::DuplicateBranch(br.id));
            }
            for bus in [br.from_bus, br.to_bus] {
                if !seen_bus.contains_key(&bus) {
                    return Err(GridError::UnknownBus { branch: br.id, bus });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(GridError::SelfLoopBranch(br.id));
            }
            if br.reactance == 0.0 || !br.reactance.is_finite() {
                return Err(GridError::ZeroReactance(br.id));
            }
            if !(br.rating_mw > 0.0) {
                return Err(GridError::InvalidRating(br.id));
            }
        }
        for gen in &self.generators {
            if !seen_bus.contains_key(&gen.bus) {
                return Err(GridError::InvalidGenerator {
                    bus: gen.bus,
                    message: "references unknown bus".into(),
                });
            }
            if gen.output_mw < 0.0 || gen.output_mw > gen.max_output_mw {
                return Err(GridError::InvalidGenerator {
                    bus: gen.bus,
                    message: format!(
                        "output {:.3} MW outside [0, {:.3}]",
                        gen.output_mw, gen.max_output_mw
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Parse case text in either supported format, sniffing by content: JSON
/// cases start with `{`, anything else is treated as a MATPOWER `.m` case.
pub fn parse_case(text: &str) -> Result<Network> {
    if text.trim_start().starts_with('{') {
        json::parse_json_case(text)
    } else {
        matpower::parse_matpower_case(text)
    }
}

/// Scale bus loads and rebalance generation.
///
/// Every bus load is multiplied by its override factor when present, else by
/// `uniform`. Generator outputs are then multiplied by the aggregate load
/// ratio (new total / old total) so the generation-load balance of the input
/// carries over unchanged; an all-ones scaling returns an identical network.
pub fn scale_load(
    net: &Network,
    uniform: f64,
    overrides: &BTreeMap<BusId, f64>,
) -> Result<Network> {
    if !(uniform > 0.0 && uniform.is_finite()) {
        return Err(GridError::InvalidScaleFactor(uniform));
    }
    for (&bus, &factor) in overrides {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(GridError::InvalidScaleFactor(factor));
        }
        if !net.buses.iter().any(|b| b.id == bus) {
            return Err(GridError::UnknownOverrideBus(bus));
        }
    }

    let old_total = net.total_load_mw();
    let mut scaled = net.clone();
    for bus in &mut scaled.buses {
        let factor = overrides.get(&bus.id).copied().unwrap_or(uniform);
        bus.load_mw *= factor;
    }
    let new_total = scaled.total_load_mw();
    let ratio = if old_total == 0.0 { 1.0 } else { new_total / old_total };

    for gen in &mut scaled.generators {
        let output = gen.output_mw * ratio;
        if output > gen.max_output_mw {
            return Err(GridError::GeneratorLimit {
                bus: gen.bus,
                output,
                max: gen.max_output_mw,
            });
        }
        gen.output_mw = output;
    }
    Ok(scaled)
}
