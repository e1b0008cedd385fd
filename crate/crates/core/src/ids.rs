use std::fmt;

/// Stable identifier of a vehicle for the lifetime of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub u32);

/// Index of a roadside unit in `ScenarioConfig::rsu_positions_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RsuId(pub u32);

/// A node of the connectivity graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Vehicle(VehicleId),
    Rsu(RsuId),
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for RsuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rsu{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Vehicle(v) => v.fmt(f),
            NodeId::Rsu(r) => r.fmt(f),
        }
    }
}

impl From<VehicleId> for NodeId {
    fn from(v: VehicleId) -> Self {
        NodeId::Vehicle(v)
    }
}

impl From<RsuId> for NodeId {
    fn from(r: RsuId) -> Self {
        NodeId::Rsu(r)
    }
}
