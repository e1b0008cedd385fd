//! Unit-disk connectivity and the density-dependent per-hop delay.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use crate::config::ScenarioConfig;
use crate::ids::{NodeId, RsuId, VehicleId};
use crate::mobility::VehicleState;

/// Inclusive unit-disk test.
pub fn in_range(pos_a: f64, pos_b: f64, range_m: f64) -> bool {
    (pos_a - pos_b).abs() <= range_m
}

/// Hop delay inflated by contention from the transmitter's neighbors:
/// `base × (1 + coeff × max(0, n − 1))`.
pub fn per_hop_delay(base_ms: f64, neighbor_count: usize, interference_coeff: f64) -> f64 {
    base_ms * (1.0 + interference_coeff * neighbor_count.saturating_sub(1) as f64)
}

/// Reach and per-hop cost of one radio medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub range_m: f64,
    pub base_hop_ms: f64,
    pub interference_coeff: f64,
}

impl LinkModel {
    /// 802.11p relaying with the scenario's V2V range and timing.
    pub fn v2v(cfg: &ScenarioConfig) -> Self {
        Self {
            range_m: cfg.v2v_range_m,
            base_hop_ms: cfg.timing.per_hop_v2v_ms,
            interference_coeff: cfg.timing.interference_coeff,
        }
    }

    /// LTE-D2D relaying; eNB-scheduled, so no contention inflation.
    pub fn d2d(cfg: &ScenarioConfig) -> Self {
        Self {
            range_m: cfg.d2d_range_m,
            base_hop_ms: cfg.timing.per_hop_d2d_ms,
            interference_coeff: 0.0,
        }
    }

    pub fn hop_delay(&self, neighbor_count: usize) -> f64 {
        per_hop_delay(self.base_hop_ms, neighbor_count, self.interference_coeff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rsu {
    pub id: RsuId,
    pub position_m: f64,
}

pub fn rsus_from(cfg: &ScenarioConfig) -> Vec<Rsu> {
    cfg.rsu_positions_m
        .iter()
        .enumerate()
        .map(|(i, &p)| Rsu {
            id: RsuId(i as u32),
            position_m: p,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub id: VehicleId,
    pub position_m: f64,
    pub last_seen_s: f64,
}

/// What one vehicle knows about the vehicles around it.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub owner: VehicleId,
    pub owner_position_m: f64,
    pub entries: Vec<NeighborEntry>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: VehicleId) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }
}

pub type NeighborTables = BTreeMap<VehicleId, NeighborTable>;

/// Indices of `world` sorted by position (ties by id).
fn by_position(world: &[VehicleState]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..world.len()).collect();
    idx.sort_by(|&a, &b| {
        world[a]
            .position_m
            .total_cmp(&world[b].position_m)
            .then(world[a].id.cmp(&world[b].id))
    });
    idx
}

/// Calls `f(i, j)` for every unordered pair of `world` indices within
/// `range_m` of each other, by a sliding window over sorted positions.
fn for_each_pair_in_range(world: &[VehicleState], range_m: f64, mut f: impl FnMut(usize, usize)) {
    let order = by_position(world);
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if world[j].position_m - world[i].position_m > range_m {
                break;
            }
            f(i, j);
        }
    }
}

/// Symmetric neighbor tables for every vehicle in `world`.
pub fn build_neighbor_tables(world: &[VehicleState], range_m: f64, now_s: f64) -> NeighborTables {
    let mut entries: Vec<Vec<NeighborEntry>> = vec![Vec::new(); world.len()];
    let entry = |v: &VehicleState| NeighborEntry {
        id: v.id,
        position_m: v.position_m,
        last_seen_s: now_s,
    };
    for_each_pair_in_range(world, range_m, |i, j| {
        entries[i].push(entry(&world[j]));
        entries[j].push(entry(&world[i]));
    });
    world
        .iter()
        .zip(entries)
        .map(|(v, mut e)| {
            e.sort_by_key(|n| n.id);
            (
                v.id,
                NeighborTable {
                    owner: v.id,
                    owner_position_m: v.position_m,
                    entries: e,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    V2v,
    D2d,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::V2v => "v2v",
            EdgeKind::D2d => "d2d",
        }
    }
}

/// Undirected edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(x: NodeId, y: NodeId, kind: EdgeKind) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Self { a, b, kind }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConnectivityGraph {
    pub nodes: Vec<NodeId>,
    pub edges: BTreeSet<Edge>,
}

impl ConnectivityGraph {
    /// Adjacency lists restricted to one edge kind; every node has an entry.
    pub fn adjacency(&self, kind: EdgeKind) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.iter().map(|n| (*n, Vec::new())).collect();
        for e in self.edges.iter().filter(|e| e.kind == kind) {
            adj.entry(e.a).or_default().push(e.b);
            adj.entry(e.b).or_default().push(e.a);
        }
        adj
    }

    pub fn has_edge(&self, x: NodeId, y: NodeId, kind: EdgeKind) -> bool {
        self.edges.contains(&Edge::new(x, y, kind))
    }

    /// Edge list as `node_a,node_b,kind` CSV.
    pub fn write_edge_list<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "node_a,node_b,kind")?;
        for e in &self.edges {
            writeln!(out, "{},{},{}", e.a, e.b, e.kind.as_str())?;
        }
        Ok(())
    }
}

/// Ground-truth graph over vehicles and RSUs. RSUs take part in V2V only.
pub fn connectivity_graph(
    world: &[VehicleState],
    rsus: &[Rsu],
    v2v_range_m: f64,
    d2d_range_m: f64,
) -> ConnectivityGraph {
    let mut nodes: Vec<NodeId> = world.iter().map(|v| NodeId::Vehicle(v.id)).collect();
    nodes.extend(rsus.iter().map(|r| NodeId::Rsu(r.id)));
    nodes.sort();

    // RSUs join the V2V sweep as stationary pseudo-vehicles.
    let mut points: Vec<(NodeId, f64, bool)> = world
        .iter()
        .map(|v| (NodeId::Vehicle(v.id), v.position_m, v.d2d_enabled))
        .collect();
    points.extend(rsus.iter().map(|r| (NodeId::Rsu(r.id), r.position_m, false)));
    points.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let reach = v2v_range_m.max(d2d_range_m);
    let mut edges = BTreeSet::new();
    for (k, &(x, px, dx)) in points.iter().enumerate() {
        for &(y, py, dy) in &points[k + 1..] {
            let d = py - px;
            if d > reach {
                break;
            }
            if d <= v2v_range_m {
                edges.insert(Edge::new(x, y, EdgeKind::V2v));
            }
            if dx && dy && d <= d2d_range_m {
                edges.insert(Edge::new(x, y, EdgeKind::D2d));
            }
        }
    }
    ConnectivityGraph { nodes, edges }
}
