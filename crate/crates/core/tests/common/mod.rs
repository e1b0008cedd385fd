//! Independent oracles shared by the integration tests. Nothing here calls
//! the simulator's own neighbor or graph code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use hybrid_vanet::mobility::VehicleState;
use hybrid_vanet::radio::Rsu;
use hybrid_vanet::{NodeId, RsuId, VehicleId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vehicle(id: u32, pos: f64) -> VehicleState {
    VehicleState {
        id: VehicleId(id),
        position_m: pos,
        velocity_ms: 25.0,
        desired_speed_ms: 25.0,
        d2d_enabled: true,
        pinned: false,
    }
}

/// A random 1-D highway snapshot.
#[derive(Debug, Clone)]
pub struct Instance {
    pub world: Vec<VehicleState>,
    pub rsus: Vec<Rsu>,
    pub range_m: f64,
    pub source: VehicleId,
}

impl Instance {
    pub fn pos(&self, v: VehicleId) -> f64 {
        self.world.iter().find(|x| x.id == v).unwrap().position_m
    }
}

pub fn random_instance(seed: u64, max_rsus: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let road: f64 = rng.gen_range(500.0..5000.0);
    let n = rng.gen_range(2..40usize);
    let range_m = [250.0, 350.0, 550.0][rng.gen_range(0..3)];
    let world: Vec<VehicleState> = (0..n)
        .map(|i| vehicle(i as u32, rng.gen_range(0.0..road)))
        .collect();
    let k = rng.gen_range(1..=max_rsus);
    let rsus = (0..k)
        .map(|i| Rsu {
            id: RsuId(i as u32),
            position_m: rng.gen_range(0.0..=road),
        })
        .collect();
    let source = VehicleId(rng.gen_range(0..n) as u32);
    Instance {
        world,
        rsus,
        range_m,
        source,
    }
}

/// Pairwise O(n²) unit-disk adjacency between vehicles, plus the RSUs each
/// vehicle can hand over to. RSUs do not relay.
pub struct PairwiseGraph {
    pub adj: BTreeMap<VehicleId, BTreeSet<VehicleId>>,
    pub rsu_links: BTreeMap<VehicleId, BTreeSet<RsuId>>,
}

pub fn pairwise_graph(world: &[VehicleState], rsus: &[Rsu], range_m: f64) -> PairwiseGraph {
    let mut adj: BTreeMap<VehicleId, BTreeSet<VehicleId>> = BTreeMap::new();
    let mut rsu_links: BTreeMap<VehicleId, BTreeSet<RsuId>> = BTreeMap::new();
    for a in world {
        let mine = adj.entry(a.id).or_default();
        for b in world {
            if a.id != b.id && (a.position_m - b.position_m).abs() <= range_m {
                mine.insert(b.id);
            }
        }
        let links = rsu_links.entry(a.id).or_default();
        for r in rsus {
            if (a.position_m - r.position_m).abs() <= range_m {
                links.insert(r.id);
            }
        }
    }
    PairwiseGraph { adj, rsu_links }
}

impl PairwiseGraph {
    /// Fewest transmissions from `source` to `rsu`, counting the final
    /// handover.
    pub fn bfs_hops(&self, source: VehicleId, rsu: RsuId) -> Option<usize> {
        let mut depth = BTreeMap::from([(source, 0usize)]);
        let mut q = VecDeque::from([source]);
        while let Some(v) = q.pop_front() {
            if self.rsu_links[&v].contains(&rsu) {
                return Some(depth[&v] + 1);
            }
            for n in &self.adj[&v] {
                if !depth.contains_key(n) {
                    depth.insert(*n, depth[&v] + 1);
                    q.push_back(*n);
                }
            }
        }
        None
    }

    pub fn reaches_any(&self, source: VehicleId, rsus: &[Rsu]) -> bool {
        rsus.iter().any(|r| self.bfs_hops(source, r.id).is_some())
    }
}

/// Edge set of a graph as plain `(a, b, kind)` strings, for comparison.
pub fn pairwise_edges(
    world: &[VehicleState],
    rsus: &[Rsu],
    v2v: f64,
    d2d: f64,
) -> BTreeSet<(NodeId, NodeId, &'static str)> {
    let mut out = BTreeSet::new();
    let ordered = |x: NodeId, y: NodeId| if x <= y { (x, y) } else { (y, x) };
    for (i, a) in world.iter().enumerate() {
        for b in &world[i + 1..] {
            let d = (a.position_m - b.position_m).abs();
            let (x, y) = ordered(a.id.into(), b.id.into());
            if d <= v2v {
                out.insert((x, y, "v2v"));
            }
            if d <= d2d && a.d2d_enabled && b.d2d_enabled {
                out.insert((x, y, "d2d"));
            }
        }
        for r in rsus {
            if (a.position_m - r.position_m).abs() <= v2v {
                let (x, y) = ordered(a.id.into(), r.id.into());
                out.insert((x, y, "v2v"));
            }
        }
    }
    for (i, a) in rsus.iter().enumerate() {
        for b in &rsus[i + 1..] {
            if (a.position_m - b.position_m).abs() <= v2v {
                let (x, y) = ordered(a.id.into(), b.id.into());
                out.insert((x, y, "v2v"));
            }
        }
    }
    out
}

/// Vehicles at `0, step, 2 step, …` strictly below `distance_m`, with the
/// destination at `distance_m`.
pub fn ideal_chain(distance_m: f64, step_m: f64) -> Vec<VehicleState> {
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let p = i as f64 * step_m;
        if p >= distance_m {
            break;
        }
        out.push(vehicle(i, p));
        i += 1;
    }
    out
}

/// Spearman rank correlation without tie handling beyond average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    cov / (sx * sy)
}

use hybrid_vanet::engine::target_rsu;
use hybrid_vanet::radio::{build_neighbor_tables, LinkModel};
use hybrid_vanet::routing::{
    broadcast_relay, forward_greedy, v2v_ra_recover, AlertMessage, RecoveryMethod,
};

pub fn link(range_m: f64) -> LinkModel {
    LinkModel {
        range_m,
        base_hop_ms: 50.0,
        interference_coeff: 0.0,
    }
}

/// Greedy dead end ⇔ the target RSU is unreachable in the pairwise graph.
pub fn check_dead_end_agreement(instances: usize) -> Result<(), String> {
    for seed in 0..instances as u64 {
        let inst = random_instance(seed, 2);
        let tables = build_neighbor_tables(&inst.world, inst.range_m, 0.0);
        let target = target_rsu(&inst.rsus, inst.pos(inst.source)).unwrap();
        let route = forward_greedy(&tables, inst.source, &target, &link(inst.range_m));
        let g = pairwise_graph(&inst.world, &inst.rsus, inst.range_m);
        let reachable = g.bfs_hops(inst.source, target.id).is_some();
        if route.delivered() != reachable {
            return Err(format!("seed {seed}: greedy delivered={} oracle reachable={reachable}", route.delivered()));
        }
    }
    Ok(())
}

/// Delivered greedy routes are BFS-shortest. Returns how many instances
/// delivered.
pub fn check_greedy_is_shortest(min_delivered: usize) -> Result<usize, String> {
    let mut delivered = 0;
    let mut seed = 10_000u64;
    while delivered < min_delivered {
        let inst = random_instance(seed, 2);
        let tables = build_neighbor_tables(&inst.world, inst.range_m, 0.0);
        let target = target_rsu(&inst.rsus, inst.pos(inst.source)).unwrap();
        let route = forward_greedy(&tables, inst.source, &target, &link(inst.range_m));
        if route.delivered() {
            delivered += 1;
            let g = pairwise_graph(&inst.world, &inst.rsus, inst.range_m);
            let bfs = g.bfs_hops(inst.source, target.id);
            if bfs != Some(route.hops) {
                return Err(format!("seed {seed}: greedy {} hops, bfs {bfs:?}", route.hops));
            }
        }
        seed += 1;
    }
    Ok(delivered)
}

/// Flood depth equals BFS depth, and flooding fails exactly when BFS does.
pub fn check_broadcast_depth(instances: usize) -> Result<(), String> {
    for seed in 20_000..20_000 + instances as u64 {
        let inst = random_instance(seed, 2);
        let tables = build_neighbor_tables(&inst.world, inst.range_m, 0.0);
        let target = target_rsu(&inst.rsus, inst.pos(inst.source)).unwrap();
        let flood = broadcast_relay(&tables, inst.source, &target, &link(inst.range_m));
        let g = pairwise_graph(&inst.world, &inst.rsus, inst.range_m);
        let bfs = g.bfs_hops(inst.source, target.id);
        let got = flood.delivered().then_some(flood.hops);
        if got != bfs {
            return Err(format!("seed {seed}: flood {got:?}, bfs {bfs:?}"));
        }
    }
    Ok(())
}

/// On dead-ended instances where some RSU is reachable from the hop trace,
/// recovery never exhausts; where none is, it always does. Returns the
/// number of qualifying (reachable) instances checked.
pub fn check_recovery_completeness(required: usize) -> Result<usize, String> {
    let mut qualifying = 0;
    let mut seed = 30_000u64;
    while qualifying < required {
        seed += 1;
        if seed > 2_000_000 {
            return Err(format!("only {qualifying} qualifying instances found"));
        }
        let inst = random_instance(seed, 3);
        let tables = build_neighbor_tables(&inst.world, inst.range_m, 0.0);
        let target = target_rsu(&inst.rsus, inst.pos(inst.source)).unwrap();
        let l = link(inst.range_m);
        let fwd = forward_greedy(&tables, inst.source, &target, &l);
        let Some(stuck) = fwd.stuck_at else { continue };
        let mut msg = AlertMessage::new(0, inst.source, target, 0.0);
        msg.hop_trace = fwd.vehicles().collect();
        let g = pairwise_graph(&inst.world, &inst.rsus, inst.range_m);
        let reachable = msg.hop_trace.iter().any(|v| g.reaches_any(*v, &inst.rsus));
        let r = v2v_ra_recover(&tables, &msg, stuck, &inst.rsus, &l, 50.0);
        let exhausted = r.method == RecoveryMethod::BackwardRecursionExhausted;
        if reachable {
            qualifying += 1;
            if exhausted {
                return Err(format!("seed {seed}: exhausted although an RSU is reachable"));
            }
            if !r.delivered() {
                return Err(format!("seed {seed}: {:?} without delivery", r.method));
            }
        } else if !exhausted {
            return Err(format!("seed {seed}: {:?} although no RSU is reachable", r.method));
        }
    }
    Ok(qualifying)
}
