//! V2V relaying toward an RSU: greedy geographic forwarding, one-shot
//! broadcast flooding, dead-end detection and the backward recovery
//! procedure (V2V-RA).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::d2d::OhtBreakdown;
use crate::ids::{NodeId, RsuId, VehicleId};
use crate::radio::{in_range, LinkModel, NeighborTable, NeighborTables, Rsu};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageState {
    InFlight,
    DeadEnd,
    Recovering,
    Delivered,
    Failed,
}

/// A safety alert travelling toward an RSU.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertMessage {
    pub msg_id: u64,
    pub origin: VehicleId,
    pub target: Rsu,
    /// Every vehicle the message visited, in order; backward steps appear as
    /// revisits.
    pub hop_trace: Vec<VehicleId>,
    pub created_s: f64,
    /// Instant the dead end was detected (T_f).
    pub t_failure_s: Option<f64>,
    /// Instant an RSU received the message (T_a).
    pub t_arrival_s: Option<f64>,
    pub direction: Direction,
    pub state: MessageState,
}

impl AlertMessage {
    pub fn new(msg_id: u64, origin: VehicleId, target: Rsu, created_s: f64) -> Self {
        Self {
            msg_id,
            origin,
            target,
            hop_trace: vec![origin],
            created_s,
            t_failure_s: None,
            t_arrival_s: None,
            direction: Direction::Forward,
            state: MessageState::InFlight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteOutcome {
    Delivered,
    DeadEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteResult {
    pub outcome: RouteOutcome,
    pub hops: usize,
    /// Visited nodes; a delivered route ends with the receiving RSU.
    pub path: Vec<NodeId>,
    pub stuck_at: Option<VehicleId>,
    pub elapsed_ms: f64,
    /// Delay of each hop, `hop_ms.len() == hops`.
    pub hop_ms: Vec<f64>,
}

impl RouteResult {
    pub fn delivered(&self) -> bool {
        self.outcome == RouteOutcome::Delivered
    }

    pub fn delivered_to(&self) -> Option<RsuId> {
        match self.path.last() {
            Some(NodeId::Rsu(r)) => Some(*r),
            _ => None,
        }
    }

    /// Vehicles on the path, in order.
    pub fn vehicles(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.path.iter().filter_map(|n| match n {
            NodeId::Vehicle(v) => Some(*v),
            NodeId::Rsu(_) => None,
        })
    }

    fn start(source: VehicleId) -> Self {
        Self {
            outcome: RouteOutcome::DeadEnd,
            hops: 0,
            path: vec![NodeId::Vehicle(source)],
            stuck_at: Some(source),
            elapsed_ms: 0.0,
            hop_ms: Vec::new(),
        }
    }

    fn push_hop(&mut self, to: NodeId, ms: f64) {
        self.path.push(to);
        self.hops += 1;
        self.elapsed_ms += ms;
        self.hop_ms.push(ms);
    }

    fn deliver(&mut self, rsu: RsuId, ms: f64) {
        self.push_hop(NodeId::Rsu(rsu), ms);
        self.outcome = RouteOutcome::Delivered;
        self.stuck_at = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMethod {
    RedirectNeighbor,
    AlternateRsu,
    BackwardRecursionExhausted,
    D2dFallback,
}

impl RecoveryMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryMethod::RedirectNeighbor => "redirect_neighbor",
            RecoveryMethod::AlternateRsu => "alternate_rsu",
            RecoveryMethod::BackwardRecursionExhausted => "exhausted",
            RecoveryMethod::D2dFallback => "d2d_fallback",
        }
    }
}

/// One action taken while recovering, for route dumps.
#[derive(Debug, Clone, PartialEq)]
pub enum RecoveryStep {
    Backward { from: VehicleId, to: VehicleId, ms: f64 },
    /// A forward leg that dead-ended again at `stuck_at`.
    FailedLeg { path: Vec<NodeId>, hop_ms: Vec<f64>, stuck_at: VehicleId },
    Redirect { from: VehicleId, to: VehicleId },
    Reverse { from: VehicleId, rsu: RsuId },
    Discovery { ms: f64 },
    Handover { ms: f64 },
    D2dHop { from: VehicleId, to: VehicleId, ms: f64 },
    Fail { at: VehicleId, cause: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub method: RecoveryMethod,
    pub backward_hops: usize,
    /// First vehicle of the continuation route.
    pub resumed_from: Option<VehicleId>,
    pub recovery_delay_ms: f64,
    /// Continuation from the recovery point; `None` when nothing could be
    /// attempted, a dead-end route when the continuation failed.
    pub final_route: Option<RouteResult>,
    pub steps: Vec<RecoveryStep>,
    /// Set by the D2D fallback when a bridge was found.
    pub oht: Option<OhtBreakdown>,
    /// D2D bridge endpoints `(from, to)`.
    pub bridge: Option<(VehicleId, VehicleId)>,
    /// Updated hop trace including backward steps and the continuation.
    pub hop_trace: Vec<VehicleId>,
}

impl RecoveryResult {
    pub fn delivered(&self) -> bool {
        self.final_route.as_ref().is_some_and(|r| r.delivered())
    }

    pub fn exhausted(hop_trace: Vec<VehicleId>) -> Self {
        Self {
            method: RecoveryMethod::BackwardRecursionExhausted,
            backward_hops: 0,
            resumed_from: None,
            recovery_delay_ms: 0.0,
            final_route: None,
            steps: Vec::new(),
            oht: None,
            bridge: None,
            hop_trace,
        }
    }
}

fn distance(pos: f64, target_pos: f64) -> f64 {
    (pos - target_pos).abs()
}

/// Max-progress neighbor strictly closer to `target_pos` than the table's
/// owner and accepted by `allow`; ties go to the lowest id.
fn best_progress(
    table: &NeighborTable,
    target_pos: f64,
    allow: impl Fn(VehicleId, f64) -> bool,
) -> Option<VehicleId> {
    let here = distance(table.owner_position_m, target_pos);
    table
        .entries
        .iter()
        .filter(|e| distance(e.position_m, target_pos) < here && allow(e.id, e.position_m))
        .min_by(|a, b| {
            distance(a.position_m, target_pos)
                .total_cmp(&distance(b.position_m, target_pos))
                .then(a.id.cmp(&b.id))
        })
        .map(|e| e.id)
}

/// Greedy geographic next hop: the neighbor making the most progress toward
/// `target_pos`, or `None` when no neighbor is strictly closer.
pub fn greedy_next_hop(table: &NeighborTable, target_pos: f64) -> Option<VehicleId> {
    best_progress(table, target_pos, |_, _| true)
}

/// True when the owner can neither reach the RSU directly nor make progress.
pub fn is_dead_end(table: &NeighborTable, target_pos: f64, v2v_range_m: f64) -> bool {
    !in_range(table.owner_position_m, target_pos, v2v_range_m)
        && greedy_next_hop(table, target_pos).is_none()
}

fn greedy_route(
    tables: &NeighborTables,
    source: VehicleId,
    target: &Rsu,
    link: &LinkModel,
    excluded: &BTreeSet<VehicleId>,
) -> RouteResult {
    let mut route = RouteResult::start(source);
    let mut current = source;
    while let Some(table) = tables.get(&current) {
        let cost = link.hop_delay(table.len());
        if in_range(table.owner_position_m, target.position_m, link.range_m) {
            route.deliver(target.id, cost);
            return route;
        }
        match best_progress(table, target.position_m, |id, _| !excluded.contains(&id)) {
            Some(next) => {
                route.push_hop(NodeId::Vehicle(next), cost);
                route.stuck_at = Some(next);
                current = next;
            }
            None => break,
        }
    }
    route
}

/// Greedy forwarding from `source` until a vehicle within range of `target`
/// hands the message to it, or no neighbor makes progress.
///
/// Each hop costs the transmitter's contention-inflated hop delay; the final
/// hop into the RSU counts as a hop.
pub fn forward_greedy(
    tables: &NeighborTables,
    source: VehicleId,
    target: &Rsu,
    link: &LinkModel,
) -> RouteResult {
    greedy_route(tables, source, target, link, &BTreeSet::new())
}

/// Breadth-first flood: every vehicle rebroadcasts once. Delivers at the
/// first BFS level holding a vehicle within range of `target`; the reported
/// path is the BFS-tree branch of that vehicle.
pub fn broadcast_relay(
    tables: &NeighborTables,
    source: VehicleId,
    target: &Rsu,
    link: &LinkModel,
) -> RouteResult {
    let mut parent: BTreeMap<VehicleId, VehicleId> = BTreeMap::new();
    let mut seen: BTreeSet<VehicleId> = BTreeSet::from([source]);
    let mut frontier = vec![source];
    let mut best = source;
    while !frontier.is_empty() {
        let hit = frontier.iter().copied().find(|v| {
            tables
                .get(v)
                .is_some_and(|t| in_range(t.owner_position_m, target.position_m, link.range_m))
        });
        if let Some(v) = hit {
            let mut chain = vec![v];
            while let Some(p) = parent.get(chain.last().unwrap()) {
                chain.push(*p);
            }
            chain.reverse();
            let mut route = RouteResult::start(source);
            for pair in chain.windows(2) {
                route.push_hop(NodeId::Vehicle(pair[1]), link.hop_delay(tables[&pair[0]].len()));
            }
            route.deliver(target.id, link.hop_delay(tables[&v].len()));
            return route;
        }
        let mut next = Vec::new();
        for v in &frontier {
            let Some(table) = tables.get(v) else { continue };
            for e in &table.entries {
                if seen.insert(e.id) {
                    parent.insert(e.id, *v);
                    next.push(e.id);
                }
            }
        }
        frontier = next;
        for v in &frontier {
            let d = |id: &VehicleId| distance(tables[id].owner_position_m, target.position_m);
            if d(v) < d(&best) {
                best = *v;
            }
        }
    }
    // Undeliverable: report the branch to the vehicle closest to the target.
    let mut chain = vec![best];
    while let Some(p) = parent.get(chain.last().unwrap()) {
        chain.push(*p);
    }
    chain.reverse();
    let mut route = RouteResult::start(source);
    for pair in chain.windows(2) {
        route.push_hop(NodeId::Vehicle(pair[1]), link.hop_delay(tables[&pair[0]].len()));
    }
    route.stuck_at = Some(best);
    route
}

/// Active forward route implied by a hop trace: a revisit of the previous
/// vehicle is a backward step and pops the route.
fn active_route(trace: &[VehicleId]) -> Vec<VehicleId> {
    let mut route: Vec<VehicleId> = Vec::new();
    for &v in trace {
        if route.len() >= 2 && route[route.len() - 2] == v {
            route.pop();
        } else {
            route.push(v);
        }
    }
    route
}

/// V2V-RA recovery of `msg`, which dead-ended at `stuck_at`.
///
/// 1. The dead end hands the message back to its predecessor.
/// 2. The predecessor then tries, in order:
///    a. redirecting to a neighbor that is not on the hop trace and is
///       strictly closer to the target than both itself and every reported
///       dead end, resuming greedy forwarding from there (trace vehicles
///       excluded);
///    b. greedy forwarding toward each other RSU, nearest first;
///    c. repeating from step 1 with itself as the dead end.
///
/// A redirected leg that dead-ends again re-enters the procedure from its new
/// dead end with the accumulated trace. The origin, having no predecessor,
/// runs step 2 itself before giving up.
pub fn v2v_ra_recover(
    tables: &NeighborTables,
    msg: &AlertMessage,
    stuck_at: VehicleId,
    rsus: &[Rsu],
    link: &LinkModel,
    backward_hop_ms: f64,
) -> RecoveryResult {
    let mut walk = msg.hop_trace.clone();
    if walk.is_empty() {
        return RecoveryResult::exhausted(walk);
    }
    let target = msg.target;
    let pos = |v: VehicleId| tables.get(&v).map(|t| t.owner_position_m);
    let mut route = active_route(&walk);
    let mut tried: BTreeSet<VehicleId> = walk.iter().copied().collect();
    let mut frontier = pos(stuck_at).map_or(f64::INFINITY, |p| distance(p, target.position_m));
    let mut steps = Vec::new();
    let mut backward_hops = 0usize;
    let mut sunk_ms = 0.0;

    // Step 1: back to the predecessor; returns false at the origin.
    let step_back = |route: &mut Vec<VehicleId>,
                     walk: &mut Vec<VehicleId>,
                     steps: &mut Vec<RecoveryStep>,
                     backward_hops: &mut usize|
     -> bool {
        if route.len() < 2 {
            return false;
        }
        let from = route.pop().unwrap();
        let to = *route.last().unwrap();
        walk.push(to);
        steps.push(RecoveryStep::Backward {
            from,
            to,
            ms: backward_hop_ms,
        });
        *backward_hops += 1;
        true
    };

    step_back(&mut route, &mut walk, &mut steps, &mut backward_hops);
    let mut alternates: Vec<Rsu> = rsus.iter().copied().filter(|r| r.id != target.id).collect();

    loop {
        let here = *route.last().unwrap();
        let Some(table) = tables.get(&here) else { break };

        // 2a: redirect past the reported dead end.
        let candidate = best_progress(table, target.position_m, |id, p| {
            !tried.contains(&id) && distance(p, target.position_m) < frontier
        });
        if let Some(next) = candidate {
            steps.push(RecoveryStep::Redirect { from: here, to: next });
            let mut excluded = tried.clone();
            excluded.extend(route.iter().copied());
            let leg = greedy_route(tables, next, &target, link, &excluded);
            let mut cont = RouteResult::start(here);
            cont.push_hop(NodeId::Vehicle(next), link.hop_delay(table.len()));
            for (node, ms) in leg.path[1..].iter().zip(&leg.hop_ms) {
                cont.push_hop(*node, *ms);
            }
            cont.outcome = leg.outcome;
            cont.stuck_at = leg.stuck_at;
            walk.extend(cont.vehicles().skip(1));
            if cont.delivered() {
                let delay = backward_hops as f64 * backward_hop_ms + sunk_ms + cont.elapsed_ms;
                return RecoveryResult {
                    method: RecoveryMethod::RedirectNeighbor,
                    backward_hops,
                    resumed_from: Some(here),
                    recovery_delay_ms: delay,
                    final_route: Some(cont),
                    steps,
                    oht: None,
                    bridge: None,
                    hop_trace: walk,
                };
            }
            // Dead end again: re-enter from the new dead end.
            let new_stuck = cont.stuck_at.unwrap_or(next);
            sunk_ms += cont.elapsed_ms;
            tried.extend(cont.vehicles());
            route.extend(cont.vehicles().skip(1));
            if let Some(p) = pos(new_stuck) {
                frontier = frontier.min(distance(p, target.position_m));
            }
            steps.push(RecoveryStep::FailedLeg {
                path: cont.path.clone(),
                hop_ms: cont.hop_ms.clone(),
                stuck_at: new_stuck,
            });
            step_back(&mut route, &mut walk, &mut steps, &mut backward_hops);
            continue;
        }

        // 2b: another RSU, nearest first.
        let here_pos = table.owner_position_m;
        alternates.sort_by(|a, b| {
            distance(a.position_m, here_pos)
                .total_cmp(&distance(b.position_m, here_pos))
                .then(a.id.cmp(&b.id))
        });
        for rsu in &alternates {
            let leg = forward_greedy(tables, here, rsu, link);
            if leg.delivered() {
                steps.push(RecoveryStep::Reverse { from: here, rsu: rsu.id });
                walk.extend(leg.vehicles().skip(1));
                let delay = backward_hops as f64 * backward_hop_ms + sunk_ms + leg.elapsed_ms;
                return RecoveryResult {
                    method: RecoveryMethod::AlternateRsu,
                    backward_hops,
                    resumed_from: Some(here),
                    recovery_delay_ms: delay,
                    final_route: Some(leg),
                    steps,
                    oht: None,
                    bridge: None,
                    hop_trace: walk,
                };
            }
        }

        // 2c: go back one more hop.
        if !step_back(&mut route, &mut walk, &mut steps, &mut backward_hops) {
            break;
        }
    }

    let at = *route.last().unwrap();
    steps.push(RecoveryStep::Fail {
        at,
        cause: "backward recursion exhausted",
    });
    RecoveryResult {
        method: RecoveryMethod::BackwardRecursionExhausted,
        backward_hops,
        resumed_from: None,
        recovery_delay_ms: backward_hops as f64 * backward_hop_ms + sunk_ms,
        final_route: None,
        steps,
        oht: None,
        bridge: None,
        hop_trace: walk,
    }
}

/// Whether a continuation toward `rsu` from `from` travels against the
/// original direction toward `target`.
pub fn is_reverse(from_pos: f64, target: &Rsu, rsu: &Rsu) -> bool {
    (rsu.position_m - from_pos).signum() != (target.position_m - from_pos).signum()
}

/// Plain BFS hop distance from `source` to `target` over V2V tables, used to
/// cross-check flooding. Vehicles within range of the target hand over in
/// one extra hop.
pub fn bfs_hops_to_rsu(
    tables: &NeighborTables,
    source: VehicleId,
    target: &Rsu,
    range_m: f64,
) -> Option<usize> {
    let mut depth: BTreeMap<VehicleId, usize> = BTreeMap::from([(source, 0)]);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let t = tables.get(&v)?;
        if in_range(t.owner_position_m, target.position_m, range_m) {
            return Some(depth[&v] + 1);
        }
        for e in &t.entries {
            if !depth.contains_key(&e.id) {
                depth.insert(e.id, depth[&v] + 1);
                queue.push_back(e.id);
            }
        }
    }
    None
}
