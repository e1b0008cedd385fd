//! Discrete-event core.
//!
//! One run owns a ring road of vehicles, a queue of timed events and its own
//! random streams. Relay episodes are atomic: an alert's whole journey,
//! recovery included, is computed against the world as it stands at
//! emission, and its delays come from the timing model.

pub mod queue;
pub mod rng;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

use crate::config::{ConfigError, D2dMode, ScenarioConfig};
use crate::d2d::{hybrid_recover, D2dPlan};
use crate::ids::{NodeId, VehicleId};
use crate::metrics::{DeliveryRecord, Outcome, RecoveryKind, TraceRow};
use crate::mobility::{
    place_vehicles, step_mobility, write_trace_rows, IdmParams, MobilityError, SpeedRange,
    VehicleState, OVERSHOOT_TOLERANCE, TRACE_HEADER,
};
use crate::radio::{build_neighbor_tables, rsus_from, LinkModel, NeighborTables, Rsu};
use crate::routing::{
    forward_greedy, v2v_ra_recover, AlertMessage, MessageState, RecoveryResult, RecoveryStep,
    RouteOutcome, RouteResult,
};

pub use queue::{Event, EventKind, EventQueue};
use rng::Streams;

/// Mobility step, seconds.
pub const MOBILITY_DT_S: f64 = 0.5;

/// Extra width of an injected gap beyond the V2V range, metres.
pub const GAP_MARGIN_M: f64 = 50.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error("cannot inject a dead end with {0} vehicle(s); at least 2 are needed")]
    TooFewVehicles(usize),
    #[error("SIM_SEED must be an unsigned integer, got {0:?}")]
    BadSeedEnv(String),
    #[error("mobility trace {path}: {source}")]
    Trace { path: PathBuf, source: io::Error },
}

/// Seed precedence: explicit flag, then `SIM_SEED`, then the config.
pub fn effective_seed(config_seed: u64, flag: Option<u64>) -> Result<u64, EngineError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("SIM_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| EngineError::BadSeedEnv(v)),
        Err(_) => Ok(config_seed),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Collect per-hop route dumps in [`SimResult::route_trace`].
    pub route_trace: bool,
    /// Write every mobility snapshot to this CSV.
    pub mobility_trace: Option<PathBuf>,
}

/// Stretch of road whose moving vehicles are invisible to the radio, with
/// pinned relays on both edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadZone {
    pub start_m: f64,
    pub end_m: f64,
    pub near_edge: VehicleId,
    pub far_edge: VehicleId,
}

impl DeadZone {
    pub fn hides(&self, v: &VehicleState) -> bool {
        !v.pinned && v.position_m > self.start_m && v.position_m < self.end_m
    }
}

/// Creates a dead end `failure_distance_m` before `rsu_pos`: the vehicle
/// nearest the failure point is moved onto it, the one nearest
/// `failure point + gap_m` onto that, and both are pinned. Moving vehicles
/// between them are hidden by the returned zone. Vehicles beyond the gap are
/// untouched, so D2D bridges remain possible when the range spans it.
pub fn inject_dead_end(
    world: &mut Vec<VehicleState>,
    failure_distance_m: f64,
    rsu_pos: f64,
    gap_m: f64,
) -> Result<DeadZone, EngineError> {
    if world.len() < 2 {
        return Err(EngineError::TooFewVehicles(world.len()));
    }
    let start = rsu_pos - failure_distance_m;
    let end = start + gap_m;
    let mut pin_nearest = |at: f64| {
        let v = world
            .iter_mut()
            .filter(|v| !v.pinned)
            .min_by(|a, b| {
                (a.position_m - at)
                    .abs()
                    .total_cmp(&(b.position_m - at).abs())
                    .then(a.id.cmp(&b.id))
            })
            .expect("at least two vehicles");
        v.position_m = at;
        v.velocity_ms = 0.0;
        v.pinned = true;
        v.id
    };
    let near_edge = pin_nearest(start);
    let far_edge = pin_nearest(end);
    world.sort_by(|a, b| a.position_m.total_cmp(&b.position_m).then(a.id.cmp(&b.id)));
    Ok(DeadZone {
        start_m: start,
        end_m: end,
        near_edge,
        far_edge,
    })
}

/// Mobility sanity counters over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MobilityStats {
    pub ticks: u64,
    /// Follower reaching or passing its leader within one step.
    pub collisions: u64,
    /// Speeds outside `[0, desired × tolerance]`.
    pub speed_violations: u64,
    pub max_speed_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Config as run, with the effective seed.
    pub config_echo: ScenarioConfig,
    pub deliveries: Vec<DeliveryRecord>,
    pub route_trace: Vec<TraceRow>,
    pub trace_path: Option<PathBuf>,
    pub dead_zone: Option<DeadZone>,
    pub mobility: MobilityStats,
    pub events_processed: u64,
    /// Popped event times never decreased.
    pub clock_monotonic: bool,
    pub wall_time_s: f64,
}

pub fn run(config: &ScenarioConfig) -> Result<SimResult, EngineError> {
    run_with(config, &RunOptions::default())
}

struct Snapshot {
    visible: Vec<VehicleState>,
    tables: NeighborTables,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    rsus: Vec<Rsu>,
    link: LinkModel,
    plan: Option<D2dPlan>,
    idm: IdmParams,
    speeds: SpeedRange,
    streams: Streams,
    world: Vec<VehicleState>,
    zone: Option<DeadZone>,
    snapshot: Option<Snapshot>,
    now_s: f64,
    opts: &'a RunOptions,
    deliveries: Vec<DeliveryRecord>,
    route_trace: Vec<TraceRow>,
    stats: MobilityStats,
    trace_out: Option<BufWriter<File>>,
}

pub fn run_with(config: &ScenarioConfig, opts: &RunOptions) -> Result<SimResult, EngineError> {
    let started = Instant::now();
    let cfg = config.clone().validated()?;
    let mut streams = Streams::new(cfg.seed);
    let idm = IdmParams::default();
    let speeds = SpeedRange {
        min_kmh: cfg.speed_min_kmh,
        max_kmh: cfg.speed_max_kmh,
    };
    let world = place_vehicles(
        cfg.vehicle_count,
        cfg.road_length_m,
        speeds,
        &idm,
        &mut streams.placement,
        &mut streams.speeds,
    )?;
    let trace_err = |path: &PathBuf| {
        let path = path.clone();
        move |source| EngineError::Trace { path, source }
    };
    let trace_out = match &opts.mobility_trace {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(trace_err(p))?);
            writeln!(w, "{TRACE_HEADER}").map_err(trace_err(p))?;
            Some(w)
        }
        None => None,
    };
    let mut sim = Sim {
        cfg: &cfg,
        rsus: rsus_from(&cfg),
        link: LinkModel::v2v(&cfg),
        plan: D2dPlan::from_config(&cfg),
        idm,
        speeds,
        streams,
        world,
        zone: None,
        snapshot: None,
        now_s: 0.0,
        opts,
        deliveries: Vec::new(),
        route_trace: Vec::new(),
        stats: MobilityStats::default(),
        trace_out,
    };
    sim.write_snapshot().map_err(|e| trace_err(opts.mobility_trace.as_ref().unwrap())(e))?;

    let mut q = EventQueue::new();
    q.push(0.0, EventKind::InjectFailure);
    if cfg.sim_duration_s > 0.0 {
        q.push(0.0, EventKind::EmitAlert { k: 0 });
    }
    q.push(MOBILITY_DT_S, EventKind::MobilityTick { k: 1 });
    q.push(cfg.sim_duration_s, EventKind::EndOfRun);

    let mut events = 0u64;
    let mut monotonic = true;
    while let Some(ev) = q.pop() {
        events += 1;
        if ev.time_s < sim.now_s {
            monotonic = false;
        }
        sim.now_s = ev.time_s;
        match ev.kind {
            EventKind::InjectFailure => sim.inject()?,
            EventKind::EmitAlert { k } => {
                q.push(ev.time_s, EventKind::RelayEpisode { msg_id: k });
                let next = (k + 1) as f64 * cfg.packet_interval_s;
                if next < cfg.sim_duration_s {
                    q.push(next, EventKind::EmitAlert { k: k + 1 });
                }
            }
            EventKind::RelayEpisode { msg_id } => sim.relay_alert(msg_id),
            EventKind::MobilityTick { k } => {
                sim.tick();
                if let Some(p) = &opts.mobility_trace {
                    sim.write_snapshot().map_err(trace_err(p))?;
                }
                q.push((k + 1) as f64 * MOBILITY_DT_S, EventKind::MobilityTick { k: k + 1 });
            }
            EventKind::EndOfRun => break,
        }
    }
    if let (Some(w), Some(p)) = (sim.trace_out.as_mut(), &opts.mobility_trace) {
        w.flush().map_err(trace_err(p))?;
    }

    Ok(SimResult {
        deliveries: sim.deliveries,
        route_trace: sim.route_trace,
        trace_path: opts.mobility_trace.clone(),
        dead_zone: sim.zone,
        mobility: sim.stats,
        events_processed: events,
        clock_monotonic: monotonic,
        wall_time_s: started.elapsed().as_secs_f64(),
        config_echo: cfg,
    })
}

/// Nearest RSU at or ahead of `pos`, else the nearest one; ties to lowest id.
pub fn target_rsu(rsus: &[Rsu], pos: f64) -> Option<Rsu> {
    let nearest = |it: &mut dyn Iterator<Item = &Rsu>| {
        it.min_by(|a, b| {
            (a.position_m - pos)
                .abs()
                .total_cmp(&(b.position_m - pos).abs())
                .then(a.id.cmp(&b.id))
        })
        .copied()
    };
    nearest(&mut rsus.iter().filter(|r| r.position_m >= pos))
        .or_else(|| nearest(&mut rsus.iter()))
}

/// The visible, moving vehicle farthest from its target RSU; ties to lowest
/// id.
pub fn pick_source(visible: &[VehicleState], rsus: &[Rsu]) -> Option<(VehicleId, Rsu)> {
    visible
        .iter()
        .filter(|v| !v.pinned)
        .filter_map(|v| target_rsu(rsus, v.position_m).map(|r| (v, r)))
        .max_by(|(a, ra), (b, rb)| {
            (a.position_m - ra.position_m)
                .abs()
                .total_cmp(&(b.position_m - rb.position_m).abs())
                .then(b.id.cmp(&a.id))
        })
        .map(|(v, r)| (v.id, r))
}

impl Sim<'_> {
    fn inject(&mut self) -> Result<(), EngineError> {
        if self.cfg.failure_distance_m <= 0.0 {
            return Ok(());
        }
        let rsu_pos = self
            .rsus
            .iter()
            .map(|r| r.position_m)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = self.cfg.v2v_range_m + GAP_MARGIN_M;
        self.zone = Some(inject_dead_end(
            &mut self.world,
            self.cfg.failure_distance_m,
            rsu_pos,
            gap,
        )?);
        self.snapshot = None;
        Ok(())
    }

    fn tick(&mut self) {
        let road = self.cfg.road_length_m;
        let before = &self.world;
        let after = step_mobility(
            before,
            &self.idm,
            MOBILITY_DT_S,
            road,
            self.speeds,
            &mut self.streams.speeds,
        );
        self.stats.ticks += 1;
        self.check_motion(&after);
        self.world = after;
        self.snapshot = None;
    }

    /// Counts followers that caught their leader during the last step, using
    /// unwrapped displacements, and speeds outside the allowed band.
    fn check_motion(&mut self, after: &[VehicleState]) {
        let road = self.cfg.road_length_m;
        let moving: Vec<&VehicleState> = self.world.iter().filter(|v| !v.pinned).collect();
        let disp = |id: VehicleId, old: f64| {
            let new = after.iter().find(|v| v.id == id).unwrap().position_m;
            let d = new - old;
            if d < 0.0 {
                d + road
            } else {
                d
            }
        };
        let n = moving.len();
        if n > 1 {
            let shifts: Vec<f64> = moving.iter().map(|v| disp(v.id, v.position_m)).collect();
            for k in 0..n {
                let j = (k + 1) % n;
                let mut gap = moving[j].position_m - moving[k].position_m;
                if j == 0 {
                    gap += road;
                }
                if gap + shifts[j] - shifts[k] <= 0.0 {
                    self.stats.collisions += 1;
                }
            }
        }
        for v in after.iter().filter(|v| !v.pinned) {
            let ratio = v.velocity_ms / v.desired_speed_ms;
            self.stats.max_speed_ratio = self.stats.max_speed_ratio.max(ratio);
            if v.velocity_ms < 0.0 || ratio > OVERSHOOT_TOLERANCE {
                self.stats.speed_violations += 1;
            }
        }
    }

    fn write_snapshot(&mut self) -> io::Result<()> {
        match self.trace_out.as_mut() {
            Some(w) => write_trace_rows(w, self.now_s, &self.world),
            None => Ok(()),
        }
    }

    fn snapshot(&mut self) -> &Snapshot {
        if self.snapshot.is_none() {
            let visible: Vec<VehicleState> = self
                .world
                .iter()
                .filter(|v| !self.zone.is_some_and(|z| z.hides(v)))
                .cloned()
                .collect();
            let tables = build_neighbor_tables(&visible, self.cfg.v2v_range_m, self.now_s);
            self.snapshot = Some(Snapshot { visible, tables });
        }
        self.snapshot.as_ref().unwrap()
    }

    fn relay_alert(&mut self, msg_id: u64) {
        let now = self.now_s;
        let rsus = self.rsus.clone();
        let link = self.link;
        let plan = self.plan;
        let timing = self.cfg.resolved_timing();
        let mode = self.cfg.d2d_mode;
        let want_trace = self.opts.route_trace;
        let snap = self.snapshot();

        let Some((source, target)) = pick_source(&snap.visible, &rsus) else {
            self.deliveries.push(DeliveryRecord {
                msg_id,
                emitted_s: now,
                source: None,
                target: rsus[0].id,
                delivered_to: None,
                outcome: Outcome::Failed,
                total_hops: 0,
                v2v_hops: 0,
                d2d_hops: 0,
                e2e_delay_ms: 0.0,
                recovery_delay_ms: 0.0,
                recovery_method: RecoveryKind::None,
                oht: None,
                dead_end_at: None,
            });
            return;
        };
        let mut msg = AlertMessage::new(msg_id, source, target, now);
        let fwd = forward_greedy(&snap.tables, source, &target, &link);
        msg.hop_trace = fwd.vehicles().collect();

        let recovery = match fwd.stuck_at {
            None => None,
            Some(stuck) => {
                msg.state = MessageState::DeadEnd;
                msg.t_failure_s = Some(now + fwd.elapsed_ms / 1000.0);
                let r = match (mode, plan) {
                    (D2dMode::Disabled, _) | (_, None) => v2v_ra_recover(
                        &snap.tables,
                        &msg,
                        stuck,
                        &rsus,
                        &link,
                        timing.v2v_recovery_per_hop_ms,
                    ),
                    (_, Some(plan)) => hybrid_recover(
                        &msg,
                        stuck,
                        &snap.visible,
                        &snap.tables,
                        &plan,
                        timing.per_hop_d2d_ms,
                        &link,
                    ),
                };
                Some(r)
            }
        };

        let record = episode_record(&msg, &fwd, recovery.as_ref());
        if want_trace {
            let rows = episode_trace(msg_id, now * 1000.0, source, &fwd, recovery.as_ref());
            self.route_trace.extend(rows);
        }
        self.deliveries.push(record);
    }
}

fn failed_leg_hops(r: &RecoveryResult) -> usize {
    r.steps
        .iter()
        .map(|s| match s {
            RecoveryStep::FailedLeg { hop_ms, .. } => hop_ms.len(),
            _ => 0,
        })
        .sum()
}

fn episode_record(
    msg: &AlertMessage,
    fwd: &RouteResult,
    recovery: Option<&RecoveryResult>,
) -> DeliveryRecord {
    let base = DeliveryRecord {
        msg_id: msg.msg_id,
        emitted_s: msg.created_s,
        source: Some(msg.origin),
        target: msg.target.id,
        delivered_to: fwd.delivered_to(),
        outcome: Outcome::Delivered,
        total_hops: fwd.hops,
        v2v_hops: fwd.hops,
        d2d_hops: 0,
        e2e_delay_ms: fwd.elapsed_ms,
        recovery_delay_ms: 0.0,
        recovery_method: RecoveryKind::None,
        oht: None,
        dead_end_at: fwd.stuck_at,
    };
    let Some(r) = recovery else { return base };
    let final_hops = r.final_route.as_ref().map_or(0, |f| f.hops);
    let v2v_hops = fwd.hops + r.backward_hops + failed_leg_hops(r) + final_hops;
    let d2d_hops = usize::from(r.bridge.is_some());
    let delivered_to = r.final_route.as_ref().and_then(|f| f.delivered_to());
    DeliveryRecord {
        delivered_to,
        outcome: if r.delivered() {
            Outcome::Delivered
        } else {
            Outcome::Failed
        },
        total_hops: v2v_hops + d2d_hops,
        v2v_hops,
        d2d_hops,
        e2e_delay_ms: fwd.elapsed_ms + r.recovery_delay_ms,
        recovery_delay_ms: r.recovery_delay_ms,
        recovery_method: r.method.into(),
        oht: r.oht,
        ..base
    }
}

fn push_route(rows: &mut Vec<TraceRow>, msg_id: u64, t: &mut f64, route: &RouteResult) {
    for (node, ms) in route.path[1..].iter().zip(&route.hop_ms) {
        *t += ms;
        let event = match node {
            NodeId::Rsu(_) => "deliver",
            NodeId::Vehicle(_) => "hop",
        };
        rows.push(TraceRow {
            msg_id,
            event,
            time_ms: *t,
            node: Some(*node),
            detail: String::new(),
        });
    }
}

/// Route dump of one episode; the last row's time is emission plus the
/// end-to-end delay.
pub fn episode_trace(
    msg_id: u64,
    t0_ms: f64,
    source: VehicleId,
    fwd: &RouteResult,
    recovery: Option<&RecoveryResult>,
) -> Vec<TraceRow> {
    let mut t = t0_ms;
    let row = |event, time_ms, node: Option<NodeId>, detail: String| TraceRow {
        msg_id,
        event,
        time_ms,
        node,
        detail,
    };
    let mut rows = vec![row("emit", t, Some(source.into()), String::new())];
    push_route(&mut rows, msg_id, &mut t, fwd);
    let Some(r) = recovery else { return rows };
    if let Some(stuck) = fwd.stuck_at {
        rows.push(row("dead_end", t, Some(stuck.into()), String::new()));
    }
    let mut deferred = None;
    for step in &r.steps {
        match step {
            RecoveryStep::Backward { from, to, ms } => {
                t += ms;
                rows.push(row("backward", t, Some((*to).into()), format!("from {from}")));
            }
            RecoveryStep::FailedLeg { path, hop_ms, stuck_at } => {
                let leg = RouteResult {
                    outcome: RouteOutcome::DeadEnd,
                    hops: hop_ms.len(),
                    path: path.clone(),
                    stuck_at: Some(*stuck_at),
                    elapsed_ms: hop_ms.iter().sum(),
                    hop_ms: hop_ms.clone(),
                };
                push_route(&mut rows, msg_id, &mut t, &leg);
                rows.push(row("dead_end", t, Some((*stuck_at).into()), String::new()));
            }
            RecoveryStep::Redirect { from, to } => {
                rows.push(row("redirect", t, Some((*from).into()), format!("to {to}")));
            }
            RecoveryStep::Reverse { from, rsu } => {
                rows.push(row("reverse", t, Some((*from).into()), format!("to {rsu}")));
            }
            RecoveryStep::Discovery { ms } => {
                t += ms;
                rows.push(row("discovery", t, None, String::new()));
            }
            RecoveryStep::Handover { ms } => {
                t += ms;
                rows.push(row("handover", t, None, String::new()));
            }
            RecoveryStep::D2dHop { from, to, ms } => {
                t += ms;
                rows.push(row("d2d_hop", t, Some((*to).into()), format!("from {from}")));
            }
            RecoveryStep::Fail { at, cause } => {
                deferred = Some(row("fail", 0.0, Some((*at).into()), cause.to_string()));
            }
        }
    }
    if let Some(f) = &r.final_route {
        push_route(&mut rows, msg_id, &mut t, f);
    }
    if let Some(mut f) = deferred {
        f.time_ms = t;
        rows.push(f);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            road_length_m: 2000.0,
            vehicle_count: 40,
            rsu_positions_m: vec![2000.0],
            sim_duration_s: 20.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn zero_duration_emits_nothing() {
        let r = run(&ScenarioConfig {
            sim_duration_s: 0.0,
            ..small()
        })
        .unwrap();
        assert!(r.deliveries.is_empty());
    }

    #[test]
    fn one_alert_per_interval() {
        let r = run(&small()).unwrap();
        assert_eq!(r.deliveries.len(), 40);
        assert!(r.clock_monotonic);
        let ids: Vec<u64> = r.deliveries.iter().map(|d| d.msg_id).collect();
        assert_eq!(ids, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_records() {
        let a = run(&small()).unwrap();
        let b = run(&small()).unwrap();
        assert_eq!(a.deliveries, b.deliveries);
        let c = run(&ScenarioConfig { seed: 99, ..small() }).unwrap();
        assert_ne!(a.deliveries, c.deliveries);
    }

    #[test]
    fn injection_needs_two_vehicles() {
        let mut w = vec![VehicleState {
            id: VehicleId(0),
            position_m: 10.0,
            velocity_ms: 1.0,
            desired_speed_ms: 1.0,
            d2d_enabled: true,
            pinned: false,
        }];
        assert!(matches!(
            inject_dead_end(&mut w, 100.0, 1000.0, 600.0),
            Err(EngineError::TooFewVehicles(1))
        ));
    }

    #[test]
    fn injection_pins_gap_edges() {
        let cfg = crate::config::builtin("proactive_1500").unwrap();
        let r = run(&ScenarioConfig {
            sim_duration_s: 5.0,
            ..cfg
        })
        .unwrap();
        let z = r.dead_zone.unwrap();
        assert_eq!(z.start_m, 1000.0);
        assert_eq!(z.end_m, 1400.0);
        assert!(r
            .deliveries
            .iter()
            .all(|d| d.recovery_method == RecoveryKind::D2dFallback));
    }

    #[test]
    fn targets_prefer_rsu_ahead() {
        use crate::ids::RsuId;
        let rsus = [
            Rsu { id: RsuId(0), position_m: 0.0 },
            Rsu { id: RsuId(1), position_m: 9000.0 },
        ];
        assert_eq!(target_rsu(&rsus, 100.0).unwrap().id, RsuId(1));
        assert_eq!(target_rsu(&rsus, 9500.0).unwrap().id, RsuId(1));
        assert_eq!(target_rsu(&rsus[..1], 100.0).unwrap().id, RsuId(0));
    }

    #[test]
    fn trace_ends_at_e2e() {
        let r = run_with(
            &crate::config::builtin("v2vra_best").map(|c| ScenarioConfig { sim_duration_s: 3.0, ..c }).unwrap(),
            &RunOptions {
                route_trace: true,
                mobility_trace: None,
            },
        )
        .unwrap();
        for d in &r.deliveries {
            let last = r.route_trace.iter().filter(|t| t.msg_id == d.msg_id).last().unwrap();
            assert!((last.time_ms - (d.emitted_s * 1000.0 + d.e2e_delay_ms)).abs() < 1e-6);
        }
    }
}
