//! Single-lane ring-road mobility driven by the Intelligent Driver Model.

use std::io::{self, Write};

use thiserror::Error;

use crate::engine::rng::SimRng;
use crate::ids::VehicleId;

/// Allowed velocity overshoot over the desired speed from integration.
pub const OVERSHOOT_TOLERANCE: f64 = 1.05;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("cannot place {count} vehicles with {min_gap_m} m gaps on a {road_length_m} m road")]
    InfeasiblePacking {
        count: usize,
        road_length_m: f64,
        min_gap_m: f64,
    },
    #[error("invalid placement request: {0}")]
    InvalidInput(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub position_m: f64,
    pub velocity_ms: f64,
    pub desired_speed_ms: f64,
    pub d2d_enabled: bool,
    /// Parked at a fixed position (gap-edge relays of an injected dead end);
    /// excluded from car following.
    pub pinned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub max_accel_ms2: f64,
    pub comfortable_decel_ms2: f64,
    pub min_gap_m: f64,
    pub headway_s: f64,
    pub delta_exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            max_accel_ms2: 1.4,
            comfortable_decel_ms2: 2.0,
            min_gap_m: 2.0,
            headway_s: 1.5,
            delta_exponent: 4.0,
        }
    }
}

/// Desired-speed range in km/h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRange {
    pub min_kmh: f64,
    pub max_kmh: f64,
}

impl SpeedRange {
    pub fn sample_ms(&self, rng: &mut SimRng) -> f64 {
        rng.uniform(self.min_kmh, self.max_kmh) / 3.6
    }
}

/// Places `count` vehicles uniformly on `[0, road_length_m)` with pairwise
/// (and wrap-around) gaps of at least `idm.min_gap_m`, sorted by position.
///
/// Positions come from `placement`, desired speeds from `speeds`. Each vehicle
/// starts at its desired speed capped by the speed its headway supports,
/// `(gap - s0) / T`, so a tightly packed start does not end in a pileup.
pub fn place_vehicles(
    count: usize,
    road_length_m: f64,
    speeds: SpeedRange,
    idm: &IdmParams,
    placement: &mut SimRng,
    speed_rng: &mut SimRng,
) -> Result<Vec<VehicleState>, MobilityError> {
    if count == 0 {
        return Err(MobilityError::InvalidInput("count ≥ 1"));
    }
    if !(road_length_m > 0.0) {
        return Err(MobilityError::InvalidInput("road_length_m > 0"));
    }
    let reserved = count as f64 * idm.min_gap_m;
    if reserved > road_length_m {
        return Err(MobilityError::InfeasiblePacking {
            count,
            road_length_m,
            min_gap_m: idm.min_gap_m,
        });
    }
    // Sorted uniforms on the slack, then shifted by i gaps: every gap,
    // including the one across the wrap point, is at least min_gap.
    let slack = road_length_m - reserved;
    let mut offsets: Vec<f64> = (0..count).map(|_| placement.next_f64() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    let mut world: Vec<VehicleState> = offsets
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            let v0 = speeds.sample_ms(speed_rng);
            VehicleState {
                id: VehicleId(i as u32),
                position_m: u + i as f64 * idm.min_gap_m,
                velocity_ms: v0,
                desired_speed_ms: v0,
                d2d_enabled: true,
                pinned: false,
            }
        })
        .collect();
    if count > 1 {
        for i in 0..count {
            let mut gap = world[(i + 1) % count].position_m - world[i].position_m;
            if i + 1 == count {
                gap += road_length_m;
            }
            let cap = ((gap - idm.min_gap_m) / idm.headway_s).max(0.0);
            world[i].velocity_ms = world[i].velocity_ms.min(cap);
        }
    }
    Ok(world)
}

/// IDM acceleration for raw kinematic inputs. `leader` is `(gap_m,
/// leader_velocity_ms)`; `None` means free road.
pub fn idm_accel(v: f64, v0: f64, leader: Option<(f64, f64)>, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / v0).powf(p.delta_exponent);
    match leader {
        None => p.max_accel_ms2 * free,
        Some((gap, _)) if gap <= 0.0 => -5.0 * p.comfortable_decel_ms2,
        Some((gap, v_lead)) => {
            let dv = v - v_lead;
            let s_star = p.min_gap_m
                + v * p.headway_s
                + v * dv / (2.0 * (p.max_accel_ms2 * p.comfortable_decel_ms2).sqrt());
            let ratio = s_star / gap;
            p.max_accel_ms2 * (free - ratio * ratio)
        }
    }
}

/// IDM acceleration of `follower` behind `leader` (same direction, leader ahead).
pub fn idm_acceleration(
    follower: &VehicleState,
    leader: Option<&VehicleState>,
    p: &IdmParams,
) -> f64 {
    idm_accel(
        follower.velocity_ms,
        follower.desired_speed_ms,
        leader.map(|l| (l.position_m - follower.position_m, l.velocity_ms)),
        p,
    )
}

/// Advances the ring road by `dt_s` with semi-implicit Euler.
///
/// `world` must be sorted by position. Moving vehicles follow the next moving
/// vehicle ahead (cyclically); pinned vehicles stay put. A vehicle passing
/// `road_length_m` re-enters at the start with a freshly drawn desired speed.
/// The result is sorted by position.
pub fn step_mobility(
    world: &[VehicleState],
    p: &IdmParams,
    dt_s: f64,
    road_length_m: f64,
    speeds: SpeedRange,
    speed_rng: &mut SimRng,
) -> Vec<VehicleState> {
    debug_assert!(dt_s > 0.0 && dt_s <= 1.0);
    let moving: Vec<usize> = (0..world.len()).filter(|&i| !world[i].pinned).collect();
    let n = moving.len();
    let mut accel = vec![0.0; world.len()];
    for (k, &i) in moving.iter().enumerate() {
        let me = &world[i];
        let leader = if n > 1 {
            let l = &world[moving[(k + 1) % n]];
            let mut gap = l.position_m - me.position_m;
            if k + 1 == n {
                gap += road_length_m;
            }
            Some((gap, l.velocity_ms))
        } else {
            None
        };
        accel[i] = idm_accel(me.velocity_ms, me.desired_speed_ms, leader, p);
    }
    let mut out: Vec<VehicleState> = world
        .iter()
        .zip(&accel)
        .map(|(v, a)| {
            let mut v = v.clone();
            if !v.pinned {
                v.velocity_ms = (v.velocity_ms + a * dt_s).max(0.0);
                v.position_m += v.velocity_ms * dt_s;
            }
            v
        })
        .collect();
    // Resample in id order so the draw sequence does not depend on sort order.
    let mut wrapped: Vec<usize> = (0..out.len())
        .filter(|&i| !out[i].pinned && out[i].position_m >= road_length_m)
        .collect();
    wrapped.sort_by_key(|&i| out[i].id);
    for i in wrapped {
        let v = &mut out[i];
        v.position_m -= road_length_m;
        v.desired_speed_ms = speeds.sample_ms(speed_rng);
        v.velocity_ms = v.velocity_ms.min(v.desired_speed_ms);
    }
    out.sort_by(|a, b| a.position_m.total_cmp(&b.position_m).then(a.id.cmp(&b.id)));
    out
}

/// Smallest cyclic bumper gap between consecutive moving vehicles, or `None`
/// with fewer than two moving vehicles.
pub fn min_cyclic_gap(world: &[VehicleState], road_length_m: f64) -> Option<f64> {
    let pos: Vec<f64> = world
        .iter()
        .filter(|v| !v.pinned)
        .map(|v| v.position_m)
        .collect();
    if pos.len() < 2 {
        return None;
    }
    let mut min = road_length_m - pos[pos.len() - 1] + pos[0];
    for w in pos.windows(2) {
        min = min.min(w[1] - w[0]);
    }
    Some(min)
}

/// Writes `time_s,vehicle_id,position_m,velocity_ms` rows for one snapshot.
pub fn write_trace_rows<W: Write>(
    out: &mut W,
    time_s: f64,
    world: &[VehicleState],
) -> io::Result<()> {
    let mut by_id: Vec<&VehicleState> = world.iter().collect();
    by_id.sort_by_key(|v| v.id);
    for v in by_id {
        writeln!(
            out,
            "{},{},{:.6},{:.6}",
            time_s, v.id.0, v.position_m, v.velocity_ms
        )?;
    }
    Ok(())
}

pub const TRACE_HEADER: &str = "time_s,vehicle_id,position_m,velocity_ms";
