//! LTE D2D fallback: discovery and handover overhead, the residual V2V leg
//! after a bridge hop, and the hybrid recovery itself.

use thiserror::Error;

use crate::config::{D2dMode, ScenarioConfig, TimingModel};
use crate::ids::VehicleId;
use crate::mobility::VehicleState;
use crate::radio::{in_range, LinkModel, NeighborTables};
use crate::routing::{
    forward_greedy, AlertMessage, RecoveryMethod, RecoveryResult, RecoveryStep,
};

#[derive(Debug, Error, PartialEq)]
pub enum D2dError {
    #[error("d2d range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("negative overhead component {name} = {value}")]
    NegativeInput { name: &'static str, value: f64 },
}

/// Per-run D2D parameters. Proactive plans carry zero discovery and handover
/// cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D2dPlan {
    pub mode: D2dMode,
    pub t_discovery_ms: f64,
    pub t_handover_ms: f64,
    pub d2d_range_m: f64,
}

impl D2dPlan {
    pub fn new(mode: D2dMode, timing: &TimingModel, d2d_range_m: f64) -> Self {
        let t = timing.resolve(mode);
        Self {
            mode,
            t_discovery_ms: t.t_discovery_ms,
            t_handover_ms: t.t_handover_ms,
            d2d_range_m,
        }
    }

    /// `None` when the scenario runs pure V2V.
    pub fn from_config(cfg: &ScenarioConfig) -> Option<Self> {
        match cfg.d2d_mode {
            D2dMode::Disabled => None,
            mode => Some(Self::new(mode, &cfg.timing, cfg.d2d_range_m)),
        }
    }
}

/// Overhead of one hybrid recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhtBreakdown {
    pub t_discovery_ms: f64,
    /// Both handovers, into D2D and back.
    pub t_handover_total_ms: f64,
    pub t_v2v_rest_ms: f64,
    pub total_ms: f64,
}

/// `D2D_OHT = T_D + 2 T_HO + T_V2V(L_Rest)`.
pub fn d2d_oht(
    t_discovery_ms: f64,
    t_handover_ms: f64,
    t_v2v_rest_ms: f64,
) -> Result<OhtBreakdown, D2dError> {
    for (name, value) in [
        ("t_discovery_ms", t_discovery_ms),
        ("t_handover_ms", t_handover_ms),
        ("t_v2v_rest_ms", t_v2v_rest_ms),
    ] {
        if !(value >= 0.0) {
            return Err(D2dError::NegativeInput { name, value });
        }
    }
    let t_handover_total_ms = 2.0 * t_handover_ms;
    Ok(OhtBreakdown {
        t_discovery_ms,
        t_handover_total_ms,
        t_v2v_rest_ms,
        total_ms: t_discovery_ms + t_handover_total_ms + t_v2v_rest_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestLength {
    pub meters: f64,
    /// The bridge alone covers the whole distance.
    pub direct_delivery: bool,
}

/// Road left for the V2V leg after a bridge hop of `d2d_range_m`.
pub fn l_rest(total_distance_m: f64, d2d_range_m: f64) -> Result<RestLength, D2dError> {
    if !(d2d_range_m > 0.0) {
        return Err(D2dError::NonPositiveRange(d2d_range_m));
    }
    if d2d_range_m > total_distance_m {
        return Ok(RestLength {
            meters: 0.0,
            direct_delivery: true,
        });
    }
    Ok(RestLength {
        meters: total_distance_m - d2d_range_m,
        direct_delivery: false,
    })
}

/// The D2D-capable vehicle within `d2d_range_m` of `stuck_at` making the most
/// progress toward `target_pos`; ties go to the lowest id.
pub fn discover_bridge(
    stuck_at: VehicleId,
    world: &[VehicleState],
    d2d_range_m: f64,
    target_pos: f64,
) -> Option<VehicleId> {
    let origin = world.iter().find(|v| v.id == stuck_at)?;
    let here = (origin.position_m - target_pos).abs();
    world
        .iter()
        .filter(|v| {
            v.id != stuck_at
                && v.d2d_enabled
                && in_range(origin.position_m, v.position_m, d2d_range_m)
                && (v.position_m - target_pos).abs() < here
        })
        .min_by(|a, b| {
            (a.position_m - target_pos)
                .abs()
                .total_cmp(&(b.position_m - target_pos).abs())
                .then(a.id.cmp(&b.id))
        })
        .map(|v| v.id)
}

/// Hybrid recovery: discovery and handover into D2D, one bridge hop, handover
/// back to V2V, then greedy forwarding from the bridge vehicle.
///
/// A second dead end after the bridge fails the message; only one D2D hop is
/// ever taken.
pub fn hybrid_recover(
    msg: &AlertMessage,
    stuck_at: VehicleId,
    world: &[VehicleState],
    tables: &NeighborTables,
    plan: &D2dPlan,
    per_hop_d2d_ms: f64,
    link: &LinkModel,
) -> RecoveryResult {
    let target = msg.target;
    let mut hop_trace = msg.hop_trace.clone();
    let failed = |steps: Vec<RecoveryStep>, delay: f64, hop_trace: Vec<VehicleId>| RecoveryResult {
        method: RecoveryMethod::D2dFallback,
        backward_hops: 0,
        resumed_from: None,
        recovery_delay_ms: delay,
        final_route: None,
        steps,
        oht: None,
        bridge: None,
        hop_trace,
    };

    let capable = world.iter().any(|v| v.id == stuck_at && v.d2d_enabled);
    if !capable {
        let steps = vec![RecoveryStep::Fail {
            at: stuck_at,
            cause: "dead end is not d2d capable",
        }];
        return failed(steps, 0.0, hop_trace);
    }

    let mut steps = vec![
        RecoveryStep::Discovery {
            ms: plan.t_discovery_ms,
        },
        RecoveryStep::Handover {
            ms: plan.t_handover_ms,
        },
    ];
    let Some(bridge) = discover_bridge(stuck_at, world, plan.d2d_range_m, target.position_m) else {
        steps.push(RecoveryStep::Fail {
            at: stuck_at,
            cause: "no d2d bridge in range",
        });
        return failed(steps, plan.t_discovery_ms + plan.t_handover_ms, hop_trace);
    };

    steps.push(RecoveryStep::D2dHop {
        from: stuck_at,
        to: bridge,
        ms: per_hop_d2d_ms,
    });
    steps.push(RecoveryStep::Handover {
        ms: plan.t_handover_ms,
    });
    let rest = forward_greedy(tables, bridge, &target, link);
    let oht = d2d_oht(plan.t_discovery_ms, plan.t_handover_ms, rest.elapsed_ms)
        .expect("plan and route delays are non-negative");
    hop_trace.extend(rest.vehicles());
    if let (false, Some(at)) = (rest.delivered(), rest.stuck_at) {
        steps.push(RecoveryStep::Fail {
            at,
            cause: "dead end after d2d bridge",
        });
    }
    RecoveryResult {
        method: RecoveryMethod::D2dFallback,
        backward_hops: 0,
        resumed_from: Some(bridge),
        recovery_delay_ms: oht.total_ms + per_hop_d2d_ms,
        final_route: Some(rest),
        steps,
        oht: Some(oht),
        bridge: Some((stuck_at, bridge)),
        hop_trace,
    }
}

/// Closed-form delay of reaching a destination `distance_m` away with hops
/// of `range_m` each costing `hop_ms`.
pub fn chain_delay_ms(distance_m: f64, range_m: f64, hop_ms: f64) -> f64 {
    (distance_m / range_m).ceil() * hop_ms
}
