//! Scenario descriptions.
//!
//! A scenario file is flat UTF-8 text with one `key = value` pair per line.
//! `#` starts a comment, lists are comma separated and every key is a field
//! name of [`ScenarioConfig`] or [`TimingModel`]. Keys that are absent keep
//! the Table I defaults of [`ScenarioConfig::default`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Upper bound accepted for vehicle speeds, km/h.
pub const MAX_SPEED_KMH: f64 = 200.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown scenario `{0}` (neither a built-in name nor a readable file)")]
    UnknownScenario(String),
    #[error("unknown scenario variable `{0}`")]
    UnknownVariable(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// A violated scenario invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub invariant: String,
}

impl Violation {
    fn new(field: &'static str, invariant: impl Into<String>) -> Self {
        Self {
            field,
            invariant: invariant.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.invariant)
    }
}

/// How the D2D fallback discovers its bridge partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum D2dMode {
    /// Pure V2V: dead ends go through V2V-RA.
    Disabled,
    /// Discovery ran before the failure; no discovery or handover cost.
    Proactive,
    /// Discovery is triggered by the dead end and charged in full.
    OnDemand,
}

impl D2dMode {
    pub fn as_str(self) -> &'static str {
        match self {
            D2dMode::Disabled => "disabled",
            D2dMode::Proactive => "proactive",
            D2dMode::OnDemand => "on_demand",
        }
    }
}

impl fmt::Display for D2dMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for D2dMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disabled" => Ok(D2dMode::Disabled),
            "proactive" => Ok(D2dMode::Proactive),
            "on_demand" => Ok(D2dMode::OnDemand),
            other => Err(format!(
                "unknown d2d_mode `{other}` (expected disabled, proactive or on_demand)"
            )),
        }
    }
}

/// Delay constants, all in milliseconds except the dimensionless
/// interference coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    /// D2D discovery latency (T_D).
    pub t_discovery_ms: f64,
    /// One handover between 802.11p and D2D (T_HO).
    pub t_handover_ms: f64,
    pub per_hop_v2v_ms: f64,
    pub per_hop_d2d_ms: f64,
    /// Cost of one backward hop during V2V-RA.
    pub v2v_recovery_per_hop_ms: f64,
    /// Per-neighbor inflation of the V2V hop delay.
    pub interference_coeff: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            t_discovery_ms: 64.0,
            t_handover_ms: 10.0,
            per_hop_v2v_ms: 50.0,
            per_hop_d2d_ms: 100.0,
            v2v_recovery_per_hop_ms: 50.0,
            interference_coeff: 0.02,
        }
    }
}

impl TimingModel {
    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("t_discovery_ms", self.t_discovery_ms),
            ("t_handover_ms", self.t_handover_ms),
            ("per_hop_v2v_ms", self.per_hop_v2v_ms),
            ("per_hop_d2d_ms", self.per_hop_d2d_ms),
            ("v2v_recovery_per_hop_ms", self.v2v_recovery_per_hop_ms),
            ("interference_coeff", self.interference_coeff),
        ]
    }

    /// Timing as seen by a run in `mode`: proactive discovery costs nothing.
    pub fn resolve(&self, mode: D2dMode) -> TimingModel {
        match mode {
            D2dMode::Proactive => TimingModel {
                t_discovery_ms: 0.0,
                t_handover_ms: 0.0,
                ..*self
            },
            D2dMode::Disabled | D2dMode::OnDemand => *self,
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub road_length_m: f64,
    /// Total vehicles on the road (density is `vehicle_count / road_length_m`).
    pub vehicle_count: usize,
    pub v2v_range_m: f64,
    pub d2d_range_m: f64,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub packet_interval_s: f64,
    /// Carried as metadata; delays are driven by per-hop costs only.
    pub packet_size_kb: f64,
    pub sim_duration_s: f64,
    pub d2d_mode: D2dMode,
    pub rsu_positions_m: Vec<f64>,
    /// Distance from the injected dead end back to the downstream RSU.
    /// Zero disables the injection.
    pub failure_distance_m: f64,
    pub timing: TimingModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            road_length_m: 4000.0,
            vehicle_count: 60,
            v2v_range_m: 350.0,
            d2d_range_m: 1000.0,
            speed_min_kmh: 30.0,
            speed_max_kmh: 100.0,
            packet_interval_s: 0.5,
            packet_size_kb: 256.0,
            sim_duration_s: 600.0,
            d2d_mode: D2dMode::Disabled,
            rsu_positions_m: vec![4000.0],
            failure_distance_m: 0.0,
            timing: TimingModel::default(),
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Timing with the mode-specific overrides applied.
    pub fn resolved_timing(&self) -> TimingModel {
        self.timing.resolve(self.d2d_mode)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.road_length_m > 0.0 && self.road_length_m.is_finite()) {
            out.push(Violation::new("road_length_m", "road_length_m > 0"));
        }
        if self.vehicle_count < 1 {
            out.push(Violation::new("vehicle_count", "vehicle_count ≥ 1"));
        }
        if !(self.v2v_range_m > 0.0 && self.v2v_range_m.is_finite()) {
            out.push(Violation::new("v2v_range_m", "v2v_range_m > 0"));
        }
        if !(self.d2d_range_m > 0.0 && self.d2d_range_m.is_finite()) {
            out.push(Violation::new("d2d_range_m", "d2d_range_m > 0"));
        }
        for (name, v) in [
            ("speed_min_kmh", self.speed_min_kmh),
            ("speed_max_kmh", self.speed_max_kmh),
        ] {
            if !(v > 0.0 && v <= MAX_SPEED_KMH) {
                out.push(Violation::new(name, format!("{name} ∈ (0, 200]")));
            }
        }
        if self.speed_min_kmh > self.speed_max_kmh {
            out.push(Violation::new("speed_min_kmh", "speed_min ≤ speed_max"));
        }
        if !(self.packet_interval_s > 0.0 && self.packet_interval_s.is_finite()) {
            out.push(Violation::new("packet_interval_s", "packet_interval_s > 0"));
        }
        if !(self.packet_size_kb >= 0.0) {
            out.push(Violation::new("packet_size_kb", "packet_size_kb ≥ 0"));
        }
        if !(self.sim_duration_s >= 0.0 && self.sim_duration_s.is_finite()) {
            out.push(Violation::new("sim_duration_s", "sim_duration_s ≥ 0"));
        }
        if self.rsu_positions_m.is_empty() {
            out.push(Violation::new("rsu_positions_m", "at least one RSU"));
        }
        if self
            .rsu_positions_m
            .iter()
            .any(|p| !(*p >= 0.0 && *p <= self.road_length_m))
        {
            out.push(Violation::new(
                "rsu_positions_m",
                "every rsu_position ∈ [0, road_length_m]",
            ));
        }
        if !(self.failure_distance_m >= 0.0) {
            out.push(Violation::new("failure_distance_m", "failure_distance_m ≥ 0"));
        } else if self.failure_distance_m > 0.0 {
            let downstream = self.rsu_positions_m.iter().cloned().fold(f64::NAN, f64::max);
            if !(self.failure_distance_m <= downstream) {
                out.push(Violation::new(
                    "failure_distance_m",
                    "failure_distance_m ≤ downstream RSU position",
                ));
            }
        }
        for (name, v) in self.timing.fields() {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(Violation::new(name_static(name), format!("{name} ≥ 0")));
            }
        }
        out
    }

    /// Returns `self` if every invariant holds.
    pub fn validated(self) -> Result<Self, ConfigError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Serializes to the scenario file format. `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("road_length_m", self.road_length_m.to_string());
        kv("vehicle_count", self.vehicle_count.to_string());
        kv("v2v_range_m", self.v2v_range_m.to_string());
        kv("d2d_range_m", self.d2d_range_m.to_string());
        kv("speed_min_kmh", self.speed_min_kmh.to_string());
        kv("speed_max_kmh", self.speed_max_kmh.to_string());
        kv("packet_interval_s", self.packet_interval_s.to_string());
        kv("packet_size_kb", self.packet_size_kb.to_string());
        kv("sim_duration_s", self.sim_duration_s.to_string());
        kv("d2d_mode", self.d2d_mode.to_string());
        kv(
            "rsu_positions_m",
            self.rsu_positions_m
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        );
        kv("failure_distance_m", self.failure_distance_m.to_string());
        for (name, v) in self.timing.fields() {
            kv(name, v.to_string());
        }
        kv("seed", self.seed.to_string());
        s
    }

    /// Parses scenario text and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            cfg.set_field(key, value)
                .map_err(|message| ConfigError::Parse {
                    line: line_no,
                    message,
                })?;
            seen.push(key.to_string());
        }
        cfg.validated()
    }

    fn set_field(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "road_length_m" => self.road_length_m = real(key, value)?,
            "vehicle_count" => {
                self.vehicle_count = value
                    .parse()
                    .map_err(|_| format!("{key}: expected a non-negative integer, got `{value}`"))?
            }
            "v2v_range_m" => self.v2v_range_m = real(key, value)?,
            "d2d_range_m" => self.d2d_range_m = real(key, value)?,
            "speed_min_kmh" => self.speed_min_kmh = real(key, value)?,
            "speed_max_kmh" => self.speed_max_kmh = real(key, value)?,
            "packet_interval_s" => self.packet_interval_s = real(key, value)?,
            "packet_size_kb" => self.packet_size_kb = real(key, value)?,
            "sim_duration_s" => self.sim_duration_s = real(key, value)?,
            "d2d_mode" => self.d2d_mode = value.parse()?,
            "rsu_positions_m" => {
                self.rsu_positions_m = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| real(key, v.trim()))
                        .collect::<Result<_, _>>()?
                }
            }
            "failure_distance_m" => self.failure_distance_m = real(key, value)?,
            "t_discovery_ms" => self.timing.t_discovery_ms = real(key, value)?,
            "t_handover_ms" => self.timing.t_handover_ms = real(key, value)?,
            "per_hop_v2v_ms" => self.timing.per_hop_v2v_ms = real(key, value)?,
            "per_hop_d2d_ms" => self.timing.per_hop_d2d_ms = real(key, value)?,
            "v2v_recovery_per_hop_ms" => self.timing.v2v_recovery_per_hop_ms = real(key, value)?,
            "interference_coeff" => self.timing.interference_coeff = real(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("seed: expected an unsigned 64-bit integer, got `{value}`"))?
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Sets a numeric scenario variable by field name (used by sweeps).
    pub fn set_variable(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        if name == "vehicle_count" || name == "seed" {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(ConfigError::Invalid(vec![Violation::new(
                    "vehicle_count",
                    format!("{name} must be a non-negative integer"),
                )]));
            }
        }
        match name {
            "vehicle_count" => self.vehicle_count = value as usize,
            "seed" => self.seed = value as u64,
            "d2d_mode" | "rsu_positions_m" => {
                return Err(ConfigError::UnknownVariable(name.to_string()))
            }
            _ => self
                .set_field(name, &value.to_string())
                .map_err(|_| ConfigError::UnknownVariable(name.to_string()))?,
        }
        Ok(())
    }

    /// Reads a numeric scenario variable by field name.
    pub fn variable(&self, name: &str) -> Option<f64> {
        let t = &self.timing;
        Some(match name {
            "road_length_m" => self.road_length_m,
            "vehicle_count" => self.vehicle_count as f64,
            "v2v_range_m" => self.v2v_range_m,
            "d2d_range_m" => self.d2d_range_m,
            "speed_min_kmh" => self.speed_min_kmh,
            "speed_max_kmh" => self.speed_max_kmh,
            "packet_interval_s" => self.packet_interval_s,
            "packet_size_kb" => self.packet_size_kb,
            "sim_duration_s" => self.sim_duration_s,
            "failure_distance_m" => self.failure_distance_m,
            "t_discovery_ms" => t.t_discovery_ms,
            "t_handover_ms" => t.t_handover_ms,
            "per_hop_v2v_ms" => t.per_hop_v2v_ms,
            "per_hop_d2d_ms" => t.per_hop_d2d_ms,
            "v2v_recovery_per_hop_ms" => t.v2v_recovery_per_hop_ms,
            "interference_coeff" => t.interference_coeff,
            "seed" => self.seed as f64,
            _ => return None,
        })
    }

    /// Writes the scenario file.
    pub fn write(&self, path: &Path) -> Result<(), ConfigError> {
        fs::write(path, self.to_text()).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn name_static(name: &str) -> &'static str {
    TimingModel::default()
        .fields()
        .iter()
        .map(|(n, _)| *n)
        .find(|n| *n == name)
        .unwrap_or("timing")
}

fn real(key: &str, value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("{key}: expected a number, got `{value}`"))
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::parse(&text)
}

/// Table I defaults with a 4 km road, a single RSU at the far end and no
/// injected failure.
pub fn table1_default() -> ScenarioConfig {
    ScenarioConfig::default()
}

/// 1 km of road ahead of the dead end, 4 km from the dead end to the RSU.
fn d2d_case(mode: D2dMode, d2d_range_m: f64) -> ScenarioConfig {
    ScenarioConfig {
        road_length_m: 5000.0,
        vehicle_count: 100,
        v2v_range_m: 350.0,
        d2d_range_m,
        d2d_mode: mode,
        rsu_positions_m: vec![5000.0],
        failure_distance_m: 4000.0,
        ..ScenarioConfig::default()
    }
}

/// Failure 4 km from the downstream RSU with a second RSU 5 km behind it,
/// so every recovery route (D2D forward, V2V-RA reverse) is kilometres long.
fn ladder_geometry() -> ScenarioConfig {
    ScenarioConfig {
        road_length_m: 9000.0,
        vehicle_count: 180,
        v2v_range_m: 550.0,
        d2d_range_m: 1500.0,
        d2d_mode: D2dMode::Disabled,
        rsu_positions_m: vec![0.0, 9000.0],
        failure_distance_m: 4000.0,
        timing: TimingModel {
            interference_coeff: 0.0,
            ..TimingModel::default()
        },
        ..ScenarioConfig::default()
    }
}

/// 2 km path with no injected failure; the density sweeps vary `vehicle_count`.
fn two_km_path() -> ScenarioConfig {
    ScenarioConfig {
        road_length_m: 2000.0,
        vehicle_count: 60,
        rsu_positions_m: vec![2000.0],
        ..ScenarioConfig::default()
    }
}

/// Built-in scenarios, in listing order.
pub fn builtin_scenarios() -> Vec<(&'static str, ScenarioConfig)> {
    let on_demand = |r| d2d_case(D2dMode::OnDemand, r);
    let proactive = |r| d2d_case(D2dMode::Proactive, r);
    vec![
        ("table1_default", table1_default()),
        ("proactive_1500", proactive(1500.0)),
        ("proactive_1000", proactive(1000.0)),
        ("proactive_500", proactive(500.0)),
        ("ondemand_1500", on_demand(1500.0)),
        ("ondemand_1000", on_demand(1000.0)),
        ("ondemand_500", on_demand(500.0)),
        ("v2vra_best", ladder_geometry()),
        (
            "v2vra_worst",
            ScenarioConfig {
                timing: TimingModel {
                    v2v_recovery_per_hop_ms: 200.0,
                    ..ladder_geometry().timing
                },
                ..ladder_geometry()
            },
        ),
        ("fig4_hops_sweep", two_km_path()),
        (
            "fig5_delay_sweep",
            ScenarioConfig {
                timing: TimingModel {
                    interference_coeff: 0.02,
                    ..TimingModel::default()
                },
                ..two_km_path()
            },
        ),
        (
            "fig7_recovery_ladder",
            ScenarioConfig {
                d2d_mode: D2dMode::Proactive,
                ..ladder_geometry()
            },
        ),
    ]
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| c)
}

/// Resolves `--scenario` input: a built-in name first, then a file path.
/// Returns the display name alongside the config.
pub fn resolve_scenario(name_or_path: &str) -> Result<(String, ScenarioConfig), ConfigError> {
    if let Some(cfg) = builtin(name_or_path) {
        return Ok((name_or_path.to_string(), cfg));
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name_or_path.to_string());
        return Ok((name, load_scenario(path)?));
    }
    Err(ConfigError::UnknownScenario(name_or_path.to_string()))
}

/// Labeled configurations a scenario expands to when run.
///
/// The figure presets compare several variants over the same base (which
/// carries density, seed and duration); every other scenario is a single
/// series named after itself.
pub fn scenario_series(name: &str, base: &ScenarioConfig) -> Vec<(String, ScenarioConfig)> {
    let with = |label: &str, f: &dyn Fn(&mut ScenarioConfig)| {
        let mut c = base.clone();
        f(&mut c);
        (label.to_string(), c)
    };
    match name {
        "fig4_hops_sweep" | "fig5_delay_sweep" => vec![
            with("gpsr_250", &|c| {
                c.d2d_mode = D2dMode::Disabled;
                c.v2v_range_m = 250.0;
            }),
            with("gpsr_350", &|c| {
                c.d2d_mode = D2dMode::Disabled;
                c.v2v_range_m = 350.0;
            }),
            with("d2d_550", &|c| {
                c.d2d_mode = D2dMode::Proactive;
                c.v2v_range_m = 550.0;
            }),
        ],
        "fig7_recovery_ladder" => vec![
            with("d2d_proactive", &|c| c.d2d_mode = D2dMode::Proactive),
            with("d2d_discovery_best", &|c| {
                c.d2d_mode = D2dMode::OnDemand;
                c.timing.t_discovery_ms = 10.0;
            }),
            with("gpsr_best", &|c| {
                c.d2d_mode = D2dMode::Disabled;
                c.timing.v2v_recovery_per_hop_ms = 50.0;
            }),
            with("gpsr_worst", &|c| {
                c.d2d_mode = D2dMode::Disabled;
                c.timing.v2v_recovery_per_hop_ms = 200.0;
            }),
            with("d2d_ondemand_worst", &|c| {
                c.d2d_mode = D2dMode::OnDemand;
                c.timing.t_discovery_ms = 500.0;
            }),
        ],
        _ => vec![(name.to_string(), base.clone())],
    }
}
