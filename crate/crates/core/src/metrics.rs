//! Per-message records, per-run summaries, sweep aggregation and the CSV
//! artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::d2d::OhtBreakdown;
use crate::ids::{NodeId, RsuId, VehicleId};
use crate::routing::RecoveryMethod;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label {label}: runs differ in {field}, which is not the grouped variable")]
    Heterogeneous { label: String, field: String },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    Failed,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Delivered => "delivered",
            Outcome::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryKind {
    None,
    RedirectNeighbor,
    AlternateRsu,
    D2dFallback,
    Exhausted,
}

impl RecoveryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryKind::None => "none",
            RecoveryKind::RedirectNeighbor => "redirect_neighbor",
            RecoveryKind::AlternateRsu => "alternate_rsu",
            RecoveryKind::D2dFallback => "d2d_fallback",
            RecoveryKind::Exhausted => "exhausted",
        }
    }
}

impl From<RecoveryMethod> for RecoveryKind {
    fn from(m: RecoveryMethod) -> Self {
        match m {
            RecoveryMethod::RedirectNeighbor => RecoveryKind::RedirectNeighbor,
            RecoveryMethod::AlternateRsu => RecoveryKind::AlternateRsu,
            RecoveryMethod::BackwardRecursionExhausted => RecoveryKind::Exhausted,
            RecoveryMethod::D2dFallback => RecoveryKind::D2dFallback,
        }
    }
}

/// Outcome of one alert.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub msg_id: u64,
    pub emitted_s: f64,
    pub source: Option<VehicleId>,
    pub target: RsuId,
    pub delivered_to: Option<RsuId>,
    pub outcome: Outcome,
    pub total_hops: usize,
    /// Every V2V transmission, backward recovery steps included.
    pub v2v_hops: usize,
    pub d2d_hops: usize,
    /// Emission to arrival (or to giving up, for failed alerts).
    pub e2e_delay_ms: f64,
    /// Dead-end detection to arrival; 0 without a dead end.
    pub recovery_delay_ms: f64,
    pub recovery_method: RecoveryKind,
    pub oht: Option<OhtBreakdown>,
    /// Vehicle where greedy forwarding first got stuck.
    pub dead_end_at: Option<VehicleId>,
}

impl DeliveryRecord {
    pub fn delivered(&self) -> bool {
        self.outcome == Outcome::Delivered
    }
}

/// One line of a route dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub msg_id: u64,
    pub event: &'static str,
    pub time_ms: f64,
    pub node: Option<NodeId>,
    pub detail: String,
}

pub const METRICS: [&str; 4] = ["delivery_ratio", "e2e_delay_ms", "hops", "recovery_delay_ms"];

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    // Summed in sorted order so the result is independent of input order.
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation; 0 for a single value.
fn stddev(xs: &[f64], m: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mut sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    sq.sort_by(f64::total_cmp);
    (sq.iter().sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Per-run means. Hop and delay means are over delivered alerts; the
/// recovery mean only over delivered alerts that needed recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub emitted: usize,
    pub delivered: usize,
    pub delivery_ratio: Option<f64>,
    pub hops: Option<f64>,
    pub e2e_delay_ms: Option<f64>,
    pub recovery_delay_ms: Option<f64>,
    pub recovered: usize,
}

impl RunMetrics {
    pub fn from_records(records: &[DeliveryRecord]) -> Self {
        let delivered: Vec<&DeliveryRecord> = records.iter().filter(|r| r.delivered()).collect();
        let recovered: Vec<f64> = delivered
            .iter()
            .filter(|r| r.recovery_method != RecoveryKind::None)
            .map(|r| r.recovery_delay_ms)
            .collect();
        let hops: Vec<f64> = delivered.iter().map(|r| r.total_hops as f64).collect();
        let e2e: Vec<f64> = delivered.iter().map(|r| r.e2e_delay_ms).collect();
        Self {
            emitted: records.len(),
            delivered: delivered.len(),
            delivery_ratio: (!records.is_empty())
                .then(|| delivered.len() as f64 / records.len() as f64),
            hops: mean(&hops),
            e2e_delay_ms: mean(&e2e),
            recovery_delay_ms: mean(&recovered),
            recovered: recovered.len(),
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "delivery_ratio" => self.delivery_ratio,
            "hops" => self.hops,
            "e2e_delay_ms" => self.e2e_delay_ms,
            "recovery_delay_ms" => self.recovery_delay_ms,
            _ => None,
        }
    }
}

/// One finished run as fed to [`aggregate`].
#[derive(Debug, Clone)]
pub struct RunPoint {
    pub label: String,
    pub config: ScenarioConfig,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub label: String,
    pub metric: &'static str,
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub variable: String,
    /// Sorted by `(label, x, metric)`.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, label: &str, x: f64, metric: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.x == x && r.metric == metric)
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut l: Vec<&str> = self.rows.iter().map(|r| r.label.as_str()).collect();
        l.dedup();
        l
    }

    pub fn filter_metric(&self, metric: &str) -> SweepTable {
        SweepTable {
            variable: self.variable.clone(),
            rows: self.rows.iter().filter(|r| r.metric == metric).cloned().collect(),
        }
    }
}

/// First field, other than `skip`, on which two configs disagree.
fn differing_field(a: &ScenarioConfig, b: &ScenarioConfig, skip: &[&str]) -> Option<String> {
    let (ta, tb) = (a.to_text(), b.to_text());
    ta.lines().zip(tb.lines()).find_map(|(la, lb)| {
        let key = la.split(" = ").next().unwrap_or(la);
        (la != lb && !skip.contains(&key)).then(|| key.to_string())
    })
}

/// Groups runs by `(label, value of variable)` and reports mean and sample
/// stddev of every metric across seeds. Runs without a value for a metric
/// (nothing delivered) are left out of that metric's group.
pub fn aggregate(runs: &[RunPoint], variable: &str) -> Result<SweepTable, MetricsError> {
    let mut first: BTreeMap<&str, &ScenarioConfig> = BTreeMap::new();
    let mut groups: BTreeMap<(&str, u64, &'static str), Vec<f64>> = BTreeMap::new();
    for run in runs {
        let x = run
            .config
            .variable(variable)
            .ok_or_else(|| MetricsError::UnknownVariable(variable.to_string()))?;
        let base = *first.entry(run.label.as_str()).or_insert(&run.config);
        if let Some(field) = differing_field(base, &run.config, &["seed", variable]) {
            return Err(MetricsError::Heterogeneous {
                label: run.label.clone(),
                field,
            });
        }
        for metric in METRICS {
            let cell = groups
                .entry((run.label.as_str(), x.to_bits(), metric))
                .or_default();
            if let Some(v) = run.metrics.get(metric) {
                cell.push(v);
            }
        }
    }
    let mut rows: Vec<SweepRow> = groups
        .into_iter()
        .filter_map(|((label, xb, metric), vals)| {
            let m = mean(&vals)?;
            Some(SweepRow {
                x: f64::from_bits(xb),
                label: label.to_string(),
                metric,
                mean: m,
                stddev: stddev(&vals, m),
                n: vals.len(),
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(a.x.total_cmp(&b.x))
            .then(a.metric.cmp(b.metric))
    });
    Ok(SweepTable {
        variable: variable.to_string(),
        rows,
    })
}

fn csv_writer<W: io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub const SWEEP_HEADER: [&str; 6] = ["x", "label", "metric", "mean", "stddev", "n"];

pub fn sweep_csv(table: &SweepTable) -> Result<Vec<u8>, MetricsError> {
    let mut w = csv_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.x.to_string(),
            r.label.clone(),
            r.metric.to_string(),
            num(r.mean),
            num(r.stddev),
            r.n.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| MetricsError::Io(e.into_error()))
}

pub fn write_csv(table: &SweepTable, path: &Path) -> Result<(), MetricsError> {
    fs::write(path, sweep_csv(table)?)?;
    Ok(())
}

pub const DELIVERY_HEADER: [&str; 19] = [
    "label",
    "msg_id",
    "emitted_s",
    "source",
    "target",
    "outcome",
    "delivered_to",
    "total_hops",
    "v2v_hops",
    "d2d_hops",
    "e2e_delay_ms",
    "recovery_delay_ms",
    "recovery_method",
    "dead_end_at",
    "oht_t_discovery_ms",
    "oht_t_handover_total_ms",
    "oht_t_v2v_rest_ms",
    "oht_total_ms",
    "ok",
];

/// Per-message CSV; the trailing `ok` column flags record invariant
/// violations (`1` when the record is internally consistent).
pub fn deliveries_csv(runs: &[(&str, &[DeliveryRecord])]) -> Result<Vec<u8>, MetricsError> {
    let mut w = csv_writer(Vec::new());
    w.write_record(DELIVERY_HEADER)?;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    for (label, records) in runs {
        for r in *records {
            w.write_record([
                label.to_string(),
                r.msg_id.to_string(),
                r.emitted_s.to_string(),
                r.source.map(|v| v.to_string()).unwrap_or_default(),
                r.target.to_string(),
                r.outcome.as_str().to_string(),
                r.delivered_to.map(|x| x.to_string()).unwrap_or_default(),
                r.total_hops.to_string(),
                r.v2v_hops.to_string(),
                r.d2d_hops.to_string(),
                num(r.e2e_delay_ms),
                num(r.recovery_delay_ms),
                r.recovery_method.as_str().to_string(),
                r.dead_end_at.map(|v| v.to_string()).unwrap_or_default(),
                opt(r.oht.map(|o| o.t_discovery_ms)),
                opt(r.oht.map(|o| o.t_handover_total_ms)),
                opt(r.oht.map(|o| o.t_v2v_rest_ms)),
                opt(r.oht.map(|o| o.total_ms)),
                u8::from(record_is_consistent(r)).to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| MetricsError::Io(e.into_error()))
}

pub fn record_is_consistent(r: &DeliveryRecord) -> bool {
    r.total_hops == r.v2v_hops + r.d2d_hops
        && r.d2d_hops <= 1
        && (!r.delivered() || r.recovery_method == RecoveryKind::None || r.recovery_delay_ms > 0.0)
        && r.oht.is_none_or(|o| o.total_ms == o.t_discovery_ms + o.t_handover_total_ms + o.t_v2v_rest_ms)
}

pub const ROUTE_TRACE_HEADER: [&str; 6] = ["label", "msg_id", "event", "time_ms", "vehicle_id", "detail"];

pub fn route_trace_csv(runs: &[(&str, &[TraceRow])]) -> Result<Vec<u8>, MetricsError> {
    let mut w = csv_writer(Vec::new());
    w.write_record(ROUTE_TRACE_HEADER)?;
    for (label, rows) in runs {
        for r in *rows {
            w.write_record([
                label.to_string(),
                r.msg_id.to_string(),
                r.event.to_string(),
                num(r.time_ms),
                r.node.map(|n| n.to_string()).unwrap_or_default(),
                r.detail.clone(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| MetricsError::Io(e.into_error()))
}

/// Mean OHT components over the records that used a D2D bridge.
pub fn mean_oht(records: &[DeliveryRecord]) -> Option<OhtBreakdown> {
    let ohts: Vec<OhtBreakdown> = records.iter().filter_map(|r| r.oht).collect();
    let col = |f: fn(&OhtBreakdown) -> f64| mean(&ohts.iter().map(f).collect::<Vec<_>>());
    Some(OhtBreakdown {
        t_discovery_ms: col(|o| o.t_discovery_ms)?,
        t_handover_total_ms: col(|o| o.t_handover_total_ms)?,
        t_v2v_rest_ms: col(|o| o.t_v2v_rest_ms)?,
        total_ms: col(|o| o.total_ms)?,
    })
}

fn fmt_opt(x: Option<f64>, unit: &str) -> String {
    match x {
        Some(v) => format!("{v:.3}{unit}"),
        None => "n/a".to_string(),
    }
}

/// Plain-text summary of one labelled run.
pub fn run_summary(label: &str, config: &ScenarioConfig, records: &[DeliveryRecord]) -> String {
    let m = RunMetrics::from_records(records);
    let mut s = String::new();
    let _ = writeln!(s, "[{label}]");
    let _ = writeln!(
        s,
        "  mode {}  vehicles {}  v2v {} m  d2d {} m  seed {}",
        config.d2d_mode, config.vehicle_count, config.v2v_range_m, config.d2d_range_m, config.seed
    );
    let _ = writeln!(
        s,
        "  alerts {}  delivered {}  ratio {}",
        m.emitted,
        m.delivered,
        fmt_opt(m.delivery_ratio, "")
    );
    let _ = writeln!(s, "  mean hops {}", fmt_opt(m.hops, ""));
    let _ = writeln!(s, "  mean e2e delay {}", fmt_opt(m.e2e_delay_ms, " ms"));
    let _ = writeln!(
        s,
        "  mean recovery delay {} over {} recovered alerts",
        fmt_opt(m.recovery_delay_ms, " ms"),
        m.recovered
    );
    let mut methods: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *methods.entry(r.recovery_method.as_str()).or_default() += 1;
    }
    let list: Vec<String> = methods.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(s, "  recovery methods {}", list.join(" "));
    if let Some(o) = mean_oht(records) {
        let _ = writeln!(
            s,
            "  OHT mean: T_D {:.3} ms + handovers {:.3} ms + V2V rest {:.3} ms = {:.3} ms",
            o.t_discovery_ms, o.t_handover_total_ms, o.t_v2v_rest_ms, o.total_ms
        );
    }
    s
}
