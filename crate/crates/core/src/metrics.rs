//! Event log, KPI computation, and sweep aggregation.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::routing::{MessageId, NodeId, Policy, SprayMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Generated,
    TransferStarted,
    TransferCompleted,
    TransferAborted,
    RejectedDuplicate,
    RejectedBuffer,
    DroppedTtl,
    Delivered,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Generated => "generated",
            EventKind::TransferStarted => "transfer_started",
            EventKind::TransferCompleted => "transfer_completed",
            EventKind::TransferAborted => "transfer_aborted",
            EventKind::RejectedDuplicate => "rejected_duplicate",
            EventKind::RejectedBuffer => "rejected_buffer",
            EventKind::DroppedTtl => "dropped_ttl",
            EventKind::Delivered => "delivered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub message: MessageId,
    pub from: NodeId,
    /// Absent for events with no counterpart node (generation, TTL drops).
    pub to: Option<NodeId>,
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(records: Vec<EventRecord>) -> Self {
        Self { records }
    }

    /// Tab-separated dump, one event per line, header first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str("time\tkind\tmessage\tfrom\tto\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.time,
                r.kind.as_str(),
                r.message,
                r.from,
                r.to.map_or_else(|| "-".to_string(), |n| n.to_string()),
            ));
        }
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no messages were generated; KPIs are undefined")]
    NoGeneration,
    #[error("delivery of message {0} has no matching generation event")]
    MissingGeneration(MessageId),
    #[error("runs disagree on scenario shape: {0}")]
    MismatchedConfig(String),
    #[error("duplicate run: {0}")]
    DuplicateRun(String),
}

/// KPIs of a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpiReport {
    pub generated: u64,
    pub delivered: u64,
    /// Completed transfers, duplicates and the wired PoP uplink included.
    pub transmitted: u64,
    pub delivery_probability: f64,
    /// Mean creation-to-delivery time in seconds; absent with no deliveries.
    pub average_latency_s: Option<f64>,
    /// (transmitted - delivered) / delivered; absent with no deliveries.
    pub overhead_ratio: Option<f64>,
}

pub fn kpi_report(records: &[EventRecord]) -> Result<KpiReport, MetricsError> {
    let mut generated = 0u64;
    let mut delivered = 0u64;
    let mut transmitted = 0u64;
    let mut created_at: BTreeMap<MessageId, f64> = BTreeMap::new();
    let mut latency_sum = 0.0f64;
    for r in records {
        match r.kind {
            EventKind::Generated => {
                generated += 1;
                created_at.insert(r.message, r.time);
            }
            EventKind::TransferCompleted => transmitted += 1,
            EventKind::Delivered => {
                let t0 = created_at
                    .get(&r.message)
                    .ok_or(MetricsError::MissingGeneration(r.message))?;
                delivered += 1;
                latency_sum += r.time - t0;
            }
            _ => {}
        }
    }
    if generated == 0 {
        return Err(MetricsError::NoGeneration);
    }
    let (average_latency_s, overhead_ratio) = if delivered > 0 {
        (
            Some(latency_sum / delivered as f64),
            Some((transmitted as f64 - delivered as f64) / delivered as f64),
        )
    } else {
        (None, None)
    };
    Ok(KpiReport {
        generated,
        delivered,
        transmitted,
        delivery_probability: delivered as f64 / generated as f64,
        average_latency_s,
        overhead_ratio,
    })
}

pub fn delivery_probability(records: &[EventRecord]) -> Result<f64, MetricsError> {
    kpi_report(records).map(|k| k.delivery_probability)
}

pub fn average_latency(records: &[EventRecord]) -> Result<Option<f64>, MetricsError> {
    kpi_report(records).map(|k| k.average_latency_s)
}

pub fn overhead_ratio(records: &[EventRecord]) -> Result<Option<f64>, MetricsError> {
    kpi_report(records).map(|k| k.overhead_ratio)
}

/// One simulation run inside a sweep.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub policy: Policy,
    pub cars: u32,
    pub seed: u64,
    pub report: KpiReport,
}

/// Seed-aggregated KPIs for one (policy, car count) cell.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub policy: Policy,
    pub cars: u32,
    pub density_per_km2: f64,
    pub seed_count: usize,
    pub dp_mean: f64,
    pub dp_std: f64,
    pub al_minutes_mean: Option<f64>,
    pub al_minutes_std: Option<f64>,
    pub or_mean: Option<f64>,
    pub or_std: Option<f64>,
    pub generated: u64,
    pub delivered_mean: f64,
    pub transmitted_mean: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups runs by (policy, cars), averaging KPIs over seeds. Latency and
/// overhead average over the runs where they exist; a cell where no run
/// delivered reports them as absent.
pub fn sweep_aggregate(
    records: &[RunRecord],
    land_area_km2: f64,
) -> Result<Vec<AggregateRow>, MetricsError> {
    let mut seen: BTreeSet<(Policy, u32, u64)> = BTreeSet::new();
    let mut groups: BTreeMap<(Policy, u32), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        if !seen.insert((r.policy, r.cars, r.seed)) {
            return Err(MetricsError::DuplicateRun(format!(
                "policy {} cars {} seed {}",
                r.policy.label(),
                r.cars,
                r.seed
            )));
        }
        groups.entry((r.policy, r.cars)).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((policy, cars), runs) in groups {
        let generated = runs[0].report.generated;
        if let Some(bad) = runs.iter().find(|r| r.report.generated != generated) {
            return Err(MetricsError::MismatchedConfig(format!(
                "policy {} cars {}: generated counts differ ({} vs {} at seed {})",
                policy.label(),
                cars,
                generated,
                bad.report.generated,
                bad.seed
            )));
        }
        let dps: Vec<f64> = runs.iter().map(|r| r.report.delivery_probability).collect();
        let als: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.report.average_latency_s)
            .map(|s| s / 60.0)
            .collect();
        let ors: Vec<f64> = runs.iter().filter_map(|r| r.report.overhead_ratio).collect();
        let (dp_mean, dp_std) = mean_std(&dps);
        let (al_minutes_mean, al_minutes_std) = if als.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&als);
            (Some(m), Some(s))
        };
        let (or_mean, or_std) = if ors.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&ors);
            (Some(m), Some(s))
        };
        rows.push(AggregateRow {
            policy,
            cars,
            density_per_km2: cars as f64 / land_area_km2,
            seed_count: runs.len(),
            dp_mean,
            dp_std,
            al_minutes_mean,
            al_minutes_std,
            or_mean,
            or_std,
            generated,
            delivered_mean: runs.iter().map(|r| r.report.delivered as f64).sum::<f64>()
                / runs.len() as f64,
            transmitted_mean: runs.iter().map(|r| r.report.transmitted as f64).sum::<f64>()
                / runs.len() as f64,
        });
    }
    Ok(rows)
}

fn policy_columns(policy: Policy) -> (&'static str, String, String) {
    match policy {
        Policy::SprayAndWait { mode, copies } => {
            let m = match mode {
                SprayMode::Standard => "standard",
                SprayMode::Binary => "binary",
            };
            (policy.label(), m.to_string(), copies.to_string())
        }
        _ => (policy.label(), "NA".to_string(), "NA".to_string()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// CSV dump of aggregated sweep rows; absent values print as NA.
pub fn rows_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "policy,mode,L,cars,density_per_km2,seed_count,dp_mean,dp_std,\
         al_minutes_mean,al_minutes_std,or_mean,or_std,generated,\
         delivered_mean,transmitted_mean\n",
    );
    for r in rows {
        let (policy, mode, l) = policy_columns(r.policy);
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{:.6},{:.6},{},{},{},{},{},{:.6},{:.6}\n",
            policy,
            mode,
            l,
            r.cars,
            r.density_per_km2,
            r.seed_count,
            r.dp_mean,
            r.dp_std,
            fmt_opt(r.al_minutes_mean),
            fmt_opt(r.al_minutes_std),
            fmt_opt(r.or_mean),
            fmt_opt(r.or_std),
            r.generated,
            r.delivered_mean,
            r.transmitted_mean,
        ));
    }
    out
}

/// Per-run CSV (one row per seed), used by `run --out`.
pub fn report_to_csv(policy: Policy, cars: u32, seed: u64, report: &KpiReport) -> String {
    let (p, mode, l) = policy_columns(policy);
    format!(
        "policy,mode,L,cars,seed,generated,delivered,transmitted,dp,al_minutes,or\n\
         {},{},{},{},{},{},{},{},{:.6},{},{}\n",
        p,
        mode,
        l,
        cars,
        seed,
        report.generated,
        report.delivered,
        report.transmitted,
        report.delivery_probability,
        fmt_opt(report.average_latency_s.map(|s| s / 60.0)),
        fmt_opt(report.overhead_ratio),
    )
}
