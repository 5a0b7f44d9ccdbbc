//! Evaluation metrics and their CSV form.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::engine::{EventRecord, ScenarioRun};
use crate::error::{Error, Result};
use crate::faults::{Diagnosis, InjectedFault};
use crate::model::{NodeId, NodeState};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "schema_version,round,global_energy_j,avg_delay_rounds,pdr,avg_dissipated_j_per_node,throughput,diagnosis_rate,alive_count";

pub const EVENT_HEADER: &str = "round,node,class,verdict,action";

/// Sum of residual energy over all deployed nodes, standbys included.
pub fn global_energy(nodes: &[NodeState]) -> f64 {
    nodes.iter().map(|n| n.energy).sum()
}

/// delivered / created, or 1.0 when nothing was created.
pub fn packet_delivery_ratio(created: u64, delivered: u64) -> Result<f64> {
    if delivered > created {
        return Err(Error::InvalidInput(format!(
            "{delivered} packets delivered but only {created} created"
        )));
    }
    if created == 0 {
        return Ok(1.0);
    }
    Ok(delivered as f64 / created as f64)
}

pub fn average_dissipated_energy(total_loss: f64, node_count: usize) -> Result<f64> {
    if node_count == 0 {
        return Err(Error::InvalidInput("node_count must be at least 1".into()));
    }
    Ok(total_loss / node_count as f64)
}

/// Mean delay in rounds; `None` when nothing was delivered.
pub fn average_delay(delays: &[u64]) -> Option<f64> {
    if delays.is_empty() {
        None
    } else {
        Some(delays.iter().sum::<u64>() as f64 / delays.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: u64,
    pub global_energy: f64,
    /// Cumulative mean over everything delivered so far.
    pub avg_delay: Option<f64>,
    /// Cumulative.
    pub pdr: f64,
    pub avg_dissipated: f64,
    /// Share of this round's packets delivered within the round.
    pub throughput: f64,
    /// Cumulative.
    pub diagnosis_rate: f64,
    pub alive_count: u64,
}

/// Round in which each injected fault was first correctly diagnosed within
/// `window` rounds, if ever.
pub fn detection_rounds(injected: &[InjectedFault], diagnoses: &[Diagnosis], window: u64) -> Vec<Option<u64>> {
    let mut by_node: HashMap<NodeId, Vec<&Diagnosis>> = HashMap::new();
    for d in diagnoses {
        by_node.entry(d.suspect).or_default().push(d);
    }
    injected
        .iter()
        .map(|f| {
            by_node.get(&f.node).and_then(|ds| {
                ds.iter()
                    .filter(|d| f.class.attributed_by(d.verdict) && d.round >= f.round && d.round < f.round + window)
                    .map(|d| d.round)
                    .min()
            })
        })
        .collect()
}

/// One row per round, starting with the round 0 snapshot.
pub fn series(run: &ScenarioRun) -> Vec<MetricsRow> {
    let n = run.node_count;
    let window = run.config.detection.window;
    let detected = detection_rounds(&run.injected, &run.diagnoses, window);

    let row0 = MetricsRow {
        round: 0,
        global_energy: run.initial.global_energy,
        avg_delay: None,
        pdr: 1.0,
        avg_dissipated: 0.0,
        throughput: 1.0,
        diagnosis_rate: 1.0,
        alive_count: run.initial.alive_count,
    };
    let mut rows = vec![row0];
    let (mut created, mut delivered, mut delay) = (0u64, 0u64, 0u64);
    for r in &run.reports {
        created += r.packets_created - r.packets_suppressed;
        delivered += r.packets_delivered;
        delay += r.delay_sum;
        let due: Vec<usize> = (0..run.injected.len())
            .filter(|&i| run.injected[i].round <= r.round)
            .collect();
        let hits = due
            .iter()
            .filter(|&&i| detected[i].is_some_and(|d| d <= r.round))
            .count();
        let diagnosis_rate = if due.is_empty() {
            1.0
        } else {
            hits as f64 / due.len() as f64
        };
        rows.push(MetricsRow {
            round: r.round,
            global_energy: r.global_energy,
            avg_delay: (delivered > 0).then(|| delay as f64 / delivered as f64),
            pdr: packet_delivery_ratio(created, delivered).unwrap_or(1.0),
            avg_dissipated: average_dissipated_energy(run.initial_energy - r.global_energy, n).unwrap_or(0.0),
            throughput: packet_delivery_ratio(r.packets_created, r.delivered_same_round).unwrap_or(1.0),
            diagnosis_rate,
            alive_count: r.alive_count,
        });
    }
    rows
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let delay = r.avg_delay.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{},{}",
            r.round, r.global_energy, delay, r.pdr, r.avg_dissipated, r.throughput, r.diagnosis_rate, r.alive_count
        )?;
    }
    Ok(())
}

pub fn write_events_csv<W: Write>(events: &[EventRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{EVENT_HEADER}")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.round,
            e.node,
            e.class.map(|c| c.as_str()).unwrap_or(""),
            e.verdict.map(|v| v.as_str()).unwrap_or(""),
            e.action
        )?;
    }
    Ok(())
}
