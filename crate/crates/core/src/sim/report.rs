use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimulationConfig;
use crate::error::{Error, Result};
use crate::trace::Trace;

/// Outcome of one run. Contains no wall-clock data, so a re-run with the same
/// inputs serialises to identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub controller: String,
    pub trace_digest: String,
    pub trace_requests: usize,
    pub catalog_size: usize,
    pub capacity: usize,
    pub warmup: usize,
    pub slot_size: usize,
    pub seed: u64,
    /// Requests after the warm-up.
    pub measured_requests: usize,
    pub hits: u64,
    /// `hits / measured_requests`.
    pub hit_ratio: f64,
    pub slot_hits: Vec<u64>,
    /// Per slot of `slot_size` measured requests; the last slot may be shorter.
    pub slot_hit_ratios: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_rates: Option<BTreeMap<String, f64>>,
}

impl SimulationReport {
    pub(crate) fn from_hits(
        trace: &Trace,
        config: &SimulationConfig,
        controller: String,
        hits: &[bool],
        selection_rates: Option<BTreeMap<String, f64>>,
    ) -> Self {
        let measured = &hits[config.warmup.min(hits.len())..];
        let mut slot_hits = Vec::new();
        let mut slot_hit_ratios = Vec::new();
        for chunk in measured.chunks(config.slot_size) {
            let h = chunk.iter().filter(|h| **h).count();
            slot_hits.push(h as u64);
            slot_hit_ratios.push(h as f64 / chunk.len() as f64);
        }
        let total: u64 = slot_hits.iter().sum();
        Self {
            controller,
            trace_digest: trace.digest(),
            trace_requests: trace.len(),
            catalog_size: trace.catalog_size(),
            capacity: config.capacity,
            warmup: config.warmup,
            slot_size: config.slot_size,
            seed: config.seed,
            measured_requests: measured.len(),
            hits: total,
            hit_ratio: if measured.is_empty() {
                0.0
            } else {
                total as f64 / measured.len() as f64
            },
            slot_hits,
            slot_hit_ratios,
            selection_rates,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// CSV `slot,hits,hit_ratio`.
    pub fn slots_csv(&self) -> String {
        let mut out = String::from("slot,hits,hit_ratio\n");
        for (i, (h, r)) in self.slot_hits.iter().zip(&self.slot_hit_ratios).enumerate() {
            let _ = writeln!(out, "{i},{h},{r}");
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{}: hit ratio {:.4} ({} / {} requests, capacity {})\n",
            self.controller, self.hit_ratio, self.hits, self.measured_requests, self.capacity
        );
        if let Some(rates) = &self.selection_rates {
            for (policy, rate) in rates {
                let _ = writeln!(out, "  selected {policy}: {:.1}%", rate * 100.0);
            }
        }
        out
    }
}

/// `(a − b) / b`; `None` when `b` is zero.
pub fn relative_improvement(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| (a - b) / b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub controller: String,
    pub hit_ratio: f64,
    /// Improvement of this row over each row, in row order.
    pub improvement: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub trace_digest: String,
    pub capacity: usize,
    pub rows: Vec<ComparisonRow>,
}

/// Compares reports made on the same trace, capacity and warm-up.
pub fn compare(reports: &[SimulationReport]) -> Result<Comparison> {
    let first = reports
        .first()
        .ok_or_else(|| Error::usage("nothing to compare"))?;
    for r in reports {
        if r.trace_digest != first.trace_digest
            || r.capacity != first.capacity
            || r.warmup != first.warmup
        {
            return Err(Error::config(format!(
                "`{}` and `{}` were run on different traces, capacities or warm-ups",
                first.controller, r.controller
            )));
        }
    }
    let rows = reports
        .iter()
        .map(|a| ComparisonRow {
            controller: a.controller.clone(),
            hit_ratio: a.hit_ratio,
            improvement: reports
                .iter()
                .map(|b| relative_improvement(a.hit_ratio, b.hit_ratio))
                .collect(),
        })
        .collect();
    Ok(Comparison {
        trace_digest: first.trace_digest.clone(),
        capacity: first.capacity,
        rows,
    })
}

impl Comparison {
    /// Hit ratios followed by the improvement matrix (row over column), in percent.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.controller.len())
            .max()
            .unwrap_or(0)
            .max(10);
        let mut out = String::new();
        let _ = writeln!(out, "{:width$}  hit ratio", "controller");
        for r in &self.rows {
            let _ = writeln!(out, "{:width$}  {:.4}", r.controller, r.hit_ratio);
        }
        let _ = writeln!(out, "\nrelative improvement (row over column)");
        let _ = write!(out, "{:width$}", "");
        for r in &self.rows {
            let _ = write!(out, "  {:>width$}", r.controller);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:width$}", r.controller);
            for v in &r.improvement {
                let cell = v.map_or("n/a".to_string(), |v| format!("{:+.1}%", v * 100.0));
                let _ = write!(out, "  {cell:>width$}");
            }
            out.push('\n');
        }
        out
    }
}
