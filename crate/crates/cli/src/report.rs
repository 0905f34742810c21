//! Run reports and CSV diagnostics.
//!
//! A run produces one JSON report plus optional CSV files: sampled value
//! curves for 1-D scenarios, the refinement trace, and the epsilon sweep.
//! All numbers are written with the shortest round-trip float formatting,
//! so reruns of a deterministic pipeline produce byte-identical files.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;

use bft_minmax::approx::{RoundRecord, Termination};
use bft_minmax::rank::{rank_k, rank_k_subset, EvalError};
use bft_minmax::verifier::{CheckRecord, OracleMeta};
use bft_minmax::{Ensemble, GroundTruth};

use crate::scenario::Stage;

/// Result of the exact grid stage.
#[derive(Debug, Clone, Serialize)]
pub struct ExactSection {
    pub minimizer: Vec<f64>,
    pub value: f64,
    pub resolution: usize,
    pub grid_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<f64>,
    pub evaluations: u64,
    pub boundary_touch: bool,
}

/// Result of the refinement stage.
#[derive(Debug, Clone, Serialize)]
pub struct ApproxSection {
    pub minimizer: Vec<f64>,
    pub value: f64,
    pub epsilon: f64,
    pub lipschitz: f64,
    pub tau_abs: f64,
    pub cell_id: usize,
    pub cell_count: usize,
    pub terminated_by: Termination,
    pub rounds: usize,
    pub boundary_touch: bool,
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub bound_factor: f64,
    pub value: f64,
    pub cell_count: usize,
    pub terminated_by: Termination,
}

/// The report a run writes, one per scenario.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub dimension: usize,
    pub functions: usize,
    pub fault_budget: usize,
    pub faulty_indices: Vec<usize>,
    pub stages: Vec<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx: Option<ApproxSection>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleMeta>,
    pub checks_passed: usize,
    pub checks_failed: usize,
    pub checks_inconclusive: usize,
    pub checks_skipped: usize,
    pub all_passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serialization");
        bytes.push(b'\n');
        bytes
    }
}

/// Write through a temporary sibling and rename, so readers never observe a
/// half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Sampled per-function values along a 1-D domain, with the objective and
/// both honest envelopes alongside.
pub fn curves_csv(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    samples: usize,
) -> Result<String, EvalError> {
    assert_eq!(ensemble.domain().dim(), 1, "curves are 1-D only");
    let samples = samples.max(2);
    let lo = ensemble.domain().lower()[0];
    let hi = ensemble.domain().upper()[0];
    let mut out = String::from("x");
    for i in 0..ensemble.len() {
        write!(out, ",q{}", i + 1).unwrap();
    }
    out.push_str(",objective,honest_max,honest_rank\n");
    let honest_rank = ensemble.fault_budget() + 1;
    let mut values = Vec::with_capacity(ensemble.len());
    for step in 0..samples {
        let t = step as f64 / (samples - 1) as f64;
        let x = if step + 1 == samples { hi } else { lo + t * (hi - lo) };
        ensemble.values_into(&[x], &mut values)?;
        write!(out, "{x}").unwrap();
        for v in &values {
            write!(out, ",{v}").unwrap();
        }
        let objective = rank_k(&values, ensemble.fault_budget() + 1);
        let hmax = rank_k_subset(&values, truth.honest(), 1);
        let hrank = rank_k_subset(&values, truth.honest(), honest_rank);
        writeln!(out, ",{objective},{hmax},{hrank}").unwrap();
    }
    Ok(out)
}

/// Refinement trace, one row per round.
pub fn trace_csv(trace: &[RoundRecord]) -> String {
    let mut out = String::from("round,cell_count,min_center_value,max_violation\n");
    for row in trace {
        writeln!(
            out,
            "{},{},{},{}",
            row.round, row.cell_count, row.min_center_value, row.max_violation
        )
        .unwrap();
    }
    out
}

/// Epsilon sweep summary, one row per epsilon.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("epsilon,bound_factor,value,cell_count,terminated_by\n");
    for row in rows {
        let terminated = match row.terminated_by {
            Termination::Criterion => "criterion",
            Termination::Floor => "floor",
            Termination::Budget => "budget",
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            row.epsilon, row.bound_factor, row.value, row.cell_count, terminated
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn anchor() -> (Ensemble, GroundTruth) {
        let scenario = Scenario::from_toml(
            r#"
            name = "anchor"
            fault_budget = 1
            non_negative = true

            [domain]
            lower = [-2.0]
            upper = [2.0]

            [[honest]]
            kind = "cone"
            center = [0.0]
            slope = 1.0

            [[honest]]
            kind = "cone"
            center = [1.0]
            slope = 1.0

            [[adversaries]]
            kind = "above_all"
            delta = 0.5
            "#,
        )
        .unwrap();
        let loaded = scenario.expand().unwrap();
        (loaded.ensemble, loaded.truth)
    }

    #[test]
    fn curves_cover_the_domain_and_keep_the_sandwich_order() {
        let (ensemble, truth) = anchor();
        let csv = curves_csv(&ensemble, &truth, 101).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "x,q1,q2,q3,objective,honest_max,honest_rank"
        );
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 101);
        assert_eq!(rows[0][0], -2.0);
        assert_eq!(rows[100][0], 2.0);
        for row in &rows {
            let (objective, hmax, hrank) = (row[4], row[5], row[6]);
            assert!(hrank <= objective && objective <= hmax);
        }
    }

    #[test]
    fn trace_and_sweep_render_stable_headers() {
        let trace = trace_csv(&[RoundRecord {
            round: 0,
            cell_count: 1,
            min_center_value: 0.5,
            max_violation: 0.25,
        }]);
        assert_eq!(
            trace,
            "round,cell_count,min_center_value,max_violation\n0,1,0.5,0.25\n"
        );
        let sweep = sweep_csv(&[SweepRow {
            epsilon: 0.1,
            bound_factor: 1.0 / 0.9,
            value: 0.5,
            cell_count: 17,
            terminated_by: Termination::Criterion,
        }]);
        assert!(sweep.ends_with("criterion\n"));
        assert!(sweep.starts_with("epsilon,bound_factor,value,cell_count,terminated_by\n"));
    }

    #[test]
    fn atomic_write_replaces_the_target_in_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert!(!path.with_file_name("report.json.tmp").exists());
    }
}
