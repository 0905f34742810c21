//! Runs a scenario end to end: exact solve, refinement, verification, and
//! report files.
//!
//! Stages always run in the order exact, approx, verify. The verify stage
//! re-solves its own oracles through the check functions, so its records do
//! not depend on whether the exact stage ran; when the exact stage is
//! skipped, the report's exact section is filled from the verifier's
//! objective solve instead.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use bft_minmax::approx::{refine, ApproxConfig, ApproxError, RefineOutcome};
use bft_minmax::exact::{
    default_resolution, minimize_objective, SolveError, SolveOptions, SolveResult,
};
use bft_minmax::rank::EvalError;
use bft_minmax::verifier::{
    check_approx_guarantee, check_coverage_bound, check_dominance_tightness,
    check_honest_envelope_lipschitz, check_partition_derivation, check_rank_overclaim,
    check_sandwich_bounds, CheckRecord, OracleMeta, VerifyError,
};
use bft_minmax::CostFunctionSpec;

use crate::generate::GenerateError;
use crate::report::{
    atomic_write, curves_csv, sweep_csv, trace_csv, ApproxSection, ExactSection, RunReport,
    SweepRow,
};
use crate::scenario::{canonical_stages, LoadedScenario, Scenario, ScenarioError, Stage};

const BOUNDARY_TOL: f64 = 1e-12;
const CURVE_SAMPLES: usize = 401;
const OVERCLAIM_MARGIN: f64 = 0.5;
const DERIVATION_SAMPLES_PER_CELL: usize = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot encode scenario: {0}")]
    EncodeToml(#[from] toml::ser::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Process exit code for this error: 3 when a solve ran out of its
    /// evaluation budget, 2 for everything else. Exit 1 is reserved for
    /// completed runs with failing checks.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solve(SolveError::BudgetExceeded { .. }) => 3,
            CliError::Verify(VerifyError::Solve(SolveError::BudgetExceeded { .. })) => 3,
            _ => 2,
        }
    }
}

/// An epsilon sweep, parsed from `epsilon=START:END:STEP`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0.. {
            let v = self.start + k as f64 * self.step;
            if v > self.end + 1e-12 {
                break;
            }
            out.push(v);
        }
        out
    }
}

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let usage = "expected epsilon=START:END:STEP, for example epsilon=0.1:0.5:0.1";
        let (key, range) = text.split_once('=').ok_or(usage)?;
        if key != "epsilon" {
            return Err(format!("only epsilon can be swept, got {key:?}"));
        }
        let parts: Vec<&str> = range.split(':').collect();
        let [start, end, step] = parts.as_slice() else {
            return Err(usage.into());
        };
        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
        let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
        if !(start > 0.0 && start <= end && end < 1.0 && step > 0.0) {
            return Err(format!(
                "sweep needs 0 < START <= END < 1 and STEP > 0, got {start}:{end}:{step}"
            ));
        }
        Ok(SweepSpec { start, end, step })
    }
}

/// Everything the `run` subcommand needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    pub stages: Option<Vec<Stage>>,
    pub resolution: Option<usize>,
    pub epsilon: Option<f64>,
    pub sweep: Option<SweepSpec>,
    pub no_timestamp: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub report_path: PathBuf,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Load, override, expand, run the stages, and write the report files.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let text = fs::read_to_string(&config.scenario_path).map_err(|source| ScenarioError::Io {
        path: config.scenario_path.clone(),
        source,
    })?;
    let mut scenario =
        Scenario::from_toml(&text).map_err(|source| ScenarioError::Parse {
            path: config.scenario_path.clone(),
            source,
        })?;

    if let Some(stages) = &config.stages {
        scenario.solver.stages = Some(stages.clone());
    }
    if let Some(resolution) = config.resolution {
        scenario.solver.resolution = Some(resolution);
    }
    if let Some(epsilon) = config.epsilon {
        scenario.solver.epsilon = Some(epsilon);
    }
    if config.sweep.is_some() {
        let mut stages = scenario
            .solver
            .stages
            .clone()
            .unwrap_or_else(|| vec![Stage::Exact, Stage::Verify]);
        stages.push(Stage::Approx);
        scenario.solver.stages = Some(canonical_stages(&stages));
    }

    let loaded = scenario.expand()?;
    execute(&loaded, config)
}

fn execute(loaded: &LoadedScenario, config: &RunConfig) -> Result<RunOutcome, CliError> {
    let ensemble = &loaded.ensemble;
    let truth = &loaded.truth;
    let domain = ensemble.domain();
    let resolution = loaded
        .resolution
        .unwrap_or_else(|| default_resolution(domain.dim()));
    let options = SolveOptions {
        resolution: Some(resolution),
        eval_budget: loaded.eval_budget,
        parallel: loaded.parallel,
    };
    let mut warnings = Vec::new();

    let mut exact_solve: Option<SolveResult> = None;
    if loaded.stages.contains(&Stage::Exact) {
        exact_solve = Some(minimize_objective(ensemble, &options)?);
    }

    let mut approx_outcome: Option<RefineOutcome> = None;
    let mut approx_config: Option<ApproxConfig> = None;
    if loaded.stages.contains(&Stage::Approx) {
        let config = approx_config_for(loaded, loaded.epsilon)?;
        approx_outcome = Some(refine(ensemble, &config)?);
        approx_config = Some(config);
    }

    let mut sweep_rows = Vec::new();
    if let Some(sweep) = &config.sweep {
        for epsilon in sweep.values() {
            let config = approx_config_for(loaded, epsilon)?;
            let outcome = refine(ensemble, &config)?;
            sweep_rows.push(SweepRow {
                epsilon,
                bound_factor: 1.0 / (1.0 - epsilon),
                value: outcome.result.value,
                cell_count: outcome.result.cell_count,
                terminated_by: outcome.result.terminated_by,
            });
        }
    }

    let mut records: Vec<CheckRecord> = Vec::new();
    let mut oracle: Option<OracleMeta> = None;
    if loaded.stages.contains(&Stage::Verify) {
        let sandwich = check_sandwich_bounds(ensemble, truth, &options)?;
        if let Some(solves) = &sandwich.solves {
            records.push(check_coverage_bound(ensemble, truth, &solves.objective)?);
            let mut error_bounds = BTreeMap::new();
            let entries = [
                ("objective", &solves.objective),
                ("honest_max", &solves.honest_max_min),
                ("honest_rank", &solves.honest_rank_min),
            ];
            for (name, solve) in entries {
                if let Some(bound) = solve.certificate.error_bound {
                    error_bounds.insert(name.to_string(), bound);
                }
            }
            oracle = Some(OracleMeta {
                resolution,
                error_bounds,
            });
            if exact_solve.is_none() {
                exact_solve = Some(solves.objective.clone());
            }
        }
        records.extend(sandwich.records);

        records.extend(check_dominance_tightness(
            Some((ensemble, truth)),
            Some((ensemble, truth)),
            &options,
        )?);

        records.push(check_honest_envelope_lipschitz(
            ensemble,
            truth,
            loaded.verify_lipschitz,
            loaded.verify_pairs,
            loaded.verify_seed,
        )?);

        if let (Some(outcome), Some(config)) = (&approx_outcome, &approx_config) {
            records.extend(check_approx_guarantee(
                ensemble,
                truth,
                &outcome.result,
                config,
                outcome.tau_abs,
                &options,
            )?);
            records.extend(check_partition_derivation(
                ensemble,
                truth,
                outcome,
                config,
                loaded.verify_seed,
                DERIVATION_SAMPLES_PER_CELL,
            )?);
        }

        if ensemble.fault_budget() >= 1 {
            let tail: Vec<CostFunctionSpec> = truth
                .honest()
                .iter()
                .map(|&i| ensemble.specs()[i].clone())
                .collect();
            for &gap in &loaded.overclaim_gaps {
                let check = check_rank_overclaim(
                    &tail,
                    ensemble.fault_budget(),
                    ensemble.fault_budget(),
                    gap,
                    OVERCLAIM_MARGIN,
                    domain,
                    &options,
                )?;
                for mut record in check.records {
                    record.name = format!("{}/gap{gap}", record.name);
                    records.push(record);
                }
            }
        }

        records.sort_by(|a, b| a.name.cmp(&b.name));
    }

    let exact = exact_solve.map(|solve| {
        let boundary_touch = domain.on_boundary(&solve.minimizer, BOUNDARY_TOL);
        if boundary_touch {
            warnings.push(format!(
                "the exact minimizer {:?} touches the domain boundary; \
                 the unconstrained minimum may lie outside",
                solve.minimizer
            ));
        }
        ExactSection {
            minimizer: solve.minimizer,
            value: solve.value,
            resolution,
            grid_step: solve.certificate.grid_step,
            error_bound: solve.certificate.error_bound,
            evaluations: solve.evaluations,
            boundary_touch,
        }
    });

    let approx = approx_outcome.as_ref().map(|outcome| {
        let config = approx_config.as_ref().expect("config set with outcome");
        let boundary_touch = domain.on_boundary(&outcome.result.minimizer, BOUNDARY_TOL);
        ApproxSection {
            minimizer: outcome.result.minimizer.clone(),
            value: outcome.result.value,
            epsilon: config.epsilon,
            lipschitz: config.lipschitz,
            tau_abs: outcome.tau_abs,
            cell_id: outcome.result.cell_id,
            cell_count: outcome.result.cell_count,
            terminated_by: outcome.result.terminated_by,
            rounds: outcome.trace.len(),
            boundary_touch,
        }
    });

    let (checks_passed, checks_failed, checks_inconclusive, checks_skipped) =
        tally(&records);
    let report = RunReport {
        scenario: loaded.scenario.name.clone(),
        generated_at: if config.no_timestamp {
            None
        } else {
            Some(unix_now())
        },
        dimension: domain.dim(),
        functions: ensemble.len(),
        fault_budget: ensemble.fault_budget(),
        faulty_indices: truth.faulty().iter().map(|&i| i + 1).collect(),
        stages: loaded.stages.clone(),
        exact,
        approx,
        sweep: sweep_rows,
        checks: records,
        oracle,
        checks_passed,
        checks_failed,
        checks_inconclusive,
        checks_skipped,
        all_passed: checks_failed == 0,
    };

    let out_dir = &config.out_dir;
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let name = &loaded.scenario.name;
    let write = |file: String, bytes: &[u8]| -> Result<PathBuf, CliError> {
        let path = out_dir.join(file);
        atomic_write(&path, bytes).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };

    let mut files = Vec::new();
    let report_path = write(format!("{name}.report.json"), &report.to_json())?;
    files.push(report_path.clone());

    if domain.dim() == 1 && loaded.stages.contains(&Stage::Verify) {
        let csv = curves_csv(ensemble, truth, CURVE_SAMPLES)?;
        files.push(write(format!("{name}.curves.csv"), csv.as_bytes())?);
    }
    if let Some(outcome) = &approx_outcome {
        let csv = trace_csv(&outcome.trace);
        files.push(write(format!("{name}.trace.csv"), csv.as_bytes())?);
    }
    if !report.sweep.is_empty() {
        let csv = sweep_csv(&report.sweep);
        files.push(write(format!("{name}.sweep.csv"), csv.as_bytes())?);
    }

    Ok(RunOutcome {
        report,
        report_path,
        files,
        warnings,
    })
}

fn approx_config_for(loaded: &LoadedScenario, epsilon: f64) -> Result<ApproxConfig, CliError> {
    let mut config = ApproxConfig::new(epsilon, loaded.lipschitz)?;
    config.max_cells = loaded.max_cells;
    config.parallel = loaded.parallel;
    Ok(config)
}

fn tally(records: &[CheckRecord]) -> (usize, usize, usize, usize) {
    use bft_minmax::verifier::CheckStatus;
    let mut t = (0, 0, 0, 0);
    for record in records {
        match record.status {
            CheckStatus::Pass => t.0 += 1,
            CheckStatus::Fail => t.1 += 1,
            CheckStatus::Inconclusive => t.2 += 1,
            CheckStatus::Skipped => t.3 += 1,
        }
    }
    t
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
