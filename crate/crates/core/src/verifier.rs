//! Oracle-backed verification of the guarantees the solvers claim.
//!
//! Each check recomputes a claimed bound through an independent route
//! (subset-rank solves over the same grid, direct evaluation at reported
//! minimizers, seeded sampling) and freezes the comparison into a
//! [`CheckRecord`]: the two sides, the tolerance, and the resulting gap.
//! Records never hide a miss; a failed comparison is reported as a failure,
//! an inapplicable one as skipped, and one the oracle cannot settle as
//! inconclusive.
//!
//! Comparisons between ranks evaluated at shared points are selections from
//! one value profile and hold exactly in floating point, so those records
//! carry tolerance zero. Tolerances appear only where two independently
//! rounded quantities meet.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::approx::{ApproxConfig, ApproxResult, RefineOutcome, Termination};
use crate::exact::{
    default_resolution, minimize_objective, minimize_subset_rank, SolveError, SolveOptions,
    SolveResult,
};
use crate::functions::{make_gap_adversary, CostFunctionSpec, SpecError};
use crate::grid::Grid;
use crate::rank::{
    honest_max, honest_rank, rank_k, rank_k_subset, BuildError, Ensemble, EvalError, GroundTruth,
    Hypercube,
};

/// Pairs sampled by the Lipschitz check when the caller has no preference.
pub const DEFAULT_PAIR_COUNT: usize = 10_000;

/// Base relative slack for comparisons between independently rounded
/// quantities.
pub const FLOAT_SLACK: f64 = 1e-9;

fn float_slack(scale: f64) -> f64 {
    FLOAT_SLACK * (1.0 + scale.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The oracle could not settle the comparison (for example, the solve
    /// behind it was cut off by a budget). Never counted as a pass.
    Inconclusive,
    /// The check's preconditions did not hold, so the claim was not tested.
    Skipped,
}

/// Points and values pinning down a comparison, kept small enough to embed
/// in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

/// One verified comparison: `lhs <= rhs + tolerance`, with
/// `gap = rhs + tolerance - lhs` (non-negative exactly when the check
/// passes).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: CheckStatus,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    /// Checks `lhs <= rhs + tolerance`.
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let gap = rhs + tolerance - lhs;
        Self {
            name: name.into(),
            status: if gap >= 0.0 {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            lhs,
            rhs,
            tolerance,
            gap,
            witness: None,
            note: None,
        }
    }

    /// Checks `|a - b| <= tolerance`.
    pub fn close(name: impl Into<String>, a: f64, b: f64, tolerance: f64) -> Self {
        Self::le(name, (a - b).abs(), 0.0, tolerance)
    }

    /// Checks `actual >= required` for counting arguments.
    pub fn count_at_least(name: impl Into<String>, required: usize, actual: usize) -> Self {
        Self::le(name, required as f64, actual as f64, 0.0)
    }

    pub fn skipped(name: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Skipped,
            lhs: 0.0,
            rhs: 0.0,
            tolerance: 0.0,
            gap: 0.0,
            witness: None,
            note: Some(note.into()),
        }
    }

    pub fn inconclusive(name: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            status: CheckStatus::Inconclusive,
            ..Self::skipped(name, note)
        }
    }

    pub fn with_witness(mut self, witness: Witness) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Provenance of the grid oracle behind a report's records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleMeta {
    /// Points per axis of the oracle grid.
    pub resolution: usize,
    /// Certified error bounds of the solves the records lean on, keyed by
    /// solve name.
    pub error_bounds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub records: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleMeta>,
}

impl VerificationReport {
    pub fn new(scenario: impl Into<String>) -> Self {
        Self {
            scenario: scenario.into(),
            records: Vec::new(),
            oracle: None,
        }
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = CheckRecord>) {
        self.records.extend(records);
    }

    /// True when no record failed; skipped and inconclusive records do not
    /// count as passes, but they do not fail the report either.
    pub fn all_passed(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.status != CheckStatus::Fail)
    }

    /// `(passed, failed, inconclusive, skipped)`.
    pub fn tally(&self) -> (usize, usize, usize, usize) {
        let mut t = (0, 0, 0, 0);
        for r in &self.records {
            match r.status {
                CheckStatus::Pass => t.0 += 1,
                CheckStatus::Fail => t.1 += 1,
                CheckStatus::Inconclusive => t.2 += 1,
                CheckStatus::Skipped => t.3 += 1,
            }
        }
        t
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("check invoked incorrectly: {0}")]
    Misuse(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

fn require_matching_truth(ensemble: &Ensemble, truth: &GroundTruth) -> Result<(), VerifyError> {
    if truth.n() != ensemble.len() {
        return Err(VerifyError::Misuse(format!(
            "ground truth covers {} functions but the ensemble has {}",
            truth.n(),
            ensemble.len()
        )));
    }
    Ok(())
}

/// Budget exhaustion never fails a check outright; it leaves the oracle
/// unable to settle it. The inner `Err` carries the note for the resulting
/// inconclusive records.
fn catch_budget(
    result: Result<SolveResult, SolveError>,
) -> Result<Result<SolveResult, String>, VerifyError> {
    match result {
        Ok(solve) => Ok(Ok(solve)),
        Err(SolveError::BudgetExceeded { required, budget }) => Ok(Err(format!(
            "oracle grid of {required} nodes exceeds the evaluation budget of {budget}"
        ))),
        Err(other) => Err(other.into()),
    }
}

/// Results of [`check_sandwich_bounds`]: the records plus the solves behind
/// them. `solves` is absent when the oracle ran out of budget, in which case
/// every record is inconclusive.
#[derive(Debug, Clone)]
pub struct SandwichCheck {
    pub records: Vec<CheckRecord>,
    pub solves: Option<SandwichSolves>,
}

#[derive(Debug, Clone)]
pub struct SandwichSolves {
    /// Minimum of the rank objective over all functions.
    pub objective: SolveResult,
    /// Minimum of the largest honest value.
    pub honest_max_min: SolveResult,
    /// Minimum of the `(f+1)`-th largest honest value.
    pub honest_rank_min: SolveResult,
}

const SANDWICH_NAMES: [&str; 3] = ["sandwich/upper", "sandwich/mid", "sandwich/lower"];

/// Verifies that the objective minimum is pinched between the two honest
/// aggregates:
///
/// ```text
/// min honest_rank  <=  honest_rank(x*)  <=  objective(x*)  <=  min honest_max
/// ```
///
/// with `x*` the objective's grid minimizer. All three comparisons are rank
/// selections over one grid and hold exactly, so every record carries
/// tolerance zero.
pub fn check_sandwich_bounds(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    options: &SolveOptions,
) -> Result<SandwichCheck, VerifyError> {
    require_matching_truth(ensemble, truth)?;
    let inconclusive = |note: String| SandwichCheck {
        records: SANDWICH_NAMES
            .iter()
            .map(|name| CheckRecord::inconclusive(*name, note.clone()))
            .collect(),
        solves: None,
    };
    let objective = match catch_budget(minimize_objective(ensemble, options))? {
        Ok(solve) => solve,
        Err(note) => return Ok(inconclusive(note)),
    };
    let honest_max_min =
        match catch_budget(minimize_subset_rank(ensemble, truth.honest(), 1, options))? {
            Ok(solve) => solve,
            Err(note) => return Ok(inconclusive(note)),
        };
    let honest_rank_min = match catch_budget(minimize_subset_rank(
        ensemble,
        truth.honest(),
        ensemble.fault_budget() + 1,
        options,
    ))? {
        Ok(solve) => solve,
        Err(note) => return Ok(inconclusive(note)),
    };
    let rank_at_minimizer = honest_rank(ensemble, truth, &objective.minimizer)?;

    let records = vec![
        CheckRecord::le(
            SANDWICH_NAMES[0],
            objective.value,
            honest_max_min.value,
            0.0,
        )
        .with_witness(Witness {
            points: vec![objective.minimizer.clone(), honest_max_min.minimizer.clone()],
            values: vec![objective.value, honest_max_min.value],
        })
        .with_note("objective minimum never exceeds the best honest max"),
        CheckRecord::le(SANDWICH_NAMES[1], rank_at_minimizer, objective.value, 0.0)
            .with_witness(Witness {
                points: vec![objective.minimizer.clone()],
                values: vec![rank_at_minimizer, objective.value],
            })
            .with_note("honest rank at the objective minimizer stays below the reported value"),
        CheckRecord::le(
            SANDWICH_NAMES[2],
            honest_rank_min.value,
            rank_at_minimizer,
            0.0,
        )
        .with_witness(Witness {
            points: vec![honest_rank_min.minimizer.clone(), objective.minimizer.clone()],
            values: vec![honest_rank_min.value, rank_at_minimizer],
        })
        .with_note("the honest-rank minimum is attained no later than the objective minimizer"),
    ];
    Ok(SandwichCheck {
        records,
        solves: Some(SandwichSolves {
            objective,
            honest_max_min,
            honest_rank_min,
        }),
    })
}

/// Verifies the counting form of the guarantee at a solve's minimizer: all
/// but at most `f` of the honest functions cost no more than the reported
/// value there.
pub fn check_coverage_bound(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    solve: &SolveResult,
) -> Result<CheckRecord, VerifyError> {
    require_matching_truth(ensemble, truth)?;
    let profile = ensemble.values_at(&solve.minimizer)?;
    let honest_values: Vec<f64> = truth
        .honest()
        .iter()
        .map(|&i| profile.values()[i])
        .collect();
    let covered = honest_values.iter().filter(|&&v| v <= solve.value).count();
    let required = truth.honest().len() - ensemble.fault_budget().min(truth.honest().len());
    Ok(
        CheckRecord::count_at_least("coverage/at_minimizer", required, covered)
            .with_witness(Witness {
                points: vec![solve.minimizer.clone()],
                values: honest_values,
            })
            .with_note("honest functions at or below the reported value"),
    )
}

struct DominanceSweep {
    dominates: bool,
    violation_point: Option<Vec<f64>>,
    max_pointwise_diff: f64,
    worst_point: Vec<f64>,
    min_objective: f64,
    min_aggregate: f64,
}

enum DominanceSide {
    Above,
    Below,
}

fn sweep_dominance(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    side: DominanceSide,
    options: &SolveOptions,
) -> Result<Result<DominanceSweep, String>, VerifyError> {
    let dim = ensemble.domain().dim();
    let resolution = options.resolution.unwrap_or_else(|| default_resolution(dim));
    let grid = Grid::new(ensemble.domain(), resolution);
    let total = grid.total_nodes();
    if total > options.eval_budget {
        return Ok(Err(format!(
            "oracle grid of {total} nodes exceeds the evaluation budget of {}",
            options.eval_budget
        )));
    }

    let rank = ensemble.fault_budget() + 1;
    let mut point = Vec::new();
    let mut values = Vec::with_capacity(ensemble.len());
    let mut out = DominanceSweep {
        dominates: true,
        violation_point: None,
        max_pointwise_diff: f64::NEG_INFINITY,
        worst_point: Vec::new(),
        min_objective: f64::INFINITY,
        min_aggregate: f64::INFINITY,
    };
    for flat in 0..total {
        grid.node_into(flat, &mut point);
        ensemble.values_into(&point, &mut values)?;
        let objective = rank_k(&values, rank);
        let faulty_iter = truth.faulty().iter().map(|&i| values[i]);
        let (aggregate, holds) = match side {
            DominanceSide::Above => {
                let hm = rank_k_subset(&values, truth.honest(), 1);
                let fmin = faulty_iter.fold(f64::INFINITY, f64::min);
                (hm, fmin >= hm)
            }
            DominanceSide::Below => {
                let hr = rank_k_subset(&values, truth.honest(), rank);
                let honest_min = rank_k_subset(&values, truth.honest(), truth.honest().len());
                let fmax = faulty_iter.fold(f64::NEG_INFINITY, f64::max);
                (hr, fmax <= honest_min)
            }
        };
        if !holds && out.dominates {
            out.dominates = false;
            out.violation_point = Some(point.clone());
        }
        let diff = (objective - aggregate).abs();
        if diff > out.max_pointwise_diff {
            out.max_pointwise_diff = diff;
            out.worst_point = point.clone();
        }
        out.min_objective = out.min_objective.min(objective);
        out.min_aggregate = out.min_aggregate.min(aggregate);
    }
    Ok(Ok(out))
}

/// Verifies that dominating faults make the sandwich collapse onto its
/// boundary, and that the collapse is exact at every grid node.
///
/// `above` supplies an ensemble whose faulty functions lie at or above every
/// honest value; with exactly `f` of them the objective coincides with the
/// honest max. `below` supplies one whose faulty functions lie at or below
/// every honest value (any number up to `f`); there the objective coincides
/// with the honest rank. Ensembles whose faults do not dominate, or with the
/// wrong faulty count, produce skipped records rather than failures.
pub fn check_dominance_tightness(
    above: Option<(&Ensemble, &GroundTruth)>,
    below: Option<(&Ensemble, &GroundTruth)>,
    options: &SolveOptions,
) -> Result<Vec<CheckRecord>, VerifyError> {
    let mut records = Vec::new();

    if let Some((ensemble, truth)) = above {
        require_matching_truth(ensemble, truth)?;
        let value_name = "tightness/above/value";
        let point_name = "tightness/above/pointwise";
        if truth.faulty().len() != ensemble.fault_budget() {
            let note = format!(
                "needs exactly {} dominating faults, ground truth marks {}",
                ensemble.fault_budget(),
                truth.faulty().len()
            );
            records.push(CheckRecord::skipped(value_name, note.clone()));
            records.push(CheckRecord::skipped(point_name, note));
        } else {
            match sweep_dominance(ensemble, truth, DominanceSide::Above, options)? {
                Err(note) => {
                    records.push(CheckRecord::inconclusive(value_name, note.clone()));
                    records.push(CheckRecord::inconclusive(point_name, note));
                }
                Ok(sweep) if !sweep.dominates => {
                    let at = sweep.violation_point.unwrap_or_default();
                    let note = format!("faults do not dominate from above at {at:?}");
                    records.push(CheckRecord::skipped(value_name, note.clone()));
                    records.push(CheckRecord::skipped(point_name, note));
                }
                Ok(sweep) => {
                    records.push(
                        CheckRecord::close(
                            value_name,
                            sweep.min_objective,
                            sweep.min_aggregate,
                            0.0,
                        )
                        .with_note("objective minimum equals the honest-max minimum"),
                    );
                    records.push(
                        CheckRecord::le(point_name, sweep.max_pointwise_diff, 0.0, 0.0)
                            .with_witness(Witness {
                                points: vec![sweep.worst_point],
                                values: vec![sweep.max_pointwise_diff],
                            })
                            .with_note("objective equals the honest max at every grid node"),
                    );
                }
            }
        }
    }

    if let Some((ensemble, truth)) = below {
        require_matching_truth(ensemble, truth)?;
        let value_name = "tightness/below/value";
        let point_name = "tightness/below/pointwise";
        if truth.faulty().is_empty() {
            let note = "needs at least one dominated fault, ground truth marks none";
            records.push(CheckRecord::skipped(value_name, note));
            records.push(CheckRecord::skipped(point_name, note));
        } else {
            match sweep_dominance(ensemble, truth, DominanceSide::Below, options)? {
                Err(note) => {
                    records.push(CheckRecord::inconclusive(value_name, note.clone()));
                    records.push(CheckRecord::inconclusive(point_name, note));
                }
                Ok(sweep) if !sweep.dominates => {
                    let at = sweep.violation_point.unwrap_or_default();
                    let note = format!("faults do not stay below every honest value at {at:?}");
                    records.push(CheckRecord::skipped(value_name, note.clone()));
                    records.push(CheckRecord::skipped(point_name, note));
                }
                Ok(sweep) => {
                    records.push(
                        CheckRecord::close(
                            value_name,
                            sweep.min_objective,
                            sweep.min_aggregate,
                            0.0,
                        )
                        .with_note("objective minimum equals the honest-rank minimum"),
                    );
                    records.push(
                        CheckRecord::le(point_name, sweep.max_pointwise_diff, 0.0, 0.0)
                            .with_witness(Witness {
                                points: vec![sweep.worst_point],
                                values: vec![sweep.max_pointwise_diff],
                            })
                            .with_note("objective equals the honest rank at every grid node"),
                    );
                }
            }
        }
    }

    Ok(records)
}

/// Results of [`check_rank_overclaim`]. `solves` is absent when the oracle
/// ran out of budget, in which case every record is inconclusive.
#[derive(Debug, Clone)]
pub struct OverclaimCheck {
    pub records: Vec<CheckRecord>,
    pub solves: Option<OverclaimSolves>,
}

#[derive(Debug, Clone)]
pub struct OverclaimSolves {
    /// What the optimistic estimator reports; identical in both executions.
    pub estimate: SolveResult,
    /// The best honest max in the execution where the planted functions are
    /// the faulty ones.
    pub honest_max_min: SolveResult,
}

const OVERCLAIM_NAMES: [&str; 2] = ["overclaim/identical_outputs", "overclaim/exceeds_gap"];

/// Demonstrates that an estimator targeting rank `claimed_rank <= f` cannot
/// be trusted: `f` planted functions sitting `gap + margin` above the
/// envelope of `tail` yield two executions the estimator cannot tell apart.
/// In the one where the planted functions are faulty and `tail` honest, its
/// output exceeds the best honest max by more than `gap`, which the caller
/// can scale at will.
pub fn check_rank_overclaim(
    tail: &[CostFunctionSpec],
    fault_budget: usize,
    claimed_rank: usize,
    gap: f64,
    margin: f64,
    domain: &Hypercube,
    options: &SolveOptions,
) -> Result<OverclaimCheck, VerifyError> {
    if fault_budget == 0 {
        return Err(VerifyError::Misuse(
            "the overclaim construction needs a positive fault budget".into(),
        ));
    }
    if claimed_rank == 0 || claimed_rank > fault_budget {
        return Err(VerifyError::Misuse(format!(
            "claimed rank {claimed_rank} is not optimistic: it must lie in 1..={fault_budget}"
        )));
    }
    if tail.len() < fault_budget + 1 {
        return Err(VerifyError::Misuse(format!(
            "tail of {} functions cannot seat {} honest survivors",
            tail.len(),
            fault_budget + 1
        )));
    }

    let build = || -> Result<Ensemble, VerifyError> {
        let planted = make_gap_adversary(tail, gap, margin)?;
        let mut specs = vec![planted; fault_budget];
        specs.extend(tail.iter().cloned());
        Ok(Ensemble::new(specs, fault_budget, domain.clone(), false)?)
    };
    let first = build()?;
    let second = build()?;
    let n = first.len();
    let everyone: std::collections::BTreeSet<usize> = (0..n).collect();
    let inconclusive = |note: String| OverclaimCheck {
        records: OVERCLAIM_NAMES
            .iter()
            .map(|name| CheckRecord::inconclusive(*name, note.clone()))
            .collect(),
        solves: None,
    };

    let estimate = match catch_budget(minimize_subset_rank(
        &first,
        &everyone,
        claimed_rank,
        options,
    ))? {
        Ok(solve) => solve,
        Err(note) => return Ok(inconclusive(note)),
    };
    let repeat = match catch_budget(minimize_subset_rank(
        &second,
        &everyone,
        claimed_rank,
        options,
    ))? {
        Ok(solve) => solve,
        Err(note) => return Ok(inconclusive(note)),
    };
    let identical = estimate.value.to_bits() == repeat.value.to_bits()
        && estimate.minimizer.len() == repeat.minimizer.len()
        && estimate
            .minimizer
            .iter()
            .zip(&repeat.minimizer)
            .all(|(a, b)| a.to_bits() == b.to_bits());

    let planted_faulty: std::collections::BTreeSet<usize> = (0..fault_budget).collect();
    let truth = GroundTruth::for_ensemble(&first, planted_faulty)?;
    let honest_max_min =
        match catch_budget(minimize_subset_rank(&first, truth.honest(), 1, options))? {
            Ok(solve) => solve,
            Err(note) => return Ok(inconclusive(note)),
        };

    let records = vec![
        CheckRecord::le(
            OVERCLAIM_NAMES[0],
            if identical { 0.0 } else { 1.0 },
            0.0,
            0.0,
        )
        .with_note("the estimator cannot distinguish the two executions"),
        CheckRecord::le(
            OVERCLAIM_NAMES[1],
            honest_max_min.value + gap,
            estimate.value,
            float_slack(estimate.value),
        )
        .with_witness(Witness {
            points: vec![estimate.minimizer.clone(), honest_max_min.minimizer.clone()],
            values: vec![estimate.value, honest_max_min.value],
        })
        .with_note("when the planted functions are faulty, the estimate overshoots by the gap"),
    ];
    Ok(OverclaimCheck {
        records,
        solves: Some(OverclaimSolves {
            estimate,
            honest_max_min,
        }),
    })
}

/// Samples point pairs and verifies that the honest max and honest rank both
/// move no faster than `lipschitz` allows. An undersized constant makes this
/// record fail, which is the intended signal.
pub fn check_honest_envelope_lipschitz(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    lipschitz: f64,
    pair_count: usize,
    seed: u64,
) -> Result<CheckRecord, VerifyError> {
    require_matching_truth(ensemble, truth)?;
    if pair_count == 0 {
        return Err(VerifyError::Misuse(
            "the Lipschitz check needs at least one sample pair".into(),
        ));
    }
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(VerifyError::Misuse(format!(
            "Lipschitz constant must be positive and finite, got {lipschitz}"
        )));
    }

    let domain = ensemble.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        domain
            .lower()
            .iter()
            .zip(domain.upper())
            .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
            .collect()
    };

    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair: Option<(Vec<f64>, Vec<f64>, f64, f64)> = None;
    let mut scale = 0.0f64;
    for _ in 0..pair_count {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let dist = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let pairs = [
            (honest_max(ensemble, truth, &x)?, honest_max(ensemble, truth, &y)?),
            (honest_rank(ensemble, truth, &x)?, honest_rank(ensemble, truth, &y)?),
        ];
        for (vx, vy) in pairs {
            scale = scale.max(vx.abs()).max(vy.abs());
            let violation = (vx - vy).abs() - lipschitz * dist;
            if violation > worst {
                worst = violation;
                worst_pair = Some((x.clone(), y.clone(), vx, vy));
            }
        }
    }

    let mut record = CheckRecord::le(
        "lipschitz/order_statistics",
        worst,
        0.0,
        float_slack(scale),
    )
    .with_note(format!(
        "largest |Δvalue| − L·distance over {pair_count} sampled pairs"
    ));
    if let Some((x, y, vx, vy)) = worst_pair {
        record = record.with_witness(Witness {
            points: vec![x, y],
            values: vec![vx, vy],
        });
    }
    Ok(record)
}

/// Verifies the approximation guarantee of a refinement run: at the
/// reported minimizer the honest rank stays within `1 / (1 - epsilon)` of
/// the best honest max, relaxed by `tau_abs / (1 - epsilon)` when the run
/// finished at the refinement floor. Budget-terminated runs carry no
/// guarantee and yield inconclusive records.
pub fn check_approx_guarantee(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    result: &ApproxResult,
    config: &ApproxConfig,
    tau_abs: f64,
    options: &SolveOptions,
) -> Result<Vec<CheckRecord>, VerifyError> {
    require_matching_truth(ensemble, truth)?;
    let factor_name = "approx/factor_bound";
    let count_name = "approx/count_bound";
    if result.terminated_by == Termination::Budget {
        let note = "refinement hit its cell budget before settling; no guarantee is claimed";
        return Ok(vec![
            CheckRecord::inconclusive(factor_name, note),
            CheckRecord::inconclusive(count_name, note),
        ]);
    }

    let honest_max_min =
        match catch_budget(minimize_subset_rank(ensemble, truth.honest(), 1, options))? {
            Ok(solve) => solve,
            Err(note) => {
                return Ok(vec![
                    CheckRecord::inconclusive(factor_name, note.clone()),
                    CheckRecord::inconclusive(count_name, note),
                ])
            }
        };
    let factor = 1.0 / (1.0 - config.epsilon);
    let mut bound = factor * honest_max_min.value;
    let mut note = format!(
        "honest rank at the approximate minimizer vs {:.6} × the best honest max",
        factor
    );
    if result.terminated_by == Termination::Floor {
        bound += factor * tau_abs;
        note.push_str(&format!(", relaxed by the floor ({tau_abs:.3e})"));
    }
    let rank_at = honest_rank(ensemble, truth, &result.minimizer)?;

    let profile = ensemble.values_at(&result.minimizer)?;
    let slack = float_slack(bound);
    let covered = truth
        .honest()
        .iter()
        .filter(|&&i| profile.values()[i] <= bound + slack)
        .count();
    let required = truth.honest().len() - ensemble.fault_budget().min(truth.honest().len());

    Ok(vec![
        CheckRecord::le(factor_name, rank_at, bound, slack).with_note(note),
        CheckRecord::count_at_least(count_name, required, covered)
            .with_note("honest functions within the factor bound at the approximate minimizer"),
    ])
}

/// Re-derives the approximation guarantee from a final partition instead of
/// trusting the solver's bookkeeping.
///
/// The first record replays the termination criterion cell by cell; the
/// second confirms that each cell's center value stays within Lipschitz
/// reach of the honest max sampled inside that cell.
pub fn check_partition_derivation(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    outcome: &RefineOutcome,
    config: &ApproxConfig,
    seed: u64,
    samples_per_cell: usize,
) -> Result<Vec<CheckRecord>, VerifyError> {
    require_matching_truth(ensemble, truth)?;
    let chain_name = "approx/criterion_chain";
    let envelope_name = "approx/center_vs_envelope";
    let mut records = Vec::new();

    if outcome.result.terminated_by == Termination::Criterion {
        let m = outcome.result.value;
        let factor = 1.0 / (1.0 - config.epsilon);
        let mut worst = f64::NEG_INFINITY;
        let mut scale = 0.0f64;
        for cell in &outcome.partition {
            let derived = factor * (cell.center_value - config.lipschitz * cell.diameter);
            scale = scale.max(derived.abs());
            worst = worst.max(m - derived);
        }
        records.push(
            CheckRecord::le(chain_name, worst, 0.0, float_slack(scale)).with_note(
                "every settled cell re-derives the factor bound for the winning center",
            ),
        );
    } else {
        records.push(CheckRecord::skipped(
            chain_name,
            format!(
                "criterion replay applies only to criterion-terminated runs, this one ended by {:?}",
                outcome.result.terminated_by
            ),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = ensemble.domain().dim();
    let mut worst = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    let mut worst_witness: Option<(Vec<f64>, f64)> = None;
    for cell in &outcome.partition {
        let mut sampled_min = f64::INFINITY;
        let mut consider = |point: &[f64]| -> Result<(), VerifyError> {
            let hm = honest_max(ensemble, truth, point)?;
            sampled_min = sampled_min.min(hm);
            Ok(())
        };
        consider(&cell.center)?;
        if dim <= 10 {
            for mask in 0..(1usize << dim) {
                let corner: Vec<f64> = (0..dim)
                    .map(|axis| {
                        if mask & (1 << axis) == 0 {
                            cell.lower[axis]
                        } else {
                            cell.upper[axis]
                        }
                    })
                    .collect();
                consider(&corner)?;
            }
        }
        for _ in 0..samples_per_cell {
            let point: Vec<f64> = cell
                .lower
                .iter()
                .zip(&cell.upper)
                .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
                .collect();
            consider(&point)?;
        }
        let reach = sampled_min + config.lipschitz * cell.diameter;
        scale = scale.max(reach.abs()).max(cell.center_value.abs());
        let excess = cell.center_value - reach;
        if excess > worst {
            worst = excess;
            worst_witness = Some((cell.center.clone(), cell.center_value));
        }
    }
    let mut record = CheckRecord::le(envelope_name, worst, 0.0, float_slack(scale)).with_note(
        "cell centers stay within Lipschitz reach of the honest max sampled in their cell",
    );
    if let Some((point, value)) = worst_witness {
        record = record.with_witness(Witness {
            points: vec![point],
            values: vec![value],
        });
    }
    records.push(record);

    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::refine;
    use crate::functions::{make_above_all_adversary, make_below_all_adversary};
    use std::collections::BTreeSet;

    fn cone1(center: f64, slope: f64, offset: f64) -> CostFunctionSpec {
        CostFunctionSpec::Cone {
            center: vec![center],
            slope,
            offset,
        }
    }

    fn interval() -> Hypercube {
        Hypercube::new(vec![-2.0], vec![2.0]).unwrap()
    }

    fn anchor_ensemble() -> (Ensemble, GroundTruth) {
        let honest = vec![cone1(0.0, 1.0, 0.0), cone1(1.0, 1.0, 0.0)];
        let adv = make_above_all_adversary(&honest, 0.5).unwrap();
        let ens = Ensemble::new(
            vec![honest[0].clone(), honest[1].clone(), adv],
            1,
            interval(),
            true,
        )
        .unwrap();
        let truth = GroundTruth::for_ensemble(&ens, BTreeSet::from([2])).unwrap();
        (ens, truth)
    }

    fn below_ensemble() -> (Ensemble, GroundTruth) {
        let honest = vec![cone1(0.0, 1.0, 2.0), cone1(1.0, 1.0, 2.0)];
        let adv = make_below_all_adversary(&honest, 1.0, &interval(), true).unwrap();
        let ens = Ensemble::new(
            vec![honest[0].clone(), honest[1].clone(), adv],
            1,
            interval(),
            true,
        )
        .unwrap();
        let truth = GroundTruth::for_ensemble(&ens, BTreeSet::from([2])).unwrap();
        (ens, truth)
    }

    #[test]
    fn sandwich_chain_on_the_cone_anchor() {
        let (ens, truth) = anchor_ensemble();
        let check = check_sandwich_bounds(&ens, &truth, &SolveOptions::default()).unwrap();
        assert!(check.records.iter().all(CheckRecord::passed));
        let solves = check.solves.unwrap();
        // The dominating fault collapses the objective onto the honest max,
        // which bottoms out midway between the two cone centers.
        assert_eq!(solves.objective.value, 0.5);
        assert_eq!(solves.objective.minimizer, vec![0.5]);
        assert_eq!(solves.honest_max_min.value, 0.5);
        assert_eq!(solves.honest_max_min.minimizer, vec![0.5]);
        assert_eq!(solves.honest_rank_min.value, 0.0);
        assert_eq!(solves.honest_rank_min.minimizer, vec![0.0]);
        // The chain pinches to 0 <= 0.5 <= 0.5 <= 0.5.
        assert_eq!(check.records[0].gap, 0.0);
        assert_eq!(check.records[1].gap, 0.0);
        assert_eq!(check.records[2].gap, 0.5);
    }

    #[test]
    fn sandwich_chain_with_a_lowballing_fault() {
        let (ens, truth) = below_ensemble();
        let check = check_sandwich_bounds(&ens, &truth, &SolveOptions::default()).unwrap();
        assert!(check.records.iter().all(CheckRecord::passed));
        let solves = check.solves.unwrap();
        assert_eq!(solves.objective.value, 2.0);
        assert_eq!(solves.objective.minimizer, vec![0.0]);
        assert_eq!(solves.honest_max_min.value, 2.5);
        assert_eq!(solves.honest_rank_min.value, 2.0);
    }

    #[test]
    fn sandwich_collapses_without_faults() {
        let ens = Ensemble::new(vec![cone1(0.3, 1.0, 0.0)], 0, interval(), true).unwrap();
        let truth = GroundTruth::for_ensemble(&ens, BTreeSet::new()).unwrap();
        let check = check_sandwich_bounds(&ens, &truth, &SolveOptions::default()).unwrap();
        assert!(check.records.iter().all(CheckRecord::passed));
        let solves = check.solves.unwrap();
        // The grid node nearest 0.3 carries a sub-ulp residue, but all three
        // aggregates select the same value bit for bit.
        assert!(solves.objective.value.abs() < 1e-12);
        assert_eq!(solves.objective.value, solves.honest_max_min.value);
        assert_eq!(solves.objective.value, solves.honest_rank_min.value);
    }

    #[test]
    fn coverage_counts_honest_functions_under_the_value() {
        // Three plain cones, the third treated as the fault: the objective
        // ties at ±0.5 and the smaller grid index wins.
        let specs = vec![
            cone1(0.0, 1.0, 0.0),
            cone1(1.0, 1.0, 0.0),
            cone1(-1.0, 1.0, 0.0),
        ];
        let ens = Ensemble::new(specs, 1, interval(), true).unwrap();
        let truth = GroundTruth::for_ensemble(&ens, BTreeSet::from([2])).unwrap();
        let check = check_sandwich_bounds(&ens, &truth, &SolveOptions::default()).unwrap();
        let objective = check.solves.unwrap().objective;
        assert_eq!(objective.minimizer, vec![-0.5]);
        let record = check_coverage_bound(&ens, &truth, &objective).unwrap();
        assert!(record.passed());
        // At -0.5 the honest values are 0.5 and 1.5; exactly one sits at or
        // below the objective value, meeting the |H| - f requirement with no
        // room to spare.
        assert_eq!(record.lhs, 1.0);
        assert_eq!(record.rhs, 1.0);
        let witness = record.witness.unwrap();
        assert_eq!(witness.values, vec![0.5, 1.5]);
    }

    #[test]
    fn tightness_above_collapses_exactly() {
        let (ens, truth) = anchor_ensemble();
        let records =
            check_dominance_tightness(Some((&ens, &truth)), None, &SolveOptions::default())
                .unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(CheckRecord::passed));
        assert_eq!(records[0].lhs, 0.0);
        assert_eq!(records[1].lhs, 0.0);
    }

    #[test]
    fn tightness_below_collapses_exactly() {
        let (ens, truth) = below_ensemble();
        let records =
            check_dominance_tightness(None, Some((&ens, &truth)), &SolveOptions::default())
                .unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(CheckRecord::passed));
        assert_eq!(records[0].lhs, 0.0);
        assert_eq!(records[1].lhs, 0.0);
    }

    #[test]
    fn tightness_skips_when_preconditions_fail() {
        // Above with fewer dominating faults than the budget: the rank
        // shifts and the collapse argument does not apply.
        let honest = vec![
            cone1(0.0, 1.0, 0.0),
            cone1(1.0, 1.0, 0.0),
            cone1(-1.0, 1.0, 0.0),
            cone1(0.5, 1.0, 0.0),
        ];
        let adv = make_above_all_adversary(&honest, 0.5).unwrap();
        let mut specs = honest.clone();
        specs.push(adv);
        let ens = Ensemble::new(specs, 2, interval(), true).unwrap();
        let truth = GroundTruth::for_ensemble(&ens, BTreeSet::from([4])).unwrap();
        let records =
            check_dominance_tightness(Some((&ens, &truth)), None, &SolveOptions::default())
                .unwrap();
        assert!(records
            .iter()
            .all(|r| r.status == CheckStatus::Skipped));

        // A fault that does not dominate is classified, not failed.
        let (ens, _) = anchor_ensemble();
        let wrong = GroundTruth::for_ensemble(&ens, BTreeSet::from([0])).unwrap();
        let records =
            check_dominance_tightness(Some((&ens, &wrong)), None, &SolveOptions::default())
                .unwrap();
        assert!(records
            .iter()
            .all(|r| r.status == CheckStatus::Skipped));
        assert!(records[0].note.as_ref().unwrap().contains("dominate"));
    }

    #[test]
    fn overclaim_overshoots_by_the_planted_gap() {
        let tail = vec![cone1(0.0, 1.0, 1.0), cone1(1.0, 1.0, 1.0)];
        let check = check_rank_overclaim(
            &tail,
            1,
            1,
            10.0,
            0.5,
            &interval(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(check.records.iter().all(CheckRecord::passed));
        let solves = check.solves.unwrap();
        assert_eq!(solves.honest_max_min.value, 1.5);
        assert_eq!(solves.estimate.value, 12.0);

        let wide = check_rank_overclaim(
            &tail,
            1,
            1,
            100.0,
            0.5,
            &interval(),
            &SolveOptions::default(),
        )
        .unwrap();
        let wide_solves = wide.solves.unwrap();
        assert_eq!(wide_solves.estimate.value, 102.0);
        // The overshoot scales one-for-one with the planted gap.
        assert_eq!(wide_solves.estimate.value - solves.estimate.value, 90.0);
    }

    #[test]
    fn overclaim_rejects_sound_ranks() {
        let tail = vec![cone1(0.0, 1.0, 1.0), cone1(1.0, 1.0, 1.0)];
        let err = check_rank_overclaim(
            &tail,
            1,
            2,
            10.0,
            0.5,
            &interval(),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, VerifyError::Misuse(_)));

        let short = vec![cone1(0.0, 1.0, 1.0)];
        let err = check_rank_overclaim(
            &short,
            1,
            1,
            10.0,
            0.5,
            &interval(),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, VerifyError::Misuse(_)));
    }

    #[test]
    fn lipschitz_check_passes_at_the_true_constant_and_fails_below_it() {
        let (ens, truth) = anchor_ensemble();
        let pass = check_honest_envelope_lipschitz(&ens, &truth, 1.0, 2_000, 11).unwrap();
        assert!(pass.passed());
        let fail = check_honest_envelope_lipschitz(&ens, &truth, 0.5, 2_000, 11).unwrap();
        assert_eq!(fail.status, CheckStatus::Fail);
        assert!(fail.witness.is_some());
    }

    #[test]
    fn approx_guarantee_holds_on_the_anchor() {
        let (ens, truth) = anchor_ensemble();
        let config = ApproxConfig::new(0.1, 1.0).unwrap();
        let outcome = refine(&ens, &config).unwrap();
        assert_eq!(outcome.result.terminated_by, Termination::Criterion);
        let records = check_approx_guarantee(
            &ens,
            &truth,
            &outcome.result,
            &config,
            outcome.tau_abs,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(records.iter().all(CheckRecord::passed));
        assert!(records[0].lhs <= 0.5 / 0.9 + 1e-9);
    }

    #[test]
    fn approx_guarantee_is_inconclusive_after_a_budget_stop() {
        let (ens, truth) = anchor_ensemble();
        let mut config = ApproxConfig::new(0.05, 1.0).unwrap();
        config.max_cells = 4;
        let outcome = refine(&ens, &config).unwrap();
        assert_eq!(outcome.result.terminated_by, Termination::Budget);
        let records = check_approx_guarantee(
            &ens,
            &truth,
            &outcome.result,
            &config,
            outcome.tau_abs,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(records
            .iter()
            .all(|r| r.status == CheckStatus::Inconclusive));
    }

    #[test]
    fn partition_derivation_replays_the_criterion() {
        let (ens, truth) = anchor_ensemble();
        let config = ApproxConfig::new(0.1, 1.0).unwrap();
        let outcome = refine(&ens, &config).unwrap();
        let records =
            check_partition_derivation(&ens, &truth, &outcome, &config, 3, 2).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(CheckRecord::passed));

        let mut budget = ApproxConfig::new(0.05, 1.0).unwrap();
        budget.max_cells = 4;
        let stopped = refine(&ens, &budget).unwrap();
        let records =
            check_partition_derivation(&ens, &truth, &stopped, &budget, 3, 2).unwrap();
        assert_eq!(records[0].status, CheckStatus::Skipped);
        assert!(records[1].passed());
    }

    #[test]
    fn report_tally_and_outcome() {
        let mut report = VerificationReport::new("unit");
        report.push(CheckRecord::le("a", 1.0, 2.0, 0.0));
        report.push(CheckRecord::skipped("b", "not applicable"));
        report.push(CheckRecord::inconclusive("c", "solver stopped early"));
        assert!(report.all_passed());
        assert_eq!(report.tally(), (1, 0, 1, 1));
        report.push(CheckRecord::le("d", 3.0, 2.0, 0.5));
        assert!(!report.all_passed());
        assert_eq!(report.tally(), (1, 1, 1, 1));

        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"status\":\"pass\""));
        assert!(json.contains("\"status\":\"fail\""));
        assert!(json.contains("\"status\":\"skipped\""));
    }

    #[test]
    fn mismatched_truth_is_misuse() {
        let (ens, _) = anchor_ensemble();
        let other = GroundTruth::new(5, 1, BTreeSet::from([4])).unwrap();
        let err = check_sandwich_bounds(&ens, &other, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, VerifyError::Misuse(_)));
    }

    #[test]
    fn exhausted_oracles_go_inconclusive_not_silent() {
        let (ens, truth) = anchor_ensemble();
        let mut starved = SolveOptions::default();
        starved.eval_budget = 10;

        let check = check_sandwich_bounds(&ens, &truth, &starved).unwrap();
        assert!(check.solves.is_none());
        assert_eq!(check.records.len(), 3);
        assert!(check
            .records
            .iter()
            .all(|r| r.status == CheckStatus::Inconclusive));

        let records =
            check_dominance_tightness(Some((&ens, &truth)), None, &starved).unwrap();
        assert!(records
            .iter()
            .all(|r| r.status == CheckStatus::Inconclusive));

        let tail = vec![cone1(0.0, 1.0, 1.0), cone1(1.0, 1.0, 1.0)];
        let check =
            check_rank_overclaim(&tail, 1, 1, 10.0, 0.5, &interval(), &starved).unwrap();
        assert!(check.solves.is_none());
        assert!(check
            .records
            .iter()
            .all(|r| r.status == CheckStatus::Inconclusive));
    }
}
