//! Scenario files and their expansion into concrete ensembles.
//!
//! A scenario lists honest cost functions explicitly and describes faulty
//! ones as directives (`above_all`, `below_all`, `gap`, or a fixed spec).
//! Expansion appends the constructed faulty functions after the honest ones,
//! records their indices as ground truth, and resolves solver and verifier
//! settings against defaults.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use bft_minmax::approx::DEFAULT_MAX_CELLS;
use bft_minmax::exact::DEFAULT_EVAL_BUDGET;
use bft_minmax::functions::{
    check_non_negative, make_above_all_adversary, make_below_all_adversary, make_gap_adversary,
    SpecError,
};
use bft_minmax::rank::BuildError;
use bft_minmax::verifier::DEFAULT_PAIR_COUNT;
use bft_minmax::{CostFunctionSpec, Ensemble, GroundTruth, Hypercube};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_VERIFY_SEED: u64 = 7;
pub const DEFAULT_OVERCLAIM_GAPS: [f64; 2] = [10.0, 100.0];

/// Pipeline stages a scenario can request. The run order is always
/// exact, then approx, then verify, regardless of how they are listed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Exact,
    Approx,
    Verify,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Exact => write!(f, "exact"),
            Stage::Approx => write!(f, "approx"),
            Stage::Verify => write!(f, "verify"),
        }
    }
}

/// Deduplicate and put stages in run order.
pub fn canonical_stages(stages: &[Stage]) -> Vec<Stage> {
    let mut out: Vec<Stage> = stages.to_vec();
    out.sort();
    out.dedup();
    out
}

/// A faulty function to plant, described relative to the honest ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum AdversaryDirective {
    /// Sits `delta` above the honest upper envelope everywhere.
    AboveAll {
        delta: f64,
        #[serde(default = "one")]
        count: usize,
    },
    /// Sits `delta` below the honest lower envelope everywhere.
    BelowAll {
        delta: f64,
        #[serde(default = "one")]
        count: usize,
    },
    /// Sits `gap + delta` above the honest upper envelope, used to
    /// demonstrate rank overclaims.
    Gap {
        gap: f64,
        delta: f64,
        #[serde(default = "one")]
        count: usize,
    },
    /// An explicit cost function spec, used verbatim.
    Fixed { spec: CostFunctionSpec },
}

fn one() -> usize {
    1
}

impl AdversaryDirective {
    pub fn count(&self) -> usize {
        match self {
            AdversaryDirective::AboveAll { count, .. }
            | AdversaryDirective::BelowAll { count, .. }
            | AdversaryDirective::Gap { count, .. } => *count,
            AdversaryDirective::Fixed { .. } => 1,
        }
    }

    fn expand(
        &self,
        honest: &[CostFunctionSpec],
        domain: &Hypercube,
        floor_at_zero: bool,
    ) -> Result<Vec<CostFunctionSpec>, SpecError> {
        let spec = match self {
            AdversaryDirective::AboveAll { delta, .. } => {
                make_above_all_adversary(honest, *delta)?
            }
            AdversaryDirective::BelowAll { delta, .. } => {
                make_below_all_adversary(honest, *delta, domain, floor_at_zero)?
            }
            AdversaryDirective::Gap { gap, delta, .. } => {
                make_gap_adversary(honest, *gap, *delta)?
            }
            AdversaryDirective::Fixed { spec } => {
                spec.validate()?;
                spec.clone()
            }
        };
        Ok(vec![spec; self.count()])
    }
}

/// Solver settings, all optional in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<Stage>>,
}

impl SolverSettings {
    fn is_default(&self) -> bool {
        *self == SolverSettings::default()
    }
}

/// Verifier settings, all optional in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overclaim_gaps: Option<Vec<f64>>,
    /// Overrides the constant handed to the Lipschitz order-statistic check.
    /// Unlike `solver.lipschitz` it may be set below the true bound, which
    /// makes the check fail by design; useful for sensitivity tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl VerifySettings {
    fn is_default(&self) -> bool {
        *self == VerifySettings::default()
    }
}

/// One scenario file, as parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub fault_budget: usize,
    #[serde(default)]
    pub non_negative: bool,
    pub domain: Hypercube,
    pub honest: Vec<CostFunctionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adversaries: Vec<AdversaryDirective>,
    #[serde(default, skip_serializing_if = "SolverSettings::is_default")]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "VerifySettings::is_default")]
    pub verify: VerifySettings,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("scenario lists no honest functions")]
    NoHonest,
    #[error("honest function {index} is invalid: {source}")]
    HonestSpec {
        index: usize,
        #[source]
        source: SpecError,
    },
    #[error("adversary directive {index} is invalid: {source}")]
    AdversarySpec {
        index: usize,
        #[source]
        source: SpecError,
    },
    #[error("adversary directive {index} has count 0")]
    EmptyDirective { index: usize },
    #[error("{total} adversaries exceed the fault budget {fault_budget}")]
    TooManyAdversaries { total: usize, fault_budget: usize },
    #[error("solver.stages is empty")]
    NoStages,
    #[error("the approx stage requires non_negative = true")]
    ApproxNeedsNonNegative,
    #[error(
        "solver.lipschitz = {given} is below the honest envelope bound {required}; \
         the refinement guarantee needs a true Lipschitz constant"
    )]
    LipschitzTooSmall { given: f64, required: f64 },
    #[error("solver.epsilon must lie strictly between 0 and 1, got {0}")]
    BadEpsilon(f64),
    #[error("verify.overclaim_gaps entries must be positive and finite, got {0}")]
    BadOverclaimGap(f64),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// A scenario expanded into runnable form: the ensemble, the planted ground
/// truth, and every setting resolved to a concrete value.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub ensemble: Ensemble,
    pub truth: GroundTruth,
    pub resolution: Option<usize>,
    pub epsilon: f64,
    pub lipschitz: f64,
    pub verify_lipschitz: f64,
    pub max_cells: usize,
    pub eval_budget: u64,
    pub parallel: bool,
    pub stages: Vec<Stage>,
    pub verify_pairs: usize,
    pub verify_seed: u64,
    pub overclaim_gaps: Vec<f64>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, Box<toml::de::Error>> {
        toml::from_str(text).map_err(Box::new)
    }

    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string_pretty(self)
    }

    /// Build the ensemble and resolve all settings.
    pub fn expand(&self) -> Result<LoadedScenario, ScenarioError> {
        if self.honest.is_empty() {
            return Err(ScenarioError::NoHonest);
        }
        let mut faulty_specs = Vec::new();
        for (index, directive) in self.adversaries.iter().enumerate() {
            if directive.count() == 0 {
                return Err(ScenarioError::EmptyDirective { index: index + 1 });
            }
            let expanded = directive
                .expand(&self.honest, &self.domain, self.non_negative)
                .map_err(|source| ScenarioError::AdversarySpec {
                    index: index + 1,
                    source,
                })?;
            faulty_specs.extend(expanded);
        }
        if faulty_specs.len() > self.fault_budget {
            return Err(ScenarioError::TooManyAdversaries {
                total: faulty_specs.len(),
                fault_budget: self.fault_budget,
            });
        }

        let honest_count = self.honest.len();
        let mut specs = self.honest.clone();
        specs.extend(faulty_specs);
        let ensemble = Ensemble::new(
            specs,
            self.fault_budget,
            self.domain.clone(),
            self.non_negative,
        )?;
        if self.non_negative {
            for (index, spec) in self.honest.iter().enumerate() {
                check_non_negative(spec, &self.domain).map_err(|source| {
                    ScenarioError::HonestSpec {
                        index: index + 1,
                        source,
                    }
                })?;
            }
        }
        let faulty: BTreeSet<usize> = (honest_count..ensemble.len()).collect();
        let truth = GroundTruth::for_ensemble(&ensemble, faulty)?;

        let honest_bound = self
            .honest
            .iter()
            .map(|spec| spec.lipschitz_bound(&self.domain))
            .fold(0.0_f64, f64::max);
        let lipschitz = match self.solver.lipschitz {
            Some(given) if given < honest_bound => {
                return Err(ScenarioError::LipschitzTooSmall {
                    given,
                    required: honest_bound,
                });
            }
            Some(given) => given,
            None => honest_bound,
        };

        let epsilon = self.solver.epsilon.unwrap_or(DEFAULT_EPSILON);
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
            return Err(ScenarioError::BadEpsilon(epsilon));
        }

        let stages = canonical_stages(
            self.solver
                .stages
                .as_deref()
                .unwrap_or(&[Stage::Exact, Stage::Verify]),
        );
        if stages.is_empty() {
            return Err(ScenarioError::NoStages);
        }
        if stages.contains(&Stage::Approx) && !self.non_negative {
            return Err(ScenarioError::ApproxNeedsNonNegative);
        }

        let overclaim_gaps = self
            .verify
            .overclaim_gaps
            .clone()
            .unwrap_or_else(|| DEFAULT_OVERCLAIM_GAPS.to_vec());
        for &gap in &overclaim_gaps {
            if !gap.is_finite() || gap <= 0.0 {
                return Err(ScenarioError::BadOverclaimGap(gap));
            }
        }

        Ok(LoadedScenario {
            resolution: self.solver.resolution,
            epsilon,
            lipschitz,
            verify_lipschitz: self.verify.lipschitz.unwrap_or(lipschitz),
            max_cells: self.solver.max_cells.unwrap_or(DEFAULT_MAX_CELLS),
            eval_budget: self.solver.eval_budget.unwrap_or(DEFAULT_EVAL_BUDGET),
            parallel: self.solver.parallel.unwrap_or(true),
            stages,
            verify_pairs: self.verify.pairs.unwrap_or(DEFAULT_PAIR_COUNT),
            verify_seed: self.verify.seed.or(self.seed).unwrap_or(DEFAULT_VERIFY_SEED),
            overclaim_gaps,
            scenario: self.clone(),
            ensemble,
            truth,
        })
    }
}

/// Read and expand a scenario file.
pub fn load(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = Scenario::from_toml(&text).map_err(|source| ScenarioError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    scenario.expand()
}
