//! Rank statistics over ensembles of cost functions.
//!
//! `rank_k` selects the k-th largest of a list of values (duplicated values
//! occupy consecutive ranks, so `rank_k` and `rank_{k+1}` may coincide).
//! Built on top of it are the three aggregate objectives:
//!
//! * the ensemble objective: the `(f+1)`-th largest of all `n` values,
//!   computable without knowing which functions are honest;
//! * the honest max: the largest value among the honest functions;
//! * the honest rank: the `(f+1)`-th largest value among the honest
//!   functions.
//!
//! Pointwise, `honest_rank <= objective <= honest_max` whenever at most `f`
//! functions are faulty.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functions::{CostFunctionSpec, SpecError};

/// Axis-aligned box `[lower_t, upper_t]` for every axis `t`, with
/// `lower_t < upper_t` and dimension at least 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HypercubeRaw")]
pub struct Hypercube {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct HypercubeRaw {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<HypercubeRaw> for Hypercube {
    type Error = BuildError;

    fn try_from(raw: HypercubeRaw) -> Result<Self, BuildError> {
        Hypercube::new(raw.lower, raw.upper)
    }
}

impl Hypercube {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, BuildError> {
        if lower.is_empty() {
            return Err(BuildError::BadDomain("domain must have dimension at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(BuildError::BadDomain(format!(
                "lower has {} axes, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for t in 0..lower.len() {
            if !lower[t].is_finite() || !upper[t].is_finite() {
                return Err(BuildError::BadDomain(format!("axis {t} bounds must be finite")));
            }
            if lower[t] >= upper[t] {
                return Err(BuildError::BadDomain(format!(
                    "axis {t}: lower {} must be strictly below upper {}",
                    lower[t], upper[t]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    /// Distance from `point` to the farthest corner of the box.
    pub fn max_distance_to(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.dim());
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(point)
            .map(|((lo, hi), p)| {
                let d = (p - lo).abs().max((hi - p).abs());
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// True when `x` lies within `tol` of at least one face of the box.
    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(v, (lo, hi))| (v - lo).abs() <= tol || (hi - v).abs() <= tol)
    }
}

/// Construction error for domains, ensembles, and ground-truth labelings.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid domain: {0}")]
    BadDomain(String),
    #[error("tolerating {fault_budget} faults requires at least {min} functions, got {n}")]
    TooFewFunctions {
        n: usize,
        fault_budget: usize,
        min: usize,
    },
    /// `index` is the 1-based function number used in reports.
    #[error("cost function {index}: {source}")]
    BadSpec { index: usize, source: SpecError },
    /// `index` is the 1-based function number used in reports.
    #[error("cost function {index} has dimension {spec_dim}, domain has dimension {domain_dim}")]
    DimensionMismatch {
        index: usize,
        spec_dim: usize,
        domain_dim: usize,
    },
    #[error("faulty set has {size} indices, exceeding the fault budget {fault_budget}")]
    TooManyFaulty { size: usize, fault_budget: usize },
    #[error("faulty index {index} out of range for {n} functions")]
    FaultyIndexOutOfRange { index: usize, n: usize },
}

/// A cost function produced a non-finite value. `index` is the zero-based
/// position in the ensemble's spec list; messages print it 1-based to match
/// report numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalError {
    pub index: usize,
    pub point: Vec<f64>,
    pub value: f64,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cost function {} produced non-finite value {} at {:?}",
            self.index + 1,
            self.value,
            self.point
        )
    }
}

impl std::error::Error for EvalError {}

/// The `n` function values observed at a single point, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueProfile {
    point: Vec<f64>,
    values: Vec<f64>,
}

impl ValueProfile {
    /// Rejects non-finite values, naming the offending function.
    pub fn new(point: Vec<f64>, values: Vec<f64>) -> Result<Self, EvalError> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(EvalError {
                    index: i,
                    point,
                    value: *v,
                });
            }
        }
        Ok(Self { point, values })
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// k-th largest observed value.
    pub fn rank(&self, k: usize) -> f64 {
        rank_k(&self.values, k)
    }
}

/// k-th largest element of `values`, `k` counted from 1.
///
/// Duplicated values occupy consecutive ranks: for `[5, 5, 1]` both rank 1
/// and rank 2 are 5.
///
/// # Panics
///
/// Panics when `k` is 0 or exceeds `values.len()`. Callers must supply
/// finite values; the [`ValueProfile`] boundary rejects non-finite input.
pub fn rank_k(values: &[f64], k: usize) -> f64 {
    let mut buf = values.to_vec();
    rank_k_in_place(&mut buf, k)
}

/// Same as [`rank_k`] but reorders the supplied buffer instead of allocating.
pub fn rank_k_in_place(values: &mut [f64], k: usize) -> f64 {
    assert!(
        k >= 1 && k <= values.len(),
        "rank {k} out of range for {} values",
        values.len()
    );
    debug_assert!(values.iter().all(|v| v.is_finite()), "rank over non-finite values");
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

/// Zero-based index of the element holding rank `k`. At equal values the
/// smaller original index takes the higher rank.
///
/// # Panics
///
/// Panics when `k` is out of range, as in [`rank_k`].
pub fn rank_k_index(values: &[f64], k: usize) -> usize {
    assert!(
        k >= 1 && k <= values.len(),
        "rank {k} out of range for {} values",
        values.len()
    );
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.select_nth_unstable_by(k - 1, |&a, &b| {
        values[b].total_cmp(&values[a]).then(a.cmp(&b))
    });
    order[k - 1]
}

/// k-th largest among the values selected by `subset` (zero-based indices
/// into `values`).
pub fn rank_k_subset(values: &[f64], subset: &BTreeSet<usize>, k: usize) -> f64 {
    let mut buf: Vec<f64> = subset.iter().map(|&i| values[i]).collect();
    rank_k_in_place(&mut buf, k)
}

/// An ordered list of cost functions over a common domain, together with the
/// fault budget `f`. Solvers see only this; they never learn which functions
/// are honest.
#[derive(Debug, Clone)]
pub struct Ensemble {
    specs: Vec<CostFunctionSpec>,
    fault_budget: usize,
    domain: Hypercube,
    non_negative: bool,
}

impl Ensemble {
    /// Validates every spec, checks dimensions against the domain, and
    /// requires `n >= 2f + 1`.
    ///
    /// `non_negative` declares that every honest function is non-negative on
    /// the domain; the approximate solver requires it. The declaration is
    /// checked against ground truth by the harness, not here, because the
    /// ensemble does not know which functions are honest.
    pub fn new(
        specs: Vec<CostFunctionSpec>,
        fault_budget: usize,
        domain: Hypercube,
        non_negative: bool,
    ) -> Result<Self, BuildError> {
        let n = specs.len();
        let min = 2 * fault_budget + 1;
        if n < min {
            return Err(BuildError::TooFewFunctions {
                n,
                fault_budget,
                min,
            });
        }
        for (i, spec) in specs.iter().enumerate() {
            let spec_dim = spec
                .validate()
                .map_err(|source| BuildError::BadSpec { index: i + 1, source })?;
            if spec_dim != domain.dim() {
                return Err(BuildError::DimensionMismatch {
                    index: i + 1,
                    spec_dim,
                    domain_dim: domain.dim(),
                });
            }
        }
        Ok(Self {
            specs,
            fault_budget,
            domain,
            non_negative,
        })
    }

    /// Number of functions `n`.
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Fault budget `f`.
    pub fn fault_budget(&self) -> usize {
        self.fault_budget
    }

    pub fn domain(&self) -> &Hypercube {
        &self.domain
    }

    pub fn non_negative(&self) -> bool {
        self.non_negative
    }

    pub fn specs(&self) -> &[CostFunctionSpec] {
        &self.specs
    }

    /// Evaluates every function at `x`, rejecting non-finite values.
    pub fn values_at(&self, x: &[f64]) -> Result<ValueProfile, EvalError> {
        let mut values = Vec::with_capacity(self.len());
        self.values_into(x, &mut values)?;
        Ok(ValueProfile {
            point: x.to_vec(),
            values,
        })
    }

    /// Evaluates every function at `x` into a reusable buffer.
    pub fn values_into(&self, x: &[f64], buf: &mut Vec<f64>) -> Result<(), EvalError> {
        buf.clear();
        for (i, spec) in self.specs.iter().enumerate() {
            let v = spec.evaluate(x);
            if !v.is_finite() {
                return Err(EvalError {
                    index: i,
                    point: x.to_vec(),
                    value: v,
                });
            }
            buf.push(v);
        }
        Ok(())
    }

    /// The ensemble objective: the `(f+1)`-th largest of the `n` values at
    /// `x`. With `f = 0` this is the plain maximum.
    pub fn objective(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut buf = Vec::with_capacity(self.len());
        self.objective_with(x, &mut buf)
    }

    /// [`Ensemble::objective`] with a caller-supplied scratch buffer.
    pub fn objective_with(&self, x: &[f64], buf: &mut Vec<f64>) -> Result<f64, EvalError> {
        self.values_into(x, buf)?;
        Ok(rank_k_in_place(buf, self.fault_budget + 1))
    }

    /// Largest declared Lipschitz bound across all functions on the domain.
    pub fn max_lipschitz_bound(&self) -> f64 {
        self.specs
            .iter()
            .map(|s| s.lipschitz_bound(&self.domain))
            .fold(0.0, f64::max)
    }

    /// Largest declared Lipschitz bound across the selected functions.
    pub fn subset_lipschitz_bound(&self, subset: &BTreeSet<usize>) -> f64 {
        subset
            .iter()
            .map(|&i| self.specs[i].lipschitz_bound(&self.domain))
            .fold(0.0, f64::max)
    }
}

/// Which functions are faulty, known to the test harness and hidden from
/// solvers. Indices are zero-based positions in the ensemble's spec list;
/// reports print them 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    faulty: BTreeSet<usize>,
    honest: BTreeSet<usize>,
    n: usize,
}

impl GroundTruth {
    /// Requires `|faulty| <= fault_budget` and every index below `n`. The
    /// honest set is the complement, so it always has at least `n - f >=
    /// f + 1` members.
    pub fn new(n: usize, fault_budget: usize, faulty: BTreeSet<usize>) -> Result<Self, BuildError> {
        if faulty.len() > fault_budget {
            return Err(BuildError::TooManyFaulty {
                size: faulty.len(),
                fault_budget,
            });
        }
        if let Some(&bad) = faulty.iter().find(|&&i| i >= n) {
            return Err(BuildError::FaultyIndexOutOfRange { index: bad, n });
        }
        let honest: BTreeSet<usize> = (0..n).filter(|i| !faulty.contains(i)).collect();
        Ok(Self { faulty, honest, n })
    }

    /// Labeling for an ensemble, validated against its size and budget.
    pub fn for_ensemble(ensemble: &Ensemble, faulty: BTreeSet<usize>) -> Result<Self, BuildError> {
        Self::new(ensemble.len(), ensemble.fault_budget(), faulty)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn faulty(&self) -> &BTreeSet<usize> {
        &self.faulty
    }

    pub fn honest(&self) -> &BTreeSet<usize> {
        &self.honest
    }
}

/// Largest honest value at `x`: what a max-aggregating consumer of the
/// honest functions would pay.
pub fn honest_max(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    x: &[f64],
) -> Result<f64, EvalError> {
    subset_rank_value(ensemble, truth.honest(), 1, x)
}

/// `(f+1)`-th largest honest value at `x`. Defined because the honest set
/// has at least `f + 1` members under the ensemble invariants.
pub fn honest_rank(
    ensemble: &Ensemble,
    truth: &GroundTruth,
    x: &[f64],
) -> Result<f64, EvalError> {
    subset_rank_value(ensemble, truth.honest(), ensemble.fault_budget() + 1, x)
}

/// k-th largest value at `x` among the functions selected by `subset`.
pub fn subset_rank_value(
    ensemble: &Ensemble,
    subset: &BTreeSet<usize>,
    k: usize,
    x: &[f64],
) -> Result<f64, EvalError> {
    assert!(!subset.is_empty(), "subset must not be empty");
    assert!(
        k >= 1 && k <= subset.len(),
        "rank {k} out of range for subset of {}",
        subset.len()
    );
    let mut buf = Vec::with_capacity(subset.len());
    for &i in subset {
        let v = ensemble.specs()[i].evaluate(x);
        if !v.is_finite() {
            return Err(EvalError {
                index: i,
                point: x.to_vec(),
                value: v,
            });
        }
        buf.push(v);
    }
    Ok(rank_k_in_place(&mut buf, k))
}
