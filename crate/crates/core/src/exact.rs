//! Certified dense-grid minimization.
//!
//! `minimize_objective` scans a regular grid and returns the node with the
//! smallest ensemble objective; `minimize_subset_rank` does the same for the
//! k-th largest value over any function subset, which is how the verifier
//! obtains its ground-truth oracles. Ties go to the lexicographically
//! smallest grid index, and the parallel reduction is constructed to return
//! exactly what a sequential left-to-right scan would.
//!
//! When every function carries a finite Lipschitz bound `L` on the domain,
//! the grid minimum overshoots the true minimum by at most `L` times half
//! the grid-cell diagonal; that bound ships with the result as a
//! certificate.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::Grid;
use crate::rank::{rank_k_in_place, Ensemble, EvalError};

/// Default cap on the number of grid nodes a single solve may evaluate.
pub const DEFAULT_EVAL_BUDGET: u64 = 10_000_000;

/// Default points per axis: dense in one dimension, moderate in two, and
/// chosen to keep the total near one million nodes beyond that.
pub fn default_resolution(dim: usize) -> usize {
    match dim {
        0 => unreachable!("domains have dimension at least 1"),
        1 => 4001,
        2 => 201,
        d => ((1e6f64).powf(1.0 / d as f64).floor() as usize).max(2),
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Points per axis; defaults by dimension when unset.
    pub resolution: Option<usize>,
    /// Upper bound on total grid nodes.
    pub eval_budget: u64,
    /// Evaluate nodes concurrently. The result is identical either way.
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            resolution: None,
            eval_budget: DEFAULT_EVAL_BUDGET,
            parallel: true,
        }
    }
}

impl SolveOptions {
    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            resolution: Some(resolution),
            ..Self::default()
        }
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Accuracy certificate for a grid solve.
///
/// `error_bound` is `L_max` times half the grid-cell diagonal: the returned
/// value exceeds the true minimum by at most this much. It is `None` when no
/// finite Lipschitz bound is available, in which case the solve is
/// uncertified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCertificate {
    pub grid_step: f64,
    pub error_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    /// Grid node attaining the minimum (lexicographically smallest index on
    /// ties).
    pub minimizer: Vec<f64>,
    /// Objective value at the minimizer.
    pub value: f64,
    pub certificate: GridCertificate,
    /// Number of grid nodes evaluated.
    pub evaluations: u64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("grid of {required} nodes exceeds the evaluation budget of {budget}")]
    BudgetExceeded { required: u64, budget: u64 },
    #[error("resolution must be at least 2 points per axis, got {0}")]
    ResolutionTooSmall(usize),
    #[error("rank {rank} out of range for a subset of {subset_len} functions")]
    RankOutOfRange { rank: usize, subset_len: usize },
    #[error("subset index {index} out of range for {n} functions")]
    SubsetIndexOutOfRange { index: usize, n: usize },
    #[error("subset must not be empty")]
    EmptySubset,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Minimizes the ensemble objective (the `(f+1)`-th largest of all `n`
/// values) over a dense grid.
pub fn minimize_objective(
    ensemble: &Ensemble,
    options: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    let lipschitz = ensemble.max_lipschitz_bound();
    solve_on_grid(ensemble, options, lipschitz, |ens, x, buf| {
        ens.objective_with(x, buf)
    })
}

/// Minimizes the `rank`-th largest value over the functions selected by
/// `subset` (zero-based indices), on the same grid and with the same tie
/// rule as [`minimize_objective`].
pub fn minimize_subset_rank(
    ensemble: &Ensemble,
    subset: &BTreeSet<usize>,
    rank: usize,
    options: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    if subset.is_empty() {
        return Err(SolveError::EmptySubset);
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= ensemble.len()) {
        return Err(SolveError::SubsetIndexOutOfRange {
            index: bad,
            n: ensemble.len(),
        });
    }
    if rank < 1 || rank > subset.len() {
        return Err(SolveError::RankOutOfRange {
            rank,
            subset_len: subset.len(),
        });
    }
    let indices: Vec<usize> = subset.iter().copied().collect();
    let lipschitz = ensemble.subset_lipschitz_bound(subset);
    solve_on_grid(ensemble, options, lipschitz, move |ens, x, buf| {
        buf.clear();
        for &i in &indices {
            let v = ens.specs()[i].evaluate(x);
            if !v.is_finite() {
                return Err(EvalError {
                    index: i,
                    point: x.to_vec(),
                    value: v,
                });
            }
            buf.push(v);
        }
        Ok(rank_k_in_place(buf, rank))
    })
}

fn solve_on_grid<F>(
    ensemble: &Ensemble,
    options: &SolveOptions,
    lipschitz: f64,
    eval: F,
) -> Result<SolveResult, SolveError>
where
    F: Fn(&Ensemble, &[f64], &mut Vec<f64>) -> Result<f64, EvalError> + Sync,
{
    let domain = ensemble.domain();
    let resolution = options
        .resolution
        .unwrap_or_else(|| default_resolution(domain.dim()));
    if resolution < 2 {
        return Err(SolveError::ResolutionTooSmall(resolution));
    }
    let grid = Grid::new(domain, resolution);
    let total = grid.total_nodes();
    if total > options.eval_budget {
        return Err(SolveError::BudgetExceeded {
            required: total,
            budget: options.eval_budget,
        });
    }

    let best = if options.parallel {
        (0..total)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(point, values), flat| {
                    grid.node_into(flat, point);
                    eval(ensemble, point, values).map(|v| (v, flat))
                },
            )
            .try_reduce(|| (f64::INFINITY, u64::MAX), |a, b| Ok(lower_of(a, b)))?
    } else {
        let mut point = Vec::new();
        let mut values = Vec::new();
        let mut best = (f64::INFINITY, u64::MAX);
        for flat in 0..total {
            grid.node_into(flat, &mut point);
            let v = eval(ensemble, &point, &mut values)?;
            best = lower_of(best, (v, flat));
        }
        best
    };

    let error_bound = if lipschitz.is_finite() {
        Some(lipschitz * grid.half_cell_diameter())
    } else {
        None
    };
    Ok(SolveResult {
        minimizer: grid.node(best.1),
        value: best.0,
        certificate: GridCertificate {
            grid_step: grid.max_step(),
            error_bound,
        },
        evaluations: total,
    })
}

/// Smaller value wins; at equal values the smaller flat index wins. This is
/// associative and commutative, so any reduction tree agrees with a
/// sequential left-to-right scan.
fn lower_of(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    match b.0.total_cmp(&a.0) {
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Equal => {
            if b.1 < a.1 {
                b
            } else {
                a
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{make_above_all_adversary, CostFunctionSpec};
    use crate::rank::Hypercube;

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

    /// |x|, |x-1|, |x+1| with fault budget 1 on [-2, 2].
    fn three_cones() -> Ensemble {
        Ensemble::new(
            vec![cone1(0.0, 1.0, 0.0), cone1(1.0, 1.0, 0.0), cone1(-1.0, 1.0, 0.0)],
            1,
            interval(),
            true,
        )
        .unwrap()
    }

    fn all_indices(ens: &Ensemble) -> BTreeSet<usize> {
        (0..ens.len()).collect()
    }

    #[test]
    fn three_cone_minimum_with_lexicographic_tie_break() {
        // The objective has two minimizers at -0.5 and +0.5 (both 0.5); the
        // scan must return the earlier node.
        let ens = three_cones();
        let res = minimize_objective(&ens, &SolveOptions::with_resolution(4001)).unwrap();
        assert!((res.value - 0.5).abs() < 1e-12);
        assert!((res.minimizer[0] + 0.5).abs() < 1e-9);
        assert_eq!(res.evaluations, 4001);
        // All three cones have slope 1; the step is 0.001.
        let cert = res.certificate;
        assert!((cert.grid_step - 0.001).abs() < 1e-12);
        let bound = cert.error_bound.unwrap();
        assert!((bound - 0.0005).abs() < 1e-9);
    }

    #[test]
    fn zero_fault_budget_recovers_a_single_cone_minimum() {
        let ens = Ensemble::new(vec![cone1(0.3, 1.0, 0.0)], 0, interval(), true).unwrap();
        let res = minimize_objective(&ens, &SolveOptions::with_resolution(4001)).unwrap();
        assert!(res.value.abs() < 1e-12);
        assert!((res.minimizer[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn above_all_adversary_does_not_move_the_minimum() {
        let honest = vec![cone1(0.0, 1.0, 0.0), cone1(1.0, 1.0, 0.0)];
        let adv = make_above_all_adversary(&honest, 0.5).unwrap();
        let specs = vec![honest[0].clone(), honest[1].clone(), adv];
        let ens = Ensemble::new(specs, 1, interval(), true).unwrap();
        let res = minimize_objective(&ens, &SolveOptions::with_resolution(4001)).unwrap();
        // With the adversary always on top, the objective is max(|x|, |x-1|),
        // minimized at 0.5.
        assert!((res.value - 0.5).abs() < 1e-12);
        assert!((res.minimizer[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn subset_rank_oracles_on_the_honest_pair() {
        let ens = three_cones();
        let honest: BTreeSet<usize> = [0, 1].into_iter().collect();
        let opts = SolveOptions::with_resolution(4001);

        let max_min = minimize_subset_rank(&ens, &honest, 1, &opts).unwrap();
        assert!((max_min.value - 0.5).abs() < 1e-12);
        assert!((max_min.minimizer[0] - 0.5).abs() < 1e-9);

        // min(|x|, |x-1|) vanishes at both 0 and 1; the tie goes to 0.
        let min_min = minimize_subset_rank(&ens, &honest, 2, &opts).unwrap();
        assert!(min_min.value.abs() < 1e-12);
        assert!(min_min.minimizer[0].abs() < 1e-9);
    }

    #[test]
    fn objective_matches_full_subset_rank_bit_for_bit() {
        let ens = three_cones();
        let opts = SolveOptions::with_resolution(1001);
        let a = minimize_objective(&ens, &opts).unwrap();
        let b = minimize_subset_rank(&ens, &all_indices(&ens), 2, &opts).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.minimizer[0].to_bits(), b.minimizer[0].to_bits());
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn minimized_value_is_monotone_in_the_rank() {
        let ens = three_cones();
        let opts = SolveOptions::with_resolution(401);
        let all = all_indices(&ens);
        let mut prev = f64::INFINITY;
        for rank in 1..=3 {
            let res = minimize_subset_rank(&ens, &all, rank, &opts).unwrap();
            assert!(res.value <= prev + 1e-12);
            prev = res.value;
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bit_for_bit() {
        let ens = three_cones();
        let par = minimize_objective(
            &ens,
            &SolveOptions {
                resolution: Some(2001),
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let seq = minimize_objective(
            &ens,
            &SolveOptions::with_resolution(2001).sequential(),
        )
        .unwrap();
        assert_eq!(par.value.to_bits(), seq.value.to_bits());
        assert_eq!(par.minimizer[0].to_bits(), seq.minimizer[0].to_bits());
    }

    #[test]
    fn refining_the_grid_moves_the_value_at_most_by_the_certificate() {
        let ens = three_cones();
        let coarse = minimize_objective(&ens, &SolveOptions::with_resolution(101)).unwrap();
        let fine = minimize_objective(&ens, &SolveOptions::with_resolution(202)).unwrap();
        let bound = coarse.certificate.error_bound.unwrap();
        assert!((fine.value - coarse.value).abs() <= bound + 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let ens = three_cones();
        let err = minimize_objective(
            &ens,
            &SolveOptions {
                resolution: Some(4001),
                eval_budget: 1000,
                parallel: false,
            },
        )
        .unwrap_err();
        match err {
            SolveError::BudgetExceeded { required, budget } => {
                assert_eq!(required, 4001);
                assert_eq!(budget, 1000);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn subset_misuse_is_rejected() {
        let ens = three_cones();
        let opts = SolveOptions::default();
        assert!(matches!(
            minimize_subset_rank(&ens, &BTreeSet::new(), 1, &opts),
            Err(SolveError::EmptySubset)
        ));
        let subset: BTreeSet<usize> = [0, 5].into_iter().collect();
        assert!(matches!(
            minimize_subset_rank(&ens, &subset, 1, &opts),
            Err(SolveError::SubsetIndexOutOfRange { index: 5, .. })
        ));
        let pair: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert!(matches!(
            minimize_subset_rank(&ens, &pair, 3, &opts),
            Err(SolveError::RankOutOfRange { rank: 3, .. })
        ));
    }
}
