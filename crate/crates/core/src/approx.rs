//! Lipschitz-guided hypercube partition refinement.
//!
//! The domain is split into axis-aligned cells, each carrying the ensemble
//! objective at its center. With `m` the smallest center value, a cell `j`
//! is *settled* when
//!
//! ```text
//! value_j - lipschitz * diameter_j >= (1 - epsilon) * m
//! ```
//!
//! Every round splits all unsettled cells along their longest edge
//! (breadth-first), so the partition is a tiling of the domain at every
//! point in time. Once all cells are settled, the center with the smallest
//! value approximates the best honest max within a factor of
//! `1 / (1 - epsilon)`, provided the honest functions respect the supplied
//! Lipschitz constant and are non-negative.
//!
//! Near a zero of the objective the criterion is unattainable, so a cell
//! whose `lipschitz * diameter` has shrunk below an absolute floor
//! `tau_abs` also stops splitting; runs that finish this way report it, and
//! the guarantee relaxes by `tau_abs / (1 - epsilon)`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rank::{Ensemble, EvalError};

/// Default cap on the number of cells a refinement may hold.
pub const DEFAULT_MAX_CELLS: usize = 100_000;

/// The default absolute floor is this factor times the objective scale at
/// the domain center.
pub const TAU_SCALE_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ApproxConfig {
    /// Relative slack in `(0, 1)`.
    pub epsilon: f64,
    /// Lipschitz constant assumed for every honest function.
    pub lipschitz: f64,
    /// Cell budget; refinement stops with a budget termination rather than
    /// exceed it.
    pub max_cells: usize,
    /// Absolute floor on `lipschitz * diameter` below which a cell stops
    /// splitting; derived from the objective scale when unset.
    pub tau_abs: Option<f64>,
    /// Evaluate new cell centers concurrently. The result is identical
    /// either way.
    pub parallel: bool,
}

impl ApproxConfig {
    pub fn new(epsilon: f64, lipschitz: f64) -> Result<Self, ApproxError> {
        let config = Self {
            epsilon,
            lipschitz,
            max_cells: DEFAULT_MAX_CELLS,
            tau_abs: None,
            parallel: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ApproxError::BadEpsilon(self.epsilon));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(ApproxError::BadLipschitz(self.lipschitz));
        }
        if self.max_cells == 0 {
            return Err(ApproxError::BadCellBudget);
        }
        if let Some(tau) = self.tau_abs {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(ApproxError::BadFloor(tau));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("the approximate solver requires the ensemble's non-negativity flag")]
    RequiresNonNegative,
    #[error("epsilon must lie strictly between 0 and 1, got {0}")]
    BadEpsilon(f64),
    #[error("the Lipschitz constant must be positive and finite, got {0}")]
    BadLipschitz(f64),
    #[error("the cell budget must be positive")]
    BadCellBudget,
    #[error("the refinement floor must be positive and finite, got {0}")]
    BadFloor(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One cell of the partition. Ids are assigned in creation order and never
/// reused; the root is id 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub id: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub center: Vec<f64>,
    /// Euclidean length of the cell's main diagonal.
    pub diameter: f64,
    /// Ensemble objective at the center.
    pub center_value: f64,
}

impl Cell {
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every cell satisfies the refinement criterion; the factor guarantee
    /// applies.
    Criterion,
    /// Some cells stopped only because `lipschitz * diameter` fell below the
    /// absolute floor; the guarantee relaxes by `tau_abs / (1 - epsilon)`.
    Floor,
    /// The cell budget was exhausted; no guarantee is claimed.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxResult {
    /// Center of the cell with the smallest center value (ties broken by
    /// lexicographically smaller center).
    pub minimizer: Vec<f64>,
    pub value: f64,
    /// Id of the winning cell.
    pub cell_id: usize,
    pub cell_count: usize,
    pub terminated_by: Termination,
}

/// One row of the refinement trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub cell_count: usize,
    pub min_center_value: f64,
    /// Largest amount by which any cell misses the criterion; at or below
    /// zero once the partition is settled.
    pub max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub result: ApproxResult,
    /// Final partition, ascending by cell id.
    pub partition: Vec<Cell>,
    pub trace: Vec<RoundRecord>,
    /// The absolute floor that was in effect (resolved from the config).
    pub tau_abs: f64,
}

/// Raw refinement criterion over a partition: true when every cell `j`
/// satisfies `value_j - lipschitz * diameter_j >= (1 - epsilon) * m` with
/// `m` the smallest center value. Also returns the violating cell ids. The
/// absolute floor plays no part here.
pub fn criterion_satisfied(cells: &[Cell], config: &ApproxConfig) -> (bool, Vec<usize>) {
    assert!(!cells.is_empty(), "criterion over an empty partition");
    let m = min_center_value(cells);
    let threshold = (1.0 - config.epsilon) * m;
    let violators: Vec<usize> = cells
        .iter()
        .filter(|c| c.center_value - config.lipschitz * c.diameter < threshold)
        .map(|c| c.id)
        .collect();
    (violators.is_empty(), violators)
}

fn min_center_value(cells: &[Cell]) -> f64 {
    cells
        .iter()
        .map(|c| c.center_value)
        .fold(f64::INFINITY, f64::min)
}

/// Bisects the box along its longest edge (lowest axis on ties) into two
/// equal halves.
pub fn split_bounds(lower: &[f64], upper: &[f64]) -> ((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>)) {
    let mut axis = 0;
    let mut longest = f64::NEG_INFINITY;
    for (t, (lo, hi)) in lower.iter().zip(upper).enumerate() {
        let edge = hi - lo;
        if edge > longest {
            longest = edge;
            axis = t;
        }
    }
    let mid = 0.5 * (lower[axis] + upper[axis]);
    let mut left_upper = upper.to_vec();
    left_upper[axis] = mid;
    let mut right_lower = lower.to_vec();
    right_lower[axis] = mid;
    (
        (lower.to_vec(), left_upper),
        (right_lower, upper.to_vec()),
    )
}

fn cell_from_bounds(
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    ensemble: &Ensemble,
    scratch: &mut Vec<f64>,
) -> Result<Cell, EvalError> {
    let center: Vec<f64> = lower
        .iter()
        .zip(&upper)
        .map(|(lo, hi)| 0.5 * (lo + hi))
        .collect();
    let diameter = lower
        .iter()
        .zip(&upper)
        .map(|(lo, hi)| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt();
    let center_value = ensemble.objective_with(&center, scratch)?;
    Ok(Cell {
        id,
        lower,
        upper,
        center,
        diameter,
        center_value,
    })
}

/// A box can be split as long as bisecting its longest edge actually
/// separates it; this fails only at the limits of floating-point
/// resolution, far below any practical floor.
fn splittable(cell: &Cell) -> bool {
    let mut axis = 0;
    let mut longest = f64::NEG_INFINITY;
    for (t, (lo, hi)) in cell.lower.iter().zip(&cell.upper).enumerate() {
        let edge = hi - lo;
        if edge > longest {
            longest = edge;
            axis = t;
        }
    }
    let mid = 0.5 * (cell.lower[axis] + cell.upper[axis]);
    mid > cell.lower[axis] && mid < cell.upper[axis]
}

/// Runs partition refinement to termination. See the module docs for the
/// criterion and the floor.
pub fn refine(ensemble: &Ensemble, config: &ApproxConfig) -> Result<RefineOutcome, ApproxError> {
    refine_observed(ensemble, config, |_, _| {})
}

/// [`refine`] with a per-round observer: called with the round number and
/// the partition entering that round, including the final one.
pub fn refine_observed(
    ensemble: &Ensemble,
    config: &ApproxConfig,
    mut observer: impl FnMut(usize, &[Cell]),
) -> Result<RefineOutcome, ApproxError> {
    if !ensemble.non_negative() {
        return Err(ApproxError::RequiresNonNegative);
    }
    config.validate()?;

    let domain = ensemble.domain();
    let mut scratch = Vec::with_capacity(ensemble.len());
    let root = cell_from_bounds(
        0,
        domain.lower().to_vec(),
        domain.upper().to_vec(),
        ensemble,
        &mut scratch,
    )?;
    let tau_abs = config.tau_abs.unwrap_or_else(|| {
        let scale = if root.center_value.abs() > 0.0 {
            root.center_value.abs()
        } else {
            config.lipschitz * root.diameter
        };
        TAU_SCALE_FACTOR * scale
    });

    let mut cells = vec![root];
    let mut next_id = 1usize;
    let mut trace = Vec::new();
    let mut round = 0usize;
    let terminated_by;

    loop {
        let m = min_center_value(&cells);
        let threshold = (1.0 - config.epsilon) * m;
        let mut max_violation = f64::NEG_INFINITY;
        let mut raw_violations = 0usize;
        let mut to_split = Vec::new();
        for (idx, cell) in cells.iter().enumerate() {
            let slack = cell.center_value - config.lipschitz * cell.diameter - threshold;
            max_violation = max_violation.max(-slack);
            if slack < 0.0 {
                raw_violations += 1;
                if config.lipschitz * cell.diameter > tau_abs && splittable(cell) {
                    to_split.push(idx);
                }
            }
        }
        trace.push(RoundRecord {
            round,
            cell_count: cells.len(),
            min_center_value: m,
            max_violation,
        });
        observer(round, &cells);

        if to_split.is_empty() {
            terminated_by = if raw_violations == 0 {
                Termination::Criterion
            } else {
                Termination::Floor
            };
            break;
        }
        if cells.len() + to_split.len() > config.max_cells {
            terminated_by = Termination::Budget;
            break;
        }

        // Split in ascending id order (the vec is id-sorted throughout);
        // children are appended after the survivors, keeping it sorted.
        let mut pending: Vec<(usize, Vec<f64>, Vec<f64>)> =
            Vec::with_capacity(to_split.len() * 2);
        let split_set: std::collections::BTreeSet<usize> = to_split.iter().copied().collect();
        for &idx in &to_split {
            let cell = &cells[idx];
            let ((lo_a, up_a), (lo_b, up_b)) = split_bounds(&cell.lower, &cell.upper);
            pending.push((next_id, lo_a, up_a));
            pending.push((next_id + 1, lo_b, up_b));
            next_id += 2;
        }
        let children: Vec<Cell> = if config.parallel {
            pending
                .into_par_iter()
                .map_init(Vec::new, |buf, (id, lo, up)| {
                    cell_from_bounds(id, lo, up, ensemble, buf)
                })
                .collect::<Result<_, _>>()?
        } else {
            let mut out = Vec::with_capacity(pending.len());
            for (id, lo, up) in pending {
                out.push(cell_from_bounds(id, lo, up, ensemble, &mut scratch)?);
            }
            out
        };

        let mut survivors = Vec::with_capacity(cells.len() - to_split.len() + children.len());
        for (idx, cell) in cells.into_iter().enumerate() {
            if !split_set.contains(&idx) {
                survivors.push(cell);
            }
        }
        survivors.extend(children);
        cells = survivors;
        round += 1;
    }

    let best = cells
        .iter()
        .min_by(|a, b| {
            a.center_value
                .total_cmp(&b.center_value)
                .then_with(|| lex_cmp(&a.center, &b.center))
                .then_with(|| a.id.cmp(&b.id))
        })
        .expect("partition is never empty");
    let result = ApproxResult {
        minimizer: best.center.clone(),
        value: best.center_value,
        cell_id: best.id,
        cell_count: cells.len(),
        terminated_by,
    };
    Ok(RefineOutcome {
        result,
        partition: cells,
        trace,
        tau_abs,
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = x.total_cmp(y);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}
