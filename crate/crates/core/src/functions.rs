//! Concrete cost-function families and adversary builders.
//!
//! Every family evaluates totally on a bounded domain and carries a declared
//! Lipschitz bound (Euclidean norm throughout). The adversary builders wrap
//! a list of reference functions in an envelope so the result dominates them
//! from above, sits strictly below them, or clears them by a fixed gap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::rank::Hypercube;

/// Total node budget for the sampled certificates used by the adversary
/// builders and the non-negativity sweep. Dense enough to catch margin
/// violations for the smooth families this crate ships; corners are always
/// included because grids keep their endpoints.
pub const SWEEP_NODE_BUDGET: u64 = 4096;

/// Serializable description of one cost function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFunctionSpec {
    /// `slope * |x - center| + offset` with Euclidean distance.
    Cone {
        center: Vec<f64>,
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `scale * |x - center|^2 + offset` with Euclidean distance.
    Quadratic {
        center: Vec<f64>,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Linear interpolation through `(x, value)` breakpoints, clamped to the
    /// first and last value outside their range. One-dimensional only.
    #[serde(rename = "piecewise_linear_1d")]
    PiecewiseLinear1d { breakpoints: Vec<(f64, f64)> },
    /// `max` over the base functions, plus `delta`.
    EnvelopePlus {
        base: Vec<CostFunctionSpec>,
        delta: f64,
    },
    /// `min` over the base functions, minus `delta`; clamped at zero when
    /// `floor_at_zero` is set.
    EnvelopeMinus {
        base: Vec<CostFunctionSpec>,
        delta: f64,
        #[serde(default)]
        floor_at_zero: bool,
    },
}

/// Malformed spec or failed builder certificate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("cone slope must be positive and finite, got {0}")]
    BadSlope(f64),
    #[error("quadratic scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("offset must be non-negative and finite, got {0}")]
    BadOffset(f64),
    #[error("center must be non-empty with finite coordinates")]
    BadCenter,
    #[error("envelope delta must be finite, got {0}")]
    BadDelta(f64),
    #[error("piecewise-linear functions need at least two breakpoints with strictly increasing, finite coordinates")]
    BadBreakpoints,
    #[error("envelope base must not be empty")]
    EmptyEnvelope,
    #[error("envelope base mixes dimensions {0} and {1}")]
    MixedDimensions(usize, usize),
    #[error("margin must be positive and finite, got {0}")]
    BadMargin(f64),
    #[error("gap must be positive and finite, got {0}")]
    BadGap(f64),
    #[error(
        "reference envelope must stay strictly above the margin {margin} everywhere; found {value} at {point:?}"
    )]
    EnvelopeBelowMargin {
        margin: f64,
        value: f64,
        point: Vec<f64>,
    },
    #[error("function must be non-negative on the domain; found {value} at {point:?}")]
    NegativeValue { value: f64, point: Vec<f64> },
}

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "dimension mismatch in distance");
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn eval_piecewise(breakpoints: &[(f64, f64)], x: f64) -> f64 {
    let first = breakpoints[0];
    let last = breakpoints[breakpoints.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let j = breakpoints.partition_point(|(bx, _)| *bx <= x);
    let (x0, y0) = breakpoints[j - 1];
    let (x1, y1) = breakpoints[j];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

impl CostFunctionSpec {
    /// Checks field constraints recursively and returns the input dimension.
    pub fn validate(&self) -> Result<usize, SpecError> {
        match self {
            Self::Cone { center, slope, offset } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(SpecError::BadCenter);
                }
                if !(slope.is_finite() && *slope > 0.0) {
                    return Err(SpecError::BadSlope(*slope));
                }
                if !(offset.is_finite() && *offset >= 0.0) {
                    return Err(SpecError::BadOffset(*offset));
                }
                Ok(center.len())
            }
            Self::Quadratic { center, scale, offset } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(SpecError::BadCenter);
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(SpecError::BadScale(*scale));
                }
                if !(offset.is_finite() && *offset >= 0.0) {
                    return Err(SpecError::BadOffset(*offset));
                }
                Ok(center.len())
            }
            Self::PiecewiseLinear1d { breakpoints } => {
                if breakpoints.len() < 2 {
                    return Err(SpecError::BadBreakpoints);
                }
                for w in breakpoints.windows(2) {
                    if !(w[0].0 < w[1].0) {
                        return Err(SpecError::BadBreakpoints);
                    }
                }
                if breakpoints
                    .iter()
                    .any(|(x, v)| !x.is_finite() || !v.is_finite())
                {
                    return Err(SpecError::BadBreakpoints);
                }
                Ok(1)
            }
            Self::EnvelopePlus { base, delta } => {
                if !delta.is_finite() {
                    return Err(SpecError::BadDelta(*delta));
                }
                Self::validate_base(base)
            }
            Self::EnvelopeMinus { base, delta, .. } => {
                if !delta.is_finite() {
                    return Err(SpecError::BadDelta(*delta));
                }
                Self::validate_base(base)
            }
        }
    }

    fn validate_base(base: &[CostFunctionSpec]) -> Result<usize, SpecError> {
        if base.is_empty() {
            return Err(SpecError::EmptyEnvelope);
        }
        let mut dim = None;
        for spec in base {
            let d = spec.validate()?;
            match dim {
                None => dim = Some(d),
                Some(prev) if prev != d => return Err(SpecError::MixedDimensions(prev, d)),
                _ => {}
            }
        }
        Ok(dim.expect("non-empty base"))
    }

    /// Evaluates the function at `x`. Total for validated specs on finite
    /// points.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            Self::Cone { center, slope, offset } => {
                slope * euclidean_distance(x, center) + offset
            }
            Self::Quadratic { center, scale, offset } => {
                let d = euclidean_distance(x, center);
                scale * d * d + offset
            }
            Self::PiecewiseLinear1d { breakpoints } => eval_piecewise(breakpoints, x[0]),
            Self::EnvelopePlus { base, delta } => {
                base.iter()
                    .map(|s| s.evaluate(x))
                    .fold(f64::NEG_INFINITY, f64::max)
                    + delta
            }
            Self::EnvelopeMinus {
                base,
                delta,
                floor_at_zero,
            } => {
                let v = base
                    .iter()
                    .map(|s| s.evaluate(x))
                    .fold(f64::INFINITY, f64::min)
                    - delta;
                if *floor_at_zero {
                    v.max(0.0)
                } else {
                    v
                }
            }
        }
    }

    /// A Lipschitz constant valid on `domain`:
    ///
    /// * cone: the slope;
    /// * quadratic: `2 * scale * max |x - center|` over the domain, attained
    ///   at the farthest corner;
    /// * piecewise linear: the steepest segment slope;
    /// * envelopes: the largest base bound (max, min, shift, and clamp never
    ///   increase a Lipschitz constant).
    pub fn lipschitz_bound(&self, domain: &Hypercube) -> f64 {
        match self {
            Self::Cone { slope, .. } => *slope,
            Self::Quadratic { center, scale, .. } => {
                2.0 * scale * domain.max_distance_to(center)
            }
            Self::PiecewiseLinear1d { breakpoints } => breakpoints
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
            Self::EnvelopePlus { base, .. } | Self::EnvelopeMinus { base, .. } => base
                .iter()
                .map(|s| s.lipschitz_bound(domain))
                .fold(0.0, f64::max),
        }
    }
}

fn validate_all(specs: &[CostFunctionSpec]) -> Result<(), SpecError> {
    if specs.is_empty() {
        return Err(SpecError::EmptyEnvelope);
    }
    CostFunctionSpec::validate_base(specs).map(|_| ())
}

fn check_margin(margin: f64) -> Result<(), SpecError> {
    if !(margin.is_finite() && margin > 0.0) {
        return Err(SpecError::BadMargin(margin));
    }
    Ok(())
}

/// A function strictly above every reference function everywhere: their max
/// plus `margin`. Dominance needs no certificate because the margin is
/// positive.
pub fn make_above_all_adversary(
    reference: &[CostFunctionSpec],
    margin: f64,
) -> Result<CostFunctionSpec, SpecError> {
    validate_all(reference)?;
    check_margin(margin)?;
    Ok(CostFunctionSpec::EnvelopePlus {
        base: reference.to_vec(),
        delta: margin,
    })
}

/// A function strictly below every reference function everywhere: their min
/// minus `margin`, clamped at zero when `floor_at_zero` is set.
///
/// A sampled sweep over `domain` certifies that the reference envelope stays
/// strictly above `margin`, so the result remains positive before the clamp
/// and strict dominance survives flooring.
pub fn make_below_all_adversary(
    reference: &[CostFunctionSpec],
    margin: f64,
    domain: &Hypercube,
    floor_at_zero: bool,
) -> Result<CostFunctionSpec, SpecError> {
    validate_all(reference)?;
    check_margin(margin)?;
    let grid = Grid::for_budget(domain, SWEEP_NODE_BUDGET);
    let mut point = Vec::new();
    for flat in 0..grid.total_nodes() {
        grid.node_into(flat, &mut point);
        let env = reference
            .iter()
            .map(|s| s.evaluate(&point))
            .fold(f64::INFINITY, f64::min);
        if !(env > margin) {
            return Err(SpecError::EnvelopeBelowMargin {
                margin,
                value: env,
                point: point.clone(),
            });
        }
    }
    Ok(CostFunctionSpec::EnvelopeMinus {
        base: reference.to_vec(),
        delta: margin,
        floor_at_zero,
    })
}

/// A function clearing every reference function by more than `gap`
/// everywhere: their max plus `gap + margin`.
pub fn make_gap_adversary(
    reference: &[CostFunctionSpec],
    gap: f64,
    margin: f64,
) -> Result<CostFunctionSpec, SpecError> {
    validate_all(reference)?;
    if !(gap.is_finite() && gap > 0.0) {
        return Err(SpecError::BadGap(gap));
    }
    check_margin(margin)?;
    Ok(CostFunctionSpec::EnvelopePlus {
        base: reference.to_vec(),
        delta: gap + margin,
    })
}

/// Sampled check that `spec` is non-negative on `domain`; the witness point
/// is reported on failure.
pub fn check_non_negative(
    spec: &CostFunctionSpec,
    domain: &Hypercube,
) -> Result<(), SpecError> {
    let grid = Grid::for_budget(domain, SWEEP_NODE_BUDGET);
    let mut point = Vec::new();
    for flat in 0..grid.total_nodes() {
        grid.node_into(flat, &mut point);
        let v = spec.evaluate(&point);
        if v < 0.0 {
            return Err(SpecError::NegativeValue {
                value: v,
                point: point.clone(),
            });
        }
    }
    Ok(())
}
