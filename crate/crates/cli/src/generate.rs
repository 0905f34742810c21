//! Seeded random scenario generation.
//!
//! Templates are named `{family}-{d}d`. The family picks the honest function
//! shapes, the seed picks sizes, parameters, and which adversary construction
//! to plant. The same seed and template always produce the same scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use bft_minmax::{CostFunctionSpec, Hypercube};

use crate::scenario::{AdversaryDirective, Scenario, SolverSettings, VerifySettings};

pub const TEMPLATES: &[&str] = &[
    "cones-1d",
    "cones-2d",
    "quads-1d",
    "quads-2d",
    "mixed-1d",
    "mixed-2d",
    "positive-1d",
    "positive-2d",
];

/// Honest function shapes a template draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Cones with offsets in `[0, 2]`.
    Cones,
    /// Quadratics with offsets in `[0, 2]`.
    Quads,
    /// Cones and quadratics, alternating.
    Mixed,
    /// Cones with offsets in `[1, 3]`, bounded safely away from zero.
    Positive,
}

impl Family {
    fn token(self) -> &'static str {
        match self {
            Family::Cones => "cones",
            Family::Quads => "quads",
            Family::Mixed => "mixed",
            Family::Positive => "positive",
        }
    }

    fn parse(token: &str) -> Option<Family> {
        match token {
            "cones" => Some(Family::Cones),
            "quads" => Some(Family::Quads),
            "mixed" => Some(Family::Mixed),
            "positive" => Some(Family::Positive),
            _ => None,
        }
    }
}

/// Which adversary construction a generated scenario plants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryKind {
    AboveAll,
    BelowAll,
    Gap,
    RandomCone,
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("unknown template {0:?}; expected {TEMPLATES:?}")]
    UnknownTemplate(String),
}

fn parse_template(template: &str) -> Result<(Family, usize), GenerateError> {
    let unknown = || GenerateError::UnknownTemplate(template.to_string());
    let (family, dim) = template.rsplit_once('-').ok_or_else(unknown)?;
    let family = Family::parse(family).ok_or_else(unknown)?;
    let dim = match dim {
        "1d" => 1,
        "2d" => 2,
        _ => return Err(unknown()),
    };
    Ok((family, dim))
}

/// Generate a scenario from a template name, choosing the adversary kind
/// from the seed.
pub fn generate(seed: u64, template: &str) -> Result<Scenario, GenerateError> {
    let (family, dim) = parse_template(template)?;
    let kind = match seed % 4 {
        0 => AdversaryKind::AboveAll,
        1 => AdversaryKind::BelowAll,
        2 => AdversaryKind::Gap,
        _ => AdversaryKind::RandomCone,
    };
    Ok(build_random(seed, family, dim, kind))
}

/// Generate a scenario with every choice except sizes and parameters pinned.
pub fn build_random(seed: u64, family: Family, dim: usize, kind: AdversaryKind) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=15usize);
    let max_fault = ((n - 1) / 2).clamp(1, 7);
    let fault_budget = rng.gen_range(1..=max_fault);
    let honest_count = n - fault_budget;
    let offset_shift = if kind == AdversaryKind::BelowAll { 2.5 } else { 0.0 };

    let mut honest = Vec::with_capacity(honest_count);
    for index in 0..honest_count {
        honest.push(random_spec(&mut rng, family, dim, index, offset_shift));
    }

    let adversaries = match kind {
        AdversaryKind::AboveAll => vec![AdversaryDirective::AboveAll {
            delta: rng.gen_range(0.1..=1.0),
            count: fault_budget,
        }],
        AdversaryKind::BelowAll => vec![AdversaryDirective::BelowAll {
            delta: rng.gen_range(0.1..=0.5),
            count: fault_budget,
        }],
        AdversaryKind::Gap => vec![AdversaryDirective::Gap {
            gap: rng.gen_range(5.0..=20.0),
            delta: rng.gen_range(0.1..=1.0),
            count: fault_budget,
        }],
        AdversaryKind::RandomCone => (0..fault_budget)
            .map(|_| AdversaryDirective::Fixed {
                spec: random_cone(&mut rng, dim, offset_shift),
            })
            .collect(),
    };

    Scenario {
        name: format!("{}-{dim}d-seed{seed}", family.token()),
        seed: Some(seed),
        fault_budget,
        non_negative: true,
        domain: Hypercube::new(vec![-2.0; dim], vec![2.0; dim]).unwrap(),
        honest,
        adversaries,
        solver: SolverSettings::default(),
        verify: VerifySettings::default(),
    }
}

fn random_spec(
    rng: &mut ChaCha8Rng,
    family: Family,
    dim: usize,
    index: usize,
    offset_shift: f64,
) -> CostFunctionSpec {
    match family {
        Family::Cones => random_cone(rng, dim, offset_shift),
        Family::Quads => random_quad(rng, dim, offset_shift),
        Family::Mixed => {
            if index % 2 == 0 {
                random_cone(rng, dim, offset_shift)
            } else {
                random_quad(rng, dim, offset_shift)
            }
        }
        Family::Positive => CostFunctionSpec::Cone {
            center: random_center(rng, dim),
            slope: rng.gen_range(0.5..=2.0),
            offset: rng.gen_range(1.0..=3.0) + offset_shift,
        },
    }
}

fn random_center(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.5..=1.5)).collect()
}

fn random_cone(rng: &mut ChaCha8Rng, dim: usize, offset_shift: f64) -> CostFunctionSpec {
    CostFunctionSpec::Cone {
        center: random_center(rng, dim),
        slope: rng.gen_range(0.5..=2.0),
        offset: rng.gen_range(0.0..=2.0) + offset_shift,
    }
}

fn random_quad(rng: &mut ChaCha8Rng, dim: usize, offset_shift: f64) -> CostFunctionSpec {
    CostFunctionSpec::Quadratic {
        center: random_center(rng, dim),
        scale: rng.gen_range(0.25..=1.0),
        offset: rng.gen_range(0.0..=2.0) + offset_shift,
    }
}
