//! Property tests for the rank machinery and the ensemble invariants.

use std::collections::BTreeSet;

use proptest::prelude::*;

use bft_minmax::rank::{
    honest_max, honest_rank, rank_k, rank_k_index, rank_k_subset, Ensemble, GroundTruth,
    Hypercube,
};
use bft_minmax::CostFunctionSpec;

fn finite_values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6f64..1e6f64, 1..=max_len)
}

/// Small integer values force plenty of ties.
fn tied_values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-5i32..=5).prop_map(f64::from), 1..=max_len)
}

fn sort_oracle(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
}

#[derive(Debug, Clone)]
struct ConeEnsemble {
    centers: Vec<f64>,
    slopes: Vec<f64>,
    offsets: Vec<f64>,
    fault_budget: usize,
    faulty: BTreeSet<usize>,
    probe: f64,
}

fn cone_ensembles() -> impl Strategy<Value = ConeEnsemble> {
    (3usize..=9)
        .prop_flat_map(|n| {
            let f = 1usize..=((n - 1) / 2).max(1);
            (
                Just(n),
                f,
                prop::collection::vec(-1.5f64..1.5, n),
                prop::collection::vec(0.5f64..2.0, n),
                prop::collection::vec(0.0f64..2.0, n),
                prop::collection::vec(any::<bool>(), n),
                -2.0f64..2.0,
            )
        })
        .prop_map(|(n, fault_budget, centers, slopes, offsets, marks, probe)| {
            // Keep at most `fault_budget` marked functions faulty.
            let faulty: BTreeSet<usize> = marks
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i)
                .take(fault_budget)
                .collect();
            let _ = n;
            ConeEnsemble {
                centers,
                slopes,
                offsets,
                fault_budget,
                faulty,
                probe,
            }
        })
}

fn build(case: &ConeEnsemble) -> (Ensemble, GroundTruth) {
    let specs: Vec<CostFunctionSpec> = case
        .centers
        .iter()
        .zip(&case.slopes)
        .zip(&case.offsets)
        .map(|((&c, &s), &o)| CostFunctionSpec::Cone {
            center: vec![c],
            slope: s,
            offset: o,
        })
        .collect();
    let domain = Hypercube::new(vec![-2.0], vec![2.0]).unwrap();
    let ensemble = Ensemble::new(specs, case.fault_budget, domain, true).unwrap();
    let truth = GroundTruth::for_ensemble(&ensemble, case.faulty.clone()).unwrap();
    (ensemble, truth)
}

proptest! {
    #[test]
    fn rank_matches_the_sort_oracle(values in finite_values(20), k_seed in any::<prop::sample::Index>()) {
        let k = k_seed.index(values.len()) + 1;
        let sorted = sort_oracle(&values);
        prop_assert_eq!(rank_k(&values, k), sorted[k - 1]);
    }

    #[test]
    fn tied_ranks_match_the_sort_oracle(values in tied_values(20)) {
        let sorted = sort_oracle(&values);
        for k in 1..=values.len() {
            prop_assert_eq!(rank_k(&values, k), sorted[k - 1]);
        }
    }

    #[test]
    fn rank_is_monotone_in_k(values in finite_values(20)) {
        for k in 2..=values.len() {
            prop_assert!(rank_k(&values, k) <= rank_k(&values, k - 1));
        }
    }

    #[test]
    fn rank_is_permutation_invariant(values in finite_values(12), k_seed in any::<prop::sample::Index>(), shuffle in any::<prop::sample::Index>()) {
        let k = k_seed.index(values.len()) + 1;
        let mut shuffled = values.clone();
        // A deterministic rotation is permutation enough.
        let by = shuffle.index(values.len());
        shuffled.rotate_left(by);
        prop_assert_eq!(rank_k(&values, k), rank_k(&shuffled, k));
    }

    #[test]
    fn rank_index_points_at_a_value_of_that_rank(values in tied_values(15), k_seed in any::<prop::sample::Index>()) {
        let k = k_seed.index(values.len()) + 1;
        let idx = rank_k_index(&values, k);
        prop_assert!(idx < values.len());
        prop_assert_eq!(values[idx], rank_k(&values, k));
    }

    #[test]
    fn full_subset_rank_equals_plain_rank(values in finite_values(15), k_seed in any::<prop::sample::Index>()) {
        let k = k_seed.index(values.len()) + 1;
        let all: BTreeSet<usize> = (0..values.len()).collect();
        prop_assert_eq!(rank_k_subset(&values, &all, k), rank_k(&values, k));
    }

    #[test]
    fn subset_rank_never_exceeds_superset_rank(values in finite_values(15), marks in prop::collection::vec(any::<bool>(), 15)) {
        let subset: BTreeSet<usize> = (0..values.len()).filter(|&i| marks[i]).collect();
        prop_assume!(!subset.is_empty());
        for k in 1..=subset.len() {
            prop_assert!(rank_k_subset(&values, &subset, k) <= rank_k(&values, k));
        }
    }

    #[test]
    fn pointwise_sandwich_on_random_cone_ensembles(case in cone_ensembles()) {
        let (ensemble, truth) = build(&case);
        let x = [case.probe];
        let objective = ensemble.objective(&x).unwrap();
        let upper = honest_max(&ensemble, &truth, &x).unwrap();
        let lower = honest_rank(&ensemble, &truth, &x).unwrap();
        prop_assert!(lower <= objective, "honest rank {lower} above objective {objective}");
        prop_assert!(objective <= upper, "objective {objective} above honest max {upper}");
    }

    #[test]
    fn objective_is_the_full_subset_rank(case in cone_ensembles()) {
        let (ensemble, _) = build(&case);
        let x = [case.probe];
        let profile = ensemble.values_at(&x).unwrap();
        let all: BTreeSet<usize> = (0..ensemble.len()).collect();
        let via_subset = rank_k_subset(profile.values(), &all, ensemble.fault_budget() + 1);
        prop_assert_eq!(ensemble.objective(&x).unwrap(), via_subset);
    }
}
