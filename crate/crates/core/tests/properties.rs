//! Structural properties of the estimators: pair symmetry, invariance under
//! similarity transforms and independence from the worker count.

mod common;

use proptest::prelude::*;
use taukit::estimators::estimate;
use taukit::inference::{bootstrap_curves, bootstrap_rate_curves, permutation_null_curves};
use taukit::pairing::{pair_distances, tally_pairs};
use taukit::{CaseDataset, Coord, CrsMode, Estimator, InapplicablePolicy, PairMode, TauValue};

fn values(ds: &CaseDataset, bands: &taukit::BandSet, rule: &taukit::RelatednessRule, est: Estimator) -> Option<Vec<TauValue>> {
    estimate(ds, bands, rule, est, InapplicablePolicy::default())
        .ok()
        .map(|c| c.values)
}

fn agree(a: &Option<Vec<TauValue>>, b: &Option<Vec<TauValue>>, tol: f64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.iter().zip(b).all(|(x, y)| match (x.value(), y.value()) {
            (Some(x), Some(y)) => common::rel_diff(x, y) <= tol,
            (None, None) => true,
            _ => false,
        }),
        (None, None) => true,
        _ => false,
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ordered_pairs_are_twice_unordered(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let ds = common::random_dataset(&mut rng, 30, CrsMode::Planar, true);
        let n = ds.len() as u64;
        let tally = tally_pairs(&ds, &taukit::BandSet::global(taukit::Axis::Distance),
            &common::random_rule(&mut rng), PairMode::AllIndividuals);
        prop_assert_eq!(2 * tally.global.total, n * (n - 1));
        prop_assert_eq!(pair_distances(&ds, PairMode::AllIndividuals).len() as u64, n * (n - 1) / 2);
    }

    #[test]
    fn scaling_locations_and_bands_together(seed in any::<u64>(), k in 1u32..6) {
        let mut rng = common::rng(seed);
        let ds = common::random_dataset(&mut rng, 40, CrsMode::Planar, true);
        let bands = common::random_bands(&mut rng, 100.0);
        let rule = common::random_rule(&mut rng);
        // powers of two keep every distance exact
        let s = f64::from(1u32 << k);
        let scaled = ds.map_locations(|c| Coord::new(c.x * s, c.y * s)).unwrap();
        let sb = bands.scaled(s).unwrap();
        for est in [Estimator::Odds, Estimator::Prev] {
            prop_assert_eq!(values(&ds, &bands, &rule, est), values(&scaled, &sb, &rule, est));
        }
    }

    #[test]
    fn rigid_motions_leave_tau_unchanged(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::TAU) {
        let mut rng = common::rng(seed);
        let ds = common::random_dataset(&mut rng, 40, CrsMode::Planar, true);
        let bands = common::random_bands(&mut rng, 100.0);
        let rule = common::random_rule(&mut rng);
        let (s, c) = angle.sin_cos();
        let moved = ds
            .map_locations(|p| Coord::new(c * p.x - s * p.y + 1234.5, s * p.x + c * p.y - 678.25))
            .unwrap();
        // distances move by rounding only; pairs that sit on a band edge are rare
        for est in [Estimator::Odds, Estimator::Prev] {
            prop_assert!(agree(&values(&ds, &bands, &rule, est), &values(&moved, &bands, &rule, est), 1e-9));
        }
    }

    #[test]
    fn relabelling_individuals_changes_nothing(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let ds = common::random_dataset(&mut rng, 40, CrsMode::Planar, true);
        let bands = common::random_bands(&mut rng, 100.0);
        let rule = common::random_rule(&mut rng);
        let mut rev = ds.individuals().to_vec();
        rev.reverse();
        let reversed = CaseDataset::new(rev, CrsMode::Planar).unwrap();
        for est in [Estimator::Odds, Estimator::Prev] {
            prop_assert_eq!(values(&ds, &bands, &rule, est), values(&reversed, &bands, &rule, est));
        }
    }
}

#[test]
fn replicates_do_not_depend_on_worker_count() {
    let mut rng = common::rng(7);
    let ds = common::random_dataset(&mut rng, 120, CrsMode::Planar, true);
    let bands = taukit::bands::equal_width_bands(100.0, 8).unwrap();
    let rule = taukit::RelatednessRule::temporal(1.0, 6.0).unwrap();
    let panel = common::random_panel(&mut rng, 12);
    let run = || {
        (
            bootstrap_curves(&ds, &bands, &rule, Estimator::Odds, 64, 11).unwrap().replicates,
            bootstrap_curves(&ds, &bands, &rule, Estimator::Prev, 64, 11).unwrap().replicates,
            permutation_null_curves(&ds, &bands, &rule, Estimator::Odds, 64, 11).unwrap().replicates,
            bootstrap_rate_curves(&panel, &bands, &rule, 64, 11).unwrap().replicates,
        )
    };
    let one = in_pool(1, run);
    for threads in [2, 8] {
        let other = in_pool(threads, run);
        // bitwise equality, undefined entries included
        assert_eq!(format!("{one:?}"), format!("{other:?}"), "{threads} workers");
    }
}

#[test]
fn seeds_change_replicates() {
    let mut rng = common::rng(8);
    let ds = common::random_dataset(&mut rng, 80, CrsMode::Planar, false);
    let bands = taukit::bands::equal_width_bands(100.0, 5).unwrap();
    let rule = taukit::RelatednessRule::temporal(0.0, 10.0).unwrap();
    let a = bootstrap_curves(&ds, &bands, &rule, Estimator::Odds, 20, 1).unwrap();
    let b = bootstrap_curves(&ds, &bands, &rule, Estimator::Odds, 20, 2).unwrap();
    assert_ne!(a.replicates, b.replicates);
    assert_eq!(a.point_estimate.values, b.point_estimate.values);
}
