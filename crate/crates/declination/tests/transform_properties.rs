//! Property suite for packing and cracking: vote conservation, the
//! one-seat effect, Q-side symmetry, and the strict monotonicity of the
//! declination and the gap family under the transform hypotheses.

use declination::metrics::Election;
use declination::testutil;
use declination::transforms::{
    apply_crack, apply_pack, mirror_q, random_contested_election, random_crack_plan,
    random_election, random_pack_plan, run_theorem_check, TheoremCheckConfig, CONSERVATION_TOL,
};
use rand::Rng;

/// Random election with both parties holding seats and `k' >= 2`, so the
/// declination stays defined after one seat flips.
fn plannable_election<R: Rng>(rng: &mut R, margin: f64) -> Election {
    loop {
        let n = rng.gen_range(3..=50usize);
        let e = random_contested_election(rng, n, margin);
        if e.split().k_prime >= 2 {
            return e;
        }
    }
}

#[test]
fn cracks_conserve_votes_and_flip_one_seat() {
    let mut rng = testutil::rng(101);
    let mut applied = 0;
    while applied < 300 {
        let e = plannable_election(&mut rng, 1e-3);
        let seed = rng.gen::<u64>();
        let Some(plan) = random_crack_plan(&e, seed, false).unwrap() else {
            continue;
        };
        let cracked = apply_crack(&e, &plan).unwrap();
        let before: f64 = e.shares().iter().sum();
        let after: f64 = cracked.shares().iter().sum();
        assert!(
            (before - after).abs() <= CONSERVATION_TOL,
            "vote sum drifted: {before} -> {after}"
        );
        assert_eq!(cracked.split().k, e.split().k + 1);
        assert_eq!(cracked.split().k_prime, e.split().k_prime - 1);
        applied += 1;
    }
}

#[test]
fn packs_conserve_votes_and_flip_one_seat() {
    let mut rng = testutil::rng(102);
    let mut applied = 0;
    while applied < 300 {
        let e = plannable_election(&mut rng, 1e-3);
        let seed = rng.gen::<u64>();
        let Some(plan) = random_pack_plan(&e, seed, false).unwrap() else {
            continue;
        };
        let packed = apply_pack(&e, &plan).unwrap();
        let before: f64 = e.shares().iter().sum();
        let after: f64 = packed.shares().iter().sum();
        assert!((before - after).abs() <= CONSERVATION_TOL);
        assert_eq!(packed.split().k, e.split().k + 1);
        applied += 1;
    }
}

#[test]
fn crack_hypothesis_raises_declination_in_1000_trials() {
    let mut rng = testutil::rng(103);
    let mut trials = 0;
    while trials < 1000 {
        let e = plannable_election(&mut rng, 1e-3);
        let seed = rng.gen::<u64>();
        let Some(plan) = random_crack_plan(&e, seed, true).unwrap() else {
            continue;
        };
        assert!(plan.new_source_share > e.split().y_bar.unwrap());
        let cracked = apply_crack(&e, &plan).unwrap();
        let before = e.declination().unwrap();
        let after = cracked.declination().unwrap();
        assert!(
            after > before,
            "crack failed to raise delta: {before} -> {after}"
        );
        trials += 1;
    }
}

#[test]
fn pack_hypothesis_raises_every_gap_in_1000_trials() {
    let taus = [0.0, 0.4, 1.0, 2.0, 5.0];
    let mut rng = testutil::rng(104);
    let mut trials = 0;
    while trials < 1000 {
        let e = plannable_election(&mut rng, 1e-3);
        let seed = rng.gen::<u64>();
        let Some(plan) = random_pack_plan(&e, seed, true).unwrap() else {
            continue;
        };
        let highest_lost = e.shares()[e.split().k - 1];
        assert!(plan.new_source_share > highest_lost);
        let packed = apply_pack(&e, &plan).unwrap();
        for tau in taus {
            let before = e.tau_gap(tau).unwrap();
            let after = packed.tau_gap(tau).unwrap();
            assert!(after > before, "tau {tau}: {before} -> {after}");
        }
        trials += 1;
    }
}

#[test]
fn theorem_suite_runs_clean() {
    let report = run_theorem_check(&TheoremCheckConfig {
        trials: 1000,
        seed: 2024,
        ..TheoremCheckConfig::default()
    })
    .unwrap();
    assert!(
        report.passed(),
        "counterexample: {:?}",
        report.counterexample
    );
    assert_eq!(report.trials, 1000);
    assert!(report.cracks > 0 && report.packs > 0);
}

#[test]
fn q_side_transform_lowers_declination() {
    // Q-cracking is mirror, P-crack, mirror; under the mirrored
    // hypothesis it must lower the declination.
    let mut rng = testutil::rng(105);
    let mut trials = 0;
    while trials < 300 {
        let e = plannable_election(&mut rng, 1e-3);
        let mirrored = mirror_q(&e);
        if mirrored.split().k_prime < 2 {
            continue;
        }
        let seed = rng.gen::<u64>();
        let Some(plan) = random_crack_plan(&mirrored, seed, true).unwrap() else {
            continue;
        };
        let transformed = mirror_q(&apply_crack(&mirrored, &plan).unwrap());
        let before = e.declination().unwrap();
        let after = transformed.declination().unwrap();
        assert!(
            after < before,
            "q-crack failed to lower delta: {before} -> {after}"
        );
        trials += 1;
    }
}

#[test]
fn single_transform_moves_declination_by_order_two_over_n() {
    // Transforming one district changes delta by roughly 2/N; allow
    // (0, 6/N). The approximation needs both blocks to hold a real share
    // of the districts and a modest vote movement: with a one- or
    // two-district block the block mean (and so the angle) can swing far
    // more than 2/N.
    let mut rng = testutil::rng(106);
    let mut trials = 0;
    while trials < 500 {
        let e = plannable_election(&mut rng, 2e-2);
        let split = e.split();
        let need = (e.n_districts() as f64 / 5.0).ceil().max(2.0) as usize;
        if split.k < need || split.k_prime < need + 1 {
            continue;
        }
        let n = e.n_districts() as f64;
        let source = e.shares()[split.k];
        let seed = rng.gen::<u64>();
        let transformed = if rng.gen_bool(0.5) {
            match random_crack_plan(&e, seed, true).unwrap() {
                Some(plan) if source - plan.new_source_share <= 0.15 => {
                    apply_crack(&e, &plan).unwrap()
                }
                _ => continue,
            }
        } else {
            match random_pack_plan(&e, seed, true).unwrap() {
                Some(plan) if source - plan.new_source_share <= 0.15 => {
                    apply_pack(&e, &plan).unwrap()
                }
                _ => continue,
            }
        };
        let change = transformed.declination().unwrap() - e.declination().unwrap();
        assert!(
            change > 0.0 && change < 6.0 / n,
            "delta change {change} outside (0, {}) for n={n}",
            6.0 / n
        );
        trials += 1;
    }
}

#[test]
fn unconstrained_random_elections_cover_both_sweeps() {
    // smoke check on the generator used by range properties
    let mut rng = testutil::rng(107);
    let mut sweeps = 0;
    for _ in 0..200 {
        let e = random_election(&mut rng, 4, 1e-3);
        let split = e.split();
        if split.k == 0 || split.k_prime == 0 {
            sweeps += 1;
        }
        assert!(e.shares().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
    assert!(
        sweeps > 0,
        "expected at least one one-party sweep in 200 draws"
    );
}
