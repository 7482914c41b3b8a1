use proptest::prelude::*;

use seqstep::fixed_baseline::*;
use seqstep::procedures::Mode;
use seqstep::simulation::{ErrorMetric, ScenarioConfig, StatisticKind};

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=20).prop_flat_map(|j| {
        (
            prop::collection::vec(0.0f64..1.0, j),
            prop::collection::vec(0.0001f64..0.3, j).prop_map(|mut a| {
                a.sort_by(f64::total_cmp);
                a
            }),
        )
    })
}

proptest! {
    #[test]
    fn stepup_rejects_a_superset((p, a) in instance()) {
        let down = fixed_stepdown(&p, &a).unwrap();
        let up = fixed_stepup(&p, &a).unwrap();
        prop_assert!(down.iter().all(|j| up.contains(j)));
    }

    #[test]
    fn larger_p_values_never_reject_more((p, a) in instance(), eps in 0.0001f64..0.2) {
        let q: Vec<f64> = p.iter().map(|x| (x + eps).min(1.0)).collect();
        for mode in [Mode::Stepdown, Mode::Stepup] {
            let before = fixed_procedure(mode, &p, &a).unwrap();
            let after = fixed_procedure(mode, &q, &a).unwrap();
            prop_assert!(after.iter().all(|j| before.contains(j)));
        }
    }

    #[test]
    fn relabelling_permutes_the_output((p, a) in instance(), seed in any::<u64>()) {
        let j = p.len();
        // a permutation from the seed, by sorting on a hash
        let mut perm: Vec<usize> = (0..j).collect();
        perm.sort_by_key(|&i| (i as u64 + 1).wrapping_mul(seed | 1).rotate_left(29));
        let q: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        for mode in [Mode::Stepdown, Mode::Stepup] {
            let base = fixed_procedure(mode, &p, &a).unwrap();
            let mut mapped: Vec<usize> = fixed_procedure(mode, &q, &a)
                .unwrap()
                .into_iter()
                .map(|k| perm[k])
                .collect();
            mapped.sort_unstable();
            // distinct p-values make the relabelled answer unique
            let mut distinct = p.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() == j {
                prop_assert_eq!(&mapped, &base);
            } else {
                prop_assert_eq!(mapped.len(), base.len());
            }
        }
    }
}

fn scenario(statistic: StatisticKind) -> ScenarioConfig {
    ScenarioConfig {
        streams: 30,
        true_nulls: 10,
        sigma: 2.0,
        correlation: 0.5,
        theta_null: 0.0,
        theta_alt: 1.0,
        statistic,
        metric: ErrorMetric::Fdp {
            gamma1: 0.1,
            gamma2: 0.1,
        },
        alpha: 0.05,
        beta: 0.2,
        reps: 2000,
        seed: 17,
    }
}

#[test]
fn type_two_rate_falls_with_sample_size() {
    for statistic in [StatisticKind::GaussianKnownSigma, StatisticKind::TGlr { delta: 1.0 }] {
        let s = scenario(statistic);
        let ladder = s.step_values(Mode::Stepup).unwrap();
        let alpha = ladder.params().alpha;
        let shape: Vec<f64> = ladder.alphas().iter().map(|a| a / alpha).collect();
        let ns = [5, 20, 60, 150];
        let grid = rate_grid(&s, Mode::Stepup, &shape, &[alpha], &ns, 1000, 3).unwrap();
        let t2: Vec<f64> = grid.iter().map(|r| r[0].1).collect();
        assert!(t2.windows(2).all(|w| w[0] >= w[1]), "{statistic:?}: {t2:?}");
        assert!(t2[3] < 0.05);
    }
}

#[test]
fn matching_search_finds_the_calibrated_point() {
    let s = scenario(StatisticKind::GaussianKnownSigma);
    let ladder = s.step_values(Mode::Stepdown).unwrap();
    let c = calibrate_fixed_n(&s, Mode::Stepdown, &ladder, 0.05, 2000, 5, (1, 300)).unwrap();
    let m = match_both_rates(
        &s,
        Mode::Stepdown,
        &ladder,
        (c.type1_rate, c.type2_rate),
        &[0.01, 0.05, 0.1],
        (c.n.saturating_sub(3).max(1), c.n + 3),
        2000,
        5,
    )
    .unwrap();
    assert_eq!((m.n, m.nominal_alpha), (c.n, 0.05));
    assert_eq!((m.type1_rate, m.type2_rate), (c.type1_rate, c.type2_rate));
}

#[test]
fn unreachable_target_is_reported() {
    let s = scenario(StatisticKind::GaussianKnownSigma);
    let ladder = s.step_values(Mode::Stepdown).unwrap();
    let err = calibrate_fixed_n(&s, Mode::Stepdown, &ladder, 0.0001, 1000, 5, (1, 3)).unwrap_err();
    assert!(matches!(err, seqstep::Error::CalibrationFailed { .. }), "{err}");
}
