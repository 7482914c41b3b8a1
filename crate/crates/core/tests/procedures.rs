use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqstep::critical_values::{rejective_ladder, sprt_ladder, standardize, StandardizedLadder};
use seqstep::fixed_baseline::{fixed_stepdown, fixed_stepup};
use seqstep::procedures::*;
use seqstep::simulation::GaussianSource;
use seqstep::statistics::{HypothesisSpec, StreamStatistic};
use seqstep::step_values::StepValueLadder;

fn sorted_steps(v: Vec<f64>) -> Vec<f64> {
    let mut v = v;
    v.sort_by(f64::total_cmp);
    v
}

fn sprt(alphas: Vec<f64>, betas: Vec<f64>) -> StandardizedLadder {
    let steps = StepValueLadder::custom(sorted_steps(alphas), Some(sorted_steps(betas))).unwrap();
    standardize(&[sprt_ladder(&steps, 0.583).unwrap()], None).unwrap()
}

fn gaussian_run(
    cfg: &ProcedureConfig,
    theta: Vec<f64>,
    c: f64,
    seed: u64,
) -> ProcedureState<StreamStatistic> {
    let j = theta.len();
    let mut src = GaussianSource::new(theta, 1.0, c, ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let stats = vec![StreamStatistic::new(HypothesisSpec::GaussianMean { sigma: 1.0 }); j];
    run(cfg, &mut src, stats).unwrap()
}

fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64, u64)> {
    (1usize..10).prop_flat_map(|j| {
        (
            prop::collection::vec(0.001f64..0.2, j),
            prop::collection::vec(0.001f64..0.3, j),
            prop::collection::vec(prop::sample::select(vec![0.0, 1.0]), j),
            prop::sample::select(vec![0.0, 0.5, 0.95, 1.0]),
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn replays_are_deterministic((a, b, theta, c, seed) in case(), mode in prop::sample::select(vec![Mode::Stepdown, Mode::Stepup])) {
        let mut cfg = ProcedureConfig::new(mode, sprt(a, b));
        cfg.tie_seed = seed;
        cfg.trace = true;
        let x = gaussian_run(&cfg, theta.clone(), c, seed);
        let y = gaussian_run(&cfg, theta, c, seed);
        prop_assert_eq!(&x.decisions, &y.decisions);
        prop_assert_eq!(&x.trace, &y.trace);
    }

    /// Each stage of a stepdown run ends exactly when some statistic leaves
    /// `(a_{c+1}, b_{r+1})`, an interval fixed before the stage begins.
    #[test]
    fn stepdown_stages_end_on_the_fixed_interval((a, b, theta, c, seed) in case()) {
        let ladder = sprt(a, b);
        let mut cfg = ProcedureConfig::new(Mode::Stepdown, ladder.clone());
        cfg.trace = true;
        let st = gaussian_run(&cfg, theta, c, seed);
        let lower = ladder.lower().unwrap();
        for t in &st.trace {
            let (lo, hi) = (lower[t.accepted_before], ladder.upper()[t.rejected_before]);
            let max = t.values.iter().map(|v| v.2).fold(f64::NEG_INFINITY, f64::max);
            let min = t.values.iter().map(|v| v.2).fold(f64::INFINITY, f64::min);
            prop_assert!(max >= hi || min <= lo);
            prop_assert!(!t.rejected.iter().any(|s| t.accepted.contains(s)));
        }
    }

    #[test]
    fn horizon_one_reduces_to_fixed_sample(
        p in prop::collection::vec(0.0001f64..1.0, 1..=10),
        steps in prop::collection::vec(0.001f64..0.5, 10),
    ) {
        let j = p.len();
        let alphas = sorted_steps(steps[..j].to_vec());
        let ladder = rejective_ladder(&alphas, Some(1)).unwrap();
        let z: Vec<Vec<f64>> = p.iter().map(|x| vec![-x.ln()]).collect();
        let mut sets = Vec::new();
        for mode in [Mode::Stepdown, Mode::Stepup] {
            let cfg = ProcedureConfig::rejective(mode, ladder.standardized(), 1);
            let st = run(&cfg, &mut ReplaySource::new(z.clone()), vec![InjectedStatistic::default(); j]).unwrap();
            prop_assert_eq!(st.termination, Termination::Completed);
            let mut r: Vec<usize> = st.decisions.iter()
                .filter(|d| d.verdict == Verdict::Rejected)
                .map(|d| d.stream)
                .collect();
            r.sort_unstable();
            sets.push(r);
        }
        prop_assert_eq!(&sets[0], &fixed_stepdown(&p, &alphas).unwrap());
        prop_assert_eq!(&sets[1], &fixed_stepup(&p, &alphas).unwrap());
        prop_assert!(sets[0].iter().all(|s| sets[1].contains(s)));
    }
}

#[test]
fn rejective_accepts_only_at_horizon() {
    let ladder = rejective_ladder(&[0.01, 0.02, 0.05], Some(15)).unwrap();
    for mode in [Mode::Stepdown, Mode::Stepup] {
        for seed in 0..50 {
            let cfg = ProcedureConfig::rejective(mode, ladder.standardized(), 15);
            let st = gaussian_run(&cfg, vec![0.0, 0.0, 1.0], 0.3, seed);
            for d in &st.decisions {
                if d.verdict == Verdict::Accepted {
                    assert_eq!(d.sample_size, 15);
                }
                assert!(d.sample_size <= 15);
            }
            assert_eq!(st.rejected_count + st.accepted_count, 3);
        }
    }
}

#[test]
fn truncated_run_reports_horizon() {
    let mut cfg = ProcedureConfig::new(Mode::Stepup, sprt(vec![0.001; 4], vec![0.001; 4]));
    cfg.horizon = Some(3);
    let st = gaussian_run(&cfg, vec![0.0, 0.0, 1.0, 1.0], 0.0, 5);
    assert_eq!(st.termination, Termination::HorizonReached);
    assert!(st.active.len() + st.decisions.len() == 4);
    assert!(st.decisions.iter().all(|d| d.sample_size <= 3));
}

#[test]
fn decision_log_csv_is_sorted_and_one_based() {
    let cfg = ProcedureConfig::new(Mode::Stepdown, sprt(vec![0.01, 0.02, 0.05], vec![0.05, 0.1, 0.2]));
    let st = gaussian_run(&cfg, vec![0.0, 1.0, 1.0], 0.0, 11);
    let mut out = Vec::new();
    write_decisions_csv(&mut out, 0, &st.decisions, true).unwrap();
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    let streams: Vec<usize> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(streams.iter().all(|&s| (1..=3).contains(&s)));
}
