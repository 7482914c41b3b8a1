//! Fixed-sample stepdown and stepup procedures on p-values, and the
//! sample-size searches that make them comparable to the sequential ones.
//!
//! Error rates are estimated with common random numbers across sample
//! sizes: each replicate fixes its noise once and every candidate `N` is
//! evaluated on it. For the known-variance Gaussian statistic the
//! standardized sum at size `N` is `theta sqrt(N) / sigma + sqrt(c) W_0 +
//! sqrt(1 - c) W_j` exactly in distribution, so only `J + 1` normals are
//! drawn per replicate. The t case simulates the observations.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::procedures::Mode;
use crate::simulation::{replicate_rng, Counts, ScenarioConfig, StatisticKind};
use crate::statistics::{normal_sf, t_pvalue};
use crate::step_values::StepValueLadder;

fn check_inputs(p: &[f64], alphas: &[f64]) -> Result<()> {
    if p.len() != alphas.len() {
        return Err(Error::LengthMismatch {
            expected: alphas.len(),
            got: p.len(),
        });
    }
    if let Some(i) = p.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(invalid(format!("p-value {} at index {i} outside [0, 1]", p[i])));
    }
    Ok(())
}

/// Stream indices sorted by p-value; ties keep index order.
fn order(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    idx
}

/// Rejects the `d` smallest p-values, `d = max{j : p_(i) <= alpha_i for all i <= j}`.
/// Returns the rejected indices in ascending order.
pub fn fixed_stepdown(p: &[f64], alphas: &[f64]) -> Result<Vec<usize>> {
    check_inputs(p, alphas)?;
    let idx = order(p);
    let d = idx
        .iter()
        .zip(alphas)
        .take_while(|(&j, &a)| p[j] <= a)
        .count();
    let mut out = idx[..d].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Rejects the `u` smallest p-values, `u = max{j : p_(j) <= alpha_j}`.
pub fn fixed_stepup(p: &[f64], alphas: &[f64]) -> Result<Vec<usize>> {
    check_inputs(p, alphas)?;
    let idx = order(p);
    let u = (1..=p.len())
        .rev()
        .find(|&j| p[idx[j - 1]] <= alphas[j - 1])
        .unwrap_or(0);
    let mut out = idx[..u].to_vec();
    out.sort_unstable();
    Ok(out)
}

pub fn fixed_procedure(mode: Mode, p: &[f64], alphas: &[f64]) -> Result<Vec<usize>> {
    match mode {
        Mode::Stepdown => fixed_stepdown(p, alphas),
        Mode::Stepup => fixed_stepup(p, alphas),
    }
}

/// A fixed-sample comparator and its estimated error rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedCalibration {
    pub n: usize,
    pub nominal_alpha: f64,
    pub type1_rate: f64,
    pub type2_rate: f64,
}

/// Estimated `(type I, type II)` rates on the grid `ns x alphas`, where the
/// step values at nominal level `a` are `a * shape_j`.
///
/// Rejection counts are found per replicate and size from the sorted
/// p-values: stepdown rejects `#{j : max_{i<=j} p_(i)/shape_i <= a}` and
/// stepup rejects `#{j : min_{i>=j} p_(i)/shape_i <= a}`, both monotone in
/// `j`, so every grid level costs one binary search.
pub fn rate_grid(
    scenario: &ScenarioConfig,
    mode: Mode,
    shape: &[f64],
    alphas: &[f64],
    ns: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    scenario.validate()?;
    let j_total = scenario.streams;
    if shape.len() != j_total {
        return Err(Error::LengthMismatch {
            expected: j_total,
            got: shape.len(),
        });
    }
    if shape.iter().any(|&s| !(s > 0.0)) {
        return Err(invalid("step value shape must be positive"));
    }
    if reps == 0 || ns.is_empty() || alphas.is_empty() {
        return Err(invalid("empty search grid or zero replicates"));
    }
    let t_case = matches!(scenario.statistic, StatisticKind::TGlr { .. });
    if ns.iter().any(|&n| n == 0 || (t_case && n < 2)) {
        return Err(invalid("fixed sample sizes must be at least 1 (2 for t-tests)"));
    }
    let mut sorted_ns = ns.to_vec();
    sorted_ns.sort_unstable();
    sorted_ns.dedup();
    let n_max = *sorted_ns.last().unwrap();
    let slots: Vec<usize> = ns
        .iter()
        .map(|n| sorted_ns.binary_search(n).unwrap())
        .collect();

    let theta = scenario.theta();
    let truth = scenario.is_true_null();
    let (sc, so) = (scenario.correlation.sqrt(), (1.0 - scenario.correlation).sqrt());
    let sigma = scenario.sigma;
    let cells = sorted_ns.len() * alphas.len();

    let counts = (0..reps)
        .into_par_iter()
        .fold(
            || vec![(0u64, 0u64); cells],
            |mut acc, rep| {
                let mut rng = replicate_rng(seed, rep);
                let mut p = vec![0.0; j_total];
                let eval = |slot: usize, p: &[f64], acc: &mut Vec<(u64, u64)>| {
                    let idx = order(p);
                    let ratio: Vec<f64> = idx.iter().zip(shape).map(|(&j, s)| p[j] / s).collect();
                    let key: Vec<f64> = match mode {
                        Mode::Stepdown => ratio
                            .iter()
                            .scan(f64::NEG_INFINITY, |m, &r| {
                                *m = m.max(r);
                                Some(*m)
                            })
                            .collect(),
                        Mode::Stepup => {
                            let mut k = ratio.clone();
                            for i in (0..j_total.saturating_sub(1)).rev() {
                                k[i] = k[i].min(k[i + 1]);
                            }
                            k
                        }
                    };
                    let mut prefix_true = vec![0usize; j_total + 1];
                    for (i, &j) in idx.iter().enumerate() {
                        prefix_true[i + 1] = prefix_true[i] + truth[j] as usize;
                    }
                    let total_true = prefix_true[j_total];
                    for (ai, &a) in alphas.iter().enumerate() {
                        let d = key.partition_point(|&k| k <= a);
                        let v = prefix_true[d];
                        let c = Counts {
                            rejected: d,
                            false_rejections: v,
                            accepted: j_total - d,
                            false_acceptances: (j_total - total_true) - (d - v),
                        };
                        let (e1, e2) = c.errors(&scenario.metric);
                        let cell = &mut acc[slot * alphas.len() + ai];
                        cell.0 += e1 as u64;
                        cell.1 += e2 as u64;
                    }
                };
                if t_case {
                    let mut mean = vec![0.0; j_total];
                    let mut m2 = vec![0.0; j_total];
                    let mut next = 0;
                    for n in 1..=n_max {
                        let z0: f64 = rng.sample(StandardNormal);
                        for j in 0..j_total {
                            let z: f64 = rng.sample(StandardNormal);
                            let x = theta[j] + sigma * (sc * z0 + so * z);
                            let d = x - mean[j];
                            mean[j] += d / n as f64;
                            m2[j] += d * (x - mean[j]);
                        }
                        if sorted_ns[next] == n {
                            for j in 0..j_total {
                                let sighat = (m2[j] / n as f64).sqrt();
                                p[j] = t_pvalue(n, mean[j], sighat).unwrap_or(1.0);
                            }
                            eval(next, &p, &mut acc);
                            next += 1;
                        }
                    }
                } else {
                    let w0: f64 = rng.sample(StandardNormal);
                    let noise: Vec<f64> = (0..j_total)
                        .map(|_| sc * w0 + so * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    for (slot, &n) in sorted_ns.iter().enumerate() {
                        let root = (n as f64).sqrt();
                        for j in 0..j_total {
                            p[j] = normal_sf(theta[j] * root / sigma + noise[j]);
                        }
                        eval(slot, &p, &mut acc);
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![(0u64, 0u64); cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        );

    let r = reps as f64;
    Ok(slots
        .iter()
        .map(|&s| {
            (0..alphas.len())
                .map(|ai| {
                    let (e1, e2) = counts[s * alphas.len() + ai];
                    (e1 as f64 / r, e2 as f64 / r)
                })
                .collect()
        })
        .collect())
}

fn shape_of(ladder: &StepValueLadder) -> (f64, Vec<f64>) {
    let alpha = ladder.params().alpha;
    (alpha, ladder.alphas().iter().map(|a| a / alpha).collect())
}

/// Estimated `(type I, type II)` rates of the fixed procedure at size `n`.
pub fn fixed_error_rates(
    scenario: &ScenarioConfig,
    mode: Mode,
    ladder: &StepValueLadder,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (alpha, shape) = shape_of(ladder);
    Ok(rate_grid(scenario, mode, &shape, &[alpha], &[n], reps, seed)?[0][0])
}

/// Smallest-distance `N` in `n_range` for a target type II rate.
///
/// Assumes the type II rate is nonincreasing in `N`. A coarse pass over
/// about 32 sizes brackets the first size meeting the target and a second
/// pass evaluates every size in that bracket; ties go to the smaller `N`.
pub fn calibrate_fixed_n(
    scenario: &ScenarioConfig,
    mode: Mode,
    ladder: &StepValueLadder,
    target: f64,
    reps: usize,
    seed: u64,
    n_range: (usize, usize),
) -> Result<FixedCalibration> {
    let (n_min, n_max) = n_range;
    if n_min == 0 || n_min > n_max {
        return Err(invalid(format!("bad sample size range [{n_min}, {n_max}]")));
    }
    if reps < 1000 {
        return Err(invalid(format!("calibration needs at least 1000 replicates, got {reps}")));
    }
    let (alpha, shape) = shape_of(ladder);
    let step = (n_max - n_min).div_ceil(32).max(1);
    let mut coarse: Vec<usize> = (n_min..=n_max).step_by(step).collect();
    if *coarse.last().unwrap() != n_max {
        coarse.push(n_max);
    }
    let rates = rate_grid(scenario, mode, &shape, &[alpha], &coarse, reps, seed)?;
    let mut seen: Vec<(usize, (f64, f64))> =
        coarse.iter().zip(&rates).map(|(&n, r)| (n, r[0])).collect();
    let first = seen.iter().position(|(_, r)| r.1 <= target).ok_or_else(|| {
        Error::CalibrationFailed {
            target,
            n_min,
            n_max,
            detail: format!("type II rate at N = {n_max} is {:.4}", seen.last().unwrap().1 .1),
        }
    })?;
    if first > 0 {
        let inner: Vec<usize> = (seen[first - 1].0 + 1..seen[first].0).collect();
        if !inner.is_empty() {
            let fine = rate_grid(scenario, mode, &shape, &[alpha], &inner, reps, seed)?;
            seen.extend(inner.iter().zip(&fine).map(|(&n, r)| (n, r[0])));
        }
    }
    let (n, (t1, t2)) = seen
        .iter()
        .copied()
        .min_by(|a, b| {
            (a.1 .1 - target)
                .abs()
                .total_cmp(&(b.1 .1 - target).abs())
                .then(a.0.cmp(&b.0))
        })
        .unwrap();
    Ok(FixedCalibration {
        n,
        nominal_alpha: alpha,
        type1_rate: t1,
        type2_rate: t2,
    })
}

/// Exhaustive search over nominal levels and sizes for the fixed procedure
/// whose `(type I, type II)` rates are closest to `targets` in the maximum
/// absolute deviation. Ties go to the smaller `N`, then the smaller level.
#[allow(clippy::too_many_arguments)]
pub fn match_both_rates(
    scenario: &ScenarioConfig,
    mode: Mode,
    ladder: &StepValueLadder,
    targets: (f64, f64),
    alpha_grid: &[f64],
    n_range: (usize, usize),
    reps: usize,
    seed: u64,
) -> Result<FixedCalibration> {
    let (n_min, n_max) = n_range;
    if alpha_grid.is_empty() || n_min == 0 || n_min > n_max {
        return Err(invalid("empty search grid"));
    }
    if alpha_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(invalid("nominal levels must lie in (0, 1)"));
    }
    let (_, shape) = shape_of(ladder);
    let ns: Vec<usize> = (n_min..=n_max).collect();
    let grid = rate_grid(scenario, mode, &shape, alpha_grid, &ns, reps, seed)?;
    let mut best: Option<(f64, FixedCalibration)> = None;
    for (&n, row) in ns.iter().zip(&grid) {
        for (&a, &(t1, t2)) in alpha_grid.iter().zip(row) {
            let dev = (t1 - targets.0).abs().max((t2 - targets.1).abs());
            let better = match &best {
                None => true,
                Some((d, _)) => dev < *d,
            };
            if better {
                best = Some((
                    dev,
                    FixedCalibration {
                        n,
                        nominal_alpha: a,
                        type1_rate: t1,
                        type2_rate: t2,
                    },
                ));
            }
        }
    }
    Ok(best.unwrap().1)
}
