//! Critical-value ladders and standardizing maps.
//!
//! For each stream the procedures need boundaries
//! `A_1 <= ... <= A_J <= B_J <= ... <= B_1` such that the sequential test
//! sampling until the statistic leaves `(A_1, B_w)` has type I error at most
//! `alpha_w`, and symmetrically for `(A_w, B_1)` and `beta_w`. Streams whose
//! ladders differ are made comparable through increasing piecewise-linear
//! standardizing maps onto common anchors `a_w`, `b_w`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::step_values::StepValueLadder;

/// Overshoot correction for continuous data.
pub const DEFAULT_RHO: f64 = 0.583;

/// Wald's SPRT boundaries `(log(b / (1 - a)) + rho, log((1 - b) / a) - rho)`.
pub fn wald_boundaries(a: f64, b: f64, rho: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
        return Err(invalid(format!("error levels ({a}, {b}) must lie in (0, 1)")));
    }
    if a + b > 1.0 {
        return Err(invalid(format!("a + b = {} exceeds 1", a + b)));
    }
    if rho < 0.0 {
        return Err(invalid(format!("rho = {rho} must be nonnegative")));
    }
    Ok(((b / (1.0 - a)).ln() + rho, ((1.0 - b) / a).ln() - rho))
}

/// Per-stream boundaries `A_w` (lower) and `B_w` (upper), `w = 1..=J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLadder {
    lower: Vec<f64>,
    upper: Vec<f64>,
    rho: f64,
}

impl CriticalLadder {
    /// Checks the chain `A_1 <= ... <= A_J <= B_J <= ... <= B_1`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, rho: f64) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(invalid("critical ladder must be nonempty"));
        }
        if let Some(i) = lower.windows(2).position(|w| !(w[0] <= w[1])) {
            return Err(Error::NotMonotone {
                what: "lower critical values",
                index: i + 1,
            });
        }
        if let Some(i) = upper.windows(2).position(|w| !(w[0] >= w[1])) {
            return Err(Error::NotMonotone {
                what: "upper critical values (nonincreasing)",
                index: i + 1,
            });
        }
        let j = lower.len() - 1;
        if !(lower[j] <= upper[j]) {
            return Err(invalid(format!(
                "A_J = {} exceeds B_J = {}",
                lower[j], upper[j]
            )));
        }
        Ok(Self { lower, upper, rho })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Plain-text audit table, one row per level: `w A B a b`.
    pub fn to_table(&self, standardized: Option<&StandardizedLadder>) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6} {:>14} {:>14} {:>14} {:>14}",
            "w", "A", "B", "a", "b"
        );
        for w in 0..self.len() {
            let (a, b) = match standardized {
                Some(s) => (
                    s.lower().map(|l| l[w]).unwrap_or(f64::NAN),
                    s.upper()[w],
                ),
                None => (self.lower[w], self.upper[w]),
            };
            let _ = writeln!(
                out,
                "{:>6} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
                w + 1,
                self.lower[w],
                self.upper[w],
                a,
                b
            );
        }
        out
    }
}

/// Closed-form SPRT-based ladder:
///
/// `A_w = log(beta_w (1 - beta_1) / (1 - beta_1 - alpha_1 (1 - beta_w))) + rho`
/// `B_w = log((1 - alpha_1 - beta_1 (1 - alpha_w)) / (alpha_w (1 - alpha_1))) - rho`
///
/// For `w = 1` these are Wald's boundaries at `(alpha_1, beta_1)`.
pub fn sprt_ladder(ladder: &StepValueLadder, rho: f64) -> Result<CriticalLadder> {
    let alphas = ladder.alphas();
    let betas = ladder
        .betas()
        .ok_or_else(|| invalid("SPRT ladder needs type II step values"))?;
    if rho < 0.0 {
        return Err(invalid(format!("rho = {rho} must be nonnegative")));
    }
    let (a1, b1) = (alphas[0], betas[0]);
    if a1 + b1 > 1.0 {
        return Err(invalid(format!("alpha_1 + beta_1 = {} exceeds 1", a1 + b1)));
    }
    if let Some(w) = alphas.iter().chain(betas).position(|&x| x <= 0.0) {
        return Err(invalid(format!("zero step value at position {}", w % alphas.len() + 1)));
    }
    let lower = betas
        .iter()
        .map(|&bw| (bw * (1.0 - b1) / (1.0 - b1 - a1 * (1.0 - bw))).ln() + rho)
        .collect();
    let upper = alphas
        .iter()
        .map(|&aw| ((1.0 - a1 - b1 * (1.0 - aw)) / (aw * (1.0 - a1))).ln() - rho)
        .collect();
    CriticalLadder::new(lower, upper, rho)
}

/// `(alpha~_w, beta~_w)` implied by [`sprt_ladder`]:
/// `alpha~_w = alpha_1 (1 - beta_w) / (1 - beta_1)` and
/// `beta~_w = beta_1 (1 - alpha_w) / (1 - alpha_1)`.
pub fn implied_levels(ladder: &StepValueLadder) -> Result<Vec<(f64, f64)>> {
    let alphas = ladder.alphas();
    let betas = ladder
        .betas()
        .ok_or_else(|| invalid("needs type II step values"))?;
    let (a1, b1) = (alphas[0], betas[0]);
    Ok(alphas
        .iter()
        .zip(betas)
        .map(|(&aw, &bw)| (a1 * (1.0 - bw) / (1.0 - b1), b1 * (1.0 - aw) / (1.0 - a1)))
        .collect())
}

/// Increasing map from one stream's statistic scale to the common scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Standardizer {
    Identity,
    /// Linear interpolation through strictly increasing knots, continued
    /// with slope 1 outside them.
    PiecewiseLinear { xs: Vec<f64>, ys: Vec<f64> },
}

impl Standardizer {
    fn through(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.windows(2).any(|w| !(w[0] < w[1])) || ys.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("standardizer knots must be strictly increasing"));
        }
        Ok(Standardizer::PiecewiseLinear { xs, ys })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Standardizer::Identity => x,
            Standardizer::PiecewiseLinear { xs, ys } => {
                let last = xs.len() - 1;
                if x <= xs[0] {
                    return ys[0] + (x - xs[0]);
                }
                if x >= xs[last] {
                    return ys[last] + (x - xs[last]);
                }
                let i = xs.partition_point(|&k| k <= x) - 1;
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + t * (ys[i + 1] - ys[i])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StreamMaps {
    Shared(Standardizer),
    PerStream(Vec<Standardizer>),
}

impl StreamMaps {
    #[inline]
    pub fn apply(&self, stream: usize, x: f64) -> f64 {
        match self {
            StreamMaps::Shared(s) => s.apply(x),
            StreamMaps::PerStream(v) => v[stream].apply(x),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, StreamMaps::Shared(Standardizer::Identity))
    }
}

/// Common thresholds `a_w` (absent for rejective procedures) and `b_w`,
/// plus the per-stream maps that produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedLadder {
    lower: Option<Vec<f64>>,
    upper: Vec<f64>,
    maps: StreamMaps,
}

impl StandardizedLadder {
    /// Thresholds used as-is, with identity maps.
    pub fn identity(lower: Option<Vec<f64>>, upper: Vec<f64>) -> Result<Self> {
        if let Some(l) = &lower {
            CriticalLadder::new(l.clone(), upper.clone(), 0.0)?;
        } else if let Some(i) = upper.windows(2).position(|w| !(w[0] >= w[1])) {
            return Err(Error::NotMonotone {
                what: "upper thresholds (nonincreasing)",
                index: i + 1,
            });
        }
        Ok(Self {
            lower,
            upper,
            maps: StreamMaps::Shared(Standardizer::Identity),
        })
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn lower(&self) -> Option<&[f64]> {
        self.lower.as_deref()
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn maps(&self) -> &StreamMaps {
        &self.maps
    }

    #[inline]
    pub fn apply(&self, stream: usize, x: f64) -> f64 {
        self.maps.apply(stream, x)
    }
}

fn ties(v: &[f64]) -> Vec<bool> {
    v.windows(2).map(|w| w[0] == w[1]).collect()
}

/// Default integer anchors with ties collapsed: distinct levels step by 1,
/// ending at `-1` for `a_J` and `+1` for `b_J`.
fn default_anchors(tie: &[bool], sign: f64) -> Vec<f64> {
    let j = tie.len() + 1;
    let mut out = vec![0.0; j];
    out[j - 1] = sign;
    for w in (0..j - 1).rev() {
        out[w] = if tie[w] { out[w + 1] } else { out[w + 1] + sign };
    }
    out
}

/// Builds common thresholds and per-stream maps from each stream's ladder.
///
/// When every stream has the same ladder and no anchors are given, the
/// identity map is used and the thresholds are the ladder itself.
pub fn standardize(
    ladders: &[CriticalLadder],
    anchors: Option<(&[f64], &[f64])>,
) -> Result<StandardizedLadder> {
    let first = ladders
        .first()
        .ok_or_else(|| invalid("no stream ladders to standardize"))?;
    let j = first.len();
    if let Some(l) = ladders.iter().find(|l| l.len() != j) {
        return Err(Error::LengthMismatch {
            expected: j,
            got: l.len(),
        });
    }
    let all_same = ladders
        .iter()
        .all(|l| l.lower == first.lower && l.upper == first.upper);
    if all_same && anchors.is_none() {
        return Ok(StandardizedLadder {
            lower: Some(first.lower.clone()),
            upper: first.upper.clone(),
            maps: StreamMaps::Shared(Standardizer::Identity),
        });
    }

    let lower_ties = ties(&first.lower);
    let upper_ties = ties(&first.upper);
    for l in ladders {
        if ties(&l.lower) != lower_ties || ties(&l.upper) != upper_ties {
            return Err(invalid("streams disagree on critical-value tie pattern"));
        }
        if !(l.lower[j - 1] < l.upper[j - 1]) {
            return Err(invalid("A_J must be strictly below B_J to standardize"));
        }
    }

    let (a, b) = match anchors {
        Some((a, b)) => {
            if a.len() != j || b.len() != j {
                return Err(Error::LengthMismatch {
                    expected: j,
                    got: a.len().min(b.len()),
                });
            }
            for w in 0..j - 1 {
                let a_ok = if lower_ties[w] { a[w] == a[w + 1] } else { a[w] < a[w + 1] };
                let b_ok = if upper_ties[w] { b[w] == b[w + 1] } else { b[w] > b[w + 1] };
                if !a_ok || !b_ok {
                    return Err(invalid(format!(
                        "anchors violate monotonicity or tie pattern at w = {}",
                        w + 1
                    )));
                }
            }
            if !(a[j - 1] < b[j - 1]) {
                return Err(invalid("anchor a_J must be below b_J"));
            }
            (a.to_vec(), b.to_vec())
        }
        None => (default_anchors(&lower_ties, -1.0), default_anchors(&upper_ties, 1.0)),
    };

    let map_for = |l: &CriticalLadder| -> Result<Standardizer> {
        let mut xs = Vec::with_capacity(2 * j);
        let mut ys = Vec::with_capacity(2 * j);
        let knots = l
            .lower
            .iter()
            .zip(&a)
            .chain(l.upper.iter().zip(&b).rev());
        for (&x, &y) in knots {
            if xs.last() != Some(&x) {
                xs.push(x);
                ys.push(y);
            }
        }
        Standardizer::through(xs, ys)
    };
    let maps = if all_same {
        StreamMaps::Shared(map_for(first)?)
    } else {
        StreamMaps::PerStream(ladders.iter().map(map_for).collect::<Result<_>>()?)
    };
    Ok(StandardizedLadder {
        lower: Some(a),
        upper: b,
        maps,
    })
}

/// Upper-only boundaries for the rejective procedures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectiveLadder {
    upper: Vec<f64>,
    horizon: Option<usize>,
}

impl RejectiveLadder {
    pub fn new(upper: Vec<f64>, horizon: Option<usize>) -> Result<Self> {
        if upper.is_empty() {
            return Err(invalid("rejective ladder must be nonempty"));
        }
        if let Some(i) = upper.windows(2).position(|w| !(w[0] >= w[1])) {
            return Err(Error::NotMonotone {
                what: "rejective critical values (nonincreasing)",
                index: i + 1,
            });
        }
        Ok(Self { upper, horizon })
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    /// Common thresholds for streams that all share this ladder.
    pub fn standardized(&self) -> StandardizedLadder {
        StandardizedLadder {
            lower: None,
            upper: self.upper.clone(),
            maps: StreamMaps::Shared(Standardizer::Identity),
        }
    }
}

/// `B_w = -log(alpha_w)`.
///
/// For a log-likelihood ratio, `exp(Lambda(n))` is a nonnegative martingale
/// with mean 1 under the null, so `P(sup_n Lambda(n) >= -log a) <= a` for
/// any horizon.
pub fn rejective_ladder(alphas: &[f64], horizon: Option<usize>) -> Result<RejectiveLadder> {
    if let Some(w) = alphas.iter().position(|&a| !(a > 0.0 && a <= 1.0)) {
        return Err(invalid(format!(
            "alpha_{} = {} must lie in (0, 1]",
            w + 1,
            alphas[w]
        )));
    }
    if horizon == Some(0) {
        return Err(invalid("horizon must be at least 1"));
    }
    RejectiveLadder::new(alphas.iter().map(|a| -a.ln()).collect(), horizon)
}

/// Running maxima of the unsigned t-GLR branch over `2 <= n <= horizon`.
///
/// With `shift = 0` the data are standard normal and the positive-branch
/// magnitude `sqrt(2 n L_H)` is tracked; with `shift = delta` the data have
/// mean `delta` and the negative-branch magnitude `sqrt(2 n L_G)` is tracked.
/// Both are pivotal in the unknown variance.
fn t_glr_running_max(shift: f64, horizon: usize, reps: usize, seed: u64) -> Vec<f64> {
    let mut out: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep);
            let mut mean = 0.0;
            let mut m2 = 0.0;
            let mut best = f64::NEG_INFINITY;
            for n in 1..=horizon {
                let z: f64 = StandardNormal.sample(&mut rng);
                let x = shift + z;
                let d = x - mean;
                mean += d / n as f64;
                m2 += d * (x - mean);
                if n >= 2 {
                    let nf = n as f64;
                    let s2 = m2 / nf;
                    let dev = mean - shift;
                    let l = 0.5 * nf * (dev * dev / s2).ln_1p();
                    best = best.max((2.0 * nf * l).sqrt());
                }
            }
            best
        })
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// Value exceeded by exactly `floor(level * reps)` of the sorted sample.
fn upper_quantile(sorted: &[f64], level: f64) -> Result<f64> {
    let reps = sorted.len();
    let expected = level * reps as f64;
    if expected < 10.0 {
        return Err(Error::InfeasibleQuantile {
            level,
            reps,
            expected,
        });
    }
    let exceed = (expected.floor() as usize).min(reps);
    Ok(sorted[reps - exceed])
}

/// Monte Carlo critical values for the t-GLR statistic.
///
/// `B_w` is the empirical `(1 - alpha_w)` quantile of the running maximum of
/// `sqrt(2 n L_H)` over `n <= horizon` for standard normal data, ignoring the
/// sign condition on the sample mean (which only shrinks the crossing event).
/// `A_w` is minus the `(1 - beta_w)` quantile of the running maximum of
/// `sqrt(2 n L_G)` for data with mean `delta`. Replicate `i` draws from
/// stream `i` of a ChaCha8 generator seeded with `seed` (null) or `seed + 1`
/// (alternative).
pub fn glr_t_calibrate(
    delta: f64,
    ladder: &StepValueLadder,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<CriticalLadder> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta = {delta} must be positive")));
    }
    if horizon < 2 {
        return Err(invalid("t-GLR calibration horizon must be at least 2"));
    }
    if reps == 0 {
        return Err(invalid("calibration needs at least one replicate"));
    }
    let betas = ladder
        .betas()
        .ok_or_else(|| invalid("t-GLR calibration needs type II step values"))?;
    let reps_f = reps as f64;
    for &level in ladder.alphas().iter().chain(betas) {
        if level * reps_f < 10.0 {
            return Err(Error::InfeasibleQuantile {
                level,
                reps,
                expected: level * reps_f,
            });
        }
    }
    let null_max = t_glr_running_max(0.0, horizon, reps, seed);
    let alt_max = t_glr_running_max(delta, horizon, reps, seed.wrapping_add(1));
    let upper = ladder
        .alphas()
        .iter()
        .map(|&a| upper_quantile(&null_max, a))
        .collect::<Result<Vec<_>>>()?;
    let lower = betas
        .iter()
        .map(|&b| upper_quantile(&alt_max, b).map(|q| -q))
        .collect::<Result<Vec<_>>>()?;
    CriticalLadder::new(lower, upper, 0.0)
}
