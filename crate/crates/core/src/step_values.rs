//! Step-value sequences for the stepdown and stepup procedures.
//!
//! A procedure over `J` hypotheses is parameterized by nondecreasing step
//! values `alpha_1 <= ... <= alpha_J` (type I) and `beta_1 <= ... <= beta_J`
//! (type II). The constructors here produce the four families used in
//! practice: gamma-FDP and k-FWER control, each in a stepdown and a stepup
//! flavor. The FDP and stepup families are obtained by normalizing a
//! user-chosen shape sequence (a [`DeltaSequence`]) by a combinatorial
//! constant ([`d1`], [`d2`], [`d3`]) computed by exhaustive scan.
//!
//! Indices in the math-facing helpers ([`jbar`], [`tbar`]) are 1-based to
//! match the usual notation; the vectors themselves are stored 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative tolerance used when flooring products like `gamma * j`.
///
/// Inputs such as `gamma = 0.1` are read as the decimal the user typed, so
/// `0.29 * 100` floors to 29, not 28.
const FLOOR_TOL: f64 = 1e-9;

pub(crate) fn floor_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= FLOOR_TOL * r.abs().max(1.0) {
        r as i64
    } else {
        x.floor() as i64
    }
}

pub(crate) fn ceil_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= FLOOR_TOL * r.abs().max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

fn check_unit_sequence(values: &[f64], what: &'static str) -> Result<()> {
    if values.is_empty() {
        return Err(invalid(format!("{what} must be nonempty")));
    }
    for (i, &v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(format!("{what}[{}] = {v} outside [0, 1]", i + 1)));
        }
    }
    if let Some(i) = values.windows(2).position(|w| w[0] > w[1]) {
        return Err(Error::NotMonotone { what, index: i + 1 });
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma = {gamma} must lie in [0, 1)")));
    }
    Ok(())
}

/// A nondecreasing sequence `delta_1 <= ... <= delta_J` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSequence {
    values: Vec<f64>,
}

impl DeltaSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_unit_sequence(&values, "delta")?;
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// 1-based access.
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        self.values[j - 1]
    }

    fn require_nonzero(&self) -> Result<()> {
        if self.values.iter().all(|&v| v == 0.0) {
            return Err(invalid("delta sequence is identically zero"));
        }
        Ok(())
    }
}

/// `delta_j = (floor(gamma j) + 1) / (J + floor(gamma j) + 1 - j)`.
pub fn delta_holm_fdp(j_total: usize, gamma: f64) -> Result<DeltaSequence> {
    if j_total == 0 {
        return Err(invalid("J must be at least 1"));
    }
    check_gamma(gamma)?;
    let jt = j_total as f64;
    let values = (1..=j_total)
        .map(|j| {
            let f = floor_tol(gamma * j as f64) as f64;
            (f + 1.0) / (jt + f + 1.0 - j as f64)
        })
        .collect();
    DeltaSequence::new(values)
}

/// `delta_j = k / (J - (j - k)^+)`.
pub fn delta_kfwe(j_total: usize, k: usize) -> Result<DeltaSequence> {
    if k == 0 || k > j_total {
        return Err(invalid(format!("k = {k} must lie in [1, J = {j_total}]")));
    }
    let values = (1..=j_total)
        .map(|j| k as f64 / (j_total - j.saturating_sub(k)) as f64)
        .collect();
    DeltaSequence::new(values)
}

/// `delta_j = j / J`.
pub fn delta_linear(j_total: usize) -> Result<DeltaSequence> {
    if j_total == 0 {
        return Err(invalid("J must be at least 1"));
    }
    let values = (1..=j_total)
        .map(|j| j as f64 / j_total as f64)
        .collect();
    DeltaSequence::new(values)
}

/// `min{J, J + t - v, ceil(t / gamma) - 1}`, the last term dropped when
/// `gamma = 0`. Defined for `1 <= t <= floor(gamma J) + 1`.
pub fn jbar(t: usize, v: usize, gamma: f64, j_total: usize) -> Result<usize> {
    check_gamma(gamma)?;
    let t_max = floor_tol(gamma * j_total as f64) as usize + 1;
    if t == 0 || t > t_max {
        return Err(invalid(format!("t = {t} outside [1, {t_max}]")));
    }
    if v > j_total {
        return Err(invalid(format!("v = {v} exceeds J = {j_total}")));
    }
    Ok(jbar_unchecked(t, v, gamma, j_total))
}

#[inline]
fn jbar_unchecked(t: usize, v: usize, gamma: f64, j_total: usize) -> usize {
    let mut m = j_total.min(j_total + t - v);
    if gamma > 0.0 {
        let third = ceil_tol(t as f64 / gamma) - 1;
        m = m.min(third.max(1) as usize);
    }
    m
}

/// `min{floor(gamma J) + 1, v, floor(gamma (J - v) / (1 - gamma)) + 1}`.
pub fn tbar(v: usize, gamma: f64, j_total: usize) -> Result<usize> {
    check_gamma(gamma)?;
    if v > j_total {
        return Err(invalid(format!("v = {v} exceeds J = {j_total}")));
    }
    Ok(tbar_unchecked(v, gamma, j_total))
}

#[inline]
fn tbar_unchecked(v: usize, gamma: f64, j_total: usize) -> usize {
    let first = floor_tol(gamma * j_total as f64) as usize + 1;
    let third = floor_tol(gamma * (j_total - v) as f64 / (1.0 - gamma)) as usize + 1;
    first.min(v).min(third)
}

/// The stepdown FDP sum `S_1(v)` for one `v` in `0..=J`.
pub fn s1(v: usize, gamma: f64, delta: &DeltaSequence) -> Result<f64> {
    check_gamma(gamma)?;
    let j_total = delta.len();
    if v > j_total {
        return Err(invalid(format!("v = {v} exceeds J = {j_total}")));
    }
    Ok(s1_unchecked(v, gamma, delta))
}

fn s1_unchecked(v: usize, gamma: f64, delta: &DeltaSequence) -> f64 {
    let j_total = delta.len();
    let mut prev = 0.0;
    let mut sum = 0.0;
    for t in 1..=tbar_unchecked(v, gamma, j_total) {
        let eps = delta.at(jbar_unchecked(t, v, gamma, j_total));
        sum += (eps - prev) / t as f64;
        prev = eps;
    }
    v as f64 * sum
}

/// Stepdown FDP normalizer: `max_{0 <= v <= J} S_1(v)`.
pub fn d1(gamma: f64, delta: &DeltaSequence) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((0..=delta.len())
        .map(|v| s1_unchecked(v, gamma, delta))
        .fold(0.0, f64::max))
}

/// The stepup FDP sum `S_2(v)` for one `v` in `1..=J`.
pub fn s2(v: usize, gamma: f64, delta: &DeltaSequence) -> Result<f64> {
    check_gamma(gamma)?;
    let j_total = delta.len();
    if v == 0 || v > j_total {
        return Err(invalid(format!("v = {v} outside [1, {j_total}]")));
    }
    Ok(s2_unchecked(v, gamma, delta))
}

fn s2_unchecked(v: usize, gamma: f64, delta: &DeltaSequence) -> f64 {
    let j_total = delta.len() as i64;
    let vi = v as i64;
    let mut sum = 0.0;
    // s runs over the integers in (v - J + 1, v]; the delta index J - v + s
    // then covers 2..=J.
    for s in (vi - j_total + 2)..=vi {
        let idx = j_total - vi + s;
        let level = floor_tol(gamma * idx as f64) + 1;
        if vi < level {
            continue;
        }
        let idx = idx as usize;
        let num = delta.at(idx) - delta.at(idx - 1);
        sum += num / s.max(level) as f64;
    }
    v as f64 * (delta.at(1) + sum)
}

/// Stepup FDP normalizer: `max_{1 <= v <= J} S_2(v)`.
pub fn d2(gamma: f64, delta: &DeltaSequence) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((1..=delta.len())
        .map(|v| s2_unchecked(v, gamma, delta))
        .fold(0.0, f64::max))
}

/// The stepup k-FWER sum `S_3(v, k)` for one `v` in `k..=J`.
pub fn s3(v: usize, k: usize, delta: &DeltaSequence) -> Result<f64> {
    let j_total = delta.len();
    if k == 0 || k > j_total {
        return Err(invalid(format!("k = {k} must lie in [1, J = {j_total}]")));
    }
    if v < k || v > j_total {
        return Err(invalid(format!("v = {v} outside [{k}, {j_total}]")));
    }
    Ok(s3_unchecked(v, k, delta))
}

fn s3_unchecked(v: usize, k: usize, delta: &DeltaSequence) -> f64 {
    let j_total = delta.len();
    let base = j_total - v;
    let mut sum = 0.0;
    for s in (k + 1)..=v {
        sum += (delta.at(base + s) - delta.at(base + s - 1)) / s as f64;
    }
    v as f64 * (delta.at(base + k) / k as f64 + sum)
}

/// Stepup k-FWER normalizer: `max_{k <= v <= J} S_3(v, k)`.
pub fn d3(k: usize, delta: &DeltaSequence) -> Result<f64> {
    let j_total = delta.len();
    if k == 0 || k > j_total {
        return Err(invalid(format!("k = {k} must lie in [1, J = {j_total}]")));
    }
    Ok((k..=j_total)
        .map(|v| s3_unchecked(v, k, delta))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LadderKind {
    StepdownFdp,
    StepdownKfwe,
    StepupFdp,
    StepupKfwe,
    Custom,
}

/// Parameters a ladder was built from; unused fields stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepParams {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub streams: usize,
}

/// Type I step values and, for two-sided procedures, type II step values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepValueLadder {
    alphas: Vec<f64>,
    betas: Option<Vec<f64>>,
    kind: LadderKind,
    params: StepParams,
}

impl StepValueLadder {
    pub fn new(
        alphas: Vec<f64>,
        betas: Option<Vec<f64>>,
        kind: LadderKind,
        params: StepParams,
    ) -> Result<Self> {
        check_unit_sequence(&alphas, "alpha step values")?;
        if let Some(b) = &betas {
            check_unit_sequence(b, "beta step values")?;
            if b.len() != alphas.len() {
                return Err(Error::LengthMismatch {
                    expected: alphas.len(),
                    got: b.len(),
                });
            }
        }
        Ok(Self {
            alphas,
            betas,
            kind,
            params,
        })
    }

    /// A ladder from explicit values, e.g. for replaying a published example.
    pub fn custom(alphas: Vec<f64>, betas: Option<Vec<f64>>) -> Result<Self> {
        let params = StepParams {
            alpha: alphas.last().copied().unwrap_or(0.0),
            beta: betas.as_ref().and_then(|b| b.last().copied()),
            streams: alphas.len(),
            ..StepParams::default()
        };
        Self::new(alphas, betas, LadderKind::Custom, params)
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> Option<&[f64]> {
        self.betas.as_deref()
    }

    pub fn kind(&self) -> LadderKind {
        self.kind
    }

    pub fn params(&self) -> &StepParams {
        &self.params
    }

    /// The same ladder with every alpha multiplied by `factor`. Used by the
    /// fixed-sample matching search, which varies the nominal level.
    pub fn rescale_alpha(&self, new_alpha: f64) -> Result<Self> {
        let factor = new_alpha / self.params.alpha;
        let alphas = self.alphas.iter().map(|a| a * factor).collect();
        let params = StepParams {
            alpha: new_alpha,
            ..self.params
        };
        Self::new(alphas, self.betas.clone(), self.kind, params)
    }
}

fn check_level(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("{name} = {x} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_pair(delta: &DeltaSequence, eta: &DeltaSequence) -> Result<()> {
    if delta.len() != eta.len() {
        return Err(Error::LengthMismatch {
            expected: delta.len(),
            got: eta.len(),
        });
    }
    delta.require_nonzero()?;
    eta.require_nonzero()
}

fn scaled(level: f64, delta: &DeltaSequence, norm: f64) -> Vec<f64> {
    delta.values().iter().map(|d| level * d / norm).collect()
}

/// Stepdown gamma-FDP / gamma-FNP step values:
/// `alpha_j = alpha delta_j / D_1(gamma_1, delta)`, likewise for beta.
pub fn stepdown_fdp_values(
    alpha: f64,
    beta: f64,
    gamma1: f64,
    gamma2: f64,
    delta: &DeltaSequence,
    eta: &DeltaSequence,
) -> Result<StepValueLadder> {
    check_level("alpha", alpha)?;
    check_level("beta", beta)?;
    check_pair(delta, eta)?;
    let alphas = scaled(alpha, delta, d1(gamma1, delta)?);
    let betas = scaled(beta, eta, d1(gamma2, eta)?);
    StepValueLadder::new(
        alphas,
        Some(betas),
        LadderKind::StepdownFdp,
        StepParams {
            alpha,
            beta: Some(beta),
            gamma1: Some(gamma1),
            gamma2: Some(gamma2),
            k1: None,
            k2: None,
            streams: delta.len(),
        },
    )
}

/// Stepdown k-FWER step values `alpha_j = k_1 alpha / (J - (j - k_1)^+)`.
pub fn stepdown_kfwe_values(
    alpha: f64,
    beta: f64,
    k1: usize,
    k2: usize,
    j_total: usize,
) -> Result<StepValueLadder> {
    check_level("alpha", alpha)?;
    check_level("beta", beta)?;
    for (name, k) in [("k1", k1), ("k2", k2)] {
        if k == 0 || k > j_total {
            return Err(invalid(format!("{name} = {k} must lie in [1, J = {j_total}]")));
        }
    }
    let ladder = |level: f64, k: usize| -> Vec<f64> {
        (1..=j_total)
            .map(|j| k as f64 * level / (j_total - j.saturating_sub(k)) as f64)
            .collect()
    };
    StepValueLadder::new(
        ladder(alpha, k1),
        Some(ladder(beta, k2)),
        LadderKind::StepdownKfwe,
        StepParams {
            alpha,
            beta: Some(beta),
            gamma1: None,
            gamma2: None,
            k1: Some(k1),
            k2: Some(k2),
            streams: j_total,
        },
    )
}

/// Stepup gamma-FDP / gamma-FNP step values, normalized by [`d2`].
pub fn stepup_fdp_values(
    alpha: f64,
    beta: f64,
    gamma1: f64,
    gamma2: f64,
    delta: &DeltaSequence,
    eta: &DeltaSequence,
) -> Result<StepValueLadder> {
    check_level("alpha", alpha)?;
    check_level("beta", beta)?;
    check_pair(delta, eta)?;
    let alphas = scaled(alpha, delta, d2(gamma1, delta)?);
    let betas = scaled(beta, eta, d2(gamma2, eta)?);
    StepValueLadder::new(
        alphas,
        Some(betas),
        LadderKind::StepupFdp,
        StepParams {
            alpha,
            beta: Some(beta),
            gamma1: Some(gamma1),
            gamma2: Some(gamma2),
            k1: None,
            k2: None,
            streams: delta.len(),
        },
    )
}

/// Stepup k-FWER step values, normalized by [`d3`].
pub fn stepup_kfwe_values(
    alpha: f64,
    beta: f64,
    k1: usize,
    k2: usize,
    delta: &DeltaSequence,
    eta: &DeltaSequence,
) -> Result<StepValueLadder> {
    check_level("alpha", alpha)?;
    check_level("beta", beta)?;
    check_pair(delta, eta)?;
    let alphas = scaled(alpha, delta, d3(k1, delta)?);
    let betas = scaled(beta, eta, d3(k2, eta)?);
    StepValueLadder::new(
        alphas,
        Some(betas),
        LadderKind::StepupKfwe,
        StepParams {
            alpha,
            beta: Some(beta),
            gamma1: None,
            gamma2: None,
            k1: Some(k1),
            k2: Some(k2),
            streams: delta.len(),
        },
    )
}
