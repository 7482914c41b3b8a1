//! Per-stream sequential test statistics.
//!
//! Three statistic kinds are supported: the simple log-likelihood ratio for
//! two fully specified densities, its Gaussian-mean special case with known
//! variance (null mean 0 versus alternative mean 1), and the signed t-GLR
//! statistic for the one-sample problem with unknown variance. Fixed-sample
//! p-values used by the baseline procedures live here as well.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};

/// A density (or mass function) for one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Density {
    /// Success probability `p`; observations are `0` or `1`.
    Bernoulli { p: f64 },
    /// Mass on `0, 1, ..., K-1`; observations are the category index.
    Categorical { probs: Vec<f64> },
    Gaussian { mean: f64, sd: f64 },
}

impl Density {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Density::Bernoulli { p } => {
                if x == 1.0 {
                    *p
                } else if x == 0.0 {
                    1.0 - p
                } else {
                    0.0
                }
            }
            Density::Categorical { probs } => {
                if x >= 0.0 && x.fract() == 0.0 {
                    probs.get(x as usize).copied().unwrap_or(0.0)
                } else {
                    0.0
                }
            }
            Density::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            _ => self.density(x).ln(),
        }
    }
}

/// The hypothesis pair a stream is tested under, which fixes its statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisSpec {
    /// `H: f = null` versus `G: f = alt`.
    SimpleLlr { null: Density, alt: Density },
    /// Mean 0 versus mean 1 with known standard deviation `sigma`.
    GaussianMean { sigma: f64 },
    /// Mean `<= 0` versus mean `>= delta`, variance unknown.
    TGlr { delta: f64 },
}

impl HypothesisSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            HypothesisSpec::SimpleLlr { null, alt } => {
                if null == alt {
                    return Err(invalid("null and alternative densities coincide"));
                }
                for d in [null, alt] {
                    match d {
                        Density::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                            return Err(invalid(format!("Bernoulli p = {p} outside [0, 1]")));
                        }
                        Density::Categorical { probs } if probs.iter().any(|&q| q < 0.0) => {
                            return Err(invalid("negative categorical probability"));
                        }
                        Density::Gaussian { sd, .. } if *sd <= 0.0 => {
                            return Err(invalid(format!("Gaussian sd = {sd} must be positive")));
                        }
                        _ => {}
                    }
                }
                Ok(())
            }
            HypothesisSpec::GaussianMean { sigma } if *sigma <= 0.0 => {
                Err(invalid(format!("sigma = {sigma} must be positive")))
            }
            HypothesisSpec::TGlr { delta } if *delta <= 0.0 => {
                Err(invalid(format!("delta = {delta} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Running state of one stream's statistic.
///
/// `mean` and `m2` are Welford accumulators; `value` is `None` while the
/// statistic is undefined (the t-GLR before two distinct observations).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatisticState {
    pub n: usize,
    pub value: Option<f64>,
    pub sum: f64,
    pub mean: f64,
    pub m2: f64,
}

impl StatisticState {
    pub fn new() -> Self {
        Self {
            value: Some(0.0),
            ..Self::default()
        }
    }

    fn push_moments(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Maximum-likelihood standard deviation (divisor `n`).
    pub fn sigma_hat(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.m2.max(0.0) / self.n as f64).sqrt()
    }

    /// Advances the state by one observation under `spec`.
    pub fn update(&mut self, x: f64, spec: &HypothesisSpec) -> Result<()> {
        match spec {
            HypothesisSpec::SimpleLlr { null, alt } => {
                let h = null.density(x);
                if h <= 0.0 {
                    return Err(Error::ZeroNullDensity { x });
                }
                let inc = alt.log_density(x) - null.log_density(x);
                self.push_moments(x);
                self.value = Some(self.value.unwrap_or(0.0) + inc);
            }
            HypothesisSpec::GaussianMean { sigma } => {
                self.push_moments(x);
                self.value = Some((self.sum - 0.5 * self.n as f64) / (sigma * sigma));
            }
            HypothesisSpec::TGlr { delta } => {
                self.push_moments(x);
                self.value = t_glr(self, *delta).ok();
            }
        }
        Ok(())
    }
}

/// One-step log-likelihood ratio update: `value += log(g(x) / h(x))`.
pub fn llr_update(
    state: StatisticState,
    x: f64,
    spec: &HypothesisSpec,
) -> Result<StatisticState> {
    if !matches!(spec, HypothesisSpec::SimpleLlr { .. }) {
        return Err(invalid("llr_update requires a SimpleLlr hypothesis"));
    }
    let mut s = state;
    s.update(x, spec)?;
    Ok(s)
}

/// Gaussian-mean reduction of the LLR: `value = (sum x - n / 2) / sigma^2`.
pub fn gaussian_llr_update(state: StatisticState, x: f64, sigma: f64) -> StatisticState {
    let mut s = state;
    s.push_moments(x);
    s.value = Some((s.sum - 0.5 * s.n as f64) / (sigma * sigma));
    s
}

/// Signed t-GLR statistic from the running moments in `state`.
///
/// Positive branch `sqrt(2 n L_H)` when the sample mean is at least
/// `delta / 2` (ties go positive), else `-sqrt(2 n L_G)`, where
/// `L_H = (n/2) log(1 + (mean/s)^2)` and `L_G` uses `mean - delta`.
pub fn t_glr(state: &StatisticState, delta: f64) -> Result<f64> {
    t_glr_from_moments(state.n, state.mean, state.sigma_hat(), delta)
}

pub fn t_glr_from_moments(n: usize, mean: f64, sigma_hat: f64, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::UndefinedStatistic(format!("t-GLR needs n >= 2, got {n}")));
    }
    if !(sigma_hat > 0.0) {
        return Err(Error::UndefinedStatistic("zero sample variance".into()));
    }
    let nf = n as f64;
    if mean >= 0.5 * delta {
        let lh = 0.5 * nf * (mean / sigma_hat).powi(2).ln_1p();
        Ok((2.0 * nf * lh).sqrt())
    } else {
        let lg = 0.5 * nf * ((mean - delta) / sigma_hat).powi(2).ln_1p();
        Ok(-(2.0 * nf * lg).sqrt())
    }
}

/// One-sided t-test p-value `1 - T_{n-1}(mean sqrt(n-1) / sigma_hat)`, with
/// `sigma_hat` the MLE standard deviation.
pub fn t_pvalue(n: usize, mean: f64, sigma_hat: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("t p-value needs n >= 2, got {n}")));
    }
    if !(sigma_hat > 0.0) {
        return Err(Error::UndefinedStatistic("zero sample variance".into()));
    }
    let t = mean * ((n - 1) as f64).sqrt() / sigma_hat;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| invalid(format!("Student t: {e}")))?;
    Ok(dist.sf(t).clamp(0.0, 1.0))
}

/// Known-variance z-test p-value `1 - Phi(sum / (sigma sqrt n))`.
pub fn gaussian_pvalue(n: usize, sum: f64, sigma: f64) -> f64 {
    normal_sf(sum / (sigma * (n as f64).sqrt()))
}

/// Upper tail of the standard normal.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// A stream's hypothesis pair together with its running state.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamStatistic {
    pub spec: HypothesisSpec,
    pub state: StatisticState,
}

impl StreamStatistic {
    pub fn new(spec: HypothesisSpec) -> Self {
        let mut state = StatisticState::new();
        if matches!(spec, HypothesisSpec::TGlr { .. }) {
            state.value = None;
        }
        Self { spec, state }
    }
}

/// What the procedures need from a per-stream statistic.
pub trait SequentialStatistic {
    fn observe(&mut self, x: f64) -> Result<()>;
    /// Current value, or `None` while undefined.
    fn value(&self) -> Option<f64>;
    fn samples(&self) -> usize;
}

impl SequentialStatistic for StreamStatistic {
    fn observe(&mut self, x: f64) -> Result<()> {
        self.state.update(x, &self.spec)
    }

    fn value(&self) -> Option<f64> {
        self.state.value
    }

    fn samples(&self) -> usize {
        self.state.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern() -> HypothesisSpec {
        HypothesisSpec::SimpleLlr {
            null: Density::Bernoulli { p: 0.4 },
            alt: Density::Bernoulli { p: 0.6 },
        }
    }

    #[test]
    fn identical_densities_give_zero() {
        let spec = HypothesisSpec::SimpleLlr {
            null: Density::Gaussian { mean: 0.0, sd: 1.0 },
            alt: Density::Gaussian { mean: 0.0, sd: 1.0 },
        };
        let mut s = StatisticState::new();
        for x in [0.3, -1.2, 4.0] {
            s = llr_update(s, x, &spec).unwrap();
        }
        assert_eq!(s.value, Some(0.0));
        assert!(spec.validate().is_err());
    }

    #[test]
    fn bernoulli_increments() {
        let s = llr_update(StatisticState::new(), 1.0, &bern()).unwrap();
        assert!((s.value.unwrap() - 1.5f64.ln()).abs() < 1e-15);
        assert!((s.value.unwrap() - 0.4055).abs() < 5e-5);
        let s = llr_update(StatisticState::new(), 0.0, &bern()).unwrap();
        assert!((s.value.unwrap() + 0.4055).abs() < 5e-5);
        assert_eq!(s.n, 1);
    }

    #[test]
    fn zero_null_density_is_an_error() {
        let spec = HypothesisSpec::SimpleLlr {
            null: Density::Bernoulli { p: 1.0 },
            alt: Density::Bernoulli { p: 0.5 },
        };
        assert_eq!(
            llr_update(StatisticState::new(), 0.0, &spec),
            Err(Error::ZeroNullDensity { x: 0.0 })
        );
        let cat = HypothesisSpec::SimpleLlr {
            null: Density::Categorical { probs: vec![0.5, 0.5] },
            alt: Density::Categorical { probs: vec![0.2, 0.8] },
        };
        assert!(llr_update(StatisticState::new(), 2.0, &cat).is_err());
        assert!(llr_update(StatisticState::new(), 1.0, &cat).is_ok());
    }

    #[test]
    fn gaussian_llr_examples() {
        let mut s = StatisticState::new();
        for _ in 0..5 {
            s = gaussian_llr_update(s, 0.5, 3.0);
            assert_eq!(s.value, Some(0.0));
        }
        let s = gaussian_llr_update(StatisticState::new(), 1.0, 2.0);
        assert_eq!(s.value, Some(0.125));
        let s = gaussian_llr_update(s, 0.0, 2.0);
        assert_eq!(s.value, Some(0.0));
    }

    #[test]
    fn t_glr_examples() {
        let mut st = StreamStatistic::new(HypothesisSpec::TGlr { delta: 1.0 });
        st.observe(0.0).unwrap();
        assert_eq!(st.value(), None);
        st.observe(2.0).unwrap();
        let want = (4.0 * 2f64.ln()).sqrt();
        assert!((st.value().unwrap() - want).abs() < 1e-14);
        assert!((want - 1.6651).abs() < 5e-5);

        let v = t_glr_from_moments(2, 0.1, 0.1, 1.0).unwrap();
        let want = -(2.0 * 2.0 * 82f64.ln()).sqrt();
        assert!((v - want).abs() < 1e-12);
        assert!((v + 4.1984).abs() < 5e-5);

        // mean exactly delta / 2 takes the positive branch
        assert!(t_glr_from_moments(5, 0.5, 1.0, 1.0).unwrap() > 0.0);
        assert!(t_glr_from_moments(1, 0.5, 1.0, 1.0).is_err());
        assert!(t_glr_from_moments(3, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn t_pvalue_examples() {
        assert!((t_pvalue(10, 0.0, 1.3).unwrap() - 0.5).abs() < 1e-14);
        assert!((t_pvalue(2, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-12);
        assert!(t_pvalue(5, 1e6, 1.0).unwrap() < 1e-12);
        assert!(t_pvalue(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_pvalue_examples() {
        assert_eq!(gaussian_pvalue(7, 0.0, 2.0), 0.5);
        let p = gaussian_pvalue(1, 1.6448536269514722, 1.0);
        assert!((p - 0.05).abs() < 1e-9, "{p}");
        assert_eq!(gaussian_pvalue(1, f64::NEG_INFINITY, 1.0), 1.0);
    }
}
