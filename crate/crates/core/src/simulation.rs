//! Correlated Gaussian streams, error accounting and the Monte Carlo driver.
//!
//! The `n`th observations of the `J` streams are drawn jointly from a normal
//! distribution with means `theta` and covariance `sigma^2 [(1 - c) I + c 11']`;
//! successive observation vectors are independent. True nulls occupy the
//! first `true_nulls` indices with mean `theta_null`, the rest have mean
//! `theta_alt`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_values::{
    glr_t_calibrate, sprt_ladder, standardize, CriticalLadder, DEFAULT_RHO,
};
use crate::error::{invalid, Result};
use crate::procedures::{
    self, Mode, ObservationSource, ProcedureConfig, ProcedureState, Termination, Verdict,
};
use crate::statistics::{HypothesisSpec, StreamStatistic};
use crate::step_values::{
    delta_holm_fdp, delta_kfwe, stepdown_fdp_values, stepdown_kfwe_values, stepup_fdp_values,
    stepup_kfwe_values, StepValueLadder,
};

/// One draw of `theta + sigma (sqrt(c) Z_0 1 + sqrt(1 - c) Z)`.
pub fn gen_correlated_row<R: Rng + ?Sized>(
    theta: &[f64],
    sigma: f64,
    c: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_correlation(c)?;
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma = {sigma} must be positive")));
    }
    let (a, b) = (c.sqrt(), (1.0 - c).sqrt());
    let z0: f64 = rng.sample(StandardNormal);
    Ok(theta
        .iter()
        .map(|t| t + sigma * (a * z0 + b * rng.sample::<f64, _>(StandardNormal)))
        .collect())
}

fn check_correlation(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(invalid(format!(
            "correlation {c} unsupported; the shared-factor generator needs c in [0, 1]"
        )));
    }
    Ok(())
}

/// Streams generated on demand for the active indices only. Inactive
/// streams are never drawn, which leaves the joint law of the active ones
/// unchanged.
#[derive(Debug, Clone)]
pub struct GaussianSource<R> {
    theta: Vec<f64>,
    sigma: f64,
    shared: f64,
    own: f64,
    rng: R,
}

impl<R: Rng> GaussianSource<R> {
    pub fn new(theta: Vec<f64>, sigma: f64, c: f64, rng: R) -> Result<Self> {
        check_correlation(c)?;
        if !(sigma > 0.0) {
            return Err(invalid(format!("sigma = {sigma} must be positive")));
        }
        Ok(Self {
            theta,
            sigma,
            shared: c.sqrt(),
            own: (1.0 - c).sqrt(),
            rng,
        })
    }
}

impl<R: Rng> ObservationSource for GaussianSource<R> {
    fn observe(&mut self, _n: usize, active: &[usize], out: &mut [f64]) -> Result<()> {
        let z0: f64 = self.rng.sample(StandardNormal);
        let common = self.shared * z0;
        for (o, &j) in out.iter_mut().zip(active) {
            let z: f64 = self.rng.sample(StandardNormal);
            *o = self.theta[j] + self.sigma * (common + self.own * z);
        }
        Ok(())
    }
}

/// False discovery and false nondiscovery proportions, each 0 when its
/// denominator is 0. Undecided streams count in neither.
pub fn fdp_fnp(verdicts: &[Option<Verdict>], is_true_null: &[bool]) -> (f64, f64) {
    let c = Counts::tally(verdicts, is_true_null);
    c.fdp_fnp()
}

/// `(#true nulls rejected >= k1, #false nulls accepted >= k2)`.
pub fn kfwe_indicators(
    verdicts: &[Option<Verdict>],
    is_true_null: &[bool],
    k1: usize,
    k2: usize,
) -> (bool, bool) {
    let c = Counts::tally(verdicts, is_true_null);
    (c.false_rejections >= k1, c.false_acceptances >= k2)
}

/// Decision tallies for one ensemble.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub rejected: usize,
    pub false_rejections: usize,
    pub accepted: usize,
    pub false_acceptances: usize,
}

impl Counts {
    pub fn tally(verdicts: &[Option<Verdict>], is_true_null: &[bool]) -> Self {
        let mut c = Counts::default();
        for (v, &t) in verdicts.iter().zip(is_true_null) {
            match v {
                Some(Verdict::Rejected) => {
                    c.rejected += 1;
                    c.false_rejections += t as usize;
                }
                Some(Verdict::Accepted) => {
                    c.accepted += 1;
                    c.false_acceptances += !t as usize;
                }
                None => {}
            }
        }
        c
    }

    pub fn fdp_fnp(&self) -> (f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        (
            ratio(self.false_rejections, self.rejected),
            ratio(self.false_acceptances, self.accepted),
        )
    }

    /// Type I and type II error indicators under `metric`.
    pub fn errors(&self, metric: &ErrorMetric) -> (bool, bool) {
        match *metric {
            ErrorMetric::Fdp { gamma1, gamma2 } => {
                let (fdp, fnp) = self.fdp_fnp();
                (fdp > gamma1, fnp > gamma2)
            }
            ErrorMetric::Kfwe { k1, k2 } => {
                (self.false_rejections >= k1, self.false_acceptances >= k2)
            }
        }
    }
}

/// Which generalized error rates are controlled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorMetric {
    /// `P(FDP > gamma1) <= alpha` and `P(FNP > gamma2) <= beta`.
    Fdp { gamma1: f64, gamma2: f64 },
    /// `P(V >= k1) <= alpha` and `P(W >= k2) <= beta`.
    Kfwe { k1: usize, k2: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticKind {
    /// Log-likelihood ratio of mean 0 versus mean 1 with `sigma` known.
    GaussianKnownSigma,
    /// t-GLR for mean `<= 0` versus `>= delta`, variance unknown.
    TGlr { delta: f64 },
}

fn default_theta_alt() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub streams: usize,
    pub true_nulls: usize,
    pub sigma: f64,
    pub correlation: f64,
    #[serde(default)]
    pub theta_null: f64,
    #[serde(default = "default_theta_alt")]
    pub theta_alt: f64,
    pub statistic: StatisticKind,
    pub metric: ErrorMetric,
    pub alpha: f64,
    pub beta: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.streams == 0 {
            return Err(invalid("scenario needs at least one stream"));
        }
        if self.true_nulls > self.streams {
            return Err(invalid(format!(
                "true_nulls = {} exceeds J = {}",
                self.true_nulls, self.streams
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(invalid(format!("sigma = {} must be positive", self.sigma)));
        }
        check_correlation(self.correlation)?;
        for (name, x) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(format!("{name} = {x} must lie in (0, 1)")));
            }
        }
        if let StatisticKind::TGlr { delta } = self.statistic {
            if !(delta > 0.0) {
                return Err(invalid(format!("delta = {delta} must be positive")));
            }
        }
        match self.metric {
            ErrorMetric::Fdp { gamma1, gamma2 } => {
                for g in [gamma1, gamma2] {
                    if !(0.0..1.0).contains(&g) {
                        return Err(invalid(format!("gamma = {g} must lie in [0, 1)")));
                    }
                }
            }
            ErrorMetric::Kfwe { k1, k2 } => {
                if k1 == 0 || k2 == 0 || k1 > self.streams || k2 > self.streams {
                    return Err(invalid(format!(
                        "k1 = {k1}, k2 = {k2} must lie in [1, J = {}]",
                        self.streams
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn theta(&self) -> Vec<f64> {
        (0..self.streams)
            .map(|j| if j < self.true_nulls { self.theta_null } else { self.theta_alt })
            .collect()
    }

    pub fn is_true_null(&self) -> Vec<bool> {
        (0..self.streams).map(|j| j < self.true_nulls).collect()
    }

    pub fn hypothesis(&self) -> HypothesisSpec {
        match self.statistic {
            StatisticKind::GaussianKnownSigma => HypothesisSpec::GaussianMean { sigma: self.sigma },
            StatisticKind::TGlr { delta } => HypothesisSpec::TGlr { delta },
        }
    }

    /// Step values for `mode`: the Holm-type FDP shape for both modes, or
    /// the k-FWER stepdown values and the k-FWER shape for stepup.
    pub fn step_values(&self, mode: Mode) -> Result<StepValueLadder> {
        let j = self.streams;
        match (self.metric, mode) {
            (ErrorMetric::Fdp { gamma1, gamma2 }, Mode::Stepdown) => stepdown_fdp_values(
                self.alpha,
                self.beta,
                gamma1,
                gamma2,
                &delta_holm_fdp(j, gamma1)?,
                &delta_holm_fdp(j, gamma2)?,
            ),
            (ErrorMetric::Fdp { gamma1, gamma2 }, Mode::Stepup) => stepup_fdp_values(
                self.alpha,
                self.beta,
                gamma1,
                gamma2,
                &delta_holm_fdp(j, gamma1)?,
                &delta_holm_fdp(j, gamma2)?,
            ),
            (ErrorMetric::Kfwe { k1, k2 }, Mode::Stepdown) => {
                stepdown_kfwe_values(self.alpha, self.beta, k1, k2, j)
            }
            (ErrorMetric::Kfwe { k1, k2 }, Mode::Stepup) => stepup_kfwe_values(
                self.alpha,
                self.beta,
                k1,
                k2,
                &delta_kfwe(j, k1)?,
                &delta_kfwe(j, k2)?,
            ),
        }
    }
}

/// Monte Carlo settings for t-GLR critical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            horizon: 200,
            reps: 100_000,
            seed: 20_140_601,
        }
    }
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

fn default_guard() -> usize {
    procedures::DEFAULT_GUARD
}

/// A sequential procedure to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialDesign {
    pub mode: Mode,
    #[serde(default)]
    pub rejective: bool,
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Overshoot correction for the SPRT ladder (known-sigma statistic).
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default = "default_guard")]
    pub max_stage_guard: usize,
}

impl SequentialDesign {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            rejective: false,
            horizon: None,
            rho: DEFAULT_RHO,
            calibration: CalibrationConfig::default(),
            max_stage_guard: procedures::DEFAULT_GUARD,
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.mode, self.rejective) {
            (Mode::Stepdown, false) => "Seq_D",
            (Mode::Stepup, false) => "Seq_U",
            (Mode::Stepdown, true) => "Rej_D",
            (Mode::Stepup, true) => "Rej_U",
        }
    }

    /// Critical values shared by every stream of `scenario`.
    pub fn critical_ladder(&self, scenario: &ScenarioConfig) -> Result<CriticalLadder> {
        let steps = scenario.step_values(self.mode)?;
        match scenario.statistic {
            StatisticKind::GaussianKnownSigma => sprt_ladder(&steps, self.rho),
            StatisticKind::TGlr { delta } => glr_t_calibrate(
                delta,
                &steps,
                self.calibration.horizon,
                self.calibration.reps,
                self.calibration.seed,
            ),
        }
    }

    /// Procedure configuration for `scenario`, with its critical values.
    pub fn procedure(&self, scenario: &ScenarioConfig) -> Result<ProcedureConfig> {
        let crit = self.critical_ladder(scenario)?;
        let mut cfg = if self.rejective {
            let b = crit.upper().to_vec();
            let ladder = crate::critical_values::StandardizedLadder::identity(None, b)?;
            let horizon = self
                .horizon
                .ok_or_else(|| invalid("rejective design needs a horizon"))?;
            ProcedureConfig::rejective(self.mode, ladder, horizon)
        } else {
            let mut c = ProcedureConfig::new(self.mode, standardize(&[crit], None)?);
            c.horizon = self.horizon;
            c
        };
        cfg.max_stage_guard = self.max_stage_guard;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of one simulated ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutcome {
    pub replicate: usize,
    pub sample_sizes: Vec<usize>,
    pub average_sample_size: f64,
    pub counts: CountsRecord,
    pub type1: bool,
    pub type2: bool,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountsRecord {
    pub rejected: usize,
    pub false_rejections: usize,
    pub accepted: usize,
    pub false_acceptances: usize,
}

impl From<Counts> for CountsRecord {
    fn from(c: Counts) -> Self {
        Self {
            rejected: c.rejected,
            false_rejections: c.false_rejections,
            accepted: c.accepted,
            false_acceptances: c.false_acceptances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub procedure: String,
    pub e_n: f64,
    pub se: f64,
    pub type1_rate: f64,
    pub type2_rate: f64,
    pub reps: usize,
    pub guard_trips: usize,
    pub horizon_stops: usize,
}

/// Independent generator for replicate `rep`: the master seed picks the
/// ChaCha key and the replicate index picks the stream.
pub fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn tie_seed(seed: u64, rep: usize) -> u64 {
    seed.rotate_left(17) ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs replicate `rep` of `scenario` under `procedure` and returns the
/// full procedure state, including the stage trace when enabled.
pub fn run_ensemble(
    scenario: &ScenarioConfig,
    procedure: &ProcedureConfig,
    rep: usize,
) -> Result<ProcedureState<StreamStatistic>> {
    let mut source = GaussianSource::new(
        scenario.theta(),
        scenario.sigma,
        scenario.correlation,
        replicate_rng(scenario.seed, rep),
    )?;
    let spec = scenario.hypothesis();
    let stats = vec![StreamStatistic::new(spec); scenario.streams];
    let mut cfg = procedure.clone();
    cfg.tie_seed = tie_seed(scenario.seed, rep);
    procedures::run(&cfg, &mut source, stats)
}

/// Runs one ensemble of `scenario` under `procedure`.
pub fn simulate_ensemble(
    scenario: &ScenarioConfig,
    procedure: &ProcedureConfig,
    rep: usize,
) -> Result<EnsembleOutcome> {
    let state = run_ensemble(scenario, procedure, rep)?;
    let counts = Counts::tally(&state.verdicts(), &scenario.is_true_null());
    let (type1, type2) = counts.errors(&scenario.metric);
    Ok(EnsembleOutcome {
        replicate: rep,
        sample_sizes: state.sample_sizes(),
        average_sample_size: state.average_sample_size(),
        counts: counts.into(),
        type1,
        type2,
        termination: state.termination,
    })
}

/// Simulates `scenario.reps` ensembles and aggregates them.
pub fn monte_carlo(scenario: &ScenarioConfig, design: &SequentialDesign) -> Result<SimulationReport> {
    let (report, _) = monte_carlo_with_outcomes(scenario, design)?;
    Ok(report)
}

/// As [`monte_carlo`], also returning every replicate's outcome in order.
pub fn monte_carlo_with_outcomes(
    scenario: &ScenarioConfig,
    design: &SequentialDesign,
) -> Result<(SimulationReport, Vec<EnsembleOutcome>)> {
    scenario.validate()?;
    if scenario.reps < 2 {
        return Err(invalid("monte_carlo needs at least 2 replicates"));
    }
    let procedure = design.procedure(scenario)?;
    let outcomes = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| simulate_ensemble(scenario, &procedure, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok((aggregate(design.label(), &outcomes), outcomes))
}

/// Pairwise summation, for a reduction independent of thread scheduling.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn aggregate(label: &str, outcomes: &[EnsembleOutcome]) -> SimulationReport {
    let reps = outcomes.len();
    let r = reps as f64;
    let avg: Vec<f64> = outcomes.iter().map(|o| o.average_sample_size).collect();
    let mean = pairwise_sum(&avg) / r;
    let dev: Vec<f64> = avg.iter().map(|a| (a - mean).powi(2)).collect();
    let sd = (pairwise_sum(&dev) / (r - 1.0)).sqrt();
    let frac = |f: &dyn Fn(&EnsembleOutcome) -> bool| {
        outcomes.iter().filter(|o| f(o)).count() as f64 / r
    };
    SimulationReport {
        procedure: label.to_string(),
        e_n: mean,
        se: sd / r.sqrt(),
        type1_rate: frac(&|o| o.type1),
        type2_rate: frac(&|o| o.type2),
        reps,
        guard_trips: outcomes
            .iter()
            .filter(|o| o.termination == Termination::GuardTripped)
            .count(),
        horizon_stops: outcomes
            .iter()
            .filter(|o| o.termination == Termination::HorizonReached)
            .count(),
    }
}

/// Percentage saved by the sequential procedure: `100 (1 - E N / N_fixed)`.
pub fn savings(seq_en: f64, fixed_n: usize) -> Result<f64> {
    if fixed_n == 0 {
        return Err(invalid("fixed sample size must be positive"));
    }
    Ok(100.0 * (1.0 - seq_en / fixed_n as f64))
}

/// One line of a report table. `se` and `savings` are blank for fixed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub procedure: String,
    pub e_n: f64,
    pub se: Option<f64>,
    pub type1: f64,
    pub type2: f64,
    pub savings: Option<f64>,
}

impl ReportRow {
    pub fn sequential(scenario: &str, report: &SimulationReport, savings: Option<f64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            procedure: report.procedure.clone(),
            e_n: report.e_n,
            se: Some(report.se),
            type1: report.type1_rate,
            type2: report.type2_rate,
            savings,
        }
    }

    /// A fixed-sample row: `n` in the E_N column, SE and savings blank.
    pub fn fixed(scenario: &str, procedure: &str, n: usize, type1: f64, type2: f64) -> Self {
        Self {
            scenario: scenario.to_string(),
            procedure: procedure.to_string(),
            e_n: n as f64,
            se: None,
            type1,
            type2,
            savings: None,
        }
    }

    fn cells(&self, fixed_n: bool) -> [String; 7] {
        let opt = |x: Option<f64>, f: &dyn Fn(f64) -> String| x.map(f).unwrap_or_default();
        [
            self.scenario.clone(),
            self.procedure.clone(),
            if fixed_n {
                format!("{:.0}", self.e_n)
            } else {
                format!("{:.2}", self.e_n)
            },
            opt(self.se, &|s| format!("{s:.2}")),
            format!("{:.3}", self.type1),
            format!("{:.3}", self.type2),
            opt(self.savings, &|s| format!("{s:.0}%")),
        ]
    }

    fn is_fixed(&self) -> bool {
        self.se.is_none()
    }
}

const HEADER: [&str; 7] = ["scenario", "procedure", "E_N", "SE", "typeI", "typeII", "savings"];

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells(r.is_fixed()).join(","));
        out.push('\n');
    }
    out
}

pub fn rows_to_table(rows: &[ReportRow]) -> String {
    let cells: Vec<[String; 7]> = rows.iter().map(|r| r.cells(r.is_fixed())).collect();
    let mut width = HEADER.map(str::len);
    for c in &cells {
        for (w, s) in width.iter_mut().zip(c) {
            *w = (*w).max(s.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, c: &[&str]| {
        let parts: Vec<String> = c
            .iter()
            .zip(width)
            .enumerate()
            .map(|(i, (s, w))| if i < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &HEADER);
    for c in &cells {
        line(&mut out, &c.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> ScenarioConfig {
        ScenarioConfig {
            streams: 6,
            true_nulls: 2,
            sigma: 1.0,
            correlation: 0.5,
            theta_null: 0.0,
            theta_alt: 1.0,
            statistic: StatisticKind::GaussianKnownSigma,
            metric: ErrorMetric::Kfwe { k1: 1, k2: 1 },
            alpha: 0.05,
            beta: 0.2,
            reps: 50,
            seed: 11,
        }
    }

    #[test]
    fn fdp_fnp_examples() {
        use Verdict::*;
        assert_eq!(fdp_fnp(&[Some(Accepted), Some(Accepted)], &[true, false]), (0.0, 0.5));
        assert_eq!(
            fdp_fnp(&[Some(Rejected), Some(Rejected), Some(Accepted)], &[true, false, true]),
            (0.5, 0.0)
        );
        assert_eq!(fdp_fnp(&[Some(Rejected); 3], &[false; 3]), (0.0, 0.0));
    }

    #[test]
    fn kfwe_examples() {
        use Verdict::*;
        assert_eq!(kfwe_indicators(&[Some(Rejected), Some(Accepted)], &[true, false], 1, 1), (true, true));
        assert_eq!(kfwe_indicators(&[Some(Rejected); 4], &[false; 4], 1, 1), (false, false));
        let mut v = vec![Some(Rejected); 24];
        v.push(Some(Accepted));
        let mut t = vec![true; 24];
        t.push(true);
        assert_eq!(kfwe_indicators(&v, &t, 25, 1), (false, false));
    }

    #[test]
    fn savings_examples() {
        assert_eq!(format!("{:.0}", savings(54.17, 120).unwrap()), "55");
        assert_eq!(format!("{:.0}", savings(38.39, 75).unwrap()), "49");
        assert_eq!(savings(75.0, 75).unwrap(), 0.0);
        assert!(savings(1.0, 0).is_err());
    }

    #[test]
    fn generator_degenerate_cases() {
        let mut rng = replicate_rng(1, 0);
        let row = gen_correlated_row(&[1.0, 2.0, 3.0], 0.5, 1.0, &mut rng).unwrap();
        assert!((row[1] - row[0] - 1.0).abs() < 1e-12);
        assert!((row[2] - row[0] - 2.0).abs() < 1e-12);
        assert!(gen_correlated_row(&[0.0], 1.0, -0.1, &mut rng).is_err());
        assert!(gen_correlated_row(&[0.0], 0.0, 0.1, &mut rng).is_err());
    }

    #[test]
    fn reproducible_report() {
        let d = SequentialDesign::new(Mode::Stepup);
        let a = monte_carlo(&scenario(), &d).unwrap();
        let b = monte_carlo(&scenario(), &d).unwrap();
        assert_eq!(a, b);
        assert!(a.se >= 0.0 && a.e_n > 0.0);
        assert_eq!(a.guard_trips, 0);
    }

    #[test]
    fn overwhelming_signal() {
        let mut s = scenario();
        s.sigma = 0.1;
        s.theta_alt = 10.0;
        let r = monte_carlo(&s, &SequentialDesign::new(Mode::Stepdown)).unwrap();
        assert_eq!(r.e_n, 1.0);
        assert_eq!((r.type1_rate, r.type2_rate), (0.0, 0.0));
    }

    #[test]
    fn too_few_reps() {
        let mut s = scenario();
        s.reps = 1;
        assert!(monte_carlo(&s, &SequentialDesign::new(Mode::Stepdown)).is_err());
    }

    #[test]
    fn table_formatting() {
        let rows = vec![
            ReportRow {
                scenario: "J=500".into(),
                procedure: "Seq_U".into(),
                e_n: 54.17,
                se: Some(0.67),
                type1: 0.008,
                type2: 0.012,
                savings: Some(54.86),
            },
            ReportRow {
                scenario: "J=500".into(),
                procedure: "Fix_U".into(),
                e_n: 120.0,
                se: None,
                type1: 0.001,
                type2: 0.012,
                savings: None,
            },
        ];
        let csv = rows_to_csv(&rows);
        assert_eq!(
            csv,
            "scenario,procedure,E_N,SE,typeI,typeII,savings\nJ=500,Seq_U,54.17,0.67,0.008,0.012,55%\nJ=500,Fix_U,120,,0.001,0.012,\n"
        );
        let t = rows_to_table(&rows);
        assert_eq!(t.lines().count(), 3);
    }
}
