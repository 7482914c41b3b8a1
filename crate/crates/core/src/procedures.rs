//! Staged sequential stepdown and stepup procedures.
//!
//! All active streams are sampled in lockstep. A stage ends as soon as some
//! standardized statistic leaves its continuation region; the procedure then
//! rejects and/or accepts a batch of hypotheses, drops those streams and
//! starts the next stage with the remaining ones.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critical_values::StandardizedLadder;
use crate::error::{invalid, Error, Result};
use crate::statistics::SequentialStatistic;

/// Default cap on the per-stream sample size of a run.
pub const DEFAULT_GUARD: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stepdown,
    Stepup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Rejected,
    Accepted,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Every hypothesis was decided.
    Completed,
    /// A non-rejective run hit its horizon with hypotheses still active.
    HorizonReached,
    /// The sample-size guard stopped a run that had not terminated.
    GuardTripped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureConfig {
    pub mode: Mode,
    pub rejective: bool,
    pub ladder: StandardizedLadder,
    pub horizon: Option<usize>,
    pub max_stage_guard: usize,
    pub tie_seed: u64,
    pub trace: bool,
}

impl ProcedureConfig {
    pub fn new(mode: Mode, ladder: StandardizedLadder) -> Self {
        Self {
            mode,
            rejective: false,
            ladder,
            horizon: None,
            max_stage_guard: DEFAULT_GUARD,
            tie_seed: 0,
            trace: false,
        }
    }

    pub fn rejective(mode: Mode, ladder: StandardizedLadder, horizon: usize) -> Self {
        Self {
            rejective: true,
            horizon: Some(horizon),
            ..Self::new(mode, ladder)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(invalid("empty ladder"));
        }
        if self.rejective {
            match self.horizon {
                None => return Err(invalid("rejective procedures need a finite horizon")),
                Some(0) => return Err(invalid("horizon must be at least 1")),
                _ => {}
            }
        } else if self.ladder.lower().is_none() {
            return Err(invalid(
                "non-rejective procedures need lower thresholds a_w",
            ));
        }
        if self.horizon == Some(0) {
            return Err(invalid("horizon must be at least 1"));
        }
        if self.max_stage_guard == 0 {
            return Err(invalid("max_stage_guard must be positive"));
        }
        Ok(())
    }
}

/// One terminal decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub stream: usize,
    pub verdict: Verdict,
    pub stage: usize,
    pub sample_size: usize,
    pub statistic_value: f64,
    pub standardized: f64,
    /// Threshold compared against; `None` for acceptances forced by the
    /// horizon of a rejective run.
    pub threshold: Option<f64>,
}

/// Result of the decision step at the end of a stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    /// Stream ids in ascending order of standardized statistic.
    pub ordering: Vec<usize>,
    /// Rejected streams with the `b` threshold each one cleared.
    pub rejected: Vec<(usize, f64)>,
    /// Accepted streams with the `a` threshold each one fell below.
    pub accepted: Vec<(usize, f64)>,
}

impl StageOutcome {
    pub fn m(&self) -> usize {
        self.rejected.len()
    }

    pub fn m_prime(&self) -> usize {
        self.accepted.len()
    }
}

/// Rejection and acceptance counts for one stage.
///
/// `ordered` holds `(stream, standardized value)` sorted ascending; `r` and
/// `c` are the numbers rejected and accepted in earlier stages; `lower` and
/// `upper` are the full common ladders `a`, `b` (1-based in the math).
/// Rejections are computed first and acceptances may not overlap them.
pub fn stage_decide(
    ordered: &[(usize, f64)],
    r: usize,
    c: usize,
    lower: Option<&[f64]>,
    upper: &[f64],
    mode: Mode,
) -> Result<StageOutcome> {
    let k = ordered.len();
    if r + c + k > upper.len() {
        return Err(Error::LengthMismatch {
            expected: upper.len(),
            got: r + c + k,
        });
    }
    if ordered.windows(2).any(|w| !(w[0].1 <= w[1].1)) {
        return Err(invalid("stage values must be sorted ascending"));
    }
    // z(l) is the l-th smallest, l = 1..=k; b(w) and a(w) are 1-based.
    let z = |l: usize| ordered[l - 1].1;
    let b = |w: usize| upper[w - 1];

    let (m, reject_threshold): (usize, Box<dyn Fn(usize) -> f64>) = match mode {
        Mode::Stepdown => {
            let m = (1..=k).take_while(|&t| z(k - t + 1) >= b(r + t)).count();
            (m, Box::new(move |t| b(r + t)))
        }
        Mode::Stepup => {
            let m = (1..=k).rev().find(|&m| z(k - m + 1) >= b(r + m)).unwrap_or(0);
            (m, Box::new(move |_| b(r + m)))
        }
    };

    let m_prime = match lower {
        None => 0,
        Some(lower) => {
            let a = |w: usize| lower[w - 1];
            let mp = match mode {
                Mode::Stepdown => (1..=k).take_while(|&l| z(l) <= a(c + l)).count(),
                Mode::Stepup => (1..=k).rev().find(|&l| z(l) <= a(c + l)).unwrap_or(0),
            };
            mp.min(k - m)
        }
    };
    if m == 0 && m_prime == 0 {
        return Err(Error::NoBoundaryCrossed);
    }

    let rejected = (1..=m)
        .map(|t| (ordered[k - t].0, reject_threshold(t)))
        .collect();
    let accepted = match lower {
        None => Vec::new(),
        Some(lower) => (1..=m_prime)
            .map(|l| {
                let w = match mode {
                    Mode::Stepdown => c + l,
                    Mode::Stepup => c + m_prime,
                };
                (ordered[l - 1].0, lower[w - 1])
            })
            .collect(),
    };
    Ok(StageOutcome {
        ordering: ordered.iter().map(|p| p.0).collect(),
        rejected,
        accepted,
    })
}

/// Whether sorted stage values leave the continuation region.
fn crossed(sorted: &[f64], r: usize, c: usize, lower: Option<&[f64]>, upper: &[f64], mode: Mode) -> bool {
    let k = sorted.len();
    let (lo, hi) = (sorted[0], sorted[k - 1]);
    match mode {
        Mode::Stepdown => hi >= upper[r] || lower.is_some_and(|a| lo <= a[c]),
        Mode::Stepup => {
            // b(r + k - l + 1) >= b(r + k) and a(c + l) <= a(c + k) for every l.
            let maybe_hi = hi >= upper[r + k - 1];
            let maybe_lo = lower.is_some_and(|a| lo <= a[c + k - 1]);
            if !maybe_hi && !maybe_lo {
                return false;
            }
            (1..=k).any(|l| {
                let z = sorted[l - 1];
                z >= upper[r + k - l] || lower.is_some_and(|a| z <= a[c + l - 1])
            })
        }
    }
}

/// Supplies observations for the active streams.
pub trait ObservationSource {
    /// Writes the `n`th observation (1-based) of stream `active[i]` into
    /// `out[i]`.
    fn observe(&mut self, n: usize, active: &[usize], out: &mut [f64]) -> Result<()>;
}

/// Prerecorded per-stream sequences.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    data: Vec<Vec<f64>>,
}

impl ReplaySource {
    pub fn new(data: Vec<Vec<f64>>) -> Self {
        Self { data }
    }
}

impl ObservationSource for ReplaySource {
    fn observe(&mut self, n: usize, active: &[usize], out: &mut [f64]) -> Result<()> {
        for (o, &j) in out.iter_mut().zip(active) {
            *o = *self
                .data
                .get(j)
                .and_then(|s| s.get(n - 1))
                .ok_or(Error::SourceExhausted { stream: j, n })?;
        }
        Ok(())
    }
}

/// A statistic whose "observations" are its own successive values, used to
/// inject precomputed statistic paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InjectedStatistic {
    value: Option<f64>,
    n: usize,
}

impl SequentialStatistic for InjectedStatistic {
    fn observe(&mut self, x: f64) -> Result<()> {
        self.value = Some(x);
        self.n += 1;
        Ok(())
    }

    fn value(&self) -> Option<f64> {
        self.value
    }

    fn samples(&self) -> usize {
        self.n
    }
}

/// Per-stage audit record kept when tracing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub stage: usize,
    pub n: usize,
    pub rejected_before: usize,
    pub accepted_before: usize,
    /// `(stream, raw statistic, standardized)` in ascending standardized order.
    pub values: Vec<(usize, f64, f64)>,
    /// Continuation interval `(a, b)` at each rank, ascending.
    pub bounds: Vec<(Option<f64>, f64)>,
    pub rejected: Vec<usize>,
    pub accepted: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ProcedureState<S> {
    pub active: Vec<usize>,
    /// Index of the stage in progress (one more than completed stages).
    pub stage: usize,
    pub n: usize,
    pub rejected_count: usize,
    pub accepted_count: usize,
    pub stats: Vec<S>,
    pub decisions: Vec<DecisionRecord>,
    pub termination: Termination,
    pub trace: Vec<StageTrace>,
}

impl<S> ProcedureState<S> {
    pub fn streams(&self) -> usize {
        self.stats.len()
    }

    /// `N_j`: decision time of each stream, or the final `n` if undecided.
    pub fn sample_sizes(&self) -> Vec<usize> {
        let mut out = vec![self.n; self.streams()];
        for d in &self.decisions {
            out[d.stream] = d.sample_size;
        }
        out
    }

    /// Streamwise average sample size `sum_j N_j / J`.
    pub fn average_sample_size(&self) -> f64 {
        let total: usize = self.sample_sizes().iter().sum();
        total as f64 / self.streams() as f64
    }

    pub fn verdicts(&self) -> Vec<Option<Verdict>> {
        let mut out = vec![None; self.streams()];
        for d in &self.decisions {
            out[d.stream] = Some(d.verdict);
        }
        out
    }

    fn assert_conservation(&self) {
        assert_eq!(
            self.rejected_count + self.accepted_count + self.active.len(),
            self.streams(),
            "conservation violated at stage {}",
            self.stage
        );
    }
}

/// Runs the procedure described by `config`.
pub fn run<S, O>(config: &ProcedureConfig, source: &mut O, stats: Vec<S>) -> Result<ProcedureState<S>>
where
    S: SequentialStatistic,
    O: ObservationSource + ?Sized,
{
    config.validate()?;
    let j = stats.len();
    if j == 0 {
        return Err(invalid("no streams"));
    }
    if config.ladder.len() != j {
        return Err(Error::LengthMismatch {
            expected: j,
            got: config.ladder.len(),
        });
    }
    let upper = config.ladder.upper();
    let lower = if config.rejective { None } else { config.ladder.lower() };
    let mut ties = ChaCha8Rng::seed_from_u64(config.tie_seed);

    let mut st = ProcedureState {
        active: (0..j).collect(),
        stage: 1,
        n: 0,
        rejected_count: 0,
        accepted_count: 0,
        stats,
        decisions: Vec::new(),
        termination: Termination::Completed,
        trace: Vec::new(),
    };
    let mut obs = vec![0.0; j];
    let mut raw = vec![0.0; j];
    let mut z = vec![0.0; j];
    let mut sorted = Vec::with_capacity(j);

    while !st.active.is_empty() {
        if st.n >= config.max_stage_guard {
            st.termination = Termination::GuardTripped;
            break;
        }
        st.n += 1;
        let k = st.active.len();
        source.observe(st.n, &st.active, &mut obs[..k])?;
        let mut defined = true;
        for (i, &s) in st.active.iter().enumerate() {
            let stat = &mut st.stats[s];
            stat.observe(obs[i])?;
            match stat.value() {
                Some(v) => {
                    raw[i] = v;
                    z[i] = config.ladder.apply(s, v);
                }
                None => defined = false,
            }
        }
        let at_horizon = config.horizon == Some(st.n);
        let (r, c) = (st.rejected_count, st.accepted_count);

        let stop = defined && {
            sorted.clear();
            sorted.extend_from_slice(&z[..k]);
            let (lo, hi) = sorted
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            // cheap screen before sorting
            let screen = match config.mode {
                Mode::Stepdown => hi >= upper[r] || lower.is_some_and(|a| lo <= a[c]),
                Mode::Stepup => {
                    hi >= upper[r + k - 1] || lower.is_some_and(|a| lo <= a[c + k - 1])
                }
            };
            screen && {
                sorted.sort_by(|a, b| a.total_cmp(b));
                crossed(&sorted, r, c, lower, upper, config.mode)
            }
        };

        if !stop {
            if at_horizon {
                if config.rejective {
                    if !defined {
                        return Err(Error::UndefinedStatistic(format!(
                            "statistic undefined at the horizon n = {}",
                            st.n
                        )));
                    }
                    accept_remaining(&mut st, &raw, &z);
                    st.assert_conservation();
                    break;
                }
                st.termination = Termination::HorizonReached;
                break;
            }
            continue;
        }

        // Order with uniformly random tie-breaking.
        let mut keyed: Vec<(f64, u64, usize, usize)> = st
            .active
            .iter()
            .enumerate()
            .map(|(i, &s)| (z[i], ties.random::<u64>(), s, i))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let ordered: Vec<(usize, f64)> = keyed.iter().map(|t| (t.2, t.0)).collect();
        let outcome = stage_decide(&ordered, r, c, lower, upper, config.mode)?;
        let slot = |s: usize| keyed.iter().find(|t| t.2 == s).map(|t| t.3).unwrap();

        if config.trace {
            let bounds = (1..=k)
                .map(|l| match config.mode {
                    Mode::Stepdown => (lower.map(|a| a[c]), upper[r]),
                    Mode::Stepup => (lower.map(|a| a[c + l - 1]), upper[r + k - l]),
                })
                .collect();
            st.trace.push(StageTrace {
                stage: st.stage,
                n: st.n,
                rejected_before: r,
                accepted_before: c,
                values: keyed.iter().map(|t| (t.2, raw[t.3], t.0)).collect(),
                bounds,
                rejected: outcome.rejected.iter().map(|p| p.0).collect(),
                accepted: outcome.accepted.iter().map(|p| p.0).collect(),
            });
        }

        for (list, verdict) in [(&outcome.rejected, Verdict::Rejected), (&outcome.accepted, Verdict::Accepted)] {
            for &(s, thr) in list {
                let i = slot(s);
                st.decisions.push(DecisionRecord {
                    stream: s,
                    verdict,
                    stage: st.stage,
                    sample_size: st.n,
                    statistic_value: raw[i],
                    standardized: z[i],
                    threshold: Some(thr),
                });
            }
        }
        st.rejected_count += outcome.m();
        st.accepted_count += outcome.m_prime();
        let decided: Vec<usize> = outcome
            .rejected
            .iter()
            .chain(&outcome.accepted)
            .map(|p| p.0)
            .collect();
        let mut keep_raw = Vec::with_capacity(k);
        let mut keep_z = Vec::with_capacity(k);
        let mut keep = Vec::with_capacity(k);
        for (i, &s) in st.active.iter().enumerate() {
            if !decided.contains(&s) {
                keep.push(s);
                keep_raw.push(raw[i]);
                keep_z.push(z[i]);
            }
        }
        st.active = keep;
        st.assert_conservation();

        if config.rejective && at_horizon && !st.active.is_empty() {
            raw[..st.active.len()].copy_from_slice(&keep_raw);
            z[..st.active.len()].copy_from_slice(&keep_z);
            accept_remaining(&mut st, &raw, &z);
            st.assert_conservation();
            break;
        }
        if at_horizon && !st.active.is_empty() {
            st.termination = Termination::HorizonReached;
            break;
        }
        st.stage += 1;
    }
    Ok(st)
}

fn accept_remaining<S>(st: &mut ProcedureState<S>, raw: &[f64], z: &[f64]) {
    for (i, &s) in st.active.iter().enumerate() {
        st.decisions.push(DecisionRecord {
            stream: s,
            verdict: Verdict::Accepted,
            stage: st.stage,
            sample_size: st.n,
            statistic_value: raw[i],
            standardized: z[i],
            threshold: None,
        });
    }
    st.accepted_count += st.active.len();
    st.active.clear();
}

fn require(config: &ProcedureConfig, mode: Mode, rejective: bool) -> Result<()> {
    if config.mode != mode || config.rejective != rejective {
        return Err(invalid(format!(
            "config is {:?} (rejective = {}), expected {:?} (rejective = {})",
            config.mode, config.rejective, mode, rejective
        )));
    }
    Ok(())
}

pub fn run_stepdown<S: SequentialStatistic, O: ObservationSource + ?Sized>(
    source: &mut O,
    config: &ProcedureConfig,
    stats: Vec<S>,
) -> Result<ProcedureState<S>> {
    require(config, Mode::Stepdown, false)?;
    run(config, source, stats)
}

pub fn run_stepup<S: SequentialStatistic, O: ObservationSource + ?Sized>(
    source: &mut O,
    config: &ProcedureConfig,
    stats: Vec<S>,
) -> Result<ProcedureState<S>> {
    require(config, Mode::Stepup, false)?;
    run(config, source, stats)
}

pub fn run_rejective_stepdown<S: SequentialStatistic, O: ObservationSource + ?Sized>(
    source: &mut O,
    config: &ProcedureConfig,
    stats: Vec<S>,
) -> Result<ProcedureState<S>> {
    require(config, Mode::Stepdown, true)?;
    run(config, source, stats)
}

pub fn run_rejective_stepup<S: SequentialStatistic, O: ObservationSource + ?Sized>(
    source: &mut O,
    config: &ProcedureConfig,
    stats: Vec<S>,
) -> Result<ProcedureState<S>> {
    require(config, Mode::Stepup, true)?;
    run(config, source, stats)
}

/// Writes decision rows `replicate_id,stream,verdict,stage,sample_size,statistic_value`.
/// Streams are reported 1-based.
pub fn write_decisions_csv<W: Write>(
    mut out: W,
    replicate_id: usize,
    decisions: &[DecisionRecord],
    header: bool,
) -> io::Result<()> {
    if header {
        writeln!(out, "replicate_id,stream,verdict,stage,sample_size,statistic_value")?;
    }
    let mut sorted: Vec<&DecisionRecord> = decisions.iter().collect();
    sorted.sort_by_key(|d| (d.stage, d.stream));
    for d in sorted {
        let verdict = match d.verdict {
            Verdict::Rejected => "reject",
            Verdict::Accepted => "accept",
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            replicate_id,
            d.stream + 1,
            verdict,
            d.stage,
            d.sample_size,
            d.statistic_value
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical_values::{CriticalLadder, StandardizedLadder};

    const A: [f64; 3] = [-2.34, -1.94, -1.27];
    const B: [f64; 3] = [1.93, 1.53, 0.86];

    fn ladder() -> StandardizedLadder {
        StandardizedLadder::identity(Some(A.to_vec()), B.to_vec()).unwrap()
    }

    fn ordered(v: &[f64]) -> Vec<(usize, f64)> {
        let mut o: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
        o.sort_by(|a, b| a.1.total_cmp(&b.1));
        o
    }

    #[test]
    fn stage_decide_examples() {
        let o = ordered(&[-2.43, 0.5, 2.03]);
        let s = stage_decide(&o, 0, 0, Some(&A), &B, Mode::Stepdown).unwrap();
        assert_eq!((s.m(), s.m_prime()), (1, 1));
        assert_eq!(s.rejected, vec![(2, 1.93)]);
        assert_eq!(s.accepted, vec![(0, -2.34)]);

        let o = ordered(&[2.5, 3.0, 2.0]);
        let s = stage_decide(&o, 0, 0, Some(&A), &B, Mode::Stepdown).unwrap();
        assert_eq!((s.m(), s.m_prime()), (3, 0));

        let b2 = [1.93, 1.53];
        let s = stage_decide(&ordered(&[1.6, 2.0]), 0, 0, None, &b2, Mode::Stepup).unwrap();
        assert_eq!(s.m(), 2);
        let s = stage_decide(&ordered(&[1.6, 2.0]), 0, 0, None, &b2, Mode::Stepdown).unwrap();
        assert_eq!(s.m(), 2);
        let s = stage_decide(&ordered(&[1.4, 2.0]), 0, 0, None, &b2, Mode::Stepup).unwrap();
        assert_eq!(s.m(), 1);

        assert_eq!(
            stage_decide(&ordered(&[0.0, 0.1]), 0, 0, Some(&A[..2]), &b2, Mode::Stepup),
            Err(Error::NoBoundaryCrossed)
        );
    }

    #[test]
    fn stepup_rejects_past_a_gap() {
        // second largest clears b_2 while the largest misses b_1: stepdown
        // rejects nothing, stepup rejects both
        let b2 = [1.93, 1.53];
        let o = ordered(&[1.6, 1.7]);
        assert_eq!(stage_decide(&o, 0, 0, None, &b2, Mode::Stepup).unwrap().m(), 2);
        assert_eq!(
            stage_decide(&o, 0, 0, None, &b2, Mode::Stepdown),
            Err(Error::NoBoundaryCrossed)
        );
    }

    fn bits(s: &str) -> Vec<f64> {
        s.bytes().map(|b| (b - b'0') as f64).collect()
    }

    fn inject(paths: &[&[f64]]) -> ReplaySource {
        ReplaySource::new(paths.iter().map(|p| p.to_vec()).collect())
    }

    #[test]
    fn injected_paths_drive_decisions() {
        // stream 3 drifts to -2.43 at n = 2
        let mut src = inject(&[&[0.5, 2.03], &[0.1, 2.03], &[-1.0, -2.43]]);
        let cfg = ProcedureConfig::new(Mode::Stepdown, ladder());
        let st = run_stepdown(&mut src, &cfg, vec![InjectedStatistic::default(); 3]).unwrap();
        assert_eq!(st.termination, Termination::Completed);
        assert_eq!(st.verdicts(), vec![Some(Verdict::Rejected), Some(Verdict::Rejected), Some(Verdict::Accepted)]);
        assert!(st.decisions.iter().all(|d| d.stage == 1 && d.sample_size == 2));
    }

    #[test]
    fn source_exhaustion_is_an_error() {
        let mut src = ReplaySource::new(vec![bits("000"), bits("000")]);
        let cfg = ProcedureConfig::new(Mode::Stepdown, StandardizedLadder::identity(Some(vec![-9.0, -9.0]), vec![9.0, 9.0]).unwrap());
        let err = run(&cfg, &mut src, vec![InjectedStatistic::default(); 2]).unwrap_err();
        assert_eq!(err, Error::SourceExhausted { stream: 0, n: 4 });
    }

    #[test]
    fn guard_trips_distinctly() {
        struct Zeros;
        impl ObservationSource for Zeros {
            fn observe(&mut self, _: usize, _: &[usize], out: &mut [f64]) -> Result<()> {
                out.fill(0.0);
                Ok(())
            }
        }
        let mut cfg = ProcedureConfig::new(Mode::Stepup, ladder());
        cfg.max_stage_guard = 50;
        let st = run(&cfg, &mut Zeros, vec![InjectedStatistic::default(); 3]).unwrap();
        assert_eq!(st.termination, Termination::GuardTripped);
        assert_eq!(st.n, 50);
        assert!(st.decisions.is_empty());
    }

    #[test]
    fn rejective_without_crossing_accepts_all_at_horizon() {
        let mut src = ReplaySource::new(vec![vec![0.0; 10]; 3]);
        let cfg = ProcedureConfig::rejective(Mode::Stepdown, StandardizedLadder::identity(None, B.to_vec()).unwrap(), 10);
        let st = run_rejective_stepdown(&mut src, &cfg, vec![InjectedStatistic::default(); 3]).unwrap();
        assert_eq!(st.accepted_count, 3);
        assert!(st.decisions.iter().all(|d| d.sample_size == 10 && d.threshold.is_none()));
    }

    #[test]
    fn decision_at_horizon_still_stops() {
        // stream 0 is rejected at n = 2 = horizon; stream 1 stays active
        let mut src = inject(&[&[0.0, 5.0, 0.0], &[0.0, 0.0, -9.0]]);
        let l = StandardizedLadder::identity(Some(vec![-2.0, -1.0]), vec![2.0, 1.0]).unwrap();
        let mut cfg = ProcedureConfig::new(Mode::Stepdown, l);
        cfg.horizon = Some(2);
        let st = run(&cfg, &mut src, vec![InjectedStatistic::default(); 2]).unwrap();
        assert_eq!(st.termination, Termination::HorizonReached);
        assert_eq!(st.n, 2);
        assert_eq!(st.active, vec![1]);
        assert_eq!(st.sample_sizes(), vec![2, 2]);
    }

    #[test]
    fn rejective_needs_horizon() {
        let mut cfg = ProcedureConfig::rejective(Mode::Stepup, ladder(), 5);
        cfg.horizon = None;
        assert!(cfg.validate().is_err());
        let cfg = ProcedureConfig::new(Mode::Stepup, StandardizedLadder::identity(None, B.to_vec()).unwrap());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrong_runner_is_rejected() {
        let cfg = ProcedureConfig::new(Mode::Stepup, ladder());
        let mut src = ReplaySource::new(vec![vec![0.0]; 3]);
        assert!(run_stepdown(&mut src, &cfg, vec![InjectedStatistic::default(); 3]).is_err());
    }

    #[test]
    fn ties_are_seeded() {
        let order = |seed| {
            let mut src = ReplaySource::new(vec![vec![2.0]; 3]);
            let mut cfg = ProcedureConfig::new(Mode::Stepdown, ladder());
            cfg.tie_seed = seed;
            cfg.trace = true;
            let st = run(&cfg, &mut src, vec![InjectedStatistic::default(); 3]).unwrap();
            assert_eq!(st.rejected_count, 3);
            st.trace[0].values.iter().map(|v| v.0).collect::<Vec<_>>()
        };
        assert_eq!(order(3), order(3));
        let distinct: std::collections::HashSet<Vec<usize>> = (0..40).map(order).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn csv_rows() {
        let mut src = inject(&[&[2.5], &[-3.0]]);
        let l = StandardizedLadder::identity(Some(vec![-2.0, -1.0]), vec![2.0, 1.0]).unwrap();
        let st = run(&ProcedureConfig::new(Mode::Stepdown, l), &mut src, vec![InjectedStatistic::default(); 2]).unwrap();
        let mut buf = Vec::new();
        write_decisions_csv(&mut buf, 7, &st.decisions, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "replicate_id,stream,verdict,stage,sample_size,statistic_value\n7,1,reject,1,1,2.5\n7,2,accept,1,1,-3\n"
        );
    }

    #[test]
    fn per_stream_standardizers_rank_by_margin() {
        let s0 = CriticalLadder::new(vec![-3.0, -1.0], vec![2.0, 1.5], 0.0).unwrap();
        let s1 = CriticalLadder::new(vec![2.0, 4.0], vec![7.0, 6.5], 0.0).unwrap();
        let l = crate::critical_values::standardize(&[s0, s1], None).unwrap();
        // stream 1 is 5 units shifted: raw 7.1 there equals 2.1 on stream 0
        let mut src = inject(&[&[1.0, 1.0, -5.0], &[5.0, 7.1]]);
        let st = run(&ProcedureConfig::new(Mode::Stepdown, l), &mut src, vec![InjectedStatistic::default(); 2]).unwrap();
        assert_eq!(st.decisions[0].stream, 1);
        assert_eq!(st.decisions[0].sample_size, 2);
        assert_eq!(st.decisions[0].verdict, Verdict::Rejected);
    }
}
