use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use seqstep::critical_values::{standardize, CriticalLadder, RejectiveLadder};
use seqstep::fixed_baseline::{calibrate_fixed_n, match_both_rates};
use seqstep::procedures::{
    run as run_procedure, write_decisions_csv, DecisionRecord, Mode, ProcedureConfig,
    ProcedureState, ReplaySource, StageTrace, Termination,
};
use seqstep::simulation::{
    monte_carlo_with_outcomes, run_ensemble, rows_to_csv, rows_to_table, savings,
    EnsembleOutcome, ReportRow, SequentialDesign, SimulationReport,
};
use seqstep::statistics::StreamStatistic;
use seqstep::step_values::{
    delta_holm_fdp, delta_kfwe, delta_linear, stepdown_fdp_values, stepdown_kfwe_values,
    stepup_fdp_values, stepup_kfwe_values, DeltaSequence, StepValueLadder,
};

use crate::config::{ExperimentConfig, ReplayConfig};
use crate::error::CliError;

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

// ---------------------------------------------------------------- step-values

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    Holm,
    Kfwe,
    Linear,
}

/// Resolved `step-values` arguments, echoed next to the table.
#[derive(Debug, Clone, Serialize)]
pub struct StepValuesSpec {
    pub streams: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub k: Option<usize>,
    pub delta: DeltaKind,
}

impl StepValuesSpec {
    fn delta(&self) -> Result<DeltaSequence, CliError> {
        let j = self.streams;
        Ok(match self.delta {
            DeltaKind::Holm => delta_holm_fdp(j, self.gamma.unwrap_or(0.0))?,
            DeltaKind::Kfwe => delta_kfwe(
                j,
                self.k
                    .ok_or_else(|| CliError::Invalid("--delta kfwe needs --k".into()))?,
            )?,
            DeltaKind::Linear => delta_linear(j)?,
        })
    }

    pub fn ladders(&self) -> Result<(StepValueLadder, StepValueLadder), CliError> {
        let (a, b) = (self.alpha, self.beta);
        let d = self.delta()?;
        match (self.gamma, self.k) {
            (Some(g), None) => Ok((
                stepdown_fdp_values(a, b, g, g, &d, &d)?,
                stepup_fdp_values(a, b, g, g, &d, &d)?,
            )),
            (None, Some(k)) => Ok((
                stepdown_kfwe_values(a, b, k, k, self.streams)?,
                stepup_kfwe_values(a, b, k, k, &d, &d)?,
            )),
            _ => Err(CliError::Invalid(
                "give exactly one of --gamma (FDP) or --k (k-FWER)".into(),
            )),
        }
    }
}

pub fn step_values_table(down: &StepValueLadder, up: &StepValueLadder, csv: bool) -> String {
    let mut out = String::new();
    if csv {
        out.push_str("j,stepdown,stepup\n");
        for (j, (d, u)) in down.alphas().iter().zip(up.alphas()).enumerate() {
            let _ = writeln!(out, "{},{d:.6e},{u:.6e}", j + 1);
        }
    } else {
        let _ = writeln!(out, "{:>5}  {:>13}  {:>13}", "j", "stepdown", "stepup");
        for (j, (d, u)) in down.alphas().iter().zip(up.alphas()).enumerate() {
            let _ = writeln!(out, "{:>5}  {d:>13.6e}  {u:>13.6e}", j + 1);
        }
    }
    out
}

pub fn step_values(spec: &StepValuesSpec, out: Option<&Path>) -> Result<String, CliError> {
    let (down, up) = spec.ladders()?;
    if let Some(dir) = out {
        write(dir, "step_values.csv", &step_values_table(&down, &up, true))?;
        let echo = serde_json::to_string_pretty(spec).expect("spec serializes") + "\n";
        write(dir, "config.json", &echo)?;
    }
    Ok(step_values_table(&down, &up, false))
}

/// Step values of `cfg`'s scenario for both modes.
pub fn scenario_step_values(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let s = cfg.scenario()?;
    let down = s.step_values(Mode::Stepdown)?;
    let up = s.step_values(Mode::Stepup)?;
    write(&cfg.out, "step_values.csv", &step_values_table(&down, &up, true))?;
    write(&cfg.out, "config.json", &cfg.to_json())?;
    Ok(step_values_table(&down, &up, false))
}

// ---------------------------------------------------------------- run

fn replay_config(r: &ReplayConfig) -> Result<ProcedureConfig, CliError> {
    let mut cfg = if r.rejective {
        let horizon = r.horizon.expect("validated");
        let ladder = RejectiveLadder::new(r.upper.clone(), Some(horizon))?;
        ProcedureConfig::rejective(r.mode, ladder.standardized(), horizon)
    } else {
        let lower = r.lower.clone().expect("validated");
        let crit = CriticalLadder::new(lower, r.upper.clone(), 0.0)?;
        let mut c = ProcedureConfig::new(r.mode, standardize(&[crit], None)?);
        c.horizon = r.horizon;
        c
    };
    cfg.tie_seed = r.tie_seed;
    Ok(cfg)
}

fn format_trace(trace: &[StageTrace]) -> String {
    let mut out = String::new();
    for t in trace {
        let _ = writeln!(
            out,
            "stage {}  n={}  rejected so far={}  accepted so far={}",
            t.stage, t.n, t.rejected_before, t.accepted_before
        );
        let _ = writeln!(
            out,
            "  {:>4}  {:>6}  {:>11}  {:>12}  {:>9}  {:>9}",
            "rank", "stream", "statistic", "standardized", "a", "b"
        );
        for (rank, ((stream, raw, z), (a, b))) in t.values.iter().zip(&t.bounds).enumerate() {
            let a = a.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "  {:>4}  {:>6}  {raw:>11.4}  {z:>12.4}  {a:>9}  {b:>9.4}",
                rank + 1,
                stream + 1
            );
        }
        let ids = |v: &[usize]| {
            v.iter()
                .map(|s| (s + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "  rejected: {}", ids(&t.rejected));
        let _ = writeln!(out, "  accepted: {}", ids(&t.accepted));
    }
    out
}

fn summarize(decisions: &[DecisionRecord], termination: Termination, j: usize) -> String {
    let rejected = decisions
        .iter()
        .filter(|d| d.verdict == seqstep::procedures::Verdict::Rejected)
        .count();
    format!(
        "{} streams: {rejected} rejected, {} accepted, {} undecided ({termination:?})\n",
        j,
        decisions.len() - rejected,
        j - decisions.len()
    )
}

/// Runs one ensemble: the replay data if configured, else replicate
/// `replicate` of the scenario under design number `design`.
pub fn run(
    cfg: &ExperimentConfig,
    design: usize,
    replicate: usize,
    trace: bool,
) -> Result<(String, Termination), CliError> {
    let (state, j): (ProcedureState<StreamStatistic>, usize) = if let Some(r) = &cfg.replay {
        let mut pc = replay_config(r)?;
        pc.trace = trace;
        let stats = vec![StreamStatistic::new(r.hypothesis.clone()); r.data.len()];
        let mut src = ReplaySource::new(r.data.clone());
        (run_procedure(&pc, &mut src, stats)?, r.data.len())
    } else {
        let s = cfg.scenario()?;
        let d = cfg.designs.get(design).ok_or_else(|| {
            CliError::Invalid(format!(
                "design index {design} out of range ({} designs)",
                cfg.designs.len()
            ))
        })?;
        let mut pc = d.procedure(s)?;
        pc.trace = trace;
        (run_ensemble(s, &pc, replicate)?, s.streams)
    };

    let mut csv = Vec::new();
    write_decisions_csv(&mut csv, replicate, &state.decisions, true)?;
    write(&cfg.out, "decisions.csv", &String::from_utf8(csv).expect("ascii"))?;
    write(&cfg.out, "config.json", &cfg.to_json())?;
    let mut text = String::new();
    if trace {
        let t = format_trace(&state.trace);
        write(&cfg.out, "trace.txt", &t)?;
        text.push_str(&t);
    }
    text.push_str(&summarize(&state.decisions, state.termination, j));
    Ok((text, state.termination))
}

// ---------------------------------------------------------------- simulate

fn replicates_csv(label: &str, outcomes: &[EnsembleOutcome], out: &mut String) {
    for o in outcomes {
        let c = &o.counts;
        let _ = writeln!(
            out,
            "{label},{},{:.4},{},{},{},{},{},{},{:?}",
            o.replicate,
            o.average_sample_size,
            c.rejected,
            c.false_rejections,
            c.accepted,
            c.false_acceptances,
            u8::from(o.type1),
            u8::from(o.type2),
            o.termination
        );
    }
}

fn simulate_designs(
    cfg: &ExperimentConfig,
    replicates: Option<&mut String>,
) -> Result<Vec<(SequentialDesign, SimulationReport)>, CliError> {
    let s = cfg.scenario()?;
    let mut reports = Vec::new();
    let mut log = replicates;
    for d in &cfg.designs {
        let (report, outcomes) = monte_carlo_with_outcomes(s, d)?;
        if let Some(out) = log.as_deref_mut() {
            replicates_csv(d.label(), &outcomes, out);
        }
        reports.push((d.clone(), report));
    }
    Ok(reports)
}

fn guard_check(reports: &[(SequentialDesign, SimulationReport)]) -> Result<(), CliError> {
    let trips: Vec<String> = reports
        .iter()
        .filter(|(_, r)| r.guard_trips > 0)
        .map(|(d, r)| format!("{}: {} of {}", d.label(), r.guard_trips, r.reps))
        .collect();
    if trips.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "stage guard tripped in some replicates ({}); outputs written but incomplete",
            trips.join(", ")
        )))
    }
}

pub fn simulate(cfg: &ExperimentConfig, per_replicate: bool) -> Result<String, CliError> {
    let mut log = per_replicate.then(|| {
        "procedure,replicate,average_n,rejected,false_rejections,accepted,false_acceptances,type1,type2,termination\n"
            .to_string()
    });
    let reports = simulate_designs(cfg, log.as_mut())?;
    let rows: Vec<ReportRow> = reports
        .iter()
        .map(|(_, r)| ReportRow::sequential(&cfg.name, r, None))
        .collect();
    write(&cfg.out, "report.csv", &rows_to_csv(&rows))?;
    let table = rows_to_table(&rows);
    write(&cfg.out, "report.txt", &table)?;
    write(&cfg.out, "config.json", &cfg.to_json())?;
    if let Some(l) = &log {
        write(&cfg.out, "replicates.csv", l)?;
    }
    guard_check(&reports)?;
    Ok(table)
}

// ---------------------------------------------------------------- compare

fn fixed_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Stepdown => "Fix_D",
        Mode::Stepup => "Fix_U",
    }
}

/// Sequential rows followed by fixed-sample comparators. Fixed sizes match
/// the type II rate of the sequential design with the smallest E_N, and
/// each sequential row's savings is against the fixed procedure of its
/// own mode.
pub fn compare(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let s = cfg.scenario()?;
    let reports = simulate_designs(cfg, None)?;
    let mut rows: Vec<ReportRow> = reports
        .iter()
        .map(|(_, r)| ReportRow::sequential(&cfg.name, r, None))
        .collect();

    let b = &cfg.baseline;
    if b.enabled {
        let reps = b.reps.unwrap_or(s.reps);
        let seed = b.seed.unwrap_or(s.seed);
        let best = reports
            .iter()
            .filter(|(d, _)| !d.rejective)
            .min_by(|x, y| x.1.e_n.total_cmp(&y.1.e_n))
            .ok_or_else(|| {
                CliError::Invalid("baseline comparison needs a non-rejective design".into())
            })?;
        let target = best.1.type2_rate;
        let mut modes: Vec<Mode> = Vec::new();
        for (d, _) in &reports {
            if !modes.contains(&d.mode) {
                modes.push(d.mode);
            }
        }
        let mut fixed_n = Vec::new();
        for &mode in &modes {
            let ladder = s.step_values(mode)?;
            let c = calibrate_fixed_n(s, mode, &ladder, target, reps, seed, b.n_range)?;
            rows.push(ReportRow::fixed(&cfg.name, fixed_label(mode), c.n, c.type1_rate, c.type2_rate));
            fixed_n.push((mode, c.n));
        }
        for (row, (d, r)) in rows.iter_mut().zip(&reports) {
            if d.rejective {
                continue;
            }
            if let Some(&(_, n)) = fixed_n.iter().find(|(m, _)| *m == d.mode) {
                row.savings = Some(savings(r.e_n, n)?);
            }
        }
        if !b.match_alpha_grid.is_empty() {
            for (d, r) in reports.iter().filter(|(d, _)| !d.rejective) {
                let ladder = s.step_values(d.mode)?;
                let m = match_both_rates(
                    s,
                    d.mode,
                    &ladder,
                    (r.type1_rate, r.type2_rate),
                    &b.match_alpha_grid,
                    b.n_range,
                    reps,
                    seed,
                )?;
                let mut row = ReportRow::fixed(
                    &cfg.name,
                    &format!("{}'", fixed_label(d.mode)),
                    m.n,
                    m.type1_rate,
                    m.type2_rate,
                );
                row.procedure = format!("{} (alpha={:.3})", row.procedure, m.nominal_alpha);
                rows.push(row);
            }
        }
    }

    write(&cfg.out, "compare.csv", &rows_to_csv(&rows))?;
    let table = rows_to_table(&rows);
    write(&cfg.out, "compare.txt", &table)?;
    write(&cfg.out, "config.json", &cfg.to_json())?;
    guard_check(&reports)?;
    Ok(table)
}
