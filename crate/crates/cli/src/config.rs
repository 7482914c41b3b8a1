//! The JSON experiment document read by every config-driven command.
//!
//! Deserialization fills defaults; [`ExperimentConfig::resolve`] applies
//! command-line overrides and materializes the remaining implied values, so
//! the echoed copy written next to the outputs is complete.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqstep::procedures::Mode;
use seqstep::simulation::{ScenarioConfig, SequentialDesign};
use seqstep::statistics::HypothesisSpec;

use crate::error::CliError;

fn default_name() -> String {
    "experiment".into()
}

fn default_designs() -> Vec<SequentialDesign> {
    vec![
        SequentialDesign::new(Mode::Stepdown),
        SequentialDesign::new(Mode::Stepup),
    ]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label for the scenario column of reports.
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default = "default_designs")]
    pub designs: Vec<SequentialDesign>,
    #[serde(default)]
    pub baseline: BaselineConfig,
    /// Prerecorded data for `run`, replacing the simulated ensemble.
    #[serde(default)]
    pub replay: Option<ReplayConfig>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn yes() -> bool {
    true
}

fn default_n_range() -> (usize, usize) {
    (1, 500)
}

/// Fixed-sample comparators for `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_n_range")]
    pub n_range: (usize, usize),
    /// Defaults to the scenario's replicate count and seed.
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Nominal levels searched when matching both error rates; empty skips
    /// the matched comparators.
    #[serde(default)]
    pub match_alpha_grid: Vec<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_range: default_n_range(),
            reps: None,
            seed: None,
            match_alpha_grid: Vec::new(),
        }
    }
}

/// Per-stream observation sequences with explicit critical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub mode: Mode,
    #[serde(default)]
    pub rejective: bool,
    #[serde(default)]
    pub horizon: Option<usize>,
    pub hypothesis: HypothesisSpec,
    /// `A_1..A_J`; omitted for rejective runs.
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    /// `B_1..B_J`.
    pub upper: Vec<f64>,
    pub data: Vec<Vec<f64>>,
    #[serde(default)]
    pub tie_seed: u64,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Applies overrides, fills implied defaults and validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(s) = &mut self.scenario {
            if let Some(seed) = o.seed {
                s.seed = seed;
            }
            if let Some(reps) = o.reps {
                s.reps = reps;
            }
            self.baseline.reps.get_or_insert(s.reps);
            self.baseline.seed.get_or_insert(s.seed);
        }
        if let (Some(r), Some(seed)) = (&mut self.replay, o.seed) {
            r.tie_seed = seed;
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = &self.scenario {
            s.validate()?;
            for d in &self.designs {
                if d.rejective && d.horizon.is_none() {
                    return Err(CliError::Invalid(format!(
                        "design {} is rejective and needs a horizon",
                        d.label()
                    )));
                }
                // catches metric / step value mismatches such as k > J
                s.step_values(d.mode)?;
            }
        }
        if self.designs.is_empty() {
            return Err(CliError::Invalid("designs must not be empty".into()));
        }
        let (lo, hi) = self.baseline.n_range;
        if lo == 0 || lo > hi {
            return Err(CliError::Invalid(format!("baseline n_range [{lo}, {hi}] is empty")));
        }
        if let Some(r) = &self.replay {
            r.validate()?;
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<&ScenarioConfig, CliError> {
        self.scenario
            .as_ref()
            .ok_or_else(|| CliError::Invalid("config has no scenario".into()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

impl ReplayConfig {
    fn validate(&self) -> Result<(), CliError> {
        let j = self.upper.len();
        if self.data.is_empty() {
            return Err(CliError::Invalid("replay has an empty stream list".into()));
        }
        if self.data.len() != j {
            return Err(CliError::Invalid(format!(
                "replay has {} streams but {j} critical values",
                self.data.len()
            )));
        }
        match (&self.lower, self.rejective) {
            (Some(_), true) => Err(CliError::Invalid(
                "rejective replay takes no lower critical values".into(),
            )),
            (None, false) => Err(CliError::Invalid(
                "replay needs lower critical values unless rejective".into(),
            )),
            _ if self.rejective && self.horizon.is_none() => {
                Err(CliError::Invalid("rejective replay needs a horizon".into()))
            }
            _ => Ok(self.hypothesis.validate()?),
        }
    }
}
