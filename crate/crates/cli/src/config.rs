//! Experiment configuration read from TOML.
//!
//! ```toml
//! seed = 7
//! prior = "symmetric"                 # or [[0.1, 0.2], [0.3, 0.4]]
//! population = "row_sums:3,3"         # or "balanced" or [[2, 1], [1, 2]]
//!
//! [design]
//! K = 6
//! m = 2
//! n = 2
//! L = 1
//! Lp = 1
//! ```
//!
//! Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use aggmvh::{CountGrid, Design, Observation, PopulationMatrix, PriorWeights};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pmf,
    Estimate,
    RiskExact,
    RiskMc,
    Delta,
    Scan,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pmf => "pmf",
            Mode::Estimate => "estimate",
            Mode::RiskExact => "risk_exact",
            Mode::RiskMc => "risk_mc",
            Mode::Delta => "delta",
            Mode::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    /// Only `"symmetric"` is accepted.
    Token(String),
    Grid(Vec<Vec<f64>>),
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Token("symmetric".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationSpec {
    /// `"balanced"` or `"row_sums:<a>,<b>,..."`.
    Token(String),
    Counts(Vec<Vec<u64>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    pub x: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<u64>>,
}

/// Inclusive `[lo, hi]` ranges for a frontier scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(rename = "K")]
    pub k: [u64; 2],
    pub m: [usize; 2],
    pub n: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[serde(default)]
    pub output_format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Design>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
}

/// A population as given: full counts, or only subgroup totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedPopulation {
    Counts(PopulationMatrix),
    RowSums(Vec<u64>),
}

impl ResolvedPopulation {
    pub fn row_sums(&self) -> Vec<u64> {
        match self {
            ResolvedPopulation::Counts(p) => p.row_sums().to_vec(),
            ResolvedPopulation::RowSums(r) => r.clone(),
        }
    }
}

/// Parses and validates a TOML document. The `mode` key is optional here;
/// [`ExperimentConfig::with_mode`] fixes it from the subcommand.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    if let Some(mode) = config.mode {
        config.validate(mode)?;
    }
    Ok(config)
}

impl ExperimentConfig {
    /// Sets the mode, rejecting a conflicting `mode` key, and validates
    /// everything the mode needs.
    pub fn with_mode(mut self, mode: Mode) -> Result<Self, CliError> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(CliError::field(
                    "mode",
                    format!("config says `{}` but `{}` was requested", m.name(), mode.name()),
                ));
            }
        }
        self.mode = Some(mode);
        self.validate(mode)?;
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        self.mode.expect("mode is set before running")
    }

    pub fn validate(&self, mode: Mode) -> Result<(), CliError> {
        if mode == Mode::Scan {
            let scan = self.scan.as_ref().ok_or_else(|| CliError::field("scan", "required for scan"))?;
            if scan.k[0] > scan.k[1] || scan.m[0] > scan.m[1] || scan.n[0] > scan.n[1] {
                return Err(CliError::field("scan", "each range must be [lo, hi] with lo <= hi"));
            }
            return Ok(());
        }
        self.design()?;
        let prior = self.resolved_prior()?;
        match mode {
            Mode::Pmf => {
                self.counts_population()?;
                self.observation_for_pmf()?;
            }
            Mode::Estimate => {
                self.observation()?;
            }
            Mode::RiskExact => {
                self.counts_population()?;
            }
            Mode::RiskMc => {
                self.counts_population()?;
                match self.replicates {
                    Some(r) if r >= 2 => {}
                    Some(r) => return Err(CliError::field("replicates", format!("must be at least 2, got {r}"))),
                    None => return Err(CliError::field("replicates", "required for risk_mc")),
                }
            }
            Mode::Delta => {
                if !prior.is_symmetric() {
                    return Err(CliError::field("prior", "delta is defined for the symmetric prior only"));
                }
                self.population()?;
            }
            Mode::Scan => unreachable!(),
        }
        Ok(())
    }

    pub fn design(&self) -> Result<Design, CliError> {
        let d = self.design.ok_or_else(|| CliError::field("design", "required for this mode"))?;
        d.validate().map_err(|e| CliError::field("design", e.to_string()))?;
        Ok(d)
    }

    pub fn resolved_prior(&self) -> Result<PriorWeights, CliError> {
        let d = self.design()?;
        let prior = match &self.prior {
            PriorSpec::Token(t) if t == "symmetric" => PriorWeights::symmetric(d.m, d.n),
            PriorSpec::Token(t) => {
                return Err(CliError::field("prior", format!("unknown token `{t}`, expected \"symmetric\" or a grid")))
            }
            PriorSpec::Grid(rows) => PriorWeights::from_rows(rows),
        }
        .map_err(|e| CliError::field("prior", e.to_string()))?;
        prior.check(&d).map_err(|e| CliError::field("prior", e.to_string()))?;
        Ok(prior)
    }

    pub fn population(&self) -> Result<ResolvedPopulation, CliError> {
        let d = self.design()?;
        let spec = self
            .population
            .as_ref()
            .ok_or_else(|| CliError::field("population", "required for this mode"))?;
        let bad = |msg: String| CliError::field("population", msg);
        match spec {
            PopulationSpec::Token(t) if t == "balanced" => PopulationMatrix::balanced(&d)
                .map(ResolvedPopulation::Counts)
                .map_err(|e| bad(e.to_string())),
            PopulationSpec::Token(t) => {
                let Some(list) = t.strip_prefix("row_sums:") else {
                    return Err(bad(format!(
                        "unknown token `{t}`, expected \"balanced\", \"row_sums:<a>,<b>,...\" or a grid"
                    )));
                };
                let rows = list
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("row sums must be nonnegative integers ({e})")))?;
                if rows.len() != d.m {
                    return Err(bad(format!("expected {} row sums, got {}", d.m, rows.len())));
                }
                let total: u64 = rows.iter().sum();
                if total != d.k {
                    return Err(bad(format!("row sums total {total}, expected K = {}", d.k)));
                }
                Ok(ResolvedPopulation::RowSums(rows))
            }
            PopulationSpec::Counts(rows) => {
                let pop = PopulationMatrix::from_rows(rows).map_err(|e| bad(e.to_string()))?;
                pop.check(&d).map_err(|e| bad(e.to_string()))?;
                Ok(ResolvedPopulation::Counts(pop))
            }
        }
    }

    /// The population when the mode needs every category count.
    pub fn counts_population(&self) -> Result<PopulationMatrix, CliError> {
        match self.population()? {
            ResolvedPopulation::Counts(p) => Ok(p),
            ResolvedPopulation::RowSums(_) => Err(CliError::field(
                "population",
                "this mode needs explicit counts or \"balanced\", not row sums",
            )),
        }
    }

    fn x_grid(&self) -> Result<(CountGrid, Option<Vec<u64>>), CliError> {
        let d = self.design()?;
        let spec = self
            .observation
            .as_ref()
            .ok_or_else(|| CliError::field("observation", "required for this mode"))?;
        let x = CountGrid::from_rows(&spec.x).map_err(|e| CliError::field("observation", e.to_string()))?;
        if x.rows() != d.m || x.cols() != d.n {
            return Err(CliError::field(
                "observation",
                format!("x must be {}x{}, got {}x{}", d.m, d.n, x.rows(), x.cols()),
            ));
        }
        if x.total() != d.l {
            return Err(CliError::field("observation", format!("x sums to {}, expected L = {}", x.total(), d.l)));
        }
        if let Some(y) = &spec.y {
            if y.len() != d.m {
                return Err(CliError::field("observation", format!("y must have {} entries", d.m)));
            }
        }
        Ok((x, spec.y.clone()))
    }

    /// First-stage counts and optional second-stage totals for `pmf`.
    pub fn observation_for_pmf(&self) -> Result<(CountGrid, Option<Vec<u64>>), CliError> {
        self.x_grid()
    }

    /// A full observation; `y` defaults to zeros only when `Lp = 0`.
    pub fn observation(&self) -> Result<Observation, CliError> {
        let d = self.design()?;
        let (x, y) = self.x_grid()?;
        let y = match y {
            Some(y) => y,
            None if d.lp == 0 => vec![0; d.m],
            None => return Err(CliError::field("observation", "y is required when Lp > 0")),
        };
        let obs = Observation::new(x, y).map_err(|e| CliError::field("observation", e.to_string()))?;
        obs.check(&d).map_err(|e| CliError::field("observation", e.to_string()))?;
        Ok(obs)
    }
}
