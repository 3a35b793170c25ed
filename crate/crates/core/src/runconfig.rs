//! Run configuration files (TOML, or JSON by extension) and result output.
//!
//! ```toml
//! [scenario]            # any ScenarioConfig field; omitted keys keep defaults
//! num_aps = 10
//!
//! [experiment]
//! positions = 50        # count across the track, or an explicit list in m
//! speeds_kmh = [300.0]
//! architectures = ["centralized-mmse", "local-mr-lsfd"]
//! trials = 50
//! seed = 1
//! power_scheme = "full" # full | fractional | maxmin | maxsum
//! cluster_theta = "all" # or a threshold in dB
//!
//! [output]
//! directory = "out"
//! formats = ["csv", "json"]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ScenarioConfig;
use crate::montecarlo::{track_positions, Arch, ExperimentPlan, IciMode, ResultTable, SummaryEntry};
use crate::power::PowerScheme;

/// Overrides `output.directory` when set.
pub const OUTPUT_DIR_ENV: &str = "RAILCF_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PositionSpec {
    Count(usize),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Db(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub positions: PositionSpec,
    pub speeds_kmh: Vec<f64>,
    pub architectures: Vec<Arch>,
    pub trials: usize,
    pub seed: u64,
    pub power_scheme: PowerScheme,
    pub cluster_theta: ThetaSpec,
    pub ici_mode: IciMode,
    pub check_dominance: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            positions: PositionSpec::Count(50),
            speeds_kmh: Vec::new(),
            architectures: vec![
                Arch::CentralizedMmse,
                Arch::LocalMmseLsfd,
                Arch::LocalMrLsfd,
                Arch::LocalMrMf,
                Arch::SmallcellMmse,
                Arch::SmallcellMr,
                Arch::CellularMmse,
            ],
            trials: 50,
            seed: 1,
            power_scheme: PowerScheme::Full,
            cluster_theta: ThetaSpec::Keyword("all".into()),
            ici_mode: IciMode::Doppler,
            check_dominance: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

/// First backtick-quoted word of a parser message, used as the offending key.
fn key_from_message(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

/// Key of the nearest `key = value` line at or before byte `offset`.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let offset = offset.min(text.len());
    let end = text[offset..].find('\n').map_or(text.len(), |n| offset + n);
    text[..end]
        .lines()
        .rev()
        .find_map(|line| {
            let line = line.trim();
            if line.starts_with('[') {
                return Some(None);
            }
            line.split_once('=').map(|(k, _)| Some(k.trim().to_string()))
        })
        .flatten()
        .filter(|k| !k.is_empty())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = e
                .span()
                .and_then(|span| key_at(text, span.start))
                .unwrap_or_else(|| key_from_message(&msg));
            Error::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            Error::config(key_from_message(&msg), msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    pub fn theta_db(&self) -> Result<Option<f64>> {
        match &self.experiment.cluster_theta {
            ThetaSpec::Db(t) => Ok(Some(*t)),
            ThetaSpec::Keyword(k) if k == "all" => Ok(None),
            ThetaSpec::Keyword(k) => Err(Error::config(
                "cluster_theta",
                format!("expected a threshold in dB or \"all\", got \"{k}\""),
            )),
        }
    }

    pub fn plan(&self) -> Result<ExperimentPlan> {
        let e = &self.experiment;
        let positions = match &e.positions {
            PositionSpec::Count(n) => track_positions(&self.scenario, *n),
            PositionSpec::List(list) => list.clone(),
        };
        let plan = ExperimentPlan {
            scenario: self.scenario.clone(),
            positions,
            speeds_kmh: e.speeds_kmh.clone(),
            architectures: e.architectures.clone(),
            trials: e.trials,
            seed: e.seed,
            power_scheme: e.power_scheme,
            cluster_theta_db: self.theta_db()?,
            ici_mode: e.ici_mode,
            check_dominance: e.check_dominance,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.output.formats.is_empty() {
            return Err(Error::config("formats", "at least one output format is required"));
        }
        self.plan().map(|_| ())
    }

    /// Output directory, honoring [`OUTPUT_DIR_ENV`].
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.directory.clone())
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub seed: u64,
    pub config: &'a RunConfig,
    pub dominance_checks: usize,
    pub dominance_violations: usize,
    pub summary: Vec<SummaryEntry>,
}

/// Writes `results.csv` and/or `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, config: &RunConfig, table: &ResultTable) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if config.output.formats.contains(&OutputFormat::Csv) {
        let path = dir.join("results.csv");
        table.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    if config.output.formats.contains(&OutputFormat::Json) {
        let path = dir.join("summary.json");
        let summary = RunSummary {
            seed: table.seed,
            config,
            dominance_checks: table.dominance_checks,
            dominance_violations: table.dominance_violations,
            summary: table.summary()?,
        };
        fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
        written.push(path);
    }
    Ok(written)
}
