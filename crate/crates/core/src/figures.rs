//! Plot-ready data for every reproduced figure.
//!
//! Each generator returns long-format rows `(panel, series, x, y)`. Panels:
//! `se` (SE against position), `cdf` (empirical CDF points, `x` is the value
//! and `y` the cumulative probability), `avg` (average SE against the
//! figure's sweep variable), `worst` and `sum` (worst-TA and sum SE).

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CorrelationModel, ScenarioConfig};
use crate::montecarlo::{run_plan, track_positions, Arch, ExperimentPlan, ResultTable};
use crate::power::PowerScheme;

/// Problem size of a figure run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Ten times fewer trials and sweep points than `paper`.
    #[default]
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::config("scale", format!("expected desk or paper, got '{s}'"))),
        }
    }
}

impl Scale {
    /// Positions for SE-against-position panels.
    pub fn series_positions(self) -> usize {
        match self {
            Scale::Desk => 50,
            Scale::Paper => 500,
        }
    }

    /// Positions behind each average-SE point.
    pub fn average_positions(self) -> usize {
        match self {
            Scale::Desk => 20,
            Scale::Paper => 200,
        }
    }

    pub fn trials(self) -> usize {
        match self {
            Scale::Desk => 50,
            Scale::Paper => 500,
        }
    }

    pub fn speeds(self) -> Vec<f64> {
        match self {
            Scale::Desk => vec![100.0, 300.0, 600.0],
            Scale::Paper => vec![100.0, 200.0, 300.0, 400.0, 500.0, 600.0],
        }
    }
}

/// Figure identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig11,
}

impl Figure {
    pub const ALL: [Figure; 9] = [
        Figure::Fig3,
        Figure::Fig4,
        Figure::Fig5,
        Figure::Fig6,
        Figure::Fig7,
        Figure::Fig8,
        Figure::Fig9,
        Figure::Fig10,
        Figure::Fig11,
    ];

    pub fn number(self) -> u8 {
        Figure::ALL.iter().position(|&f| f == self).unwrap() as u8 + 3
    }

    pub fn file_name(self) -> String {
        format!("fig{}.csv", self.number())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| format!("fig{}", f.number()) == s)
            .ok_or_else(|| Error::config("figure", format!("expected fig3..fig11, got '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub panel: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FigureData {
    pub rows: Vec<FigureRow>,
}

impl FigureData {
    fn push(&mut self, panel: &str, series: impl Into<String>, x: f64, y: f64) {
        self.rows.push(FigureRow {
            panel: panel.to_string(),
            series: series.into(),
            x,
            y,
        });
    }

    /// `y` of the first row matching `(panel, series, x)`.
    pub fn value(&self, panel: &str, series: &str, x: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.panel == panel && r.series == series && r.x == x)
            .map(|r| r.y)
    }

    /// All `(x, y)` of one series, in insertion order.
    pub fn series(&self, panel: &str, series: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.panel == panel && r.series == series)
            .map(|r| (r.x, r.y))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn add_position_series(&mut self, table: &ResultTable, arch: Arch, speed: f64) -> Result<()> {
        for row in table.rows_for(arch, speed) {
            self.push("se", arch.as_str(), row.position, row.block_se);
        }
        self.add_cdf(arch.as_str(), &table.series(arch, speed));
        let cdf = table.cdf(arch, speed)?;
        self.push("avg", arch.as_str(), 0.0, table.average_se(arch, speed));
        self.push("spread", arch.as_str(), 0.0, cdf.max - cdf.min);
        self.push("likely95", arch.as_str(), 0.0, cdf.p5);
        Ok(())
    }

    /// Empirical CDF points `(value, i/n)`.
    fn add_cdf(&mut self, series: &str, values: &[f64]) {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        for (i, v) in sorted.into_iter().enumerate() {
            self.push("cdf", series, v, (i + 1) as f64 / n);
        }
    }
}

/// Seed shared by every figure so that common random numbers carry across panels.
pub const FIGURE_SEED: u64 = 20_230_601;

fn plan(scenario: ScenarioConfig, archs: Vec<Arch>, positions: usize, trials: usize) -> ExperimentPlan {
    ExperimentPlan::new(scenario, archs, positions, trials, FIGURE_SEED)
}

pub fn generate(figure: Figure, scale: Scale) -> Result<FigureData> {
    match figure {
        Figure::Fig3 => fig3(scale),
        Figure::Fig4 => fig4(scale),
        Figure::Fig5 => fig5(scale),
        Figure::Fig6 => fig6(scale),
        Figure::Fig7 => fig7(scale),
        Figure::Fig8 => fig8(scale),
        Figure::Fig9 => fig9(scale),
        Figure::Fig10 => fig10(scale),
        Figure::Fig11 => fig11(scale),
    }
}

fn position_figure(archs: Vec<Arch>, scale: Scale) -> Result<FigureData> {
    let p = plan(ScenarioConfig::default(), archs.clone(), scale.series_positions(), scale.trials());
    let table = run_plan(&p)?;
    let mut data = FigureData::default();
    for arch in archs {
        data.add_position_series(&table, arch, p.scenario.velocity_kmh)?;
    }
    Ok(data)
}

/// MMSE combining: centralized, local with LSFD, small cells.
pub fn fig3(scale: Scale) -> Result<FigureData> {
    position_figure(vec![Arch::CentralizedMmse, Arch::LocalMmseLsfd, Arch::SmallcellMmse], scale)
}

/// MR combining with LSFD and MF, small cells, and a cellular MMSE baseline.
pub fn fig4(scale: Scale) -> Result<FigureData> {
    position_figure(
        vec![Arch::LocalMrLsfd, Arch::LocalMrMf, Arch::SmallcellMr, Arch::CellularMmse],
        scale,
    )
}

/// Average SE against the number of APs.
pub fn fig5(scale: Scale) -> Result<FigureData> {
    let archs = vec![Arch::LocalMrLsfd, Arch::SmallcellMr, Arch::CellularMmse];
    let mut data = FigureData::default();
    for l in [10, 20, 30, 40] {
        let sc = ScenarioConfig {
            num_aps: l,
            ..ScenarioConfig::default()
        };
        let p = plan(sc, archs.clone(), scale.average_positions(), scale.trials());
        let table = run_plan(&p)?;
        for &arch in &archs {
            data.push("avg", arch.as_str(), l as f64, table.average_se(arch, p.scenario.velocity_kmh));
        }
    }
    Ok(data)
}

/// Fixed total antenna budget `L N` split into different deployments.
pub fn fig6(scale: Scale) -> Result<FigureData> {
    let mut data = FigureData::default();
    for total in [40usize, 80] {
        for n in [1usize, 2, 4, 8] {
            let sc = ScenarioConfig {
                num_aps: total / n,
                antennas_per_ap: n,
                ..ScenarioConfig::default()
            };
            let p = plan(sc, vec![Arch::LocalMrLsfd], scale.average_positions(), 1);
            let table = run_plan(&p)?;
            data.push(
                "avg",
                format!("LN={total}"),
                n as f64,
                table.average_se(Arch::LocalMrLsfd, p.scenario.velocity_kmh),
            );
        }
    }
    Ok(data)
}

/// SE at the initial position against the block size `M`.
pub fn fig7(scale: Scale) -> Result<FigureData> {
    let sizes: &[usize] = match scale {
        Scale::Desk => &[2, 4, 8, 16, 32],
        Scale::Paper => &[2, 4, 8, 16, 32, 64],
    };
    let mut data = FigureData::default();
    for &m in sizes {
        let sc = ScenarioConfig {
            num_aps: 20,
            subcarriers: m,
            ..ScenarioConfig::default()
        };
        let mut p = plan(sc, vec![Arch::LocalMrLsfd], 1, 1);
        p.speeds_kmh = scale.speeds();
        let table = run_plan(&p)?;
        for v in p.speeds() {
            data.push("avg", format!("v={v}"), m as f64, table.average_se(Arch::LocalMrLsfd, v));
        }
    }
    Ok(data)
}

/// Average SE against speed for several Rician factors and both correlation models.
pub fn fig8(scale: Scale) -> Result<FigureData> {
    let factors: &[f64] = match scale {
        Scale::Desk => &[-10.0, 10.0, 30.0],
        Scale::Paper => &[-10.0, 0.0, 10.0, 20.0, 30.0],
    };
    let mut data = FigureData::default();
    for correlation in [CorrelationModel::Correlated, CorrelationModel::Uncorrelated] {
        for &kbar in factors {
            let sc = ScenarioConfig {
                num_aps: 20,
                rician_factor_db: kbar,
                correlation,
                ..ScenarioConfig::default()
            };
            let mut p = plan(sc, vec![Arch::LocalMrLsfd], scale.average_positions(), 1);
            p.speeds_kmh = scale.speeds();
            let table = run_plan(&p)?;
            let name = format!("K={kbar}dB {}", correlation_name(correlation));
            for v in p.speeds() {
                data.push("avg", name.clone(), v, table.average_se(Arch::LocalMrLsfd, v));
            }
        }
    }
    Ok(data)
}

fn correlation_name(c: CorrelationModel) -> &'static str {
    match c {
        CorrelationModel::Correlated => "correlated",
        CorrelationModel::Uncorrelated => "uncorrelated",
    }
}

/// Average SE against the track distance for two AP densities.
pub fn fig9(scale: Scale) -> Result<FigureData> {
    let distances: Vec<f64> = match scale {
        Scale::Desk => vec![10.0, 20.0, 30.0, 50.0, 70.0, 100.0],
        Scale::Paper => (1..=20).map(|i| 5.0 * i as f64).collect(),
    };
    let mut data = FigureData::default();
    for l in [20usize, 40] {
        for &d in &distances {
            let sc = ScenarioConfig {
                num_aps: l,
                track_distance: d,
                ..ScenarioConfig::default()
            };
            let p = plan(sc, vec![Arch::LocalMrLsfd], scale.average_positions(), 1);
            let table = run_plan(&p)?;
            data.push(
                "avg",
                format!("L={l}"),
                d,
                table.average_se(Arch::LocalMrLsfd, p.scenario.velocity_kmh),
            );
        }
    }
    Ok(data)
}

/// Scenario of the clustering and power-control figures.
pub fn clustered_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_aps: 20,
        track_distance: 20.0,
        ..ScenarioConfig::default()
    }
}

fn power_name(p: PowerScheme) -> &'static str {
    match p {
        PowerScheme::Full => "full",
        PowerScheme::Fractional => "fractional",
        PowerScheme::Maxmin => "maxmin",
        PowerScheme::Maxsum => "maxsum",
    }
}

/// Worst-TA average SE against speed for several cluster thresholds and power schemes.
pub fn fig10(scale: Scale) -> Result<FigureData> {
    let mut data = FigureData::default();
    for theta in [0.0, 5.0, 10.0] {
        for scheme in [PowerScheme::Full, PowerScheme::Fractional, PowerScheme::Maxmin] {
            let mut p = plan(clustered_scenario(), vec![Arch::LocalMrLsfd], scale.average_positions(), 1);
            p.speeds_kmh = scale.speeds();
            p.cluster_theta_db = Some(theta);
            p.power_scheme = scheme;
            let table = run_plan(&p)?;
            let name = format!("theta={theta}dB {}", power_name(scheme));
            for v in p.speeds() {
                data.push("worst", name.clone(), v, table.worst_ta_average(Arch::LocalMrLsfd, v));
            }
        }
    }
    Ok(data)
}

/// Per-position CDFs of per-TA SE and sum SE for every power scheme.
pub fn fig11(scale: Scale) -> Result<FigureData> {
    let mut data = FigureData::default();
    for scheme in [PowerScheme::Full, PowerScheme::Fractional, PowerScheme::Maxmin, PowerScheme::Maxsum] {
        let mut p = plan(clustered_scenario(), vec![Arch::LocalMrLsfd], scale.series_positions(), 1);
        p.cluster_theta_db = Some(10.0);
        p.power_scheme = scheme;
        let table = run_plan(&p)?;
        let v = p.scenario.velocity_kmh;
        let name = power_name(scheme);
        let rows: Vec<_> = table.rows_for(Arch::LocalMrLsfd, v).collect();
        let per_ta: Vec<f64> = rows.iter().flat_map(|r| r.per_ta.iter().copied()).collect();
        let sums: Vec<f64> = rows.iter().map(|r| r.sum_se).collect();
        data.add_cdf(&format!("{name} per-TA"), &per_ta);
        data.add_cdf(&format!("{name} sum"), &sums);
        data.push("sum", name, 0.0, table.sum_se_average(Arch::LocalMrLsfd, v));
        data.push("worst", name, 0.0, table.worst_ta_average(Arch::LocalMrLsfd, v));
    }
    Ok(data)
}

/// Displacements used by the position figures at `scale`.
pub fn figure_positions(scale: Scale) -> Vec<f64> {
    track_positions(&ScenarioConfig::default(), scale.series_positions())
}
