//! Uplink spectral efficiency of cell-free massive MIMO-OFDM serving the
//! roof antennas of a high-speed train, with Doppler-induced inter-carrier
//! interference.
//!
//! The pipeline runs from [`geometry`] (track layout, large-scale fading)
//! through [`channel`] (correlated Rician statistics, MMSE estimation) and
//! [`ici`] (LoS and NLoS ICI coefficients) to the receivers in
//! [`combining`] and [`lsfd`]. [`clustering`] and [`power`] restrict and
//! reallocate the uplink, and [`montecarlo`] evaluates whole experiment plans.
//! [`figures`], [`oracle`] and [`runconfig`] back the `railcf` binary.
//!
//! ```no_run
//! use railcf::geometry::ScenarioConfig;
//! use railcf::montecarlo::{run_plan, Arch, ExperimentPlan};
//!
//! let plan = ExperimentPlan::new(ScenarioConfig::default(), vec![Arch::LocalMrLsfd], 20, 1, 7);
//! let table = run_plan(&plan)?;
//! println!("{:.3}", table.average_se(Arch::LocalMrLsfd, 300.0));
//! # Ok::<(), railcf::Error>(())
//! ```

pub mod channel;
pub mod clustering;
pub mod combining;
pub mod error;
pub mod figures;
pub mod geometry;
pub mod ici;
pub mod linalg;
pub mod lsfd;
pub mod montecarlo;
pub mod oracle;
pub mod power;
pub mod runconfig;

pub use error::{Error, Result};
