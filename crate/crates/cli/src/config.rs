//! JSON run configuration.
//!
//! Every section and every field is optional; omitted values fall back to the
//! laboratory-chamber defaults (r0 = 5 cm, l0 = 2.7 mm, L0 = 51 mm, 2 mm
//! beam). Unknown keys are rejected so typos surface as config errors instead
//! of silently reverting to defaults.

use serde::{Deserialize, Serialize};

use turbmode::modes::{GridSpec, ScreenOrder};
use turbmode::montecarlo::{Binning, Engine, GhCoupling, SimConfig};
use turbmode::spectrum::{BeamParams, FilterKind, ModeFilter, TurbulenceParams};
use turbmode::Result;

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub turbulence: TurbulenceCfg,
    pub beam: BeamCfg,
    pub filter: FilterCfg,
    pub simulation: SimulationCfg,
    pub pdf: PdfCfg,
    pub crosstalk: CrosstalkCfg,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbulenceCfg {
    pub r0_m: f64,
    pub inner_scale_m: f64,
    pub outer_scale_m: f64,
}

impl Default for TurbulenceCfg {
    fn default() -> Self {
        Self {
            r0_m: 0.05,
            inner_scale_m: 0.0027,
            outer_scale_m: 0.051,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamCfg {
    pub waist_m: f64,
}

impl Default for BeamCfg {
    fn default() -> Self {
        Self { waist_m: 0.002 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FilterCfg {
    #[default]
    IntensitySpectrum,
    FieldSpectrum,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OrderCfg {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingCfg {
    #[default]
    Independent,
    Correlated,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum EngineCfg {
    #[default]
    ClosedForm,
    Grid,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BinningCfg {
    #[default]
    Uniform,
    LogLow,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationCfg {
    pub order: OrderCfg,
    pub samples: usize,
    pub seed: u64,
    pub tracking: bool,
    pub gh_coupling: CouplingCfg,
    pub engine: EngineCfg,
    pub binning: BinningCfg,
    pub bins: usize,
    /// Lower edge of the log-low binning, as a transmittance.
    pub t_min: f64,
    pub grid_samples: usize,
    /// Grid half-extent in beam waists.
    pub grid_extent_factor: f64,
}

impl Default for SimulationCfg {
    fn default() -> Self {
        Self {
            order: OrderCfg::First,
            samples: 100_000,
            seed: 1,
            tracking: false,
            gh_coupling: CouplingCfg::Independent,
            engine: EngineCfg::ClosedForm,
            binning: BinningCfg::Uniform,
            bins: 100,
            t_min: 1e-6,
            grid_samples: 512,
            grid_extent_factor: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, Default, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PdfTarget {
    #[default]
    Fundamental,
    Crosstalk,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdfCfg {
    pub target: PdfTarget,
    /// Cross-talk power level to tabulate.
    pub level: u32,
    /// Number of tabulation points.
    pub points: usize,
    /// Explicit power-law exponent; derived from the physical configuration
    /// when omitted.
    pub gamma: Option<f64>,
}

impl Default for PdfCfg {
    fn default() -> Self {
        Self {
            target: PdfTarget::Fundamental,
            level: 1,
            points: 2000,
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrosstalkCfg {
    pub max_level: u32,
}

impl Default for CrosstalkCfg {
    fn default() -> Self {
        Self { max_level: 3 }
    }
}

impl RunConfig {
    pub fn turbulence(&self) -> Result<TurbulenceParams> {
        TurbulenceParams::new(
            self.turbulence.r0_m,
            self.turbulence.inner_scale_m,
            self.turbulence.outer_scale_m,
        )
    }

    pub fn beam(&self) -> Result<BeamParams> {
        BeamParams::new(self.beam.waist_m)
    }

    pub fn filter_kind(&self) -> FilterKind {
        match self.filter {
            FilterCfg::IntensitySpectrum => FilterKind::IntensitySpectrum,
            FilterCfg::FieldSpectrum => FilterKind::FieldSpectrum,
        }
    }

    pub fn mode_filter(&self) -> Result<ModeFilter> {
        ModeFilter::new(self.filter_kind(), self.beam.waist_m)
    }

    /// Assemble the Monte Carlo configuration; `seed` overrides the file.
    pub fn sim_config(&self, seed: Option<u64>, beam: &BeamParams) -> Result<SimConfig> {
        let s = &self.simulation;
        let binning = match s.binning {
            BinningCfg::Uniform => Binning::Uniform { bins: s.bins },
            BinningCfg::LogLow => Binning::LogLow {
                bins: s.bins,
                t_min: s.t_min,
            },
        };
        let grid = GridSpec::new(s.grid_extent_factor * beam.waist(), s.grid_samples)?;
        Ok(SimConfig {
            order: match s.order {
                OrderCfg::First => ScreenOrder::First,
                OrderCfg::Second => ScreenOrder::Second,
            },
            samples: s.samples,
            seed: seed.unwrap_or(s.seed),
            tracking: s.tracking,
            gh_coupling: match s.gh_coupling {
                CouplingCfg::Independent => GhCoupling::Independent,
                CouplingCfg::Correlated => GhCoupling::Correlated,
            },
            engine: match s.engine {
                EngineCfg::ClosedForm => Engine::ClosedForm,
                EngineCfg::Grid => Engine::Grid,
            },
            binning,
            grid: Some(grid),
        })
    }
}
