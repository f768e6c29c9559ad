//! Loss and modal cross-talk statistics for optical beams in turbulence.
//!
//! A beam crossing a turbulent path picks up a random phase profile. Over an
//! aperture matched to the beam, the profile is well captured by its low-order
//! expansion: a linear part (tilt, coefficients a and b) and a quadratic part
//! (defocus/astigmatism, coefficients g, h and s). This crate:
//!
//! * turns a von Karman phase spectrum into the Gaussian statistics of those
//!   coefficients ([`spectrum`]),
//! * evaluates the resulting mode-to-mode transmittance both in closed form
//!   and on a brute-force overlap grid ([`modes`]),
//! * provides the analytic probability laws of the fundamental-mode
//!   transmittance and of the power scattered into higher mode groups
//!   ([`analytic`]),
//! * samples those laws by Monte Carlo with reproducible, order-independent
//!   streams ([`montecarlo`]),
//! * and estimates the Fried parameter r0 from measured transmittance traces
//!   ([`estimate`]).
//!
//! All quantities are SI; transmittances are power ratios in [0, 1].

pub mod analytic;
pub mod error;
pub mod estimate;
pub mod modes;
pub mod montecarlo;
pub mod quad;
pub mod spectrum;

pub use analytic::{lambert_w, t_n_max, xi_roots, CrosstalkPdf, LambertBranch, PowerLawPdf, XiPdf};
pub use error::{Error, Result};
pub use estimate::{estimate_r0, FriedEstimate, PowerLawFit, TransmittanceSeries};
pub use modes::{
    grid_overlap, DistortionCoeffs, GridSpec, ModeIndex, OverlapGrid, PhaseScreen, ScreenOrder,
};
pub use montecarlo::{
    simulate_crosstalk, simulate_transmittance, Binning, CrosstalkRun, EmpiricalPdf, Engine,
    GhCoupling, SimConfig, TransmittanceRun,
};
pub use quad::{QuadOptions, Quadrature};
pub use spectrum::{
    compute_variances, kolmogorov_limit, vartheta, BeamParams, DistortionVariances, FilterKind,
    ModeFilter, TurbulenceParams, VarianceKernel,
};
