//! Monte Carlo sampling of transmittance and cross-talk statistics.
//!
//! Every sample owns a private counter-based RNG stream: stream `i` of a
//! ChaCha generator keyed by the run seed. Sample `i` therefore never depends
//! on how many samples surround it or on which thread computes it, which
//! makes runs bit-reproducible under any parallel schedule and lets a run be
//! extended without disturbing its prefix.
//!
//! Within a stream the draw order is fixed: tilt a, tilt b, cross term s,
//! then the (g, h) pair. Tracking and truncation options zero coefficients
//! after drawing, so a tracked run stays sample-by-sample paired with its
//! untracked twin.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::analytic::t_n_max;
use crate::error::{Error, Result};
use crate::modes::{
    crosstalk_first_order, t00_first_order, t00_second_order, xi, DistortionCoeffs, GridSpec,
    ModeIndex, OverlapGrid, PhaseScreen, ScreenOrder,
};
use crate::spectrum::{BeamParams, DistortionVariances};

/// Statistical treatment of the quadratic pair (g, h).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhCoupling {
    /// g and h drawn independently, each with variance `c_g`.
    Independent,
    /// (g, h) jointly Gaussian with covariance matrix `[[c_g, c_s], [c_s, c_g]]`.
    Correlated,
}

/// Transmittance evaluation engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Analytic overlap formulas.
    ClosedForm,
    /// Brute-force overlap quadrature; slower, assumption-free.
    Grid,
}

/// Histogram layout for empirical densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// Equal-width bins across the support.
    Uniform { bins: usize },
    /// Logarithmic bins from `t_min` up to the support maximum, resolving
    /// the deep-fade tail; samples below `t_min` land in the first bin.
    LogLow { bins: usize, t_min: f64 },
}

impl Default for Binning {
    fn default() -> Self {
        Self::Uniform { bins: 100 }
    }
}

impl Binning {
    fn validate(&self) -> Result<()> {
        let bins = match *self {
            Self::Uniform { bins } => bins,
            Self::LogLow { bins, t_min } => {
                if !(t_min.is_finite() && t_min > 0.0 && t_min < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "log-low binning needs 0 < t_min < 1, got {t_min}"
                    )));
                }
                bins
            }
        };
        if bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        Ok(())
    }
}

/// Monte Carlo run configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub order: ScreenOrder,
    pub samples: usize,
    pub seed: u64,
    /// Zero the tilt pair after drawing, emulating ideal tip/tilt tracking.
    pub tracking: bool,
    pub gh_coupling: GhCoupling,
    pub engine: Engine,
    pub binning: Binning,
    /// Grid used by [`Engine::Grid`]; defaults to [`GridSpec::for_beam`].
    pub grid: Option<GridSpec>,
}

impl SimConfig {
    pub fn new(order: ScreenOrder, samples: usize, seed: u64) -> Self {
        Self {
            order,
            samples,
            seed,
            tracking: false,
            gh_coupling: GhCoupling::Independent,
            engine: Engine::ClosedForm,
            binning: Binning::default(),
            grid: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidParameter(
                "simulation needs at least one sample".into(),
            ));
        }
        self.binning.validate()
    }
}

fn validate_variances(vars: &DistortionVariances, coupling: GhCoupling) -> Result<()> {
    for (name, v) in [("c_a", vars.c_a), ("c_g", vars.c_g), ("c_s", vars.c_s)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "variance {name} must be non-negative and finite, got {v}"
            )));
        }
    }
    if coupling == GhCoupling::Correlated && vars.c_s > vars.c_g {
        return Err(Error::InvalidParameter(format!(
            "correlated (g, h) needs c_s <= c_g for a valid covariance, got c_s = {} > c_g = {}",
            vars.c_s, vars.c_g
        )));
    }
    Ok(())
}

/// Distortion coefficients of sample `index`; a pure function of
/// `(seed, index)` given the variances and options.
pub fn sample_coeffs(
    vars: &DistortionVariances,
    config: &SimConfig,
    index: u64,
) -> DistortionCoeffs {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);

    let za: f64 = StandardNormal.sample(&mut rng);
    let zb: f64 = StandardNormal.sample(&mut rng);
    let zs: f64 = StandardNormal.sample(&mut rng);
    let z1: f64 = StandardNormal.sample(&mut rng);
    let z2: f64 = StandardNormal.sample(&mut rng);

    let sd_a = vars.c_a.sqrt();
    let mut c = DistortionCoeffs {
        phi0: 0.0,
        a: sd_a * za,
        b: sd_a * zb,
        s: vars.c_s.sqrt() * zs,
        g: 0.0,
        h: 0.0,
    };
    match config.gh_coupling {
        GhCoupling::Independent => {
            let sd_g = vars.c_g.sqrt();
            c.g = sd_g * z1;
            c.h = sd_g * z2;
        }
        GhCoupling::Correlated => {
            // Cholesky factor of [[c_g, c_s], [c_s, c_g]].
            if vars.c_g > 0.0 {
                let l11 = vars.c_g.sqrt();
                let l21 = vars.c_s / l11;
                let l22 = (vars.c_g - l21 * l21).max(0.0).sqrt();
                c.g = l11 * z1;
                c.h = l21 * z1 + l22 * z2;
            }
        }
    }

    if config.order == ScreenOrder::First {
        c.g = 0.0;
        c.h = 0.0;
        c.s = 0.0;
    }
    if config.tracking {
        c.a = 0.0;
        c.b = 0.0;
    }
    c
}

/// Histogram-based density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPdf {
    edges: Vec<f64>,
    density: Vec<f64>,
    count: usize,
}

impl EmpiricalPdf {
    /// Build over the support `[0, hi]`; every sample must already lie there.
    pub fn from_samples_in(samples: &[f64], binning: &Binning, hi: f64) -> Result<Self> {
        binning.validate()?;
        if samples.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot build a histogram from zero samples".into(),
            ));
        }
        if !(hi.is_finite() && hi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "histogram upper edge must be positive, got {hi}"
            )));
        }
        let edges: Vec<f64> = match *binning {
            Binning::Uniform { bins } => (0..=bins)
                .map(|i| hi * i as f64 / bins as f64)
                .collect(),
            Binning::LogLow { bins, t_min } => {
                let lo = t_min * hi;
                let ratio = (hi / lo).ln();
                let mut e: Vec<f64> = (0..=bins)
                    .map(|i| lo * (ratio * i as f64 / bins as f64).exp())
                    .collect();
                // First bin absorbs everything below t_min.
                e[0] = 0.0;
                *e.last_mut().unwrap() = hi;
                e
            }
        };

        let bins = edges.len() - 1;
        let mut counts = vec![0usize; bins];
        for &t in samples {
            if !(0.0..=hi * (1.0 + 1e-12)).contains(&t) {
                return Err(Error::Data(format!(
                    "sample {t} outside the histogram support [0, {hi}]"
                )));
            }
            // Binary search over edges; the last edge is inclusive.
            let idx = match edges.binary_search_by(|e| e.total_cmp(&t)) {
                Ok(i) => i.min(bins - 1),
                Err(i) => (i - 1).min(bins - 1),
            };
            counts[idx] += 1;
        }

        let n = samples.len() as f64;
        let density = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, e)| c as f64 / (n * (e[1] - e[0])))
            .collect();
        Ok(Self {
            edges,
            density,
            count: samples.len(),
        })
    }

    /// Histogram over the unit interval.
    pub fn from_samples(samples: &[f64], binning: &Binning) -> Result<Self> {
        Self::from_samples_in(samples, binning, 1.0)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn bins(&self) -> usize {
        self.density.len()
    }

    /// Riemann mass of the histogram; 1 by construction.
    pub fn total_mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

/// Outcome of a fundamental-mode transmittance run.
#[derive(Debug, Clone)]
pub struct TransmittanceRun {
    pub samples: Vec<f64>,
    pub histogram: EmpiricalPdf,
}

/// Sample the fundamental-mode transmittance distribution.
pub fn simulate_transmittance(
    vars: &DistortionVariances,
    beam: &BeamParams,
    config: &SimConfig,
) -> Result<TransmittanceRun> {
    config.validate()?;
    validate_variances(vars, config.gh_coupling)?;

    let samples: Vec<f64> = match config.engine {
        Engine::ClosedForm => (0..config.samples as u64)
            .into_par_iter()
            .map(|i| {
                let c = sample_coeffs(vars, config, i);
                match config.order {
                    ScreenOrder::First => t00_first_order(beam, c.a, c.b),
                    ScreenOrder::Second => t00_second_order(beam, &c),
                }
            })
            .collect(),
        Engine::Grid => {
            let grid = config.grid.unwrap_or_else(|| GridSpec::for_beam(beam));
            let f = ModeIndex::fundamental();
            let overlap = OverlapGrid::new(&f, &f, beam, &grid)?;
            (0..config.samples as u64)
                .into_par_iter()
                .map(|i| {
                    let c = sample_coeffs(vars, config, i);
                    overlap.transmittance(&PhaseScreen::new(c, config.order)?)
                })
                .collect::<Result<Vec<f64>>>()?
        }
    };

    let histogram = EmpiricalPdf::from_samples(&samples, &config.binning)?;
    Ok(TransmittanceRun { samples, histogram })
}

/// Outcome of a cross-talk run; index 0 of each vector is level 1.
#[derive(Debug, Clone)]
pub struct CrosstalkRun {
    pub max_level: u32,
    /// `samples[k]` holds the level-(k+1) samples.
    pub samples: Vec<Vec<f64>>,
    pub histograms: Vec<EmpiricalPdf>,
}

/// Sample the power scattered into levels `1..=max_level`.
///
/// The closed-form engine is first-order only; the grid engine accepts either
/// order and sums the overlap with every Hermite mode of each level.
pub fn simulate_crosstalk(
    vars: &DistortionVariances,
    beam: &BeamParams,
    config: &SimConfig,
    max_level: u32,
) -> Result<CrosstalkRun> {
    config.validate()?;
    validate_variances(vars, config.gh_coupling)?;
    if max_level == 0 {
        return Err(Error::InvalidParameter(
            "cross-talk needs at least level 1".into(),
        ));
    }

    let per_sample: Vec<Vec<f64>> = match config.engine {
        Engine::ClosedForm => {
            if config.order != ScreenOrder::First {
                return Err(Error::InvalidParameter(
                    "closed-form cross-talk is first-order only; use the grid engine \
                     for second-order screens"
                        .into(),
                ));
            }
            (0..config.samples as u64)
                .into_par_iter()
                .map(|i| {
                    let c = sample_coeffs(vars, config, i);
                    let strength = xi(beam, &c);
                    (1..=max_level)
                        .map(|level| crosstalk_first_order(level, strength))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?
        }
        Engine::Grid => {
            let grid = config.grid.unwrap_or_else(|| GridSpec::for_beam(beam));
            let f = ModeIndex::fundamental();
            let overlaps: Vec<Vec<OverlapGrid>> = (1..=max_level)
                .map(|level| {
                    ModeIndex::hermite_level(level)
                        .iter()
                        .map(|m| OverlapGrid::new(&f, m, beam, &grid))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            (0..config.samples as u64)
                .into_par_iter()
                .map(|i| {
                    let c = sample_coeffs(vars, config, i);
                    let screen = PhaseScreen::new(c, config.order)?;
                    overlaps
                        .iter()
                        .map(|level| {
                            let mut total = 0.0;
                            for o in level {
                                total += o.transmittance(&screen)?;
                            }
                            Ok(total.min(1.0))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    // Transpose to per-level vectors.
    let mut samples = vec![Vec::with_capacity(config.samples); max_level as usize];
    for row in &per_sample {
        for (k, &t) in row.iter().enumerate() {
            samples[k].push(t);
        }
    }

    let histograms = samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let hi = t_n_max(k as u32 + 1)?;
            EmpiricalPdf::from_samples_in(s, &config.binning, hi)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CrosstalkRun {
        max_level,
        samples,
        histograms,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::PowerLawPdf;

    fn unit_vars() -> DistortionVariances {
        DistortionVariances {
            c_a: 1.0,
            c_g: 1.5,
            c_s: 0.5,
        }
    }

    fn beam() -> BeamParams {
        BeamParams::new(1.0).unwrap()
    }

    #[test]
    fn runs_are_reproducible() {
        let config = SimConfig::new(ScreenOrder::Second, 500, 42);
        let a = simulate_transmittance(&unit_vars(), &beam(), &config).unwrap();
        let b = simulate_transmittance(&unit_vars(), &beam(), &config).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn thread_count_does_not_change_samples() {
        let config = SimConfig::new(ScreenOrder::Second, 400, 7);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_transmittance(&unit_vars(), &beam(), &config).unwrap())
        };
        assert_eq!(run(1).samples, run(3).samples);
    }

    #[test]
    fn extending_a_run_preserves_its_prefix() {
        let short = SimConfig::new(ScreenOrder::Second, 100, 9);
        let long = SimConfig {
            samples: 250,
            ..short
        };
        let a = simulate_transmittance(&unit_vars(), &beam(), &short).unwrap();
        let b = simulate_transmittance(&unit_vars(), &beam(), &long).unwrap();
        assert_eq!(a.samples[..], b.samples[..100]);
    }

    #[test]
    fn coefficient_statistics_match_requested_variances() {
        let vars = DistortionVariances {
            c_a: 4.0,
            c_g: 7.5,
            c_s: 2.5,
        };
        let config = SimConfig::new(ScreenOrder::Second, 1, 3);
        let n = 100_000u64;
        let (mut ma, mut va, mut vg, mut vs) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let c = sample_coeffs(&vars, &config, i);
            ma += c.a;
            va += c.a * c.a;
            vg += c.g * c.g;
            vs += c.s * c.s;
        }
        let nf = n as f64;
        assert!((ma / nf).abs() < 4.0 * (vars.c_a / nf).sqrt());
        assert!((va / nf / vars.c_a - 1.0).abs() < 0.03);
        assert!((vg / nf / vars.c_g - 1.0).abs() < 0.03);
        assert!((vs / nf / vars.c_s - 1.0).abs() < 0.03);
    }

    #[test]
    fn correlated_coupling_produces_the_requested_covariance() {
        let vars = unit_vars();
        let correlated = SimConfig {
            gh_coupling: GhCoupling::Correlated,
            ..SimConfig::new(ScreenOrder::Second, 1, 11)
        };
        let independent = SimConfig::new(ScreenOrder::Second, 1, 11);
        let n = 100_000u64;
        let (mut cov_c, mut cov_i, mut vg, mut vh) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let c = sample_coeffs(&vars, &correlated, i);
            cov_c += c.g * c.h;
            vg += c.g * c.g;
            vh += c.h * c.h;
            let d = sample_coeffs(&vars, &independent, i);
            cov_i += d.g * d.h;
        }
        let nf = n as f64;
        // Expected correlation c_s / c_g = 1/3.
        let corr = (cov_c / nf) / ((vg / nf).sqrt() * (vh / nf).sqrt());
        assert!((corr - 1.0 / 3.0).abs() < 0.02, "corr = {corr}");
        assert!((cov_i / nf / vars.c_g).abs() < 0.02);
    }

    #[test]
    fn tracking_zeroes_tilt_but_keeps_pairing() {
        let vars = unit_vars();
        let plain = SimConfig::new(ScreenOrder::Second, 1, 5);
        let tracked = SimConfig {
            tracking: true,
            ..plain
        };
        for i in [0u64, 3, 77] {
            let a = sample_coeffs(&vars, &plain, i);
            let b = sample_coeffs(&vars, &tracked, i);
            assert_eq!((b.a, b.b), (0.0, 0.0));
            assert_eq!((a.g, a.h, a.s), (b.g, b.h, b.s));
            assert!(a.a != 0.0);
        }
    }

    #[test]
    fn first_order_samples_follow_the_power_law() {
        // c_a = 1, w = 1 gives gamma = 2; check mean and support.
        let vars = DistortionVariances {
            c_a: 1.0,
            c_g: 0.0,
            c_s: 0.0,
        };
        let config = SimConfig::new(ScreenOrder::First, 20_000, 123);
        let run = simulate_transmittance(&vars, &beam(), &config).unwrap();
        let law = PowerLawPdf::new(2.0).unwrap();
        let mean: f64 = run.samples.iter().sum::<f64>() / run.samples.len() as f64;
        assert!((mean - law.mean()).abs() < 0.008, "mean = {mean}");
        assert!(run.samples.iter().all(|&t| (0.0..=1.0).contains(&t)));
    }

    #[test]
    fn histogram_mass_is_unity() {
        let samples = [0.0, 0.2, 0.5, 0.999, 1.0, 1.0];
        for binning in [
            Binning::Uniform { bins: 10 },
            Binning::LogLow {
                bins: 16,
                t_min: 0.01,
            },
        ] {
            let h = EmpiricalPdf::from_samples(&samples, &binning).unwrap();
            assert!((h.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_rejects_out_of_range_samples() {
        let r = EmpiricalPdf::from_samples(&[0.5, 1.2], &Binning::default());
        assert!(matches!(r, Err(Error::Data(_))));
        assert!(EmpiricalPdf::from_samples(&[], &Binning::default()).is_err());
    }

    #[test]
    fn grid_engine_agrees_with_closed_form_pointwise() {
        let vars = unit_vars();
        let grid = GridSpec::new(5.0, 256).unwrap();
        let closed = SimConfig::new(ScreenOrder::Second, 20, 31);
        let gridded = SimConfig {
            engine: Engine::Grid,
            grid: Some(grid),
            ..closed
        };
        let a = simulate_transmittance(&vars, &beam(), &closed).unwrap();
        let b = simulate_transmittance(&vars, &beam(), &gridded).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() <= 1e-6 * y.max(1e-3), "{x} vs {y}");
        }
    }

    #[test]
    fn crosstalk_levels_sum_below_unity() {
        let vars = DistortionVariances {
            c_a: 0.8,
            c_g: 0.0,
            c_s: 0.0,
        };
        let config = SimConfig::new(ScreenOrder::First, 300, 17);
        let run = simulate_crosstalk(&vars, &beam(), &config, 4).unwrap();
        assert_eq!(run.samples.len(), 4);
        for i in 0..300 {
            let sum: f64 = (0..4).map(|k| run.samples[k][i]).sum();
            let c = sample_coeffs(&vars, &config, i as u64);
            let t0 = t00_first_order(&beam(), c.a, c.b);
            assert!(sum + t0 <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn grid_crosstalk_matches_closed_form() {
        let vars = DistortionVariances {
            c_a: 0.6,
            c_g: 0.0,
            c_s: 0.0,
        };
        let grid = GridSpec::new(5.0, 256).unwrap();
        let closed = SimConfig::new(ScreenOrder::First, 10, 19);
        let gridded = SimConfig {
            engine: Engine::Grid,
            grid: Some(grid),
            ..closed
        };
        let a = simulate_crosstalk(&vars, &beam(), &closed, 2).unwrap();
        let b = simulate_crosstalk(&vars, &beam(), &gridded, 2).unwrap();
        for k in 0..2 {
            for (x, y) in a.samples[k].iter().zip(&b.samples[k]) {
                assert!((x - y).abs() <= 2e-6, "level {}: {x} vs {y}", k + 1);
            }
        }
    }

    #[test]
    fn closed_form_crosstalk_rejects_second_order() {
        let config = SimConfig::new(ScreenOrder::Second, 10, 1);
        let r = simulate_crosstalk(&unit_vars(), &beam(), &config, 2);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn invalid_variances_are_rejected() {
        let bad = DistortionVariances {
            c_a: -1.0,
            c_g: 1.0,
            c_s: 0.1,
        };
        let config = SimConfig::new(ScreenOrder::First, 10, 1);
        assert!(simulate_transmittance(&bad, &beam(), &config).is_err());

        let incoherent = DistortionVariances {
            c_a: 1.0,
            c_g: 1.0,
            c_s: 2.0,
        };
        let correlated = SimConfig {
            gh_coupling: GhCoupling::Correlated,
            ..config
        };
        assert!(simulate_transmittance(&incoherent, &beam(), &correlated).is_err());
    }

    #[test]
    fn zero_samples_is_rejected() {
        let config = SimConfig::new(ScreenOrder::First, 0, 1);
        assert!(simulate_transmittance(&unit_vars(), &beam(), &config).is_err());
    }
}
