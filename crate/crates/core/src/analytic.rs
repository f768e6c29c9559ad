//! Closed-form probability laws for transmittance and modal cross-talk.
//!
//! To first order the turbulent phase is a random tilt, and the fundamental
//! mode keeps the fraction `T00 = exp(-xi)` of its power, where
//! `xi = (w^2/4)(a^2 + b^2)` collects the two tilt coefficients. With
//! Gaussian tilts of variance `C_a`, `xi` is exponentially distributed and
//! `T00` follows a pure power law on (0, 1]:
//!
//! ```text
//! p(T) = gamma * T^(gamma - 1),    gamma = 2 / (w^2 C_a)
//! ```
//!
//! The power lost by the fundamental reappears in higher mode groups. The
//! group at distance `N` collects `T_N = xi^N exp(-xi) / N!`, which peaks at
//! `T_N^max = N^N exp(-N) / N!` when `xi = N`. Mapping the exponential law of
//! `xi` through that non-monotone function gives the cross-talk density: for
//! a target level `t` the two preimages `xi_1 <= N <= xi_2` solve
//! `xi^N exp(-xi)/N! = t` via the two real branches of the Lambert W
//! function,
//!
//! ```text
//! xi = -N * W( -(t * N!)^(1/N) / N )
//! ```
//!
//! and with `s = w^2 C_a` the density and distribution function read
//!
//! ```text
//! p(t)  = (2 / (s t)) * [ xi_1/(N - xi_1) * exp(-2 xi_1 / s)
//!                       + xi_2/(xi_2 - N) * exp(-2 xi_2 / s) ]
//! F(t)  = 1 - exp(-2 xi_1 / s) + exp(-2 xi_2 / s)
//! ```
//!
//! Both Lambert branches are implemented here directly (Halley iteration with
//! branch-point series seeds) so the inversion is self-contained.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};
use crate::spectrum::BeamParams;

/// ln(n!)
fn ln_factorial(n: u32) -> f64 {
    ln_gamma(f64::from(n) + 1.0)
}

// ---------------------------------------------------------------------------
// Lambert W

/// Real branches of the Lambert W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambertBranch {
    /// W0, defined on [-1/e, inf), W0 >= -1.
    Principal,
    /// W-1, defined on [-1/e, 0), W-1 <= -1.
    Lower,
}

/// Series solution around the branch point x = -1/e, in the variable
/// p = +/- sqrt(2 (e x + 1)).
fn branch_point_series(p: f64) -> f64 {
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))
}

/// Principal-branch asymptotic seed `w ~ L - ln L + ln L / L` with `L = ln x`.
fn log_seed_principal(x: f64) -> f64 {
    let l1 = x.ln();
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}

/// Lower-branch asymptotic seed for x in (-1/e, 0):
/// `w ~ L - ln(-L) + ln(-L) / L` with `L = ln(-x) < 0`.
fn log_seed_lower(x: f64) -> f64 {
    let l1 = (-x).ln();
    let l2 = (-l1).ln();
    l1 - l2 + l2 / l1
}

/// Lambert W on the requested branch, solving `w exp(w) = x`.
///
/// Residual contract: `|w exp(w) - x| <= 1e-12 * max(1, |x|)`.
pub fn lambert_w(branch: LambertBranch, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("lambert_w argument must be finite, got {x}")));
    }
    // 2 (e x + 1): negative only below the branch point.
    let two_exp1 = 2.0 * x.mul_add(std::f64::consts::E, 1.0);
    if two_exp1 < -1e-12 {
        return Err(Error::Domain(format!(
            "lambert_w argument {x} lies below the branch point -1/e"
        )));
    }
    let two_exp1 = two_exp1.max(0.0);

    let mut w = match branch {
        LambertBranch::Principal => {
            if x == 0.0 {
                return Ok(0.0);
            }
            if two_exp1 < 0.25 {
                branch_point_series(two_exp1.sqrt())
            } else if x < 2.0 {
                // Crude rational seed near the origin; Halley does the rest.
                x * (1.0 - x / (1.0 + x))
            } else {
                log_seed_principal(x)
            }
        }
        LambertBranch::Lower => {
            if x >= 0.0 {
                return Err(Error::Domain(format!(
                    "lower Lambert branch is defined on [-1/e, 0), got {x}"
                )));
            }
            if two_exp1 < 0.25 {
                branch_point_series(-two_exp1.sqrt())
            } else {
                log_seed_lower(x)
            }
        }
    };
    if two_exp1 == 0.0 {
        return Ok(-1.0);
    }

    // Halley iteration on f(w) = w e^w - x.
    for _ in 0..60 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - f * (w + 2.0) / (2.0 * wp1);
        if denom == 0.0 {
            break;
        }
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }

    let residual = (w * w.exp() - x).abs();
    if residual <= 1e-12 * x.abs().max(1.0) {
        Ok(w)
    } else {
        Err(Error::Numeric(format!(
            "lambert_w failed to converge at x = {x:e} (residual {residual:e})"
        )))
    }
}

// ---------------------------------------------------------------------------
// Fundamental-mode law

/// Power-law transmittance density `p(T) = gamma T^(gamma-1)` on (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawPdf {
    gamma: f64,
}

impl PowerLawPdf {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(Self { gamma })
        } else {
            Err(Error::InvalidParameter(format!(
                "power-law exponent must be positive and finite, got {gamma}"
            )))
        }
    }

    /// Exponent from beam waist and tilt variance: `gamma = 2 / (w^2 C_a)`.
    pub fn from_tilt_variance(beam: &BeamParams, c_a: f64) -> Result<Self> {
        if !(c_a.is_finite() && c_a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tilt variance must be positive and finite, got {c_a}"
            )));
        }
        Self::new(2.0 / (beam.waist() * beam.waist() * c_a))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Density at `t`, defined for `0 < t <= 1`.
    pub fn density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!(
                "transmittance must lie in (0, 1], got {t}"
            )));
        }
        Ok(self.gamma * t.powf(self.gamma - 1.0))
    }

    /// Distribution function `P(T <= t) = t^gamma`, clamped outside [0, 1].
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            t.powf(self.gamma)
        }
    }

    /// Inverse distribution function, `u in [0, 1]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile argument must lie in [0, 1], got {u}")));
        }
        Ok(u.powf(1.0 / self.gamma))
    }

    pub fn mean(&self) -> f64 {
        self.gamma / (self.gamma + 1.0)
    }

    pub fn median(&self) -> f64 {
        2.0f64.powf(-1.0 / self.gamma)
    }
}

/// Exponential law of the tilt strength `xi = (w^2/4)(a^2 + b^2)`.
///
/// Mean `w^2 C_a / 2`; pushing `xi` through `T = exp(-xi)` reproduces
/// [`PowerLawPdf`] with `gamma = 2/(w^2 C_a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiPdf {
    mean: f64,
}

impl XiPdf {
    pub fn new(beam: &BeamParams, c_a: f64) -> Result<Self> {
        if !(c_a.is_finite() && c_a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tilt variance must be positive and finite, got {c_a}"
            )));
        }
        Ok(Self {
            mean: 0.5 * beam.waist() * beam.waist() * c_a,
        })
    }

    pub fn from_mean(mean: f64) -> Result<Self> {
        if mean.is_finite() && mean > 0.0 {
            Ok(Self { mean })
        } else {
            Err(Error::InvalidParameter(format!(
                "xi mean must be positive and finite, got {mean}"
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Equivalent power-law exponent `1 / mean`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.mean
    }

    pub fn density(&self, xi: f64) -> Result<f64> {
        if !(xi.is_finite() && xi >= 0.0) {
            return Err(Error::Domain(format!("xi must be non-negative, got {xi}")));
        }
        Ok((-xi / self.mean).exp() / self.mean)
    }

    pub fn cdf(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            0.0
        } else {
            -(-xi / self.mean).exp_m1()
        }
    }
}

// ---------------------------------------------------------------------------
// Cross-talk law

/// Peak cross-talk level `N^N exp(-N) / N!` reached at `xi = N`; `N >= 1`.
pub fn t_n_max(level: u32) -> Result<f64> {
    if level == 0 {
        return Err(Error::Domain(
            "cross-talk level must be at least 1".into(),
        ));
    }
    let n = f64::from(level);
    Ok((n * n.ln() - n - ln_factorial(level)).exp())
}

/// Both solutions of `xi^N exp(-xi) / N! = t` for `0 < t <= t_n_max(N)`,
/// returned as `(xi_1, xi_2)` with `xi_1 <= N <= xi_2`.
pub fn xi_roots(level: u32, t: f64) -> Result<(f64, f64)> {
    if level == 0 {
        return Err(Error::Domain("cross-talk level must be at least 1".into()));
    }
    let t_max = t_n_max(level)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!(
            "cross-talk target must be positive, got {t}"
        )));
    }
    if t > t_max {
        return Err(Error::Domain(format!(
            "cross-talk target {t:e} exceeds the level-{level} maximum {t_max:e}"
        )));
    }
    if t == t_max {
        let n = f64::from(level);
        return Ok((n, n));
    }
    let n = f64::from(level);
    // y = -(t N!)^(1/N) / N, computed in logs; t <= t_max puts y in [-1/e, 0).
    let y = -((t.ln() + ln_factorial(level)) / n - n.ln()).exp();
    let xi1 = -n * lambert_w(LambertBranch::Principal, y)?;
    let xi2 = -n * lambert_w(LambertBranch::Lower, y)?;
    Ok((xi1, xi2))
}

/// Density and distribution of the level-N cross-talk under first-order
/// (tilt-only) distortions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosstalkPdf {
    level: u32,
    /// `s = w^2 C_a`, twice the mean of the xi law.
    scale: f64,
}

impl CrosstalkPdf {
    pub fn new(level: u32, scale: f64) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidParameter(
                "cross-talk level must be at least 1".into(),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cross-talk scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { level, scale })
    }

    pub fn from_tilt_variance(level: u32, beam: &BeamParams, c_a: f64) -> Result<Self> {
        Self::new(level, beam.waist() * beam.waist() * c_a)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn t_max(&self) -> f64 {
        t_n_max(self.level).expect("level validated at construction")
    }

    /// Density at `t`, defined on `(0, t_max)`; diverges at `t_max` where the
    /// two preimages merge.
    pub fn density(&self, t: f64) -> Result<f64> {
        let t_max = self.t_max();
        if !(t > 0.0 && t < t_max) {
            return Err(Error::Domain(format!(
                "cross-talk density is defined on (0, {t_max:e}), got {t}"
            )));
        }
        let n = f64::from(self.level);
        let (xi1, xi2) = xi_roots(self.level, t)?;
        let s = self.scale;
        let lead = 2.0 / (s * t);
        let low = if xi1 == 0.0 {
            // xi/(N - xi) -> 0 smoothly; avoid 0/0 when t underflows.
            0.0
        } else {
            xi1 / (n - xi1) * (-2.0 * xi1 / s).exp()
        };
        let high = xi2 / (xi2 - n) * (-2.0 * xi2 / s).exp();
        Ok(lead * (low + high))
    }

    /// Distribution function `P(T_N <= t)`.
    ///
    /// Small cross-talk happens both for weak distortions (`xi < xi_1`) and
    /// for strong ones that overshoot the group (`xi > xi_2`), hence the two
    /// exponential terms.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.t_max() {
            return 1.0;
        }
        let (xi1, xi2) = xi_roots(self.level, t).expect("t inside (0, t_max)");
        let s = self.scale;
        (1.0 - (-2.0 * xi1 / s).exp()) + (-2.0 * xi2 / s).exp()
    }

    /// Numerically integrate the density over its support. Used by tests to
    /// confirm the law is normalised; substitutions tame the integrable
    /// singularity at `t_max` and the `t -> 0` tail:
    /// on the upper half `t = t_max (1 - u^2)`, on the lower half
    /// `t = (t_max/2) v^N`.
    pub fn integral_check(&self, opts: &QuadOptions) -> Result<f64> {
        let t_max = self.t_max();
        let t_mid = 0.5 * t_max;
        let n = f64::from(self.level);

        // Lower half, v in (0, 1]: dT = t_mid N v^(N-1) dv.
        let lower = quad::integrate(
            |v| {
                let t = t_mid * v.powf(n);
                self.density(t).unwrap_or(0.0) * t_mid * n * v.powf(n - 1.0)
            },
            1e-8,
            1.0,
            opts,
        )?;
        // Upper half, u in (0, sqrt(1/2)]: dT = -2 t_max u du.
        let upper = quad::integrate(
            |u| {
                let t = t_max * (1.0 - u * u);
                self.density(t).unwrap_or(0.0) * 2.0 * t_max * u
            },
            1e-8,
            0.5f64.sqrt(),
            opts,
        )?;
        // Exact mass in the clipped slivers at both ends.
        let left_tail = self.cdf(t_mid * 1e-8f64.powf(n));
        let right_sliver = 1.0 - self.cdf(t_max * (1.0 - 1e-16));
        Ok(lower.value + upper.value + left_tail + right_sliver)
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
// reference constants below are frozen verbatim from high-precision runs
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Plain bisection, used as an independent root oracle.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_known_points() {
        let w1 = lambert_w(LambertBranch::Principal, 1.0).unwrap();
        assert!(rel(w1, 0.567143290409783873) < 1e-14);
        // Independent route to the same root.
        let w1_bisect = bisect(|w| w * w.exp() - 1.0, 0.0, 1.0);
        assert!((w1 - w1_bisect).abs() < 1e-14);

        assert_eq!(lambert_w(LambertBranch::Principal, 0.0).unwrap(), 0.0);
        assert!(rel(lambert_w(LambertBranch::Principal, std::f64::consts::E).unwrap(), 1.0) < 1e-14);
        let at_branch = -(-1.0f64).exp();
        assert!((lambert_w(LambertBranch::Principal, at_branch).unwrap() + 1.0).abs() < 2e-8);
        assert!((lambert_w(LambertBranch::Lower, at_branch).unwrap() + 1.0).abs() < 2e-8);
        assert!(rel(lambert_w(LambertBranch::Lower, -0.1).unwrap(), -3.577152063957297) < 1e-13);
    }

    #[test]
    fn lambert_domain_rejections() {
        assert!(lambert_w(LambertBranch::Principal, -0.5).is_err());
        assert!(lambert_w(LambertBranch::Lower, 0.0).is_err());
        assert!(lambert_w(LambertBranch::Lower, 0.3).is_err());
        assert!(lambert_w(LambertBranch::Principal, f64::NAN).is_err());
    }

    #[test]
    fn lambert_large_argument() {
        let x = 1e12;
        let w = lambert_w(LambertBranch::Principal, x).unwrap();
        assert!(rel(w * w.exp(), x) < 1e-12);
    }

    proptest! {
        #[test]
        fn principal_branch_residual(x in -0.36f64..50.0) {
            prop_assume!(x * std::f64::consts::E + 1.0 > 1e-10);
            let w = lambert_w(LambertBranch::Principal, x).unwrap();
            prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.abs().max(1.0));
            prop_assert!(w >= -1.0);
        }

        #[test]
        fn lower_branch_round_trip(w in -25.0f64..-1.0) {
            let x = w * w.exp();
            let back = lambert_w(LambertBranch::Lower, x).unwrap();
            prop_assert!((back - w).abs() <= 1e-10 * w.abs());
        }
    }

    #[test]
    fn power_law_moments() {
        let p = PowerLawPdf::new(2.0).unwrap();
        assert_eq!(p.mean(), 2.0 / 3.0);
        assert!(rel(p.median(), 0.5f64.sqrt()) < 1e-15);
        assert!(rel(p.cdf(0.5), 0.25) < 1e-15);
        assert!(rel(p.density(0.5).unwrap(), 1.0) < 1e-15);

        let flat = PowerLawPdf::new(1.0).unwrap();
        for t in [0.1, 0.5, 1.0] {
            assert_eq!(flat.density(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn power_law_rejects_bad_inputs() {
        assert!(PowerLawPdf::new(0.0).is_err());
        assert!(PowerLawPdf::new(f64::INFINITY).is_err());
        let p = PowerLawPdf::new(1.5).unwrap();
        assert!(p.density(0.0).is_err());
        assert!(p.density(1.5).is_err());
        assert!(p.quantile(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(gamma in 0.05f64..50.0, u in 1e-6f64..1.0) {
            let p = PowerLawPdf::new(gamma).unwrap();
            let t = p.quantile(u).unwrap();
            prop_assert!((p.cdf(t) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn xi_law_matches_power_law_through_the_exponential_map() {
        let beam = BeamParams::new(1.0).unwrap();
        let xi = XiPdf::new(&beam, 1.0).unwrap();
        let t_law = PowerLawPdf::from_tilt_variance(&beam, 1.0).unwrap();
        assert!(rel(xi.gamma(), t_law.gamma()) < 1e-15);
        // P(T <= t) = P(xi >= -ln t)
        for t in [0.05, 0.4, 0.9] {
            let lhs = t_law.cdf(t);
            let rhs = 1.0 - xi.cdf(-t.ln());
            assert!(rel(lhs, rhs) < 1e-12);
        }
    }

    #[test]
    fn peak_crosstalk_levels() {
        let e = std::f64::consts::E;
        assert!(rel(t_n_max(1).unwrap(), 1.0 / e) < 1e-14);
        assert!(rel(t_n_max(2).unwrap(), 2.0 / (e * e)) < 1e-14);
        assert!(rel(t_n_max(3).unwrap(), 4.5 / (e * e * e)) < 1e-14);
        assert!(t_n_max(0).is_err());
    }

    #[test]
    fn xi_roots_reference_point() {
        // Level 1 at t = 0.1, solved independently to 40 digits.
        let (x1, x2) = xi_roots(1, 0.1).unwrap();
        assert!(rel(x1, 0.11183255915896297) < 1e-12);
        assert!(rel(x2, 3.5771520639572972) < 1e-12);
    }

    #[test]
    fn xi_roots_merge_at_peak() {
        let t_max = t_n_max(4).unwrap();
        let (x1, x2) = xi_roots(4, t_max).unwrap();
        assert_eq!((x1, x2), (4.0, 4.0));
    }

    #[test]
    fn xi_roots_back_substitute() {
        for level in [1u32, 2, 5, 10] {
            let n = f64::from(level);
            let t_max = t_n_max(level).unwrap();
            for k in 1..=12 {
                let t = t_max * 10f64.powi(-k);
                let (x1, x2) = xi_roots(level, t).unwrap();
                assert!(x1 <= n && n <= x2);
                for xi in [x1, x2] {
                    let back = (n * xi.ln() - xi - ln_factorial(level)).exp();
                    assert!(
                        rel(back, t) < 1e-10,
                        "level {level}, t {t:e}: xi {xi} gives {back:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn crosstalk_density_normalises() {
        for (level, scale) in [(1u32, 1.0), (2, 0.37), (3, 2.0)] {
            let pdf = CrosstalkPdf::new(level, scale).unwrap();
            let mass = pdf.integral_check(&QuadOptions::default()).unwrap();
            assert!(
                (mass - 1.0).abs() < 1e-8,
                "level {level}, scale {scale}: mass {mass}"
            );
        }
    }

    #[test]
    fn crosstalk_cdf_matches_integrated_density() {
        let pdf = CrosstalkPdf::new(2, 0.8).unwrap();
        let t_max = pdf.t_max();
        for frac in [0.05, 0.3, 0.8] {
            let t = frac * t_max;
            let q = quad::integrate(
                |v| {
                    let x = t * v * v;
                    pdf.density(x).map(|d| d * 2.0 * t * v).unwrap_or(0.0)
                },
                1e-8,
                1.0,
                &QuadOptions::default(),
            )
            .unwrap();
            let tail = pdf.cdf(t * 1e-16);
            assert!(
                (q.value + tail - pdf.cdf(t)).abs() < 1e-7,
                "t = {t:e}: integral {} vs cdf {}",
                q.value,
                pdf.cdf(t)
            );
        }
    }

    proptest! {
        #[test]
        fn crosstalk_cdf_is_monotone(
            level in 1u32..8,
            scale in 0.05f64..5.0,
            a in 0.01f64..0.99,
            b in 0.01f64..0.99,
        ) {
            let pdf = CrosstalkPdf::new(level, scale).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let t_max = pdf.t_max();
            prop_assert!(pdf.cdf(lo * t_max) <= pdf.cdf(hi * t_max) + 1e-12);
        }
    }
}
