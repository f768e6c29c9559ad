//! Globally adaptive one-dimensional quadrature.
//!
//! The workhorse is a 15-point Kronrod extension of 7-point Gauss (G7-K15).
//! Panels are kept in a max-heap keyed on their error estimate; the worst
//! panel is bisected until the summed error estimate meets the requested
//! tolerance. Spectral integrands in this crate span many decades in
//! frequency, so callers seed the heap with a geometric breakpoint ladder via
//! [`integrate_segmented`] instead of handing the integrator one huge panel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Kronrod abscissae for the interval [-1, 1], positive half.
/// Odd indices (1, 3, 5) plus the centre are the embedded Gauss-7 points.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_2,
    0.063_092_092_629_978_6,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and work limits for [`integrate`] / [`integrate_segmented`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Relative tolerance on the integral value.
    pub rel_tol: f64,
    /// Absolute tolerance floor; the effective target is
    /// `max(abs_tol, rel_tol * |integral|)`.
    pub abs_tol: f64,
    /// Hard cap on the number of panels before giving up.
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 0.0,
            max_panels: 4096,
        }
    }
}

/// Converged integral together with its accumulated error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of per-panel error estimates; an upper-bound style bound, usually
    /// pessimistic by one or two orders of magnitude.
    pub error: f64,
    /// Number of G7-K15 panels evaluated.
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    /// Set when the panel is too narrow to bisect in f64; it then no longer
    /// participates in refinement.
    stuck: bool,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Stuck panels sort last so the heap never re-selects them.
        match (self.stuck, other.stuck) {
            (false, true) => Ordering::Greater,
            (true, false) => Ordering::Less,
            _ => self.error.total_cmp(&other.error),
        }
    }
}

/// One G7-K15 evaluation on [lo, hi].
fn kronrod15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Panel {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let fc = f(centre);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = fc.abs() * WGK[7];
    let mut fv = [0.0f64; 15];
    fv[7] = fc;

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }

    // Scaled deviation from the panel mean, used to normalise the error
    // estimate the same way QUADPACK does.
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fv[7] - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }

    let value = resk * half;
    let resasc = resasc * half;
    let raw = ((resk - resg) * half).abs();
    let error = if resasc != 0.0 && raw != 0.0 {
        resasc * (1.0f64).min((200.0 * raw / resasc).powf(1.5))
    } else {
        raw
    };
    // Account for round-off on panels where cancellation dominates.
    let round = 50.0 * f64::EPSILON * (resabs * half);
    let error = error.max(round.min(raw.max(round)));

    Panel {
        lo,
        hi,
        value,
        error,
        stuck: false,
    }
}

fn heap_sums(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut value = 0.0;
    let mut error = 0.0;
    for p in heap.iter() {
        value += p.value;
        error += p.error;
    }
    (value, error)
}

/// Integrate `f` over `[lo, hi]` to the requested tolerance.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, opts: &QuadOptions) -> Result<Quadrature> {
    integrate_segmented(f, &[lo, hi], opts)
}

/// Integrate `f` over `[points[0], points[last]]`, seeding one initial panel
/// per consecutive pair of breakpoints.
pub fn integrate_segmented(
    f: impl Fn(f64) -> f64,
    points: &[f64],
    opts: &QuadOptions,
) -> Result<Quadrature> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "quadrature needs at least two breakpoints".into(),
        ));
    }
    for w in points.windows(2) {
        if !(w[0].is_finite() && w[1].is_finite() && w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "quadrature breakpoints must be finite and strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }

    let mut heap = BinaryHeap::with_capacity(opts.max_panels);
    for w in points.windows(2) {
        let p = kronrod15(&f, w[0], w[1]);
        if !p.value.is_finite() {
            return Err(Error::Numeric(format!(
                "integrand is not finite on [{:e}, {:e}]",
                w[0], w[1]
            )));
        }
        heap.push(p);
    }

    let (mut total, mut err_sum) = heap_sums(&heap);
    let mut panels = heap.len();

    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err_sum <= target {
            break;
        }
        let worst = match heap.peek() {
            Some(p) if !p.stuck => *p,
            // Every remaining panel is below f64 resolution; accept what we
            // have if it is close, otherwise report the stall.
            _ => {
                if err_sum <= 10.0 * target {
                    break;
                }
                return Err(Error::Numeric(format!(
                    "quadrature stalled at f64 resolution: error {err_sum:e} vs target {target:e}"
                )));
            }
        };
        if panels + 2 > opts.max_panels {
            return Err(Error::Numeric(format!(
                "quadrature did not converge within {} panels: error {:e} vs target {:e}",
                opts.max_panels, err_sum, target
            )));
        }
        heap.pop();
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            let mut p = worst;
            p.stuck = true;
            heap.push(p);
            continue;
        }
        let left = kronrod15(&f, worst.lo, mid);
        let right = kronrod15(&f, mid, worst.hi);
        if !(left.value.is_finite() && right.value.is_finite()) {
            return Err(Error::Numeric(format!(
                "integrand is not finite near {mid:e}"
            )));
        }
        total += left.value + right.value - worst.value;
        err_sum += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        panels += 2;
    }

    // Re-sum in spatial order: cheap insurance against drift in the running
    // totals, and deterministic regardless of heap internals.
    let mut ordered: Vec<Panel> = heap.into_vec();
    ordered.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut value = 0.0;
    let mut error = 0.0;
    for p in &ordered {
        value += p.value;
        error += p.error;
    }

    if !value.is_finite() {
        return Err(Error::Numeric("quadrature produced a non-finite value".into()));
    }

    Ok(Quadrature {
        value,
        error,
        panels,
    })
}

// ---------------------------------------------------------------------------
