//! Automatic choice of test-function supports, orders, query strides and
//! the coordinate rescaling used during assembly.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::library::LibrarySpec;
use super::testfn::order_for_support;
use crate::error::{Error, Result};
use crate::grid::FieldGrid;

/// Default spectral tolerance; gives orders (8, 7) at the supports (42, 82)
/// and (49, 84) reported for the two specimens.
pub const DEFAULT_TAU: f64 = 1e-10;

/// Default distance of the corner frequency from the origin of the test
/// function's spectrum, in spectral standard deviations.
pub const DEFAULT_TAU_HAT: f64 = 2.0;

/// Target number of query positions along each axis for the default strides.
pub const QUERY_POSITIONS_PER_AXIS: usize = 50;

const MIN_HALF_SUPPORT: usize = 2;

/// Where the noise-dominated part of the spectrum starts, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    /// Locate the corners from the data spectrum.
    Auto,
    /// Corner frequencies in cycles per sample, skipping the corner finder.
    Given { x: f64, t: f64 },
}

/// Result of support selection for both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportSelection {
    pub m_x: usize,
    pub m_t: usize,
    pub p_x: usize,
    pub p_t: usize,
    /// Corner frequencies used, cycles per sample.
    pub corner_x: f64,
    pub corner_t: f64,
}

/// Coordinate and amplitude scale factors: `x' = gx x`, `t' = gt t`, `w' = gw w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gammas {
    pub w: f64,
    pub x: f64,
    pub t: f64,
}

impl Gammas {
    pub const IDENTITY: Gammas = Gammas {
        w: 1.0,
        x: 1.0,
        t: 1.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Axis {
    X,
    T,
}

/// One-sided amplitude spectrum along `axis`, averaged over the other axis.
pub(crate) fn averaged_spectrum(grid: &FieldGrid, axis: Axis) -> Vec<f64> {
    let w = grid.values();
    let (len, count) = match axis {
        Axis::X => (grid.n_x(), grid.n_t()),
        Axis::T => (grid.n_t(), grid.n_x()),
    };
    let half = len / 2;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for j in 0..count {
        for (i, b) in buf.iter_mut().enumerate() {
            let v = match axis {
                Axis::X => w[(i, j)],
                Axis::T => w[(j, i)],
            };
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm();
        }
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

/// Changepoint of a two-segment least-squares line fit to `y` over `0..len`.
///
/// Both segments share the changepoint sample and hold at least three points.
pub(crate) fn two_segment_changepoint(y: &[f64]) -> usize {
    let n = y.len();
    if n < 5 {
        return n / 2;
    }
    // prefix sums of 1, x, x^2, y, xy, y^2
    let mut ps = vec![[0.0f64; 6]; n + 1];
    for (i, &v) in y.iter().enumerate() {
        let x = i as f64;
        let prev = ps[i];
        ps[i + 1] = [
            prev[0] + 1.0,
            prev[1] + x,
            prev[2] + x * x,
            prev[3] + v,
            prev[4] + x * v,
            prev[5] + v * v,
        ];
    }
    let ssr = |lo: usize, hi: usize| -> f64 {
        // inclusive range lo..=hi
        let s: Vec<f64> = (0..6).map(|k| ps[hi + 1][k] - ps[lo][k]).collect();
        let (c, sx, sxx, sy, sxy, syy) = (s[0], s[1], s[2], s[3], s[4], s[5]);
        let vxx = sxx - sx * sx / c;
        let vxy = sxy - sx * sy / c;
        let vyy = syy - sy * sy / c;
        let r = if vxx > 0.0 { vyy - vxy * vxy / vxx } else { vyy };
        r.max(0.0)
    };
    let mut best = (2usize, f64::INFINITY);
    for c in 2..=n - 3 {
        let e = ssr(0, c) + ssr(c, n - 1);
        if e < best.1 {
            best = (c, e);
        }
    }
    best.0
}

/// Corner of the cumulative amplitude spectrum, accumulated upward from DC,
/// in cycles per sample.
///
/// Signal content makes the cumulative curve rise steeply at low
/// frequency; a white noise floor makes it rise linearly after that.
pub(crate) fn find_corner(grid: &FieldGrid, axis: Axis) -> f64 {
    let spec = averaged_spectrum(grid, axis);
    let len = match axis {
        Axis::X => grid.n_x(),
        Axis::T => grid.n_t(),
    };
    let mut cum = Vec::with_capacity(spec.len());
    let mut run = 0.0;
    for v in &spec {
        run += v;
        cum.push(run);
    }
    two_segment_changepoint(&cum).max(1) as f64 / len as f64
}

/// Largest half-support allowed on an axis of `len` samples (support at most two thirds of the axis).
pub fn max_half_support(len: usize) -> usize {
    len.saturating_sub(1) / 3
}

fn select_axis(len: usize, corner: f64, tau: f64, tau_hat: f64, min_order: usize) -> Result<(usize, usize)> {
    let m_max = max_half_support(len);
    if m_max < MIN_HALF_SUPPORT {
        return Err(Error::Selection(format!(
            "axis of {len} samples cannot host a test function support"
        )));
    }
    for m in MIN_HALF_SUPPORT..=m_max {
        let p = order_for_support(m, tau, min_order);
        // Gaussian approximation of the bump: std dev m/sqrt(2p+3) samples
        if 2.0 * PI * corner * m as f64 >= tau_hat * ((2 * p + 3) as f64).sqrt() {
            return Ok((m, p));
        }
    }
    Ok((m_max, order_for_support(m_max, tau, min_order)))
}

/// Chooses half-supports and orders for both axes.
///
/// The half-support is the smallest one that places the corner frequency
/// `tau_hat` standard deviations out in the test function's spectrum
/// (Gaussian approximation, std dev `sqrt(2p+3)/(2 pi m)` cycles per
/// sample); it is capped at [`max_half_support`]. Orders come from
/// [`order_for_support`] with a floor of one more than the largest
/// derivative order on that axis.
pub fn select_support(
    grid: &FieldGrid,
    library: &LibrarySpec,
    tau: f64,
    tau_hat: f64,
    corner: Corner,
) -> Result<SupportSelection> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::param(format!("tau must lie in (0, 1), got {tau}")));
    }
    if !(tau_hat > 0.0) {
        return Err(Error::param(format!("tau_hat must be positive, got {tau_hat}")));
    }
    let (cx, ct) = match corner {
        Corner::Auto => (find_corner(grid, Axis::X), find_corner(grid, Axis::T)),
        Corner::Given { x, t } => {
            if !(x > 0.0 && t > 0.0) {
                return Err(Error::param("given corner frequencies must be positive"));
            }
            (x, t)
        }
    };
    let (m_x, p_x) = select_axis(grid.n_x(), cx, tau, tau_hat, library.max_dx() as usize + 1)?;
    let (m_t, p_t) = select_axis(grid.n_t(), ct, tau, tau_hat, library.max_dt() as usize + 1)?;
    Ok(SupportSelection {
        m_x,
        m_t,
        p_x,
        p_t,
        corner_x: cx,
        corner_t: ct,
    })
}

/// Number of query centers on an axis.
pub fn query_count(len: usize, m: usize, stride: usize) -> usize {
    if 2 * m + 1 > len || stride == 0 {
        0
    } else {
        (len - 2 * m - 1) / stride + 1
    }
}

/// Default strides: about [`QUERY_POSITIONS_PER_AXIS`] positions along each
/// full axis, reduced toward 1 while fewer than `2 * n_terms` rows result.
pub fn default_query_strides(
    n_x: usize,
    n_t: usize,
    m_x: usize,
    m_t: usize,
    n_terms: usize,
) -> Result<(usize, usize)> {
    if 2 * m_x + 1 > n_x || 2 * m_t + 1 > n_t {
        return Err(Error::Selection(format!(
            "supports ({m_x}, {m_t}) leave no interior on a {n_x}x{n_t} grid"
        )));
    }
    let mut s_x = (n_x / QUERY_POSITIONS_PER_AXIS).max(1);
    let mut s_t = (n_t / QUERY_POSITIONS_PER_AXIS).max(1);
    let need = 2 * n_terms;
    while query_count(n_x, m_x, s_x) * query_count(n_t, m_t, s_t) < need {
        if s_t > 1 && (s_t >= s_x || s_x == 1) {
            s_t -= 1;
        } else if s_x > 1 {
            s_x -= 1;
        } else {
            return Err(Error::Selection(format!(
                "only {} query points fit, need at least {need}",
                query_count(n_x, m_x, 1) * query_count(n_t, m_t, 1)
            )));
        }
    }
    Ok((s_x, s_t))
}

fn axis_scale_factor(p: usize, d: u8) -> f64 {
    if d == 0 {
        return 1.0;
    }
    let d = d as usize;
    let k = d / 2;
    let binom = (0..k).fold(1.0, |acc, i| acc * (p - i) as f64 / (i + 1) as f64);
    let fact: f64 = (1..=d).map(|i| i as f64).product();
    (binom * fact).powf(1.0 / d as f64)
}

/// Scale factors that normalize amplitude and balance derivative magnitudes.
///
/// `gw = 1/max|W|`; along each axis the factor is
/// `(C(p, d/2) d!)^(1/d) / (m h)` where `d` is the largest derivative order
/// on that axis and `m h` the half-support length.
pub fn rescale(
    grid: &FieldGrid,
    library: &LibrarySpec,
    m_x: usize,
    m_t: usize,
    p_x: usize,
    p_t: usize,
) -> Result<Gammas> {
    let max = grid.max_abs();
    if max == 0.0 {
        return Err(Error::DegenerateData("field is identically zero".into()));
    }
    let (dx, dt) = (grid.dx(), grid.dt());
    if !(dx > 0.0 && dt > 0.0) {
        return Err(Error::DegenerateData("grid needs at least two samples per axis".into()));
    }
    Ok(Gammas {
        w: 1.0 / max,
        x: axis_scale_factor(p_x, library.max_dx()) / (m_x as f64 * dx),
        t: axis_scale_factor(p_t, library.max_dt()) / (m_t as f64 * dt),
    })
}
