//! Piecewise-polynomial bump `(1 - (y/(m h))^2)^p` and its sampled derivatives.

use crate::error::{Error, Result};

/// Largest polynomial order the selector will use.
pub const MAX_ORDER: usize = 16;

fn falling(p: usize, s: usize) -> f64 {
    (0..s).map(|i| (p - i) as f64).product()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `d^r/du^r [(1-u)^p (1+u)^p]` at `u` via the Leibniz rule.
fn bump_derivative_unit(p: usize, r: usize, u: f64) -> f64 {
    let (a, b) = (1.0 - u, 1.0 + u);
    let mut acc = 0.0;
    for s in 0..=r.min(p) {
        let j = r - s;
        if j > p {
            continue;
        }
        let left = if s % 2 == 0 { 1.0 } else { -1.0 } * falling(p, s) * a.powi((p - s) as i32);
        let right = falling(p, j) * b.powi((p - j) as i32);
        acc += binom(r, s) * left * right;
    }
    acc
}

/// Samples the `deriv`-th derivative of the unit-peak bump of order `p` on
/// its `2m+1` support points spaced by `h`.
///
/// The normalization `C = p^(-2p) (2p/(b-a))^(2p)` with `b - a = 2 m h` makes
/// the undifferentiated bump peak at exactly 1. End samples are exactly zero
/// for `deriv < p`.
pub fn reference_testfn_1d(p: usize, m: usize, deriv: usize, h: f64) -> Result<Vec<f64>> {
    if deriv > p {
        return Err(Error::param(format!(
            "derivative order {deriv} exceeds polynomial order {p}"
        )));
    }
    if m < 1 {
        return Err(Error::param("test-function half-support must be >= 1"));
    }
    if !(h > 0.0) {
        return Err(Error::param("sample spacing must be positive"));
    }
    let scale = (m as f64 * h).powi(-(deriv as i32));
    Ok((0..=2 * m)
        .map(|i| {
            let u = (i as f64 - m as f64) / m as f64;
            scale * bump_derivative_unit(p, deriv, u)
        })
        .collect())
}

/// Smallest order keeping the sample next to each support end below `tau`,
/// clamped to `[min_order, MAX_ORDER]`.
pub fn order_for_support(m: usize, tau: f64, min_order: usize) -> usize {
    let r = 1.0 / m as f64;
    let next_to_end = 1.0 - (1.0 - r) * (1.0 - r);
    let raw = if m <= 1 || next_to_end >= 1.0 {
        MAX_ORDER as f64
    } else {
        (tau.ln() / next_to_end.ln()).ceil()
    };
    (raw.max(0.0) as usize).clamp(min_order.min(MAX_ORDER), MAX_ORDER)
}
