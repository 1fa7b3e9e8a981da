//! Boundary histories taken from measured fields.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FieldGrid;

pub const DEFAULT_N_FIT: usize = 25;
pub const DEFAULT_FOURIER_ORDER: usize = 3;

/// The fundamental period spans three fit windows. The window then holds
/// no forced periodic wrap, and the window-length harmonic is still in the basis.
const PERIOD_WINDOWS: f64 = 3.0;

/// One prescribed dof: values and second time derivatives on the time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofHistory {
    pub value: Vec<f64>,
    pub accel: Vec<f64>,
}

impl DofHistory {
    /// Accelerations from second differences of `value`.
    pub fn from_values(value: Vec<f64>, dt: f64) -> Self {
        let accel = second_difference(&value, dt);
        Self { value, accel }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Prescribed motion at one beam end; `None` leaves that dof free.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EndHistory {
    pub deflection: Option<DofHistory>,
    pub rotation: Option<DofHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHistory {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub left: EndHistory,
    pub right: EndHistory,
}

impl BoundaryHistory {
    pub fn validate(&self) -> Result<()> {
        for h in [
            &self.left.deflection,
            &self.left.rotation,
            &self.right.deflection,
            &self.right.rotation,
        ]
        .into_iter()
        .flatten()
        {
            if h.value.len() != self.n_steps || h.accel.len() != self.n_steps {
                return Err(Error::Dimension(format!(
                    "boundary series of length {} on a {}-step grid",
                    h.value.len(),
                    self.n_steps
                )));
            }
        }
        Ok(())
    }
}

/// Centered second difference; second-order one-sided stencils at the ends.
pub fn second_difference(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let inv = 1.0 / (dt * dt);
    if n < 4 {
        return vec![0.0; n];
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv;
    }
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * inv;
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) * inv;
    out
}

/// Weights `r` such that `r . samples` is the slope at `at` of the
/// least-squares Fourier fit through `n` samples spaced `h` apart.
fn slope_weights(n: usize, h: f64, order: usize, at: f64) -> Result<Vec<f64>> {
    let omega = 2.0 * std::f64::consts::PI / (PERIOD_WINDOWS * n as f64 * h);
    let cols = 2 * order + 1;
    let basis = DMatrix::from_fn(n, cols, |i, j| {
        let x = i as f64 * h;
        match j {
            0 => 1.0,
            _ => {
                let k = ((j + 1) / 2) as f64;
                if j % 2 == 1 {
                    (k * omega * x).cos()
                } else {
                    (k * omega * x).sin()
                }
            }
        }
    });
    let grad = DVector::from_fn(cols, |j, _| match j {
        0 => 0.0,
        _ => {
            let k = ((j + 1) / 2) as f64;
            if j % 2 == 1 {
                -k * omega * (k * omega * at).sin()
            } else {
                k * omega * (k * omega * at).cos()
            }
        }
    });
    let pinv = basis
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Assembly(format!("boundary fit: {e}")))?;
    Ok((pinv.transpose() * grad).iter().copied().collect())
}

/// Prescribed deflection (raw boundary sample) and rotation (slope of an
/// order-`fourier_order` Fourier fit over the first/last `n_fit` samples)
/// at both ends, with accelerations from second differences in time.
pub fn extract_boundaries(data: &FieldGrid, n_fit: usize, fourier_order: usize) -> Result<BoundaryHistory> {
    let coeffs = 2 * fourier_order + 1;
    if n_fit < coeffs {
        return Err(Error::param(format!(
            "{n_fit} fit points cannot determine {coeffs} Fourier coefficients"
        )));
    }
    let nx = data.n_x();
    if nx < 2 * n_fit {
        return Err(Error::param(format!("{nx} spatial samples, need at least {}", 2 * n_fit)));
    }
    let (h, dt) = (data.dx(), data.dt());
    let left_w = slope_weights(n_fit, h, fourier_order, 0.0)?;
    let right_w = slope_weights(n_fit, h, fourier_order, (n_fit - 1) as f64 * h)?;
    let w = data.values();
    let nt = data.n_t();
    let mut rot_l = vec![0.0; nt];
    let mut rot_r = vec![0.0; nt];
    for m in 0..nt {
        rot_l[m] = (0..n_fit).map(|i| left_w[i] * w[(i, m)]).sum();
        rot_r[m] = (0..n_fit).map(|i| right_w[i] * w[(nx - n_fit + i, m)]).sum();
    }
    let defl_l: Vec<f64> = w.row(0).iter().copied().collect();
    let defl_r: Vec<f64> = w.row(nx - 1).iter().copied().collect();
    Ok(BoundaryHistory {
        t0: data.t()[0],
        dt,
        n_steps: nt,
        left: EndHistory {
            deflection: Some(DofHistory::from_values(defl_l, dt)),
            rotation: Some(DofHistory::from_values(rot_l, dt)),
        },
        right: EndHistory {
            deflection: Some(DofHistory::from_values(defl_r, dt)),
            rotation: Some(DofHistory::from_values(rot_r, dt)),
        },
    })
}
