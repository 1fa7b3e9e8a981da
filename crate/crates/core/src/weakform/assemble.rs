//! Convolutional assembly of the discrete weak-form system `b = G c`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::library::{LibrarySpec, Term};
use super::select::{query_count, Gammas};
use super::testfn::reference_testfn_1d;
use crate::error::{Error, Result};
use crate::grid::FieldGrid;

/// Separable test-function family: orders, half-supports (in samples) and query strides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFunctionBasis {
    pub p_x: usize,
    pub p_t: usize,
    pub m_x: usize,
    pub m_t: usize,
    pub s_x: usize,
    pub s_t: usize,
}

impl TestFunctionBasis {
    pub fn validate(&self, grid: &FieldGrid, library: &LibrarySpec) -> Result<()> {
        if self.m_x < 1 || self.m_t < 1 {
            return Err(Error::param("half-supports must be >= 1"));
        }
        if self.s_x < 1 || self.s_t < 1 {
            return Err(Error::param("query strides must be >= 1"));
        }
        if self.p_x < library.max_dx() as usize + 1 || self.p_t < library.max_dt() as usize + 1 {
            return Err(Error::param(format!(
                "orders ({}, {}) must exceed the library derivative orders ({}, {})",
                self.p_x,
                self.p_t,
                library.max_dx(),
                library.max_dt()
            )));
        }
        if 2 * self.m_x + 1 > grid.n_x() || 2 * self.m_t + 1 > grid.n_t() {
            return Err(Error::param(format!(
                "supports ({}, {}) do not fit a {}x{} grid",
                self.m_x,
                self.m_t,
                grid.n_x(),
                grid.n_t()
            )));
        }
        Ok(())
    }

    /// Query centers as (x index, t index), x-major.
    pub fn query_points(&self, n_x: usize, n_t: usize) -> Vec<(usize, usize)> {
        let qx = query_count(n_x, self.m_x, self.s_x);
        let qt = query_count(n_t, self.m_t, self.s_t);
        let mut out = Vec::with_capacity(qx * qt);
        for i in 0..qx {
            for j in 0..qt {
                out.push((self.m_x + i * self.s_x, self.m_t + j * self.s_t));
            }
        }
        out
    }
}

/// Assembled weak-form linear system.
#[derive(Debug, Clone)]
pub struct WeakSystem {
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gammas: Gammas,
    pub query_points: Vec<(usize, usize)>,
    pub basis: TestFunctionBasis,
    pub library: LibrarySpec,
}

impl WeakSystem {
    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    /// Ratio of extreme singular values of `G`.
    pub fn condition_number(&self) -> f64 {
        condition_number(&self.g)
    }
}

pub fn condition_number(g: &DMatrix<f64>) -> f64 {
    if g.is_empty() {
        return f64::NAN;
    }
    let sv = g.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// FFT correlation against several kernels sharing one data transform.
struct Correlator {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Correlator {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    fn spectrum(&self, data: impl Iterator<Item = f64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.map(|v| Complex64::new(v, 0.0)).collect();
        debug_assert_eq!(buf.len(), self.len);
        self.fwd.process(&mut buf);
        buf
    }

    /// Transform of the reversed kernel, zero padded to `len`.
    fn kernel_spectrum(&self, kernel: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (i, &k) in kernel.iter().rev().enumerate() {
            buf[i] = Complex64::new(k, 0.0);
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// `out[j] = sum_i kernel[i] * data[c_j - m + i]` for centers `c_j`.
    ///
    /// Circular wrap only touches outputs below index `2m`, which are never requested.
    fn correlate(&self, data_hat: &[Complex64], kernel_hat: &[Complex64], m: usize, centers: &[usize]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = data_hat.iter().zip(kernel_hat).map(|(a, b)| a * b).collect();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        centers.iter().map(|&c| buf[c + m].re * scale).collect()
    }
}

fn field_power(w: &DMatrix<f64>, q: u8) -> DMatrix<f64> {
    match q {
        0 => DMatrix::from_element(w.nrows(), w.ncols(), 1.0),
        1 => w.clone(),
        _ => w.map(|v| v.powi(q as i32)),
    }
}

/// Integration-by-parts sign for moving all derivatives of `term` onto the test function.
fn parts_sign(term: &Term) -> f64 {
    if term.total_order() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Assembles `b` and `G` on `grid` as given (identity scaling).
///
/// `b_k = <d_tt psi_k, W>_d`, `G_kj = (-1)^|j| <D^j psi_k, W^q_j>_d` with the
/// discrete inner product weight `(X/N_x)(T/N_t)`.
pub fn assemble(grid: &FieldGrid, library: &LibrarySpec, basis: &TestFunctionBasis) -> Result<WeakSystem> {
    library.validate()?;
    basis.validate(grid, library)?;
    let (nx, nt) = (grid.n_x(), grid.n_t());
    let (hx, ht) = (grid.dx(), grid.dt());
    let weight = (grid.extent_x() / nx as f64) * (grid.extent_t() / nt as f64);

    let qx = query_count(nx, basis.m_x, basis.s_x);
    let qt = query_count(nt, basis.m_t, basis.s_t);
    let cx: Vec<usize> = (0..qx).map(|i| basis.m_x + i * basis.s_x).collect();
    let ct: Vec<usize> = (0..qt).map(|j| basis.m_t + j * basis.s_t).collect();

    let all_terms: Vec<Term> = std::iter::once(library.lhs).chain(library.terms.iter().copied()).collect();

    // temporal pass: one result per (power, dt order), each nx x qt
    let t_corr = Correlator::new(nt);
    let mut t_kernels = BTreeMap::new();
    for term in &all_terms {
        if let std::collections::btree_map::Entry::Vacant(e) = t_kernels.entry(term.dt) {
            let k = reference_testfn_1d(basis.p_t, basis.m_t, term.dt as usize, ht)?;
            e.insert(t_corr.kernel_spectrum(&k));
        }
    }
    let mut powers: Vec<u8> = all_terms.iter().map(|t| t.power).collect();
    powers.sort_unstable();
    powers.dedup();

    let mut temporal: BTreeMap<(u8, u8), DMatrix<f64>> = BTreeMap::new();
    for &q in &powers {
        let field = field_power(grid.values(), q);
        let orders: Vec<u8> = {
            let mut o: Vec<u8> = all_terms.iter().filter(|t| t.power == q).map(|t| t.dt).collect();
            o.sort_unstable();
            o.dedup();
            o
        };
        let rows: Vec<Vec<Vec<f64>>> = (0..nx)
            .into_par_iter()
            .map(|n| {
                let hat = t_corr.spectrum(field.row(n).iter().copied());
                orders
                    .iter()
                    .map(|o| t_corr.correlate(&hat, &t_kernels[o], basis.m_t, &ct))
                    .collect()
            })
            .collect();
        for (oi, &o) in orders.iter().enumerate() {
            temporal.insert((q, o), DMatrix::from_fn(nx, qt, |n, j| rows[n][oi][j]));
        }
    }

    // spatial pass
    let x_corr = Correlator::new(nx);
    let mut x_kernels = BTreeMap::new();
    for term in &all_terms {
        if let std::collections::btree_map::Entry::Vacant(e) = x_kernels.entry(term.dx) {
            let k = reference_testfn_1d(basis.p_x, basis.m_x, term.dx as usize, hx)?;
            e.insert(x_corr.kernel_spectrum(&k));
        }
    }
    let column_for = |term: &Term| -> Vec<f64> {
        let v = &temporal[&(term.power, term.dt)];
        let sign = parts_sign(term) * weight;
        let per_t: Vec<Vec<f64>> = (0..qt)
            .into_par_iter()
            .map(|j| {
                let hat = x_corr.spectrum(v.column(j).iter().copied());
                x_corr.correlate(&hat, &x_kernels[&term.dx], basis.m_x, &cx)
            })
            .collect();
        let mut out = Vec::with_capacity(qx * qt);
        for i in 0..qx {
            for col in per_t.iter() {
                out.push(sign * col[i]);
            }
        }
        out
    };

    let b = DVector::from_vec(column_for(&library.lhs));
    let cols: Vec<Vec<f64>> = library.terms.iter().map(column_for).collect();
    let k = qx * qt;
    let g = DMatrix::from_fn(k, library.len(), |r, j| cols[j][r]);
    if g.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Assembly("non-finite entry in the weak system".into()));
    }
    Ok(WeakSystem {
        g,
        b,
        gammas: Gammas::IDENTITY,
        query_points: basis.query_points(nx, nt),
        basis: *basis,
        library: library.clone(),
    })
}

/// Assembles on the rescaled grid and records the scale factors.
pub fn assemble_scaled(
    grid: &FieldGrid,
    library: &LibrarySpec,
    basis: &TestFunctionBasis,
    gammas: Gammas,
) -> Result<WeakSystem> {
    let scaled = grid.scaled(gammas.w, gammas.x, gammas.t)?;
    let mut sys = assemble(&scaled, library, basis)?;
    sys.gammas = gammas;
    Ok(sys)
}

/// Maps coefficients found on the rescaled system back to physical units.
///
/// For a term `∂x^i ∂t^k w^q` with left-hand side `∂t^L w`:
/// `c = c' gt^(L-k) gw^(q-1) / gx^i`.
pub fn unscale_coefficients(c_scaled: &[f64], system: &WeakSystem) -> Vec<f64> {
    let g = system.gammas;
    let lhs = system.library.lhs;
    c_scaled
        .iter()
        .zip(&system.library.terms)
        .map(|(&c, term)| {
            let t_pow = lhs.dt as i32 - term.dt as i32;
            let x_pow = lhs.dx as i32 - term.dx as i32;
            let w_pow = term.power as i32 - lhs.power as i32;
            c * g.t.powi(t_pow) * g.x.powi(x_pow) * g.w.powi(w_pow)
        })
        .collect()
}
