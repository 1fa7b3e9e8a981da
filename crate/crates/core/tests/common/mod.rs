//! Direct-quadrature oracle for the weak system, shared by test targets.
#![allow(dead_code)]

use ewsindy::weakform::{query_count, LibrarySpec, Term, TestFunctionBasis};
use ewsindy::FieldGrid;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `d^r/du^r (1 - u^2)^p` from the expanded polynomial.
pub fn bump_poly_derivative(p: usize, r: usize, u: f64) -> f64 {
    let mut binom = 1.0;
    let mut acc = 0.0;
    for k in 0..=p {
        if k > 0 {
            binom *= (p - k + 1) as f64 / k as f64;
        }
        let e = 2 * k;
        if e < r {
            continue;
        }
        let falling: f64 = (0..r).map(|i| (e - i) as f64).product();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * falling * u.powi((e - r) as i32);
    }
    acc
}

pub fn kernel(p: usize, m: usize, r: usize, h: f64) -> Vec<f64> {
    (0..=2 * m)
        .map(|i| bump_poly_derivative(p, r, (i as f64 - m as f64) / m as f64) / (m as f64 * h).powi(r as i32))
        .collect()
}

/// Direct quadrature: one explicit sum per query point and term.
pub fn oracle(grid: &FieldGrid, lib: &LibrarySpec, basis: &TestFunctionBasis) -> (DVector<f64>, DMatrix<f64>) {
    let (nx, nt) = (grid.n_x(), grid.n_t());
    let weight = grid.extent_x() / nx as f64 * grid.extent_t() / nt as f64;
    let qx = query_count(nx, basis.m_x, basis.s_x);
    let qt = query_count(nt, basis.m_t, basis.s_t);
    let w = grid.values();
    let entry = |term: &Term, cx: usize, ct: usize| -> f64 {
        let kx = kernel(basis.p_x, basis.m_x, term.dx as usize, grid.dx());
        let kt = kernel(basis.p_t, basis.m_t, term.dt as usize, grid.dt());
        let mut s = 0.0;
        for (i, a) in kx.iter().enumerate() {
            for (j, b) in kt.iter().enumerate() {
                let v = w[(cx - basis.m_x + i, ct - basis.m_t + j)];
                s += a * b * v.powi(term.power as i32);
            }
        }
        let sign = if (term.dx + term.dt) % 2 == 0 { 1.0 } else { -1.0 };
        sign * weight * s
    };
    let mut rows = Vec::new();
    for i in 0..qx {
        for j in 0..qt {
            rows.push((basis.m_x + i * basis.s_x, basis.m_t + j * basis.s_t));
        }
    }
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&(cx, ct)| entry(&lib.lhs, cx, ct)));
    let g = DMatrix::from_fn(rows.len(), lib.len(), |r, c| entry(&lib.terms[c], rows[r].0, rows[r].1));
    (b, g)
}

/// `amp * weight * sum|phi_x^(dx)| * sum|phi_t^(dt)|`: the size a column entry
/// would have without cancellation, for a field of magnitude `amp`.
pub fn natural_scale(grid: &FieldGrid, basis: &TestFunctionBasis, term: &Term, amp: f64) -> f64 {
    let weight = grid.extent_x() / grid.n_x() as f64 * grid.extent_t() / grid.n_t() as f64;
    let sx: f64 = kernel(basis.p_x, basis.m_x, term.dx as usize, grid.dx()).iter().map(|v| v.abs()).sum();
    let st: f64 = kernel(basis.p_t, basis.m_t, term.dt as usize, grid.dt()).iter().map(|v| v.abs()).sum();
    amp * weight * sx * st
}

pub fn stacked(b: &DVector<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.len(), g.ncols() + 1);
    out.set_column(0, b);
    out.view_mut((0, 1), (g.nrows(), g.ncols())).copy_from(g);
    out
}

pub fn random_grid(nx: usize, nt: usize, seed: u64) -> FieldGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = DMatrix::from_fn(nx, nt, |_, _| rng.random_range(-1.0..1.0));
    let x: Vec<f64> = (0..nx).map(|i| 0.3 + 0.01 * i as f64).collect();
    let t: Vec<f64> = (0..nt).map(|j| 2e-3 * j as f64).collect();
    FieldGrid::new(values, x, t).unwrap()
}
