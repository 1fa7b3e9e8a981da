//! Modified sequential-thresholding least squares with loss-driven threshold search.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of thresholds in the default search grid.
pub const DEFAULT_LAMBDA_COUNT: usize = 100;

/// `count` log-spaced values from `1e-10` to `1`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-10, 1.0, DEFAULT_LAMBDA_COUNT)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Minimum-norm least-squares solution and whether `g` was rank deficient.
pub fn least_squares(g: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if g.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "G has {} rows but b has {} entries",
            g.nrows(),
            b.len()
        )));
    }
    if g.ncols() == 0 {
        return Ok((DVector::zeros(0), false));
    }
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * g.nrows().max(g.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let deficient = rank < g.ncols();
    let c = if smax == 0.0 {
        DVector::zeros(g.ncols())
    } else {
        svd.solve(b, tol).map_err(|e| Error::Dimension(e.to_string()))?
    };
    Ok((c, deficient))
}

fn solve_on(g: &DMatrix<f64>, b: &DVector<f64>, active: &[usize]) -> Result<DVector<f64>> {
    let mut c = DVector::zeros(g.ncols());
    if active.is_empty() {
        return Ok(c);
    }
    let sub = g.select_columns(active);
    let (cs, _) = least_squares(&sub, b)?;
    for (k, &j) in active.iter().enumerate() {
        c[j] = cs[k];
    }
    Ok(c)
}

/// MSTLS with threshold `lambda`.
///
/// Index `j` survives while
/// `lambda max(1, |b|/|G_j|) <= |c_j| <= min(1, |b|/|G_j|) / lambda`.
/// At most `J + 1` sweeps.
pub fn mstls(g: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    mstls_capped(g, b, lambda, g.ncols() + 1)
}

/// [`mstls`] with an explicit sweep cap.
pub fn mstls_capped(g: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, sweeps: usize) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    let bn = b.norm();
    let ratio: Vec<f64> = (0..g.ncols())
        .map(|j| {
            let gn = g.column(j).norm();
            if gn == 0.0 {
                0.0
            } else {
                bn / gn
            }
        })
        .collect();
    let mut active: Vec<usize> = (0..g.ncols()).collect();
    let mut c = solve_on(g, b, &active)?;
    for _ in 0..sweeps {
        let next: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| {
                let mag = c[j].abs();
                mag >= lambda * ratio[j].max(1.0) && mag <= ratio[j].min(1.0) / lambda
            })
            .collect();
        if next == active {
            break;
        }
        active = next;
        c = solve_on(g, b, &active)?;
        if active.is_empty() {
            break;
        }
    }
    Ok(c)
}

/// Result of a threshold search on a weak system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSolution {
    /// Coefficients in physical units (equal to `c_scaled` until unscaled).
    pub c: Vec<f64>,
    pub c_scaled: Vec<f64>,
    pub lambda_hat: f64,
    /// `|b - G c_scaled| / |b|` on the system the search ran on.
    pub relative_residual: f64,
    pub loss_curve: Vec<(f64, f64)>,
    pub support: Vec<usize>,
    pub rank_deficient: bool,
}

impl SparseSolution {
    pub fn nnz(&self) -> usize {
        self.support.len()
    }
}

/// `|G(c - c_ls)| / |G c_ls| + |c|_0 / J`, with the first term dropped when `G c_ls = 0`.
pub fn loss(g: &DMatrix<f64>, c: &DVector<f64>, c_ls: &DVector<f64>) -> f64 {
    let fit = g * c_ls;
    let denom = fit.norm();
    let misfit = if denom == 0.0 { 0.0 } else { (g * c - fit).norm() / denom };
    let nnz = c.iter().filter(|v| **v != 0.0).count();
    misfit + nnz as f64 / g.ncols() as f64
}

/// Runs MSTLS over `lambdas` and keeps the smallest threshold that minimizes [`loss`].
pub fn optimize_lambda(g: &DMatrix<f64>, b: &DVector<f64>, lambdas: &[f64]) -> Result<SparseSolution> {
    if lambdas.is_empty() {
        return Err(Error::param("lambda grid is empty"));
    }
    if lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("lambda grid must be positive and strictly ascending"));
    }
    if g.ncols() == 0 {
        return Err(Error::param("library has no columns"));
    }
    let (c_ls, rank_deficient) = least_squares(g, b)?;
    let evals: Vec<(DVector<f64>, f64)> = lambdas
        .par_iter()
        .map(|&l| {
            let c = mstls(g, b, l)?;
            let v = loss(g, &c, &c_ls);
            Ok((c, v))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, (_, v)) in evals.iter().enumerate() {
        if *v < evals[best].1 {
            best = i;
        }
    }
    let c = evals[best].0.clone();
    let bn = b.norm();
    let relative_residual = if bn == 0.0 { 0.0 } else { (b - g * &c).norm() / bn };
    let support = (0..c.len()).filter(|&j| c[j] != 0.0).collect();
    Ok(SparseSolution {
        c: c.iter().copied().collect(),
        c_scaled: c.iter().copied().collect(),
        lambda_hat: lambdas[best],
        relative_residual,
        loss_curve: lambdas.iter().zip(&evals).map(|(&l, (_, v))| (l, *v)).collect(),
        support,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_endpoints() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 100);
        assert!((g[0] - 1e-10).abs() < 1e-24);
        assert!((g[99] - 1.0).abs() < 1e-14);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn identity_system() {
        let g = DMatrix::identity(4, 4);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let (c, def) = least_squares(&g, &b).unwrap();
        assert!(!def);
        assert!((c - &b).norm() < 1e-14);
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        // two identical columns: min-norm splits the weight evenly
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 4.0, 0.0]);
        let (c, def) = least_squares(&g, &b).unwrap();
        assert!(def);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let b = DVector::zeros(20);
        assert_eq!(mstls(&g, &b, 1e-3).unwrap().norm(), 0.0);
        let s = optimize_lambda(&g, &b, &default_lambda_grid()).unwrap();
        assert_eq!(s.lambda_hat, 1e-10);
        assert!(s.c.iter().all(|v| *v == 0.0));
        assert!(s.loss_curve.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn huge_lambda_zeroes_everything() {
        let g = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + (j == i % 3) as u8 as f64);
        let b = g.column(1).into_owned();
        assert_eq!(mstls(&g, &b, 1e6).unwrap().norm(), 0.0);
    }

    #[test]
    fn rejects_bad_grid() {
        let g = DMatrix::identity(3, 3);
        let b = DVector::from_element(3, 1.0);
        assert!(optimize_lambda(&g, &b, &[]).is_err());
        assert!(optimize_lambda(&g, &b, &[1.0, 0.5]).is_err());
        assert!(mstls(&g, &b, 0.0).is_err());
    }
}
