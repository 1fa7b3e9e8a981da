use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::BeamModel;

/// Uniform mesh of Hermite beam elements starting at `x0`.
///
/// Node `i` carries deflection dof `2i` and rotation dof `2i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FemMesh {
    pub n_elem: usize,
    pub dx: f64,
    pub x0: f64,
}

impl FemMesh {
    pub fn new(n_elem: usize, dx: f64) -> Result<Self> {
        Self::with_origin(n_elem, dx, 0.0)
    }

    pub fn with_origin(n_elem: usize, dx: f64, x0: f64) -> Result<Self> {
        if n_elem < 2 {
            return Err(Error::param("mesh needs at least two elements"));
        }
        if !(dx > 0.0) {
            return Err(Error::param("element length must be positive"));
        }
        Ok(Self { n_elem, dx, x0 })
    }

    pub fn uniform(n_elem: usize, length: f64) -> Result<Self> {
        Self::new(n_elem, length / n_elem as f64)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elem + 1
    }

    pub fn n_dof(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn length(&self) -> f64 {
        self.n_elem as f64 * self.dx
    }

    pub fn node_x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn deflection_dof(node: usize) -> usize {
        2 * node
    }

    pub fn rotation_dof(node: usize) -> usize {
        2 * node + 1
    }
}

pub fn element_stiffness(ei: f64, l: f64) -> [[f64; 4]; 4] {
    let c = ei / (l * l * l);
    let l2 = l * l;
    [
        [12.0 * c, 6.0 * l * c, -12.0 * c, 6.0 * l * c],
        [6.0 * l * c, 4.0 * l2 * c, -6.0 * l * c, 2.0 * l2 * c],
        [-12.0 * c, -6.0 * l * c, 12.0 * c, -6.0 * l * c],
        [6.0 * l * c, 2.0 * l2 * c, -6.0 * l * c, 4.0 * l2 * c],
    ]
}

/// Consistent mass matrix.
pub fn element_mass(rho_a: f64, l: f64) -> [[f64; 4]; 4] {
    let c = rho_a * l / 420.0;
    let l2 = l * l;
    [
        [156.0 * c, 22.0 * l * c, 54.0 * c, -13.0 * l * c],
        [22.0 * l * c, 4.0 * l2 * c, 13.0 * l * c, -3.0 * l2 * c],
        [54.0 * c, 13.0 * l * c, 156.0 * c, -22.0 * l * c],
        [-13.0 * l * c, -3.0 * l2 * c, -22.0 * l * c, 4.0 * l2 * c],
    ]
}

fn scatter(global: &mut DMatrix<f64>, e: usize, local: &[[f64; 4]; 4], w: f64) {
    let base = 2 * e;
    for (i, row) in local.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            global[(base + i, base + j)] += w * v;
        }
    }
}

/// Global consistent mass and stiffness matrices.
pub fn assemble_matrices(mesh: &FemMesh, beam: &BeamModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    beam.validate()?;
    let e = beam.modulus()?;
    let me = element_mass(beam.density * beam.area(), mesh.dx);
    let ke = element_stiffness(e * beam.inertia(), mesh.dx);
    let n = mesh.n_dof();
    let mut m = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    for el in 0..mesh.n_elem {
        scatter(&mut m, el, &me, 1.0);
        scatter(&mut k, el, &ke, 1.0);
    }
    Ok((m, k))
}

/// Mass matrix with element `e` weighted by `weights[e]`.
pub fn weighted_mass(mesh: &FemMesh, beam: &BeamModel, weights: &[f64]) -> Result<DMatrix<f64>> {
    if weights.len() != mesh.n_elem {
        return Err(Error::Dimension(format!(
            "{} element weights for {} elements",
            weights.len(),
            mesh.n_elem
        )));
    }
    let me = element_mass(beam.density * beam.area(), mesh.dx);
    let n = mesh.n_dof();
    let mut c = DMatrix::zeros(n, n);
    for (el, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            scatter(&mut c, el, &me, w);
        }
    }
    Ok(c)
}

/// Dofs left after removing `constrained`, in ascending order.
pub fn free_dofs(n_dof: usize, constrained: &[usize]) -> Vec<usize> {
    (0..n_dof).filter(|d| !constrained.contains(d)).collect()
}

/// Lowest `n` natural frequencies (Hz) with `constrained` dofs held at zero.
///
/// Solved as the largest eigenvalues of `K^-1 M` so the low end keeps full
/// relative precision.
pub fn fem_frequencies(mesh: &FemMesh, beam: &BeamModel, constrained: &[usize], n: usize) -> Result<Vec<f64>> {
    let (m, k) = assemble_matrices(mesh, beam)?;
    let free = free_dofs(mesh.n_dof(), constrained);
    if free.len() < n {
        return Err(Error::param(format!("only {} free dofs for {n} modes", free.len())));
    }
    let mf = m.select_rows(&free).select_columns(&free);
    let kf = k.select_rows(&free).select_columns(&free);
    let chol = kf
        .cholesky()
        .ok_or_else(|| Error::Assembly("constrained stiffness is singular".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(free.len(), free.len()))
        .ok_or_else(|| Error::Assembly("triangular solve failed".into()))?;
    let a = &linv * mf * linv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let mut mu: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    mu.sort_by(|x, y| y.total_cmp(x));
    Ok(mu
        .into_iter()
        .take(n)
        .map(|v| (1.0 / v).sqrt() / (2.0 * std::f64::consts::PI))
        .collect())
}
