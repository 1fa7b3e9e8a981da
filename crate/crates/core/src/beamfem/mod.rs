//! Euler-Bernoulli beam finite elements: Hermite cubic matrices, trapezoidal
//! Newmark stepping with prescribed boundary motion, field comparison and
//! modulus calibration.

mod banded;
mod boundary;
mod matrices;
mod newmark;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use banded::{BandCholesky, SymBand};
pub use boundary::{
    extract_boundaries, second_difference, BoundaryHistory, DofHistory, EndHistory, DEFAULT_FOURIER_ORDER,
    DEFAULT_N_FIT,
};
pub use matrices::{
    assemble_matrices, element_mass, element_stiffness, fem_frequencies, free_dofs, weighted_mass, FemMesh,
};
pub use newmark::{Newmark, Prescribed, State};

use crate::error::{Error, Result};
use crate::grid::{window, FieldGrid};
use crate::material::BeamModel;

fn prescribed_layout(mesh: &FemMesh, bc: &BoundaryHistory) -> Vec<(usize, DofHistory)> {
    let last = mesh.n_nodes() - 1;
    let mut out = Vec::new();
    let ends = [(0, &bc.left), (last, &bc.right)];
    for (node, end) in ends {
        if let Some(h) = &end.deflection {
            out.push((FemMesh::deflection_dof(node), h.clone()));
        }
        if let Some(h) = &end.rotation {
            out.push((FemMesh::rotation_dof(node), h.clone()));
        }
    }
    out
}

/// Simulates from rest and returns nodal deflections of the first
/// `report_nodes` nodes on the time grid of `bc`, truncated at `n_steps`.
pub fn simulate_nodes(
    mesh: &FemMesh,
    beam: &BeamModel,
    bc: &BoundaryHistory,
    damping: Option<&DMatrix<f64>>,
    n_steps: usize,
    report_nodes: usize,
) -> Result<FieldGrid> {
    bc.validate()?;
    if n_steps == 0 || n_steps > bc.n_steps {
        return Err(Error::param(format!(
            "{n_steps} steps requested, boundary history covers {}",
            bc.n_steps
        )));
    }
    if report_nodes == 0 || report_nodes > mesh.n_nodes() {
        return Err(Error::param("report nodes outside the mesh"));
    }
    let (m, k) = assemble_matrices(mesh, beam)?;
    let layout = prescribed_layout(mesh, bc);
    let dofs: Vec<usize> = layout.iter().map(|(d, _)| *d).collect();
    let stepper = Newmark::new(&m, &k, damping, &dofs, bc.dt)?;
    let at = |step: usize| Prescribed {
        d: nalgebra::DVector::from_iterator(layout.len(), layout.iter().map(|(_, h)| h.value[step])),
        a: nalgebra::DVector::from_iterator(layout.len(), layout.iter().map(|(_, h)| h.accel[step])),
    };
    let mut values = DMatrix::zeros(report_nodes, n_steps);
    let p0 = at(0);
    let mut state = stepper.zero_state(&p0)?;
    let record = |values: &mut DMatrix<f64>, col: usize, state: &State, p: &Prescribed| {
        let full = stepper.full_displacement(state, p);
        for n in 0..report_nodes {
            values[(n, col)] = full[FemMesh::deflection_dof(n)];
        }
    };
    record(&mut values, 0, &state, &p0);
    for s in 1..n_steps {
        let p = at(s);
        stepper.step(&mut state, &p);
        record(&mut values, s, &state, &p);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Assembly("simulation produced non-finite values".into()));
    }
    let x: Vec<f64> = (0..report_nodes).map(|i| mesh.node_x(i)).collect();
    let t: Vec<f64> = (0..n_steps).map(|s| bc.t0 + s as f64 * bc.dt).collect();
    FieldGrid::new(values, x, t)
}

/// Trapezoidal Newmark from rest, driven by `bc`, up to `t_end`.
pub fn newmark_solve(mesh: &FemMesh, beam: &BeamModel, bc: &BoundaryHistory, dt: f64, t_end: f64) -> Result<FieldGrid> {
    if ((dt - bc.dt) / bc.dt).abs() > 1e-9 {
        return Err(Error::param(format!("time step {dt} differs from boundary grid {}", bc.dt)));
    }
    let n_steps = ((t_end - bc.t0) / dt).round() as usize + 1;
    simulate_nodes(mesh, beam, bc, None, n_steps, mesh.n_nodes())
}

/// Elementwise `|W - W_sim|` and `|W - W_sim|_F / |W|_F`.
pub fn compare(simulated: &FieldGrid, measured: &FieldGrid) -> Result<(DMatrix<f64>, f64)> {
    if simulated.n_x() != measured.n_x() || simulated.n_t() != measured.n_t() {
        return Err(Error::Dimension(format!(
            "simulated grid {}x{} vs measured {}x{}",
            simulated.n_x(),
            simulated.n_t(),
            measured.n_x(),
            measured.n_t()
        )));
    }
    let close = |a: &[f64], b: &[f64], h: f64| a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-6 * h);
    if !close(simulated.x(), measured.x(), measured.dx()) || !close(simulated.t(), measured.t(), measured.dt()) {
        return Err(Error::Dimension("simulated and measured axes differ".into()));
    }
    let diff = measured.values() - simulated.values();
    let norm = measured.values().norm();
    let rel = if norm == 0.0 { diff.norm() } else { diff.norm() / norm };
    Ok((diff.abs(), rel))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub n_fit: usize,
    pub fourier_order: usize,
    /// Comparison window; the whole record when `None`.
    pub window: Option<(f64, f64)>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            n_fit: DEFAULT_N_FIT,
            fourier_order: DEFAULT_FOURIER_ORDER,
            window: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub field: FieldGrid,
    pub error_field: DMatrix<f64>,
    pub frobenius_rel: f64,
}

fn simulate_with(data: &FieldGrid, beam: &BeamModel, bc: &BoundaryHistory, opts: &SimulationOptions) -> Result<SimulationResult> {
    let mesh = FemMesh::with_origin(data.n_x() - 1, data.dx(), data.x()[0])?;
    let field = simulate_nodes(&mesh, beam, bc, None, data.n_t(), mesh.n_nodes())?;
    let (field, measured) = match opts.window {
        Some((a, b)) => (window(&field, a, b)?, window(data, a, b)?),
        None => (field, data.clone()),
    };
    let (error_field, frobenius_rel) = compare(&field, &measured)?;
    Ok(SimulationResult { field, error_field, frobenius_rel })
}

/// Replays the measured boundary motion through the beam model from rest
/// at the first sample and compares against the measurement.
pub fn simulate(data: &FieldGrid, beam: &BeamModel, opts: &SimulationOptions) -> Result<SimulationResult> {
    let bc = extract_boundaries(data, opts.n_fit, opts.fourier_order)?;
    simulate_with(data, beam, &bc, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<(f64, f64)>,
    pub best_modulus: f64,
    pub best_error: f64,
}

/// Relative Frobenius error at `n` uniformly spaced moduli in `[e_lo, e_hi]`.
pub fn sweep_modulus(
    data: &FieldGrid,
    beam: &BeamModel,
    e_lo: f64,
    e_hi: f64,
    n: usize,
    opts: &SimulationOptions,
) -> Result<SweepResult> {
    if !(e_lo > 0.0 && e_lo < e_hi) || n < 2 {
        return Err(Error::param("sweep needs 0 < E_lo < E_hi and n >= 2"));
    }
    let bc = extract_boundaries(data, opts.n_fit, opts.fourier_order)?;
    let es: Vec<f64> = (0..n).map(|i| e_lo + (e_hi - e_lo) * i as f64 / (n - 1) as f64).collect();
    let points: Vec<(f64, f64)> = es
        .par_iter()
        .map(|&e| {
            simulate_with(data, &beam.with_modulus(e), &bc, opts)
                .map(|r| (e, r.frobenius_rel))
                .map_err(|err| Error::Assembly(format!("E = {e:e}: {err}")))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.1 < points[best].1 {
            best = i;
        }
    }
    Ok(SweepResult {
        best_modulus: points[best].0,
        best_error: points[best].1,
        points,
    })
}
