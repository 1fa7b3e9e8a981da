//! Burst-driven synthetic beam fields with known modulus and seeded noise.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::beamfem::{simulate_nodes, weighted_mass, BoundaryHistory, DofHistory, EndHistory, FemMesh};
use crate::error::{Error, Result};
use crate::grid::{FieldGrid, NoiseSpec};
use crate::material::BeamModel;

/// Minimum samples per period of the center frequency.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    pub f_c: f64,
    pub cycles: u32,
    pub amplitude: f64,
}

impl BurstSpec {
    pub fn new(f_c: f64) -> Self {
        Self { f_c, cycles: 5, amplitude: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_c > 0.0) || self.cycles < 1 {
            return Err(Error::param("burst needs f_c > 0 and at least one cycle"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.cycles as f64 / self.f_c
    }

    fn rates(&self) -> (f64, f64) {
        (PI * self.f_c / self.cycles as f64, 2.0 * PI * self.f_c)
    }

    /// Second time derivative of [`burst`].
    pub fn accel(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.duration() {
            return 0.0;
        }
        let (a, b) = self.rates();
        self.amplitude * (-(a * a + b * b) * (a * t).sin() * (b * t).sin() + 2.0 * a * b * (a * t).cos() * (b * t).cos())
    }
}

/// `A H(f t) sin(pi f t / n) sin(2 pi f t) H(n - f t)` for an `n`-cycle burst.
pub fn burst(t: f64, spec: &BurstSpec) -> f64 {
    if t <= 0.0 || t >= spec.duration() {
        return 0.0;
    }
    let (a, b) = spec.rates();
    spec.amplitude * (a * t).sin() * (b * t).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FarEnd {
    /// Mesh extended by half its length with a damping ramp.
    Absorbing,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub burst: BurstSpec,
    pub dt: f64,
    pub t_end: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub far_end: FarEnd,
}

impl SynthConfig {
    pub fn new(burst: BurstSpec, dt: f64, t_end: f64) -> Self {
        Self {
            burst,
            dt,
            t_end,
            noise: NoiseSpec::None,
            seed: 0,
            far_end: FarEnd::Absorbing,
        }
    }
}

/// Base-driven beam response on the nodes of `mesh` (which spans `[0, L]`).
///
/// The base node follows the burst with zero rotation; the far end is free
/// or continues into a damped margin. Noise is iid Gaussian with standard
/// deviation `sigma_rel * max|field|`.
pub fn generate_beam_data(beam: &BeamModel, mesh: &FemMesh, cfg: &SynthConfig) -> Result<FieldGrid> {
    cfg.burst.validate()?;
    beam.validate()?;
    beam.modulus()?;
    if !(cfg.dt > 0.0) || !(cfg.t_end > cfg.dt) {
        return Err(Error::param("need dt > 0 and t_end > dt"));
    }
    if 1.0 / (cfg.burst.f_c * cfg.dt) < MIN_SAMPLES_PER_PERIOD {
        return Err(Error::param(format!(
            "dt = {:e} s gives fewer than {MIN_SAMPLES_PER_PERIOD} samples per period at {:e} Hz",
            cfg.dt, cfg.burst.f_c
        )));
    }
    let n_steps = (cfg.t_end / cfg.dt).round() as usize + 1;
    let times: Vec<f64> = (0..n_steps).map(|s| s as f64 * cfg.dt).collect();
    let drive = DofHistory {
        value: times.iter().map(|&t| burst(t, &cfg.burst)).collect(),
        accel: times.iter().map(|&t| cfg.burst.accel(t)).collect(),
    };
    let hold = DofHistory { value: vec![0.0; n_steps], accel: vec![0.0; n_steps] };
    let bc = BoundaryHistory {
        t0: 0.0,
        dt: cfg.dt,
        n_steps,
        left: EndHistory { deflection: Some(drive), rotation: Some(hold) },
        right: EndHistory::default(),
    };

    let (sim_mesh, damping) = match cfg.far_end {
        FarEnd::Free => (*mesh, None),
        FarEnd::Absorbing => {
            let margin = mesh.n_elem.div_ceil(2);
            let ext = FemMesh::with_origin(mesh.n_elem + margin, mesh.dx, mesh.x0)?;
            let eta = 8.0 * PI * cfg.burst.f_c;
            let weights: Vec<f64> = (0..ext.n_elem)
                .map(|e| {
                    if e < mesh.n_elem {
                        0.0
                    } else {
                        let s = (e - mesh.n_elem) as f64 + 0.5;
                        eta * (s / margin as f64).powi(2)
                    }
                })
                .collect();
            (ext, Some(weighted_mass(&ext, beam, &weights)?))
        }
    };
    let clean = simulate_nodes(&sim_mesh, beam, &bc, damping.as_ref(), n_steps, mesh.n_nodes())?;
    add_noise(&clean, cfg.noise, cfg.seed)
}

/// Adds seeded iid Gaussian noise scaled by the field's peak magnitude.
pub fn add_noise(grid: &FieldGrid, noise: NoiseSpec, seed: u64) -> Result<FieldGrid> {
    let sigma_rel = noise.sigma_rel();
    if !(sigma_rel >= 0.0) {
        return Err(Error::param("noise level must be nonnegative"));
    }
    if sigma_rel == 0.0 {
        return Ok(grid.clone());
    }
    let sd = sigma_rel * grid.max_abs();
    if sd == 0.0 {
        return Ok(grid.clone());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nt) = (grid.n_x(), grid.n_t());
    // row-major draw order, independent of matrix storage
    let mut noisy = grid.values().clone();
    for n in 0..nx {
        for m in 0..nt {
            noisy[(n, m)] += normal.sample(&mut rng);
        }
    }
    grid.with_values(noisy)
}

/// Noise matrix that [`add_noise`] would add for this seed and scale.
pub fn noise_matrix(nx: usize, nt: usize, sd: f64, seed: u64) -> Result<DMatrix<f64>> {
    let normal = Normal::new(0.0, sd).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(nx, nt);
    for n in 0..nx {
        for m in 0..nt {
            out[(n, m)] = normal.sample(&mut rng);
        }
    }
    Ok(out)
}
