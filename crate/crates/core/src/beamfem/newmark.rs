//! Trapezoidal Newmark (beta = 1/4, gamma = 1/2) with prescribed dofs.

use nalgebra::{DMatrix, DVector};

use super::banded::{BandCholesky, SymBand};
use super::matrices::free_dofs;
use crate::error::{Error, Result};

const BANDWIDTH: usize = 3;

/// Free-dof state.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub d: DVector<f64>,
    pub v: DVector<f64>,
    pub a: DVector<f64>,
}

/// Values and accelerations of the prescribed dofs at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Prescribed {
    pub d: DVector<f64>,
    pub a: DVector<f64>,
}

impl Prescribed {
    pub fn zeros(n: usize) -> Self {
        Self { d: DVector::zeros(n), a: DVector::zeros(n) }
    }
}

/// Stepper for `M a + C v + K d = 0` on the free dofs, with prescribed dofs
/// entering as `F_f = -M_fp a_p - K_fp d_p`.
pub struct Newmark {
    dt: f64,
    n_dof: usize,
    free: Vec<usize>,
    prescribed: Vec<usize>,
    m: SymBand,
    k: SymBand,
    c: Option<SymBand>,
    m_fp: DMatrix<f64>,
    k_fp: DMatrix<f64>,
    mass_chol: BandCholesky,
    effective: BandCholesky,
}

impl Newmark {
    /// `damping` must not couple free dofs to prescribed ones.
    pub fn new(
        m: &DMatrix<f64>,
        k: &DMatrix<f64>,
        damping: Option<&DMatrix<f64>>,
        prescribed: &[usize],
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::param("time step must be positive"));
        }
        let n_dof = m.nrows();
        if m.shape() != (n_dof, n_dof) || k.shape() != (n_dof, n_dof) {
            return Err(Error::Dimension("mass and stiffness must be square and equal size".into()));
        }
        if prescribed.iter().any(|&p| p >= n_dof) {
            return Err(Error::param("prescribed dof out of range"));
        }
        let free = free_dofs(n_dof, prescribed);
        if free.is_empty() {
            return Err(Error::param("no free dofs remain"));
        }
        let mb = SymBand::from_dense(m, &free, BANDWIDTH);
        let kb = SymBand::from_dense(k, &free, BANDWIDTH);
        let cb = match damping {
            Some(c) => {
                if c.shape() != (n_dof, n_dof) {
                    return Err(Error::Dimension("damping matrix has the wrong size".into()));
                }
                if free.iter().any(|&f| prescribed.iter().any(|&p| c[(f, p)] != 0.0)) {
                    return Err(Error::param("damping may not touch prescribed dofs"));
                }
                Some(SymBand::from_dense(c, &free, BANDWIDTH))
            }
            None => None,
        };
        let mut eff = mb.add_scaled(0.25 * dt * dt, &kb);
        if let Some(c) = &cb {
            eff = eff.add_scaled(0.5 * dt, c);
        }
        let m_fp = m.select_rows(&free).select_columns(prescribed);
        let k_fp = k.select_rows(&free).select_columns(prescribed);
        Ok(Self {
            dt,
            n_dof,
            free,
            prescribed: prescribed.to_vec(),
            mass_chol: mb.cholesky()?,
            effective: eff.cholesky()?,
            m: mb,
            k: kb,
            c: cb,
            m_fp,
            k_fp,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn prescribed(&self) -> &[usize] {
        &self.prescribed
    }

    fn load(&self, p: &Prescribed) -> DVector<f64> {
        if self.prescribed.is_empty() {
            return DVector::zeros(self.free.len());
        }
        -(&self.m_fp * &p.a) - &self.k_fp * &p.d
    }

    /// State with the given free displacements and velocities and the
    /// consistent initial acceleration.
    pub fn initial_state(&self, d0: DVector<f64>, v0: DVector<f64>, p0: &Prescribed) -> Result<State> {
        let n = self.free.len();
        if d0.len() != n || v0.len() != n || p0.d.len() != self.prescribed.len() {
            return Err(Error::Dimension("initial state has the wrong size".into()));
        }
        let mut rhs = self.load(p0) - self.k.mul_vec(&d0);
        if let Some(c) = &self.c {
            rhs -= c.mul_vec(&v0);
        }
        let a = self.mass_chol.solve(&rhs);
        Ok(State { d: d0, v: v0, a })
    }

    pub fn zero_state(&self, p0: &Prescribed) -> Result<State> {
        let n = self.free.len();
        self.initial_state(DVector::zeros(n), DVector::zeros(n), p0)
    }

    /// Advances `state` by one step to the instant where the prescribed dofs take `p_next`.
    pub fn step(&self, state: &mut State, p_next: &Prescribed) {
        let dt = self.dt;
        let d_pred = &state.d + &state.v * dt + &state.a * (0.25 * dt * dt);
        let v_pred = &state.v + &state.a * (0.5 * dt);
        let mut rhs = self.load(p_next) - self.k.mul_vec(&d_pred);
        if let Some(c) = &self.c {
            rhs -= c.mul_vec(&v_pred);
        }
        let a = self.effective.solve(&rhs);
        state.d = d_pred + &a * (0.25 * dt * dt);
        state.v = v_pred + &a * (0.5 * dt);
        state.a = a;
    }

    /// `v'Mv/2 + d'Kd/2` over the free dofs.
    pub fn energy(&self, state: &State) -> f64 {
        0.5 * state.v.dot(&self.m.mul_vec(&state.v)) + 0.5 * state.d.dot(&self.k.mul_vec(&state.d))
    }

    /// Full dof vector from the free state and prescribed values.
    pub fn full_displacement(&self, state: &State, p: &Prescribed) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dof);
        for (i, &f) in self.free.iter().enumerate() {
            out[f] = state.d[i];
        }
        for (i, &q) in self.prescribed.iter().enumerate() {
            out[q] = p.d[i];
        }
        out
    }
}
