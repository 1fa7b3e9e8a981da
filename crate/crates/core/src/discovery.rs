//! Single-shot discovery: hyperparameter selection, assembly and sparse regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::sparse::{default_lambda_grid, optimize_lambda, SparseSolution};
use crate::weakform::{
    assemble_scaled, default_query_strides, order_for_support, rescale, select_support, unscale_coefficients,
    Corner, Gammas, LibrarySpec, Term, TestFunctionBasis, WeakSystem, DEFAULT_TAU, DEFAULT_TAU_HAT,
};

/// Overrides for the automatic choices made by [`discover`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryOptions {
    pub tau: f64,
    pub tau_hat: f64,
    pub corner: Corner,
    pub support: Option<(usize, usize)>,
    pub order: Option<(usize, usize)>,
    pub strides: Option<(usize, usize)>,
    pub lambdas: Option<Vec<f64>>,
    /// Assemble on the rescaled field (on by default).
    pub rescale: bool,
}

impl Default for DiscoveryOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            tau_hat: DEFAULT_TAU_HAT,
            corner: Corner::Auto,
            support: None,
            order: None,
            strides: None,
            lambdas: None,
            rescale: true,
        }
    }
}

/// Hyperparameters actually used for one discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub basis: TestFunctionBasis,
    pub tau: f64,
    pub tau_hat: f64,
    /// Corner frequencies in cycles per sample, when they were located.
    pub corner_x: Option<f64>,
    pub corner_t: Option<f64>,
    pub gammas: Gammas,
    pub k: usize,
    pub j: usize,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub library: LibrarySpec,
    pub solution: SparseSolution,
    pub hyper: Hyperparameters,
}

impl Discovery {
    pub fn terms(&self) -> Vec<String> {
        self.library.names()
    }

    /// Coefficient of `term`, zero when inactive, `None` when absent from the library.
    pub fn coefficient(&self, term: Term) -> Option<f64> {
        self.library.index_of(term).map(|j| self.solution.c[j])
    }

    /// `alpha` in `w_tt = -alpha w_xxxx`, when that term is present.
    pub fn alpha(&self) -> Option<f64> {
        self.coefficient(Term::new(4, 0, 1)).map(|c| -c)
    }

    pub fn support_names(&self) -> Vec<String> {
        self.solution.support.iter().map(|&j| self.library.terms[j].name()).collect()
    }

    pub fn pde_text(&self) -> String {
        render_pde(&self.library, &self.solution.c)
    }
}

/// Six significant figures, trailing zeros trimmed.
pub fn fmt_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.5e}");
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

/// Renders e.g. `w_tt = -58.5218 w_xxxx`; inactive terms are omitted.
pub fn render_pde(library: &LibrarySpec, c: &[f64]) -> String {
    let mut out = format!("{} =", library.lhs.name());
    let mut first = true;
    for (term, &v) in library.terms.iter().zip(c) {
        if v == 0.0 {
            continue;
        }
        let body = if term.power == 0 {
            fmt_sig6(v.abs())
        } else {
            format!("{} {}", fmt_sig6(v.abs()), term.name())
        };
        if first {
            out.push_str(if v < 0.0 { " -" } else { " " });
            out.push_str(&body);
            first = false;
        } else {
            out.push_str(if v < 0.0 { " - " } else { " + " });
            out.push_str(&body);
        }
    }
    if first {
        out.push_str(" 0");
    }
    out
}

/// Weak system plus the selection details that produced it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub system: WeakSystem,
    pub tau: f64,
    pub tau_hat: f64,
    pub corner_x: Option<f64>,
    pub corner_t: Option<f64>,
}

/// Selects hyperparameters (subject to overrides) and assembles the system.
pub fn prepare(grid: &FieldGrid, library: &LibrarySpec, opts: &DiscoveryOptions) -> Result<Prepared> {
    library.validate()?;
    let min_px = library.max_dx() as usize + 1;
    let min_pt = library.max_dt() as usize + 1;
    let (m_x, m_t, mut p_x, mut p_t, corner_x, corner_t) = match opts.support {
        Some((mx, mt)) => (
            mx,
            mt,
            order_for_support(mx, opts.tau, min_px),
            order_for_support(mt, opts.tau, min_pt),
            None,
            None,
        ),
        None => {
            let s = select_support(grid, library, opts.tau, opts.tau_hat, opts.corner)?;
            (s.m_x, s.m_t, s.p_x, s.p_t, Some(s.corner_x), Some(s.corner_t))
        }
    };
    if let Some((px, pt)) = opts.order {
        p_x = px;
        p_t = pt;
    }
    let (s_x, s_t) = match opts.strides {
        Some(s) => s,
        None => default_query_strides(grid.n_x(), grid.n_t(), m_x, m_t, library.len())?,
    };
    let basis = TestFunctionBasis { p_x, p_t, m_x, m_t, s_x, s_t };
    basis.validate(grid, library)?;
    let gammas = if opts.rescale {
        rescale(grid, library, m_x, m_t, p_x, p_t)?
    } else {
        Gammas::IDENTITY
    };
    let system = assemble_scaled(grid, library, &basis, gammas)?;
    Ok(Prepared { system, tau: opts.tau, tau_hat: opts.tau_hat, corner_x, corner_t })
}

/// Runs the threshold search on a prepared system and unscales the result.
pub fn solve(prepared: &Prepared, lambdas: Option<&[f64]>) -> Result<Discovery> {
    let system = &prepared.system;
    let default;
    let grid = match lambdas {
        Some(l) => l,
        None => {
            default = default_lambda_grid();
            &default
        }
    };
    let mut solution = optimize_lambda(&system.g, &system.b, grid)?;
    solution.c = unscale_coefficients(&solution.c_scaled, system);
    Ok(Discovery {
        library: system.library.clone(),
        solution,
        hyper: Hyperparameters {
            basis: system.basis,
            tau: prepared.tau,
            tau_hat: prepared.tau_hat,
            corner_x: prepared.corner_x,
            corner_t: prepared.corner_t,
            gammas: system.gammas,
            k: system.n_rows(),
            j: system.library.len(),
            condition_number: system.condition_number(),
        },
    })
}

/// Discovers a sparse PDE for `grid` in `library`.
pub fn discover(grid: &FieldGrid, library: &LibrarySpec, opts: &DiscoveryOptions) -> Result<Discovery> {
    if grid.max_abs() == 0.0 {
        return Err(Error::DegenerateData("field is identically zero".into()));
    }
    let prepared = prepare(grid, library, opts)?;
    solve(&prepared, opts.lambdas.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_figures() {
        assert_eq!(fmt_sig6(58.52183), "58.5218");
        assert_eq!(fmt_sig6(0.4973081), "0.497308");
        assert_eq!(fmt_sig6(6.32061e10), "6.32061e10");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(1e-7), "1e-7");
    }

    #[test]
    fn pde_rendering() {
        let lib = LibrarySpec::beam_default();
        let mut c = vec![0.0; 7];
        assert_eq!(render_pde(&lib, &c), "w_tt = 0");
        c[4] = -58.52183;
        assert_eq!(render_pde(&lib, &c), "w_tt = -58.5218 w_xxxx");
        c[0] = 0.25;
        c[6] = -3.0;
        assert_eq!(render_pde(&lib, &c), "w_tt = 0.25 w_t - 58.5218 w_xxxx - 3");
    }
}
