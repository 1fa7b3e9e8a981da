//! Section properties, modulus recovery from `alpha = EI/(rho A)`, analytic
//! beam frequencies and comparison statistics.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal Young's modulus of the aluminium specimen, Pa.
pub const NOMINAL_AL_MODULUS: f64 = 6.9e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossSection {
    Circle { diameter: f64 },
    /// `thickness` is the dimension along the bending direction.
    Rectangle { width: f64, thickness: f64 },
}

impl CrossSection {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CrossSection::Circle { diameter } => diameter > 0.0,
            CrossSection::Rectangle { width, thickness } => width > 0.0 && thickness > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("section dimensions must be positive: {self}")))
        }
    }
}

impl fmt::Display for CrossSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossSection::Circle { diameter } => write!(f, "circle:d={diameter}"),
            CrossSection::Rectangle { width, thickness } => write!(f, "rect:w={width},h={thickness}"),
        }
    }
}

/// Parses `circle:d=6.35e-3` or `rect:w=4.18e-3,h=2.84e-3`.
impl FromStr for CrossSection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("section '{s}' lacks a kind prefix")))?;
        let mut fields = std::collections::HashMap::new();
        for part in rest.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::param(format!("section field '{part}' is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("section field '{part}' is not a number")))?;
            fields.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::param(format!("section '{s}' is missing '{k}'")))
        };
        let section = match kind.trim() {
            "circle" => CrossSection::Circle { diameter: get("d")? },
            "rect" | "rectangle" => CrossSection::Rectangle {
                width: get("w")?,
                thickness: get("h")?,
            },
            other => return Err(Error::param(format!("unknown section kind '{other}'"))),
        };
        section.validate()?;
        Ok(section)
    }
}

/// Area and second moment of area.
pub fn section_properties(section: &CrossSection) -> (f64, f64) {
    match *section {
        CrossSection::Circle { diameter: d } => (PI * d * d / 4.0, PI * d.powi(4) / 64.0),
        CrossSection::Rectangle { width: w, thickness: h } => (w * h, w * h.powi(3) / 12.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamModel {
    pub section: CrossSection,
    pub length: f64,
    pub density: f64,
    pub youngs_modulus: Option<f64>,
}

impl BeamModel {
    pub fn new(section: CrossSection, length: f64, density: f64, youngs_modulus: Option<f64>) -> Result<Self> {
        let beam = Self { section, length, density, youngs_modulus };
        beam.validate()?;
        Ok(beam)
    }

    pub fn validate(&self) -> Result<()> {
        self.section.validate()?;
        if !(self.length > 0.0) || !(self.density > 0.0) {
            return Err(Error::param("beam length and density must be positive"));
        }
        if let Some(e) = self.youngs_modulus {
            if !(e > 0.0) {
                return Err(Error::param("Young's modulus must be positive"));
            }
        }
        Ok(())
    }

    pub fn with_modulus(&self, e: f64) -> Self {
        Self { youngs_modulus: Some(e), ..*self }
    }

    pub fn area(&self) -> f64 {
        section_properties(&self.section).0
    }

    pub fn inertia(&self) -> f64 {
        section_properties(&self.section).1
    }

    pub fn modulus(&self) -> Result<f64> {
        self.youngs_modulus
            .ok_or_else(|| Error::param("beam has no Young's modulus"))
    }

    /// `EI/(rho A)`.
    pub fn alpha(&self) -> Result<f64> {
        alpha_from_modulus(self.modulus()?, self)
    }
}

pub fn modulus_from_alpha(alpha: f64, beam: &BeamModel) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Sign(format!(
            "alpha = {alpha} is not positive; the discovered equation is not a stable beam"
        )));
    }
    let (a, i) = section_properties(&beam.section);
    Ok(alpha * beam.density * a / i)
}

pub fn alpha_from_modulus(e: f64, beam: &BeamModel) -> Result<f64> {
    if !(e > 0.0) {
        return Err(Error::Sign(format!("modulus {e} is not positive")));
    }
    let (a, i) = section_properties(&beam.section);
    Ok(e * i / (beam.density * a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    ClampedFree,
    PinnedPinned,
    ClampedClamped,
}

impl FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamped-free" => Ok(Self::ClampedFree),
            "pinned-pinned" => Ok(Self::PinnedPinned),
            "clamped-clamped" => Ok(Self::ClampedClamped),
            _ => Err(Error::param(format!("unknown boundary condition '{s}'"))),
        }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Dimensionless roots `beta_n L` for the first `n` modes.
pub fn characteristic_roots(bc: BoundaryKind, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let k = k as f64;
            match bc {
                BoundaryKind::PinnedPinned => k * PI,
                // cos b cosh b = -1, root near (k - 1/2) pi; scaled form avoids overflow
                BoundaryKind::ClampedFree => bisect(
                    |b| b.cos() + 1.0 / b.cosh(),
                    (k - 1.0) * PI + 1e-9,
                    k * PI,
                ),
                // cos b cosh b = 1, root near (k + 1/2) pi
                BoundaryKind::ClampedClamped => bisect(
                    |b| b.cos() - 1.0 / b.cosh(),
                    k * PI + 1e-9,
                    (k + 1.0) * PI - 1e-9,
                ),
            }
        })
        .collect()
}

/// `f_n = (beta_n L)^2 / (2 pi) * sqrt(EI / (rho A L^4))`, Hz.
pub fn natural_frequencies(beam: &BeamModel, bc: BoundaryKind, n_modes: usize) -> Result<Vec<f64>> {
    if n_modes < 1 {
        return Err(Error::param("need at least one mode"));
    }
    let alpha = beam.alpha()?;
    let scale = (alpha / beam.length.powi(4)).sqrt() / (2.0 * PI);
    Ok(characteristic_roots(bc, n_modes).into_iter().map(|b| b * b * scale).collect())
}

/// Symmetric mean absolute percent error against `nominal`.
pub fn smape(values: &[f64], nominal: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("smape needs at least one value"));
    }
    let sum: f64 = values
        .iter()
        .map(|v| {
            let den = (v.abs() + nominal.abs()) / 2.0;
            if den == 0.0 {
                0.0
            } else {
                (v - nominal).abs() / den
            }
        })
        .sum();
    Ok(100.0 * sum / values.len() as f64)
}

/// `100 |e - nominal| / nominal`.
pub fn percent_error(e: f64, nominal: f64) -> f64 {
    100.0 * (e - nominal).abs() / nominal
}
