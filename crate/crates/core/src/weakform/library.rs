use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One candidate term `∂x^dx ∂t^dt (w^power)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub dx: u8,
    pub dt: u8,
    pub power: u8,
}

impl Term {
    pub const fn new(dx: u8, dt: u8, power: u8) -> Self {
        Self { dx, dt, power }
    }

    pub const fn constant() -> Self {
        Self::new(0, 0, 0)
    }

    pub fn total_order(&self) -> u32 {
        self.dx as u32 + self.dt as u32
    }

    /// Rendered name, e.g. `w_xxxx`, `w_t`, `w`, `1`.
    pub fn name(&self) -> String {
        if self.power == 0 {
            return "1".into();
        }
        let base = if self.power == 1 {
            "w".to_string()
        } else {
            format!("(w^{})", self.power)
        };
        if self.dx == 0 && self.dt == 0 {
            base
        } else {
            format!(
                "{base}_{}{}",
                "x".repeat(self.dx as usize),
                "t".repeat(self.dt as usize)
            )
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Left-hand side plus ordered candidate terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub lhs: Term,
    pub terms: Vec<Term>,
}

impl LibrarySpec {
    pub fn new(lhs: Term, terms: Vec<Term>) -> Result<Self> {
        let lib = Self { lhs, terms };
        lib.validate()?;
        Ok(lib)
    }

    /// `w_tt` against `{w_t, w_x, w_xx, w_xxx, w_xxxx, w, 1}`.
    pub fn beam_default() -> Self {
        Self {
            lhs: Term::new(0, 2, 1),
            terms: vec![
                Term::new(0, 1, 1),
                Term::new(1, 0, 1),
                Term::new(2, 0, 1),
                Term::new(3, 0, 1),
                Term::new(4, 0, 1),
                Term::new(0, 0, 1),
                Term::constant(),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::param("library needs at least one term"));
        }
        if self.terms.contains(&self.lhs) {
            return Err(Error::param(format!(
                "left-hand side {} also appears in the library",
                self.lhs
            )));
        }
        let mut seen = HashSet::new();
        for t in &self.terms {
            if !seen.insert(*t) {
                return Err(Error::param(format!("duplicate library term {t}")));
            }
            if t.power == 0 && t.total_order() > 0 {
                return Err(Error::param(format!(
                    "derivative of a constant term ({t}) is identically zero"
                )));
            }
        }
        if self.lhs.power == 0 {
            return Err(Error::param("left-hand side cannot be the constant term"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(Term::name).collect()
    }

    /// Largest spatial derivative order over lhs and terms.
    pub fn max_dx(&self) -> u8 {
        self.terms.iter().chain([&self.lhs]).map(|t| t.dx).max().unwrap_or(0)
    }

    /// Largest temporal derivative order over lhs and terms.
    pub fn max_dt(&self) -> u8 {
        self.terms.iter().chain([&self.lhs]).map(|t| t.dt).max().unwrap_or(0)
    }

    pub fn index_of(&self, term: Term) -> Option<usize> {
        self.terms.iter().position(|t| *t == term)
    }
}
