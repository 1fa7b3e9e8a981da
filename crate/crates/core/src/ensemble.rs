//! Data ensembling over temporal subsamples.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discovery::{discover, Discovery, DiscoveryOptions};
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::weakform::LibrarySpec;

/// Keeps time indices `i, i + d, i + 2d, ...` (1-based `i`).
pub fn subsample_time(grid: &FieldGrid, d: usize, i: usize) -> Result<FieldGrid> {
    if d < 1 || i < 1 || i > d {
        return Err(Error::param(format!("need 1 <= i <= d, got d = {d}, i = {i}")));
    }
    if i > grid.n_t() {
        return Err(Error::param(format!("offset {i} beyond {} time samples", grid.n_t())));
    }
    let cols: Vec<usize> = (i - 1..grid.n_t()).step_by(d).collect();
    grid.select_time(&cols)
}

/// Number of `(d, i)` subsets for `max_ds`.
pub fn run_count(max_ds: usize) -> usize {
    max_ds * (max_ds + 1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Ok(Box<Discovery>),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub d: usize,
    pub i: usize,
    pub n_t: usize,
    pub outcome: RunOutcome,
}

impl EnsembleRun {
    pub fn discovery(&self) -> Option<&Discovery> {
        match &self.outcome {
            RunOutcome::Ok(d) => Some(d),
            RunOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Unbiased; zero for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            count: n,
            mean,
            median,
            std,
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub term: String,
    /// `None` when the term was never active.
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub successful: usize,
    pub failed: usize,
    pub coefficients: Vec<TermStats>,
    pub modal_support: Vec<String>,
    pub support_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub max_ds: usize,
    pub runs: Vec<EnsembleRun>,
    pub aggregate: Aggregate,
}

impl EnsembleResult {
    pub fn successful(&self) -> impl Iterator<Item = &Discovery> {
        self.runs.iter().filter_map(EnsembleRun::discovery)
    }
}

/// Per-term statistics over the runs where the term is active, plus the
/// most common support and the fraction of runs that share it.
pub fn aggregate(runs: &[EnsembleRun]) -> Result<Aggregate> {
    let ok: Vec<&Discovery> = runs.iter().filter_map(EnsembleRun::discovery).collect();
    let first = ok
        .first()
        .ok_or_else(|| Error::Aggregation("no successful runs to aggregate".into()))?;
    let library = &first.library;
    if ok.iter().any(|d| d.library != *library) {
        return Err(Error::Aggregation("runs use different libraries".into()));
    }
    let coefficients = library
        .terms
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let vals: Vec<f64> = ok.iter().map(|d| d.solution.c[j]).filter(|v| *v != 0.0).collect();
            TermStats { term: term.name(), summary: Summary::of(&vals) }
        })
        .collect();
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for d in &ok {
        *counts.entry(d.solution.support.clone()).or_default() += 1;
    }
    // ties go to the lexicographically smallest support, independent of run order
    let (modal, n_modal) = counts
        .iter()
        .fold((Vec::new(), 0usize), |(bs, bn), (s, &n)| if n > bn { (s.clone(), n) } else { (bs, bn) });
    Ok(Aggregate {
        successful: ok.len(),
        failed: runs.len() - ok.len(),
        coefficients,
        modal_support: modal.iter().map(|&j| library.terms[j].name()).collect(),
        support_agreement: n_modal as f64 / ok.len() as f64,
    })
}

/// Discovery on every `(d, i)` temporal subset, `d = 1..=max_ds`, `i = 1..=d`,
/// with hyperparameters re-selected per subset. Failed runs are kept with
/// their reason and left out of the statistics.
pub fn run_ensemble(
    grid: &FieldGrid,
    library: &LibrarySpec,
    max_ds: usize,
    opts: &DiscoveryOptions,
) -> Result<EnsembleResult> {
    if max_ds < 1 {
        return Err(Error::param("max_ds must be at least 1"));
    }
    library.validate()?;
    let pairs: Vec<(usize, usize)> = (1..=max_ds).flat_map(|d| (1..=d).map(move |i| (d, i))).collect();
    let runs: Vec<EnsembleRun> = pairs
        .par_iter()
        .map(|&(d, i)| match subsample_time(grid, d, i) {
            Ok(sub) => {
                let n_t = sub.n_t();
                let outcome = match discover(&sub, library, opts) {
                    Ok(disc) => RunOutcome::Ok(Box::new(disc)),
                    Err(e) => RunOutcome::Failed { reason: e.to_string() },
                };
                EnsembleRun { d, i, n_t, outcome }
            }
            Err(e) => EnsembleRun { d, i, n_t: 0, outcome: RunOutcome::Failed { reason: e.to_string() } },
        })
        .collect();
    let aggregate = aggregate(&runs)?;
    Ok(EnsembleResult { max_ds, runs, aggregate })
}
