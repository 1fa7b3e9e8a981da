//! Pipeline configuration, stage runners and the JSON/CSV run report behind
//! the `ewsindy` binary.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use ewsindy::beamfem::{simulate, sweep_modulus, SimulationOptions, SweepResult, DEFAULT_FOURIER_ORDER, DEFAULT_N_FIT};
use ewsindy::discovery::{discover, render_pde, Discovery, DiscoveryOptions, Hyperparameters};
use ewsindy::ensemble::{run_ensemble, Aggregate, EnsembleResult, RunOutcome, Summary};
use ewsindy::grid::{load_field, window};
use ewsindy::material::{modulus_from_alpha, percent_error, smape, BeamModel, CrossSection};
use ewsindy::preprocess::{bandpass, downsample_time, BandpassSpec, DEFAULT_TAPER_FRAC};
use ewsindy::weakform::LibrarySpec;
use ewsindy::{Error, FieldGrid};

/// Pipeline stage; each has its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Preprocess,
    Discovery,
    Ensemble,
    Material,
    Simulation,
    Output,
}

impl Stage {
    pub fn exit_code(self) -> u8 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 3,
            Stage::Preprocess => 4,
            Stage::Discovery => 5,
            Stage::Ensemble => 6,
            Stage::Material => 7,
            Stage::Simulation => 8,
            Stage::Output => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Discovery => "discovery",
            Stage::Ensemble => "ensemble",
            Stage::Material => "material",
            Stage::Simulation => "simulation",
            Stage::Output => "output",
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl StageError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self { stage, message: message.to_string() }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage.name(), self.message)
    }
}

impl std::error::Error for StageError {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: fmt::Display> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Keep every `downsample`-th time sample.
    pub downsample: usize,
    /// Passband in Hz.
    pub band: Option<[f64; 2]>,
    pub taper: f64,
    /// Discovery window in seconds.
    pub window: Option<[f64; 2]>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { downsample: 1, band: None, taper: DEFAULT_TAPER_FRAC, window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub max_ds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub section: CrossSection,
    pub density: f64,
    /// Defaults to the spatial extent of the data.
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default)]
    pub nominal_modulus: Option<f64>,
}

impl MaterialConfig {
    pub fn beam(&self, fallback_length: f64) -> ewsindy::Result<BeamModel> {
        BeamModel::new(self.section, self.length.unwrap_or(fallback_length), self.density, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulusSource {
    Discovered,
    Explicit { value: f64 },
    Sweep { lo: f64, hi: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub modulus: ModulusSource,
    pub n_fit: usize,
    pub fourier_order: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { modulus: ModulusSource::Discovered, n_fit: DEFAULT_N_FIT, fourier_order: DEFAULT_FOURIER_ORDER }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    /// Directory for the CSV side files.
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub preprocess: PreprocessConfig,
    pub library: Option<LibrarySpec>,
    pub discovery: DiscoveryOptions,
    pub ensemble: Option<EnsembleConfig>,
    pub material: Option<MaterialConfig>,
    pub simulation: Option<SimulationConfig>,
    pub output: OutputConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path).map_err(|e| StageError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| StageError::new(Stage::Config, format!("{}: {e}", path.display())))
    }

    pub fn library(&self) -> LibrarySpec {
        self.library.clone().unwrap_or_else(LibrarySpec::beam_default)
    }

    fn input(&self) -> Result<&Path, StageError> {
        self.input.as_deref().ok_or_else(|| StageError::new(Stage::Config, "no input file given"))
    }
}

/// Preprocessed record before and after windowing.
pub struct Prepared {
    /// Downsampled and filtered, full length.
    pub record: FieldGrid,
    /// `record` restricted to the discovery window.
    pub data: FieldGrid,
}

pub fn ingest(cfg: &PipelineConfig) -> Result<FieldGrid, StageError> {
    let path = cfg.input()?;
    load_field(path).map_err(|e| StageError::new(Stage::Ingest, format!("{}: {e}", path.display())))
}

/// Downsampling, then bandpass on the full record, then windowing.
pub fn preprocess(raw: &FieldGrid, cfg: &PreprocessConfig) -> Result<Prepared, StageError> {
    let mut record = downsample_time(raw, cfg.downsample.max(1)).at(Stage::Preprocess)?;
    if let Some([lo, hi]) = cfg.band {
        record = bandpass(&record, &BandpassSpec::new(lo, hi).with_taper(cfg.taper)).at(Stage::Preprocess)?;
    }
    let data = match cfg.window {
        Some([a, b]) => window(&record, a, b).at(Stage::Preprocess)?,
        None => record.clone(),
    };
    Ok(Prepared { record, data })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_x: usize,
    pub n_t: usize,
    pub dx: f64,
    pub dt: f64,
    pub x_range: [f64; 2],
    pub t_range: [f64; 2],
}

impl DataSummary {
    pub fn of(g: &FieldGrid) -> Self {
        let (x, t) = (g.x(), g.t());
        Self {
            n_x: g.n_x(),
            n_t: g.n_t(),
            dx: if g.n_x() > 1 { g.dx() } else { 0.0 },
            dt: if g.n_t() > 1 { g.dt() } else { 0.0 },
            x_range: [x[0], x[x.len() - 1]],
            t_range: [t[0], t[t.len() - 1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub pde: String,
    /// Set when the field carries no signal and nothing was fitted.
    pub degenerate: bool,
    pub terms: Vec<String>,
    pub c: Vec<f64>,
    pub support: Vec<String>,
    pub lambda_hat: Option<f64>,
    pub relative_residual: Option<f64>,
    pub rank_deficient: bool,
    pub hyperparameters: Option<Hyperparameters>,
    pub loss_curve: Vec<(f64, f64)>,
}

impl DiscoveryReport {
    pub fn from_discovery(d: &Discovery) -> Self {
        Self {
            pde: d.pde_text(),
            degenerate: false,
            terms: d.terms(),
            c: d.solution.c.clone(),
            support: d.support_names(),
            lambda_hat: Some(d.solution.lambda_hat),
            relative_residual: Some(d.solution.relative_residual),
            rank_deficient: d.solution.rank_deficient,
            hyperparameters: Some(d.hyper.clone()),
            loss_curve: d.solution.loss_curve.clone(),
        }
    }

    fn degenerate(library: &LibrarySpec) -> Self {
        let c = vec![0.0; library.len()];
        Self {
            pde: render_pde(library, &c),
            degenerate: true,
            terms: library.terms.iter().map(|t| t.name()).collect(),
            c,
            support: Vec::new(),
            lambda_hat: None,
            relative_residual: None,
            rank_deficient: false,
            hyperparameters: None,
            loss_curve: Vec::new(),
        }
    }
}

/// Discovery on `data`; an all-zero field yields the zero PDE flagged as degenerate.
pub fn run_discovery(
    data: &FieldGrid,
    library: &LibrarySpec,
    opts: &DiscoveryOptions,
) -> Result<(Option<Discovery>, DiscoveryReport), StageError> {
    match discover(data, library, opts) {
        Ok(d) => {
            let report = DiscoveryReport::from_discovery(&d);
            Ok((Some(d), report))
        }
        Err(Error::DegenerateData(_)) => Ok((None, DiscoveryReport::degenerate(library))),
        Err(e) => Err(StageError::new(Stage::Discovery, e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub alpha: f64,
    pub modulus: f64,
    pub nominal_modulus: Option<f64>,
    pub percent_error: Option<f64>,
}

pub fn modulus_report(alpha: f64, beam: &BeamModel, nominal: Option<f64>) -> Result<ModulusReport, StageError> {
    let modulus = modulus_from_alpha(alpha, beam).at(Stage::Material)?;
    Ok(ModulusReport {
        alpha,
        modulus,
        nominal_modulus: nominal,
        percent_error: nominal.map(|n| percent_error(modulus, n)),
    })
}

/// One ensemble run flattened for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub d: usize,
    pub i: usize,
    pub n_t: usize,
    pub ok: bool,
    pub support: Vec<String>,
    pub c: Vec<f64>,
    pub alpha: Option<f64>,
    pub modulus: Option<f64>,
    pub relative_residual: Option<f64>,
    pub hyperparameters: Option<Hyperparameters>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub max_ds: usize,
    pub runs: Vec<RunRow>,
    pub aggregate: Aggregate,
    pub alpha: Option<Summary>,
    pub modulus: Option<Summary>,
    /// Symmetric mean absolute percent error of the run moduli against the nominal value.
    pub smape: Option<f64>,
}

pub fn ensemble_report(
    result: &EnsembleResult,
    beam: Option<&BeamModel>,
    nominal: Option<f64>,
) -> Result<EnsembleReport, StageError> {
    let mut runs = Vec::with_capacity(result.runs.len());
    for run in &result.runs {
        let row = match &run.outcome {
            RunOutcome::Ok(d) => {
                let alpha = d.alpha();
                let modulus = match (alpha, beam) {
                    (Some(a), Some(b)) => modulus_from_alpha(a, b).ok(),
                    _ => None,
                };
                RunRow {
                    d: run.d,
                    i: run.i,
                    n_t: run.n_t,
                    ok: true,
                    support: d.support_names(),
                    c: d.solution.c.clone(),
                    alpha,
                    modulus,
                    relative_residual: Some(d.solution.relative_residual),
                    hyperparameters: Some(d.hyper.clone()),
                    reason: None,
                }
            }
            RunOutcome::Failed { reason } => RunRow {
                d: run.d,
                i: run.i,
                n_t: run.n_t,
                ok: false,
                support: Vec::new(),
                c: Vec::new(),
                alpha: None,
                modulus: None,
                relative_residual: None,
                hyperparameters: None,
                reason: Some(reason.clone()),
            },
        };
        runs.push(row);
    }
    let alphas: Vec<f64> = runs.iter().filter_map(|r| r.alpha).collect();
    let moduli: Vec<f64> = runs.iter().filter_map(|r| r.modulus).collect();
    let smape = match nominal {
        Some(n) if !moduli.is_empty() => Some(smape(&moduli, n).at(Stage::Material)?),
        _ => None,
    };
    Ok(EnsembleReport {
        max_ds: result.max_ds,
        alpha: Summary::of(&alphas),
        modulus: Summary::of(&moduli),
        smape,
        runs,
        aggregate: result.aggregate.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistogramRow {
    d: usize,
    i: usize,
    alpha: Option<f64>,
    #[serde(rename = "E")]
    modulus: Option<f64>,
    residual: Option<f64>,
}

/// One row per run: `d, i, alpha, E, residual`; empty cells for failed runs.
pub fn write_histogram_csv(report: &EnsembleReport, path: &Path) -> Result<(), StageError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| StageError::new(Stage::Output, format!("{}: {e}", path.display())))?;
    for r in &report.runs {
        w.serialize(HistogramRow { d: r.d, i: r.i, alpha: r.alpha, modulus: r.modulus, residual: r.relative_residual })
            .at(Stage::Output)?;
    }
    w.flush().at(Stage::Output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub modulus: f64,
    pub frobenius_rel: f64,
    pub sweep: Option<SweepResult>,
}

/// Replays the record's boundary motion through the FEM model and compares
/// over the discovery window (the whole record when no window is set).
pub fn run_simulation(
    prepared: &Prepared,
    window_cfg: Option<[f64; 2]>,
    beam: &BeamModel,
    cfg: &SimulationConfig,
    discovered: Option<f64>,
) -> Result<SimulationReport, StageError> {
    let opts = SimulationOptions {
        n_fit: cfg.n_fit,
        fourier_order: cfg.fourier_order,
        window: window_cfg.map(|[a, b]| (a, b)),
    };
    let record = match window_cfg {
        Some([_, b]) => window(&prepared.record, prepared.record.t()[0], b).at(Stage::Simulation)?,
        None => prepared.record.clone(),
    };
    let (modulus, sweep) = match cfg.modulus {
        ModulusSource::Discovered => (
            discovered.ok_or_else(|| StageError::new(Stage::Simulation, "no discovered modulus to simulate with"))?,
            None,
        ),
        ModulusSource::Explicit { value } => (value, None),
        ModulusSource::Sweep { lo, hi, n } => {
            let s = sweep_modulus(&record, beam, lo, hi, n, &opts).at(Stage::Simulation)?;
            (s.best_modulus, Some(s))
        }
    };
    let sim = simulate(&record, &beam.with_modulus(modulus), &opts).at(Stage::Simulation)?;
    Ok(SimulationReport { modulus, frobenius_rel: sim.frobenius_rel, sweep })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub message: String,
}

/// Everything a pipeline run produced. `timing` is last so that reports of
/// identical runs differ only in their final block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub input: Option<PathBuf>,
    pub failure: Option<Failure>,
    pub data: Option<DataSummary>,
    pub discovery: Option<DiscoveryReport>,
    pub modulus: Option<ModulusReport>,
    pub ensemble: Option<EnsembleReport>,
    pub simulation: Option<SimulationReport>,
    /// Seconds per stage.
    pub timing: BTreeMap<String, f64>,
}

impl Report {
    fn new(input: Option<PathBuf>) -> Self {
        Self {
            input,
            failure: None,
            data: None,
            discovery: None,
            modulus: None,
            ensemble: None,
            simulation: None,
            timing: BTreeMap::new(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.failure.as_ref().map_or(0, |f| f.stage.exit_code())
    }
}

fn timed<T>(report: &mut Report, stage: Stage, f: impl FnOnce() -> Result<T, StageError>) -> Result<T, StageError> {
    let start = Instant::now();
    let out = f();
    report.timing.insert(stage.name().into(), start.elapsed().as_secs_f64());
    out
}

/// Ingest, preprocess, discover, then the optional ensemble, modulus and
/// simulation stages. A failing stage stops the run and is recorded in the report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Report {
    let mut report = Report::new(cfg.input.clone());
    if let Err(e) = run_stages(cfg, &mut report) {
        report.failure = Some(Failure { stage: e.stage, message: e.message });
    }
    report
}

fn run_stages(cfg: &PipelineConfig, report: &mut Report) -> Result<(), StageError> {
    let library = cfg.library();
    library.validate().at(Stage::Config)?;
    let raw = timed(report, Stage::Ingest, || ingest(cfg))?;
    let prepared = timed(report, Stage::Preprocess, || preprocess(&raw, &cfg.preprocess))?;
    report.data = Some(DataSummary::of(&prepared.data));

    let (discovery, dreport) = timed(report, Stage::Discovery, || run_discovery(&prepared.data, &library, &cfg.discovery))?;
    report.discovery = Some(dreport);

    let beam = match &cfg.material {
        Some(m) => Some(m.beam(prepared.data.extent_x()).at(Stage::Material)?),
        None => None,
    };
    let nominal = cfg.material.as_ref().and_then(|m| m.nominal_modulus);

    if let Some(ens) = &cfg.ensemble {
        let result = timed(report, Stage::Ensemble, || {
            run_ensemble(&prepared.data, &library, ens.max_ds, &cfg.discovery).at(Stage::Ensemble)
        })?;
        report.ensemble = Some(ensemble_report(&result, beam.as_ref(), nominal)?);
    }

    if let (Some(beam), Some(alpha)) = (&beam, discovery.as_ref().and_then(Discovery::alpha)) {
        report.modulus = Some(timed(report, Stage::Material, || modulus_report(alpha, beam, nominal))?);
    }

    if let Some(sim) = &cfg.simulation {
        let beam = beam
            .as_ref()
            .ok_or_else(|| StageError::new(Stage::Config, "simulation needs a material block"))?;
        let discovered = report.modulus.as_ref().map(|m| m.modulus);
        let out = timed(report, Stage::Simulation, || {
            run_simulation(&prepared, cfg.preprocess.window, beam, sim, discovered)
        })?;
        report.simulation = Some(out);
    }
    Ok(())
}

/// Writes the JSON report and any CSV side files named by `cfg.output`.
pub fn emit_report(report: &Report, cfg: &OutputConfig) -> Result<(), StageError> {
    if let Some(path) = &cfg.report {
        write_json(report, path)?;
    }
    if let Some(dir) = &cfg.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| StageError::new(Stage::Output, format!("{}: {e}", dir.display())))?;
        if let Some(ens) = &report.ensemble {
            write_histogram_csv(ens, &dir.join("ensemble.csv"))?;
        }
        if let Some(sweep) = report.simulation.as_ref().and_then(|s| s.sweep.as_ref()) {
            write_sweep_csv(sweep, &dir.join("sweep.csv"))?;
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), StageError> {
    let text = serde_json::to_string_pretty(value).at(Stage::Output)?;
    std::fs::write(path, text + "\n").map_err(|e| StageError::new(Stage::Output, format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(rename = "E")]
    modulus: f64,
    frobenius_rel: f64,
}

pub fn write_sweep_csv(sweep: &SweepResult, path: &Path) -> Result<(), StageError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| StageError::new(Stage::Output, format!("{}: {e}", path.display())))?;
    for &(modulus, frobenius_rel) in &sweep.points {
        w.serialize(SweepRow { modulus, frobenius_rel }).at(Stage::Output)?;
    }
    w.flush().at(Stage::Output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let stages = [
            Stage::Config,
            Stage::Ingest,
            Stage::Preprocess,
            Stage::Discovery,
            Stage::Ensemble,
            Stage::Material,
            Stage::Simulation,
            Stage::Output,
        ];
        let mut codes: Vec<u8> = stages.iter().map(|s| s.exit_code()).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), stages.len());
        assert!(!codes.contains(&0) && !codes.contains(&1));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"input": "a.txt", "preprocess": {"window": [1e-4, 3.4e-4]}, "discovery": {"tau_hat": 3.0},
                "material": {"section": {"kind": "circle", "diameter": 6.35e-3}, "density": 2721.9}}"#,
        )
        .unwrap();
        assert_eq!(cfg.preprocess.downsample, 1);
        assert_eq!(cfg.discovery.tau_hat, 3.0);
        assert_eq!(cfg.discovery.tau, DiscoveryOptions::default().tau);
        assert!(cfg.ensemble.is_none());
        assert_eq!(cfg.library(), LibrarySpec::beam_default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"inptu": "a.txt"}"#).is_err());
    }

    #[test]
    fn modulus_sources_parse() {
        let s: SimulationConfig = serde_json::from_str(r#"{"modulus": {"source": "sweep", "lo": 1.0, "hi": 2.0, "n": 3}}"#).unwrap();
        assert_eq!(s.modulus, ModulusSource::Sweep { lo: 1.0, hi: 2.0, n: 3 });
        assert_eq!(s.n_fit, DEFAULT_N_FIT);
    }
}
