use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ewsindy::beamfem::{simulate, sweep_modulus, FemMesh, SimulationOptions};
use ewsindy::grid::{save_field, window, NoiseSpec};
use ewsindy::material::{natural_frequencies, BeamModel, BoundaryKind, CrossSection};
use ewsindy::synth::{generate_beam_data, BurstSpec, FarEnd, SynthConfig};
use ewsindy::weakform::Corner;
use ewsindy_cli::{
    emit_report, ensemble_report, ingest, modulus_report, preprocess, run_discovery, run_pipeline, write_histogram_csv,
    write_json, write_sweep_csv, EnsembleConfig, MaterialConfig, PipelineConfig, SimulationConfig, Stage, StageError,
};

#[derive(Parser)]
#[command(name = "ewsindy", version, about = "Weak-form sparse PDE discovery and modulus recovery for beam vibration fields")]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Downsample, bandpass and window a field file.
    Preprocess {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Discover a sparse PDE from a field file.
    Discover {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[command(flatten)]
        disc: DiscArgs,
        /// JSON solution record.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Discovery on every temporal subsample up to `--max-ds`.
    Ensemble {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[command(flatten)]
        disc: DiscArgs,
        #[command(flatten)]
        mat: MatArgs,
        #[arg(long)]
        max_ds: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Per-run CSV (d, i, alpha, E, residual); defaults to `--out` with a .csv extension.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Young's modulus from a beam coefficient.
    Modulus {
        #[arg(long, allow_negative_numbers = true)]
        alpha: f64,
        #[command(flatten)]
        mat: MatArgs,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Analytic natural frequencies.
    Modes {
        #[command(flatten)]
        mat: MatArgs,
        #[arg(long, alias = "E")]
        modulus: Option<f64>,
        #[arg(long, default_value = "clamped-free")]
        bc: BoundaryKind,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Replay measured boundary motion through the FEM model and compare.
    Simulate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[command(flatten)]
        mat: MatArgs,
        #[arg(long, alias = "E")]
        modulus: f64,
        #[command(flatten)]
        fit: FitArgs,
        /// Simulated field file.
        #[arg(long, value_name = "FILE")]
        field_out: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// FEM mismatch over a uniform grid of moduli.
    SweepE {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreArgs,
        #[command(flatten)]
        mat: MatArgs,
        #[arg(long)]
        e_lo: f64,
        #[arg(long)]
        e_hi: f64,
        #[arg(long, default_value_t = 21)]
        n: usize,
        #[command(flatten)]
        fit: FitArgs,
        /// CSV of (E, frobenius_rel).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a base-driven beam field with the FEM model.
    Synth(SynthArgs),
    /// Run the configured stages and write a report.
    Pipeline {
        #[arg(long = "in", value_name = "FILE")]
        input: Option<PathBuf>,
        #[command(flatten)]
        pre: PreArgs,
        #[command(flatten)]
        disc: DiscArgs,
        #[command(flatten)]
        mat: MatArgs,
        #[arg(long)]
        max_ds: Option<usize>,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        csv_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Field file.
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct PreArgs {
    #[arg(long)]
    downsample: Option<usize>,
    /// Passband in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    band: Option<Vec<f64>>,
    #[arg(long)]
    taper: Option<f64>,
    /// Discovery window in seconds.
    #[arg(long, num_args = 2, value_names = ["START", "END"])]
    window: Option<Vec<f64>>,
}

#[derive(Args)]
struct DiscArgs {
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_hat: Option<f64>,
    /// Corner frequencies in cycles per sample, bypassing the corner finder.
    #[arg(long, num_args = 2, value_names = ["X", "T"])]
    corner: Option<Vec<f64>>,
    /// Half-supports in samples.
    #[arg(long, num_args = 2, value_names = ["MX", "MT"])]
    support: Option<Vec<usize>>,
    #[arg(long, num_args = 2, value_names = ["PX", "PT"])]
    order: Option<Vec<usize>>,
    #[arg(long, num_args = 2, value_names = ["SX", "ST"])]
    strides: Option<Vec<usize>>,
    /// Assemble on the unscaled field.
    #[arg(long)]
    no_rescale: bool,
}

#[derive(Args)]
struct MatArgs {
    /// e.g. `circle:d=6.35e-3` or `rect:w=4.18e-3,h=2.84e-3`.
    #[arg(long)]
    section: Option<CrossSection>,
    #[arg(long, alias = "rho")]
    density: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    nominal: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    n_fit: Option<usize>,
    #[arg(long)]
    fourier_order: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FarEndArg {
    Absorbing,
    Free,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value = "circle:d=6.35e-3")]
    section: CrossSection,
    #[arg(long, alias = "rho", default_value_t = 2721.9)]
    density: f64,
    #[arg(long, alias = "E", default_value_t = 6.9e10)]
    modulus: f64,
    #[arg(long, default_value_t = 194)]
    n_elem: usize,
    #[arg(long, default_value_t = 5e-4)]
    dx: f64,
    #[arg(long, default_value_t = 1.6e-7)]
    dt: f64,
    #[arg(long, default_value_t = 2e-3)]
    t_end: f64,
    /// Burst centre frequency, Hz.
    #[arg(long, default_value_t = 1e4)]
    fc: f64,
    #[arg(long, default_value_t = 5)]
    cycles: u32,
    /// Noise standard deviation as a fraction of the peak magnitude.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "absorbing")]
    far_end: FarEndArg,
}

fn pair<T: Copy>(v: &Option<Vec<T>>) -> Option<[T; 2]> {
    v.as_ref().map(|v| [v[0], v[1]])
}

impl InputArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
    }
}

impl PreArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let p = &mut cfg.preprocess;
        if let Some(d) = self.downsample {
            p.downsample = d;
        }
        if let Some(b) = pair(&self.band) {
            p.band = Some(b);
        }
        if let Some(t) = self.taper {
            p.taper = t;
        }
        if let Some(w) = pair(&self.window) {
            p.window = Some(w);
        }
    }
}

impl DiscArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let d = &mut cfg.discovery;
        if let Some(t) = self.tau {
            d.tau = t;
        }
        if let Some(t) = self.tau_hat {
            d.tau_hat = t;
        }
        if let Some([x, t]) = pair(&self.corner) {
            d.corner = Corner::Given { x, t };
        }
        if let Some([a, b]) = pair(&self.support) {
            d.support = Some((a, b));
        }
        if let Some([a, b]) = pair(&self.order) {
            d.order = Some((a, b));
        }
        if let Some([a, b]) = pair(&self.strides) {
            d.strides = Some((a, b));
        }
        if self.no_rescale {
            d.rescale = false;
        }
    }
}

impl MatArgs {
    /// Merges flags over the config's material block; `None` when neither
    /// supplies both a section and a density.
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<(), StageError> {
        let base = cfg.material.clone();
        let section = self.section.or(base.as_ref().map(|m| m.section));
        let density = self.density.or(base.as_ref().map(|m| m.density));
        let any = self.section.is_some() || self.density.is_some() || self.length.is_some() || self.nominal.is_some();
        match (section, density) {
            (Some(section), Some(density)) => {
                cfg.material = Some(MaterialConfig {
                    section,
                    density,
                    length: self.length.or(base.as_ref().and_then(|m| m.length)),
                    nominal_modulus: self.nominal.or(base.as_ref().and_then(|m| m.nominal_modulus)),
                });
                Ok(())
            }
            _ if any => Err(StageError::new(Stage::Config, "material needs both --section and --density")),
            _ => Ok(()),
        }
    }

    fn require(cfg: &PipelineConfig) -> Result<&MaterialConfig, StageError> {
        cfg.material
            .as_ref()
            .ok_or_else(|| StageError::new(Stage::Config, "material properties required (--section, --density)"))
    }
}

impl FitArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.n_fit.is_none() && self.fourier_order.is_none() {
            return;
        }
        let sim = cfg.simulation.get_or_insert_with(SimulationConfig::default);
        if let Some(n) = self.n_fit {
            sim.n_fit = n;
        }
        if let Some(k) = self.fourier_order {
            sim.fourier_order = k;
        }
    }

    fn options(cfg: &PipelineConfig) -> SimulationOptions {
        let sim = cfg.simulation.clone().unwrap_or_default();
        SimulationOptions {
            n_fit: sim.n_fit,
            fourier_order: sim.fourier_order,
            window: cfg.preprocess.window.map(|[a, b]| (a, b)),
        }
    }
}

fn csv_beside(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

fn write_text(path: &Path, text: &str) -> Result<(), StageError> {
    std::fs::write(path, text).map_err(|e| StageError::new(Stage::Output, format!("{}: {e}", path.display())))
}

/// Record truncated at the window end, so a simulation from rest sees the lead-in.
fn simulation_record(cfg: &PipelineConfig) -> Result<ewsindy::FieldGrid, StageError> {
    let raw = ingest(cfg)?;
    let prepared = preprocess(&raw, &cfg.preprocess)?;
    match cfg.preprocess.window {
        Some([_, b]) => window(&prepared.record, prepared.record.t()[0], b).map_err(|e| StageError::new(Stage::Preprocess, e)),
        None => Ok(prepared.record),
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Preprocess { input, pre, out } => {
            input.apply(&mut cfg);
            pre.apply(&mut cfg);
            let raw = ingest(&cfg)?;
            let prepared = preprocess(&raw, &cfg.preprocess)?;
            save_field(&prepared.data, &out).map_err(|e| StageError::new(Stage::Output, e))?;
            println!("{} x {} samples -> {}", prepared.data.n_x(), prepared.data.n_t(), out.display());
        }
        Command::Discover { input, pre, disc, out } => {
            input.apply(&mut cfg);
            pre.apply(&mut cfg);
            disc.apply(&mut cfg);
            let raw = ingest(&cfg)?;
            let prepared = preprocess(&raw, &cfg.preprocess)?;
            let (_, report) = run_discovery(&prepared.data, &cfg.library(), &cfg.discovery)?;
            println!("{}", report.pde);
            if let Some(r) = report.relative_residual {
                println!("relative residual {}", ewsindy::discovery::fmt_sig6(r));
            }
            if let Some(path) = out {
                write_json(&report, &path)?;
            }
        }
        Command::Ensemble { input, pre, disc, mat, max_ds, out, csv } => {
            input.apply(&mut cfg);
            pre.apply(&mut cfg);
            disc.apply(&mut cfg);
            mat.apply(&mut cfg)?;
            if let Some(m) = max_ds {
                cfg.ensemble = Some(EnsembleConfig { max_ds: m });
            }
            let max_ds = cfg.ensemble.as_ref().map_or(10, |e| e.max_ds);
            let raw = ingest(&cfg)?;
            let prepared = preprocess(&raw, &cfg.preprocess)?;
            let beam = match &cfg.material {
                Some(m) => Some(m.beam(prepared.data.extent_x()).map_err(|e| StageError::new(Stage::Material, e))?),
                None => None,
            };
            let result = ewsindy::ensemble::run_ensemble(&prepared.data, &cfg.library(), max_ds, &cfg.discovery)
                .map_err(|e| StageError::new(Stage::Ensemble, e))?;
            let nominal = cfg.material.as_ref().and_then(|m| m.nominal_modulus);
            let report = ensemble_report(&result, beam.as_ref(), nominal)?;
            write_json(&report, &out)?;
            write_histogram_csv(&report, &csv.unwrap_or_else(|| csv_beside(&out)))?;
            let agg = &report.aggregate;
            println!(
                "{} runs, {} failed; modal support {:?} in {:.1}% of runs",
                report.runs.len(),
                agg.failed,
                agg.modal_support,
                100.0 * agg.support_agreement
            );
            if let Some(s) = &report.modulus {
                println!("E mean {:e} median {:e} std {:e}", s.mean, s.median, s.std);
            }
        }
        Command::Modulus { alpha, mat, out } => {
            mat.apply(&mut cfg)?;
            let m = MatArgs::require(&cfg)?;
            let beam = m.beam(m.length.unwrap_or(1.0)).map_err(|e| StageError::new(Stage::Material, e))?;
            let report = modulus_report(alpha, &beam, m.nominal_modulus)?;
            println!("E = {:e} Pa", report.modulus);
            if let Some(p) = report.percent_error {
                println!("error vs nominal {p:.4}%");
            }
            if let Some(path) = out {
                write_json(&report, &path)?;
            }
        }
        Command::Modes { mat, modulus, bc, n, out } => {
            mat.apply(&mut cfg)?;
            let m = MatArgs::require(&cfg)?;
            let length = m.length.ok_or_else(|| StageError::new(Stage::Config, "modes needs --length"))?;
            let e = modulus
                .or(m.nominal_modulus)
                .ok_or_else(|| StageError::new(Stage::Config, "modes needs --modulus or --nominal"))?;
            let beam = BeamModel::new(m.section, length, m.density, Some(e)).map_err(|e| StageError::new(Stage::Material, e))?;
            let f = natural_frequencies(&beam, bc, n).map_err(|e| StageError::new(Stage::Material, e))?;
            let mut text = String::from("mode,frequency_hz\n");
            for (k, v) in f.iter().enumerate() {
                text.push_str(&format!("{},{}\n", k + 1, v));
            }
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Simulate { input, pre, mat, modulus, fit, field_out, out } => {
            input.apply(&mut cfg);
            pre.apply(&mut cfg);
            mat.apply(&mut cfg)?;
            fit.apply(&mut cfg);
            let record = simulation_record(&cfg)?;
            let m = MatArgs::require(&cfg)?;
            let beam = m.beam(record.extent_x()).map_err(|e| StageError::new(Stage::Material, e))?;
            let sim = simulate(&record, &beam.with_modulus(modulus), &FitArgs::options(&cfg))
                .map_err(|e| StageError::new(Stage::Simulation, e))?;
            println!("relative Frobenius error {}", ewsindy::discovery::fmt_sig6(sim.frobenius_rel));
            if let Some(path) = field_out {
                save_field(&sim.field, &path).map_err(|e| StageError::new(Stage::Output, e))?;
            }
            if let Some(path) = out {
                let report = ewsindy_cli::SimulationReport { modulus, frobenius_rel: sim.frobenius_rel, sweep: None };
                write_json(&report, &path)?;
            }
        }
        Command::SweepE { input, pre, mat, e_lo, e_hi, n, fit, out } => {
            input.apply(&mut cfg);
            pre.apply(&mut cfg);
            mat.apply(&mut cfg)?;
            fit.apply(&mut cfg);
            let record = simulation_record(&cfg)?;
            let m = MatArgs::require(&cfg)?;
            let beam = m.beam(record.extent_x()).map_err(|e| StageError::new(Stage::Material, e))?;
            let sweep = sweep_modulus(&record, &beam, e_lo, e_hi, n, &FitArgs::options(&cfg))
                .map_err(|e| StageError::new(Stage::Simulation, e))?;
            println!(
                "best E = {:e} Pa, relative Frobenius error {}",
                sweep.best_modulus,
                ewsindy::discovery::fmt_sig6(sweep.best_error)
            );
            if let Some(path) = out {
                write_sweep_csv(&sweep, &path)?;
            }
        }
        Command::Synth(a) => {
            let beam = BeamModel::new(a.section, a.n_elem as f64 * a.dx, a.density, Some(a.modulus))
                .map_err(|e| StageError::new(Stage::Config, e))?;
            let mesh = FemMesh::new(a.n_elem, a.dx).map_err(|e| StageError::new(Stage::Config, e))?;
            let mut burst = BurstSpec::new(a.fc);
            burst.cycles = a.cycles;
            let mut sc = SynthConfig::new(burst, a.dt, a.t_end);
            sc.noise = if a.noise > 0.0 { NoiseSpec::Gaussian { sigma_rel: a.noise } } else { NoiseSpec::None };
            sc.seed = a.seed;
            sc.far_end = match a.far_end {
                FarEndArg::Absorbing => FarEnd::Absorbing,
                FarEndArg::Free => FarEnd::Free,
            };
            let field = generate_beam_data(&beam, &mesh, &sc).map_err(|e| StageError::new(Stage::Simulation, e))?;
            save_field(&field, &a.out).map_err(|e| StageError::new(Stage::Output, e))?;
            println!("{} x {} samples -> {}", field.n_x(), field.n_t(), a.out.display());
        }
        Command::Pipeline { input, pre, disc, mat, max_ds, report, csv_dir } => {
            if let Some(p) = input {
                cfg.input = Some(p);
            }
            pre.apply(&mut cfg);
            disc.apply(&mut cfg);
            mat.apply(&mut cfg)?;
            if let Some(m) = max_ds {
                cfg.ensemble = Some(EnsembleConfig { max_ds: m });
            }
            if report.is_some() {
                cfg.output.report = report;
            }
            if csv_dir.is_some() {
                cfg.output.csv_dir = csv_dir;
            }
            let out = run_pipeline(&cfg);
            emit_report(&out, &cfg.output)?;
            if cfg.output.report.is_none() {
                println!("{}", serde_json::to_string_pretty(&out).map_err(|e| StageError::new(Stage::Output, e))?);
            } else if let Some(d) = &out.discovery {
                println!("{}", d.pde);
            }
            if let Some(f) = out.failure {
                return Err(StageError::new(f.stage, f.message));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code())
        }
    }
}
