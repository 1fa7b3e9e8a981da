//! One PASS/FAIL/SKIP line per acceptance criterion.
//!
//! Set `EWSINDY_AL_FIELD` to a measured aluminium field file to enable the
//! measured-data check.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ewsindy::beamfem::{
    assemble_matrices, fem_frequencies, simulate, sweep_modulus, FemMesh, Newmark, Prescribed, SimulationOptions,
};
use ewsindy::discovery::{discover, Discovery, DiscoveryOptions};
use ewsindy::ensemble::run_ensemble;
use ewsindy::grid::{load_field, window, NoiseSpec};
use ewsindy::material::{modulus_from_alpha, BeamModel, CrossSection};
use ewsindy::preprocess::{bandpass, BandpassSpec};
use ewsindy::sparse::{default_lambda_grid, optimize_lambda};
use ewsindy::synth::{add_noise, generate_beam_data, BurstSpec, SynthConfig};
use ewsindy::weakform::{assemble, LibrarySpec, TestFunctionBasis};
use ewsindy::FieldGrid;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const E_TRUE: f64 = 6.9e10;
const WINDOW: (f64, f64) = (1e-4, 3.4e-4);
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn al_beam() -> BeamModel {
    BeamModel::new(CrossSection::Circle { diameter: 6.35e-3 }, 0.097, 2721.9, Some(E_TRUE)).unwrap()
}

fn al_record() -> FieldGrid {
    let mesh = FemMesh::new(194, 5e-4).unwrap();
    let cfg = SynthConfig::new(BurstSpec::new(1e4), 1.6e-7, 2e-3);
    generate_beam_data(&al_beam(), &mesh, &cfg).unwrap()
}

fn beam_only(d: &Discovery) -> bool {
    d.support_names() == ["w_xxxx"]
}

fn modulus(d: &Discovery) -> Option<f64> {
    d.alpha().and_then(|a| modulus_from_alpha(a, &al_beam()).ok())
}

fn noise_free_round_trip(record: &FieldGrid) -> Outcome {
    let start = Instant::now();
    let data = window(record, WINDOW.0, WINDOW.1).unwrap();
    let d = match discover(&data, &LibrarySpec::beam_default(), &DiscoveryOptions::default()) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let truth = al_beam().alpha().unwrap();
    let alpha = d.alpha().unwrap_or(f64::NAN);
    let err = (alpha - truth).abs() / truth;
    let secs = start.elapsed().as_secs_f64();
    check(
        beam_only(&d) && err < 0.01 && secs < 30.0,
        format!("{}; alpha error {:.3}%; {secs:.1} s", d.pde_text(), 100.0 * err),
    )
}

fn noisy_round_trip(record: &FieldGrid) -> Outcome {
    let lib = LibrarySpec::beam_default();
    let mut correct = 0;
    let mut worst: f64 = 0.0;
    let mut all_close = true;
    for seed in SEEDS {
        let noisy = add_noise(record, NoiseSpec::Gaussian { sigma_rel: 0.02 }, seed).unwrap();
        let data = window(&noisy, WINDOW.0, WINDOW.1).unwrap();
        let Ok(d) = discover(&data, &lib, &DiscoveryOptions::default()) else { continue };
        if !beam_only(&d) {
            continue;
        }
        correct += 1;
        let err = modulus(&d).map_or(f64::INFINITY, |e| (e - E_TRUE).abs() / E_TRUE);
        worst = worst.max(err);
        all_close &= err < 0.10;
    }
    check(
        correct >= 4 && all_close,
        format!("{correct}/5 seeds recover w_xxxx; worst E error {:.2}%", 100.0 * worst),
    )
}

fn ensemble_consistency(record: &FieldGrid) -> Outcome {
    let lib = LibrarySpec::beam_default();
    let opts = DiscoveryOptions::default();
    let noisy = add_noise(record, NoiseSpec::Gaussian { sigma_rel: 0.02 }, SEEDS[0]).unwrap();
    let filtered = bandpass(&noisy, &BandpassSpec::new(4e3, 1.6e4)).unwrap();
    let data = window(&filtered, WINDOW.0, WINDOW.1).unwrap();
    let single = match discover(&data, &lib, &opts) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("full-data discovery: {e}")),
    };
    let ens = match run_ensemble(&data, &lib, 10, &opts) {
        Ok(e) => e,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let alphas: Vec<f64> = ens.successful().filter(|d| beam_only(d)).filter_map(Discovery::alpha).collect();
    let es: Vec<f64> = ens.successful().filter_map(modulus).collect();
    let (lo, hi) = alphas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    let full = single.alpha().unwrap_or(f64::NAN);
    let mean = es.iter().sum::<f64>() / es.len() as f64;
    let std = (es.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (es.len() as f64 - 1.0)).sqrt();
    check(
        ens.runs.len() == 55
            && ens.aggregate.modal_support == ["w_xxxx"]
            && (lo..=hi).contains(&full)
            && std / mean < 0.05,
        format!(
            "{} runs ({} failed); modal {:?} in {:.0}% of runs; full-data alpha {full:.4} in [{lo:.4}, {hi:.4}]; std(E)/mean(E) = {:.3}%",
            ens.runs.len(),
            ens.aggregate.failed,
            ens.aggregate.modal_support,
            100.0 * ens.aggregate.support_agreement,
            100.0 * std / mean
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let lib = LibrarySpec::beam_default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let (nx, nt) = (rng.random_range(16..=64), rng.random_range(16..=64));
        let grid = common::random_grid(nx, nt, case);
        let basis = TestFunctionBasis {
            p_x: rng.random_range(5..=10),
            p_t: rng.random_range(3..=10),
            m_x: rng.random_range(2..=(nx - 1) / 3),
            m_t: rng.random_range(2..=(nt - 1) / 3),
            s_x: rng.random_range(1..=4),
            s_t: rng.random_range(1..=4),
        };
        let sys = assemble(&grid, &lib, &basis).unwrap();
        let (b, g) = common::oracle(&grid, &lib, &basis);
        let want = common::stacked(&b, &g);
        worst = worst.max((common::stacked(&sys.b, &sys.g) - &want).norm() / want.norm());
    }
    check(worst < 1e-10, format!("20 fields; worst relative Frobenius error {worst:.2e}"))
}

fn mstls_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = default_lambda_grid();
    let mut hits = 0;
    for _ in 0..100 {
        let mut g = DMatrix::from_fn(200, 7, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut col in g.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let j = rng.random_range(0..7);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let clean = g.column(j) * (sign * rng.random_range(0.5..2.0));
        let noise = DVector::from_fn(200, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = &clean + &noise * (1e-3 * clean.norm() / noise.norm());
        let sol = optimize_lambda(&g, &b, &grid).unwrap();
        let best = sol.loss_curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hat = sol.loss_curve.iter().find(|p| p.1 == best).map(|p| p.0);
        if sol.support == [j] && hat == Some(sol.lambda_hat) {
            hits += 1;
        }
    }
    check(hits == 100, format!("{hits}/100 planted supports recovered at the loss minimum"))
}

fn pinned_error(n_elem: usize) -> f64 {
    let beam = BeamModel::new(CrossSection::Circle { diameter: 6.35e-3 }, 0.1, 2721.9, Some(E_TRUE)).unwrap();
    let mesh = FemMesh::uniform(n_elem, 0.1).unwrap();
    let fixed = [FemMesh::deflection_dof(0), FemMesh::deflection_dof(n_elem)];
    let f = fem_frequencies(&mesh, &beam, &fixed, 3).unwrap();
    (1..=3)
        .map(|n| {
            let exact = (n as f64 * PI).powi(2) / (2.0 * PI) * (beam.alpha().unwrap() / 0.1f64.powi(4)).sqrt();
            (f[n - 1] - exact).abs() / exact
        })
        .fold(0.0, f64::max)
}

fn fem_eigenfrequencies() -> Outcome {
    let fine = pinned_error(100);
    let ratio = pinned_error(8) / pinned_error(16);
    check(
        fine < 1e-3 && ratio >= 8.0,
        format!("100 elements: worst error {:.2e}; halving dx improves error {ratio:.1}x", fine),
    )
}

fn newmark_energy() -> Outcome {
    let beam = al_beam();
    let mesh = FemMesh::uniform(100, 0.097).unwrap();
    let (m, k) = assemble_matrices(&mesh, &beam).unwrap();
    let fixed = [FemMesh::deflection_dof(0), FemMesh::deflection_dof(100)];
    let stepper = Newmark::new(&m, &k, None, &fixed, 1e-6).unwrap();
    let d0 = DVector::from_iterator(
        stepper.free().len(),
        stepper.free().iter().map(|&dof| {
            let x = mesh.node_x(dof / 2) / 0.097;
            if dof % 2 == 0 {
                (PI * x).sin() + 0.2 * (5.0 * PI * x).sin()
            } else {
                (PI * (PI * x).cos() + PI * (5.0 * PI * x).cos()) / 0.097
            }
        }),
    );
    let n = d0.len();
    let p = Prescribed::zeros(2);
    let mut state = stepper.initial_state(d0, DVector::zeros(n), &p).unwrap();
    let e0 = stepper.energy(&state);
    for _ in 0..1000 {
        stepper.step(&mut state, &p);
    }
    let drift = (stepper.energy(&state) - e0).abs() / e0;
    check(drift < 1e-8, format!("relative drift {drift:.2e} over 1000 steps"))
}

fn modulus_golden() -> Outcome {
    let al = modulus_from_alpha(58.5218, &al_beam()).unwrap();
    let ie_beam = BeamModel::new(CrossSection::Rectangle { width: 4.18e-3, thickness: 2.84e-3 }, 0.056, 1301.4, None)
        .unwrap();
    let ie = modulus_from_alpha(0.497308, &ie_beam).unwrap();
    // the reported values carry five figures of unstated input rounding
    let (ea, ei) = ((al - 6.3206e10).abs() / 6.3206e10, (ie - 9.6292e8).abs() / 9.6292e8);
    check(
        ea < 5e-5 && ei < 5e-5,
        format!("Al {al:.5e} Pa (rel. dev. {ea:.1e}); IE {ie:.5e} Pa (rel. dev. {ei:.1e})"),
    )
}

fn sweep_self_consistency(record: &FieldGrid) -> Outcome {
    let start = Instant::now();
    let data = window(record, 0.0, WINDOW.1).unwrap();
    let opts = SimulationOptions { window: Some(WINDOW), ..SimulationOptions::default() };
    let (lo, hi, n) = (0.95 * E_TRUE, 1.05 * E_TRUE, 21);
    let sweep = match sweep_modulus(&data, &al_beam(), lo, hi, n, &opts) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let step = (hi - lo) / (n - 1) as f64;
    let off = (sweep.best_modulus - E_TRUE).abs() / step;
    check(
        off <= 1.0 + 1e-9,
        format!(
            "argmin {:.4e} Pa ({off:.2} steps from truth), error {:.4}; {:.1} s",
            sweep.best_modulus,
            sweep.best_error,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn measured_aluminium() -> Outcome {
    let Some(path) = std::env::var_os("EWSINDY_AL_FIELD") else {
        return Outcome::Skip("EWSINDY_AL_FIELD not set".into());
    };
    let record = match load_field(&path) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("{}: {e}", path.to_string_lossy())),
    };
    let data = match window(&record, 5.5984e-4, 7.9984e-4) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let d = match discover(&data, &LibrarySpec::beam_default(), &DiscoveryOptions::default()) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let alpha = d.alpha().unwrap_or(f64::NAN);
    let residual = d.solution.relative_residual;
    let beam = al_beam().with_modulus(6.3206e10);
    let sim_opts = SimulationOptions { window: Some((5.5984e-4, 7.9984e-4)), ..SimulationOptions::default() };
    let frob = match simulate(&window(&record, 0.0, 7.9984e-4).unwrap(), &beam, &sim_opts) {
        Ok(s) => s.frobenius_rel,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    check(
        beam_only(&d)
            && (alpha - 58.5218).abs() < 0.02 * 58.5218
            && (residual - 0.171).abs() <= 0.01
            && (frob - 0.1847).abs() <= 0.01,
        format!("{}; residual {residual:.4}; FEM error {frob:.5}", d.pde_text()),
    )
}

fn main() -> ExitCode {
    let suite_start = Instant::now();
    let record = al_record();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("synthetic round trip, noise-free", Box::new(|| noise_free_round_trip(&record))),
        ("synthetic round trip, 2% noise", Box::new(|| noisy_round_trip(&record))),
        ("ensemble consistency", Box::new(|| ensemble_consistency(&record))),
        ("weak-form oracle equivalence", Box::new(oracle_equivalence)),
        ("MSTLS exactness", Box::new(mstls_exactness)),
        ("FEM eigenfrequency accuracy", Box::new(fem_eigenfrequencies)),
        ("Newmark energy conservation", Box::new(newmark_energy)),
        ("modulus golden values", Box::new(modulus_golden)),
        ("modulus sweep self-consistency", Box::new(|| sweep_self_consistency(&record))),
        ("measured aluminium field", Box::new(measured_aluminium)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Outcome::Pass(d) => println!("PASS  {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP  {name}: {d}"),
        }
    }
    let secs = suite_start.elapsed().as_secs_f64();
    println!("acceptance: {failed} failed, {secs:.1} s total");
    if failed == 0 && secs < 600.0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
