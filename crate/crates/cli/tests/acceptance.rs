// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::time::Instant;

use rand::Rng;

use qemforge::decomposition::{
    analytic_decomposition, decompose_all_minimal, recovery_generator, sampling_tables, AnalyticNoise,
};
use qemforge::extrapolation::{extrapolate_values, richardson_coefficients};
use qemforge::linalg::{expm, identity, matmul, norm1, trace_distance, RMatrix};
use qemforge::lindblad::{
    evolve_checkpoints, evolve_effective, evolve_ideal, evolve_noisy, evolve_rescaled, Convention, DensityState,
    EvolutionConfig, Generator, HamiltonianSpec, LindbladTerm, NoiseModel,
};
use qemforge::models::{build_tfim, observable_nn_correlation, relax_dephase, LatticeSpec};
use qemforge::pauli::{Pauli, PauliString};
use qemforge::stochastic::{continuous_reference, jump_time, trajectory_rng, Backend, Engine, Protocol};

use qemforge_cli::config::{ExperimentConfig, ModelConfig, NoiseConfig, NoiseSpec, RunConfig};
use qemforge_cli::recipes::{
    cost_rows, fig4_checks, fig4_cost_table, run_panel, single_qubit_decompositions, CostStrategy, Scale,
};
use qemforge_cli::{run_experiment, ResultTable};

const TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn single(p: Pauli, c: f64) -> HamiltonianSpec {
    HamiltonianSpec::new(1, vec![PauliString::new(vec![p], c)]).unwrap()
}

fn cfg(t: f64) -> EvolutionConfig {
    EvolutionConfig::until(t).with_tolerance(TOL)
}

fn analytic_dynamics() -> Outcome {
    let lam = 0.7;
    let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1 / lam).collect();
    let zero = HamiltonianSpec::zero(1);
    let mut worst: f64 = 0.0;

    let deph = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, lam)]).unwrap();
    let g = Generator::new(&zero, &deph, Convention::Gksl).unwrap();
    let states = evolve_checkpoints(&g, &DensityState::plus_state(1), &times, TOL, f64::INFINITY).unwrap();
    for (t, s) in times.iter().zip(&states) {
        worst = worst.max((s.expectation(&Pauli::X.matrix()) - (-2.0 * lam * t).exp()).abs());
    }

    let ad = NoiseModel::new(1, vec![LindbladTerm::amplitude_damping(0, lam)]).unwrap();
    let g = Generator::new(&zero, &ad, Convention::Gksl).unwrap();
    let states = evolve_checkpoints(&g, &DensityState::computational(1, 1), &times, TOL, f64::INFINITY).unwrap();
    for (t, s) in times.iter().zip(&states) {
        worst = worst.max((s.expectation(&Pauli::Z.matrix()) - (1.0 - 2.0 * (-lam * t).exp())).abs());
    }
    outcome(worst <= 1e-8, format!("max deviation {worst:.2e} (need <= 1e-8)"))
}

fn rescaling_identity() -> Outcome {
    let mut rng = trajectory_rng(17, 0);
    let mut terms = Vec::new();
    for k in 1..16 {
        terms.push(PauliString::from_index(2, k, rng.random_range(-1.0..1.0)));
    }
    let h = HamiltonianSpec::new(2, terms).unwrap();
    let noise = NoiseModel::new(
        2,
        vec![LindbladTerm::dephasing(0, 0.3), LindbladTerm::dephasing(1, 0.2)],
    )
    .unwrap();
    let rho = DensityState::plus_state(2);
    let t = 1.5;
    let mut worst: f64 = 0.0;
    for r in [1.5, 2.0] {
        let a = evolve_rescaled(&rho, &h, &noise, r, &cfg(t)).unwrap();
        let b = evolve_noisy(&rho, &h, &noise.scaled(r), &cfg(t)).unwrap();
        worst = worst.max(trace_distance(&a.matrix, &b.matrix));
    }
    outcome(worst <= 1e-8, format!("max trace distance {worst:.2e} (need <= 1e-8)"))
}

fn recovery_step_order() -> Outcome {
    let lam = 1.0;
    let coherent = |p| NoiseModel::noiseless(1).with_coherent(single(p, lam)).unwrap();
    let cases = [
        (
            "dephasing",
            AnalyticNoise::Dephasing,
            NoiseModel::new(1, vec![LindbladTerm::dephasing(0, lam)]).unwrap(),
        ),
        (
            "depolarizing",
            AnalyticNoise::Depolarizing,
            NoiseModel::new(1, LindbladTerm::depolarizing(0, lam)).unwrap(),
        ),
        (
            "amplitude damping",
            AnalyticNoise::AmplitudeDamping,
            NoiseModel::new(1, vec![LindbladTerm::amplitude_damping(0, lam)]).unwrap(),
        ),
        ("crosstalk", AnalyticNoise::CoherentX, coherent(Pauli::X)),
    ];
    let steps = [1e-2 / lam, 5e-3 / lam, 2.5e-3 / lam];
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, kind, noise) in cases {
        let l_noise = Generator::new(&HamiltonianSpec::zero(1), &noise, Convention::Gksl)
            .unwrap()
            .transfer_matrix(0.0);
        let g_q = analytic_decomposition(kind, lam).reconstruct();
        let errs: Vec<f64> = steps
            .iter()
            .map(|&dt| {
                let e_n = expm(&(&l_noise * dt));
                let e_q: RMatrix = identity::<f64>(4) + &g_q * dt;
                norm1(&(matmul(&e_q, &e_n) - identity::<f64>(4)))
            })
            .collect();
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let ok = orders.iter().all(|p| (p - 2.0).abs() <= 0.2);
        passed &= ok;
        parts.push(format!("{name} {:.3}/{:.3}", orders[0], orders[1]));
    }
    outcome(passed, format!("orders {} (need 2 +- 0.2)", parts.join(", ")))
}

fn tfim_config() -> ExperimentConfig {
    let two_pi = 2.0 * std::f64::consts::PI;
    ExperimentConfig {
        model: ModelConfig {
            preset: Some("tfim".into()),
            qubits: Some(2),
            j: Some(two_pi * 4.0),
            h: Some(two_pi * 4.0),
            ..Default::default()
        },
        noise: NoiseConfig {
            exp: Some(NoiseSpec {
                preset: "relax_dephase".into(),
                rates: vec![0.04, 0.04],
            }),
            ..Default::default()
        },
        run: RunConfig {
            methods: Some(vec!["stochastic".into(), "infinite_sample".into()]),
            samples: Some(100_000),
            seed: Some(4),
            t_end: Some(2.0),
            points: Some(8),
            ..Default::default()
        },
    }
}

fn unbiasedness(table: &ResultTable) -> Outcome {
    let ideal = table.series("ideal");
    let stoch = table.series("stochastic");
    let exact = table.series("infinite_sample");
    if stoch.len() != 8 || ideal.len() != 8 || exact.len() != 8 {
        return outcome(false, "missing series");
    }
    let worst_z = stoch
        .iter()
        .zip(&ideal)
        .map(|(s, i)| (s.mean - i.mean).abs() / s.stderr)
        .fold(0.0, f64::max);
    let last = stoch.last().unwrap();
    let expected = exact.last().unwrap().mean_jumps;
    let sigma = (expected / 100_000.0).sqrt();
    let jump_z = (last.mean_jumps - expected).abs() / sigma;
    outcome(
        worst_z <= 5.0 && jump_z <= 3.0,
        format!(
            "max |mean - ideal|/stderr {worst_z:.2} (need <= 5); jumps {:.4} vs {expected:.4}, {jump_z:.2} sigma (need <= 3)",
            last.mean_jumps
        ),
    )
}

fn equivalence() -> Outcome {
    let t = 1.0;
    let lam = 0.5;
    let h = single(Pauli::Y, 1.0);
    let noise = NoiseModel::new(1, vec![LindbladTerm::dephasing(0, lam)]).unwrap();
    let z = Pauli::Z.matrix();
    let rho = DensityState::computational(1, 0);
    let recovery = recovery_generator(&noise, Convention::Gksl).unwrap();
    let decomps = decompose_all_minimal(&recovery).unwrap();
    let protocol = Protocol::evolution(&h, &noise, decomps, t, 1, vec![z.clone()], Convention::Gksl).unwrap();
    let engine = Engine::new(protocol, &rho, Backend::Auto).unwrap();
    let batch = engine.run_batch(100_000, 5, 1).unwrap();
    let est = &batch.checkpoints[0].estimates[0];

    let g = Generator::new(&h, &noise, Convention::Gksl).unwrap();
    let reference = |slices: usize| {
        continuous_reference(&rho, &g, &recovery, t / slices as f64, t, std::slice::from_ref(&z), TOL).unwrap()[0]
    };
    let fine = reference(2048);
    let z_agree = (est.mean - fine).abs() / est.stderr;

    let ideal = evolve_ideal(&rho, &h, &cfg(t)).unwrap().expectation(&z);
    let (xs, ys): (Vec<f64>, Vec<f64>) = [32usize, 64, 128, 256]
        .iter()
        .map(|&n| ((t / n as f64).ln(), (reference(n) - ideal).abs().ln()))
        .unzip();
    let slope = fit_slope(&xs, &ys);
    outcome(
        z_agree <= 3.0 && (slope - 1.0).abs() <= 0.2,
        format!(
            "stochastic {:.5} +- {:.5} vs reference {fine:.5} ({z_agree:.2} sigma, need <= 3); deviation slope {slope:.3} (need 1 +- 0.2)",
            est.mean, est.stderr
        ),
    )
}

fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn check_lines(checks: &[qemforge_cli::Check]) -> Outcome {
    let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
    let detail: Vec<String> = checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    outcome(passed, detail.join("; "))
}

fn richardson_order() -> Outcome {
    let h = build_tfim(2, 1.0, 0.7).unwrap();
    let obs = observable_nn_correlation(LatticeSpec::chain(2).unwrap(), 1.0)
        .unwrap()
        .matrix();
    let rho = DensityState::plus_state(2);
    let t = 2.0;
    let ideal = evolve_ideal(&rho, &h, &cfg(t)).unwrap().expectation(&obs);
    let nodes = richardson_coefficients(&[1.0, 2.0]).unwrap();
    let error = |lam: f64| {
        let delta = relax_dephase(2, lam, lam).unwrap();
        let values: Vec<f64> = nodes
            .r
            .iter()
            .map(|&r| {
                evolve_effective(&rho, &h, &delta.scaled(r), &cfg(t))
                    .unwrap()
                    .expectation(&obs)
            })
            .collect();
        (extrapolate_values(&values, &nodes).unwrap() - ideal).abs()
    };
    let (e1, e2) = (error(0.02), error(0.01));
    let ratio = e1 / e2;
    outcome(
        (ratio - 4.0).abs() <= 0.8,
        format!("errors {e1:.3e} -> {e2:.3e}, ratio {ratio:.3} (need 4 +- 20%)"),
    )
}

fn cost_formulas() -> Outcome {
    let (n, t, lam) = (100usize, 1.0, 0.005);
    let steps = 10_000;
    let dt = t / steps as f64;
    let one = relax_dephase(1, lam, lam).unwrap();
    let rows = cost_rows(n, lam, lam, t).unwrap();
    let mut worst: f64 = 0.0;
    for strategy in CostStrategy::ALL {
        let decomps = single_qubit_decompositions(&one, strategy).unwrap();
        let per_step: f64 = decomps.iter().map(|d| sampling_tables(d).step_factor(dt)).product();
        let mut product = 1.0f64;
        for _ in 0..steps {
            product *= per_step.powi(n as i32);
        }
        let closed = rows.iter().find(|r| r.strategy == strategy).unwrap().cost_c;
        worst = worst.max((product / closed - 1.0).abs());
    }
    let table = fig4_cost_table().unwrap();
    let checks = fig4_checks(&table);
    let shape = check_lines(&checks);
    outcome(
        worst <= 1e-4 && shape.passed,
        format!("product vs exp rel {worst:.2e} (need <= 1e-4); {}", shape.detail),
    )
}

fn jump_time_inversion() -> Outcome {
    let mut worst: f64 = 0.0;
    for gdot in [0.05, 1.0, 7.5] {
        for q in [0.9, 0.5, 0.1, 1e-3] {
            let e: f64 = -f64::ln(q);
            let t = jump_time(0.0, e, 0.0, gdot);
            worst = worst.max((t - (2.0 * e / gdot).sqrt()).abs());
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max inversion error {worst:.2e} (need <= 1e-10)"),
    )
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn report(&mut self, id: usize, name: &str, start: Instant, o: Outcome) {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            self.failures += 1;
        }
        println!(
            "{tag} [{id:>2}] {name} ({:.1} s): {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
}

fn main() {
    let mut run = Runner { failures: 0 };

    let s = Instant::now();
    run.report(1, "analytic dynamics", s, analytic_dynamics());
    let s = Instant::now();
    run.report(2, "rescaling identity", s, rescaling_identity());
    let s = Instant::now();
    run.report(3, "recovery step order", s, recovery_step_order());

    let s = Instant::now();
    let tfim = run_experiment(&tfim_config(), 1).unwrap();
    run.report(4, "unbiasedness", s, unbiasedness(&tfim));

    let s = Instant::now();
    run.report(5, "equivalence with continuous expansion", s, equivalence());

    let s = Instant::now();
    let (fig2g, checks) = run_panel("fig2g", "fig2g", Scale::Small, 1).unwrap();
    run.report(6, "infinite-sample benchmark", s, check_lines(&checks));

    let s = Instant::now();
    run.report(7, "richardson order", s, richardson_order());
    let s = Instant::now();
    run.report(8, "cost formulas", s, cost_formulas());

    let s = Instant::now();
    let (fig3, checks) = run_panel("fig3", "fig3", Scale::Small, 1).unwrap();
    run.report(9, "circuit benchmark", s, check_lines(&checks));

    let s = Instant::now();
    let (_, checks) = run_panel("appF", "appF_limit", Scale::Small, 1).unwrap();
    let limit = check_lines(&checks);
    let inversion = jump_time_inversion();
    run.report(
        10,
        "time-dependent noise",
        s,
        outcome(
            limit.passed && inversion.passed,
            format!("{}; {}", limit.detail, inversion.detail),
        ),
    );

    let s = Instant::now();
    let reference = [tfim.to_csv(), fig2g.to_csv(), fig3.to_csv()];
    let mut mismatches = Vec::new();
    for workers in [2usize, 8] {
        let again = [
            run_experiment(&tfim_config(), workers).unwrap().to_csv(),
            run_panel("fig2g", "fig2g", Scale::Small, workers).unwrap().0.to_csv(),
            run_panel("fig3", "fig3", Scale::Small, workers).unwrap().0.to_csv(),
        ];
        for (label, (a, b)) in ["unbiasedness", "fig2g", "fig3"]
            .iter()
            .zip(reference.iter().zip(&again))
        {
            if a != b {
                mismatches.push(format!("{label} at {workers} workers"));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        "three tables byte-identical under 1, 2 and 8 workers".to_string()
    } else {
        format!("differs: {}", mismatches.join(", "))
    };
    run.report(
        11,
        "determinism across workers",
        s,
        outcome(mismatches.is_empty(), detail),
    );

    println!("{} of 11 criteria passed", 11 - run.failures);
    if run.failures > 0 {
        std::process::exit(1);
    }
}
