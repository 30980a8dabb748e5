// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Builds models from a validated config and runs the selected methods.

use sha2::{Digest, Sha256};

use qemforge::decomposition::{decompose_all_minimal, recovery_generator, QuasiDecomposition};
use qemforge::extrapolation::{plan_boosted_runs, BoostedRunPlan, ExtrapolationNodes};
use qemforge::linalg::{hermitize, CMatrix};
use qemforge::lindblad::{Convention, DensityState, Generator, HamiltonianSpec, Integrator, NoiseModel, TimeProfile};
use qemforge::models::{
    build_heisenberg2d, build_j1j2, build_tfim, build_zz_field, noise_preset, observable_nn_correlation,
    observable_nnn_correlation, CircuitMode, CircuitSpec, LatticeSpec, NoisePreset,
};
use qemforge::stochastic::{
    continuous_reference_series, fidelity_from_overlap, Backend, BatchResult, Engine, PauliErrorChannel, Protocol, Step,
};
use qemforge::QemError;

use crate::config::{ConfigError, ExperimentConfig, Method, NoiseSpec};
use crate::output::{ResultRow, ResultTable};

/// Failure of a run, mapped to a process exit code.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<QemError> for RunError {
    fn from(e: QemError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

/// Worker count: `QEMFORGE_THREADS` if set, else the available parallelism.
pub fn default_workers() -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("QEMFORGE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
    {
        Some(cap) if cap > 0 => cap,
        _ => avail,
    }
}

enum ModelKind {
    Spin { h: HamiltonianSpec, observable: CMatrix },
    Circuit(CircuitSpec),
}

struct Setup {
    num_qubits: usize,
    kind: ModelKind,
    initial: DensityState,
    exp: NoiseModel,
    est: NoiseModel,
    recovery_error: Option<PauliErrorChannel>,
    convention: Convention,
}

fn lindblad(spec: &NoiseSpec, n: usize) -> Result<NoiseModel, RunError> {
    match noise_preset(&spec.preset, n, &spec.rates)? {
        NoisePreset::Lindblad(m) => Ok(m),
        NoisePreset::RecoveryError(_) => Err(RunError::Runtime(format!("{} is not a Lindblad preset", spec.preset))),
    }
}

fn build_setup(cfg: &ExperimentConfig) -> Result<Setup, RunError> {
    let m = &cfg.model;
    let get = |x: Option<f64>| x.unwrap_or_default();
    let (num_qubits, kind) = match cfg.preset() {
        "cr_circuit" => {
            let spec = CircuitSpec::random(
                m.qubits.unwrap_or_default(),
                m.depth.unwrap_or_default(),
                m.circuit_seed.unwrap_or_default(),
                get(m.omega),
                get(m.crosstalk),
            )?;
            (spec.num_qubits, ModelKind::Circuit(spec))
        }
        preset => {
            let (h, lattice) = match preset {
                "heisenberg2d" | "j1j2" => {
                    let lat = LatticeSpec::new(m.rows.unwrap_or_default(), m.cols.unwrap_or_default())?;
                    let h = if preset == "heisenberg2d" {
                        build_heisenberg2d(lat, get(m.j), get(m.gamma), get(m.h))?
                    } else {
                        build_j1j2(lat, get(m.j), get(m.j2), get(m.h))?
                    };
                    (h, lat)
                }
                "tfim" => {
                    let n = m.qubits.unwrap_or_default();
                    (build_tfim(n, get(m.j), get(m.h))?, LatticeSpec::chain(n)?)
                }
                "zz_field" => {
                    let n = m.qubits.unwrap_or_default();
                    (build_zz_field(n, get(m.j), get(m.h))?, LatticeSpec::chain(n)?)
                }
                other => return Err(RunError::Runtime(format!("unknown model preset {other}"))),
            };
            let nnn = m.observable.as_deref() == Some("nnn");
            let pairs = if nnn {
                lattice.next_nearest_neighbours().len()
            } else {
                lattice.nearest_neighbours().len()
            };
            let norm = m.normalization.unwrap_or(pairs as f64);
            let obs = if nnn {
                observable_nnn_correlation(lattice, norm)?
            } else {
                observable_nn_correlation(lattice, norm)?
            };
            (
                lattice.num_qubits(),
                ModelKind::Spin {
                    h,
                    observable: obs.matrix(),
                },
            )
        }
    };
    let default_initial = if matches!(kind, ModelKind::Circuit(_)) {
        "zero"
    } else {
        "plus"
    };
    let initial = match m.initial.as_deref().unwrap_or(default_initial) {
        "zero" => DensityState::computational(num_qubits, 0),
        _ => DensityState::plus_state(num_qubits),
    };
    let exp_spec = cfg
        .noise
        .exp
        .as_ref()
        .ok_or_else(|| RunError::Runtime("noise.exp missing".into()))?;
    let exp = lindblad(exp_spec, num_qubits)?;
    let est = match &cfg.noise.est {
        Some(s) => lindblad(s, num_qubits)?,
        None => exp.clone(),
    };
    let recovery_error = match &cfg.noise.recovery_error {
        Some(p) => Some(PauliErrorChannel::new(p[0], p[1], p[2])?),
        None => None,
    };
    let convention = match cfg.run.convention.as_deref() {
        Some("doubled") => Convention::Doubled,
        _ => Convention::Gksl,
    };
    Ok(Setup {
        num_qubits,
        kind,
        initial,
        exp,
        est,
        recovery_error,
        convention,
    })
}

/// Per-checkpoint `(observable, overlap with the ideal state)` pairs.
type Series = Vec<(f64, f64)>;

/// Seed of the hybrid run at node `j`, decorrelated from the plain run.
fn node_seed(seed: u64, j: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(j as u64 + 1)
}

struct SpinRunner<'a> {
    setup: &'a Setup,
    h: &'a HamiltonianSpec,
    observables: Vec<CMatrix>,
    t_end: f64,
    points: usize,
    decomps: Vec<QuasiDecomposition>,
}

impl<'a> SpinRunner<'a> {
    fn protocol(&self, r: f64, mitigate: bool) -> Result<Protocol, RunError> {
        let h = if r == 1.0 { self.h.clone() } else { self.h.rescaled(r)? };
        let decomps = if mitigate { self.decomps.clone() } else { Vec::new() };
        let mut p = Protocol::evolution(
            &h,
            &self.setup.exp,
            decomps,
            r * self.t_end,
            self.points,
            self.observables.clone(),
            self.setup.convention,
        )?
        .with_recovery_error(self.setup.recovery_error);
        let mut k = 0;
        for s in p.steps.iter_mut() {
            if let Step::Checkpoint(obs) = s {
                k += 1;
                *obs = vec![0, k];
            }
        }
        Ok(p)
    }
}

fn deterministic_series(engine: &Engine) -> Result<Series, RunError> {
    Ok(engine
        .run_deterministic()?
        .iter()
        .map(|c| (c.values[0], *c.values.last().expect("overlap")))
        .collect())
}

fn batch_series(batch: &BatchResult) -> Vec<((f64, f64), (f64, f64))> {
    batch
        .checkpoints
        .iter()
        .map(|c| {
            let o = &c.estimates[0];
            let f = c.estimates.last().expect("overlap");
            ((o.mean, o.stderr), (f.mean, f.stderr))
        })
        .collect()
}

/// Mean number of jumps before each checkpoint over the sampled schedules.
fn empirical_jumps(engine: &Engine, samples: usize, seed: u64) -> Vec<f64> {
    let times = engine.protocol().checkpoint_times();
    let mut counts = vec![0u64; times.len()];
    for i in 0..samples as u64 {
        let s = engine.sample_schedule(seed, i);
        for (k, &t) in times.iter().enumerate() {
            counts[k] += s.events.iter().filter(|e| e.time <= t).count() as u64;
        }
    }
    counts.iter().map(|&c| c as f64 / samples as f64).collect()
}

#[allow(clippy::too_many_arguments)]
fn push_rows(
    table: &mut ResultTable,
    times: &[f64],
    method: &str,
    mean: &[f64],
    stderr: &[f64],
    overlap: &[f64],
    jumps: &[f64],
    c1_total: f64,
    c2: &[f64],
) {
    for k in 0..times.len() {
        table.rows.push(ResultRow {
            time_us: times[k],
            method: method.to_string(),
            mean: mean[k],
            stderr: stderr[k],
            fidelity: fidelity_from_overlap(overlap[k]),
            mean_jumps: jumps[k],
            c1_total,
            cost_c2: c2[k],
        });
    }
}

/// Config digest recorded in the CSV metadata.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every selected method plus an `ideal` reference series.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ResultTable, RunError> {
    cfg.validate()?;
    let setup = build_setup(cfg)?;
    let mut table = ResultTable::default();
    table.push_meta("generator", format!("qemforge-cli {}", env!("CARGO_PKG_VERSION")));
    table.push_meta("config_sha256", config_digest(cfg));
    table.push_meta("model", cfg.preset());
    table.push_meta("qubits", setup.num_qubits.to_string());
    table.push_meta(
        "methods",
        cfg.methods().iter().map(|m| m.name()).collect::<Vec<_>>().join(" "),
    );
    if let Some(seed) = cfg.run.seed {
        table.push_meta("seed", seed.to_string());
    }
    if cfg.samples_trajectories() {
        table.push_meta("samples", cfg.run.samples.unwrap_or_default().to_string());
    }
    if cfg.infinite_limit() {
        table.push_meta("limit", "stochastic and hybrid evaluated at infinite samples");
    }
    match &setup.kind {
        ModelKind::Spin { h, observable } => run_spin(cfg, &setup, h, observable, workers, &mut table)?,
        ModelKind::Circuit(spec) => run_circuit(cfg, &setup, spec, workers, &mut table)?,
    }
    Ok(table)
}

fn run_spin(
    cfg: &ExperimentConfig,
    setup: &Setup,
    h: &HamiltonianSpec,
    observable: &CMatrix,
    workers: usize,
    table: &mut ResultTable,
) -> Result<(), RunError> {
    let t_end = cfg.run.t_end.unwrap_or_default();
    let points = cfg.run.points.unwrap_or_default();
    let times: Vec<f64> = (1..=points).map(|k| t_end * k as f64 / points as f64).collect();
    let n = setup.num_qubits;

    let ideal_gen = Generator::new(h, &NoiseModel::noiseless(n), setup.convention)?;
    let mut integ = Integrator::new(&ideal_gen, 1e-12, f64::INFINITY);
    let mut rho = setup.initial.matrix.clone();
    let mut projectors = Vec::with_capacity(points);
    let mut ideal_values = Vec::with_capacity(points);
    let mut t0 = 0.0;
    for &t in &times {
        integ.advance(&mut rho, t0, t)?;
        t0 = t;
        hermitize(&mut rho);
        ideal_values.push(qemforge::lindblad::expectation(observable, &rho));
        projectors.push(rho.clone());
    }
    let ideal_overlap: Vec<f64> = projectors
        .iter()
        .map(|p| qemforge::lindblad::expectation(p, p))
        .collect();
    let zeros = vec![0.0; points];
    let ones = vec![1.0; points];
    push_rows(
        table,
        &times,
        "ideal",
        &ideal_values,
        &zeros,
        &ideal_overlap,
        &zeros,
        0.0,
        &ones,
    );

    let recovery = recovery_generator(&setup.est, setup.convention)?;
    let decomps = decompose_all_minimal(&recovery)?;
    let c1_total: f64 = decomps.iter().map(|d| d.c1).sum();
    let mut observables = vec![observable.clone()];
    observables.extend(projectors);
    let runner = SpinRunner {
        setup,
        h,
        observables: observables.clone(),
        t_end,
        points,
        decomps,
    };
    let samples = cfg.run.samples.unwrap_or_default();
    let seed = cfg.run.seed.unwrap_or_default();
    // Stretching a run by r boosts noise with profile t^k by r^(k+1).
    let profiles: Vec<TimeProfile> = setup.exp.terms.iter().map(|t| t.profile).collect();
    let plan = cfg
        .run
        .nodes
        .as_deref()
        .map(|r| plan_boosted_runs(t_end, r, &profiles))
        .transpose()?;
    let nodes = plan.as_ref().map(BoostedRunPlan::effective_nodes).transpose()?;
    let stretches: Vec<f64> = plan.iter().flat_map(|p| p.runs.iter().map(|b| b.r)).collect();
    if let Some(n) = &nodes {
        let boosts: Vec<String> = n.r.iter().map(|b| b.to_string()).collect();
        table.push_meta("noise_boosts", boosts.join(" "));
    }

    for method in cfg.methods() {
        match method {
            Method::None => {
                let e = Engine::new(runner.protocol(1.0, false)?, &setup.initial, Backend::Auto)?;
                let s = deterministic_series(&e)?;
                let (m, f): (Vec<f64>, Vec<f64>) = s.into_iter().unzip();
                push_rows(table, &times, "none", &m, &zeros, &f, &zeros, 0.0, &ones);
            }
            Method::InfiniteSample => {
                let p = runner.protocol(1.0, true)?;
                let c2: Vec<f64> = p.log_overheads().iter().map(|l| (2.0 * l).exp()).collect();
                let jumps = p.expected_jumps();
                let e = Engine::new(p.infinite_sample()?, &setup.initial, Backend::Auto)?;
                let (m, f): (Vec<f64>, Vec<f64>) = deterministic_series(&e)?.into_iter().unzip();
                push_rows(table, &times, "infinite_sample", &m, &zeros, &f, &jumps, c1_total, &c2);
            }
            Method::Stochastic if cfg.infinite_limit() => {
                let p = runner.protocol(1.0, true)?;
                let c2: Vec<f64> = p.log_overheads().iter().map(|l| (2.0 * l).exp()).collect();
                let jumps = p.expected_jumps();
                let e = Engine::new(p.infinite_sample()?, &setup.initial, Backend::Auto)?;
                let (m, f): (Vec<f64>, Vec<f64>) = deterministic_series(&e)?.into_iter().unzip();
                push_rows(table, &times, "stochastic", &m, &zeros, &f, &jumps, c1_total, &c2);
            }
            Method::Stochastic => {
                let e = Engine::new(runner.protocol(1.0, true)?, &setup.initial, Backend::Auto)?;
                let batch = e.run_batch(samples, seed, workers)?;
                let s = batch_series(&batch);
                let c2: Vec<f64> = e.overheads().iter().map(|c| c * c).collect();
                let jumps = empirical_jumps(&e, samples, seed);
                let m: Vec<f64> = s.iter().map(|x| x.0 .0).collect();
                let se: Vec<f64> = s.iter().map(|x| x.0 .1).collect();
                let f: Vec<f64> = s.iter().map(|x| x.1 .0).collect();
                push_rows(table, &times, "stochastic", &m, &se, &f, &jumps, c1_total, &c2);
            }
            Method::Richardson => {
                let nodes = nodes.as_ref().expect("validated");
                let mut runs = Vec::new();
                for &r in &stretches {
                    let e = Engine::new(runner.protocol(r, false)?, &setup.initial, Backend::Auto)?;
                    runs.push(deterministic_series(&e)?);
                }
                let (m, f) = combine(nodes, &runs);
                let c2 = vec![nodes.gamma * nodes.gamma; points];
                push_rows(table, &times, "richardson", &m, &zeros, &f, &zeros, 0.0, &c2);
            }
            Method::Hybrid => {
                let nodes = nodes.as_ref().expect("validated");
                let mut means = Vec::new();
                let mut errs = Vec::new();
                let mut jumps = vec![0.0; points];
                let mut cost = vec![0.0; points];
                for (j, &r) in stretches.iter().enumerate() {
                    let p = runner.protocol(r, true)?;
                    let overheads: Vec<f64> = p.log_overheads().iter().map(|l| l.exp()).collect();
                    if cfg.infinite_limit() {
                        let expected = p.expected_jumps();
                        let e = Engine::new(p.infinite_sample()?, &setup.initial, Backend::Auto)?;
                        means.push(deterministic_series(&e)?);
                        errs.push(vec![(0.0, 0.0); points]);
                        for k in 0..points {
                            jumps[k] += expected[k] / nodes.r.len() as f64;
                        }
                    } else {
                        let e = Engine::new(p, &setup.initial, Backend::Auto)?;
                        let s = node_seed(seed, j);
                        let batch = e.run_batch(samples, s, workers)?;
                        let bs = batch_series(&batch);
                        means.push(bs.iter().map(|x| (x.0 .0, x.1 .0)).collect());
                        errs.push(bs.iter().map(|x| (x.0 .1, x.1 .1)).collect());
                        for (k, v) in empirical_jumps(&e, samples, s).iter().enumerate() {
                            jumps[k] += v / nodes.r.len() as f64;
                        }
                    }
                    for k in 0..points {
                        cost[k] += nodes.beta[j].abs() * overheads[k];
                    }
                }
                let (m, f) = combine(nodes, &means);
                let se: Vec<f64> = (0..points)
                    .map(|k| {
                        errs.iter()
                            .zip(&nodes.beta)
                            .map(|(e, b)| (b * e[k].0).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                let c2: Vec<f64> = cost.iter().map(|c| c * c).collect();
                push_rows(table, &times, "hybrid", &m, &se, &f, &jumps, c1_total, &c2);
            }
            Method::ContinuousReference => {
                let slices = cfg.run.reference_slices.unwrap_or(2048);
                let dt = t_end / slices as f64;
                let records: Vec<usize> = (1..=points).map(|k| k * slices / points).collect();
                let gen = Generator::new(h, &setup.exp, setup.convention)?;
                let values =
                    continuous_reference_series(&setup.initial, &gen, &recovery, dt, &records, &observables, 1e-10)?;
                let m: Vec<f64> = values.iter().map(|v| v[0]).collect();
                let f: Vec<f64> = values.iter().enumerate().map(|(k, v)| v[k + 1]).collect();
                let p = runner.protocol(1.0, true)?;
                let c2: Vec<f64> = p.log_overheads().iter().map(|l| (2.0 * l).exp()).collect();
                push_rows(
                    table,
                    &times,
                    "continuous_reference",
                    &m,
                    &zeros,
                    &f,
                    &zeros,
                    c1_total,
                    &c2,
                );
            }
        }
    }
    Ok(())
}

/// Extrapolates per-node `(observable, overlap)` series.
fn combine(nodes: &ExtrapolationNodes, runs: &[Series]) -> (Vec<f64>, Vec<f64>) {
    let points = runs[0].len();
    (0..points)
        .map(|k| {
            runs.iter()
                .zip(&nodes.beta)
                .fold((0.0, 0.0), |acc, (s, b)| (acc.0 + b * s[k].0, acc.1 + b * s[k].1))
        })
        .unzip()
}

fn run_circuit(
    cfg: &ExperimentConfig,
    setup: &Setup,
    spec: &CircuitSpec,
    workers: usize,
    table: &mut ResultTable,
) -> Result<(), RunError> {
    let depth = spec.depth();
    let times: Vec<f64> = (1..=depth).map(|k| k as f64 * spec.segment_time()).collect();
    let zeros = vec![0.0; depth];
    let ones = vec![1.0; depth];
    table.push_meta("depths", format!("1..={depth}"));
    push_rows(table, &times, "ideal", &ones, &zeros, &ones, &zeros, 0.0, &ones);
    let protocol = |mode| spec.protocol(&setup.exp, &setup.est, mode, setup.recovery_error);
    let mitigated = protocol(CircuitMode::Mitigated)?;
    let c1_total: f64 = mitigated.recoveries.iter().flatten().map(|d| d.c1).sum();
    let c2: Vec<f64> = mitigated.log_overheads().iter().map(|l| (2.0 * l).exp()).collect();
    let samples = cfg.run.samples.unwrap_or_default();
    let seed = cfg.run.seed.unwrap_or_default();
    for method in cfg.methods() {
        match method {
            Method::None => {
                let e = Engine::new(protocol(CircuitMode::Noisy)?, &setup.initial, Backend::Auto)?;
                let (m, _): (Vec<f64>, Vec<f64>) = deterministic_series(&e)?.into_iter().unzip();
                push_rows(table, &times, "none", &m, &zeros, &m, &zeros, 0.0, &ones);
            }
            Method::InfiniteSample | Method::Stochastic if method == Method::InfiniteSample || cfg.infinite_limit() => {
                let jumps = mitigated.expected_jumps();
                let e = Engine::new(mitigated.infinite_sample()?, &setup.initial, Backend::Auto)?;
                let (m, _): (Vec<f64>, Vec<f64>) = deterministic_series(&e)?.into_iter().unzip();
                push_rows(table, &times, method.name(), &m, &zeros, &m, &jumps, c1_total, &c2);
            }
            Method::Stochastic => {
                let e = Engine::new(mitigated.clone(), &setup.initial, Backend::Auto)?;
                let batch = e.run_batch(samples, seed, workers)?;
                let s = batch_series(&batch);
                let m: Vec<f64> = s.iter().map(|x| x.0 .0).collect();
                let se: Vec<f64> = s.iter().map(|x| x.0 .1).collect();
                let jumps = empirical_jumps(&e, samples, seed);
                push_rows(table, &times, "stochastic", &m, &se, &m, &jumps, c1_total, &c2);
            }
            other => {
                return Err(RunError::Runtime(format!("{other} is not supported for cr_circuit")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const TFIM: &str = r#"
[model]
preset = "tfim"
qubits = 2
j = 1.0
h = 1.0

[noise]
exp = { preset = "relax_dephase", rates = [0.05, 0.05] }

[run]
methods = ["none", "infinite_sample", "stochastic", "richardson", "hybrid", "continuous_reference"]
samples = 200
seed = 11
t_end = 1.0
points = 4
nodes = [1.0, 2.0]
reference_slices = 64
"#;

    #[test]
    fn exact_model_infinite_sample_is_ideal() {
        let cfg = parse_config(TFIM).unwrap();
        let t = run_experiment(&cfg, 1).unwrap();
        assert!(t.max_error("infinite_sample").unwrap() <= 1e-6);
        assert!(t.max_error("none").unwrap() > 1e-3);
        for r in &t.rows {
            for x in [r.mean, r.stderr, r.fidelity, r.mean_jumps, r.c1_total, r.cost_c2] {
                assert!(x.is_finite(), "{r:?}");
            }
        }
        assert_eq!(t.rows.len(), 7 * 4);
    }

    #[test]
    fn same_seed_same_csv() {
        let cfg = parse_config(TFIM).unwrap();
        let a = run_experiment(&cfg, 1).unwrap().to_csv();
        let b = run_experiment(&cfg, 2).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_noise_is_boosted_quadratically() {
        let text = r#"
[model]
preset = "zz_field"
qubits = 2
j = 2.0
h = 1.0

[noise]
exp = { preset = "lowfreq", rates = [0.2449489742783178] }
est = { preset = "lowfreq", rates = [0.22360679774997896] }

[run]
methods = ["stochastic", "richardson", "hybrid"]
infinite_limit = true
t_end = 2.0
points = 4
nodes = [1.0, 1.5]
"#;
        let t = run_experiment(&parse_config(text).unwrap(), 1).unwrap();
        assert!(t.metadata.iter().any(|(k, v)| k == "noise_boosts" && v == "1 2.25"));
        assert!(t.max_error("hybrid").unwrap() < 0.5 * t.max_error("stochastic").unwrap());
    }

    #[test]
    fn circuit_rows_are_fidelities() {
        let text = r#"
[model]
preset = "cr_circuit"
qubits = 2
depth = 2
circuit_seed = 4
omega = 6.283185307179586
crosstalk = 0.0

[noise]
exp = { preset = "relax_dephase", rates = [0.0, 0.0] }

[run]
methods = ["none", "infinite_sample"]
"#;
        let t = run_experiment(&parse_config(text).unwrap(), 1).unwrap();
        for r in &t.rows {
            assert!((r.mean - 1.0).abs() < 1e-8, "{r:?}");
        }
    }
}
