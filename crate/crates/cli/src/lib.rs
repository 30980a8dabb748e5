// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: configuration, experiment orchestration, figure
//! recipes and CSV output.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 runtime error,
//! 4 failed checks in `reproduce`.

pub mod config;
pub mod experiment;
pub mod output;
pub mod recipes;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use qemforge::basis::overcomplete_ids;
use qemforge::decomposition::{cost_overhead, decompose_lp, decompose_minimal, recovery_generator};
use qemforge::extrapolation::{extrapolate_values, richardson_coefficients};
use qemforge::lindblad::Convention;

pub use config::{parse_config, ConfigError, ExperimentConfig, Method};
pub use experiment::{default_workers, run_experiment, RunError};
pub use output::{ResultRow, ResultTable, CSV_HEADER};
pub use recipes::{reproduce, Check, Scale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CHECKS: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "qemforge",
    version,
    about = "Stochastic error mitigation for noisy analog simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write its result table.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `run.output`; `-` writes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the recovery decomposition of single-qubit noise.
    Decompose {
        /// relax_dephase, lowfreq, dephasing, amplitude_damping or depolarizing.
        #[arg(long)]
        noise: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        rates: Vec<f64>,
        /// Minimize over the over-complete basis.
        #[arg(long)]
        lp: bool,
        /// Duration for the cost summary, µs.
        #[arg(long, default_value_t = 1.0)]
        time: f64,
    },
    /// Sampling cost of relaxation plus dephasing on independent qubits.
    Cost {
        #[arg(long)]
        qubits: usize,
        /// `λ1,λ2` in 1/µs.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        rates: Vec<f64>,
        #[arg(long)]
        time: f64,
    },
    /// Richardson-extrapolate values measured at boosted noise.
    Extrapolate {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        nodes: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        inputs: Vec<f64>,
        /// Standard errors of the inputs.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        stderr: Option<Vec<f64>>,
    },
    /// Run a figure recipe and report its checks.
    Reproduce {
        figure: String,
        #[arg(long, default_value = "small")]
        scale: String,
        #[arg(long, default_value = "reproduce_out")]
        out_dir: PathBuf,
    },
}

fn config_error(msg: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Invalid(vec![msg.into()]))
}

/// Runs the CLI with `args` (including the program name) and returns the
/// exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_error(e: std::io::Error) -> RunError {
    RunError::Runtime(e.to_string())
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, RunError> {
    match cmd {
        Command::Simulate {
            config,
            seed,
            out: path,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| config_error(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg: ExperimentConfig =
                toml::from_str(&text).map_err(|e| RunError::Config(ConfigError::Parse(e.to_string())))?;
            if seed.is_some() {
                cfg.run.seed = seed;
            }
            cfg.validate()?;
            let table = run_experiment(&cfg, default_workers())?;
            let target = path.or_else(|| cfg.run.output.as_ref().map(PathBuf::from));
            match target {
                Some(p) if p.as_os_str() != "-" => std::fs::write(&p, table.to_csv()).map_err(io_error)?,
                _ => out.write_all(table.to_csv().as_bytes()).map_err(io_error)?,
            }
            Ok(EXIT_OK)
        }
        Command::Decompose { noise, rates, lp, time } => {
            let model = recipes::single_qubit_noise(&noise, &rates)?;
            let gen = recovery_generator(&model, Convention::Gksl)?;
            let decomps = gen
                .terms
                .iter()
                .map(|t| {
                    if lp {
                        decompose_lp(t, &overcomplete_ids())
                    } else {
                        decompose_minimal(t)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rate_sum: f64 = model.terms.iter().map(|t| t.rate).sum();
            let cost = cost_overhead(&decomps, time, 1, rate_sum)?;
            let mut s = String::new();
            s.push_str(&format!("# noise: {noise} rates={rates:?}\n"));
            s.push_str("support,profile,operation,coefficient\n");
            for d in &decomps {
                let support: Vec<String> = d.support.iter().map(|q| q.to_string()).collect();
                let support = support.join(" ");
                s.push_str(&format!("{support},{},identity,{}\n", d.profile.name(), d.q0));
                for (label, q) in &d.terms {
                    s.push_str(&format!("{support},{},{},{q}\n", d.profile.name(), label.name()));
                }
            }
            s.push('\n');
            s.push_str("time_us,C1_total,log_C,cost_C,cost_C2,lambda,mean_jumps\n");
            s.push_str(&format!(
                "{time},{},{},{},{},{},{}\n",
                cost.c1_total, cost.log_c, cost.c, cost.c2, cost.lambda, cost.mean_jumps
            ));
            out.write_all(s.as_bytes()).map_err(io_error)?;
            Ok(EXIT_OK)
        }
        Command::Cost { qubits, rates, time } => {
            if rates.len() != 2 {
                return Err(config_error(format!("--rates takes λ1,λ2, got {} values", rates.len())));
            }
            if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                return Err(config_error(format!("--rates must be nonnegative, got {rates:?}")));
            }
            if qubits == 0 {
                return Err(config_error("--qubits must be positive"));
            }
            if !(time >= 0.0 && time.is_finite()) {
                return Err(config_error(format!("--time must be nonnegative, got {time}")));
            }
            let table = recipes::CostTable {
                metadata: vec![],
                rows: recipes::cost_rows(qubits, rates[0], rates[1], time)?,
            };
            out.write_all(table.to_csv().as_bytes()).map_err(io_error)?;
            Ok(EXIT_OK)
        }
        Command::Extrapolate { nodes, inputs, stderr } => {
            let coeffs = richardson_coefficients(&nodes).map_err(|e| config_error(e.to_string()))?;
            let value = extrapolate_values(&inputs, &coeffs).map_err(|e| config_error(e.to_string()))?;
            let se = match &stderr {
                Some(s) if s.len() != inputs.len() => {
                    return Err(config_error("--stderr needs one value per input"));
                }
                Some(s) => s
                    .iter()
                    .zip(&coeffs.beta)
                    .map(|(e, b)| (e * b).powi(2))
                    .sum::<f64>()
                    .sqrt(),
                None => 0.0,
            };
            let mut s = String::from("node,beta\n");
            for (r, b) in coeffs.r.iter().zip(&coeffs.beta) {
                s.push_str(&format!("{r},{b}\n"));
            }
            s.push_str(&format!("\nestimate,stderr,gamma\n{value},{se},{}\n", coeffs.gamma));
            out.write_all(s.as_bytes()).map_err(io_error)?;
            Ok(EXIT_OK)
        }
        Command::Reproduce { figure, scale, out_dir } => {
            let scale = Scale::parse(&scale)
                .ok_or_else(|| config_error(format!("--scale must be small or paper, got {scale}")))?;
            let rep = reproduce(&figure, scale, default_workers())?;
            std::fs::create_dir_all(&out_dir).map_err(io_error)?;
            for (name, csv) in &rep.outputs {
                let path = out_dir.join(name);
                std::fs::write(&path, csv).map_err(io_error)?;
                let _ = writeln!(out, "wrote {}", path.display());
            }
            let failed = rep.checks.iter().filter(|c| !c.passed).count();
            for c in &rep.checks {
                let _ = writeln!(out, "{}", c.line());
            }
            let _ = writeln!(
                out,
                "{} of {} checks passed",
                rep.checks.len() - failed,
                rep.checks.len()
            );
            if failed > 0 {
                let _ = writeln!(err, "{failed} checks failed");
                return Ok(EXIT_CHECKS);
            }
            Ok(EXIT_OK)
        }
    }
}
