// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration.
//!
//! A config is a TOML document with three tables:
//!
//! ```toml
//! [model]
//! preset = "heisenberg2d"
//! rows = 2
//! cols = 2
//! j = 25.132741228718345
//! h = 25.132741228718345
//! gamma = 0.25
//!
//! [noise]
//! exp = { preset = "relax_dephase", rates = [0.044, 0.044] }
//! est = { preset = "relax_dephase", rates = [0.04, 0.04] }
//! recovery_error = [0.0025, 0.0025, 0.005]
//!
//! [run]
//! methods = ["none", "stochastic"]
//! samples = 10000
//! seed = 7
//! t_end = 2.0
//! points = 8
//! ```
//!
//! Parsing rejects unknown keys. Validation collects every violation before
//! reporting.

use std::fmt;

use serde::{Deserialize, Serialize};

use qemforge::extrapolation::richardson_coefficients;
use qemforge::models::NOISE_PRESETS;

pub const MODEL_PRESETS: [&str; 5] = ["heisenberg2d", "tfim", "j1j2", "zz_field", "cr_circuit"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Stochastic,
    Richardson,
    Hybrid,
    ContinuousReference,
    InfiniteSample,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::None,
        Method::Stochastic,
        Method::Richardson,
        Method::Hybrid,
        Method::ContinuousReference,
        Method::InfiniteSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Stochastic => "stochastic",
            Method::Richardson => "richardson",
            Method::Hybrid => "hybrid",
            Method::ContinuousReference => "continuous_reference",
            Method::InfiniteSample => "infinite_sample",
        }
    }

    fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circuit_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crosstalk: Option<f64>,
    /// `"nn"` or `"nnn"` pair correlation of σx.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<String>,
    /// Divisor of the correlation sum; defaults to the number of pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<f64>,
    /// `"plus"` or `"zero"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub preset: String,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Physical noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exp: Option<NoiseSpec>,
    /// Noise model the recovery cancels; the physical one if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub est: Option<NoiseSpec>,
    /// `[p_x, p_y, p_z]` after every recovery operation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery_error: Option<Vec<f64>>,
    /// Upper bound on every estimated rate, 1/µs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_bound: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
    /// Evaluate `stochastic` and `hybrid` in the infinite-sample limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infinite_limit: Option<bool>,
    /// Slices per run for `continuous_reference`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_slices: Option<usize>,
    /// `"gksl"` or `"doubled"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convention: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// A parsed document. Use [`ExperimentConfig::validate`] before running.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(v) => {
                writeln!(f, "invalid config:")?;
                for m in v {
                    writeln!(f, "  - {m}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses and validates a document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn preset(&self) -> &str {
        self.model.preset.as_deref().unwrap_or("")
    }

    pub fn is_circuit(&self) -> bool {
        self.preset() == "cr_circuit"
    }

    /// Methods in the order given.
    pub fn methods(&self) -> Vec<Method> {
        self.run
            .methods
            .iter()
            .flatten()
            .filter_map(|m| Method::parse(m))
            .collect()
    }

    pub fn infinite_limit(&self) -> bool {
        self.run.infinite_limit.unwrap_or(false)
    }

    /// Whether any selected method draws random trajectories.
    pub fn samples_trajectories(&self) -> bool {
        !self.infinite_limit()
            && self
                .methods()
                .iter()
                .any(|m| matches!(m, Method::Stochastic | Method::Hybrid))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        self.validate_model(&mut v);
        self.validate_noise(&mut v);
        self.validate_run(&mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    fn validate_model(&self, v: &mut Vec<String>) {
        let m = &self.model;
        let Some(preset) = m.preset.as_deref() else {
            v.push(format!(
                "model.preset is required (one of {})",
                MODEL_PRESETS.join(", ")
            ));
            return;
        };
        let need_f = |v: &mut Vec<String>, key: &str, x: Option<f64>| match x {
            None => v.push(format!("model.{key} is required for {preset}")),
            Some(x) if !x.is_finite() => v.push(format!("model.{key} must be finite")),
            _ => {}
        };
        let need_u = |v: &mut Vec<String>, key: &str, x: Option<usize>, min: usize| match x {
            None => v.push(format!("model.{key} is required for {preset}")),
            Some(x) if x < min => v.push(format!("model.{key} must be at least {min}, got {x}")),
            _ => {}
        };
        let mut allowed: Vec<&str> = vec!["preset"];
        match preset {
            "heisenberg2d" | "j1j2" => {
                need_u(v, "rows", m.rows, 1);
                need_u(v, "cols", m.cols, 1);
                need_f(v, "j", m.j);
                need_f(v, "h", m.h);
                if preset == "heisenberg2d" {
                    need_f(v, "gamma", m.gamma);
                    allowed.extend(["gamma"]);
                } else {
                    need_f(v, "j2", m.j2);
                    allowed.extend(["j2"]);
                }
                if let (Some(r), Some(c)) = (m.rows, m.cols) {
                    if r * c < 2 {
                        v.push("model lattice needs at least 2 sites".into());
                    }
                }
                allowed.extend(["rows", "cols", "j", "h", "observable", "normalization", "initial"]);
            }
            "tfim" | "zz_field" => {
                need_u(v, "qubits", m.qubits, 2);
                need_f(v, "j", m.j);
                need_f(v, "h", m.h);
                allowed.extend(["qubits", "j", "h", "observable", "normalization", "initial"]);
            }
            "cr_circuit" => {
                need_u(v, "qubits", m.qubits, 2);
                need_u(v, "depth", m.depth, 1);
                if m.circuit_seed.is_none() {
                    v.push("model.circuit_seed is required for cr_circuit".into());
                }
                need_f(v, "omega", m.omega);
                need_f(v, "crosstalk", m.crosstalk);
                if matches!(m.omega, Some(o) if o <= 0.0) {
                    v.push("model.omega must be positive".into());
                }
                allowed.extend(["qubits", "depth", "circuit_seed", "omega", "crosstalk", "initial"]);
            }
            other => {
                v.push(format!(
                    "model.preset `{other}` is unknown (one of {})",
                    MODEL_PRESETS.join(", ")
                ));
                return;
            }
        }
        let present = [
            ("rows", m.rows.is_some()),
            ("cols", m.cols.is_some()),
            ("qubits", m.qubits.is_some()),
            ("j", m.j.is_some()),
            ("j2", m.j2.is_some()),
            ("h", m.h.is_some()),
            ("gamma", m.gamma.is_some()),
            ("depth", m.depth.is_some()),
            ("circuit_seed", m.circuit_seed.is_some()),
            ("omega", m.omega.is_some()),
            ("crosstalk", m.crosstalk.is_some()),
            ("observable", m.observable.is_some()),
            ("normalization", m.normalization.is_some()),
            ("initial", m.initial.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                v.push(format!("model.{key} does not apply to {preset}"));
            }
        }
        if let Some(o) = m.observable.as_deref() {
            if o != "nn" && o != "nnn" {
                v.push(format!("model.observable must be \"nn\" or \"nnn\", got \"{o}\""));
            }
        }
        if let Some(x) = m.normalization {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("model.normalization must be positive, got {x}"));
            }
        }
        if let Some(s) = m.initial.as_deref() {
            if s != "plus" && s != "zero" {
                v.push(format!("model.initial must be \"plus\" or \"zero\", got \"{s}\""));
            }
        }
    }

    fn validate_noise(&self, v: &mut Vec<String>) {
        let n = &self.noise;
        let check = |v: &mut Vec<String>, key: &str, spec: &NoiseSpec| {
            if !NOISE_PRESETS.contains(&spec.preset.as_str()) {
                v.push(format!(
                    "noise.{key}.preset `{}` is unknown (one of {})",
                    spec.preset,
                    NOISE_PRESETS.join(", ")
                ));
                return;
            }
            if spec.preset == "inhomogeneous_pauli" {
                v.push(format!(
                    "noise.{key}: inhomogeneous_pauli is a recovery error; set noise.recovery_error instead"
                ));
                return;
            }
            for (i, r) in spec.rates.iter().enumerate() {
                if !(*r >= 0.0 && r.is_finite()) {
                    v.push(format!(
                        "noise.{key}.rates[{i}] must be finite and nonnegative, got {r}"
                    ));
                }
            }
            if let Err(e) = qemforge::models::noise_preset(&spec.preset, 1, &spec.rates) {
                if spec.rates.iter().all(|r| *r >= 0.0 && r.is_finite()) {
                    v.push(format!("noise.{key}: {e}"));
                }
            }
        };
        match &n.exp {
            None => v.push("noise.exp is required".into()),
            Some(s) => check(v, "exp", s),
        }
        if let Some(s) = &n.est {
            check(v, "est", s);
            if let Some(e) = &n.exp {
                if e.preset != s.preset {
                    v.push("noise.est must use the same preset as noise.exp".into());
                }
            }
        }
        if let Some(p) = &n.recovery_error {
            if p.len() != 3 {
                v.push(format!(
                    "noise.recovery_error takes [p_x, p_y, p_z], got {} values",
                    p.len()
                ));
            } else if let Err(e) = qemforge::models::noise_preset("inhomogeneous_pauli", 1, p) {
                v.push(format!("noise.recovery_error: {e}"));
            }
        }
        if let Some(b) = n.rate_bound {
            if !(b > 0.0 && b.is_finite()) {
                v.push(format!("noise.rate_bound must be positive, got {b}"));
            } else if let Some(s) = n.est.as_ref().or(n.exp.as_ref()) {
                for (i, r) in s.rates.iter().enumerate() {
                    if *r > b {
                        v.push(format!("estimated rate {i} ({r}) exceeds noise.rate_bound {b}"));
                    }
                }
            }
        }
    }

    fn validate_run(&self, v: &mut Vec<String>) {
        let r = &self.run;
        match &r.methods {
            None => v.push("run.methods is required".into()),
            Some(ms) if ms.is_empty() => v.push("run.methods must not be empty".into()),
            Some(ms) => {
                for m in ms {
                    if Method::parse(m).is_none() {
                        let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                        v.push(format!(
                            "run.methods: unknown method `{m}` (one of {})",
                            names.join(", ")
                        ));
                    }
                }
                let mut seen = ms.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != ms.len() {
                    v.push("run.methods lists a method twice".into());
                }
            }
        }
        let methods = self.methods();
        if self.samples_trajectories() {
            match r.samples {
                None => v.push("run.samples is required for sampled methods".into()),
                Some(0) => v.push("run.samples must be positive".into()),
                _ => {}
            }
            if r.seed.is_none() {
                v.push("run.seed is required for sampled methods".into());
            }
        }
        if self.is_circuit() {
            if r.t_end.is_some() || r.points.is_some() {
                v.push("run.t_end and run.points do not apply to cr_circuit (one checkpoint per layer)".into());
            }
            for m in &methods {
                if matches!(m, Method::Richardson | Method::Hybrid | Method::ContinuousReference) {
                    v.push(format!("run.methods: {m} is not supported for cr_circuit"));
                }
            }
        } else {
            match r.t_end {
                None => v.push("run.t_end is required".into()),
                Some(t) if !(t > 0.0 && t.is_finite()) => v.push(format!("run.t_end must be positive, got {t}")),
                _ => {}
            }
            match r.points {
                None => v.push("run.points is required".into()),
                Some(0) => v.push("run.points must be positive".into()),
                _ => {}
            }
        }
        if methods.iter().any(|m| matches!(m, Method::Richardson | Method::Hybrid)) {
            match &r.nodes {
                None => v.push("run.nodes is required for richardson and hybrid".into()),
                Some(nodes) => {
                    if let Err(e) = richardson_coefficients(nodes) {
                        v.push(format!("run.nodes: {e}"));
                    }
                }
            }
        }
        if methods.contains(&Method::ContinuousReference) {
            let slices = r.reference_slices.unwrap_or(2048);
            match r.points {
                Some(p) if p > 0 && slices % p != 0 => v.push(format!(
                    "run.reference_slices ({slices}) must be a multiple of run.points ({p})"
                )),
                _ => {}
            }
            if slices == 0 {
                v.push("run.reference_slices must be positive".into());
            }
        }
        if let Some(c) = r.convention.as_deref() {
            if c != "gksl" && c != "doubled" {
                v.push(format!("run.convention must be \"gksl\" or \"doubled\", got \"{c}\""));
            }
        }
    }
}
