// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Richardson extrapolation over boosted noise.
//!
//! Node `r` runs the rescaled Hamiltonian `(1/r)H(t/r)` for `r·T` with the
//! noise left at its physical rate, which boosts the residual noise by `r`
//! (or by `r²` for noise growing linearly in time). Estimates at the
//! effective boosts are combined with weights `β_j = ∏_{l≠j} r_l/(r_l − r_j)`.

use crate::error::{invalid, Result};
use crate::lindblad::TimeProfile;
use crate::stochastic::EstimatorResult;

/// Largest supported node count.
pub const MAX_NODES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationNodes {
    pub r: Vec<f64>,
    pub beta: Vec<f64>,
    /// `Σ|β_j|`.
    pub gamma: f64,
}

impl ExtrapolationNodes {
    /// Order `n` of the extrapolation (number of nodes minus one).
    pub fn order(&self) -> usize {
        self.r.len() - 1
    }

    /// Largest of `|Σβ_j − 1|` and `|Σβ_j r_j^k|` for `k = 1..=n`.
    pub fn constraint_residual(&self) -> f64 {
        let mut worst = (self.beta.iter().sum::<f64>() - 1.0).abs();
        for k in 1..=self.order() {
            let s: f64 = self.beta.iter().zip(&self.r).map(|(b, r)| b * r.powi(k as i32)).sum();
            worst = worst.max(s.abs());
        }
        worst
    }
}

pub fn richardson_coefficients(r: &[f64]) -> Result<ExtrapolationNodes> {
    if r.is_empty() {
        return Err(invalid("nodes", "at least one node is required"));
    }
    if r.len() > MAX_NODES {
        return Err(invalid(
            "nodes",
            format!("at most {MAX_NODES} nodes are supported, got {}", r.len()),
        ));
    }
    if r[0] != 1.0 {
        return Err(invalid("nodes", format!("the first node must be 1, got {}", r[0])));
    }
    for (i, &a) in r.iter().enumerate() {
        if !(a >= 1.0 && a.is_finite()) {
            return Err(invalid("nodes", format!("node {a} is below 1 or not finite")));
        }
        if r[..i].iter().any(|&b| (a - b).abs() <= 1e-12 * a) {
            return Err(invalid("nodes", format!("duplicate node {a}")));
        }
    }
    let beta: Vec<f64> = (0..r.len())
        .map(|j| {
            r.iter()
                .enumerate()
                .filter(|&(l, _)| l != j)
                .map(|(_, &rl)| rl / (rl - r[j]))
                .product()
        })
        .collect();
    let gamma = beta.iter().map(|b| b.abs()).sum();
    Ok(ExtrapolationNodes {
        r: r.to_vec(),
        beta,
        gamma,
    })
}

/// `Σ β_j x_j`.
pub fn extrapolate_values(values: &[f64], nodes: &ExtrapolationNodes) -> Result<f64> {
    if values.len() != nodes.r.len() {
        return Err(invalid(
            "estimates",
            format!("{} values for {} nodes", values.len(), nodes.r.len()),
        ));
    }
    Ok(values.iter().zip(&nodes.beta).map(|(v, b)| v * b).sum())
}

/// Combines independent node estimates; errors add in quadrature.
pub fn extrapolate(estimates: &[EstimatorResult], nodes: &ExtrapolationNodes) -> Result<EstimatorResult> {
    let means: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
    let mean = extrapolate_values(&means, nodes)?;
    let quad = |f: fn(&EstimatorResult) -> f64| -> f64 {
        estimates
            .iter()
            .zip(&nodes.beta)
            .map(|(e, b)| (b * f(e)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok(EstimatorResult {
        mean,
        stderr: quad(|e| e.stderr),
        samples: estimates.iter().map(|e| e.samples).sum(),
        c: estimates.iter().map(|e| e.c).fold(0.0, f64::max),
        predicted_error: quad(|e| e.predicted_error),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostedRun {
    /// Time-rescaling factor.
    pub r: f64,
    /// Run length `r·T`, µs.
    pub duration: f64,
    /// 1 for constant-rate noise, 2 for noise linear in time.
    pub exponent: u32,
}

impl BoostedRun {
    /// Effective noise boost `r^exponent`.
    pub fn boost(&self) -> f64 {
        self.r.powi(self.exponent as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedRunPlan {
    pub t_end: f64,
    pub runs: Vec<BoostedRun>,
}

impl BoostedRunPlan {
    /// Richardson weights at the effective boosts.
    pub fn effective_nodes(&self) -> Result<ExtrapolationNodes> {
        let r: Vec<f64> = self.runs.iter().map(BoostedRun::boost).collect();
        richardson_coefficients(&r)
    }
}

/// Plans one rescaled run per node. All noise must share one profile so the
/// boost exponent is well defined.
pub fn plan_boosted_runs(t_end: f64, r: &[f64], profiles: &[TimeProfile]) -> Result<BoostedRunPlan> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("T", format!("must be nonnegative, got {t_end}")));
    }
    richardson_coefficients(r)?;
    let exponent = match profiles.first() {
        None => 1,
        Some(&p) => {
            if profiles.iter().any(|&q| q != p) {
                return Err(invalid(
                    "profiles",
                    "mixed noise profiles have no single boost exponent",
                ));
            }
            match p {
                TimeProfile::Constant => 1,
                TimeProfile::Linear => 2,
            }
        }
    };
    Ok(BoostedRunPlan {
        t_end,
        runs: r
            .iter()
            .map(|&r| BoostedRun {
                r,
                duration: r * t_end,
                exponent,
            })
            .collect(),
    })
}

/// Runs `run(r)` for every node and extrapolates elementwise.
pub fn extrapolate_runs<F>(plan: &BoostedRunPlan, mut run: F) -> Result<Vec<f64>>
where
    F: FnMut(&BoostedRun) -> Result<Vec<f64>>,
{
    let nodes = plan.effective_nodes()?;
    let outputs = plan.runs.iter().map(&mut run).collect::<Result<Vec<_>>>()?;
    let len = outputs[0].len();
    if outputs.iter().any(|o| o.len() != len) {
        return Err(invalid("runs", "node outputs differ in length"));
    }
    (0..len)
        .map(|i| {
            let col: Vec<f64> = outputs.iter().map(|o| o[i]).collect();
            extrapolate_values(&col, &nodes)
        })
        .collect()
}

/// Inputs of the extrapolation error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub order: usize,
    pub r_max: f64,
    pub lambda: f64,
    pub t_end: f64,
    /// `‖Δ𝓛‖₁` of the normalized model error.
    pub model_error_norm: f64,
    pub observable_norm: f64,
    pub samples: f64,
    /// Largest single-shot outcome magnitude.
    pub delta_max: f64,
    pub c: f64,
    /// `γ_n = Σ|β_j|`.
    pub gamma: f64,
}

/// `γ_n (C r_max^{n+1} Δ_max/√N + ‖O‖ (r_max λ T ‖Δ𝓛‖₁)^{n+1}/(n+1)!)`.
pub fn truncation_bound(b: &BoundInputs) -> Result<f64> {
    let values = [
        b.r_max,
        b.lambda,
        b.t_end,
        b.model_error_norm,
        b.observable_norm,
        b.samples,
        b.delta_max,
        b.c,
        b.gamma,
    ];
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("bound", "inputs must be nonnegative"));
    }
    let k = b.order as i32 + 1;
    let factorial: f64 = (1..=k).map(f64::from).product();
    let shot = if b.samples > 0.0 {
        b.c * b.r_max.powi(k) * b.delta_max / b.samples.sqrt()
    } else {
        f64::INFINITY
    };
    let bias = b.observable_norm * (b.r_max * b.lambda * b.t_end * b.model_error_norm).powi(k) / factorial;
    Ok(b.gamma * (shot + bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coefficient_examples() {
        assert_eq!(richardson_coefficients(&[1.0]).unwrap().beta, vec![1.0]);
        let two = richardson_coefficients(&[1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(two.beta[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two.beta[1], -1.0, epsilon = 1e-15);
        let paper = richardson_coefficients(&[1.0, 1.8]).unwrap();
        assert_abs_diff_eq!(paper.beta[0], 2.25, epsilon = 1e-14);
        assert_abs_diff_eq!(paper.beta[1], -1.25, epsilon = 1e-14);
        assert_abs_diff_eq!(paper.gamma, 3.5, epsilon = 1e-14);
    }

    #[test]
    fn node_validation() {
        assert!(richardson_coefficients(&[]).is_err());
        assert!(richardson_coefficients(&[1.0, 2.0, 2.0]).is_err());
        assert!(richardson_coefficients(&[1.0, 1.5, 2.0, 2.5, 3.0, 3.5]).is_err());
        assert!(richardson_coefficients(&[1.2, 2.0]).is_err());
        assert!(richardson_coefficients(&[1.0, 0.5]).is_err());
        assert!(richardson_coefficients(&[1.0, 1.5, 2.0, 2.5, 3.0]).is_ok());
    }

    #[test]
    fn extrapolation_properties() {
        let nodes = richardson_coefficients(&[1.0, 1.5, 2.5]).unwrap();
        assert_abs_diff_eq!(
            extrapolate_values(&[0.7, 0.7, 0.7], &nodes).unwrap(),
            0.7,
            epsilon = 1e-14
        );
        let quad = |r: f64| 0.3 - 0.2 * r + 0.05 * r * r;
        let vals: Vec<f64> = nodes.r.iter().map(|&r| quad(r)).collect();
        assert_abs_diff_eq!(extrapolate_values(&vals, &nodes).unwrap(), 0.3, epsilon = 1e-12);
        assert!(extrapolate_values(&[1.0], &nodes).is_err());
    }

    #[test]
    fn estimate_propagation() {
        let nodes = richardson_coefficients(&[1.0, 2.0]).unwrap();
        let e = |mean, stderr| EstimatorResult {
            mean,
            stderr,
            samples: 100,
            c: 1.5,
            predicted_error: 0.15,
        };
        let out = extrapolate(&[e(0.9, 0.01), e(0.8, 0.02)], &nodes).unwrap();
        assert_abs_diff_eq!(out.mean, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(out.stderr, (4.0f64 * 1e-4 + 4e-4).sqrt(), epsilon = 1e-15);
        assert_eq!(out.samples, 200);
    }

    #[test]
    fn boosted_plans() {
        let plain = plan_boosted_runs(2.0, &[1.0], &[TimeProfile::Constant]).unwrap();
        assert_eq!(plain.runs[0].duration, 2.0);
        let c = plan_boosted_runs(2.0, &[1.0, 2.0], &[TimeProfile::Constant]).unwrap();
        assert_eq!(c.runs[1].duration, 4.0);
        assert_eq!(c.runs[1].boost(), 2.0);
        let l = plan_boosted_runs(2.0, &[1.0, 2.0], &[TimeProfile::Linear]).unwrap();
        assert_eq!(l.runs[1].boost(), 4.0);
        assert_eq!(l.effective_nodes().unwrap().r, vec![1.0, 4.0]);
        assert!(plan_boosted_runs(2.0, &[1.0, 2.0], &[TimeProfile::Linear, TimeProfile::Constant]).is_err());
        assert!(plan_boosted_runs(-1.0, &[1.0], &[]).is_err());
    }

    #[test]
    fn bound_examples() {
        let base = BoundInputs {
            order: 1,
            r_max: 2.0,
            lambda: 0.1,
            t_end: 2.0,
            model_error_norm: 0.5,
            observable_norm: 1.0,
            samples: 1e4,
            delta_max: 1.0,
            c: 1.2,
            gamma: 3.0,
        };
        let shot = 3.0 * 1.2 * 4.0 / 100.0;
        let zero_lambda = truncation_bound(&BoundInputs { lambda: 0.0, ..base }).unwrap();
        assert_abs_diff_eq!(zero_lambda, shot, epsilon = 1e-15);
        let exact_model = truncation_bound(&BoundInputs {
            model_error_norm: 0.0,
            ..base
        })
        .unwrap();
        assert_abs_diff_eq!(exact_model, shot, epsilon = 1e-15);
        let full = truncation_bound(&base).unwrap() - shot;
        let half = truncation_bound(&BoundInputs { lambda: 0.05, ..base }).unwrap() - shot;
        assert_abs_diff_eq!(full / half, 4.0, epsilon = 1e-10);
        assert!(truncation_bound(&BoundInputs { c: -1.0, ..base }).is_err());
    }
}
