// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use qemforge::basis::overcomplete_ids;
use qemforge::decomposition::{cost_overhead, decompose_lp, decompose_minimal, recovery_generator};
use qemforge::extrapolation::richardson_coefficients;
use qemforge::lindblad::{
    evolve_noisy, Convention, DensityState, EvolutionConfig, HamiltonianSpec, LindbladTerm, NoiseModel,
};
use qemforge::pauli::{Pauli, PauliString};
use qemforge::stochastic::{jump_time, sample_jump_schedule, trajectory_rng};

fn one_qubit_noise(relax: f64, dephase: f64, depol: f64) -> NoiseModel {
    let mut terms = vec![
        LindbladTerm::amplitude_damping(0, relax),
        LindbladTerm::dephasing(0, dephase),
    ];
    terms.extend(LindbladTerm::depolarizing(0, depol));
    NoiseModel::new(1, terms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn richardson_constraints_hold(n in 1usize..=4, gaps in prop::collection::vec(0.2f64..0.8, 4)) {
        let mut r = vec![1.0];
        for g in gaps.iter().take(n - 1) {
            r.push(r.last().unwrap() + g);
        }
        let nodes = richardson_coefficients(&r).unwrap();
        prop_assert!(nodes.constraint_residual() < 1e-8);
        let sum: f64 = nodes.beta.iter().map(|b| b.abs()).sum();
        prop_assert!((sum - nodes.gamma).abs() < 1e-12);
    }

    #[test]
    fn recovery_reconstructs_generator(relax in 0.0f64..1.0, dephase in 0.0f64..1.0, depol in 0.0f64..1.0) {
        let gen = recovery_generator(&one_qubit_noise(relax, dephase, depol), Convention::Gksl).unwrap();
        for term in &gen.terms {
            let d = decompose_minimal(term).unwrap();
            prop_assert!(d.residual(&term.generator) < 1e-10);
            prop_assert!((d.c1 - d.q0 - d.gamma).abs() < 1e-12);
        }
    }

    #[test]
    fn lp_never_costs_more(relax in 0.0f64..1.0, dephase in 0.0f64..1.0) {
        let gen = recovery_generator(&one_qubit_noise(relax, dephase, 0.0), Convention::Gksl).unwrap();
        for term in &gen.terms {
            let exact = decompose_minimal(term).unwrap();
            let lp = decompose_lp(term, &overcomplete_ids()).unwrap();
            prop_assert!(lp.c1 <= exact.c1 + 1e-8);
            prop_assert!(lp.residual(&term.generator) < 1e-8);
        }
    }

    #[test]
    fn cost_grows_with_time(rate in 0.001f64..1.0, t1 in 0.0f64..5.0, dt in 0.0f64..5.0) {
        let gen = recovery_generator(&one_qubit_noise(rate, rate, 0.0), Convention::Gksl).unwrap();
        let d: Vec<_> = gen.terms.iter().map(|t| decompose_minimal(t).unwrap()).collect();
        let a = cost_overhead(&d, t1, 1, 2.0 * rate).unwrap();
        let b = cost_overhead(&d, t1 + dt, 1, 2.0 * rate).unwrap();
        prop_assert!(b.c2 >= a.c2);
        prop_assert!(a.c >= 1.0);
    }

    #[test]
    fn jump_time_integrates_to_target(a in 0.0f64..3.0, e in 0.0f64..5.0, gc in 0.0f64..2.0, gl in 0.0f64..2.0) {
        prop_assume!(gc + gl > 1e-3);
        let t = jump_time(a, e, gc, gl);
        let integral = gc * (t - a) + 0.5 * gl * (t * t - a * a);
        prop_assert!(t >= a);
        prop_assert!((integral - e).abs() < 1e-9 * (1.0 + e));
    }

    #[test]
    fn schedules_are_reproducible(seed in any::<u64>(), index in 0u64..1000) {
        let gen = recovery_generator(&one_qubit_noise(0.5, 0.5, 0.2), Convention::Gksl).unwrap();
        let d: Vec<_> = gen.terms.iter().map(|t| decompose_minimal(t).unwrap()).collect();
        let a = sample_jump_schedule(&d, 3.0, &mut trajectory_rng(seed, index));
        let b = sample_jump_schedule(&d, 3.0, &mut trajectory_rng(seed, index));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn noisy_evolution_preserves_trace_and_hermiticity(relax in 0.0f64..1.0, dephase in 0.0f64..1.0, hx in -3.0f64..3.0) {
        let h = HamiltonianSpec::new(1, vec![PauliString::new(vec![Pauli::X], hx)]).unwrap();
        let rho = DensityState::computational(1, 0);
        let out = evolve_noisy(&rho, &h, &one_qubit_noise(relax, dephase, 0.0), &EvolutionConfig::until(1.0)).unwrap();
        prop_assert!((out.trace() - 1.0).abs() < 1e-9);
        prop_assert!(out.purity() <= 1.0 + 1e-9);
    }
}
