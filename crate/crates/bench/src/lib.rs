// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use qemforge::decomposition::{decompose_all_minimal, recovery_generator};
use qemforge::lindblad::{Convention, DensityState, HamiltonianSpec, NoiseModel};
use qemforge::models::{build_heisenberg2d, observable_nn_correlation, relax_dephase, LatticeSpec};
use qemforge::stochastic::{Backend, Engine, Protocol};
use qemforge::Result;

/// A `rows × cols` Heisenberg lattice with relaxation and dephasing.
pub struct Fixture {
    pub h: HamiltonianSpec,
    pub noise: NoiseModel,
    pub initial: DensityState,
    pub lattice: LatticeSpec,
}

impl Fixture {
    pub fn heisenberg(rows: usize, cols: usize) -> Result<Self> {
        let lattice = LatticeSpec::new(rows, cols)?;
        let n = lattice.num_qubits();
        let two_pi = 2.0 * std::f64::consts::PI;
        Ok(Self {
            h: build_heisenberg2d(lattice, two_pi, 0.25, two_pi)?,
            noise: relax_dephase(n, 0.04, 0.04)?,
            initial: DensityState::plus_state(n),
            lattice,
        })
    }

    /// Stochastic protocol over `t_end` with `points` checkpoints.
    pub fn engine(&self, t_end: f64, points: usize, backend: Backend) -> Result<Engine> {
        let decomps = decompose_all_minimal(&recovery_generator(&self.noise, Convention::Gksl)?)?;
        let obs = observable_nn_correlation(self.lattice, 1.0)?.matrix();
        let protocol = Protocol::evolution(
            &self.h,
            &self.noise,
            decomps,
            t_end,
            points,
            vec![obs],
            Convention::Gksl,
        )?;
        Engine::new(protocol, &self.initial, backend)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_engine_runs() {
        let f = Fixture::heisenberg(1, 2).unwrap();
        let e = f.engine(0.5, 2, Backend::Auto).unwrap();
        let b = e.run_batch(8, 1, 1).unwrap();
        assert_eq!(b.checkpoints.len(), 2);
    }
}
