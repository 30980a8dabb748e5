// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Benchmark models: lattice spin Hamiltonians, correlation observables,
//! named noise presets and a cross-resonance CNOT circuit.
//!
//! Qubit `q` of an `rows × cols` lattice sits at row `q / cols`, column
//! `q % cols`. Boundaries are open.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decomposition::{decompose_all_minimal, recovery_generator};
use crate::error::{invalid, QemError, Result};
use crate::linalg::{c64, kron, CMatrix, C64, ONE, ZERO};
use crate::lindblad::{Convention, Generator, HamiltonianSpec, LindbladTerm, NoiseModel, TimeProfile};
use crate::pauli::{embed_local, embed_operator, EmbeddedMap, KrausMap, LocalMap, Pauli, PauliString};
use crate::stochastic::{PauliErrorChannel, Protocol, Step};

/// Rectangular lattice with open boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
}

impl LatticeSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("lattice", format!("{rows}x{cols} has no sites")));
        }
        Ok(Self { rows, cols })
    }

    /// Open chain of `n` sites.
    pub fn chain(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn num_qubits(&self) -> usize {
        self.rows * self.cols
    }

    fn coords(&self, q: usize) -> (i64, i64) {
        ((q / self.cols) as i64, (q % self.cols) as i64)
    }

    /// Pairs `(i, j)`, `i < j`, at the `shell`-th smallest distance.
    fn shell(&self, shell: usize) -> Vec<(usize, usize)> {
        let n = self.num_qubits();
        let d2 = |i: usize, j: usize| {
            let (a, b) = self.coords(i);
            let (c, d) = self.coords(j);
            (a - c).pow(2) + (b - d).pow(2)
        };
        let mut dists: Vec<i64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| d2(i, j))
            .collect();
        dists.sort_unstable();
        dists.dedup();
        let Some(&target) = dists.get(shell) else {
            return Vec::new();
        };
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| d2(i, j) == target)
            .collect()
    }

    /// Nearest-neighbour bonds.
    pub fn nearest_neighbours(&self) -> Vec<(usize, usize)> {
        self.shell(0)
    }

    /// Second distance shell: diagonals on a 2D lattice, distance-2 pairs on
    /// a chain.
    pub fn next_nearest_neighbours(&self) -> Vec<(usize, usize)> {
        self.shell(1)
    }
}

fn two_body(n: usize, i: usize, j: usize, p: Pauli, c: f64) -> Result<PauliString> {
    PauliString::with_ops(n, &[(i, p), (j, p)], c)
}

fn one_body(n: usize, i: usize, p: Pauli, c: f64) -> Result<PauliString> {
    PauliString::with_ops(n, &[(i, p)], c)
}

/// `J Σ_⟨ij⟩ [(1+γ)XX + (1−γ)YY + ZZ] − γh Σ_i Y_i`.
pub fn build_heisenberg2d(lattice: LatticeSpec, j: f64, gamma: f64, h: f64) -> Result<HamiltonianSpec> {
    let n = lattice.num_qubits();
    let mut terms = Vec::new();
    for (a, b) in lattice.nearest_neighbours() {
        terms.push(two_body(n, a, b, Pauli::X, j * (1.0 + gamma))?);
        terms.push(two_body(n, a, b, Pauli::Y, j * (1.0 - gamma))?);
        terms.push(two_body(n, a, b, Pauli::Z, j)?);
    }
    for q in 0..n {
        terms.push(one_body(n, q, Pauli::Y, -gamma * h)?);
    }
    HamiltonianSpec::new(n, terms)
}

/// `J Σ_⟨ij⟩ Z_i Z_j + h Σ_i X_i` on the nearest-neighbour graph of `lattice`.
pub fn build_ising(lattice: LatticeSpec, j: f64, h: f64) -> Result<HamiltonianSpec> {
    let n = lattice.num_qubits();
    let mut terms = Vec::new();
    for (a, b) in lattice.nearest_neighbours() {
        terms.push(two_body(n, a, b, Pauli::Z, j)?);
    }
    for q in 0..n {
        terms.push(one_body(n, q, Pauli::X, h)?);
    }
    HamiltonianSpec::new(n, terms)
}

/// Transverse-field Ising model on an open chain of `n` sites.
pub fn build_tfim(n: usize, j: f64, h: f64) -> Result<HamiltonianSpec> {
    if n < 2 {
        return Err(invalid("qubits", format!("chain needs at least 2 sites, got {n}")));
    }
    build_ising(LatticeSpec::chain(n)?, j, h)
}

/// `J1 Σ_⟨ij⟩ ZZ + J2 Σ_⟨⟨ij⟩⟩ ZZ − h Σ X`.
pub fn build_j1j2(lattice: LatticeSpec, j1: f64, j2: f64, h: f64) -> Result<HamiltonianSpec> {
    let n = lattice.num_qubits();
    let mut terms = Vec::new();
    for (a, b) in lattice.nearest_neighbours() {
        terms.push(two_body(n, a, b, Pauli::Z, j1)?);
    }
    for (a, b) in lattice.next_nearest_neighbours() {
        terms.push(two_body(n, a, b, Pauli::Z, j2)?);
    }
    for q in 0..n {
        terms.push(one_body(n, q, Pauli::X, -h)?);
    }
    HamiltonianSpec::new(n, terms)
}

/// `J Σ Z_i Z_{i+1} − h Σ Z_i` on an open chain: an Ising chain in a
/// longitudinal field.
pub fn build_zz_field(n: usize, j: f64, h: f64) -> Result<HamiltonianSpec> {
    if n < 2 {
        return Err(invalid("qubits", format!("chain needs at least 2 sites, got {n}")));
    }
    let lattice = LatticeSpec::chain(n)?;
    let mut terms = Vec::new();
    for (a, b) in lattice.nearest_neighbours() {
        terms.push(two_body(n, a, b, Pauli::Z, j)?);
    }
    for q in 0..n {
        terms.push(one_body(n, q, Pauli::Z, -h)?);
    }
    HamiltonianSpec::new(n, terms)
}

/// A Pauli-sum observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub num_qubits: usize,
    pub terms: Vec<PauliString>,
}

impl Observable {
    pub fn matrix(&self) -> CMatrix {
        let d = 1usize << self.num_qubits;
        let mut m = CMatrix::zeros((d, d));
        for t in &self.terms {
            m = m + t.matrix();
        }
        m
    }
}

fn pair_correlation(n: usize, pairs: &[(usize, usize)], p: Pauli, normalization: f64) -> Result<Observable> {
    if pairs.is_empty() {
        return Err(QemError::EmptyInput("correlation pairs"));
    }
    if !(normalization > 0.0 && normalization.is_finite()) {
        return Err(invalid(
            "normalization",
            format!("must be positive, got {normalization}"),
        ));
    }
    let terms = pairs
        .iter()
        .map(|&(a, b)| two_body(n, a, b, p, 1.0 / normalization))
        .collect::<Result<Vec<_>>>()?;
    Ok(Observable { num_qubits: n, terms })
}

/// `Σ_⟨ij⟩ X_i X_j / normalization` over nearest neighbours.
pub fn observable_nn_correlation(lattice: LatticeSpec, normalization: f64) -> Result<Observable> {
    pair_correlation(
        lattice.num_qubits(),
        &lattice.nearest_neighbours(),
        Pauli::X,
        normalization,
    )
}

/// `Σ_⟨⟨ij⟩⟩ X_i X_j / normalization` over the second shell.
pub fn observable_nnn_correlation(lattice: LatticeSpec, normalization: f64) -> Result<Observable> {
    pair_correlation(
        lattice.num_qubits(),
        &lattice.next_nearest_neighbours(),
        Pauli::X,
        normalization,
    )
}

/// Relaxation (`σ₋`, rate `relax`) and dephasing (`σz`, rate `dephase`) on
/// every qubit.
pub fn relax_dephase(n: usize, relax: f64, dephase: f64) -> Result<NoiseModel> {
    let mut terms = Vec::with_capacity(2 * n);
    for q in 0..n {
        if relax != 0.0 {
            terms.push(LindbladTerm::amplitude_damping(q, relax));
        }
        if dephase != 0.0 {
            terms.push(LindbladTerm::dephasing(q, dephase));
        }
    }
    NoiseModel::new(n, terms)
}

/// Imperfect recovery operations: a Pauli channel after each one.
pub fn inhomogeneous_pauli(px: f64, py: f64, pz: f64) -> Result<PauliErrorChannel> {
    PauliErrorChannel::new(px, py, pz)
}

/// Low-frequency dephasing `2λ'² t (σz ρ σz − ρ)` on every qubit: rate
/// `2λ'²` with a linear profile.
pub fn lowfreq(n: usize, lambda_prime: f64) -> Result<NoiseModel> {
    let rate = 2.0 * lambda_prime * lambda_prime;
    let terms = (0..n)
        .map(|q| LindbladTerm::dephasing(q, rate).with_profile(TimeProfile::Linear))
        .collect();
    NoiseModel::new(n, terms)
}

/// Noise presets addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum NoisePreset {
    Lindblad(NoiseModel),
    RecoveryError(PauliErrorChannel),
}

pub const NOISE_PRESETS: [&str; 3] = ["relax_dephase", "inhomogeneous_pauli", "lowfreq"];

/// Builds a named preset. Rates: `relax_dephase` takes `[λ1, λ2]`,
/// `inhomogeneous_pauli` takes `[p_x, p_y, p_z]`, `lowfreq` takes `[λ']`.
pub fn noise_preset(name: &str, n: usize, rates: &[f64]) -> Result<NoisePreset> {
    let want = |k: usize| -> Result<()> {
        if rates.len() != k {
            return Err(invalid("rates", format!("{name} takes {k} rates, got {}", rates.len())));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(invalid(
                "rates",
                format!("{name} rate {r} must be finite and nonnegative"),
            ));
        }
        Ok(())
    };
    match name {
        "relax_dephase" => {
            want(2)?;
            Ok(NoisePreset::Lindblad(relax_dephase(n, rates[0], rates[1])?))
        }
        "inhomogeneous_pauli" => {
            want(3)?;
            Ok(NoisePreset::RecoveryError(inhomogeneous_pauli(
                rates[0], rates[1], rates[2],
            )?))
        }
        "lowfreq" => {
            want(1)?;
            Ok(NoisePreset::Lindblad(lowfreq(n, rates[0])?))
        }
        other => Err(invalid("noise", format!("unknown preset `{other}`"))),
    }
}

/// `exp(−iθP/2)`.
pub fn rotation(p: Pauli, theta: f64) -> CMatrix {
    let (s, c) = (0.5 * theta).sin_cos();
    let mut m = p.matrix().mapv(|z| z * c64(0.0, -s));
    m[[0, 0]] += c;
    m[[1, 1]] += c;
    m
}

/// `exp(iπ Z_c X_t / 4)` with the control as the first factor.
pub fn cross_resonance_unitary() -> CMatrix {
    let zx = kron(&Pauli::Z.matrix(), &Pauli::X.matrix());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = zx.mapv(|z| z * c64(0.0, s));
    for k in 0..4 {
        m[[k, k]] += s;
    }
    m
}

pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros((4, 4));
    m[[0, 0]] = ONE;
    m[[1, 1]] = ONE;
    m[[2, 3]] = ONE;
    m[[3, 2]] = ONE;
    m
}

/// One circuit layer: a rotation on every qubit, then simultaneous CNOTs.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitLayer {
    pub rotations: Vec<(Pauli, f64)>,
    pub cnots: Vec<(usize, usize)>,
}

/// Brick-pattern CNOT pairs for layer parity `odd`.
pub fn brick_pairs(n: usize, odd: bool) -> Vec<(usize, usize)> {
    let start = usize::from(odd && n > 2);
    (start..n.saturating_sub(1)).step_by(2).map(|c| (c, c + 1)).collect()
}

/// Parameterised circuit whose CNOTs are realised by a cross-resonance
/// drive `Ω(−Z_c X_t + γ I_c X_t)` for `π/(4Ω)` µs followed by the frame
/// rotations `R_z(π/2)_c R_x(π/2)_t`. The `γΩ X_t` crosstalk is the coherent
/// error; rotations and frame gates are ideal.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    pub num_qubits: usize,
    pub omega: f64,
    pub crosstalk: f64,
    pub layers: Vec<CircuitLayer>,
}

/// How a circuit protocol treats noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitMode {
    Ideal,
    Noisy,
    Mitigated,
}

impl CircuitSpec {
    /// `depth` layers with rotation axes drawn from {X, Y, Z} and angles
    /// from `[0, 2π)`.
    pub fn random(num_qubits: usize, depth: usize, seed: u64, omega: f64, crosstalk: f64) -> Result<Self> {
        if num_qubits < 2 {
            return Err(invalid("qubits", "circuit needs at least 2"));
        }
        if depth == 0 {
            return Err(invalid("depth", "must be at least 1"));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(invalid("omega", format!("must be positive, got {omega}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..depth)
            .map(|k| CircuitLayer {
                rotations: (0..num_qubits)
                    .map(|_| {
                        let axis = [Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..3)];
                        (axis, rng.random_range(0.0..2.0 * PI))
                    })
                    .collect(),
                cnots: brick_pairs(num_qubits, k % 2 == 1),
            })
            .collect();
        Ok(Self {
            num_qubits,
            omega,
            crosstalk,
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Drive duration of one CNOT layer.
    pub fn segment_time(&self) -> f64 {
        PI / (4.0 * self.omega)
    }

    /// Ideal pure state after each layer, from `|0…0⟩`.
    pub fn ideal_states(&self) -> Result<Vec<Vec<C64>>> {
        let n = self.num_qubits;
        let d = 1usize << n;
        let mut psi = vec![ZERO; d];
        psi[0] = ONE;
        let apply = |psi: &[C64], u: &CMatrix| -> Vec<C64> {
            (0..d).map(|i| (0..d).map(|j| u[[i, j]] * psi[j]).sum()).collect()
        };
        let mut out = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            for (q, &(p, theta)) in layer.rotations.iter().enumerate() {
                psi = apply(&psi, &embed_operator(&rotation(p, theta), &[q], n)?);
            }
            for &(c, t) in &layer.cnots {
                psi = apply(&psi, &embed_operator(&cnot(), &[c, t], n)?);
            }
            out.push(psi.clone());
        }
        Ok(out)
    }

    /// Drive Hamiltonian and crosstalk for a layer's CNOT pairs.
    pub fn drive(&self, pairs: &[(usize, usize)]) -> Result<(HamiltonianSpec, HamiltonianSpec)> {
        let n = self.num_qubits;
        let mut h = Vec::new();
        let mut dh = Vec::new();
        for &(c, t) in pairs {
            h.push(PauliString::with_ops(n, &[(c, Pauli::Z), (t, Pauli::X)], -self.omega)?);
            dh.push(PauliString::with_ops(n, &[(t, Pauli::X)], self.crosstalk * self.omega)?);
        }
        Ok((HamiltonianSpec::new(n, h)?, HamiltonianSpec::new(n, dh)?))
    }

    /// Protocol with one checkpoint per layer measuring the projector onto
    /// the ideal state at that depth, so the recorded values are fidelities.
    /// `physical` is the environmental Lindblad noise; in
    /// [`CircuitMode::Mitigated`] the recovery cancels `estimate` together
    /// with the crosstalk.
    pub fn protocol(
        &self,
        physical: &NoiseModel,
        estimate: &NoiseModel,
        mode: CircuitMode,
        recovery_error: Option<PauliErrorChannel>,
    ) -> Result<Protocol> {
        let n = self.num_qubits;
        for m in [physical, estimate] {
            if m.num_qubits != n {
                return Err(QemError::DimensionMismatch {
                    expected: n,
                    found: m.num_qubits,
                });
            }
        }
        let observables = self
            .ideal_states()?
            .iter()
            .map(|psi| CMatrix::from_shape_fn((psi.len(), psi.len()), |(i, j)| psi[i] * psi[j].conj()))
            .collect();
        let mut generators = Vec::new();
        let mut recoveries = Vec::new();
        let mut gates = Vec::new();
        let mut steps = Vec::new();
        let mut patterns: Vec<Vec<(usize, usize)>> = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            for (q, &(p, theta)) in layer.rotations.iter().enumerate() {
                steps.push(Step::Gate(gates.len()));
                gates.push(unitary_gate(rotation(p, theta), vec![q], n)?);
            }
            let idx = match patterns.iter().position(|p| *p == layer.cnots) {
                Some(i) => i,
                None => {
                    let (h, dh) = self.drive(&layer.cnots)?;
                    let (physical, recovery) = match mode {
                        CircuitMode::Ideal => (NoiseModel::noiseless(n), Vec::new()),
                        CircuitMode::Noisy | CircuitMode::Mitigated => {
                            let noise = physical.clone().with_coherent(dh.clone())?;
                            let rec = if mode == CircuitMode::Mitigated {
                                let est = estimate.clone().with_coherent(dh)?;
                                decompose_all_minimal(&recovery_generator(&est, Convention::Gksl)?)?
                            } else {
                                Vec::new()
                            };
                            (noise, rec)
                        }
                    };
                    generators.push(Generator::new(&h, &physical, Convention::Gksl)?);
                    recoveries.push(recovery);
                    patterns.push(layer.cnots.clone());
                    patterns.len() - 1
                }
            };
            steps.push(Step::Evolve {
                duration: self.segment_time(),
                generator: idx,
                recovery: idx,
            });
            for &(c, t) in &layer.cnots {
                steps.push(Step::Gate(gates.len()));
                gates.push(unitary_gate(rotation(Pauli::Z, 0.5 * PI), vec![c], n)?);
                steps.push(Step::Gate(gates.len()));
                gates.push(unitary_gate(rotation(Pauli::X, 0.5 * PI), vec![t], n)?);
            }
            steps.push(Step::Checkpoint(vec![k]));
        }
        let protocol = Protocol {
            num_qubits: n,
            generators,
            recoveries,
            gates,
            observables,
            steps,
            recovery_error: if mode == CircuitMode::Mitigated {
                recovery_error
            } else {
                None
            },
            tolerance: 1e-10,
        };
        protocol.validate()?;
        Ok(protocol)
    }
}

fn unitary_gate(u: CMatrix, support: Vec<usize>, n: usize) -> Result<EmbeddedMap> {
    embed_local(&LocalMap::Kraus(KrausMap::new(vec![u], support)?), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, matmul, max_abs_diff};
    use crate::lindblad::DensityState;
    use crate::stochastic::{Backend, Engine};

    #[test]
    fn lattice_shells() {
        let sq = LatticeSpec::new(2, 2).unwrap();
        assert_eq!(sq.nearest_neighbours(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(sq.next_nearest_neighbours(), vec![(0, 3), (1, 2)]);
        let rect = LatticeSpec::new(2, 3).unwrap();
        assert_eq!(rect.nearest_neighbours().len(), 7);
        assert_eq!(rect.next_nearest_neighbours().len(), 4);
        let chain = LatticeSpec::chain(4).unwrap();
        assert_eq!(chain.nearest_neighbours(), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(chain.next_nearest_neighbours(), vec![(0, 2), (1, 3)]);
        assert!(LatticeSpec::new(0, 3).is_err());
    }

    #[test]
    fn two_site_tfim_ground_energy() {
        let (j, h) = (1.3, 0.7);
        let m = build_tfim(2, j, h).unwrap().matrix();
        let e = hermitian_eigenvalues(&m);
        let ground = e.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((ground + (j * j + 4.0 * h * h).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn j1j2_without_j2_is_ising_with_flipped_field() {
        let lat = LatticeSpec::new(2, 2).unwrap();
        let a = build_j1j2(lat, 2.0, 0.0, 0.8).unwrap().matrix();
        let b = build_ising(lat, 2.0, -0.8).unwrap().matrix();
        assert!(max_abs_diff(&a, &b) < 1e-14);
        let full = build_j1j2(lat, 2.0, 1.0, 0.8).unwrap();
        assert_eq!(full.terms.len(), 4 + 2 + 4);
    }

    #[test]
    fn heisenberg_matches_dense_construction() {
        let lat = LatticeSpec::new(1, 2).unwrap();
        let (j, g, h) = (0.9, 0.25, 1.1);
        let m = build_heisenberg2d(lat, j, g, h).unwrap().matrix();
        let (x, y, z) = (Pauli::X.matrix(), Pauli::Y.matrix(), Pauli::Z.matrix());
        let id = Pauli::I.matrix();
        let s = |a: f64, m: CMatrix| m.mapv(|v| v * a);
        let want = s(j * (1.0 + g), kron(&x, &x))
            + s(j * (1.0 - g), kron(&y, &y))
            + s(j, kron(&z, &z))
            + s(-g * h, kron(&y, &id) + kron(&id, &y));
        assert!(max_abs_diff(&m, &want) < 1e-14);
    }

    #[test]
    fn correlation_normalization() {
        let lat = LatticeSpec::new(2, 2).unwrap();
        let o = observable_nn_correlation(lat, 4.0).unwrap();
        let rho = DensityState::plus_state(4);
        assert!((rho.expectation(&o.matrix()) - 1.0).abs() < 1e-14);
        assert!(observable_nnn_correlation(lat, 0.0).is_err());
    }

    #[test]
    fn presets() {
        match noise_preset("relax_dephase", 2, &[0.04, 0.04]).unwrap() {
            NoisePreset::Lindblad(m) => assert_eq!(m.terms.len(), 4),
            _ => panic!(),
        }
        match noise_preset("lowfreq", 2, &[0.05f64.sqrt()]).unwrap() {
            NoisePreset::Lindblad(m) => {
                assert!((m.terms[0].rate - 0.1).abs() < 1e-15);
                assert_eq!(m.terms[0].profile, TimeProfile::Linear);
            }
            _ => panic!(),
        }
        assert!(noise_preset("inhomogeneous_pauli", 1, &[0.1]).is_err());
        assert!(noise_preset("nope", 1, &[]).is_err());
        assert!(noise_preset("relax_dephase", 1, &[0.1, -0.1]).is_err());
        match noise_preset("lowfreq", 1, &[0.0]).unwrap() {
            NoisePreset::Lindblad(m) => assert_eq!(m.total_rate(), 0.0),
            _ => panic!(),
        }
    }

    #[test]
    fn cross_resonance_with_frame_rotations_is_cnot() {
        let frame = kron(&rotation(Pauli::Z, 0.5 * PI), &rotation(Pauli::X, 0.5 * PI));
        let u = matmul(&frame, &cross_resonance_unitary()).mapv(|z| z * C64::from_polar(1.0, 0.25 * PI));
        assert!(max_abs_diff(&u, &cnot()) < 1e-14);
        let (h, _) = CircuitSpec::random(2, 1, 0, 2.0 * PI, 0.0)
            .unwrap()
            .drive(&[(0, 1)])
            .unwrap();
        let t = PI / (4.0 * 2.0 * PI);
        let drive = crate::linalg::expm(&h.matrix().mapv(|z| z * c64(0.0, -t)));
        assert!(max_abs_diff(&drive, &cross_resonance_unitary()) < 1e-12);
    }

    #[test]
    fn brick_layout() {
        assert_eq!(brick_pairs(4, false), vec![(0, 1), (2, 3)]);
        assert_eq!(brick_pairs(4, true), vec![(1, 2)]);
        assert_eq!(brick_pairs(2, true), vec![(0, 1)]);
    }

    #[test]
    fn ideal_protocol_has_unit_fidelity() {
        let spec = CircuitSpec::random(3, 3, 11, 2.0 * PI, 0.01).unwrap();
        let env = NoiseModel::noiseless(3);
        let p = spec.protocol(&env, &env, CircuitMode::Ideal, None).unwrap();
        let e = Engine::new(p, &DensityState::computational(3, 0), Backend::Auto).unwrap();
        let out = e.run_deterministic().unwrap();
        for s in &out {
            for v in &s.values {
                assert!((v - 1.0).abs() < 1e-8, "{v}");
            }
        }
    }

    #[test]
    fn infinite_sample_circuit_recovers_ideal() {
        let spec = CircuitSpec::random(2, 2, 5, 2.0 * PI, 0.01).unwrap();
        let env = relax_dephase(2, 0.04, 0.04).unwrap();
        let init = DensityState::computational(2, 0);
        let noisy = spec.protocol(&env, &env, CircuitMode::Noisy, None).unwrap();
        let fn_noisy = Engine::new(noisy, &init, Backend::Auto)
            .unwrap()
            .run_deterministic()
            .unwrap();
        let mit = spec
            .protocol(&env, &env, CircuitMode::Mitigated, None)
            .unwrap()
            .infinite_sample()
            .unwrap();
        let fn_mit = Engine::new(mit, &init, Backend::Auto)
            .unwrap()
            .run_deterministic()
            .unwrap();
        let last = |s: &[crate::stochastic::CheckpointSample]| s.last().unwrap().values[0];
        assert!(last(&fn_noisy) < 0.999);
        assert!((last(&fn_mit) - 1.0).abs() < 1e-7, "{}", last(&fn_mit));
    }
}
