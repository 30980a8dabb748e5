// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Stochastic error mitigation by pre-sampled recovery jumps.
//!
//! A run is described by a [`Protocol`]: a sequence of evolution segments,
//! instantaneous ideal gates and checkpoints. Each evolution segment carries
//! the decompositions of the recovery generator active during it. For every
//! trajectory a jump schedule is drawn first; the trajectory then evolves
//! under the physical noise and applies the scheduled basis operations.
//! Each outcome is weighted by `C(t)·α`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ndarray::Array1;

use crate::basis::{BasisLabel, IDENTITY_ID};
use crate::decomposition::QuasiDecomposition;
use crate::error::{invalid, QemError, Result};
use crate::linalg::{c64, hermitize, identity, CMatrix, CompensatedSum, RMatrix, C64};
use crate::lindblad::{
    expectation, Convention, DensityState, Generator, HamiltonianSpec, Integrator, NoiseModel, PauliPropagator,
    TimeProfile,
};
use crate::pauli::{
    embed_local, pauli_channel_ptm, pauli_traces, pauli_traces_real, EmbeddedMap, LocalMap, Pauli, TransferMatrix,
};

/// Largest register handled by the Pauli-vector backend.
pub const PAULI_BACKEND_MAX_QUBITS: usize = 4;

/// Single-qubit Pauli channel `(1 − Σp)𝓘 + p_x𝓧 + p_y𝓨 + p_z𝓩`, used to model
/// imperfect recovery operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliErrorChannel {
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl PauliErrorChannel {
    pub fn new(px: f64, py: f64, pz: f64) -> Result<Self> {
        for (name, p) in [("p_x", px), ("p_y", py), ("p_z", pz)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, format!("probability out of range: {p}")));
            }
        }
        if px + py + pz > 1.0 {
            return Err(invalid("recovery error", "probabilities sum above 1"));
        }
        Ok(Self { px, py, pz })
    }

    pub fn ptm(&self) -> RMatrix {
        pauli_channel_ptm(self.px, self.py, self.pz)
    }

    fn kraus_terms(&self) -> Vec<(f64, CMatrix)> {
        let p0 = 1.0 - self.px - self.py - self.pz;
        [
            (p0, Pauli::I),
            (self.px, Pauli::X),
            (self.py, Pauli::Y),
            (self.pz, Pauli::Z),
        ]
        .into_iter()
        .filter(|(p, _)| *p > 0.0)
        .map(|(p, s)| (p, s.matrix()))
        .collect()
    }
}

/// One instruction of a protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Evolve for `duration` µs under `generators[generator]`, mitigating
    /// with `recoveries[recovery]`.
    Evolve {
        duration: f64,
        generator: usize,
        recovery: usize,
    },
    /// Apply `gates[i]`, an ideal instantaneous map.
    Gate(usize),
    /// Record the listed observables.
    Checkpoint(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Protocol {
    pub num_qubits: usize,
    pub generators: Vec<Generator>,
    pub recoveries: Vec<Vec<QuasiDecomposition>>,
    pub gates: Vec<EmbeddedMap>,
    pub observables: Vec<CMatrix>,
    pub steps: Vec<Step>,
    pub recovery_error: Option<PauliErrorChannel>,
    /// Integrator tolerance for the density-matrix backend.
    pub tolerance: f64,
}

impl Protocol {
    /// Evolution for `t_end` under `H` and `noise_exp` with `checkpoints`
    /// equally spaced records of every observable.
    pub fn evolution(
        h: &HamiltonianSpec,
        noise_exp: &NoiseModel,
        decomps: Vec<QuasiDecomposition>,
        t_end: f64,
        checkpoints: usize,
        observables: Vec<CMatrix>,
        convention: Convention,
    ) -> Result<Self> {
        if checkpoints == 0 {
            return Err(invalid("checkpoints", "need at least one"));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be positive, got {t_end}")));
        }
        noise_exp.validate_physical()?;
        let generator = Generator::new(h, noise_exp, convention)?;
        let all: Vec<usize> = (0..observables.len()).collect();
        let mut steps = Vec::new();
        for _ in 0..checkpoints {
            steps.push(Step::Evolve {
                duration: t_end / checkpoints as f64,
                generator: 0,
                recovery: 0,
            });
            steps.push(Step::Checkpoint(all.clone()));
        }
        let p = Self {
            num_qubits: h.num_qubits,
            generators: vec![generator],
            recoveries: vec![decomps],
            gates: Vec::new(),
            observables,
            steps,
            recovery_error: None,
            tolerance: 1e-10,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_recovery_error(mut self, channel: Option<PauliErrorChannel>) -> Self {
        self.recovery_error = channel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_qubits;
        let d = 1usize << n;
        for g in &self.generators {
            if g.num_qubits() != n {
                return Err(QemError::DimensionMismatch {
                    expected: n,
                    found: g.num_qubits(),
                });
            }
        }
        for set in &self.recoveries {
            for dec in set {
                if dec.support.iter().any(|&q| q >= n) {
                    return Err(QemError::InvalidSupport {
                        support: dec.support.clone(),
                        qubits: n,
                    });
                }
                for (l, _) in &dec.terms {
                    if l.arity() != dec.arity() {
                        return Err(invalid("decomposition", "label arity differs from support"));
                    }
                }
            }
        }
        for o in &self.observables {
            if o.dim() != (d, d) {
                return Err(QemError::DimensionMismatch {
                    expected: d,
                    found: o.nrows(),
                });
            }
        }
        for s in &self.steps {
            match s {
                Step::Evolve {
                    duration,
                    generator,
                    recovery,
                } => {
                    if !(*duration >= 0.0 && duration.is_finite()) {
                        return Err(invalid("duration", format!("must be nonnegative, got {duration}")));
                    }
                    if *generator >= self.generators.len() || *recovery >= self.recoveries.len() {
                        return Err(invalid("step", "generator or recovery index out of range"));
                    }
                }
                Step::Gate(i) => {
                    if *i >= self.gates.len() {
                        return Err(invalid("step", "gate index out of range"));
                    }
                }
                Step::Checkpoint(obs) => {
                    if obs.iter().any(|&i| i >= self.observables.len()) {
                        return Err(invalid("step", "observable index out of range"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn total_time(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Evolve { duration, .. } => *duration,
                _ => 0.0,
            })
            .sum()
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for s in &self.steps {
            match s {
                Step::Evolve { duration, .. } => t += duration,
                Step::Checkpoint(_) => out.push(t),
                Step::Gate(_) => {}
            }
        }
        out
    }

    /// `ln C(t)` at each checkpoint.
    pub fn log_overheads(&self) -> Vec<f64> {
        self.integrate_over_segments(|d| d.c1)
    }

    /// Expected jump count up to each checkpoint.
    pub fn expected_jumps(&self) -> Vec<f64> {
        self.integrate_over_segments(|d| d.gamma)
    }

    fn integrate_over_segments(&self, f: impl Fn(&QuasiDecomposition) -> f64) -> Vec<f64> {
        let mut t = 0.0;
        let mut acc = 0.0;
        let mut out = Vec::new();
        for s in &self.steps {
            match s {
                Step::Evolve { duration, recovery, .. } => {
                    for d in &self.recoveries[*recovery] {
                        acc += f(d) * d.profile.integral(t, t + duration);
                    }
                    t += duration;
                }
                Step::Checkpoint(_) => out.push(acc),
                Step::Gate(_) => {}
            }
        }
        out
    }

    pub fn is_time_independent(&self) -> bool {
        self.generators.iter().all(Generator::is_time_independent)
    }

    /// The `N_s → ∞` limit: every recovery set is folded into its segment's
    /// generator as `q₀𝓘 + Σ q_j 𝓡∘B_j`, where `𝓡` is the recovery error on
    /// the qubits each operation touches. The result has no jumps and `C = 1`.
    pub fn infinite_sample(&self) -> Result<Protocol> {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut steps = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            match s {
                Step::Evolve {
                    duration,
                    generator,
                    recovery,
                } => {
                    let key = (*generator, *recovery);
                    let idx = match pairs.iter().position(|p| *p == key) {
                        Some(i) => i,
                        None => {
                            pairs.push(key);
                            pairs.len() - 1
                        }
                    };
                    steps.push(Step::Evolve {
                        duration: *duration,
                        generator: idx,
                        recovery: 0,
                    });
                }
                other => steps.push(other.clone()),
            }
        }
        let mut generators = Vec::with_capacity(pairs.len());
        for &(g, r) in &pairs {
            let mut gen = self.generators[g].clone();
            for dec in &self.recoveries[r] {
                let ptm = effective_recovery_ptm(dec, self.recovery_error.as_ref());
                let map = embed_local(
                    &LocalMap::Transfer {
                        ptm: TransferMatrix {
                            matrix: ptm,
                            arity: dec.arity(),
                        },
                        support: dec.support.clone(),
                    },
                    self.num_qubits,
                )?;
                gen = gen.with_superoperator(map, 1.0, dec.profile)?;
            }
            generators.push(gen);
        }
        Ok(Protocol {
            num_qubits: self.num_qubits,
            generators,
            recoveries: vec![Vec::new()],
            gates: self.gates.clone(),
            observables: self.observables.clone(),
            steps,
            recovery_error: None,
            tolerance: self.tolerance,
        })
    }
}

/// Qubits (positions within the label's support) acted on nontrivially.
fn active_positions(label: BasisLabel) -> Vec<usize> {
    label
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, &id)| id != IDENTITY_ID)
        .map(|(i, _)| i)
        .collect()
}

/// Local transfer matrix `q₀𝓘 + Σ q_j 𝓡∘B_j`.
pub fn effective_recovery_ptm(dec: &QuasiDecomposition, error: Option<&PauliErrorChannel>) -> RMatrix {
    let m = dec.arity();
    let dim = 1usize << (2 * m);
    let mut out = identity::<f64>(dim).mapv(|v| v * dec.q0);
    for (label, q) in &dec.terms {
        let mut b = label.ptm();
        if let Some(err) = error {
            let e1 = err.ptm();
            for pos in active_positions(*label) {
                let local = match (m, pos) {
                    (1, _) => e1.clone(),
                    (_, 0) => crate::linalg::kron(&e1, &identity::<f64>(4)),
                    _ => crate::linalg::kron(&identity::<f64>(4), &e1),
                };
                b = local.dot(&b);
            }
        }
        out.scaled_add(*q, &b);
    }
    out
}

/// One scheduled recovery operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Absolute time, µs.
    pub time: f64,
    /// Index of the protocol step during which it happens.
    pub step: usize,
    /// Index into that step's recovery set.
    pub decomposition: usize,
    /// Index into the decomposition's terms.
    pub term: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSchedule {
    pub events: Vec<JumpEvent>,
    /// Product of the event signs.
    pub alpha: f64,
    pub trajectory_seed: u64,
    pub index: u64,
}

/// Smallest `t ≥ a` with `∫_a^t (Γc + Γl s) ds = e`; infinite if the
/// intensity vanishes.
pub fn jump_time(a: f64, e: f64, gamma_const: f64, gamma_linear: f64) -> f64 {
    let (gc, gl) = (gamma_const, gamma_linear);
    if gl == 0.0 {
        return if gc > 0.0 { a + e / gc } else { f64::INFINITY };
    }
    // gl/2 t² + gc t = k
    let k = e + gc * a + 0.5 * gl * a * a;
    let disc = gc * gc + 2.0 * gl * k;
    let t = 2.0 * k / (gc + disc.sqrt());
    if t.is_finite() && t >= a {
        return t;
    }
    bisect_jump(a, e, gc, gl)
}

fn bisect_jump(a: f64, e: f64, gc: f64, gl: f64) -> f64 {
    let f = |t: f64| gc * (t - a) + 0.5 * gl * (t * t - a * a) - e;
    let mut hi = a + 1.0;
    let mut grow = 0;
    while f(hi) < 0.0 {
        hi = a + 2.0 * (hi - a);
        grow += 1;
        if grow > 200 {
            return f64::INFINITY;
        }
    }
    let mut lo = a;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn rates(set: &[QuasiDecomposition]) -> (f64, f64) {
    let mut gc = 0.0;
    let mut gl = 0.0;
    for d in set {
        match d.profile {
            TimeProfile::Constant => gc += d.gamma,
            TimeProfile::Linear => gl += d.gamma,
        }
    }
    (gc, gl)
}

/// Uniform draw in `(0, 1]`.
fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Picks `(decomposition, term)` at time `t` with one uniform `u`.
fn select_term(set: &[QuasiDecomposition], t: f64, u: f64) -> Option<(usize, usize)> {
    let weights: Vec<f64> = set.iter().map(|d| d.gamma * d.profile.value(t)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let target = u * total;
    let mut offset = 0.0;
    let last = weights.iter().rposition(|&w| w > 0.0)?;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if target < offset + w || i == last {
            let local = ((target - offset) / w).clamp(0.0, 1.0);
            return set[i].select(local).map(|j| (i, j));
        }
        offset += w;
    }
    None
}

/// Draws a schedule for a single interval `[0, t_end]` with one recovery set.
pub fn sample_jump_schedule<R: Rng>(decomps: &[QuasiDecomposition], t_end: f64, rng: &mut R) -> JumpSchedule {
    let segments = [(0.0, t_end, 0usize, decomps)];
    let events = sample_events(&segments, rng);
    finish_schedule(events, 0, 0)
}

fn finish_schedule(events: Vec<JumpEvent>, seed: u64, index: u64) -> JumpSchedule {
    let alpha = events.iter().map(|e| e.alpha).product();
    JumpSchedule {
        events,
        alpha,
        trajectory_seed: seed,
        index,
    }
}

fn sample_events<R: Rng>(segments: &[(f64, f64, usize, &[QuasiDecomposition])], rng: &mut R) -> Vec<JumpEvent> {
    let mut events = Vec::new();
    let mut e = -open_uniform(rng).ln();
    for &(start, end, step, set) in segments {
        let (gc, gl) = rates(set);
        if gc == 0.0 && gl == 0.0 {
            continue;
        }
        let mut a = start;
        loop {
            let t = jump_time(a, e, gc, gl);
            if t > end {
                e -= gc * (end - a) + 0.5 * gl * (end * end - a * a);
                e = e.max(0.0);
                break;
            }
            let u = open_uniform(rng);
            if let Some((d, j)) = select_term(set, t, u) {
                events.push(JumpEvent {
                    time: t,
                    step,
                    decomposition: d,
                    term: j,
                    alpha: set[d].alpha(j),
                });
            }
            a = t;
            e = -open_uniform(rng).ln();
        }
    }
    events
}

/// Per-trajectory generator: ChaCha8 seeded by the master seed, with the
/// trajectory index as stream.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Record at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSample {
    /// Parity of the jumps applied so far.
    pub alpha: f64,
    /// Trace of the (possibly subnormalized) state.
    pub trace: f64,
    /// Raw observable values `Tr(O ρ_Q)`, in checkpoint order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub index: u64,
    pub n_jumps: usize,
    pub alpha: f64,
    pub checkpoints: Vec<CheckpointSample>,
}

/// Simulation backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Pauli vectors when the protocol is time independent and small,
    /// density matrices otherwise.
    #[default]
    Auto,
    PauliVector,
    DensityMatrix,
}

#[derive(Debug, Clone)]
struct CompiledOp {
    map: EmbeddedMap,
    errors: Vec<EmbeddedMap>,
}

#[derive(Debug)]
enum Kernel {
    Pauli {
        propagators: Vec<Option<PauliPropagator>>,
        initial: Array1<f64>,
        observables: Vec<Array1<f64>>,
    },
    Density {
        initial: CMatrix,
    },
}

/// A protocol prepared for repeated trajectory runs.
#[derive(Debug)]
pub struct Engine {
    protocol: Protocol,
    ops: Vec<Vec<Vec<CompiledOp>>>,
    segments: Vec<(f64, f64, usize)>,
    log_c: Vec<f64>,
    kernel: Kernel,
}

impl Engine {
    pub fn new(protocol: Protocol, initial: &DensityState, backend: Backend) -> Result<Self> {
        protocol.validate()?;
        let n = protocol.num_qubits;
        if initial.num_qubits() != n {
            return Err(QemError::DimensionMismatch {
                expected: n,
                found: initial.num_qubits(),
            });
        }
        let use_pauli = match backend {
            Backend::Auto => n <= PAULI_BACKEND_MAX_QUBITS && protocol.is_time_independent(),
            Backend::PauliVector => {
                if !protocol.is_time_independent() {
                    return Err(invalid(
                        "backend",
                        "Pauli-vector backend needs time-independent generators",
                    ));
                }
                true
            }
            Backend::DensityMatrix => false,
        };
        let error_maps = |label: BasisLabel, support: &[usize]| -> Result<Vec<EmbeddedMap>> {
            let Some(err) = protocol.recovery_error else {
                return Ok(Vec::new());
            };
            active_positions(label)
                .into_iter()
                .map(|pos| EmbeddedMap::from_signed_kraus(err.kraus_terms(), vec![support[pos]], n))
                .collect()
        };
        let mut ops = Vec::with_capacity(protocol.recoveries.len());
        for set in &protocol.recoveries {
            let mut per_set = Vec::with_capacity(set.len());
            for dec in set {
                let mut per_dec = Vec::with_capacity(dec.terms.len());
                for (label, _) in &dec.terms {
                    per_dec.push(CompiledOp {
                        map: EmbeddedMap::from_signed_kraus(vec![(1.0, label.operator())], dec.support.clone(), n)?,
                        errors: error_maps(*label, &dec.support)?,
                    });
                }
                per_set.push(per_dec);
            }
            ops.push(per_set);
        }
        let mut segments = Vec::new();
        let mut t = 0.0;
        for (i, s) in protocol.steps.iter().enumerate() {
            if let Step::Evolve { duration, .. } = s {
                segments.push((t, t + duration, i));
                t += duration;
            }
        }
        let kernel = if use_pauli {
            let mut spans = vec![0.0f64; protocol.generators.len()];
            for s in &protocol.steps {
                if let Step::Evolve {
                    duration, generator, ..
                } = s
                {
                    spans[*generator] = spans[*generator].max(*duration);
                }
            }
            let propagators = protocol
                .generators
                .iter()
                .zip(&spans)
                .map(|(g, &span)| {
                    if span > 0.0 {
                        PauliPropagator::new(g.transfer_matrix(0.0), span).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let dim = 1usize << (2 * n);
            let mut v0 = Array1::zeros(dim);
            pauli_traces_real(&initial.matrix, n, &mut v0);
            let scale = 1.0 / (1usize << n) as f64;
            let observables = protocol
                .observables
                .iter()
                .map(|o| pauli_traces(o).map(|c| c.mapv(|z| z.re * scale)))
                .collect::<Result<Vec<_>>>()?;
            Kernel::Pauli {
                propagators,
                initial: v0,
                observables,
            }
        } else {
            Kernel::Density {
                initial: initial.matrix.clone(),
            }
        };
        let log_c = protocol.log_overheads();
        Ok(Self {
            protocol,
            ops,
            segments,
            log_c,
            kernel,
        })
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn uses_pauli_backend(&self) -> bool {
        matches!(self.kernel, Kernel::Pauli { .. })
    }

    /// `C(t)` at each checkpoint.
    pub fn overheads(&self) -> Vec<f64> {
        self.log_c.iter().map(|l| l.exp()).collect()
    }

    /// Draws the schedule of trajectory `index`.
    pub fn sample_schedule(&self, master_seed: u64, index: u64) -> JumpSchedule {
        let mut rng = trajectory_rng(master_seed, index);
        let segs: Vec<(f64, f64, usize, &[QuasiDecomposition])> = self
            .segments
            .iter()
            .map(|&(a, b, step)| {
                let Step::Evolve { recovery, .. } = &self.protocol.steps[step] else {
                    unreachable!("segments only index evolve steps")
                };
                (a, b, step, self.protocol.recoveries[*recovery].as_slice())
            })
            .collect();
        let events = sample_events(&segs, &mut rng);
        finish_schedule(events, master_seed, index)
    }

    fn op(&self, step: usize, ev: &JumpEvent) -> &CompiledOp {
        let Step::Evolve { recovery, .. } = &self.protocol.steps[step] else {
            unreachable!("events only refer to evolve steps")
        };
        &self.ops[*recovery][ev.decomposition][ev.term]
    }

    /// Runs one trajectory along a given schedule.
    pub fn run(&self, schedule: &JumpSchedule) -> Result<TrajectoryResult> {
        let checkpoints = match &self.kernel {
            Kernel::Pauli {
                propagators,
                initial,
                observables,
            } => self.run_pauli(schedule, propagators, initial, observables)?,
            Kernel::Density { initial } => self.run_density(schedule, initial)?,
        };
        Ok(TrajectoryResult {
            index: schedule.index,
            n_jumps: schedule.events.len(),
            alpha: schedule.alpha,
            checkpoints,
        })
    }

    fn run_pauli(
        &self,
        schedule: &JumpSchedule,
        propagators: &[Option<PauliPropagator>],
        initial: &Array1<f64>,
        observables: &[Array1<f64>],
    ) -> Result<Vec<CheckpointSample>> {
        let mut v = initial.clone();
        let mut scratch = Vec::new();
        let mut t = 0.0;
        let mut alpha = 1.0;
        let mut cursor = 0;
        let mut out = Vec::new();
        let events = &schedule.events;
        for (i, s) in self.protocol.steps.iter().enumerate() {
            match s {
                Step::Evolve {
                    duration, generator, ..
                } => {
                    let prop = propagators[*generator].as_ref();
                    let end = t + duration;
                    while cursor < events.len() && events[cursor].step == i {
                        let ev = &events[cursor];
                        if let Some(p) = prop {
                            p.apply(&mut v, ev.time - t);
                        }
                        t = ev.time;
                        let op = self.op(i, ev);
                        op.map.apply_pauli(&mut v, &mut scratch);
                        for e in &op.errors {
                            e.apply_pauli(&mut v, &mut scratch);
                        }
                        alpha *= ev.alpha;
                        cursor += 1;
                    }
                    if let Some(p) = prop {
                        p.apply(&mut v, end - t);
                    }
                    t = end;
                }
                Step::Gate(g) => self.protocol.gates[*g].apply_pauli(&mut v, &mut scratch),
                Step::Checkpoint(obs) => out.push(CheckpointSample {
                    alpha,
                    trace: v[0],
                    values: obs.iter().map(|&k| observables[k].dot(&v)).collect(),
                }),
            }
        }
        Ok(out)
    }

    fn run_density(&self, schedule: &JumpSchedule, initial: &CMatrix) -> Result<Vec<CheckpointSample>> {
        let mut rho = initial.clone();
        let mut t = 0.0;
        let mut alpha = 1.0;
        let mut cursor = 0;
        let mut out = Vec::new();
        let events = &schedule.events;
        let tol = self.protocol.tolerance;
        for (i, s) in self.protocol.steps.iter().enumerate() {
            match s {
                Step::Evolve {
                    duration, generator, ..
                } => {
                    let mut integ = Integrator::new(&self.protocol.generators[*generator], tol, f64::INFINITY);
                    let end = t + duration;
                    while cursor < events.len() && events[cursor].step == i {
                        let ev = &events[cursor];
                        integ.advance(&mut rho, t, ev.time)?;
                        t = ev.time;
                        let op = self.op(i, ev);
                        rho = op.map.apply(&rho);
                        for e in &op.errors {
                            rho = e.apply(&rho);
                        }
                        alpha *= ev.alpha;
                        cursor += 1;
                        integ = Integrator::new(&self.protocol.generators[*generator], tol, f64::INFINITY);
                    }
                    integ.advance(&mut rho, t, end)?;
                    t = end;
                }
                Step::Gate(g) => rho = self.protocol.gates[*g].apply(&rho),
                Step::Checkpoint(obs) => {
                    let mut h = rho.clone();
                    hermitize(&mut h);
                    out.push(CheckpointSample {
                        alpha,
                        trace: h.diag().iter().map(|z| z.re).sum(),
                        values: obs
                            .iter()
                            .map(|&k| expectation(&self.protocol.observables[k], &h))
                            .collect(),
                    });
                }
            }
        }
        Ok(out)
    }

    /// Final density matrix of one trajectory; density-matrix backend only.
    pub fn final_state(&self, schedule: &JumpSchedule) -> Result<CMatrix> {
        let Kernel::Density { initial } = &self.kernel else {
            return Err(invalid("backend", "final states need the density-matrix backend"));
        };
        let mut rho = initial.clone();
        let mut t = 0.0;
        let mut cursor = 0;
        let events = &schedule.events;
        for (i, s) in self.protocol.steps.iter().enumerate() {
            match s {
                Step::Evolve {
                    duration, generator, ..
                } => {
                    let g = &self.protocol.generators[*generator];
                    let end = t + duration;
                    while cursor < events.len() && events[cursor].step == i {
                        let ev = &events[cursor];
                        Integrator::new(g, self.protocol.tolerance, f64::INFINITY).advance(&mut rho, t, ev.time)?;
                        t = ev.time;
                        let op = self.op(i, ev);
                        rho = op.map.apply(&rho);
                        for e in &op.errors {
                            rho = e.apply(&rho);
                        }
                        cursor += 1;
                    }
                    Integrator::new(g, self.protocol.tolerance, f64::INFINITY).advance(&mut rho, t, end)?;
                    t = end;
                }
                Step::Gate(k) => rho = self.protocol.gates[*k].apply(&rho),
                Step::Checkpoint(_) => {}
            }
        }
        hermitize(&mut rho);
        Ok(rho)
    }

    /// Runs trajectories `0..samples` on `workers` threads. Results are in
    /// index order and do not depend on the worker count.
    pub fn run_trajectories(&self, samples: usize, master_seed: u64, workers: usize) -> Result<Vec<TrajectoryResult>> {
        if samples == 0 {
            return Err(QemError::EmptyInput("trajectory count"));
        }
        let work = || {
            (0..samples as u64)
                .into_par_iter()
                .map(|i| self.run(&self.sample_schedule(master_seed, i)))
                .collect::<Result<Vec<_>>>()
        };
        if workers <= 1 {
            return (0..samples as u64)
                .map(|i| self.run(&self.sample_schedule(master_seed, i)))
                .collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?;
        pool.install(work)
    }

    /// Runs and aggregates a batch.
    pub fn run_batch(&self, samples: usize, master_seed: u64, workers: usize) -> Result<BatchResult> {
        let results = self.run_trajectories(samples, master_seed, workers)?;
        self.aggregate(&results)
    }

    /// The single deterministic trajectory with no jumps and weight one.
    /// Equals the mitigated expectation when the protocol has no recovery,
    /// such as the output of [`Protocol::infinite_sample`].
    pub fn run_deterministic(&self) -> Result<Vec<CheckpointSample>> {
        let schedule = finish_schedule(Vec::new(), 0, 0);
        Ok(self.run(&schedule)?.checkpoints)
    }

    /// Signed, `C`-weighted estimates per checkpoint and observable.
    pub fn aggregate(&self, results: &[TrajectoryResult]) -> Result<BatchResult> {
        if results.is_empty() {
            return Err(QemError::EmptyInput("trajectories"));
        }
        let times = self.protocol.checkpoint_times();
        let expected = self.protocol.expected_jumps();
        let mut checkpoints = Vec::with_capacity(times.len());
        for (k, &time) in times.iter().enumerate() {
            let c = self.log_c[k].exp();
            let n_obs = results[0].checkpoints[k].values.len();
            let mut estimates = Vec::with_capacity(n_obs);
            for o in 0..n_obs {
                let samples: Vec<f64> = results
                    .iter()
                    .map(|r| {
                        let cp = &r.checkpoints[k];
                        cp.alpha * cp.values[o]
                    })
                    .collect();
                estimates.push(estimate(&samples, c)?);
            }
            let traces: Vec<f64> = results
                .iter()
                .map(|r| r.checkpoints[k].alpha * r.checkpoints[k].trace)
                .collect();
            checkpoints.push(CheckpointEstimate {
                time,
                c,
                expected_jumps: expected[k],
                estimates,
                trace: estimate(&traces, c)?,
            });
        }
        let jumps: Vec<f64> = results.iter().map(|r| r.n_jumps as f64).collect();
        Ok(BatchResult {
            samples: results.len(),
            checkpoints,
            jumps: estimate(&jumps, 1.0)?,
            expected_jumps: expected.last().copied().unwrap_or(0.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub c: f64,
    /// `C/√N_s`, the predicted accuracy scale.
    pub predicted_error: f64,
}

/// `mean = (C/N) Σ x_m`, `stderr = C·s/√N` with the sample deviation `s` of
/// the signed outcomes `x_m = α_m O_m`.
pub fn estimate(signed: &[f64], c: f64) -> Result<EstimatorResult> {
    if signed.is_empty() {
        return Err(QemError::EmptyInput("samples"));
    }
    let n = signed.len() as f64;
    let mut sum = CompensatedSum::new();
    for &x in signed {
        sum.add(x);
    }
    let mean = sum.value() / n;
    let mut sq = CompensatedSum::new();
    for &x in signed {
        sq.add((x - mean) * (x - mean));
    }
    let var = if signed.len() > 1 { sq.value() / (n - 1.0) } else { 0.0 };
    let out = EstimatorResult {
        mean: c * mean,
        stderr: c * (var / n).sqrt(),
        samples: signed.len(),
        c,
        predicted_error: c / n.sqrt(),
    };
    if !(out.mean.is_finite() && out.stderr.is_finite()) {
        return Err(invalid("estimate", "non-finite result"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEstimate {
    pub time: f64,
    pub c: f64,
    pub expected_jumps: f64,
    pub estimates: Vec<EstimatorResult>,
    pub trace: EstimatorResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub samples: usize,
    pub checkpoints: Vec<CheckpointEstimate>,
    /// Empirical jump count over the whole run.
    pub jumps: EstimatorResult,
    pub expected_jumps: f64,
}

/// First-order deterministic expansion: per slice of length `dt`, a noisy
/// step under `generator` followed by `I + dt·Σ g(t) G_S`, with `g` taken at
/// the slice midpoint. Returns the observable values at `t_end`.
pub fn continuous_reference(
    initial: &DensityState,
    generator: &Generator,
    recovery: &crate::decomposition::RecoveryGenerator,
    dt: f64,
    t_end: f64,
    observables: &[CMatrix],
    tolerance: f64,
) -> Result<Vec<f64>> {
    let slices = slice_count(dt, t_end)?;
    let mut out = continuous_reference_series(initial, generator, recovery, dt, &[slices], observables, tolerance)?;
    Ok(out.pop().expect("one record"))
}

/// Same expansion, recording the observables after each slice count in
/// `records` (ascending).
pub fn continuous_reference_series(
    initial: &DensityState,
    generator: &Generator,
    recovery: &crate::decomposition::RecoveryGenerator,
    dt: f64,
    records: &[usize],
    observables: &[CMatrix],
    tolerance: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    if records.is_empty() || records.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("records", "need ascending slice counts"));
    }
    let n = initial.num_qubits();
    let maps = recovery
        .terms
        .iter()
        .map(|term| {
            let map = embed_local(
                &LocalMap::Transfer {
                    ptm: TransferMatrix {
                        matrix: term.generator.clone(),
                        arity: term.arity(),
                    },
                    support: term.support.clone(),
                },
                n,
            )?;
            Ok((map, term.profile))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut integ = Integrator::new(generator, tolerance, f64::INFINITY);
    let mut rho = initial.matrix.clone();
    let mut out = Vec::with_capacity(records.len());
    let mut next_record = 0;
    for k in 0..*records.last().expect("nonempty") {
        let t0 = k as f64 * dt;
        let t1 = t0 + dt;
        integ.advance(&mut rho, t0, t1)?;
        let mid = 0.5 * (t0 + t1);
        let mut next = rho.clone();
        for (map, profile) in &maps {
            map.add_apply(dt * profile.value(mid), &rho, &mut next);
        }
        rho = next;
        if k + 1 == records[next_record] {
            let mut h = rho.clone();
            hermitize(&mut h);
            out.push(observables.iter().map(|o| expectation(o, &h)).collect());
            next_record += 1;
        }
    }
    Ok(out)
}

fn slice_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let slices = (t_end / dt).round();
    if slices < 1.0 || ((slices * dt) - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(invalid("dt", "must divide the total time"));
    }
    Ok(slices as usize)
}

/// `ρ_eff = (C/N) Σ α_m ρ_m` (Hermitized) and `F = √⟨ψ|ρ_eff|ψ⟩` clipped to
/// `[0, 1]`.
pub fn effective_state_and_fidelity(states: &[(f64, CMatrix)], c: f64, psi: &[C64]) -> Result<(CMatrix, f64)> {
    if states.is_empty() {
        return Err(QemError::EmptyInput("trajectory states"));
    }
    let d = states[0].1.nrows();
    let mut rho = CMatrix::zeros((d, d));
    let w = c / states.len() as f64;
    for (alpha, s) in states {
        rho.scaled_add(c64(alpha * w, 0.0), s);
    }
    hermitize(&mut rho);
    let f = pure_fidelity(&rho, psi)?;
    Ok((rho, f))
}

/// `√⟨ψ|ρ|ψ⟩` clipped to `[0, 1]`; `ψ` must be normalized.
pub fn pure_fidelity(rho: &CMatrix, psi: &[C64]) -> Result<f64> {
    if psi.len() != rho.nrows() {
        return Err(QemError::DimensionMismatch {
            expected: rho.nrows(),
            found: psi.len(),
        });
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(QemError::NonPureReference { purity: norm });
    }
    let v = Array1::from(psi.to_vec());
    let rv = rho.dot(&v);
    let overlap: C64 = v.iter().zip(rv.iter()).map(|(a, b)| a.conj() * b).sum();
    Ok(fidelity_from_overlap(overlap.re))
}

/// `√clip(x)` for an estimated `⟨ψ|ρ|ψ⟩`.
pub fn fidelity_from_overlap(x: f64) -> f64 {
    x.clamp(0.0, 1.0).sqrt()
}

/// `√Tr(ρ_I ρ)` for a reference density matrix that must be pure.
pub fn fidelity_with_reference(rho: &CMatrix, reference: &CMatrix) -> Result<f64> {
    let purity = expectation(reference, reference);
    if (purity - 1.0).abs() > 1e-8 {
        return Err(QemError::NonPureReference { purity });
    }
    Ok(fidelity_from_overlap(expectation(reference, rho)))
}
