//! Quantum histories recorded on apparatus qubits.
//!
//! A `d`-qubit system evolves through gate segments `T_1, T_2, ...`, and
//! after each segment one of its qubits is premeasured onto a fresh
//! apparatus qubit `A_l`. The joint state is `sum_alpha |alpha> C_alpha
//! |psi_0>` with the chain operator
//!
//! ```text
//! C_alpha = T_final P^(n)_{alpha_n} T_n ... P^(1)_{alpha_1} T_1
//! ```
//!
//! (rightmost factor acts first). Tracing out the system gives the history
//! density matrix `D_{alpha alpha'} = Tr(C_alpha rho_0 C_alpha'^dagger)`.
//! Reading a subset of apparatus qubits out through the measurement scheme
//! rotates those indices and removes every coherence between different
//! readouts `beta`, leaving a block-diagonal [`BranchTree`].
//!
//! History indices put event 1 in the most significant bit, matching the
//! canonical order of the `A` qubits in [`build_history_state`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gates::{erasing_gate, rotation_gate, standard_gate, RotationParams, StandardGate};
use crate::mms::{premeasure, readout_rotation, BRANCH_PRUNE};
use crate::qstate::{
    partial_trace, scatter_bits, DensityOperator, QubitLabel, Register, StateVector, Tensor,
    UnitaryOperator, C64, DEFAULT_MAX_QUBITS, ONE, ZERO,
};

/// Most premeasurement events a spec may hold.
pub const MAX_EVENTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    /// `R(pi/4, 0)`.
    H,
    X,
    Z,
    /// First target controls, second is flipped.
    Cnot,
    R(RotationParams),
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn unitary(&self) -> UnitaryOperator {
        match self {
            GateKind::H => erasing_gate(),
            GateKind::X => standard_gate(StandardGate::PauliX),
            GateKind::Z => standard_gate(StandardGate::PauliZ),
            GateKind::Cnot => standard_gate(StandardGate::Cnot),
            GateKind::R(p) => rotation_gate(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    /// System qubit indices.
    pub targets: Vec<u32>,
}

/// Gates applied to the system between two premeasurement events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvolutionSegment {
    pub gates: Vec<GateOp>,
}

impl EvolutionSegment {
    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Product of the gates as one unitary on the system register.
    pub fn compile(&self, system: &Register) -> Result<UnitaryOperator> {
        let mut u = UnitaryOperator::identity(system.len());
        for g in &self.gates {
            let targets = system_labels(&g.targets);
            let full = crate::gates::embed(&g.kind.unitary(), &targets, system)?;
            u = full.then_after(&u)?;
        }
        Ok(u)
    }

    /// Applies the gates one by one to a state that contains the system.
    pub fn apply_to(&self, mut state: StateVector) -> Result<StateVector> {
        for g in &self.gates {
            state = state.apply(&g.kind.unitary(), &system_labels(&g.targets))?;
        }
        Ok(state)
    }
}

fn system_labels(indices: &[u32]) -> Vec<QubitLabel> {
    indices.iter().map(|&i| QubitLabel::System(i)).collect()
}

/// Basis in which a premeasurement correlates the apparatus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PremeasureBasis {
    /// `R(pi/4, 0)`.
    H,
    Rotation(RotationParams),
}

impl PremeasureBasis {
    pub fn unitary(&self) -> UnitaryOperator {
        match self {
            PremeasureBasis::H => erasing_gate(),
            PremeasureBasis::Rotation(p) => rotation_gate(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PremeasureEvent {
    pub label: String,
    pub target: u32,
    /// `None` premeasures in the computational basis.
    pub basis: Option<PremeasureBasis>,
}

impl PremeasureEvent {
    /// System projectors `U P_k U^dagger` on the target qubit, `k = 0, 1`.
    pub fn projectors(&self, system: &Register) -> Result<[DMatrix<C64>; 2]> {
        let shift = system.shift_of(QubitLabel::System(self.target))?;
        let dim = system.dim();
        let mut out = [0usize, 1].map(|bit| {
            DMatrix::from_fn(dim, dim, |i, j| {
                if i == j && (i >> shift) & 1 == bit {
                    ONE
                } else {
                    ZERO
                }
            })
        });
        if let Some(b) = &self.basis {
            let u = crate::gates::embed(&b.unitary(), &[QubitLabel::System(self.target)], system)?;
            for p in &mut out {
                *p = u.matrix() * &*p * u.matrix().adjoint();
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// `rho_0 = 2^-d I`.
    MaximallyMixed,
    /// Amplitudes over the system register in basis-index order.
    Pure(Vec<C64>),
}

/// An apparatus qubit to read out, with its readout rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredEvent {
    pub label: String,
    pub rotation: RotationParams,
}

/// A full history experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySpec {
    pub d: usize,
    pub init: InitialState,
    /// `events.len() + 1` segments; segment `l` precedes event `l` and the
    /// last one follows every event.
    pub segments: Vec<EvolutionSegment>,
    pub events: Vec<PremeasureEvent>,
    pub measured: Vec<MeasuredEvent>,
}

impl HistorySpec {
    pub fn new(
        d: usize,
        init: InitialState,
        segments: Vec<EvolutionSegment>,
        events: Vec<PremeasureEvent>,
        measured: Vec<MeasuredEvent>,
    ) -> Result<Self> {
        let spec = Self {
            d,
            init,
            segments,
            events,
            measured,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.d == 0 || self.d > DEFAULT_MAX_QUBITS {
            return bad(format!("system size {} outside 1..={DEFAULT_MAX_QUBITS}", self.d));
        }
        if self.events.len() > MAX_EVENTS {
            return bad(format!("{} events exceed the limit of {MAX_EVENTS}", self.events.len()));
        }
        if self.segments.len() != self.events.len() + 1 {
            return bad(format!(
                "{} segments for {} events",
                self.segments.len(),
                self.events.len()
            ));
        }
        if let InitialState::Pure(amps) = &self.init {
            if amps.len() != 1 << self.d {
                return bad(format!("pure init has {} amplitudes, expected {}", amps.len(), 1 << self.d));
            }
            let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            if (norm - 1.0).abs() > 1e-9 {
                return bad(format!("pure init has squared norm {norm}"));
            }
        }
        for g in self.segments.iter().flat_map(|s| &s.gates) {
            if g.targets.len() != g.kind.arity() {
                return bad(format!("gate expects {} targets", g.kind.arity()));
            }
            if g.targets.iter().any(|&t| t as usize >= self.d) {
                return bad(format!("gate target out of range for {} system qubits", self.d));
            }
            if g.targets.len() == 2 && g.targets[0] == g.targets[1] {
                return bad("cnot control and target coincide".into());
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.target as usize >= self.d {
                return bad(format!("event `{}` targets qubit {} of {}", e.label, e.target, self.d));
            }
            if self.events[..i].iter().any(|o| o.label == e.label) {
                return bad(format!("event label `{}` reused", e.label));
            }
        }
        for (i, m) in self.measured.iter().enumerate() {
            self.event_index(&m.label)?;
            if self.measured[..i].iter().any(|o| o.label == m.label) {
                return Err(Error::AlreadyMeasured(m.label.clone()));
            }
        }
        Ok(())
    }

    /// Number of premeasurement events.
    pub fn n(&self) -> usize {
        self.events.len()
    }

    pub fn event_index(&self, label: &str) -> Result<usize> {
        self.events
            .iter()
            .position(|e| e.label == label)
            .ok_or_else(|| Error::UnknownEvent(label.to_string()))
    }

    pub fn labels(&self) -> Vec<String> {
        self.events.iter().map(|e| e.label.clone()).collect()
    }

    pub fn system_register(&self) -> Result<Register> {
        Register::system(self.d)
    }

    /// Apparatus qubit recording event `index` (0-based).
    pub fn apparatus(index: usize) -> QubitLabel {
        QubitLabel::A(index as u32 + 1)
    }

    /// The same experiment without `label`; its neighbouring segments merge.
    pub fn without_event(&self, label: &str) -> Result<HistorySpec> {
        let l = self.event_index(label)?;
        let mut segments = self.segments.clone();
        let after = segments.remove(l + 1);
        segments[l].gates.extend(after.gates);
        let mut events = self.events.clone();
        events.remove(l);
        let measured = self
            .measured
            .iter()
            .filter(|m| m.label != label)
            .cloned()
            .collect();
        HistorySpec::new(self.d, self.init.clone(), segments, events, measured)
    }

    fn compile(&self) -> Result<Compiled> {
        self.validate()?;
        let system = self.system_register()?;
        let segments = self
            .segments
            .iter()
            .map(|s| s.compile(&system).map(|u| u.matrix().clone()))
            .collect::<Result<_>>()?;
        let projectors = self
            .events
            .iter()
            .map(|e| e.projectors(&system))
            .collect::<Result<_>>()?;
        Ok(Compiled {
            segments,
            projectors,
        })
    }

    fn rho0_factor(&self) -> Result<DMatrix<C64>> {
        let dim = 1usize << self.d;
        Ok(match &self.init {
            InitialState::MaximallyMixed => {
                DMatrix::identity(dim, dim) * C64::new((dim as f64).sqrt().recip(), 0.0)
            }
            InitialState::Pure(a) => DMatrix::from_column_slice(dim, 1, a),
        })
    }
}

struct Compiled {
    segments: Vec<DMatrix<C64>>,
    projectors: Vec<[DMatrix<C64>; 2]>,
}

impl Compiled {
    /// Every product `T_final F_n[b_n] T_n ... F_1[b_1] T_1`, indexed with
    /// event 1 as the most significant bit.
    fn all_products(&self, families: &[[DMatrix<C64>; 2]]) -> Vec<DMatrix<C64>> {
        let mut ops = vec![self.segments[0].clone()];
        for (l, fam) in families.iter().enumerate() {
            let next = &self.segments[l + 1];
            let left = [next * &fam[0], next * &fam[1]];
            ops = ops
                .iter()
                .flat_map(|op| [&left[0] * op, &left[1] * op])
                .collect();
        }
        ops
    }

    fn product(&self, families: &[[DMatrix<C64>; 2]], bits: &[u8]) -> DMatrix<C64> {
        let mut op = self.segments[0].clone();
        for (l, (fam, &b)) in families.iter().zip(bits).enumerate() {
            op = &self.segments[l + 1] * &fam[(b & 1) as usize] * op;
        }
        op
    }
}

fn check_len(bits: &[u8], n: usize) -> Result<()> {
    if bits.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: bits.len(),
        });
    }
    Ok(())
}

/// Kraus family `M_b = sum_k R*_{bk} P_k` built on an event's projectors.
fn kraus_family(projectors: &[DMatrix<C64>; 2], p: RotationParams) -> [DMatrix<C64>; 2] {
    let r = rotation_gate(p);
    let r = r.matrix();
    [0usize, 1].map(|b| &projectors[0] * r[(b, 0)].conj() + &projectors[1] * r[(b, 1)].conj())
}

/// `C_alpha` on the system.
pub fn chain_operator(spec: &HistorySpec, alpha: &[u8]) -> Result<DMatrix<C64>> {
    check_len(alpha, spec.n())?;
    let c = spec.compile()?;
    Ok(c.product(&c.projectors, alpha))
}

/// Chain operator with each projector replaced by the Kraus operator of a
/// readout with the given rotation.
pub fn generalized_history_operator(
    spec: &HistorySpec,
    beta: &[u8],
    rotations: &[RotationParams],
) -> Result<DMatrix<C64>> {
    check_len(beta, spec.n())?;
    if rotations.len() != spec.n() {
        return Err(Error::LengthMismatch {
            expected: spec.n(),
            actual: rotations.len(),
        });
    }
    let c = spec.compile()?;
    let families: Vec<_> = c
        .projectors
        .iter()
        .zip(rotations)
        .map(|(p, r)| kraus_family(p, *r))
        .collect();
    Ok(c.product(&families, beta))
}

/// Every chain operator, indexed by `alpha` as an integer.
pub fn all_chain_operators(spec: &HistorySpec) -> Result<Vec<DMatrix<C64>>> {
    let c = spec.compile()?;
    Ok(c.all_products(&c.projectors))
}

/// Every generalized history operator, indexed by `beta` as an integer.
pub fn all_generalized_operators(
    spec: &HistorySpec,
    rotations: &[RotationParams],
) -> Result<Vec<DMatrix<C64>>> {
    if rotations.len() != spec.n() {
        return Err(Error::LengthMismatch {
            expected: spec.n(),
            actual: rotations.len(),
        });
    }
    let c = spec.compile()?;
    let families: Vec<_> = c
        .projectors
        .iter()
        .zip(rotations)
        .map(|(p, r)| kraus_family(p, *r))
        .collect();
    Ok(c.all_products(&families))
}

/// Bits of `index` for `n` events, event 1 first.
pub fn index_bits(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|l| ((index >> (n - 1 - l)) & 1) as u8).collect()
}

pub fn bits_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
}

/// Explicit circuit: segments interleaved with CNOT premeasurements onto
/// `A_1..A_n`. Requires a pure initial state.
pub fn build_history_state(spec: &HistorySpec) -> Result<StateVector> {
    spec.validate()?;
    let InitialState::Pure(amps) = &spec.init else {
        return Err(Error::InvalidSpec("explicit history state needs a pure init".into()));
    };
    let system = spec.system_register()?;
    let apparatus = Register::new((0..spec.n()).map(HistorySpec::apparatus))?;
    if system.len() + apparatus.len() > DEFAULT_MAX_QUBITS {
        return Err(Error::RegisterTooLarge {
            requested: system.len() + apparatus.len(),
            cap: DEFAULT_MAX_QUBITS,
        });
    }
    let mut state = StateVector::new(system, amps.clone())?.tensor(&StateVector::zeros(apparatus))?;
    for (l, event) in spec.events.iter().enumerate() {
        state = spec.segments[l].apply_to(state)?;
        let basis = event.basis.map(|b| b.unitary());
        state = premeasure(
            &state,
            QubitLabel::System(event.target),
            HistorySpec::apparatus(l),
            basis.as_ref(),
        )?;
    }
    spec.segments[spec.n()].apply_to(state)
}

/// `D_{alpha alpha'}` with the event labels that index it.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryDensityMatrix {
    pub labels: Vec<String>,
    pub entries: DMatrix<C64>,
}

impl HistoryDensityMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let m = &self.entries;
        let mut worst: f64 = 0.0;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if i != j {
                    worst = worst.max(m[(i, j)].norm());
                }
            }
        }
        worst
    }

    /// As a density operator over `A_1..A_n`.
    pub fn as_density(&self) -> Result<DensityOperator> {
        let reg = Register::new((0..self.n()).map(HistorySpec::apparatus))?;
        DensityOperator::new(reg, self.entries.clone())
    }
}

/// Gram matrix `D_{ab} = <w_b, w_a>` of the columns of `w`.
fn gram(w: &DMatrix<C64>) -> DMatrix<C64> {
    (w.adjoint() * w).transpose()
}

fn density_from_operators(spec: &HistorySpec, ops: &[DMatrix<C64>]) -> Result<HistoryDensityMatrix> {
    let root = spec.rho0_factor()?;
    let cols: Vec<DMatrix<C64>> = ops.iter().map(|c| c * &root).collect();
    let len = cols[0].len();
    let w = DMatrix::from_fn(len, cols.len(), |i, a| cols[a].as_slice()[i]);
    Ok(HistoryDensityMatrix {
        labels: spec.labels(),
        entries: gram(&w),
    })
}

/// `D_{alpha alpha'} = Tr_S(C_alpha rho_0 C_alpha'^dagger)`.
pub fn history_density_matrix(spec: &HistorySpec) -> Result<HistoryDensityMatrix> {
    density_from_operators(spec, &all_chain_operators(spec)?)
}

/// `Tr(C_beta rho_0 C_beta'^dagger)` for generalized history operators
/// with every event read out; before any block is removed.
pub fn generalized_density_matrix(
    spec: &HistorySpec,
    rotations: &[RotationParams],
) -> Result<HistoryDensityMatrix> {
    density_from_operators(spec, &all_generalized_operators(spec, rotations)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub max_off_diagonal: f64,
}

pub fn consistency_check(d: &HistoryDensityMatrix, tol: f64) -> ConsistencyReport {
    let max_off_diagonal = d.max_off_diagonal();
    ConsistencyReport {
        consistent: max_off_diagonal < tol,
        max_off_diagonal,
    }
}

/// One classical reality after readout.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBranch {
    /// Readouts, ordered like [`BranchTree::measured`].
    pub beta: Vec<u8>,
    pub probability: f64,
    /// `D^(beta)` over the unmeasured events.
    pub residual: DMatrix<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchTree {
    pub measured: Vec<String>,
    /// In event order.
    pub unmeasured: Vec<String>,
    pub branches: Vec<HistoryBranch>,
    /// Readouts whose probability fell below [`BRANCH_PRUNE`].
    pub pruned: Vec<Vec<u8>>,
    /// Every remaining event label in event order.
    pub event_order: Vec<String>,
}

impl BranchTree {
    pub fn branch(&self, beta: &[u8]) -> Option<&HistoryBranch> {
        self.branches.iter().find(|b| b.beta == beta)
    }

    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    /// Post-readout matrix over all events, event order, with every
    /// cross-branch block zero.
    pub fn full_matrix(&self) -> HistoryDensityMatrix {
        let labels = self.event_order.clone();
        let n = labels.len();
        let pos_of = |label: &String| labels.iter().position(|l| l == label).expect("known label");
        let meas_shifts: Vec<usize> = self.measured.iter().map(|l| n - 1 - pos_of(l)).collect();
        let rest_shifts: Vec<usize> = self.unmeasured.iter().map(|l| n - 1 - pos_of(l)).collect();
        let dim = 1usize << n;
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for b in &self.branches {
            let base = scatter_bits(bits_index(&b.beta), &meas_shifts);
            for g in 0..b.residual.nrows() {
                for h in 0..b.residual.ncols() {
                    let i = base | scatter_bits(g, &rest_shifts);
                    let j = base | scatter_bits(h, &rest_shifts);
                    m[(i, j)] = b.residual[(g, h)];
                }
            }
        }
        HistoryDensityMatrix { labels, entries: m }
    }
}

/// Reads out `measured` apparatus qubits: rotates their history indices by
/// the readout rotations and keeps only the blocks diagonal in `beta`.
pub fn apply_mms_to_history(d: &HistoryDensityMatrix, measured: &[MeasuredEvent]) -> Result<BranchTree> {
    let n = d.n();
    let mut positions = Vec::with_capacity(measured.len());
    for m in measured {
        let p = d
            .labels
            .iter()
            .position(|l| *l == m.label)
            .ok_or_else(|| Error::UnknownEvent(m.label.clone()))?;
        if positions.contains(&p) {
            return Err(Error::AlreadyMeasured(m.label.clone()));
        }
        positions.push(p);
    }
    let reg = Register::new((0..n).map(HistorySpec::apparatus))?;
    let mut rho = DensityOperator::from_parts_unchecked(reg, d.entries.clone());
    for (m, &p) in measured.iter().zip(&positions) {
        rho = rho.conjugate_by(&readout_rotation(m.rotation), &[HistorySpec::apparatus(p)])?;
    }
    let rotated = rho.into_matrix();

    let rest: Vec<usize> = (0..n).filter(|p| !positions.contains(p)).collect();
    let meas_shifts: Vec<usize> = positions.iter().map(|p| n - 1 - p).collect();
    let rest_shifts: Vec<usize> = rest.iter().map(|p| n - 1 - p).collect();
    let sub = 1usize << rest.len();
    let mut branches = Vec::new();
    let mut pruned = Vec::new();
    for b in 0..1usize << positions.len() {
        let base = scatter_bits(b, &meas_shifts);
        let idx: Vec<usize> = (0..sub).map(|g| base | scatter_bits(g, &rest_shifts)).collect();
        let residual = DMatrix::from_fn(sub, sub, |g, h| rotated[(idx[g], idx[h])]);
        let probability = residual.trace().re;
        let beta = index_bits(b, positions.len());
        if probability < BRANCH_PRUNE {
            pruned.push(beta);
        } else {
            branches.push(HistoryBranch {
                beta,
                probability,
                residual,
            });
        }
    }
    Ok(BranchTree {
        measured: measured.iter().map(|m| m.label.clone()).collect(),
        unmeasured: rest.iter().map(|&p| d.labels[p].clone()).collect(),
        event_order: d.labels.clone(),
        branches,
        pruned,
    })
}

/// `p(gamma | beta) = D^(beta)_{gamma gamma} / Tr D^(beta)`.
pub fn conditional_probability(tree: &BranchTree, beta: &[u8], gamma: &[u8]) -> Result<f64> {
    check_len(beta, tree.measured.len())?;
    check_len(gamma, tree.unmeasured.len())?;
    let b = tree.branch(beta).ok_or(Error::ZeroProbabilityBranch)?;
    Ok(b.residual[(bits_index(gamma), bits_index(gamma))].re / b.probability)
}

/// Forgets the outcome of an unmeasured event by tracing over its index.
pub fn marginalize(tree: &BranchTree, label: &str) -> Result<BranchTree> {
    if tree.measured.iter().any(|l| l == label) {
        return Err(Error::AlreadyMeasured(label.to_string()));
    }
    let pos = tree
        .unmeasured
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownEvent(label.to_string()))?;
    let reg = Register::new((0..tree.unmeasured.len()).map(HistorySpec::apparatus))?;
    let discard = HistorySpec::apparatus(pos);
    let branches = tree
        .branches
        .iter()
        .map(|b| {
            let rho = DensityOperator::from_parts_unchecked(reg.clone(), b.residual.clone());
            Ok(HistoryBranch {
                beta: b.beta.clone(),
                probability: b.probability,
                residual: partial_trace(&rho, &[discard])?.into_matrix(),
            })
        })
        .collect::<Result<_>>()?;
    let mut unmeasured = tree.unmeasured.clone();
    unmeasured.remove(pos);
    let event_order = tree.event_order.iter().filter(|l| *l != label).cloned().collect();
    Ok(BranchTree {
        measured: tree.measured.clone(),
        unmeasured,
        event_order,
        branches,
        pruned: tree.pruned.clone(),
    })
}

impl HistorySpec {
    /// History density matrix followed by readout of `self.measured`.
    pub fn branch_tree(&self) -> Result<BranchTree> {
        apply_mms_to_history(&history_density_matrix(self)?, &self.measured)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mms::{mms_measure, projector, ReadoutMode};
    use crate::qstate::max_abs_diff;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn event(label: &str, target: u32) -> PremeasureEvent {
        PremeasureEvent {
            label: label.into(),
            target,
            basis: None,
        }
    }

    fn seg(gates: Vec<GateOp>) -> EvolutionSegment {
        EvolutionSegment { gates }
    }

    fn gate(kind: GateKind, targets: &[u32]) -> GateOp {
        GateOp {
            kind,
            targets: targets.to_vec(),
        }
    }

    fn one_qubit(init: InitialState, middle: Vec<GateOp>, events: usize) -> HistorySpec {
        let mut segments = vec![seg(vec![])];
        for l in 0..events {
            segments.push(if l + 1 < events { seg(middle.clone()) } else { seg(vec![]) });
        }
        let events = (1..=events).map(|l| event(&format!("e{l}"), 0)).collect();
        HistorySpec::new(1, init, segments, events, vec![]).unwrap()
    }

    fn pure(amps: &[C64]) -> InitialState {
        InitialState::Pure(amps.to_vec())
    }

    /// Two-qubit spec with a mix of gates and bases.
    fn mixed_spec(init: InitialState) -> HistorySpec {
        HistorySpec::new(
            2,
            init,
            vec![
                seg(vec![gate(GateKind::H, &[0]), gate(GateKind::Cnot, &[0, 1])]),
                seg(vec![gate(GateKind::R(RotationParams::new(0.4, 0.9)), &[1])]),
                seg(vec![gate(GateKind::Z, &[0]), gate(GateKind::X, &[1])]),
            ],
            vec![
                PremeasureEvent {
                    label: "a".into(),
                    target: 1,
                    basis: Some(PremeasureBasis::Rotation(RotationParams::new(0.7, -0.3))),
                },
                PremeasureEvent {
                    label: "b".into(),
                    target: 0,
                    basis: Some(PremeasureBasis::H),
                },
            ],
            vec![],
        )
        .unwrap()
    }

    fn pure2() -> InitialState {
        let a = [c(0.3, 0.1), c(-0.5, 0.2), c(0.1, -0.6), c(0.4, 0.0)];
        let n = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        InitialState::Pure(a.iter().map(|z| z / n).collect())
    }

    fn completeness(ops: &[DMatrix<C64>]) -> f64 {
        let dim = ops[0].nrows();
        let sum = ops.iter().fold(DMatrix::zeros(dim, dim), |acc, c| acc + c.adjoint() * c);
        max_abs_diff(&sum, &DMatrix::identity(dim, dim))
    }

    #[test]
    fn validation() {
        let ok = one_qubit(InitialState::MaximallyMixed, vec![], 1);
        let mut bad = ok.clone();
        bad.events[0].target = 1;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.segments.pop();
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.measured.push(MeasuredEvent {
            label: "nope".into(),
            rotation: RotationParams::projective(),
        });
        assert!(matches!(bad.validate(), Err(Error::UnknownEvent(_))));
        let mut bad = ok.clone();
        bad.init = pure(&[c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.segments[0].gates.push(gate(GateKind::Cnot, &[0, 0]));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_event_chain_operator() {
        let spec = HistorySpec::new(
            2,
            InitialState::MaximallyMixed,
            vec![seg(vec![]), seg(vec![])],
            vec![event("e", 0)],
            vec![],
        )
        .unwrap();
        let want = projector(1).kronecker(&DMatrix::identity(2, 2));
        assert!(max_abs_diff(&chain_operator(&spec, &[1]).unwrap(), &want) < 1e-15);
        assert!(matches!(
            chain_operator(&spec, &[1, 0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn repeated_projectors() {
        let spec = one_qubit(InitialState::MaximallyMixed, vec![], 2);
        assert!(max_abs_diff(&chain_operator(&spec, &[1, 1]).unwrap(), &projector(1)) < 1e-15);
        assert!(chain_operator(&spec, &[1, 0]).unwrap().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn chain_completeness() {
        let spec = mixed_spec(InitialState::MaximallyMixed);
        assert!(completeness(&all_chain_operators(&spec).unwrap()) < 1e-10);
        let rot = [RotationParams::new(0.3, 0.2), RotationParams::new(1.1, -0.7)];
        assert!(completeness(&all_generalized_operators(&spec, &rot).unwrap()) < 1e-10);
    }

    #[test]
    fn generalized_projective_limit() {
        let spec = mixed_spec(InitialState::MaximallyMixed);
        let rot = [RotationParams::projective(); 2];
        for a in 0..4 {
            let bits = index_bits(a, 2);
            let g = generalized_history_operator(&spec, &bits, &rot).unwrap();
            assert_eq!(g, chain_operator(&spec, &bits).unwrap());
        }
    }

    #[test]
    fn generalized_erasing_event() {
        let spec = one_qubit(InitialState::MaximallyMixed, vec![], 1);
        let g = generalized_history_operator(&spec, &[1], &[RotationParams::erasing()]).unwrap();
        let want = DMatrix::identity(2, 2) * c(FRAC_1_SQRT_2, 0.0);
        assert!(max_abs_diff(&g, &want) < 1e-15);
    }

    #[test]
    fn history_state_single_event() {
        let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
        let spec = one_qubit(pure(&[c0, c1]), vec![], 1);
        let st = build_history_state(&spec).unwrap();
        // |S A>: c1 |1 1> + c0 |0 0>
        assert!((st.amplitude(0b11) - c1).norm() < 1e-15);
        assert!((st.amplitude(0b00) - c0).norm() < 1e-15);
        assert!(st.amplitude(0b01).norm() < 1e-15 && st.amplitude(0b10).norm() < 1e-15);
    }

    #[test]
    fn history_state_without_events() {
        let spec = HistorySpec::new(1, pure(&[c(0.6, 0.0), c(0.0, 0.8)]), vec![seg(vec![])], vec![], vec![])
            .unwrap();
        let st = build_history_state(&spec).unwrap();
        assert_eq!(st.register().len(), 1);
        assert!((st.amplitude(1) - c(0.0, 0.8)).norm() < 1e-15);
        assert!(build_history_state(&one_qubit(InitialState::MaximallyMixed, vec![], 1)).is_err());
    }

    #[test]
    fn history_state_matches_operator_sum() {
        let spec = mixed_spec(pure2());
        let InitialState::Pure(psi) = &spec.init else { unreachable!() };
        let psi = nalgebra::DVector::from_column_slice(psi);
        let st = build_history_state(&spec).unwrap();
        let ops = all_chain_operators(&spec).unwrap();
        for (a, op) in ops.iter().enumerate() {
            let v = op * &psi;
            for s in 0..4 {
                assert!((st.amplitude(s * 4 + a) - v[s]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn density_matches_explicit_trace() {
        let spec = mixed_spec(pure2());
        let d = history_density_matrix(&spec).unwrap();
        let st = build_history_state(&spec).unwrap();
        let sys: Vec<QubitLabel> = (0..2).map(QubitLabel::System).collect();
        let want = st.reduced(&sys).unwrap();
        assert!(max_abs_diff(&d.entries, want.matrix()) < 1e-10);
        assert!((d.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_event_density_is_diagonal() {
        let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
        let mut spec = one_qubit(pure(&[c0, c1]), vec![], 1);
        let d = history_density_matrix(&spec).unwrap();
        assert!((d.entries[(1, 1)].re - 0.64).abs() < 1e-15);
        assert!((d.entries[(0, 0)].re - 0.36).abs() < 1e-15);
        assert!(d.max_off_diagonal() < 1e-15);
        spec.segments[1].gates.push(gate(GateKind::H, &[0]));
        assert!(history_density_matrix(&spec).unwrap().max_off_diagonal() < 1e-15);
    }

    #[test]
    fn same_basis_events_are_consistent() {
        let spec = one_qubit(InitialState::MaximallyMixed, vec![], 2);
        let d = history_density_matrix(&spec).unwrap();
        assert!(consistency_check(&d, 1e-12).consistent);
        assert!((d.entries[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((d.entries[(3, 3)].re - 0.5).abs() < 1e-15);
    }

    fn interfering() -> HistorySpec {
        let r = gate(GateKind::R(RotationParams::new(FRAC_PI_8, 0.0)), &[0]);
        let h = gate(GateKind::H, &[0]);
        let mut spec = one_qubit(InitialState::MaximallyMixed, vec![r], 2);
        spec.segments[0].gates.push(h);
        spec.init = pure(&[c(1.0, 0.0), c(0.0, 0.0)]);
        spec
    }

    #[test]
    fn intermediate_rotation_breaks_consistency() {
        let d = history_density_matrix(&interfering()).unwrap();
        assert!(d.entries[(0b01, 0b11)].norm() > 0.01);
        let rep = consistency_check(&d, 1e-12);
        assert!(!rep.consistent && rep.max_off_diagonal > 0.01);

        let measured: Vec<_> = ["e1", "e2"]
            .map(|l| MeasuredEvent {
                label: l.into(),
                rotation: RotationParams::projective(),
            })
            .to_vec();
        let tree = apply_mms_to_history(&d, &measured).unwrap();
        let full = tree.full_matrix();
        assert!(consistency_check(&full, 1e-12).consistent);
        for a in 0..4 {
            let p = tree.branch(&index_bits(a, 2)).map_or(0.0, |b| b.probability);
            assert!((p - d.entries[(a, a)].re).abs() < 1e-15);
        }
        assert!((tree.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_readout_keeps_matrix() {
        let d = history_density_matrix(&mixed_spec(InitialState::MaximallyMixed)).unwrap();
        let tree = apply_mms_to_history(&d, &[]).unwrap();
        assert_eq!(tree.branches.len(), 1);
        assert_eq!(tree.branches[0].residual, d.entries);
        assert!((tree.branches[0].probability - 1.0).abs() < 1e-12);
        assert!(matches!(
            apply_mms_to_history(
                &d,
                &[MeasuredEvent {
                    label: "zz".into(),
                    rotation: RotationParams::projective()
                }]
            ),
            Err(Error::UnknownEvent(_))
        ));
    }

    #[test]
    fn partial_readout_matches_explicit_ancilla() {
        let spec = interfering();
        let p = RotationParams::new(0.3, 0.0);
        let d = history_density_matrix(&spec).unwrap();
        let tree = apply_mms_to_history(
            &d,
            &[MeasuredEvent {
                label: "e2".into(),
                rotation: p,
            }],
        )
        .unwrap();

        let st = build_history_state(&spec).unwrap();
        let out = mms_measure(&st, QubitLabel::A(2), p, ReadoutMode::ExplicitX).unwrap();
        let sys: Vec<QubitLabel> = (0..1).map(QubitLabel::System).collect();
        let on_a = out.rho_sa.partial_trace(&sys).unwrap();
        let m = on_a.matrix();
        for beta in [0usize, 1] {
            let res = &tree.branch(&[beta as u8]).unwrap().residual;
            for g in 0..2 {
                for h in 0..2 {
                    assert!((res[(g, h)] - m[(g * 2 + beta, h * 2 + beta)]).norm() < 1e-12);
                }
            }
        }
        // the earlier, unmeasured event keeps its coherence
        assert!(tree.branches.iter().any(|b| b.residual[(0, 1)].norm() > 1e-3));
    }

    #[test]
    fn conditionals() {
        let spec = mixed_spec(pure2());
        let d = history_density_matrix(&spec).unwrap();
        let all: Vec<_> = ["a", "b"]
            .map(|l| MeasuredEvent {
                label: l.into(),
                rotation: RotationParams::new(0.2, 0.1),
            })
            .to_vec();
        let tree = apply_mms_to_history(&d, &all).unwrap();
        assert!((conditional_probability(&tree, &[1, 0], &[]).unwrap() - 1.0).abs() < 1e-12);

        let tree = apply_mms_to_history(&d, &all[1..]).unwrap();
        for b in &tree.branches {
            let s: f64 = (0..2)
                .map(|g| conditional_probability(&tree, &b.beta, &[g]).unwrap())
                .sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            conditional_probability(&tree, &[1], &[0, 0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn uniform_conditional() {
        let tree = BranchTree {
            measured: vec![],
            unmeasured: vec!["e".into()],
            branches: vec![HistoryBranch {
                beta: vec![],
                probability: 1.0,
                residual: DMatrix::identity(2, 2) * c(0.5, 0.0),
            }],
            pruned: vec![],
            event_order: vec!["e".into()],
        };
        assert_eq!(conditional_probability(&tree, &[], &[0]).unwrap(), 0.5);
        assert_eq!(conditional_probability(&tree, &[], &[1]).unwrap(), 0.5);
    }

    #[test]
    fn zero_branch_is_pruned() {
        let spec = one_qubit(pure(&[c(1.0, 0.0), c(0.0, 0.0)]), vec![], 1);
        let d = history_density_matrix(&spec).unwrap();
        let tree = apply_mms_to_history(
            &d,
            &[MeasuredEvent {
                label: "e1".into(),
                rotation: RotationParams::projective(),
            }],
        )
        .unwrap();
        assert_eq!(tree.pruned, vec![vec![1u8]]);
        assert!(matches!(
            conditional_probability(&tree, &[1], &[]),
            Err(Error::ZeroProbabilityBranch)
        ));
    }

    #[test]
    fn marginalize_sums_conditionals() {
        let spec = HistorySpec::new(
            1,
            InitialState::MaximallyMixed,
            vec![
                seg(vec![]),
                seg(vec![gate(GateKind::R(RotationParams::new(0.5, 0.2)), &[0])]),
                seg(vec![gate(GateKind::H, &[0])]),
                seg(vec![]),
            ],
            vec![event("x", 0), event("y", 0), event("z", 0)],
            vec![MeasuredEvent {
                label: "x".into(),
                rotation: RotationParams::new(0.25, 0.0),
            }],
        )
        .unwrap();
        let tree = spec.branch_tree().unwrap();
        let m = marginalize(&tree, "y").unwrap();
        assert_eq!(m.unmeasured, vec!["z".to_string()]);
        for b in &tree.branches {
            for gz in 0..2u8 {
                let summed: f64 = (0..2u8)
                    .map(|gy| conditional_probability(&tree, &b.beta, &[gy, gz]).unwrap())
                    .sum();
                let direct = conditional_probability(&m, &b.beta, &[gz]).unwrap();
                assert!((summed - direct).abs() < 1e-12);
            }
        }
        let scalar = marginalize(&m, "z").unwrap();
        for b in &scalar.branches {
            assert!((b.residual[(0, 0)].re - b.probability).abs() < 1e-12);
        }
        assert!(matches!(marginalize(&tree, "x"), Err(Error::AlreadyMeasured(_))));
        assert!(matches!(marginalize(&tree, "w"), Err(Error::UnknownEvent(_))));
    }

    #[test]
    fn erased_event_drops_out() {
        let spec = mixed_spec(pure2());
        let d = history_density_matrix(&spec).unwrap();
        let tree = apply_mms_to_history(
            &d,
            &[MeasuredEvent {
                label: "a".into(),
                rotation: RotationParams::erasing(),
            }],
        )
        .unwrap();
        let b = tree.branch(&[1]).unwrap();
        assert!((b.probability - 0.5).abs() < 1e-12);
        let reduced = history_density_matrix(&spec.without_event("a").unwrap()).unwrap();
        let scaled = &b.residual / c(b.probability, 0.0);
        assert!(max_abs_diff(&scaled, &reduced.entries) < 1e-10);
    }

    #[test]
    fn full_readout_is_block_diagonal() {
        let d = history_density_matrix(&interfering()).unwrap();
        let measured: Vec<_> = ["e2", "e1"]
            .map(|l| MeasuredEvent {
                label: l.into(),
                rotation: RotationParams::new(0.4, FRAC_PI_4),
            })
            .to_vec();
        let tree = apply_mms_to_history(&d, &measured).unwrap();
        assert!(consistency_check(&tree.full_matrix(), 1e-12).consistent);
        assert!((tree.total_probability() - 1.0).abs() < 1e-12);
    }
}
