//! The minimal measurement scheme.
//!
//! A system qubit is premeasured by a CNOT onto a fresh apparatus qubit `A`.
//! `A` is then rotated into its readout basis and copied by a second CNOT
//! onto a fresh `X` qubit, which is discarded by partial trace. Conditional
//! on that isolation, `A` carries a classical outcome `r` and the system is
//! left in `M_r|psi> / sqrt(p_r)` with
//!
//! ```text
//! M_r = sum_k R*_{rk} P_k
//! M_1 =  P_1 cos t + P_0 e^{-ip} sin t
//! M_0 = -P_1 e^{ip} sin t + P_0 cos t
//! ```
//!
//! `R_{rk}` are the entries of [`rotation_gate`] (rows of the rotation give
//! the readout basis). The unitary actually applied to `A` is the one taking
//! readout state `r` to `|r>`, whose entries are `R*_{rk}`; see
//! [`readout_rotation`]. For `phi = 0` it coincides with the rotation gate.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gates::{rotation_gate, standard_gate, RotationParams, StandardGate};
use crate::qstate::{
    max_abs_diff, DensityOperator, QubitLabel, Register, StateVector, Tensor, UnitaryOperator,
    C64, ONE, ZERO,
};

/// Branches below this probability are dropped.
pub const BRANCH_PRUNE: f64 = 1e-14;

/// How the `X` qubit's isolation is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutMode {
    /// Append a fresh `X`, CNOT `A -> X`, then trace `X` out.
    #[default]
    ExplicitX,
    /// Zero the coherences of `A` directly; equivalent to `ExplicitX`.
    Dephase,
}

/// `|bit><bit|` on one qubit.
pub fn projector(bit: u8) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(2, 2, ZERO);
    m[(bit as usize & 1, bit as usize & 1)] = ONE;
    m
}

/// Kraus pair for one generalized measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub params: RotationParams,
    pub m0: DMatrix<C64>,
    pub m1: DMatrix<C64>,
}

impl KrausSet {
    pub fn get(&self, r: u8) -> &DMatrix<C64> {
        if r == 0 {
            &self.m0
        } else {
            &self.m1
        }
    }

    /// `max |M_0^dagger M_0 + M_1^dagger M_1 - I|`.
    pub fn completeness_defect(&self) -> f64 {
        let s = self.m0.adjoint() * &self.m0 + self.m1.adjoint() * &self.m1;
        max_abs_diff(&s, &DMatrix::identity(2, 2))
    }

    /// `M_r` conjugated by a basis change `U M_r U^dagger`, as used when the
    /// premeasurement was done in a rotated basis.
    pub fn in_basis(&self, basis: &UnitaryOperator) -> KrausSet {
        let u = basis.matrix();
        KrausSet {
            params: self.params,
            m0: u * &self.m0 * u.adjoint(),
            m1: u * &self.m1 * u.adjoint(),
        }
    }
}

pub fn kraus_ops(p: RotationParams) -> KrausSet {
    let (s, c) = p.theta.sin_cos();
    let e = C64::from_polar(1.0, p.phi);
    let p0 = projector(0);
    let p1 = projector(1);
    let cc = C64::new(c, 0.0);
    KrausSet {
        params: p,
        m1: &p1 * cc + &p0 * (e.conj() * s),
        m0: &p1 * (-e * s) + &p0 * cc,
    }
}

/// Unitary applied to the apparatus before the `X` copy: the entrywise
/// conjugate of [`rotation_gate`].
pub fn readout_rotation(p: RotationParams) -> UnitaryOperator {
    rotation_gate(p).conjugate()
}

/// Entangles `ancilla` with `sys_qubit` by a CNOT. With `basis_change = U`
/// the sequence is `U^dagger` on the system, CNOT, then `U` again, which
/// correlates the ancilla with the projectors `U P_k U^dagger`.
pub fn premeasure(
    state: &StateVector,
    sys_qubit: QubitLabel,
    ancilla: QubitLabel,
    basis_change: Option<&UnitaryOperator>,
) -> Result<StateVector> {
    state.register().position(sys_qubit)?;
    let population = state.probability_of(ancilla, 1)?;
    if population > 1e-10 {
        return Err(Error::AncillaNotFresh {
            label: ancilla,
            population,
        });
    }
    let cnot = standard_gate(StandardGate::Cnot);
    let mut s = state.clone();
    if let Some(u) = basis_change {
        s = s.apply(&u.adjoint(), &[sys_qubit])?;
    }
    s = s.apply(&cnot, &[sys_qubit, ancilla])?;
    if let Some(u) = basis_change {
        s = s.apply(u, &[sys_qubit])?;
    }
    Ok(s)
}

/// One readout result of a generalized measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutcome {
    pub r: u8,
    pub probability: f64,
    /// Normalized state of every qubit except the apparatus (and `X`).
    pub post_state: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsOutcome {
    /// Branches with probability above [`BRANCH_PRUNE`], ordered `r = 1, 0`.
    pub branches: Vec<BranchOutcome>,
    /// Outcomes dropped because their probability vanished.
    pub dropped: Vec<u8>,
    /// State of the original register after `X` is isolated.
    pub rho_sa: DensityOperator,
}

impl MmsOutcome {
    pub fn probability(&self, r: u8) -> f64 {
        self.branches
            .iter()
            .find(|b| b.r == r)
            .map_or(0.0, |b| b.probability)
    }

    pub fn branch(&self, r: u8) -> Option<&BranchOutcome> {
        self.branches.iter().find(|b| b.r == r)
    }
}

/// Reads out an already premeasured apparatus qubit.
pub fn mms_measure(
    state: &StateVector,
    ancilla_a: QubitLabel,
    p: RotationParams,
    mode: ReadoutMode,
) -> Result<MmsOutcome> {
    let rot = readout_rotation(p);
    let rotated = state.clone().apply(&rot, &[ancilla_a])?;
    let mut branches = Vec::with_capacity(2);
    let mut dropped = Vec::new();
    let rho_sa = match mode {
        ReadoutMode::ExplicitX => {
            let a_index = match ancilla_a {
                QubitLabel::A(i) | QubitLabel::X(i) | QubitLabel::System(i) => i,
            };
            let x = state.register().fresh_x(a_index);
            let fresh = StateVector::zeros(Register::with_cap([x], state.register().cap())?);
            let full = rotated
                .tensor(&fresh)?
                .apply(&standard_gate(StandardGate::Cnot), &[ancilla_a, x])?;
            for r in [1u8, 0] {
                let (prob, post) = full.project_many(&[(ancilla_a, r), (x, r)])?;
                push_branch(&mut branches, &mut dropped, r, prob, post);
            }
            full.reduced(&[x])?
        }
        ReadoutMode::Dephase => {
            let shift = state.register().shift_of(ancilla_a)?;
            let mut rho = rotated.density().into_matrix();
            for j in 0..rho.ncols() {
                for i in 0..rho.nrows() {
                    if ((i ^ j) >> shift) & 1 == 1 {
                        rho[(i, j)] = ZERO;
                    }
                }
            }
            for r in [1u8, 0] {
                let (prob, post) = rotated.project(ancilla_a, r)?;
                push_branch(&mut branches, &mut dropped, r, prob, post);
            }
            DensityOperator::new(state.register().clone(), rho)?
        }
    };
    Ok(MmsOutcome {
        branches,
        dropped,
        rho_sa,
    })
}

fn push_branch(
    branches: &mut Vec<BranchOutcome>,
    dropped: &mut Vec<u8>,
    r: u8,
    probability: f64,
    post: Option<StateVector>,
) {
    match post {
        Some(post_state) if probability >= BRANCH_PRUNE => branches.push(BranchOutcome {
            r,
            probability,
            post_state,
        }),
        _ => dropped.push(r),
    }
}

/// Picks a branch with its probability using `rng`.
pub fn sample_outcome_with<'a, R: Rng + ?Sized>(
    branches: &'a [BranchOutcome],
    rng: &mut R,
) -> Result<&'a BranchOutcome> {
    let last = branches.last().ok_or(Error::EmptyBranches)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for b in branches {
        acc += b.probability;
        if u < acc {
            return Ok(b);
        }
    }
    Ok(last)
}

/// Deterministic branch choice for a given seed.
pub fn sample_outcome(branches: &[BranchOutcome], rng_seed: u64) -> Result<BranchOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_outcome_with(branches, &mut rng).cloned()
}

/// Both outcomes of the erasure protocol, with the Pauli-Z correction
/// already applied to the `r = 0` branch.
pub fn erasure_branches(
    state: &StateVector,
    sys_qubit: QubitLabel,
    ancilla_a: QubitLabel,
) -> Result<Vec<BranchOutcome>> {
    let out = mms_measure(state, ancilla_a, RotationParams::erasing(), ReadoutMode::Dephase)?;
    let z = standard_gate(StandardGate::PauliZ);
    out.branches
        .into_iter()
        .map(|mut b| {
            if b.r == 0 {
                b.post_state = b.post_state.apply(&z, &[sys_qubit])?;
            }
            Ok(b)
        })
        .collect()
}

/// Undoes a premeasurement: reads the apparatus out with `R(pi/4, 0)` and
/// corrects the `r = 0` outcome with Pauli-Z on `sys_qubit`.
pub fn erase_premeasurement(
    state: &StateVector,
    sys_qubit: QubitLabel,
    ancilla_a: QubitLabel,
    rng_seed: u64,
) -> Result<(StateVector, u8)> {
    let branches = erasure_branches(state, sys_qubit, ancilla_a)?;
    let b = sample_outcome(&branches, rng_seed)?;
    Ok((b.post_state, b.r))
}

/// Full-register projectors `P_0`, `P_1` on one qubit.
pub fn qubit_projectors(register: &Register, label: QubitLabel) -> Result<[DMatrix<C64>; 2]> {
    let s = register.shift_of(label)?;
    let dim = register.dim();
    let diag = |bit: usize| {
        DMatrix::from_fn(dim, dim, |i, j| {
            if i == j && (i >> s) & 1 == bit {
                ONE
            } else {
                ZERO
            }
        })
    };
    Ok([diag(0), diag(1)])
}

/// Projective collapse `sum_k P_k rho P_k`.
pub fn von_neumann_collapse_oracle(
    rho: &DensityOperator,
    projectors: &[DMatrix<C64>],
) -> Result<DensityOperator> {
    let dim = rho.register().dim();
    if projectors.iter().any(|p| p.shape() != (dim, dim)) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: projectors.iter().map(|p| p.nrows()).find(|&n| n != dim).unwrap_or(0),
        });
    }
    let zero = DMatrix::from_element(dim, dim, ZERO);
    let sum = projectors.iter().fold(zero.clone(), |acc, p| acc + p);
    let mut defect = max_abs_diff(&sum, &DMatrix::identity(dim, dim));
    for (i, a) in projectors.iter().enumerate() {
        for (j, b) in projectors.iter().enumerate() {
            let want = if i == j { a } else { &zero };
            defect = defect.max(max_abs_diff(&(a * b), want));
        }
    }
    if defect > 1e-12 {
        return Err(Error::IncompleteProjectors(defect));
    }
    let m = projectors
        .iter()
        .fold(zero, |acc, p| acc + p * rho.matrix() * p);
    DensityOperator::new(rho.register().clone(), m)
}
