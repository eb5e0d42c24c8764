//! Dense states and operators over labeled qubit registers.
//!
//! # Basis-index convention
//!
//! A [`Register`] is always stored in canonical order: system qubits first,
//! then `A` ancillas, then `X` ancillas, each by ascending index. The qubit
//! at register position `p` (of `n`) is bit `n - 1 - p` of a basis index, so
//! position 0 is the most significant bit and a bit value of 1 means the
//! qubit is in `|1>`. Kronecker products therefore follow register order.
//!
//! The same rule applies locally to gates: for `apply_unitary(state, u,
//! targets)` the first target is the most significant bit of `u`'s row and
//! column index.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default limit on register size for dense simulation.
pub const DEFAULT_MAX_QUBITS: usize = 16;

/// Eigenvalues at or below this contribute nothing to the entropy.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Tolerance used when validating constructed operators.
pub const VALIDATION_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Identity of a qubit within a register.
///
/// The derived ordering is the canonical register ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QubitLabel {
    /// A qubit of the measured system.
    System(u32),
    /// An apparatus ancilla that records an outcome.
    A(u32),
    /// An ancilla that is discarded (informationally isolated) after use.
    X(u32),
}

impl fmt::Display for QubitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QubitLabel::System(i) => write!(f, "S{i}"),
            QubitLabel::A(i) => write!(f, "A{i}"),
            QubitLabel::X(i) => write!(f, "X{i}"),
        }
    }
}

/// Canonically ordered set of qubit labels.
#[derive(Debug, Clone)]
pub struct Register {
    labels: Vec<QubitLabel>,
    cap: usize,
}

impl PartialEq for Register {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

impl Eq for Register {}

impl Register {
    pub fn new(labels: impl IntoIterator<Item = QubitLabel>) -> Result<Self> {
        Self::with_cap(labels, DEFAULT_MAX_QUBITS)
    }

    /// Like [`Register::new`] but with an explicit size cap.
    pub fn with_cap(labels: impl IntoIterator<Item = QubitLabel>, cap: usize) -> Result<Self> {
        let mut labels: Vec<QubitLabel> = labels.into_iter().collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLabel(w[0]));
        }
        if labels.len() > cap {
            return Err(Error::RegisterTooLarge {
                requested: labels.len(),
                cap,
            });
        }
        Ok(Self { labels, cap })
    }

    pub fn empty() -> Self {
        Self {
            labels: Vec::new(),
            cap: DEFAULT_MAX_QUBITS,
        }
    }

    /// `d` system qubits `S0..S{d-1}`.
    pub fn system(d: usize) -> Result<Self> {
        Self::new((0..d as u32).map(QubitLabel::System))
    }

    pub fn labels(&self) -> &[QubitLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Hilbert space dimension, `2^len`.
    pub fn dim(&self) -> usize {
        1usize << self.labels.len()
    }

    pub fn contains(&self, label: QubitLabel) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn position(&self, label: QubitLabel) -> Result<usize> {
        self.labels
            .binary_search(&label)
            .map_err(|_| Error::MissingQubit(label))
    }

    /// Bit shift of `label` inside a basis index.
    pub fn shift_of(&self, label: QubitLabel) -> Result<usize> {
        Ok(self.len() - 1 - self.position(label)?)
    }

    /// Disjoint union; the cap of the result is the larger of the two caps.
    pub fn union(&self, other: &Register) -> Result<Register> {
        if let Some(&l) = other.labels.iter().find(|l| self.contains(**l)) {
            return Err(Error::LabelCollision(l));
        }
        Register::with_cap(
            self.labels.iter().chain(other.labels.iter()).copied(),
            self.cap.max(other.cap),
        )
    }

    /// Register with `remove` taken out. Every removed label must be present.
    pub fn without(&self, remove: &[QubitLabel]) -> Result<Register> {
        for &l in remove {
            self.position(l)?;
        }
        Ok(Register {
            labels: self
                .labels
                .iter()
                .copied()
                .filter(|l| !remove.contains(l))
                .collect(),
            cap: self.cap,
        })
    }

    /// Next unused `X` index, preferring `preferred`.
    pub fn fresh_x(&self, preferred: u32) -> QubitLabel {
        if !self.contains(QubitLabel::X(preferred)) {
            return QubitLabel::X(preferred);
        }
        let next = self
            .labels
            .iter()
            .filter_map(|l| match l {
                QubitLabel::X(i) => Some(*i),
                _ => None,
            })
            .max()
            .map_or(0, |m| m + 1);
        QubitLabel::X(next)
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "]")
    }
}

/// Spread the bits of `local` (MSB first) onto the given shifts.
#[inline]
pub(crate) fn scatter_bits(local: usize, shifts: &[usize]) -> usize {
    let k = shifts.len();
    shifts
        .iter()
        .enumerate()
        .fold(0, |acc, (j, &s)| acc | (((local >> (k - 1 - j)) & 1) << s))
}

/// Offsets of every local index of `shifts` inside a full basis index.
fn offsets(shifts: &[usize]) -> Vec<usize> {
    (0..1usize << shifts.len())
        .map(|l| scatter_bits(l, shifts))
        .collect()
}

/// Re-map a basis index whose qubit at position `p` must move to position
/// `dest[p]`, for a register of `dest.len()` qubits.
fn permute_index(idx: usize, dest: &[usize]) -> usize {
    let n = dest.len();
    dest.iter()
        .enumerate()
        .fold(0, |acc, (p, &d)| acc | (((idx >> (n - 1 - p)) & 1) << (n - 1 - d)))
}

/// Destination position of each qubit of `a ++ b` inside `union`.
fn concat_destinations(a: &Register, b: &Register, union: &Register) -> Vec<usize> {
    a.labels
        .iter()
        .chain(b.labels.iter())
        .map(|l| union.position(*l).expect("label in union"))
        .collect()
}

/// In-place application of a `2^k` square matrix to the target bits.
pub(crate) fn apply_on_targets(amps: &mut [C64], u: &DMatrix<C64>, shifts: &[usize]) {
    let offs = offsets(shifts);
    let mask = offs.iter().fold(0, |m, o| m | o);
    let k = offs.len();
    let mut buf = vec![ZERO; k];
    for base in 0..amps.len() {
        if base & mask != 0 {
            continue;
        }
        for (b, o) in buf.iter_mut().zip(&offs) {
            *b = amps[base | o];
        }
        for (r, o) in offs.iter().enumerate() {
            let mut acc = ZERO;
            for (c, b) in buf.iter().enumerate() {
                acc += u[(r, c)] * b;
            }
            amps[base | o] = acc;
        }
    }
}

/// Largest absolute entry difference.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn log2_dim(len: usize) -> Option<usize> {
    (len.is_power_of_two()).then(|| len.trailing_zeros() as usize)
}

/// Pure state over a labeled register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    register: Register,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Builds a state and normalizes it. Fails on a length mismatch or a
    /// zero vector.
    pub fn new(register: Register, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != register.dim() {
            return Err(Error::DimensionMismatch {
                expected: register.dim(),
                actual: amplitudes.len(),
            });
        }
        let mut amplitudes = DVector::from_vec(amplitudes);
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidDensity("state vector has zero norm".into()));
        }
        amplitudes /= C64::new(norm, 0.0);
        Ok(Self {
            register,
            amplitudes,
        })
    }

    /// Computational basis state `|index>`.
    pub fn basis(register: Register, index: usize) -> Result<Self> {
        if index >= register.dim() {
            return Err(Error::DimensionMismatch {
                expected: register.dim(),
                actual: index,
            });
        }
        let mut amps = vec![ZERO; register.dim()];
        amps[index] = ONE;
        Self::new(register, amps)
    }

    /// `c0|0> + c1|1>` on a single qubit.
    pub fn qubit(label: QubitLabel, c0: C64, c1: C64) -> Result<Self> {
        Self::new(Register::new([label])?, vec![c0, c1])
    }

    /// `|0>` on a single qubit.
    pub fn zero(label: QubitLabel) -> Self {
        Self::qubit(label, ONE, ZERO).expect("valid qubit")
    }

    /// All qubits of `register` in `|0>`.
    pub fn zeros(register: Register) -> Self {
        Self::basis(register, 0).expect("index 0 exists")
    }

    pub(crate) fn from_parts_unchecked(register: Register, amplitudes: DVector<C64>) -> Self {
        debug_assert_eq!(register.dim(), amplitudes.len());
        Self {
            register,
            amplitudes,
        }
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amplitudes[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// `<self|other>`; registers must match.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.register != other.register {
            return Err(Error::DimensionMismatch {
                expected: self.register.len(),
                actual: other.register.len(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|self><self|`.
    pub fn density(&self) -> DensityOperator {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator::from_parts_unchecked(self.register.clone(), m)
    }

    /// Reduced density operator after tracing out `discard`, computed
    /// without forming the full projector.
    pub fn reduced(&self, discard: &[QubitLabel]) -> Result<DensityOperator> {
        let kept = self.register.without(discard)?;
        let keep_shifts: Vec<usize> = kept
            .labels()
            .iter()
            .map(|l| self.register.shift_of(*l))
            .collect::<Result<_>>()?;
        let disc_shifts: Vec<usize> = discard
            .iter()
            .map(|l| self.register.shift_of(*l))
            .collect::<Result<_>>()?;
        let keep_off = offsets(&keep_shifts);
        let disc_off = offsets(&disc_shifts);
        let psi = DMatrix::from_fn(keep_off.len(), disc_off.len(), |i, t| {
            self.amplitudes[keep_off[i] | disc_off[t]]
        });
        let m = &psi * psi.adjoint();
        Ok(DensityOperator::from_parts_unchecked(kept, m))
    }

    /// Probability of finding `label` in `bit`.
    pub fn probability_of(&self, label: QubitLabel, bit: u8) -> Result<f64> {
        let s = self.register.shift_of(label)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| ((i >> s) & 1) as u8 == bit)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projects `label` onto `bit` and removes it from the register.
    ///
    /// Returns the outcome probability and the normalized conditional state
    /// of the remaining qubits, or `None` when the probability vanishes.
    pub fn project(&self, label: QubitLabel, bit: u8) -> Result<(f64, Option<StateVector>)> {
        self.project_many(&[(label, bit)])
    }

    /// Joint projection of several qubits onto fixed bits.
    pub fn project_many(
        &self,
        outcomes: &[(QubitLabel, u8)],
    ) -> Result<(f64, Option<StateVector>)> {
        let labels: Vec<QubitLabel> = outcomes.iter().map(|(l, _)| *l).collect();
        let rest = self.register.without(&labels)?;
        let mut fixed = 0usize;
        for &(l, b) in outcomes {
            fixed |= ((b & 1) as usize) << self.register.shift_of(l)?;
        }
        let rest_shifts: Vec<usize> = rest
            .labels()
            .iter()
            .map(|l| self.register.shift_of(*l))
            .collect::<Result<_>>()?;
        let amps: Vec<C64> = offsets(&rest_shifts)
            .into_iter()
            .map(|o| self.amplitudes[o | fixed])
            .collect();
        let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if p < 1e-300 {
            return Ok((p, None));
        }
        Ok((p, Some(StateVector::new(rest, amps)?)))
    }

    /// `M|psi>` for an arbitrary (e.g. Kraus) matrix on `targets`, without
    /// renormalizing. Returns the squared norm and the result, or `None`
    /// for the state when the squared norm vanishes.
    pub fn apply_operator(
        &self,
        m: &DMatrix<C64>,
        targets: &[QubitLabel],
    ) -> Result<(f64, Option<StateVector>)> {
        let u = UnitaryOperator::from_matrix_unchecked(m.clone())?;
        let shifts = target_shifts(&self.register, &u, targets)?;
        let mut amps = self.amplitudes.clone();
        apply_on_targets(amps.as_mut_slice(), m, &shifts);
        let p = amps.norm_squared();
        if p < 1e-300 {
            return Ok((p, None));
        }
        Ok((p, Some(StateVector::new(self.register.clone(), amps.data.into())?)))
    }

    /// Applies `u`; the owned form of [`apply_unitary`].
    pub fn apply(mut self, u: &UnitaryOperator, targets: &[QubitLabel]) -> Result<Self> {
        let shifts = target_shifts(&self.register, u, targets)?;
        apply_on_targets(self.amplitudes.as_mut_slice(), u.matrix(), &shifts);
        Ok(self)
    }
}

fn target_shifts(register: &Register, u: &UnitaryOperator, targets: &[QubitLabel]) -> Result<Vec<usize>> {
    if u.qubits() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: 1 << targets.len(),
            actual: u.matrix().nrows(),
        });
    }
    let shifts: Vec<usize> = targets
        .iter()
        .map(|l| register.shift_of(*l))
        .collect::<Result<_>>()?;
    for (i, t) in targets.iter().enumerate() {
        if targets[..i].contains(t) {
            return Err(Error::DuplicateLabel(*t));
        }
    }
    Ok(shifts)
}

/// Density operator over a labeled register.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    register: Register,
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    /// Validates dimensions, Hermiticity and unit trace. Positivity is
    /// checked separately by [`DensityOperator::validate_positive`].
    pub fn new(register: Register, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != register.dim() || matrix.ncols() != register.dim() {
            return Err(Error::DimensionMismatch {
                expected: register.dim(),
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        let h = hermiticity_defect(&matrix);
        if h > VALIDATION_TOL {
            return Err(Error::NotHermitian(h));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > VALIDATION_TOL {
            return Err(Error::InvalidDensity(format!("trace is {tr}")));
        }
        Ok(Self { register, matrix })
    }

    pub(crate) fn from_parts_unchecked(register: Register, matrix: DMatrix<C64>) -> Self {
        Self { register, matrix }
    }

    /// `2^-n I`.
    pub fn maximally_mixed(register: Register) -> Self {
        let dim = register.dim();
        let m = DMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        Self::from_parts_unchecked(register, m)
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Real eigenvalues, ascending. Fails if the matrix is not Hermitian.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let h = hermiticity_defect(&self.matrix);
        if h > VALIDATION_TOL {
            return Err(Error::NotHermitian(h));
        }
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    pub fn validate_positive(&self) -> Result<()> {
        let ev = self.eigenvalues()?;
        match ev.first() {
            Some(&min) if min < -VALIDATION_TOL => Err(Error::InvalidDensity(format!(
                "negative eigenvalue {min:.3e}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn partial_trace(&self, discard: &[QubitLabel]) -> Result<DensityOperator> {
        partial_trace(self, discard)
    }

    pub fn von_neumann_entropy(&self) -> Result<f64> {
        von_neumann_entropy(self)
    }

    /// `U rho U^dagger` with `u` acting on `targets`.
    pub fn conjugate_by(&self, u: &UnitaryOperator, targets: &[QubitLabel]) -> Result<Self> {
        let shifts = target_shifts(&self.register, u, targets)?;
        let mut m = self.matrix.clone();
        for mut col in m.column_iter_mut() {
            apply_on_targets(col.as_mut_slice(), u.matrix(), &shifts);
        }
        // (U (U rho)^dagger)^dagger = U rho U^dagger
        let mut m = m.adjoint();
        for mut col in m.column_iter_mut() {
            apply_on_targets(col.as_mut_slice(), u.matrix(), &shifts);
        }
        Ok(Self::from_parts_unchecked(self.register.clone(), m.adjoint()))
    }

    /// Diagonal of the matrix as real numbers.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }
}

/// Unitary acting on `qubits` qubits, indexed by the local MSB-first rule.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator {
    matrix: DMatrix<C64>,
    qubits: usize,
}

impl UnitaryOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let u = Self::from_matrix_unchecked(matrix)?;
        let defect = u.unitarity_defect();
        if defect > VALIDATION_TOL {
            return Err(Error::InvalidDensity(format!(
                "matrix is not unitary (defect {defect:.3e})"
            )));
        }
        Ok(u)
    }

    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Result<Self> {
        let n = matrix.nrows();
        let qubits = match log2_dim(n) {
            Some(q) if matrix.ncols() == n => q,
            _ => {
                return Err(Error::DimensionMismatch {
                    expected: n.next_power_of_two(),
                    actual: matrix.ncols(),
                })
            }
        };
        Ok(Self { matrix, qubits })
    }

    pub fn identity(qubits: usize) -> Self {
        let d = 1 << qubits;
        Self {
            matrix: DMatrix::identity(d, d),
            qubits,
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            qubits: self.qubits,
        }
    }

    /// Entrywise complex conjugate.
    pub fn conjugate(&self) -> Self {
        Self {
            matrix: self.matrix.map(|z| z.conj()),
            qubits: self.qubits,
        }
    }

    /// `self * other` (apply `other` first).
    pub fn then_after(&self, other: &UnitaryOperator) -> Result<Self> {
        if self.qubits != other.qubits {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows(),
                actual: other.matrix.nrows(),
            });
        }
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
            qubits: self.qubits,
        })
    }

    /// `max |U^dagger U - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.matrix.nrows();
        max_abs_diff(&(self.matrix.adjoint() * &self.matrix), &DMatrix::identity(d, d))
    }
}

/// Kronecker product with the result in canonical register order.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let union = self.register.union(&other.register)?;
        let dest = concat_destinations(&self.register, &other.register, &union);
        let kron = self.amplitudes.kronecker(&other.amplitudes);
        let mut out = DVector::from_element(kron.len(), ZERO);
        for (i, a) in kron.iter().enumerate() {
            out[permute_index(i, &dest)] = *a;
        }
        Ok(Self::from_parts_unchecked(union, out))
    }
}

impl Tensor for DensityOperator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let union = self.register.union(&other.register)?;
        let dest = concat_destinations(&self.register, &other.register, &union);
        let kron = self.matrix.kronecker(&other.matrix);
        let perm: Vec<usize> = (0..kron.nrows()).map(|i| permute_index(i, &dest)).collect();
        let mut out = DMatrix::from_element(kron.nrows(), kron.ncols(), ZERO);
        for j in 0..kron.ncols() {
            for i in 0..kron.nrows() {
                out[(perm[i], perm[j])] = kron[(i, j)];
            }
        }
        Ok(Self::from_parts_unchecked(union, out))
    }
}

impl Tensor for UnitaryOperator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            matrix: self.matrix.kronecker(&other.matrix),
            qubits: self.qubits + other.qubits,
        })
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

/// Reduced operator over the labels not in `discard`. Discarding every
/// qubit yields the 1x1 matrix holding the trace.
pub fn partial_trace(rho: &DensityOperator, discard: &[QubitLabel]) -> Result<DensityOperator> {
    if discard.is_empty() {
        return Ok(rho.clone());
    }
    let reg = rho.register();
    let kept = reg.without(discard)?;
    let keep_shifts: Vec<usize> = kept
        .labels()
        .iter()
        .map(|l| reg.shift_of(*l))
        .collect::<Result<_>>()?;
    let disc_shifts: Vec<usize> = discard
        .iter()
        .map(|l| reg.shift_of(*l))
        .collect::<Result<_>>()?;
    let keep_off = offsets(&keep_shifts);
    let disc_off = offsets(&disc_shifts);
    let m = rho.matrix();
    let out = DMatrix::from_fn(keep_off.len(), keep_off.len(), |i, j| {
        disc_off
            .iter()
            .map(|t| m[(keep_off[i] | t, keep_off[j] | t)])
            .sum()
    });
    Ok(DensityOperator::from_parts_unchecked(kept, out))
}

/// `-Tr(rho log2 rho)` in bits.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    Ok(rho
        .eigenvalues()?
        .into_iter()
        .filter(|&l| l > EIGENVALUE_FLOOR)
        .map(|l| -l * l.log2())
        .sum())
}

/// `-sum p log2 p` in bits, with `0 log 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if let Some(&bad) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidProbabilities(format!("entry {bad} is negative or not finite")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidProbabilities(format!("entries sum to {total}")));
    }
    Ok(entropy_bits(p))
}

/// Shannon entropy without validation; zero and negative entries are skipped.
pub(crate) fn entropy_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum()
}

pub fn apply_unitary(
    state: &StateVector,
    u: &UnitaryOperator,
    targets: &[QubitLabel],
) -> Result<StateVector> {
    state.clone().apply(u, targets)
}

/// `|<a|b>|^2`, insensitive to global phase.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use QubitLabel::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn canonical_order_and_duplicates() {
        let r = Register::new([X(0), A(1), System(0), A(0)]).unwrap();
        assert_eq!(r.labels(), &[System(0), A(0), A(1), X(0)]);
        assert_eq!(r.shift_of(System(0)).unwrap(), 3);
        assert!(matches!(
            Register::new([A(0), A(0)]),
            Err(Error::DuplicateLabel(A(0)))
        ));
        assert!(matches!(
            Register::system(17),
            Err(Error::RegisterTooLarge { requested: 17, cap: 16 })
        ));
    }

    #[test]
    fn tensor_basis_product() {
        let one = StateVector::qubit(System(0), c(0.0), c(1.0)).unwrap();
        let zero = StateVector::zero(A(0));
        let s = one.tensor(&zero).unwrap();
        let got: Vec<f64> = s.amplitudes().iter().map(|z| z.re).collect();
        assert_eq!(got, vec![0.0, 0.0, 1.0, 0.0]);
        // operand order does not matter after canonical reordering
        let s2 = zero.tensor(&one).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn tensor_collision() {
        let a = StateVector::zero(A(0));
        assert!(matches!(a.tensor(&a), Err(Error::LabelCollision(A(0)))));
    }

    #[test]
    fn tensor_identity_unitaries() {
        let i2 = UnitaryOperator::identity(1);
        let i4 = i2.tensor(&i2).unwrap();
        assert_eq!(i4, UnitaryOperator::identity(2));
    }

    #[test]
    fn partial_trace_product_state() {
        let a = StateVector::qubit(System(0), c(0.6), C64::new(0.0, 0.8)).unwrap();
        let b = StateVector::qubit(A(0), c(1.0), c(1.0)).unwrap();
        let rho = a.density().tensor(&b.density()).unwrap();
        let red = partial_trace(&rho, &[A(0)]).unwrap();
        assert!(max_abs_diff(red.matrix(), a.density().matrix()) < 1e-14);
        assert_eq!(partial_trace(&rho, &[]).unwrap(), rho);
    }

    #[test]
    fn partial_trace_of_everything_is_scalar() {
        let s = StateVector::qubit(System(0), c(0.6), c(0.8)).unwrap();
        let r = partial_trace(&s.density(), &[System(0)]).unwrap();
        assert_eq!(r.matrix().shape(), (1, 1));
        assert!((r.matrix()[(0, 0)] - ONE).norm() < 1e-14);
    }

    #[test]
    fn bell_reduction_is_half_identity() {
        let reg = Register::new([System(0), A(0)]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let bell = StateVector::new(reg, vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
        let red = partial_trace(&bell.density(), &[A(0)]).unwrap();
        let want = DMatrix::identity(2, 2) * c(0.5);
        assert!(max_abs_diff(red.matrix(), &want) < 1e-14);
        let red2 = bell.reduced(&[A(0)]).unwrap();
        assert!(max_abs_diff(red2.matrix(), &want) < 1e-14);
        assert!((von_neumann_entropy(&red).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropies() {
        let pure = StateVector::qubit(System(0), c(0.6), c(0.8)).unwrap().density();
        assert!(von_neumann_entropy(&pure).unwrap().abs() < 1e-10);
        assert_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(shannon_entropy(&[0.5, 0.5]).unwrap(), 1.0);
        // -0.3 log2 0.3 - 0.7 log2 0.7 = 0.881290899230693...
        let h = shannon_entropy(&[0.3, 0.7]).unwrap();
        assert!((h - 0.881_290_899_230_693).abs() < 1e-12);
        let reg = Register::new([System(0)]).unwrap();
        let d = DensityOperator::new(reg, DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.7), c(0.3)]))).unwrap();
        assert!((von_neumann_entropy(&d).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn shannon_rejects_bad_input() {
        assert!(shannon_entropy(&[-0.1, 1.1]).is_err());
        assert!(shannon_entropy(&[0.4, 0.4]).is_err());
    }

    #[test]
    fn non_hermitian_rejected() {
        let reg = Register::new([System(0)]).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.3), c(0.0), c(0.5)]);
        assert!(matches!(DensityOperator::new(reg.clone(), m.clone()), Err(Error::NotHermitian(_))));
        let raw = DensityOperator::from_parts_unchecked(reg, m);
        assert!(matches!(von_neumann_entropy(&raw), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn apply_identity_and_mismatch() {
        let reg = Register::new([System(0), A(0)]).unwrap();
        let s = StateVector::new(reg, vec![c(0.1), c(0.2), c(0.3), c(0.4)]).unwrap();
        let id = UnitaryOperator::identity(1);
        assert_eq!(apply_unitary(&s, &id, &[A(0)]).unwrap(), s);
        assert!(matches!(
            apply_unitary(&s, &id, &[A(0), System(0)]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            apply_unitary(&s, &id, &[X(0)]),
            Err(Error::MissingQubit(X(0)))
        ));
    }

    #[test]
    fn project_returns_conditional_state() {
        let reg = Register::new([System(0), A(0)]).unwrap();
        let s = StateVector::new(reg, vec![c(0.8), c(0.0), c(0.0), c(0.6)]).unwrap();
        let (p, post) = s.project(A(0), 1).unwrap();
        assert!((p - 0.36).abs() < 1e-14);
        let post = post.unwrap();
        assert_eq!(post.register().labels(), &[System(0)]);
        assert!((post.amplitude(1) - ONE).norm() < 1e-14);
        let (p0, none) = StateVector::zeros(Register::new([A(0)]).unwrap()).project(A(0), 1).unwrap();
        assert_eq!(p0, 0.0);
        assert!(none.is_none());
    }

    #[test]
    fn fresh_x_labels() {
        let r = Register::new([System(0), A(0), X(0)]).unwrap();
        assert_eq!(r.fresh_x(1), X(1));
        assert_eq!(r.fresh_x(0), X(1));
        assert_eq!(Register::empty().fresh_x(3), X(3));
    }
}
