//! Gate constructors and register embedding.
//!
//! Matrices are stored in computational index order (row/column 0 is `|0>`).
//! The ancilla rotation is usually written with rows and columns ordered
//! `(|1>, |0>)`:
//!
//! ```text
//!            |1>               |0>
//! <1| [  cos t          e^{i p} sin t ]
//! <0| [ -e^{-i p} sin t  cos t        ]
//! ```
//!
//! so that `<1|R|0> = e^{i p} sin t` and `<0|R|1> = -e^{-i p} sin t`.
//! With this reading `R(pi/4, 0)` gives the erasure identities
//! `M_1 = I/sqrt2`, `M_0 = Z/sqrt2` exactly. Note that `R(pi/4, 0)` is not
//! the textbook Hadamard; it is referred to here as [`erasing_gate`].

use std::f64::consts::FRAC_PI_4;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::qstate::{QubitLabel, Register, Tensor, UnitaryOperator, C64, ONE, ZERO};

/// Angles of the single-qubit rotation, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotationParams {
    pub theta: f64,
    pub phi: f64,
}

impl RotationParams {
    pub const fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// No rotation: the projective limit.
    pub const fn projective() -> Self {
        Self::new(0.0, 0.0)
    }

    /// `R(pi/4, 0)`, the erasing rotation.
    pub const fn erasing() -> Self {
        Self::new(FRAC_PI_4, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.phi.is_finite()
    }

    /// `q = cos(theta)`.
    pub fn q(&self) -> f64 {
        self.theta.cos()
    }

    pub fn q_squared(&self) -> f64 {
        self.q() * self.q()
    }
}

/// The rotation `R(theta, phi)` in index order.
pub fn rotation_gate(p: RotationParams) -> UnitaryOperator {
    let (s, c) = p.theta.sin_cos();
    let e = C64::from_polar(1.0, p.phi);
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(c, 0.0),
            -e.conj() * s,
            e * s,
            C64::new(c, 0.0),
        ],
    );
    UnitaryOperator::from_matrix_unchecked(m).expect("2x2")
}

/// `R(pi/4, 0)`.
pub fn erasing_gate() -> UnitaryOperator {
    rotation_gate(RotationParams::erasing())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardGate {
    /// Control is the first target, the flipped qubit the second.
    Cnot,
    PauliZ,
    PauliX,
    Identity,
}

pub fn standard_gate(name: StandardGate) -> UnitaryOperator {
    let r = |re: f64| C64::new(re, 0.0);
    let m = match name {
        StandardGate::Identity => DMatrix::identity(2, 2),
        StandardGate::PauliX => DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        StandardGate::PauliZ => DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, r(-1.0)]),
        StandardGate::Cnot => {
            let mut m = DMatrix::identity(4, 4);
            m[(2, 2)] = ZERO;
            m[(3, 3)] = ZERO;
            m[(2, 3)] = ONE;
            m[(3, 2)] = ONE;
            m
        }
    };
    UnitaryOperator::from_matrix_unchecked(m).expect("square power of two")
}

/// Full-register unitary acting as `u` on `targets` and as the identity on
/// every other qubit.
pub fn embed(
    u: &UnitaryOperator,
    targets: &[QubitLabel],
    register: &Register,
) -> Result<UnitaryOperator> {
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
    let dim = register.dim();
    let mut full = DMatrix::identity(dim, dim);
    for mut col in full.column_iter_mut() {
        crate::qstate::apply_on_targets(col.as_mut_slice(), u.matrix(), &shifts);
    }
    UnitaryOperator::from_matrix_unchecked(full)
}

/// `u` on `targets` of `register`, tensored with the identity on `extra`.
pub fn embed_extended(
    u: &UnitaryOperator,
    targets: &[QubitLabel],
    register: &Register,
    extra: usize,
) -> Result<UnitaryOperator> {
    embed(u, targets, register)?.tensor(&UnitaryOperator::identity(extra))
}
