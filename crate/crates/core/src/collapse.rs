//! Repeated weak measurements and the gradual collapse they produce.
//!
//! After `N` identical generalized measurements, each with its own pair of
//! ancillas, only the number `l` of `r = 1` readouts matters. With
//! `q = cos(theta)` the distribution of `l` is a mixture of two binomials,
//!
//! ```text
//! p_l = C(N,l) [ |c1|^2 q^{2l} (1-q^2)^{N-l} + |c0|^2 q^{2(N-l)} (1-q^2)^l ]
//! ```
//!
//! and the information extracted from the system is
//! `S_total - S_binom`, which approaches `S_0 = H(|c0|^2, |c1|^2)` roughly
//! as `1 - exp(-N / N*)` with `N* ~ ln2 / (2 (theta - pi/4)^2)`.
//!
//! Binomial weights are evaluated in log space from a table of `ln k!`, so
//! `N` in the tens of thousands is fine.

use std::f64::consts::{FRAC_PI_4, LN_2};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gates::{standard_gate, RotationParams, StandardGate};
use crate::mms::{premeasure, projector, readout_rotation};
use crate::qstate::{entropy_bits, QubitLabel, Register, StateVector, C64, ZERO};

/// Largest `N` accepted by [`explicit_collapse_oracle`].
pub const ORACLE_MAX_MEASUREMENTS: usize = 10;

/// Lower clamp on `S_0` for extraction analysis.
pub const MIN_INITIAL_ENTROPY: f64 = 1e-9;

/// Aggregated Kraus operator for `l` outcomes `r = 1` out of `n`.
pub fn total_kraus(l: usize, n: usize, p: RotationParams) -> Result<DMatrix<C64>> {
    if l > n {
        return Err(Error::OutOfRange {
            name: "l",
            value: l as f64,
            range: format!("[0, {n}]"),
        });
    }
    let (s, c) = p.theta.sin_cos();
    let e = C64::from_polar(1.0, p.phi);
    let cc = C64::new(c, 0.0);
    let w1 = cc.powu(l as u32) * (-e * s).powu((n - l) as u32);
    let w0 = cc.powu((n - l) as u32) * (e.conj() * s).powu(l as u32);
    Ok(projector(1) * w1 + projector(0) * w0)
}

/// Table of `ln k!` for `k = 0..=n`.
#[derive(Debug, Clone)]
struct LnFactorials(Vec<f64>);

impl LnFactorials {
    fn new(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..=n {
            acc += (k as f64).ln();
            t.push(acc);
        }
        Self(t)
    }

    fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// `k ln x` with `0 ln 0 = 0`.
fn k_ln(k: usize, ln_x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}

fn binomial_pmf_with(table: &LnFactorials, p: f64, n: usize) -> Vec<f64> {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    (0..=n)
        .map(|l| (table.ln_choose(n, l) + k_ln(l, lp) + k_ln(n - l, lq)).exp())
        .collect()
}

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: x,
            range: "[0, 1]".into(),
        })
    }
}

fn check_initial(c0_sq: f64, c1_sq: f64) -> Result<()> {
    check_unit("c0_sq", c0_sq)?;
    check_unit("c1_sq", c1_sq)?;
    if (c0_sq + c1_sq - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidProbabilities(format!(
            "c0_sq + c1_sq = {}",
            c0_sq + c1_sq
        )));
    }
    Ok(())
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::OutOfRange {
            name: "N",
            value: 0.0,
            range: "N >= 1".into(),
        });
    }
    Ok(())
}

/// `B_l(p, N)` for `l = 0..=N`.
pub fn binomial_pmf(p: f64, n: usize) -> Result<Vec<f64>> {
    check_unit("p", p)?;
    Ok(binomial_pmf_with(&LnFactorials::new(n), p, n))
}

fn mixture(table: &LnFactorials, c0_sq: f64, c1_sq: f64, q_sq: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let b1 = binomial_pmf_with(table, q_sq, n);
    let p = (0..=n).map(|l| c1_sq * b1[l] + c0_sq * b1[n - l]).collect();
    (p, b1)
}

/// Distribution of the number of `r = 1` readouts after `n` measurements.
pub fn outcome_distribution(c0_sq: f64, c1_sq: f64, theta: f64, n: usize) -> Result<Vec<f64>> {
    check_initial(c0_sq, c1_sq)?;
    check_count(n)?;
    let q_sq = theta.cos().powi(2);
    Ok(mixture(&LnFactorials::new(n), c0_sq, c1_sq, q_sq, n).0)
}

/// Entropy in bits of `B(q_sq, n)`.
pub fn binomial_entropy(q_sq: f64, n: usize) -> Result<f64> {
    check_count(n)?;
    Ok(entropy_bits(&binomial_pmf(q_sq, n)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapsePoint {
    pub n: usize,
    pub s_total: f64,
    pub s_binom: f64,
    /// `(s_total - s_binom) / s0`.
    pub fraction: f64,
}

/// Information extracted as a function of the number of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseCurve {
    pub theta: f64,
    pub q_squared: f64,
    pub c0_sq: f64,
    pub c1_sq: f64,
    pub s0: f64,
    pub points: Vec<CollapsePoint>,
}

impl CollapseCurve {
    pub fn fraction_at(&self, n: usize) -> Option<f64> {
        self.points.get(n.checked_sub(1)?).map(|p| p.fraction)
    }
}

/// Points for `N = 1..=n_max`.
pub fn extraction_curve(c0_sq: f64, c1_sq: f64, theta: f64, n_max: usize) -> Result<CollapseCurve> {
    check_initial(c0_sq, c1_sq)?;
    check_count(n_max)?;
    let s0 = entropy_bits(&[c0_sq, c1_sq]);
    if s0 < MIN_INITIAL_ENTROPY {
        return Err(Error::DegenerateInput(
            "initial state is a basis state, nothing to extract".into(),
        ));
    }
    let q_squared = theta.cos().powi(2);
    let table = LnFactorials::new(n_max);
    let points = (1..=n_max)
        .map(|n| {
            let (p, b1) = mixture(&table, c0_sq, c1_sq, q_squared, n);
            let s_total = entropy_bits(&p);
            let s_binom = entropy_bits(&b1);
            CollapsePoint {
                n,
                s_total,
                s_binom,
                fraction: (s_total - s_binom) / s0,
            }
        })
        .collect();
    Ok(CollapseCurve {
        theta,
        q_squared,
        c0_sq,
        c1_sq,
        s0,
        points,
    })
}

/// `ln2 / (2 (theta - pi/4)^2)`.
pub fn nstar_asymptotic(theta: f64) -> f64 {
    let x = theta - FRAC_PI_4;
    LN_2 / (2.0 * x * x)
}

/// Leading small-`x` behavior of the extracted entropy for an
/// equal-probability state, `2 x^2 N / ln2` bits.
pub fn small_x_extraction(x: f64, n: usize) -> f64 {
    2.0 * x * x * n as f64 / LN_2
}

/// Which curve points enter the `N*` regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    /// Exclusive lower bound on the extracted fraction.
    pub lo: f64,
    /// Exclusive upper bound on the extracted fraction.
    pub hi: f64,
    pub min_points: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            lo: 0.01,
            hi: 0.99,
            min_points: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NStarEstimate {
    pub theta: f64,
    pub n_star_fit: f64,
    pub n_star_asymptotic: f64,
    pub fit_points_used: usize,
}

impl NStarEstimate {
    /// `(fit - asymptotic) / asymptotic`.
    pub fn relative_error(&self) -> f64 {
        (self.n_star_fit - self.n_star_asymptotic) / self.n_star_asymptotic
    }
}

pub fn estimate_nstar(curve: &CollapseCurve) -> Result<NStarEstimate> {
    estimate_nstar_with(curve, FitWindow::default())
}

/// Least squares of `ln(1 - fraction)` against `N` through the origin;
/// the slope is `-1/N*`.
pub fn estimate_nstar_with(curve: &CollapseCurve, window: FitWindow) -> Result<NStarEstimate> {
    let (sxy, sxx, used) = curve
        .points
        .iter()
        .filter(|p| p.fraction > window.lo && p.fraction < window.hi)
        .fold((0.0, 0.0, 0usize), |(sxy, sxx, k), p| {
            let x = p.n as f64;
            (sxy + x * (1.0 - p.fraction).ln(), sxx + x * x, k + 1)
        });
    if used < window.min_points {
        return Err(Error::InsufficientData(format!(
            "{used} curve points inside ({}, {}), need {}",
            window.lo, window.hi, window.min_points
        )));
    }
    let slope = sxy / sxx;
    if slope.is_nan() || slope >= 0.0 {
        return Err(Error::InsufficientData(format!("non-negative slope {slope}")));
    }
    Ok(NStarEstimate {
        theta: curve.theta,
        n_star_fit: -1.0 / slope,
        n_star_asymptotic: nstar_asymptotic(curve.theta),
        fit_points_used: used,
    })
}

/// `start, start + step, ...` up to `stop`, skipping points with
/// `|theta - pi/4| < exclude`.
pub fn theta_grid(start: f64, stop: f64, step: f64, exclude: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || stop < start {
        return Vec::new();
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| start + i as f64 * step)
        .filter(|t| (t - FRAC_PI_4).abs() >= exclude)
        .collect()
}

/// Default sweep: `0.02..=pi/2 - 0.02` in steps of `0.02`.
pub fn default_theta_grid(exclude: f64) -> Vec<f64> {
    theta_grid(0.02, std::f64::consts::FRAC_PI_2 - 0.02, 0.02, exclude)
}

/// Brute-force distribution of `l` from a full state-vector simulation of
/// `S + N (A, X)` qubits: premeasure, rotate the apparatus, copy it onto
/// `X`, then count apparatus readouts.
pub fn explicit_collapse_oracle(c0: C64, c1: C64, theta: f64, phi: f64, n: usize) -> Result<Vec<f64>> {
    check_count(n)?;
    let qubits = 1 + 2 * n;
    let cap = 1 + 2 * ORACLE_MAX_MEASUREMENTS;
    if n > ORACLE_MAX_MEASUREMENTS {
        return Err(Error::RegisterTooLarge {
            requested: qubits,
            cap,
        });
    }
    let s = QubitLabel::System(0);
    let ancillas: Vec<(QubitLabel, QubitLabel)> = (1..=n as u32)
        .map(|i| (QubitLabel::A(i), QubitLabel::X(i)))
        .collect();
    let register = Register::with_cap(
        std::iter::once(s).chain(ancillas.iter().flat_map(|(a, x)| [*a, *x])),
        cap,
    )?;
    let mut amps = vec![ZERO; register.dim()];
    let s_shift = register.shift_of(s)?;
    amps[0] = c0;
    amps[1 << s_shift] = c1;
    let mut state = StateVector::new(register, amps)?;

    let rot = readout_rotation(RotationParams::new(theta, phi));
    let cnot = standard_gate(StandardGate::Cnot);
    for &(a, x) in &ancillas {
        state = premeasure(&state, s, a, None)?;
        state = state.apply(&rot, &[a])?.apply(&cnot, &[a, x])?;
    }

    let a_mask = ancillas
        .iter()
        .map(|(a, _)| state.register().shift_of(*a).map(|sh| 1usize << sh))
        .sum::<Result<usize>>()?;
    let mut dist = vec![0.0; n + 1];
    for (i, amp) in state.amplitudes().iter().enumerate() {
        dist[(i & a_mask).count_ones() as usize] += amp.norm_sqr();
    }
    Ok(dist)
}
