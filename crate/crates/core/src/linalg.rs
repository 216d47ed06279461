//! Dense complex linear algebra helpers shared by the operator-level routes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense `2^n x 2^n` complex operator.
pub type Operator = DMatrix<Complex64>;

/// Dense complex state vector.
pub type StateVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// `(-i)^k`.
pub fn minus_i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => ONE,
        1 => -I,
        2 => -ONE,
        _ => I,
    }
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

/// Largest singular value.
pub fn spectral_norm(op: &Operator) -> f64 {
    if op.is_empty() {
        return 0.0;
    }
    op.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |m, &s| m.max(s))
}

/// Largest entry magnitude.
pub fn max_norm(op: &Operator) -> f64 {
    op.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn vec_norm(v: &StateVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced 1-norm (max column sum), used to pick a scaling exponent.
fn one_norm(op: &Operator) -> f64 {
    (0..op.ncols())
        .map(|c| op.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-16 Taylor core.
pub fn expm(a: &Operator) -> Operator {
    let dim = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a * Complex64::new(0.5_f64.powi(squarings as i32), 0.0);
    let mut result = identity(dim);
    let mut term = identity(dim);
    for j in 1..=16 {
        term = &term * &scaled * Complex64::new(1.0 / j as f64, 0.0);
        result += &term;
        if one_norm(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `exp(-i dt H)`.
pub fn evolution_step(h: &Operator, dt: f64) -> Operator {
    expm(&(h * Complex64::new(0.0, -dt)))
}

/// Deviation from unitarity, `||A^dagger A - 1||`.
pub fn unitarity_defect(op: &Operator) -> f64 {
    spectral_norm(&(op.adjoint() * op - identity(op.nrows())))
}

pub fn is_power_of_two(x: usize) -> bool {
    x != 0 && x & (x - 1) == 0
}

/// Number of bits needed to index `x` values (`ceil(log2 x)`, 0 for x <= 1).
pub fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

/// Smallest power of two that is `>= x` (1 for non-positive input).
pub fn next_pow2_f64(x: f64) -> usize {
    let mut p = 1usize;
    while (p as f64) < x {
        p <<= 1;
    }
    p
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}
