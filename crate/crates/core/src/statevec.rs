//! Dense state vectors over little-endian qubit registers.

use num_complex::Complex64;

use crate::linalg::{ONE, ZERO};

/// Contiguous block of qubits read as an unsigned integer (LSB first).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Register {
    pub offset: usize,
    pub width: usize,
}

impl Register {
    pub fn new(offset: usize, width: usize) -> Self {
        Register { offset, width }
    }

    pub fn mask(&self) -> usize {
        ((1usize << self.width) - 1) << self.offset
    }

    pub fn read(&self, basis: usize) -> usize {
        (basis >> self.offset) & ((1usize << self.width) - 1)
    }

    pub fn write(&self, basis: usize, value: usize) -> usize {
        (basis & !self.mask()) | (value << self.offset)
    }

    pub fn end(&self) -> usize {
        self.offset + self.width
    }
}

pub type Gate2 = [[Complex64; 2]; 2];

pub fn hadamard() -> Gate2 {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

/// `Ry(θ)|0⟩ = cos(θ/2)|0⟩ + sin(θ/2)|1⟩`.
pub fn ry(theta: f64) -> Gate2 {
    let (s, c) = (0.5 * theta).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

pub fn adjoint2(g: &Gate2) -> Gate2 {
    [
        [g[0][0].conj(), g[1][0].conj()],
        [g[0][1].conj(), g[1][1].conj()],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub qubits: usize,
    pub amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1usize << qubits];
        amps[0] = ONE;
        StateVector { qubits, amps }
    }

    pub fn from_amps(amps: Vec<Complex64>) -> Self {
        assert!(amps.len().is_power_of_two());
        StateVector {
            qubits: amps.len().trailing_zeros() as usize,
            amps,
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Applies `g` to `target` on branches where every control is 1.
    pub fn apply_1q(&mut self, target: usize, g: &Gate2, controls: &[usize]) {
        let bit = 1usize << target;
        let cmask = controls.iter().fold(0usize, |m, &c| m | 1 << c);
        for i in 0..self.amps.len() {
            if i & bit != 0 || i & cmask != cmask {
                continue;
            }
            let (a0, a1) = (self.amps[i], self.amps[i | bit]);
            self.amps[i] = g[0][0] * a0 + g[0][1] * a1;
            self.amps[i | bit] = g[1][0] * a0 + g[1][1] * a1;
        }
    }

    pub fn hadamard_register(&mut self, reg: Register) {
        let h = hadamard();
        for q in reg.offset..reg.end() {
            self.apply_1q(q, &h, &[]);
        }
    }

    /// Relabels basis states by the bijection `f`.
    pub fn permute(&mut self, f: impl Fn(usize) -> usize) {
        let mut out = vec![ZERO; self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            if *a != ZERO {
                out[f(i)] += *a;
            }
        }
        self.amps = out;
    }

    pub fn phase(&mut self, f: impl Fn(usize) -> Complex64) {
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= f(i);
        }
    }

    /// Total probability of the branches where `pred` holds.
    pub fn weight_where(&self, pred: impl Fn(usize) -> bool) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| pred(*i))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}
