//! Time-dependent d-sparse Hamiltonians and their two black-box oracles.
//!
//! A [`HamiltonianSpec`] lists the structurally nonzero entries of the upper
//! triangle (`row <= col`), each with a time envelope. The assembled matrix is
//! Hermitian by construction: the lower triangle mirrors the upper one by
//! conjugation. [`SparseHamiltonian`] validates a spec and serves the location
//! oracle (`ν(j, s)`, time independent) and the value oracle (`H_ij(t)`),
//! counting every query.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{spectral_norm, Operator, ZERO};

/// Largest system register accepted by the loader.
pub const MAX_SYSTEM_QUBITS: usize = 12;

/// Multiplicative margin applied to grid estimates of `H_max` and `Hdot_max`.
pub const NORM_SAFETY_FACTOR: f64 = 1.05;

/// Default number of grid points used by [`estimate_norms`].
pub const DEFAULT_NORM_GRID: usize = 512;

/// One tabulated point of a piecewise-linear envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwlSample {
    pub t: f64,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Time profile of one matrix entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Envelope {
    /// `a`
    Constant {
        #[serde(default)]
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `a cos(ωt + φ)`
    Cosine {
        #[serde(default)]
        re: f64,
        #[serde(default)]
        im: f64,
        omega: f64,
        #[serde(default)]
        phi: f64,
    },
    /// `a exp(-(t - t_c)^2 / (2 w^2))`
    Gaussian {
        #[serde(default)]
        re: f64,
        #[serde(default)]
        im: f64,
        #[serde(alias = "t_c")]
        center: f64,
        #[serde(alias = "w")]
        width: f64,
    },
    /// Linear interpolation between samples, held constant outside them.
    Pwl { samples: Vec<PwlSample> },
}

impl Envelope {
    pub fn constant(a: f64) -> Self {
        Envelope::Constant { re: a, im: 0.0 }
    }

    pub fn cosine(a: f64, omega: f64, phi: f64) -> Self {
        Envelope::Cosine {
            re: a,
            im: 0.0,
            omega,
            phi,
        }
    }

    pub fn gaussian(a: f64, center: f64, width: f64) -> Self {
        Envelope::Gaussian {
            re: a,
            im: 0.0,
            center,
            width,
        }
    }

    pub fn pwl(samples: &[(f64, f64)]) -> Self {
        Envelope::Pwl {
            samples: samples
                .iter()
                .map(|&(t, re)| PwlSample { t, re, im: 0.0 })
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        match self {
            Envelope::Constant { re, im } => Complex64::new(*re, *im),
            Envelope::Cosine { re, im, omega, phi } => {
                Complex64::new(*re, *im) * (omega * t + phi).cos()
            }
            Envelope::Gaussian {
                re,
                im,
                center,
                width,
            } => {
                let x = (t - center) / width;
                Complex64::new(*re, *im) * (-0.5 * x * x).exp()
            }
            Envelope::Pwl { samples } => {
                let first = &samples[0];
                let last = &samples[samples.len() - 1];
                if t <= first.t {
                    return Complex64::new(first.re, first.im);
                }
                if t >= last.t {
                    return Complex64::new(last.re, last.im);
                }
                let idx = samples.partition_point(|s| s.t <= t);
                let (a, b) = (&samples[idx - 1], &samples[idx]);
                let w = (t - a.t) / (b.t - a.t);
                Complex64::new(a.re + w * (b.re - a.re), a.im + w * (b.im - a.im))
            }
        }
    }

    /// Suprema over all `t` of `|Re f(t)|` and `|Im f(t)|`.
    pub fn component_bounds(&self) -> (f64, f64) {
        match self {
            Envelope::Constant { re, im }
            | Envelope::Cosine { re, im, .. }
            | Envelope::Gaussian { re, im, .. } => (re.abs(), im.abs()),
            Envelope::Pwl { samples } => samples.iter().fold((0.0, 0.0), |(r, i), s| {
                (f64::max(r, s.re.abs()), f64::max(i, s.im.abs()))
            }),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Envelope::Constant { re, im } => {
                if !finite(&[*re, *im]) {
                    return Err("non-finite constant".into());
                }
            }
            Envelope::Cosine { re, im, omega, phi } => {
                if !finite(&[*re, *im, *omega, *phi]) {
                    return Err("non-finite cosine parameter".into());
                }
            }
            Envelope::Gaussian {
                re,
                im,
                center,
                width,
            } => {
                if !finite(&[*re, *im, *center, *width]) || *width <= 0.0 {
                    return Err("gaussian needs finite parameters and width > 0".into());
                }
            }
            Envelope::Pwl { samples } => {
                if samples.is_empty() {
                    return Err("pwl envelope needs at least one sample".into());
                }
                if samples.iter().any(|s| !finite(&[s.t, s.re, s.im])) {
                    return Err("non-finite pwl sample".into());
                }
                if samples.windows(2).any(|w| w[1].t <= w[0].t) {
                    return Err("pwl sample times must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }
}

/// One structurally present upper-triangle entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecEntry {
    pub row: usize,
    pub col: usize,
    pub envelope: Envelope,
}

/// Serializable description of an n-qubit Hamiltonian that is d-sparse on
/// the interval `[t0, t0 + T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub n: usize,
    pub d: usize,
    pub t0: f64,
    #[serde(rename = "T")]
    pub duration: f64,
    pub entries: Vec<SpecEntry>,
}

impl HamiltonianSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: HamiltonianSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// Checks the loader contract: bounds, `row <= col`, real diagonal,
    /// no duplicate entries and interval d-sparsity.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n == 0 || self.n > MAX_SYSTEM_QUBITS {
            return bad(format!("n = {} outside 1..={MAX_SYSTEM_QUBITS}", self.n));
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !self.t0.is_finite() || !self.duration.is_finite() || self.duration <= 0.0 {
            return bad("t0 must be finite and T positive".into());
        }
        if self.entries.is_empty() {
            return bad("no entries".into());
        }
        let dim = self.dim();
        let mut seen = std::collections::HashSet::new();
        let mut degree = vec![0usize; dim];
        for (idx, e) in self.entries.iter().enumerate() {
            if e.row > e.col {
                return bad(format!("entry {idx}: row {} > col {}", e.row, e.col));
            }
            if e.col >= dim {
                return bad(format!("entry {idx}: index {} >= dimension {dim}", e.col));
            }
            if !seen.insert((e.row, e.col)) {
                return bad(format!("entry {idx}: duplicate ({}, {})", e.row, e.col));
            }
            e.envelope
                .validate()
                .map_err(|m| Error::InvalidSpec(format!("entry {idx}: {m}")))?;
            if e.row == e.col {
                if e.envelope.component_bounds().1 != 0.0 {
                    return bad(format!("entry {idx}: diagonal entries must be real"));
                }
                degree[e.row] += 1;
            } else {
                degree[e.row] += 1;
                degree[e.col] += 1;
            }
        }
        if let Some((row, &deg)) = degree.iter().enumerate().find(|(_, &g)| g > self.d) {
            return bad(format!(
                "row {row} has {deg} structural entries, exceeding d = {}",
                self.d
            ));
        }
        Ok(())
    }
}

/// Time-independent sparsity pattern `ν(j, s)`.
///
/// Each row lists its structural columns in ascending order; slots past the
/// row degree return the row's own index (a self-loop that carries value 0).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsePattern {
    pub arity: usize,
    pub rows: Vec<Vec<usize>>,
}

impl SparsePattern {
    pub fn from_spec(spec: &HamiltonianSpec) -> Self {
        let mut rows = vec![Vec::new(); spec.dim()];
        for e in &spec.entries {
            rows[e.row].push(e.col);
            if e.row != e.col {
                rows[e.col].push(e.row);
            }
        }
        for r in &mut rows {
            r.sort_unstable();
        }
        SparsePattern {
            arity: spec.d,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn degree(&self, j: usize) -> usize {
        self.rows[j].len()
    }

    /// `ν(j, s)` for a 1-based slot `s`; unchecked.
    pub fn nu(&self, j: usize, s: usize) -> usize {
        self.rows[j].get(s - 1).copied().unwrap_or(j)
    }

    /// 1-based slot of column `i` in row `j`, if structurally present.
    pub fn slot_of(&self, j: usize, i: usize) -> Option<usize> {
        self.rows[j].binary_search(&i).ok().map(|p| p + 1)
    }

    /// Fixed-arity table of `ν(j, s)` for `s = 1..=arity`.
    pub fn padded_table(&self) -> Vec<Vec<usize>> {
        (0..self.dim())
            .map(|j| (1..=self.arity).map(|s| self.nu(j, s)).collect())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(j, cols)| cols.iter().all(|&i| self.rows[i].binary_search(&j).is_ok()))
    }
}

/// Snapshot of the oracle query counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QueryCount {
    pub loc: u64,
    pub val: u64,
}

impl QueryCount {
    pub fn total(&self) -> u64 {
        self.loc + self.val
    }
}

impl std::ops::Sub for QueryCount {
    type Output = QueryCount;
    fn sub(self, rhs: Self) -> Self {
        QueryCount {
            loc: self.loc - rhs.loc,
            val: self.val - rhs.val,
        }
    }
}

#[derive(Debug, Default)]
pub struct QueryCounters {
    loc: AtomicU64,
    val: AtomicU64,
}

impl QueryCounters {
    pub fn snapshot(&self) -> QueryCount {
        QueryCount {
            loc: self.loc.load(Ordering::Relaxed),
            val: self.val.load(Ordering::Relaxed),
        }
    }

    /// Records queries issued coherently (one superposed query per call).
    pub fn charge(&self, count: QueryCount) {
        self.loc.fetch_add(count.loc, Ordering::Relaxed);
        self.val.fetch_add(count.val, Ordering::Relaxed);
    }
}

/// A validated Hamiltonian with counted oracle access.
#[derive(Debug)]
pub struct SparseHamiltonian {
    spec: HamiltonianSpec,
    pattern: SparsePattern,
    lookup: HashMap<(usize, usize), usize>,
    counters: QueryCounters,
}

impl Clone for SparseHamiltonian {
    fn clone(&self) -> Self {
        // Clones start with fresh counters.
        SparseHamiltonian {
            spec: self.spec.clone(),
            pattern: self.pattern.clone(),
            lookup: self.lookup.clone(),
            counters: QueryCounters::default(),
        }
    }
}

impl SparseHamiltonian {
    pub fn new(spec: HamiltonianSpec) -> Result<Self> {
        spec.validate()?;
        let pattern = SparsePattern::from_spec(&spec);
        let lookup = spec
            .entries
            .iter()
            .enumerate()
            .map(|(idx, e)| ((e.row, e.col), idx))
            .collect();
        Ok(SparseHamiltonian {
            spec,
            pattern,
            lookup,
            counters: QueryCounters::default(),
        })
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    pub fn counters(&self) -> &QueryCounters {
        &self.counters
    }

    pub fn queries(&self) -> QueryCount {
        self.counters.snapshot()
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn t0(&self) -> f64 {
        self.spec.t0
    }

    pub fn duration(&self) -> f64 {
        self.spec.duration
    }

    /// `O_loc`: column of the `s`-th (1-based) structural entry of row `j`.
    pub fn oracle_loc(&self, j: usize, s: usize) -> Result<usize> {
        if j >= self.dim() {
            return domain(format!("row {j} out of range 0..{}", self.dim()));
        }
        if s == 0 || s > self.spec.d {
            return domain(format!("slot {s} out of range 1..={}", self.spec.d));
        }
        self.counters.loc.fetch_add(1, Ordering::Relaxed);
        Ok(self.pattern.nu(j, s))
    }

    /// `O_val`: `H_ij(t)`, exactly zero off the pattern.
    pub fn oracle_val(&self, t: f64, i: usize, j: usize) -> Result<Complex64> {
        if i >= self.dim() || j >= self.dim() {
            return domain(format!("index ({i}, {j}) out of range 0..{}", self.dim()));
        }
        self.check_time(t)?;
        self.counters.val.fetch_add(1, Ordering::Relaxed);
        Ok(self.entry(t, i, j))
    }

    /// Rejects times outside the interval (with a relative slack of 1e-12).
    pub fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.spec.duration.max(1.0);
        if !(t >= self.spec.t0 - slack && t <= self.spec.t0 + self.spec.duration + slack) {
            return domain(format!(
                "time {t} outside [{}, {}]",
                self.spec.t0,
                self.spec.t0 + self.spec.duration
            ));
        }
        Ok(())
    }

    /// Uncounted entry evaluation (test oracles and classical bookkeeping).
    pub fn entry(&self, t: f64, i: usize, j: usize) -> Complex64 {
        if i <= j {
            self.lookup
                .get(&(i, j))
                .map_or(ZERO, |&idx| self.spec.entries[idx].envelope.eval(t))
        } else {
            self.lookup
                .get(&(j, i))
                .map_or(ZERO, |&idx| self.spec.entries[idx].envelope.eval(t).conj())
        }
    }

    /// Uncounted dense assembly of `H(t)`.
    pub fn dense(&self, t: f64) -> Operator {
        let dim = self.dim();
        let mut h = Operator::zeros(dim, dim);
        for e in &self.spec.entries {
            let v = e.envelope.eval(t);
            h[(e.row, e.col)] = v;
            if e.row != e.col {
                h[(e.col, e.row)] = v.conj();
            }
        }
        h
    }
}

/// Grid estimates of `H_max` (largest entry magnitude) and `Hdot_max`
/// (largest spectral norm of the time derivative), inflated by
/// [`NORM_SAFETY_FACTOR`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub h_max: f64,
    pub hdot_max: f64,
    pub grid_points: usize,
}

pub fn estimate_norms(ham: &SparseHamiltonian, grid_points: usize) -> Result<NormBounds> {
    if grid_points < 2 {
        return domain("estimate_norms needs at least 2 grid points");
    }
    let (t0, span) = (ham.t0(), ham.duration());
    let delta = span / (10.0 * grid_points as f64);
    let mut h_max = 0.0_f64;
    let mut hdot_max = 0.0_f64;
    for g in 0..grid_points {
        let t = t0 + span * g as f64 / (grid_points - 1) as f64;
        for e in &ham.spec().entries {
            h_max = h_max.max(e.envelope.eval(t).norm());
        }
        let diff = (ham.dense(t + delta) - ham.dense(t - delta)) / Complex64::new(2.0 * delta, 0.0);
        hdot_max = hdot_max.max(spectral_norm(&diff));
    }
    Ok(NormBounds {
        h_max: h_max * NORM_SAFETY_FACTOR,
        hdot_max: hdot_max * NORM_SAFETY_FACTOR,
        grid_points,
    })
}

/// Seeded random d-sparse spec mixing the constant, cosine and gaussian
/// families with amplitudes of magnitude at most one.
pub fn random_sparse_spec(n: usize, d: usize, duration: f64, seed: u64) -> HamiltonianSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 1usize << n;
    let mut candidates: Vec<(usize, usize)> = (0..dim)
        .flat_map(|i| (i..dim).map(move |j| (i, j)))
        .collect();
    candidates.shuffle(&mut rng);
    let mut degree = vec![0usize; dim];
    let mut entries = Vec::new();
    for (i, j) in candidates {
        let need_ok = if i == j {
            degree[i] < d
        } else {
            degree[i] < d && degree[j] < d
        };
        if !need_ok || !rng.gen_bool(0.7) {
            continue;
        }
        degree[i] += 1;
        if i != j {
            degree[j] += 1;
        }
        let re = rng.gen_range(-1.0..1.0);
        let im = if i == j {
            0.0
        } else {
            rng.gen_range(-1.0..1.0)
        };
        let scale = 1.0 / Complex64::new(re, im).norm().max(1.0);
        let (re, im) = (re * scale, im * scale);
        let envelope = match rng.gen_range(0..3) {
            0 => Envelope::Constant { re, im },
            1 => Envelope::Cosine {
                re,
                im,
                omega: rng.gen_range(0.5..3.0),
                phi: rng.gen_range(0.0..std::f64::consts::TAU),
            },
            _ => Envelope::Gaussian {
                re,
                im,
                center: rng.gen_range(0.0..duration),
                width: rng.gen_range(0.2..0.6) * duration,
            },
        };
        entries.push(SpecEntry {
            row: i,
            col: j,
            envelope,
        });
    }
    if entries.is_empty() {
        entries.push(SpecEntry {
            row: 0,
            col: 0,
            envelope: Envelope::constant(0.5),
        });
    }
    entries.sort_by_key(|e| (e.row, e.col));
    HamiltonianSpec {
        n,
        d,
        t0: 0.0,
        duration,
        entries,
    }
}

/// Single-qubit reference Hamiltonians on `[0, T]`.
pub mod reference {
    use super::*;

    fn qubit(duration: f64, entries: Vec<SpecEntry>) -> HamiltonianSpec {
        let d = if entries.iter().any(|e| e.row == e.col) && entries.iter().any(|e| e.row != e.col)
        {
            2
        } else {
            1
        };
        HamiltonianSpec {
            n: 1,
            d,
            t0: 0.0,
            duration,
            entries,
        }
    }

    fn entry(row: usize, col: usize, envelope: Envelope) -> SpecEntry {
        SpecEntry { row, col, envelope }
    }

    /// `H = σ_x`.
    pub fn sigma_x(duration: f64) -> HamiltonianSpec {
        qubit(duration, vec![entry(0, 1, Envelope::constant(1.0))])
    }

    /// `H = σ_z`.
    pub fn sigma_z(duration: f64) -> HamiltonianSpec {
        qubit(
            duration,
            vec![
                entry(0, 0, Envelope::constant(1.0)),
                entry(1, 1, Envelope::constant(-1.0)),
            ],
        )
    }

    /// `H(t) = cos(ωt) σ_z`.
    pub fn cos_sigma_z(omega: f64, duration: f64) -> HamiltonianSpec {
        qubit(
            duration,
            vec![
                entry(0, 0, Envelope::cosine(1.0, omega, 0.0)),
                entry(1, 1, Envelope::cosine(-1.0, omega, 0.0)),
            ],
        )
    }

    /// `H(t) = cos(t) σ_y`.
    pub fn cos_sigma_y(duration: f64) -> HamiltonianSpec {
        qubit(
            duration,
            vec![entry(
                0,
                1,
                Envelope::Cosine {
                    re: 0.0,
                    im: -1.0,
                    omega: 1.0,
                    phi: 0.0,
                },
            )],
        )
    }

    /// `H(t) = σ_x + cos(ωt) σ_z`.
    pub fn driven_qubit(omega: f64, duration: f64) -> HamiltonianSpec {
        qubit(
            duration,
            vec![
                entry(0, 0, Envelope::cosine(1.0, omega, 0.0)),
                entry(0, 1, Envelope::constant(1.0)),
                entry(1, 1, Envelope::cosine(-1.0, omega, 0.0)),
            ],
        )
    }

    /// `H(t) = σ_x + t σ_z` (piecewise-linear envelope).
    pub fn linear_ramp(duration: f64) -> HamiltonianSpec {
        qubit(
            duration,
            vec![
                entry(0, 0, Envelope::pwl(&[(0.0, 0.0), (duration, duration)])),
                entry(0, 1, Envelope::constant(1.0)),
                entry(1, 1, Envelope::pwl(&[(0.0, 0.0), (duration, -duration)])),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_norm;

    fn diagonal_qubit() -> SparseHamiltonian {
        SparseHamiltonian::new(reference::sigma_z(1.0)).unwrap()
    }

    #[test]
    fn loc_on_diagonal_pattern_maps_row_to_itself() {
        let h = diagonal_qubit();
        assert_eq!(h.oracle_loc(1, 1).unwrap(), 1);
        assert_eq!(h.queries().loc, 1);
    }

    #[test]
    fn loc_on_sigma_x_pattern() {
        let h = SparseHamiltonian::new(reference::sigma_x(1.0)).unwrap();
        assert_eq!(h.oracle_loc(0, 1).unwrap(), 1);
        assert_eq!(h.oracle_loc(1, 1).unwrap(), 0);
    }

    #[test]
    fn loc_pads_with_row_index() {
        let mut spec = reference::sigma_x(1.0);
        spec.d = 3;
        let h = SparseHamiltonian::new(spec).unwrap();
        assert_eq!(h.oracle_loc(0, 2).unwrap(), 0);
        assert_eq!(h.oracle_loc(1, 3).unwrap(), 1);
    }

    #[test]
    fn loc_rejects_out_of_range() {
        let h = diagonal_qubit();
        assert!(matches!(h.oracle_loc(2, 1), Err(Error::InputDomain(_))));
        assert!(matches!(h.oracle_loc(0, 0), Err(Error::InputDomain(_))));
        assert!(matches!(h.oracle_loc(0, 2), Err(Error::InputDomain(_))));
        assert_eq!(h.queries().loc, 0);
    }

    #[test]
    fn loc_matches_brute_force_scan_for_random_pattern() {
        let spec = random_sparse_spec(2, 2, 1.0, 7);
        let h = SparseHamiltonian::new(spec.clone()).unwrap();
        // Independent adjacency table from a scan of the entry list.
        let dim = spec.dim();
        let mut table = vec![vec![false; dim]; dim];
        for e in &spec.entries {
            table[e.row][e.col] = true;
            table[e.col][e.row] = true;
        }
        for j in 0..dim {
            let cols: Vec<usize> = (0..dim).filter(|&c| table[j][c]).collect();
            for s in 1..=spec.d {
                let expected = cols.get(s - 1).copied().unwrap_or(j);
                assert_eq!(h.oracle_loc(j, s).unwrap(), expected, "row {j} slot {s}");
            }
        }
    }

    #[test]
    fn val_constant_and_conjugated_cosine() {
        let mut spec = reference::sigma_x(1.0);
        spec.entries[0].envelope = Envelope::constant(0.5);
        let h = SparseHamiltonian::new(spec).unwrap();
        assert_eq!(h.oracle_val(0.3, 0, 1).unwrap(), Complex64::new(0.5, 0.0));

        let mut spec = reference::sigma_x(1.0);
        spec.entries[0].envelope = Envelope::cosine(1.0, std::f64::consts::TAU, 0.0);
        let h = SparseHamiltonian::new(spec).unwrap();
        assert!(h.oracle_val(0.25, 1, 0).unwrap().norm() < 1e-15);
        assert_eq!(h.queries().val, 1);
    }

    #[test]
    fn val_gaussian_peak_matches_direct_formula() {
        let spec = HamiltonianSpec {
            n: 1,
            d: 1,
            t0: 0.0,
            duration: 1.0,
            entries: vec![SpecEntry {
                row: 0,
                col: 0,
                envelope: Envelope::gaussian(1.0, 0.5, 0.1),
            }],
        };
        let h = SparseHamiltonian::new(spec).unwrap();
        for &t in &[0.5, 0.42, 0.9] {
            let direct = (-(t - 0.5_f64).powi(2) / (2.0 * 0.01)).exp();
            assert!((h.oracle_val(t, 0, 0).unwrap().re - direct).abs() < 1e-15);
        }
        assert_eq!(h.oracle_val(0.5, 0, 0).unwrap().re, 1.0);
    }

    #[test]
    fn val_structural_zero_and_out_of_interval() {
        let h = SparseHamiltonian::new(reference::sigma_x(1.0)).unwrap();
        assert_eq!(h.oracle_val(0.5, 0, 0).unwrap(), ZERO);
        assert!(matches!(
            h.oracle_val(1.5, 0, 1),
            Err(Error::InputDomain(_))
        ));
        assert!(matches!(
            h.oracle_val(-0.1, 0, 1),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn loc_is_unaffected_by_value_queries() {
        let h = SparseHamiltonian::new(random_sparse_spec(3, 2, 1.0, 3)).unwrap();
        let before = h.pattern().padded_table();
        for k in 0..20 {
            let _ = h.oracle_val(k as f64 / 20.0, k % 8, (3 * k) % 8);
        }
        let after: Vec<Vec<usize>> = (0..8)
            .map(|j| (1..=2).map(|s| h.oracle_loc(j, s).unwrap()).collect())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn dense_assembly_is_exactly_hermitian() {
        let h = SparseHamiltonian::new(random_sparse_spec(3, 3, 1.0, 5)).unwrap();
        for g in 0..16 {
            let m = h.dense(g as f64 / 15.0);
            assert_eq!(max_norm(&(m.clone() - m.adjoint())), 0.0);
        }
    }

    #[test]
    fn norms_of_constant_sigma_x() {
        let h = SparseHamiltonian::new(reference::sigma_x(1.0)).unwrap();
        let nb = estimate_norms(&h, DEFAULT_NORM_GRID).unwrap();
        assert!((nb.h_max - 1.05).abs() < 1e-12);
        assert_eq!(nb.hdot_max, 0.0);
    }

    #[test]
    fn norms_of_cosine_sigma_z_against_analytic_derivative() {
        let h = SparseHamiltonian::new(reference::cos_sigma_z(2.0, std::f64::consts::PI)).unwrap();
        let nb = estimate_norms(&h, DEFAULT_NORM_GRID).unwrap();
        assert!((nb.h_max - 1.05).abs() < 1e-9);
        // max_t |d/dt cos(2t)| = 2.
        assert!((nb.hdot_max - 2.0 * 1.05).abs() <= 0.05 * 2.0 * 1.05);
    }

    #[test]
    fn norms_of_linear_ramp() {
        let spec = HamiltonianSpec {
            n: 1,
            d: 1,
            t0: 0.0,
            duration: 1.0,
            entries: vec![SpecEntry {
                row: 0,
                col: 1,
                envelope: Envelope::pwl(&[(0.0, 0.0), (1.0, 1.0)]),
            }],
        };
        let h = SparseHamiltonian::new(spec).unwrap();
        let nb = estimate_norms(&h, DEFAULT_NORM_GRID).unwrap();
        assert!((nb.h_max - 1.05).abs() < 1e-9);
        assert!((nb.hdot_max - 1.05).abs() < 1e-6);
        assert!(matches!(estimate_norms(&h, 1), Err(Error::InputDomain(_))));
    }

    #[test]
    fn loader_rejects_contract_violations() {
        let ok = r#"{"n":1,"d":1,"t0":0,"T":1,"entries":[{"row":0,"col":1,"envelope":{"type":"constant","re":1}}]}"#;
        assert!(HamiltonianSpec::from_json_str(ok).is_ok());
        let lower = ok.replace(r#""row":0,"col":1"#, r#""row":1,"col":0"#);
        assert!(matches!(
            HamiltonianSpec::from_json_str(&lower),
            Err(Error::InvalidSpec(_))
        ));
        let too_dense = r#"{"n":1,"d":1,"t0":0,"T":1,"entries":[
            {"row":0,"col":1,"envelope":{"type":"constant","re":1}},
            {"row":0,"col":0,"envelope":{"type":"constant","re":1}}]}"#;
        assert!(matches!(
            HamiltonianSpec::from_json_str(too_dense),
            Err(Error::InvalidSpec(_))
        ));
        let complex_diag = r#"{"n":1,"d":1,"t0":0,"T":1,"entries":[{"row":0,"col":0,"envelope":{"type":"constant","re":1,"im":0.5}}]}"#;
        assert!(HamiltonianSpec::from_json_str(complex_diag).is_err());
        assert!(HamiltonianSpec::from_json_str("{not json").is_err());
    }

    #[test]
    fn json_round_trip_of_all_envelope_families() {
        let text = r#"{"n":2,"d":2,"t0":0.5,"T":2,"entries":[
            {"row":0,"col":1,"envelope":{"type":"cosine","re":0.3,"im":-0.2,"omega":3,"phi":0.1}},
            {"row":1,"col":1,"envelope":{"type":"gaussian","re":1,"t_c":1.0,"w":0.2}},
            {"row":2,"col":3,"envelope":{"type":"pwl","samples":[{"t":0.5,"re":0},{"t":2.5,"re":1,"im":1}]}}]}"#;
        let spec = HamiltonianSpec::from_json_str(text).unwrap();
        let back = HamiltonianSpec::from_json_str(&spec.to_json_string()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn random_specs_respect_sparsity() {
        for seed in 0..30 {
            let spec = random_sparse_spec(3, 2, 1.0, seed);
            spec.validate().unwrap();
            let p = SparsePattern::from_spec(&spec);
            assert!(p.is_symmetric());
            assert!((0..8).all(|j| p.degree(j) <= 2));
        }
    }
}
