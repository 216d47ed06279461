//! Clock-register preparation: the compressed gap encoding and the sorted
//! (quantum-sort) scheme, plus brute-force reference states.
//!
//! Clock block layout, LSB first: `K` time registers of `log2 M` qubits, the
//! `K` k-register qubits, then the scheme's ancillas (one per comparator for
//! the sorted scheme, one tail flag for the compressed scheme).

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::dysoncore::{Scheme, SimulationParams};
use crate::error::{domain, Error, Result};
use crate::linalg::{ceil_log2, factorial, ZERO};
use crate::statevec::{adjoint2, ry, Register, StateVector};

/// Largest clock block simulated densely.
pub const CLOCK_QUBIT_CAP: usize = 24;
/// Largest number of configurations enumerated by the compressed builders.
pub const ENUMERATION_BUDGET: usize = 1 << 22;

/// Gap representation `(s_1, …, s_k, M, …, M)` of a weight-`k` string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GapEncoding {
    pub gaps: Vec<usize>,
    pub m: usize,
}

impl GapEncoding {
    /// Checks the sentinel layout and that the encoded ones fit in `M` bits.
    pub fn new(gaps: Vec<usize>, m: usize) -> Result<Self> {
        let g = GapEncoding { gaps, m };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return domain("gap encoding needs M >= 1");
        }
        let k = self.gaps.iter().take_while(|&&s| s != m).count();
        if self.gaps[k..].iter().any(|&s| s != m) {
            return domain("entries after the first sentinel must equal M");
        }
        if self.gaps.iter().any(|&s| s > m) {
            return domain("gap exceeds M");
        }
        let used = self.gaps[..k]
            .iter()
            .try_fold(0usize, |acc, &s| acc.checked_add(s))
            .and_then(|sum| sum.checked_add(k.saturating_sub(1)));
        match used {
            Some(u) if k == 0 || u < m => Ok(()),
            _ => domain("gaps overflow the string length"),
        }
    }

    pub fn weight(&self) -> usize {
        self.gaps.iter().take_while(|&&s| s != self.m).count()
    }
}

/// Parses a string of `0`/`1` characters.
pub fn parse_bitstring(text: &str) -> Result<Vec<bool>> {
    text.trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => domain(format!("invalid bit character {other:?}")),
        })
        .collect()
}

/// Zero-run lengths between successive ones, padded with `M`.
pub fn compress_encode(x: &[bool], k_max: usize) -> Result<GapEncoding> {
    let m = x.len();
    let weight = x.iter().filter(|&&b| b).count();
    if weight > k_max {
        return domain(format!("string weight {weight} exceeds K = {k_max}"));
    }
    if m == 0 {
        return domain("empty string");
    }
    let mut gaps = Vec::with_capacity(k_max);
    let mut run = 0;
    for &b in x {
        if b {
            gaps.push(run);
            run = 0;
        } else {
            run += 1;
        }
    }
    gaps.resize(k_max, m);
    Ok(GapEncoding { gaps, m })
}

/// Inverse of [`compress_encode`].
pub fn compress_decode(g: &GapEncoding) -> Result<Vec<bool>> {
    let (_, times) = gaps_to_times(g, g.gaps.len(), g.m)?;
    let mut x = vec![false; g.m];
    for j in times {
        x[j] = true;
    }
    Ok(x)
}

/// `(k, j_1 < … < j_k)` from a gap encoding: `j_i = Σ_{m≤i} s_m + (i-1)`.
pub fn gaps_to_times(g: &GapEncoding, k_max: usize, m: usize) -> Result<(usize, Vec<usize>)> {
    if g.gaps.len() != k_max || g.m != m {
        return domain("encoding shape does not match (K, M)");
    }
    g.check()?;
    let k = g.weight();
    let mut times = Vec::with_capacity(k);
    let mut acc = 0;
    for (i, &s) in g.gaps[..k].iter().enumerate() {
        acc += s + usize::from(i > 0);
        times.push(acc);
    }
    Ok((k, times))
}

/// `|φ_q⟩`: `β α^s` for `s < q`, `α^q` at `s = q`.
pub fn build_phi_q(zeta: f64, q: usize) -> Result<Vec<f64>> {
    if !(zeta > 0.0) || q == 0 {
        return domain("build_phi_q needs zeta > 0 and q >= 1");
    }
    let alpha = 1.0 / (1.0 + zeta).sqrt();
    let beta = zeta.sqrt() * alpha;
    let mut v: Vec<f64> = (0..q).map(|s| beta * alpha.powi(s as i32)).collect();
    v.push(alpha.powi(q as i32));
    Ok(v)
}

/// Qubit map of the clock block, starting at `offset`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ClockLayout {
    pub offset: usize,
    pub slots: usize,
    pub time_bits: usize,
    pub ancillas: usize,
    pub scheme: Scheme,
}

impl ClockLayout {
    pub fn new(slots: usize, m: usize, scheme: Scheme) -> Self {
        let ancillas = match scheme {
            Scheme::Sorted => bitonic_network(slots).len(),
            Scheme::Compressed => 1,
        };
        ClockLayout {
            offset: 0,
            slots,
            time_bits: ceil_log2(m),
            ancillas,
            scheme,
        }
    }

    pub fn at(mut self, offset: usize) -> Self {
        self.offset = offset;
        self
    }

    pub fn qubits(&self) -> usize {
        self.slots * self.time_bits + self.slots + self.ancillas
    }

    pub fn time(&self, slot: usize) -> Register {
        Register::new(self.offset + slot * self.time_bits, self.time_bits)
    }

    pub fn k_bit(&self, slot: usize) -> usize {
        self.offset + self.slots * self.time_bits + slot
    }

    pub fn k_register(&self) -> Register {
        Register::new(self.k_bit(0), self.slots)
    }

    pub fn ancilla(&self, a: usize) -> usize {
        self.offset + self.slots * (self.time_bits + 1) + a
    }

    pub fn block(&self) -> Register {
        Register::new(self.offset, self.qubits())
    }

    /// Compressed tail flag: set on the `|ν⟩` remainder.
    pub fn tail_flag(&self) -> usize {
        debug_assert_eq!(self.scheme, Scheme::Compressed);
        self.ancilla(0)
    }

    /// Active slots and their times, in slot order.
    pub fn active(&self, basis: usize) -> Vec<(usize, usize)> {
        (0..self.slots)
            .filter(|&i| basis >> self.k_bit(i) & 1 == 1)
            .map(|i| (i, self.time(i).read(basis)))
            .collect()
    }
}

/// Marginal key: order `k` and the times of the active slots.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ClockConfig {
    pub k: usize,
    pub times: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ClockState {
    pub layout: ClockLayout,
    pub state: StateVector,
    pub m: usize,
    pub zeta: f64,
    pub big_s: f64,
    pub mu2: f64,
    pub s: f64,
}

impl ClockState {
    /// Squared marginals per configuration, ancillas traced out. The
    /// compressed remainder is excluded, see [`ClockState::remainder_weight`].
    pub fn marginals(&self) -> BTreeMap<ClockConfig, f64> {
        let mut out = BTreeMap::new();
        for (i, a) in self.state.amps.iter().enumerate() {
            let w = a.norm_sqr();
            if w == 0.0 || self.is_remainder(i) {
                continue;
            }
            let active = self.layout.active(i);
            let key = ClockConfig {
                k: active.len(),
                times: active.into_iter().map(|(_, t)| t).collect(),
            };
            *out.entry(key).or_insert(0.0) += w;
        }
        out
    }

    fn is_remainder(&self, basis: usize) -> bool {
        self.layout.scheme == Scheme::Compressed && basis >> self.layout.tail_flag() & 1 == 1
    }

    pub fn remainder_weight(&self) -> f64 {
        self.state.weight_where(|i| self.is_remainder(i))
    }

    pub fn fidelity(&self, other: &ClockState) -> f64 {
        self.state.inner(&other.state).norm_sqr()
    }

    /// JSON dump of `(k, times) → weight` with diagnostics.
    pub fn dump(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .marginals()
            .into_iter()
            .map(|(c, w)| json!({"k": c.k, "times": c.times, "weight": w}))
            .collect();
        json!({
            "scheme": self.layout.scheme,
            "K": self.layout.slots,
            "M": self.m,
            "zeta": self.zeta,
            "S": self.big_s,
            "mu2": self.mu2,
            "s": self.s,
            "remainder_weight": self.remainder_weight(),
            "configurations": rows,
        })
    }
}

fn check_clock_size(layout: &ClockLayout, parameter: &str) -> Result<()> {
    if layout.qubits() > CLOCK_QUBIT_CAP {
        return Err(Error::Capacity {
            qubits: layout.qubits(),
            cap: CLOCK_QUBIT_CAP,
            parameter: parameter.into(),
            detail: "clock block too large for dense simulation".into(),
        });
    }
    Ok(())
}

fn binomial(m: usize, k: usize) -> f64 {
    (0..k).map(|i| (m - i) as f64 / (i + 1) as f64).product()
}

/// Visits every strictly increasing tuple of length `<= k_max` from `0..m`.
fn for_each_tuple(m: usize, k_max: usize, mut f: impl FnMut(&[usize])) {
    fn rec(m: usize, k_max: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        f(cur);
        if cur.len() == k_max {
            return;
        }
        let start = cur.last().map_or(0, |&j| j + 1);
        for j in start..m {
            cur.push(j);
            rec(m, k_max, cur, f);
            cur.pop();
        }
    }
    rec(m, k_max, &mut Vec::new(), &mut f);
}

fn compressed_budget(k_max: usize, m: usize) -> Result<()> {
    let count: f64 = (0..=k_max.min(m)).map(|k| binomial(m, k)).sum();
    if count > ENUMERATION_BUDGET as f64 {
        return Err(Error::Capacity {
            qubits: (k_max + 1) * ceil_log2(m + 1),
            cap: CLOCK_QUBIT_CAP,
            parameter: "M".into(),
            detail: format!("{count:.3e} clock configurations exceed the enumeration budget"),
        });
    }
    Ok(())
}

fn basis_of(layout: &ClockLayout, times: &[usize]) -> usize {
    times.iter().enumerate().fold(0usize, |b, (i, &j)| {
        layout.time(i).write(b, j) | 1 << layout.k_bit(i)
    })
}

/// Compressed clock state from `K+1` copies of `|φ_q⟩`.
///
/// Each configuration takes the product of its gap amplitudes and the
/// projected weight `Σ_{s≥f} |φ_q(s)|²` of the register that overflows the
/// remaining `f` positions. Weight left over once `K` ones are placed forms
/// the remainder `|ν⟩`, flagged on the tail qubit.
pub fn prepare_clock_compressed_with(
    k_max: usize,
    m: usize,
    zeta: f64,
    q: usize,
) -> Result<ClockState> {
    if m == 0 || !(zeta > 0.0) {
        return domain("compressed clock needs M >= 1 and zeta > 0");
    }
    if q < m {
        return domain(format!("q = {q} must be at least M = {m}"));
    }
    let layout = ClockLayout::new(k_max, m, Scheme::Compressed);
    check_clock_size(&layout, "K")?;
    compressed_budget(k_max, m)?;
    let phi = build_phi_q(zeta, q)?;
    let mut suffix = vec![0.0; q + 2];
    for s in (0..=q).rev() {
        suffix[s] = suffix[s + 1] + phi[s] * phi[s];
    }
    let mut state = StateVector::from_amps(vec![ZERO; 1 << layout.qubits()]);
    let mut kept = 0.0;
    for_each_tuple(m, k_max, |times| {
        let mut amp = 1.0;
        let mut prev: Option<usize> = None;
        for &j in times {
            let gap = prev.map_or(j, |p| j - p - 1);
            amp *= phi[gap];
            prev = Some(j);
        }
        let rest = prev.map_or(m, |p| m - 1 - p);
        amp *= suffix[rest].sqrt();
        kept += amp * amp;
        state.amps[basis_of(&layout, times)] = Complex64::new(amp, 0.0);
    });
    // No string can exceed weight K when K >= M.
    let mu2 = if k_max >= m {
        0.0
    } else {
        (1.0 - kept).max(0.0)
    };
    state.amps[1 << layout.tail_flag()] = Complex64::new(mu2.sqrt(), 0.0);
    let big_s: f64 = (0..=k_max.min(m))
        .map(|k| binomial(m, k) * zeta.powi(k as i32))
        .sum();
    Ok(ClockState {
        layout,
        state,
        m,
        zeta,
        big_s,
        mu2,
        s: big_s / (1.0 - mu2),
    })
}

pub fn prepare_clock_compressed(params: &SimulationParams) -> Result<ClockState> {
    if params.scheme != Scheme::Compressed {
        return domain("params are not for the compressed scheme");
    }
    let q = params.q.unwrap_or(params.m).max(params.m);
    prepare_clock_compressed_with(params.k, params.m, params.zeta, q)
}

/// Reference state: every string of weight `<= K` with amplitude
/// `ζ^{|x|/2}` scaled by `√((1-μ²)/S)`, and the remainder weight `μ²`.
pub fn build_time_state_direct(k_max: usize, m: usize, zeta: f64) -> Result<ClockState> {
    if m > 20 {
        return Err(Error::Capacity {
            qubits: m,
            cap: 20,
            parameter: "M".into(),
            detail: "direct enumeration covers all 2^M strings".into(),
        });
    }
    let layout = ClockLayout::new(k_max, m, Scheme::Compressed);
    check_clock_size(&layout, "K")?;
    let total = (1.0 + zeta).powi(m as i32);
    let mut big_s = 0.0;
    let mut entries = Vec::new();
    for x in 0usize..(1 << m) {
        let w = x.count_ones() as usize;
        if w > k_max {
            continue;
        }
        let times: Vec<usize> = (0..m).filter(|&j| x >> j & 1 == 1).collect();
        big_s += zeta.powi(w as i32);
        entries.push((basis_of(&layout, &times), zeta.powi(w as i32).sqrt()));
    }
    let mu2 = if k_max >= m { 0.0 } else { 1.0 - big_s / total };
    let scale = (1.0 / total).sqrt();
    let mut state = StateVector::from_amps(vec![ZERO; 1 << layout.qubits()]);
    for (b, a) in entries {
        state.amps[b] = Complex64::new(a * scale, 0.0);
    }
    state.amps[1 << layout.tail_flag()] = Complex64::new(mu2.max(0.0).sqrt(), 0.0);
    Ok(ClockState {
        layout,
        state,
        m,
        zeta,
        big_s,
        mu2,
        s: big_s / (1.0 - mu2),
    })
}

/// Clock amplitudes for the compressed B, as a real vector over the block.
pub fn compressed_clock_vector(params: &SimulationParams) -> Result<Vec<f64>> {
    Ok(prepare_clock_compressed(params)?
        .state
        .amps
        .iter()
        .map(|a| a.re)
        .collect())
}

/// Rotation angles of the unary `PREPARE(k)` cascade: qubit `i` is rotated
/// (controlled on qubit `i-1`) so that `P(k > i | k >= i)` matches the
/// weights `x^k/k!`.
pub fn unary_angles(k_max: usize, x: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..=k_max)
        .map(|k| x.powi(k as i32) / factorial(k))
        .collect();
    let mut tail = vec![0.0; k_max + 2];
    for k in (0..=k_max).rev() {
        tail[k] = tail[k + 1] + w[k];
    }
    (0..k_max)
        .map(|i| 2.0 * (tail[i + 1] / tail[i]).sqrt().asin())
        .collect()
}

fn apply_unary(state: &mut StateVector, layout: &ClockLayout, angles: &[f64], inverse: bool) {
    let gate = |i: usize| {
        let g = ry(angles[i]);
        if inverse {
            adjoint2(&g)
        } else {
            g
        }
    };
    let order: Vec<usize> = if inverse {
        (0..layout.slots).rev().collect()
    } else {
        (0..layout.slots).collect()
    };
    for i in order {
        let controls: Vec<usize> = if i == 0 {
            vec![]
        } else {
            vec![layout.k_bit(i - 1)]
        };
        state.apply_1q(layout.k_bit(i), &gate(i), &controls);
    }
}

/// Unary `PREPARE(k)` on `K` qubits: amplitude `√((ζM)^k/k!/s)` on `1^k 0^{K-k}`.
pub fn prepare_k_unary(k_max: usize, zeta_m: f64) -> Result<Vec<f64>> {
    if !(zeta_m > 0.0) {
        return domain("prepare_k_unary needs zeta*M > 0");
    }
    let layout = ClockLayout {
        offset: 0,
        slots: k_max,
        time_bits: 0,
        ancillas: 0,
        scheme: Scheme::Sorted,
    };
    let mut state = StateVector::zero(k_max);
    apply_unary(&mut state, &layout, &unary_angles(k_max, zeta_m), false);
    Ok(state.amps.iter().map(|a| a.re).collect())
}

/// Comparator schedule for `K` registers: ascending bitonic network on the
/// next power of two, with comparators touching virtual top registers dropped.
pub fn bitonic_network(k: usize) -> Vec<(usize, usize)> {
    let p = k.next_power_of_two();
    let mut out = Vec::new();
    let mut size = 2;
    while size <= p {
        for i in 0..p {
            let j = i ^ (size - 1);
            if j > i && j < k {
                out.push((i, j));
            }
        }
        let mut stride = size / 4;
        while stride >= 1 {
            for i in 0..p {
                let j = i ^ stride;
                if j > i && j < k {
                    out.push((i, j));
                }
            }
            stride /= 2;
        }
        size *= 2;
    }
    out
}

/// Classical replay of a schedule on a list of values.
pub fn apply_network(schedule: &[(usize, usize)], values: &mut [usize]) {
    for &(a, b) in schedule {
        if values[a] > values[b] {
            values.swap(a, b);
        }
    }
}

/// Compare-and-swap on each branch: `anc ← [value(a) > value(b)]`, then
/// swap `a ↔ b` (and the `carry` qubit pair) when `anc` is set. Requires a
/// clear ancilla.
pub fn comparator_apply(
    state: &mut StateVector,
    a: Register,
    b: Register,
    anc: usize,
    carry: Option<(usize, usize)>,
) -> Result<()> {
    if state.weight_where(|i| i >> anc & 1 == 1) > 0.0 {
        return Err(Error::Precondition(format!(
            "comparator ancilla {anc} is not clear"
        )));
    }
    comparator_gate(state, a, b, anc, carry);
    Ok(())
}

/// Unitary comparator on the full space: XOR the comparison into `anc`,
/// then swap controlled on `anc`.
pub fn comparator_gate(
    state: &mut StateVector,
    a: Register,
    b: Register,
    anc: usize,
    carry: Option<(usize, usize)>,
) {
    state.permute(|i| {
        let flagged = i ^ (usize::from(a.read(i) > b.read(i)) << anc);
        if flagged >> anc & 1 == 1 {
            swap_registers(flagged, a, b, carry)
        } else {
            flagged
        }
    });
}

/// Inverse of [`comparator_gate`]: controlled swap, then XOR-compare.
pub fn comparator_unapply(
    state: &mut StateVector,
    a: Register,
    b: Register,
    anc: usize,
    carry: Option<(usize, usize)>,
) {
    state.permute(|i| {
        let j = if i >> anc & 1 == 1 {
            swap_registers(i, a, b, carry)
        } else {
            i
        };
        j ^ (usize::from(a.read(j) > b.read(j)) << anc)
    });
}

fn swap_registers(i: usize, a: Register, b: Register, carry: Option<(usize, usize)>) -> usize {
    let (va, vb) = (a.read(i), b.read(i));
    swap_branch(a.write(b.write(i, va), vb), carry)
}

fn swap_branch(i: usize, carry: Option<(usize, usize)>) -> usize {
    match carry {
        Some((p, q)) if (i >> p & 1) != (i >> q & 1) => i ^ (1 << p) ^ (1 << q),
        _ => i,
    }
}

/// Sorted-scheme preparation on the clock block of `state`.
pub fn sorted_prep_forward(state: &mut StateVector, layout: &ClockLayout, zeta_m: f64) {
    apply_unary(state, layout, &unary_angles(layout.slots, zeta_m), false);
    for i in 0..layout.slots {
        state.hadamard_register(layout.time(i));
    }
    for (c, &(lo, hi)) in bitonic_network(layout.slots).iter().enumerate() {
        comparator_gate(
            state,
            layout.time(lo),
            layout.time(hi),
            layout.ancilla(c),
            Some((layout.k_bit(lo), layout.k_bit(hi))),
        );
    }
}

/// Inverse of [`sorted_prep_forward`].
pub fn sorted_prep_inverse(state: &mut StateVector, layout: &ClockLayout, zeta_m: f64) {
    for (c, &(lo, hi)) in bitonic_network(layout.slots).iter().enumerate().rev() {
        comparator_unapply(
            state,
            layout.time(lo),
            layout.time(hi),
            layout.ancilla(c),
            Some((layout.k_bit(lo), layout.k_bit(hi))),
        );
    }
    for i in 0..layout.slots {
        state.hadamard_register(layout.time(i));
    }
    apply_unary(state, layout, &unary_angles(layout.slots, zeta_m), true);
}

/// Sorted clock state from `|0⟩`.
pub fn prepare_clock_sorted_with(k_max: usize, m: usize, zeta: f64) -> Result<ClockState> {
    if m == 0 || !(zeta > 0.0) || !m.is_power_of_two() {
        return domain("sorted clock needs M a power of two and zeta > 0");
    }
    let layout = ClockLayout::new(k_max, m, Scheme::Sorted);
    check_clock_size(&layout, "K")?;
    let x = zeta * m as f64;
    let mut state = StateVector::zero(layout.qubits());
    sorted_prep_forward(&mut state, &layout, x);
    let s: f64 = (0..=k_max).map(|k| x.powi(k as i32) / factorial(k)).sum();
    Ok(ClockState {
        layout,
        state,
        m,
        zeta,
        big_s: s,
        mu2: 0.0,
        s,
    })
}

pub fn prepare_clock_sorted(params: &SimulationParams) -> Result<ClockState> {
    if params.scheme != Scheme::Sorted {
        return domain("params are not for the sorted scheme");
    }
    prepare_clock_sorted_with(params.k, params.m, params.zeta)
}
