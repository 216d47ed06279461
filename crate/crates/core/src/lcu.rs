//! LCU assembly: `B`, `SELECT(V)`, `W = B† SELECT B`, the reflection `R`,
//! one step of oblivious amplitude amplification per segment, and the
//! `r`-segment chain.
//!
//! Two interchangeable backends produce the per-segment system operator:
//!
//! * [`Backend::Circuit`] runs every primitive on a full state vector over
//!   the [`RegisterLayout`] and extracts the ancilla-zero block column by
//!   column.
//! * [`Backend::Effective`] uses the identity `⟨0|W|0⟩ = Ũ_dec / s` and forms
//!   the amplified block `3A - 4AA†A` with `A = Ũ_dec / 2` directly. It is the
//!   only option once `L` or `M` make the register too wide to simulate.
//!
//! Circuit qubit order, LSB first: system, `K` ℓ-registers, the clock block
//! (see [`crate::clockprep`]), the discard qubit (compressed only) and the
//! OAA flag.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clockprep::{
    compressed_clock_vector, sorted_prep_forward, sorted_prep_inverse, ClockLayout,
};
use crate::dysoncore::{
    exact_propagator, u_tilde_decomposed, Plan, PlanReport, Scheme, SimulationParams,
};
use crate::error::{domain, Error, Result};
use crate::hammodel::{QueryCount, SparseHamiltonian};
use crate::linalg::{
    ceil_log2, minus_i_pow, spectral_norm, unitarity_defect, Operator, StateVec, ONE, ZERO,
};
use crate::onesparse::{Decomposition, TermDescriptor};
use crate::resources::{segment_queries, ResourceTally};
use crate::statevec::{ry, Register, StateVector};

/// Widest register the automatic backend choice will simulate.
pub const CIRCUIT_AUTO_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Auto,
    Circuit,
    Effective,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Backend::Auto),
            "circuit" => Ok(Backend::Circuit),
            "effective" => Ok(Backend::Effective),
            other => domain(format!("unknown backend '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegisterLayout {
    pub n: usize,
    pub slots: usize,
    pub ell_bits: usize,
    pub clock: ClockLayout,
    pub discard: Option<usize>,
    pub flag: usize,
    pub qubits: usize,
}

impl RegisterLayout {
    pub fn new(params: &SimulationParams) -> Self {
        let ell_bits = ceil_log2(params.l);
        let clock =
            ClockLayout::new(params.k, params.m, params.scheme).at(params.n + params.k * ell_bits);
        let mut next = clock.offset + clock.qubits();
        let discard = (params.scheme == Scheme::Compressed).then(|| {
            next += 1;
            next - 1
        });
        RegisterLayout {
            n: params.n,
            slots: params.k,
            ell_bits,
            clock,
            discard,
            flag: next,
            qubits: next + 1,
        }
    }

    pub fn system(&self) -> Register {
        Register::new(0, self.n)
    }

    pub fn ell(&self, slot: usize) -> Register {
        Register::new(self.n + slot * self.ell_bits, self.ell_bits)
    }

    pub fn ancilla_qubits(&self) -> usize {
        self.qubits - self.n
    }
}

/// `cos θ = s/2`: the flag rotation that pads the normalization to exactly 2.
pub fn padding_angle(s: f64) -> Result<f64> {
    if s > 2.0 * (1.0 + 1e-12) {
        return Err(Error::PlannerInvariant(format!(
            "s = {s} exceeds 2; OAA impossible"
        )));
    }
    Ok((s / 2.0).min(1.0).acos())
}

/// Single-step OAA block `3A - 4AA†A` for `A = u/2`.
pub fn amplified_block(u: &Operator) -> Operator {
    let a = u * Complex64::new(0.5, 0.0);
    &a * Complex64::new(3.0, 0.0) - &a * a.adjoint() * &a * Complex64::new(4.0, 0.0)
}

/// Gate-level simulator for one planned segment.
pub struct CircuitEngine<'a> {
    ham: &'a SparseHamiltonian,
    dec: &'a Decomposition,
    params: SimulationParams,
    pub layout: RegisterLayout,
    /// Householder vector `(|0⟩ - |clock⟩)/‖·‖` for the compressed `B`.
    reflector: Option<Vec<f64>>,
    segment: usize,
    terms: Vec<TermDescriptor>,
}

impl<'a> CircuitEngine<'a> {
    pub fn new(
        ham: &'a SparseHamiltonian,
        dec: &'a Decomposition,
        params: &SimulationParams,
        cap: usize,
        segment: usize,
    ) -> Result<Self> {
        let layout = RegisterLayout::new(params);
        if layout.qubits > cap {
            return Err(Error::Capacity {
                qubits: layout.qubits,
                cap,
                parameter: if layout.ell_bits * params.k >= layout.clock.qubits() {
                    "L"
                } else {
                    "M"
                }
                .into(),
                detail: "circuit register too wide; use the effective backend".into(),
            });
        }
        if segment >= params.r {
            return domain(format!("segment {segment} out of range 0..{}", params.r));
        }
        if dec.l != params.l {
            return domain("decomposition term count does not match params");
        }
        let reflector = match params.scheme {
            Scheme::Sorted => None,
            Scheme::Compressed => {
                let mut w = compressed_clock_vector(params)?;
                for x in w.iter_mut() {
                    *x = -*x;
                }
                w[0] += 1.0;
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                (norm > 1e-15).then(|| w.iter().map(|x| x / norm).collect())
            }
        };
        let mut terms = Vec::with_capacity(params.m * params.l);
        for j in 0..params.m {
            let t = params.grid_time(segment, j);
            for l in 0..params.l {
                terms.push(dec.term_at(ham, l, t));
            }
        }
        Ok(CircuitEngine {
            ham,
            dec,
            params: params.clone(),
            layout,
            reflector,
            segment,
            terms,
        })
    }

    pub fn params(&self) -> &SimulationParams {
        &self.params
    }

    fn dim(&self) -> usize {
        1 << self.layout.n
    }

    pub fn zero_state(&self, psi: &StateVec) -> StateVector {
        let mut s = StateVector::from_amps(vec![ZERO; 1 << self.layout.qubits]);
        s.amps[..psi.len()].copy_from_slice(psi.as_slice());
        s
    }

    fn ancillas_clear(&self, state: &StateVector) -> bool {
        state.amps[self.dim()..].iter().all(|a| *a == ZERO)
    }

    fn reflect_clock(&self, state: &mut StateVector) {
        let Some(w) = &self.reflector else { return };
        let block = self.layout.clock.block();
        let (lo_bits, end) = (block.offset, block.end());
        for hi in 0..1usize << (self.layout.qubits - end) {
            for lo in 0..1usize << lo_bits {
                let base = hi << end | lo;
                let dot: Complex64 = w
                    .iter()
                    .enumerate()
                    .map(|(c, &wc)| state.amps[base | c << lo_bits] * wc)
                    .sum();
                if dot == ZERO {
                    continue;
                }
                for (c, &wc) in w.iter().enumerate() {
                    state.amps[base | c << lo_bits] -= dot * (2.0 * wc);
                }
            }
        }
    }

    fn prep(&self, state: &mut StateVector, padded: bool, inverse: bool) -> Result<()> {
        let theta = if padded {
            padding_angle(self.params.s)?
        } else {
            0.0
        };
        let zeta_m = self.params.zeta * self.params.m as f64;
        if inverse {
            if padded {
                state.apply_1q(self.layout.flag, &ry(-theta), &[]);
            }
            match self.params.scheme {
                Scheme::Sorted => sorted_prep_inverse(state, &self.layout.clock, zeta_m),
                Scheme::Compressed => self.reflect_clock(state),
            }
        }
        for slot in 0..self.layout.slots {
            state.hadamard_register(self.layout.ell(slot));
        }
        if !inverse {
            match self.params.scheme {
                Scheme::Sorted => sorted_prep_forward(state, &self.layout.clock, zeta_m),
                Scheme::Compressed => self.reflect_clock(state),
            }
            if padded {
                state.apply_1q(self.layout.flag, &ry(theta), &[]);
            }
        }
        Ok(())
    }

    /// `B`; requires every ancilla to start in `|0⟩`.
    pub fn apply_b(&self, state: &mut StateVector, padded: bool) -> Result<()> {
        if !self.ancillas_clear(state) {
            return Err(Error::Precondition("B needs cleared ancillas".into()));
        }
        self.prep(state, padded, false)
    }

    pub fn apply_b_dagger(&self, state: &mut StateVector, padded: bool) -> Result<()> {
        self.prep(state, padded, true)
    }

    /// Applies `H_{ℓ_i}(t_{j_i})` for the active slots of each branch (later
    /// slots last), flips the discard qubit on the compressed remainder and
    /// applies `Z` to the flag.
    fn select_uncounted(&self, state: &mut StateVector, inverse: bool) {
        let dim = self.dim();
        let l = self.params.l;
        let mut out = vec![ZERO; state.dim()];
        let mut buf = vec![ZERO; dim];
        let mut tmp = vec![ZERO; dim];
        let tail = match self.params.scheme {
            Scheme::Compressed => Some(self.layout.clock.tail_flag()),
            Scheme::Sorted => None,
        };
        for (a, slice) in state.amps.chunks(dim).enumerate() {
            if slice.iter().all(|x| *x == ZERO) {
                continue;
            }
            let base = a * dim;
            let sign = if base >> self.layout.flag & 1 == 1 {
                -ONE
            } else {
                ONE
            };
            let mut target = base;
            buf.copy_from_slice(slice);
            if tail.is_some_and(|t| base >> t & 1 == 1) {
                target ^= 1 << self.layout.discard.expect("compressed layout");
            } else {
                let mut active = self.layout.clock.active(base);
                if inverse {
                    active.reverse();
                }
                for (slot, j) in active {
                    let ell = self.layout.ell(slot).read(base);
                    self.terms[j * l + ell].apply(&buf, &mut tmp);
                    std::mem::swap(&mut buf, &mut tmp);
                }
            }
            for (o, v) in out[target..target + dim].iter_mut().zip(&buf) {
                *o = v * sign;
            }
        }
        state.amps = out;
    }

    /// `SELECT(V)` (or its inverse); advances the oracle counters by `K`
    /// controlled-term costs.
    pub fn apply_select_v(&self, state: &mut StateVector, inverse: bool) {
        self.select_uncounted(state, inverse);
        let c = self.dec.max_query_cost();
        self.ham.counters().charge(QueryCount {
            loc: c.loc * self.params.k as u64,
            val: c.val * self.params.k as u64,
        });
    }

    /// `(-i)^k` with `k` the number of set k-register qubits.
    pub fn apply_phase_k(&self, state: &mut StateVector, inverse: bool) {
        let kreg = self.layout.clock.k_register();
        state.phase(|i| {
            let p = minus_i_pow(kreg.read(i).count_ones() as usize);
            if inverse {
                p.conj()
            } else {
                p
            }
        });
    }

    fn w_inner(&self, state: &mut StateVector, padded: bool, adjoint: bool) -> Result<()> {
        self.prep(state, padded, false)?;
        if adjoint {
            self.apply_phase_k(state, true);
            self.select_uncounted(state, true);
        } else {
            self.select_uncounted(state, false);
            self.apply_phase_k(state, false);
        }
        self.prep(state, padded, true)
    }

    pub fn apply_w(&self, state: &mut StateVector, padded: bool) -> Result<()> {
        self.w_inner(state, padded, false)
    }

    pub fn apply_w_dagger(&self, state: &mut StateVector, padded: bool) -> Result<()> {
        self.w_inner(state, padded, true)
    }

    /// `R = 1 - 2|0⟩⟨0|_a`: negates every branch with all ancillas zero.
    pub fn reflection(&self, state: &mut StateVector) {
        for a in state.amps[..self.dim()].iter_mut() {
            *a = -*a;
        }
    }

    /// `-W R W† R W` with the padded `B`.
    pub fn apply_oaa(&self, state: &mut StateVector) -> Result<()> {
        self.apply_w(state, true)?;
        self.reflection(state);
        self.apply_w_dagger(state, true)?;
        self.reflection(state);
        self.apply_w(state, true)?;
        for a in state.amps.iter_mut() {
            *a = -*a;
        }
        Ok(())
    }

    /// Ancilla-zero block of the map `f`, one system basis column at a time.
    pub fn extract_block(
        &self,
        f: impl Fn(&Self, &mut StateVector) -> Result<()>,
    ) -> Result<Operator> {
        let dim = self.dim();
        let mut block = Operator::zeros(dim, dim);
        for col in 0..dim {
            let mut e = StateVec::zeros(dim);
            e[col] = ONE;
            let mut s = self.zero_state(&e);
            f(self, &mut s)?;
            for row in 0..dim {
                block[(row, col)] = s.amps[row];
            }
        }
        Ok(block)
    }

    /// `⟨0|W|0⟩` without padding; equals `Ũ_dec / s`.
    pub fn w_block(&self) -> Result<Operator> {
        self.extract_block(|e, s| e.apply_w(s, false))
    }

    pub fn oaa_block(&self) -> Result<Operator> {
        self.extract_block(|e, s| e.apply_oaa(s))
    }

    /// `Ũ_dec` of this engine's segment in the scheme's time mode.
    pub fn u_dec(&self) -> Result<Operator> {
        u_tilde_decomposed(
            self.ham,
            self.dec,
            &self.params,
            self.segment,
            self.params.scheme.mode(),
        )
    }
}

/// Per-segment diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct SegmentReport {
    pub segment: usize,
    pub success_probability: f64,
    /// `‖block - Ũ_dec‖`.
    pub block_error: f64,
    /// `‖Ũ_dec† Ũ_dec - 1‖`.
    pub target_defect: f64,
    /// `‖(block - U_exact) ψ‖` for the state entering the segment.
    pub state_error: f64,
    pub queries: QueryCount,
}

/// The amplified block of one segment and its diagnostics inputs.
pub struct SegmentBlock {
    pub u_dec: Operator,
    pub block: Operator,
}

/// Builds the OAA block of `segment` with the chosen backend.
pub fn segment_block(
    ham: &SparseHamiltonian,
    plan: &Plan,
    segment: usize,
    backend: Backend,
) -> Result<SegmentBlock> {
    let p = &plan.params;
    let u_dec = u_tilde_decomposed(ham, &plan.decomposition, p, segment, p.scheme.mode())?;
    let block = match resolve_backend(p, backend, plan.options.cap) {
        Backend::Circuit => {
            CircuitEngine::new(ham, &plan.decomposition, p, plan.options.cap, segment)?
                .oaa_block()?
        }
        _ => {
            padding_angle(p.s)?;
            amplified_block(&u_dec)
        }
    };
    Ok(SegmentBlock { u_dec, block })
}

fn resolve_backend(p: &SimulationParams, backend: Backend, cap: usize) -> Backend {
    match backend {
        Backend::Auto if RegisterLayout::new(p).qubits <= CIRCUIT_AUTO_LIMIT.min(cap) => {
            Backend::Circuit
        }
        Backend::Auto => Backend::Effective,
        b => b,
    }
}

/// `oaa_segment`: one amplified segment applied to `psi`.
pub fn oaa_segment(
    ham: &SparseHamiltonian,
    plan: &Plan,
    segment: usize,
    psi: &StateVec,
    backend: Backend,
    tol: f64,
) -> Result<(StateVec, SegmentReport)> {
    let p = &plan.params;
    let sb = segment_block(ham, plan, segment, backend)?;
    let queries = segment_queries(p, plan.decomposition.max_query_cost());
    ham.counters().charge(queries);
    let (ta, tb) = (
        p.grid_time(segment, 0),
        p.grid_time(segment + 1, 0).min(p.t0 + p.duration),
    );
    let exact = exact_propagator(ham, ta, tb, tol)?;
    let next = &sb.block * psi;
    let norm = psi.norm();
    let success_probability = if norm > 0.0 {
        (next.norm() / norm).powi(2)
    } else {
        1.0
    };
    let report = SegmentReport {
        segment,
        success_probability,
        block_error: spectral_norm(&(&sb.block - &sb.u_dec)),
        target_defect: unitarity_defect(&sb.u_dec),
        state_error: (&next - exact * psi).norm(),
        queries,
    };
    Ok((next, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub plan: PlanReport,
    pub backend: Backend,
    pub register_qubits: usize,
    pub psi0: String,
    pub segments: Vec<SegmentReport>,
    /// `‖ψ_T - U_exact ψ_0‖`.
    pub total_error: f64,
    pub error_sum: f64,
    pub within_budget: bool,
    pub resources: ResourceTally,
    pub psi_t: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub backend: Backend,
    /// Tolerance of the step-doubling reference propagator.
    pub exact_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            backend: Backend::Auto,
            exact_tol: 1e-10,
        }
    }
}

/// Chains the `r` amplified segments on `psi0`. The state is not
/// renormalized between segments, so the map is linear in `psi0`.
pub fn simulate_evolution(
    ham: &SparseHamiltonian,
    plan: &Plan,
    psi0: &StateVec,
    psi0_label: &str,
    options: &RunOptions,
) -> Result<(StateVec, RunReport)> {
    let p = &plan.params;
    if psi0.len() != ham.dim() {
        return domain(format!(
            "psi0 has length {}, expected {}",
            psi0.len(),
            ham.dim()
        ));
    }
    let backend = resolve_backend(p, options.backend, plan.options.cap);
    let mut psi = psi0.clone();
    let mut segments = Vec::with_capacity(p.r);
    let mut tally = ResourceTally::default();
    for seg in 0..p.r {
        let (next, rep) = oaa_segment(ham, plan, seg, &psi, backend, options.exact_tol)?;
        tally.record_segment(p, rep.queries);
        segments.push(rep);
        psi = next;
    }
    tally.record_increments(p.r);
    let exact = exact_propagator(ham, p.t0, p.t0 + p.duration, options.exact_tol)?;
    let total_error = (&psi - exact * psi0).norm();
    let error_sum = segments.iter().map(|s| s.state_error).sum();
    let report = RunReport {
        plan: plan.report(),
        backend,
        register_qubits: RegisterLayout::new(p).qubits,
        psi0: psi0_label.to_string(),
        segments,
        total_error,
        error_sum,
        within_budget: total_error <= p.epsilon,
        resources: tally,
        psi_t: psi.iter().map(|z| [z.re, z.im]).collect(),
    };
    Ok((psi, report))
}

/// Initial-state selector: `basis:<i>`, `random` or `random:<seed>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Psi0Spec {
    Basis(usize),
    Random(u64),
}

impl Psi0Spec {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("basis:") {
            return rest
                .parse()
                .map(Psi0Spec::Basis)
                .map_err(|_| Error::InputDomain(format!("bad basis index '{rest}'")));
        }
        if text == "random" {
            return Ok(Psi0Spec::Random(0));
        }
        if let Some(rest) = text.strip_prefix("random:") {
            return rest
                .parse()
                .map(Psi0Spec::Random)
                .map_err(|_| Error::InputDomain(format!("bad seed '{rest}'")));
        }
        domain(format!(
            "unrecognized psi0 '{text}'; expected basis:<i> or random[:<seed>]"
        ))
    }

    pub fn build(&self, dim: usize) -> Result<StateVec> {
        match *self {
            Psi0Spec::Basis(i) if i < dim => {
                let mut v = StateVec::zeros(dim);
                v[i] = ONE;
                Ok(v)
            }
            Psi0Spec::Basis(i) => domain(format!("basis index {i} >= dimension {dim}")),
            Psi0Spec::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v = StateVec::from_fn(dim, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let n = v.norm();
                Ok(v / Complex64::new(n, 0.0))
            }
        }
    }
}

impl std::fmt::Display for Psi0Spec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psi0Spec::Basis(i) => write!(f, "basis:{i}"),
            Psi0Spec::Random(s) => write!(f, "random:{s}"),
        }
    }
}
