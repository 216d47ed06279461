//! Parameter planning, the discretized truncated Dyson operator and the
//! exact-propagator reference.
//!
//! Segment `σ` covers `[t0 + σT/r, t0 + (σ+1)T/r]` and is sampled at the left
//! endpoints `t_j = t0 + σT/r + jT/(rM)`, `j = 0..M`. Summing time-ordered
//! products over all `M^k` grid tuples collapses onto sorted tuples weighted
//! by `1/(k_1!···k_σ!)`, which is the generating function
//! `Π_m Σ_c H(t_m)^c/c!` truncated at total degree `K`; [`ordered_sums`]
//! evaluates it by dynamic programming.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hammodel::{NormBounds, SparseHamiltonian};
use crate::linalg::{
    ceil_log2, evolution_step, factorial, identity, is_power_of_two, minus_i_pow, next_pow2_f64,
    spectral_norm, Operator,
};
use crate::onesparse::{decompose, Decomposition};

/// Default simulated-qubit cap.
pub const DEFAULT_QUBIT_CAP: usize = 26;
/// Default `c_γ` in `γ = c_γ ε / (d³ T)`.
pub const DEFAULT_C_GAMMA: f64 = 0.125;
/// Default `c_M` in the time-grid rule.
pub const DEFAULT_C_M: f64 = 2.0;
/// Largest step count tried by [`exact_propagator`].
pub const MAX_PROPAGATOR_STEPS: usize = 1 << 24;
const MAX_GRID: f64 = (1u64 << 40) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Compressed gap encoding; repeated times are omitted.
    Compressed,
    /// Quantum sort of uniformly sampled times; repeats carry multiplicities.
    Sorted,
}

impl Scheme {
    pub fn mode(self) -> SumMode {
        match self {
            Scheme::Compressed => SumMode::UniqueTimes,
            Scheme::Sorted => SumMode::WithRepeats,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compressed" => Ok(Scheme::Compressed),
            "sorted" => Ok(Scheme::Sorted),
            other => domain(format!("unknown scheme '{other}'")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Compressed => "compressed",
            Scheme::Sorted => "sorted",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumMode {
    WithRepeats,
    UniqueTimes,
}

/// Resolved parameters of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub n: usize,
    pub d: usize,
    pub t0: f64,
    #[serde(rename = "T")]
    pub duration: f64,
    pub epsilon: f64,
    pub gamma: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub lambda: f64,
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub zeta: f64,
    pub scheme: Scheme,
    /// Resolution of the `|φ_q⟩` gap registers (compressed only).
    pub q: Option<usize>,
    /// Tail weight `μ²` of strings heavier than `K` (compressed only).
    pub mu2: f64,
    /// Compressed normalization `S` (equal to `s` for the sorted scheme).
    #[serde(rename = "S")]
    pub big_s: f64,
    /// LCU normalization `s`.
    pub s: f64,
}

impl SimulationParams {
    pub fn segment_length(&self) -> f64 {
        self.duration / self.r as f64
    }

    /// `λT/r`.
    pub fn lambda_t_over_r(&self) -> f64 {
        self.lambda * self.duration / self.r as f64
    }

    /// Grid time `t_j` of segment `segment`.
    pub fn grid_time(&self, segment: usize, j: usize) -> f64 {
        self.t0
            + segment as f64 * self.segment_length()
            + j as f64 * self.duration / (self.r * self.m) as f64
    }

    /// Recomputes `ζ`, `μ²`, `S`, `s` and `q` from the primary fields.
    pub fn refresh_derived(&mut self) {
        self.lambda = self.l as f64 * self.gamma;
        self.zeta = self.lambda * self.duration / (self.r * self.m) as f64;
        match self.scheme {
            Scheme::Sorted => {
                let x = self.zeta * self.m as f64;
                self.s = (0..=self.k).map(|k| x.powi(k as i32) / factorial(k)).sum();
                self.big_s = self.s;
                self.mu2 = 0.0;
                self.q = None;
            }
            Scheme::Compressed => {
                self.mu2 = binomial_tail(self.m, self.zeta, self.k);
                self.s = (self.m as f64 * self.zeta.ln_1p()).exp();
                self.big_s = (1.0 - self.mu2) * self.s;
                let bits = (4.0 * self.r as f64 / self.epsilon).log2().ceil().max(1.0);
                self.q = Some(next_pow2_f64(self.m as f64 * bits));
            }
        }
    }

    /// Checks every planner invariant, given the norms used to plan.
    pub fn validate(&self, norms: &NormBounds, c_m: f64) -> Result<()> {
        let fail = |m: String| Err(Error::PlannerInvariant(m));
        let lt = self.lambda * self.duration;
        let r = self.r as f64;
        for (name, v) in [("r", self.r), ("M", self.m), ("L", self.l)] {
            if !is_power_of_two(v) {
                return fail(format!("{name} = {v} is not a power of two"));
            }
        }
        match self.scheme {
            Scheme::Sorted if r * std::f64::consts::LN_2 < lt * (1.0 - 1e-12) => {
                return fail(format!(
                    "r ln 2 = {} < λT = {lt}",
                    r * std::f64::consts::LN_2
                ));
            }
            Scheme::Compressed if r * (2.0 * (1.0 - self.mu2)).ln() < lt * (1.0 - 1e-12) => {
                return fail(format!("r ln(2(1-μ²)) < λT = {lt}"));
            }
            _ => {}
        }
        if r < norms.h_max * self.duration * (1.0 - 1e-12) {
            return fail(format!(
                "r = {r} < H_max T = {}",
                norms.h_max * self.duration
            ));
        }
        if truncation_term(self.lambda_t_over_r(), self.k) > self.epsilon / (2.0 * r) {
            return fail(format!("K = {} too small for ε/(2r)", self.k));
        }
        let m_min = grid_target(self, norms, c_m);
        if (self.m as f64) < m_min * (1.0 - 1e-12) {
            return fail(format!("M = {} below the grid rule {m_min}", self.m));
        }
        if self.s > 2.0 * (1.0 + 1e-12) {
            return fail(format!("s = {} exceeds 2", self.s));
        }
        Ok(())
    }

    /// Register width that bounds the work of the effective-map backend.
    pub fn effective_qubits(&self) -> usize {
        2 * self.n + ceil_log2(self.m) + ceil_log2(self.k + 1)
    }
}

/// `x^{K+1}/(K+1)!`.
pub fn truncation_term(x: f64, k: usize) -> f64 {
    (1..=k + 1).fold(1.0, |acc, i| acc * x / i as f64)
}

fn grid_target(p: &SimulationParams, norms: &NormBounds, c_m: f64) -> f64 {
    let scale = c_m * p.duration / (p.epsilon * p.lambda);
    match p.scheme {
        Scheme::Sorted => scale * norms.hdot_max,
        Scheme::Compressed => scale * (norms.h_max * norms.h_max + norms.hdot_max),
    }
}

/// `P(Bin(M, ζ/(1+ζ)) > K)`: the weight of strings heavier than `K`.
pub fn binomial_tail(m: usize, zeta: f64, k: usize) -> f64 {
    if k >= m {
        return 0.0;
    }
    let lp = zeta.ln() - zeta.ln_1p();
    let lq = -zeta.ln_1p();
    let mf = m as f64;
    // ln C(M, K+1)
    let mut lc: f64 = (0..=k)
        .map(|i| ((mf - i as f64) / (i as f64 + 1.0)).ln())
        .sum();
    let mut total = 0.0;
    for w in (k + 1)..=m {
        let term = (lc + w as f64 * lp + (mf - w as f64) * lq).exp();
        total += term;
        if (w as f64) > mf * zeta / (1.0 + zeta) + 1.0 && (term < total * 1e-18 || term == 0.0) {
            break;
        }
        lc += ((mf - w as f64) / (w as f64 + 1.0)).ln();
    }
    total.min(1.0)
}

/// Planner knobs and forced overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub cap: usize,
    pub c_gamma: f64,
    pub c_m: f64,
    pub force_gamma: Option<f64>,
    pub force_k: Option<usize>,
    pub force_m: Option<usize>,
    pub force_r: Option<usize>,
    /// Skip invariant checks on forced values.
    pub unsafe_overrides: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            cap: DEFAULT_QUBIT_CAP,
            c_gamma: DEFAULT_C_GAMMA,
            c_m: DEFAULT_C_M,
            force_gamma: None,
            force_k: None,
            force_m: None,
            force_r: None,
            unsafe_overrides: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub params: SimulationParams,
    pub decomposition: Decomposition,
    pub norms: NormBounds,
    pub options: PlanOptions,
}

/// Error-budget shares and predicted bounds echoed in the planner report.
#[derive(Clone, Debug, Serialize)]
pub struct PlanReport {
    #[serde(flatten)]
    pub params: SimulationParams,
    pub norms: NormBounds,
    pub budget: BudgetShares,
    pub bounds: PredictedBounds,
    pub colors: usize,
    pub effective_qubits: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BudgetShares {
    pub truncation: f64,
    pub discretization: f64,
    pub decomposition: f64,
    pub clock: f64,
    pub per_segment: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PredictedBounds {
    pub truncation_and_discretization: f64,
    pub repeated_times: f64,
    pub truncation_term: f64,
}

impl Plan {
    pub fn report(&self) -> PlanReport {
        let p = &self.params;
        let quarter = p.epsilon / 4.0;
        PlanReport {
            params: p.clone(),
            norms: self.norms,
            budget: BudgetShares {
                truncation: quarter,
                discretization: quarter,
                decomposition: quarter,
                clock: quarter,
                per_segment: quarter / p.r as f64,
            },
            bounds: PredictedBounds {
                truncation_and_discretization: truncation_and_discretization_bound(p, &self.norms),
                repeated_times: repeated_times_bound(p, &self.norms),
                truncation_term: truncation_term(p.lambda_t_over_r(), p.k),
            },
            colors: self.decomposition.coloring.len(),
            effective_qubits: p.effective_qubits(),
        }
    }
}

fn smallest_k(x: f64, target: f64) -> usize {
    let mut k = 1;
    while truncation_term(x, k) > target {
        k += 1;
    }
    k
}

/// Plans `γ, L, λ, r, K, M, ζ` for `ham` with total error `epsilon`.
pub fn plan_parameters(
    ham: &SparseHamiltonian,
    norms: &NormBounds,
    epsilon: f64,
    scheme: Scheme,
    options: &PlanOptions,
) -> Result<Plan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return domain(format!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    let (n, d, t) = (ham.n(), ham.d(), ham.duration());
    let gamma = options
        .force_gamma
        .unwrap_or(options.c_gamma * epsilon / ((d * d * d) as f64 * t));
    let decomposition = decompose(ham, gamma)?;
    let l = decomposition.l;
    let lambda = l as f64 * gamma;
    let lt = lambda * t;
    let mut p = SimulationParams {
        n,
        d,
        t0: ham.t0(),
        duration: t,
        epsilon,
        gamma,
        l,
        lambda,
        r: 1,
        k: 1,
        m: 1,
        zeta: 0.0,
        scheme,
        q: None,
        mu2: 0.0,
        big_s: 0.0,
        s: 0.0,
    };
    let m_target = grid_target(&p, norms, options.c_m);
    if m_target > MAX_GRID {
        return Err(capacity_error(&p, options.cap, "M", u64::MAX));
    }
    p.m = options.force_m.unwrap_or_else(|| next_pow2_f64(m_target));
    let r_floor = (lt / std::f64::consts::LN_2).max(norms.h_max * t);
    let mut r = options.force_r.unwrap_or_else(|| next_pow2_f64(r_floor));
    loop {
        p.r = r;
        p.k = options
            .force_k
            .unwrap_or_else(|| smallest_k(p.lambda_t_over_r(), epsilon / (2.0 * r as f64)));
        p.refresh_derived();
        let ok = scheme == Scheme::Sorted
            || options.force_r.is_some()
            || r as f64 * (2.0 * (1.0 - p.mu2)).ln() >= lt;
        if ok {
            break;
        }
        r *= 2;
    }
    let forced =
        options.force_k.is_some() || options.force_m.is_some() || options.force_r.is_some();
    if !(forced && options.unsafe_overrides) {
        p.validate(norms, options.c_m)?;
    }
    if p.effective_qubits() > options.cap {
        return Err(capacity_error(
            &p,
            options.cap,
            "",
            p.effective_qubits() as u64,
        ));
    }
    Ok(Plan {
        params: p,
        decomposition,
        norms: *norms,
        options: options.clone(),
    })
}

fn capacity_error(p: &SimulationParams, cap: usize, forced: &str, qubits: u64) -> Error {
    let parts = [
        ("n", 2 * p.n),
        ("M", ceil_log2(p.m)),
        ("K", ceil_log2(p.k + 1)),
    ];
    let parameter = if forced.is_empty() {
        parts.iter().max_by_key(|x| x.1).unwrap().0.to_string()
    } else {
        forced.to_string()
    };
    let detail = match parameter.as_str() {
        "n" => "system register alone exceeds the cap".to_string(),
        _ => format!(
            "{parameter} is driven by epsilon = {}; increase epsilon",
            p.epsilon
        ),
    };
    Error::Capacity {
        qubits: qubits.min(usize::MAX as u64) as usize,
        cap,
        parameter,
        detail,
    }
}

/// `U(t_a, t_b)` by midpoint ordered exponentials with step doubling.
pub fn exact_propagator(ham: &SparseHamiltonian, t_a: f64, t_b: f64, tol: f64) -> Result<Operator> {
    exact_propagator_fn(
        |t| ham.dense(t),
        ham.dim(),
        (ham.t0(), ham.t0() + ham.duration()),
        t_a,
        t_b,
        tol,
    )
}

/// Same as [`exact_propagator`] for any Hamiltonian closure on `interval`.
pub fn exact_propagator_fn(
    h: impl Fn(f64) -> Operator,
    dim: usize,
    interval: (f64, f64),
    t_a: f64,
    t_b: f64,
    tol: f64,
) -> Result<Operator> {
    let slack = 1e-12 * (interval.1 - interval.0).abs().max(1.0);
    if !(tol > 0.0) || t_a > t_b || t_a < interval.0 - slack || t_b > interval.1 + slack {
        return domain(format!("bad propagator request [{t_a}, {t_b}] tol {tol}"));
    }
    if t_a == t_b {
        return Ok(identity(dim));
    }
    let product = |steps: usize| {
        let dt = (t_b - t_a) / steps as f64;
        let mut u = identity(dim);
        for i in 0..steps {
            let tm = t_a + (i as f64 + 0.5) * dt;
            u = evolution_step(&h(tm), dt) * u;
        }
        u
    };
    let mut steps = 1;
    let mut prev = product(steps);
    while steps < MAX_PROPAGATOR_STEPS {
        steps *= 2;
        let next = product(steps);
        if spectral_norm(&(&next - &prev)) < tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Convergence(format!(
        "propagator did not reach tol {tol} within {MAX_PROPAGATOR_STEPS} steps"
    )))
}

/// `Q_0..=Q_K` for grid operators `hs` (in time order), where `Q_k` is the
/// sum over all `M^k` tuples of the time-ordered product divided by `k!`.
/// With [`SumMode::UniqueTimes`] only strictly increasing tuples count.
pub fn ordered_sums(hs: &[Operator], k_max: usize, mode: SumMode) -> Vec<Operator> {
    let dim = hs.first().map_or(1, |h| h.nrows());
    let mut q: Vec<Operator> = (0..=k_max)
        .map(|k| {
            if k == 0 {
                identity(dim)
            } else {
                Operator::zeros(dim, dim)
            }
        })
        .collect();
    for h in hs {
        let c_max = if mode == SumMode::UniqueTimes {
            1
        } else {
            k_max
        };
        // powers[c] = H^c / c!
        let mut powers = vec![identity(dim)];
        for c in 1..=c_max {
            let next = h * &powers[c - 1] / Complex64::new(c as f64, 0.0);
            powers.push(next);
        }
        for k in (1..=k_max).rev() {
            let mut acc = q[k].clone();
            for c in 1..=c_max.min(k) {
                acc += &powers[c] * &q[k - c];
            }
            q[k] = acc;
        }
    }
    q
}

/// Grid operators `H(t_j)` of one segment.
pub fn segment_grid(
    h: impl Fn(f64) -> Operator,
    params: &SimulationParams,
    segment: usize,
) -> Vec<Operator> {
    (0..params.m)
        .map(|j| h(params.grid_time(segment, j)))
        .collect()
}

/// `Σ_k (-iT/(rM))^k Q_k` from precomputed ordered sums.
pub fn dyson_from_sums(q: &[Operator], params: &SimulationParams) -> Operator {
    let step = params.duration / (params.r * params.m) as f64;
    let mut u = Operator::zeros(q[0].nrows(), q[0].ncols());
    for (k, qk) in q.iter().enumerate() {
        u += qk * (minus_i_pow(k) * step.powi(k as i32));
    }
    u
}

fn check_segment(params: &SimulationParams, segment: usize) -> Result<()> {
    if segment >= params.r {
        return domain(format!("segment {segment} out of range 0..{}", params.r));
    }
    Ok(())
}

/// `Q_k` of segment `segment` for the true Hamiltonian.
pub fn ordered_product_sum(
    ham: &SparseHamiltonian,
    params: &SimulationParams,
    segment: usize,
    k: usize,
) -> Result<Operator> {
    check_segment(params, segment)?;
    if k > params.k {
        return domain(format!("order {k} exceeds K = {}", params.k));
    }
    let hs = segment_grid(|t| ham.dense(t), params, segment);
    Ok(ordered_sums(&hs, k, SumMode::WithRepeats).swap_remove(k))
}

/// Truncated discretized Dyson operator `Ũ` of one segment for the true `H(t)`.
pub fn u_tilde_segment(
    ham: &SparseHamiltonian,
    params: &SimulationParams,
    segment: usize,
    mode: SumMode,
) -> Result<Operator> {
    check_segment(params, segment)?;
    let hs = segment_grid(|t| ham.dense(t), params, segment);
    Ok(dyson_from_sums(&ordered_sums(&hs, params.k, mode), params))
}

/// `Ũ_dec`: as [`u_tilde_segment`] with `H(t)` replaced by `γ Σ_ℓ H_ℓ(t)`.
pub fn u_tilde_decomposed(
    ham: &SparseHamiltonian,
    dec: &Decomposition,
    params: &SimulationParams,
    segment: usize,
    mode: SumMode,
) -> Result<Operator> {
    check_segment(params, segment)?;
    let hs = segment_grid(|t| dec.reconstruct(ham, t), params, segment);
    Ok(dyson_from_sums(&ordered_sums(&hs, params.k, mode), params))
}

/// Index into the multi-index set of the Dyson sum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DysonTermIndex {
    pub k: usize,
    pub times: Vec<usize>,
    pub terms: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MultiplicityProfile {
    pub distinct: usize,
    pub counts: Vec<usize>,
    /// `k!/(k_1!···k_σ!)`.
    pub factor: u128,
}

/// Run lengths of a sorted tuple and its multinomial factor.
pub fn multiplicity_profile(times: &[usize]) -> Result<MultiplicityProfile> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return domain("multiplicity_profile needs an ascending tuple");
    }
    let mut counts: Vec<usize> = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if i > 0 && times[i - 1] == t {
            *counts.last_mut().unwrap() += 1;
        } else {
            counts.push(1);
        }
    }
    // Product of binomials C(k_1 + ... + k_i, k_i).
    let mut factor: u128 = 1;
    let mut seen: u128 = 0;
    for &c in &counts {
        for j in 1..=c as u128 {
            seen += 1;
            factor = factor * seen / j;
        }
    }
    Ok(MultiplicityProfile {
        distinct: counts.len(),
        counts,
        factor,
    })
}

/// LCU weight `(γT/r)^k / (M^k k_1!···k_σ!)`, zero for unordered tuples.
pub fn beta_coefficient(index: &DysonTermIndex, params: &SimulationParams) -> Result<f64> {
    if index.times.len() != index.k || index.terms.len() != index.k {
        return domain("index lengths must equal k");
    }
    if index.times.iter().any(|&j| j >= params.m) || index.terms.iter().any(|&l| l >= params.l) {
        return domain("index entry out of range");
    }
    if index.times.windows(2).any(|w| w[1] < w[0]) {
        return Ok(0.0);
    }
    let profile = multiplicity_profile(&index.times)?;
    let denom: f64 = profile.counts.iter().map(|&c| factorial(c)).product();
    let x = params.gamma * params.duration / (params.r * params.m) as f64;
    Ok(x.powi(index.k as i32) / denom)
}

/// `(H_max T/r)^{K+1}/(K+1)! + (T/r)² Ḣ_max / M`.
pub fn truncation_and_discretization_bound(params: &SimulationParams, norms: &NormBounds) -> f64 {
    let tr = params.segment_length();
    truncation_term(norms.h_max * tr, params.k) + tr * tr * norms.hdot_max / params.m as f64
}

/// `T² H_max² / (2 r² M) · exp(T H_max / (r M))`.
pub fn repeated_times_bound(params: &SimulationParams, norms: &NormBounds) -> f64 {
    let (t, r, m, h) = (
        params.duration,
        params.r as f64,
        params.m as f64,
        norms.h_max,
    );
    t * t * h * h / (2.0 * r * r * m) * (t * h / (r * m)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hammodel::{estimate_norms, random_sparse_spec, reference, DEFAULT_NORM_GRID};
    use crate::linalg::{expm, max_norm};

    fn ham(spec: crate::hammodel::HamiltonianSpec) -> SparseHamiltonian {
        SparseHamiltonian::new(spec).unwrap()
    }

    fn manual(k: usize, m: usize, r: usize, duration: f64, scheme: Scheme) -> SimulationParams {
        let mut p = SimulationParams {
            n: 1,
            d: 1,
            t0: 0.0,
            duration,
            epsilon: 0.01,
            gamma: 0.5,
            l: 2,
            lambda: 1.0,
            r,
            k,
            m,
            zeta: 0.0,
            scheme,
            q: None,
            mu2: 0.0,
            big_s: 0.0,
            s: 0.0,
        };
        p.refresh_derived();
        p
    }

    #[test]
    fn planner_k_is_brute_force_minimum() {
        let h = ham(reference::sigma_x(1.0));
        let norms = NormBounds {
            h_max: 1.0,
            hdot_max: 0.0,
            grid_points: 2,
        };
        let plan =
            plan_parameters(&h, &norms, 1e-3, Scheme::Sorted, &PlanOptions::default()).unwrap();
        let p = &plan.params;
        p.validate(&norms, DEFAULT_C_M).unwrap();
        let x = p.lambda_t_over_r();
        let target = 1e-3 / (2.0 * p.r as f64);
        let brute = (0..100)
            .find(|&k| x.powi(k as i32 + 1) / factorial(k + 1) <= target)
            .unwrap();
        assert_eq!(p.k, brute.max(1));
        assert!(is_power_of_two(p.r) && is_power_of_two(p.m) && is_power_of_two(p.l));
        assert!(p.r as f64 * std::f64::consts::LN_2 >= p.lambda * p.duration);
    }

    #[test]
    fn doubling_epsilon_does_not_increase_k_or_m() {
        for seed in 0..6 {
            let h = ham(random_sparse_spec(1, 2, 1.0, seed));
            let norms = estimate_norms(&h, 64).unwrap();
            for scheme in [Scheme::Sorted, Scheme::Compressed] {
                let mut eps = 1e-3;
                let mut last: Option<(usize, usize)> = None;
                while eps < 0.5 {
                    let p = plan_parameters(&h, &norms, eps, scheme, &PlanOptions::default())
                        .unwrap()
                        .params;
                    if let Some((k, m)) = last {
                        assert!(p.k <= k && p.m <= m, "eps {eps}");
                    }
                    last = Some((p.k, p.m));
                    eps *= 2.0;
                }
            }
        }
    }

    #[test]
    fn compressed_plan_meets_stronger_r_rule() {
        for seed in 0..10 {
            let h = ham(random_sparse_spec(2, 2, 1.0, seed));
            let norms = estimate_norms(&h, 64).unwrap();
            let p = plan_parameters(
                &h,
                &norms,
                0.05,
                Scheme::Compressed,
                &PlanOptions::default(),
            )
            .unwrap()
            .params;
            assert!(p.r as f64 * (2.0 * (1.0 - p.mu2)).ln() >= p.lambda * p.duration);
            assert!(p.s <= 2.0);
            assert!(p.q.unwrap() >= p.m);
        }
    }

    #[test]
    fn planner_rejects_bad_epsilon_and_capacity() {
        let h = ham(reference::sigma_x(1.0));
        let norms = NormBounds {
            h_max: 1.0,
            hdot_max: 0.0,
            grid_points: 2,
        };
        assert!(plan_parameters(&h, &norms, 0.0, Scheme::Sorted, &PlanOptions::default()).is_err());
        assert!(plan_parameters(&h, &norms, 1.0, Scheme::Sorted, &PlanOptions::default()).is_err());
        let opts = PlanOptions {
            cap: 10,
            ..PlanOptions::default()
        };
        let err = plan_parameters(&h, &norms, 1e-6, Scheme::Compressed, &opts).unwrap_err();
        assert!(matches!(err, Error::Capacity { ref parameter, .. } if parameter == "M"));
    }

    #[test]
    fn forced_overrides_are_validated_unless_unsafe() {
        let h = ham(reference::sigma_x(1.0));
        let norms = NormBounds {
            h_max: 1.0,
            hdot_max: 0.0,
            grid_points: 2,
        };
        let opts = PlanOptions {
            force_k: Some(1),
            ..PlanOptions::default()
        };
        assert!(matches!(
            plan_parameters(&h, &norms, 1e-3, Scheme::Sorted, &opts),
            Err(Error::PlannerInvariant(_))
        ));
        let opts = PlanOptions {
            unsafe_overrides: true,
            ..opts
        };
        assert_eq!(
            plan_parameters(&h, &norms, 1e-3, Scheme::Sorted, &opts)
                .unwrap()
                .params
                .k,
            1
        );
    }

    #[test]
    fn propagator_of_constant_sigma_z() {
        let h = ham(reference::sigma_z(2.0));
        let u = exact_propagator(&h, 0.0, std::f64::consts::FRAC_PI_2, 1e-12).unwrap();
        let mut want = Operator::zeros(2, 2);
        want[(0, 0)] = Complex64::new(0.0, -1.0);
        want[(1, 1)] = Complex64::new(0.0, 1.0);
        assert!(spectral_norm(&(u - want)) < 1e-12);
    }

    #[test]
    fn propagator_of_commuting_cosine_family() {
        let h = ham(reference::cos_sigma_z(1.0, std::f64::consts::FRAC_PI_2));
        let u = exact_propagator(&h, 0.0, std::f64::consts::FRAC_PI_2, 1e-11).unwrap();
        let z = h.dense(0.0);
        let want = expm(&(z * Complex64::new(0.0, -1.0)));
        assert!(spectral_norm(&(u - want)) < 1e-10);
    }

    #[test]
    fn propagator_matches_richardson_reference() {
        let h = ham(reference::linear_ramp(1.0));
        let u = exact_propagator(&h, 0.0, 1.0, 1e-10).unwrap();
        // Independent midpoint products at fixed step counts, extrapolated.
        let fixed = |steps: usize| {
            let dt = 1.0 / steps as f64;
            (0..steps).fold(identity(2), |acc, i| {
                evolution_step(&h.dense((i as f64 + 0.5) * dt), dt) * acc
            })
        };
        let (a, b) = (fixed(1024), fixed(2048));
        let rich = (b * Complex64::new(4.0, 0.0) - a) / Complex64::new(3.0, 0.0);
        assert!(spectral_norm(&(u - rich)) < 1e-8);
    }

    #[test]
    fn propagator_composes_over_segments() {
        let h = ham(reference::driven_qubit(5.0, 1.0));
        let whole = exact_propagator(&h, 0.0, 1.0, 1e-10).unwrap();
        let mut prod = identity(2);
        for s in 0..4 {
            prod =
                exact_propagator(&h, s as f64 / 4.0, (s + 1) as f64 / 4.0, 1e-11).unwrap() * prod;
        }
        assert!(spectral_norm(&(whole - prod)) < 1e-9);
        assert!(exact_propagator(&h, 0.5, 0.2, 1e-8).is_err());
    }

    #[test]
    fn ordered_sum_low_orders() {
        let h = ham(reference::sigma_x(1.0));
        let p = manual(3, 8, 2, 1.0, Scheme::Sorted);
        assert_eq!(ordered_product_sum(&h, &p, 0, 0).unwrap(), identity(2));
        let q1 = ordered_product_sum(&h, &p, 1, 1).unwrap();
        assert!(max_norm(&(q1.clone() - h.dense(0.0) * Complex64::new(8.0, 0.0))) < 1e-14);
        let step = p.duration / (p.r * p.m) as f64;
        let contrib = q1 * Complex64::new(0.0, -step);
        let want = h.dense(0.0) * Complex64::new(0.0, -p.duration / p.r as f64);
        assert!(max_norm(&(contrib - want)) < 1e-14);
        assert!(ordered_product_sum(&h, &p, 2, 1).is_err());
    }

    fn brute_tuples(hs: &[Operator], k: usize, unique: bool) -> Operator {
        let m = hs.len();
        let dim = hs[0].nrows();
        let mut total = Operator::zeros(dim, dim);
        let count = m.pow(k as u32);
        for code in 0..count {
            let mut tuple: Vec<usize> = (0..k).map(|i| code / m.pow(i as u32) % m).collect();
            if unique && (0..k).any(|i| (0..i).any(|j| tuple[i] == tuple[j])) {
                continue;
            }
            tuple.sort_unstable();
            let prod = tuple.iter().fold(identity(dim), |acc, &j| &hs[j] * acc);
            total += prod;
        }
        total / Complex64::new(factorial(k), 0.0)
    }

    #[test]
    fn dp_matches_tuple_enumeration() {
        let h = ham(random_sparse_spec(1, 2, 1.0, 4));
        let p = manual(4, 4, 1, 1.0, Scheme::Sorted);
        let hs = segment_grid(|t| h.dense(t), &p, 0);
        for mode in [SumMode::WithRepeats, SumMode::UniqueTimes] {
            let q = ordered_sums(&hs, 4, mode);
            for k in 0..=4 {
                let bf = brute_tuples(&hs, k, mode == SumMode::UniqueTimes);
                assert!(max_norm(&(q[k].clone() - bf)) < 1e-12, "k={k} {mode:?}");
            }
        }
        let h2 = ham(random_sparse_spec(2, 2, 1.0, 8));
        let p2 = manual(3, 8, 1, 1.0, Scheme::Sorted);
        let hs2 = segment_grid(|t| h2.dense(t), &p2, 0);
        let q = ordered_sums(&hs2, 3, SumMode::WithRepeats);
        assert!(max_norm(&(q[3].clone() - brute_tuples(&hs2, 3, false))) < 1e-12);
    }

    #[test]
    fn u_tilde_degenerate_cases() {
        let h = ham(reference::driven_qubit(2.0, 1.0));
        let p = manual(0, 4, 1, 1.0, Scheme::Sorted);
        assert_eq!(
            u_tilde_segment(&h, &p, 0, SumMode::WithRepeats).unwrap(),
            identity(2)
        );
        let p = manual(5, 1, 1, 1.0, Scheme::Sorted);
        let q = ordered_sums(
            &segment_grid(|t| h.dense(t), &p, 0),
            5,
            SumMode::UniqueTimes,
        );
        assert!(q[2..].iter().all(|m| max_norm(m) == 0.0));
    }

    #[test]
    fn u_tilde_matches_exponential_for_constant_h() {
        let h = ham(reference::sigma_x(1.0));
        let p = manual(6, 64, 1, 1.0, Scheme::Sorted);
        let u = u_tilde_segment(&h, &p, 0, SumMode::WithRepeats).unwrap();
        let exact = evolution_step(&h.dense(0.0), 1.0);
        assert!(spectral_norm(&(u - exact)) <= 2.0 * truncation_term(1.0, 6));
    }

    #[test]
    fn repeated_times_difference_within_birthday_bound() {
        for seed in 0..8 {
            let h = ham(random_sparse_spec(1, 2, 1.0, seed));
            let norms = estimate_norms(&h, 128).unwrap();
            let p = manual(3, 8, 2, 1.0, Scheme::Sorted);
            for seg in 0..p.r {
                let a = u_tilde_segment(&h, &p, seg, SumMode::WithRepeats).unwrap();
                let b = u_tilde_segment(&h, &p, seg, SumMode::UniqueTimes).unwrap();
                assert!(spectral_norm(&(a - b)) <= 4.0 * repeated_times_bound(&p, &norms));
            }
            let p1 = manual(1, 8, 2, 1.0, Scheme::Sorted);
            let a = u_tilde_segment(&h, &p1, 0, SumMode::WithRepeats).unwrap();
            let b = u_tilde_segment(&h, &p1, 0, SumMode::UniqueTimes).unwrap();
            assert_eq!(max_norm(&(a - b)), 0.0);
        }
    }

    #[test]
    fn multiplicity_examples() {
        let p = multiplicity_profile(&[2, 5, 12]).unwrap();
        assert_eq!(
            (p.distinct, p.counts.clone(), p.factor),
            (3, vec![1, 1, 1], 6)
        );
        let p = multiplicity_profile(&[3, 3]).unwrap();
        assert_eq!((p.distinct, p.factor), (1, 1));
        let p = multiplicity_profile(&[1, 1, 4, 4, 4]).unwrap();
        assert_eq!((p.counts.clone(), p.factor), (vec![2, 3], 10));
        assert!(multiplicity_profile(&[3, 1]).is_err());
        assert_eq!(multiplicity_profile(&[]).unwrap().factor, 1);
    }

    #[test]
    fn beta_examples() {
        let mut p = manual(2, 8, 1, 1.0, Scheme::Sorted);
        p.gamma = 0.1;
        p.l = 4;
        let idx = |times: Vec<usize>| DysonTermIndex {
            k: times.len(),
            terms: vec![0; times.len()],
            times,
        };
        assert_eq!(beta_coefficient(&idx(vec![]), &p).unwrap(), 1.0);
        assert_eq!(beta_coefficient(&idx(vec![5, 3]), &p).unwrap(), 0.0);
        let b = beta_coefficient(&idx(vec![3, 3]), &p).unwrap();
        assert!((b - 7.8125e-5).abs() < 1e-18);
        assert!(beta_coefficient(&idx(vec![9]), &p).is_err());
    }

    #[test]
    fn bound_formulas() {
        let norms = NormBounds {
            h_max: 1.0,
            hdot_max: 3.0,
            grid_points: 2,
        };
        let p = manual(3, 8, 2, 1.0, Scheme::Sorted);
        let p2 = manual(3, 16, 2, 1.0, Scheme::Sorted);
        let trunc = truncation_term(0.5, 3);
        let a = truncation_and_discretization_bound(&p, &norms) - trunc;
        let b = truncation_and_discretization_bound(&p2, &norms) - trunc;
        assert!((a - 2.0 * b).abs() < 1e-15);
        let still = NormBounds {
            hdot_max: 0.0,
            ..norms
        };
        assert_eq!(truncation_and_discretization_bound(&p, &still), trunc);
        assert!(repeated_times_bound(&manual(3, 1 << 20, 2, 1.0, Scheme::Sorted), &norms) < 1e-6);
    }

    #[test]
    fn binomial_tail_matches_direct_sum() {
        for &(m, zeta, k) in &[
            (8usize, 0.1f64, 2usize),
            (16, 0.05, 3),
            (4, 1.0, 1),
            (2, 0.5, 1),
        ] {
            let p: f64 = zeta / (1.0 + zeta);
            let mut direct = 0.0;
            for w in (k + 1)..=m {
                let c: f64 = (0..w).map(|i| (m - i) as f64 / (i + 1) as f64).product();
                direct += c * p.powi(w as i32) * (1.0 - p).powi((m - w) as i32);
            }
            assert!((binomial_tail(m, zeta, k) - direct).abs() < 1e-14);
        }
        assert_eq!(binomial_tail(4, 0.3, 4), 0.0);
        // K=1, M=2, ζ=0.5: μ² = 1/9.
        assert!((binomial_tail(2, 0.5, 1) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn planner_report_carries_shares() {
        let h = ham(reference::sigma_x(1.0));
        let norms = estimate_norms(&h, DEFAULT_NORM_GRID).unwrap();
        let plan = plan_parameters(
            &h,
            &norms,
            1e-2,
            Scheme::Compressed,
            &PlanOptions::default(),
        )
        .unwrap();
        let v = serde_json::to_value(plan.report()).unwrap();
        for key in [
            "r", "K", "M", "L", "gamma", "lambda", "zeta", "budget", "bounds",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["budget"]["truncation"].as_f64().unwrap(), 2.5e-3);
    }
}
