//! Query and gate accounting, complexity predictions and scaling fits.
//!
//! Gate counts come from per-primitive formulas in [`GateTable`]; simulator
//! wall-clock time is never used as a metric.

use serde::Serialize;

use crate::clockprep::bitonic_network;
use crate::dysoncore::{Scheme, SimulationParams};
use crate::error::{domain, Result};
use crate::hammodel::{NormBounds, QueryCount};
use crate::linalg::ceil_log2;

/// Elementary-gate constants of the branch-simulated primitives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateTable {
    /// Hadamard layer, per qubit.
    pub hadamard: u64,
    /// One controlled rotation of the unary cascade or of `|φ_q⟩`.
    pub controlled_rotation: u64,
    /// Ripple comparison, per time bit.
    pub compare_per_bit: u64,
    /// Controlled swap, per swapped qubit.
    pub cswap_per_qubit: u64,
    /// Controlled `H_ℓ`, per qubit of `log L + n`.
    pub controlled_term_per_qubit: u64,
    /// Adder used by the gaps-to-times conversion, per bit.
    pub adder_per_bit: u64,
    /// Multi-controlled phase of the reflection, per ancilla.
    pub reflection_per_ancilla: u64,
}

pub const GATES: GateTable = GateTable {
    hadamard: 1,
    controlled_rotation: 2,
    compare_per_bit: 4,
    cswap_per_qubit: 3,
    controlled_term_per_qubit: 2,
    adder_per_bit: 4,
    reflection_per_ancilla: 2,
};

/// Gates for one comparator on `bits`-wide time registers (plus the k-bit).
pub fn comparator_gates(bits: usize) -> u64 {
    GATES.compare_per_bit * bits as u64 + GATES.cswap_per_qubit * (bits as u64 + 1)
}

/// Ancilla qubits of one segment's circuit (excluding the system).
pub fn ancilla_qubits(params: &SimulationParams) -> usize {
    let lb = ceil_log2(params.l);
    let tb = ceil_log2(params.m);
    let clock = match params.scheme {
        Scheme::Sorted => params.k * (tb + 1) + bitonic_network(params.k).len(),
        Scheme::Compressed => params.k * (tb + 1) + 2,
    };
    params.k * lb + clock + 1
}

/// Gates of one application of `B`.
pub fn prep_gates(params: &SimulationParams) -> u64 {
    let (k, lb, tb) = (
        params.k as u64,
        ceil_log2(params.l) as u64,
        ceil_log2(params.m) as u64,
    );
    let ell = GATES.hadamard * k * lb;
    let clock = match params.scheme {
        Scheme::Sorted => {
            GATES.controlled_rotation * k
                + GATES.hadamard * k * tb
                + bitonic_network(params.k).len() as u64 * comparator_gates(tb as usize)
        }
        Scheme::Compressed => {
            let qb = ceil_log2(params.q.unwrap_or(params.m) + 1) as u64;
            GATES.controlled_rotation * (k + 1) * qb + GATES.adder_per_bit * k * tb
        }
    };
    ell + clock + GATES.controlled_rotation
}

/// Gates of one `SELECT(V)` including the `(-i)^k` phase.
pub fn select_gates(params: &SimulationParams) -> u64 {
    let width = (ceil_log2(params.l) + params.n) as u64;
    params.k as u64 * (GATES.controlled_term_per_qubit * width + 1)
}

/// Gates of one OAA segment: three `W` sandwiches and two reflections.
pub fn segment_gates(params: &SimulationParams) -> u64 {
    let w = 2 * prep_gates(params) + select_gates(params);
    3 * w + 2 * GATES.reflection_per_ancilla * ancilla_qubits(params) as u64
}

/// Queries issued by one segment when each controlled term costs `per_term`.
pub fn segment_queries(params: &SimulationParams, per_term: QueryCount) -> QueryCount {
    let uses = 3 * params.k as u64;
    QueryCount {
        loc: uses * per_term.loc,
        val: uses * per_term.val,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ResourceTally {
    pub loc_queries: u64,
    pub val_queries: u64,
    pub comparator_count: u64,
    pub elementary_gate_count: u64,
    pub segment_increment_gates: u64,
}

impl ResourceTally {
    pub fn record_segment(&mut self, params: &SimulationParams, queries: QueryCount) {
        self.loc_queries += queries.loc;
        self.val_queries += queries.val;
        if params.scheme == Scheme::Sorted {
            // Each of the six B / B† applications runs the network once.
            self.comparator_count += 6 * bitonic_network(params.k).len() as u64;
        }
        self.elementary_gate_count += segment_gates(params);
    }

    /// Segment-number register increments: `r ⌈log2 r⌉`.
    pub fn record_increments(&mut self, r: usize) {
        self.segment_increment_gates = (r * ceil_log2(r)) as u64;
    }

    pub fn total_queries(&self) -> u64 {
        self.loc_queries + self.val_queries
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexityPrediction {
    pub query_pred: f64,
    pub gate_pred: f64,
    pub increment_pred: f64,
    /// `d² H_max T · log(d H_max T/ε) / log log(d H_max T/ε)`.
    pub d_form: f64,
}

/// Constant in `query_pred = 5 λ T K`.
pub const QUERY_CONSTANT: f64 = 5.0;

fn log2_floor1(x: f64) -> f64 {
    x.log2().max(1.0)
}

pub fn predict(params: &SimulationParams, norms: &NormBounds) -> ComplexityPrediction {
    let lt = params.lambda * params.duration;
    let k = params.k as f64;
    let (log_l, log_m) = (
        log2_floor1(params.l as f64),
        (params.m as f64).log2().max(0.0),
    );
    let n = params.n as f64;
    let gate_pred = match params.scheme {
        Scheme::Compressed => {
            let loglog = log2_floor1(log2_floor1(lt / params.epsilon));
            lt * k * (log_l + log_m + loglog + n)
        }
        Scheme::Sorted => lt * k * (log_l + log_m * log2_floor1(k) + n),
    };
    let r = params.r as f64;
    let x = params.d as f64 * norms.h_max * params.duration / params.epsilon;
    let ln = x.ln().max(1.0);
    let d_form =
        (params.d * params.d) as f64 * norms.h_max * params.duration * ln / ln.ln().max(1.0);
    ComplexityPrediction {
        query_pred: QUERY_CONSTANT * lt * k,
        gate_pred,
        increment_pred: r * r.log2(),
        d_form,
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest `|y/ŷ - 1|` over the points.
    pub max_rel_residual: f64,
    pub points: usize,
}

fn check_sweep(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 4 {
        return domain("scaling fit needs at least 4 points");
    }
    if points
        .iter()
        .any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return domain("scaling fit needs positive finite values");
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi < 8.0 * lo {
        return domain("sweep must span at least 8x in x");
    }
    Ok(())
}

pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    check_sweep(points)?;
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_rel_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| ((y - intercept - slope * x).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(ScalingFit {
        slope,
        intercept,
        max_rel_residual,
        points: points.len(),
    })
}

/// Fit of `y ≈ c · model(x)` by least squares in log space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelFit {
    pub constant: f64,
    pub max_rel_residual: f64,
}

pub fn fit_model(points: &[(f64, f64)], model: impl Fn(f64) -> f64) -> Result<ModelFit> {
    check_sweep(points)?;
    let logs: Vec<f64> = points.iter().map(|&(x, y)| (y / model(x)).ln()).collect();
    let c = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    let max_rel_residual = points
        .iter()
        .map(|&(x, y)| (y / (c * model(x)) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(ModelFit {
        constant: c,
        max_rel_residual,
    })
}

/// One row of a CSV/JSON sweep table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
}

impl SweepRow {
    pub fn new(x: f64, measured: f64, predicted: f64) -> Self {
        SweepRow {
            x,
            measured,
            predicted,
            ratio: measured / predicted,
        }
    }
}
