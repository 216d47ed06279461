//! Splitting `H(t)` into `γ Σ_ℓ H_ℓ(t)` with 1-sparse, Hermitian, self-inverse
//! terms.
//!
//! Off-diagonal entries are grouped into colors keyed by
//! `(slot of j in row i, slot of i in row j, highest differing bit of i and j)`
//! for `i < j`. Two edges sharing an endpoint never share a key, and each row
//! finds its partner with two location queries. Diagonal entries form one
//! extra color. Every `(color, component)` group gets an even budget of
//! `±1` slots; the signs at time `t` add up to the nearest even multiple of
//! the entry component over `γ`.

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::error::{domain, Error, Result};
use crate::hammodel::{QueryCount, SparseHamiltonian, SparsePattern};
use crate::linalg::{ceil_log2, Operator, I, ONE, ZERO};

/// Upper limit on the term count `L`.
pub const MAX_TERMS: usize = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ColorKey {
    Diagonal,
    Pair { a: usize, b: usize, bit: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColorClass {
    pub key: ColorKey,
    /// `(i, j)` with `i <= j`; diagonal colors hold `(i, i)`.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coloring {
    pub classes: Vec<ColorClass>,
}

impl Coloring {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

fn highest_differing_bit(i: usize, j: usize) -> usize {
    (usize::BITS - 1 - (i ^ j).leading_zeros()) as usize
}

/// Colors a symmetric d-sparse pattern into 1-sparse classes.
pub fn color_pattern(pattern: &SparsePattern, d: usize) -> Result<Coloring> {
    if !pattern.is_symmetric() {
        return domain("pattern is not symmetric");
    }
    if let Some(j) = (0..pattern.dim()).find(|&j| pattern.degree(j) > d) {
        return domain(format!(
            "row {j} has degree {} > d = {d}",
            pattern.degree(j)
        ));
    }
    let mut map = std::collections::BTreeMap::<ColorKey, Vec<(usize, usize)>>::new();
    for (i, cols) in pattern.rows.iter().enumerate() {
        for (pos, &j) in cols.iter().enumerate() {
            let key = if j == i {
                ColorKey::Diagonal
            } else if j > i {
                ColorKey::Pair {
                    a: pos + 1,
                    b: pattern.slot_of(j, i).expect("symmetric pattern"),
                    bit: highest_differing_bit(i, j),
                }
            } else {
                continue;
            };
            map.entry(key).or_default().push((i, j));
        }
    }
    Ok(Coloring {
        classes: map
            .into_iter()
            .map(|(key, pairs)| ColorClass { key, pairs })
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Component {
    /// Real part of an off-diagonal pair: `σ_x`-like.
    X,
    /// Imaginary part of an off-diagonal pair: `σ_y`-like.
    Y,
    /// Diagonal entries.
    Z,
    /// Canceling `±I` filler used to reach a power-of-two term count.
    Pad,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfInverseTerm {
    pub index: usize,
    /// Index into `Coloring::classes`; `None` for padding.
    pub color: Option<usize>,
    pub component: Component,
    pub slot: usize,
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermGroup {
    pub color: Option<usize>,
    pub component: Component,
    pub budget: usize,
    pub first_term: usize,
    /// Analytic bound on the target component over all times.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub gamma: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub lambda: f64,
    pub dim: usize,
    pub groups: Vec<TermGroup>,
    pub coloring: Coloring,
}

/// Nearest even integer to `v`, ties toward zero, clamped to `[-budget, budget]`.
pub fn round_to_even(v: f64, budget: usize) -> i64 {
    let h = v / 2.0;
    let f = h.floor();
    let frac = h - f;
    let toward_zero = frac == 0.5 && f.abs() <= (f + 1.0).abs();
    let pick = if frac < 0.5 || toward_zero { f } else { f + 1.0 };
    let b = budget as i64;
    ((2.0 * pick) as i64).clamp(-b, b)
}

/// Sign of slot `slot` when the group's signs must add up to `m`.
pub fn slot_sign(m: i64, slot: usize) -> f64 {
    let lead = m.unsigned_abs() as usize;
    if slot < lead {
        m.signum() as f64
    } else if (slot - lead).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Builds the decomposition with fixed `gamma`.
pub fn decompose(ham: &SparseHamiltonian, gamma: f64) -> Result<Decomposition> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return domain(format!("gamma must be positive, got {gamma}"));
    }
    let coloring = color_pattern(ham.pattern(), ham.d())?;
    let spec = ham.spec();
    let bound_of = |i: usize, j: usize| -> (f64, f64) {
        spec.entries
            .iter()
            .find(|e| e.row == i && e.col == j)
            .map_or((0.0, 0.0), |e| e.envelope.component_bounds())
    };
    let budget_for = |bound: f64| -> usize {
        let units = (bound / (2.0 * gamma)).ceil();
        if units > 1e9 {
            usize::MAX
        } else {
            2 * (units as usize).max(1)
        }
    };
    let mut groups = Vec::new();
    let mut total = 0usize;
    let mut push = |groups: &mut Vec<TermGroup>, color, component, bound: f64| -> Result<()> {
        let budget = budget_for(bound);
        if budget == usize::MAX || total > MAX_TERMS {
            return Err(Error::Capacity {
                qubits: ceil_log2(MAX_TERMS) + 1,
                cap: ceil_log2(MAX_TERMS),
                parameter: "gamma".into(),
                detail: format!(
                    "gamma {gamma} needs a term index wider than 40 qubits; increase epsilon"
                ),
            });
        }
        groups.push(TermGroup {
            color: Some(color),
            component,
            budget,
            first_term: total,
            bound,
        });
        total += budget;
        Ok(())
    };
    for (c, class) in coloring.classes.iter().enumerate() {
        let (re, im) = class
            .pairs
            .iter()
            .map(|&(i, j)| bound_of(i, j))
            .fold((0.0_f64, 0.0_f64), |acc, b| {
                (acc.0.max(b.0), acc.1.max(b.1))
            });
        match class.key {
            ColorKey::Diagonal => push(&mut groups, c, Component::Z, re)?,
            ColorKey::Pair { .. } => {
                if re > 0.0 || im == 0.0 {
                    push(&mut groups, c, Component::X, re)?;
                }
                if im > 0.0 {
                    push(&mut groups, c, Component::Y, im)?;
                }
            }
        }
    }
    let l = total.next_power_of_two().max(2);
    if l > total {
        groups.push(TermGroup {
            color: None,
            component: Component::Pad,
            budget: l - total,
            first_term: total,
            bound: 0.0,
        });
    }
    Ok(Decomposition {
        gamma,
        l,
        lambda: l as f64 * gamma,
        dim: ham.dim(),
        groups,
        coloring,
    })
}

/// 1-sparse matrix `H_ℓ(t)`: row `i` holds `values[i]` at column `columns[i]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermDescriptor {
    pub index: usize,
    pub component: Component,
    /// Off-diagonal pairs `(i, j)`, `i < j`, active at this time.
    pub pairs: Vec<(usize, usize)>,
    pub columns: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl TermDescriptor {
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.values[i] * psi[self.columns[i]];
        }
    }

    pub fn to_dense(&self) -> Operator {
        let dim = self.columns.len();
        let mut m = Operator::zeros(dim, dim);
        for i in 0..dim {
            m[(i, self.columns[i])] = self.values[i];
        }
        m
    }

    /// Diagonal sign of row `i`, or `None` if the row is paired.
    pub fn diagonal_sign(&self, i: usize) -> Option<f64> {
        (self.columns[i] == i).then(|| self.values[i].re)
    }
}

impl Decomposition {
    /// Metadata of term `l`; terms are not materialized.
    pub fn term(&self, l: usize) -> SelfInverseTerm {
        assert!(l < self.l, "term index out of range");
        let g = self.groups.partition_point(|grp| grp.first_term <= l) - 1;
        let grp = &self.groups[g];
        SelfInverseTerm {
            index: l,
            color: grp.color,
            component: grp.component,
            slot: l - grp.first_term,
            group: g,
        }
    }

    /// Coherent query cost of evaluating term `l`.
    pub fn term_query_cost(&self, l: usize) -> QueryCount {
        match self.term(l).component {
            Component::X | Component::Y => QueryCount { loc: 2, val: 1 },
            Component::Z => QueryCount { loc: 0, val: 1 },
            Component::Pad => QueryCount::default(),
        }
    }

    /// Largest per-term cost; the controlled-term price inside SELECT.
    pub fn max_query_cost(&self) -> QueryCount {
        self.groups
            .iter()
            .map(|g| self.term_query_cost(g.first_term))
            .max_by_key(|c| c.total())
            .unwrap_or_default()
    }

    /// Evaluates `H_ℓ(t)`. Each row resolves its partner and value with at
    /// most two location and one value query; the oracle counters advance by
    /// that per-row (coherent) cost once.
    pub fn eval_term(&self, ham: &SparseHamiltonian, l: usize, t: f64) -> Result<TermDescriptor> {
        if l >= self.l {
            return domain(format!("term index {l} out of range 0..{}", self.l));
        }
        ham.check_time(t)?;
        let desc = self.term_at(ham, l, t);
        ham.counters().charge(self.term_query_cost(l));
        Ok(desc)
    }

    /// Uncounted evaluation.
    pub fn term_at(&self, ham: &SparseHamiltonian, l: usize, t: f64) -> TermDescriptor {
        let term = self.term(l);
        let group = &self.groups[term.group];
        let dim = self.dim;
        let pattern = ham.pattern();
        let parity = |slot: usize| if slot.is_multiple_of(2) { ONE } else { -ONE };
        let mut columns: Vec<usize> = (0..dim).collect();
        let mut values = vec![parity(term.slot); dim];
        let mut pairs = Vec::new();
        match (
            term.component,
            term.color.map(|c| self.coloring.classes[c].key),
        ) {
            (Component::Pad, _) | (_, None) => {}
            (Component::Z, _) => {
                for (i, v) in values.iter_mut().enumerate() {
                    let m = round_to_even(ham.entry(t, i, i).re / self.gamma, group.budget);
                    *v = Complex64::new(slot_sign(m, term.slot), 0.0);
                }
            }
            (comp, Some(ColorKey::Pair { a, b, bit })) => {
                for i in 0..dim {
                    if i >> bit & 1 == 1 {
                        continue;
                    }
                    let j = pattern.nu(i, a);
                    if j <= i || highest_differing_bit(i, j) != bit || pattern.nu(j, b) != i {
                        continue;
                    }
                    let h = ham.entry(t, i, j);
                    let target = if comp == Component::X { h.re } else { h.im };
                    let sign =
                        slot_sign(round_to_even(target / self.gamma, group.budget), term.slot);
                    let (vij, vji) = if comp == Component::X {
                        (Complex64::new(sign, 0.0), Complex64::new(sign, 0.0))
                    } else {
                        (I * sign, -I * sign)
                    };
                    columns[i] = j;
                    columns[j] = i;
                    values[i] = vij;
                    values[j] = vji;
                    pairs.push((i, j));
                }
            }
            (_, Some(ColorKey::Diagonal)) => {
                unreachable!("off-diagonal component on diagonal color")
            }
        }
        TermDescriptor {
            index: l,
            component: term.component,
            pairs,
            columns,
            values,
        }
    }

    /// `γ Σ_ℓ H_ℓ(t)`, assembled group by group from the rounded targets.
    pub fn reconstruct(&self, ham: &SparseHamiltonian, t: f64) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        for g in &self.groups {
            let Some(c) = g.color else { continue };
            for &(i, j) in &self.coloring.classes[c].pairs {
                let h = ham.entry(t, i, j);
                let scale = |x: f64| round_to_even(x / self.gamma, g.budget) as f64 * self.gamma;
                match g.component {
                    Component::Z => out[(i, i)] += Complex64::new(scale(h.re), 0.0),
                    Component::X => {
                        let v = Complex64::new(scale(h.re), 0.0);
                        out[(i, j)] += v;
                        out[(j, i)] += v;
                    }
                    Component::Y => {
                        let v = I * scale(h.im);
                        out[(i, j)] += v;
                        out[(j, i)] -= v;
                    }
                    Component::Pad => {}
                }
            }
        }
        out
    }

    /// JSON listing of the terms, plus dense matrices at `t` when given.
    pub fn debug_dump(&self, ham: &SparseHamiltonian, t: Option<f64>) -> serde_json::Value {
        let terms: Vec<_> = (0..self.l)
            .map(|l| {
                let term = self.term(l);
                let mut v = json!({
                    "index": term.index,
                    "color": term.color,
                    "component": term.component,
                    "slot": term.slot,
                });
                if let Some(t) = t {
                    let m = self.term_at(ham, term.index, t).to_dense();
                    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
                        .map(|r| {
                            (0..m.ncols())
                                .map(|c| [m[(r, c)].re, m[(r, c)].im])
                                .collect()
                        })
                        .collect();
                    v["matrix"] = json!(rows);
                }
                v
            })
            .collect();
        json!({
            "gamma": self.gamma,
            "L": self.l,
            "lambda": self.lambda,
            "colors": self.coloring.classes,
            "time": t,
            "terms": terms,
        })
    }
}

/// The zero operator of matching size, handy for accumulations.
pub fn zero_like(dim: usize) -> Operator {
    Operator::from_element(dim, dim, ZERO)
}
