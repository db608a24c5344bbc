//! The dynamic portfolio optimization objective as a QUBO, its binary weight
//! encoding, and the spin (Ising) form.
//!
//! The objective over an investment strategy is
//! `Q = -F + (gamma/2) R + C + rho * G` with return `F`, risk `R`,
//! transaction costs `C`, and the squared unit-sum restriction `G`, expanded
//! over binary variables through the bounded weight encoding.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::MarketTensors;

/// A measured or constructed bit string; entries are 0 or 1, index = qubit id.
pub type Bits = Vec<u8>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("index (t={t}, a={a}, r={r}) out of range for dims {dims:?}")]
    IndexOutOfRange { t: usize, a: usize, r: usize, dims: Dims },
    #[error("time index {t} out of range (n_t = {n_t})")]
    TimeOutOfRange { t: usize, n_t: usize },
    #[error("degenerate weight range: lambda denominator {denom} <= 1e-12")]
    DegenerateRange { denom: f64 },
    #[error("bit string length {actual} does not match {expected} variables")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("infeasible bounds: need m_a <= B_a, sum(m) <= 1 <= sum(B)")]
    InfeasibleBounds,
    #[error("problem vectors must all have {expected} entries, got {actual}")]
    VectorLengthMismatch { expected: usize, actual: usize },
    #[error("resolution n_r must be in 1..=52, got {0}")]
    BadResolution(usize),
    #[error("quadratic form is malformed: {0}")]
    MalformedForm(String),
    #[error("failed to parse quadratic form JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Problem dimensions: time steps, assets, bits of resolution per weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_t: usize,
    pub n_a: usize,
    pub n_r: usize,
}

impl Dims {
    pub fn n_qubits(&self) -> usize {
        self.n_t * self.n_a * self.n_r
    }
}

/// Qubit index of binary variable x_{t,a,r} (all indices zero-based):
/// `q = r + n_r * a + t * n_a * n_r`, a bijection onto 0..n_qubits.
pub fn qubit_index(t: usize, a: usize, r: usize, dims: Dims) -> Result<usize, ModelError> {
    if t >= dims.n_t || a >= dims.n_a || r >= dims.n_r {
        return Err(ModelError::IndexOutOfRange { t, a, r, dims });
    }
    Ok(r + dims.n_r * a + t * dims.n_a * dims.n_r)
}

/// Piecewise coefficient that calibrates the quadratic transaction-cost
/// surrogate to the absolute-value cost over the reachable weight range:
/// `cbrt(2) / (b - phi m)` for `phi <= 1`, else `cbrt(2) / (phi b - m)`.
pub fn lambda_coeff(phi: f64, m: f64, b: f64) -> Result<f64, ModelError> {
    let denom = if phi <= 1.0 { b - phi * m } else { phi * b - m };
    if denom <= 1e-12 {
        return Err(ModelError::DegenerateRange { denom });
    }
    Ok(2.0_f64.cbrt() / denom)
}

/// A full problem instance: dimensions, bounds, fees, weights of the
/// objective terms, and the market tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpoProblem {
    pub n_r: usize,
    /// Per-asset minimum investment m_a.
    pub m: Vec<f64>,
    /// Per-asset maximum investment B_a.
    pub b: Vec<f64>,
    /// Per-asset transaction fee rate nu_a.
    pub nu: Vec<f64>,
    /// Risk aversion coefficient.
    pub gamma: f64,
    /// Lagrange multiplier of the unit-sum restriction.
    pub rho: f64,
    pub tensors: MarketTensors,
    /// Initial investment before the first rebalance; all zero by default.
    pub omega0: Vec<f64>,
}

impl DpoProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_r: usize,
        m: Vec<f64>,
        b: Vec<f64>,
        nu: Vec<f64>,
        gamma: f64,
        rho: f64,
        tensors: MarketTensors,
        omega0: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let n_a = tensors.n_a();
        if !(1..=52).contains(&n_r) {
            return Err(ModelError::BadResolution(n_r));
        }
        for v in [&m, &b, &nu] {
            if v.len() != n_a {
                return Err(ModelError::VectorLengthMismatch {
                    expected: n_a,
                    actual: v.len(),
                });
            }
        }
        let omega0 = omega0.unwrap_or_else(|| vec![0.0; n_a]);
        if omega0.len() != n_a {
            return Err(ModelError::VectorLengthMismatch {
                expected: n_a,
                actual: omega0.len(),
            });
        }
        let feasible = m.iter().zip(&b).all(|(mi, bi)| mi <= bi)
            && m.iter().sum::<f64>() <= 1.0
            && b.iter().sum::<f64>() >= 1.0
            && m.iter().all(|&x| (0.0..=1.0).contains(&x))
            && b.iter().all(|&x| (0.0..=1.0).contains(&x));
        if !feasible {
            return Err(ModelError::InfeasibleBounds);
        }
        Ok(Self {
            n_r,
            m,
            b,
            nu,
            gamma,
            rho,
            tensors,
            omega0,
        })
    }

    pub fn n_a(&self) -> usize {
        self.tensors.n_a()
    }

    pub fn n_t(&self) -> usize {
        self.tensors.n_t()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_t: self.n_t(),
            n_a: self.n_a(),
            n_r: self.n_r,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.dims().n_qubits()
    }

    /// Weight carried by one unit of the bit ladder: `(B_a - m_a) / (2^n_r - 1)`.
    pub fn bit_step(&self, a: usize) -> f64 {
        (self.b[a] - self.m[a]) / ((1u64 << self.n_r) as f64 - 1.0)
    }

    /// lambda_{t,a} for tensor row t (zero-based).
    pub fn lambda(&self, t: usize, a: usize) -> Result<f64, ModelError> {
        lambda_coeff(self.tensors.phi[[t, a]], self.m[a], self.b[a])
    }
}

/// Investment weights omega_{t,a} with their normalization state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Strategy {
    /// N_t x N_a weight matrix.
    pub weights: Array2<f64>,
    pub normalized: bool,
    /// The bit string this strategy was decoded from, when applicable.
    pub source_bits: Option<Bits>,
}

/// Decode real-valued bit occupancies into weights. Values in [0, 1] are
/// allowed (fractional bits); exact 0/1 values reproduce the binary encoding.
pub fn decode_weights_real(
    values: &[f64],
    n_t: usize,
    n_a: usize,
    n_r: usize,
    m: &[f64],
    b: &[f64],
) -> Result<Array2<f64>, ModelError> {
    let expected = n_t * n_a * n_r;
    if values.len() != expected {
        return Err(ModelError::LengthMismatch {
            expected,
            actual: values.len(),
        });
    }
    let dims = Dims { n_t, n_a, n_r };
    let mut weights = Array2::zeros((n_t, n_a));
    for t in 0..n_t {
        for a in 0..n_a {
            let step = (b[a] - m[a]) / ((1u64 << n_r) as f64 - 1.0);
            let mut ladder = 0.0;
            for r in 0..n_r {
                let q = qubit_index(t, a, r, dims).expect("in range");
                ladder += (1u64 << r) as f64 * values[q];
            }
            weights[[t, a]] = m[a] + step * ladder;
        }
    }
    Ok(weights)
}

/// Decode a bit string into an (unnormalized) strategy:
/// `omega_{t,a} = m_a + (B_a - m_a)/(2^n_r - 1) * sum_r 2^r x_{t,a,r}`.
pub fn encode_weights(bits: &[u8], problem: &DpoProblem) -> Result<Strategy, ModelError> {
    let values: Vec<f64> = bits.iter().map(|&x| x as f64).collect();
    let weights = decode_weights_real(
        &values,
        problem.n_t(),
        problem.n_a(),
        problem.n_r,
        &problem.m,
        &problem.b,
    )?;
    Ok(Strategy {
        weights,
        normalized: false,
        source_bits: Some(bits.to_vec()),
    })
}

/// Whether a form ranges over binary {0,1} or spin {-1,+1} variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Binary,
    Spin,
}

/// A quadratic objective over binary or spin variables: constant, linear,
/// and strictly upper-triangular pairwise coefficients.
///
/// Self-pairs never appear: for binary variables `x^2 = x` folds into the
/// linear part; for spin variables `z^2 = 1` folds into the constant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub n_vars: usize,
    pub constant: f64,
    pub linear: Vec<f64>,
    pub quadratic: BTreeMap<(usize, usize), f64>,
    pub kind: VariableKind,
}

impl QuadraticForm {
    pub fn new(n_vars: usize, kind: VariableKind) -> Self {
        Self {
            n_vars,
            constant: 0.0,
            linear: vec![0.0; n_vars],
            quadratic: BTreeMap::new(),
            kind,
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn add_linear(&mut self, i: usize, c: f64) {
        self.linear[i] += c;
    }

    /// Accumulate a coefficient on the product of variables i and j,
    /// folding self-pairs according to the variable kind.
    pub fn add_pair(&mut self, i: usize, j: usize, c: f64) {
        if i == j {
            match self.kind {
                VariableKind::Binary => self.linear[i] += c,
                VariableKind::Spin => self.constant += c,
            }
            return;
        }
        let key = (i.min(j), i.max(j));
        *self.quadratic.entry(key).or_insert(0.0) += c;
    }

    /// Drop pair entries that cancelled to exactly zero.
    pub fn prune_zeros(&mut self) {
        self.quadratic.retain(|_, v| *v != 0.0);
    }

    /// Evaluate the form on a bit string. Spin forms are evaluated under the
    /// mapping `z = 1 - 2x`, so bit strings are the universal currency.
    pub fn evaluate_cost(&self, bits: &[u8]) -> Result<f64, ModelError> {
        if bits.len() != self.n_vars {
            return Err(ModelError::LengthMismatch {
                expected: self.n_vars,
                actual: bits.len(),
            });
        }
        let spin = self.kind == VariableKind::Spin;
        let var = |i: usize| -> f64 {
            if spin {
                1.0 - 2.0 * bits[i] as f64
            } else {
                bits[i] as f64
            }
        };
        let mut acc = self.constant;
        for (i, &l) in self.linear.iter().enumerate() {
            if l != 0.0 {
                acc += l * var(i);
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            acc += v * var(i) * var(j);
        }
        Ok(acc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FormRepr::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let repr: FormRepr = serde_json::from_str(text)?;
        repr.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct PairEntry {
    i: usize,
    j: usize,
    v: f64,
}

#[derive(Serialize, Deserialize)]
struct FormRepr {
    n_vars: usize,
    constant: f64,
    linear: Vec<f64>,
    quadratic: Vec<PairEntry>,
    kind: VariableKind,
}

impl From<&QuadraticForm> for FormRepr {
    fn from(q: &QuadraticForm) -> Self {
        Self {
            n_vars: q.n_vars,
            constant: q.constant,
            linear: q.linear.clone(),
            quadratic: q
                .quadratic
                .iter()
                .map(|(&(i, j), &v)| PairEntry { i, j, v })
                .collect(),
            kind: q.kind,
        }
    }
}

impl TryFrom<FormRepr> for QuadraticForm {
    type Error = ModelError;

    fn try_from(repr: FormRepr) -> Result<Self, ModelError> {
        if repr.linear.len() != repr.n_vars {
            return Err(ModelError::MalformedForm(format!(
                "linear has {} entries for {} variables",
                repr.linear.len(),
                repr.n_vars
            )));
        }
        let mut q = QuadraticForm::new(repr.n_vars, repr.kind);
        q.constant = repr.constant;
        q.linear = repr.linear;
        for e in repr.quadratic {
            if e.i >= e.j || e.j >= repr.n_vars {
                return Err(ModelError::MalformedForm(format!(
                    "bad pair ({}, {})",
                    e.i, e.j
                )));
            }
            q.add_pair(e.i, e.j, e.v);
        }
        Ok(q)
    }
}

/// An affine expression over binary variables; the building block for
/// expanding the objective terms.
#[derive(Debug, Clone)]
struct Affine {
    constant: f64,
    terms: Vec<(usize, f64)>,
}

impl Affine {
    fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    fn sub_scaled(mut self, other: &Affine, scale: f64) -> Self {
        self.constant -= scale * other.constant;
        for &(i, c) in &other.terms {
            self.terms.push((i, -scale * c));
        }
        self
    }

    fn add(mut self, other: &Affine) -> Self {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }
}

fn add_affine(q: &mut QuadraticForm, x: &Affine, scale: f64) {
    q.add_constant(scale * x.constant);
    for &(i, c) in &x.terms {
        q.add_linear(i, scale * c);
    }
}

fn add_affine_product(q: &mut QuadraticForm, x: &Affine, y: &Affine, scale: f64) {
    if scale == 0.0 {
        return;
    }
    q.add_constant(scale * x.constant * y.constant);
    for &(i, c) in &x.terms {
        q.add_linear(i, scale * c * y.constant);
    }
    for &(j, c) in &y.terms {
        q.add_linear(j, scale * x.constant * c);
    }
    for &(i, ci) in &x.terms {
        for &(j, cj) in &y.terms {
            q.add_pair(i, j, scale * ci * cj);
        }
    }
}

/// omega_{t,a} as an affine expression over the full bit layout.
fn omega_affine(problem: &DpoProblem, t: usize, a: usize) -> Affine {
    let dims = problem.dims();
    let step = problem.bit_step(a);
    let terms = (0..problem.n_r)
        .map(|r| {
            let q = qubit_index(t, a, r, dims).expect("in range");
            (q, step * (1u64 << r) as f64)
        })
        .collect();
    Affine {
        constant: problem.m[a],
        terms,
    }
}

/// omega_{t,a} over the single-time layout (n_a * n_r variables).
fn omega_affine_local(problem: &DpoProblem, a: usize) -> Affine {
    let step = problem.bit_step(a);
    let terms = (0..problem.n_r)
        .map(|r| (r + problem.n_r * a, step * (1u64 << r) as f64))
        .collect();
    Affine {
        constant: problem.m[a],
        terms,
    }
}

/// Accumulate every objective term for time row `t` onto `q`, with the
/// current weights given as affine expressions and the previous as `prev`.
fn add_period_terms(
    q: &mut QuadraticForm,
    problem: &DpoProblem,
    t: usize,
    omegas: &[Affine],
    prev: &[Affine],
) -> Result<(), ModelError> {
    let n_a = problem.n_a();
    // Return: -mu_t . omega_t
    for a in 0..n_a {
        add_affine(q, &omegas[a], -problem.tensors.mu[[t, a]]);
    }
    // Risk: (gamma / 2) omega_t^T Sigma_t omega_t
    for a in 0..n_a {
        for b in 0..n_a {
            let c = 0.5 * problem.gamma * problem.tensors.sigma[t][[a, b]];
            add_affine_product(q, &omegas[a], &omegas[b], c);
        }
    }
    // Transaction costs: nu_a lambda_{t,a} (omega_{t,a} - phi_{t,a} omega_{t-1,a})^2.
    // Assets with nu_a = 0 contribute nothing, so lambda is not evaluated
    // for them (its denominator can legitimately degenerate when m_a = B_a).
    for a in 0..n_a {
        if problem.nu[a] == 0.0 {
            continue;
        }
        let lambda = problem.lambda(t, a)?;
        let phi = problem.tensors.phi[[t, a]];
        let diff = omegas[a].clone().sub_scaled(&prev[a], phi);
        add_affine_product(q, &diff, &diff, problem.nu[a] * lambda);
    }
    // Restriction: rho (sum_a omega_{t,a} - 1)^2
    let mut total = Affine::constant(-1.0);
    for a in 0..n_a {
        total = total.add(&omegas[a]);
    }
    add_affine_product(q, &total, &total, problem.rho);
    Ok(())
}

/// Expand the full objective into a binary quadratic form over all
/// `n_t * n_a * n_r` variables.
pub fn build_qubo(problem: &DpoProblem) -> Result<QuadraticForm, ModelError> {
    let mut q = QuadraticForm::new(problem.n_qubits(), VariableKind::Binary);
    for t in 0..problem.n_t() {
        let omegas: Vec<Affine> = (0..problem.n_a())
            .map(|a| omega_affine(problem, t, a))
            .collect();
        let prev: Vec<Affine> = if t == 0 {
            problem.omega0.iter().map(|&w| Affine::constant(w)).collect()
        } else {
            (0..problem.n_a())
                .map(|a| omega_affine(problem, t - 1, a))
                .collect()
        };
        add_period_terms(&mut q, problem, t, &omegas, &prev)?;
    }
    q.prune_zeros();
    Ok(q)
}

/// Expand the single-time objective O_t over `n_a * n_r` variables, with the
/// previous step's weights fixed to `omega_prev` (use the problem's omega0
/// for the first step).
pub fn build_single_time_qubo(
    problem: &DpoProblem,
    t: usize,
    omega_prev: &[f64],
) -> Result<QuadraticForm, ModelError> {
    if t >= problem.n_t() {
        return Err(ModelError::TimeOutOfRange {
            t,
            n_t: problem.n_t(),
        });
    }
    if omega_prev.len() != problem.n_a() {
        return Err(ModelError::LengthMismatch {
            expected: problem.n_a(),
            actual: omega_prev.len(),
        });
    }
    let mut q = QuadraticForm::new(problem.n_a() * problem.n_r, VariableKind::Binary);
    let omegas: Vec<Affine> = (0..problem.n_a())
        .map(|a| omega_affine_local(problem, a))
        .collect();
    let prev: Vec<Affine> = omega_prev.iter().map(|&w| Affine::constant(w)).collect();
    add_period_terms(&mut q, problem, t, &omegas, &prev)?;
    q.prune_zeros();
    Ok(q)
}

/// Change of variables `x -> (1 - z) / 2` taking a binary form to the
/// equivalent spin form. Already-spin forms are returned unchanged.
pub fn qubo_to_ising(q: &QuadraticForm) -> QuadraticForm {
    if q.kind == VariableKind::Spin {
        return q.clone();
    }
    let mut out = QuadraticForm::new(q.n_vars, VariableKind::Spin);
    out.add_constant(q.constant);
    for (i, &l) in q.linear.iter().enumerate() {
        out.add_constant(0.5 * l);
        out.add_linear(i, -0.5 * l);
    }
    for (&(i, j), &v) in &q.quadratic {
        out.add_constant(0.25 * v);
        out.add_linear(i, -0.25 * v);
        out.add_linear(j, -0.25 * v);
        out.add_pair(i, j, 0.25 * v);
    }
    out.prune_zeros();
    out
}

/// Objective pieces of one rebalance period, evaluated directly on weights.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PeriodTerms {
    /// mu_t . omega_t
    pub return_t: f64,
    /// omega_t^T Sigma_t omega_t (unweighted by gamma).
    pub risk_t: f64,
    /// sum_a nu_a lambda_{t,a} (omega_{t,a} - phi_{t,a} omega_{t-1,a})^2
    pub cost_t: f64,
    /// (sum_a omega_{t,a} - 1)^2 (unweighted by rho).
    pub violation_sq_t: f64,
}

/// Evaluate the objective components period by period, straight from the
/// defining sums. This is the reference path the expanded QUBO is checked
/// against.
pub fn period_terms(
    weights: &Array2<f64>,
    problem: &DpoProblem,
) -> Result<Vec<PeriodTerms>, ModelError> {
    if weights.dim() != (problem.n_t(), problem.n_a()) {
        return Err(ModelError::LengthMismatch {
            expected: problem.n_t() * problem.n_a(),
            actual: weights.len(),
        });
    }
    let n_a = problem.n_a();
    let mut out = Vec::with_capacity(problem.n_t());
    for t in 0..problem.n_t() {
        let return_t = (0..n_a)
            .map(|a| problem.tensors.mu[[t, a]] * weights[[t, a]])
            .sum();
        let mut risk_t = 0.0;
        for a in 0..n_a {
            for b in 0..n_a {
                risk_t += weights[[t, a]] * problem.tensors.sigma[t][[a, b]] * weights[[t, b]];
            }
        }
        let mut cost_t = 0.0;
        for a in 0..n_a {
            if problem.nu[a] == 0.0 {
                continue;
            }
            let prev = if t == 0 {
                problem.omega0[a]
            } else {
                weights[[t - 1, a]]
            };
            let diff = weights[[t, a]] - problem.tensors.phi[[t, a]] * prev;
            cost_t += problem.nu[a] * problem.lambda(t, a)? * diff * diff;
        }
        let total: f64 = (0..n_a).map(|a| weights[[t, a]]).sum();
        out.push(PeriodTerms {
            return_t,
            risk_t,
            cost_t,
            violation_sq_t: (total - 1.0) * (total - 1.0),
        });
    }
    Ok(out)
}

/// Full objective value `-F + (gamma/2) R + C + rho G` evaluated directly on
/// a weight matrix.
pub fn objective_value(weights: &Array2<f64>, problem: &DpoProblem) -> Result<f64, ModelError> {
    let terms = period_terms(weights, problem)?;
    Ok(terms
        .iter()
        .map(|p| {
            -p.return_t + 0.5 * problem.gamma * p.risk_t + p.cost_t + problem.rho * p.violation_sq_t
        })
        .sum())
}

/// Render bits as a '0'/'1' string, character index = qubit index.
pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

/// Parse a '0'/'1' string into bits (character index = qubit index).
pub fn bits_from_str(s: &str) -> Result<Bits, ModelError> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(ModelError::MalformedForm(format!(
                "bit string contains {other:?}"
            ))),
        })
        .collect()
}

/// The 2^n bit strings of length n in integer order (bit q of k = entry q).
pub fn enumerate_bits(n: usize) -> impl Iterator<Item = Bits> {
    assert!(n <= 32, "enumeration over 2^{n} strings is not sensible");
    (0u64..(1u64 << n)).map(move |k| (0..n).map(|q| ((k >> q) & 1) as u8).collect())
}
