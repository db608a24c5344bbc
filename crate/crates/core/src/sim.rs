//! Block-structured ansatz circuits and exact statevector simulation.
//!
//! The ansatz is built from per-asset qubit blocks (one Ry rotation per qubit
//! followed by the block's entanglement CNOTs), glued together by inter-asset
//! CNOT pairs within a time section and inter-time CNOT pairs linking the
//! same asset across sections. Amplitudes are little-endian: qubit q is bit q
//! of the basis-state index. CNOT pairs are stored (control, target); the
//! default construction puts the control on the lower qubit id and the JSON
//! export records that convention.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Bits, Dims, QuadraticForm, VariableKind};

/// Default simulable-qubit cap: 2^24 amplitudes is desk scale.
pub const DEFAULT_QUBIT_CAP: usize = 24;

/// Hard ceiling for statevector allocation regardless of the configured cap.
const SIMULATION_LIMIT: usize = 28;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{n_qubits} qubits exceeds the cap of {cap}")]
    TooManyQubits { n_qubits: usize, cap: usize },
    #[error("ansatz expects {expected} parameters, got {actual}")]
    ParamLengthMismatch { expected: usize, actual: usize },
    #[error("operator has {form_vars} variables but the state has {state_qubits} qubits")]
    DimensionMismatch {
        form_vars: usize,
        state_qubits: usize,
    },
    #[error("expectation requires a spin-kind form")]
    NotSpinForm,
    #[error("topology lists {actual} block shapes, expected {expected}")]
    TopologyMismatch { expected: usize, actual: usize },
    #[error("a T-shaped block needs exactly 4 qubits, got {0}")]
    BadTShapedBlock(usize),
    #[error("noise probability {0} must lie in [0, 0.5)")]
    BadNoise(f64),
    #[error("sample set I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad sample set line {line}: {reason}")]
    BadSampleLine { line: usize, reason: String },
}

/// Entanglement wiring of one asset block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockShape {
    /// Reverse-linear chain over the block's qubits.
    Linear,
    /// 4-qubit chain with the CNOT between local qubits 2-3 replaced by 1-3.
    TShaped,
}

/// One asset block: a group of qubits carrying a single weight register.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    pub qubits: Vec<usize>,
    pub shape: BlockShape,
}

impl Block {
    /// Entanglement CNOTs of the block, high pair first (reverse-linear).
    pub fn entanglement_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.qubits.len();
        if n < 2 {
            return Vec::new();
        }
        let mut pairs = Vec::with_capacity(n - 1);
        for k in (0..n - 1).rev() {
            let (c, t) = if self.shape == BlockShape::TShaped && k == n - 2 {
                (1, n - 1)
            } else {
                (k, k + 1)
            };
            pairs.push((self.qubits[c], self.qubits[t]));
        }
        pairs
    }
}

/// Which workflow the ansatz serves: the full-horizon circuit or the
/// single-time-step circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzScheme {
    Vqe,
    Vqec,
}

/// One phase of the layer plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Intra,
    InterAsset,
    InterTime,
}

/// The abstract circuit: blocks, inter-block CNOT pairs, and the phase plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub blocks: Vec<Block>,
    /// CNOTs linking blocks within one time section (control, target).
    pub inter_asset_pairs: Vec<(usize, usize)>,
    /// CNOTs linking the same asset across time sections (control, target).
    pub inter_time_pairs: Vec<(usize, usize)>,
    pub layer_plan: Vec<Phase>,
    /// One Ry angle per qubit per intra phase.
    pub n_params: usize,
    /// Declared for the export: qubit q is bit q of the basis index.
    pub bit_order: String,
    /// Declared for the export: pair construction puts control on the lower id.
    pub cnot_control: String,
}

impl AnsatzSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Build the block ansatz for the given dimensions.
///
/// `vqe` lays out `n_t` time sections with the plan
/// [intra, inter-asset, intra, inter-time, intra]; `vqec` is a single section
/// with [intra, inter-asset, intra]. `topology` can override the per-block
/// shapes (default all linear). `qubit_cap` rejects circuits too large to
/// simulate; lift it to inspect a structure without simulating.
pub fn build_ansatz_with_cap(
    dims: Dims,
    scheme: AnsatzScheme,
    topology: Option<&[BlockShape]>,
    qubit_cap: usize,
) -> Result<AnsatzSpec, SimError> {
    let n_sections = match scheme {
        AnsatzScheme::Vqe => dims.n_t,
        AnsatzScheme::Vqec => 1,
    };
    let n_qubits = dims.n_a * dims.n_r * n_sections;
    if n_qubits > qubit_cap {
        return Err(SimError::TooManyQubits {
            n_qubits,
            cap: qubit_cap,
        });
    }

    let n_blocks = n_sections * dims.n_a;
    let shapes: Vec<BlockShape> = match topology {
        Some(shapes) => {
            if shapes.len() != n_blocks {
                return Err(SimError::TopologyMismatch {
                    expected: n_blocks,
                    actual: shapes.len(),
                });
            }
            shapes.to_vec()
        }
        None => vec![BlockShape::Linear; n_blocks],
    };

    let mut blocks = Vec::with_capacity(n_blocks);
    for section in 0..n_sections {
        for a in 0..dims.n_a {
            let base = section * dims.n_a * dims.n_r + a * dims.n_r;
            let shape = shapes[section * dims.n_a + a];
            if shape == BlockShape::TShaped && dims.n_r != 4 {
                return Err(SimError::BadTShapedBlock(dims.n_r));
            }
            blocks.push(Block {
                qubits: (base..base + dims.n_r).collect(),
                shape,
            });
        }
    }

    // Ring-style inter-asset links inside each section: last qubit of each
    // block to the first qubit of the next block, wrapping around.
    let mut inter_asset_pairs = Vec::new();
    if dims.n_a >= 2 {
        for section in 0..n_sections {
            for a in 0..dims.n_a {
                let from = &blocks[section * dims.n_a + a];
                let to = &blocks[section * dims.n_a + (a + 1) % dims.n_a];
                let x = *from.qubits.last().expect("nonempty block");
                let y = to.qubits[0];
                inter_asset_pairs.push((x.min(y), x.max(y)));
            }
        }
    }

    // Aligned inter-time links: first qubit of an asset's block to the first
    // qubit of the same asset's block in the next section.
    let mut inter_time_pairs = Vec::new();
    if scheme == AnsatzScheme::Vqe {
        for section in 0..n_sections.saturating_sub(1) {
            for a in 0..dims.n_a {
                let x = blocks[section * dims.n_a + a].qubits[0];
                let y = blocks[(section + 1) * dims.n_a + a].qubits[0];
                inter_time_pairs.push((x.min(y), x.max(y)));
            }
        }
    }

    let layer_plan = match scheme {
        AnsatzScheme::Vqe => vec![
            Phase::Intra,
            Phase::InterAsset,
            Phase::Intra,
            Phase::InterTime,
            Phase::Intra,
        ],
        AnsatzScheme::Vqec => vec![Phase::Intra, Phase::InterAsset, Phase::Intra],
    };
    let n_intra = layer_plan.iter().filter(|p| **p == Phase::Intra).count();

    Ok(AnsatzSpec {
        n_qubits,
        blocks,
        inter_asset_pairs,
        inter_time_pairs,
        layer_plan,
        n_params: n_intra * n_qubits,
        bit_order: "little_endian".to_string(),
        cnot_control: "lower_qubit_id".to_string(),
    })
}

/// [`build_ansatz_with_cap`] at the default desk cap with linear blocks.
pub fn build_ansatz(dims: Dims, scheme: AnsatzScheme) -> Result<AnsatzSpec, SimError> {
    build_ansatz_with_cap(dims, scheme, None, DEFAULT_QUBIT_CAP)
}

/// Exact amplitudes of a circuit output, little-endian bit order.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn n_qubits(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn zero_state(n_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    fn apply_ry(&mut self, q: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let mask = 1usize << q;
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let j = i | mask;
                let a = self.amplitudes[i];
                let b = self.amplitudes[j];
                self.amplitudes[i] = c * a - s * b;
                self.amplitudes[j] = s * a + c * b;
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }
}

/// Run the circuit on |0...0> and return the exact statevector.
///
/// Each intra phase consumes one Ry angle per qubit (in qubit order) and then
/// applies every block's entanglement CNOTs; inter phases apply their
/// declared CNOT pairs in order.
pub fn simulate(spec: &AnsatzSpec, theta: &[f64]) -> Result<StateVector, SimError> {
    if theta.len() != spec.n_params {
        return Err(SimError::ParamLengthMismatch {
            expected: spec.n_params,
            actual: theta.len(),
        });
    }
    if spec.n_qubits > SIMULATION_LIMIT {
        return Err(SimError::TooManyQubits {
            n_qubits: spec.n_qubits,
            cap: SIMULATION_LIMIT,
        });
    }
    let mut sv = StateVector::zero_state(spec.n_qubits);
    let mut next_param = 0;
    for phase in &spec.layer_plan {
        match phase {
            Phase::Intra => {
                for q in 0..spec.n_qubits {
                    sv.apply_ry(q, theta[next_param]);
                    next_param += 1;
                }
                for block in &spec.blocks {
                    for (c, t) in block.entanglement_pairs() {
                        sv.apply_cnot(c, t);
                    }
                }
            }
            Phase::InterAsset => {
                for &(c, t) in &spec.inter_asset_pairs {
                    sv.apply_cnot(c, t);
                }
            }
            Phase::InterTime => {
                for &(c, t) in &spec.inter_time_pairs {
                    sv.apply_cnot(c, t);
                }
            }
        }
    }
    Ok(sv)
}

/// Diagonal energy of basis state `index` under a spin form.
fn basis_energy(h: &QuadraticForm, index: usize) -> f64 {
    let spin = |q: usize| -> f64 {
        if index >> q & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let mut acc = h.constant;
    for (i, &l) in h.linear.iter().enumerate() {
        if l != 0.0 {
            acc += l * spin(i);
        }
    }
    for (&(i, j), &v) in &h.quadratic {
        acc += v * spin(i) * spin(j);
    }
    acc
}

/// Expectation value of a diagonal spin Hamiltonian:
/// `sum_b |A_b|^2 c(b)`. No operator matrix is formed.
pub fn expectation(sv: &StateVector, h: &QuadraticForm) -> Result<f64, SimError> {
    if h.kind != VariableKind::Spin {
        return Err(SimError::NotSpinForm);
    }
    if h.n_vars != sv.n_qubits() {
        return Err(SimError::DimensionMismatch {
            form_vars: h.n_vars,
            state_qubits: sv.n_qubits(),
        });
    }
    let mut acc = 0.0;
    for (index, amp) in sv.amplitudes.iter().enumerate() {
        let p = amp.norm_sqr();
        if p > 0.0 {
            acc += p * basis_energy(h, index);
        }
    }
    Ok(acc)
}

/// A multiset of measured bit strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleSet {
    pub entries: BTreeMap<Bits, u64>,
    pub total: u64,
}

impl SampleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, bits: Bits, count: u64) {
        if count == 0 {
            return;
        }
        *self.entries.entry(bits).or_insert(0) += count;
        self.total += count;
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Count-weighted minimum cost and its string (ties break to the
    /// lexicographically smallest string).
    pub fn min_cost(&self, q: &QuadraticForm) -> Option<(Bits, f64)> {
        let mut best: Option<(Bits, f64)> = None;
        for bits in self.entries.keys() {
            let cost = q.evaluate_cost(bits).ok()?;
            match &best {
                Some((b, c)) if cost > *c || (cost == *c && bits >= b) => {}
                _ => best = Some((bits.clone(), cost)),
            }
        }
        best
    }

    /// Count-weighted mean cost.
    pub fn mean_cost(&self, q: &QuadraticForm) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let mut acc = 0.0;
        for (bits, &count) in &self.entries {
            acc += q.evaluate_cost(bits).ok()? * count as f64;
        }
        Some(acc / self.total as f64)
    }

    /// Write `bitstring,count` CSV; char index = qubit index.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        writeln!(w, "bitstring,count")?;
        for (bits, count) in &self.entries {
            writeln!(w, "{},{}", crate::model::bits_to_string(bits), count)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut set = SampleSet::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if idx == 0 {
                if line != "bitstring,count" {
                    return Err(SimError::BadSampleLine {
                        line: 1,
                        reason: format!("expected header bitstring,count, got {line:?}"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (bits_str, count_str) =
                line.split_once(',').ok_or_else(|| SimError::BadSampleLine {
                    line: idx + 1,
                    reason: "missing comma".to_string(),
                })?;
            let bits =
                crate::model::bits_from_str(bits_str).map_err(|e| SimError::BadSampleLine {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            let count: u64 = count_str.parse().map_err(|_| SimError::BadSampleLine {
                line: idx + 1,
                reason: format!("bad count {count_str:?}"),
            })?;
            set.record(bits, count);
        }
        Ok(set)
    }
}

/// Draw `n_s` measurement outcomes from |A_b|^2, then flip each bit
/// independently with probability `noise_p`. Deterministic under `seed`.
pub fn sample(
    sv: &StateVector,
    n_s: u64,
    noise_p: f64,
    seed: u64,
) -> Result<SampleSet, SimError> {
    if !(0.0..0.5).contains(&noise_p) {
        return Err(SimError::BadNoise(noise_p));
    }
    let n_qubits = sv.n_qubits();
    let mut cumulative = Vec::with_capacity(sv.amplitudes.len());
    let mut acc = 0.0;
    for amp in &sv.amplitudes {
        acc += amp.norm_sqr();
        cumulative.push(acc);
    }
    let norm = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = SampleSet::new();
    for _ in 0..n_s {
        let u: f64 = rng.gen::<f64>() * norm;
        let index = cumulative.partition_point(|&c| c <= u).min(sv.amplitudes.len() - 1);
        let mut bits: Bits = (0..n_qubits).map(|q| (index >> q & 1) as u8).collect();
        if noise_p > 0.0 {
            for bit in bits.iter_mut() {
                if rng.gen::<f64>() < noise_p {
                    *bit ^= 1;
                }
            }
        }
        set.record(bits, 1);
    }
    Ok(set)
}
