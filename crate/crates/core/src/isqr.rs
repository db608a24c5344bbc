//! Iterative sample-based configuration recovery for Ising/QUBO solutions.
//!
//! One iteration: shuffle the sample multiset into batches, take each batch's
//! lowest-cost string as its champion, average the champions into a per-qubit
//! occupancy pattern, decode per-time investment targets K_t from the
//! occupancies, then flip bits of the original samples probabilistically
//! toward the pattern (only flips that move a violating time step toward its
//! K_t keep probability). The loop stops when the best cost is stable for
//! two consecutive iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{decode_weights_real, Bits, DpoProblem, ModelError, QuadraticForm};
use crate::sim::SampleSet;
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum IsqrError {
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("bit length {actual} matches neither the full layout nor one time step ({expected})")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Knobs of the recovery loop.
#[derive(Debug, Clone, Serialize)]
pub struct IsqrConfig {
    /// Number of batches M.
    pub n_batches: usize,
    /// Samples per batch; `None` uses total / M.
    pub batch_size: Option<usize>,
    /// Disagreements below this threshold fall into the leak branch.
    pub filling_threshold: f64,
    /// Slope of the leak branch.
    pub leak_slope: f64,
    pub max_iterations: usize,
    /// Relative best-cost change that counts as stable.
    pub conv_tol: f64,
    pub seed: u64,
}

impl Default for IsqrConfig {
    fn default() -> Self {
        Self {
            n_batches: 10,
            batch_size: None,
            filling_threshold: 0.2,
            leak_slope: 0.1,
            max_iterations: 20,
            conv_tol: 0.025,
            seed: 0,
        }
    }
}

impl IsqrConfig {
    fn validate(&self) -> Result<(), IsqrError> {
        if self.n_batches == 0 {
            return Err(IsqrError::BadConfig("n_batches must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.filling_threshold) || self.filling_threshold == 0.0 {
            return Err(IsqrError::BadConfig(
                "filling_threshold must lie in (0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.leak_slope) || self.leak_slope == 0.0 {
            return Err(IsqrError::BadConfig("leak_slope must lie in (0, 1]".into()));
        }
        if self.max_iterations == 0 {
            return Err(IsqrError::BadConfig("max_iterations must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.conv_tol) || self.conv_tol == 0.0 {
            return Err(IsqrError::BadConfig("conv_tol must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Learned per-qubit occupancies and the per-time investment targets they
/// decode to.
#[derive(Debug, Clone, Serialize)]
pub struct OccupancyPattern {
    /// Mean of each qubit over the batch champions, in [0, 1].
    pub occupancy: Vec<f64>,
    /// K_t: total decoded investment of the occupancy vector per time step.
    pub targets: Vec<f64>,
}

/// How many time rows a string of `n_vars` bits carries: the full horizon,
/// or a single step (the per-time workflows trade strings of one section).
fn effective_time_steps(problem: &DpoProblem, n_vars: usize) -> Result<usize, IsqrError> {
    let per_step = problem.n_a() * problem.n_r;
    if n_vars == problem.n_qubits() {
        Ok(problem.n_t())
    } else if n_vars == per_step {
        Ok(1)
    } else {
        Err(IsqrError::LengthMismatch {
            expected: problem.n_qubits(),
            actual: n_vars,
        })
    }
}

/// Per-time decoded totals of real-valued bit occupancies.
fn decoded_totals(
    values: &[f64],
    n_t: usize,
    problem: &DpoProblem,
) -> Result<Vec<f64>, IsqrError> {
    let weights = decode_weights_real(
        values,
        n_t,
        problem.n_a(),
        problem.n_r,
        &problem.m,
        &problem.b,
    )?;
    Ok((0..n_t).map(|t| weights.row(t).sum()).collect())
}

/// Batch the samples, pick per-batch champions by cost, and average them
/// into an occupancy pattern with its decoded targets.
pub fn learn_pattern(
    samples: &SampleSet,
    q: &QuadraticForm,
    cfg: &IsqrConfig,
    problem: &DpoProblem,
) -> Result<OccupancyPattern, IsqrError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(IsqrError::EmptySampleSet);
    }
    let n_t = effective_time_steps(problem, q.n_vars)?;

    let unique: Vec<&Bits> = samples.entries.keys().collect();
    for bits in &unique {
        if bits.len() != q.n_vars {
            return Err(IsqrError::LengthMismatch {
                expected: q.n_vars,
                actual: bits.len(),
            });
        }
    }
    let costs: Vec<f64> = unique
        .iter()
        .map(|bits| q.evaluate_cost(bits))
        .collect::<Result<_, _>>()?;

    // Expand the multiset, shuffle, and deal round-robin into M batches.
    let mut occurrence: Vec<u32> = Vec::with_capacity(samples.total as usize);
    for (idx, bits) in unique.iter().enumerate() {
        for _ in 0..samples.entries[*bits] {
            occurrence.push(idx as u32);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Fisher-Yates
    for i in (1..occurrence.len()).rev() {
        let j = rng.gen_range(0..=i);
        occurrence.swap(i, j);
    }
    let per_batch = cfg
        .batch_size
        .unwrap_or_else(|| (occurrence.len() / cfg.n_batches).max(1));
    let used = occurrence.len().min(cfg.n_batches * per_batch);

    // Champion of each batch: minimum cost, ties to the lexicographically
    // smallest string.
    let mut champions: Vec<Option<u32>> = vec![None; cfg.n_batches];
    for (position, &idx) in occurrence[..used].iter().enumerate() {
        let batch = position % cfg.n_batches;
        champions[batch] = Some(match champions[batch] {
            None => idx,
            Some(current) => {
                let (cc, ci) = (costs[current as usize], costs[idx as usize]);
                if ci < cc || (ci == cc && unique[idx as usize] < unique[current as usize]) {
                    idx
                } else {
                    current
                }
            }
        });
    }

    let mut occupancy = vec![0.0; q.n_vars];
    let mut filled = 0usize;
    for champion in champions.into_iter().flatten() {
        filled += 1;
        for (qbit, &bit) in unique[champion as usize].iter().enumerate() {
            occupancy[qbit] += bit as f64;
        }
    }
    for value in occupancy.iter_mut() {
        *value /= filled as f64;
    }
    let targets = decoded_totals(&occupancy, n_t, problem)?;
    Ok(OccupancyPattern { occupancy, targets })
}

/// Per-bit flip probabilities for one sample against a learned pattern.
///
/// Disagreement `d = |x_q - occupancy_q|` is scored `d` above the filling
/// threshold and `leak_slope * d` below it, then scaled by the bit's
/// relative encoding weight `2^r / 2^(n_r - 1)`: the top bit of a register
/// carries the full score and lower bits fall off by powers of two, so a
/// fully disagreeing top bit is corrected with certainty. At a time step
/// whose decoded total is above its target only 1 -> 0 flips survive;
/// below, only 0 -> 1 flips. At a satisfied time step only strong
/// disagreements (d above the threshold) keep probability.
pub fn flip_probabilities(
    bits: &[u8],
    pattern: &OccupancyPattern,
    cfg: &IsqrConfig,
    problem: &DpoProblem,
) -> Result<Vec<f64>, IsqrError> {
    cfg.validate()?;
    if bits.len() != pattern.occupancy.len() {
        return Err(IsqrError::LengthMismatch {
            expected: pattern.occupancy.len(),
            actual: bits.len(),
        });
    }
    let n_t = effective_time_steps(problem, bits.len())?;
    if pattern.targets.len() != n_t {
        return Err(IsqrError::LengthMismatch {
            expected: n_t,
            actual: pattern.targets.len(),
        });
    }
    let values: Vec<f64> = bits.iter().map(|&x| x as f64).collect();
    let totals = decoded_totals(&values, n_t, problem)?;

    let per_step = problem.n_a() * problem.n_r;
    let top_bit = (1u64 << (problem.n_r - 1)) as f64;
    let mut probabilities = vec![0.0; bits.len()];
    for (qbit, p) in probabilities.iter_mut().enumerate() {
        let t = qbit / per_step;
        let r = qbit % problem.n_r;
        let d = (bits[qbit] as f64 - pattern.occupancy[qbit]).abs();
        let score = if d >= cfg.filling_threshold {
            d
        } else {
            cfg.leak_slope * d
        };
        let scaled = score * (1u64 << r) as f64 / top_bit;

        let excess = totals[t] - pattern.targets[t];
        let keep = if excess > 1e-9 {
            bits[qbit] == 1 // over-invested: only flips that release weight
        } else if excess < -1e-9 {
            bits[qbit] == 0 // under-invested: only flips that add weight
        } else {
            d >= cfg.filling_threshold
        };
        *p = if keep { scaled.clamp(0.0, 1.0) } else { 0.0 };
    }
    Ok(probabilities)
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationStats {
    /// 0 is the input set; corrected generations count from 1.
    pub iteration: usize,
    pub min_cost: f64,
    pub mean_cost: f64,
}

fn set_stats(set: &SampleSet, q: &QuadraticForm) -> Result<(f64, f64), IsqrError> {
    let min = set
        .min_cost(q)
        .ok_or(IsqrError::EmptySampleSet)?
        .1;
    let mean = set.mean_cost(q).ok_or(IsqrError::EmptySampleSet)?;
    Ok((min, mean))
}

/// Run the recovery loop: learn a pattern from the current generation, flip
/// the original samples toward it, and repeat until the best cost moves by
/// less than `conv_tol` (relative) for two consecutive iterations or the
/// iteration budget runs out. Returns the final corrected multiset and the
/// per-iteration trace (row 0 is the input).
pub fn isqr_run(
    samples: &SampleSet,
    q: &QuadraticForm,
    cfg: &IsqrConfig,
    problem: &DpoProblem,
) -> Result<(SampleSet, Vec<IterationStats>), IsqrError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(IsqrError::EmptySampleSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "isqr-flips"));
    let (mut prev_min, input_mean) = set_stats(samples, q)?;
    let mut trace = vec![IterationStats {
        iteration: 0,
        min_cost: prev_min,
        mean_cost: input_mean,
    }];

    let mut current = samples.clone();
    let mut stable_iterations = 0usize;
    for iteration in 1..=cfg.max_iterations {
        let pattern_cfg = IsqrConfig {
            seed: derive_seed(cfg.seed, &format!("isqr-batches-{iteration}")),
            ..cfg.clone()
        };
        let pattern = learn_pattern(&current, q, &pattern_cfg, problem)?;

        // Correct the *original* samples with the refreshed pattern.
        let mut next = SampleSet::new();
        for (bits, &count) in &samples.entries {
            let probabilities = flip_probabilities(bits, &pattern, cfg, problem)?;
            for _ in 0..count {
                let mut flipped = bits.clone();
                for (bit, &p) in flipped.iter_mut().zip(&probabilities) {
                    if rng.gen::<f64>() < p {
                        *bit ^= 1;
                    }
                }
                next.record(flipped, 1);
            }
        }

        let (min, mean) = set_stats(&next, q)?;
        trace.push(IterationStats {
            iteration,
            min_cost: min,
            mean_cost: mean,
        });
        let change = (min - prev_min).abs();
        let relative = if change == 0.0 {
            0.0
        } else if prev_min.abs() > 1e-300 {
            change / prev_min.abs()
        } else {
            f64::INFINITY
        };
        if relative < cfg.conv_tol {
            stable_iterations += 1;
        } else {
            stable_iterations = 0;
        }
        current = next;
        prev_min = min;
        if stable_iterations >= 2 {
            break;
        }
    }
    Ok((current, trace))
}
