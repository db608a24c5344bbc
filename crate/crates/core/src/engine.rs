//! Differential-evolution outer loop and the solve drivers.
//!
//! `de_optimize` is rand/1/bin with per-generation dithered mutation and
//! binomial crossover, box-bounded, with the mean-cost convergence rule:
//! after the base generations, converge when the relative change of the mean
//! cost over the last five generations is within tolerance, otherwise extend
//! in blocks up to the hard cap. `vqe_solve` runs it against the exact
//! Ising expectation of the ansatz state and samples the final state;
//! `vqec_solve` chains single-time solves, feeding each step's decoded
//! weights into the next step's transaction term.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{normalize_weights, AnalyticsError};
use crate::model::{
    build_qubo, build_single_time_qubo, decode_weights_real, qubo_to_ising, DpoProblem,
    ModelError, Strategy,
};
use crate::sim::{build_ansatz, sample, simulate, AnsatzScheme, AnsatzSpec, SampleSet, SimError};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("objective returned a non-finite value at generation {generation}")]
    NonFiniteObjective { generation: usize },
    #[error("bad DE configuration: {0}")]
    BadConfig(String),
    #[error("ansatz has {spec_qubits} qubits but the problem needs {problem_qubits}")]
    AnsatzMismatch {
        spec_qubits: usize,
        problem_qubits: usize,
    },
    #[error("sampled set was empty")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// Differential-evolution settings. The convergence window is five
/// generations; `mutation` is the dither range sampled once per generation.
#[derive(Debug, Clone, Serialize)]
pub struct DeConfig {
    pub population: usize,
    pub base_generations: usize,
    /// Extra generations granted when the convergence check fails.
    pub extension: usize,
    pub hard_cap: usize,
    /// Relative mean-cost change that counts as converged.
    pub conv_tol: f64,
    /// Dither range for the mutation factor.
    pub mutation: (f64, f64),
    pub crossover: f64,
    /// Box bounds applied to every parameter.
    pub bounds: (f64, f64),
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population: 28,
            base_generations: 20,
            extension: 5,
            hard_cap: 25,
            conv_tol: 0.025,
            mutation: (0.5, 1.0),
            crossover: 0.7,
            bounds: (-2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI),
            seed: 0,
        }
    }
}

/// The convergence window of the mean-cost rule.
pub const CONVERGENCE_WINDOW: usize = 5;

impl DeConfig {
    fn validate(&self) -> Result<(), EngineError> {
        if self.population < 4 {
            return Err(EngineError::BadConfig(
                "population must be at least 4 (three donors plus the target)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.conv_tol) || self.conv_tol == 0.0 {
            return Err(EngineError::BadConfig("conv_tol must lie in (0, 1)".into()));
        }
        if self.extension == 0 {
            return Err(EngineError::BadConfig("extension must be >= 1".into()));
        }
        if self.base_generations == 0 || self.hard_cap < self.base_generations {
            return Err(EngineError::BadConfig(
                "need 1 <= base_generations <= hard_cap".into(),
            ));
        }
        if !(self.mutation.0 > 0.0 && self.mutation.0 <= self.mutation.1 && self.mutation.1 <= 2.0)
        {
            return Err(EngineError::BadConfig(
                "mutation dither must satisfy 0 < lo <= hi <= 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(EngineError::BadConfig("crossover must lie in [0, 1]".into()));
        }
        if self.bounds.0 >= self.bounds.1 {
            return Err(EngineError::BadConfig("bounds must satisfy lo < hi".into()));
        }
        Ok(())
    }
}

/// Mean and best cost of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationStats {
    /// 0 is the initial population; evolution steps count from 1.
    pub generation: usize,
    pub mean_cost: f64,
    /// Best-ever cost, so the trace is non-increasing.
    pub min_cost: f64,
}

/// Full record of one optimization run.
#[derive(Debug, Clone, Serialize)]
pub struct RunHistory {
    pub stats: Vec<GenerationStats>,
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    pub converged: bool,
    pub generations_used: usize,
    /// Last evaluated relative mean-cost change, when the run got that far.
    pub final_delta_mean: Option<f64>,
}

impl RunHistory {
    /// `generation,mean_cost,min_cost` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "generation,mean_cost,min_cost")?;
        for row in &self.stats {
            writeln!(w, "{},{},{}", row.generation, row.mean_cost, row.min_cost)?;
        }
        Ok(())
    }
}

/// Relative change of the mean cost over the convergence window:
/// `|mean[g] - mean[g - 5]| / |mean[g]|`. `means[g]` is the mean at
/// generation `g` (index 0 = initial population). `None` until enough
/// generations exist.
pub fn convergence_delta(means: &[f64], generation: usize) -> Option<f64> {
    if generation < CONVERGENCE_WINDOW || generation >= means.len() {
        return None;
    }
    let current = means[generation];
    let past = means[generation - CONVERGENCE_WINDOW];
    let change = (current - past).abs();
    if change == 0.0 {
        return Some(0.0);
    }
    if current.abs() <= 1e-300 {
        return Some(f64::INFINITY);
    }
    Some(change / current.abs())
}

/// Minimize `objective` over `[bounds]^n_dims` with rand/1/bin differential
/// evolution. Trial evaluations within a generation run in parallel; all
/// randomness is drawn sequentially from the seeded generator, so a fixed
/// seed reproduces the run bit for bit.
pub fn de_optimize<F>(
    objective: F,
    n_dims: usize,
    config: &DeConfig,
) -> Result<(Vec<f64>, RunHistory), EngineError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    if n_dims == 0 {
        return Err(EngineError::BadConfig("n_dims must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.bounds;
    let pop_size = config.population;

    let mut population: Vec<Vec<f64>> = (0..pop_size)
        .map(|_| (0..n_dims).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect();
    let mut costs: Vec<f64> = population
        .par_iter()
        .map(|member| objective(member))
        .collect();
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(EngineError::NonFiniteObjective { generation: 0 });
    }

    let mut best_cost = f64::INFINITY;
    let mut best_params = population[0].clone();
    let update_best = |population: &[Vec<f64>], costs: &[f64], best_cost: &mut f64, best_params: &mut Vec<f64>| {
        for (member, &cost) in population.iter().zip(costs) {
            if cost < *best_cost {
                *best_cost = cost;
                *best_params = member.clone();
            }
        }
    };
    update_best(&population, &costs, &mut best_cost, &mut best_params);

    let mean_of = |costs: &[f64]| costs.iter().sum::<f64>() / costs.len() as f64;
    let mut means = vec![mean_of(&costs)];
    let mut stats = vec![GenerationStats {
        generation: 0,
        mean_cost: means[0],
        min_cost: best_cost,
    }];

    let mut converged = false;
    let mut generations_used = 0;
    let mut final_delta = None;
    for generation in 1..=config.hard_cap {
        generations_used = generation;
        let dither = rng.gen_range(config.mutation.0..=config.mutation.1);

        let mut trials: Vec<Vec<f64>> = Vec::with_capacity(pop_size);
        for target in 0..pop_size {
            // Three distinct donors, none of them the target.
            let mut donors = [0usize; 3];
            let mut picked = 0;
            while picked < 3 {
                let candidate = rng.gen_range(0..pop_size);
                if candidate != target && !donors[..picked].contains(&candidate) {
                    donors[picked] = candidate;
                    picked += 1;
                }
            }
            let forced = rng.gen_range(0..n_dims);
            let trial: Vec<f64> = (0..n_dims)
                .map(|d| {
                    let mutant = population[donors[0]][d]
                        + dither * (population[donors[1]][d] - population[donors[2]][d]);
                    if d == forced || rng.gen::<f64>() < config.crossover {
                        mutant.clamp(lo, hi)
                    } else {
                        population[target][d]
                    }
                })
                .collect();
            trials.push(trial);
        }

        let trial_costs: Vec<f64> = trials.par_iter().map(|t| objective(t)).collect();
        if trial_costs.iter().any(|c| !c.is_finite()) {
            return Err(EngineError::NonFiniteObjective { generation });
        }
        for target in 0..pop_size {
            if trial_costs[target] <= costs[target] {
                population[target] = std::mem::take(&mut trials[target]);
                costs[target] = trial_costs[target];
            }
        }
        update_best(&population, &costs, &mut best_cost, &mut best_params);
        means.push(mean_of(&costs));
        stats.push(GenerationStats {
            generation,
            mean_cost: means[generation],
            min_cost: best_cost,
        });

        // Checkpoints at base, base + extension, base + 2 * extension, ...
        let at_checkpoint = generation >= config.base_generations
            && (generation - config.base_generations) % config.extension == 0;
        if at_checkpoint {
            if let Some(delta) = convergence_delta(&means, generation) {
                final_delta = Some(delta);
                if delta <= config.conv_tol {
                    converged = true;
                    break;
                }
            }
        }
    }

    let history = RunHistory {
        stats,
        best_params: best_params.clone(),
        best_cost,
        converged,
        generations_used,
        final_delta_mean: final_delta,
    };
    Ok((best_params, history))
}

/// Run the full-horizon workflow: expand the objective, convert to the spin
/// form, optimize the ansatz parameters against the exact expectation, then
/// sample the final state `shots` times (readout bits flipped with
/// probability `noise_p`).
pub fn vqe_solve(
    problem: &DpoProblem,
    spec: &AnsatzSpec,
    de: &DeConfig,
    shots: u64,
    noise_p: f64,
) -> Result<(SampleSet, RunHistory), EngineError> {
    if spec.n_qubits != problem.n_qubits() {
        return Err(EngineError::AnsatzMismatch {
            spec_qubits: spec.n_qubits,
            problem_qubits: problem.n_qubits(),
        });
    }
    let qubo = build_qubo(problem)?;
    let hamiltonian = qubo_to_ising(&qubo);

    // Validate the simulate/expectation path once so the hot closure can
    // assume success.
    let probe = simulate(spec, &vec![0.0; spec.n_params])?;
    crate::sim::expectation(&probe, &hamiltonian)?;

    let objective = |theta: &[f64]| -> f64 {
        let sv = simulate(spec, theta).expect("validated ansatz");
        crate::sim::expectation(&sv, &hamiltonian).expect("validated operator")
    };
    let (theta, history) = de_optimize(objective, spec.n_params, de)?;

    let final_state = simulate(spec, &theta)?;
    let samples = sample(
        &final_state,
        shots,
        noise_p,
        derive_seed(de.seed, "vqe-sample"),
    )?;
    Ok((samples, history))
}

/// What flows between chained steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChainMode {
    /// Normalize each step's chosen weights before they enter the next
    /// step's transaction term.
    #[default]
    Normalized,
    /// Pass the raw decoded weights forward.
    Raw,
}

/// Everything a chained run produces.
#[derive(Debug)]
pub struct VqecOutcome {
    pub per_step_samples: Vec<SampleSet>,
    pub strategy: Strategy,
    pub histories: Vec<RunHistory>,
}

/// Solve the horizon one time step at a time: build the single-time
/// objective with the previous step's weights, optimize and sample it, pick
/// the lowest-cost sampled string, decode it, and chain its weights forward.
pub fn vqec_solve(
    problem: &DpoProblem,
    de: &DeConfig,
    shots: u64,
    noise_p: f64,
    chain: ChainMode,
) -> Result<VqecOutcome, EngineError> {
    let dims = crate::model::Dims {
        n_t: 1,
        n_a: problem.n_a(),
        n_r: problem.n_r,
    };
    let spec = build_ansatz(dims, AnsatzScheme::Vqec)?;

    let mut omega_prev: Vec<f64> = problem.omega0.clone();
    let mut weights = ndarray::Array2::zeros((problem.n_t(), problem.n_a()));
    let mut all_bits = Vec::with_capacity(problem.n_qubits());
    let mut per_step_samples = Vec::with_capacity(problem.n_t());
    let mut histories = Vec::with_capacity(problem.n_t());

    for t in 0..problem.n_t() {
        let objective_form = build_single_time_qubo(problem, t, &omega_prev)?;
        let hamiltonian = qubo_to_ising(&objective_form);

        let probe = simulate(&spec, &vec![0.0; spec.n_params])?;
        crate::sim::expectation(&probe, &hamiltonian)?;
        let objective = |theta: &[f64]| -> f64 {
            let sv = simulate(&spec, theta).expect("validated ansatz");
            crate::sim::expectation(&sv, &hamiltonian).expect("validated operator")
        };

        let step_config = DeConfig {
            seed: derive_seed(de.seed, &format!("vqec-step-{t}")),
            ..de.clone()
        };
        let (theta, history) = de_optimize(objective, spec.n_params, &step_config)?;

        let final_state = simulate(&spec, &theta)?;
        let samples = sample(
            &final_state,
            shots,
            noise_p,
            derive_seed(step_config.seed, "vqec-sample"),
        )?;
        let (best_bits, _) = samples.min_cost(&objective_form).ok_or(EngineError::NoSamples)?;

        let raw = decode_weights_real(
            &best_bits.iter().map(|&x| x as f64).collect::<Vec<_>>(),
            1,
            problem.n_a(),
            problem.n_r,
            &problem.m,
            &problem.b,
        )?;
        let step_weights: Vec<f64> = raw.row(0).to_vec();
        let chained = match chain {
            ChainMode::Normalized => normalize_weights(&step_weights, &problem.m, &problem.b)?,
            ChainMode::Raw => step_weights,
        };
        for (a, &w) in chained.iter().enumerate() {
            weights[[t, a]] = w;
        }
        omega_prev = chained;
        all_bits.extend_from_slice(&best_bits);
        per_step_samples.push(samples);
        histories.push(history);
    }

    let strategy = Strategy {
        weights,
        normalized: chain == ChainMode::Normalized,
        source_bits: Some(all_bits),
    };
    Ok(VqecOutcome {
        per_step_samples,
        strategy,
        histories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::exhaustive_solve;
    use crate::market::MarketTensors;
    use crate::model::encode_weights;
    use ndarray::Array2;
    use std::sync::Mutex;

    fn sphere(theta: &[f64]) -> f64 {
        theta.iter().map(|x| x * x).sum()
    }

    #[test]
    fn constant_objective_converges_at_base() {
        let config = DeConfig {
            population: 12,
            seed: 3,
            ..DeConfig::default()
        };
        let (_, history) = de_optimize(|_| 1.5, 4, &config).unwrap();
        assert!(history.converged);
        assert_eq!(history.generations_used, config.base_generations);
        assert_eq!(history.final_delta_mean, Some(0.0));
    }

    #[test]
    fn zero_valued_constant_objective_also_converges() {
        let config = DeConfig {
            population: 8,
            seed: 3,
            ..DeConfig::default()
        };
        let (_, history) = de_optimize(|_| 0.0, 3, &config).unwrap();
        assert!(history.converged);
    }

    #[test]
    fn sphere_benchmark_population_28_25_generations() {
        // Population 28 with up to 25 generations (the small-instance budget)
        // on a 2-d sphere over the full box must land within 1e-2 of the
        // optimum in at least 19 of 20 seeded runs.
        let mut hits = 0;
        for seed in 0..20 {
            let config = DeConfig {
                population: 28,
                seed,
                ..DeConfig::default()
            };
            let (_, history) = de_optimize(sphere, 2, &config).unwrap();
            if history.best_cost <= 1e-2 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "sphere solved in {hits}/20 runs");
    }

    #[test]
    fn min_cost_trace_is_non_increasing() {
        let config = DeConfig {
            population: 10,
            seed: 11,
            ..DeConfig::default()
        };
        let (_, history) = de_optimize(sphere, 5, &config).unwrap();
        for pair in history.stats.windows(2) {
            assert!(pair[1].min_cost <= pair[0].min_cost);
        }
    }

    #[test]
    fn every_evaluation_respects_bounds() {
        let seen = Mutex::new(Vec::<Vec<f64>>::new());
        let config = DeConfig {
            population: 8,
            base_generations: 6,
            hard_cap: 6,
            seed: 4,
            ..DeConfig::default()
        };
        let bound = config.bounds.1;
        let (_, _) = de_optimize(
            |theta: &[f64]| {
                seen.lock().unwrap().push(theta.to_vec());
                sphere(theta)
            },
            4,
            &config,
        )
        .unwrap();
        for member in seen.lock().unwrap().iter() {
            for &v in member {
                assert!(v >= -bound - 1e-12 && v <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_history() {
        let config = DeConfig {
            population: 9,
            seed: 21,
            ..DeConfig::default()
        };
        let (theta_a, hist_a) = de_optimize(sphere, 4, &config).unwrap();
        let (theta_b, hist_b) = de_optimize(sphere, 4, &config).unwrap();
        assert_eq!(theta_a, theta_b);
        assert_eq!(hist_a.stats, hist_b.stats);
        assert_eq!(hist_a.generations_used, hist_b.generations_used);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let config = DeConfig {
            population: 6,
            seed: 2,
            ..DeConfig::default()
        };
        let err = de_optimize(|_| f64::NAN, 3, &config).unwrap_err();
        assert!(matches!(err, EngineError::NonFiniteObjective { .. }));
    }

    #[test]
    fn convergence_rule_fires_iff_inequality_holds() {
        // Pure-function check of the rule on synthetic mean series.
        let flat: Vec<f64> = vec![10.0; 26];
        assert_eq!(convergence_delta(&flat, 20), Some(0.0));
        // 3% drop over the window is above a 2.5% tolerance.
        let mut drifting = vec![10.0; 26];
        for (g, value) in drifting.iter_mut().enumerate() {
            *value = 10.0 * (1.0 - 0.006 * g as f64);
        }
        let delta = convergence_delta(&drifting, 20).unwrap();
        assert!(delta > 0.025 && delta < 0.04);
        // Not defined before the window fills.
        assert_eq!(convergence_delta(&flat[..4], 3), None);
        // Zero denominator with a real change diverges.
        let mut to_zero = vec![1.0; 21];
        to_zero[20] = 0.0;
        assert_eq!(convergence_delta(&to_zero, 20), Some(f64::INFINITY));
    }

    #[test]
    fn slow_objective_extends_to_the_cap() {
        // A landscape whose population mean keeps improving past 2.5% per
        // window forces the extension to the hard cap under this seed.
        let config = DeConfig {
            population: 20,
            seed: 8,
            ..DeConfig::default()
        };
        let rastrigin = |theta: &[f64]| -> f64 {
            10.0 * theta.len() as f64
                + theta
                    .iter()
                    .map(|x| x * x - 10.0 * (2.0 * std::f64::consts::PI * x).cos())
                    .sum::<f64>()
        };
        let (_, history) = de_optimize(rastrigin, 8, &config).unwrap();
        if !history.converged {
            assert_eq!(history.generations_used, config.hard_cap);
            assert!(history.final_delta_mean.unwrap() > config.conv_tol);
        }
        // Either way the checkpoint schedule only stops at base or cap.
        assert!(
            history.generations_used == config.base_generations
                || history.generations_used == config.hard_cap
        );
    }

    fn fixture_problem(n_t: usize, mu: f64) -> DpoProblem {
        let n_a = 2;
        let tensors = MarketTensors::new(
            Array2::from_elem((n_t, n_a), mu),
            vec![Array2::from_elem((n_a, n_a), 1e-5); n_t],
            Array2::from_elem((n_t, n_a), 1.0),
            1.0,
            7,
        )
        .unwrap();
        DpoProblem::new(
            2,
            vec![0.0, 0.0],
            vec![0.6, 0.6],
            vec![0.01, 0.01],
            10.0,
            1.0,
            tensors,
            None,
        )
        .unwrap()
    }

    #[test]
    fn vqe_penalty_only_toy_reaches_full_allocation() {
        // One asset, one bit, m=0, B=1, rho > 0 and nothing else: the best
        // sampled string must decode to full allocation.
        let tensors = MarketTensors::new(
            Array2::zeros((1, 1)),
            vec![Array2::zeros((1, 1))],
            Array2::from_elem((1, 1), 1.0),
            1.0,
            7,
        )
        .unwrap();
        let problem = DpoProblem::new(
            1,
            vec![0.0],
            vec![1.0],
            vec![0.0],
            0.0,
            2.0,
            tensors,
            None,
        )
        .unwrap();
        let spec = build_ansatz(problem.dims(), AnsatzScheme::Vqe).unwrap();
        let de = DeConfig {
            population: 8,
            base_generations: 10,
            hard_cap: 12,
            seed: 5,
            ..DeConfig::default()
        };
        let (samples, _) = vqe_solve(&problem, &spec, &de, 256, 0.0).unwrap();
        let qubo = build_qubo(&problem).unwrap();
        let (best, _) = samples.min_cost(&qubo).unwrap();
        let w = encode_weights(&best, &problem).unwrap().weights;
        assert!((w[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vqe_eight_qubit_fixture_close_to_exhaustive() {
        let problem = fixture_problem(2, 0.05);
        let spec = build_ansatz(problem.dims(), AnsatzScheme::Vqe).unwrap();
        let qubo = build_qubo(&problem).unwrap();
        let (_, optimum) = exhaustive_solve(&qubo).unwrap();
        let mut hits = 0;
        for seed in 0..3 {
            let de = DeConfig {
                population: 28,
                seed,
                ..DeConfig::default()
            };
            let (samples, history) = vqe_solve(&problem, &spec, &de, 2048, 0.0).unwrap();
            let (_, best) = samples.min_cost(&qubo).unwrap();
            if (best - optimum).abs() <= 0.05 * optimum.abs() {
                hits += 1;
            }
            for pair in history.stats.windows(2) {
                assert!(pair[1].min_cost <= pair[0].min_cost);
            }
        }
        assert!(hits >= 2, "sampled minimum near optimum in {hits}/3 seeds");
    }

    #[test]
    fn vqe_rejects_mismatched_ansatz() {
        let problem = fixture_problem(2, 0.02);
        let wrong = build_ansatz(
            crate::model::Dims { n_t: 1, n_a: 2, n_r: 2 },
            AnsatzScheme::Vqec,
        )
        .unwrap();
        assert!(matches!(
            vqe_solve(&problem, &wrong, &DeConfig::default(), 10, 0.0).unwrap_err(),
            EngineError::AnsatzMismatch { .. }
        ));
    }

    #[test]
    fn vqec_without_fees_decouples_steps() {
        let mut problem = fixture_problem(3, 0.04);
        problem.nu = vec![0.0, 0.0];
        // O_t does not depend on the previous step at all.
        let a = build_single_time_qubo(&problem, 1, &[0.0, 0.0]).unwrap();
        let b = build_single_time_qubo(&problem, 1, &[0.6, 0.2]).unwrap();
        assert_eq!(a, b);

        let de = DeConfig {
            population: 12,
            base_generations: 8,
            hard_cap: 10,
            seed: 13,
            ..DeConfig::default()
        };
        let outcome = vqec_solve(&problem, &de, 512, 0.0, ChainMode::Normalized).unwrap();
        assert_eq!(outcome.per_step_samples.len(), 3);
        assert_eq!(outcome.histories.len(), 3);
        assert!(outcome.strategy.normalized);
    }

    #[test]
    fn vqec_first_step_equals_single_time_with_initial_weights() {
        let problem = fixture_problem(2, 0.05);
        let from_omega0 = build_single_time_qubo(&problem, 0, &problem.omega0).unwrap();
        let explicit = build_single_time_qubo(&problem, 0, &[0.0, 0.0]).unwrap();
        assert_eq!(from_omega0, explicit);
    }

    #[test]
    fn vqec_chained_cost_cannot_beat_joint_optimum() {
        let problem = fixture_problem(2, 0.05);
        let de = DeConfig {
            population: 16,
            base_generations: 10,
            hard_cap: 15,
            seed: 31,
            ..DeConfig::default()
        };
        let outcome = vqec_solve(&problem, &de, 1024, 0.0, ChainMode::Raw).unwrap();
        // Sum the chained per-step objectives at the chosen strings.
        let bits = outcome.strategy.source_bits.clone().unwrap();
        let step = problem.n_a() * problem.n_r;
        let mut prev = problem.omega0.clone();
        let mut chained_total = 0.0;
        for t in 0..problem.n_t() {
            let ot = build_single_time_qubo(&problem, t, &prev).unwrap();
            let sub = &bits[t * step..(t + 1) * step];
            chained_total += ot.evaluate_cost(sub).unwrap();
            prev = decode_weights_real(
                &sub.iter().map(|&x| x as f64).collect::<Vec<_>>(),
                1,
                problem.n_a(),
                problem.n_r,
                &problem.m,
                &problem.b,
            )
            .unwrap()
            .row(0)
            .to_vec();
        }
        let qubo = build_qubo(&problem).unwrap();
        let (_, joint) = exhaustive_solve(&qubo).unwrap();
        assert!(chained_total >= joint - 1e-10);
    }

    #[test]
    fn vqec_strategy_rows_are_normalized() {
        let problem = fixture_problem(2, 0.05);
        let de = DeConfig {
            population: 12,
            base_generations: 8,
            hard_cap: 10,
            seed: 7,
            ..DeConfig::default()
        };
        let outcome = vqec_solve(&problem, &de, 512, 0.0, ChainMode::Normalized).unwrap();
        for t in 0..problem.n_t() {
            let total: f64 = outcome.strategy.weights.row(t).sum();
            assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn history_csv_shape() {
        let config = DeConfig {
            population: 6,
            base_generations: 6,
            hard_cap: 6,
            seed: 1,
            ..DeConfig::default()
        };
        let (_, history) = de_optimize(sphere, 3, &config).unwrap();
        let mut buf = Vec::new();
        history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "generation,mean_cost,min_cost");
        assert_eq!(lines.len(), history.stats.len() + 1);
    }
}
