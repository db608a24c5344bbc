//! Shared instance builders for the benchmarks.

use ndarray::Array2;
use qdpo_core::market::MarketTensors;
use qdpo_core::model::{DpoProblem, QuadraticForm, VariableKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A dense random binary form.
pub fn random_form(n: usize, seed: u64) -> QuadraticForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QuadraticForm::new(n, VariableKind::Binary);
    q.add_constant(rng.gen::<f64>() - 0.5);
    for i in 0..n {
        q.add_linear(i, rng.gen::<f64>() * 2.0 - 1.0);
    }
    for i in 0..n {
        for j in i + 1..n {
            q.add_pair(i, j, rng.gen::<f64>() * 2.0 - 1.0);
        }
    }
    q
}

/// A problem instance with paper-like shape knobs.
pub fn instance(n_t: usize, n_a: usize, n_r: usize) -> DpoProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mu = Array2::zeros((n_t, n_a));
    let mut phi = Array2::zeros((n_t, n_a));
    let mut sigma = Vec::with_capacity(n_t);
    for t in 0..n_t {
        for a in 0..n_a {
            mu[[t, a]] = rng.gen::<f64>() * 0.06 - 0.01;
            phi[[t, a]] = 0.97 + rng.gen::<f64>() * 0.06;
        }
        let factor: Vec<Vec<f64>> = (0..n_a)
            .map(|_| (0..n_a).map(|_| (rng.gen::<f64>() - 0.4) * 0.02).collect())
            .collect();
        let mut s = Array2::zeros((n_a, n_a));
        for i in 0..n_a {
            for j in 0..n_a {
                let mut acc = 0.0;
                for row in &factor {
                    acc += row[i] * row[j];
                }
                s[[i, j]] = acc;
            }
        }
        sigma.push(s);
    }
    let tensors = MarketTensors::new(mu, sigma, phi, 1.0128, 28).expect("tensors");
    DpoProblem::new(
        n_r,
        vec![0.0; n_a],
        vec![(2.0 / n_a as f64).min(1.0); n_a],
        vec![0.01; n_a],
        100.0,
        0.5,
        tensors,
        None,
    )
    .expect("instance")
}
