//! Property tests for the structural invariants.

use ndarray::Array2;
use proptest::prelude::*;

use qdpo_core::analytics::normalize_weights;
use qdpo_core::market::MarketTensors;
use qdpo_core::model::{
    build_qubo, encode_weights, qubo_to_ising, DpoProblem, QuadraticForm, VariableKind,
};

fn arb_form(max_vars: usize) -> impl Strategy<Value = (QuadraticForm, Vec<u8>)> {
    (1..=max_vars).prop_flat_map(|n| {
        let coeffs = proptest::collection::vec(-2.0..2.0f64, n);
        let pairs = proptest::collection::vec((-2.0..2.0f64, any::<bool>()), n * (n - 1) / 2);
        let bits = proptest::collection::vec(0u8..=1, n);
        (Just(n), -1.0..1.0f64, coeffs, pairs, bits).prop_map(
            |(n, constant, linear, pairs, bits)| {
                let mut q = QuadraticForm::new(n, VariableKind::Binary);
                q.add_constant(constant);
                for (i, c) in linear.into_iter().enumerate() {
                    q.add_linear(i, c);
                }
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        let (v, keep) = pairs[k];
                        k += 1;
                        if keep {
                            q.add_pair(i, j, v);
                        }
                    }
                }
                (q, bits)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Binary and spin evaluation agree on every assignment.
    #[test]
    fn qubo_ising_round_trip((q, bits) in arb_form(12)) {
        let h = qubo_to_ising(&q);
        let a = q.evaluate_cost(&bits).unwrap();
        let b = h.evaluate_cost(&bits).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    /// Decoded weights always land inside the per-asset bounds.
    #[test]
    fn encoded_weights_respect_bounds(
        n_r in 1usize..=4,
        raw_m in proptest::collection::vec(0.0..0.2f64, 3),
        widths in proptest::collection::vec(0.2..0.8f64, 3),
        seed_bits in proptest::collection::vec(0u8..=1, 3 * 4 * 2),
    ) {
        let m = raw_m;
        let b: Vec<f64> = m.iter().zip(&widths).map(|(mi, w)| (mi + w).min(1.0)).collect();
        prop_assume!(b.iter().sum::<f64>() >= 1.0);
        prop_assume!(m.iter().sum::<f64>() <= 1.0);
        let n_t = 2;
        let tensors = MarketTensors::new(
            Array2::zeros((n_t, 3)),
            vec![Array2::zeros((3, 3)); n_t],
            Array2::from_elem((n_t, 3), 1.0),
            1.0,
            7,
        ).unwrap();
        let problem = DpoProblem::new(
            n_r, m.clone(), b.clone(), vec![0.0; 3], 0.0, 1.0, tensors, None,
        ).unwrap();
        let bits: Vec<u8> = seed_bits.into_iter().take(problem.n_qubits()).collect();
        prop_assume!(bits.len() == problem.n_qubits());
        let s = encode_weights(&bits, &problem).unwrap();
        for t in 0..n_t {
            for a in 0..3 {
                prop_assert!(s.weights[[t, a]] >= m[a] - 1e-12);
                prop_assert!(s.weights[[t, a]] <= b[a] + 1e-12);
            }
        }
    }

    /// Normalization lands on the simplex slice and is exactly idempotent.
    #[test]
    fn normalization_feasible_and_idempotent(
        w in proptest::collection::vec(0.0..1.5f64, 2..8),
        lows in proptest::collection::vec(0.0..0.1f64, 8),
        widths in proptest::collection::vec(0.3..1.0f64, 8),
    ) {
        let n = w.len();
        let m: Vec<f64> = lows[..n].to_vec();
        let b: Vec<f64> = m.iter().zip(&widths[..n]).map(|(mi, wd)| (mi + wd).min(1.0)).collect();
        prop_assume!(m.iter().sum::<f64>() <= 1.0);
        prop_assume!(b.iter().sum::<f64>() >= 1.0);
        match normalize_weights(&w, &m, &b) {
            Ok(once) => {
                prop_assert!((once.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for a in 0..n {
                    prop_assert!(once[a] >= m[a] - 1e-12 && once[a] <= b[a] + 1e-12);
                }
                let twice = normalize_weights(&once, &m, &b).unwrap();
                prop_assert_eq!(once, twice);
            }
            Err(err) => {
                // The fuzz range keeps the bounds feasible, so the only
                // admissible failure is running out of free mass (for
                // example every nonzero weight clipped to a bound).
                let zero_free_mass = matches!(
                    err,
                    qdpo_core::analytics::AnalyticsError::ZeroFreeMass { .. }
                );
                prop_assert!(zero_free_mass, "unexpected error: {err}");
            }
        }
    }

    /// Raising the restriction weight never rewards a violating string.
    #[test]
    fn restriction_penalty_is_monotone(
        bits in proptest::collection::vec(0u8..=1, 8),
        rho_low in 0.1..1.0f64,
        extra in 0.1..5.0f64,
    ) {
        let tensors = MarketTensors::new(
            Array2::from_elem((2, 2), 0.01),
            vec![Array2::zeros((2, 2)); 2],
            Array2::from_elem((2, 2), 1.0),
            1.0,
            7,
        ).unwrap();
        let mut problem = DpoProblem::new(
            2,
            vec![0.0, 0.0],
            vec![0.6, 0.6],
            vec![0.01, 0.01],
            5.0,
            rho_low,
            tensors,
            None,
        ).unwrap();
        let q_low = build_qubo(&problem).unwrap();
        problem.rho = rho_low + extra;
        let q_high = build_qubo(&problem).unwrap();
        let low = q_low.evaluate_cost(&bits).unwrap();
        let high = q_high.evaluate_cost(&bits).unwrap();
        let s = encode_weights(&bits, &problem).unwrap();
        let violating = (0..2).any(|t| (s.weights.row(t).sum() - 1.0).abs() > 1e-12);
        if violating {
            prop_assert!(high >= low - 1e-12);
        } else {
            prop_assert!((high - low).abs() <= 1e-10);
        }
    }
}
