//! Strategy normalization, financial scores, the ideal efficient frontier,
//! and the classical baselines (uniform random, simulated annealing,
//! exhaustive enumeration).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Bits, DpoProblem, ModelError, QuadraticForm, Strategy};
use crate::sim::SampleSet;

/// Annual risk-free rate used in the Sharpe ratio (average euro short-term
/// rate over the studied period).
pub const DEFAULT_RFR: f64 = 0.0172;

/// Annualized minimum acceptable rate of return: twice the S&P 500 ten-year
/// average annual return of 11.02%.
pub const MARR_ANNUAL: f64 = 0.2204;

/// Exhaustive enumeration cap.
pub const EXHAUSTIVE_CAP: usize = 26;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("infeasible bounds: need m_a <= B_a and sum(m) <= 1 <= sum(B)")]
    InfeasibleBounds,
    #[error("no free mass to rescale: residual {residual} with every asset fixed")]
    ZeroFreeMass { residual: f64 },
    #[error("strategy is not normalized")]
    NotNormalized,
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("vectors must have matching lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("frontier solver stalled: KKT residual {residual} > {tolerance}")]
    SolverStall { residual: f64, tolerance: f64 },
    #[error("{n_vars} variables exceed the exhaustive cap of {cap}")]
    TooLarge { n_vars: usize, cap: usize },
    #[error("annealing budget must be at least 1 sweep")]
    ZeroBudget,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Enforce the unit-sum restriction and the per-asset bounds by iterative
/// proportional adjustment:
///
/// 1. clip out-of-bounds weights to the nearest bound and mark them fixed;
/// 2. rescale the free weights by `s = (1 - S_G) / S_U`;
/// 3. re-clip any new violators, mark them fixed, and repeat step 2 until
///    every free weight is interior.
///
/// Inputs that already satisfy both the bounds and `|sum - 1| <= 1e-9` are
/// returned unchanged, which makes the operation exactly idempotent.
pub fn normalize_weights(w: &[f64], m: &[f64], b: &[f64]) -> Result<Vec<f64>, AnalyticsError> {
    let n = w.len();
    if m.len() != n || b.len() != n {
        return Err(AnalyticsError::LengthMismatch(n, m.len().max(b.len())));
    }
    let feasible = m.iter().zip(b).all(|(mi, bi)| mi <= bi)
        && m.iter().sum::<f64>() <= 1.0
        && b.iter().sum::<f64>() >= 1.0;
    if !feasible {
        return Err(AnalyticsError::InfeasibleBounds);
    }

    let in_bounds = w.iter().zip(m.iter().zip(b)).all(|(wi, (mi, bi))| wi >= mi && wi <= bi);
    if in_bounds && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9 {
        return Ok(w.to_vec());
    }

    let mut w = w.to_vec();
    let mut fixed = vec![false; n];
    for a in 0..n {
        if w[a] < m[a] {
            w[a] = m[a];
            fixed[a] = true;
        } else if w[a] > b[a] {
            w[a] = b[a];
            fixed[a] = true;
        }
    }

    // Each pass either fixes at least one more asset or exits.
    for _ in 0..=n {
        let s_fixed: f64 = (0..n).filter(|&a| fixed[a]).map(|a| w[a]).sum();
        let s_free: f64 = (0..n).filter(|&a| !fixed[a]).map(|a| w[a]).sum();
        let residual = 1.0 - s_fixed;
        if s_free == 0.0 {
            if (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9 {
                return Ok(w);
            }
            return Err(AnalyticsError::ZeroFreeMass { residual });
        }
        let scale = residual / s_free;
        let mut violated = false;
        for a in 0..n {
            if fixed[a] {
                continue;
            }
            w[a] *= scale;
            if w[a] < m[a] {
                w[a] = m[a];
                fixed[a] = true;
                violated = true;
            } else if w[a] > b[a] {
                w[a] = b[a];
                fixed[a] = true;
                violated = true;
            }
        }
        if !violated {
            return Ok(w);
        }
    }
    unreachable!("each pass fixes at least one asset");
}

/// Normalize every time step of a strategy against the problem bounds.
pub fn normalize_strategy(
    strategy: &Strategy,
    problem: &DpoProblem,
) -> Result<Strategy, AnalyticsError> {
    let mut weights = Array2::zeros((problem.n_t(), problem.n_a()));
    for t in 0..problem.n_t() {
        let row: Vec<f64> = strategy.weights.row(t).to_vec();
        let normalized = normalize_weights(&row, &problem.m, &problem.b)?;
        for (a, v) in normalized.into_iter().enumerate() {
            weights[[t, a]] = v;
        }
    }
    Ok(Strategy {
        weights,
        normalized: true,
        source_bits: strategy.source_bits.clone(),
    })
}

/// Financial scores of a normalized strategy.
#[derive(Debug, Clone, Serialize)]
pub struct FinancialReport {
    /// Annualized Sharpe ratio; `None` when volatility is zero.
    pub ann_sharpe: Option<f64>,
    /// (F - C) * 365 / (n_t * delta_t), fraction per year.
    pub ann_eff_return: f64,
    /// sqrt(365 / (delta_t * n_t)) * sqrt(delta_t * R), fraction per year.
    pub ann_volatility: f64,
    /// F - C over the whole horizon.
    pub eff_return_raw: f64,
    /// sqrt(delta_t * R) over the whole horizon.
    pub volatility_raw: f64,
    /// MARR per rebalance period: 0.2204 * delta_t / 365.
    pub marr_per_period: f64,
    pub rfr: f64,
    /// Effective return of each period on its own (each window is charged
    /// its own transaction costs).
    pub per_period_eff_return: Vec<f64>,
    /// True when every period's effective return clears the per-period MARR.
    pub passes_marr: bool,
}

/// Score a normalized strategy: effective return, volatility, Sharpe, MARR.
pub fn financial_scores(
    strategy: &Strategy,
    problem: &DpoProblem,
    rfr: f64,
) -> Result<FinancialReport, AnalyticsError> {
    if !strategy.normalized {
        return Err(AnalyticsError::NotNormalized);
    }
    let terms = crate::model::period_terms(&strategy.weights, problem)?;
    let delta_t = problem.tensors.delta_t as f64;
    let n_t = problem.n_t() as f64;

    let per_period_eff_return: Vec<f64> =
        terms.iter().map(|p| p.return_t - p.cost_t).collect();
    let eff_return_raw: f64 = per_period_eff_return.iter().sum();
    let risk: f64 = terms.iter().map(|p| p.risk_t).sum();
    let volatility_raw = (delta_t * risk).sqrt();

    let ann_eff_return = eff_return_raw * 365.0 / (n_t * delta_t);
    let ann_volatility = (365.0 / (delta_t * n_t)).sqrt() * volatility_raw;
    let ann_sharpe = if ann_volatility > 0.0 {
        Some((ann_eff_return - rfr) / ann_volatility)
    } else {
        None
    };
    let marr_per_period = MARR_ANNUAL * delta_t / 365.0;
    let passes_marr = per_period_eff_return
        .iter()
        .all(|&r| r >= marr_per_period);
    Ok(FinancialReport {
        ann_sharpe,
        ann_eff_return,
        ann_volatility,
        eff_return_raw,
        volatility_raw,
        marr_per_period,
        rfr,
        per_period_eff_return,
        passes_marr,
    })
}

/// One solved frontier point.
#[derive(Debug, Clone, Serialize)]
pub struct FrontierPoint {
    pub volatility: f64,
    pub expected_return: f64,
    pub weights: Vec<f64>,
}

/// Feasible portfolio with extreme expected return, by greedy fill.
fn extreme_return_portfolio(mu: &[f64], m: &[f64], b: &[f64], maximize: bool) -> Vec<f64> {
    let n = mu.len();
    let mut w: Vec<f64> = m.to_vec();
    let mut remaining = 1.0 - m.iter().sum::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let cmp = mu[i].partial_cmp(&mu[j]).expect("finite returns");
        if maximize {
            cmp.reverse()
        } else {
            cmp
        }
    });
    for a in order {
        if remaining <= 0.0 {
            break;
        }
        let room = (b[a] - m[a]).min(remaining);
        w[a] += room;
        remaining -= room;
    }
    w
}

/// Solve `sum_i clamp(c_i - l, m_i, b_i) = 1` for `l` exactly. The sum is a
/// piecewise-linear nonincreasing function of `l` whose breakpoints are
/// `c_i - b_i` and `c_i - m_i`; walking the sorted breakpoints finds the
/// crossing segment and the root is linear within it.
fn solve_capped_sum(c: &[f64], m: &[f64], b: &[f64]) -> f64 {
    let n = c.len();
    let mut points: Vec<f64> = Vec::with_capacity(2 * n);
    for i in 0..n {
        points.push(c[i] - b[i]);
        points.push(c[i] - m[i]);
    }
    points.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));

    let sum_at = |l: f64| -> f64 {
        (0..n).map(|i| (c[i] - l).clamp(m[i], b[i])).sum()
    };
    // Below the first breakpoint everything sits at its upper bound.
    if sum_at(points[0]) <= 1.0 {
        // sum(b) == 1 exactly (feasibility guarantees sum(b) >= 1).
        return points[0];
    }
    for window in points.windows(2) {
        let (lo, hi) = (window[0], window[1]);
        let (s_lo, s_hi) = (sum_at(lo), sum_at(hi));
        if s_lo >= 1.0 && s_hi <= 1.0 {
            if s_lo - s_hi <= 0.0 {
                return lo;
            }
            return lo + (s_lo - 1.0) / (s_lo - s_hi) * (hi - lo);
        }
    }
    // Past the last breakpoint everything is pinned at its lower bound.
    *points.last().expect("nonempty")
}

/// Dense Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Exact optimum on the face suggested by `w`: bound-active coordinates stay
/// pinned and the free ones solve the equality-constrained problem through
/// its KKT system. `None` when the face is degenerate or the candidate
/// leaves the box.
fn polish_active_set(
    w: &[f64],
    mu: &[f64],
    sigma: &Array2<f64>,
    m: &[f64],
    b: &[f64],
    target: f64,
) -> Option<Vec<f64>> {
    let n = w.len();
    let free: Vec<usize> = (0..n)
        .filter(|&i| w[i] > m[i] + 1e-10 && w[i] < b[i] - 1e-10)
        .collect();
    if free.is_empty() {
        return None;
    }
    let f = free.len();
    let pinned_sum: f64 = (0..n).filter(|i| !free.contains(i)).map(|i| w[i]).sum();
    let pinned_ret: f64 = (0..n)
        .filter(|i| !free.contains(i))
        .map(|i| w[i] * mu[i])
        .sum();

    // KKT: [2 Sigma_FF, 1, mu_F; 1', 0, 0; mu_F', 0, 0].
    let dim = f + 2;
    let mut a = vec![vec![0.0; dim]; dim];
    let mut rhs = vec![0.0; dim];
    for (row, &i) in free.iter().enumerate() {
        for (col, &j) in free.iter().enumerate() {
            a[row][col] = 2.0 * sigma[[i, j]];
        }
        a[row][f] = 1.0;
        a[row][f + 1] = mu[i];
        let pinned_grad: f64 = (0..n)
            .filter(|j| !free.contains(j))
            .map(|j| sigma[[i, j]] * w[j])
            .sum();
        rhs[row] = -2.0 * pinned_grad;
    }
    for (col, _) in free.iter().enumerate() {
        a[f][col] = 1.0;
        a[f + 1][col] = mu[free[col]];
    }
    rhs[f] = 1.0 - pinned_sum;
    rhs[f + 1] = target - pinned_ret;

    let solution = solve_dense(a, rhs)?;
    let mut out = w.to_vec();
    for (k, &i) in free.iter().enumerate() {
        let xi = solution[k];
        if xi < m[i] - 1e-12 || xi > b[i] + 1e-12 {
            return None;
        }
        out[i] = xi.clamp(m[i], b[i]);
    }
    Some(out)
}

/// Exact projection onto `{sum w = 1} ∩ {mu . w = target} ∩ box`, through
/// the two-multiplier dual: the projection has the closed form
/// `x_i = clamp(w0_i - l1 - l2 * mu_i)`. The unit-sum multiplier is solved
/// exactly for any `l2` by a breakpoint walk, and the remaining return
/// residual is monotone in `l2`, so one bisection pins it. Assumes the
/// target is achievable (callers only pass returns inside the feasible
/// range).
fn project_feasible(w0: &[f64], mu: &[f64], target: f64, m: &[f64], b: &[f64]) -> Vec<f64> {
    let n = w0.len();
    let point_at = |l2: f64| -> Vec<f64> {
        let c: Vec<f64> = (0..n).map(|i| w0[i] - l2 * mu[i]).collect();
        let l1 = solve_capped_sum(&c, m, b);
        (0..n).map(|i| (c[i] - l1).clamp(m[i], b[i])).collect()
    };
    let ret_residual = |l2: f64| -> f64 {
        let x = point_at(l2);
        x.iter().zip(mu).map(|(xi, mi)| xi * mi).sum::<f64>() - target
    };

    let spread = mu
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if spread.1 - spread.0 <= 1e-15 {
        // Equal returns: the return constraint is implied by the unit sum.
        return point_at(0.0);
    }
    // Bracket l2 by doubling until the residual changes sign, then bisect.
    // The residual is nonincreasing in l2 (mass shifts toward low-return
    // assets as l2 grows).
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..60 {
        if ret_residual(lo) <= 0.0 {
            lo *= 2.0;
        } else {
            break;
        }
    }
    for _ in 0..60 {
        if ret_residual(hi) >= 0.0 {
            hi *= 2.0;
        } else {
            break;
        }
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if ret_residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    point_at(0.5 * (lo + hi))
}

/// Minimum-variance portfolio at a pinned expected return: accelerated
/// projected gradient descent on `w' Sigma w` where each iterate is
/// projected exactly onto the feasible set (unit sum, pinned return, box).
/// Stationarity is certified through the projected-gradient mapping; a
/// residual above 1e-6 is reported as a stall.
pub fn min_variance_portfolio(
    mu: &[f64],
    sigma: &Array2<f64>,
    m: &[f64],
    b: &[f64],
    target: f64,
    start: &[f64],
) -> Result<Vec<f64>, AnalyticsError> {
    let n = mu.len();
    let tolerance = 1e-6;
    let lipschitz = 2.0
        * (0..n)
            .map(|i| (0..n).map(|j| sigma[[i, j]].abs()).sum::<f64>())
            .fold(0.0, f64::max);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let gradient = |w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| 2.0 * (0..n).map(|j| sigma[[i, j]] * w[j]).sum::<f64>())
            .collect()
    };
    let objective = |w: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += w[i] * sigma[[i, j]] * w[j];
            }
        }
        acc
    };

    let mapping_gap = |w: &[f64]| -> f64 {
        let g = gradient(w);
        let trial: Vec<f64> = (0..n).map(|i| w[i] - step * g[i]).collect();
        let mapped = project_feasible(&trial, mu, target, m, b);
        w.iter()
            .zip(&mapped)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max)
    };

    // Nesterov momentum with objective-based restarts, interleaved with an
    // active-set polish: once the gradient phase settles on a face, the
    // exact face optimum comes from one small linear solve.
    let mut w = project_feasible(start, mu, target, m, b);
    let mut value = objective(&w);
    'outer: for _round in 0..6 {
        let mut carry = w.clone();
        let mut momentum = 1.0f64;
        for iteration in 0..600usize {
            let g = gradient(&carry);
            let trial: Vec<f64> = (0..n).map(|i| carry[i] - step * g[i]).collect();
            let next = project_feasible(&trial, mu, target, m, b);
            let next_value = objective(&next);
            if next_value > value {
                // Momentum overshot; restart from the best point.
                carry = w.clone();
                momentum = 1.0;
                continue;
            }
            let moved = w
                .iter()
                .zip(&next)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            carry = next
                .iter()
                .zip(&w)
                .map(|(x1, x0)| x1 + (momentum - 1.0) / next_momentum * (x1 - x0))
                .collect();
            momentum = next_momentum;
            w = next;
            value = next_value;
            if moved <= 1e-15 {
                break;
            }
            if iteration % 32 == 31 && mapping_gap(&w) <= 0.1 * tolerance {
                break 'outer;
            }
        }
        if mapping_gap(&w) <= 0.1 * tolerance {
            break;
        }
        if let Some(polished) = polish_active_set(&w, mu, sigma, m, b, target) {
            let polished_value = objective(&polished);
            if polished_value <= value + 1e-15 {
                w = polished;
                value = polished_value;
            }
        }
        if mapping_gap(&w) <= 0.1 * tolerance {
            break;
        }
    }

    // KKT surrogate: feasibility plus the projected-gradient mapping norm
    // |w - P(w - step * grad)| / step, in gradient units.
    let sum_w: f64 = w.iter().sum();
    let ret_w: f64 = w.iter().zip(mu).map(|(wi, mi)| wi * mi).sum();
    let g = gradient(&w);
    let trial: Vec<f64> = (0..n).map(|i| w[i] - step * g[i]).collect();
    let mapped = project_feasible(&trial, mu, target, m, b);
    let mapping_norm = w
        .iter()
        .zip(&mapped)
        .map(|(a, c)| (a - c).abs())
        .fold(0.0, f64::max)
        / step;
    let bounds_violation = (0..n)
        .map(|i| (m[i] - w[i]).max(w[i] - b[i]).max(0.0))
        .fold(0.0, f64::max);
    let residual = (sum_w - 1.0)
        .abs()
        .max((ret_w - target).abs())
        .max(bounds_violation)
        .max(mapping_norm * step);
    if residual > tolerance {
        return Err(AnalyticsError::SolverStall {
            residual,
            tolerance,
        });
    }
    Ok(w)
}

/// The ideal efficient frontier for one investment window, ignoring
/// transaction costs: for `n_points` target returns spanning the achievable
/// range, the minimum-variance portfolio subject to the unit sum and the
/// per-asset bounds. Volatility is non-decreasing in return above the
/// minimum-variance point.
pub fn efficient_frontier(
    mu: &[f64],
    sigma: &Array2<f64>,
    m: &[f64],
    b: &[f64],
    n_points: usize,
) -> Result<Vec<FrontierPoint>, AnalyticsError> {
    let n = mu.len();
    if sigma.dim() != (n, n) || m.len() != n || b.len() != n {
        return Err(AnalyticsError::LengthMismatch(n, sigma.nrows()));
    }
    let feasible = m.iter().zip(b).all(|(mi, bi)| mi <= bi)
        && m.iter().sum::<f64>() <= 1.0
        && b.iter().sum::<f64>() >= 1.0;
    if !feasible {
        return Err(AnalyticsError::InfeasibleBounds);
    }
    let w_min = extreme_return_portfolio(mu, m, b, false);
    let w_max = extreme_return_portfolio(mu, m, b, true);
    let ret_lo: f64 = w_min.iter().zip(mu).map(|(w, r)| w * r).sum();
    let ret_hi: f64 = w_max.iter().zip(mu).map(|(w, r)| w * r).sum();

    let degenerate = (ret_hi - ret_lo).abs() < 1e-12;
    let count = if degenerate { 1 } else { n_points.max(1) };
    let mut points = Vec::with_capacity(count);
    for k in 0..count {
        let frac = if count == 1 {
            0.0
        } else {
            k as f64 / (count - 1) as f64
        };
        let target = ret_lo + frac * (ret_hi - ret_lo);
        // Convex combination of the two extreme portfolios: box-feasible,
        // unit sum, and exactly on-target return.
        let start: Vec<f64> = w_min
            .iter()
            .zip(&w_max)
            .map(|(lo, hi)| lo + frac * (hi - lo))
            .collect();
        let w = min_variance_portfolio(mu, sigma, m, b, target, &start)?;
        let mut variance = 0.0;
        for i in 0..n {
            for j in 0..n {
                variance += w[i] * sigma[[i, j]] * w[j];
            }
        }
        points.push(FrontierPoint {
            volatility: variance.max(0.0).sqrt(),
            expected_return: target,
            weights: w,
        });
    }
    Ok(points)
}

/// Cost distribution of a pool of evaluated bit strings.
#[derive(Debug, Clone, Serialize)]
pub struct CostDistribution {
    /// Sorted ascending.
    pub costs: Vec<f64>,
    /// Mean cost of the pool: the noise offset.
    pub offset: f64,
    /// Fraction of the pool strictly below the offset.
    pub pct_below_offset: f64,
    pub min_cost: f64,
}

/// Evaluate `n` uniformly random bit strings; the mean cost is the offset
/// that sampled solutions are benchmarked against.
pub fn random_baseline(q: &QuadraticForm, n: u64, seed: u64) -> CostDistribution {
    assert!(n >= 1, "baseline needs at least one draw");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut costs = Vec::with_capacity(n as usize);
    let mut bits: Bits = vec![0; q.n_vars];
    for _ in 0..n {
        for bit in bits.iter_mut() {
            *bit = rng.gen::<bool>() as u8;
        }
        costs.push(q.evaluate_cost(&bits).expect("matching length"));
    }
    costs.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    let offset = costs.iter().sum::<f64>() / costs.len() as f64;
    let below = costs.iter().take_while(|&&c| c < offset).count();
    CostDistribution {
        min_cost: costs[0],
        pct_below_offset: below as f64 / n as f64,
        offset,
        costs,
    }
}

/// Count-weighted fraction of sampled strings with cost strictly below the
/// offset.
pub fn pct_below_offset(
    samples: &SampleSet,
    q: &QuadraticForm,
    offset: f64,
) -> Result<f64, AnalyticsError> {
    if samples.is_empty() {
        return Err(AnalyticsError::EmptySampleSet);
    }
    let mut below = 0u64;
    for (bits, &count) in &samples.entries {
        if q.evaluate_cost(bits)? < offset {
            below += count;
        }
    }
    Ok(below as f64 / samples.total as f64)
}

/// Adjacency view of a binary form for incremental single-flip deltas.
struct FlipTable {
    linear: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl FlipTable {
    fn new(q: &QuadraticForm) -> Self {
        let mut adjacency = vec![Vec::new(); q.n_vars];
        for (&(i, j), &v) in &q.quadratic {
            adjacency[i].push((j, v));
            adjacency[j].push((i, v));
        }
        Self {
            linear: q.linear.clone(),
            adjacency,
        }
    }

    /// Cost change of flipping bit k in `bits`.
    fn delta(&self, bits: &[u8], k: usize) -> f64 {
        let sign = if bits[k] == 0 { 1.0 } else { -1.0 };
        let mut acc = self.linear[k];
        for &(j, v) in &self.adjacency[k] {
            acc += v * bits[j] as f64;
        }
        sign * acc
    }
}

/// Global minimum of a binary form by full enumeration (Gray-code order with
/// incremental deltas; candidates are re-evaluated exactly before they are
/// accepted, so accumulated drift cannot corrupt the result). Ties resolve
/// to the lexicographically smallest bit string.
pub fn exhaustive_solve(q: &QuadraticForm) -> Result<(Bits, f64), AnalyticsError> {
    let n = q.n_vars;
    if n > EXHAUSTIVE_CAP {
        return Err(AnalyticsError::TooLarge {
            n_vars: n,
            cap: EXHAUSTIVE_CAP,
        });
    }
    let mut bits: Bits = vec![0; n];
    if n == 0 {
        return Ok((bits, q.constant));
    }
    let table = FlipTable::new(q);
    let mut best_bits = bits.clone();
    let mut best = q.evaluate_cost(&bits)?;
    let mut running = best;
    for k in 1u64..(1u64 << n) {
        let flip = k.trailing_zeros() as usize;
        running += table.delta(&bits, flip);
        bits[flip] ^= 1;
        if running <= best + 1e-9 * (1.0 + best.abs()) {
            let exact = q.evaluate_cost(&bits)?;
            if exact < best || (exact == best && bits < best_bits) {
                best = exact;
                best_bits.copy_from_slice(&bits);
            }
        }
    }
    Ok((best_bits, best))
}

/// Single-flip Metropolis annealing with geometric cooling. Returns the best
/// configuration ever visited; deterministic under `seed`.
pub fn simulated_annealing(
    q: &QuadraticForm,
    sweeps: u64,
    seed: u64,
) -> Result<(Bits, f64), AnalyticsError> {
    if sweeps == 0 {
        return Err(AnalyticsError::ZeroBudget);
    }
    let n = q.n_vars;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits: Bits = (0..n).map(|_| rng.gen::<bool>() as u8).collect();
    if n == 0 {
        return Ok((bits, q.constant));
    }
    let table = FlipTable::new(q);
    // Initial temperature of the order of the largest single-flip move.
    let t0 = (0..n)
        .map(|i| {
            q.linear[i].abs()
                + table.adjacency[i].iter().map(|(_, v)| v.abs()).sum::<f64>()
        })
        .fold(0.0, f64::max)
        .max(1e-12);
    let t_final = t0 * 1e-6;

    let mut current = q.evaluate_cost(&bits)?;
    let mut best = current;
    let mut best_bits = bits.clone();
    for sweep in 0..sweeps {
        let frac = if sweeps == 1 {
            0.0
        } else {
            sweep as f64 / (sweeps - 1) as f64
        };
        let temperature = t0 * (t_final / t0).powf(frac);
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            let delta = table.delta(&bits, k);
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / temperature).exp() {
                bits[k] ^= 1;
                current += delta;
                if current < best - 1e-12 {
                    // Re-evaluate exactly so drift never leaks into the result.
                    let exact = q.evaluate_cost(&bits)?;
                    if exact < best {
                        best = exact;
                        best_bits.copy_from_slice(&bits);
                    }
                    current = exact;
                }
            }
        }
    }
    Ok((best_bits, best))
}
