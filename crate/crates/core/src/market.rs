//! Price ingestion and derived market tensors.
//!
//! Everything downstream (the QUBO builder, the analytics) consumes the
//! tensors produced here: per-rebalance log returns `mu`, per-window daily
//! return covariances `sigma`, and the growth-adjusted price ratios `phi`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from price ingestion and tensor derivation.
#[derive(Debug, Error)]
pub enum MarketError {
    #[error("failed to read price file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse price file: {0}")]
    Csv(#[from] csv::Error),
    #[error("price file must have columns date,ticker,close; got {0:?}")]
    BadHeader(Vec<String>),
    #[error("row {row}: invalid date {value:?}")]
    BadDate { row: usize, value: String },
    #[error("row {row}: invalid close {value:?}")]
    BadClose { row: usize, value: String },
    #[error("requested ticker {0} not present in file")]
    MissingTicker(String),
    #[error("nonpositive close {close} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: NaiveDate,
        close: f64,
    },
    #[error("duplicate row for {ticker} on {date}")]
    DuplicateRow { ticker: String, date: NaiveDate },
    #[error("{ticker} is missing shared date {date}")]
    CalendarMismatch { ticker: String, date: NaiveDate },
    #[error("requested tickers share no common date range")]
    NoCommonDates,
    #[error("series covers {available} trading days, horizon needs {needed}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("covariance window needs at least 2 observations, got {observations} (delta_t = {delta_t})")]
    WindowTooShort { delta_t: u32, observations: usize },
    #[error("dates must be strictly increasing")]
    UnsortedDates,
    #[error("close matrix shape {rows}x{cols} does not match {days} dates x {assets} tickers")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        days: usize,
        assets: usize,
    },
    #[error("sigma[{t}] is not symmetric positive semidefinite (min eigenvalue {min_eig})")]
    NotPositiveSemidefinite { t: usize, min_eig: f64 },
    #[error("phi[{t}][{a}] = {value} must be strictly positive")]
    NonPositivePhi { t: usize, a: usize, value: f64 },
}

/// How `delta_t` counts days when placing rebalance dates.
///
/// The default is `Calendar`: rebalance t targets `start + t * delta_t`
/// calendar days and falls back to the most recent prior trading day.
/// `Trading` steps `delta_t` rows through the series directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DayConvention {
    #[default]
    Calendar,
    Trading,
}

/// Daily closing prices for a set of assets on a shared calendar.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Row = day, column = asset; strictly positive.
    pub closes: Array2<f64>,
}

impl PriceSeries {
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        closes: Array2<f64>,
    ) -> Result<Self, MarketError> {
        if closes.nrows() != dates.len() || closes.ncols() != tickers.len() {
            return Err(MarketError::ShapeMismatch {
                rows: closes.nrows(),
                cols: closes.ncols(),
                days: dates.len(),
                assets: tickers.len(),
            });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MarketError::UnsortedDates);
        }
        for (s, date) in dates.iter().enumerate() {
            for (a, ticker) in tickers.iter().enumerate() {
                let close = closes[[s, a]];
                if !(close > 0.0) {
                    return Err(MarketError::NonPositivePrice {
                        ticker: ticker.clone(),
                        date: *date,
                        close,
                    });
                }
            }
        }
        Ok(Self {
            tickers,
            dates,
            closes,
        })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }
}

/// Load daily closes for the requested tickers from a `date,ticker,close` CSV.
///
/// The series is restricted to the common date range of the requested
/// tickers; within that range every ticker must quote every shared date.
pub fn load_prices<P: AsRef<Path>>(
    path: P,
    tickers: &[String],
) -> Result<PriceSeries, MarketError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers != ["date", "ticker", "close"] {
        return Err(MarketError::BadHeader(headers));
    }

    let mut by_ticker: BTreeMap<&str, BTreeMap<NaiveDate, f64>> =
        tickers.iter().map(|t| (t.as_str(), BTreeMap::new())).collect();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 2; // 1-based, after header
        let ticker = record.get(1).unwrap_or("").trim();
        let Some(dates) = by_ticker.get_mut(ticker) else {
            continue; // ticker not requested
        };
        let date_str = record.get(0).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|_| {
            MarketError::BadDate {
                row,
                value: date_str.to_string(),
            }
        })?;
        let close_str = record.get(2).unwrap_or("").trim();
        let close: f64 = close_str.parse().map_err(|_| MarketError::BadClose {
            row,
            value: close_str.to_string(),
        })?;
        if !(close > 0.0) {
            return Err(MarketError::NonPositivePrice {
                ticker: ticker.to_string(),
                date,
                close,
            });
        }
        if dates.insert(date, close).is_some() {
            return Err(MarketError::DuplicateRow {
                ticker: ticker.to_string(),
                date,
            });
        }
    }

    for ticker in tickers {
        if by_ticker[ticker.as_str()].is_empty() {
            return Err(MarketError::MissingTicker(ticker.clone()));
        }
    }

    // Common range, then the union of quoted dates inside it. A hole for one
    // ticker on a date another ticker quotes is a calendar mismatch.
    let start = by_ticker
        .values()
        .map(|m| *m.keys().next().expect("nonempty"))
        .max()
        .ok_or(MarketError::NoCommonDates)?;
    let end = by_ticker
        .values()
        .map(|m| *m.keys().next_back().expect("nonempty"))
        .min()
        .ok_or(MarketError::NoCommonDates)?;
    if start > end {
        return Err(MarketError::NoCommonDates);
    }
    let mut shared: BTreeMap<NaiveDate, ()> = BTreeMap::new();
    for dates in by_ticker.values() {
        for date in dates.range(start..=end).map(|(d, _)| *d) {
            shared.insert(date, ());
        }
    }
    let dates: Vec<NaiveDate> = shared.into_keys().collect();

    let mut closes = Array2::zeros((dates.len(), tickers.len()));
    for (a, ticker) in tickers.iter().enumerate() {
        let quotes = &by_ticker[ticker.as_str()];
        for (s, date) in dates.iter().enumerate() {
            match quotes.get(date) {
                Some(&close) => closes[[s, a]] = close,
                None => {
                    return Err(MarketError::CalendarMismatch {
                        ticker: ticker.clone(),
                        date: *date,
                    })
                }
            }
        }
    }

    PriceSeries::new(tickers.to_vec(), dates, closes)
}

/// Day indices of rebalances 0..=n_t into `ps.dates`.
pub fn rebalance_indices(
    ps: &PriceSeries,
    delta_t: u32,
    n_t: usize,
    convention: DayConvention,
) -> Result<Vec<usize>, MarketError> {
    let needed = n_t * delta_t as usize + 1;
    let mut indices = Vec::with_capacity(n_t + 1);
    match convention {
        DayConvention::Trading => {
            if ps.n_days() < needed {
                return Err(MarketError::InsufficientHistory {
                    needed,
                    available: ps.n_days(),
                });
            }
            for t in 0..=n_t {
                indices.push(t * delta_t as usize);
            }
        }
        DayConvention::Calendar => {
            let start = ps.dates[0];
            for t in 0..=n_t {
                let target = start + chrono::Days::new(t as u64 * delta_t as u64);
                if target > *ps.dates.last().expect("nonempty series") {
                    return Err(MarketError::InsufficientHistory {
                        needed,
                        available: ps.n_days(),
                    });
                }
                // Most recent trading day at or before the target date.
                let idx = ps.dates.partition_point(|d| *d <= target) - 1;
                indices.push(idx);
            }
            if indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MarketError::InsufficientHistory {
                    needed,
                    available: ps.n_days(),
                });
            }
        }
    }
    Ok(indices)
}

/// Per-rebalance log returns: `mu[t][a] = ln(P_{t,a} / P_{t-1,a})`, shape N_t x N_a.
pub fn rebalance_returns(
    ps: &PriceSeries,
    delta_t: u32,
    n_t: usize,
    convention: DayConvention,
) -> Result<Array2<f64>, MarketError> {
    let idx = rebalance_indices(ps, delta_t, n_t, convention)?;
    let mut mu = Array2::zeros((n_t, ps.n_assets()));
    for t in 1..=n_t {
        for a in 0..ps.n_assets() {
            mu[[t - 1, a]] = (ps.closes[[idx[t], a]] / ps.closes[[idx[t - 1], a]]).ln();
        }
    }
    Ok(mu)
}

/// Per-window daily-return covariance matrices, one per rebalance period.
///
/// Window t uses the daily log returns strictly after rebalance t-1 up to and
/// including rebalance t, so adjacent windows share only the endpoint price.
/// With the trading-day convention that is exactly `delta_t` observations and
/// the divisor is `delta_t - 1`.
pub fn covariance_matrices(
    ps: &PriceSeries,
    delta_t: u32,
    n_t: usize,
    convention: DayConvention,
) -> Result<Vec<Array2<f64>>, MarketError> {
    if delta_t < 2 {
        return Err(MarketError::WindowTooShort {
            delta_t,
            observations: delta_t as usize,
        });
    }
    let idx = rebalance_indices(ps, delta_t, n_t, convention)?;
    let n_a = ps.n_assets();
    let mut out = Vec::with_capacity(n_t);
    for t in 1..=n_t {
        let (lo, hi) = (idx[t - 1], idx[t]);
        let n_obs = hi - lo;
        if n_obs < 2 {
            return Err(MarketError::WindowTooShort {
                delta_t,
                observations: n_obs,
            });
        }
        // Daily log returns for day s in (lo, hi].
        let mut returns = Array2::zeros((n_obs, n_a));
        for (k, s) in (lo + 1..=hi).enumerate() {
            for a in 0..n_a {
                returns[[k, a]] = (ps.closes[[s, a]] / ps.closes[[s - 1, a]]).ln();
            }
        }
        let mean: Vec<f64> = (0..n_a)
            .map(|a| returns.column(a).sum() / n_obs as f64)
            .collect();
        let mut sigma = Array2::zeros((n_a, n_a));
        for a in 0..n_a {
            for b in a..n_a {
                let mut acc = 0.0;
                for k in 0..n_obs {
                    acc += (returns[[k, a]] - mean[a]) * (returns[[k, b]] - mean[b]);
                }
                let cov = acc / (n_obs as f64 - 1.0);
                sigma[[a, b]] = cov;
                sigma[[b, a]] = cov;
            }
        }
        out.push(sigma);
    }
    Ok(out)
}

/// Growth-adjusted price ratios `phi[t][a] = P_{t,a} / (g * P_{t-1,a})` and
/// the growth factor `g = (1 + epsilon)^(delta_t / 365)`.
pub fn price_dynamics(
    ps: &PriceSeries,
    delta_t: u32,
    n_t: usize,
    epsilon: f64,
    convention: DayConvention,
) -> Result<(Array2<f64>, f64), MarketError> {
    let idx = rebalance_indices(ps, delta_t, n_t, convention)?;
    let g = (1.0 + epsilon).powf(delta_t as f64 / 365.0);
    let mut phi = Array2::zeros((n_t, ps.n_assets()));
    for t in 1..=n_t {
        for a in 0..ps.n_assets() {
            phi[[t - 1, a]] = ps.closes[[idx[t], a]] / (g * ps.closes[[idx[t - 1], a]]);
        }
    }
    Ok((phi, g))
}

/// The derived tensors a `DpoProblem` is built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketTensors {
    /// Rebalance-period log returns, N_t x N_a.
    pub mu: Array2<f64>,
    /// One daily-return covariance matrix per rebalance period.
    pub sigma: Vec<Array2<f64>>,
    /// Growth-adjusted price ratios, N_t x N_a.
    pub phi: Array2<f64>,
    /// g = (1 + epsilon)^(delta_t / 365).
    pub growth_factor: f64,
    /// Days between rebalances.
    pub delta_t: u32,
}

impl MarketTensors {
    /// Validating constructor for hand-built tensors.
    pub fn new(
        mu: Array2<f64>,
        sigma: Vec<Array2<f64>>,
        phi: Array2<f64>,
        growth_factor: f64,
        delta_t: u32,
    ) -> Result<Self, MarketError> {
        let (n_t, n_a) = mu.dim();
        if phi.dim() != (n_t, n_a) || sigma.len() != n_t {
            return Err(MarketError::ShapeMismatch {
                rows: phi.nrows(),
                cols: phi.ncols(),
                days: n_t,
                assets: n_a,
            });
        }
        for (t, s) in sigma.iter().enumerate() {
            if s.dim() != (n_a, n_a) {
                return Err(MarketError::ShapeMismatch {
                    rows: s.nrows(),
                    cols: s.ncols(),
                    days: n_a,
                    assets: n_a,
                });
            }
            let asym = (0..n_a)
                .flat_map(|i| (0..n_a).map(move |j| (i, j)))
                .any(|(i, j)| s[[i, j]] != s[[j, i]]);
            if asym {
                return Err(MarketError::NotPositiveSemidefinite {
                    t,
                    min_eig: f64::NAN,
                });
            }
            let min_eig = min_symmetric_eigenvalue(s);
            if min_eig < -1e-9 {
                return Err(MarketError::NotPositiveSemidefinite { t, min_eig });
            }
        }
        for t in 0..n_t {
            for a in 0..n_a {
                if !(phi[[t, a]] > 0.0) {
                    return Err(MarketError::NonPositivePhi {
                        t,
                        a,
                        value: phi[[t, a]],
                    });
                }
            }
        }
        Ok(Self {
            mu,
            sigma,
            phi,
            growth_factor,
            delta_t,
        })
    }

    /// Derive all tensors from a price series.
    pub fn from_prices(
        ps: &PriceSeries,
        delta_t: u32,
        n_t: usize,
        epsilon: f64,
        convention: DayConvention,
    ) -> Result<Self, MarketError> {
        let mu = rebalance_returns(ps, delta_t, n_t, convention)?;
        let sigma = covariance_matrices(ps, delta_t, n_t, convention)?;
        let (phi, g) = price_dynamics(ps, delta_t, n_t, epsilon, convention)?;
        Self::new(mu, sigma, phi, g, delta_t)
    }

    pub fn n_t(&self) -> usize {
        self.mu.nrows()
    }

    pub fn n_a(&self) -> usize {
        self.mu.ncols()
    }
}

/// Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
pub fn min_symmetric_eigenvalue(matrix: &Array2<f64>) -> f64 {
    let n = matrix.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut m = matrix.clone();
    for _ in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += m[[p, q]] * m[[p, q]];
                }
            }
        }
        if off <= 1e-30 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                if m[[p, q]].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[[i, i]]).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn write_csv(rows: &[(&str, &str, f64)]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,ticker,close").unwrap();
        for (d, t, c) in rows {
            writeln!(f, "{d},{t},{c}").unwrap();
        }
        f
    }

    fn constant_series(n_days: usize, n_assets: usize, price: f64) -> PriceSeries {
        let dates: Vec<NaiveDate> = (0..n_days)
            .map(|k| date("2023-01-01") + chrono::Days::new(k as u64))
            .collect();
        let tickers = (0..n_assets).map(|a| format!("T{a}")).collect();
        PriceSeries::new(
            tickers,
            dates,
            Array2::from_elem((n_days, n_assets), price),
        )
        .unwrap()
    }

    #[test]
    fn load_two_tickers_three_dates() {
        let f = write_csv(&[
            ("2023-01-01", "AAA", 10.0),
            ("2023-01-02", "AAA", 11.0),
            ("2023-01-03", "AAA", 12.0),
            ("2023-01-01", "BBB", 20.0),
            ("2023-01-02", "BBB", 21.0),
            ("2023-01-03", "BBB", 22.0),
        ]);
        let ps = load_prices(f.path(), &["AAA".into(), "BBB".into()]).unwrap();
        assert_eq!(ps.n_days(), 3);
        assert_eq!(ps.n_assets(), 2);
        assert_eq!(ps.closes[[1, 1]], 21.0);
        assert_eq!(ps.dates[2], date("2023-01-03"));
    }

    #[test]
    fn load_missing_ticker_errors() {
        let f = write_csv(&[("2023-01-01", "AAA", 10.0)]);
        let err = load_prices(f.path(), &["AAA".into(), "ZZZ".into()]).unwrap_err();
        assert!(matches!(err, MarketError::MissingTicker(t) if t == "ZZZ"));
    }

    #[test]
    fn load_calendar_hole_errors() {
        // BBB is missing the middle date the others quote.
        let f = write_csv(&[
            ("2023-01-01", "AAA", 10.0),
            ("2023-01-02", "AAA", 11.0),
            ("2023-01-03", "AAA", 12.0),
            ("2023-01-01", "BBB", 20.0),
            ("2023-01-03", "BBB", 22.0),
        ]);
        let err = load_prices(f.path(), &["AAA".into(), "BBB".into()]).unwrap_err();
        assert!(
            matches!(err, MarketError::CalendarMismatch { ticker, date: d }
                if ticker == "BBB" && d == date("2023-01-02"))
        );
    }

    #[test]
    fn load_trims_to_common_range() {
        // AAA has an extra trailing date; the intersection drops it.
        let f = write_csv(&[
            ("2023-01-01", "AAA", 10.0),
            ("2023-01-02", "AAA", 11.0),
            ("2023-01-03", "AAA", 12.0),
            ("2023-01-01", "BBB", 20.0),
            ("2023-01-02", "BBB", 21.0),
        ]);
        let ps = load_prices(f.path(), &["AAA".into(), "BBB".into()]).unwrap();
        assert_eq!(ps.n_days(), 2);
    }

    #[test]
    fn load_nonpositive_close_errors() {
        let f = write_csv(&[("2023-01-01", "AAA", 0.0)]);
        let err = load_prices(f.path(), &["AAA".into()]).unwrap_err();
        assert!(matches!(err, MarketError::NonPositivePrice { .. }));
    }

    #[test]
    fn constant_prices_zero_returns() {
        let ps = constant_series(15, 2, 100.0);
        let mu = rebalance_returns(&ps, 7, 2, DayConvention::Calendar).unwrap();
        assert_eq!(mu.dim(), (2, 2));
        assert!(mu.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn doubling_prices_log_two_returns() {
        // Price doubles each rebalance period (trading convention, delta 2).
        let dates: Vec<NaiveDate> = (0..5)
            .map(|k| date("2023-01-01") + chrono::Days::new(k))
            .collect();
        let closes =
            Array2::from_shape_vec((5, 1), vec![1.0, 1.5, 2.0, 3.0, 4.0]).unwrap();
        let ps = PriceSeries::new(vec!["A".into()], dates, closes).unwrap();
        let mu = rebalance_returns(&ps, 2, 2, DayConvention::Trading).unwrap();
        for t in 0..2 {
            assert!((mu[[t, 0]] - 2.0_f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn short_history_errors() {
        let ps = constant_series(10, 1, 50.0);
        let err = rebalance_returns(&ps, 7, 2, DayConvention::Calendar).unwrap_err();
        assert!(matches!(err, MarketError::InsufficientHistory { .. }));
        let err = rebalance_returns(&ps, 7, 2, DayConvention::Trading).unwrap_err();
        assert!(matches!(err, MarketError::InsufficientHistory { .. }));
    }

    #[test]
    fn covariance_constant_prices_is_zero() {
        let ps = constant_series(15, 2, 100.0);
        let sigma = covariance_matrices(&ps, 7, 2, DayConvention::Calendar).unwrap();
        assert_eq!(sigma.len(), 2);
        for s in &sigma {
            assert!(s.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn covariance_matches_textbook_sample_formula() {
        // One asset, daily returns (0.01, -0.01, 0.01) inside a single window.
        let returns = [0.01_f64, -0.01, 0.01];
        let mut closes = vec![100.0_f64];
        for r in returns {
            closes.push(closes.last().unwrap() * r.exp());
        }
        let dates: Vec<NaiveDate> = (0..closes.len())
            .map(|k| date("2023-01-01") + chrono::Days::new(k as u64))
            .collect();
        let ps = PriceSeries::new(
            vec!["A".into()],
            dates,
            Array2::from_shape_vec((closes.len(), 1), closes).unwrap(),
        )
        .unwrap();
        let sigma = covariance_matrices(&ps, 3, 1, DayConvention::Trading).unwrap();

        // Independent textbook oracle: s^2 = sum (x - mean)^2 / (n - 1).
        let mean: f64 = returns.iter().sum::<f64>() / returns.len() as f64;
        let oracle: f64 = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
            / (returns.len() as f64 - 1.0);
        assert!((sigma[0][[0, 0]] - oracle).abs() < 1e-15);
    }

    #[test]
    fn identical_price_paths_fully_correlated() {
        let dates: Vec<NaiveDate> = (0..9)
            .map(|k| date("2023-01-01") + chrono::Days::new(k))
            .collect();
        let path = [100.0, 101.0, 99.5, 102.0, 101.2, 103.0, 102.5, 104.0, 103.1];
        let mut closes = Array2::zeros((9, 2));
        for (s, p) in path.iter().enumerate() {
            closes[[s, 0]] = *p;
            closes[[s, 1]] = *p * 3.0; // scaled copy, identical log returns
        }
        let ps = PriceSeries::new(vec!["A".into(), "B".into()], dates, closes).unwrap();
        let sigma = covariance_matrices(&ps, 4, 2, DayConvention::Trading).unwrap();
        for s in &sigma {
            assert!((s[[0, 1]] - s[[0, 0]]).abs() < 1e-18);
            assert_eq!(s[[0, 1]], s[[1, 0]]);
        }
    }

    #[test]
    fn window_too_short_errors() {
        let ps = constant_series(10, 1, 50.0);
        let err = covariance_matrices(&ps, 1, 2, DayConvention::Trading).unwrap_err();
        assert!(matches!(err, MarketError::WindowTooShort { .. }));
    }

    #[test]
    fn price_dynamics_identity_cases() {
        let ps = constant_series(15, 2, 100.0);
        let (phi, g) = price_dynamics(&ps, 7, 2, 0.0, DayConvention::Calendar).unwrap();
        assert_eq!(g, 1.0);
        assert!(phi.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn price_dynamics_tracks_growth_factor() {
        // P_{t} = g * P_{t-1} exactly -> phi = 1.
        let epsilon = 0.18;
        let delta_t = 2u32;
        let g = (1.0 + epsilon_f(epsilon)).powf(delta_t as f64 / 365.0);
        let daily = g.powf(0.5);
        let dates: Vec<NaiveDate> = (0..5)
            .map(|k| date("2023-01-01") + chrono::Days::new(k))
            .collect();
        let closes: Vec<f64> = (0..5).map(|k| 100.0 * daily.powi(k)).collect();
        let ps = PriceSeries::new(
            vec!["A".into()],
            dates,
            Array2::from_shape_vec((5, 1), closes).unwrap(),
        )
        .unwrap();
        let (phi, _) = price_dynamics(&ps, delta_t, 2, epsilon, DayConvention::Trading).unwrap();
        assert!(phi.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    fn epsilon_f(e: f64) -> f64 {
        e
    }

    #[test]
    fn growth_factor_paper_value() {
        // (1 + 0.18)^(28/365) evaluated at high precision.
        let ps = constant_series(60, 1, 1.0);
        let (_, g) = price_dynamics(&ps, 28, 2, 0.18, DayConvention::Calendar).unwrap();
        assert!((g - 1.0127779471403564).abs() < 1e-12);
        assert!((g - 1.01278).abs() < 5e-6);
    }

    #[test]
    fn windows_tile_without_overlap() {
        // Trading convention: window t covers returns (t-1)*dt+1 ..= t*dt, so
        // consecutive windows share only the endpoint price.
        let ps = constant_series(15, 1, 100.0);
        let idx = rebalance_indices(&ps, 7, 2, DayConvention::Trading).unwrap();
        assert_eq!(idx, vec![0, 7, 14]);
        let idx = rebalance_indices(&ps, 7, 2, DayConvention::Calendar).unwrap();
        assert_eq!(idx, vec![0, 7, 14]); // daily synthetic data: same mapping
    }

    #[test]
    fn calendar_maps_to_prior_trading_day() {
        // Remove one date so the rebalance target is not a trading day.
        let mut dates: Vec<NaiveDate> = (0..16)
            .map(|k| date("2023-01-01") + chrono::Days::new(k))
            .collect();
        dates.remove(7); // 2023-01-08 missing
        let n = dates.len();
        let ps = PriceSeries::new(
            vec!["A".into()],
            dates,
            Array2::from_elem((n, 1), 10.0),
        )
        .unwrap();
        let idx = rebalance_indices(&ps, 7, 2, DayConvention::Calendar).unwrap();
        // Target 2023-01-08 falls back to 2023-01-07 (index 6).
        assert_eq!(idx, vec![0, 6, 13]);
    }

    #[test]
    fn scaling_prices_leaves_tensors_unchanged() {
        let dates: Vec<NaiveDate> = (0..15)
            .map(|k| date("2023-01-01") + chrono::Days::new(k))
            .collect();
        let mut closes = Array2::zeros((15, 2));
        for s in 0..15 {
            closes[[s, 0]] = 100.0 * (1.0 + 0.01 * s as f64);
            closes[[s, 1]] = 50.0 * (1.0 - 0.005 * s as f64);
        }
        let ps1 = PriceSeries::new(
            vec!["A".into(), "B".into()],
            dates.clone(),
            closes.clone(),
        )
        .unwrap();
        let ps2 =
            PriceSeries::new(vec!["A".into(), "B".into()], dates, closes * 7.25).unwrap();
        let t1 = MarketTensors::from_prices(&ps1, 7, 2, 0.18, DayConvention::Calendar).unwrap();
        let t2 = MarketTensors::from_prices(&ps2, 7, 2, 0.18, DayConvention::Calendar).unwrap();
        for (x, y) in t1.mu.iter().zip(t2.mu.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in t1.phi.iter().zip(t2.phi.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (s1, s2) in t1.sigma.iter().zip(t2.sigma.iter()) {
            for (x, y) in s1.iter().zip(s2.iter()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn derived_sigma_is_symmetric_and_psd() {
        let dates: Vec<NaiveDate> = (0..30)
            .map(|k| date("2023-01-01") + chrono::Days::new(k))
            .collect();
        let mut closes = Array2::zeros((30, 3));
        for s in 0..30 {
            let x = s as f64;
            closes[[s, 0]] = 100.0 + 3.0 * (x * 0.7).sin() + 0.5 * x;
            closes[[s, 1]] = 80.0 + 2.0 * (x * 1.3).cos() + 0.2 * x;
            closes[[s, 2]] = 120.0 - 1.5 * (x * 0.4).sin() + 0.1 * x;
        }
        let ps = PriceSeries::new(
            vec!["A".into(), "B".into(), "C".into()],
            dates,
            closes,
        )
        .unwrap();
        let sigma = covariance_matrices(&ps, 9, 3, DayConvention::Trading).unwrap();
        for s in &sigma {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(s[[i, j]], s[[j, i]]); // bitwise symmetric
                }
            }
            assert!(min_symmetric_eigenvalue(s) >= -1e-9);
        }
    }

    #[test]
    fn jacobi_eigenvalues_known_matrix() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let m = Array2::from_shape_vec((2, 2), vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((min_symmetric_eigenvalue(&m) - 1.0).abs() < 1e-12);
    }
}
