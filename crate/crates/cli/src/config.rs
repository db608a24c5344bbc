//! Problem configuration file: dimensions, per-asset bounds and fees, term
//! weights, and market-data settings.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use qdpo_core::market::{load_prices, DayConvention, MarketTensors};
use qdpo_core::model::DpoProblem;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetConfig {
    pub ticker: String,
    /// Minimum investment fraction.
    pub m: f64,
    /// Maximum investment fraction.
    pub b: f64,
    /// Transaction fee rate.
    pub nu: f64,
}

fn default_rfr() -> f64 {
    qdpo_core::analytics::DEFAULT_RFR
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Price CSV, relative to the config file's directory when not absolute.
    pub prices: PathBuf,
    pub assets: Vec<AssetConfig>,
    pub n_r: usize,
    pub n_t: usize,
    pub delta_t: u32,
    pub epsilon: f64,
    pub gamma: f64,
    pub rho: f64,
    #[serde(default)]
    pub omega0: Option<Vec<f64>>,
    #[serde(default)]
    pub day_convention: DayConvention,
    #[serde(default = "default_rfr")]
    pub rfr: f64,
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ProblemConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(config)
    }

    pub fn prices_path(&self, config_path: &Path) -> PathBuf {
        if self.prices.is_absolute() {
            self.prices.clone()
        } else {
            config_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&self.prices)
        }
    }

    pub fn tickers(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.ticker.clone()).collect()
    }

    /// Ingest prices and derive the market tensors.
    pub fn load_tensors(&self, config_path: &Path) -> Result<MarketTensors> {
        let prices = load_prices(self.prices_path(config_path), &self.tickers())
            .context("loading prices")?;
        let tensors = MarketTensors::from_prices(
            &prices,
            self.delta_t,
            self.n_t,
            self.epsilon,
            self.day_convention,
        )
        .context("deriving market tensors")?;
        Ok(tensors)
    }

    /// Assemble the full problem instance from already-derived tensors.
    pub fn problem_from_tensors(&self, tensors: MarketTensors) -> Result<DpoProblem> {
        let m = self.assets.iter().map(|a| a.m).collect();
        let b = self.assets.iter().map(|a| a.b).collect();
        let nu = self.assets.iter().map(|a| a.nu).collect();
        let problem = DpoProblem::new(
            self.n_r,
            m,
            b,
            nu,
            self.gamma,
            self.rho,
            tensors,
            self.omega0.clone(),
        )
        .context("building problem instance")?;
        Ok(problem)
    }
}
