//! Run configuration, read from TOML with unknown keys rejected.

use std::path::{Path, PathBuf};

use arbband::{ArbitrageParams, GridSpec, MarketParams, NoiseModel, Scheme};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    pub arbitrage: ArbitrageParams,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub price: PriceSection,
    #[serde(default)]
    pub band: BandSection,
    #[serde(default)]
    pub usurface: USurfaceSection,
    #[serde(default)]
    pub covpde: CovPdeSection,
    #[serde(default)]
    pub smile: SmileSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub noise_check: NoiseCheckSection,
    #[serde(default)]
    pub xval: XvalSection,
}

/// OU noise with `α = 1` and `D = 0.1`.
fn default_noise() -> NoiseModel {
    NoiseModel::OrnsteinUhlenbeck {
        alpha: 1.0,
        k: 0.2_f64.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_space: usize,
    pub n_time: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// Log-price bounds; both or neither. By default the grid is centred on
    /// `ln K` and spans five standard deviations at the longest maturity.
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_space: 401,
            n_time: 800,
            scheme: Scheme::Adi,
            x_min: None,
            x_max: None,
        }
    }
}

impl GridConfig {
    pub fn spec(&self, mp: &MarketParams) -> arbband::Result<GridSpec> {
        match (self.x_min, self.x_max) {
            (Some(lo), Some(hi)) => GridSpec::new(lo, hi, self.n_space, self.n_time, self.scheme),
            (None, None) => GridSpec::for_market(mp, self.n_space, self.n_time, self.scheme),
            _ => Err(arbband::Error::Config(
                "grid needs both x_min and x_max, or neither".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    20_240_101
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            output_dir: default_output_dir(),
            seed: default_seed(),
            threads: 0,
        }
    }
}

/// Spot list; empty means `market.spot`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSection {
    #[serde(default)]
    pub spots: Vec<f64>,
}

/// Lists left empty fall back to `market.spot` and `market.tau`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    #[serde(default)]
    pub spots: Vec<f64>,
    #[serde(default)]
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    ClosedForm,
    Quadrature,
    Pde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct USurfaceSection {
    #[serde(default = "default_surface_spots")]
    pub spots: Vec<f64>,
    #[serde(default = "default_surface_taus")]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub method: Method,
    /// Check the closed form against quadrature on the same grid first.
    #[serde(default = "yes")]
    pub gate: bool,
    #[serde(default = "default_quad_tolerance")]
    pub gate_tolerance: f64,
}

fn yes() -> bool {
    true
}

fn default_quad_tolerance() -> f64 {
    1e-4
}

fn default_surface_spots() -> Vec<f64> {
    (0..40).map(|i| 5.0 + 35.0 * i as f64 / 39.0).collect()
}

fn default_surface_taus() -> Vec<f64> {
    (0..20).map(|i| 0.05 + 0.95 * i as f64 / 19.0).collect()
}

impl Default for USurfaceSection {
    fn default() -> Self {
        Self {
            spots: default_surface_spots(),
            taus: default_surface_taus(),
            method: Method::ClosedForm,
            gate: true,
            gate_tolerance: default_quad_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovPdeSection {
    /// Empty means `[market.tau]`.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Write every `R(S, Y)` node, not only the diagonal.
    #[serde(default = "yes")]
    pub write_surface: bool,
}

impl Default for CovPdeSection {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            write_surface: true,
        }
    }
}

/// Strikes at `market.spot` and `market.tau`; `None` spans `K/S ∈ [0.5, 2]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileSection {
    #[serde(default)]
    pub strikes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_mc_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_mc_paths")]
    pub n_paths: usize,
}

fn default_mc_epsilons() -> Vec<f64> {
    vec![0.1, 0.03, 0.01]
}

fn default_mc_paths() -> usize {
    100_000
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            epsilons: default_mc_epsilons(),
            n_paths: default_mc_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCheckSection {
    #[serde(default = "default_check_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_check_tau")]
    pub tau: f64,
    #[serde(default = "default_check_paths")]
    pub n_paths: usize,
    /// Allowed `|ratio − 1|` at the smallest epsilon.
    #[serde(default = "default_check_tolerance")]
    pub tolerance: f64,
    /// Length of the path used for the empirical intensity; 0 skips it.
    #[serde(default = "default_intensity_samples")]
    pub intensity_samples: usize,
    /// Noise samples written to `noise_path.csv`; 0 skips the file.
    #[serde(default)]
    pub dump_steps: usize,
}

fn default_check_epsilons() -> Vec<f64> {
    vec![0.1, 0.01, 0.001]
}

fn default_check_tau() -> f64 {
    1.0
}

fn default_check_paths() -> usize {
    10_000
}

fn default_check_tolerance() -> f64 {
    0.03
}

fn default_intensity_samples() -> usize {
    1_000_000
}

impl Default for NoiseCheckSection {
    fn default() -> Self {
        Self {
            epsilons: default_check_epsilons(),
            tau: default_check_tau(),
            n_paths: default_check_paths(),
            tolerance: default_check_tolerance(),
            intensity_samples: default_intensity_samples(),
            dump_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XvalSection {
    /// Spot-to-strike ratios at which the routes are compared.
    #[serde(default = "default_xval_moneyness")]
    pub moneyness: Vec<f64>,
    #[serde(default = "default_xval_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_quad_tolerance")]
    pub quad_tolerance: f64,
    #[serde(default = "default_pde_tolerance")]
    pub pde_tolerance: f64,
    #[serde(default = "default_mc_epsilon")]
    pub mc_epsilon: f64,
    #[serde(default = "default_mc_paths")]
    pub mc_paths: usize,
    #[serde(default = "default_mc_tolerance")]
    pub mc_tolerance: f64,
    /// Paths priced both exactly and on the grid.
    #[serde(default = "default_gate_paths")]
    pub gate_paths: usize,
}

fn default_xval_moneyness() -> Vec<f64> {
    (0..=25).map(|i| 0.5 + 1.25 * i as f64 / 25.0).collect()
}

fn default_xval_taus() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_pde_tolerance() -> f64 {
    0.02
}

fn default_mc_epsilon() -> f64 {
    0.01
}

fn default_mc_tolerance() -> f64 {
    0.05
}

fn default_gate_paths() -> usize {
    100
}

impl Default for XvalSection {
    fn default() -> Self {
        Self {
            moneyness: default_xval_moneyness(),
            taus: default_xval_taus(),
            quad_tolerance: default_quad_tolerance(),
            pde_tolerance: default_pde_tolerance(),
            mc_epsilon: default_mc_epsilon(),
            mc_paths: default_mc_paths(),
            mc_tolerance: default_mc_tolerance(),
            gate_paths: default_gate_paths(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Re-checks every parameter set after parsing.
    pub fn validate(&self) -> Result<(), CliError> {
        self.market.validate()?;
        self.arbitrage.validate()?;
        self.noise.validate()?;
        self.grid.spec(&self.market)?;
        let fraction = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} must be > 0, got {v}")))
            }
        };
        fraction(self.usurface.gate_tolerance, "usurface.gate_tolerance")?;
        fraction(self.noise_check.tolerance, "noise_check.tolerance")?;
        fraction(self.xval.quad_tolerance, "xval.quad_tolerance")?;
        fraction(self.xval.pde_tolerance, "xval.pde_tolerance")?;
        fraction(self.xval.mc_tolerance, "xval.mc_tolerance")?;
        Ok(())
    }
}
