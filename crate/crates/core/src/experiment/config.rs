use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circle_map::MapSpec;
use crate::hypothesis::{PreflightSettings, TangencyTolerances};
use crate::noise::DEFAULT_QUADRATURE_NODES;

use super::ExperimentError;

/// Everything an experiment run reads. Every section is optional and has
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// moment-curve sample points (symmetrised)
    #[serde(default)]
    pub q_grid: Option<Vec<f64>>,
    #[serde(default = "default_map")]
    pub map: MapSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub power_iter: PowerIterConfig,
    #[serde(default)]
    pub preflight: PreflightConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub two_point: TwoPointConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub moment: MomentConfig,
    #[serde(default)]
    pub passage: PassageConfig,
    #[serde(default)]
    pub measure_growth: MeasureGrowthConfig,
    #[serde(default)]
    pub dist_hist: DistHistConfig,
}

fn default_map() -> MapSpec {
    MapSpec::ExampleNu { nu: 0.6 }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Range and consistency checks that the type system does not cover.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        self.map.build().map_err(|e| ExperimentError::Config(e.to_string()))?;
        for &t in self.noise.thetas().iter().chain(&self.sweep.thetas) {
            if !(0.0..=0.5).contains(&t) {
                return bad(format!("theta must lie in [0, 0.5], got {t}"));
            }
        }
        if let Some(r) = self.noise.zero_exponent_bracket {
            if !(0.0 < r[0] && r[0] < r[1] && r[1] <= 0.5) {
                return bad(format!("zero_exponent_bracket must satisfy 0 < lo < hi <= 0.5, got {r:?}"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if !self.grid.n.is_power_of_two() || self.grid.n < 256 {
            return bad(format!("grid.n must be a power of two >= 256, got {}", self.grid.n));
        }
        if self.grid.quadrature_nodes < 8 {
            return bad("grid.quadrature_nodes must be >= 8".into());
        }
        if let Some(q) = &self.q_grid {
            if q.iter().any(|v| !v.is_finite() || v.abs() > crate::koopman::Q_MAX) {
                return bad("q_grid values must lie in [-5, 5]".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub theta: Option<f64>,
    /// several noise levels for the per-theta subcommands
    pub thetas: Option<Vec<f64>>,
    /// find the zero-exponent noise level in this bracket instead of using `theta`
    pub zero_exponent_bracket: Option<[f64; 2]>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            theta: Some(0.2),
            thetas: None,
            zero_exponent_bracket: None,
        }
    }
}

impl NoiseConfig {
    pub fn thetas(&self) -> Vec<f64> {
        match (&self.thetas, self.theta) {
            (Some(ts), _) => ts.clone(),
            (None, Some(t)) => vec![t],
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub quadrature_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 2048,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerIterConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIterConfig {
    fn default() -> Self {
        let p = crate::koopman::PowerIteration::default();
        Self {
            tol: p.tol,
            max_iter: p.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreflightConfig {
    pub h2_grid: usize,
    pub h2_k_max: usize,
    pub scan_grid: usize,
    pub delta_tol: f64,
    pub c_min: f64,
    pub h_tol: f64,
}

impl Default for PreflightConfig {
    fn default() -> Self {
        let s = PreflightSettings::default();
        Self {
            h2_grid: s.h2_grid,
            h2_k_max: s.h2_k_max,
            scan_grid: s.scan_grid,
            delta_tol: s.tangency.delta_tol,
            c_min: s.tangency.c_min,
            h_tol: s.h_tol,
        }
    }
}

impl PreflightConfig {
    pub fn settings(&self) -> PreflightSettings {
        PreflightSettings {
            h2_grid: self.h2_grid,
            h2_k_max: self.h2_k_max,
            scan_grid: self.scan_grid,
            tangency: TangencyTolerances {
                delta_tol: self.delta_tol,
                c_min: self.c_min,
            },
            h_tol: self.h_tol,
            ..PreflightSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub n: u64,
    pub burn_in: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            n: 10_000_000,
            burn_in: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub nus: Vec<f64>,
    pub thetas: Vec<f64>,
    /// add an affine doubling row per theta
    pub include_affine: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            nus: vec![0.6],
            thetas: (0..9).map(|k| 0.1 + 0.05 * k as f64).collect(),
            include_affine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoPointConfig {
    pub n: usize,
    pub series: usize,
    /// fraction of the run used for the final-window diagnostics
    pub window: f64,
    pub trichotomy: bool,
    pub trichotomy_n: usize,
    pub trichotomy_ensemble: usize,
}

impl Default for TwoPointConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            series: 1,
            window: 0.1,
            trichotomy: false,
            trichotomy_n: 1_000_000,
            trichotomy_ensemble: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub orbit_n: usize,
    pub bins: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 500,
            orbit_n: 10_000_000,
            bins: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentConfig {
    /// q values for the Monte Carlo cross-check (empty to skip)
    pub mc_q: Vec<f64>,
    pub mc_n: usize,
    pub mc_ensemble: usize,
    pub birkhoff_n: u64,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            mc_q: vec![-1.0, -0.5, 0.5, 1.0],
            mc_n: 16,
            mc_ensemble: 1_000_000,
            birkhoff_n: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassageConfig {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub d0: Option<f64>,
    pub count: usize,
    pub max_iter: u64,
    /// run the verification designs for the sign of the exponent
    pub designs: bool,
    pub zero_deltas: Vec<f64>,
    pub zero_log_ratios: Vec<f64>,
    pub zero_fractions: Vec<f64>,
    pub escape_delta: f64,
    pub escape_log_offsets: Vec<f64>,
    pub tail_d0: f64,
    pub tail_delta: f64,
    pub kappa: f64,
    pub tail_log_offsets: Vec<f64>,
    pub tail_count: usize,
}

impl Default for PassageConfig {
    fn default() -> Self {
        let z = crate::passage::ZeroExponentDesign::default();
        Self {
            epsilon: None,
            delta: None,
            d0: None,
            count: 10_000,
            max_iter: 10_000_000,
            designs: false,
            zero_deltas: z.deltas,
            zero_log_ratios: z.log_ratios,
            zero_fractions: z.fractions,
            escape_delta: 0.05,
            escape_log_offsets: vec![2.0, 4.0, 6.0],
            tail_d0: 0.004,
            tail_delta: 0.05,
            kappa: 0.1,
            tail_log_offsets: (1..=10).map(|k| 2.0 * k as f64).collect(),
            tail_count: 40_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureGrowthConfig {
    pub delta: f64,
    pub kappa: f64,
    pub levels: usize,
    pub excursions: usize,
    pub chains: usize,
    pub max_len: u64,
    pub resamples: usize,
    pub hist_chains: usize,
    pub hist_n: usize,
    pub eps_min: f64,
    pub bins: usize,
    pub window: [f64; 2],
}

impl Default for MeasureGrowthConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            kappa: 0.1,
            levels: 20,
            excursions: 2000,
            chains: 16,
            max_len: 10_000_000,
            resamples: 200,
            hist_chains: 16,
            hist_n: 1_000_000,
            eps_min: 1e-7,
            bins: 60,
            window: [1e-5, 1e-2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistHistConfig {
    pub n: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub eps_min: f64,
    pub bins: usize,
}

impl Default for DistHistConfig {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            chains: 16,
            burn_in: 1000,
            eps_min: 1e-7,
            bins: 60,
        }
    }
}
