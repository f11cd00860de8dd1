//! Experiment configuration, read from TOML.
//!
//! ```toml
//! model = "ou-tanh"
//! model_params = { gain = 1.0 }
//! T = [0.4, 0.2, 0.1, 0.05]
//! q = 1.0
//! K = 1.0
//! n_probes = 17
//! n_obs_paths = 2000
//! u_solver = "zakai-splitting"   # or "fk-mc"
//! seed = 20240501
//!
//! [grid]
//! n_x = 401
//! pde_steps = 128
//!
//! [constants]
//! n_samples = 4000
//! overrides = { lipschitz_h = 1.0 }
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_model, ConstantOverrides, DerivedCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum USolver {
    /// Splitting solver of the Zakai equation, one solve per observation path.
    ZakaiSplitting,
    /// Feynman–Kac Monte Carlo with `fk_inner_paths` auxiliary paths.
    FkMc,
}

impl USolver {
    pub fn name(&self) -> &'static str {
        match self {
            USolver::ZakaiSplitting => "zakai-splitting",
            USolver::FkMc => "fk-mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_y: usize,
    /// Half-width of the y-range in units of `√T` (plus `|h|∞ T`).
    pub y_sigmas: f64,
    /// Time steps of the Kolmogorov solve, per horizon.
    pub pde_steps: usize,
    /// Time steps of the observation paths and of the u-solvers, per horizon.
    pub zakai_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            x_min: -6.0,
            x_max: 6.0,
            n_x: 401,
            n_y: 401,
            y_sigmas: 7.5,
            pde_steps: 128,
            zakai_steps: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    /// Sampling box radius; defaults to `3K`.
    pub box_radius: Option<f64>,
    pub n_samples: usize,
    pub overrides: ConstantOverrides,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            box_radius: None,
            n_samples: 4000,
            overrides: ConstantOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub model_params: BTreeMap<String, f64>,
    #[serde(rename = "T")]
    pub horizons: Vec<f64>,
    pub q: f64,
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    #[serde(rename = "K")]
    pub radius: f64,
    pub n_probes: usize,
    /// Explicit probe points; overrides `n_probes`.
    pub probes: Option<Vec<f64>>,
    pub n_obs_paths: usize,
    pub u_solver: USolver,
    pub fk_inner_paths: usize,
    pub grid: GridConfig,
    pub constants: ConstantsConfig,
    /// Re-run every horizon with half the time steps to estimate the
    /// discretisation error.
    pub richardson: bool,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "ou-tanh".into(),
            model_params: BTreeMap::new(),
            horizons: vec![0.4, 0.2, 0.1, 0.05],
            q: 1.0,
            q1: None,
            q2: None,
            radius: 1.0,
            n_probes: 17,
            probes: None,
            n_obs_paths: 2000,
            u_solver: USolver::ZakaiSplitting,
            fk_inner_paths: 4000,
            grid: GridConfig::default(),
            constants: ConstantsConfig::default(),
            richardson: true,
            seed: 20240501,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml_str(&text)
    }

    /// `(q1, q2)`: the configured split, or `q1 = q2 = 2q`. A single given
    /// exponent determines the other.
    pub fn holder_split(&self) -> Result<(f64, f64)> {
        let q = self.q;
        let conj = |a: f64| {
            let inv = 1.0 / q - 1.0 / a;
            if inv > 0.0 {
                Ok(1.0 / inv)
            } else {
                Err(Error::Holder { q, q1: a, q2: f64::INFINITY })
            }
        };
        match (self.q1, self.q2) {
            (None, None) => Ok((2.0 * q, 2.0 * q)),
            (Some(a), None) => Ok((a, conj(a)?)),
            (None, Some(b)) => Ok((conj(b)?, b)),
            (Some(a), Some(b)) => {
                if (1.0 / a + 1.0 / b - 1.0 / q).abs() > 1e-12 {
                    Err(Error::Holder { q, q1: a, q2: b })
                } else {
                    Ok((a, b))
                }
            }
        }
    }

    pub fn probes(&self) -> Vec<f64> {
        if let Some(p) = &self.probes {
            return p.clone();
        }
        let n = self.n_probes;
        if n == 1 {
            return vec![0.0];
        }
        let k = self.radius;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    k
                } else {
                    -k + 2.0 * k * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn box_radius(&self) -> f64 {
        self.constants.box_radius.unwrap_or(3.0 * self.radius)
    }

    pub fn coefficients(&self) -> Result<DerivedCoefficients> {
        DerivedCoefficients::derive(&build_model(&self.model, &self.model_params)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("at least one horizon T is required".into()));
        }
        for &t in &self.horizons {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("every T must lie in (0, 1), got {t}")));
            }
        }
        if !(self.q >= 1.0) {
            return Err(Error::Config(format!("q must be >= 1, got {}", self.q)));
        }
        let (q1, q2) = self.holder_split()?;
        if q1 < 1.0 || q2 < 1.0 {
            return Err(Error::Holder { q: self.q, q1, q2 });
        }
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("K must be positive, got {}", self.radius)));
        }
        let probes = self.probes();
        if probes.is_empty() {
            return Err(Error::Config("probe set is empty".into()));
        }
        if let Some(p) = probes.iter().find(|p| p.abs() > self.radius * (1.0 + 1e-12)) {
            return Err(Error::Config(format!(
                "probe {p} lies outside the ball of radius K = {}",
                self.radius
            )));
        }
        if self.n_obs_paths < 2 {
            return Err(Error::Config("need at least 2 observation paths".into()));
        }
        if self.u_solver == USolver::FkMc && self.fk_inner_paths == 0 {
            return Err(Error::Config("fk-mc needs fk_inner_paths >= 1".into()));
        }
        let g = &self.grid;
        if self.richardson && (!g.pde_steps.is_multiple_of(2) || !g.zakai_steps.is_multiple_of(2)) {
            return Err(Error::Config(
                "Richardson estimates need even pde_steps and zakai_steps".into(),
            ));
        }
        let min_steps = if self.richardson { 8 } else { 4 };
        if g.pde_steps < min_steps || g.zakai_steps < 1 {
            return Err(Error::Config(format!(
                "pde_steps must be >= {min_steps} and zakai_steps >= 1"
            )));
        }
        if !(g.x_min < -self.radius && g.x_max > self.radius) {
            return Err(Error::Config("x-grid must contain the ball [-K, K]".into()));
        }
        if !(g.y_sigmas > 0.0) {
            return Err(Error::Config("y_sigmas must be positive".into()));
        }
        if self.constants.n_samples < 1000 {
            return Err(Error::Config("constants.n_samples must be >= 1000".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.probes().len(), 17);
        assert_eq!(c.probes()[0], -1.0);
        assert_eq!(c.probes()[16], 1.0);
        assert_eq!(c.holder_split().unwrap(), (2.0, 2.0));
        assert_eq!(c.box_radius(), 3.0);
    }

    #[test]
    fn parses_toml_and_rejects_unknown_keys() {
        let c = ExperimentConfig::from_toml_str(
            "model = \"const-h\"\nT = [0.2, 0.1, 0.05]\nq = 2.0\nq1 = 3.0\n[grid]\nn_x = 201\n",
        )
        .unwrap();
        assert_eq!(c.model, "const-h");
        assert_eq!(c.grid.n_x, 201);
        assert_eq!(c.grid.n_y, 401);
        let (q1, q2) = c.holder_split().unwrap();
        assert_eq!(q1, 3.0);
        assert!((q2 - 6.0).abs() < 1e-12);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[grid]\nnx = 3").is_err());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("T = [1.5]").is_err());
        assert!(ExperimentConfig::from_toml_str("q = 1.0\nq1 = 2.0\nq2 = 3.0").is_err());
        assert!(ExperimentConfig::from_toml_str("K = 1.0\nprobes = [0.0, 2.0]").is_err());
        assert!(ExperimentConfig::from_toml_str("[grid]\npde_steps = 9").is_err());
    }
}
