use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss weights and regularizer constants.
///
/// `lambda_*` values default to the published training hyperparameters; the
/// remaining constants are repo defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_d: f64,
    pub lambda_n: f64,
    pub lambda_s: f64,
    /// Weight of the multi-scale depth gradient term inside the depth loss.
    pub omega_grad: f64,
    /// Weight of the edge-aware normal gradient regularizer.
    pub alpha: f64,
    /// Weight of the multi-scale normal Laplacian regularizer.
    pub beta: f64,
    /// Edge-weight gain; `w_edge` lies in `[1, 1 + eta]`.
    pub eta: f64,
    pub lambda_temp_d: f64,
    pub lambda_temp_n: f64,
    /// Cycle-consistency threshold in pixels.
    pub tau_c: f64,
    pub edge_dilate_radius: usize,
    /// Threshold on the `/8`-normalized Sobel magnitude of `[0,1]`-normalized depth.
    pub edge_threshold: f64,
    /// Pyramid levels for the depth gradient and normal Laplacian terms.
    pub grad_scales: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_d: 1.0,
            lambda_n: 0.1,
            lambda_s: 0.05,
            omega_grad: 0.5,
            alpha: 0.5,
            beta: 0.5,
            eta: 1.0,
            lambda_temp_d: 1.0,
            lambda_temp_n: 0.1,
            tau_c: 1.0,
            edge_dilate_radius: 2,
            edge_threshold: 0.05,
            grad_scales: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_d", self.lambda_d),
            ("lambda_n", self.lambda_n),
            ("lambda_s", self.lambda_s),
            ("omega_grad", self.omega_grad),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("lambda_temp_d", self.lambda_temp_d),
            ("lambda_temp_n", self.lambda_temp_n),
            ("edge_threshold", self.edge_threshold),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return Err(Error::Config(format!(
                "tau_c must be > 0, got {}",
                self.tau_c
            )));
        }
        if self.grad_scales < 1 {
            return Err(Error::Config("grad_scales must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: LossConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: LossConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `.toml` files as TOML and anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
