//! Pipeline configuration and its `key = value` file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sparse::{AdmmControls, DEFAULT_S_FLOOR};
use crate::transform::{LambdaGrid, LOG_EPSILON_FACTOR};

/// How the log guard `epsilon` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEpsilon {
    /// `factor * max(image)`, or `factor` for an all-zero image.
    RelativeToMax(f64),
    Absolute(f64),
}

impl LogEpsilon {
    pub fn resolve(self, img: &Raster) -> f64 {
        match self {
            LogEpsilon::RelativeToMax(f) => {
                let max = img.max();
                f * if max > 0.0 { max } else { 1.0 }
            }
            LogEpsilon::Absolute(e) => e,
        }
    }
}

/// Every tunable of the despeckling pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub stack_count: usize,
    pub stride: usize,
    pub search_window: usize,
    /// Sparsity weight.
    pub c: f64,
    pub lambda_grid: LambdaGrid,
    pub admm: AdmmControls,
    /// Apply the Yeo-Johnson stage after the logarithm.
    pub use_transform: bool,
    /// Use noise (`w1`) and singular-value (`w2`) weights instead of ones.
    pub use_weights: bool,
    pub seed: u64,
    pub s_floor: f64,
    pub log_epsilon: LogEpsilon,
    /// Dynamic range for the metrics recorded in the manifest.
    pub peak: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            stack_count: 10,
            stride: 4,
            search_window: 40,
            c: 1.5,
            lambda_grid: LambdaGrid::default(),
            admm: AdmmControls::default(),
            use_transform: true,
            use_weights: true,
            seed: 0,
            s_floor: DEFAULT_S_FLOOR,
            log_epsilon: LogEpsilon::RelativeToMax(LOG_EPSILON_FACTOR),
            peak: 255.0,
        }
    }
}

fn invalid(message: String) -> Error {
    Error::Parameter(message)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(invalid(format!(
                "patch_size must be at least 2, got {}",
                self.patch_size
            )));
        }
        if self.stack_count < 1 {
            return Err(invalid("stack_count must be at least 1".into()));
        }
        if self.use_weights && self.stack_count < 2 {
            return Err(invalid("noise weights need stack_count of at least 2".into()));
        }
        if self.stride < 1 {
            return Err(invalid("stride must be at least 1".into()));
        }
        if self.search_window < self.patch_size {
            return Err(invalid(format!(
                "search_window {} is smaller than patch_size {}",
                self.search_window, self.patch_size
            )));
        }
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(invalid(format!("c must be non-negative, got {}", self.c)));
        }
        if !(self.s_floor > 0.0) {
            return Err(invalid(format!("s_floor must be positive, got {}", self.s_floor)));
        }
        if !(self.peak > 0.0) {
            return Err(invalid(format!("peak must be positive, got {}", self.peak)));
        }
        match self.log_epsilon {
            LogEpsilon::RelativeToMax(v) | LogEpsilon::Absolute(v) if !(v > 0.0) => {
                return Err(invalid(format!("log epsilon must be positive, got {v}")));
            }
            _ => {}
        }
        self.lambda_grid.values()?;
        self.admm.validate()
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Sets one option by its file key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
        }
        fn flag(key: &str, v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(format!("invalid boolean `{v}` for `{key}`")),
            }
        }
        match key {
            "patch_size" => self.patch_size = num(key, value)?,
            "stack_count" => self.stack_count = num(key, value)?,
            "stride" => self.stride = num(key, value)?,
            "search_window" => self.search_window = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "lambda_min" => self.lambda_grid.min = num(key, value)?,
            "lambda_max" => self.lambda_grid.max = num(key, value)?,
            "lambda_step" => self.lambda_grid.step = num(key, value)?,
            "admm_rho" => self.admm.rho = num(key, value)?,
            "admm_max_iters" => self.admm.max_iters = num(key, value)?,
            "admm_tol_primal" => self.admm.tol_primal = num(key, value)?,
            "admm_tol_dual" => self.admm.tol_dual = num(key, value)?,
            "use_transform" => self.use_transform = flag(key, value)?,
            "use_weights" => self.use_weights = flag(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "s_floor" => self.s_floor = num(key, value)?,
            "log_epsilon_factor" => self.log_epsilon = LogEpsilon::RelativeToMax(num(key, value)?),
            "log_epsilon" => self.log_epsilon = LogEpsilon::Absolute(num(key, value)?),
            "peak" => self.peak = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.patch_size, cfg.stack_count, cfg.c), (16, 10, 1.5));
    }

    #[test]
    fn parses_key_value_text() {
        let cfg = PipelineConfig::from_text(
            "# test config\npatch_size = 8\nstack_count=5 # fewer\n\nuse_weights = false\nlambda_step = 0.05\nlog_epsilon = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.patch_size, 8);
        assert_eq!(cfg.stack_count, 5);
        assert!(!cfg.use_weights);
        assert_eq!(cfg.lambda_grid.step, 0.05);
        assert_eq!(cfg.log_epsilon, LogEpsilon::Absolute(0.5));
    }

    #[test]
    fn reports_line_numbers() {
        match PipelineConfig::from_text("c = 1\n\nbogus = 3\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(PipelineConfig::from_text("stride\n").is_err());
        assert!(PipelineConfig::from_text("use_weights = maybe\n").is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(PipelineConfig::from_text("patch_size = 1").is_err());
        assert!(PipelineConfig::from_text("search_window = 8").is_err());
        assert!(PipelineConfig::from_text("c = -1").is_err());
        assert!(PipelineConfig::from_text("stack_count = 1").is_err());
        assert!(PipelineConfig::from_text("stack_count = 1\nuse_weights = false").is_ok());
    }

    #[test]
    fn json_round_trip() {
        let cfg = PipelineConfig {
            use_transform: false,
            seed: 42,
            ..PipelineConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), cfg);
    }
}
