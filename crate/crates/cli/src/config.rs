use std::path::{Path, PathBuf};

use mrfa::kernel::Schedule;
use mrfa::path::PathConfig;
use mrfa::selection::Criterion;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Settings shared by every subcommand. Each field may come from the config
/// file or a flag; flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub response: Option<String>,
    pub dmax: Option<usize>,
    pub rmax: Option<u32>,
    pub kernel_k: Option<u32>,
    pub schedule: Option<Schedule>,
    pub rho: Option<f64>,
    pub lambda_min_ratio: Option<f64>,
    pub max_terms: Option<usize>,
    pub criterion: Option<Criterion>,
    pub alpha: Option<f64>,
    pub ci_variant: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: RunConfig) -> Self {
        Self {
            response: over.response.or(self.response),
            dmax: over.dmax.or(self.dmax),
            rmax: over.rmax.or(self.rmax),
            kernel_k: over.kernel_k.or(self.kernel_k),
            schedule: over.schedule.or(self.schedule),
            rho: over.rho.or(self.rho),
            lambda_min_ratio: over.lambda_min_ratio.or(self.lambda_min_ratio),
            max_terms: over.max_terms.or(self.max_terms),
            criterion: over.criterion.or(self.criterion),
            alpha: over.alpha.or(self.alpha),
            ci_variant: over.ci_variant.or(self.ci_variant),
            seed: over.seed.or(self.seed),
            threads: over.threads.or(self.threads),
            out: over.out.or(self.out),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dmax == Some(0) {
            return Err("dmax must be >= 1".into());
        }
        if self.rmax == Some(0) {
            return Err("rmax must be >= 1".into());
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(format!("rho must lie in (0, 1), got {rho}"));
            }
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(format!("alpha must lie in (0, 1), got {alpha}"));
            }
        }
        if let Some(v) = &self.ci_variant {
            v.parse::<mrfa::inference::CiVariant>().map_err(|e| e.to_string())?;
        }
        if self.threads == Some(0) {
            return Err("threads must be >= 1".into());
        }
        Ok(())
    }

    pub fn path_config(&self) -> PathConfig {
        let mut cfg = PathConfig::default();
        if let Some(v) = self.dmax {
            cfg.basis.d_max = v;
        }
        if let Some(v) = self.rmax {
            cfg.basis.r_max = v;
        }
        if let Some(v) = self.kernel_k {
            cfg.basis.kernel_k = v;
        }
        if let Some(s) = &self.schedule {
            cfg.basis.schedule = s.clone();
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.lambda_min_ratio {
            cfg.lambda_min_ratio = v;
        }
        if self.max_terms.is_some() {
            cfg.max_terms = self.max_terms;
        }
        cfg
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion.unwrap_or(Criterion::Deterministic)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.05)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_exact() {
        let cfg = RunConfig {
            response: Some("y".into()),
            dmax: Some(3),
            rmax: Some(4),
            schedule: Some(Schedule::default()),
            rho: Some(0.1 + 0.2),
            lambda_min_ratio: Some(1e-4),
            criterion: Some(Criterion::Cv { folds: 7 }),
            alpha: Some(0.05),
            ci_variant: Some("lasso".into()),
            seed: Some(u64::MAX),
            out: Some("m.json".into()),
            ..RunConfig::default()
        };
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.rho.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn flags_override_file_values() {
        let file = RunConfig { rho: Some(0.9), seed: Some(4), ..RunConfig::default() };
        let flags = RunConfig { rho: Some(0.5), ..RunConfig::default() };
        let merged = file.overlay(flags);
        assert_eq!(merged.rho, Some(0.5));
        assert_eq!(merged.seed, Some(4));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("rho = 1.5").is_err());
        assert!(RunConfig::from_toml("alpha = 0.0").is_err());
        assert!(RunConfig::from_toml("dmax = 0").is_err());
        assert!(RunConfig::from_toml("ci_variant = \"bogus\"").is_err());
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
    }
}
