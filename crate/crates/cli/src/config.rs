use std::path::PathBuf;

use raysep::estimate::{Algorithm, EstimatorConfig};
use raysep::scenario::ScenarioSpec;
use serde::{Deserialize, Serialize};

fn noiseless() -> f64 {
    f64::INFINITY
}

/// Configuration of `simulate` and `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    /// Omitted means noise free.
    #[serde(default = "noiseless")]
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Used when `--out` is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> raysep::Result<()> {
        self.scenario.validate()?;
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(raysep::Error::Domain(format!("invalid SNR {}", self.snr_db)));
        }
        let mut cfg = self.estimator;
        cfg.num_paths = self.scenario.truth()?.len();
        cfg.validate(&self.scenario.geometry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let json = serde_json::json!({ "scenario": ScenarioSpec::coherent_multipath() });
        let cfg: RunConfig = serde_json::from_value(json).unwrap();
        assert!(cfg.snr_db.is_infinite());
        assert!(cfg.algorithms.is_empty());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_names_its_path() {
        let mut json = serde_json::json!({ "scenario": ScenarioSpec::coherent_multipath() });
        json["scenario"]["bins"] = serde_json::json!(-3);
        let err = serde_json::from_value::<RunConfig>(json).unwrap_err().to_string();
        assert!(err.contains("invalid value"), "{err}");
        let json = serde_json::json!({ "scenario": ScenarioSpec::coherent_multipath(), "colour": 1 });
        let err = serde_json::from_value::<RunConfig>(json).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }
}
