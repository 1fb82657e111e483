//! Run settings. Flags override the TOML file, which overrides defaults.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Loan,
    Quantile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CriterionArg {
    Eo,
    Eodds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Naive,
    Reweighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    InversePropensity,
    DensityRatio,
    Oracle,
}

/// Every setting as it may appear in a config file or on the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partial {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub scenario: Option<Scenario>,
    pub n: Option<usize>,
    pub feature: Option<String>,
    pub quantile: Option<f64>,
    pub data: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub score_column: Option<String>,
    pub model: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub per_group: Option<bool>,
    pub weights: Option<WeightSource>,
    pub oracle: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub cap: Option<f64>,
    pub bins: Option<usize>,
    pub criterion: Option<CriterionArg>,
    pub eval: Option<EvalMode>,
    pub rho: Option<f64>,
    pub fn_fp_rate: Option<f64>,
}

/// Resolved settings, embedded in every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scenario: Scenario,
    pub n: usize,
    pub feature: String,
    pub quantile: f64,
    pub data: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub score_column: String,
    pub model: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub per_group: bool,
    pub weights: Option<WeightSource>,
    pub oracle: Option<PathBuf>,
    pub alpha: f64,
    pub cap: f64,
    pub bins: usize,
    pub criterion: CriterionArg,
    pub eval: EvalMode,
    pub rho: Option<f64>,
    pub fn_fp_rate: f64,
}

macro_rules! pick {
    ($flags:ident, $file:ident, $field:ident) => {
        $flags.$field.clone().or_else(|| $file.$field.clone())
    };
    ($flags:ident, $file:ident, $field:ident, $default:expr) => {
        pick!($flags, $file, $field).unwrap_or_else(|| $default)
    };
}

impl Settings {
    pub fn resolve(flags: &Partial, config: Option<&Path>) -> Result<Self, CliError> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Partial::default(),
        };
        // With no explicit source, an oracle file implies oracle weights.
        let oracle = pick!(flags, file, oracle);
        let weights = pick!(flags, file, weights).or(oracle.as_ref().map(|_| WeightSource::Oracle));
        let s = Settings {
            seed: pick!(flags, file, seed, 0),
            out_dir: pick!(flags, file, out_dir, PathBuf::from(".")),
            scenario: pick!(flags, file, scenario, Scenario::Loan),
            n: pick!(flags, file, n, 100_000),
            feature: pick!(flags, file, feature, "x_inc".into()),
            quantile: pick!(flags, file, quantile, 0.1),
            data: pick!(flags, file, data),
            scores: pick!(flags, file, scores),
            score_column: pick!(flags, file, score_column, "score".into()),
            model: pick!(flags, file, model),
            policy: pick!(flags, file, policy),
            per_group: pick!(flags, file, per_group, false),
            weights,
            oracle,
            alpha: pick!(flags, file, alpha, 1.0),
            cap: pick!(flags, file, cap, 10.0),
            bins: pick!(flags, file, bins, 10),
            criterion: pick!(flags, file, criterion, CriterionArg::Eo),
            eval: pick!(flags, file, eval, EvalMode::Naive),
            rho: pick!(flags, file, rho),
            fn_fp_rate: pick!(flags, file, fn_fp_rate, 1.0),
        };
        if !(s.fn_fp_rate.is_finite() && s.fn_fp_rate > 0.0) {
            return Err(CliError::Config(format!("fn-fp-rate must be positive, got {}", s.fn_fp_rate)));
        }
        Ok(s)
    }

    pub fn data(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::Config("--data is required".into()))
    }

    /// SHA-256 of the canonical JSON of the resolved settings.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("settings serialize");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\nn = 10\ncap = 3.0\n").unwrap();
        let flags = Partial {
            seed: Some(9),
            ..Default::default()
        };
        let s = Settings::resolve(&flags, Some(&path)).unwrap();
        assert_eq!((s.seed, s.n, s.cap, s.alpha), (9, 10, 3.0, 1.0));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "sede = 5\n").unwrap();
        assert!(matches!(Settings::resolve(&Partial::default(), Some(&path)), Err(CliError::Config(_))));
    }

    #[test]
    fn oracle_file_implies_oracle_weights() {
        let flags = Partial {
            oracle: Some("o.csv".into()),
            ..Default::default()
        };
        assert_eq!(Settings::resolve(&flags, None).unwrap().weights, Some(WeightSource::Oracle));
    }

    #[test]
    fn hash_tracks_settings() {
        let a = Settings::resolve(&Partial::default(), None).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
