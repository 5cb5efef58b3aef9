//! Run configuration: a TOML document validated up front, with flag overrides.

use serde::{Deserialize, Serialize};
use simplex_ot::coupling::CounterfactualMode;
use simplex_ot::encoder::MlrConfig;
use simplex_ot::error::{Error, Result};
use simplex_ot::io::SchemaDeclaration;
use simplex_ot::logratio::TransformKind;
use simplex_ot::pipeline::{Direction, ScmSpec, StepSpec};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_epsilon() -> f64 {
    simplex_ot::simplex::DEFAULT_EPSILON
}

fn default_workers() -> usize {
    4
}

/// Encoder section: fitting knobs, per-column predictor overrides and
/// external score files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub lambda: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    /// Predictor columns per encoded column; default is all other columns
    /// except the outcome.
    pub predictors: BTreeMap<String, Vec<String>>,
    /// External score CSVs per column (skips fitting).
    pub external: BTreeMap<String, PathBuf>,
}

impl EncoderSection {
    pub fn mlr_config(&self) -> MlrConfig {
        let d = MlrConfig::default();
        MlrConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            tol: self.tol.unwrap_or(d.tol),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    /// alr | clr | ilr (default clr, routed through the contrast basis).
    pub transform: Option<String>,
    /// euclidean_mean | aitchison_mean | argmax_row.
    pub mode: Option<String>,
    /// 0to1 | 1to0.
    pub direction: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSection {
    pub column: String,
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_canvas")]
    pub canvas: f64,
}

fn default_resolution() -> usize {
    200
}

fn default_canvas() -> f64 {
    480.0
}

/// The full configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub sensitive: String,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Worker threads for per-column encoding and transport.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub schema: SchemaDeclaration,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub transport: TransportSection,
    #[serde(default, rename = "step")]
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub plot: Option<PlotSection>,
}

impl RunConfig {
    /// Parses and validates the file; flag overrides are applied afterwards
    /// by [`Overrides::apply`].
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Schema(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok((config, text))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        // Enum-valued strings are checked eagerly so a bad config fails
        // before any computation.
        self.transform_kind()?;
        self.counterfactual_mode()?;
        self.direction()?;
        if self.sensitive.is_empty() {
            return Err(Error::Schema("sensitive column must be set".into()));
        }
        Ok(())
    }

    pub fn transform_kind(&self) -> Result<TransformKind> {
        match self.transport.transform.as_deref() {
            None => Ok(TransformKind::Clr),
            Some(s) => s.parse(),
        }
    }

    pub fn counterfactual_mode(&self) -> Result<CounterfactualMode> {
        match self.transport.mode.as_deref() {
            None => Ok(CounterfactualMode::EuclideanMean),
            Some(s) => s.parse(),
        }
    }

    pub fn direction(&self) -> Result<Direction> {
        match self.transport.direction.as_deref() {
            None => Ok(Direction::ZeroToOne),
            Some(s) => s.parse(),
        }
    }

    pub fn scm_spec(&self) -> ScmSpec {
        ScmSpec {
            sensitive: self.sensitive.clone(),
            steps: self.steps.clone(),
            outcome: self.outcome.clone(),
        }
    }
}

/// Command-line flag overrides; flags take precedence over file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub transform: Option<String>,
    pub mode: Option<String>,
    pub epsilon: Option<f64>,
    pub direction: Option<String>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(t) = &self.transform {
            config.transport.transform = Some(t.clone());
        }
        if let Some(m) = &self.mode {
            config.transport.mode = Some(m.clone());
        }
        if let Some(e) = self.epsilon {
            config.epsilon = e;
        }
        if let Some(d) = &self.direction {
            config.transport.direction = Some(d.clone());
        }
        config.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = "dataset = \"d.csv\"\nsensitive = \"sex\"\n";
        let config: RunConfig = toml::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.out_dir, PathBuf::from("out"));
        assert_eq!(config.seed, 0);
        assert_eq!(config.transform_kind().unwrap(), TransformKind::Clr);
        assert_eq!(
            config.counterfactual_mode().unwrap(),
            CounterfactualMode::EuclideanMean
        );
        assert!(config.steps.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "dataset = \"d.csv\"\nsensitive = \"sex\"\nbogus = 1\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn steps_and_sections_parse() {
        let text = r#"
dataset = "d.csv"
sensitive = "sex"
outcome = "default"
seed = 7

[schema]
numeric = ["age"]

[schema.categories]
sex = ["F", "M"]

[encoder]
lambda = 0.001

[transport]
transform = "ilr"
mode = "argmax_row"
direction = "1to0"

[[step]]
name = "age"
kind = "numeric"
parents = ["sex"]

[[step]]
name = "purpose"
kind = "categorical"
parents = ["sex", "age"]
transport = "matching"
label_mode = "sample"

[plot]
column = "purpose"
levels = [0.5, 2.0]
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.steps.len(), 2);
        assert_eq!(config.transform_kind().unwrap(), TransformKind::Ilr);
        assert_eq!(
            config.counterfactual_mode().unwrap(),
            CounterfactualMode::ArgmaxRow
        );
        assert!(matches!(config.direction().unwrap(), Direction::OneToZero));
        assert_eq!(config.plot.unwrap().resolution, 200);
        assert_eq!(config.encoder.mlr_config().lambda, 0.001);
        assert_eq!(config.encoder.mlr_config().max_iter, 500);
    }

    #[test]
    fn bad_enum_values_fail_validation() {
        let text = "dataset = \"d.csv\"\nsensitive = \"s\"\n[transport]\ntransform = \"zzz\"\n";
        let config: RunConfig = toml::from_str(text).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "dataset = \"d.csv\"\nsensitive = \"s\"\nseed = 1\n";
        let mut config: RunConfig = toml::from_str(text).unwrap();
        let overrides = Overrides {
            seed: Some(99),
            transform: Some("alr".into()),
            out: Some(PathBuf::from("elsewhere")),
            ..Default::default()
        };
        overrides.apply(&mut config).unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(config.transform_kind().unwrap(), TransformKind::Alr);
        assert_eq!(config.out_dir, PathBuf::from("elsewhere"));
    }
}
