//! Sequential counterfactual generation along a declared causal ordering.
//!
//! The sensitive attribute is flipped first; each step is then transported in
//! order, numeric columns through empirical quantile maps and categorical
//! columns through transport of their encoded compositions, so later steps
//! consume earlier counterfactual values through their parents.

use crate::coupling::{cost_matrix, solve_coupling, CounterfactualMode};
use crate::encoder::{
    design_row, fit_mlr, load_external_scores, to_label, EncodedColumn, LabelMode, MlrConfig,
    MultinomialModel,
};
use crate::error::{Error, Result};
use crate::gaussian::GaussianTransportMap;
use crate::io::{ColumnKind, Dataset, DatasetSchema};
use crate::logratio::TransformKind;
use crate::quantile::QuantileMap;
use crate::simplex::{Composition, CompositionSample, GroupLabel};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Numeric,
    Categorical,
}

/// Where a categorical step's compositions come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderBinding {
    FittedMlr,
    ExternalFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportChoice {
    Gaussian,
    Matching,
}

/// Label reconversion choice; sampling draws its seeds from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelChoice {
    Argmax,
    Sample,
}

/// One transported variable in the causal ordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSpec {
    pub name: String,
    pub kind: VarKind,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderBinding,
    #[serde(default = "default_transport")]
    pub transport: TransportChoice,
    #[serde(default = "default_label_mode")]
    pub label_mode: LabelChoice,
    /// Numeric steps only: stratify the quantile map on one discrete parent.
    #[serde(default)]
    pub stratify_by: Option<String>,
}

fn default_encoder() -> EncoderBinding {
    EncoderBinding::FittedMlr
}

fn default_transport() -> TransportChoice {
    TransportChoice::Gaussian
}

fn default_label_mode() -> LabelChoice {
    LabelChoice::Argmax
}

/// Topologically ordered causal specification: sensitive source, transported
/// steps, optional outcome sink that is passed through untouched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmSpec {
    pub sensitive: String,
    #[serde(default)]
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub outcome: Option<String>,
}

/// Which group is transported onto which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    ZeroToOne,
    OneToZero,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0to1" | "zero-to-one" => Ok(Direction::ZeroToOne),
            "1to0" | "one-to-zero" => Ok(Direction::OneToZero),
            other => Err(Error::InvalidParameter(format!(
                "unknown direction {other:?}, expected 0to1 or 1to0"
            ))),
        }
    }
}

/// A single validation failure; the full list is reported at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecViolation {
    UnknownColumn {
        context: String,
        column: String,
    },
    KindMismatch {
        step: String,
        declared: VarKind,
        schema: ColumnKind,
    },
    ParentNotBefore {
        step: String,
        parent: String,
    },
    OutcomeAsParent {
        step: String,
    },
    OutcomeAsStep {
        step: String,
    },
    SensitiveNotBinary {
        column: String,
    },
    DuplicateStep {
        step: String,
    },
    SensitiveAsStep {
        step: String,
    },
    BadStratifier {
        step: String,
        column: String,
    },
}

impl std::fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::UnknownColumn { context, column } => {
                write!(f, "{context} references unknown column {column:?}")
            }
            Self::KindMismatch {
                step,
                declared,
                schema,
            } => write!(
                f,
                "step {step:?} declared {declared:?} but the schema says {schema:?}"
            ),
            Self::ParentNotBefore { step, parent } => write!(
                f,
                "parent {parent:?} of step {step:?} does not precede it in the order"
            ),
            Self::OutcomeAsParent { step } => {
                write!(f, "step {step:?} lists the outcome as a parent")
            }
            Self::OutcomeAsStep { step } => {
                write!(f, "outcome column {step:?} may not be a step")
            }
            Self::SensitiveNotBinary { column } => {
                write!(f, "sensitive column {column:?} is not binary categorical")
            }
            Self::DuplicateStep { step } => write!(f, "step {step:?} is declared twice"),
            Self::SensitiveAsStep { step } => {
                write!(f, "sensitive column {step:?} may not be a step")
            }
            Self::BadStratifier { step, column } => write!(
                f,
                "step {step:?} stratifies on {column:?}, which is not a categorical parent"
            ),
        }
    }
}

/// Checks a spec against a dataset schema, returning every violation.
pub fn validate_spec(spec: &ScmSpec, schema: &DatasetSchema) -> Vec<SpecViolation> {
    let mut violations = Vec::new();

    match schema.column(&spec.sensitive) {
        None => violations.push(SpecViolation::UnknownColumn {
            context: "sensitive".into(),
            column: spec.sensitive.clone(),
        }),
        Some(col) => {
            if col.kind != ColumnKind::Categorical || col.categories.len() != 2 {
                violations.push(SpecViolation::SensitiveNotBinary {
                    column: spec.sensitive.clone(),
                });
            }
        }
    }
    if let Some(outcome) = &spec.outcome {
        if schema.column(outcome).is_none() {
            violations.push(SpecViolation::UnknownColumn {
                context: "outcome".into(),
                column: outcome.clone(),
            });
        }
    }

    let step_names: Vec<&str> = spec.steps.iter().map(|s| s.name.as_str()).collect();
    let mut preceding: Vec<&str> = vec![spec.sensitive.as_str()];
    for step in &spec.steps {
        if step.name == spec.sensitive {
            violations.push(SpecViolation::SensitiveAsStep {
                step: step.name.clone(),
            });
        }
        if Some(&step.name) == spec.outcome.as_ref() {
            violations.push(SpecViolation::OutcomeAsStep {
                step: step.name.clone(),
            });
        }
        if preceding.contains(&step.name.as_str()) && step.name != spec.sensitive {
            violations.push(SpecViolation::DuplicateStep {
                step: step.name.clone(),
            });
        }
        match schema.column(&step.name) {
            None => violations.push(SpecViolation::UnknownColumn {
                context: format!("step {:?}", step.name),
                column: step.name.clone(),
            }),
            Some(col) => {
                let matches = matches!(
                    (step.kind, col.kind),
                    (VarKind::Numeric, ColumnKind::Numeric)
                        | (VarKind::Categorical, ColumnKind::Categorical)
                );
                if !matches {
                    violations.push(SpecViolation::KindMismatch {
                        step: step.name.clone(),
                        declared: step.kind,
                        schema: col.kind,
                    });
                }
            }
        }
        for parent in &step.parents {
            if Some(parent) == spec.outcome.as_ref() {
                violations.push(SpecViolation::OutcomeAsParent {
                    step: step.name.clone(),
                });
                continue;
            }
            if schema.column(parent).is_none() {
                violations.push(SpecViolation::UnknownColumn {
                    context: format!("step {:?}", step.name),
                    column: parent.clone(),
                });
                continue;
            }
            // Columns that are not transported steps count as exogenous and
            // may parent any step; declared steps must come earlier.
            let is_step = step_names.contains(&parent.as_str()) || parent == &step.name;
            if is_step && !preceding.contains(&parent.as_str()) {
                violations.push(SpecViolation::ParentNotBefore {
                    step: step.name.clone(),
                    parent: parent.clone(),
                });
            }
        }
        if let Some(strat) = &step.stratify_by {
            let ok = step.parents.contains(strat)
                && schema
                    .column(strat)
                    .is_some_and(|c| c.kind == ColumnKind::Categorical);
            if !ok {
                violations.push(SpecViolation::BadStratifier {
                    step: step.name.clone(),
                    column: strat.clone(),
                });
            }
        }
        preceding.push(step.name.as_str());
    }

    violations
}

/// Run-wide knobs for the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub mlr: MlrConfig,
    pub transform: TransformKind,
    pub matching_mode: CounterfactualMode,
    pub seed: u64,
    /// Boundary floor used when closing predicted or ingested scores.
    pub epsilon: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            mlr: MlrConfig::default(),
            transform: TransformKind::Clr,
            matching_mode: CounterfactualMode::EuclideanMean,
            seed: 0,
            epsilon: crate::simplex::DEFAULT_EPSILON,
        }
    }
}

/// splitmix64-style mixing so every (step, row) pair gets its own stream.
fn mix_seed(root: u64, step: u64, row: u64) -> u64 {
    let mut z =
        root ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ row.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct FittedEncoder {
    model: Option<MultinomialModel>,
    external: Option<EncodedColumn>,
    epsilon: f64,
}

impl FittedEncoder {
    fn score_factual(
        &self,
        schema: &DatasetSchema,
        parents: &[usize],
        row_index: usize,
        row: &[String],
    ) -> Result<Composition> {
        match (&self.model, &self.external) {
            (Some(model), _) => {
                model.predict_with_epsilon(&design_row(schema, parents, row)?, self.epsilon)
            }
            (None, Some(col)) => col
                .scores
                .get(row_index)
                .cloned()
                .ok_or(Error::IndexOutOfRange {
                    index: row_index,
                    len: col.scores.len(),
                }),
            (None, None) => unreachable!("encoder is always fitted or loaded"),
        }
    }
}

/// Generates the counterfactual dataset for the source group.
///
/// Emits one row per source-group row, in dataset order, with the sensitive
/// column flipped, numeric steps quantile-mapped, categorical steps encoded
/// on their parents, transported on the simplex and reconverted to labels.
/// The outcome column is passed through bit-identically.
pub fn run_pipeline(
    dataset: &Dataset,
    spec: &ScmSpec,
    direction: Direction,
    settings: &PipelineSettings,
) -> Result<Dataset> {
    let violations = validate_spec(spec, &dataset.schema);
    if !violations.is_empty() {
        let joined = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Schema(joined));
    }

    let schema = &dataset.schema;
    let sensitive_idx = schema.column_index(&spec.sensitive).unwrap();
    let sensitive_cats = schema.columns[sensitive_idx].categories.clone();
    let (g0, g1) = dataset.split_indices(&spec.sensitive)?;
    let (source_rows, target_rows, _, target_cat) = match direction {
        Direction::ZeroToOne => (g0, g1, &sensitive_cats[0], &sensitive_cats[1]),
        Direction::OneToZero => (g1, g0, &sensitive_cats[1], &sensitive_cats[0]),
    };
    if source_rows.is_empty() || target_rows.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "both sensitive groups must be nonempty (source {}, target {})",
            source_rows.len(),
            target_rows.len()
        )));
    }

    // Working copy of the source rows; the sensitive column flips first.
    let mut working: Vec<Vec<String>> = source_rows
        .iter()
        .map(|&r| dataset.rows[r].clone())
        .collect();
    for row in working.iter_mut() {
        row[sensitive_idx] = target_cat.clone();
    }

    for (step_idx, step) in spec.steps.iter().enumerate() {
        let col_idx = schema.column_index(&step.name).unwrap();
        match step.kind {
            VarKind::Numeric => {
                transport_numeric_step(
                    dataset,
                    schema,
                    step,
                    col_idx,
                    &source_rows,
                    &target_rows,
                    &mut working,
                )?;
            }
            VarKind::Categorical => {
                transport_categorical_step(
                    dataset,
                    schema,
                    step,
                    step_idx,
                    col_idx,
                    &source_rows,
                    &target_rows,
                    &mut working,
                    settings,
                )?;
            }
        }
    }

    let mut out_schema = schema.clone();
    out_schema.row_count = working.len();
    Ok(Dataset {
        schema: out_schema,
        rows: working,
    })
}

/// When the source or target composition cloud is constant in log-ratio
/// coordinates, Gaussian transport degenerates to the constant map onto the
/// target mean; returns that composition, or `None` for regular clouds.
fn degenerate_gaussian_limit(
    source: &CompositionSample,
    target: &CompositionSample,
    kind: TransformKind,
) -> Result<Option<Composition>> {
    use crate::logratio::{alr, alr_inv, ilr, ilr_basis, ilr_inv};

    let d = source.dim();
    let basis = ilr_basis(d)?;
    let coords = |sample: &CompositionSample| -> Result<Vec<Vec<f64>>> {
        sample
            .points()
            .iter()
            .map(|x| match kind {
                TransformKind::Alr => Ok(alr(x)),
                TransformKind::Clr | TransformKind::Ilr => ilr(x, &basis),
            })
            .collect()
    };
    let spread = |zs: &[Vec<f64>]| -> (Vec<f64>, f64) {
        let k = zs[0].len();
        let mut mean = vec![0.0_f64; k];
        for z in zs {
            for (m, v) in mean.iter_mut().zip(z) {
                *m += v / zs.len() as f64;
            }
        }
        let mut max_dev: f64 = 0.0;
        for z in zs {
            for (m, v) in mean.iter().zip(z) {
                max_dev = max_dev.max((v - m).abs());
            }
        }
        (mean, max_dev)
    };

    let (_, source_dev) = spread(&coords(source)?);
    let (target_mean, target_dev) = spread(&coords(target)?);
    if source_dev > 1e-9 && target_dev > 1e-9 {
        return Ok(None);
    }
    let constant = match kind {
        TransformKind::Alr => alr_inv(&target_mean)?,
        TransformKind::Clr | TransformKind::Ilr => ilr_inv(&target_mean, &basis)?,
    };
    Ok(Some(constant))
}

fn numeric_values(dataset: &Dataset, col: usize, rows: &[usize]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|&r| {
            dataset.rows[r][col]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::ColumnType {
                    column: dataset.schema.columns[col].name.clone(),
                    line: r + 2,
                    reason: format!("not a number: {:?}", dataset.rows[r][col]),
                })
        })
        .collect()
}

fn transport_numeric_step(
    dataset: &Dataset,
    schema: &DatasetSchema,
    step: &StepSpec,
    col_idx: usize,
    source_rows: &[usize],
    target_rows: &[usize],
    working: &mut [Vec<String>],
) -> Result<()> {
    // Marginal map, plus per-stratum maps when a stratifier is declared.
    let marginal = QuantileMap::new(
        numeric_values(dataset, col_idx, source_rows)?,
        numeric_values(dataset, col_idx, target_rows)?,
    )?;

    let stratified: Option<(usize, Vec<Option<QuantileMap>>)> = match &step.stratify_by {
        None => None,
        Some(parent) => {
            let p_idx = schema.column_index(parent).unwrap();
            let cats = &schema.columns[p_idx].categories;
            let mut maps = Vec::with_capacity(cats.len());
            for cat in cats {
                let src: Vec<usize> = source_rows
                    .iter()
                    .copied()
                    .filter(|&r| &dataset.rows[r][p_idx] == cat)
                    .collect();
                let tgt: Vec<usize> = target_rows
                    .iter()
                    .copied()
                    .filter(|&r| &dataset.rows[r][p_idx] == cat)
                    .collect();
                if src.is_empty() || tgt.is_empty() {
                    // Empty stratum on either side falls back to the marginal map.
                    maps.push(None);
                } else {
                    maps.push(Some(QuantileMap::new(
                        numeric_values(dataset, col_idx, &src)?,
                        numeric_values(dataset, col_idx, &tgt)?,
                    )?));
                }
            }
            Some((p_idx, maps))
        }
    };

    for row in working.iter_mut() {
        let v: f64 = row[col_idx].trim().parse().map_err(|_| Error::ColumnType {
            column: schema.columns[col_idx].name.clone(),
            line: 0,
            reason: format!("not a number: {:?}", row[col_idx]),
        })?;
        let map = match &stratified {
            Some((p_idx, maps)) => {
                // Stratum chosen by the row's current (possibly counterfactual)
                // parent value.
                let cats = &schema.columns[*p_idx].categories;
                let pos = cats.iter().position(|c| c == &row[*p_idx]);
                pos.and_then(|k| maps[k].as_ref()).unwrap_or(&marginal)
            }
            None => &marginal,
        };
        row[col_idx] = crate::io::format_float(map.transport(v));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn transport_categorical_step(
    dataset: &Dataset,
    schema: &DatasetSchema,
    step: &StepSpec,
    step_idx: usize,
    col_idx: usize,
    source_rows: &[usize],
    target_rows: &[usize],
    working: &mut [Vec<String>],
    settings: &PipelineSettings,
) -> Result<()> {
    let categories = schema.columns[col_idx].categories.clone();
    let parent_indices: Vec<usize> = step
        .parents
        .iter()
        .map(|p| schema.column_index(p).unwrap())
        .collect();

    // One pooled classifier fitted on all factual rows (group indicated by
    // the sensitive column among the parents), or externally supplied scores.
    let encoder = match &step.encoder {
        EncoderBinding::FittedMlr => {
            let mut features = Vec::with_capacity(dataset.rows.len());
            let mut labels = Vec::with_capacity(dataset.rows.len());
            for row in &dataset.rows {
                features.push(design_row(schema, &parent_indices, row)?);
                let label = categories
                    .iter()
                    .position(|c| c == &row[col_idx])
                    .ok_or_else(|| Error::MissingCategory(row[col_idx].clone()))?;
                labels.push(label);
            }
            let model = fit_mlr(&features, &labels, categories.len(), &settings.mlr)?;
            FittedEncoder {
                model: Some(model),
                external: None,
                epsilon: settings.epsilon,
            }
        }
        EncoderBinding::ExternalFile(path) => {
            let col = load_external_scores(path, &step.name, &categories, settings.epsilon)?;
            if col.scores.len() != dataset.rows.len() {
                return Err(Error::Schema(format!(
                    "external scores for {:?} have {} rows, dataset has {}",
                    step.name,
                    col.scores.len(),
                    dataset.rows.len()
                )));
            }
            FittedEncoder {
                model: None,
                external: Some(col),
                epsilon: settings.epsilon,
            }
        }
    };

    // Source-side compositions are plug-in counterfactuals: the classifier
    // evaluated with the flipped group indicator and the row's current
    // (counterfactual) parent values, exactly what the working rows carry.
    // The fitted transport then corrects the plug-in cloud onto the factual
    // composition cloud of the target group. External scores cannot be
    // re-evaluated on counterfactual parents, so they enter factually.
    let source_points: Vec<Composition> = match &encoder.model {
        Some(model) => working
            .iter()
            .map(|row| {
                model.predict_with_epsilon(
                    &design_row(schema, &parent_indices, row)?,
                    settings.epsilon,
                )
            })
            .collect::<Result<Vec<_>>>()?,
        None => source_rows
            .iter()
            .map(|&r| encoder.score_factual(schema, &parent_indices, r, &dataset.rows[r]))
            .collect::<Result<Vec<_>>>()?,
    };
    let target_points: Vec<Composition> = target_rows
        .iter()
        .map(|&r| encoder.score_factual(schema, &parent_indices, r, &dataset.rows[r]))
        .collect::<Result<Vec<_>>>()?;
    let source_sample = CompositionSample::new(GroupLabel::Zero, source_points)?;
    let target_sample = CompositionSample::new(GroupLabel::One, target_points)?;

    let transported: Vec<Composition> = match step.transport {
        TransportChoice::Gaussian => {
            // A zero-variance cloud (e.g. the sensitive column is the only
            // parent) admits no Gaussian fit; the transport limit is the
            // constant map onto the target coordinate mean.
            if let Some(constant) =
                degenerate_gaussian_limit(&source_sample, &target_sample, settings.transform)?
            {
                vec![constant; source_sample.len()]
            } else {
                let map =
                    GaussianTransportMap::fit(&source_sample, &target_sample, settings.transform)?;
                source_sample
                    .points()
                    .iter()
                    .map(|x| map.apply(x))
                    .collect::<Result<Vec<_>>>()?
            }
        }
        TransportChoice::Matching => {
            let costs = cost_matrix(&source_sample, &target_sample)?;
            let plan = solve_coupling(&costs)?;
            (0..source_sample.len())
                .map(|i| plan.counterfactual_of(&target_sample, i, settings.matching_mode))
                .collect::<Result<Vec<_>>>()?
        }
    };

    for (i, (row, comp)) in working.iter_mut().zip(&transported).enumerate() {
        let mode = match step.label_mode {
            LabelChoice::Argmax => LabelMode::Argmax,
            LabelChoice::Sample => LabelMode::Sample {
                seed: mix_seed(settings.seed, step_idx as u64, i as u64),
            },
        };
        row[col_idx] = to_label(comp, &categories, mode)?.to_string();
    }
    Ok(())
}
