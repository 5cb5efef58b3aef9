//! Subcommand implementations and the reproducibility manifest.

use crate::config::RunConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use simplex_ot::coupling::{cost_matrix, solve_coupling};
use simplex_ot::dirichlet::fit_mle;
use simplex_ot::encoder::{design_row, fit_mlr, load_external_scores, EncodedColumn, Provenance};
use simplex_ot::error::Error;
use simplex_ot::gaussian::GaussianTransportMap;
use simplex_ot::io::{
    self, format_float, read_csv, write_dataset, write_dataset_with_scores, write_plan_triplets,
    ColumnKind, Dataset,
};
use simplex_ot::pipeline::{run_pipeline, validate_spec, Direction, PipelineSettings};
use simplex_ot::simplex::{Composition, CompositionSample, GroupLabel};
use simplex_ot::ternary::{density_contours, group_color, render, Layer, TernaryScene};
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_DATA: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::from(Error::from(e))
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DegenerateInput(_) => EXIT_DATA,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::ColumnType { .. }
            | Error::NotBinary(_)
            | Error::MalformedScores { .. }
            | Error::MissingCategory(_)
            | Error::InvalidParameter(_)
            | Error::InvalidValue(_)
            | Error::InvalidDimension(_) => EXIT_CONFIG,
            _ => EXIT_INTERNAL,
        };
        Self::new(code, e.to_string())
    }
}

type CmdResult = Result<(), CommandError>;

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Result<String, CommandError> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_hex(&bytes))
}

#[derive(Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
}

/// Everything needed to reproduce a run: config hash, seed, resolved
/// settings and checksums of inputs and outputs.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_path: String,
    config_sha256: String,
    dataset: String,
    dataset_sha256: String,
    seed: u64,
    settings: &'a RunConfig,
    outputs: Vec<OutputEntry>,
}

pub struct RunContext {
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub config_text: String,
}

impl RunContext {
    fn write_manifest(&self, command: &str, outputs: &[PathBuf]) -> CmdResult {
        let entries = outputs
            .iter()
            .map(|p| {
                Ok(OutputEntry {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CommandError>>()?;
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_path: self.config_path.display().to_string(),
            config_sha256: sha256_hex(self.config_text.as_bytes()),
            dataset: self.config.dataset.display().to_string(),
            dataset_sha256: sha256_file(&self.config.dataset)?,
            seed: self.config.seed,
            settings: &self.config,
            outputs: entries,
        };
        let path = self.config.out_dir.join(format!("manifest_{command}.json"));
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json)?;
        Ok(())
    }

    fn load_dataset(&self) -> Result<Dataset, CommandError> {
        Ok(read_csv(&self.config.dataset, Some(&self.config.schema))?)
    }

    fn ensure_out_dir(&self) -> CmdResult {
        std::fs::create_dir_all(&self.config.out_dir)?;
        Ok(())
    }

    /// Categorical columns to encode: everything categorical except the
    /// sensitive column and the outcome.
    fn encodable_columns(&self, dataset: &Dataset) -> Vec<usize> {
        dataset
            .schema
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.kind == ColumnKind::Categorical
                    && c.name != self.config.sensitive
                    && Some(&c.name) != self.config.outcome.as_ref()
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Predictors for a column: the configured list, or all other columns
    /// except the target and the outcome.
    fn predictor_indices(
        &self,
        dataset: &Dataset,
        target: usize,
    ) -> Result<Vec<usize>, CommandError> {
        let name = &dataset.schema.columns[target].name;
        if let Some(listed) = self.config.encoder.predictors.get(name) {
            return listed
                .iter()
                .map(|p| {
                    dataset.schema.column_index(p).ok_or_else(|| {
                        CommandError::config(format!(
                            "predictor {p:?} for column {name:?} not in the dataset"
                        ))
                    })
                })
                .collect();
        }
        Ok(dataset
            .schema
            .columns
            .iter()
            .enumerate()
            .filter(|(i, c)| *i != target && Some(&c.name) != self.config.outcome.as_ref())
            .map(|(i, _)| i)
            .collect())
    }

    fn encode_column(
        &self,
        dataset: &Dataset,
        target: usize,
    ) -> Result<EncodedColumn, CommandError> {
        let col = &dataset.schema.columns[target];
        if let Some(path) = self.config.encoder.external.get(&col.name) {
            let encoded =
                load_external_scores(path, &col.name, &col.categories, self.config.epsilon)?;
            if encoded.scores.len() != dataset.rows.len() {
                return Err(CommandError::config(format!(
                    "external scores for {:?} have {} rows, dataset has {}",
                    col.name,
                    encoded.scores.len(),
                    dataset.rows.len()
                )));
            }
            return Ok(encoded);
        }
        let predictors = self.predictor_indices(dataset, target)?;
        let mut features = Vec::with_capacity(dataset.rows.len());
        let mut labels = Vec::with_capacity(dataset.rows.len());
        for row in &dataset.rows {
            features.push(design_row(&dataset.schema, &predictors, row)?);
            let label = col
                .categories
                .iter()
                .position(|c| c == &row[target])
                .expect("validated against schema");
            labels.push(label);
        }
        let model = fit_mlr(
            &features,
            &labels,
            col.categories.len(),
            &self.config.encoder.mlr_config(),
        )?;
        if !model.converged {
            eprintln!(
                "warning: encoder for {:?} stopped after {} iterations without reaching tolerance",
                col.name, model.iterations
            );
        }
        let scores = features
            .iter()
            .map(|x| model.predict_with_epsilon(x, self.config.epsilon))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EncodedColumn {
            name: col.name.clone(),
            categories: col.categories.clone(),
            scores,
            provenance: Provenance::FittedMlr,
        })
    }

    /// Group row indices ordered as (source, target) for the configured
    /// direction.
    fn split_for_direction(
        &self,
        dataset: &Dataset,
    ) -> Result<(Vec<usize>, Vec<usize>, GroupLabel), CommandError> {
        let (g0, g1) = dataset.split_indices(&self.config.sensitive)?;
        let direction = self.config.direction()?;
        let (source, target, source_group) = match direction {
            Direction::ZeroToOne => (g0, g1, GroupLabel::Zero),
            Direction::OneToZero => (g1, g0, GroupLabel::One),
        };
        if source.is_empty() || target.is_empty() {
            return Err(Error::DegenerateInput(format!(
                "both sensitive groups must be nonempty (source {}, target {})",
                source.len(),
                target.len()
            ))
            .into());
        }
        Ok((source, target, source_group))
    }
}

/// Runs one closure per encodable column across a small worker pool,
/// returning results in column order. File writes stay on the caller.
fn for_each_column_parallel<T: Send>(
    workers: usize,
    targets: &[usize],
    job: impl Fn(usize) -> Result<T, CommandError> + Sync,
) -> Result<Vec<T>, CommandError> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let workers = workers.clamp(1, targets.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T, CommandError>>>> =
        targets.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= targets.len() {
                    break;
                }
                let result = job(targets[k]);
                *slots[k].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

pub fn cmd_encode(ctx: &RunContext) -> CmdResult {
    ctx.ensure_out_dir()?;
    let dataset = ctx.load_dataset()?;
    let targets = ctx.encodable_columns(&dataset);
    if targets.is_empty() {
        eprintln!("warning: no categorical columns to encode; output mirrors the input schema");
    }
    let encoded = for_each_column_parallel(ctx.config.workers, &targets, |t| {
        ctx.encode_column(&dataset, t)
    })?;
    let out = ctx.config.out_dir.join("encoded.csv");
    write_dataset_with_scores(&out, &dataset, &encoded)?;
    ctx.write_manifest("encode", &[out])?;
    Ok(())
}

fn write_transported(path: &Path, source_rows: &[usize], columns: &[EncodedColumn]) -> CmdResult {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["row".to_string()];
    for col in columns {
        for cat in &col.categories {
            header.push(format!("{}__{}", col.name, cat));
        }
    }
    writeln!(file, "{}", header.join(","))?;
    for (k, &r) in source_rows.iter().enumerate() {
        let mut record = vec![r.to_string()];
        for col in columns {
            for &p in col.scores[k].parts() {
                record.push(format_float(p));
            }
        }
        writeln!(file, "{}", record.join(","))?;
    }
    file.flush()?;
    Ok(())
}

pub fn cmd_transport(ctx: &RunContext, method: &str) -> CmdResult {
    if method != "gaussian" && method != "matching" {
        return Err(CommandError::usage(format!(
            "unknown method {method:?}, expected gaussian or matching"
        )));
    }
    ctx.ensure_out_dir()?;
    let dataset = ctx.load_dataset()?;
    let (source_rows, target_rows, source_group) = ctx.split_for_direction(&dataset)?;
    let targets = ctx.encodable_columns(&dataset);
    if targets.is_empty() {
        return Err(CommandError::config(
            "no categorical columns to transport".to_string(),
        ));
    }

    let transform = ctx.config.transform_kind()?;
    let mode = ctx.config.counterfactual_mode()?;
    let per_column = for_each_column_parallel(ctx.config.workers, &targets, |t| {
        let encoded = ctx.encode_column(&dataset, t)?;
        let pick = |rows: &[usize]| -> Vec<Composition> {
            rows.iter().map(|&r| encoded.scores[r].clone()).collect()
        };
        let source = CompositionSample::new(source_group, pick(&source_rows))?;
        let target = CompositionSample::new(source_group.flipped(), pick(&target_rows))?;

        let (transported, plan) = match method {
            "gaussian" => {
                let map = GaussianTransportMap::fit(&source, &target, transform)?;
                let moved = source
                    .points()
                    .iter()
                    .map(|x| map.apply(x))
                    .collect::<Result<Vec<_>, _>>()?;
                (moved, None)
            }
            _ => {
                let costs = cost_matrix(&source, &target)?;
                let plan = solve_coupling(&costs)?;
                let moved = (0..source.len())
                    .map(|i| plan.counterfactual_of(&target, i, mode))
                    .collect::<Result<Vec<_>, _>>()?;
                (moved, Some(plan))
            }
        };
        Ok((
            EncodedColumn {
                name: encoded.name.clone(),
                categories: encoded.categories.clone(),
                scores: transported,
                provenance: encoded.provenance,
            },
            plan,
        ))
    })?;

    // All file writes happen serially on this thread.
    let mut outputs = Vec::new();
    let mut transported_columns = Vec::new();
    for (column, plan) in per_column {
        if let Some(plan) = plan {
            let plan_path = ctx.config.out_dir.join(format!("plan_{}.csv", column.name));
            write_plan_triplets(&plan_path, &plan)?;
            outputs.push(plan_path);
        }
        transported_columns.push(column);
    }

    let out = ctx.config.out_dir.join("transported.csv");
    write_transported(&out, &source_rows, &transported_columns)?;
    outputs.insert(0, out);
    ctx.write_manifest("transport", &outputs)?;
    Ok(())
}

pub fn cmd_pipeline(ctx: &RunContext) -> CmdResult {
    ctx.ensure_out_dir()?;
    let dataset = ctx.load_dataset()?;
    let spec = ctx.config.scm_spec();
    let violations = validate_spec(&spec, &dataset.schema);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("spec violation: {v}");
        }
        return Err(CommandError::config(format!(
            "{} spec violation(s); nothing written",
            violations.len()
        )));
    }
    let settings = PipelineSettings {
        mlr: ctx.config.encoder.mlr_config(),
        transform: ctx.config.transform_kind()?,
        matching_mode: ctx.config.counterfactual_mode()?,
        seed: ctx.config.seed,
        epsilon: ctx.config.epsilon,
    };
    let out_dataset = run_pipeline(&dataset, &spec, ctx.config.direction()?, &settings)?;
    let out = ctx.config.out_dir.join("counterfactual.csv");
    write_dataset(&out, &out_dataset)?;
    ctx.write_manifest("pipeline", &[out])?;
    Ok(())
}

fn plot_column(ctx: &RunContext, column_flag: Option<&str>) -> Result<String, CommandError> {
    if let Some(c) = column_flag {
        return Ok(c.to_string());
    }
    ctx.config
        .plot
        .as_ref()
        .map(|p| p.column.clone())
        .ok_or_else(|| CommandError::usage("no column given: pass --column or set [plot].column"))
}

pub fn cmd_plot(ctx: &RunContext, what: &str, column_flag: Option<&str>) -> CmdResult {
    if !matches!(what, "points" | "transport" | "contours") {
        return Err(CommandError::usage(format!(
            "unknown plot kind {what:?}, expected points, transport or contours"
        )));
    }
    ctx.ensure_out_dir()?;
    let dataset = ctx.load_dataset()?;
    let column = plot_column(ctx, column_flag)?;
    let target = dataset
        .schema
        .column_index(&column)
        .ok_or_else(|| CommandError::config(format!("unknown column {column:?}")))?;
    let col = &dataset.schema.columns[target];
    if col.kind != ColumnKind::Categorical || col.categories.len() != 3 {
        return Err(CommandError::config(format!(
            "ternary plots need exactly 3 categories; column {column:?} has {} — merge categories into three classes first",
            col.categories.len()
        )));
    }

    let encoded = ctx.encode_column(&dataset, target)?;
    let (source_rows, target_rows, source_group) = ctx.split_for_direction(&dataset)?;
    let pick = |rows: &[usize]| -> Vec<Composition> {
        rows.iter().map(|&r| encoded.scores[r].clone()).collect()
    };
    let source = CompositionSample::new(source_group, pick(&source_rows))?;
    let target_sample = CompositionSample::new(source_group.flipped(), pick(&target_rows))?;

    let labels: [String; 3] = [
        col.categories[0].clone(),
        col.categories[1].clone(),
        col.categories[2].clone(),
    ];
    let canvas = ctx.config.plot.as_ref().map_or(480.0, |p| p.canvas);
    let mut scene = TernaryScene::new(labels, canvas);

    match what {
        "points" => {
            scene.push_layer(Layer::Points {
                group: source.group_label(),
                points: source.points().to_vec(),
                radii: None,
            })?;
            scene.push_layer(Layer::Points {
                group: target_sample.group_label(),
                points: target_sample.points().to_vec(),
                radii: None,
            })?;
        }
        "transport" => {
            let map =
                GaussianTransportMap::fit(&source, &target_sample, ctx.config.transform_kind()?)?;
            let mut paths = Vec::with_capacity(source.len());
            for x in source.points() {
                let path = (0..=10)
                    .map(|k| map.interpolate(x, k as f64 / 10.0))
                    .collect::<Result<Vec<_>, _>>()?;
                paths.push(path);
            }
            scene.push_layer(Layer::Paths { paths })?;
            scene.push_layer(Layer::Points {
                group: source.group_label(),
                points: source.points().to_vec(),
                radii: None,
            })?;
            scene.push_layer(Layer::Points {
                group: target_sample.group_label(),
                points: target_sample.points().to_vec(),
                radii: None,
            })?;
        }
        _ => {
            let resolution = ctx.config.plot.as_ref().map_or(200, |p| p.resolution);
            for sample in [&source, &target_sample] {
                let fit = fit_mle(sample)?;
                let levels = contour_levels(ctx, &fit.params, sample)?;
                let polylines = density_contours(&fit.params, &levels, resolution)?;
                scene.push_layer(Layer::Contours {
                    polylines,
                    color: group_color(sample.group_label()).to_string(),
                })?;
                scene.push_layer(Layer::Points {
                    group: sample.group_label(),
                    points: sample.points().to_vec(),
                    radii: None,
                })?;
            }
        }
    }

    let out = ctx.config.out_dir.join(format!("{what}_{column}.svg"));
    std::fs::write(&out, render(&scene))?;
    ctx.write_manifest(&format!("plot_{what}"), &[out])?;
    Ok(())
}

/// Explicit levels from the config, or density quantiles at the sample.
fn contour_levels(
    ctx: &RunContext,
    params: &simplex_ot::dirichlet::DirichletParams,
    sample: &CompositionSample,
) -> Result<Vec<f64>, CommandError> {
    if let Some(plot) = &ctx.config.plot {
        if !plot.levels.is_empty() {
            return Ok(plot.levels.clone());
        }
    }
    let mut densities = sample
        .points()
        .iter()
        .map(|x| simplex_ot::dirichlet::log_density(params, x).map(f64::exp))
        .collect::<Result<Vec<_>, _>>()?;
    densities.sort_by(f64::total_cmp);
    let pick = |q: f64| densities[(q * (densities.len() - 1) as f64) as usize];
    Ok(vec![pick(0.25), pick(0.5), pick(0.75)])
}

pub fn cmd_fit_dirichlet(ctx: &RunContext, column_flag: Option<&str>) -> CmdResult {
    ctx.ensure_out_dir()?;
    let dataset = ctx.load_dataset()?;
    let column = plot_column(ctx, column_flag)?;
    let target = dataset
        .schema
        .column_index(&column)
        .ok_or_else(|| CommandError::config(format!("unknown column {column:?}")))?;
    if dataset.schema.columns[target].kind != ColumnKind::Categorical {
        return Err(CommandError::config(format!(
            "column {column:?} is not categorical"
        )));
    }

    let encoded = ctx.encode_column(&dataset, target)?;
    let (g0, g1) = dataset.split_indices(&ctx.config.sensitive)?;
    if g0.is_empty() || g1.is_empty() {
        return Err(Error::DegenerateInput("one sensitive group is empty".into()).into());
    }

    #[derive(Serialize)]
    struct GroupFit {
        alpha: Vec<f64>,
        converged: bool,
        iterations: usize,
        mean_log_likelihood: f64,
    }
    let fit_group = |rows: &[usize], label: GroupLabel| -> Result<GroupFit, CommandError> {
        let pts = rows.iter().map(|&r| encoded.scores[r].clone()).collect();
        let sample = CompositionSample::new(label, pts)?;
        let fit = fit_mle(&sample)?;
        Ok(GroupFit {
            alpha: fit.params.alpha().to_vec(),
            converged: fit.converged,
            iterations: fit.iterations,
            mean_log_likelihood: fit.log_likelihood,
        })
    };
    let result = serde_json::json!({
        "column": column,
        "categories": encoded.categories,
        "group0": fit_group(&g0, GroupLabel::Zero)?,
        "group1": fit_group(&g1, GroupLabel::One)?,
    });

    let out = ctx.config.out_dir.join(format!("dirichlet_{column}.json"));
    std::fs::write(
        &out,
        serde_json::to_string_pretty(&result).expect("serializes"),
    )?;
    ctx.write_manifest("fit-dirichlet", &[out])?;
    Ok(())
}

/// Marginal feasibility report for an emitted plan file.
pub fn cmd_verify(plan_path: &Path) -> CmdResult {
    let (n0, n1, triplets) = io::read_plan_triplets(plan_path)?;
    let mut rows = vec![0.0_f64; n0];
    let mut cols = vec![0.0_f64; n1];
    let mut negatives = 0usize;
    for &(i, j, w) in &triplets {
        if w < 0.0 {
            negatives += 1;
        }
        rows[i] += w;
        cols[j] += w;
    }
    let row_err = rows.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let ratio = n0 as f64 / n1 as f64;
    let col_err = cols.iter().map(|s| (s - ratio).abs()).fold(0.0, f64::max);

    println!(
        "plan {}: {} x {}, {} triplets",
        plan_path.display(),
        n0,
        n1,
        triplets.len()
    );
    println!("max |row sum - 1|       = {row_err:.3e}");
    println!("max |col sum - n0/n1|   = {col_err:.3e}");
    println!("negative weights        = {negatives}");
    let ok = row_err < 1e-8 && col_err < 1e-8 && negatives == 0;
    if ok {
        println!("verify: OK");
        Ok(())
    } else {
        Err(CommandError::config("plan violates marginal constraints"))
    }
}
