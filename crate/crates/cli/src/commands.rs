//! Command-line surface and the handler behind each subcommand.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use flowxai::dataio::{self, ScalerParams};
use flowxai::explain_viz::{force_data, ForceData, Plot};
use flowxai::featsel::{ImportanceMetric, SelectionManifest};
use flowxai::model_mlp::{Activation, MlpModel};
use flowxai::rng::derive_seed;
use flowxai::shapley::{kernel_shap, ShapExplanation};
use flowxai::synthgen::{self, SynthSpec};
use flowxai::MlpModelF64;
use serde::{Deserialize, Serialize};

use crate::artifacts::{slug, ArtifactWriter};
use crate::config::{OptimizerKind, RunConfig, Scenario};
use crate::error::{CliError, CliResult, StageContext};
use crate::stages::{self, LabeledTable, Report, Selection};

#[derive(Debug, Parser)]
#[command(name = "flowxai", version, about = "Flow classification with feature selection and Shapley explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic flow CSV.
    Synth(SynthArgs),
    /// Clean, encode, subsample and split a CSV; fit the scaler.
    Preprocess(RunArgs),
    /// Rank features with a boosted-tree model and pick the top k.
    SelectFeatures(RunArgs),
    /// Train the classifier on the selected features.
    Train(TrainArgs),
    /// Score a trained classifier on a labeled CSV.
    Evaluate(ModelArgs),
    /// Explain a batch of rows: summary, bar, dependence and force plots.
    ExplainGlobal(ExplainGlobalArgs),
    /// Explain one row with a force plot.
    ExplainLocal(ExplainLocalArgs),
    /// Run every stage end to end.
    Pipeline(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in generator preset.
    #[arg(long, default_value = "ddos-like", conflicts_with = "spec")]
    pub preset: String,
    /// Generator specification JSON (instead of a preset).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub benign: usize,
    #[arg(long, default_value_t = 1000)]
    pub attack: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags mirroring [`RunConfig`]; each one overrides the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub benign_label: Option<String>,
    /// Attack label to keep (repeatable).
    #[arg(long = "attack-label")]
    pub attack_labels: Vec<String>,
    #[arg(long)]
    pub attack_fraction: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Hidden layer sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// relu, logistic or identity.
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub gbt_trees: Option<usize>,
    #[arg(long)]
    pub gbt_depth: Option<usize>,
    #[arg(long)]
    pub gbt_learning_rate: Option<f64>,
    /// accuracy or auc.
    #[arg(long)]
    pub importance_metric: Option<ImportanceMetric>,
    #[arg(long)]
    pub permutation_repeats: Option<usize>,
    #[arg(long)]
    pub importance_rows: Option<usize>,
    #[arg(long)]
    pub background_size: Option<usize>,
    #[arg(long)]
    pub shap_samples: Option<usize>,
    #[arg(long)]
    pub explain_fraction: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl RunArgs {
    /// Config file (or defaults) with flags applied, validated.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut c.scenario, &self.scenario);
        if self.input.is_some() {
            c.input = self.input.clone();
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        set(&mut c.seed, &self.seed);
        set(&mut c.label_column, &self.label_column);
        set(&mut c.benign_label, &self.benign_label);
        if !self.attack_labels.is_empty() {
            c.attack_labels = self.attack_labels.clone();
        }
        set(&mut c.attack_fraction, &self.attack_fraction);
        set(&mut c.test_fraction, &self.test_fraction);
        set(&mut c.top_k, &self.top_k);
        set(&mut c.mlp.hidden, &self.hidden);
        set(&mut c.mlp.activation, &self.activation);
        set(&mut c.mlp.epochs, &self.epochs);
        set(&mut c.mlp.batch_size, &self.batch_size);
        set(&mut c.mlp.learning_rate, &self.learning_rate);
        set(&mut c.mlp.optimizer, &self.optimizer);
        set(&mut c.gbt.n_trees, &self.gbt_trees);
        set(&mut c.gbt.max_depth, &self.gbt_depth);
        set(&mut c.gbt.learning_rate, &self.gbt_learning_rate);
        set(&mut c.importance_metric, &self.importance_metric);
        set(&mut c.permutation_repeats, &self.permutation_repeats);
        set(&mut c.importance_rows, &self.importance_rows);
        set(&mut c.background_size, &self.background_size);
        set(&mut c.shap_samples, &self.shap_samples);
        set(&mut c.explain_fraction, &self.explain_fraction);
        set(&mut c.threshold, &self.threshold);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Selection manifest from `select-features`.
    #[arg(long)]
    pub selection: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scaler: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainGlobalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Unscaled background rows (e.g. `background.csv` from a pipeline run).
    #[arg(long)]
    pub background: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainLocalArgs {
    #[command(flatten)]
    pub global: ExplainGlobalArgs,
    /// Zero-based data row of the input CSV.
    #[arg(long)]
    pub row: usize,
}

/// Runs a parsed command line and returns the paths it wrote.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(&a.resolve()?),
        Command::SelectFeatures(a) => cmd_select_features(&a.resolve()?),
        Command::Train(a) => cmd_train(&a.run.resolve()?, &a.selection),
        Command::Evaluate(a) => cmd_evaluate(&a.run.resolve()?, &a.model, &a.scaler),
        Command::ExplainGlobal(a) => {
            cmd_explain_global(&a.model.run.resolve()?, &a.model.model, &a.model.scaler, &a.background)
        }
        Command::ExplainLocal(a) => {
            let g = &a.global;
            cmd_explain_local(&g.model.run.resolve()?, &g.model.model, &g.model.scaler, &g.background, a.row)
        }
        Command::Pipeline(a) => cmd_pipeline(&a.resolve()?),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    let spec = match &args.spec {
        Some(path) => SynthSpec::load(path).stage("load")?,
        None => SynthSpec::preset(&args.preset).ok_or_else(|| {
            CliError::bad_input(
                "config",
                format!("unknown preset {:?}; available: {:?}", args.preset, synthgen::PRESETS),
            )
        })?,
    };
    let table = synthgen::generate(&spec, args.benign, args.attack, args.seed).stage("synth")?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::bad_input("config", format!("{}: {e}", parent.display())))?;
    }
    table.write_csv(&args.out).internal("write")?;
    Ok(vec![args.out.clone()])
}

fn write_splits(out: &mut ArtifactWriter, train: &LabeledTable, test: &LabeledTable, config: &RunConfig) -> CliResult<()> {
    out.csv("train.csv", &train.to_raw(config))?;
    out.csv("test.csv", &test.to_raw(config))?;
    Ok(())
}

pub fn cmd_preprocess(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let mut out = ArtifactWriter::create(config.output()?)?;
    let data = stages::load_labeled(config.input()?, config)?;
    let data = stages::subsample(&data, config)?;
    let (train, test) = stages::split(&data, config)?;
    let (scaler, _, _) = stages::scale(&train, &[])?;
    write_splits(&mut out, &train, &test, config)?;
    out.json("scaler.json", &scaler)?;
    out.finish()
}

fn write_selection(out: &mut ArtifactWriter, selection: &Selection) -> CliResult<()> {
    for group in &selection.groups {
        let g = slug(&group.group);
        out.json(&format!("gbt_{g}.json"), &group.gbt)?;
        for ranking in &group.rankings {
            let method = serde_json::to_value(ranking.method).map_err(|e| CliError::internal("write", e))?;
            out.json(&format!("ranking_{}_{g}.json", method.as_str().unwrap_or("unknown")), ranking)?;
        }
    }
    out.json("ranking_combined.json", &selection.combined)?;
    out.json("selection.json", &SelectionManifest::from_ranking(&selection.combined))?;
    Ok(())
}

pub fn cmd_select_features(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let mut out = ArtifactWriter::create(config.output()?)?;
    let train = stages::load_labeled(config.input()?, config)?;
    let (_, scaled, _) = stages::scale(&train, &[])?;
    let selection = stages::select_features(&scaled, config)?;
    write_selection(&mut out, &selection)?;
    out.finish()
}

pub fn cmd_train(config: &RunConfig, selection: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = ArtifactWriter::create(config.output()?)?;
    let features = SelectionManifest::load(selection).stage("load")?.features;
    let train = stages::load_labeled(config.input()?, config)?;
    let train = stages::project(&train, &features)?;
    let (scaler, scaled, _) = stages::scale(&train, &[])?;
    let (model, loss) = stages::train_classifier(&scaled.table, config)?;
    out.json("model.json", &model)?;
    out.json("scaler.json", &scaler)?;
    out.json("loss.json", &loss)?;
    out.finish()
}

fn load_model(model: &Path, scaler: &Path) -> CliResult<(MlpModelF64, ScalerParams<f64>)> {
    let model = MlpModel::load(model).stage("load")?;
    let scaler = ScalerParams::load(scaler).stage("load")?;
    if model.input_dim() != scaler.feature_names.len() {
        return Err(CliError::bad_input(
            "load",
            flowxai::Error::DimensionMismatch {
                expected: model.input_dim(),
                got: scaler.feature_names.len(),
            },
        ));
    }
    Ok((model, scaler))
}

pub fn cmd_evaluate(config: &RunConfig, model: &Path, scaler: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = ArtifactWriter::create(config.output()?)?;
    let (model, scaler) = load_model(model, scaler)?;
    let raw = dataio::load_csv(config.input()?, &config.label_column).stage("load")?;
    let before = dataio::clean(&raw, &config.drop_columns).stage("clean")?.n_columns() - 1;
    let test = stages::scale_raw(&raw, &scaler, config)?;
    let (metrics, per_class) = stages::evaluate_classifier(&model, &test.table, config)?;
    out.json(
        "report.json",
        &Report {
            scenario: config.scenario,
            feature_count_before: before,
            feature_count_after: scaler.feature_names.len(),
            selected_features: scaler.feature_names.clone(),
            metrics,
            per_class,
        },
    )?;
    out.finish()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplanationSet {
    /// Row indices (into the explained table) of each explanation.
    pub rows: Vec<usize>,
    pub explanations: Vec<ShapExplanation<f64>>,
}

fn write_global(
    out: &mut ArtifactWriter,
    model: &MlpModelF64,
    test: &LabeledTable,
    background: &LabeledTable,
    config: &RunConfig,
) -> CliResult<()> {
    let rows = stages::explained_rows(&test.table, config);
    let explained = test.table.select_rows(&rows);
    let explanations = stages::explain(model, &explained, &background.table, config)?;
    let global = stages::global_artifacts(&explanations, config)?;
    let scenario = config.scenario.as_str();
    out.json("explanations.json", &ExplanationSet { rows, explanations })?;
    out.json("summary.json", &global.summary)?;
    out.json("force.json", &global.force)?;
    out.svg(Plot::Bar(&global.summary.ranking), scenario)?;
    out.svg(Plot::Summary(&global.summary), scenario)?;
    out.svg(Plot::Force(&global.force), scenario)?;
    if let Some(d) = &global.dependence {
        out.json("dependence.json", d)?;
        out.svg(Plot::Dependence(d), scenario)?;
    }
    Ok(())
}

pub fn cmd_explain_global(config: &RunConfig, model: &Path, scaler: &Path, background: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = ArtifactWriter::create(config.output()?)?;
    let (model, scaler) = load_model(model, scaler)?;
    let test = stages::load_scaled(config.input()?, &scaler, config)?;
    let background = stages::load_scaled(background, &scaler, config)?;
    if test.table.is_empty() || background.table.is_empty() {
        return Err(CliError::bad_input("explain", flowxai::Error::NoRows));
    }
    write_global(&mut out, &model, &test, &background, config)?;
    out.finish()
}

/// Force-plot data for one flow plus how the classifier did on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub row: usize,
    pub label: String,
    pub benign_probability: f64,
    pub outcome: String,
    #[serde(flatten)]
    pub force: ForceData,
}

pub fn cmd_explain_local(
    config: &RunConfig,
    model: &Path,
    scaler: &Path,
    background: &Path,
    row: usize,
) -> CliResult<Vec<PathBuf>> {
    let mut out = ArtifactWriter::create(config.output()?)?;
    let (model, scaler) = load_model(model, scaler)?;
    let (x, label) = stages::load_row(config.input()?, row, &scaler, config)?;
    let background = stages::load_scaled(background, &scaler, config)?;
    if background.table.is_empty() {
        return Err(CliError::bad_input("explain", flowxai::Error::NoRows));
    }
    let seed = derive_seed(config.stage_seed("explain-local"), &row.to_string());
    let explanation = kernel_shap(&model, &x, &background.table, config.shap_samples, seed).stage("explain")?;
    let benign_probability = model.output(&x);
    let local = LocalExplanation {
        row,
        outcome: stages::outcome(label == config.benign_label, benign_probability, config.threshold),
        label,
        benign_probability,
        force: force_data(&explanation),
    };
    let scenario = config.scenario.as_str();
    out.json(&format!("force_{scenario}.json"), &local)?;
    out.svg(Plot::Force(&local.force), scenario)?;
    out.finish()
}

pub fn cmd_pipeline(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let input = config.input()?;
    let mut out = ArtifactWriter::create(config.output()?)?;
    let data = stages::load_labeled(input, config)?;
    let feature_count_before = data.table.n_features();
    let data = stages::subsample(&data, config)?;
    let (train, test) = stages::split(&data, config)?;
    let (scaler, scaled_train, scaled) = stages::scale(&train, &[&test])?;
    let selection = stages::select_features(&scaled_train, config)?;
    let features = selection.features();
    let train_sel = stages::project(&scaled_train, &features)?;
    let test_sel = stages::project(&scaled[0], &features)?;
    let (model, loss) = stages::train_classifier(&train_sel.table, config)?;
    let (metrics, per_class) = stages::evaluate_classifier(&model, &test_sel.table, config)?;
    let background_rows = stages::background_rows(&train_sel.table, config);

    let report = Report {
        scenario: config.scenario,
        feature_count_before,
        feature_count_after: features.len(),
        selected_features: features.clone(),
        metrics,
        per_class,
    };
    // The output location is left out so reruns elsewhere hash identically.
    out.json(
        "config.json",
        &RunConfig {
            output: None,
            ..config.clone()
        },
    )?;
    out.json("report.json", &report)?;
    out.json("model.json", &model)?;
    out.json("loss.json", &loss)?;
    out.json("scaler.json", &scaler.project(&features).stage("project")?)?;
    write_selection(&mut out, &selection)?;
    let raw_train = stages::project(&train, &features)?;
    out.csv("background.csv", &raw_train.select_rows(&background_rows).to_raw(config))?;
    out.csv("test.csv", &stages::project(&test, &features)?.to_raw(config))?;
    let background = train_sel.select_rows(&background_rows);
    write_global(&mut out, &model, &test_sel, &background, config)?;
    out.finish()
}
