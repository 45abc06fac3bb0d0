//! Pipeline stages on in-memory data. Each stage tags its errors with its
//! name; file handling lives in `commands`.

use std::collections::BTreeSet;
use std::path::Path;

use flowxai::dataio::{self, Cell, FlowTable, RawTable, ScalerParams};
use flowxai::explain_viz::{dependence_data, force_data, global_summary, DependenceData, ForceData, SummaryData};
use flowxai::featsel::{
    combine_by_frequency, mean_abs_shap_importance, permutation_importance, top_k, FeatureRanking, RankingMethod,
};
use flowxai::metrics::{evaluate, EvaluationReport, PerClassReport, PositiveClass};
use flowxai::model_gbt::GbtModel;
use flowxai::model_mlp::MlpModel;
use flowxai::rng::{derive_seed, SeededRng};
use flowxai::shapley::{batch_explain, ShapExplanation};
use flowxai::{FlowTableF64, GbtModelF64, MlpModelF64};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Scenario};
use crate::error::{CliError, CliResult, StageContext};

/// An encoded table that remembers which attack type each row came from.
#[derive(Debug, Clone)]
pub struct LabeledTable {
    pub table: FlowTableF64,
    /// `None` for benign rows, otherwise an index into `attack_types`.
    pub types: Vec<Option<usize>>,
    pub attack_types: Vec<String>,
}

impl LabeledTable {
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            table: self.table.select_rows(indices),
            types: indices.iter().map(|&i| self.types[i]).collect(),
            attack_types: self.attack_types.clone(),
        }
    }

    pub fn with_table(&self, table: FlowTableF64) -> Self {
        assert_eq!(table.n_rows(), self.types.len());
        Self {
            table,
            types: self.types.clone(),
            attack_types: self.attack_types.clone(),
        }
    }

    /// Back to text, with the original label strings.
    pub fn to_raw(&self, config: &RunConfig) -> RawTable {
        let mut columns = self.table.feature_names().to_vec();
        columns.push(config.label_column.clone());
        let rows = self
            .table
            .rows()
            .iter()
            .zip(&self.types)
            .map(|(row, t)| {
                let mut cells: Vec<Cell> = row.iter().map(|&v| Cell::Number(v)).collect();
                let label = match t {
                    None => config.benign_label.clone(),
                    Some(i) => self.attack_types[*i].clone(),
                };
                cells.push(Cell::Text(label));
                cells
            })
            .collect();
        RawTable::new(columns, rows, config.label_column.clone()).expect("label column present")
    }
}

/// Attack labels in play: the configured list, or every non-benign label
/// present (sorted). One-to-one runs need exactly one.
pub fn resolve_attack_types(labels: &[String], config: &RunConfig) -> CliResult<Vec<String>> {
    let present: BTreeSet<&str> = labels
        .iter()
        .map(String::as_str)
        .filter(|l| *l != config.benign_label)
        .collect();
    let types: Vec<String> = if config.attack_labels.is_empty() {
        present.iter().map(|s| s.to_string()).collect()
    } else {
        if let Some(missing) = config.attack_labels.iter().find(|l| !present.contains(l.as_str())) {
            return Err(CliError::bad_input("filter", format!("attack label {missing:?} not in data")));
        }
        config.attack_labels.clone()
    };
    if !labels.contains(&config.benign_label) {
        return Err(CliError::bad_input(
            "filter",
            format!("no rows labeled {:?}", config.benign_label),
        ));
    }
    match (config.scenario, types.len()) {
        (_, 0) => Err(CliError::bad_input("filter", "no attack rows")),
        (Scenario::OneToOne, 1) | (Scenario::OneToAll, _) => Ok(types),
        (Scenario::OneToOne, _) => Err(CliError::bad_input(
            "filter",
            format!("one-to-one needs a single attack label, found {types:?}; choose one with --attack-label"),
        )),
    }
}

/// Drops configured columns and dirty rows, keeps the scenario's labels and
/// encodes benign as 1, attacks as 0.
pub fn clean_and_encode(raw: &RawTable, config: &RunConfig) -> CliResult<LabeledTable> {
    let cleaned = dataio::clean(raw, &config.drop_columns).stage("clean")?;
    let labels = cleaned.labels();
    let attack_types = resolve_attack_types(&labels, config)?;
    let mut rows = Vec::new();
    let mut types = Vec::new();
    for (row, label) in cleaned.rows().iter().zip(&labels) {
        let t = if *label == config.benign_label {
            None
        } else if let Some(i) = attack_types.iter().position(|a| a == label) {
            Some(i)
        } else {
            continue;
        };
        rows.push(row.clone());
        types.push(t);
    }
    let filtered = RawTable::new(cleaned.column_names().to_vec(), rows, config.label_column.clone()).stage("filter")?;
    let table = dataio::encode_labels::<f64>(&filtered, &config.benign_label).stage("encode")?;
    Ok(LabeledTable {
        table,
        types,
        attack_types,
    })
}

pub fn load_labeled(path: &Path, config: &RunConfig) -> CliResult<LabeledTable> {
    let raw = dataio::load_csv(path, &config.label_column).stage("load")?;
    clean_and_encode(&raw, config)
}

/// Keeps every benign row and `attack_fraction` of each attack type
/// separately (at least one row per type). Row order is preserved.
pub fn subsample(data: &LabeledTable, config: &RunConfig) -> CliResult<LabeledTable> {
    let root = config.stage_seed("subsample");
    let mut keep: Vec<usize> = (0..data.types.len()).filter(|&i| data.types[i].is_none()).collect();
    for (t, name) in data.attack_types.iter().enumerate() {
        let rows: Vec<usize> = (0..data.types.len()).filter(|&i| data.types[i] == Some(t)).collect();
        if rows.is_empty() {
            continue;
        }
        let k = ((config.attack_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len());
        let mut rng = SeededRng::new(derive_seed(root, name));
        keep.extend(rng.sample_indices(rows.len(), k).into_iter().map(|j| rows[j]));
    }
    keep.sort_unstable();
    let out = data.select_rows(&keep);
    if !out.table.has_both_classes() {
        return Err(CliError::bad_input("subsample", flowxai::Error::SingleClass));
    }
    Ok(out)
}

pub fn split(data: &LabeledTable, config: &RunConfig) -> CliResult<(LabeledTable, LabeledTable)> {
    let (train, test) =
        dataio::split_indices(&data.table, config.test_fraction, config.stage_seed("split"), config.stratified)
            .stage("split")?;
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

pub fn scale(train: &LabeledTable, others: &[&LabeledTable]) -> CliResult<(ScalerParams<f64>, LabeledTable, Vec<LabeledTable>)> {
    let params = dataio::fit_scaler(&train.table).stage("scale")?;
    let scaled_train = train.with_table(dataio::apply_scaler(&train.table, &params).stage("scale")?);
    let scaled = others
        .iter()
        .map(|o| Ok(o.with_table(dataio::apply_scaler(&o.table, &params).stage("scale")?)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((params, scaled_train, scaled))
}

/// Draws up to `k` rows without replacement, returned in ascending order.
pub fn sample_rows(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rows = SeededRng::new(seed).sample_indices(n, k.min(n));
    rows.sort_unstable();
    rows
}

/// Importance models and rankings for one benign-vs-attack group.
#[derive(Debug, Clone)]
pub struct GroupSelection {
    pub group: String,
    pub gbt: GbtModelF64,
    pub rankings: Vec<FeatureRanking>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub groups: Vec<GroupSelection>,
    pub combined: FeatureRanking,
}

impl Selection {
    pub fn features(&self) -> Vec<String> {
        self.combined.names()
    }
}

fn rank_group(name: &str, group: &FlowTableF64, config: &RunConfig) -> CliResult<GroupSelection> {
    let stage = "select";
    let seed = |what: &str| config.stage_seed(&format!("{what}/{name}"));
    let gbt = GbtModel::train(group, &config.gbt_config(seed("gbt"))).stage(stage)?;
    let gains: Vec<f64> = gbt.gain_importance();
    let gain = FeatureRanking::from_scores(RankingMethod::Gain, group.feature_names(), &gains).stage(stage)?;
    let permutation = permutation_importance(
        &gbt,
        group,
        config.importance_metric,
        config.permutation_repeats,
        seed("permutation"),
    )
    .stage(stage)?;
    let background = group.select_rows(&sample_rows(group.n_rows(), config.background_size, seed("shap-background")));
    let explained = group.select_rows(&sample_rows(group.n_rows(), config.importance_rows, seed("shap-rows")));
    let explanations =
        batch_explain(&gbt, &explained, &background, config.shap_samples, seed("shap")).stage(stage)?;
    let shap = mean_abs_shap_importance(&explanations).stage(stage)?;
    let rankings = [gain, permutation, shap]
        .iter()
        .map(|r| top_k(r, config.top_k))
        .collect::<flowxai::Result<Vec<_>>>()
        .stage(stage)?;
    Ok(GroupSelection {
        group: name.to_string(),
        gbt,
        rankings,
    })
}

/// Gain, permutation and SHAP rankings of a boosted-tree model, each cut to
/// `top_k`, combined by occurrence frequency. One-to-all runs rank every
/// attack type against benign separately and pool all the rankings.
pub fn select_features(train: &LabeledTable, config: &RunConfig) -> CliResult<Selection> {
    let groups: Vec<(String, Vec<usize>)> = match config.scenario {
        Scenario::OneToOne => vec![(train.attack_types[0].clone(), (0..train.types.len()).collect())],
        Scenario::OneToAll => train
            .attack_types
            .iter()
            .enumerate()
            .map(|(t, name)| {
                let rows = (0..train.types.len())
                    .filter(|&i| train.types[i].is_none() || train.types[i] == Some(t))
                    .collect();
                (name.clone(), rows)
            })
            .collect(),
    };
    let mut selections = Vec::new();
    for (name, rows) in groups {
        let group = train.table.select_rows(&rows);
        if !group.has_both_classes() {
            continue;
        }
        selections.push(rank_group(&name, &group, config)?);
    }
    if selections.is_empty() {
        return Err(CliError::bad_input("select", flowxai::Error::SingleClass));
    }
    let all: Vec<FeatureRanking> = selections.iter().flat_map(|g| g.rankings.iter().cloned()).collect();
    let combined = combine_by_frequency(&all, config.top_k).stage("select")?;
    Ok(Selection {
        groups: selections,
        combined,
    })
}

pub fn project(data: &LabeledTable, features: &[String]) -> CliResult<LabeledTable> {
    Ok(data.with_table(data.table.project(features).stage("project")?))
}

pub fn train_classifier(train: &FlowTableF64, config: &RunConfig) -> CliResult<(MlpModelF64, Vec<f64>)> {
    let init = MlpModel::init(
        train.n_features(),
        &config.mlp.hidden,
        config.mlp.activation,
        config.stage_seed("mlp-init"),
    )
    .stage("train")?;
    init.train(train, &config.train_config()).stage("train")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: Scenario,
    pub feature_count_before: usize,
    pub feature_count_after: usize,
    pub selected_features: Vec<String>,
    pub metrics: EvaluationReport,
    pub per_class: PerClassReport,
}

/// Test-set metrics with malicious as the positive class.
pub fn evaluate_classifier(
    model: &MlpModelF64,
    test: &FlowTableF64,
    config: &RunConfig,
) -> CliResult<(EvaluationReport, PerClassReport)> {
    let probabilities = model.predict_batch(test).stage("evaluate")?;
    let (metrics, per_class, _) =
        evaluate(test.labels(), &probabilities, config.threshold, PositiveClass::Malicious).stage("evaluate")?;
    Ok((metrics, per_class))
}

/// Background rows for the classifier's explanations, drawn from training.
pub fn background_rows(train: &FlowTableF64, config: &RunConfig) -> Vec<usize> {
    sample_rows(train.n_rows(), config.background_size, config.stage_seed("background"))
}

/// Test rows explained for the global artifacts.
pub fn explained_rows(test: &FlowTableF64, config: &RunConfig) -> Vec<usize> {
    let k = ((config.explain_fraction * test.n_rows() as f64).round() as usize).clamp(1, test.n_rows().max(1));
    sample_rows(test.n_rows(), k, config.stage_seed("explain-rows"))
}

pub fn explain(
    model: &MlpModelF64,
    rows: &FlowTableF64,
    background: &FlowTableF64,
    config: &RunConfig,
) -> CliResult<Vec<ShapExplanation<f64>>> {
    batch_explain(model, rows, background, config.shap_samples, config.stage_seed("explain")).stage("explain")
}

#[derive(Debug, Clone)]
pub struct GlobalArtifacts {
    pub summary: SummaryData,
    pub dependence: Option<DependenceData>,
    pub force: ForceData,
}

/// Summary over the explained batch, a dependence plot for the top-ranked
/// feature and a force plot for the first explained row.
pub fn global_artifacts(explanations: &[ShapExplanation<f64>], config: &RunConfig) -> CliResult<GlobalArtifacts> {
    let summary = global_summary(explanations, config.top_k).stage("explain")?;
    let dependence = if explanations[0].n_features() >= 2 {
        Some(dependence_data(explanations, &summary.ranking.entries[0].name).stage("explain")?)
    } else {
        None
    };
    Ok(GlobalArtifacts {
        summary,
        dependence,
        force: force_data(&explanations[0]),
    })
}

/// Keeps the named columns (in the given order) plus the label column.
pub fn project_raw(raw: &RawTable, names: &[String]) -> CliResult<RawTable> {
    let mut keep = Vec::with_capacity(names.len() + 1);
    for name in names {
        let j = raw
            .column_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::bad_input("project", flowxai::Error::UnknownFeature(name.clone())))?;
        keep.push(j);
    }
    let label = raw
        .column_names()
        .iter()
        .position(|c| c == raw.label_column())
        .expect("label column present");
    keep.push(label);
    let columns = keep.iter().map(|&j| raw.column_names()[j].clone()).collect();
    let rows = raw
        .rows()
        .iter()
        .map(|r| keep.iter().map(|&j| r[j].clone()).collect())
        .collect();
    RawTable::new(columns, rows, raw.label_column().to_string()).stage("project")
}

/// Loads a CSV holding at least the scaler's features and scales it.
pub fn load_scaled(path: &Path, scaler: &ScalerParams<f64>, config: &RunConfig) -> CliResult<LabeledTable> {
    let raw = dataio::load_csv(path, &config.label_column).stage("load")?;
    scale_raw(&raw, scaler, config)
}

pub fn scale_raw(raw: &RawTable, scaler: &ScalerParams<f64>, config: &RunConfig) -> CliResult<LabeledTable> {
    let projected = project_raw(raw, &scaler.feature_names)?;
    let data = clean_and_encode(&projected, config)?;
    Ok(data.with_table(dataio::apply_scaler(&data.table, scaler).stage("scale")?))
}

/// Position-preserving version of [`load_scaled`] for picking a single row:
/// no rows are dropped or filtered, so `row` indexes the file's data rows.
pub fn load_row(path: &Path, row: usize, scaler: &ScalerParams<f64>, config: &RunConfig) -> CliResult<(Vec<f64>, String)> {
    let raw = dataio::load_csv(path, &config.label_column).stage("load")?;
    if row >= raw.n_rows() {
        return Err(CliError::bad_input(
            "select-row",
            format!("row {row} out of range for {} rows", raw.n_rows()),
        ));
    }
    let projected = project_raw(&raw, &scaler.feature_names)?;
    let single = RawTable::new(
        projected.column_names().to_vec(),
        vec![projected.rows()[row].clone()],
        config.label_column.clone(),
    )
    .stage("select-row")?;
    let label = single.labels().remove(0);
    let table: FlowTable<f64> = dataio::encode_labels(&single, &config.benign_label).stage("encode")?;
    let scaled = dataio::apply_scaler(&table, scaler).stage("scale")?;
    Ok((scaled.row(0).to_vec(), label))
}

/// Classification outcome of one flow, named `<truth>_predicted_<call>`.
pub fn outcome(is_benign: bool, benign_probability: f64, threshold: f64) -> String {
    let name = |benign: bool| if benign { "benign" } else { "malicious" };
    format!("{}_predicted_{}", name(is_benign), name(benign_probability >= threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_names() {
        assert_eq!(outcome(false, 0.1, 0.5), "malicious_predicted_malicious");
        assert_eq!(outcome(true, 0.2, 0.5), "benign_predicted_malicious");
        assert_eq!(outcome(true, 0.5, 0.5), "benign_predicted_benign");
        assert_eq!(outcome(false, 0.9, 0.5), "malicious_predicted_benign");
    }

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn attack_type_resolution() {
        let mut c = RunConfig::default();
        let l = labels(&["BENIGN", "DrDoS_DNS", "DrDoS_LDAP", "BENIGN"]);
        assert_eq!(resolve_attack_types(&l, &c).unwrap_err().exit_code(), 2);
        c.attack_labels = vec!["DrDoS_DNS".into()];
        assert_eq!(resolve_attack_types(&l, &c).unwrap(), vec!["DrDoS_DNS"]);
        c.attack_labels.clear();
        c.scenario = Scenario::OneToAll;
        assert_eq!(resolve_attack_types(&l, &c).unwrap(), vec!["DrDoS_DNS", "DrDoS_LDAP"]);
        assert!(resolve_attack_types(&labels(&["BENIGN"]), &c).is_err());
        assert!(resolve_attack_types(&labels(&["DrDoS_DNS"]), &c).is_err());
    }

    #[test]
    fn subsample_is_per_type() {
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let types: Vec<Option<usize>> = (0..n)
            .map(|i| match i % 4 {
                0 => None,
                1 => Some(0),
                _ => Some(1),
            })
            .collect();
        let labels = types.iter().map(|t| if t.is_none() { 1 } else { 0 }).collect();
        let data = LabeledTable {
            table: FlowTable::new(vec!["x".into()], rows, labels).unwrap(),
            types,
            attack_types: vec!["A".into(), "B".into()],
        };
        let c = RunConfig {
            attack_fraction: 0.1,
            ..Default::default()
        };
        let s = subsample(&data, &c).unwrap();
        let count = |t: Option<usize>| s.types.iter().filter(|&&x| x == t).count();
        assert_eq!(count(None), 50);
        assert_eq!(count(Some(0)), 5);
        assert_eq!(count(Some(1)), 10);
        assert!(s.table.rows().windows(2).all(|w| w[0][0] < w[1][0]));
    }
}
