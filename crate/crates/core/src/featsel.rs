//! Feature rankings and their frequency-based combination.
//!
//! Three rankings feed the selection: total split gain of a boosted-tree
//! model, permutation importance, and mean absolute Shapley value. Each is
//! truncated to its top `k`; [`combine_by_frequency`] then orders features by
//! how many truncated rankings contain them.
//!
//! Ordering rules:
//! * single-method rankings sort by score descending, ties by name;
//! * combined rankings sort by frequency descending, then by mean 1-based
//!   position across the rankings containing the feature (lower first), then
//!   by name.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::FlowTable;
use crate::error::{Error, Result};
use crate::metrics::{roc_auc, PositiveClass};
use crate::predictor::Predictor;
use crate::rng::{derive_seed, SeededRng};
use crate::scalar::Scalar;
use crate::shapley::ShapExplanation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingMethod {
    Gain,
    Permutation,
    Shap,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: RankingMethod,
    pub entries: Vec<RankEntry>,
}

impl FeatureRanking {
    /// Sorts `(name, score)` pairs by score descending, ties by name.
    pub fn from_scores<S: AsRef<str>>(method: RankingMethod, names: &[S], scores: &[f64]) -> Result<Self> {
        if names.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: scores.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score of {:?}", names[i].as_ref())));
        }
        let mut entries: Vec<RankEntry> = names
            .iter()
            .zip(scores)
            .map(|(n, &score)| RankEntry {
                name: n.as_ref().to_string(),
                score,
            })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
        let ranking = Self { method, entries };
        ranking.check_unique()?;
        Ok(ranking)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        match self.entries.iter().find(|e| !seen.insert(e.name.as_str())) {
            Some(dup) => Err(Error::invalid(format!("duplicate feature {:?} in ranking", dup.name))),
            None => Ok(()),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.score)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataio::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ranking: Self = crate::dataio::read_json(path)?;
        ranking.check_unique()?;
        Ok(ranking)
    }
}

/// First `k` entries in ranking order (all of them if fewer exist).
pub fn top_k(ranking: &FeatureRanking, k: usize) -> Result<FeatureRanking> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(FeatureRanking {
        method: ranking.method,
        entries: ranking.entries.iter().take(k).cloned().collect(),
    })
}

/// Evaluation metric for permutation importance; higher is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMetric {
    /// Accuracy at decision threshold 0.5.
    #[default]
    Accuracy,
    Auc,
}

impl std::str::FromStr for ImportanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(ImportanceMetric::Accuracy),
            "auc" => Ok(ImportanceMetric::Auc),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

impl ImportanceMetric {
    fn evaluate<T: Scalar>(self, labels: &[u8], benign_probabilities: &[T]) -> Result<f64> {
        match self {
            ImportanceMetric::Accuracy => {
                let half = T::lit(0.5);
                let correct = labels
                    .iter()
                    .zip(benign_probabilities)
                    .filter(|(&y, &p)| (p >= half) == (y == 1))
                    .count();
                Ok(correct as f64 / labels.len() as f64)
            }
            ImportanceMetric::Auc => roc_auc(labels, benign_probabilities, PositiveClass::Benign.label()),
        }
    }
}

/// Baseline metric minus the mean metric over `repeats` shuffles of each
/// feature column. Every (feature, repeat) shuffle uses its own derived seed.
pub fn permutation_importance<T, M>(
    model: &M,
    table: &FlowTable<T>,
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<FeatureRanking>
where
    T: Scalar,
    M: Predictor<T> + ?Sized,
{
    if repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    if table.is_empty() {
        return Err(Error::NoRows);
    }
    let labels = table.labels();
    let baseline_preds: Vec<T> = table.rows().iter().map(|r| model.predict(r)).collect();
    let baseline = metric.evaluate(labels, &baseline_preds)?;
    let scores = (0..table.n_features())
        .into_par_iter()
        .map(|j| {
            let mut total = 0.0;
            let mut row = vec![T::zero(); table.n_features()];
            for r in 0..repeats {
                let mut rng = SeededRng::new(derive_seed(seed, &format!("{j}/{r}")));
                let mut column = table.column(j);
                rng.shuffle(&mut column);
                let preds: Vec<T> = table
                    .rows()
                    .iter()
                    .zip(&column)
                    .map(|(orig, &v)| {
                        row.copy_from_slice(orig);
                        row[j] = v;
                        model.predict(&row)
                    })
                    .collect();
                total += metric.evaluate(labels, &preds)?;
            }
            Ok(baseline - total / repeats as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    FeatureRanking::from_scores(RankingMethod::Permutation, table.feature_names(), &scores)
}

/// Mean absolute attribution per feature.
pub fn mean_abs_shap_importance<T: Scalar>(explanations: &[ShapExplanation<T>]) -> Result<FeatureRanking> {
    let first = explanations
        .first()
        .ok_or_else(|| Error::invalid("no explanations"))?;
    let names = &first.feature_names;
    let mut sums = vec![0.0; names.len()];
    for e in explanations {
        if &e.feature_names != names || e.phi.len() != names.len() {
            return Err(Error::invalid("explanations have inconsistent features"));
        }
        for (s, phi) in sums.iter_mut().zip(&e.phi) {
            *s += phi.abs().as_f64();
        }
    }
    let n = explanations.len() as f64;
    let scores: Vec<f64> = sums.iter().map(|s| s / n).collect();
    FeatureRanking::from_scores(RankingMethod::Shap, names, &scores)
}

/// Orders the union of the given rankings by occurrence count and keeps the
/// first `k`. The output score is the count.
pub fn combine_by_frequency(rankings: &[FeatureRanking], k: usize) -> Result<FeatureRanking> {
    if rankings.is_empty() {
        return Err(Error::invalid("empty rankings list"));
    }
    if rankings.len() < 2 {
        return Err(Error::invalid("frequency combination needs at least two rankings"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    // name -> (frequency, sum of 1-based positions)
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ranking in rankings {
        for (pos, entry) in ranking.entries.iter().enumerate() {
            let t = tally.entry(entry.name.as_str()).or_insert((0, 0));
            t.0 += 1;
            t.1 += pos + 1;
        }
    }
    let mut combined: Vec<(&str, usize, f64)> = tally
        .into_iter()
        .map(|(name, (freq, pos_sum))| (name, freq, pos_sum as f64 / freq as f64))
        .collect();
    combined.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| a.2.total_cmp(&b.2))
            .then_with(|| a.0.cmp(b.0))
    });
    Ok(FeatureRanking {
        method: RankingMethod::Combined,
        entries: combined
            .into_iter()
            .take(k)
            .map(|(name, freq, _)| RankEntry {
                name: name.to_string(),
                score: freq as f64,
            })
            .collect(),
    })
}

/// Ordered feature names chosen for the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub features: Vec<String>,
}

impl SelectionManifest {
    pub fn from_ranking(ranking: &FeatureRanking) -> Self {
        Self {
            features: ranking.names(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataio::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let manifest: Self = crate::dataio::read_json(path)?;
        if manifest.features.is_empty() {
            return Err(Error::invalid("selection manifest lists no features"));
        }
        Ok(manifest)
    }
}
