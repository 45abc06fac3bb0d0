//! Second-order gradient-boosted regression trees for binary log-loss.
//!
//! Each round fits one tree to the gradient `g = p - y` and hessian
//! `h = p (1 - p)` of the current ensemble. A node with gradient sum `G` and
//! hessian sum `H` gets leaf value `-G / (H + lambda)`; a candidate split is
//! scored by
//!
//! ```text
//! gain = 1/2 [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - (G_L+G_R)^2/(H_L+H_R+lambda) ] - gamma
//! ```
//!
//! and only splits with positive gain are taken. Candidate thresholds are the
//! midpoints between adjacent distinct sorted values; rows with
//! `x[feature] < threshold` go left.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::FlowTable;
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::rng::SeededRng;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        gain: T,
    },
    Leaf {
        value: T,
    },
}

/// Arena-allocated tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn leaf_value(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel<T> {
    pub n_features: usize,
    pub base_score: T,
    pub learning_rate: T,
    pub trees: Vec<Tree<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 4,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::invalid("n_trees and max_depth must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::invalid("lambda and gamma must be non-negative"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid("subsample must be in (0, 1]"));
        }
        Ok(())
    }
}

struct SplitCandidate<T> {
    feature: usize,
    threshold: T,
    gain: T,
}

struct Builder<'a, T> {
    rows: &'a [Vec<T>],
    grad: &'a [T],
    hess: &'a [T],
    lambda: T,
    gamma: T,
    max_depth: usize,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Builder<'_, T> {
    fn score(&self, g: T, h: T) -> T {
        g * g / (h + self.lambda)
    }

    fn best_split(&self, idx: &[usize]) -> Option<SplitCandidate<T>> {
        let half = T::lit(0.5);
        let g_total: T = idx.iter().map(|&i| self.grad[i]).sum();
        let h_total: T = idx.iter().map(|&i| self.hess[i]).sum();
        let parent = self.score(g_total, h_total);
        let p = self.rows[0].len();
        let mut best: Option<SplitCandidate<T>> = None;
        let mut sorted = idx.to_vec();
        for feature in 0..p {
            sorted.sort_by(|&a, &b| self.rows[a][feature].partial_cmp(&self.rows[b][feature]).unwrap());
            let (mut gl, mut hl) = (T::zero(), T::zero());
            for k in 0..sorted.len() - 1 {
                let i = sorted[k];
                gl += self.grad[i];
                hl += self.hess[i];
                let here = self.rows[i][feature];
                let next = self.rows[sorted[k + 1]][feature];
                if next <= here {
                    continue;
                }
                let gr = g_total - gl;
                let hr = h_total - hl;
                let gain = half * (self.score(gl, hl) + self.score(gr, hr) - parent) - self.gamma;
                if gain > T::zero() && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate {
                        feature,
                        threshold: (here + next) * half,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let g: T = idx.iter().map(|&i| self.grad[i]).sum();
        let h: T = idx.iter().map(|&i| self.hess[i]).sum();
        self.nodes.push(Node::Leaf {
            value: -g / (h + self.lambda),
        });
        if depth >= self.max_depth || idx.len() < 2 {
            return id;
        }
        if let Some(split) = self.best_split(idx) {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                .iter()
                .partition(|&&i| self.rows[i][split.feature] < split.threshold);
            let left = self.build(&left_idx, depth + 1);
            let right = self.build(&right_idx, depth + 1);
            self.nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
                gain: split.gain,
            };
        }
        id
    }
}

impl<T: Scalar> GbtModel<T> {
    pub fn train(data: &FlowTable<T>, config: &GbtConfig) -> Result<Self> {
        config.validate()?;
        if !data.has_both_classes() {
            return Err(Error::SingleClass);
        }
        let n = data.n_rows();
        let y: Vec<T> = data.labels().iter().map(|&l| T::lit(l as f64)).collect();
        let mean = y.iter().copied().sum::<T>() / T::lit(n as f64);
        let base_score = (mean / (T::one() - mean)).ln();
        let lr = T::lit(config.learning_rate);
        let mut model = GbtModel {
            n_features: data.n_features(),
            base_score,
            learning_rate: lr,
            trees: Vec::with_capacity(config.n_trees),
        };
        let mut margin = vec![base_score; n];
        let mut rng = SeededRng::new(config.seed);
        let sample_size = ((config.subsample * n as f64).round() as usize).clamp(1, n);
        for _ in 0..config.n_trees {
            let p: Vec<T> = margin.iter().map(|&m| sigmoid(m)).collect();
            let grad: Vec<T> = p.iter().zip(&y).map(|(&p, &y)| p - y).collect();
            let hess: Vec<T> = p.iter().map(|&p| p * (T::one() - p)).collect();
            let mut idx = if sample_size < n {
                rng.sample_indices(n, sample_size)
            } else {
                (0..n).collect()
            };
            idx.sort_unstable();
            let mut builder = Builder {
                rows: data.rows(),
                grad: &grad,
                hess: &hess,
                lambda: T::lit(config.lambda),
                gamma: T::lit(config.gamma),
                max_depth: config.max_depth,
                nodes: Vec::new(),
            };
            builder.build(&idx, 0);
            let tree = Tree { nodes: builder.nodes };
            for (m, row) in margin.iter_mut().zip(data.rows()) {
                *m += lr * tree.leaf_value(row);
            }
            model.trees.push(tree);
        }
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_score.is_finite() && self.learning_rate.is_finite()) {
            return Err(Error::InvalidModel("non-finite base_score or learning_rate".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::InvalidModel(format!("tree {t} is empty")));
            }
            for node in &tree.nodes {
                match node {
                    Node::Leaf { value } if !value.is_finite() => {
                        return Err(Error::InvalidModel(format!("tree {t} has a non-finite leaf")))
                    }
                    Node::Split {
                        feature, left, right, ..
                    } if *feature >= self.n_features
                        || *left >= tree.nodes.len()
                        || *right >= tree.nodes.len() =>
                    {
                        return Err(Error::InvalidModel(format!("tree {t} has an out-of-range reference")))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Raw additive score before the logistic link.
    pub fn margin(&self, x: &[T]) -> T {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.leaf_value(x)).sum::<T>()
    }

    /// Probability of the benign class.
    pub fn predict_checked(&self, x: &[T]) -> Result<T> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(sigmoid(self.margin(x)))
    }

    /// Total split gain per feature over every node of every tree.
    pub fn gain_importance(&self) -> Vec<T> {
        let mut scores = vec![T::zero(); self.n_features];
        for node in self.trees.iter().flat_map(|t| &t.nodes) {
            if let Node::Split { feature, gain, .. } = node {
                scores[*feature] += *gain;
            }
        }
        scores
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataio::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = crate::dataio::read_json(path)?;
        model.validate()?;
        Ok(model)
    }
}

impl<T: Scalar> Predictor<T> for GbtModel<T> {
    fn predict(&self, x: &[T]) -> T {
        sigmoid(self.margin(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_feature_separable() -> FlowTable<f64> {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let labels = xs.iter().map(|&x| u8::from(x > 0.5)).collect();
        FlowTable::new(vec!["x".into()], xs.into_iter().map(|x| vec![x]).collect(), labels).unwrap()
    }

    fn log_loss(model: &GbtModel<f64>, data: &FlowTable<f64>) -> f64 {
        data.rows()
            .iter()
            .zip(data.labels())
            .map(|(x, &y)| {
                let p = model.predict(x);
                if y == 1 { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / data.n_rows() as f64
    }

    #[test]
    fn separates_one_feature() {
        let data = one_feature_separable();
        let config = GbtConfig {
            n_trees: 10,
            max_depth: 1,
            ..GbtConfig::default()
        };
        let model = GbtModel::train(&data, &config).unwrap();
        let correct = data
            .rows()
            .iter()
            .zip(data.labels())
            .filter(|(x, &y)| (model.predict(x) >= 0.5) == (y == 1))
            .count();
        assert_eq!(correct, data.n_rows());
        assert!(model.predict(&[1.0]) > model.predict(&[0.0]));
        assert!(model.trees.iter().all(|t| t.depth() <= 1));
        assert_eq!(GbtModel::train(&data, &config).unwrap(), model);
    }

    #[test]
    fn log_loss_decreases_over_first_rounds() {
        let data = one_feature_separable();
        let mut previous = f64::INFINITY;
        for n_trees in 1..=5 {
            let config = GbtConfig {
                n_trees,
                max_depth: 1,
                ..GbtConfig::default()
            };
            let loss = log_loss(&GbtModel::train(&data, &config).unwrap(), &data);
            assert!(loss < previous, "round {n_trees}: {loss} >= {previous}");
            previous = loss;
        }
    }

    #[test]
    fn rejects_bad_config_and_single_class() {
        let data = one_feature_separable();
        let zero = GbtConfig {
            n_trees: 0,
            ..GbtConfig::default()
        };
        assert!(GbtModel::train(&data, &zero).is_err());
        let single = FlowTable::new(vec!["x".into()], vec![vec![0.0], vec![1.0]], vec![0, 0]).unwrap();
        assert!(matches!(
            GbtModel::train(&single, &GbtConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn pure_node_is_not_split() {
        // With equal gradients everywhere, every split has non-positive gain.
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let grad = vec![-0.5; 10];
        let hess = vec![0.25; 10];
        let builder = Builder {
            rows: &rows,
            grad: &grad,
            hess: &hess,
            lambda: 1.0,
            gamma: 0.0,
            max_depth: 3,
            nodes: Vec::new(),
        };
        assert!(builder.best_split(&(0..10).collect::<Vec<_>>()).is_none());

        // The all-benign side of a perfect split ends as a leaf.
        let data = one_feature_separable();
        let config = GbtConfig {
            n_trees: 1,
            max_depth: 3,
            ..GbtConfig::default()
        };
        let model = GbtModel::train(&data, &config).unwrap();
        let nodes = &model.trees[0].nodes;
        match &nodes[0] {
            Node::Split { left, right, threshold, .. } => {
                assert!(*threshold > 0.49 && *threshold < 0.52);
                assert!(matches!(nodes[*left], Node::Leaf { .. }));
                assert!(matches!(nodes[*right], Node::Leaf { .. }));
            }
            other => panic!("root should split, got {other:?}"),
        }
    }

    fn stump(feature: usize, threshold: f64, gain: f64, left: f64, right: f64) -> Tree<f64> {
        Tree {
            nodes: vec![
                Node::Split { feature, threshold, left: 1, right: 2, gain },
                Node::Leaf { value: left },
                Node::Leaf { value: right },
            ],
        }
    }

    #[test]
    fn prediction_traces_leaves() {
        let empty = GbtModel {
            n_features: 2,
            base_score: 0.4,
            learning_rate: 0.3,
            trees: vec![],
        };
        assert_eq!(empty.predict_checked(&[0.0, 0.0]).unwrap(), sigmoid(0.4));

        let model = GbtModel {
            n_features: 2,
            base_score: 0.0,
            learning_rate: 0.5,
            trees: vec![stump(1, 0.25, 2.0, -1.2, 0.8)],
        };
        // x[1] = 0.1 < 0.25: left leaf -1.2, margin = 0.5 * -1.2.
        assert_eq!(model.predict_checked(&[9.0, 0.1]).unwrap(), sigmoid(-0.6));
        assert_eq!(model.predict_checked(&[9.0, 0.3]).unwrap(), sigmoid(0.4));
        assert!(matches!(
            model.predict_checked(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_leaf_tree_leaves_predictions_unchanged() {
        let mut model = GbtModel {
            n_features: 1,
            base_score: 0.1,
            learning_rate: 0.3,
            trees: vec![stump(0, 0.5, 1.0, -1.0, 1.0)],
        };
        let before = [model.predict(&[0.2]), model.predict(&[0.7])];
        model.trees.push(stump(0, 0.5, 1.0, 0.0, 3.0));
        assert_eq!(model.predict(&[0.2]), before[0]);
        assert_ne!(model.predict(&[0.7]), before[1]);
    }

    #[test]
    fn gain_importance_sums_gains() {
        let model = GbtModel {
            n_features: 3,
            base_score: 0.0,
            learning_rate: 0.3,
            trees: vec![stump(2, 0.5, 1.5, -1.0, 1.0)],
        };
        assert_eq!(model.gain_importance(), vec![0.0, 0.0, 1.5]);

        let model = GbtModel {
            n_features: 2,
            base_score: 0.0,
            learning_rate: 0.3,
            trees: vec![
                stump(0, 0.5, 3.0, -1.0, 1.0),
                stump(0, 0.2, 1.0, -1.0, 1.0),
                stump(1, 0.5, 2.0, -1.0, 1.0),
            ],
        };
        assert_eq!(model.gain_importance(), vec![4.0, 2.0]);
    }

    #[test]
    fn constant_feature_has_zero_importance() {
        let base = one_feature_separable();
        let rows = base.rows().iter().map(|r| vec![7.0, r[0]]).collect();
        let data = FlowTable::new(vec!["const".into(), "x".into()], rows, base.labels().to_vec()).unwrap();
        let model = GbtModel::train(&data, &GbtConfig::default()).unwrap();
        let imp = model.gain_importance();
        assert_eq!(imp[0], 0.0);
        assert!(imp[1] > 0.0);
        assert!(imp.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn subsampling_is_seeded() {
        let data = one_feature_separable();
        let config = GbtConfig {
            subsample: 0.5,
            seed: 4,
            ..GbtConfig::default()
        };
        let a = GbtModel::train(&data, &config).unwrap();
        assert_eq!(a, GbtModel::train(&data, &config).unwrap());
        let other = GbtConfig { seed: 5, ..config };
        assert_ne!(a, GbtModel::train(&data, &other).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let data = one_feature_separable();
        let model = GbtModel::train(&data, &GbtConfig { n_trees: 3, ..GbtConfig::default() }).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        model.save(f.path()).unwrap();
        assert_eq!(GbtModel::<f64>::load(f.path()).unwrap(), model);

        let mut bad = model.clone();
        bad.trees[0].nodes[0] = Node::Split { feature: 5, threshold: 0.0, left: 1, right: 2, gain: 1.0 };
        bad.save(f.path()).unwrap();
        assert!(matches!(GbtModel::<f64>::load(f.path()), Err(Error::InvalidModel(_))));
    }
}
