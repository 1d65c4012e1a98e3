//! K-nearest neighbours, linear discriminant analysis, a linear one-vs-one
//! SVM and a binary decision tree.
//!
//! Training rows are put into a canonical order (by label, then values)
//! before fitting, so every classifier is invariant to the order of the
//! training matrix, floating-point summation included.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{cholesky, cholesky_solve, dot, Square};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Lda,
    Svm,
    Bdt,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Knn,
        ClassifierKind::Lda,
        ClassifierKind::Svm,
        ClassifierKind::Bdt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Lda => "lda",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Bdt => "bdt",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "knn" => Ok(ClassifierKind::Knn),
            "lda" => Ok(ClassifierKind::Lda),
            "svm" => Ok(ClassifierKind::Svm),
            "bdt" | "tree" => Ok(ClassifierKind::Bdt),
            other => Err(Error::InvalidConfig(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub knn_k: usize,
    /// Ridge added to the pooled covariance; `None` means `1e-6 * trace / d`.
    pub lda_shrinkage: Option<f64>,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub svm_initial_step: f64,
    pub bdt_max_depth: usize,
    pub bdt_min_leaf: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            knn_k: 5,
            lda_shrinkage: None,
            svm_lambda: 1e-3,
            svm_epochs: 200,
            svm_initial_step: 1.0,
            bdt_max_depth: 16,
            bdt_min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    dims: usize,
    /// Class indices present in training, ascending.
    classes: Vec<usize>,
    model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    Knn(Knn),
    Lda(Lda),
    Svm(OneVsOneSvm),
    Bdt(DecisionTree),
}

/// Training data in canonical row order.
struct Canonical {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: Vec<usize>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn canonicalize(train: &FeatureMatrix) -> Result<Canonical> {
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    order.sort_by(|&i, &j| {
        train.labels()[i]
            .cmp(&train.labels()[j])
            .then_with(|| lexicographic(train.row(i), train.row(j)))
    });
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| train.row(i).to_vec()).collect();
    let labels: Vec<usize> = order.iter().map(|&i| train.labels()[i]).collect();
    let mut classes = labels.clone();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    Ok(Canonical {
        rows,
        labels,
        classes,
    })
}

/// Fits a classifier of the given kind.
///
/// `rng` is accepted for interface uniformity; all four fits are
/// deterministic functions of the training set.
pub fn train(
    kind: ClassifierKind,
    train: &FeatureMatrix,
    params: &ClassifierParams,
    _rng: &mut Rng,
) -> Result<TrainedClassifier> {
    let data = canonicalize(train)?;
    let model = match kind {
        ClassifierKind::Knn => Model::Knn(Knn::fit(&data, params)?),
        ClassifierKind::Lda => Model::Lda(Lda::fit(&data, params)?),
        ClassifierKind::Svm => Model::Svm(OneVsOneSvm::fit(&data, params)?),
        ClassifierKind::Bdt => Model::Bdt(DecisionTree::fit(&data, params)?),
    };
    Ok(TrainedClassifier {
        dims: train.n_cols(),
        classes: data.classes,
        model,
    })
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        match self.model {
            Model::Knn(_) => ClassifierKind::Knn,
            Model::Lda(_) => ClassifierKind::Lda,
            Model::Svm(_) => ClassifierKind::Svm,
            Model::Bdt(_) => ClassifierKind::Bdt,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        match &self.model {
            Model::Knn(m) => m.predict(row),
            Model::Lda(m) => m.predict(row),
            Model::Svm(m) => m.predict(row),
            Model::Bdt(m) => m.predict(row),
        }
    }

    /// One class index per row.
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
        if matrix.n_cols() != self.dims {
            return Err(Error::DimMismatch {
                expected: self.dims,
                found: matrix.n_cols(),
            });
        }
        Ok((0..matrix.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row(matrix.row(i)))
            .collect())
    }
}

/// Free-function form of [`TrainedClassifier::predict`].
pub fn predict(model: &TrainedClassifier, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
    model.predict(matrix)
}

/// Index of the maximum score; ties go to the earliest entry.
fn argmax_first(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Knn {
    k: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: Vec<usize>,
}

impl Knn {
    fn fit(data: &Canonical, params: &ClassifierParams) -> Result<Self> {
        if params.knn_k == 0 {
            return Err(Error::InvalidConfig("knn_k must be positive".into()));
        }
        Ok(Self {
            k: params.knn_k.min(data.rows.len()),
            rows: data.rows.clone(),
            labels: data.labels.clone(),
            classes: data.classes.clone(),
        })
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .zip(&self.labels)
            .map(|(r, &l)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), l))
            .collect();
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_distance);
        }
        let mut votes = vec![0usize; self.classes.len()];
        for &(_, l) in &dist[..self.k] {
            let slot = self.classes.binary_search(&l).expect("trained class");
            votes[slot] += 1;
        }
        self.classes[argmax_first(votes.iter().map(|&v| v as f64))]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Lda {
    /// Σ⁻¹ μ_c per class.
    weights: Vec<Vec<f64>>,
    /// −½ μ_cᵀ Σ⁻¹ μ_c + ln π_c per class.
    offsets: Vec<f64>,
    classes: Vec<usize>,
}

impl Lda {
    fn fit(data: &Canonical, params: &ClassifierParams) -> Result<Self> {
        let d = data.rows[0].len();
        let n = data.rows.len();
        let c = data.classes.len();
        let mut means = vec![vec![0.0; d]; c];
        let mut counts = vec![0usize; c];
        for (row, l) in data.rows.iter().zip(&data.labels) {
            let slot = data.classes.binary_search(l).expect("class");
            counts[slot] += 1;
            for (m, x) in means[slot].iter_mut().zip(row) {
                *m += x;
            }
        }
        for (m, &cnt) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= cnt as f64);
        }
        let mut cov: Square = vec![vec![0.0; d]; d];
        for (row, l) in data.rows.iter().zip(&data.labels) {
            let slot = data.classes.binary_search(l).expect("class");
            let diff: Vec<f64> = row.iter().zip(&means[slot]).map(|(x, m)| x - m).collect();
            for i in 0..d {
                if diff[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    cov[i][j] += diff[i] * diff[j];
                }
            }
        }
        let dof = if n > c { (n - c) as f64 } else { n as f64 };
        let trace: f64 = (0..d).map(|i| cov[i][i] / dof).sum();
        let mut ridge = params.lda_shrinkage.unwrap_or(1e-6 * trace / d as f64);
        if !(ridge > 0.0) {
            ridge = 1e-9;
        }
        for (i, row) in cov.iter_mut().enumerate() {
            row.iter_mut().for_each(|v| *v /= dof);
            row[i] += ridge;
        }
        let chol = cholesky(&cov)?;
        let mut weights = Vec::with_capacity(c);
        let mut offsets = Vec::with_capacity(c);
        for (m, &cnt) in means.iter().zip(&counts) {
            let w = cholesky_solve(&chol, m);
            offsets.push(-0.5 * dot(m, &w) + (cnt as f64 / n as f64).ln());
            weights.push(w);
        }
        Ok(Self {
            weights,
            offsets,
            classes: data.classes.clone(),
        })
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.offsets)
            .map(|(w, o)| dot(w, x) + o)
            .collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        self.classes[argmax_first(self.scores(x))]
    }
}

/// Linear soft-margin classifier for one class pair, `+1` for the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// `λ/2 ‖w‖² + mean(max(0, 1 − y (w·x + b)))`.
    pub fn objective(&self, rows: &[&[f64]], targets: &[f64], lambda: f64) -> f64 {
        let hinge: f64 = rows
            .iter()
            .zip(targets)
            .map(|(x, y)| (1.0 - y * self.decision(x)).max(0.0))
            .sum::<f64>()
            / rows.len() as f64;
        0.5 * lambda * dot(&self.weights, &self.weights) + hinge
    }

    /// Full-batch subgradient descent on the hinge objective.
    ///
    /// A step is only taken if it lowers the objective; otherwise the step
    /// size is halved and the step retried, so the returned per-epoch
    /// objective history is non-increasing.
    pub fn fit(rows: &[&[f64]], targets: &[f64], lambda: f64, epochs: usize, initial_step: f64) -> (Self, Vec<f64>) {
        let d = rows.first().map_or(0, |r| r.len());
        let m = rows.len() as f64;
        let mut model = BinarySvm {
            weights: vec![0.0; d],
            bias: 0.0,
        };
        let mut current = model.objective(rows, targets, lambda);
        let mut history = vec![current];
        let mut step = initial_step;
        'epochs: for _ in 0..epochs {
            let mut gw: Vec<f64> = model.weights.iter().map(|w| lambda * w).collect();
            let mut gb = 0.0;
            for (x, &y) in rows.iter().zip(targets) {
                if y * model.decision(x) < 1.0 {
                    for (g, xi) in gw.iter_mut().zip(x.iter()) {
                        *g -= y * xi / m;
                    }
                    gb -= y / m;
                }
            }
            loop {
                let candidate = BinarySvm {
                    weights: model.weights.iter().zip(&gw).map(|(w, g)| w - step * g).collect(),
                    bias: model.bias - step * gb,
                };
                let value = candidate.objective(rows, targets, lambda);
                if value < current {
                    model = candidate;
                    current = value;
                    step *= 1.25;
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    history.push(current);
                    break 'epochs;
                }
            }
            history.push(current);
        }
        (model, history)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OneVsOneSvm {
    /// `(first, second, model)` with `first < second` as class slots.
    pairs: Vec<(usize, usize, BinarySvm)>,
    classes: Vec<usize>,
}

impl OneVsOneSvm {
    fn fit(data: &Canonical, params: &ClassifierParams) -> Result<Self> {
        if !(params.svm_lambda > 0.0) {
            return Err(Error::InvalidConfig("svm_lambda must be positive".into()));
        }
        let c = data.classes.len();
        let mut tasks = Vec::new();
        for a in 0..c {
            for b in a + 1..c {
                tasks.push((a, b));
            }
        }
        let pairs = tasks
            .into_par_iter()
            .map(|(a, b)| {
                let (ca, cb) = (data.classes[a], data.classes[b]);
                let mut rows = Vec::new();
                let mut targets = Vec::new();
                for (r, &l) in data.rows.iter().zip(&data.labels) {
                    if l == ca || l == cb {
                        rows.push(r.as_slice());
                        targets.push(if l == ca { 1.0 } else { -1.0 });
                    }
                }
                let (svm, _) = BinarySvm::fit(&rows, &targets, params.svm_lambda, params.svm_epochs, params.svm_initial_step);
                (a, b, svm)
            })
            .collect();
        Ok(Self {
            pairs,
            classes: data.classes.clone(),
        })
    }

    /// Votes, ties broken by aggregate margin, then by class index.
    fn predict(&self, x: &[f64]) -> usize {
        let c = self.classes.len();
        let mut votes = vec![0usize; c];
        let mut margin = vec![0.0; c];
        for (a, b, svm) in &self.pairs {
            let s = svm.decision(x);
            if s >= 0.0 {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
            margin[*a] += s;
            margin[*b] -= s;
        }
        let mut best = 0;
        for i in 1..c {
            if votes[i] > votes[best] || (votes[i] == votes[best] && margin[i] > margin[best]) {
                best = i;
            }
        }
        self.classes[best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        class: usize,
    },
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Greedy Gini tree with midpoint thresholds, stored as an arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DecisionTree {
    nodes: Vec<Node>,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl DecisionTree {
    fn fit(data: &Canonical, params: &ClassifierParams) -> Result<Self> {
        let slots: Vec<usize> = data
            .labels
            .iter()
            .map(|l| data.classes.binary_search(l).expect("class"))
            .collect();
        let mut tree = Self { nodes: Vec::new() };
        let all: Vec<usize> = (0..data.rows.len()).collect();
        tree.grow(data, &slots, all, 0, params);
        Ok(tree)
    }

    fn majority(data: &Canonical, slots: &[usize], samples: &[usize]) -> (usize, Vec<usize>) {
        let mut counts = vec![0usize; data.classes.len()];
        for &s in samples {
            counts[slots[s]] += 1;
        }
        let best = argmax_first(counts.iter().map(|&c| c as f64));
        (data.classes[best], counts)
    }

    fn grow(&mut self, data: &Canonical, slots: &[usize], samples: Vec<usize>, depth: usize, params: &ClassifierParams) -> usize {
        let id = self.nodes.len();
        let (class, counts) = Self::majority(data, slots, &samples);
        self.nodes.push(Node::Leaf { class });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let min_leaf = params.bdt_min_leaf.max(1);
        if pure || depth >= params.bdt_max_depth || samples.len() < 2 * min_leaf {
            return id;
        }
        let parent = gini(&counts, samples.len());
        let Some((dim, threshold)) = Self::best_split(data, slots, &samples, min_leaf, parent) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.into_iter().partition(|&s| data.rows[s][dim] <= threshold);
        let l = self.grow(data, slots, left, depth + 1, params);
        let r = self.grow(data, slots, right, depth + 1, params);
        self.nodes[id] = Node::Split {
            dim,
            threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Lowest weighted Gini split; earlier dimensions and smaller thresholds
    /// win ties. Only splits that strictly reduce impurity qualify.
    fn best_split(data: &Canonical, slots: &[usize], samples: &[usize], min_leaf: usize, parent: f64) -> Option<(usize, f64)> {
        let n = samples.len();
        let c = data.classes.len();
        let d = data.rows[0].len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = samples.to_vec();
        for dim in 0..d {
            order.sort_by(|&a, &b| data.rows[a][dim].total_cmp(&data.rows[b][dim]).then(a.cmp(&b)));
            let mut left = vec![0usize; c];
            let mut right = vec![0usize; c];
            for &s in &order {
                right[slots[s]] += 1;
            }
            for i in 1..n {
                let moved = order[i - 1];
                left[slots[moved]] += 1;
                right[slots[moved]] -= 1;
                let lo = data.rows[moved][dim];
                let hi = data.rows[order[i]][dim];
                if i < min_leaf || n - i < min_leaf || !(lo < hi) {
                    continue;
                }
                let impurity = (i as f64 * gini(&left, i) + (n - i) as f64 * gini(&right, n - i)) / n as f64;
                if impurity < parent - 1e-12 && best.is_none_or(|(b, _, _)| impurity < b - 1e-15) {
                    best = Some((impurity, dim, 0.5 * (lo + hi)));
                }
            }
        }
        best.map(|(_, dim, t)| (dim, t))
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => id = if x[*dim] <= *threshold { *left } else { *right },
            }
        }
    }

    fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl TrainedClassifier {
    /// Depth of a decision tree; `None` for the other kinds.
    pub fn tree_depth(&self) -> Option<usize> {
        match &self.model {
            Model::Bdt(t) => Some(t.depth()),
            _ => None,
        }
    }
}
