//! Trainable models: ridge regression, multinomial logistic regression and a
//! CART random forest.
//!
//! Feature matrices are row-major `&[Vec<f64>]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimMismatch {
            expected,
            got: x.len(),
            line: None,
        });
    }
    Ok(())
}

fn check_matrix(x: &[Vec<f64>], n_targets: usize) -> Result<usize> {
    let d = x.first().ok_or(Error::EmptyTrainingSet)?.len();
    if n_targets != x.len() {
        return Err(Error::LengthMismatch {
            preds: x.len(),
            golds: n_targets,
        });
    }
    for row in x {
        check_dim(d, row)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadParam {
                path: "features".into(),
                reason: "non-finite feature value".into(),
            });
        }
    }
    Ok(d)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Ridge regression

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

/// Cholesky solve of the symmetric system `a x = b`; `None` if `a` is not
/// numerically positive definite.
fn cholesky_solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> Option<Vec<f64>> {
    let d = b.len();
    let scale = (0..d).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..d {
        let mut diag = a[j][j];
        for k in 0..j {
            diag -= a[j][k] * a[j][k];
        }
        if !(diag > 1e-12 * scale) {
            return None;
        }
        let l = diag.sqrt();
        a[j][j] = l;
        for i in j + 1..d {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / l;
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| a[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / a[i][i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| a[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / a[i][i];
    }
    Some(x)
}

/// Minimizes `sum (y - Xw - b)^2 + lambda |w|^2` with an unpenalized bias, via
/// the normal equations on centered data.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel> {
    let d = check_matrix(x, y.len())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::BadParam {
            path: "lambda".into(),
            reason: format!("must be a finite value >= 0, got {lambda}"),
        });
    }
    let n = x.len() as f64;
    let x_mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let y_mean = y.iter().sum::<f64>() / n;

    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for (row, &t) in x.iter().zip(y) {
        let c: Vec<f64> = row.iter().zip(&x_mean).map(|(v, m)| v - m).collect();
        let yt = t - y_mean;
        for i in 0..d {
            rhs[i] += c[i] * yt;
            for j in 0..=i {
                gram[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        gram[i][i] += lambda;
        for j in 0..i {
            gram[j][i] = gram[i][j];
        }
    }
    let weights = if d == 0 {
        Vec::new()
    } else {
        cholesky_solve(gram, &rhs).ok_or(Error::SingularSystem)?
    };
    let bias = y_mean - dot(&weights, &x_mean);
    Ok(LinearModel {
        weights,
        bias,
        lambda,
    })
}

pub fn ridge_predict(m: &LinearModel, x: &[f64]) -> Result<f64> {
    check_dim(m.weights.len(), x)?;
    Ok(dot(&m.weights, x) + m.bias)
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            lr: 0.1,
            epochs: 2000,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `K x d`, one row per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(n_classes: usize, d: usize) -> Self {
        LogisticModel {
            weights: vec![vec![0.0; d]; n_classes],
            biases: vec![0.0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dims(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy plus `l2 / 2 * |W|^2` (biases unpenalized) and its
/// gradient with respect to the weights and biases.
pub fn logistic_loss_and_grad(
    m: &LogisticModel,
    x: &[Vec<f64>],
    labels: &[usize],
    l2: f64,
) -> (f64, LogisticModel) {
    let (k, d) = (m.n_classes(), m.dims());
    let n = x.len() as f64;
    let mut grad = LogisticModel::zeros(k, d);
    let mut loss = 0.0;
    for (row, &y) in x.iter().zip(labels) {
        let logits = m.logits(row);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - logits[y];
        for (c, z) in logits.iter().enumerate() {
            let g = (z - lse).exp() - if c == y { 1.0 } else { 0.0 };
            grad.biases[c] += g / n;
            for (gw, xv) in grad.weights[c].iter_mut().zip(row) {
                *gw += g * xv / n;
            }
        }
    }
    loss /= n;
    let mut penalty = 0.0;
    for (gw, w) in grad.weights.iter_mut().zip(&m.weights) {
        for (g, v) in gw.iter_mut().zip(w) {
            *g += l2 * v;
            penalty += v * v;
        }
    }
    (loss + 0.5 * l2 * penalty, grad)
}

/// Full-batch gradient descent from zero weights.
pub fn logistic_fit(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    params: LogisticParams,
) -> Result<LogisticModel> {
    let d = check_matrix(x, labels.len())?;
    if n_classes < 2 {
        return Err(Error::BadParam {
            path: "classes".into(),
            reason: "need at least two classes".into(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::BadParam {
            path: "labels".into(),
            reason: format!("class index {bad} >= {n_classes}"),
        });
    }
    let mut seen = vec![false; n_classes];
    labels.iter().for_each(|&l| seen[l] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        log::warn!("class index {missing} has no training examples");
    }
    let mut m = LogisticModel::zeros(n_classes, d);
    for epoch in 0..params.epochs {
        let (loss, grad) = logistic_loss_and_grad(&m, x, labels, params.l2);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        for (w, g) in m.weights.iter_mut().zip(&grad.weights) {
            for (wv, gv) in w.iter_mut().zip(g) {
                *wv -= params.lr * gv;
            }
        }
        for (b, g) in m.biases.iter_mut().zip(&grad.biases) {
            *b -= params.lr * g;
        }
    }
    let (loss, _) = logistic_loss_and_grad(&m, x, labels, params.l2);
    if !loss.is_finite() || m.biases.iter().any(|b| !b.is_finite()) {
        return Err(Error::Diverged {
            epoch: params.epochs,
        });
    }
    Ok(m)
}

pub fn logistic_predict_proba(m: &LogisticModel, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(m.dims(), x)?;
    Ok(softmax(&m.logits(x)))
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Random forest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForestMode {
    Regression,
    Classification,
}

/// Target values for forest training.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Regression(&'a [f64]),
    /// Class indices below `n_classes`.
    Classification {
        labels: &'a [usize],
        n_classes: usize,
    },
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.len(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `max(1, d/3)` for regression and
    /// `max(1, floor(sqrt(d)))` for classification.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    /// Build trees on the rayon pool. Output does not depend on it, so it is
    /// not part of the serialized model.
    #[serde(skip, default = "parallel_default")]
    pub parallel: bool,
}

fn parallel_default() -> bool {
    true
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 100,
            max_depth: 5,
            seed: 42,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            parallel: true,
        }
    }
}

impl ForestConfig {
    pub fn resolved_features_per_split(&self, mode: ForestMode, d: usize) -> usize {
        let default = match mode {
            ForestMode::Regression => d / 3,
            ForestMode::Classification => (d as f64).sqrt().floor() as usize,
        };
        self.features_per_split.unwrap_or(default).clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
    ClassLeaf {
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                _ => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub mode: ForestMode,
    pub n_features: usize,
    /// Number of classes in classification mode, 0 for regression.
    pub n_classes: usize,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

/// Prediction of a forest for one row.
#[derive(Debug, Clone, PartialEq)]
pub enum ForestOutput {
    Value(f64),
    Probs(Vec<f64>),
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    targets: Targets<'a>,
    max_depth: usize,
    min_samples_split: usize,
    features_per_split: usize,
    rng: SeededRng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&self, rows: &[usize]) -> Node {
        match self.targets {
            Targets::Regression(y) => Node::Leaf {
                value: rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64,
            },
            Targets::Classification { labels, n_classes } => {
                let mut counts = vec![0u32; n_classes];
                rows.iter().for_each(|&r| counts[labels[r]] += 1);
                Node::ClassLeaf { counts }
            }
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        match self.targets {
            Targets::Regression(y) => rows.iter().all(|&r| y[r] == y[rows[0]]),
            Targets::Classification { labels, .. } => rows.iter().all(|&r| labels[r] == labels[rows[0]]),
        }
    }

    /// Best `(impurity, threshold)` for one feature, lowest threshold on ties.
    fn best_threshold(&self, rows: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut sorted: Vec<usize> = rows.to_vec();
        sorted.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let value = |i: usize| self.x[sorted[i]][feature];
        let n = sorted.len();
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |impurity: f64, threshold: f64| {
            if best.is_none_or(|(b, _)| impurity < b) {
                best = Some((impurity, threshold));
            }
        };
        match self.targets {
            Targets::Regression(y) => {
                let (total, total_sq) = sorted
                    .iter()
                    .fold((0.0, 0.0), |(s, q), &r| (s + y[r], q + y[r] * y[r]));
                let (mut ls, mut lq) = (0.0, 0.0);
                for i in 0..n - 1 {
                    let t = y[sorted[i]];
                    ls += t;
                    lq += t * t;
                    if value(i) == value(i + 1) {
                        continue;
                    }
                    let (nl, nr) = ((i + 1) as f64, (n - i - 1) as f64);
                    let (rs, rq) = (total - ls, total_sq - lq);
                    let sse = (lq - ls * ls / nl) + (rq - rs * rs / nr);
                    consider(sse, 0.5 * (value(i) + value(i + 1)));
                }
            }
            Targets::Classification { labels, n_classes } => {
                let mut right = vec![0.0f64; n_classes];
                sorted.iter().for_each(|&r| right[labels[r]] += 1.0);
                let mut left = vec![0.0f64; n_classes];
                for i in 0..n - 1 {
                    let c = labels[sorted[i]];
                    left[c] += 1.0;
                    right[c] -= 1.0;
                    if value(i) == value(i + 1) {
                        continue;
                    }
                    let (nl, nr) = ((i + 1) as f64, (n - i - 1) as f64);
                    let gini = |counts: &[f64], m: f64| m - counts.iter().map(|c| c * c).sum::<f64>() / m;
                    consider(gini(&left, nl) + gini(&right, nr), 0.5 * (value(i) + value(i + 1)));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        if depth >= self.max_depth || rows.len() < self.min_samples_split || self.is_pure(&rows) {
            self.nodes[id] = self.leaf(&rows);
            return id;
        }
        let d = self.x[0].len();
        let mut candidates = self.rng.sample_indices(d, self.features_per_split);
        candidates.sort_unstable();
        let mut best: Option<(f64, usize, f64)> = None;
        for f in candidates {
            if let Some((imp, thr)) = self.best_threshold(&rows, f) {
                if best.is_none_or(|(b, _, _)| imp < b) {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            self.nodes[id] = self.leaf(&rows);
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn grow_tree(x: &[Vec<f64>], targets: Targets<'_>, cfg: &ForestConfig, mode: ForestMode, t: usize) -> Tree {
    let n = x.len();
    let mut rng = SeededRng::new(cfg.seed.wrapping_add(t as u64));
    let rows: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.below(n)).collect()
    } else {
        (0..n).collect()
    };
    let mut g = Grower {
        x,
        targets,
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split,
        features_per_split: cfg.resolved_features_per_split(mode, x[0].len()),
        rng,
        nodes: Vec::new(),
    };
    g.grow(rows, 0);
    Tree { nodes: g.nodes }
}

/// Bagged CART ensemble. Tree `t` draws its bootstrap sample and split-feature
/// subsets from a generator seeded with `seed + t`, so parallel and sequential
/// fits are identical.
pub fn forest_fit(x: &[Vec<f64>], targets: Targets<'_>, cfg: &ForestConfig) -> Result<Forest> {
    let d = check_matrix(x, targets.len())?;
    if cfg.n_estimators == 0 {
        return Err(Error::BadParam {
            path: "n_estimators".into(),
            reason: "must be at least 1".into(),
        });
    }
    let (mode, n_classes) = match targets {
        Targets::Regression(y) => {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::BadParam {
                    path: "targets".into(),
                    reason: "non-finite target".into(),
                });
            }
            (ForestMode::Regression, 0)
        }
        Targets::Classification { labels, n_classes } => {
            if n_classes < 2 || labels.iter().any(|&l| l >= n_classes) {
                return Err(Error::BadParam {
                    path: "targets".into(),
                    reason: format!("class indices must lie below {n_classes} (and at least two classes)"),
                });
            }
            (ForestMode::Classification, n_classes)
        }
    };
    let build = |t: usize| grow_tree(x, targets, cfg, mode, t);
    let trees = if cfg.parallel {
        (0..cfg.n_estimators).into_par_iter().map(build).collect()
    } else {
        (0..cfg.n_estimators).map(build).collect()
    };
    Ok(Forest {
        mode,
        n_features: d,
        n_classes,
        config: cfg.clone(),
        trees,
    })
}

pub fn forest_predict(f: &Forest, x: &[f64]) -> Result<ForestOutput> {
    check_dim(f.n_features, x)?;
    let n = f.trees.len() as f64;
    match f.mode {
        ForestMode::Regression => {
            let total: f64 = f
                .trees
                .iter()
                .map(|t| match t.leaf(x) {
                    Node::Leaf { value } => *value,
                    _ => unreachable!("regression forest has value leaves"),
                })
                .sum();
            Ok(ForestOutput::Value(total / n))
        }
        ForestMode::Classification => {
            let mut probs = vec![0.0; f.n_classes];
            for t in &f.trees {
                let Node::ClassLeaf { counts } = t.leaf(x) else {
                    unreachable!("classification forest has count leaves");
                };
                let total: u32 = counts.iter().sum();
                for (p, c) in probs.iter_mut().zip(counts) {
                    *p += *c as f64 / total as f64;
                }
            }
            probs.iter_mut().for_each(|p| *p /= n);
            Ok(ForestOutput::Probs(probs))
        }
    }
}
