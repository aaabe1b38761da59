use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Regression model used inside tree leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafModel {
    Mean,
    Linear,
    /// Whichever of mean and linear has the lower running absolute error.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub grace_period: f64,
    pub split_confidence: f64,
    pub tie_threshold: f64,
    pub max_depth: usize,
    /// Width of the bins used to collect split statistics.
    pub bin_width: f64,
    /// Candidate thresholds per feature once bins outnumber it.
    pub max_thresholds: usize,
    pub leaf_model: LeafModel,
    /// Ridge penalty on the slopes of linear leaves (towards the parent's slopes).
    pub ridge: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            grace_period: 50.0,
            split_confidence: 1e-3,
            tie_threshold: 0.05,
            max_depth: 20,
            bin_width: 0.5,
            max_thresholds: 10,
            leaf_model: LeafModel::Mean,
            ridge: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Moments {
    w: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn add(&mut self, y: f64, w: f64) {
        self.w += w;
        self.sum += w * y;
        self.sum_sq += w * y * y;
    }

    fn merge(&mut self, o: &Moments) {
        self.w += o.w;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn mean(&self) -> f64 {
        if self.w > 0.0 {
            self.sum / self.w
        } else {
            0.0
        }
    }

    fn variance(&self) -> f64 {
        if self.w > 0.0 {
            (self.sum_sq / self.w - self.mean().powi(2)).max(0.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Bin {
    x_sum: f64,
    y: Moments,
}

/// Fitted leaf predictor: `intercept + slopes · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

impl LinearFit {
    fn constant(c: f64, d: usize) -> Self {
        Self { intercept: c, slopes: vec![0.0; d] }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Leaf {
    depth: usize,
    y: Moments,
    x_sum: Vec<f64>,
    xx: Vec<f64>,
    xy: Vec<f64>,
    err_mean: f64,
    err_linear: f64,
    weight_at_last_attempt: f64,
    /// Per-feature bins keyed by `floor(x / bin_width)`.
    bins: Vec<BTreeMap<i64, Bin>>,
    /// Predictor inherited from the parent: used until the leaf has data, and
    /// as the point the ridge penalty shrinks linear slopes towards.
    fallback: Option<LinearFit>,
}

impl Leaf {
    fn new(d: usize, depth: usize, fallback: Option<LinearFit>) -> Self {
        Self {
            depth,
            y: Moments::default(),
            x_sum: vec![0.0; d],
            xx: vec![0.0; d * d],
            xy: vec![0.0; d],
            err_mean: 0.0,
            err_linear: 0.0,
            weight_at_last_attempt: 0.0,
            bins: vec![BTreeMap::new(); d],
            fallback,
        }
    }

    fn dim(&self) -> usize {
        self.x_sum.len()
    }

    fn mean_fit(&self) -> LinearFit {
        LinearFit::constant(self.y.mean(), self.dim())
    }

    fn linear_fit(&self, ridge: f64) -> LinearFit {
        let d = self.dim();
        let n = self.y.w;
        if n <= 0.0 {
            return LinearFit::constant(0.0, d);
        }
        let xm: Vec<f64> = self.x_sum.iter().map(|s| s / n).collect();
        let ym = self.y.mean();
        let zeros = vec![0.0; d];
        let prior = self.fallback.as_ref().map_or(&zeros, |f| &f.slopes);
        let mut sxx = DMatrix::zeros(d, d);
        let mut sxy = DVector::zeros(d);
        for i in 0..d {
            for j in 0..d {
                sxx[(i, j)] = self.xx[i * d + j] - n * xm[i] * xm[j];
            }
            sxx[(i, i)] += ridge;
            sxy[i] = self.xy[i] - n * xm[i] * ym + ridge * prior[i];
        }
        let slopes = match sxx.cholesky() {
            Some(ch) => ch.solve(&sxy).iter().copied().collect(),
            None => vec![0.0; d],
        };
        let intercept = ym - xm.iter().zip(&slopes).map(|(a, b)| a * b).sum::<f64>();
        LinearFit { intercept, slopes }
    }

    fn best_fit(&self, cfg: &TreeConfig) -> LinearFit {
        if self.y.w <= 0.0 {
            return self.fallback.clone().unwrap_or_else(|| LinearFit::constant(0.0, self.dim()));
        }
        match cfg.leaf_model {
            LeafModel::Mean => self.mean_fit(),
            LeafModel::Linear => self.linear_fit(cfg.ridge),
            LeafModel::Adaptive => {
                if self.err_linear < self.err_mean {
                    self.linear_fit(cfg.ridge)
                } else {
                    self.mean_fit()
                }
            }
        }
    }

    fn learn(&mut self, x: &[f64], y: f64, w: f64, cfg: &TreeConfig) {
        if self.y.w > 0.0 {
            self.err_mean += w * (y - self.mean_fit().predict(x)).abs();
            self.err_linear += w * (y - self.linear_fit(cfg.ridge).predict(x)).abs();
        } else if let Some(f) = &self.fallback {
            let e = w * (y - f.predict(x)).abs();
            self.err_mean += e;
            self.err_linear += e;
        }
        let d = self.dim();
        self.y.add(y, w);
        for i in 0..d {
            self.x_sum[i] += w * x[i];
            self.xy[i] += w * x[i] * y;
            for j in 0..d {
                self.xx[i * d + j] += w * x[i] * x[j];
            }
            let key = (x[i] / cfg.bin_width).floor() as i64;
            let bin = self.bins[i].entry(key).or_default();
            bin.x_sum += w * x[i];
            bin.y.add(y, w);
        }
    }

    /// Best variance-reduction threshold per feature: `(merit, threshold, left weight)`.
    fn candidate_splits(&self, cfg: &TreeConfig) -> Vec<Option<(f64, f64, f64)>> {
        let parent_var = self.y.variance();
        self.bins
            .iter()
            .map(|bins| {
                if bins.len() < 2 {
                    return None;
                }
                let bins: Vec<&Bin> = bins.values().collect();
                let cut_after = cut_positions(&bins, cfg.max_thresholds);
                let mut best: Option<(f64, f64, f64)> = None;
                let mut left = Moments::default();
                let mut next_cut = cut_after.iter().peekable();
                for (k, b) in bins.iter().enumerate().take(bins.len() - 1) {
                    left.merge(&b.y);
                    if next_cut.peek() != Some(&&k) {
                        continue;
                    }
                    next_cut.next();
                    let mut right = self.y;
                    right.w -= left.w;
                    right.sum -= left.sum;
                    right.sum_sq -= left.sum_sq;
                    if left.w <= 0.0 || right.w <= 0.0 {
                        continue;
                    }
                    let n = self.y.w;
                    let merit = parent_var - (left.w / n) * left.variance() - (right.w / n) * right.variance();
                    let lo = b.x_sum / b.y.w;
                    let hi = bins[k + 1].x_sum / bins[k + 1].y.w;
                    let threshold = 0.5 * (lo + hi);
                    if best.is_none_or(|(m, _, _)| merit > m) {
                        best = Some((merit, threshold, left.w));
                    }
                }
                best
            })
            .collect()
    }
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Bin boundaries to evaluate: all of them, or `max` spread by weight quantile.
fn cut_positions(bins: &[&Bin], max: usize) -> Vec<usize> {
    let n_cuts = bins.len() - 1;
    if n_cuts <= max {
        return (0..n_cuts).collect();
    }
    let total: f64 = bins.iter().map(|b| b.y.w).sum();
    let mut cuts = Vec::with_capacity(max);
    let mut cum = 0.0;
    let mut q = 1;
    for (k, b) in bins.iter().enumerate().take(n_cuts) {
        cum += b.y.w;
        while q <= max && cum >= total * q as f64 / (max + 1) as f64 {
            if cuts.last() != Some(&k) {
                cuts.push(k);
            }
            q += 1;
        }
    }
    cuts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(Box<Leaf>),
}

/// Serializable view of one tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NodeSummary {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { weight: f64, prediction: LinearFit },
}

/// Incremental regression tree that splits once the Hoeffding bound separates
/// the best variance reduction from the runner-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTreeRegressor {
    cfg: TreeConfig,
    n_features: usize,
    nodes: Vec<Node>,
    weight_seen: f64,
}

impl HoeffdingTreeRegressor {
    pub fn new(n_features: usize, cfg: TreeConfig) -> Self {
        Self { cfg, n_features, nodes: vec![Node::Leaf(Box::new(Leaf::new(n_features, 0, None)))], weight_seen: 0.0 }
    }

    pub fn is_trained(&self) -> bool {
        self.weight_seen > 0.0
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    fn route(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Node::Split { feature, threshold, left, right } = &self.nodes[i] {
            i = if x[*feature] <= *threshold { *left } else { *right };
        }
        i
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        match &self.nodes[self.route(x)] {
            Node::Leaf(leaf) => leaf.best_fit(&self.cfg).predict(x),
            Node::Split { .. } => unreachable!("routing ends at a leaf"),
        }
    }

    /// Trains on one instance with importance weight `w`.
    pub fn learn(&mut self, x: &[f64], y: f64, w: f64) {
        debug_assert_eq!(x.len(), self.n_features);
        if w <= 0.0 {
            return;
        }
        self.weight_seen += w;
        let at = self.route(x);
        let Node::Leaf(leaf) = &mut self.nodes[at] else { unreachable!() };
        leaf.learn(x, y, w, &self.cfg);
        if leaf.y.w - leaf.weight_at_last_attempt >= self.cfg.grace_period && leaf.depth < self.cfg.max_depth {
            leaf.weight_at_last_attempt = leaf.y.w;
            self.attempt_split(at);
        }
    }

    fn attempt_split(&mut self, at: usize) {
        let Node::Leaf(leaf) = &self.nodes[at] else { return };
        let mut merits: Vec<(f64, usize, f64, f64)> = leaf
            .candidate_splits(&self.cfg)
            .into_iter()
            .enumerate()
            .filter_map(|(f, c)| c.map(|(m, t, lw)| (m, f, t, lw)))
            .collect();
        merits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let Some(&(best, feature, threshold, left_w)) = merits.first() else { return };
        if best <= 0.0 {
            return;
        }
        // the "no split" option has merit zero; a rival that cuts the data
        // identically is the same split seen through another feature
        let second = merits
            .iter()
            .skip(1)
            .find(|m| !(same_value(m.0, best) && same_value(m.3, left_w)))
            .map_or(0.0, |m| m.0.max(0.0));
        let eps = ((1.0 / self.cfg.split_confidence).ln() / (2.0 * leaf.y.w)).sqrt();
        if !(second / best < 1.0 - eps || eps < self.cfg.tie_threshold) {
            return;
        }
        let fit = leaf.best_fit(&self.cfg);
        let depth = leaf.depth + 1;
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf(Box::new(Leaf::new(self.n_features, depth, Some(fit.clone())))));
        self.nodes.push(Node::Leaf(Box::new(Leaf::new(self.n_features, depth, Some(fit)))));
        self.nodes[at] = Node::Split { feature, threshold, left, right: left + 1 };
    }

    pub fn node_summaries(&self) -> Vec<NodeSummary> {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Split { feature, threshold, left, right } => {
                    NodeSummary::Split { feature: *feature, threshold: *threshold, left: *left, right: *right }
                }
                Node::Leaf(l) => NodeSummary::Leaf { weight: l.y.w, prediction: l.best_fit(&self.cfg) },
            })
            .collect()
    }
}
