//! Gradient-boosted regression trees on quantile-binned features.
//!
//! Squared-error boosting: every round fits one tree to the current
//! residuals, growing it leaf-wise (always splitting the leaf with the
//! largest gain) up to `max_leaves`. Split candidates are the per-feature
//! bin edges computed once from the training data, so every threshold in the
//! model is a bin edge. Training is single-threaded and fully deterministic:
//! features and edges are scanned in ascending order and only a strictly
//! larger gain displaces the incumbent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Rows of one leaf and its output value.
type LeafRows = (Vec<u32>, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub bins: usize,
    pub min_gain: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            rounds: 200,
            learning_rate: 0.1,
            max_leaves: 31,
            min_samples_leaf: 20,
            bins: 255,
            min_gain: 1e-9,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be >= 2");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1");
        }
        if !(2..=65536).contains(&self.bins) {
            return bad("bins must be in 2..=65536");
        }
        if self.min_gain.is_nan() || self.min_gain < 0.0 {
            return bad("min_gain must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Index into the feature's bin edges; rows with
        /// `x < bin_edges[feature][edge]` go left.
        edge: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    fn visit_splits(&self, f: &mut impl FnMut(usize, usize, f64)) {
        if let Node::Split {
            feature,
            edge,
            threshold,
            left,
            right,
        } = self
        {
            f(*feature, *edge, *threshold);
            left.visit_splits(f);
            right.visit_splits(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub params: GbdtParams,
    pub n_features: usize,
    /// Training-target mean.
    pub base_score: f64,
    pub learning_rate: f64,
    /// Ascending split candidates per feature.
    pub bin_edges: Vec<Vec<f64>>,
    /// Leaf values already include the learning rate.
    pub trees: Vec<Node>,
    /// Set when every row had identical features but targets differed, so
    /// nothing beyond the base score could be learned.
    #[serde(default)]
    pub degenerate: bool,
}

impl GbdtModel {
    pub fn constant(base_score: f64, n_features: usize) -> Self {
        GbdtModel {
            format_version: MODEL_FORMAT_VERSION,
            params: GbdtParams::default(),
            n_features,
            base_score,
            learning_rate: GbdtParams::default().learning_rate,
            bin_edges: vec![Vec::new(); n_features],
            trees: Vec::new(),
            degenerate: false,
        }
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.n_features {
            return Err(Error::FeatureLengthMismatch {
                expected: self.n_features,
                got: features.len(),
            });
        }
        Ok(self.base_score + self.trees.iter().map(|t| t.eval(features)).sum::<f64>())
    }

    /// Prediction using only the first `k` trees.
    pub fn predict_first(&self, features: &[f64], k: usize) -> Result<f64> {
        if features.len() != self.n_features {
            return Err(Error::FeatureLengthMismatch {
                expected: self.n_features,
                got: features.len(),
            });
        }
        Ok(self.base_score + self.trees.iter().take(k).map(|t| t.eval(features)).sum::<f64>())
    }

    /// Every split threshold is one of its feature's bin edges.
    pub fn thresholds_are_bin_edges(&self) -> bool {
        let mut ok = true;
        for tree in &self.trees {
            tree.visit_splits(&mut |f, e, t| {
                ok &= self.bin_edges.get(f).and_then(|edges| edges.get(e)) == Some(&t);
            });
        }
        ok
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbdtModel = serde_json::from_str(text).map_err(|e| Error::MalformedJson {
            line: e.line(),
            column: e.column(),
            reason: e.to_string(),
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "gbdt format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }
}

/// Split candidates for one feature column.
///
/// With at most `max_bins` distinct values every gap between consecutive
/// distinct values gets an edge. Otherwise edges are placed after the
/// order statistics at ranks `i * n / max_bins`, each at the midpoint to the
/// next distinct value. Bin membership therefore depends only on the ranks
/// of the values.
pub fn compute_bin_edges(column: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let between = |lo: f64, hi: f64| {
        let mid = lo + (hi - lo) / 2.0;
        if mid > lo {
            mid
        } else {
            hi
        }
    };
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| between(w[0], w[1])).collect();
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for i in 1..max_bins {
        let lo = sorted[i * n / max_bins - 1];
        let next = distinct.partition_point(|&v| v <= lo);
        if next == distinct.len() {
            continue;
        }
        let e = between(lo, distinct[next]);
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

#[inline]
fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x)
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    edge: usize,
}

struct Leaf {
    rows: Vec<u32>,
    sum: f64,
    best: Option<SplitChoice>,
    /// Arena slot this leaf will occupy.
    slot: usize,
}

enum Proto {
    Leaf(f64),
    Split {
        feature: usize,
        edge: usize,
        left: usize,
        right: usize,
    },
}

struct Trainer<'a> {
    binned: &'a [Vec<u16>],
    bin_counts: Vec<usize>,
    params: &'a GbdtParams,
}

impl Trainer<'_> {
    fn best_split(&self, rows: &[u32], residual: &[f64], sum: f64) -> Option<SplitChoice> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let parent = sum * sum / n as f64;
        let mut best: Option<SplitChoice> = None;
        let mut hist_sum = Vec::new();
        let mut hist_cnt = Vec::new();
        for (feature, column) in self.binned.iter().enumerate() {
            let nb = self.bin_counts[feature];
            if nb < 2 {
                continue;
            }
            hist_sum.clear();
            hist_sum.resize(nb, 0.0);
            hist_cnt.clear();
            hist_cnt.resize(nb, 0usize);
            for &r in rows {
                let b = column[r as usize] as usize;
                hist_sum[b] += residual[r as usize];
                hist_cnt[b] += 1;
            }
            let (mut left_sum, mut left_n) = (0.0, 0usize);
            // left = bins 0..=edge, i.e. x < bin_edges[edge]
            for edge in 0..nb - 1 {
                left_sum += hist_sum[edge];
                left_n += hist_cnt[edge];
                let right_n = n - left_n;
                if left_n < min_leaf {
                    continue;
                }
                if right_n < min_leaf {
                    break;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - parent;
                if best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        gain,
                        feature,
                        edge,
                    });
                }
            }
        }
        best.filter(|b| b.gain >= self.params.min_gain)
    }

    fn make_leaf(&self, rows: Vec<u32>, residual: &[f64], slot: usize) -> Leaf {
        let sum = rows.iter().map(|&r| residual[r as usize]).sum::<f64>();
        let best = self.best_split(&rows, residual, sum);
        Leaf {
            rows,
            sum,
            best,
            slot,
        }
    }

    /// Grows one tree on `residual`. `None` when the root cannot be split
    /// with at least `min_gain`.
    fn grow(&self, residual: &[f64], n_rows: usize, bin_edges: &[Vec<f64>]) -> Option<(Node, Vec<LeafRows>)> {
        let root = self.make_leaf((0..n_rows as u32).collect(), residual, 0);
        root.best?;
        let mut arena = vec![Proto::Leaf(0.0)];
        let mut leaves = vec![root];
        while leaves.len() < self.params.max_leaves {
            let mut pick: Option<(usize, f64)> = None;
            for (i, leaf) in leaves.iter().enumerate() {
                if let Some(b) = leaf.best {
                    if pick.is_none_or(|(_, g)| b.gain > g) {
                        pick = Some((i, b.gain));
                    }
                }
            }
            let Some((i, _)) = pick else { break };
            let leaf = leaves.swap_remove(i);
            let choice = leaf.best.expect("picked leaf has a split");
            let column = &self.binned[choice.feature];
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf
                .rows
                .iter()
                .partition(|&&r| (column[r as usize] as usize) <= choice.edge);
            let (l, r) = (arena.len(), arena.len() + 1);
            arena.push(Proto::Leaf(0.0));
            arena.push(Proto::Leaf(0.0));
            arena[leaf.slot] = Proto::Split {
                feature: choice.feature,
                edge: choice.edge,
                left: l,
                right: r,
            };
            let left = self.make_leaf(left_rows, residual, l);
            let right = self.make_leaf(right_rows, residual, r);
            // swap_remove disturbed the order; restore creation order so
            // gain ties resolve to the older leaf
            leaves.push(left);
            leaves.push(right);
            leaves.sort_by_key(|l| l.slot);
        }

        let lr = self.params.learning_rate;
        let mut assignments = Vec::with_capacity(leaves.len());
        for leaf in leaves {
            let value = leaf.sum / leaf.rows.len() as f64 * lr;
            arena[leaf.slot] = Proto::Leaf(value);
            assignments.push((leaf.rows, value));
        }
        Some((build_node(&arena, 0, bin_edges), assignments))
    }
}

fn build_node(arena: &[Proto], i: usize, bin_edges: &[Vec<f64>]) -> Node {
    match arena[i] {
        Proto::Leaf(value) => Node::Leaf { value },
        Proto::Split {
            feature,
            edge,
            left,
            right,
        } => Node::Split {
            feature,
            edge,
            threshold: bin_edges[feature][edge],
            left: Box::new(build_node(arena, left, bin_edges)),
            right: Box::new(build_node(arena, right, bin_edges)),
        },
    }
}

/// Fits a boosted ensemble to `(features, target)` rows.
pub fn train_gbdt(features: &[Vec<f64>], targets: &[f64], params: &GbdtParams) -> Result<GbdtModel> {
    params.validate()?;
    let n = features.len();
    if n != targets.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: targets.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let n_features = features[0].len();
    if let Some(row) = features.iter().find(|r| r.len() != n_features) {
        return Err(Error::FeatureLengthMismatch {
            expected: n_features,
            got: row.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("training targets"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }

    let base_score = targets.iter().sum::<f64>() / n as f64;
    let mut bin_edges = Vec::with_capacity(n_features);
    let mut binned = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let column: Vec<f64> = features.iter().map(|r| r[f]).collect();
        let edges = compute_bin_edges(&column, params.bins);
        binned.push(column.iter().map(|&x| bin_of(&edges, x) as u16).collect::<Vec<u16>>());
        bin_edges.push(edges);
    }
    let bin_counts: Vec<usize> = bin_edges.iter().map(|e| e.len() + 1).collect();
    let degenerate = bin_counts.iter().all(|&c| c == 1) && targets.iter().any(|&t| t != targets[0]);
    if degenerate {
        log::warn!("all training rows share identical features; model is the target mean only");
    }

    let trainer = Trainer {
        binned: &binned,
        bin_counts,
        params,
    };
    let mut prediction = vec![base_score; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::new();
    for _ in 0..params.rounds {
        for ((r, t), p) in residual.iter_mut().zip(targets).zip(&prediction) {
            *r = t - p;
        }
        let Some((tree, assignments)) = trainer.grow(&residual, n, &bin_edges) else {
            break;
        };
        for (rows, value) in assignments {
            for r in rows {
                prediction[r as usize] += value;
            }
        }
        trees.push(tree);
    }

    Ok(GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        params: *params,
        n_features,
        base_score,
        learning_rate: params.learning_rate,
        bin_edges,
        trees,
        degenerate,
    })
}
