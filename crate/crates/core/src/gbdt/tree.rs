//! Leaf-wise regression tree growth on gradient histograms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `value <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: u32,
        right: u32,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, values: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if values[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// `(feature, gain)` for every split node, in node order.
    pub fn split_gains(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, gain, .. } => Some((*feature, *gain)),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStat {
    pub grad: f64,
    pub hess: f64,
    pub count: u32,
}

/// Histograms for the active features, indexed like the active feature list.
pub type Histogram = Vec<Vec<BinStat>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Rows with `bin <= bin` go left.
    pub bin: u16,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy)]
struct NodeTotals {
    grad: f64,
    hess: f64,
    count: u32,
}

pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
}

pub fn build_histogram(
    data: &BinnedMatrix,
    features: &[usize],
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
) -> Histogram {
    features
        .par_iter()
        .map(|&f| {
            let mut stats = vec![BinStat::default(); data.mappers[f].num_bins()];
            let column = &data.bins[f];
            for &r in rows {
                let r = r as usize;
                let s = &mut stats[column[r] as usize];
                s.grad += grad[r];
                s.hess += hess[r];
                s.count += 1;
            }
            stats
        })
        .collect()
}

fn subtract(parent: &Histogram, child: &Histogram) -> Histogram {
    parent
        .iter()
        .zip(child)
        .map(|(p, c)| {
            p.iter()
                .zip(c)
                .map(|(a, b)| BinStat {
                    grad: a.grad - b.grad,
                    hess: a.hess - b.hess,
                    count: a.count - b.count,
                })
                .collect()
        })
        .collect()
}

fn best_feature_split(
    data: &BinnedMatrix,
    feature: usize,
    stats: &[BinStat],
    totals: NodeTotals,
    params: &GrowParams,
) -> Option<SplitCandidate> {
    let min_leaf = params.min_samples_leaf as u32;
    let mut best: Option<SplitCandidate> = None;
    let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0u32);
    for (bin, s) in stats.iter().enumerate().take(stats.len().saturating_sub(1)) {
        gl += s.grad;
        hl += s.hess;
        nl += s.count;
        let nr = totals.count - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let gain = split_gain(gl, hl, totals.grad - gl, totals.hess - hl, params.lambda);
        if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitCandidate {
                feature,
                bin: bin as u16,
                threshold: data.mappers[feature].thresholds[bin],
                gain,
            });
        }
    }
    best
}

/// Best split over the active features. Ties resolve to the lowest feature,
/// then the lowest threshold, independent of thread count.
pub fn best_split(
    data: &BinnedMatrix,
    features: &[usize],
    hist: &Histogram,
    params: &GrowParams,
) -> Option<SplitCandidate> {
    let totals = node_totals(hist)?;
    let per_feature: Vec<Option<SplitCandidate>> = features
        .par_iter()
        .zip(hist.par_iter())
        .map(|(&f, stats)| best_feature_split(data, f, stats, totals, params))
        .collect();
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |best: Option<SplitCandidate>, cand| match best {
            Some(b) if cand.gain <= b.gain => Some(b),
            _ => Some(cand),
        })
}

fn node_totals(hist: &Histogram) -> Option<NodeTotals> {
    let first = hist.first()?;
    let mut t = NodeTotals {
        grad: 0.0,
        hess: 0.0,
        count: 0,
    };
    for s in first {
        t.grad += s.grad;
        t.hess += s.hess;
        t.count += s.count;
    }
    Some(t)
}

struct LeafState {
    node: usize,
    rows: Vec<u32>,
    hist: Histogram,
    split: Option<SplitCandidate>,
}

fn leaf_value(grad: f64, hess: f64, params: &GrowParams) -> f64 {
    -grad / (hess + params.lambda) * params.learning_rate
}

/// Grows one tree. Returns the tree and, for every training row, the index
/// of the leaf node it landed in.
pub fn grow_tree(
    data: &BinnedMatrix,
    features: &[usize],
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
) -> (Tree, Vec<u32>) {
    let rows: Vec<u32> = (0..data.rows as u32).collect();
    let hist = build_histogram(data, features, &rows, grad, hess);
    let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
        (g + grad[r as usize], h + hess[r as usize])
    });
    let split = best_split(data, features, &hist, params);

    let mut nodes = vec![Node::Leaf {
        value: leaf_value(g, h, params),
    }];
    let mut leaves = vec![LeafState {
        node: 0,
        rows,
        hist,
        split,
    }];

    while leaves.len() < params.max_leaves {
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(s) = leaf.split {
                if pick.is_none_or(|p| s.gain > leaves[p].split.map_or(0.0, |b| b.gain)) {
                    pick = Some(i);
                }
            }
        }
        let Some(pick) = pick else { break };

        let parent = leaves.swap_remove(pick);
        let split = parent.split.expect("picked leaf has a split");
        let column = &data.bins[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = parent
            .rows
            .iter()
            .partition(|&&r| column[r as usize] <= split.bin);

        let left_small = left_rows.len() <= right_rows.len();
        let small_rows = if left_small { &left_rows } else { &right_rows };
        let small_hist = build_histogram(data, features, small_rows, grad, hess);
        let large_hist = subtract(&parent.hist, &small_hist);
        let (left_hist, right_hist) = if left_small {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };

        let sum = |rows: &[u32]| {
            rows.iter().fold((0.0, 0.0), |(g, h), &r| {
                (g + grad[r as usize], h + hess[r as usize])
            })
        };
        let (lg, lh) = sum(&left_rows);
        let (rg, rh) = sum(&right_rows);

        let left_idx = nodes.len();
        nodes.push(Node::Leaf {
            value: leaf_value(lg, lh, params),
        });
        nodes.push(Node::Leaf {
            value: leaf_value(rg, rh, params),
        });
        nodes[parent.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            left: left_idx as u32,
            right: left_idx as u32 + 1,
        };

        let left_split = best_split(data, features, &left_hist, params);
        let right_split = best_split(data, features, &right_hist, params);
        leaves.push(LeafState {
            node: left_idx,
            rows: left_rows,
            hist: left_hist,
            split: left_split,
        });
        leaves.push(LeafState {
            node: left_idx + 1,
            rows: right_rows,
            hist: right_hist,
            split: right_split,
        });
        // keep leaf order by node index so tie-breaking does not depend on swap_remove
        leaves.sort_by_key(|l| l.node);
    }

    let mut leaf_of_row = vec![0u32; data.rows];
    for leaf in &leaves {
        for &r in &leaf.rows {
            leaf_of_row[r as usize] = leaf.node as u32;
        }
    }
    (Tree { nodes }, leaf_of_row)
}
