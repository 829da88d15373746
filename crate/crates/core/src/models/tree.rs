//! Squared-error regression trees grown level by level with exact greedy
//! splits over presorted feature columns; gradient boosting and random
//! forests built on top.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features drawn per node; 1.0 disables subsampling.
    pub feature_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

/// Row indices sorted by each feature column.
struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &FeatureMatrix) -> Self {
        let n = x.n_rows();
        let order = (0..x.n_cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| x.row(a as usize)[f].total_cmp(&x.row(b as usize)[f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }
}

const INACTIVE: usize = usize::MAX;

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl RegressionTree {
    /// Fits `targets` with per-row integer `weights` (bootstrap multiplicities;
    /// zero drops a row).
    fn grow(
        x: &FeatureMatrix,
        sorted: &Presorted,
        targets: &[f64],
        weights: &[u32],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = x.n_rows();
        let p = x.n_cols();
        let mtry = ((params.feature_fraction * p as f64).round() as usize).clamp(1, p.max(1));
        let min_leaf = params.min_leaf as f64;

        let mut nodes = vec![Node::Leaf(0.0)];
        // position of each row's node in the current level's `level` list
        let mut slot: Vec<usize> = weights.iter().map(|&w| if w > 0 { 0 } else { INACTIVE }).collect();
        let (w0, s0) = (0..n).fold((0.0, 0.0), |(w, s), i| {
            let wi = f64::from(weights[i]);
            (w + wi, s + wi * targets[i])
        });
        // (node id, weight sum, weighted target sum)
        let mut level: Vec<(usize, f64, f64)> = vec![(0, w0, s0)];

        for depth in 0..=params.max_depth {
            if level.is_empty() {
                break;
            }
            let k = level.len();
            let mut best: Vec<Option<Best>> = vec![None; k];
            if depth < params.max_depth {
                let masks: Vec<Vec<bool>> = (0..k)
                    .map(|_| {
                        let mut m = vec![mtry == p; p];
                        if mtry < p {
                            for f in sample(rng, p, mtry) {
                                m[f] = true;
                            }
                        }
                        m
                    })
                    .collect();
                let mut cw = vec![0.0; k];
                let mut cs = vec![0.0; k];
                let mut last = vec![f64::NAN; k];
                // `f` addresses a column across several per-feature tables
                #[allow(clippy::needless_range_loop)]
                for f in 0..p {
                    cw.iter_mut().for_each(|v| *v = 0.0);
                    cs.iter_mut().for_each(|v| *v = 0.0);
                    for &r in &sorted.order[f] {
                        let r = r as usize;
                        let s = slot[r];
                        if s == INACTIVE || !masks[s][f] {
                            continue;
                        }
                        let v = x.row(r)[f];
                        let (_, tw, ts) = level[s];
                        if cw[s] > 0.0 && v > last[s] && cw[s] >= min_leaf && tw - cw[s] >= min_leaf {
                            let rw = tw - cw[s];
                            let rs = ts - cs[s];
                            let gain = cs[s] * cs[s] / cw[s] + rs * rs / rw - ts * ts / tw;
                            if gain > 1e-12 && best[s].is_none_or(|b| gain > b.gain) {
                                let mid = last[s] + (v - last[s]) / 2.0;
                                best[s] = Some(Best {
                                    gain,
                                    feature: f,
                                    threshold: if mid < v { mid } else { last[s] },
                                });
                            }
                        }
                        let w = f64::from(weights[r]);
                        cw[s] += w;
                        cs[s] += w * targets[r];
                        last[s] = v;
                    }
                }
            }

            let mut next: Vec<(usize, f64, f64)> = Vec::new();
            // child slots per current slot
            let mut children: Vec<Option<(usize, usize)>> = vec![None; k];
            for (s, &(id, tw, ts)) in level.iter().enumerate() {
                match best[s] {
                    Some(b) => {
                        let left = nodes.len();
                        nodes.push(Node::Leaf(0.0));
                        nodes.push(Node::Leaf(0.0));
                        nodes[id] = Node::Split {
                            feature: b.feature,
                            threshold: b.threshold,
                            left,
                            right: left + 1,
                        };
                        children[s] = Some((next.len(), next.len() + 1));
                        next.push((left, 0.0, 0.0));
                        next.push((left + 1, 0.0, 0.0));
                    }
                    None => nodes[id] = Node::Leaf(ts / tw),
                }
            }
            for r in 0..n {
                let s = slot[r];
                if s == INACTIVE {
                    continue;
                }
                slot[r] = match (children[s], &nodes[level[s].0]) {
                    (Some((l, rt)), Node::Split { feature, threshold, .. }) => {
                        let c = if x.row(r)[*feature] <= *threshold { l } else { rt };
                        let w = f64::from(weights[r]);
                        next[c].1 += w;
                        next[c].2 += w * targets[r];
                        c
                    }
                    _ => INACTIVE,
                };
            }
            level = next;
        }
        RegressionTree { nodes }
    }

    /// Fits a single tree on all rows with unit weights.
    pub fn fit(x: &FeatureMatrix, targets: &[f64], params: &TreeParams, seed: u64) -> Self {
        let sorted = Presorted::new(x);
        let weights = vec![1; x.n_rows()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::grow(x, &sorted, targets, &weights, params, &mut rng)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// `(feature, threshold)` of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf(_) => None,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtParams {
    pub trees: usize,
    pub learning_rate: f64,
    /// Row fraction drawn without replacement per tree.
    pub subsample: f64,
    pub tree: TreeParams,
}

/// Squared-error gradient boosting: each tree fits the current residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Gbt {
    base: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
}

impl Gbt {
    pub fn fit(x: &FeatureMatrix, params: &GbtParams, seed: u64) -> Self {
        let n = x.n_rows();
        let sorted = Presorted::new(x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = x.targets.iter().sum::<f64>() / n as f64;
        let mut current = vec![base; n];
        let mut residual = vec![0.0; n];
        let mut weights = vec![1u32; n];
        let take = ((params.subsample * n as f64).round() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(params.trees);
        for _ in 0..params.trees {
            for i in 0..n {
                residual[i] = x.targets[i] - current[i];
            }
            if take < n {
                weights.iter_mut().for_each(|w| *w = 0);
                for i in sample(&mut rng, n, take) {
                    weights[i] = 1;
                }
            }
            let tree = RegressionTree::grow(x, &sorted, &residual, &weights, &params.tree, &mut rng);
            for (i, c) in current.iter_mut().enumerate() {
                *c += params.learning_rate * tree.predict(x.row(i));
            }
            trees.push(tree);
        }
        Gbt {
            base,
            learning_rate: params.learning_rate,
            trees,
        }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub tree: TreeParams,
}

/// Bagged trees with bootstrap rows and per-node feature subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(x: &FeatureMatrix, params: &ForestParams, seed: u64) -> Self {
        let n = x.n_rows();
        let sorted = Presorted::new(x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0u32; n];
        let trees = (0..params.trees)
            .map(|_| {
                weights.iter_mut().for_each(|w| *w = 0);
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1;
                }
                RegressionTree::grow(x, &sorted, &x.targets, &weights, &params.tree, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_feature(xs: &[f64], ys: &[f64]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        FeatureMatrix::from_rows(vec!["x".into()], &rows, ys.to_vec())
    }

    #[test]
    fn depth_one_stump_recovers_step() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|&v| if v < 12.0 { 1.0 } else { 5.0 }).collect();
        let m = one_feature(&xs, &ys);
        let params = GbtParams {
            trees: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            tree: TreeParams {
                max_depth: 1,
                min_leaf: 1,
                feature_fraction: 1.0,
            },
        };
        let gbt = Gbt::fit(&m, &params, 0);
        let (feature, threshold) = gbt.trees()[0].root_split().unwrap();
        assert_eq!(feature, 0);
        assert!(threshold > 11.0 && threshold < 12.0, "{threshold}");
        assert_eq!(gbt.trees()[0].leaf_count(), 2);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((gbt.predict(&[*x]) - y).abs() < 1e-12);
        }
    }

    /// Exhaustive best single split, independent of the presorted scan.
    fn brute_force_split(xs: &[Vec<f64>], ys: &[f64]) -> (usize, f64) {
        let n = ys.len() as f64;
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
        };
        let mut best = (f64::INFINITY, 0, 0.0);
        for f in 0..xs[0].len() {
            let mut vals: Vec<f64> = xs.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let side = |left: bool| -> Vec<f64> {
                    xs.iter()
                        .zip(ys)
                        .filter(|(x, _)| (x[f] <= t) == left)
                        .map(|(_, y)| *y)
                        .collect()
                };
                let (l, r) = (side(true), side(false));
                let total = sse(&l) + sse(&r);
                if total < best.0 - 1e-12 * n {
                    best = (total, f, t);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn root_split_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..3).map(|_| f64::from(rng.random_range(0..15u8))).collect())
                .collect();
            let ys: Vec<f64> = rows
                .iter()
                .map(|r| r[0] * 0.3 + (r[2] - 7.0).abs() + rng.random_range(0.0..0.1))
                .collect();
            let m = FeatureMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows, ys.clone());
            let params = TreeParams {
                max_depth: 1,
                min_leaf: 1,
                feature_fraction: 1.0,
            };
            let tree = RegressionTree::fit(&m, &ys, &params, 0);
            let (f, t) = tree.root_split().unwrap();
            assert_eq!((f, t), brute_force_split(&rows, &ys));
        }
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|&v| if v < 1.0 { 100.0 } else { 0.0 }).collect();
        let m = one_feature(&xs, &ys);
        let params = TreeParams {
            max_depth: 1,
            min_leaf: 3,
            feature_fraction: 1.0,
        };
        let tree = RegressionTree::fit(&m, &ys, &params, 0);
        let (_, t) = tree.root_split().unwrap();
        assert!(t >= 2.0, "{t}");
    }

    #[test]
    fn forest_fits_smooth_signal() {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 20.0).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v.sin()).collect();
        let m = one_feature(&xs, &ys);
        let params = ForestParams {
            trees: 20,
            tree: TreeParams {
                max_depth: 6,
                min_leaf: 2,
                feature_fraction: 1.0,
            },
        };
        let f = Forest::fit(&m, &params, 9);
        let mse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (f.predict(&[*x]) - y).powi(2))
            .sum::<f64>()
            / 200.0;
        assert!(mse < 0.01, "{mse}");
    }
}
