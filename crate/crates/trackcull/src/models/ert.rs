//! Extremely randomized trees.
//!
//! Every tree sees the full training set (no bootstrap). At each node one
//! threshold per feature is drawn uniformly between that feature's minimum
//! and maximum over the node's rows, and the draw with the best
//! information gain (entropy) wins, first feature on ties. Nodes are grown
//! until they are pure, too small, or featureless.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::N_SUPERLAYERS;
use crate::dataset::DatasetRow;
use crate::models::{Classifier, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErtHyperparams {
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<u32>,
    pub seed: u64,
}

impl Default for ErtHyperparams {
    fn default() -> Self {
        ErtHyperparams {
            n_estimators: 300,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ErtHyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::BadHyperparams {
                reason: reason.to_string(),
            })
        };
        if self.n_estimators == 0 {
            return fail("n_estimators must be positive");
        }
        if self.min_samples_split < 2 {
            return fail("min_samples_split must be at least 2");
        }
        Ok(())
    }
}

/// Tree nodes in a flat list; children refer to indices in the same list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Training rows that reached this leaf, counted per class
        /// (index 0 = invalid, 1 = valid).
        counts: [u64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ErtTrainMeta {
    pub n_training_rows: u64,
    /// Row accuracy on the training set at a 0.5 threshold.
    pub training_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErtModel {
    hyperparams: ErtHyperparams,
    trees: Vec<Tree>,
    meta: ErtTrainMeta,
}

impl ErtModel {
    pub fn hyperparams(&self) -> &ErtHyperparams {
        &self.hyperparams
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn meta(&self) -> &ErtTrainMeta {
        &self.meta
    }
}

fn entropy(counts: [u64; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    h
}

struct TreeBuilder<'a> {
    rows: &'a [DatasetRow],
    min_samples_split: usize,
    max_depth: Option<u32>,
}

impl TreeBuilder<'_> {
    fn build(&self, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![TreeNode::Leaf { counts: [0, 0] }];
        let all: Vec<u32> = (0..self.rows.len() as u32).collect();
        let mut stack = vec![(0usize, all, 0u32)];

        while let Some((slot, indices, depth)) = stack.pop() {
            let mut counts = [0u64; 2];
            for &i in &indices {
                counts[self.rows[i as usize].label as usize] += 1;
            }
            let splittable = counts[0] > 0
                && counts[1] > 0
                && indices.len() >= self.min_samples_split
                && self.max_depth.map_or(true, |d| depth < d);
            if splittable {
                if let Some((feature, threshold)) = self.draw_split(&indices, counts, rng) {
                    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = indices
                        .iter()
                        .partition(|&&i| self.rows[i as usize].features[feature] < threshold);
                    let left = nodes.len() as u32;
                    let right = left + 1;
                    nodes.push(TreeNode::Leaf { counts: [0, 0] });
                    nodes.push(TreeNode::Leaf { counts: [0, 0] });
                    nodes[slot] = TreeNode::Split {
                        feature: feature as u8,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right as usize, right_rows, depth + 1));
                    stack.push((left as usize, left_rows, depth + 1));
                    continue;
                }
            }
            nodes[slot] = TreeNode::Leaf { counts };
        }
        Tree { nodes }
    }

    /// One uniform threshold per non-constant feature; the best
    /// information gain wins and ties keep the lowest feature index.
    fn draw_split(
        &self,
        indices: &[u32],
        parent_counts: [u64; 2],
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, f64)> {
        let mut lo = [f64::INFINITY; N_SUPERLAYERS];
        let mut hi = [f64::NEG_INFINITY; N_SUPERLAYERS];
        for &i in indices {
            for (f, &x) in self.rows[i as usize].features.iter().enumerate() {
                lo[f] = lo[f].min(x);
                hi[f] = hi[f].max(x);
            }
        }

        let mut thresholds = [f64::NAN; N_SUPERLAYERS];
        for f in 0..N_SUPERLAYERS {
            if hi[f] > lo[f] {
                thresholds[f] = rng.gen_range(lo[f]..hi[f]);
            }
        }

        let n = indices.len() as f64;
        let parent_entropy = entropy(parent_counts);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..N_SUPERLAYERS {
            let t = thresholds[f];
            if !t.is_finite() || t <= lo[f] {
                continue;
            }
            let mut left = [0u64; 2];
            let mut right = [0u64; 2];
            for &i in indices {
                let row = &self.rows[i as usize];
                if row.features[f] < t {
                    left[row.label as usize] += 1;
                } else {
                    right[row.label as usize] += 1;
                }
            }
            let nl = (left[0] + left[1]) as f64;
            let nr = (right[0] + right[1]) as f64;
            if nl == 0.0 || nr == 0.0 {
                continue;
            }
            let gain =
                parent_entropy - (nl / n) * entropy(left) - (nr / n) * entropy(right);
            if best.map_or(true, |(_, _, g)| gain > g) {
                best = Some((f, t, gain));
            }
        }
        best.map(|(f, t, _)| (f, t))
    }
}

fn tree_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Grow the whole forest. Trees are independent (each has its own RNG
/// stream derived from the seed), so they are built in parallel without
/// changing the result.
pub fn train(rows: &[DatasetRow], hyperparams: &ErtHyperparams) -> Result<ErtModel, ModelError> {
    hyperparams.validate()?;
    if rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let builder = TreeBuilder {
        rows,
        min_samples_split: hyperparams.min_samples_split,
        max_depth: hyperparams.max_depth,
    };
    let trees: Vec<Tree> = (0..hyperparams.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(hyperparams.seed, i));
            builder.build(&mut rng)
        })
        .collect();

    let mut model = ErtModel {
        hyperparams: hyperparams.clone(),
        trees,
        meta: ErtTrainMeta::default(),
    };
    let correct = rows
        .iter()
        .filter(|row| {
            let (_, p_valid) = model.predict_proba(&row.features);
            (p_valid >= 0.5) == row.label
        })
        .count();
    model.meta = ErtTrainMeta {
        n_training_rows: rows.len() as u64,
        training_accuracy: correct as f64 / rows.len() as f64,
    };
    Ok(model)
}

impl Classifier for ErtModel {
    /// Unweighted mean of the per-tree leaf class frequencies.
    fn predict_proba(&self, features: &[f64; N_SUPERLAYERS]) -> (f64, f64) {
        let mut acc = [0.0f64; 2];
        for tree in &self.trees {
            let mut node = &tree.nodes[0];
            loop {
                match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let next = if features[*feature as usize] < *threshold {
                            *left
                        } else {
                            *right
                        };
                        node = &tree.nodes[next as usize];
                    }
                    TreeNode::Leaf { counts } => {
                        let n = (counts[0] + counts[1]) as f64;
                        acc[0] += counts[0] as f64 / n;
                        acc[1] += counts[1] as f64 / n;
                        break;
                    }
                }
            }
        }
        let t = self.trees.len() as f64;
        (acc[0] / t, acc[1] / t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(features: [f64; 6], label: bool) -> DatasetRow {
        DatasetRow { features, label }
    }

    fn separable_rows(n: usize, seed: u64) -> Vec<DatasetRow> {
        // Valid iff f3 > 0.5, with a 0.1 margin excluded around the cut.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        while rows.len() < n {
            let mut features = [0.0f64; 6];
            for v in features.iter_mut() {
                *v = rng.gen_range(0.0..=1.0);
            }
            if (features[2] - 0.5).abs() < 0.1 {
                continue;
            }
            rows.push(row(features, features[2] > 0.5));
        }
        rows
    }

    #[test]
    fn single_row_grows_single_leaf_trees() {
        let rows = vec![row([0.5; 6], true)];
        let hp = ErtHyperparams {
            n_estimators: 10,
            seed: 4,
            ..ErtHyperparams::default()
        };
        let model = train(&rows, &hp).unwrap();
        for tree in model.trees() {
            assert_eq!(tree.nodes, vec![TreeNode::Leaf { counts: [0, 1] }]);
        }
        assert_eq!(model.predict_proba(&[0.5; 6]), (0.0, 1.0));
    }

    #[test]
    fn contradictory_duplicate_rows_stay_in_one_leaf() {
        let rows = vec![row([0.3; 6], true), row([0.3; 6], false)];
        let hp = ErtHyperparams {
            n_estimators: 7,
            seed: 1,
            ..ErtHyperparams::default()
        };
        let model = train(&rows, &hp).unwrap();
        for tree in model.trees() {
            assert_eq!(tree.nodes.len(), 1);
        }
        let (p0, p1) = model.predict_proba(&[0.3; 6]);
        assert_eq!((p0, p1), (0.5, 0.5));
    }

    #[test]
    fn axis_aligned_toy_problem_is_memorized() {
        let rows = separable_rows(500, 6);
        let model = train(&rows, &ErtHyperparams { seed: 3, ..ErtHyperparams::default() })
            .unwrap();
        assert_eq!(model.meta().training_accuracy, 1.0);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let rows = separable_rows(200, 9);
        let hp = ErtHyperparams {
            n_estimators: 25,
            seed: 12,
            ..ErtHyperparams::default()
        };
        let model = train(&rows, &hp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut x = [0.0; 6];
            for v in x.iter_mut() {
                *v = rng.gen_range(0.0..=1.0);
            }
            let (p0, p1) = model.predict_proba(&x);
            assert!((p0 + p1 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic_and_seed_sensitive() {
        let rows = separable_rows(150, 15);
        let hp = ErtHyperparams {
            n_estimators: 20,
            seed: 40,
            ..ErtHyperparams::default()
        };
        let a = train(&rows, &hp).unwrap();
        let b = train(&rows, &hp).unwrap();
        assert_eq!(a, b);

        let single_thread_pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = single_thread_pool.install(|| train(&rows, &hp).unwrap());
        assert_eq!(a, c);

        let d = train(&rows, &ErtHyperparams { seed: 41, ..hp }).unwrap();
        assert_ne!(a.trees(), d.trees());
    }

    /// Route rows down a tree and check that every split strictly shrinks
    /// the row set and that leaf counts match what actually arrives.
    fn check_tree(tree: &Tree, node: u32, rows: &[&DatasetRow]) {
        match &tree.nodes[node as usize] {
            TreeNode::Leaf { counts } => {
                let mut seen = [0u64; 2];
                for r in rows {
                    seen[r.label as usize] += 1;
                }
                assert_eq!(*counts, seen);
                assert!(rows.len() > 0);
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let (l, r): (Vec<&DatasetRow>, Vec<&DatasetRow>) = rows
                    .iter()
                    .partition(|row| row.features[*feature as usize] < *threshold);
                assert!(l.len() < rows.len());
                assert!(r.len() < rows.len());
                check_tree(tree, *left, &l);
                check_tree(tree, *right, &r);
            }
        }
    }

    #[test]
    fn splits_strictly_shrink_and_leaves_account_for_rows() {
        let rows = separable_rows(120, 33);
        let hp = ErtHyperparams {
            n_estimators: 12,
            seed: 8,
            ..ErtHyperparams::default()
        };
        let model = train(&rows, &hp).unwrap();
        let refs: Vec<&DatasetRow> = rows.iter().collect();
        for tree in model.trees() {
            check_tree(tree, 0, &refs);
        }
    }

    #[test]
    fn hyperparams_are_validated() {
        let rows = vec![row([0.1; 6], true)];
        let bad = ErtHyperparams {
            n_estimators: 0,
            ..ErtHyperparams::default()
        };
        assert!(train(&rows, &bad).is_err());
        let bad = ErtHyperparams {
            min_samples_split: 1,
            ..ErtHyperparams::default()
        };
        assert!(train(&rows, &bad).is_err());
        assert!(train(&[], &ErtHyperparams::default()).is_err());
    }
}
