//! V-fold cross-validated choice among pruned subtrees.

use rand::seq::SliceRandom;

use super::{grow_tree, prune_sequence, PruneSequence, Tree, TreeConfig};
use crate::design::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, stream_rng};

#[derive(Debug, Clone)]
pub struct CvResult {
    /// Selected subtree of the tree grown on all rows.
    pub tree: Tree,
    /// Complexity parameters of the full-data pruning sequence.
    pub alphas: Vec<f64>,
    /// Leaf count of each subtree in the sequence.
    pub leaf_counts: Vec<usize>,
    /// Held-out deviance summed over folds, one per subtree.
    pub cv_deviance: Vec<f64>,
    /// Index of the selected subtree.
    pub chosen: usize,
}

fn subtree_at(seq: &PruneSequence, beta: f64) -> &Tree {
    let i = seq.alphas.partition_point(|&a| a <= beta).max(1) - 1;
    &seq.subtrees[i]
}

fn held_out_deviance(tree: &Tree, test: &Dataset) -> Result<f64> {
    let trials = test.trials();
    let mut total = 0.0;
    for (i, row) in test.rows().iter().enumerate() {
        let mu = tree.family.clamp_mean(tree.predict_detailed(&row.point)?.value);
        let n = trials.as_ref().map_or(1.0, |t| t[i]);
        total += tree.family.unit_deviance(row.y, mu, n);
    }
    Ok(total)
}

/// Grows a tree on all rows, prunes it, and picks the subtree with the
/// smallest `folds`-fold cross-validated deviance. Each subtree is
/// represented in a fold by the fold's subtree at the geometric mean of
/// consecutive complexity parameters. Ties favour the smaller tree.
pub fn cv_select(dataset: &Dataset, config: &TreeConfig, folds: usize, seed: u64) -> Result<CvResult> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if dataset.len() < folds {
        return Err(Error::InvalidInput(format!(
            "{} rows cannot be split into {folds} folds",
            dataset.len()
        )));
    }
    let full = prune_sequence(&grow_tree(dataset, config)?);
    let m = full.alphas.len();
    let betas: Vec<f64> = (0..m)
        .map(|k| {
            if k + 1 < m {
                (full.alphas[k] * full.alphas[k + 1]).sqrt()
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut stream_rng(seed, domain::CV_FOLDS, 0));
    let mut fold_of = vec![0; dataset.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let mut cv_deviance = vec![0.0; m];
    for v in 0..folds {
        let train: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] != v).collect();
        let test: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] == v).collect();
        let fold_config = config.clone().with_seed(derive_seed(&[config.seed, v as u64 + 1]));
        let seq = prune_sequence(&grow_tree(&dataset.subset(&train), &fold_config)?);
        let test = dataset.subset(&test);
        for (total, &beta) in cv_deviance.iter_mut().zip(&betas) {
            *total += held_out_deviance(subtree_at(&seq, beta), &test)?;
        }
    }

    let best = cv_deviance.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    let chosen = (0..m).rev().find(|&k| cv_deviance[k] <= best + tol).unwrap_or(m - 1);
    Ok(CvResult {
        tree: full.subtrees[chosen].clone(),
        leaf_counts: full.subtrees.iter().map(Tree::leaf_count).collect(),
        alphas: full.alphas,
        cv_deviance,
        chosen,
    })
}
