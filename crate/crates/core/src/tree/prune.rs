//! Cost-complexity (weakest-link) pruning.

use super::{Tree, TreeNode};

/// Nested subtrees, largest first, ending with the root alone.
/// `subtrees[i]` is optimal for complexity parameters in
/// `[alphas[i], alphas[i + 1])`.
#[derive(Debug, Clone)]
pub struct PruneSequence {
    pub alphas: Vec<f64>,
    pub subtrees: Vec<Tree>,
}

/// Smallest link strength g(t) = (R(t) − R(T_t)) / (|leaves(T_t)| − 1)
/// over internal nodes, or `None` for a single leaf.
fn weakest(node: &TreeNode) -> Option<f64> {
    let b = node.branch.as_ref()?;
    let own = (node.fit.deviance - node.subtree_deviance()) / (node.leaf_count() - 1) as f64;
    Some([weakest(&b.left), weakest(&b.right)].into_iter().flatten().fold(own, f64::min))
}

/// Collapses every internal node whose link strength is at most `alpha`,
/// children first so ancestors see updated subtree sizes.
fn collapse(node: &mut TreeNode, alpha: f64) {
    let Some(b) = node.branch.as_mut() else {
        return;
    };
    collapse(&mut b.left, alpha);
    collapse(&mut b.right, alpha);
    let g = (node.fit.deviance - node.subtree_deviance()) / (node.leaf_count() - 1) as f64;
    if g <= alpha {
        node.branch = None;
    }
}

fn collapse_until_stable(node: &mut TreeNode, alpha: f64) {
    while weakest(node).is_some_and(|g| g <= alpha) {
        collapse(node, alpha);
    }
}

pub fn prune_sequence(tree: &Tree) -> PruneSequence {
    let tol = 1e-10 * (1.0 + tree.root.fit.deviance.abs());
    let mut current = tree.clone();
    collapse_until_stable(&mut current.root, tol);
    let mut alphas = vec![0.0];
    let mut subtrees = vec![current.clone()];
    while let Some(g) = weakest(&current.root) {
        let alpha = g.max(0.0);
        collapse_until_stable(&mut current.root, alpha + tol);
        alphas.push(alpha);
        subtrees.push(current.clone());
    }
    PruneSequence { alphas, subtrees }
}
