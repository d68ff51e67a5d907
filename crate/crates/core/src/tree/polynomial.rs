//! Expansion of a tree on two-level factors into one polynomial.

use super::{Column, Split, SplitRule, Tree, TreeNode};
use crate::design::{Factor, Polynomial, Term};
use crate::error::{Error, Result};
use crate::glm::Family;

fn side(level: usize) -> f64 {
    if level == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Indicator polynomial of the left child of a two-level split.
fn left_indicator(split: &Split, factor: &Factor) -> Result<Polynomial> {
    let goes_left = |level: usize| match &split.rule {
        SplitRule::Subset { left } => left.contains(&level),
        SplitRule::Threshold { value } => factor.numeric(level).unwrap_or(level as f64) <= *value,
    };
    match (goes_left(0), goes_left(1)) {
        (true, false) => Ok(Polynomial::indicator(split.variable, -1.0)),
        (false, true) => Ok(Polynomial::indicator(split.variable, 1.0)),
        _ => Err(Error::InvalidInput(format!(
            "split on {} does not separate its two levels",
            factor.name()
        ))),
    }
}

fn leaf_polynomial(node: &TreeNode) -> Polynomial {
    let mut p = Polynomial::new();
    for (c, &b) in node.fit.columns.iter().zip(&node.fit.coefficients) {
        match *c {
            Column::Intercept => p.add_term(Term::INTERCEPT, b),
            Column::Linear { factor } => p.add_term(Term::single(factor), b),
            Column::Dummy { factor, level } => p = p.add(&Polynomial::indicator(factor, side(level)).scale(b)),
        }
    }
    p
}

fn expand(node: &TreeNode, factors: &[Factor], path: &Polynomial) -> Result<Polynomial> {
    match &node.branch {
        None => Ok(path.mul(&leaf_polynomial(node))),
        Some(b) => {
            let left = left_indicator(&b.split, &factors[b.split.variable])?;
            let right = Polynomial::constant(1.0).add(&left.scale(-1.0));
            Ok(expand(&b.left, factors, &path.mul(&left))?.add(&expand(&b.right, factors, &path.mul(&right))?))
        }
    }
}

/// Sum over leaves of the leaf model times the product of the path's split
/// indicators, in ±1 codes. Requires a Gaussian tree on two-level factors.
pub fn to_polynomial(tree: &Tree) -> Result<Polynomial> {
    if tree.family != Family::Gaussian {
        return Err(Error::InvalidInput("polynomial form needs an identity-link tree".into()));
    }
    if let Some(f) = tree.factors.iter().find(|f| !f.is_two_level()) {
        return Err(Error::InvalidInput(format!(
            "polynomial form needs two-level factors; {} has {} levels",
            f.name(),
            f.level_count()
        )));
    }
    Ok(expand(&tree.root, &tree.factors, &Polynomial::constant(1.0))?.pruned(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::wafer_reconstruction;
    use crate::design::enumerate_design;
    use crate::tree::{grow_tree, predict, NodeModelKind, TreeConfig};

    #[test]
    fn matches_predictions_everywhere() {
        let ds = wafer_reconstruction().dataset;
        for kind in [NodeModelKind::Constant, NodeModelKind::BestSimple, NodeModelKind::Multiple] {
            let mut cfg = TreeConfig::new(kind);
            cfg.min_node_size = Some(12);
            let t = grow_tree(&ds, &cfg).unwrap();
            let p = to_polynomial(&t).unwrap();
            for pt in enumerate_design(4).unwrap() {
                assert!((p.eval_point(&pt) - predict(&t, &pt).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_multi_level() {
        let ds = crate::datasets::seed_germination().dataset;
        let mut cfg = TreeConfig::default();
        cfg.min_node_size = Some(9);
        let t = grow_tree(&ds, &cfg).unwrap();
        assert!(to_polynomial(&t).is_err());
    }
}
