//! GUIDE-style regression trees.
//!
//! Split variables are chosen by chi-squared tests of association between
//! residual signs and each factor (plus pairwise interaction tests), so
//! factors with many levels gain no advantage. Split points are then found
//! by exhaustive search on the chosen factor only. Trees are pruned by
//! cost complexity and selected by V-fold cross-validation.

mod chisq;
mod cv;
mod grow;
mod node_model;
mod polynomial;
mod prune;

use serde::{Deserialize, Serialize};

use crate::design::{Dataset, DesignPoint, Factor, FactorKind, ResponseKind};
use crate::error::{Error, Result};
use crate::glm::Family;

pub use chisq::{curvature_pvalue, interaction_pvalue, pearson_chi2};
pub use cv::{cv_select, CvResult};
pub use grow::{
    best_split_value, bootstrap_scales, calibrate_pvalue, choose_split_variable, examine_node, grow_tree,
    NodeDiagnostics, PairTest, VariableTest,
};
pub use node_model::{fit_node, Column, NodeFit, NodeModelKind};
pub use polynomial::to_polynomial;
pub use prune::{prune_sequence, PruneSequence};

/// Growth settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub kind: NodeModelKind,
    /// Defaults to the family matching the response kind.
    pub family: Option<Family>,
    /// Defaults to max(5, 2·(regressors + 1)).
    pub min_node_size: Option<usize>,
    pub max_depth: usize,
    /// Permutation replicates for p-value calibration (at least 20).
    pub bootstrap_reps: usize,
    pub seed: u64,
    /// Factors allowed as linear predictors in node models; all by default.
    pub regressors: Option<Vec<usize>>,
    /// Whether pairwise interaction tests compete with curvature tests.
    pub interactions: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            kind: NodeModelKind::Constant,
            family: None,
            min_node_size: None,
            max_depth: 6,
            bootstrap_reps: 50,
            seed: 0,
            regressors: None,
            interactions: true,
        }
    }
}

impl TreeConfig {
    pub fn new(kind: NodeModelKind) -> Self {
        TreeConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn resolve(&self, dataset: &Dataset) -> Result<Resolved> {
        let family = self.family.unwrap_or(Family::for_response(dataset.response_kind()));
        match (family, dataset.response_kind()) {
            (Family::Binomial, ResponseKind::Proportion)
            | (Family::Poisson, ResponseKind::Count)
            | (Family::Gaussian, ResponseKind::Gaussian | ResponseKind::Count) => {}
            (f, r) => {
                return Err(Error::Config(format!("family {f:?} does not fit a {r:?} response")));
            }
        }
        if self.bootstrap_reps < 20 {
            return Err(Error::Config(format!(
                "bootstrap_reps = {} is below the minimum of 20",
                self.bootstrap_reps
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        let k = dataset.factors().len();
        let regressors: Vec<usize> = match &self.regressors {
            Some(r) => {
                if let Some(&bad) = r.iter().find(|&&f| f >= k) {
                    return Err(Error::Config(format!("regressor index {bad} out of range")));
                }
                let mut r = r.clone();
                r.sort_unstable();
                r.dedup();
                r
            }
            None => (0..k).collect(),
        };
        let factors = dataset.factors();
        if self.kind == NodeModelKind::BestSimple && self.regressors.is_some() {
            if let Some(&f) = regressors.iter().find(|&&f| factors[f].kind() == FactorKind::Nominal) {
                return Err(Error::Config(format!(
                    "best simple node models need numeric regressors; {} is nominal",
                    factors[f].name()
                )));
            }
        }
        let columns = node_model::candidate_columns(factors, &regressors, self.kind);
        let regressor_count = match self.kind {
            NodeModelKind::Constant => 0,
            NodeModelKind::BestSimple => usize::from(columns.len() > 1),
            _ => columns.len() - 1,
        };
        let min_node_size = self.min_node_size.unwrap_or((2 * (regressor_count + 1)).max(5));
        if min_node_size == 0 {
            return Err(Error::Config("min_node_size must be positive".into()));
        }
        Ok(Resolved {
            family,
            columns,
            min_node_size,
        })
    }
}

pub(crate) struct Resolved {
    pub family: Family,
    pub columns: Vec<Column>,
    pub min_node_size: usize,
}

/// How a node's rows are divided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left when the level score is at most `value`.
    Threshold { value: f64 },
    /// Left when the level index is in `left`.
    Subset { left: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub variable: usize,
    pub rule: SplitRule,
    /// Levels absent from the node at training time; they follow the
    /// larger child and are flagged at prediction.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unseen: Vec<usize>,
}

impl Split {
    pub fn goes_left(&self, factors: &[Factor], point: &[usize]) -> bool {
        let level = point[self.variable];
        match &self.rule {
            SplitRule::Threshold { value } => {
                let f = &factors[self.variable];
                f.numeric(level).unwrap_or(level as f64) <= *value
            }
            SplitRule::Subset { left } => left.contains(&level),
        }
    }

    pub fn is_unseen(&self, point: &[usize]) -> bool {
        self.unseen.contains(&point[self.variable])
    }

    /// Human-readable left-branch condition, e.g. `D = -` or `store <= 31.5`.
    pub fn describe(&self, factors: &[Factor]) -> String {
        let f = &factors[self.variable];
        match &self.rule {
            SplitRule::Threshold { value } => format!("{} <= {}", f.name(), crate::io::fmt_g(*value)),
            SplitRule::Subset { left } => {
                let labels: Vec<&str> = left.iter().map(|&l| f.levels()[l].as_str()).collect();
                if labels.len() == 1 {
                    format!("{} = {}", f.name(), labels[0])
                } else {
                    format!("{} in {{{}}}", f.name(), labels.join(", "))
                }
            }
        }
    }
}

/// A node: a leaf when `branch` is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Heap index: root 1, children 2i and 2i + 1.
    pub id: u64,
    pub n: usize,
    /// Model fitted to this node's training rows (kept for internal nodes
    /// so subtrees can be pruned back to them).
    pub fit: NodeFit,
    pub branch: Option<Box<Branch>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub split: Split,
    pub left: TreeNode,
    pub right: TreeNode,
}

impl TreeNode {
    pub fn leaf(id: u64, fit: NodeFit) -> Self {
        TreeNode {
            id,
            n: fit.n,
            fit,
            branch: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.branch.is_none()
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        match &self.branch {
            None => out.push(self),
            Some(b) => {
                b.left.collect_leaves(out);
                b.right.collect_leaves(out);
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match &self.branch {
            None => 1,
            Some(b) => b.left.leaf_count() + b.right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match &self.branch {
            None => 0,
            Some(b) => 1 + b.left.depth().max(b.right.depth()),
        }
    }

    /// Sum of leaf training deviances.
    pub fn subtree_deviance(&self) -> f64 {
        match &self.branch {
            None => self.fit.deviance,
            Some(b) => b.left.subtree_deviance() + b.right.subtree_deviance(),
        }
    }

    pub(crate) fn route<'a>(&'a self, factors: &[Factor], point: &[usize], flagged: &mut bool) -> &'a TreeNode {
        let mut node = self;
        while let Some(b) = &node.branch {
            *flagged |= b.split.is_unseen(point);
            node = if b.split.goes_left(factors, point) {
                &b.left
            } else {
                &b.right
            };
        }
        node
    }
}

/// A fitted tree with the factor definitions it was grown on.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub factors: Vec<Factor>,
    pub family: Family,
    pub kind: NodeModelKind,
    pub root: TreeNode,
}

/// Prediction with routing details.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Mean on the response scale (a probability for binomial trees).
    pub value: f64,
    pub linear_predictor: f64,
    pub leaf: u64,
    /// True when routing passed a split through a level never seen there.
    pub unseen_level: bool,
}

impl Tree {
    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn predict_detailed(&self, point: &DesignPoint) -> Result<Prediction> {
        if point.0.len() != self.factors.len() {
            return Err(Error::InvalidInput(format!(
                "point has {} levels, tree has {} factors",
                point.0.len(),
                self.factors.len()
            )));
        }
        for (f, &l) in self.factors.iter().zip(&point.0) {
            if l >= f.level_count() {
                return Err(Error::InvalidInput(format!("level {l} out of range for {}", f.name())));
            }
        }
        let mut flagged = false;
        let leaf = self.root.route(&self.factors, &point.0, &mut flagged);
        let eta = leaf.fit.linear_predictor(&self.factors, &point.0);
        Ok(Prediction {
            value: self.family.inverse_link(eta),
            linear_predictor: eta,
            leaf: leaf.id,
            unseen_level: flagged,
        })
    }
}

/// Response-scale prediction at a design point.
pub fn predict(tree: &Tree, point: &DesignPoint) -> Result<f64> {
    Ok(tree.predict_detailed(point)?.value)
}
