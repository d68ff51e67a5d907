//! Split selection and recursive growth.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::chisq::{binary_groups, curvature_groups, is_constant, pearson_chi2, pvalue, sign_table};
use super::node_model::{Frame, NodeFit, NodeModelKind, NodeProblem, SubFit};
use super::{Branch, Resolved, Split, SplitRule, Tree, TreeConfig, TreeNode};
use crate::design::{Dataset, FactorKind};
use crate::distributions::chi2_quantile;
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::rng::{domain, stream_rng};

/// Nominal splits enumerate 2^(L−1) − 1 subsets; more levels are refused.
pub const MAX_NOMINAL_LEVELS: usize = 12;

/// Curvature test of one variable in a node.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableTest {
    pub variable: usize,
    pub statistic: f64,
    pub df: usize,
    pub raw_p: f64,
    /// Bootstrap scale applied to the statistic (1 for non-regressors).
    pub scale: f64,
    pub p: f64,
}

/// Interaction test of one pair of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTest {
    pub pair: (usize, usize),
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
    /// Bonferroni-adjusted over the number of pairs tested.
    pub adjusted_p: f64,
}

/// Everything computed when deciding how to split a node.
#[derive(Debug, Clone)]
pub struct NodeDiagnostics {
    pub fit: NodeFit,
    /// One entry per factor; `None` when the factor is constant in the node.
    pub curvature: Vec<Option<VariableTest>>,
    pub interactions: Vec<PairTest>,
    pub chosen: Option<usize>,
}

/// Scales a χ² statistic by a bootstrap factor and returns its p-value.
pub fn calibrate_pvalue(statistic: f64, df: usize, scale: f64) -> f64 {
    pvalue(statistic * scale, df)
}

struct Target {
    groups: Vec<usize>,
    ngroups: usize,
    df: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Permutation scale factors: the response is permuted within the node,
/// the same model columns are refitted, and each target's χ² statistic is
/// recomputed. The factor is max(1, median χ²_df / median of the
/// replicates), falling back to means when the replicate median is zero.
fn permutation_scales(problem: &NodeProblem, fit: &SubFit, targets: &[Target], reps: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = problem.n();
    let mut stats: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); targets.len()];
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..reps {
        perm.shuffle(rng);
        let y = perm.iter().map(|&i| problem.y[i]).collect();
        let t = perm.iter().map(|&i| problem.trials[i]).collect();
        let replicate = problem.with_response(y, t);
        let Ok(refit) = replicate.fit_columns(&fit.cols) else {
            continue;
        };
        let negative = replicate.negative_residuals(&refit);
        for (s, target) in stats.iter_mut().zip(targets) {
            s.push(pearson_chi2(&sign_table(&target.groups, target.ngroups, &negative)).0);
        }
    }
    stats
        .into_iter()
        .zip(targets)
        .map(|(s, target)| {
            if s.is_empty() || target.df == 0 {
                return 1.0;
            }
            let df = target.df as f64;
            let m = median(s.clone());
            let scale = if m > 0.0 {
                chi2_quantile(0.5, df) / m
            } else {
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                if mean > 0.0 {
                    df / mean
                } else {
                    1.0
                }
            };
            scale.max(1.0)
        })
        .collect()
}

pub(crate) struct Grower<'a> {
    frame: Frame<'a>,
    config: &'a TreeConfig,
    resolved: Resolved,
    pure_tolerance: f64,
}

impl<'a> Grower<'a> {
    pub fn new(dataset: &'a Dataset, config: &'a TreeConfig) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidInput("cannot grow a tree on an empty dataset".into()));
        }
        let resolved = config.resolve(dataset)?;
        let frame = Frame::new(dataset, resolved.family)?;
        let pure_tolerance = match resolved.family {
            Family::Gaussian => {
                let n = frame.y.len() as f64;
                let mean = frame.y.iter().sum::<f64>() / n;
                1e-12 * (1.0 + frame.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>())
            }
            _ => 1e-9,
        };
        Ok(Grower {
            frame,
            config,
            resolved,
            pure_tolerance,
        })
    }

    fn problem(&self, rows: &[usize]) -> NodeProblem {
        NodeProblem::new(&self.frame, rows, &self.resolved.columns)
    }

    fn node_levels(&self, rows: &[usize], variable: usize) -> Vec<usize> {
        rows.iter().map(|&i| self.frame.levels[variable][i]).collect()
    }

    fn examine(&self, rows: &[usize], problem: &NodeProblem, fit: &SubFit, rng: &mut ChaCha8Rng) -> (Vec<Option<VariableTest>>, Vec<PairTest>, Option<usize>) {
        let k = self.frame.factors.len();
        let negative = problem.negative_residuals(fit);
        let levels: Vec<Vec<usize>> = (0..k).map(|f| self.node_levels(rows, f)).collect();
        let admissible: Vec<bool> = levels.iter().map(|l| !is_constant(l)).collect();

        let mut curvature: Vec<Option<VariableTest>> = vec![None; k];
        let mut targets: Vec<(usize, Target)> = Vec::new();
        let regressors = if self.config.kind == NodeModelKind::Constant {
            Vec::new()
        } else {
            fit.regressor_factors(&problem.columns)
        };
        for f in 0..k {
            if !admissible[f] {
                continue;
            }
            let (groups, ng) = curvature_groups(&self.frame.factors[f], &levels[f]);
            let (statistic, df) = pearson_chi2(&sign_table(&groups, ng, &negative));
            let raw_p = pvalue(statistic, df);
            curvature[f] = Some(VariableTest {
                variable: f,
                statistic,
                df,
                raw_p,
                scale: 1.0,
                p: raw_p,
            });
            if regressors.contains(&f) && df > 0 {
                targets.push((
                    f,
                    Target {
                        groups,
                        ngroups: ng,
                        df,
                    },
                ));
            }
        }
        if !targets.is_empty() {
            let t: Vec<Target> = targets.iter().map(|(_, t)| Target { groups: t.groups.clone(), ngroups: t.ngroups, df: t.df }).collect();
            let scales = permutation_scales(problem, fit, &t, self.config.bootstrap_reps, rng);
            for ((f, _), scale) in targets.iter().zip(scales) {
                let test = curvature[*f].as_mut().expect("admissible");
                test.scale = scale;
                test.p = calibrate_pvalue(test.statistic, test.df, scale);
            }
        }

        let mut interactions = Vec::new();
        if self.config.interactions {
            let vars: Vec<usize> = (0..k).filter(|&f| admissible[f]).collect();
            let bins: Vec<Vec<usize>> = (0..k)
                .map(|f| {
                    if admissible[f] {
                        binary_groups(&self.frame.factors[f], &levels[f])
                    } else {
                        Vec::new()
                    }
                })
                .collect();
            let npairs = vars.len() * vars.len().saturating_sub(1) / 2;
            for (i, &a) in vars.iter().enumerate() {
                for &b in &vars[i + 1..] {
                    let cells: Vec<usize> = bins[a].iter().zip(&bins[b]).map(|(x, y)| 2 * x + y).collect();
                    let (statistic, df) = pearson_chi2(&sign_table(&cells, 4, &negative));
                    let p = pvalue(statistic, df);
                    interactions.push(PairTest {
                        pair: (a, b),
                        statistic,
                        df,
                        p,
                        adjusted_p: (p * npairs as f64).min(1.0),
                    });
                }
            }
        }

        let chosen = choose(&curvature, &interactions, rng);
        (curvature, interactions, chosen)
    }

    fn size_ok(&self, left: usize, right: usize) -> bool {
        left >= self.resolved.min_node_size && right >= self.resolved.min_node_size
    }

    fn split_deviance(&self, left: &[usize], right: &[usize]) -> f64 {
        let kind = self.config.kind;
        self.problem(left).fit_kind(kind).deviance + self.problem(right).fit_kind(kind).deviance
    }

    fn best_split(&self, rows: &[usize], variable: usize) -> Result<Option<Split>> {
        let factor = &self.frame.factors[variable];
        let levels = self.node_levels(rows, variable);
        let partition = |left_of: &dyn Fn(usize) -> bool| -> (Vec<usize>, Vec<usize>) {
            rows.iter().zip(&levels).fold((Vec::new(), Vec::new()), |(mut l, mut r), (&i, &lv)| {
                if left_of(lv) {
                    l.push(i);
                } else {
                    r.push(i);
                }
                (l, r)
            })
        };
        match factor.kind() {
            FactorKind::TwoLevel => {
                let (l, r) = partition(&|lv| lv == 0);
                if l.is_empty() || r.is_empty() || !self.size_ok(l.len(), r.len()) {
                    return Ok(None);
                }
                Ok(Some(Split {
                    variable,
                    rule: SplitRule::Subset { left: vec![0] },
                    unseen: Vec::new(),
                }))
            }
            FactorKind::Ordinal => {
                let score = |lv: usize| factor.numeric(lv).unwrap_or(lv as f64);
                let mut values: Vec<f64> = levels.iter().map(|&l| score(l)).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                let mut best: Option<(f64, f64)> = None;
                for w in values.windows(2) {
                    let c = 0.5 * (w[0] + w[1]);
                    let (l, r) = partition(&|lv| score(lv) <= c);
                    if !self.size_ok(l.len(), r.len()) {
                        continue;
                    }
                    let d = self.split_deviance(&l, &r);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, c));
                    }
                }
                Ok(best.map(|(_, value)| Split {
                    variable,
                    rule: SplitRule::Threshold { value },
                    unseen: Vec::new(),
                }))
            }
            FactorKind::Nominal => {
                let mut counts = vec![0usize; factor.level_count()];
                for &l in &levels {
                    counts[l] += 1;
                }
                let present: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] > 0).collect();
                if present.len() > MAX_NOMINAL_LEVELS {
                    return Err(Error::Config(format!(
                        "factor {} has {} levels in a node; at most {MAX_NOMINAL_LEVELS} are searched",
                        factor.name(),
                        present.len()
                    )));
                }
                let m = present.len();
                if m < 2 {
                    return Ok(None);
                }
                let mut best: Option<(f64, Vec<usize>)> = None;
                for mask in 0u32..(1 << (m - 1)) - 1 {
                    let mut left = vec![present[0]];
                    left.extend((0..m - 1).filter(|b| mask & (1 << b) != 0).map(|b| present[b + 1]));
                    let (l, r) = partition(&|lv| left.contains(&lv));
                    if !self.size_ok(l.len(), r.len()) {
                        continue;
                    }
                    let d = self.split_deviance(&l, &r);
                    if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, left));
                    }
                }
                Ok(best.map(|(_, mut left)| {
                    let left_rows: usize = left.iter().map(|&l| counts[l]).sum();
                    let unseen: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] == 0).collect();
                    if 2 * left_rows >= rows.len() {
                        left.extend(&unseen);
                    }
                    left.sort_unstable();
                    Split {
                        variable,
                        rule: SplitRule::Subset { left },
                        unseen,
                    }
                }))
            }
        }
    }

    fn grow(&self, rows: Vec<usize>, depth: usize, id: u64) -> Result<TreeNode> {
        let kind = self.config.kind;
        let problem = self.problem(&rows);
        let sub = problem.fit_kind(kind);
        let fit = sub.clone().into_node_fit(&problem, kind);
        if rows.len() < 2 * self.resolved.min_node_size
            || depth >= self.config.max_depth
            || fit.deviance <= self.pure_tolerance
        {
            return Ok(TreeNode::leaf(id, fit));
        }
        let mut rng = stream_rng(self.config.seed, domain::TREE_NODE, id);
        let (_, _, chosen) = self.examine(&rows, &problem, &sub, &mut rng);
        let Some(variable) = chosen else {
            return Ok(TreeNode::leaf(id, fit));
        };
        let Some(split) = self.best_split(&rows, variable)? else {
            return Ok(TreeNode::leaf(id, fit));
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .copied()
            .partition(|&i| split.goes_left(self.frame.factors, &self.frame.point(i)));
        let left = self.grow(left, depth + 1, 2 * id)?;
        let right = self.grow(right, depth + 1, 2 * id + 1)?;
        Ok(TreeNode {
            id,
            n: rows.len(),
            fit,
            branch: Some(Box::new(Branch { split, left, right })),
        })
    }
}

/// Picks the variable with the smallest calibrated curvature p-value. An
/// interaction pair whose adjusted p-value beats every curvature p-value
/// contributes its member with the smaller curvature p-value. Exact ties
/// are broken uniformly at random with the node's generator.
fn choose(curvature: &[Option<VariableTest>], interactions: &[PairTest], rng: &mut ChaCha8Rng) -> Option<usize> {
    fn tied_min<T>(items: &[T], key: impl Fn(&T) -> f64, rng: &mut ChaCha8Rng) -> Option<usize> {
        let best = items.iter().map(&key).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return None;
        }
        let tol = 1e-12 * best.abs();
        let tied: Vec<usize> = (0..items.len()).filter(|&i| key(&items[i]) <= best + tol).collect();
        match tied.len() {
            0 => None,
            1 => Some(tied[0]),
            n => Some(tied[rng.random_range(0..n)]),
        }
    }
    let tests: Vec<&VariableTest> = curvature.iter().flatten().collect();
    let i = tied_min(&tests, |t| t.p, rng)?;
    let best_p = tests[i].p;
    let mut chosen = tests[i].variable;
    if let Some(j) = tied_min(interactions, |t| t.adjusted_p, rng) {
        let pair = &interactions[j];
        if pair.adjusted_p < best_p {
            let members: Vec<&VariableTest> = [pair.pair.0, pair.pair.1]
                .iter()
                .filter_map(|&v| curvature[v].as_ref())
                .collect();
            if let Some(m) = tied_min(&members, |t| t.p, rng) {
                chosen = members[m].variable;
            }
        }
    }
    Some(chosen)
}

/// Fits the node model at `rows` and runs every split-variable test.
/// `node_id` selects the node's random stream (the root is 1).
pub fn examine_node(dataset: &Dataset, rows: &[usize], config: &TreeConfig, node_id: u64) -> Result<NodeDiagnostics> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("node has no rows".into()));
    }
    let grower = Grower::new(dataset, config)?;
    let problem = grower.problem(rows);
    let sub = problem.fit_kind(config.kind);
    let mut rng = stream_rng(config.seed, domain::TREE_NODE, node_id);
    let (curvature, interactions, chosen) = grower.examine(rows, &problem, &sub, &mut rng);
    Ok(NodeDiagnostics {
        fit: sub.into_node_fit(&problem, config.kind),
        curvature,
        interactions,
        chosen,
    })
}

/// The variable that would split the node at `rows`, or `None` when every
/// factor is constant there.
pub fn choose_split_variable(dataset: &Dataset, rows: &[usize], config: &TreeConfig, node_id: u64) -> Result<Option<usize>> {
    Ok(examine_node(dataset, rows, config, node_id)?.chosen)
}

/// Bootstrap scale factors for `variables` given the node model at `rows`.
pub fn bootstrap_scales(dataset: &Dataset, rows: &[usize], config: &TreeConfig, variables: &[usize], node_id: u64) -> Result<Vec<f64>> {
    let grower = Grower::new(dataset, config)?;
    let problem = grower.problem(rows);
    let sub = problem.fit_kind(config.kind);
    let targets: Vec<Target> = variables
        .iter()
        .map(|&f| {
            let levels = grower.node_levels(rows, f);
            let (groups, ngroups) = curvature_groups(&dataset.factors()[f], &levels);
            let mut seen = vec![false; ngroups];
            for &g in &groups {
                seen[g] = true;
            }
            let df = seen.iter().filter(|&&s| s).count().saturating_sub(1);
            Target { groups, ngroups, df }
        })
        .collect();
    let mut rng = stream_rng(config.seed, domain::TREE_NODE, node_id);
    Ok(permutation_scales(&problem, &sub, &targets, config.bootstrap_reps, &mut rng))
}

/// Best split of `variable` at `rows`: the threshold or level subset that
/// minimizes the summed deviance of the two child models, subject to the
/// minimum node size.
pub fn best_split_value(dataset: &Dataset, rows: &[usize], variable: usize, config: &TreeConfig) -> Result<Option<Split>> {
    if variable >= dataset.factors().len() {
        return Err(Error::InvalidInput(format!("variable {variable} out of range")));
    }
    Grower::new(dataset, config)?.best_split(rows, variable)
}

/// Grows a tree by recursive partitioning until nodes are too small, too
/// deep, fitted exactly, or have no usable split.
pub fn grow_tree(dataset: &Dataset, config: &TreeConfig) -> Result<Tree> {
    let grower = Grower::new(dataset, config)?;
    let root = grower.grow((0..dataset.len()).collect(), 0, 1)?;
    Ok(Tree {
        factors: dataset.factors().to_vec(),
        family: grower.resolved.family,
        kind: config.kind,
        root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{seed_germination, wafer_reconstruction};
    use crate::design::{enumerate_design, Factor, Observation, ResponseKind};

    fn all_rows(ds: &Dataset) -> Vec<usize> {
        (0..ds.len()).collect()
    }

    #[test]
    fn constant_response_gives_root_only() {
        let ds = Dataset::two_level_grid(&["A", "B", "C"], 4, vec![2.0; 32]).unwrap();
        let t = grow_tree(&ds, &TreeConfig::default()).unwrap();
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn wafer_constant_root_splits_on_d() {
        let ds = wafer_reconstruction().dataset;
        let v = choose_split_variable(&ds, &all_rows(&ds), &TreeConfig::default(), 1).unwrap();
        assert_eq!(v, Some(3));
    }

    #[test]
    fn two_level_split_is_unique() {
        let ds = wafer_reconstruction().dataset;
        let s = best_split_value(&ds, &all_rows(&ds), 1, &TreeConfig::default()).unwrap().unwrap();
        assert_eq!(s.rule, SplitRule::Subset { left: vec![0] });
    }

    fn one_factor(levels: &[&str], ordinal: bool, means: &[f64]) -> Dataset {
        let f = if ordinal {
            let scores: Vec<f64> = (1..=levels.len()).map(|v| v as f64).collect();
            Factor::ordinal("x", levels, &scores).unwrap()
        } else {
            Factor::nominal("x", levels).unwrap()
        };
        let mut rows = Vec::new();
        for (l, &m) in means.iter().enumerate() {
            for r in 0..8 {
                rows.push(Observation {
                    point: crate::DesignPoint(vec![l]),
                    y: m + 0.01 * r as f64,
                    n: None,
                });
            }
        }
        Dataset::new(vec![f], rows, ResponseKind::Gaussian).unwrap()
    }

    #[test]
    fn ordinal_threshold_at_jump() {
        let ds = one_factor(&["1", "2", "3"], true, &[2.0, 2.0, 3.0]);
        let s = best_split_value(&ds, &all_rows(&ds), 0, &TreeConfig::default()).unwrap().unwrap();
        assert_eq!(s.rule, SplitRule::Threshold { value: 2.5 });
    }

    #[test]
    fn nominal_outlier_isolated() {
        let ds = one_factor(&["a", "b", "c"], false, &[1.0, 5.0, 1.0]);
        let s = best_split_value(&ds, &all_rows(&ds), 0, &TreeConfig::default()).unwrap().unwrap();
        assert_eq!(s.rule, SplitRule::Subset { left: vec![0, 2] });
    }

    #[test]
    fn nominal_unseen_level_goes_to_majority() {
        let ds = one_factor(&["a", "b", "c", "d"], false, &[1.0, 5.0, 1.0, 9.0]);
        let rows: Vec<usize> = (0..24).collect(); // level d absent
        let s = best_split_value(&ds, &rows, 0, &TreeConfig::default()).unwrap().unwrap();
        assert_eq!(s.unseen, vec![3]);
        assert_eq!(s.rule, SplitRule::Subset { left: vec![0, 2, 3] });
    }

    #[test]
    fn interaction_detected() {
        // y = x1·x2 + small noise on a 2^3 × 8 layout
        let mut y = Vec::new();
        let mut i = 0.0f64;
        for p in enumerate_design(3).unwrap() {
            let c = p.codes();
            for _ in 0..8 {
                i += 1.0;
                y.push(c[0] * c[1] + 0.05 * (i * 1.7).sin());
            }
        }
        let ds = Dataset::two_level_grid(&["A", "B", "C"], 8, y).unwrap();
        let d = examine_node(&ds, &all_rows(&ds), &TreeConfig::default(), 1).unwrap();
        let ab = d.interactions.iter().find(|t| t.pair == (0, 1)).unwrap();
        assert!(ab.p < 1e-6);
        let main_min = d.curvature.iter().flatten().map(|t| t.p).fold(1.0, f64::min);
        assert!(ab.adjusted_p < main_min);
        assert!(matches!(d.chosen, Some(0) | Some(1)));
    }

    #[test]
    fn calibration_identity_and_shrinkage() {
        assert_eq!(calibrate_pvalue(3.0, 2, 1.0), pvalue(3.0, 2));
        assert!(calibrate_pvalue(3.0, 2, 2.0) < pvalue(3.0, 2));
    }

    #[test]
    fn regressor_scales_at_least_one() {
        let ds = wafer_reconstruction().dataset;
        let cfg = TreeConfig::new(NodeModelKind::BestSimple);
        let s = bootstrap_scales(&ds, &all_rows(&ds), &cfg, &[3], 1).unwrap();
        assert!(s[0] >= 1.0);
        let d = examine_node(&ds, &all_rows(&ds), &cfg, 1).unwrap();
        // non-regressors are untouched
        for t in d.curvature.iter().flatten() {
            if t.variable != 3 {
                assert_eq!(t.scale, 1.0);
            }
        }
    }

    #[test]
    fn seed_tree_first_split_on_moisture() {
        let ds = seed_germination().dataset;
        let mut cfg = TreeConfig::new(NodeModelKind::BestSimple);
        cfg.regressors = Some(vec![2]);
        let t = grow_tree(&ds, &cfg).unwrap();
        let b = t.root.branch.as_ref().expect("root splits");
        assert_eq!(b.split.variable, 1);
    }

    #[test]
    fn rows_reach_one_leaf() {
        let ds = wafer_reconstruction().dataset;
        let t = grow_tree(&ds, &TreeConfig::default()).unwrap();
        let total: usize = t.root.leaves().iter().map(|l| l.n).sum();
        assert_eq!(total, 96);
        assert!(t.root.leaves().iter().all(|l| l.n >= 5));
    }
}
