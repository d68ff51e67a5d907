//! Contingency-table tests of residual sign against grouped factor values.

use crate::design::{Dataset, Factor, FactorKind};
use crate::distributions::chi2_sf;
use crate::error::{Error, Result};

/// Pearson χ² for a groups × {non-negative, negative} table. Empty groups
/// are dropped; a table with fewer than two groups or an empty sign
/// margin is degenerate and returns (0, 0).
pub fn pearson_chi2(table: &[[f64; 2]]) -> (f64, usize) {
    let rows: Vec<&[f64; 2]> = table.iter().filter(|r| r[0] + r[1] > 0.0).collect();
    let c0: f64 = rows.iter().map(|r| r[0]).sum();
    let c1: f64 = rows.iter().map(|r| r[1]).sum();
    if rows.len() < 2 || c0 == 0.0 || c1 == 0.0 {
        return (0.0, 0);
    }
    let n = c0 + c1;
    let mut stat = 0.0;
    for r in &rows {
        let m = r[0] + r[1];
        for (o, c) in [(r[0], c0), (r[1], c1)] {
            let e = m * c / n;
            stat += (o - e).powi(2) / e;
        }
    }
    (stat, rows.len() - 1)
}

pub(crate) fn pvalue(stat: f64, df: usize) -> f64 {
    if df == 0 {
        1.0
    } else {
        chi2_sf(stat, df as f64)
    }
}

fn numeric_values(factor: &Factor, levels: &[usize]) -> Vec<f64> {
    levels
        .iter()
        .map(|&l| factor.numeric(l).unwrap_or(l as f64))
        .collect()
}

/// Group index of every row for the curvature test: one group per level
/// for two-level and nominal factors and for ordinal factors with at most
/// four distinct values; otherwise groups cut at the sample quartiles,
/// with tied cut points merged.
pub(crate) fn curvature_groups(factor: &Factor, levels: &[usize]) -> (Vec<usize>, usize) {
    match factor.kind() {
        FactorKind::TwoLevel | FactorKind::Nominal => (levels.to_vec(), factor.level_count()),
        FactorKind::Ordinal => {
            let x = numeric_values(factor, levels);
            let mut distinct = x.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() <= 4 {
                let g = x
                    .iter()
                    .map(|v| distinct.partition_point(|d| d < v))
                    .collect();
                return (g, distinct.len());
            }
            let mut sorted = x.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let mut cuts: Vec<f64> = [0.25, 0.5, 0.75]
                .iter()
                .map(|p| sorted[((p * n as f64).ceil() as usize).clamp(1, n) - 1])
                .collect();
            cuts.dedup();
            let g = x.iter().map(|v| cuts.partition_point(|c| c < v)).collect();
            (g, cuts.len() + 1)
        }
    }
}

/// Two-way grouping for interaction tests: ordinal factors split at the
/// node median, nominal factors by most frequent level against the rest.
pub(crate) fn binary_groups(factor: &Factor, levels: &[usize]) -> Vec<usize> {
    match factor.kind() {
        FactorKind::TwoLevel => levels.to_vec(),
        FactorKind::Ordinal => {
            let x = numeric_values(factor, levels);
            let mut sorted = x.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[(sorted.len() - 1) / 2];
            x.iter().map(|&v| usize::from(v > median)).collect()
        }
        FactorKind::Nominal => {
            let mut counts = vec![0usize; factor.level_count()];
            for &l in levels {
                counts[l] += 1;
            }
            let top = (0..counts.len()).max_by_key(|&l| (counts[l], std::cmp::Reverse(l))).unwrap_or(0);
            levels.iter().map(|&l| usize::from(l != top)).collect()
        }
    }
}

pub(crate) fn sign_table(groups: &[usize], ngroups: usize, negative: &[bool]) -> Vec<[f64; 2]> {
    let mut t = vec![[0.0; 2]; ngroups];
    for (&g, &neg) in groups.iter().zip(negative) {
        t[g][usize::from(neg)] += 1.0;
    }
    t
}

pub(crate) fn is_constant(levels: &[usize]) -> bool {
    levels.iter().all(|&l| l == levels[0])
}

fn node_levels(dataset: &Dataset, rows: &[usize], variable: usize) -> Result<Vec<usize>> {
    if variable >= dataset.factors().len() {
        return Err(Error::InvalidInput(format!("variable {variable} out of range")));
    }
    rows.iter()
        .map(|&i| {
            dataset
                .rows()
                .get(i)
                .map(|r| r.point.0[variable])
                .ok_or_else(|| Error::InvalidInput(format!("row {i} out of range")))
        })
        .collect()
}

/// Curvature test p-value: residual sign against the grouped values of
/// `variable` over `rows`. `residuals[j]` belongs to `rows[j]`.
pub fn curvature_pvalue(dataset: &Dataset, rows: &[usize], residuals: &[f64], variable: usize) -> Result<f64> {
    if residuals.len() != rows.len() {
        return Err(Error::InvalidInput("one residual per row required".into()));
    }
    let levels = node_levels(dataset, rows, variable)?;
    if levels.is_empty() || is_constant(&levels) {
        return Err(Error::InvalidInput(format!("variable {variable} is constant in the node")));
    }
    let (groups, ng) = curvature_groups(dataset.factor(variable), &levels);
    let negative: Vec<bool> = residuals.iter().map(|&r| r < 0.0).collect();
    let (stat, df) = pearson_chi2(&sign_table(&groups, ng, &negative));
    Ok(pvalue(stat, df))
}

/// Interaction test p-value (unadjusted) for a pair of variables: rows are
/// cross-classified into up to four cells by the two binary groupings.
pub fn interaction_pvalue(dataset: &Dataset, rows: &[usize], residuals: &[f64], pair: (usize, usize)) -> Result<f64> {
    if residuals.len() != rows.len() {
        return Err(Error::InvalidInput("one residual per row required".into()));
    }
    let a = node_levels(dataset, rows, pair.0)?;
    let b = node_levels(dataset, rows, pair.1)?;
    if pair.0 == pair.1 || a.is_empty() || is_constant(&a) || is_constant(&b) {
        return Err(Error::InvalidInput("interaction test needs two distinct non-constant variables".into()));
    }
    let ga = binary_groups(dataset.factor(pair.0), &a);
    let gb = binary_groups(dataset.factor(pair.1), &b);
    let cells: Vec<usize> = ga.iter().zip(&gb).map(|(x, y)| 2 * x + y).collect();
    let negative: Vec<bool> = residuals.iter().map(|&r| r < 0.0).collect();
    let (stat, df) = pearson_chi2(&sign_table(&cells, 4, &negative));
    Ok(pvalue(stat, df))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_association() {
        let (s, df) = pearson_chi2(&[[20.0, 0.0], [0.0, 20.0]]);
        assert!((s - 40.0).abs() < 1e-12);
        assert_eq!(df, 1);
        assert!(pvalue(s, df) < 1e-9);
    }

    #[test]
    fn degenerate_tables() {
        assert_eq!(pearson_chi2(&[[5.0, 0.0], [3.0, 0.0]]), (0.0, 0));
        assert_eq!(pearson_chi2(&[[5.0, 2.0], [0.0, 0.0]]), (0.0, 0));
        assert_eq!(pvalue(0.0, 0), 1.0);
    }

    #[test]
    fn hand_computed_2x3() {
        // expected counts 2 in every cell: (4 + 0 + 4) by hand
        let (s, df) = pearson_chi2(&[[4.0, 0.0], [2.0, 2.0], [0.0, 4.0]]);
        assert_eq!(df, 2);
        assert!((s - 8.0).abs() < 1e-12);
    }

    #[test]
    fn api_on_dataset() {
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { -1.0 }).collect();
        let ds = Dataset::two_level_grid(&["A"], 20, y.clone()).unwrap();
        let rows: Vec<usize> = (0..40).collect();
        let p = curvature_pvalue(&ds, &rows, &y, 0).unwrap();
        assert!(p < 1e-9);
        let pos = vec![1.0; 40];
        assert_eq!(curvature_pvalue(&ds, &rows, &pos, 0).unwrap(), 1.0);
        assert!(curvature_pvalue(&ds, &rows[..20], &y[..20], 0).is_err());
        assert!(interaction_pvalue(&ds, &rows, &y, (0, 0)).is_err());
    }

    #[test]
    fn ordinal_quartiles() {
        let f = Factor::ordinal("x", &["1", "2", "3", "4", "5", "6", "7", "8"], &[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let levels: Vec<usize> = (0..8).collect();
        let (g, n) = curvature_groups(&f, &levels);
        assert_eq!(n, 4);
        assert_eq!(g, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let (g, n) = curvature_groups(&f, &[0, 0, 5, 7]);
        assert_eq!((g, n), (vec![0, 0, 1, 2], 3));
    }
}
