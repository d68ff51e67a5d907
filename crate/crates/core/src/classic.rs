//! Classical effect selection for two-level factorials.

use serde::{Deserialize, Serialize};

use crate::critical::{lenth_critical, smm_critical, LenthMode};
use crate::design::{effect_matrix, Dataset, Polynomial, Term};
use crate::distributions::{normal_quantile, t_quantile, t_two_sided_p};
use crate::error::{Error, Result};
use crate::glm::{gaussian_aic, ols_fit};

/// Saturated fit of a complete 2^k factorial in ±1 coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub k: usize,
    /// All 2^k terms, intercept first (see [`Term::all`]).
    pub terms: Vec<Term>,
    /// Regression coefficients, i.e. half the classical effects.
    pub estimates: Vec<f64>,
    /// Common standard error; absent without replication.
    pub common_se: Option<f64>,
    /// Error degrees of freedom (0 when unreplicated).
    pub dof: usize,
    pub n: usize,
    /// Residual sum of squares of the saturated fit.
    pub rss: f64,
    pub factor_names: Vec<String>,
}

impl EffectTable {
    pub fn estimate(&self, term: Term) -> Option<f64> {
        self.terms.iter().position(|&t| t == term).map(|i| self.estimates[i])
    }

    /// t statistics for every term, when a standard error exists.
    pub fn t_statistics(&self) -> Option<Vec<f64>> {
        let se = self.common_se?;
        Some(self.estimates.iter().map(|b| b / se).collect())
    }

    pub fn p_values(&self) -> Option<Vec<f64>> {
        let dof = self.dof as f64;
        Some(self.t_statistics()?.iter().map(|&t| t_two_sided_p(t, dof)).collect())
    }

    /// Non-intercept terms with their estimates.
    pub fn effects(&self) -> impl Iterator<Item = (Term, f64)> + '_ {
        self.terms
            .iter()
            .zip(&self.estimates)
            .filter(|(t, _)| !t.is_intercept())
            .map(|(&t, &b)| (t, b))
    }

    pub fn intercept(&self) -> f64 {
        self.estimates[0]
    }

    /// Polynomial from the intercept plus `terms`' saturated estimates.
    pub fn restricted(&self, terms: &[Term]) -> Polynomial {
        let mut p = Polynomial::constant(self.intercept());
        for &t in terms {
            if !t.is_intercept() {
                p.add_term(t, self.estimate(t).unwrap_or(0.0));
            }
        }
        p
    }

    fn require_se(&self, method: &str) -> Result<(f64, usize)> {
        match self.common_se {
            Some(se) if self.dof >= 1 => Ok((se, self.dof)),
            _ => Err(Error::Config(format!(
                "{method} needs replicated data (an error estimate); use a Lenth method instead"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Ier,
    Eer,
    Aic,
    LenthIer,
    LenthEer,
}

impl MethodTag {
    pub fn name(self) -> &'static str {
        match self {
            MethodTag::Ier => "IER",
            MethodTag::Eer => "EER",
            MethodTag::Aic => "AIC",
            MethodTag::LenthIer => "Lenth-IER",
            MethodTag::LenthEer => "Lenth-EER",
        }
    }
}

/// A selected set of effects and its fitted polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedModel {
    /// Kept terms, intercept first, in term order.
    pub terms: Vec<Term>,
    pub fitted: Polynomial,
    pub method: MethodTag,
    /// Threshold applied to |t| (or |θ̂|/PSE); absent for AIC.
    pub critical_value: Option<f64>,
}

impl SelectedModel {
    /// Kept terms other than the intercept.
    pub fn effects(&self) -> Vec<Term> {
        self.terms.iter().copied().filter(|t| !t.is_intercept()).collect()
    }
}

/// Saturated ±1-coded least-squares fit of a complete two-level factorial.
pub fn estimate_effects(dataset: &Dataset) -> Result<EffectTable> {
    if !dataset.all_two_level() {
        return Err(Error::InvalidInput("effect tables need all factors two-level".into()));
    }
    let r = dataset
        .replicates()
        .ok_or_else(|| Error::IncompleteDesign("every design point needs the same number of runs".into()))?;
    let k = dataset.factors().len();
    if k > 12 {
        return Err(Error::InvalidInput(format!("{k} factors is too many for a saturated fit")));
    }
    let terms = Term::all(k);
    let x = effect_matrix(dataset, &terms)?;
    let fit = ols_fit(&x, &dataset.responses())?;
    let n = dataset.len();
    let (common_se, dof) = if r >= 2 {
        let dof = n - terms.len();
        (Some((fit.rss_or_deviance / dof as f64).sqrt() / (n as f64).sqrt()), dof)
    } else {
        (None, 0)
    };
    Ok(EffectTable {
        k,
        terms,
        estimates: fit.coefficients,
        common_se,
        dof,
        n,
        rss: if r >= 2 { fit.rss_or_deviance } else { 0.0 },
        factor_names: dataset.factors().iter().map(|f| f.name().to_string()).collect(),
    })
}

fn threshold_select(table: &EffectTable, scores: &[f64], critical: f64, method: MethodTag) -> SelectedModel {
    let mut terms = vec![Term::INTERCEPT];
    terms.extend(
        table
            .terms
            .iter()
            .zip(scores)
            .filter(|(t, s)| !t.is_intercept() && s.abs() > critical)
            .map(|(&t, _)| t),
    );
    SelectedModel {
        fitted: table.restricted(&terms),
        terms,
        method,
        critical_value: Some(critical),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Keeps every effect whose |t| exceeds t_{dof}(1 − α/2).
pub fn select_ier(table: &EffectTable, alpha: f64) -> Result<SelectedModel> {
    check_alpha(alpha)?;
    let (_, dof) = table.require_se("IER selection")?;
    let critical = if alpha >= 1.0 {
        0.0
    } else {
        t_quantile(1.0 - alpha / 2.0, dof as f64)
    };
    let t = table.t_statistics().expect("se present");
    Ok(threshold_select(table, &t, critical, MethodTag::Ier))
}

/// Keeps every effect whose |t| exceeds the studentized maximum modulus
/// critical value for K = 2^k − 1 effects.
pub fn select_eer(table: &EffectTable, alpha: f64) -> Result<SelectedModel> {
    check_alpha(alpha)?;
    let (_, dof) = table.require_se("EER selection")?;
    let critical = smm_critical(table.terms.len() - 1, dof, alpha);
    let t = table.t_statistics().expect("se present");
    Ok(threshold_select(table, &t, critical, MethodTag::Eer))
}

/// Lenth's pseudo standard error: 1.5 × the median of the |θ̂| below
/// 2.5 s₀, where s₀ = 1.5 × median |θ̂|.
pub fn lenth_pse(estimates: &[f64]) -> f64 {
    let abs: Vec<f64> = estimates.iter().map(|e| e.abs()).collect();
    let s0 = 1.5 * median(abs.clone());
    let trimmed: Vec<f64> = abs.into_iter().filter(|&a| a < 2.5 * s0).collect();
    if trimmed.is_empty() {
        return 0.0;
    }
    1.5 * median(trimmed)
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

/// Lenth's method: keeps effects with |θ̂|/PSE above the Monte Carlo
/// critical value for the chosen error rate.
pub fn select_lenth(table: &EffectTable, mode: LenthMode, alpha: f64) -> Result<SelectedModel> {
    check_alpha(alpha)?;
    let effects: Vec<f64> = table.effects().map(|(_, b)| b).collect();
    if effects.len() < 3 {
        return Err(Error::InvalidInput("Lenth's method needs at least 3 effects".into()));
    }
    let pse = lenth_pse(&effects);
    if !(pse > 0.0) {
        return Err(Error::Degenerate("pseudo standard error is zero".into()));
    }
    let critical = lenth_critical(mode, effects.len(), alpha);
    let scores: Vec<f64> = table.estimates.iter().map(|b| b / pse).collect();
    let tag = match mode {
        LenthMode::Ier => MethodTag::LenthIer,
        LenthMode::Eer => MethodTag::LenthEer,
    };
    Ok(threshold_select(table, &scores, critical, tag))
}

/// AIC of the hierarchical submodel `terms`, using orthogonality:
/// RSS(S) = RSS(full) + n Σ_{t ∉ S} β̂_t².
fn submodel_aic(table: &EffectTable, included: &[bool]) -> f64 {
    let n = table.n as f64;
    let dropped: f64 = table
        .estimates
        .iter()
        .zip(included)
        .filter(|(_, &inc)| !inc)
        .map(|(b, _)| b * b)
        .sum();
    let p = included.iter().filter(|&&i| i).count();
    gaussian_aic(table.n, table.rss + n * dropped, p)
}

/// Greedy forward/backward AIC search over hierarchical models, starting
/// from all main effects. A term may be added once all its immediate
/// sub-terms are present and dropped once nothing included contains it.
/// The best single move is taken while it strictly lowers AIC; ties go to
/// the lower-order term, then to lexicographically smaller factor indices.
pub fn stepwise_aic(dataset: &Dataset) -> Result<SelectedModel> {
    let table = estimate_effects(dataset)?;
    if table.dof == 0 {
        return Err(Error::Config(
            "stepwise AIC on unreplicated data always ends at the saturated model; use a Lenth method".into(),
        ));
    }
    let terms = &table.terms;
    let mut included: Vec<bool> = terms.iter().map(|t| t.order() <= 1).collect();
    let mut current = submodel_aic(&table, &included);
    loop {
        let mut best: Option<(f64, usize)> = None;
        for (j, &t) in terms.iter().enumerate() {
            if t.is_intercept() {
                continue;
            }
            let admissible = if included[j] {
                !terms
                    .iter()
                    .zip(&included)
                    .any(|(&u, &inc)| inc && u != t && t.is_subset_of(u))
            } else {
                t.members().iter().all(|&f| {
                    let sub = t.times(Term::single(f));
                    terms.iter().position(|&u| u == sub).is_some_and(|i| included[i])
                })
            };
            if !admissible {
                continue;
            }
            included[j] = !included[j];
            let a = submodel_aic(&table, &included);
            included[j] = !included[j];
            // Terms are scanned in tie-break order, so only strict improvements replace.
            if best.is_none_or(|(b, _)| a < b) {
                best = Some((a, j));
            }
        }
        match best {
            Some((a, j)) if a < current => {
                included[j] = !included[j];
                current = a;
            }
            _ => break,
        }
    }
    let kept: Vec<Term> = terms
        .iter()
        .zip(&included)
        .filter(|(_, &i)| i)
        .map(|(&t, _)| t)
        .collect();
    Ok(SelectedModel {
        fitted: table.restricted(&kept),
        terms: kept,
        method: MethodTag::Aic,
        critical_value: None,
    })
}

/// AIC of the submodel with the given non-intercept terms, from the
/// saturated table. Exposed for brute-force checks.
pub fn model_aic(table: &EffectTable, terms: &[Term]) -> f64 {
    let included: Vec<bool> = table
        .terms
        .iter()
        .map(|t| t.is_intercept() || terms.contains(t))
        .collect();
    submodel_aic(table, &included)
}

/// One point of a half-normal plot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfNormalPoint {
    pub quantile: f64,
    pub abs_estimate: f64,
    pub term: Term,
}

/// Absolute effects in increasing order against half-normal quantiles
/// Φ⁻¹(0.5 + 0.5(i − 0.5)/K).
pub fn half_normal(table: &EffectTable) -> Vec<HalfNormalPoint> {
    let mut effects: Vec<(Term, f64)> = table.effects().map(|(t, b)| (t, b.abs())).collect();
    effects.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let k = effects.len() as f64;
    effects
        .into_iter()
        .enumerate()
        .map(|(i, (term, abs_estimate))| HalfNormalPoint {
            quantile: normal_quantile(0.5 + 0.5 * (i as f64 + 0.5) / k),
            abs_estimate,
            term,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::wafer_reconstruction;
    use crate::design::enumerate_design;

    fn unreplicated(k: usize, f: impl Fn(&[f64]) -> f64) -> Dataset {
        let names = ["A", "B", "C", "D", "E", "F"];
        let y = enumerate_design(k).unwrap().iter().map(|p| f(&p.codes())).collect();
        Dataset::two_level_grid(&names[..k], 1, y).unwrap()
    }

    #[test]
    fn exact_recovery_unreplicated() {
        let t = estimate_effects(&unreplicated(3, |x| x[0])).unwrap();
        assert!(t.common_se.is_none());
        assert_eq!(t.dof, 0);
        for (term, b) in t.terms.iter().zip(&t.estimates) {
            let expect = if *term == Term::single(0) { 1.0 } else { 0.0 };
            assert!((b - expect).abs() < 1e-12);
        }
        assert!(select_ier(&t, 0.05).is_err());
        assert!(stepwise_aic(&unreplicated(3, |x| x[0])).is_err());
    }

    #[test]
    fn zero_response() {
        let t = estimate_effects(&Dataset::two_level_grid(&["A", "B"], 2, vec![0.0; 8]).unwrap()).unwrap();
        assert!(t.estimates.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn lenth_examples() {
        assert!((lenth_pse(&[1.0, -1.0, 2.0, -2.0, 20.0]) - 2.25).abs() < 1e-12);
        assert!((lenth_pse(&[-0.7; 6]) - 1.05).abs() < 1e-12);
        assert_eq!(lenth_pse(&[0.0; 5]), 0.0);
    }

    #[test]
    fn half_normal_order() {
        let mut t = estimate_effects(&unreplicated(2, |_| 0.0)).unwrap();
        t.estimates = vec![0.0, 3.0, 1.0, -2.0];
        let h = half_normal(&t);
        assert_eq!(h.iter().map(|p| p.abs_estimate).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert!(h.windows(2).all(|w| w[0].quantile < w[1].quantile));
        let t1 = estimate_effects(&unreplicated(1, |x| x[0])).unwrap();
        assert!((half_normal(&t1)[0].quantile - 0.674_489_750_196_081_7).abs() < 1e-10);
    }

    #[test]
    fn wafer_ier_and_eer() {
        let t = estimate_effects(&wafer_reconstruction().dataset).unwrap();
        let d = Term::single(3);
        let cd = Term::new(&[2, 3]);
        let ier = select_ier(&t, 0.05).unwrap();
        assert_eq!(ier.effects(), vec![d, cd]);
        let eer = select_eer(&t, 0.1).unwrap();
        assert_eq!(eer.effects(), vec![d, cd]);
        assert!(eer.critical_value.unwrap() >= ier.critical_value.unwrap());
        let all = select_ier(&t, 1.0).unwrap();
        assert_eq!(all.terms.len(), 16);
    }

    #[test]
    fn wafer_half_normal_top_two() {
        let t = estimate_effects(&wafer_reconstruction().dataset).unwrap();
        let h = half_normal(&t);
        assert_eq!(h.len(), 15);
        assert_eq!(h[14].term, Term::single(3));
        assert_eq!(h[13].term, Term::new(&[2, 3]));
    }

    #[test]
    fn submodel_aic_matches_refit() {
        let ds = wafer_reconstruction().dataset;
        let t = estimate_effects(&ds).unwrap();
        let terms = [Term::INTERCEPT, Term::single(1), Term::single(3), Term::new(&[1, 3])];
        let fit = ols_fit(&effect_matrix(&ds, &terms).unwrap(), &ds.responses()).unwrap();
        let direct = gaussian_aic(ds.len(), fit.rss_or_deviance, fit.p);
        assert!((model_aic(&t, &terms[1..]) - direct).abs() < 1e-9);
    }
}
