//! Least squares and IRLS fitting for Gaussian, Poisson, and binomial models.

use serde::{Deserialize, Serialize};

use crate::design::{dummy_matrix, Dataset, ResponseKind, Term};
use crate::distributions::f_sf;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix, PivotedQr};

/// IRLS stops when the relative deviance change drops below this.
pub const IRLS_TOLERANCE: f64 = 1e-9;
pub const IRLS_MAX_ITERATIONS: usize = 50;
/// Coefficients beyond this magnitude signal separation.
pub const DIVERGENCE_BOUND: f64 = 30.0;
/// Linear predictors beyond this put fitted means within ~2e−9 of the boundary.
const ETA_BOUND: f64 = 20.0;

/// Response distribution; each family uses its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Poisson,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl Family {
    pub fn link(self) -> Link {
        match self {
            Family::Gaussian => Link::Identity,
            Family::Poisson => Link::Log,
            Family::Binomial => Link::Logit,
        }
    }

    /// Family matching a dataset's response kind.
    pub fn for_response(kind: ResponseKind) -> Family {
        match kind {
            ResponseKind::Gaussian => Family::Gaussian,
            ResponseKind::Count => Family::Poisson,
            ResponseKind::Proportion => Family::Binomial,
        }
    }

    pub fn link_fn(self, mu: f64) -> f64 {
        match self.link() {
            Link::Identity => mu,
            Link::Log => mu.ln(),
            Link::Logit => (mu / (1.0 - mu)).ln(),
        }
    }

    pub fn inverse_link(self, eta: f64) -> f64 {
        match self.link() {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        }
    }

    /// dμ/dη.
    fn mu_eta(self, eta: f64) -> f64 {
        match self.link() {
            Link::Identity => 1.0,
            Link::Log => eta.exp().max(f64::MIN_POSITIVE),
            Link::Logit => {
                let e = (-eta.abs()).exp();
                (e / (1.0 + e).powi(2)).max(f64::MIN_POSITIVE)
            }
        }
    }

    fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Poisson => mu,
            Family::Binomial => mu * (1.0 - mu),
        }
    }

    /// Deviance contribution of one row. For the binomial family `y` is a
    /// success count out of `n` and `mu` a probability; otherwise `n` is 1.
    pub fn unit_deviance(self, y: f64, mu: f64, n: f64) -> f64 {
        fn ylogy(y: f64, m: f64) -> f64 {
            if y > 0.0 {
                y * (y / m).ln()
            } else {
                0.0
            }
        }
        match self {
            Family::Gaussian => (y - mu).powi(2),
            Family::Poisson => 2.0 * (ylogy(y, mu) - (y - mu)),
            Family::Binomial => 2.0 * (ylogy(y, n * mu) + ylogy(n - y, n * (1.0 - mu))),
        }
    }

    /// Sign-carrying Pearson residual.
    pub fn pearson_residual(self, y: f64, mu: f64, n: f64) -> f64 {
        match self {
            Family::Gaussian => y - mu,
            Family::Poisson => (y - mu) / mu.max(f64::MIN_POSITIVE).sqrt(),
            Family::Binomial => (y - n * mu) / (n * mu * (1.0 - mu)).max(f64::MIN_POSITIVE).sqrt(),
        }
    }

    /// Clamps a mean into the open domain of the link.
    pub fn clamp_mean(self, mu: f64) -> f64 {
        const EPS: f64 = 1e-10;
        match self {
            Family::Gaussian => mu,
            Family::Poisson => mu.max(EPS),
            Family::Binomial => mu.clamp(EPS, 1.0 - EPS),
        }
    }
}

/// Coefficients and inference from a single fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub coefficients: Vec<f64>,
    /// NaN for aliased columns, or for every column when no residual df remain.
    pub std_errors: Vec<f64>,
    /// t statistics for Gaussian fits, z otherwise.
    pub statistics: Vec<f64>,
    pub rss_or_deviance: f64,
    pub dispersion: f64,
    pub dof_residual: usize,
    pub n: usize,
    /// Number of estimated (non-aliased) coefficients.
    pub p: usize,
    pub aliased: Vec<usize>,
    /// Fitted means on the response scale (probabilities for binomial fits).
    #[serde(skip)]
    pub fitted: Vec<f64>,
    #[serde(skip)]
    pub iterations: usize,
    /// Deviance after each IRLS iteration, starting from the null model.
    #[serde(skip)]
    pub deviance_trace: Vec<f64>,
}

impl FitResult {
    pub fn is_aliased(&self, column: usize) -> bool {
        self.aliased.contains(&column)
    }
}

fn inference(coefficients: &[f64], unscaled: &[f64], dispersion: f64) -> (Vec<f64>, Vec<f64>) {
    let se: Vec<f64> = unscaled.iter().map(|v| (dispersion * v).sqrt()).collect();
    let stat = coefficients.iter().zip(&se).map(|(b, s)| b / s).collect();
    (se, stat)
}

/// Ordinary least squares.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<FitResult> {
    let ls = least_squares(x, y, None)?;
    let n = y.len();
    let dof = n - ls.rank;
    let dispersion = if dof > 0 { ls.rss / dof as f64 } else { f64::NAN };
    let (std_errors, statistics) = inference(&ls.coefficients, &ls.unscaled_variances, dispersion);
    Ok(FitResult {
        family: Family::Gaussian,
        coefficients: ls.coefficients,
        std_errors,
        statistics,
        rss_or_deviance: ls.rss,
        dispersion,
        dof_residual: dof,
        n,
        p: ls.rank,
        aliased: ls.aliased,
        fitted: ls.fitted,
        iterations: 1,
        deviance_trace: vec![ls.rss],
    })
}

fn validate_response(y: &[f64], trials: Option<&[f64]>, family: Family) -> Result<()> {
    match family {
        Family::Gaussian => {}
        Family::Poisson => {
            if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                return Err(Error::InvalidInput("Poisson response must be non-negative integers".into()));
            }
        }
        Family::Binomial => {
            let n = trials.ok_or_else(|| Error::InvalidInput("binomial fit needs trial counts".into()))?;
            if n.len() != y.len() {
                return Err(Error::InvalidInput("trial counts length mismatch".into()));
            }
            if y.iter().zip(n).any(|(&y, &n)| !(n > 0.0) || y < 0.0 || y > n) {
                return Err(Error::InvalidInput("binomial response must satisfy 0 <= y <= n, n > 0".into()));
            }
        }
    }
    Ok(())
}

fn total_deviance(family: Family, y: &[f64], mu: &[f64], trials: Option<&[f64]>) -> f64 {
    (0..y.len())
        .map(|i| family.unit_deviance(y[i], mu[i], trials.map_or(1.0, |t| t[i])))
        .sum()
}

/// Maximum-likelihood GLM fit by iteratively reweighted least squares,
/// started from the intercept-only fit. Binomial data are grouped: `y`
/// holds success counts and `trials` the denominators.
pub fn irls_fit(x: &Matrix, y: &[f64], trials: Option<&[f64]>, family: Family) -> Result<FitResult> {
    if x.rows() == 0 {
        return Err(Error::InvalidInput("fit with zero rows".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::InvalidInput("response length does not match design".into()));
    }
    if family == Family::Gaussian {
        return ols_fit(x, y);
    }
    validate_response(y, trials, family)?;
    let n = y.len();
    let prior: Vec<f64> = match family {
        Family::Binomial => trials.expect("validated").to_vec(),
        _ => vec![1.0; n],
    };
    let mean0 = y.iter().sum::<f64>() / prior.iter().sum::<f64>();
    let degenerate = match family {
        Family::Poisson => mean0 <= 0.0,
        _ => mean0 <= 0.0 || mean0 >= 1.0,
    };
    if degenerate {
        return Err(Error::Separation {
            column: 0,
            value: f64::INFINITY,
        });
    }
    let mut eta = vec![family.link_fn(mean0); n];
    let mut mu = vec![mean0; n];
    let mut dev = total_deviance(family, y, &mu, trials);
    let mut trace = vec![dev];
    let mut beta: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;

    while iterations < IRLS_MAX_ITERATIONS {
        iterations += 1;
        let mut z = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let d = family.mu_eta(eta[i]);
            let resp = y[i] / prior[i];
            z.push(eta[i] + (resp - mu[i]) / d);
            w.push(prior[i] * d * d / family.variance(mu[i]).max(f64::MIN_POSITIVE));
        }
        let ls = least_squares(x, &z, Some(&w))?;
        let mut candidate = ls.coefficients;
        let (mut new_eta, mut new_mu, mut new_dev);
        let mut halvings = 0;
        loop {
            new_eta = x.mul_vec(&candidate);
            new_mu = new_eta
                .iter()
                .map(|&e| family.clamp_mean(family.inverse_link(e)))
                .collect::<Vec<_>>();
            new_dev = total_deviance(family, y, &new_mu, trials);
            let worse = !new_dev.is_finite() || new_dev > dev * (1.0 + 1e-12) + 1e-12;
            match (&beta, worse) {
                (Some(old), true) if halvings < 30 => {
                    for (c, o) in candidate.iter_mut().zip(old) {
                        *c = 0.5 * (*c + o);
                    }
                    halvings += 1;
                }
                _ => break,
            }
        }
        if let Some((j, &b)) = candidate
            .iter()
            .enumerate()
            .find(|(_, b)| b.abs() > DIVERGENCE_BOUND)
        {
            return Err(Error::Separation { column: j, value: b });
        }
        change = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
        eta = new_eta;
        mu = new_mu;
        dev = new_dev;
        trace.push(dev);
        beta = Some(candidate);
        if change < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, change });
    }
    let coefficients = beta.expect("at least one iteration");
    // Fitted means pinned at the boundary mean the likelihood has no finite maximum.
    let escaped = match family {
        Family::Binomial => eta.iter().any(|e| e.abs() > ETA_BOUND),
        _ => eta.iter().any(|&e| e < -ETA_BOUND),
    };
    if escaped {
        let (column, value) = coefficients
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("nonempty coefficients");
        return Err(Error::Separation { column, value });
    }
    // Fisher information at the converged estimate.
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let d = family.mu_eta(eta[i]);
            prior[i] * d * d / family.variance(mu[i]).max(f64::MIN_POSITIVE)
        })
        .collect();
    let mut xw = x.clone();
    for j in 0..x.cols() {
        let col: Vec<f64> = x.column(j).iter().zip(&w).map(|(v, w)| v * w.sqrt()).collect();
        for (i, v) in col.into_iter().enumerate() {
            xw.set(i, j, v);
        }
    }
    let qr = PivotedQr::new(&xw);
    let (std_errors, statistics) = inference(&coefficients, &qr.unscaled_variances(), 1.0);
    let p = qr.rank();
    Ok(FitResult {
        family,
        coefficients,
        std_errors,
        statistics,
        rss_or_deviance: dev,
        dispersion: 1.0,
        dof_residual: n - p,
        n,
        p,
        aliased: qr.aliased().to_vec(),
        fitted: mu,
        iterations,
        deviance_trace: trace,
    })
}

/// AIC = n·log(RSS/n) + 2ν for a Gaussian fit, with ν = p + 1 counting the
/// variance parameter. A perfect fit returns −∞.
pub fn aic(fit: &FitResult) -> Result<f64> {
    if fit.family != Family::Gaussian {
        return Err(Error::Config("AIC in n·log(RSS/n) form needs a Gaussian fit".into()));
    }
    Ok(gaussian_aic(fit.n, fit.rss_or_deviance, fit.p))
}

pub(crate) fn gaussian_aic(n: usize, rss: f64, p: usize) -> f64 {
    if rss <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let n = n as f64;
    n * (rss / n).ln() + 2.0 * (p as f64 + 1.0)
}

/// Family-appropriate AIC up to an additive constant: the Gaussian form
/// above, or deviance + 2p for Poisson and binomial fits.
pub fn information_criterion(fit: &FitResult) -> f64 {
    match fit.family {
        Family::Gaussian => gaussian_aic(fit.n, fit.rss_or_deviance, fit.p),
        _ => fit.rss_or_deviance + 2.0 * fit.p as f64,
    }
}

/// One row of a sequential analysis of deviance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaRow {
    pub term: Term,
    pub label: String,
    pub df: usize,
    pub deviance: f64,
    pub mean_deviance: f64,
    pub f: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub residual_df: usize,
    pub residual_deviance: f64,
    /// NaN when no residual degrees of freedom remain.
    pub residual_mean_deviance: f64,
}

/// Sequential analysis of deviance for a Poisson loglinear model with all
/// terms up to `max_order`, entered main effects first. F ratios compare
/// each term's mean deviance with the residual mean deviance.
pub fn anova_poisson(dataset: &Dataset, max_order: usize) -> Result<AnovaTable> {
    if dataset.response_kind() != ResponseKind::Count {
        return Err(Error::InvalidInput("Poisson ANOVA needs a count response".into()));
    }
    if dataset.replicates().is_none() {
        return Err(Error::IncompleteDesign("Poisson ANOVA needs a complete factorial".into()));
    }
    let k = dataset.factors().len();
    if max_order == 0 || max_order > k {
        return Err(Error::Config(format!("max_order must be in 1..={k}")));
    }
    let mut terms = vec![Term::INTERCEPT];
    terms.extend(
        Term::all(k)
            .into_iter()
            .filter(|t| (1..=max_order).contains(&t.order())),
    );
    let dm = dummy_matrix(dataset, &terms)?;
    let y = dataset.responses();
    let mut columns: Vec<usize> = Vec::new();
    let mut previous: Option<(f64, usize)> = None;
    let mut rows = Vec::new();
    for (ti, &term) in terms.iter().enumerate() {
        columns.extend((0..dm.labels.len()).filter(|&c| dm.term_of_column[c] == ti));
        let fit = irls_fit(&dm.matrix.select_columns(&columns), &y, None, Family::Poisson)?;
        if let Some((prev_dev, prev_rank)) = previous {
            rows.push(AnovaRow {
                term,
                label: term.label_names(dataset.factors()),
                df: fit.p - prev_rank,
                deviance: (prev_dev - fit.rss_or_deviance).max(0.0),
                mean_deviance: f64::NAN,
                f: None,
                p_value: None,
            });
        }
        previous = Some((fit.rss_or_deviance, fit.p));
    }
    let (residual_deviance, rank) = previous.expect("intercept fitted");
    let residual_df = dataset.len() - rank;
    let residual_mean = if residual_df > 0 {
        residual_deviance / residual_df as f64
    } else {
        f64::NAN
    };
    for row in &mut rows {
        row.mean_deviance = if row.df > 0 {
            row.deviance / row.df as f64
        } else {
            f64::NAN
        };
        if residual_df > 0 && row.df > 0 {
            let f = row.mean_deviance / residual_mean;
            row.f = Some(f);
            row.p_value = Some(f_sf(f, row.df as f64, residual_df as f64));
        }
    }
    Ok(AnovaTable {
        rows,
        residual_df,
        residual_deviance,
        residual_mean_deviance: residual_mean,
    })
}
