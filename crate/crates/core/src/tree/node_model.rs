//! Linear models fitted inside tree nodes.

use serde::{Deserialize, Serialize};

use crate::design::{Dataset, Factor, FactorKind};
use crate::error::{Error, Result};
use crate::glm::{gaussian_aic, irls_fit, Family};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeModelKind {
    Constant,
    BestSimple,
    Multiple,
    Stepwise,
}

impl NodeModelKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeModelKind::Constant => "constant",
            NodeModelKind::BestSimple => "simple",
            NodeModelKind::Multiple => "multiple",
            NodeModelKind::Stepwise => "stepwise",
        }
    }
}

/// One column of a node model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Column {
    Intercept,
    /// ±1 code of a two-level factor or the score of an ordinal one.
    Linear { factor: usize },
    /// Indicator of one non-baseline level.
    Dummy { factor: usize, level: usize },
}

impl Column {
    pub fn factor(self) -> Option<usize> {
        match self {
            Column::Intercept => None,
            Column::Linear { factor } | Column::Dummy { factor, .. } => Some(factor),
        }
    }

    pub fn value(self, factors: &[Factor], point: &[usize]) -> f64 {
        match self {
            Column::Intercept => 1.0,
            Column::Linear { factor } => factors[factor]
                .numeric(point[factor])
                .unwrap_or(point[factor] as f64),
            Column::Dummy { factor, level } => f64::from(u8::from(point[factor] == level)),
        }
    }

    pub fn label(self, factors: &[Factor]) -> String {
        match self {
            Column::Intercept => "(Intercept)".into(),
            Column::Linear { factor } => factors[factor].name().to_string(),
            Column::Dummy { factor, level } => {
                format!("{}{}", factors[factor].name(), factors[factor].levels()[level])
            }
        }
    }
}

/// Candidate columns for a node-model kind: the intercept, then each
/// regressor's columns (one for numeric factors, one per non-baseline
/// level for nominal ones). Best simple models only use numeric factors.
pub(crate) fn candidate_columns(factors: &[Factor], regressors: &[usize], kind: NodeModelKind) -> Vec<Column> {
    let mut cols = vec![Column::Intercept];
    if kind == NodeModelKind::Constant {
        return cols;
    }
    for &f in regressors {
        let factor = &factors[f];
        match factor.kind() {
            FactorKind::TwoLevel | FactorKind::Ordinal => cols.push(Column::Linear { factor: f }),
            FactorKind::Nominal => {
                if kind != NodeModelKind::BestSimple {
                    cols.extend(factor.dummy_levels().map(|level| Column::Dummy { factor: f, level }));
                }
            }
        }
    }
    cols
}

/// Model fitted to one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    pub kind: NodeModelKind,
    pub family: Family,
    /// Columns in the fitted model, intercept first.
    pub columns: Vec<Column>,
    /// Zero for aliased columns.
    pub coefficients: Vec<f64>,
    /// NaN for aliased columns or when no residual df remain.
    pub std_errors: Vec<f64>,
    /// Positions in `columns` dropped for rank deficiency.
    pub aliased: Vec<usize>,
    /// Residual sum of squares or deviance on the node's rows.
    pub deviance: f64,
    pub n: usize,
    /// Mean response (a proportion for binomial data).
    pub mean: f64,
    /// The requested model could not be fitted (separation, no
    /// convergence) and the constant model was used instead.
    pub fallback: bool,
}

impl NodeFit {
    pub fn linear_predictor(&self, factors: &[Factor], point: &[usize]) -> f64 {
        self.columns
            .iter()
            .zip(&self.coefficients)
            .map(|(c, b)| if *b == 0.0 { 0.0 } else { b * c.value(factors, point) })
            .sum()
    }

    /// Factors entering the model through a non-aliased column.
    pub fn regressors(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(j, _)| !self.aliased.contains(j))
            .filter_map(|(_, c)| c.factor())
            .collect();
        out.dedup();
        out
    }
}

/// Fits a node model to `rows` of `dataset`. `regressors` lists the
/// factors allowed as linear predictors.
pub fn fit_node(
    dataset: &Dataset,
    rows: &[usize],
    kind: NodeModelKind,
    family: Family,
    regressors: &[usize],
) -> Result<NodeFit> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("node has no rows".into()));
    }
    let frame = Frame::new(dataset, family)?;
    let columns = candidate_columns(dataset.factors(), regressors, kind);
    let problem = NodeProblem::new(&frame, rows, &columns);
    Ok(problem.fit_kind(kind).into_node_fit(&problem, kind))
}

/// Column-oriented copy of a dataset for fast node work.
pub(crate) struct Frame<'a> {
    pub factors: &'a [Factor],
    /// `levels[f][i]`: level of factor f in row i.
    pub levels: Vec<Vec<usize>>,
    pub y: Vec<f64>,
    /// Binomial denominators; 1 otherwise.
    pub trials: Vec<f64>,
    pub family: Family,
}

impl<'a> Frame<'a> {
    pub fn new(dataset: &'a Dataset, family: Family) -> Result<Self> {
        let k = dataset.factors().len();
        let levels = (0..k)
            .map(|f| dataset.rows().iter().map(|r| r.point.0[f]).collect())
            .collect();
        let trials = match family {
            Family::Binomial => dataset
                .trials()
                .ok_or_else(|| Error::InvalidInput("binomial trees need trial counts".into()))?,
            _ => vec![1.0; dataset.len()],
        };
        if family == Family::Poisson && dataset.responses().iter().any(|&y| y < 0.0 || y.fract() != 0.0) {
            return Err(Error::InvalidInput("Poisson trees need non-negative integer counts".into()));
        }
        Ok(Frame {
            factors: dataset.factors(),
            levels,
            y: dataset.responses(),
            trials,
            family,
        })
    }

    pub fn point(&self, row: usize) -> Vec<usize> {
        self.levels.iter().map(|l| l[row]).collect()
    }
}

/// Node rows with the full candidate design, plus Gram statistics for
/// Gaussian fits.
pub(crate) struct NodeProblem {
    pub family: Family,
    pub columns: Vec<Column>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub trials: Vec<f64>,
    gram: Option<Gram>,
}

struct Gram {
    xtx: Vec<f64>,
    /// Xᵀ(y − ȳ).
    xty: Vec<f64>,
    ybar: f64,
    /// Σ(y − ȳ)².
    tss: f64,
}

/// Result of fitting a subset of the candidate columns.
#[derive(Debug, Clone)]
pub(crate) struct SubFit {
    /// Indices into the candidate columns; always starts with the intercept.
    pub cols: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Positions in `cols`.
    pub aliased: Vec<usize>,
    pub rank: usize,
    pub deviance: f64,
    pub fallback: bool,
}

impl NodeProblem {
    pub fn new(frame: &Frame, rows: &[usize], columns: &[Column]) -> Self {
        let n = rows.len();
        let mut cols = Vec::with_capacity(columns.len());
        for c in columns {
            cols.push(
                rows.iter()
                    .map(|&i| match *c {
                        Column::Intercept => 1.0,
                        Column::Linear { factor } => {
                            let l = frame.levels[factor][i];
                            frame.factors[factor].numeric(l).unwrap_or(l as f64)
                        }
                        Column::Dummy { factor, level } => f64::from(u8::from(frame.levels[factor][i] == level)),
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let x = Matrix::from_columns(n, &cols);
        let y: Vec<f64> = rows.iter().map(|&i| frame.y[i]).collect();
        let trials: Vec<f64> = rows.iter().map(|&i| frame.trials[i]).collect();
        Self::assemble(frame.family, columns.to_vec(), x, y, trials)
    }

    fn assemble(family: Family, columns: Vec<Column>, x: Matrix, y: Vec<f64>, trials: Vec<f64>) -> Self {
        let gram = (family == Family::Gaussian).then(|| {
            let m = x.cols();
            let mut xtx = vec![0.0; m * m];
            for a in 0..m {
                for b in a..m {
                    let v = crate::linalg::dot(x.column(a), x.column(b));
                    xtx[a * m + b] = v;
                    xtx[b * m + a] = v;
                }
            }
            Self::response_stats(&x, &y, xtx)
        });
        NodeProblem {
            family,
            columns,
            x,
            y,
            trials,
            gram,
        }
    }

    fn response_stats(x: &Matrix, y: &[f64], xtx: Vec<f64>) -> Gram {
        let n = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        let xty = (0..x.cols()).map(|j| crate::linalg::dot(x.column(j), &yc)).collect();
        Gram {
            xtx,
            xty,
            ybar,
            tss: yc.iter().map(|v| v * v).sum(),
        }
    }

    /// Same rows and columns with a new response (for permutation replicates).
    pub fn with_response(&self, y: Vec<f64>, trials: Vec<f64>) -> NodeProblem {
        let gram = self
            .gram
            .as_ref()
            .map(|g| Self::response_stats(&self.x, &y, g.xtx.clone()));
        NodeProblem {
            family: self.family,
            columns: self.columns.clone(),
            x: self.x.clone(),
            y,
            trials,
            gram,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn mean(&self) -> f64 {
        match self.family {
            Family::Binomial => self.y.iter().sum::<f64>() / self.trials.iter().sum::<f64>(),
            _ => self.y.iter().sum::<f64>() / self.n() as f64,
        }
    }

    fn column_is_constant(&self, j: usize) -> bool {
        let c = self.x.column(j);
        c.iter().all(|&v| v == c[0])
    }

    /// Closed-form intercept-only fit.
    pub fn fit_constant(&self) -> SubFit {
        let n = self.n() as f64;
        let (coef, se, deviance) = match &self.gram {
            Some(g) => {
                let se = if n > 1.0 { (g.tss / (n - 1.0) / n).sqrt() } else { f64::NAN };
                (g.ybar, se, g.tss)
            }
            None => {
                let f = self.family;
                let mu = f.clamp_mean(self.mean());
                let deviance = self
                    .y
                    .iter()
                    .zip(&self.trials)
                    .map(|(&y, &t)| f.unit_deviance(y, mu, t))
                    .sum();
                let info = match f {
                    Family::Poisson => n * mu,
                    _ => self.trials.iter().sum::<f64>() * mu * (1.0 - mu),
                };
                (f.link_fn(mu), 1.0 / info.sqrt(), deviance)
            }
        };
        SubFit {
            cols: vec![0],
            coefficients: vec![coef],
            std_errors: vec![se],
            aliased: Vec::new(),
            rank: 1,
            deviance,
            fallback: false,
        }
    }

    /// Fits the intercept plus the given candidate columns.
    pub fn fit_columns(&self, cols: &[usize]) -> Result<SubFit> {
        debug_assert_eq!(cols.first(), Some(&0));
        if cols.len() == 1 {
            return Ok(self.fit_constant());
        }
        match &self.gram {
            Some(g) => Ok(self.gaussian_subset(g, cols)),
            None => {
                let x = self.x.select_columns(cols);
                let fit = irls_fit(&x, &self.y, Some(&self.trials), self.family)?;
                Ok(SubFit {
                    cols: cols.to_vec(),
                    coefficients: fit.coefficients,
                    std_errors: fit.std_errors,
                    aliased: fit.aliased,
                    rank: fit.p,
                    deviance: fit.rss_or_deviance,
                    fallback: false,
                })
            }
        }
    }

    /// Least squares from the Gram matrix by a Cholesky factorization that
    /// skips (aliases) columns with a negligible pivot.
    fn gaussian_subset(&self, g: &Gram, cols: &[usize]) -> SubFit {
        let m = self.x.cols();
        let s = cols.len();
        let mut l = vec![0.0f64; s * s];
        let mut kept = vec![true; s];
        for j in 0..s {
            let ajj = g.xtx[cols[j] * m + cols[j]];
            let d = ajj - (0..j).map(|k| l[j * s + k].powi(2)).sum::<f64>();
            if !(d > 1e-9 * ajj) || ajj <= 0.0 {
                kept[j] = false;
                continue;
            }
            let ljj = d.sqrt();
            l[j * s + j] = ljj;
            for i in j + 1..s {
                let aij = g.xtx[cols[i] * m + cols[j]];
                let v = aij - (0..j).map(|k| l[i * s + k] * l[j * s + k]).sum::<f64>();
                l[i * s + j] = v / ljj;
            }
        }
        // Forward then back substitution over kept columns.
        let idx: Vec<usize> = (0..s).filter(|&j| kept[j]).collect();
        let mut z = vec![0.0; s];
        for &i in &idx {
            let v = g.xty[cols[i]] - idx.iter().take_while(|&&k| k < i).map(|&k| l[i * s + k] * z[k]).sum::<f64>();
            z[i] = v / l[i * s + i];
        }
        let mut b = vec![0.0; s];
        for &i in idx.iter().rev() {
            let v = z[i] - idx.iter().filter(|&&k| k > i).map(|&k| l[k * s + i] * b[k]).sum::<f64>();
            b[i] = v / l[i * s + i];
        }
        let rss = (g.tss - idx.iter().map(|&i| z[i] * z[i]).sum::<f64>()).max(0.0);
        // diag((LLᵀ)⁻¹) = column sums of squares of L⁻¹.
        let mut linv = vec![0.0; s * s];
        for &c in &idx {
            for &i in idx.iter().filter(|&&i| i >= c) {
                let rhs = if i == c { 1.0 } else { 0.0 };
                let v = rhs
                    - idx
                        .iter()
                        .filter(|&&k| k >= c && k < i)
                        .map(|&k| l[i * s + k] * linv[k * s + c])
                        .sum::<f64>();
                linv[i * s + c] = v / l[i * s + i];
            }
        }
        let rank = idx.len();
        let n = self.n();
        let sigma2 = if n > rank { rss / (n - rank) as f64 } else { f64::NAN };
        let std_errors = (0..s)
            .map(|j| {
                if !kept[j] {
                    return f64::NAN;
                }
                let v: f64 = idx.iter().filter(|&&i| i >= j).map(|&i| linv[i * s + j].powi(2)).sum();
                (sigma2 * v).sqrt()
            })
            .collect();
        // Centered response: the intercept absorbs ȳ.
        b[0] += g.ybar;
        SubFit {
            cols: cols.to_vec(),
            coefficients: b,
            std_errors,
            aliased: (0..s).filter(|&j| !kept[j]).collect(),
            rank,
            deviance: rss,
            fallback: false,
        }
    }

    fn criterion(&self, fit: &SubFit) -> f64 {
        match self.family {
            Family::Gaussian => gaussian_aic(self.n(), fit.deviance, fit.rank),
            _ => fit.deviance + 2.0 * fit.rank as f64,
        }
    }

    fn fallback(&self) -> SubFit {
        SubFit {
            fallback: true,
            ..self.fit_constant()
        }
    }

    pub fn fit_kind(&self, kind: NodeModelKind) -> SubFit {
        match kind {
            NodeModelKind::Constant => self.fit_constant(),
            NodeModelKind::Multiple => {
                let all: Vec<usize> = (0..self.columns.len()).collect();
                self.fit_columns(&all).unwrap_or_else(|_| self.fallback())
            }
            NodeModelKind::BestSimple => {
                let mut best: Option<SubFit> = None;
                for j in 1..self.columns.len() {
                    if self.column_is_constant(j) {
                        continue;
                    }
                    if let Ok(fit) = self.fit_columns(&[0, j]) {
                        if !fit.aliased.is_empty() {
                            continue;
                        }
                        if best.as_ref().is_none_or(|b| fit.deviance < b.deviance) {
                            best = Some(fit);
                        }
                    }
                }
                match best {
                    Some(fit) if (fit.coefficients[1] / fit.std_errors[1]).abs() > 2.0 => fit,
                    _ => self.fit_constant(),
                }
            }
            NodeModelKind::Stepwise => self.stepwise(),
        }
    }

    /// Forward/backward selection of regressor groups (all columns of one
    /// factor enter together) by AIC, starting from the constant model.
    fn stepwise(&self) -> SubFit {
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (j, c) in self.columns.iter().enumerate().skip(1) {
            let f = c.factor().expect("non-intercept column");
            match groups.last_mut() {
                Some((g, cols)) if *g == f => cols.push(j),
                _ => groups.push((f, vec![j])),
            }
        }
        let usable: Vec<bool> = groups
            .iter()
            .map(|(_, cols)| cols.iter().any(|&j| !self.column_is_constant(j)))
            .collect();
        let mut active = vec![false; groups.len()];
        let mut current = self.fit_constant();
        let mut current_ic = self.criterion(&current);
        let build = |active: &[bool]| -> Vec<usize> {
            let mut cols = vec![0];
            for (g, (_, c)) in groups.iter().enumerate() {
                if active[g] {
                    cols.extend(c);
                }
            }
            cols
        };
        for _ in 0..4 * groups.len() + 4 {
            let mut best: Option<(f64, usize, SubFit)> = None;
            for g in 0..groups.len() {
                if !usable[g] {
                    continue;
                }
                active[g] = !active[g];
                let cols = build(&active);
                active[g] = !active[g];
                if let Ok(fit) = self.fit_columns(&cols) {
                    let ic = self.criterion(&fit);
                    if best.as_ref().is_none_or(|(b, _, _)| ic < *b) {
                        best = Some((ic, g, fit));
                    }
                }
            }
            match best {
                Some((ic, g, fit)) if ic < current_ic => {
                    active[g] = !active[g];
                    current = fit;
                    current_ic = ic;
                }
                _ => break,
            }
        }
        current
    }

    /// Linear predictor of a sub-fit at every node row.
    pub fn eta(&self, fit: &SubFit) -> Vec<f64> {
        let mut eta = vec![0.0; self.n()];
        for (&j, &b) in fit.cols.iter().zip(&fit.coefficients) {
            if b != 0.0 {
                for (e, v) in eta.iter_mut().zip(self.x.column(j)) {
                    *e += b * v;
                }
            }
        }
        eta
    }

    /// Pearson residual signs: `true` for negative residuals.
    pub fn negative_residuals(&self, fit: &SubFit) -> Vec<bool> {
        let f = self.family;
        self.eta(fit)
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let mu = f.inverse_link(e);
                f.pearson_residual(self.y[i], mu, self.trials[i]) < 0.0
            })
            .collect()
    }
}

impl SubFit {
    pub fn into_node_fit(self, problem: &NodeProblem, kind: NodeModelKind) -> NodeFit {
        NodeFit {
            kind,
            family: problem.family,
            columns: self.cols.iter().map(|&j| problem.columns[j]).collect(),
            coefficients: self.coefficients,
            std_errors: self.std_errors,
            aliased: self.aliased,
            deviance: self.deviance,
            n: problem.n(),
            mean: problem.mean(),
            fallback: self.fallback,
        }
    }

    /// Factor indices of the non-aliased regressor columns.
    pub fn regressor_factors(&self, columns: &[Column]) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .cols
            .iter()
            .enumerate()
            .filter(|(p, _)| !self.aliased.contains(p))
            .filter_map(|(_, &j)| columns[j].factor())
            .collect();
        out.dedup();
        out
    }
}
