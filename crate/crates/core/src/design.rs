//! Factors, design points, datasets, and the codings every model consumes.
//!
//! Two-level factors use ±1 contrast coding with the first listed level at
//! −1. Multi-level factors enter linear models through set-to-zero dummy
//! columns (the baseline level is omitted). Ordinal factors additionally
//! carry numeric level scores so they can act as linear predictors.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How a factor's levels are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    TwoLevel,
    Nominal,
    Ordinal,
}

/// A design factor with an ordered list of level labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    name: String,
    levels: Vec<String>,
    kind: FactorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<f64>>,
    #[serde(default)]
    baseline: usize,
}

impl Factor {
    /// Two-level factor; `low` is coded −1 and `high` +1.
    pub fn two_level(name: &str, low: &str, high: &str) -> Result<Self> {
        Self::build(name, vec![low.into(), high.into()], FactorKind::TwoLevel, None)
    }

    /// Unordered factor. A factor with exactly two levels is still nominal
    /// here; use [`Factor::two_level`] for ±1 coding.
    pub fn nominal<S: AsRef<str>>(name: &str, levels: &[S]) -> Result<Self> {
        let levels = levels.iter().map(|s| s.as_ref().to_string()).collect();
        Self::build(name, levels, FactorKind::Nominal, None)
    }

    /// Ordered factor whose levels carry numeric scores (e.g. storage temperatures).
    pub fn ordinal<S: AsRef<str>>(name: &str, levels: &[S], scores: &[f64]) -> Result<Self> {
        let levels = levels.iter().map(|s| s.as_ref().to_string()).collect();
        Self::build(name, levels, FactorKind::Ordinal, Some(scores.to_vec()))
    }

    fn build(
        name: &str,
        levels: Vec<String>,
        kind: FactorKind,
        scores: Option<Vec<f64>>,
    ) -> Result<Self> {
        let factor = Factor {
            name: name.to_string(),
            levels,
            kind,
            scores,
            baseline: 0,
        };
        factor.validate()?;
        Ok(factor)
    }

    /// Sets the reference level omitted by set-to-zero dummy coding.
    pub fn with_baseline(mut self, label: &str) -> Result<Self> {
        self.baseline = self.level_index(label).ok_or_else(|| {
            Error::InvalidInput(format!("factor {}: unknown baseline level {label}", self.name))
        })?;
        Ok(self)
    }

    /// Checks the invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("factor {}: {msg}", self.name)));
        if self.name.is_empty() {
            return Err(Error::InvalidInput("factor name is empty".into()));
        }
        if self.levels.len() < 2 {
            return bad("needs at least two levels".into());
        }
        for (i, a) in self.levels.iter().enumerate() {
            if self.levels[..i].contains(a) {
                return bad(format!("duplicate level label {a}"));
            }
        }
        if self.kind == FactorKind::TwoLevel && self.levels.len() != 2 {
            return bad("two-level factor must have exactly two levels".into());
        }
        match (&self.kind, &self.scores) {
            (FactorKind::Ordinal, Some(s)) => {
                if s.len() != self.levels.len() {
                    return bad("one score per level required".into());
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return bad("scores must be finite".into());
                }
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("ordinal scores must be strictly increasing".into());
                }
            }
            (FactorKind::Ordinal, None) => return bad("ordinal factor needs scores".into()),
            (_, Some(_)) => return bad("only ordinal factors carry scores".into()),
            _ => {}
        }
        if self.baseline >= self.levels.len() {
            return bad("baseline index out of range".into());
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn baseline(&self) -> usize {
        self.baseline
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    pub fn is_two_level(&self) -> bool {
        self.kind == FactorKind::TwoLevel
    }

    /// Numeric value of a level when the factor can act as a single linear
    /// predictor: ±1 for two-level factors, the score for ordinal ones.
    pub fn numeric(&self, level: usize) -> Option<f64> {
        match self.kind {
            FactorKind::TwoLevel => Some(if level == 0 { -1.0 } else { 1.0 }),
            FactorKind::Ordinal => self.scores.as_ref().map(|s| s[level]),
            FactorKind::Nominal => None,
        }
    }

    /// Levels other than the baseline, in listed order. These index the
    /// set-to-zero dummy columns.
    pub fn dummy_levels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.levels.len()).filter(move |&l| l != self.baseline)
    }
}

/// One level index per factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignPoint(pub Vec<usize>);

impl DesignPoint {
    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    /// ±1 codes, valid when every factor has two levels.
    pub fn codes(&self) -> Vec<f64> {
        self.0.iter().map(|&l| if l == 0 { -1.0 } else { 1.0 }).collect()
    }
}

/// All 2^k points of a two-level design, in lexicographic order of codes
/// (first factor varies slowest).
pub fn enumerate_design(k: usize) -> Result<Vec<DesignPoint>> {
    if !(1..=16).contains(&k) {
        return Err(Error::InvalidInput(format!("factor count {k} outside 1..=16")));
    }
    Ok((0..1usize << k)
        .map(|i| DesignPoint((0..k).map(|j| (i >> (k - 1 - j)) & 1).collect()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Gaussian,
    Count,
    Proportion,
}

/// A single observed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: DesignPoint,
    pub y: f64,
    /// Binomial denominator for proportion responses.
    pub n: Option<u32>,
}

/// Factor definitions plus observed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    factors: Vec<Factor>,
    rows: Vec<Observation>,
    response: ResponseKind,
}

impl Dataset {
    pub fn new(factors: Vec<Factor>, rows: Vec<Observation>, response: ResponseKind) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("dataset has no factors".into()));
        }
        for f in &factors {
            f.validate()?;
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidInput(format!("duplicate factor name {}", f.name)));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            let line = r + 1;
            if row.point.0.len() != factors.len() {
                return Err(Error::InvalidInput(format!(
                    "row {line}: {} level indices for {} factors",
                    row.point.0.len(),
                    factors.len()
                )));
            }
            for (f, &l) in factors.iter().zip(&row.point.0) {
                if l >= f.level_count() {
                    return Err(Error::InvalidInput(format!(
                        "row {line}: level index {l} out of range for factor {}",
                        f.name
                    )));
                }
            }
            if !row.y.is_finite() {
                return Err(Error::InvalidInput(format!("row {line}: response is not finite")));
            }
            match response {
                ResponseKind::Gaussian => {}
                ResponseKind::Count => {
                    if row.y < 0.0 || row.y.fract() != 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "row {line}: count response {} is not a non-negative integer",
                            row.y
                        )));
                    }
                }
                ResponseKind::Proportion => {
                    let n = row.n.ok_or_else(|| {
                        Error::InvalidInput(format!("row {line}: proportion response needs n"))
                    })?;
                    if n == 0 {
                        return Err(Error::InvalidInput(format!("row {line}: n must be positive")));
                    }
                    if row.y < 0.0 || row.y.fract() != 0.0 || row.y > f64::from(n) {
                        return Err(Error::InvalidInput(format!(
                            "row {line}: successes {} not an integer in [0, {n}]",
                            row.y
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            factors,
            rows,
            response,
        })
    }

    /// Complete two-level factorial with `replicates` rows per point, in
    /// [`enumerate_design`] order with replicates adjacent.
    pub fn two_level_grid(names: &[&str], replicates: usize, y: Vec<f64>) -> Result<Self> {
        let factors = names
            .iter()
            .map(|n| Factor::two_level(n, "-", "+"))
            .collect::<Result<Vec<_>>>()?;
        let points = enumerate_design(names.len())?;
        if y.len() != points.len() * replicates {
            return Err(Error::InvalidInput(format!(
                "expected {} responses, got {}",
                points.len() * replicates,
                y.len()
            )));
        }
        let rows = points
            .iter()
            .flat_map(|p| std::iter::repeat_n(p, replicates))
            .zip(y)
            .map(|(p, y)| Observation {
                point: p.clone(),
                y,
                n: None,
            })
            .collect();
        Dataset::new(factors, rows, ResponseKind::Gaussian)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &Factor {
        &self.factors[i]
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn response_kind(&self) -> ResponseKind {
        self.response
    }

    pub fn responses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    /// Binomial denominators, when every row has one.
    pub fn trials(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.n.map(f64::from)).collect()
    }

    pub fn all_two_level(&self) -> bool {
        self.factors.iter().all(Factor::is_two_level)
    }

    /// Same design with new responses (used by the simulation harness).
    pub fn with_responses(&self, y: &[f64]) -> Result<Self> {
        if y.len() != self.rows.len() {
            return Err(Error::InvalidInput("response length mismatch".into()));
        }
        let rows = self
            .rows
            .iter()
            .zip(y)
            .map(|(r, &y)| Observation {
                point: r.point.clone(),
                y,
                n: r.n,
            })
            .collect();
        Dataset::new(self.factors.clone(), rows, self.response)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            factors: self.factors.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            response: self.response,
        }
    }

    /// Replicates per design point when the data form a complete, equally
    /// replicated factorial; `None` otherwise.
    pub fn replicates(&self) -> Option<usize> {
        let cells: usize = self.factors.iter().map(Factor::level_count).product();
        let mut counts: HashMap<&[usize], usize> = HashMap::new();
        for r in &self.rows {
            *counts.entry(r.point.levels()).or_default() += 1;
        }
        if counts.len() != cells {
            return None;
        }
        let r = *counts.values().next()?;
        counts.values().all(|&c| c == r).then_some(r)
    }
}

/// A product of factors; the empty set is the intercept.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Term(u64);

impl Term {
    pub const INTERCEPT: Term = Term(0);

    pub fn new(members: &[usize]) -> Self {
        Term(members.iter().fold(0u64, |m, &f| {
            assert!(f < 64, "factor index {f} out of range");
            m | (1 << f)
        }))
    }

    pub fn single(factor: usize) -> Self {
        Term::new(&[factor])
    }

    pub fn from_mask(mask: u64) -> Self {
        Term(mask)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn order(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_intercept(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, factor: usize) -> bool {
        factor < 64 && self.0 & (1 << factor) != 0
    }

    /// Member factor indices in increasing order.
    pub fn members(self) -> Vec<usize> {
        (0..64).filter(|&f| self.0 & (1 << f) != 0).collect()
    }

    pub fn is_subset_of(self, other: Term) -> bool {
        self.0 & !other.0 == 0
    }

    /// Product in ±1 coding, where x² = 1.
    pub fn times(self, other: Term) -> Term {
        Term(self.0 ^ other.0)
    }

    pub fn union(self, other: Term) -> Term {
        Term(self.0 | other.0)
    }

    /// Value of the monomial at ±1 codes.
    pub fn eval(self, codes: &[f64]) -> f64 {
        self.members().iter().map(|&f| codes[f]).product()
    }

    /// `A`, `BD`, ... style label (intercept is `I`). Falls back to `x{i}`
    /// labels beyond 26 factors.
    pub fn letters(self) -> String {
        if self.is_intercept() {
            return "I".into();
        }
        let m = self.members();
        if m.iter().all(|&f| f < 26) {
            m.iter().map(|&f| (b'A' + f as u8) as char).collect()
        } else {
            self.label_x()
        }
    }

    /// `x1:x2` style label (1-based), matching regression output.
    pub fn label_x(self) -> String {
        if self.is_intercept() {
            return "(Intercept)".into();
        }
        self.members()
            .iter()
            .map(|f| format!("x{}", f + 1))
            .collect::<Vec<_>>()
            .join(":")
    }

    /// `name1:name2` label using factor names.
    pub fn label_names(self, factors: &[Factor]) -> String {
        if self.is_intercept() {
            return "(Intercept)".into();
        }
        self.members()
            .iter()
            .map(|&f| factors.get(f).map_or_else(|| format!("x{}", f + 1), |x| x.name.clone()))
            .collect::<Vec<_>>()
            .join(":")
    }

    /// All 2^k terms over `k` factors, intercept first, then by order and
    /// lexicographic member indices.
    pub fn all(k: usize) -> Vec<Term> {
        let mut t: Vec<Term> = (0..1u64 << k).map(Term).collect();
        t.sort();
        t
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.members().cmp(&other.members()))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Term({})", self.letters())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.letters())
    }
}

/// Polynomial in ±1 coded two-level factors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Polynomial {
    coefficients: BTreeMap<Term, f64>,
}

impl Polynomial {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::new();
        p.add_term(Term::INTERCEPT, c);
        p
    }

    /// `(1 + sign·x_f) / 2`, the indicator of one side of a two-level split.
    pub fn indicator(factor: usize, sign: f64) -> Self {
        let mut p = Self::constant(0.5);
        p.add_term(Term::single(factor), 0.5 * sign);
        p
    }

    pub fn add_term(&mut self, term: Term, c: f64) {
        *self.coefficients.entry(term).or_insert(0.0) += c;
    }

    pub fn coefficient(&self, term: Term) -> f64 {
        self.coefficients.get(&term).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Term, f64)> + '_ {
        self.coefficients.iter().map(|(&t, &c)| (t, c))
    }

    pub fn eval(&self, codes: &[f64]) -> f64 {
        self.coefficients.iter().map(|(t, c)| c * t.eval(codes)).sum()
    }

    pub fn eval_point(&self, point: &DesignPoint) -> f64 {
        self.eval(&point.codes())
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (t, c) in other.terms() {
            out.add_term(t, c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial {
            coefficients: self.coefficients.iter().map(|(&t, &c)| (t, c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::new();
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                out.add_term(a.times(b), ca * cb);
            }
        }
        out
    }

    /// Drops terms with |coefficient| ≤ `tol`.
    pub fn pruned(&self, tol: f64) -> Polynomial {
        Polynomial {
            coefficients: self
                .coefficients
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(&t, &c)| (t, c))
                .collect(),
        }
    }
}

/// Contrast matrix for two-level factorial models: entry (i, j) is the
/// product of row i's ±1 codes over term j's factors.
pub fn effect_matrix(dataset: &Dataset, terms: &[Term]) -> Result<Matrix> {
    for t in terms {
        for f in t.members() {
            let factor = dataset.factors.get(f).ok_or_else(|| {
                Error::InvalidInput(format!("term {t} references missing factor {}", f + 1))
            })?;
            if !factor.is_two_level() {
                return Err(Error::InvalidInput(format!(
                    "term {t} uses multi-level factor {}; use dummy coding",
                    factor.name
                )));
            }
        }
    }
    let mut x = Matrix::zeros(dataset.len(), terms.len());
    for (i, row) in dataset.rows.iter().enumerate() {
        let codes = row.point.codes();
        for (j, t) in terms.iter().enumerate() {
            x.set(i, j, t.eval(&codes));
        }
    }
    Ok(x)
}

/// Set-to-zero dummy design with column labels.
#[derive(Debug, Clone)]
pub struct DummyMatrix {
    pub matrix: Matrix,
    pub labels: Vec<String>,
    /// Index into the requested term list for every column.
    pub term_of_column: Vec<usize>,
}

/// Dummy-coded design matrix: each factor contributes one indicator per
/// non-baseline level; an interaction contributes all products of its
/// members' indicators, with the first member varying fastest.
pub fn dummy_matrix(dataset: &Dataset, terms: &[Term]) -> Result<DummyMatrix> {
    struct Column {
        label: String,
        parts: Vec<(usize, usize)>,
        term: usize,
    }
    let mut columns: Vec<Column> = Vec::new();
    for (ti, t) in terms.iter().enumerate() {
        if t.is_intercept() {
            columns.push(Column {
                label: "(Intercept)".into(),
                parts: Vec::new(),
                term: ti,
            });
            continue;
        }
        let mut combos: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
        for f in t.members() {
            let factor = dataset.factors.get(f).ok_or_else(|| {
                Error::InvalidInput(format!("term references missing factor {}", f + 1))
            })?;
            let levels: Vec<usize> = factor.dummy_levels().collect();
            // Earlier members vary fastest.
            combos = levels
                .iter()
                .flat_map(|&l| {
                    combos.iter().map(move |c| {
                        let mut c = c.clone();
                        c.push((f, l));
                        c
                    })
                })
                .collect();
        }
        for parts in combos {
            let label = parts
                .iter()
                .map(|&(f, l)| format!("{}{}", dataset.factors[f].name, dataset.factors[f].levels[l]))
                .collect::<Vec<_>>()
                .join(":");
            columns.push(Column {
                label,
                parts,
                term: ti,
            });
        }
    }
    let mut x = Matrix::zeros(dataset.len(), columns.len());
    for (i, row) in dataset.rows.iter().enumerate() {
        for (j, c) in columns.iter().enumerate() {
            let on = c.parts.iter().all(|&(f, l)| row.point.0[f] == l);
            x.set(i, j, if on { 1.0 } else { 0.0 });
        }
    }
    Ok(DummyMatrix {
        matrix: x,
        labels: columns.iter().map(|c| c.label.clone()).collect(),
        term_of_column: columns.iter().map(|c| c.term).collect(),
    })
}
