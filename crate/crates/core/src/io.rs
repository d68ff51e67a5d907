//! CSV ingestion, tree rendering, and plot-data export.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classic::HalfNormalPoint;
use crate::design::{Dataset, DesignPoint, Factor, FactorKind, Observation, ResponseKind};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::sim::PmseReport;
use crate::tree::{Branch, Column, NodeFit, NodeModelKind, Split, Tree, TreeNode};

/// Formats like C's `%g` with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}"))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// How one CSV column becomes a factor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorSpec {
    pub column: String,
    /// Level order; first-appearance order when absent.
    pub levels: Option<Vec<String>>,
    /// Treat as ordered with the numeric level labels as scores.
    pub ordinal: bool,
    /// Reference level for dummy coding.
    pub baseline: Option<String>,
}

impl FactorSpec {
    pub fn new(column: &str) -> Self {
        FactorSpec {
            column: column.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub factors: Vec<FactorSpec>,
    pub response: String,
    /// Binomial denominators; makes the response a proportion.
    pub trials: Option<String>,
    /// Treat the response as counts (ignored when `trials` is set).
    pub counts: bool,
}

impl CsvSchema {
    /// Every column other than the response and trials is a factor.
    pub fn from_headers(headers: &[String], response: &str, trials: Option<&str>) -> Result<Self> {
        if !headers.iter().any(|h| h == response) {
            return Err(Error::InvalidInput(format!("no response column {response}")));
        }
        let factors = headers
            .iter()
            .filter(|h| h.as_str() != response && Some(h.as_str()) != trials)
            .map(|h| FactorSpec::new(h))
            .collect();
        Ok(CsvSchema {
            factors,
            response: response.into(),
            trials: trials.map(String::from),
            counts: false,
        })
    }

    fn response_kind(&self) -> ResponseKind {
        match (&self.trials, self.counts) {
            (Some(_), _) => ResponseKind::Proportion,
            (None, true) => ResponseKind::Count,
            (None, false) => ResponseKind::Gaussian,
        }
    }
}

/// Header row of a CSV file.
pub fn csv_headers(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    parse_csv_reader(std::fs::File::open(path)?, schema)
}

fn parse_count(value: &str, what: &str, line: usize) -> Result<u32> {
    let v: f64 = value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("line {line}: {what} {value:?} is not a number")))?;
    if v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
        return Err(Error::InvalidInput(format!("line {line}: {what} {value} is not a non-negative integer")));
    }
    Ok(v as u32)
}

pub fn parse_csv_reader(reader: impl Read, schema: &CsvSchema) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("no column named {name}")))
    };
    let factor_cols: Vec<usize> = schema.factors.iter().map(|f| find(&f.column)).collect::<Result<_>>()?;
    let y_col = find(&schema.response)?;
    let n_col = schema.trials.as_deref().map(find).transpose()?;
    let kind = schema.response_kind();

    let mut labels: Vec<Vec<String>> = vec![Vec::new(); factor_cols.len()];
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut ys = Vec::new();
    let mut ns = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let cell = |c: usize, what: &str| -> Result<String> {
            match rec.get(c) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(Error::InvalidInput(format!("line {line}: missing {what}"))),
            }
        };
        let mut row = Vec::with_capacity(factor_cols.len());
        for (j, &c) in factor_cols.iter().enumerate() {
            let v = cell(c, &headers[c])?;
            if !labels[j].contains(&v) {
                labels[j].push(v.clone());
            }
            row.push(v);
        }
        cells.push(row);
        let y = cell(y_col, &schema.response)?;
        let n = match n_col {
            Some(c) => Some(parse_count(&cell(c, "trials")?, "trials", line)?),
            None => None,
        };
        let y = match kind {
            ResponseKind::Gaussian => y
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidInput(format!("line {line}: response {y:?} is not a number")))?,
            _ => f64::from(parse_count(&y, "count", line)?),
        };
        if let Some(n) = n {
            if y > f64::from(n) {
                return Err(Error::InvalidInput(format!("line {line}: count {y} exceeds trials {n}")));
            }
        }
        ys.push(y);
        ns.push(n);
    }
    if cells.is_empty() {
        return Err(Error::InvalidInput("CSV has no data rows".into()));
    }

    let mut factors = Vec::with_capacity(schema.factors.len());
    for (spec, seen) in schema.factors.iter().zip(&labels) {
        let levels = match &spec.levels {
            Some(order) => {
                if let Some(bad) = seen.iter().find(|l| !order.contains(l)) {
                    return Err(Error::InvalidInput(format!("{}: level {bad} not in the declared order", spec.column)));
                }
                order.clone()
            }
            None => seen.clone(),
        };
        let factor = if spec.ordinal && levels.len() > 2 {
            let scores = levels
                .iter()
                .map(|l| {
                    l.parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("{}: ordinal level {l} is not numeric", spec.column)))
                })
                .collect::<Result<Vec<f64>>>()?;
            Factor::ordinal(&spec.column, &levels, &scores)?
        } else if levels.len() == 2 {
            Factor::two_level(&spec.column, &levels[0], &levels[1])?
        } else {
            Factor::nominal(&spec.column, &levels)?
        };
        factors.push(match &spec.baseline {
            Some(b) => factor.with_baseline(b)?,
            None => factor,
        });
    }
    let index: Vec<HashMap<&str, usize>> = factors
        .iter()
        .map(|f| f.levels().iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect())
        .collect();
    let rows = cells
        .iter()
        .zip(ys.into_iter().zip(ns))
        .map(|(row, (y, n))| Observation {
            point: DesignPoint(row.iter().zip(&index).map(|(v, ix)| ix[v.as_str()]).collect()),
            y,
            n,
        })
        .collect();
    Dataset::new(factors, rows, kind)
}

/// Writes a dataset as CSV: one column per factor (level labels), then `y`,
/// then `n` for proportions.
pub fn write_dataset_csv(dataset: &Dataset, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = dataset.factors().iter().map(|f| f.name().to_string()).collect();
    header.push("y".into());
    let proportion = dataset.response_kind() == ResponseKind::Proportion;
    if proportion {
        header.push("n".into());
    }
    w.write_record(&header)?;
    for r in dataset.rows() {
        let mut rec: Vec<String> = r
            .point
            .0
            .iter()
            .zip(dataset.factors())
            .map(|(&l, f)| f.levels()[l].clone())
            .collect();
        rec.push(r.y.to_string());
        if proportion {
            rec.push(r.n.map_or(String::new(), |n| n.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Schema that reads back a CSV written by [`write_dataset_csv`].
pub fn schema_for(dataset: &Dataset) -> CsvSchema {
    let proportion = dataset.response_kind() == ResponseKind::Proportion;
    CsvSchema {
        factors: dataset
            .factors()
            .iter()
            .map(|f| FactorSpec {
                column: f.name().into(),
                levels: Some(f.levels().to_vec()),
                ordinal: f.kind() == FactorKind::Ordinal,
                baseline: Some(f.levels()[f.baseline()].clone()),
            })
            .collect(),
        response: "y".into(),
        trials: proportion.then(|| "n".into()),
        counts: dataset.response_kind() == ResponseKind::Count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    Text,
    Json,
}

fn equation(fit: &NodeFit, factors: &[Factor]) -> String {
    let mut s = String::new();
    for (j, (c, &b)) in fit.columns.iter().zip(&fit.coefficients).enumerate() {
        if fit.aliased.contains(&j) {
            continue;
        }
        if *c == Column::Intercept {
            s.push_str(&fmt_g(b));
        } else {
            let sign = if b < 0.0 { " - " } else { " + " };
            let _ = write!(s, "{sign}{}*{}", fmt_g(b.abs()), c.label(factors));
        }
    }
    s
}

fn text_node(node: &TreeNode, tree: &Tree, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match &node.branch {
        None => {
            let link = match tree.family {
                Family::Gaussian => "y",
                Family::Poisson => "log(mu)",
                Family::Binomial => "logit(p)",
            };
            let _ = writeln!(
                out,
                "{pad}Leaf {}: n = {}, mean = {}, {link} = {}{}",
                node.id,
                node.n,
                fmt_g(node.fit.mean),
                equation(&node.fit, &tree.factors),
                if node.fit.fallback { " (constant fallback)" } else { "" }
            );
        }
        Some(b) => {
            let cond = b.split.describe(&tree.factors);
            let _ = writeln!(out, "{pad}Node {}: {cond}", node.id);
            text_node(&b.left, tree, depth + 1, out);
            let _ = writeln!(out, "{pad}Node {}: not ({cond})", node.id);
            text_node(&b.right, tree, depth + 1, out);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    family: Family,
    model: NodeModelKind,
    factors: Vec<Factor>,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: u64,
    n: usize,
    mean: f64,
    deviance: f64,
    terms: Vec<String>,
    columns: Vec<Column>,
    coefs: Vec<f64>,
    /// `null` where undefined.
    se: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    aliased: Vec<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<Box<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<Box<NodeDoc>>,
}

fn node_doc(node: &TreeNode, factors: &[Factor]) -> NodeDoc {
    let fit = &node.fit;
    let (split, left, right) = match &node.branch {
        None => (None, None, None),
        Some(b) => (
            Some(b.split.clone()),
            Some(Box::new(node_doc(&b.left, factors))),
            Some(Box::new(node_doc(&b.right, factors))),
        ),
    };
    NodeDoc {
        id: node.id,
        n: node.n,
        mean: fit.mean,
        deviance: fit.deviance,
        terms: fit.columns.iter().map(|c| c.label(factors)).collect(),
        columns: fit.columns.clone(),
        coefs: fit.coefficients.clone(),
        se: fit.std_errors.iter().map(|s| s.is_finite().then_some(*s)).collect(),
        aliased: fit.aliased.clone(),
        fallback: fit.fallback,
        split,
        left,
        right,
    }
}

fn node_from_doc(doc: NodeDoc, tree: &TreeDoc) -> Result<TreeNode> {
    let k = tree.factors.len();
    if doc.columns.len() != doc.coefs.len() || doc.se.len() != doc.coefs.len() {
        return Err(Error::InvalidInput(format!("node {}: columns, coefs and se differ in length", doc.id)));
    }
    if doc.columns.iter().filter_map(|c| c.factor()).any(|f| f >= k) {
        return Err(Error::InvalidInput(format!("node {}: column refers to a missing factor", doc.id)));
    }
    let fit = NodeFit {
        kind: tree.model,
        family: tree.family,
        columns: doc.columns,
        coefficients: doc.coefs,
        std_errors: doc.se.into_iter().map(|s| s.unwrap_or(f64::NAN)).collect(),
        aliased: doc.aliased,
        deviance: doc.deviance,
        n: doc.n,
        mean: doc.mean,
        fallback: doc.fallback,
    };
    let branch = match (doc.split, doc.left, doc.right) {
        (None, None, None) => None,
        (Some(split), Some(l), Some(r)) => {
            if split.variable >= k {
                return Err(Error::InvalidInput(format!("node {}: split on a missing factor", doc.id)));
            }
            Some(Box::new(Branch {
                split,
                left: node_from_doc(*l, tree)?,
                right: node_from_doc(*r, tree)?,
            }))
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "node {}: split, left and right must all be present or all absent",
                doc.id
            )))
        }
    };
    Ok(TreeNode {
        id: doc.id,
        n: doc.n,
        fit,
        branch,
    })
}

/// Text lists each split condition with its two branches and each leaf's
/// size, mean and fitted equation. JSON is lossless.
pub fn render_tree(tree: &Tree, format: TreeFormat) -> Result<String> {
    match format {
        TreeFormat::Text => {
            let mut out = String::new();
            text_node(&tree.root, tree, 0, &mut out);
            Ok(out)
        }
        TreeFormat::Json => {
            let doc = TreeDoc {
                family: tree.family,
                model: tree.kind,
                factors: tree.factors.clone(),
                root: node_doc(&tree.root, &tree.factors),
            };
            Ok(serde_json::to_string_pretty(&doc)?)
        }
    }
}

/// Reads a tree written by `render_tree(.., TreeFormat::Json)`.
pub fn parse_tree_json(text: &str) -> Result<Tree> {
    let mut doc: TreeDoc = serde_json::from_str(text)?;
    let root = std::mem::replace(
        &mut doc.root,
        NodeDoc {
            id: 0,
            n: 0,
            mean: 0.0,
            deviance: 0.0,
            terms: Vec::new(),
            columns: Vec::new(),
            coefs: Vec::new(),
            se: Vec::new(),
            aliased: Vec::new(),
            fallback: false,
            split: None,
            left: None,
            right: None,
        },
    );
    let root = node_from_doc(root, &doc)?;
    Ok(Tree {
        factors: doc.factors,
        family: doc.family,
        kind: doc.model,
        root,
    })
}

/// Inputs for plot-data export.
pub enum PlotPayload<'a> {
    /// Absolute effects against half-normal quantiles.
    HalfNormal(&'a [HalfNormalPoint]),
    RelativePmse(&'a PmseReport),
    /// Each leaf's fitted values across the levels of one factor, averaged
    /// over the design points that reach the leaf.
    FittedVsX { tree: &'a Tree, variable: usize },
}

fn csv_string(header: &str, records: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(&r)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(format!("# {header}\n{}", String::from_utf8(body).expect("UTF-8")))
}

/// Column-stable CSV with a leading `#` comment describing the plot.
pub fn emit_plot_data(payload: &PlotPayload) -> Result<String> {
    match payload {
        PlotPayload::HalfNormal(points) => {
            let mut rec = vec![vec!["rank".into(), "quantile".into(), "abs_effect".into(), "term".into()]];
            for (i, p) in points.iter().enumerate() {
                rec.push(vec![
                    (i + 1).to_string(),
                    p.quantile.to_string(),
                    p.abs_estimate.to_string(),
                    p.term.label_x(),
                ]);
            }
            csv_string("half-normal quantiles of absolute effect estimates", rec)
        }
        PlotPayload::RelativePmse(report) => {
            let mut rec = vec![vec!["model".into(), "method".into(), "relative_pmse".into(), "pmse".into(), "mc_se".into()]];
            for r in &report.rows {
                rec.push(vec![
                    r.model.name().into(),
                    r.method.name().into(),
                    r.relative.to_string(),
                    r.pmse.to_string(),
                    r.mc_se.to_string(),
                ]);
            }
            csv_string(&format!("relative PMSE by model and method, {} trials", report.trials), rec)
        }
        PlotPayload::FittedVsX { tree, variable } => {
            let factors = &tree.factors;
            let f = factors
                .get(*variable)
                .ok_or_else(|| Error::InvalidInput(format!("variable {variable} out of range")))?;
            let cells: usize = factors.iter().map(Factor::level_count).product();
            if cells > 1 << 20 {
                return Err(Error::InvalidInput("design grid too large to enumerate".into()));
            }
            // leaf id -> level -> (sum, count)
            let mut acc: std::collections::BTreeMap<u64, Vec<(f64, usize)>> = Default::default();
            let mut point = vec![0usize; factors.len()];
            for mut idx in 0..cells {
                for (j, fac) in factors.iter().enumerate().rev() {
                    point[j] = idx % fac.level_count();
                    idx /= fac.level_count();
                }
                let p = tree.predict_detailed(&DesignPoint(point.clone()))?;
                let slot = acc.entry(p.leaf).or_insert_with(|| vec![(0.0, 0); f.level_count()]);
                slot[point[*variable]].0 += p.value;
                slot[point[*variable]].1 += 1;
            }
            let mut rec = vec![vec!["leaf".into(), f.name().to_string(), "x".into(), "fitted".into()]];
            for (leaf, levels) in acc {
                for (l, (sum, count)) in levels.into_iter().enumerate() {
                    if count > 0 {
                        rec.push(vec![
                            leaf.to_string(),
                            f.levels()[l].clone(),
                            f.numeric(l).unwrap_or(l as f64).to_string(),
                            (sum / count as f64).to_string(),
                        ]);
                    }
                }
            }
            csv_string(&format!("fitted values against {} by leaf", f.name()), rec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{seed_germination, wafer_reconstruction};
    use crate::design::enumerate_design;
    use crate::tree::{grow_tree, predict, TreeConfig};

    #[test]
    fn g_format() {
        assert_eq!(fmt_g(14.16125), "14.1613");
        assert_eq!(fmt_g(0.24502), "0.24502");
        assert_eq!(fmt_g(-2.0), "-2");
        assert_eq!(fmt_g(1234567.0), "1.23457e+06");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(0.00001234), "1.234e-05");
        assert_eq!(fmt_g(999999.5), "1e+06");
        assert_eq!(fmt_g(0.0), "0");
    }

    #[test]
    fn shape_from_csv() {
        let mut text = String::from("A,B,C,D,y\n");
        for p in enumerate_design(4).unwrap() {
            for r in 0..6 {
                let l: Vec<&str> = p.0.iter().map(|&l| if l == 0 { "-" } else { "+" }).collect();
                text.push_str(&format!("{},{}\n", l.join(","), r));
            }
        }
        let headers: Vec<String> = ["A", "B", "C", "D", "y"].iter().map(|s| s.to_string()).collect();
        let schema = CsvSchema::from_headers(&headers, "y", None).unwrap();
        let ds = parse_csv_reader(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.factors().len(), 4);
        assert_eq!(ds.replicates(), Some(6));
    }

    #[test]
    fn rejects_bad_proportions_and_gaps() {
        let headers: Vec<String> = ["g", "y", "n"].iter().map(|s| s.to_string()).collect();
        let schema = CsvSchema::from_headers(&headers, "y", Some("n")).unwrap();
        assert!(parse_csv_reader("g,y,n\na,101,100\nb,3,100\n".as_bytes(), &schema).is_err());
        assert!(parse_csv_reader("g,y,n\na,1.5,100\nb,3,100\n".as_bytes(), &schema).is_err());
        assert!(parse_csv_reader("g,y,n\na,,100\nb,3,100\n".as_bytes(), &schema).is_err());
    }

    #[test]
    fn seed_data_round_trip() {
        let ds = seed_germination().dataset;
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let back = parse_csv_reader(buf.as_slice(), &schema_for(&ds)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn json_tree_round_trip() {
        let ds = wafer_reconstruction().dataset;
        let mut cfg = TreeConfig::new(NodeModelKind::BestSimple);
        cfg.min_node_size = Some(12);
        let t = grow_tree(&ds, &cfg).unwrap();
        let back = parse_tree_json(&render_tree(&t, TreeFormat::Json).unwrap()).unwrap();
        for p in enumerate_design(4).unwrap() {
            assert_eq!(predict(&t, &p).unwrap(), predict(&back, &p).unwrap());
        }
        assert!(parse_tree_json("{\"family\":\"gaussian\"}").is_err());
    }

    #[test]
    fn text_tree_starts_with_d() {
        let ds = wafer_reconstruction().dataset;
        let t = grow_tree(&ds, &TreeConfig::default()).unwrap();
        let text = render_tree(&t, TreeFormat::Text).unwrap();
        assert!(text.starts_with("Node 1: D = -"), "{text}");
        assert!(text.contains("Leaf"));
    }

    #[test]
    fn half_normal_csv() {
        let table = crate::classic::estimate_effects(&wafer_reconstruction().dataset).unwrap();
        let csv = emit_plot_data(&PlotPayload::HalfNormal(&crate::classic::half_normal(&table))).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines.len(), 2 + 15);
        assert!(lines[15].ends_with(",x3:x4"));
        assert!(lines[16].ends_with(",x4"));
    }
}
