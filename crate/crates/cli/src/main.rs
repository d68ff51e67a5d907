use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use doetree::classic::{estimate_effects, half_normal, select_eer, select_ier, select_lenth, stepwise_aic, SelectedModel};
use doetree::datasets::{by_id, catalogue};
use doetree::io::{csv_headers, emit_plot_data, parse_csv, render_tree, write_dataset_csv, CsvSchema, PlotPayload, TreeFormat};
use doetree::sim::{run_study, SimDesign, SimModelKind, SimSettings};
use doetree::tree::{cv_select, grow_tree, NodeModelKind, TreeConfig};
use doetree::{fmt_g, Dataset, Error, Family, LenthMode, Result};

#[derive(Parser)]
#[command(name = "doetree", version, about = "Effect selection and regression trees for complete factorial experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate effects and select a model
    Analyze(AnalyzeArgs),
    /// Grow, prune and cross-validate a regression tree
    Tree(TreeArgs),
    /// Compare methods by simulated prediction mean squared error
    Simulate(SimulateArgs),
    /// List or export the embedded datasets
    Datasets(DatasetsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct InputArgs {
    /// CSV file with a header row
    #[arg(long, conflicts_with = "dataset")]
    input: Option<PathBuf>,
    /// Embedded dataset id (see `datasets --list`)
    #[arg(long)]
    dataset: Option<String>,
    /// Response column
    #[arg(long, default_value = "y")]
    response: String,
    /// Column of binomial trial counts
    #[arg(long)]
    trials_column: Option<String>,
    /// Response is a count
    #[arg(long)]
    counts: bool,
    /// Columns to treat as ordered, scored by their numeric labels
    #[arg(long, value_delimiter = ',')]
    ordinal: Vec<String>,
    /// Reference levels, as COLUMN=LEVEL
    #[arg(long, value_delimiter = ',')]
    baseline: Vec<String>,
}

impl InputArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        match (&self.input, &self.dataset) {
            (Some(path), None) => {
                let headers = csv_headers(path)?;
                let mut schema = CsvSchema::from_headers(&headers, &self.response, self.trials_column.as_deref())?;
                schema.counts = self.counts;
                for spec in &mut schema.factors {
                    spec.ordinal = self.ordinal.contains(&spec.column);
                }
                for b in &self.baseline {
                    let (col, level) = b
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("baseline {b:?} is not COLUMN=LEVEL")))?;
                    let spec = schema
                        .factors
                        .iter_mut()
                        .find(|s| s.column == col)
                        .ok_or_else(|| Error::Config(format!("baseline for unknown column {col}")))?;
                    spec.baseline = Some(level.to_string());
                }
                parse_csv(path, &schema)
            }
            (None, Some(id)) => Ok(by_id(id, seed)?.dataset),
            _ => Err(Error::Config("give --input FILE or --dataset ID".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ier,
    Eer,
    Aic,
    LenthIer,
    LenthEer,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    method: Method,
    /// Significance level (defaults: 0.05 for IER variants, 0.10 for EER variants)
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Emit half-normal plot data instead of the analysis
    #[arg(long)]
    half_normal: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Constant,
    Simple,
    Multiple,
    Stepwise,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Poisson,
    Binomial,
}

#[derive(Args)]
struct TreeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "constant")]
    model: Model,
    /// Defaults to the family matching the response type
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Cross-validation folds; 0 keeps the unpruned tree
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    min_node_size: Option<usize>,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 50)]
    bootstrap_reps: usize,
    /// Factors allowed as node-model regressors (names); all by default
    #[arg(long, value_delimiter = ',')]
    regressors: Vec<String>,
    /// Skip pairwise interaction tests
    #[arg(long)]
    no_interactions: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Emit fitted values against this factor, one line per leaf
    #[arg(long)]
    fitted_vs: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Replicated,
    Unreplicated,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Null,
    Unif,
    Exp,
    Hier,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    design: DesignArg,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Simulation models; all four by default
    #[arg(long, value_enum, value_delimiter = ',')]
    models: Vec<ModelArg>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 50)]
    bootstrap_reps: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Emit relative-PMSE plot data
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct DatasetsArgs {
    #[arg(long, conflicts_with = "export")]
    list: bool,
    /// Write a dataset as CSV
    #[arg(long)]
    export: Option<String>,
    /// Seed for generated datasets
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn factor_index(ds: &Dataset, name: &str) -> Result<usize> {
    ds.factor_index(name)
        .ok_or_else(|| Error::Config(format!("no factor named {name}")))
}

fn model_json(ds: &Dataset, m: &SelectedModel) -> serde_json::Value {
    let names: Vec<String> = ds.factors().iter().map(|f| f.name().to_string()).collect();
    let coef: Vec<serde_json::Value> = m
        .fitted
        .terms()
        .map(|(t, c)| json!({"term": t.label_names(ds.factors()), "x": t.label_x(), "coefficient": c}))
        .collect();
    json!({
        "method": m.method.name(),
        "factors": names,
        "critical_value": m.critical_value,
        "terms": m.effects().iter().map(|t| t.letters()).collect::<Vec<_>>(),
        "fitted": coef,
    })
}

fn analyze(a: &AnalyzeArgs, out: &mut impl Write) -> Result<()> {
    let ds = a.input.load(0)?;
    let table = estimate_effects(&ds)?;
    if a.half_normal {
        write!(out, "{}", emit_plot_data(&PlotPayload::HalfNormal(&half_normal(&table)))?)?;
        return Ok(());
    }
    let (ier, eer) = (a.alpha.unwrap_or(0.05), a.alpha.unwrap_or(0.10));
    let model = match a.method {
        Method::Ier => select_ier(&table, ier)?,
        Method::Eer => select_eer(&table, eer)?,
        Method::Aic => stepwise_aic(&ds)?,
        Method::LenthIer => select_lenth(&table, LenthMode::Ier, ier)?,
        Method::LenthEer => select_lenth(&table, LenthMode::Eer, eer)?,
    };
    match a.format {
        Format::Json => {
            let mut v = model_json(&ds, &model);
            v["effects"] = json!(table
                .effects()
                .map(|(t, e)| json!({"term": t.letters(), "estimate": e}))
                .collect::<Vec<_>>());
            v["common_se"] = json!(table.common_se);
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Format::Csv => {
            writeln!(out, "term,x,coefficient")?;
            for (t, c) in model.fitted.terms() {
                writeln!(out, "{},{},{}", t.letters(), t.label_x(), c)?;
            }
        }
        Format::Text => {
            let t = table.t_statistics();
            let p = table.p_values();
            writeln!(out, "{:<8} {:>12} {:>10} {:>10}", "term", "estimate", "t", "p")?;
            for (i, (term, e)) in table.effects().enumerate() {
                let col = |v: &Option<Vec<f64>>| v.as_ref().map_or("-".to_string(), |v| fmt_g(v[i + 1]));
                writeln!(out, "{:<8} {:>12} {:>10} {:>10}", term.letters(), fmt_g(e), col(&t), col(&p))?;
            }
            if let Some(se) = table.common_se {
                writeln!(out, "common SE = {} on {} df", fmt_g(se), table.dof)?;
            }
            writeln!(out)?;
            let crit = model.critical_value.map_or(String::new(), |c| format!(" (critical value {})", fmt_g(c)));
            let terms: Vec<String> = model.effects().iter().map(|t| t.letters()).collect();
            writeln!(out, "{} selects {{{}}}{crit}", model.method.name(), terms.join(", "))?;
            let mut eq = String::from("y =");
            for (i, (term, c)) in model.fitted.terms().enumerate() {
                let sign = if c < 0.0 { "-" } else if i == 0 { "" } else { "+" };
                let body = if term.is_intercept() {
                    fmt_g(c.abs())
                } else {
                    format!("{}*{}", fmt_g(c.abs()), term.label_x().replace(':', "*"))
                };
                eq.push_str(&format!(" {sign}{}{body}", if sign.is_empty() { "" } else { " " }));
            }
            writeln!(out, "{}", eq.replace("=  ", "= "))?;
        }
    }
    Ok(())
}

fn tree(a: &TreeArgs, out: &mut impl Write) -> Result<()> {
    let ds = a.input.load(a.seed)?;
    let kind = match a.model {
        Model::Constant => NodeModelKind::Constant,
        Model::Simple => NodeModelKind::BestSimple,
        Model::Multiple => NodeModelKind::Multiple,
        Model::Stepwise => NodeModelKind::Stepwise,
    };
    let mut config = TreeConfig::new(kind).with_seed(a.seed);
    config.family = a.family.map(|f| match f {
        FamilyArg::Gaussian => Family::Gaussian,
        FamilyArg::Poisson => Family::Poisson,
        FamilyArg::Binomial => Family::Binomial,
    });
    config.min_node_size = a.min_node_size;
    config.max_depth = a.max_depth;
    config.bootstrap_reps = a.bootstrap_reps;
    config.interactions = !a.no_interactions;
    if !a.regressors.is_empty() {
        config.regressors = Some(a.regressors.iter().map(|n| factor_index(&ds, n)).collect::<Result<_>>()?);
    }
    let (tree, cv) = if a.folds == 0 {
        (grow_tree(&ds, &config)?, None)
    } else {
        let r = cv_select(&ds, &config, a.folds, a.seed)?;
        (r.tree.clone(), Some(r))
    };
    if let Some(name) = &a.fitted_vs {
        let variable = factor_index(&ds, name)?;
        write!(out, "{}", emit_plot_data(&PlotPayload::FittedVsX { tree: &tree, variable })?)?;
        return Ok(());
    }
    match a.format {
        Format::Json => writeln!(out, "{}", render_tree(&tree, TreeFormat::Json)?)?,
        Format::Text | Format::Csv => {
            write!(out, "{}", render_tree(&tree, TreeFormat::Text)?)?;
            if let Some(cv) = cv {
                writeln!(out)?;
                writeln!(out, "{:>6} {:>12} {:>14}", "leaves", "alpha", "cv deviance")?;
                for (i, (alpha, dev)) in cv.alphas.iter().zip(&cv.cv_deviance).enumerate() {
                    let mark = if i == cv.chosen { " *" } else { "" };
                    writeln!(out, "{:>6} {:>12} {:>14}{mark}", cv.leaf_counts[i], fmt_g(*alpha), fmt_g(*dev))?;
                }
            }
        }
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, out: &mut impl Write) -> Result<()> {
    let design = match a.design {
        DesignArg::Replicated => SimDesign::Replicated,
        DesignArg::Unreplicated => SimDesign::Unreplicated,
    };
    let models: Vec<SimModelKind> = if a.models.is_empty() {
        SimModelKind::ALL.to_vec()
    } else {
        a.models
            .iter()
            .map(|m| match m {
                ModelArg::Null => SimModelKind::Null,
                ModelArg::Unif => SimModelKind::Unif,
                ModelArg::Exp => SimModelKind::Exp,
                ModelArg::Hier => SimModelKind::Hier,
            })
            .collect()
    };
    let settings = SimSettings {
        folds: a.folds,
        bootstrap_reps: a.bootstrap_reps,
        ..SimSettings::default()
    };
    let report = run_study(&design.methods(), &models, design, a.trials, a.seed, &settings)?;
    if a.plot {
        write!(out, "{}", emit_plot_data(&PlotPayload::RelativePmse(&report))?)?;
        return Ok(());
    }
    match a.format {
        Format::Json => writeln!(out, "{}", report.to_json()?)?,
        Format::Csv => write!(out, "{}", report.to_csv()?)?,
        Format::Text => {
            writeln!(out, "{} trials, seed {}", report.trials, report.seed)?;
            writeln!(out, "{:<6} {:<16} {:>10} {:>10} {:>10} {:>10}", "model", "method", "pmse", "mc_se", "relative", "selected")?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{:<6} {:<16} {:>10} {:>10} {:>10} {:>10}",
                    r.model.name(),
                    r.method.name(),
                    fmt_g(r.pmse),
                    fmt_g(r.mc_se),
                    fmt_g(r.relative),
                    fmt_g(r.selection_rate)
                )?;
            }
        }
    }
    Ok(())
}

fn datasets(a: &DatasetsArgs, out: &mut impl Write) -> Result<()> {
    match &a.export {
        Some(id) => write_dataset_csv(&by_id(id, a.seed)?.dataset, out),
        None => {
            for d in catalogue() {
                writeln!(out, "{:<18} {:>5} rows  {}", d.id, d.rows, d.description)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut buf = Vec::new();
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a, &mut buf),
        Command::Tree(a) => tree(a, &mut buf),
        Command::Simulate(a) => simulate(a, &mut buf),
        Command::Datasets(a) => datasets(a, &mut buf),
    };
    match result {
        Ok(()) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(&buf).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
