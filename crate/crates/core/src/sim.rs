//! Monte Carlo comparison of model-selection methods by prediction mean
//! squared error on two-level factorial designs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::classic::{estimate_effects, select_eer, select_ier, select_lenth, stepwise_aic};
use crate::critical::LenthMode;
use crate::design::{enumerate_design, Dataset, DesignPoint, Term};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, stream_rng};
use crate::tree::{cv_select, predict, NodeModelKind, TreeConfig};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DOETREE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModelKind {
    Null,
    Unif,
    Exp,
    Hier,
}

impl SimModelKind {
    pub const ALL: [SimModelKind; 4] = [SimModelKind::Null, SimModelKind::Unif, SimModelKind::Exp, SimModelKind::Hier];

    pub fn name(self) -> &'static str {
        match self {
            SimModelKind::Null => "Null",
            SimModelKind::Unif => "Unif",
            SimModelKind::Exp => "Exp",
            SimModelKind::Hier => "Hier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimModel {
    pub kind: SimModelKind,
    pub k: usize,
    /// Error standard deviation.
    pub sigma: f64,
}

impl SimModel {
    pub fn new(kind: SimModelKind) -> Self {
        SimModel { kind, k: 4, sigma: 0.5 }
    }
}

/// A drawn true model: means at every design point (in `enumerate_design`
/// order) and the linear predictor that generates data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    /// Data are exp(η + ε) rather than η + ε.
    pub log_scale: bool,
    pub sigma: f64,
}

impl TrueModel {
    /// `replicates` observations per design point, replicates adjacent.
    pub fn sample(&self, replicates: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let noise = Normal::new(0.0, self.sigma).expect("positive sigma");
        let mut y = Vec::with_capacity(self.eta.len() * replicates);
        for &eta in &self.eta {
            for _ in 0..replicates {
                let v = eta + noise.sample(rng);
                y.push(if self.log_scale { v.exp() } else { v });
            }
        }
        y
    }
}

fn eta_from(points: &[DesignPoint], coefficients: &[(Term, f64)]) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let codes = p.codes();
            coefficients.iter().map(|(t, b)| b * t.eval(&codes)).sum()
        })
        .collect()
}

/// Draws coefficients for one trial. Unif draws every non-intercept effect
/// from U(−1/4, 1/4); Exp and Hier draw main effects from U(−1, 1), and Hier
/// sets each interaction to the product of its members' main effects. For
/// Exp the mean is E[y] = exp(η + σ²/2).
pub fn draw_true_model(model: &SimModel, rng: &mut ChaCha8Rng) -> Result<TrueModel> {
    let points = enumerate_design(model.k)?;
    let terms: Vec<Term> = Term::all(model.k).into_iter().skip(1).collect();
    let coefficients: Vec<(Term, f64)> = match model.kind {
        SimModelKind::Null => Vec::new(),
        SimModelKind::Unif => terms.iter().map(|&t| (t, rng.random_range(-0.25..0.25))).collect(),
        SimModelKind::Exp => (0..model.k)
            .map(|f| (Term::single(f), rng.random_range(-1.0..1.0)))
            .collect(),
        SimModelKind::Hier => {
            let main: Vec<f64> = (0..model.k).map(|_| rng.random_range(-1.0..1.0)).collect();
            terms
                .iter()
                .map(|&t| (t, t.members().iter().map(|&f| main[f]).product()))
                .collect()
        }
    };
    let eta = eta_from(&points, &coefficients);
    let log_scale = model.kind == SimModelKind::Exp;
    let mu = if log_scale {
        let shift = 0.5 * model.sigma * model.sigma;
        eta.iter().map(|e| (e + shift).exp()).collect()
    } else {
        eta.clone()
    };
    Ok(TrueModel {
        mu,
        eta,
        log_scale,
        sigma: model.sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SimMethod {
    Ier,
    Eer,
    Aic,
    LenthIer,
    LenthEer,
    GuideConstant,
    GuideSimple,
    GuideStepwise,
    /// Every effect kept: the least-squares cell means.
    Saturated,
    /// Grand mean everywhere.
    InterceptOnly,
}

impl SimMethod {
    pub fn name(self) -> &'static str {
        match self {
            SimMethod::Ier => "IER",
            SimMethod::Eer => "EER",
            SimMethod::Aic => "AIC",
            SimMethod::LenthIer => "Lenth-IER",
            SimMethod::LenthEer => "Lenth-EER",
            SimMethod::GuideConstant => "GUIDE-constant",
            SimMethod::GuideSimple => "GUIDE-simple",
            SimMethod::GuideStepwise => "GUIDE-stepwise",
            SimMethod::Saturated => "saturated",
            SimMethod::InterceptOnly => "intercept-only",
        }
    }

    fn needs_replicates(self) -> bool {
        matches!(self, SimMethod::Ier | SimMethod::Eer | SimMethod::Aic)
    }
}

impl Serialize for PmseRow {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PmseRow", 6)?;
        st.serialize_field("method", self.method.name())?;
        st.serialize_field("model", self.model.name())?;
        st.serialize_field("pmse", &self.pmse)?;
        st.serialize_field("mc_se", &self.mc_se)?;
        st.serialize_field("relative", &self.relative)?;
        st.serialize_field("selection_rate", &self.selection_rate)?;
        st.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimDesign {
    /// 2⁴ with six replicates (96 runs).
    Replicated,
    /// 2⁴ with one run per point.
    Unreplicated,
}

impl SimDesign {
    pub fn replicates(self) -> usize {
        match self {
            SimDesign::Replicated => 6,
            SimDesign::Unreplicated => 1,
        }
    }

    /// The competing methods for this design.
    pub fn methods(self) -> Vec<SimMethod> {
        use SimMethod::*;
        match self {
            SimDesign::Replicated => vec![Ier, Eer, Aic, GuideConstant, GuideSimple, GuideStepwise],
            SimDesign::Unreplicated => vec![LenthIer, LenthEer, GuideConstant, GuideSimple, GuideStepwise],
        }
    }
}

/// Significance levels and tree settings shared by all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub ier_alpha: f64,
    pub eer_alpha: f64,
    pub folds: usize,
    pub bootstrap_reps: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            ier_alpha: 0.05,
            eer_alpha: 0.10,
            folds: 10,
            bootstrap_reps: 50,
        }
    }
}

/// Fits `method` to `dataset` and returns its mean estimates at every
/// design point.
pub fn fit_predict(method: SimMethod, dataset: &Dataset, settings: &SimSettings, seed: u64) -> Result<Vec<f64>> {
    let k = dataset.factors().len();
    let points = enumerate_design(k)?;
    let poly = match method {
        SimMethod::Saturated => {
            let table = estimate_effects(dataset)?;
            table.restricted(&table.terms)
        }
        SimMethod::InterceptOnly => {
            let y = dataset.responses();
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            return Ok(vec![mean; points.len()]);
        }
        SimMethod::Ier => select_ier(&estimate_effects(dataset)?, settings.ier_alpha)?.fitted,
        SimMethod::Eer => select_eer(&estimate_effects(dataset)?, settings.eer_alpha)?.fitted,
        SimMethod::LenthIer => select_lenth(&estimate_effects(dataset)?, LenthMode::Ier, settings.ier_alpha)?.fitted,
        SimMethod::LenthEer => select_lenth(&estimate_effects(dataset)?, LenthMode::Eer, settings.eer_alpha)?.fitted,
        SimMethod::Aic => stepwise_aic(dataset)?.fitted,
        SimMethod::GuideConstant | SimMethod::GuideSimple | SimMethod::GuideStepwise => {
            let kind = match method {
                SimMethod::GuideConstant => NodeModelKind::Constant,
                SimMethod::GuideSimple => NodeModelKind::BestSimple,
                _ => NodeModelKind::Stepwise,
            };
            let mut config = TreeConfig::new(kind).with_seed(seed);
            config.bootstrap_reps = settings.bootstrap_reps;
            let tree = cv_select(dataset, &config, settings.folds, derive_seed(&[seed, 1]))?.tree;
            return points.iter().map(|p| predict(&tree, p)).collect();
        }
    };
    Ok(points.iter().map(|p| poly.eval_point(p)).collect())
}

/// Pairwise summation over a fixed order, so the result does not depend on
/// how work was scheduled.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// PMSE summary of one method under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct PmseRow {
    pub method: SimMethod,
    pub model: SimModelKind,
    /// Mean over trials of Σᵢ (μ̂ᵢ − μᵢ)².
    pub pmse: f64,
    /// Monte Carlo standard error of `pmse`.
    pub mc_se: f64,
    /// `pmse` over the mean PMSE of the methods compared with it.
    pub relative: f64,
    /// Fraction of trials whose fitted means are not constant.
    pub selection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmseReport {
    pub design: SimDesign,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<PmseRow>,
}

impl PmseReport {
    pub fn row(&self, method: SimMethod, model: SimModelKind) -> Option<&PmseRow> {
        self.rows.iter().find(|r| r.method == method && r.model == model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["design", "model", "method", "trials", "pmse", "mc_se", "relative", "selection_rate"])?;
        let design = match self.design {
            SimDesign::Replicated => "replicated",
            SimDesign::Unreplicated => "unreplicated",
        };
        for r in &self.rows {
            w.write_record([
                design.to_string(),
                r.model.name().to_string(),
                r.method.name().to_string(),
                self.trials.to_string(),
                r.pmse.to_string(),
                r.mc_se.to_string(),
                r.relative.to_string(),
                r.selection_rate.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Divides each row's PMSE by the mean PMSE of the rows given (one model).
pub fn relative_pmse(rows: &mut [PmseRow]) -> Result<()> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput("relative PMSE needs at least two methods".into()));
    }
    let mean = rows.iter().map(|r| r.pmse).sum::<f64>() / rows.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::Degenerate("mean PMSE is zero".into()));
    }
    for r in rows.iter_mut() {
        r.relative = r.pmse / mean;
    }
    Ok(())
}

/// Runs `f` on a pool capped by `DOETREE_THREADS` when set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

fn model_seed(seed: u64, model: SimModelKind) -> u64 {
    derive_seed(&[seed, model as u64 + 1])
}

/// Squared-error sums for one trial, one per method. Every method sees the
/// same true model and data.
fn trial_errors(
    methods: &[SimMethod],
    model: &SimModel,
    replicates: usize,
    settings: &SimSettings,
    seed: u64,
    trial: u64,
) -> Result<Vec<(f64, bool)>> {
    let truth = draw_true_model(model, &mut stream_rng(seed, domain::SIM_TRUTH, trial))?;
    let y = truth.sample(replicates, &mut stream_rng(seed, domain::SIM_NOISE, trial));
    let names: Vec<String> = (1..=model.k).map(|i| format!("x{i}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let dataset = Dataset::two_level_grid(&names, replicates, y)?;
    let method_seed = derive_seed(&[seed, domain::SIM_METHOD, trial]);
    methods
        .iter()
        .map(|&m| {
            let fit = fit_predict(m, &dataset, settings, method_seed)?;
            let sse = fit.iter().zip(&truth.mu).map(|(a, b)| (a - b).powi(2)).sum();
            let lo = fit.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = fit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((sse, hi - lo > 1e-9 * (1.0 + hi.abs())))
        })
        .collect()
}

/// PMSE of each method under each model. Trials run in parallel; results
/// are reduced in trial order, so output is independent of thread count.
pub fn run_study(
    methods: &[SimMethod],
    models: &[SimModelKind],
    design: SimDesign,
    trials: usize,
    seed: u64,
    settings: &SimSettings,
) -> Result<PmseReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    if design == SimDesign::Unreplicated {
        if let Some(m) = methods.iter().find(|m| m.needs_replicates()) {
            return Err(Error::Config(format!("{} needs a replicated design", m.name())));
        }
    }
    let replicates = design.replicates();
    let mut rows = Vec::new();
    for &kind in models {
        let model = SimModel::new(kind);
        let mseed = model_seed(seed, kind);
        let per_trial: Vec<Vec<(f64, bool)>> = with_thread_cap(|| {
            (0..trials as u64)
                .into_par_iter()
                .map(|t| trial_errors(methods, &model, replicates, settings, mseed, t))
                .collect::<Result<Vec<_>>>()
        })??;
        let mut model_rows: Vec<PmseRow> = methods
            .iter()
            .enumerate()
            .map(|(j, &method)| {
                let sse: Vec<f64> = per_trial.iter().map(|t| t[j].0).collect();
                let n = trials as f64;
                let pmse = pairwise_sum(&sse) / n;
                let dev: Vec<f64> = sse.iter().map(|s| (s - pmse).powi(2)).collect();
                let var = if trials > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
                PmseRow {
                    method,
                    model: kind,
                    pmse,
                    mc_se: (var / n).sqrt(),
                    relative: f64::NAN,
                    selection_rate: per_trial.iter().filter(|t| t[j].1).count() as f64 / n,
                }
            })
            .collect();
        if model_rows.len() >= 2 {
            relative_pmse(&mut model_rows)?;
        } else {
            model_rows[0].relative = 1.0;
        }
        rows.extend(model_rows);
    }
    Ok(PmseReport {
        design,
        trials,
        seed,
        rows,
    })
}

/// PMSE of a single method under a single model.
pub fn run_pmse(method: SimMethod, kind: SimModelKind, design: SimDesign, trials: usize, seed: u64) -> Result<PmseRow> {
    let report = run_study(&[method], &[kind], design, trials, seed, &SimSettings::default())?;
    Ok(report.rows.into_iter().next().expect("one row"))
}
