//! Model fitting and comparison for complete factorial experiments.
//!
//! Classical effect selection (individual and experimentwise t intervals,
//! hierarchical stepwise AIC, Lenth's method) sits next to GUIDE-style
//! piecewise linear regression trees with Gaussian, Poisson, and logistic
//! node models. A seeded simulation harness compares the two families by
//! prediction mean squared error.

pub mod classic;
pub mod critical;
pub mod datasets;
pub mod design;
pub mod distributions;
pub mod error;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sim;
pub mod tree;

pub use classic::{
    estimate_effects, half_normal, lenth_pse, select_eer, select_ier, select_lenth, stepwise_aic,
    EffectTable, MethodTag, SelectedModel,
};
pub use critical::LenthMode;
pub use datasets::NamedDataset;
pub use design::{
    dummy_matrix, effect_matrix, enumerate_design, Dataset, DesignPoint, Factor, FactorKind,
    Observation, Polynomial, ResponseKind, Term,
};
pub use error::{Error, Result};
pub use glm::{aic, anova_poisson, irls_fit, ols_fit, Family, FitResult};
pub use io::{emit_plot_data, fmt_g, parse_csv, parse_tree_json, render_tree, CsvSchema, PlotPayload, TreeFormat};
pub use sim::{run_pmse, run_study, PmseReport, SimDesign, SimMethod, SimModelKind};
pub use tree::{cv_select, grow_tree, predict, prune_sequence, to_polynomial, NodeModelKind, Tree, TreeConfig};
