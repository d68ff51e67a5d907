//! Thin wrappers over `statrs` for the handful of CDFs and quantiles the
//! selection rules need.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Upper quantile t_{df}(p) of Student's t.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if p <= 0.5 {
        return -t_quantile(1.0 - p, df);
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, df).expect("valid t df").inverse_cdf(p)
}

/// Two-sided tail probability P(|T| > |t|).
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    let d = StudentsT::new(0.0, 1.0, df).expect("valid t df");
    (2.0 * d.sf(t.abs())).min(1.0)
}

/// Two-sided normal tail probability.
pub fn z_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * std_normal().sf(z.abs())).min(1.0)
}

/// P(χ²_df > x).
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("valid chi-square df").sf(x)
}

pub fn chi2_quantile(p: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("valid chi-square df").inverse_cdf(p)
}

/// P(F_{d1,d2} > x).
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    FisherSnedecor::new(d1, d2).expect("valid F df").sf(x)
}
