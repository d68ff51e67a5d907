//! Monte Carlo critical values for simultaneous effect tests.
//!
//! Draws are split into fixed-size blocks, each with its own random
//! substream, so the result is identical for any worker count. Values are
//! cached per (statistic, K, df, α, draws, seed).

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::classic::lenth_pse;
use crate::distributions::t_quantile;
use crate::rng::{domain, stream_rng};

pub const DEFAULT_DRAWS: usize = 200_000;
pub const DEFAULT_SEED: u64 = 20_020_829;
const BLOCK: usize = 10_000;

/// Which side of Lenth's method a critical value serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LenthMode {
    /// Marginal quantile of |θ̂|/PSE.
    Ier,
    /// Quantile of max |θ̂|/PSE over all K effects.
    Eer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Smm { k: usize, dof: usize, alpha: u64, draws: usize, seed: u64 },
    Lenth { mode: LenthMode, k: usize, alpha: u64, draws: usize, seed: u64 },
}

fn cache() -> &'static Mutex<HashMap<Key, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cached(key: Key, compute: impl FnOnce() -> f64) -> f64 {
    if let Some(&v) = cache().lock().expect("cache lock").get(&key) {
        return v;
    }
    let v = compute();
    cache().lock().expect("cache lock").insert(key, v);
    v
}

/// Empirical upper-α quantile.
fn upper_quantile(mut values: Vec<f64>, alpha: f64) -> f64 {
    let n = values.len();
    let rank = (((1.0 - alpha) * n as f64).ceil() as usize).clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(rank, f64::total_cmp);
    *v
}

fn blocks(draws: usize) -> Vec<(u64, usize)> {
    (0..draws.div_ceil(BLOCK))
        .map(|b| (b as u64, BLOCK.min(draws - b * BLOCK)))
        .collect()
}

/// Studentized maximum modulus critical value m(α; K, df): the upper-α
/// point of max |Zᵢ| / √(χ²_df / df) over K independent normals.
pub fn smm_critical(k: usize, dof: usize, alpha: f64) -> f64 {
    smm_critical_with(k, dof, alpha, DEFAULT_DRAWS, DEFAULT_SEED)
}

pub fn smm_critical_with(k: usize, dof: usize, alpha: f64, draws: usize, seed: u64) -> f64 {
    assert!(k >= 1 && dof >= 1 && draws >= 1, "invalid critical value request");
    if k == 1 {
        return t_quantile(1.0 - alpha / 2.0, dof as f64);
    }
    if alpha >= 1.0 {
        return 0.0;
    }
    let key = Key::Smm {
        k,
        dof,
        alpha: alpha.to_bits(),
        draws,
        seed,
    };
    cached(key, || {
        let chi = ChiSquared::new(dof as f64).expect("positive df");
        let values: Vec<f64> = blocks(draws)
            .into_par_iter()
            .flat_map_iter(|(b, size)| {
                let mut rng = stream_rng(seed, domain::SMM_CRITICAL, b);
                (0..size)
                    .map(|_| {
                        let s = (chi.sample(&mut rng) / dof as f64).sqrt();
                        let m = (0..k)
                            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
                            .fold(0.0, f64::max);
                        m / s
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        upper_quantile(values, alpha)
    })
}

/// Critical value for |θ̂|/PSE with K null effects.
pub fn lenth_critical(mode: LenthMode, k: usize, alpha: f64) -> f64 {
    lenth_critical_with(mode, k, alpha, DEFAULT_DRAWS, DEFAULT_SEED)
}

pub fn lenth_critical_with(mode: LenthMode, k: usize, alpha: f64, draws: usize, seed: u64) -> f64 {
    assert!(k >= 3 && draws >= 1, "Lenth critical values need K >= 3");
    if alpha >= 1.0 {
        return 0.0;
    }
    let key = Key::Lenth {
        mode,
        k,
        alpha: alpha.to_bits(),
        draws,
        seed,
    };
    cached(key, || {
        let values: Vec<f64> = blocks(draws)
            .into_par_iter()
            .flat_map_iter(|(b, size)| {
                let mut rng = stream_rng(seed, domain::LENTH_CRITICAL, b);
                let mut out = Vec::with_capacity(match mode {
                    LenthMode::Ier => size * k,
                    LenthMode::Eer => size,
                });
                let mut theta = vec![0.0; k];
                for _ in 0..size {
                    for t in theta.iter_mut() {
                        *t = rng.sample(StandardNormal);
                    }
                    let pse = lenth_pse(&theta);
                    match mode {
                        LenthMode::Ier => out.extend(theta.iter().map(|t| t.abs() / pse)),
                        LenthMode::Eer => {
                            out.push(theta.iter().map(|t| t.abs()).fold(0.0, f64::max) / pse)
                        }
                    }
                }
                out
            })
            .collect();
        upper_quantile(values, alpha)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::normal_cdf;
    use statrs::function::gamma::ln_gamma;

    /// P(max_K |T| ≤ c) = E_s[(2Φ(c·s) − 1)^K], s² ~ χ²_df/df, by Simpson's rule.
    fn smm_cdf(c: f64, k: usize, dof: usize) -> f64 {
        let nu = dof as f64;
        // density of s = √(χ²_ν/ν) is 2(ν/2)^{ν/2}/Γ(ν/2) · s^{ν−1} e^{−νs²/2}
        let log_norm = 2f64.ln() + (nu / 2.0) * (nu / 2.0).ln() - ln_gamma(nu / 2.0);
        let dens = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            (log_norm + (nu - 1.0) * s.ln() - nu * s * s / 2.0).exp()
        };
        let (a, b, m) = (0.0, 4.0, 4000);
        let h = (b - a) / m as f64;
        let f = |s: f64| dens(s) * (2.0 * normal_cdf(c * s) - 1.0).powi(k as i32);
        let mut acc = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn quadrature_density_integrates_to_one() {
        // c → ∞ gives the total mass of s
        assert!((smm_cdf(1e6, 1, 80) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn smm_matches_quadrature() {
        let c = smm_critical_with(15, 80, 0.1, 100_000, 5);
        let p = smm_cdf(c, 15, 80);
        // 100k draws: SE of the coverage ≈ √(0.09/1e5) ≈ 0.00095
        assert!((p - 0.9).abs() < 0.004, "coverage {p} at c = {c}");
    }

    #[test]
    fn smm_single_effect_is_t() {
        assert_eq!(smm_critical(1, 80, 0.05), t_quantile(0.975, 80.0));
    }

    #[test]
    fn smm_dominates_individual() {
        assert!(smm_critical_with(15, 80, 0.05, 20_000, 1) > t_quantile(0.975, 80.0));
    }

    #[test]
    fn lenth_eer_above_ier() {
        let ier = lenth_critical_with(LenthMode::Ier, 15, 0.05, 20_000, 2);
        let eer = lenth_critical_with(LenthMode::Eer, 15, 0.05, 20_000, 2);
        assert!(eer > ier);
        // known K = 15 values: about 2.16 and 4.2
        assert!((ier - 2.16).abs() < 0.08, "{ier}");
        assert!((eer - 4.24).abs() < 0.25, "{eer}");
    }

    #[test]
    fn reproducible_and_cached() {
        let a = smm_critical_with(7, 10, 0.05, 30_000, 9);
        let b = smm_critical_with(7, 10, 0.05, 30_000, 9);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn upper_quantile_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(upper_quantile(v, 0.05), 95.0);
    }
}
