//! Embedded example datasets.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::design::{enumerate_design, Dataset, DesignPoint, Factor, Observation, ResponseKind, Term};
use crate::error::{Error, Result};
use crate::rng::{domain, stream_rng};

/// A dataset with a short note on where its values come from.
#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub id: &'static str,
    pub dataset: Dataset,
    pub provenance: String,
}

/// Catalogue entry for listing.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetInfo {
    pub id: &'static str,
    pub rows: usize,
    pub seeded: bool,
    pub description: &'static str,
}

pub fn catalogue() -> Vec<DatasetInfo> {
    vec![
        DatasetInfo {
            id: "seed_germination",
            rows: 18,
            seeded: false,
            description: "seeds germinating out of 100; 2 x 3 x 3 (Collett)",
        },
        DatasetInfo {
            id: "wafer",
            rows: 96,
            seeded: false,
            description: "replicated 2^4 epitaxial layer experiment rebuilt from its saturated fit",
        },
        DatasetInfo {
            id: "reactor_effects",
            rows: 32,
            seeded: false,
            description: "unreplicated 2^5 with the reactor's active effects and small inert ones",
        },
        DatasetInfo {
            id: "solder",
            rows: 720,
            seeded: true,
            description: "synthetic Poisson counts on the 3 x 2 x 4 x 10 x 3 solder layout",
        },
    ]
}

/// Looks up an embedded dataset by id. `seed` is used only by generated data.
pub fn by_id(id: &str, seed: u64) -> Result<NamedDataset> {
    match id {
        "seed_germination" => Ok(seed_germination()),
        "wafer" => Ok(wafer_reconstruction()),
        "reactor_effects" => Ok(reactor_effects()),
        "solder" => synthetic_solder(seed),
        _ => Err(Error::InvalidInput(format!(
            "unknown dataset '{id}'; known: {}",
            catalogue().iter().map(|d| d.id).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Germinated seeds out of 100 by germination temperature, moisture, and
/// storage temperature. Storage temperature is ordinal with its °C values
/// as scores; moisture uses `high` as the set-to-zero baseline.
pub fn seed_germination() -> NamedDataset {
    const COUNTS: [[[u32; 3]; 3]; 2] = [
        [[98, 96, 62], [94, 79, 3], [92, 41, 1]],
        [[94, 93, 65], [94, 71, 2], [91, 30, 1]],
    ];
    let germ = Factor::two_level("germ", "11", "21").expect("static factor");
    let moist = Factor::nominal("moist", &["low", "med", "high"])
        .and_then(|f| f.with_baseline("high"))
        .expect("static factor");
    let store = Factor::ordinal("store", &["21", "42", "62"], &[21.0, 42.0, 62.0]).expect("static factor");
    let mut rows = Vec::with_capacity(18);
    for (g, by_moist) in COUNTS.iter().enumerate() {
        for (m, by_store) in by_moist.iter().enumerate() {
            for (s, &y) in by_store.iter().enumerate() {
                rows.push(Observation {
                    point: DesignPoint(vec![g, m, s]),
                    y: f64::from(y),
                    n: Some(100),
                });
            }
        }
    }
    NamedDataset {
        id: "seed_germination",
        dataset: Dataset::new(vec![germ, moist, store], rows, ResponseKind::Proportion).expect("static data"),
        provenance: "Collett, Modelling Binary Data, p. 127; counts transcribed cell for cell".into(),
    }
}

/// Saturated ±1 coefficients of the wafer experiment, in `Term::all(4)` order.
pub const WAFER_COEFFICIENTS: [f64; 16] = [
    14.161250, -0.038729, 0.086271, -0.038708, 0.245021, 0.003708, -0.046229, -0.025000, 0.028771,
    -0.015042, -0.172521, 0.048750, 0.012521, -0.015000, 0.054958, 0.009979,
];
/// Common standard error of every wafer coefficient.
pub const WAFER_SE: f64 = 0.049744;

/// Replicated 2⁴ wafer experiment rebuilt from its saturated fit.
///
/// Each cell holds its fitted mean plus the zero-sum pattern
/// c·(−5, −3, −1, 1, 3, 5), with c chosen so the pooled residual variance
/// makes every coefficient's standard error equal [`WAFER_SE`]. Any such
/// pattern leaves the saturated fit unchanged; the raw observations are
/// not public, so residual signs (and hence trees) can differ from the
/// original study.
pub fn wafer_reconstruction() -> NamedDataset {
    let terms = Term::all(4);
    let points = enumerate_design(4).expect("k = 4");
    let n = 96.0f64;
    let s = WAFER_SE * n.sqrt();
    // Five residual df per cell: Σ r² = 5 s² = 70 c².
    let c = s * (5.0f64 / 70.0).sqrt();
    let mut y = Vec::with_capacity(96);
    for p in &points {
        let codes = p.codes();
        let mean: f64 = terms.iter().zip(WAFER_COEFFICIENTS).map(|(t, b)| b * t.eval(&codes)).sum();
        for r in [-5.0, -3.0, -1.0, 1.0, 3.0, 5.0] {
            y.push(mean + c * r);
        }
    }
    NamedDataset {
        id: "wafer",
        dataset: Dataset::two_level_grid(&["A", "B", "C", "D"], 6, y).expect("static data"),
        provenance: "Wu and Hamada, Experiments, p. 97 (2^4 x 6 epitaxial layer thickness); \
                     rebuilt from the published saturated coefficients and standard error"
            .into(),
    }
}

/// Effect estimates for the unreplicated 2⁵ reactor example, in
/// `Term::all(5)` order after the intercept.
///
/// The five active effects (B, D, E, BD, DE) carry the published fitted
/// coefficients. The raw data are not available, so the 26 inert effects
/// get magnitudes 0.10, 0.16, ..., 1.60 with alternating signs.
pub fn reactor_effect_estimates() -> Vec<(Term, f64)> {
    let active = [
        (Term::new(&[1]), 9.75),
        (Term::new(&[3]), 5.375),
        (Term::new(&[4]), -3.125),
        (Term::new(&[1, 3]), 6.625),
        (Term::new(&[3, 4]), -5.5),
    ];
    let mut inert = 0usize;
    Term::all(5)
        .into_iter()
        .skip(1)
        .map(|t| match active.iter().find(|(a, _)| *a == t) {
            Some(&(_, v)) => (t, v),
            None => {
                let sign = if inert % 2 == 0 { 1.0 } else { -1.0 };
                let v = sign * (0.10 + 0.06 * inert as f64);
                inert += 1;
                (t, v)
            }
        })
        .collect()
}

pub const REACTOR_INTERCEPT: f64 = 65.5;

/// Unreplicated 2⁵ whose saturated fit returns exactly
/// [`reactor_effect_estimates`] with intercept 65.5.
pub fn reactor_effects() -> NamedDataset {
    let effects = reactor_effect_estimates();
    let y = enumerate_design(5)
        .expect("k = 5")
        .iter()
        .map(|p| {
            let codes = p.codes();
            REACTOR_INTERCEPT + effects.iter().map(|(t, b)| b * t.eval(&codes)).sum::<f64>()
        })
        .collect();
    NamedDataset {
        id: "reactor_effects",
        dataset: Dataset::two_level_grid(&["A", "B", "C", "D", "E"], 1, y).expect("static data"),
        provenance: "Box, Hunter and Hunter reactor 2^5: published active effects; inert effects synthetic".into(),
    }
}

/// Loglinear generator for the synthetic solder layout. Effects are on the
/// log scale relative to each factor's first level.
#[derive(Debug, Clone, PartialEq)]
pub struct SolderGenerator {
    pub intercept: f64,
    pub opening: [f64; 3],
    pub solder: [f64; 2],
    pub mask: [f64; 4],
    pub pad: [f64; 10],
    pub panel: [f64; 3],
    /// Opening × Solder.
    pub opening_solder: [[f64; 2]; 3],
    /// Opening × Mask.
    pub opening_mask: [[f64; 4]; 3],
    /// Solder × Mask.
    pub solder_mask: [[f64; 4]; 2],
}

impl SolderGenerator {
    /// Every coefficient zero: counts are Poisson(1).
    pub fn null() -> Self {
        SolderGenerator {
            intercept: 0.0,
            opening: [0.0; 3],
            solder: [0.0; 2],
            mask: [0.0; 4],
            pad: [0.0; 10],
            panel: [0.0; 3],
            opening_solder: [[0.0; 2]; 3],
            opening_mask: [[0.0; 4]; 3],
            solder_mask: [[0.0; 4]; 2],
        }
    }

    /// Default shape: large openings and thick solder give few skips, the
    /// B masks more, with moderate pairwise interactions.
    pub fn standard() -> Self {
        SolderGenerator {
            intercept: 0.3,
            opening: [0.0, 0.4, 1.9],
            solder: [0.0, 0.9],
            mask: [0.0, 0.35, 1.2, 1.7],
            pad: [0.0, -0.2, -0.35, 0.4, 0.1, -0.05, 0.25, 0.3, -0.4, -0.15],
            panel: [0.0, 0.15, 0.1],
            opening_solder: [[0.0, 0.0], [0.0, 0.15], [0.0, -0.3]],
            opening_mask: [[0.0; 4], [0.0, 0.1, 0.2, 0.1], [0.0, -0.25, -0.5, -0.6]],
            solder_mask: [[0.0; 4], [0.0, 0.05, -0.2, -0.3]],
        }
    }

    /// log μ at level indices (opening, solder, mask, pad, panel).
    pub fn log_mean(&self, l: &[usize]) -> f64 {
        let (o, s, m, p, q) = (l[0], l[1], l[2], l[3], l[4]);
        self.intercept
            + self.opening[o]
            + self.solder[s]
            + self.mask[m]
            + self.pad[p]
            + self.panel[q]
            + self.opening_solder[o][s]
            + self.opening_mask[o][m]
            + self.solder_mask[s][m]
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        let factors = solder_factors();
        let mut rng = stream_rng(seed, domain::DATASET, 0);
        let mut rows = Vec::with_capacity(720);
        for o in 0..3 {
            for s in 0..2 {
                for m in 0..4 {
                    for p in 0..10 {
                        for q in 0..3 {
                            let point = vec![o, s, m, p, q];
                            let y = poisson_draw(self.log_mean(&point).exp(), &mut rng);
                            rows.push(Observation {
                                point: DesignPoint(point),
                                y,
                                n: None,
                            });
                        }
                    }
                }
            }
        }
        Dataset::new(factors, rows, ResponseKind::Count)
    }
}

fn poisson_draw<R: Rng>(mean: f64, rng: &mut R) -> f64 {
    Poisson::new(mean).expect("positive mean").sample(rng).round()
}

fn solder_factors() -> Vec<Factor> {
    let nominal = |name: &str, levels: &[&str]| Factor::nominal(name, levels).expect("static factor");
    vec![
        nominal("Opening", &["L", "M", "S"]),
        nominal("Solder", &["Thick", "Thin"]),
        nominal("Mask", &["A1.5", "A3", "B3", "B6"]),
        nominal("Pad", &["D4", "D6", "D7", "L4", "L6", "L7", "L8", "L9", "W4", "W9"]),
        nominal("Panel", &["1", "2", "3"]),
    ]
}

/// Complete 720-run solder layout with counts from
/// [`SolderGenerator::standard`]. Levels are listed alphabetically so the
/// first level is the set-to-zero baseline.
pub fn synthetic_solder(seed: u64) -> Result<NamedDataset> {
    Ok(NamedDataset {
        id: "solder",
        dataset: SolderGenerator::standard().generate(seed)?,
        provenance: format!(
            "synthetic: Poisson loglinear counts on the Chambers-Hastie solder layout (seed {seed}); \
             not the published data"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_cells() {
        let d = seed_germination().dataset;
        assert_eq!(d.len(), 18);
        let find = |g: usize, m: usize, s: usize| {
            d.rows().iter().find(|r| r.point.0 == [g, m, s]).unwrap().y
        };
        assert_eq!(find(0, 0, 0), 98.0);
        assert_eq!(find(1, 2, 2), 1.0);
        assert_eq!(d.factor(1).baseline(), 2);
    }

    #[test]
    fn wafer_residuals_sum_to_zero() {
        let d = wafer_reconstruction().dataset;
        assert_eq!(d.len(), 96);
        assert_eq!(d.replicates(), Some(6));
        let y = d.responses();
        for cell in y.chunks(6) {
            let mean = cell.iter().sum::<f64>() / 6.0;
            let resid: f64 = cell.iter().map(|v| v - mean).sum();
            assert!(resid.abs() < 1e-12);
        }
    }

    #[test]
    fn reactor_effects_layout() {
        let e = reactor_effect_estimates();
        assert_eq!(e.len(), 31);
        let inert: Vec<f64> = e.iter().map(|x| x.1.abs()).filter(|v| *v < 2.0).collect();
        assert_eq!(inert.len(), 26);
        assert!((inert.iter().cloned().fold(0.0, f64::max) - 1.6).abs() < 1e-12);
        assert_eq!(reactor_effects().dataset.len(), 32);
    }

    #[test]
    fn solder_shape_and_null_mean() {
        let d = synthetic_solder(3).unwrap().dataset;
        assert_eq!(d.len(), 720);
        assert!(d.responses().iter().all(|&y| y >= 0.0 && y.fract() == 0.0));
        let null = SolderGenerator::null().generate(11).unwrap();
        let y = null.responses();
        let mean = y.iter().sum::<f64>() / 720.0;
        assert!((mean - 1.0).abs() < 3.0 / 720f64.sqrt(), "{mean}");
    }

    #[test]
    fn solder_reproducible() {
        assert_eq!(synthetic_solder(9).unwrap().dataset, synthetic_solder(9).unwrap().dataset);
        assert_ne!(synthetic_solder(9).unwrap().dataset, synthetic_solder(10).unwrap().dataset);
    }

    #[test]
    fn lookup() {
        for info in catalogue() {
            let d = by_id(info.id, 1).unwrap();
            assert_eq!(d.dataset.len(), info.rows);
            assert!(!d.provenance.is_empty());
        }
        assert!(by_id("nope", 0).is_err());
    }
}
