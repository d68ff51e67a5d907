//! Null behaviour of the split-selection p-values.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use doetree::design::Dataset;
use doetree::rng::stream_rng;
use doetree::tree::{examine_node, NodeModelKind, TreeConfig};

const SIMS: u64 = 2000;

fn ks(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64 / (k - i) as f64).ln()).sum()
}

/// Randomized PIT of the 2×2 sign-by-level table under its exact
/// permutation law: uniform on (0,1) when signs are exchangeable.
fn randomized_pit(levels: &[bool], nonneg: &[bool], u: f64) -> f64 {
    let n = levels.len();
    let r = levels.iter().filter(|&&l| l).count();
    let m = nonneg.iter().filter(|&&s| s).count();
    let a = levels.iter().zip(nonneg).filter(|(&l, &s)| l && s).count();
    let stat = |a: usize| {
        let d = (a * n) as f64 - (r * m) as f64;
        d * d / ((r * (n - r) * m * (n - m)) as f64 * n as f64)
    };
    let s = stat(a);
    let (mut above, mut at) = (0.0, 0.0);
    for x in m.saturating_sub(n - r)..=r.min(m) {
        let w = (ln_choose(r, x) + ln_choose(n - r, m - x) - ln_choose(n, m)).exp();
        let t = stat(x);
        if (t - s).abs() <= 1e-9 * (1.0 + s) {
            at += w;
        } else if t > s {
            above += w;
        }
    }
    above + u * at
}

struct NullRun {
    raw: Vec<f64>,
    calibrated: Vec<f64>,
    pit: Vec<f64>,
}

fn null_run(kind: NodeModelKind, k: usize, reps: usize, sims: u64) -> NullRun {
    let names = ["A", "B", "C", "D"];
    let n = reps << k;
    let rows: Vec<usize> = (0..n).collect();
    let mut out = NullRun { raw: Vec::new(), calibrated: Vec::new(), pit: Vec::new() };
    for trial in 0..sims {
        let mut rng = stream_rng(11, 9, trial);
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ds = Dataset::two_level_grid(&names[..k], reps, y.clone()).unwrap();
        let d = examine_node(&ds, &rows, &TreeConfig::new(kind).with_seed(trial), 1).unwrap();
        let t = d.curvature[0].as_ref().unwrap();
        out.raw.push(t.raw_p);
        out.calibrated.push(t.p);
        if kind == NodeModelKind::Constant {
            let mean = y.iter().sum::<f64>() / n as f64;
            let levels: Vec<bool> = ds.rows().iter().map(|o| o.point.levels()[0] == 0).collect();
            let signs: Vec<bool> = y.iter().map(|&v| v >= mean).collect();
            out.pit.push(randomized_pit(&levels, &signs, rng.random()));
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn curvature_pvalues_are_uniform_up_to_discreteness() {
    let crit = 1.628 / (SIMS as f64).sqrt();
    for reps in [1, 6] {
        let run = null_run(NodeModelKind::Constant, 4, reps, SIMS);
        assert!((mean(&run.raw) - 0.5).abs() < 0.03, "mean {}", mean(&run.raw));
        let d = ks(run.pit);
        assert!(d < crit, "randomized KS {d} at {reps} replicates");
    }
}

#[test]
fn calibration_removes_regressor_inflation() {
    let run = null_run(NodeModelKind::Multiple, 3, 8, 1000);
    // Least-squares residuals are orthogonal to a fitted regressor, which
    // pushes its raw p-values toward 1.
    assert!(mean(&run.raw) > 0.6, "raw mean {}", mean(&run.raw));
    assert!((mean(&run.calibrated) - 0.5).abs() < 0.03, "calibrated mean {}", mean(&run.calibrated));
    assert!(ks(run.calibrated) < ks(run.raw));
}
