//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topoprior::model::{Gradients, TinyNet};
use topoprior::{BinaryMask, ProbabilityGrid};

/// A loss returning its value and its gradient with respect to `S`.
pub type LossFn = fn(&ProbabilityGrid, &BinaryMask) -> topoprior::Result<(f64, Vec<f64>)>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grid with values drawn from `{0.0, 0.1, ..., 1.0}`.
pub fn decile_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ProbabilityGrid {
    let values = (0..h * w).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect();
    ProbabilityGrid::new(h, w, values).unwrap()
}

pub fn uniform_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ProbabilityGrid {
    ProbabilityGrid::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::new(h, w, (0..h * w).map(|_| rng.random_bool(density)).collect()).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 { 0.0 } else { norm(&diff) / scale }
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_differences(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub struct NetworkCheck {
    pub relative_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Compares backprop against central differences of `L = sum(R * S)` for
/// every parameter. Parameters whose perturbation flips any ReLU are
/// skipped, since the loss is not differentiable across the kink.
pub fn check_network_gradient(net: &TinyNet, input: &[f64], h: usize, w: usize, upstream: &[f64], step: f64) -> NetworkCheck {
    let tape = net.forward_raw(input, h, w).unwrap();
    let analytic: Gradients = net.backward(&tape, upstream).unwrap();
    let analytic = analytic.flatten();
    let pattern = tape.relu_pattern();
    let loss_and_pattern = |net: &TinyNet| {
        let t = net.forward_raw(input, h, w).unwrap();
        let l: f64 = t.output().iter().zip(upstream).map(|(s, r)| s * r).sum();
        (l, t.relu_pattern())
    };
    let mut probe = net.clone();
    let mut numeric = Vec::new();
    let mut kept = Vec::new();
    let mut skipped = 0;
    let mut flat_index = 0;
    let n_tensors = probe.tensors().len();
    for t in 0..n_tensors {
        let len = probe.tensors()[t].len();
        for i in 0..len {
            let original = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = original + step;
            let (up, p_up) = loss_and_pattern(&probe);
            probe.tensors_mut()[t][i] = original - step;
            let (down, p_down) = loss_and_pattern(&probe);
            probe.tensors_mut()[t][i] = original;
            if p_up != pattern || p_down != pattern {
                skipped += 1;
            } else {
                numeric.push((up - down) / (2.0 * step));
                kept.push(analytic[flat_index]);
            }
            flat_index += 1;
        }
    }
    NetworkCheck {
        relative_error: relative_error(&numeric, &kept),
        checked: kept.len(),
        skipped_kinks: skipped,
    }
}

/// Threshold/dimension pairs where the barcode and the brute-force oracle
/// disagree on the Betti number.
pub fn oracle_mismatches(grid: &ProbabilityGrid) -> Vec<(f64, usize, usize, usize)> {
    let barcode = topoprior::compute_barcode(&topoprior::build_complex(grid).unwrap()).unwrap();
    let mut out = Vec::new();
    for pt in topoprior::oracle::betti_curve(grid) {
        for (d, expected) in [(0, pt.beta0), (1, pt.beta1)] {
            let got = barcode.betti_at(pt.p, d);
            if got != expected {
                out.push((pt.p, d, got, expected));
            }
        }
    }
    out
}

/// Grid of the given shape from a flat list of decile indices.
pub fn grid_from_deciles(h: usize, w: usize, deciles: &[u8]) -> ProbabilityGrid {
    ProbabilityGrid::new(h, w, deciles.iter().map(|&d| f64::from(d) / 10.0).collect()).unwrap()
}
