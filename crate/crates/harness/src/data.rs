//! Synthetic regression data: inputs uniform on an interval, labels `sin` plus
//! Gaussian noise.

use nalgebra::{DMatrix, DVector};
use ntkgauss_core::{rng, Dataset};

use crate::config::{Layout, RunConfig, TestSpec};
use crate::error::{HarnessError, Result};

/// `n` inputs with iid `Uniform(lo, hi)` coordinates and labels
/// `sin(x₁) + noise_sd · ε`. For `n0 = 1`, `x₁` is the input itself.
pub fn gen_dataset(n0: usize, n: usize, interval: (f64, f64), noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || n0 == 0 {
        return Err(HarnessError::Argument(format!("dataset needs n >= 1 and n0 >= 1 (n={n}, n0={n0})")));
    }
    let (lo, hi) = interval;
    if !(lo < hi) {
        return Err(HarnessError::Argument(format!("empty interval [{lo}, {hi}]")));
    }
    if !(noise_sd >= 0.0) {
        return Err(HarnessError::Argument(format!("noise sd {noise_sd} must be non-negative")));
    }
    let x = DMatrix::from_vec(n0, n, rng::uniforms(seed, 0, "dataset_x", n0 * n, lo, hi));
    let eps = rng::standard_normals(seed, 0, "dataset_noise", n);
    let y = DVector::from_fn(n, |i, _| x[(0, i)].sin() + noise_sd * eps[i]);
    Ok(Dataset::new(x, y)?)
}

/// `count` equally spaced scalars from `lo` to `hi` inclusive; one point sits at `lo`.
pub fn grid(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| if i + 1 == count { hi } else { lo + step * i as f64 }).collect()
}

/// Test inputs as columns. A grid repeats the scalar grid along every coordinate.
pub fn test_points(spec: &TestSpec, n0: usize, seed: u64) -> DMatrix<f64> {
    match spec.layout {
        Layout::Grid => {
            let g = grid(spec.count, spec.lo, spec.hi);
            DMatrix::from_fn(n0, spec.count, |_, j| g[j])
        }
        Layout::Uniform => DMatrix::from_vec(
            n0,
            spec.count,
            rng::uniforms(seed, 0, "test_points", n0 * spec.count, spec.lo, spec.hi),
        ),
    }
}

pub fn dataset_for(cfg: &RunConfig) -> Result<Dataset> {
    gen_dataset(cfg.n0, cfg.dataset.n, (cfg.dataset.lo, cfg.dataset.hi), cfg.dataset.noise_sd, cfg.seed)
}

/// The single input the sweep probes.
pub fn sweep_point(cfg: &RunConfig) -> DMatrix<f64> {
    match &cfg.sweep_point {
        Some(p) => DMatrix::from_column_slice(cfg.n0, 1, p),
        None => DMatrix::from_vec(
            cfg.n0,
            1,
            rng::uniforms(cfg.seed, 0, "sweep_point", cfg.n0, cfg.test_points.lo, cfg.test_points.hi),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_labels_are_sine() {
        let ds = gen_dataset(1, 5, (-10.0, 10.0), 0.0, 4).unwrap();
        for i in 0..5 {
            assert_eq!(ds.y[i], ds.x[(0, i)].sin());
            assert!((-10.0..10.0).contains(&ds.x[(0, i)]));
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_dataset(2, 7, (-1.0, 3.0), 0.3, 11).unwrap();
        let b = gen_dataset(2, 7, (-1.0, 3.0), 0.3, 11).unwrap();
        let c = gen_dataset(2, 7, (-1.0, 3.0), 0.3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(gen_dataset(1, 0, (0.0, 1.0), 0.0, 0).is_err());
        assert!(gen_dataset(1, 3, (1.0, 1.0), 0.0, 0).is_err());
        assert!(gen_dataset(1, 3, (0.0, 1.0), -0.1, 0).is_err());
    }

    #[test]
    fn two_hundred_point_grid() {
        let g = grid(200, -10.0, 10.0);
        assert_eq!(g.len(), 200);
        assert_eq!((g[0], g[199]), (-10.0, 10.0));
        let step = 20.0 / 199.0;
        for w in g.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }
}
