//! The Gaussian process `G_t` that the trained network approaches at infinite width.
//!
//! With `Θ = k∞(X, X)`, `I = I_t(Θ)` and `K` the NNGP kernel:
//!
//! ```text
//! μ_t(x)     = k∞(x, X) I y
//! Σ_t(x, x') = K(x, x') − K(x, X) I k∞(X, x') − k∞(x, X) I K(X, x')
//!              + k∞(x, X) I K(X, X) I k∞(X, x')
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{check_pd, KernelKind, LimitKernel};
use crate::matops::{chol_jitter, sym_eig, EigDecomp, SymMatrix};
use crate::network::Dataset;
use crate::rng;
use crate::stats::normal_quantile;

/// Minimum eigenvalue the training Gram of `k∞` must exceed for `t > 0`.
pub const PD_TOL: f64 = 1e-10;

/// Moments of `G_t` on a set of test points.
#[derive(Debug, Clone)]
pub struct GpMoments {
    pub mean: DVector<f64>,
    pub cov: SymMatrix,
    pub time: f64,
    pub test_points: DMatrix<f64>,
    pub provenance: String,
}

/// Kernel blocks of a (training set, test set) pair, reusable across times.
#[derive(Debug, Clone)]
pub struct GpSystem {
    pub kinf_train: SymMatrix,
    pub k_train: DMatrix<f64>,
    pub kinf_cross: DMatrix<f64>,
    pub k_cross: DMatrix<f64>,
    pub k_test: SymMatrix,
    pub y: DVector<f64>,
    pub test_points: DMatrix<f64>,
    eig: EigDecomp,
    tag: String,
}

impl GpSystem {
    pub fn new(test: &DMatrix<f64>, ds: &Dataset, kernel: &LimitKernel) -> Result<Self> {
        if test.nrows() != ds.n0() {
            return Err(Error::InvalidShape(format!(
                "test points have dimension {}, training inputs {}",
                test.nrows(),
                ds.n0()
            )));
        }
        let (k_train, kinf_train) = kernel.cross_both(&ds.x, &ds.x)?;
        let kinf_train = SymMatrix::new(kinf_train)?;
        let (k_cross, kinf_cross) = kernel.cross_both(test, &ds.x)?;
        let k_test = kernel.gram(KernelKind::Nngp, test)?;
        let eig = sym_eig(&kinf_train)?;
        Ok(GpSystem {
            kinf_train,
            k_train,
            kinf_cross,
            k_cross,
            k_test,
            y: ds.y.clone(),
            test_points: test.clone(),
            eig,
            tag: kernel.tag(),
        })
    }

    pub fn lambda_min(&self) -> f64 {
        self.eig.min()
    }

    /// Moments at time `t`. Needs a positive definite `k∞(X, X)` unless `t = 0`.
    pub fn moments(&self, t: f64) -> Result<GpMoments> {
        let it = self.eig.i_t(t)?;
        if t > 0.0 {
            let pd = check_pd(&self.kinf_train, PD_TOL)?;
            if !pd.pd {
                return Err(Error::KernelDegenerate {
                    min_eig: pd.min_eig,
                    tol: PD_TOL,
                });
            }
        }
        let it = it.as_matrix();
        let a = &self.kinf_cross * it; // k∞(x, X) I
        let mean = &a * &self.y;
        let cross = &self.k_cross * it * self.kinf_cross.transpose();
        let quad = &a * &self.k_train * a.transpose();
        let cov = self.k_test.as_matrix() - &cross - cross.transpose() + quad;
        let cov = SymMatrix::new(cov)?;
        let scale = cov.as_matrix().diagonal().abs().sum().max(f64::MIN_POSITIVE);
        if let Some(v) = cov.as_matrix().diagonal().iter().find(|v| **v < -1e-10 * scale) {
            return Err(Error::NegativeVariance { value: *v });
        }
        Ok(GpMoments {
            mean,
            cov,
            time: t,
            test_points: self.test_points.clone(),
            provenance: self.tag.clone(),
        })
    }
}

/// Moments of `G_t` on the columns of `test`.
pub fn gp_moments(test: &DMatrix<f64>, ds: &Dataset, kernel: &LimitKernel, t: f64) -> Result<GpMoments> {
    GpSystem::new(test, ds, kernel)?.moments(t)
}

impl GpMoments {
    /// Covariance with round-off negative variances clamped to zero.
    fn clamped_cov(&self) -> SymMatrix {
        let mut c = self.cov.clone().into_inner();
        for i in 0..c.nrows() {
            if c[(i, i)] < 0.0 {
                c[(i, i)] = 0.0;
            }
        }
        SymMatrix::new(c).expect("clamping keeps a valid matrix")
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.as_matrix().diagonal().map(|v| v.max(0.0))
    }
}

/// `count` joint draws of `G_t` on the test points, one row per draw.
pub fn sample_gp(m: &GpMoments, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_gp_stream(m, count, seed, 0)
}

/// As [`sample_gp`], drawing from replica stream `stream`.
pub fn sample_gp_stream(m: &GpMoments, count: usize, seed: u64, stream: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let dim = m.mean.len();
    let chol = chol_jitter(&m.clamped_cov())?;
    let z = DMatrix::from_vec(dim, count, rng::standard_normals(seed, stream, "gp_samples", dim * count));
    let mut draws = &chol.factor * z;
    for mut col in draws.column_iter_mut() {
        col += &m.mean;
    }
    Ok(draws.transpose())
}

/// Pointwise central band `μ ± z σ` holding probability `level`.
pub fn gp_band(m: &GpMoments, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("band level {level} outside (0, 1)")));
    }
    let z = normal_quantile((1.0 + level) / 2.0);
    Ok(m.mean
        .iter()
        .zip(m.variances().iter())
        .map(|(mu, var)| {
            let half = z * var.sqrt();
            (mu - half, mu + half)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::kernels::DEFAULT_ORDER;

    fn kernel() -> LimitKernel {
        LimitKernel::new(Activation::Sigmoid, DEFAULT_ORDER).unwrap()
    }

    fn ds() -> Dataset {
        Dataset::from_scalars(&[-1.5, 0.4, 2.0], &[0.3, -0.2, 0.9]).unwrap()
    }

    fn grid() -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 5, &[-3.0, -1.5, 0.0, 1.0, 2.5])
    }

    #[test]
    fn time_zero_is_prior() {
        let m = gp_moments(&grid(), &ds(), &kernel(), 0.0).unwrap();
        assert!(m.mean.iter().all(|v| *v == 0.0));
        let k = kernel().gram(KernelKind::Nngp, &grid()).unwrap();
        assert_eq!(m.cov, k);
    }

    #[test]
    fn large_time_is_kernel_regression() {
        let sys = GpSystem::new(&grid(), &ds(), &kernel()).unwrap();
        let t = 1e6 / sys.lambda_min();
        let m = sys.moments(t).unwrap();
        let inv = sys.kinf_train.as_matrix().clone().try_inverse().unwrap();
        let expected = &sys.kinf_cross * inv * &sys.y;
        assert!((m.mean - expected).amax() < 1e-6);
    }

    #[test]
    fn scalar_instance_by_hand() {
        let kern = kernel();
        let d = Dataset::from_scalars(&[0.8], &[0.5]).unwrap();
        let x = DMatrix::from_element(1, 1, -0.6);
        let t = 1.3;
        let m = gp_moments(&x, &d, &kern, t).unwrap();
        let theta = kern.ntk(&[0.8], &[0.8]).unwrap();
        let k_tr = kern.nngp(&[0.8], &[0.8]).unwrap();
        let kinf_x = kern.ntk(&[-0.6], &[0.8]).unwrap();
        let k_x = kern.nngp(&[-0.6], &[0.8]).unwrap();
        let k_xx = kern.nngp(&[-0.6], &[-0.6]).unwrap();
        let i = (1.0 - (-theta * t).exp()) / theta;
        let mu = kinf_x * i * 0.5;
        let sigma = k_xx - 2.0 * k_x * i * kinf_x + kinf_x * i * k_tr * i * kinf_x;
        assert!((m.mean[0] - mu).abs() < 1e-12);
        assert!((m.cov.get(0, 0) - sigma).abs() < 1e-12);
    }

    #[test]
    fn degenerate_training_kernel_rejected() {
        let d = Dataset::from_scalars(&[0.5, 0.5], &[0.1, 0.2]).unwrap();
        let err = gp_moments(&grid(), &d, &kernel(), 1.0).unwrap_err();
        assert!(matches!(err, Error::KernelDegenerate { .. }));
        assert!(gp_moments(&grid(), &d, &kernel(), 0.0).is_ok());
    }

    #[test]
    fn covariance_psd_and_contracts_on_training_points() {
        let sys = GpSystem::new(&ds().x, &ds(), &kernel()).unwrap();
        let prior = sys.moments(0.0).unwrap();
        for t in [0.0, 0.1, 1.0, 10.0, 1e3] {
            let m = sys.moments(t).unwrap();
            let lam = crate::matops::min_eig(&m.cov).unwrap();
            assert!(lam >= -1e-8 * m.cov.trace().abs().max(1e-300));
            for i in 0..3 {
                assert!(m.cov.get(i, i) <= prior.cov.get(i, i) + 1e-10);
            }
        }
    }

    #[test]
    fn band_examples() {
        let mut m = gp_moments(&DMatrix::from_element(1, 1, 0.3), &ds(), &kernel(), 0.0).unwrap();
        m.cov = SymMatrix::identity(1);
        let b = gp_band(&m, 0.95).unwrap();
        assert!((b[0].0 + 1.95996).abs() < 1e-5 && (b[0].1 - 1.95996).abs() < 1e-5);
        m.mean[0] = 0.7;
        m.cov = SymMatrix::zeros(1);
        assert_eq!(gp_band(&m, 0.95).unwrap()[0], (0.7, 0.7));
        m.cov = SymMatrix::identity(1);
        let b = gp_band(&m, 0.5).unwrap()[0];
        assert!(((b.0 + b.1) / 2.0 - 0.7).abs() < 1e-15);
        assert!(gp_band(&m, 1.0).is_err());
        assert!(gp_band(&m, 0.0).is_err());
    }

    #[test]
    fn sampler_degenerate_cases() {
        let mut m = gp_moments(&grid(), &ds(), &kernel(), 0.0).unwrap();
        m.mean = DVector::from_element(5, 0.25);
        m.cov = SymMatrix::zeros(5);
        let s = sample_gp(&m, 7, 1).unwrap();
        assert!(s.iter().all(|v| *v == 0.25));

        m.mean = DVector::zeros(2);
        m.cov = SymMatrix::new(DMatrix::from_element(2, 2, 2.0)).unwrap();
        m.test_points = DMatrix::zeros(1, 2);
        let s = sample_gp(&m, 500, 2).unwrap();
        for row in s.row_iter() {
            assert!((row[0] - row[1]).abs() <= 1e-4 * 2f64.sqrt());
        }
        assert!(sample_gp(&m, 0, 2).is_err());
    }

    #[test]
    fn sampler_scalar_moments() {
        let mut m = gp_moments(&DMatrix::from_element(1, 1, 0.3), &ds(), &kernel(), 0.0).unwrap();
        m.mean[0] = 0.0;
        m.cov = SymMatrix::identity(1);
        let s = sample_gp(&m, 1_000_000, 42).unwrap();
        let v: Vec<f64> = s.iter().copied().collect();
        assert!(crate::stats::mean(&v).abs() < 3.0 / 1000.0);
        assert!((crate::stats::variance(&v) - 1.0).abs() < 0.005);
        assert_eq!(s, sample_gp(&m, 1_000_000, 42).unwrap());
    }
}
