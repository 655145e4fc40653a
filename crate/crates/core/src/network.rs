//! The shallow network `f(x; θ) = n1^{-1/2} Φ(n0^{-1/2} xᵀ θ⁽⁰⁾) θ⁽¹⁾`.
//!
//! Points are stored as columns of an `n0 × m` matrix. Gradients come from
//! their closed forms, so the empirical NTK equals `J Jᵀ` up to round-off.

use nalgebra::{DMatrix, DVector};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matops::SymMatrix;
use crate::rng;

/// Inner weights `theta0` (`n0 × n1`, column `j` feeds hidden unit `j`) and outer weights `theta1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub theta0: DMatrix<f64>,
    pub theta1: DVector<f64>,
    pub seed: u64,
    pub replica: u64,
}

impl NetworkParams {
    pub fn new(theta0: DMatrix<f64>, theta1: DVector<f64>) -> Result<Self> {
        if theta0.ncols() != theta1.len() || theta0.nrows() == 0 || theta1.is_empty() {
            return Err(Error::InvalidShape(format!(
                "theta0 is {}x{}, theta1 has length {}",
                theta0.nrows(),
                theta0.ncols(),
                theta1.len()
            )));
        }
        if theta0.iter().chain(theta1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(NetworkParams {
            theta0,
            theta1,
            seed: 0,
            replica: 0,
        })
    }

    pub fn n0(&self) -> usize {
        self.theta0.nrows()
    }

    pub fn n1(&self) -> usize {
        self.theta1.len()
    }

    /// `N = n0 n1 + n1`.
    pub fn num_params(&self) -> usize {
        self.n0() * self.n1() + self.n1()
    }

    /// `theta0` in column-major order followed by `theta1`.
    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.num_params(),
            self.theta0.iter().chain(self.theta1.iter()).copied(),
        )
    }

    /// Parameters shifted by a flat displacement laid out as in [`flatten`](Self::flatten).
    pub fn offset(&self, omega: &DVector<f64>) -> Result<Self> {
        if omega.len() != self.num_params() {
            return Err(Error::InvalidShape(format!(
                "displacement has length {}, expected {}",
                omega.len(),
                self.num_params()
            )));
        }
        let k = self.theta0.len();
        let mut out = self.clone();
        for (w, d) in out.theta0.iter_mut().zip(omega.iter()) {
            *w += d;
        }
        for (w, d) in out.theta1.iter_mut().zip(omega.iter().skip(k)) {
            *w += d;
        }
        Ok(out)
    }
}

/// Standard-normal initialization of replica 0 for `seed`.
pub fn init_params(n0: usize, n1: usize, seed: u64) -> Result<NetworkParams> {
    init_params_replica(n0, n1, seed, 0)
}

/// Standard-normal initialization drawn from the `(seed, replica)` streams.
pub fn init_params_replica(n0: usize, n1: usize, seed: u64, replica: u64) -> Result<NetworkParams> {
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidShape(format!("n0={n0}, n1={n1}")));
    }
    let theta0 = DMatrix::from_vec(n0, n1, rng::standard_normals(seed, replica, "theta0", n0 * n1));
    let theta1 = DVector::from_vec(rng::standard_normals(seed, replica, "theta1", n1));
    Ok(NetworkParams {
        theta0,
        theta1,
        seed,
        replica,
    })
}

/// Training inputs (columns of `x`) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.ncols() != y.len() || x.nrows() == 0 || y.is_empty() {
            return Err(Error::InvalidShape(format!(
                "inputs are {}x{}, labels have length {}",
                x.nrows(),
                x.ncols(),
                y.len()
            )));
        }
        Ok(Dataset { x, y })
    }

    /// One-dimensional inputs.
    pub fn from_scalars(xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(1, xs.len(), xs),
            DVector::from_column_slice(ys),
        )
    }

    pub fn n0(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Index pairs of identical input columns. Duplicates make the limiting kernel singular.
    pub fn duplicate_columns(&self) -> Vec<(usize, usize)> {
        let mut dups = Vec::new();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if self.x.column(i) == self.x.column(j) {
                    dups.push((i, j));
                }
            }
        }
        dups
    }

    /// Inputs `(x, 1)`: hidden-layer biases become ordinary inner weights.
    pub fn augment_with_bias(&self) -> Dataset {
        Dataset {
            x: augment_points(&self.x),
            y: self.y.clone(),
        }
    }
}

/// Appends a row of ones to a point matrix.
pub fn augment_points(points: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = points.clone().insert_row(points.nrows(), 1.0);
    out.row_mut(points.nrows()).fill(1.0);
    out
}

fn check_points(p: &NetworkParams, points: &DMatrix<f64>) -> Result<()> {
    if points.nrows() != p.n0() {
        return Err(Error::InvalidShape(format!(
            "points have dimension {}, network expects {}",
            points.nrows(),
            p.n0()
        )));
    }
    Ok(())
}

fn check_point(p: &NetworkParams, x: &[f64]) -> Result<()> {
    if x.len() != p.n0() {
        return Err(Error::InvalidShape(format!(
            "point has dimension {}, network expects {}",
            x.len(),
            p.n0()
        )));
    }
    Ok(())
}

/// `h(x) = n0^{-1/2} xᵀ θ⁽⁰⁾`.
pub fn preactivations(p: &NetworkParams, x: &[f64]) -> Result<DVector<f64>> {
    check_point(p, x)?;
    let scale = 1.0 / (p.n0() as f64).sqrt();
    Ok(DVector::from_iterator(
        p.n1(),
        p.theta0
            .column_iter()
            .map(|col| scale * col.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()),
    ))
}

/// Preactivations of every point, one row per point (`m × n1`).
pub fn preactivations_batch(p: &NetworkParams, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_points(p, points)?;
    Ok(points.transpose() * &p.theta0 / (p.n0() as f64).sqrt())
}

pub fn forward(p: &NetworkParams, act: Activation, x: &[f64]) -> Result<f64> {
    let h = preactivations(p, x)?;
    let s: f64 = h.iter().zip(p.theta1.iter()).map(|(h, w)| act.phi(*h) * w).sum();
    Ok(s / (p.n1() as f64).sqrt())
}

pub fn forward_batch(p: &NetworkParams, act: Activation, points: &DMatrix<f64>) -> Result<DVector<f64>> {
    let h = preactivations_batch(p, points)?;
    Ok(h.map(|z| act.phi(z)) * &p.theta1 / (p.n1() as f64).sqrt())
}

/// Gradient of `f(x; θ)` split into the `θ⁽⁰⁾` and `θ⁽¹⁾` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub d_theta0: DMatrix<f64>,
    pub d_theta1: DVector<f64>,
}

impl Gradient {
    pub fn dot(&self, other: &Gradient) -> f64 {
        self.d_theta0.dot(&other.d_theta0) + self.d_theta1.dot(&other.d_theta1)
    }

    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.d_theta0.len() + self.d_theta1.len(),
            self.d_theta0.iter().chain(self.d_theta1.iter()).copied(),
        )
    }
}

/// `∂f/∂θ⁽⁰⁾_{uj} = x_u Φ'(h_j) θ⁽¹⁾_j / √(n0 n1)` and `∂f/∂θ⁽¹⁾_j = Φ(h_j) / √n1`.
pub fn jacobian(p: &NetworkParams, act: Activation, x: &[f64]) -> Result<Gradient> {
    let h = preactivations(p, x)?;
    let (n0, n1) = (p.n0(), p.n1());
    let s1 = 1.0 / (n1 as f64).sqrt();
    let s01 = s1 / (n0 as f64).sqrt();
    let d_theta1 = h.map(|z| act.phi(z) * s1);
    let d_theta0 = DMatrix::from_fn(n0, n1, |u, j| s01 * x[u] * act.dphi(h[j]) * p.theta1[j]);
    Ok(Gradient { d_theta0, d_theta1 })
}

/// Stacked flat Jacobian, one row per point (`m × N`).
pub fn jacobian_matrix(p: &NetworkParams, act: Activation, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_points(p, points)?;
    let mut out = DMatrix::zeros(points.ncols(), p.num_params());
    for (i, col) in points.column_iter().enumerate() {
        let x: Vec<f64> = col.iter().copied().collect();
        let g = jacobian(p, act, &x)?.flatten();
        out.row_mut(i).copy_from(&g.transpose());
    }
    Ok(out)
}

/// Empirical NTK `k(a_i, b_j; θ)` for all pairs, via its closed form.
pub fn empirical_ntk(
    p: &NetworkParams,
    act: Activation,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_points(p, a)?;
    check_points(p, b)?;
    let n0 = p.n0() as f64;
    let n1 = p.n1() as f64;
    let ha = preactivations_batch(p, a)?;
    let hb = preactivations_batch(p, b)?;
    let outer = |h: &DMatrix<f64>| {
        let mut d = h.map(|z| act.dphi(z));
        for (j, mut col) in d.column_iter_mut().enumerate() {
            col *= p.theta1[j];
        }
        (h.map(|z| act.phi(z)), d)
    };
    let (pa, da) = outer(&ha);
    let (pb, db) = outer(&hb);
    let inputs = a.transpose() * b / n0;
    let hidden = da * db.transpose();
    Ok(inputs.component_mul(&hidden) / n1 + pa * pb.transpose() / n1)
}

/// Empirical NTK Gram on one point set.
pub fn empirical_ntk_gram(p: &NetworkParams, act: Activation, points: &DMatrix<f64>) -> Result<SymMatrix> {
    SymMatrix::new(empirical_ntk(p, act, points, points)?)
}

/// Common diagonal value `xᵀx' / n0` of the hidden-layer kernel; off-diagonal entries vanish.
pub fn hidden_ntk(x: &[f64], x2: &[f64]) -> Result<f64> {
    crate::kernels::k_tilde(x, x2)
}

/// Training time reached after `steps` gradient steps of size `lr`.
pub fn time_of(lr: f64, steps: usize) -> f64 {
    lr * steps as f64
}

/// Checkpointed gradient-descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub params_at: Vec<NetworkParams>,
    pub train_outputs_at: Vec<DVector<f64>>,
    pub loss_at: Vec<f64>,
}

impl Trajectory {
    pub fn final_params(&self) -> &NetworkParams {
        self.params_at.last().expect("trajectory has at least one checkpoint")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one checkpoint")
    }
}

/// Full-batch gradient descent on `½‖f(X; θ) − y‖²`, both layers trained.
///
/// Checkpoints are taken at step 0, every `checkpoint_every` steps, and at the
/// final step; checkpoint `k` sits at time `lr * step_k`.
pub fn train_gd(
    p0: &NetworkParams,
    act: Activation,
    ds: &Dataset,
    lr: f64,
    steps: usize,
    checkpoint_every: usize,
) -> Result<Trajectory> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
    }
    if checkpoint_every == 0 {
        return Err(Error::InvalidArgument("checkpoint_every must be positive".into()));
    }
    check_points(p0, &ds.x)?;

    let (n0, n1, n) = (p0.n0(), p0.n1(), ds.len());
    let s0 = 1.0 / (n0 as f64).sqrt();
    let s1 = 1.0 / (n1 as f64).sqrt();
    let xs = ds.x.as_slice();
    let mut params = p0.clone();
    let mut phi = vec![0.0; n * n1];
    let mut dphi = vec![0.0; n * n1];
    let mut resid = vec![0.0; n];
    let mut out = Trajectory {
        steps: Vec::new(),
        times: Vec::new(),
        params_at: Vec::new(),
        train_outputs_at: Vec::new(),
        loss_at: Vec::new(),
    };

    for step in 0..=steps {
        let th0 = params.theta0.as_slice();
        let th1 = params.theta1.as_slice();
        let mut outputs = vec![0.0; n];
        for i in 0..n {
            let x = &xs[i * n0..(i + 1) * n0];
            let mut acc = 0.0;
            for j in 0..n1 {
                let w = &th0[j * n0..(j + 1) * n0];
                let h = s0 * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                let (v, d) = act.phi_dphi(h);
                phi[i * n1 + j] = v;
                dphi[i * n1 + j] = d;
                acc += v * th1[j];
            }
            outputs[i] = acc * s1;
            resid[i] = outputs[i] - ds.y[i];
        }
        let loss = 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::DivergedTraining { step, loss });
        }
        if step % checkpoint_every == 0 || step == steps {
            out.steps.push(step);
            out.times.push(time_of(lr, step));
            out.params_at.push(params.clone());
            out.train_outputs_at.push(DVector::from_vec(outputs));
            out.loss_at.push(loss);
        }
        if step == steps {
            break;
        }

        // Both blocks use the gradient at the current parameters.
        let mut g0 = vec![0.0; n0 * n1];
        let mut g1 = vec![0.0; n1];
        for i in 0..n {
            let r = resid[i];
            if r == 0.0 {
                continue;
            }
            let x = &xs[i * n0..(i + 1) * n0];
            for j in 0..n1 {
                g1[j] += s1 * phi[i * n1 + j] * r;
                let c = s0 * s1 * th1[j] * dphi[i * n1 + j] * r;
                for u in 0..n0 {
                    g0[j * n0 + u] += c * x[u];
                }
            }
        }
        for (w, g) in params.theta0.as_mut_slice().iter_mut().zip(&g0) {
            *w -= lr * g;
        }
        for (w, g) in params.theta1.as_mut_slice().iter_mut().zip(&g1) {
            *w -= lr * g;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_net(n0: usize, n1: usize, seed: u64) -> NetworkParams {
        init_params(n0, n1, seed).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(2, 3, 9).unwrap(), init_params(2, 3, 9).unwrap());
        assert_ne!(init_params(2, 3, 9).unwrap(), init_params(2, 3, 10).unwrap());
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(init_params(0, 3, 1), Err(Error::InvalidShape(_))));
        assert!(matches!(init_params(3, 0, 1), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn init_moments_clt() {
        let p = init_params(1, 100_000, 5).unwrap();
        let v: Vec<f64> = p.theta1.iter().copied().collect();
        assert!(crate::stats::mean(&v).abs() < 3.0 / (1e5f64).sqrt());
        assert!((crate::stats::variance(&v) - 1.0).abs() < 0.02);
        let p = init_params(1, 10_000, 6).unwrap();
        let sq = p.theta1.norm_squared() / 1e4;
        assert!((0.8..=1.2).contains(&sq));
    }

    #[test]
    fn forward_zero_outer_weights() {
        let mut p = small_net(3, 4, 1);
        p.theta1.fill(0.0);
        assert_eq!(forward(&p, Activation::Tanh, &[1.0, -2.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn forward_hand_values() {
        let p = NetworkParams::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(forward(&p, Activation::Tanh, &[0.0]).unwrap(), 0.0);
        let p = NetworkParams::new(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::from_column_slice(&[1.0, 1.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(forward(&p, Activation::Tanh, &[1.0]).unwrap(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn forward_shape_mismatch() {
        let p = small_net(2, 3, 1);
        assert!(matches!(forward(&p, Activation::Tanh, &[1.0]), Err(Error::InvalidShape(_))));
        assert!(matches!(
            empirical_ntk(&p, Activation::Tanh, &DMatrix::zeros(3, 1), &DMatrix::zeros(2, 1)),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn preactivation_identities() {
        let p = small_net(4, 6, 2);
        assert!(preactivations(&p, &[0.0; 4]).unwrap().iter().all(|h| *h == 0.0));
        let col = p.theta0.column(2);
        let x: Vec<f64> = col.iter().map(|v| v / col.norm()).collect();
        let h = preactivations(&p, &x).unwrap();
        assert_abs_diff_eq!(h[2], col.norm() / 2.0, epsilon = 1e-14);
        let x = [0.3, -1.0, 2.0, 0.1];
        let h = preactivations(&p, &x).unwrap();
        let manual = h.map(|z| Activation::Sigmoid.phi(z)).dot(&p.theta1) / (6f64).sqrt();
        assert_eq!(manual, forward(&p, Activation::Sigmoid, &x).unwrap());
        let batch = forward_batch(&p, Activation::Sigmoid, &DMatrix::from_column_slice(4, 1, &x)).unwrap();
        assert_abs_diff_eq!(batch[0], manual, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_zero_outer_block() {
        let mut p = small_net(2, 3, 3);
        p.theta1.fill(0.0);
        let g = jacobian(&p, Activation::Tanh, &[1.0, 2.0]).unwrap();
        assert!(g.d_theta0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn jacobian_hand_value() {
        let c = 1.7;
        let p = NetworkParams::new(DMatrix::from_element(1, 1, 0.0), DVector::from_element(1, c)).unwrap();
        let g = jacobian(&p, Activation::Tanh, &[1.0]).unwrap();
        assert_abs_diff_eq!(g.d_theta0[(0, 0)], c, epsilon = 1e-15);
    }

    #[test]
    fn ntk_at_origin_vanishes_for_tanh() {
        let p = small_net(2, 16, 4);
        let z = DMatrix::zeros(2, 1);
        assert_eq!(empirical_ntk(&p, Activation::Tanh, &z, &z).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn ntk_psd_on_point_set() {
        let p = small_net(3, 32, 8);
        let pts = DMatrix::from_vec(3, 6, crate::rng::standard_normals(1, 0, "pts", 18));
        for act in Activation::ALL {
            let k = empirical_ntk_gram(&p, act, &pts).unwrap();
            let lam = crate::matops::min_eig(&k).unwrap();
            assert!(lam >= -1e-10 * k.trace());
            let k = empirical_ntk(&p, act, &pts, &pts).unwrap();
            assert!((&k - k.transpose()).norm() < 1e-12);
        }
    }

    #[test]
    fn train_zero_steps() {
        let p = small_net(1, 8, 1);
        let ds = Dataset::from_scalars(&[0.5, -1.0], &[0.2, 0.1]).unwrap();
        let tr = train_gd(&p, Activation::Sigmoid, &ds, 0.1, 0, 5).unwrap();
        assert_eq!(tr.times, vec![0.0]);
        assert_eq!(tr.params_at[0], p);
    }

    #[test]
    fn train_checkpoint_schedule() {
        let p = small_net(1, 8, 1);
        let ds = Dataset::from_scalars(&[0.5], &[0.2]).unwrap();
        let tr = train_gd(&p, Activation::Sigmoid, &ds, 0.1, 10, 4).unwrap();
        assert_eq!(tr.steps, vec![0, 4, 8, 10]);
        assert_abs_diff_eq!(tr.final_time(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn train_reports_divergence() {
        let p = small_net(1, 4, 1);
        let ds = Dataset::from_scalars(&[3.0, -2.0], &[5.0, -5.0]).unwrap();
        let err = train_gd(&p, Activation::Relu, &ds, 1e6, 200, 1).unwrap_err();
        assert!(matches!(err, Error::DivergedTraining { .. }));
    }

    #[test]
    fn train_single_step_matches_hand_gradient() {
        let p = small_net(2, 5, 12);
        let ds = Dataset::new(
            DMatrix::from_column_slice(2, 2, &[0.3, -0.7, 1.1, 0.4]),
            DVector::from_column_slice(&[0.5, -0.2]),
        )
        .unwrap();
        let lr = 0.05;
        let tr = train_gd(&p, Activation::Tanh, &ds, lr, 1, 1).unwrap();
        let f = forward_batch(&p, Activation::Tanh, &ds.x).unwrap();
        let r = f - &ds.y;
        let j = jacobian_matrix(&p, Activation::Tanh, &ds.x).unwrap();
        let expected = p.flatten() - j.transpose() * r * lr;
        assert!((tr.final_params().flatten() - expected).norm() < 1e-14);
    }

    #[test]
    fn time_of_examples() {
        assert_abs_diff_eq!(time_of(0.1, 100), 10.0, epsilon = 1e-12);
        assert_eq!(time_of(0.3, 0), 0.0);
        assert_abs_diff_eq!(time_of(1.0 / 700.0, 20_000), 200.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(time_of(7.0 / 1000.0, 20_000), 140.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_columns_detected() {
        let ds = Dataset::from_scalars(&[1.0, 2.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(ds.duplicate_columns(), vec![(0, 2)]);
    }

    #[test]
    fn bias_augmentation_smoke() {
        let ds = Dataset::from_scalars(&[-1.0, 0.5, 2.0], &[0.1, 0.3, -0.2]).unwrap().augment_with_bias();
        assert_eq!(ds.n0(), 2);
        assert!(ds.x.row(1).iter().all(|v| *v == 1.0));
        let p = init_params(2, 16, 3).unwrap();
        let tr = train_gd(&p, Activation::Tanh, &ds, 0.05, 50, 10).unwrap();
        assert!(tr.loss_at.iter().all(|l| l.is_finite()));
    }
}
