//! Linearized network `f_lin(x; θ) = f(x; θ₀) + ∇f(x; θ₀)·(θ − θ₀)` and its
//! gradient-flow solutions.
//!
//! With the empirical kernel frozen at initialization the train outputs obey
//! `f_t(X) = e^{-k t} f₀(X) + (1 − e^{-k t}) y` and a test point obeys
//! `f_t(x) = f₀(x) − k(x, X) I_t(k) (f₀(X) − y)`. The residual in the test
//! formula is the training residual `f₀(X) − y`.

use nalgebra::{DMatrix, DVector};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matops::{sym_eig, EigDecomp, SymMatrix};
use crate::network::{self, Dataset, NetworkParams};

/// Everything the closed forms need, computed once from `θ₀`.
#[derive(Debug, Clone)]
pub struct LinearizedState {
    pub base: NetworkParams,
    pub act: Activation,
    pub train_x: DMatrix<f64>,
    pub test_x: DMatrix<f64>,
    pub f0_train: DVector<f64>,
    pub f0_test: DVector<f64>,
    pub k0_train: SymMatrix,
    pub k0_cross: DMatrix<f64>,
    jac_train: DMatrix<f64>,
    jac_test: DMatrix<f64>,
    eig: EigDecomp,
}

impl LinearizedState {
    pub fn new(base: &NetworkParams, act: Activation, train_x: &DMatrix<f64>, test_x: &DMatrix<f64>) -> Result<Self> {
        let jac_train = network::jacobian_matrix(base, act, train_x)?;
        let jac_test = network::jacobian_matrix(base, act, test_x)?;
        let k0_train = network::empirical_ntk_gram(base, act, train_x)?;
        let k0_cross = network::empirical_ntk(base, act, test_x, train_x)?;
        let eig = sym_eig(&k0_train)?;
        Ok(LinearizedState {
            base: base.clone(),
            act,
            train_x: train_x.clone(),
            test_x: test_x.clone(),
            f0_train: network::forward_batch(base, act, train_x)?,
            f0_test: network::forward_batch(base, act, test_x)?,
            k0_train,
            k0_cross,
            jac_train,
            jac_test,
            eig,
        })
    }

    pub fn from_dataset(base: &NetworkParams, act: Activation, ds: &Dataset, test_x: &DMatrix<f64>) -> Result<Self> {
        Self::new(base, act, &ds.x, test_x)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eig.min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eig.max()
    }

    /// Stacked Jacobian of the training outputs at `θ₀` (`n × N`).
    pub fn jacobian_train(&self) -> &DMatrix<f64> {
        &self.jac_train
    }

    fn check_labels(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.f0_train.len() {
            return Err(Error::InvalidShape(format!(
                "labels have length {}, training set has {} points",
                y.len(),
                self.f0_train.len()
            )));
        }
        Ok(())
    }
}

/// First-order Taylor value of the network at `p_new` around the state's base.
pub fn lin_forward(state: &LinearizedState, p_new: &NetworkParams, x: &[f64]) -> Result<f64> {
    if p_new.theta0.shape() != state.base.theta0.shape() {
        return Err(Error::InvalidShape("parameters differ in shape from the base".into()));
    }
    let f0 = network::forward(&state.base, state.act, x)?;
    let g = network::jacobian(&state.base, state.act, x)?;
    let d0 = &p_new.theta0 - &state.base.theta0;
    let d1 = &p_new.theta1 - &state.base.theta1;
    Ok(f0 + g.d_theta0.dot(&d0) + g.d_theta1.dot(&d1))
}

/// Train outputs `e^{-k₀t} f₀ + (1 − e^{-k₀t}) y`.
pub fn lin_train_solution(state: &LinearizedState, y: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    state.check_labels(y)?;
    let e = state.eig.expm_neg(t)?;
    Ok(y + e.as_matrix() * (&state.f0_train - y))
}

/// Test outputs `f₀(x) − k₀(x, X) I_t(k₀) (f₀(X) − y)`.
pub fn lin_test_solution(state: &LinearizedState, y: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    state.check_labels(y)?;
    let it = state.eig.i_t(t)?;
    Ok(&state.f0_test - &state.k0_cross * (it.as_matrix() * (&state.f0_train - y)))
}

/// Euler-integrated linearized flow.
#[derive(Debug, Clone)]
pub struct LinFlow {
    pub times: Vec<f64>,
    pub train_outputs: Vec<DVector<f64>>,
    pub test_outputs: Vec<DVector<f64>>,
    pub omega: DVector<f64>,
}

/// Explicit Euler integration of `dω/dt = −J(X)ᵀ (f₀(X) + J(X) ω − y)`.
///
/// Steps of size `dt`, the last one shortened to land on `t_end`. With
/// `dt = lr` this is exactly gradient descent on the linearized network.
pub fn lin_flow_ode(state: &LinearizedState, y: &DVector<f64>, t_end: f64, dt: f64) -> Result<LinFlow> {
    state.check_labels(y)?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidTime(t_end));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size {dt} must be positive")));
    }
    let n_steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut omega = DVector::zeros(state.base.num_params());
    let mut t = 0.0;
    let mut train = state.f0_train.clone();
    let mut out = LinFlow {
        times: vec![0.0],
        train_outputs: vec![train.clone()],
        test_outputs: vec![state.f0_test.clone()],
        omega: omega.clone(),
    };
    for step in 0..n_steps {
        let h = if step + 1 == n_steps { t_end - t } else { dt };
        let resid = &train - y;
        omega -= state.jac_train.transpose() * resid * h;
        t = if step + 1 == n_steps { t_end } else { t + h };
        train = &state.f0_train + &state.jac_train * &omega;
        if train.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedFlow { step });
        }
        out.times.push(t);
        out.train_outputs.push(train.clone());
        out.test_outputs.push(&state.f0_test + &state.jac_test * &omega);
    }
    out.omega = omega;
    Ok(out)
}
