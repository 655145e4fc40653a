//! Infinite-width kernels of the shallow network.
//!
//! * `K̃(x, x') = xᵀx' / n0`
//! * `K(x, x') = E[Φ(u) Φ(v)]`, `(u, v) ~ N(0, T(x, x'))`
//! * `k∞(x, x') = K(x, x') + K̃(x, x') E[Φ'(u) Φ'(v)]`
//!
//! The bivariate expectations use a tensorized probabilists' Gauss–Hermite
//! rule after factoring `T = L Lᵀ`. ReLU takes a separate route: the inner
//! Gaussian integral is done in closed form and the outer one with
//! Gauss–Legendre panels on the half-line where `Φ(u)` is nonzero.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matops::{min_eig, SymMatrix};

pub const DEFAULT_ORDER: usize = 64;

/// `xᵀx' / n0`.
pub fn k_tilde(x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != x2.len() || x.is_empty() {
        return Err(Error::InvalidShape(format!(
            "point dimensions {} and {}",
            x.len(),
            x2.len()
        )));
    }
    Ok(x.iter().zip(x2).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64)
}

/// Entries of the 2×2 covariance `T(x, x')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovPair {
    pub t11: f64,
    pub t12: f64,
    pub t22: f64,
}

impl CovPair {
    pub fn new(t11: f64, t12: f64, t22: f64) -> Result<Self> {
        let c = CovPair { t11, t12, t22 };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let CovPair { t11, t12, t22 } = *self;
        let finite = t11.is_finite() && t12.is_finite() && t22.is_finite();
        let prod = t11 * t22;
        if !finite || t11 < 0.0 || t22 < 0.0 || t12 * t12 > prod + 1e-12 * prod.max(1.0) {
            return Err(Error::InvalidCovariance { t11, t12, t22 });
        }
        Ok(())
    }

    /// Lower factor `(a, b, c)` with `u = a z1`, `v = b z1 + c z2`.
    ///
    /// Rank-deficient pairs get an exact rank-one factor (`c = 0`), or `a = 0`
    /// when the first variance vanishes.
    pub fn factor(&self) -> (f64, f64, f64) {
        if self.t11 == 0.0 {
            return (0.0, 0.0, self.t22.sqrt());
        }
        let a = self.t11.sqrt();
        let b = self.t12 / a;
        let rest = self.t22 - b * b;
        let c = if rest <= 1e-15 * self.t22 { 0.0 } else { rest.sqrt() };
        (a, b, c)
    }
}

/// `T(x, x') = [[K̃(x,x), K̃(x,x')], [K̃(x',x), K̃(x',x')]]`.
pub fn cov_pair(x: &[f64], x2: &[f64]) -> Result<CovPair> {
    let c = CovPair {
        t11: k_tilde(x, x)?,
        t12: k_tilde(x, x2)?,
        t22: k_tilde(x2, x2)?,
    };
    // Cauchy–Schwarz can fail by an ulp; clamp rather than reject.
    let bound = (c.t11 * c.t22).sqrt();
    Ok(CovPair {
        t12: c.t12.clamp(-bound, bound),
        ..c
    })
}

/// Gauss–Hermite rule for the standard normal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes are the roots of the probabilists' Hermite polynomial of degree
    /// `order`: eigenvalues of the Jacobi matrix, polished by Newton steps on
    /// the orthonormal three-term recurrence. Weights are Christoffel numbers.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("quadrature order must be positive".into()));
        }
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);

        let mut weights = Vec::with_capacity(order);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (p, dp, _) = orthonormal_hermite(order, *x);
                if dp == 0.0 {
                    break;
                }
                *x -= p / dp;
            }
            let (_, _, sumsq) = orthonormal_hermite(order, *x);
            weights.push(1.0 / sumsq);
        }
        // Enforce the exact symmetry of the rule.
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Ok(QuadratureRule { order, nodes, weights })
    }

    /// Rule used for an activation: ReLU gets twice the order.
    pub fn for_activation(act: Activation, order: usize) -> Result<Self> {
        match act {
            Activation::Relu => Self::gauss_hermite(2 * order),
            _ => Self::gauss_hermite(order),
        }
    }

    /// `E[g(z)]` for `z ~ N(0, 1)`.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * g(*z)).sum()
    }
}

/// Returns `(p_n(x), p_n'(x), Σ_{k<n} p_k(x)²)` for orthonormal probabilists' Hermite polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, (n as f64).sqrt() * prev, sumsq)
}

/// `E[g(u) g(v)]` for `(u, v) ~ N(0, T)` with `rule` on both axes.
pub fn pair_expectation<G: Fn(f64) -> f64>(g: G, t: &CovPair, rule: &QuadratureRule) -> Result<f64> {
    t.validate()?;
    let (a, b, c) = t.factor();
    Ok(tensor_expect(&g, (a, b, c), rule, rule))
}

/// `E[g(u) g(v)]` with `u = a z1`, `v = b z1 + c z2` on a tensor grid.
fn tensor_expect<G: Fn(f64) -> f64>(g: &G, (a, b, c): (f64, f64, f64), outer: &QuadratureRule, inner: &QuadratureRule) -> f64 {
    if a == 0.0 {
        return g(0.0) * inner.expect(|z| g(c * z));
    }
    if c == 0.0 {
        return outer.expect(|z| g(a * z) * g(b * z));
    }
    let mut total = 0.0;
    for (zi, wi) in outer.nodes.iter().zip(&outer.weights) {
        let gu = g(a * zi);
        if gu == 0.0 {
            continue;
        }
        let base = b * zi;
        let s: f64 = inner
            .nodes
            .iter()
            .zip(&inner.weights)
            .map(|(zj, wj)| wj * g(base + c * zj))
            .sum();
        total += wi * gu * s;
    }
    total
}

impl QuadratureRule {
    /// Gauss–Legendre rule mapped to `[0, 1]`, weights summing to one.
    pub fn gauss_legendre_unit(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("quadrature order must be positive".into()));
        }
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                let k = i.max(j) as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (0.5 * (eig.eigenvalues[i] + 1.0), eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Ok(QuadratureRule { order, nodes, weights })
    }
}

/// Gauss–Legendre order per panel of the ReLU half-line rule.
pub const RELU_PANEL_ORDER: usize = 48;
/// Upper end of the ReLU half-line, in standard-normal units.
pub const RELU_HALF_LINE: f64 = 10.0;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `(E[relu(u) relu(v)], E[1{u>0} 1{v>0}])` for `u = a z1`, `v = b z1 + c z2`.
///
/// Given `z1`, the expectation over `z2` is `m Ψ(m/c) + c ψ(m/c)` (resp.
/// `Ψ(m/c)`) with `m = b z1` and `Ψ`, `ψ` the normal cdf and density. The
/// outer integrand vanishes for `z1 < 0` and is analytic on `z1 > 0`, apart
/// from a transition of width `c / |b|` next to the origin that gets its own
/// panel.
fn relu_moments(unit: &QuadratureRule, (a, b, c): (f64, f64, f64)) -> (f64, f64) {
    if a == 0.0 {
        return (0.0, 0.0);
    }
    let inner = |m: f64| -> (f64, f64) {
        if c == 0.0 {
            (m.max(0.0), if m > 0.0 { 1.0 } else { 0.0 })
        } else {
            let r = m / c;
            let cdf = std_normal_cdf(r);
            (m * cdf + c * std_normal_pdf(r), cdf)
        }
    };
    let split = if c > 0.0 && b != 0.0 {
        (8.0 * c / b.abs()).min(RELU_HALF_LINE)
    } else {
        RELU_HALF_LINE
    };
    let mut panels = vec![(0.0, split)];
    if split < RELU_HALF_LINE {
        panels.push((split, RELU_HALF_LINE));
    }
    let (mut k, mut dk) = (0.0, 0.0);
    for (lo, hi) in panels {
        let len = hi - lo;
        for (s, w) in unit.nodes.iter().zip(&unit.weights) {
            let z = lo + len * s;
            let weight = w * len * std_normal_pdf(z);
            let (e, de) = inner(b * z);
            k += weight * a * z * e;
            dk += weight * de;
        }
    }
    (k, dk)
}

/// Integrand scale above which the Gauss–Hermite rule is replaced.
pub const SCALE_SWITCH: f64 = 0.75;
/// Midpoint spacing, in units of the activation argument.
pub const MIDPOINT_SPACING: f64 = 0.2;
/// Standard-normal range covered by the midpoint rule.
pub const MIDPOINT_HALF_WIDTH: f64 = 9.0;

impl QuadratureRule {
    /// Midpoint rule with nodes `(k + 1/2) h` on `[-half_width, half_width]`
    /// and weights `h φ(z)`.
    ///
    /// On the whole line the midpoint rule converges geometrically for
    /// integrands analytic in a strip, and the nodes avoid the kinks of ReLU
    /// at the origin.
    pub fn midpoint(spacing: f64, half_width: f64) -> Result<Self> {
        if !(spacing > 0.0 && half_width > spacing) {
            return Err(Error::InvalidArgument(format!(
                "midpoint rule needs 0 < spacing < half_width (got {spacing}, {half_width})"
            )));
        }
        let half = (half_width / spacing).ceil() as usize;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut nodes = Vec::with_capacity(2 * half);
        for k in 0..2 * half {
            nodes.push((k as f64 - half as f64 + 0.5) * spacing);
        }
        let weights = nodes.iter().map(|z| spacing * norm * (-0.5 * z * z).exp()).collect();
        Ok(QuadratureRule {
            order: 2 * half,
            nodes,
            weights,
        })
    }
}

/// Scale-aware quadrature: a fixed Gauss–Hermite rule while the integrand
/// varies slowly in the standard-normal variable, and a midpoint rule whose
/// spacing shrinks with the scale beyond [`SCALE_SWITCH`].
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub base: QuadratureRule,
    pub spacing: f64,
    /// Panel rule for the ReLU half-line integral.
    pub unit: QuadratureRule,
}

impl Quadrature {
    pub fn new(base: QuadratureRule) -> Self {
        Quadrature {
            base,
            spacing: MIDPOINT_SPACING,
            unit: QuadratureRule::gauss_legendre_unit(RELU_PANEL_ORDER).expect("order is positive"),
        }
    }

    fn rule_for(&self, scale: f64) -> std::borrow::Cow<'_, QuadratureRule> {
        if scale <= SCALE_SWITCH {
            std::borrow::Cow::Borrowed(&self.base)
        } else {
            std::borrow::Cow::Owned(
                QuadratureRule::midpoint(self.spacing / scale, MIDPOINT_HALF_WIDTH)
                    .expect("spacing is positive"),
            )
        }
    }

    /// `(E[Φ(u)Φ(v)], E[Φ'(u)Φ'(v)])`.
    pub fn pair_moments(&self, act: Activation, t: &CovPair) -> Result<(f64, f64)> {
        t.validate()?;
        let (a, b, c) = t.factor();
        if act == Activation::Relu {
            return Ok(relu_moments(&self.unit, (a, b, c)));
        }
        let outer = self.rule_for(a.max(b.abs()));
        let inner = self.rule_for(c);
        let k = tensor_expect(&|z| act.phi(z), (a, b, c), &outer, &inner);
        let dk = tensor_expect(&|z| act.dphi(z), (a, b, c), &outer, &inner);
        Ok((k, dk))
    }

    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G, t: &CovPair) -> Result<f64> {
        t.validate()?;
        let (a, b, c) = t.factor();
        let outer = self.rule_for(a.max(b.abs()));
        let inner = self.rule_for(c);
        Ok(tensor_expect(&g, (a, b, c), &outer, &inner))
    }
}

/// NNGP kernel `K(x, x')`; `rule` serves the small-scale regime.
pub fn nngp_k(x: &[f64], x2: &[f64], act: Activation, rule: &QuadratureRule) -> Result<f64> {
    LimitKernel::with_rule(act, rule.clone()).nngp(x, x2)
}

/// Limiting NTK `k∞(x, x')`; `rule` serves the small-scale regime.
pub fn ntk_limit(x: &[f64], x2: &[f64], act: Activation, rule: &QuadratureRule) -> Result<f64> {
    LimitKernel::with_rule(act, rule.clone()).ntk(x, x2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Nngp,
    NtkLimit,
    KTilde,
}

/// An activation bundled with its quadrature rule.
#[derive(Debug, Clone)]
pub struct LimitKernel {
    pub act: Activation,
    pub quad: Quadrature,
}

impl LimitKernel {
    /// Uses [`QuadratureRule::for_activation`] with the given base order.
    pub fn new(act: Activation, order: usize) -> Result<Self> {
        Ok(Self::with_rule(act, QuadratureRule::for_activation(act, order)?))
    }

    pub fn with_rule(act: Activation, rule: QuadratureRule) -> Self {
        LimitKernel {
            act,
            quad: Quadrature::new(rule),
        }
    }

    /// Short provenance tag such as `sigmoid/gh64` or `relu/gl48`.
    pub fn tag(&self) -> String {
        match self.act {
            Activation::Relu => format!("relu/gl{}", self.quad.unit.order),
            act => format!("{act}/gh{}", self.quad.base.order),
        }
    }

    pub fn nngp(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let t = cov_pair(x, x2)?;
        let act = self.act;
        if act == Activation::Relu {
            return Ok(self.quad.pair_moments(act, &t)?.0);
        }
        self.quad.expectation(|z| act.phi(z), &t)
    }

    /// `(K(x, x'), k∞(x, x'))`.
    pub fn both(&self, x: &[f64], x2: &[f64]) -> Result<(f64, f64)> {
        let t = cov_pair(x, x2)?;
        let (k, dk) = self.quad.pair_moments(self.act, &t)?;
        Ok((k, k + t.t12 * dk))
    }

    pub fn ntk(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        Ok(self.both(x, x2)?.1)
    }

    pub fn eval(&self, kind: KernelKind, x: &[f64], x2: &[f64]) -> Result<f64> {
        match kind {
            KernelKind::Nngp => self.nngp(x, x2),
            KernelKind::NtkLimit => self.ntk(x, x2),
            KernelKind::KTilde => k_tilde(x, x2),
        }
    }

    /// Kernel matrix between the columns of `a` and `b`.
    pub fn cross(&self, kind: KernelKind, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dims(a, b)?;
        let vals: Vec<f64> = (0..a.ncols() * b.ncols())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx % a.ncols(), idx / a.ncols());
                self.eval(kind, column(a, i), column(b, j))
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_vec(a.ncols(), b.ncols(), vals))
    }

    /// `(K(a, b), k∞(a, b))` sharing one quadrature sweep per pair.
    pub fn cross_both(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_dims(a, b)?;
        let vals: Vec<(f64, f64)> = (0..a.ncols() * b.ncols())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx % a.ncols(), idx / a.ncols());
                self.both(column(a, i), column(b, j))
            })
            .collect::<Result<_>>()?;
        let k = DMatrix::from_iterator(a.ncols(), b.ncols(), vals.iter().map(|v| v.0));
        let kinf = DMatrix::from_iterator(a.ncols(), b.ncols(), vals.iter().map(|v| v.1));
        Ok((k, kinf))
    }

    /// Symmetric Gram matrix; each unordered pair is evaluated once.
    pub fn gram(&self, kind: KernelKind, points: &DMatrix<f64>) -> Result<SymMatrix> {
        let m = points.ncols();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
        let vals: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| self.eval(kind, column(points, i), column(points, j)))
            .collect::<Result<_>>()?;
        let mut g = DMatrix::zeros(m, m);
        for (&(i, j), v) in pairs.iter().zip(vals) {
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        SymMatrix::new(g)
    }
}

/// Gram matrix of `kind` on the columns of `points`.
pub fn gram(points: &DMatrix<f64>, kernel: &LimitKernel, kind: KernelKind) -> Result<SymMatrix> {
    kernel.gram(kind, points)
}

pub(crate) fn column(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let r = m.nrows();
    &m.as_slice()[j * r..(j + 1) * r]
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidShape(format!(
            "point dimensions {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdCheck {
    pub pd: bool,
    pub min_eig: f64,
}

/// Positive-definiteness test `min_eig(G) > tol`.
pub fn check_pd(g: &SymMatrix, tol: f64) -> Result<PdCheck> {
    let lam = min_eig(g)?;
    Ok(PdCheck {
        pd: lam > tol,
        min_eig: lam,
    })
}
