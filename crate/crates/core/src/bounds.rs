//! The width condition behind the convergence theorem, the theorem's rate
//! template, and an audit of the activation constants both depend on.

use crate::activation::{Activation, ActivationNorms};
use crate::error::{Error, Result};

/// Inputs of the width condition and the rate template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    /// Frobenius norm of the training input matrix.
    pub norm_x: f64,
    pub norm_y: f64,
    pub sup_phi: f64,
    pub sup_dphi: f64,
    pub lip_phi: f64,
    pub lip_dphi: f64,
    /// Smallest eigenvalue of `k∞(X, X)`.
    pub lam_min_inf: f64,
    pub n0: usize,
    pub n1: usize,
    pub n: usize,
    pub r: f64,
}

impl TheoryInputs {
    /// Fills the activation constants from declared norms; fails for activations
    /// without bounded, Lipschitz `Φ` and `Φ'`.
    pub fn with_activation(norms: &ActivationNorms) -> Result<Self> {
        let get = |v: Option<f64>, name| {
            v.ok_or_else(|| Error::InvalidArgument(format!("activation has no finite {name}")))
        };
        Ok(TheoryInputs {
            norm_x: 0.0,
            norm_y: 0.0,
            sup_phi: get(norms.sup_phi, "sup |phi|")?,
            sup_dphi: get(norms.sup_dphi, "sup |phi'|")?,
            lip_phi: get(norms.lip_phi, "Lip phi")?,
            lip_dphi: get(norms.lip_dphi, "Lip phi'")?,
            lam_min_inf: 0.0,
            n0: 1,
            n1: 2,
            n: 1,
            r: 5.0,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.r >= 5.0) {
            return Err(Error::InvalidR(self.r));
        }
        if self.n1 < 2 || self.n0 == 0 {
            return Err(Error::InvalidArgument(format!("need n1 >= 2 and n0 >= 1 (n0={}, n1={})", self.n0, self.n1)));
        }
        let norms = [self.norm_x, self.norm_y, self.sup_phi, self.sup_dphi, self.lip_phi, self.lip_dphi];
        if norms.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("norms must be non-negative".into()));
        }
        Ok(())
    }
}

/// Left-hand side of the width condition
///
/// `4‖X‖(√5‖Φ‖∞ + ‖y‖)/√(n1 n0) · (‖Φ'‖∞ + LipΦ + ‖X‖ LipΦ' √(r ln n1)/√n0)`.
pub fn assumption_r_lhs(ti: &TheoryInputs) -> Result<f64> {
    ti.validate()?;
    let n0 = ti.n0 as f64;
    let n1 = ti.n1 as f64;
    let front = 4.0 * ti.norm_x * (5f64.sqrt() * ti.sup_phi + ti.norm_y) / (n1 * n0).sqrt();
    let bracket = ti.sup_dphi + ti.lip_phi + ti.norm_x * ti.lip_dphi * (ti.r * n1.ln()).sqrt() / n0.sqrt();
    Ok(front * bracket)
}

/// The condition holds when its left-hand side is below `λ_min(k∞)`.
pub fn assumption_r_holds(ti: &TheoryInputs) -> Result<bool> {
    Ok(assumption_r_lhs(ti)? < ti.lam_min_inf)
}

/// Smallest width in `[2, max_width]` satisfying the condition, by bisection
/// after a doubling search (the left-hand side decreases for large widths).
pub fn smallest_admissible_width(ti: &TheoryInputs, max_width: usize) -> Result<Option<usize>> {
    let holds = |n1: usize| assumption_r_holds(&TheoryInputs { n1, ..*ti });
    if holds(2)? {
        return Ok(Some(2));
    }
    let (mut lo, mut hi) = (2usize, 4usize.min(max_width.max(2)));
    while !holds(hi)? {
        if hi >= max_width {
            return Ok(None);
        }
        lo = hi;
        hi = (hi * 2).min(max_width);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Right-hand side of the `W2²` bound for user-chosen constants `a1`, `a2`:
///
/// `r (a1 ln n1 / (λ³ n1 n0) + a2 n0 (1 + t⁸) / (λ^r n1^{r/4}))`.
pub fn theorem_rate(ti: &TheoryInputs, t: f64, a1: f64, a2: f64) -> Result<f64> {
    if !(ti.r >= 5.0) {
        return Err(Error::InvalidR(ti.r));
    }
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::InvalidArgument(format!("constants must be positive (a1={a1}, a2={a2})")));
    }
    if !(t >= 0.0) || ti.n1 < 2 || !(ti.lam_min_inf > 0.0) {
        return Err(Error::InvalidArgument("need t >= 0, n1 >= 2 and a positive lambda_min".into()));
    }
    let lam = ti.lam_min_inf;
    let n0 = ti.n0 as f64;
    let n1 = ti.n1 as f64;
    let first = a1 * n1.ln() / (lam.powi(3) * n1 * n0);
    let second = a2 * n0 / (lam.powf(ti.r) * n1.powf(ti.r / 4.0)) * (1.0 + t.powi(8));
    Ok(ti.r * (first + second))
}

/// Outcome of [`activation_norms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormAudit {
    pub norms: ActivationNorms,
    /// `false` when some constant is infinite, so the bounded-Lipschitz hypothesis fails.
    pub bounded_lipschitz: bool,
    /// Whether the grid audit ran.
    pub audited: bool,
}

const AUDIT_LO: f64 = -12.0;
const AUDIT_HI: f64 = 12.0;
const AUDIT_POINTS: usize = 240_001;

/// Checks the declared constants against a dense grid on `[-12, 12]`.
pub fn activation_norms(act: Activation) -> Result<NormAudit> {
    let norms = act.norms();
    if !norms.bounded_lipschitz() {
        return Ok(NormAudit {
            norms,
            bounded_lipschitz: false,
            audited: false,
        });
    }
    audit(
        |z| act.phi(z),
        |z| act.dphi(z),
        &norms,
    )?;
    Ok(NormAudit {
        norms,
        bounded_lipschitz: true,
        audited: true,
    })
}

fn audit<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(phi: F, dphi: D, norms: &ActivationNorms) -> Result<()> {
    let step = (AUDIT_HI - AUDIT_LO) / (AUDIT_POINTS - 1) as f64;
    let zs = (0..AUDIT_POINTS).map(|i| AUDIT_LO + i as f64 * step);
    let (mut max_phi, mut max_dphi, mut slope_phi, mut slope_dphi) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut prev: Option<(f64, f64)> = None;
    for z in zs {
        let (p, d) = (phi(z), dphi(z));
        max_phi = max_phi.max(p.abs());
        max_dphi = max_dphi.max(d.abs());
        if let Some((pp, pd)) = prev {
            slope_phi = slope_phi.max((p - pp).abs() / step);
            slope_dphi = slope_dphi.max((d - pd).abs() / step);
        }
        prev = Some((p, d));
    }
    let checks = [
        ("sup_phi", norms.sup_phi, max_phi, 1e-9),
        ("sup_dphi", norms.sup_dphi, max_dphi, 1e-9),
        ("lip_phi", norms.lip_phi, slope_phi, 1e-6),
        ("lip_dphi", norms.lip_dphi, slope_dphi, 1e-6),
    ];
    for (constant, declared, observed, tol) in checks {
        let declared = declared.expect("audited activations declare every constant");
        if observed > declared + tol {
            return Err(Error::NormAuditFailed {
                constant,
                declared,
                observed,
            });
        }
    }
    Ok(())
}
