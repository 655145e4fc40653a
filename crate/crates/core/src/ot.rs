//! Exact 2-Wasserstein distances between equal-size empirical measures.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest support handled by the cubic assignment solver.
pub const ASSIGN_CAP: usize = 512;

/// Safety factor turning `N ≫ (n1 / ln n1)²` into `N ≥ 10 (n1 / ln n1)²`.
pub const SAMPLE_FACTOR: f64 = 10.0;

/// Equal-weight point cloud, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDist {
    pub samples: DMatrix<f64>,
    pub seed: Option<u64>,
}

impl EmpiricalDist {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::EmptyDist);
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(EmpiricalDist { samples, seed: None })
    }

    pub fn from_1d(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn count(&self) -> usize {
        self.samples.nrows()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }
}

fn check_pair(a: &EmpiricalDist, b: &EmpiricalDist) -> Result<()> {
    if a.count() != b.count() {
        return Err(Error::UnequalSupport(a.count(), b.count()));
    }
    if a.dim() != b.dim() {
        return Err(Error::InvalidShape(format!("dimensions {} and {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// 1-D `W2` by the monotone (sorted) coupling.
pub fn w2_1d(a: &EmpiricalDist, b: &EmpiricalDist) -> Result<f64> {
    check_pair(a, b)?;
    if a.dim() != 1 {
        return Err(Error::InvalidShape(format!("expected 1-D samples, got dimension {}", a.dim())));
    }
    Ok(w2_sorted(a.samples.as_slice(), b.samples.as_slice()))
}

/// 1-D `W2` straight from two equal-length slices.
pub fn w2_1d_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    w2_1d(&EmpiricalDist::from_1d(a)?, &EmpiricalDist::from_1d(b)?)
}

fn w2_sorted(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let ss: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Exact `W2` in `R^d` via a minimum-cost perfect matching.
pub fn w2_assign(a: &EmpiricalDist, b: &EmpiricalDist) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.count();
    if n > ASSIGN_CAP {
        return Err(Error::TooLarge { size: n, cap: ASSIGN_CAP });
    }
    let cost = DMatrix::from_fn(n, n, |i, j| (a.samples.row(i) - b.samples.row(j)).norm_squared());
    let perm = assignment(&cost);
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((total / n as f64).sqrt())
}

/// Minimum-cost assignment of rows to columns of a square cost matrix.
///
/// Shortest augmenting path Hungarian method with dual potentials, `O(n³)`.
/// Returns `perm` with row `i` assigned to column `perm[i]`.
pub fn assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}

/// `W2(N(mu1, sd1²), N(mu2, sd2²)) = √((mu1 − mu2)² + (sd1 − sd2)²)`.
pub fn gaussian_w2(mu1: f64, sd1: f64, mu2: f64, sd2: f64) -> Result<f64> {
    if sd1 < 0.0 || sd2 < 0.0 {
        return Err(Error::InvalidArgument(format!("negative standard deviation ({sd1}, {sd2})")));
    }
    Ok(((mu1 - mu2).powi(2) + (sd1 - sd2).powi(2)).sqrt())
}

/// Samples needed at width `n1` under `N ≥ factor · (n1 / ln n1)²`.
pub fn samples_for_width(n1: usize, factor: f64) -> Result<usize> {
    if n1 < 2 {
        return Err(Error::InvalidArgument(format!("width {n1} must be at least 2")));
    }
    let w = n1 as f64;
    Ok((factor * (w / w.ln()).powi(2)).ceil() as usize)
}

/// `ceil(10 (n1 / ln n1)²)`.
pub fn min_samples_for_width(n1: usize) -> Result<usize> {
    samples_for_width(n1, SAMPLE_FACTOR)
}

/// Largest width `n1 ≥ 3` with `factor · (n1 / ln n1)² ≤ samples`, or `None`.
///
/// `n1 / ln n1` increases for `n1 ≥ 3`, so the admissible widths form a prefix.
pub fn max_width_for_samples(samples: usize, factor: f64) -> Option<usize> {
    let ok = |w: usize| {
        let w = w as f64;
        factor * (w / w.ln()).powi(2) <= samples as f64
    };
    if !ok(3) {
        return None;
    }
    let mut lo = 3usize;
    let mut hi = 6usize;
    while ok(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn d1(v: &[f64]) -> EmpiricalDist {
        EmpiricalDist::from_1d(v).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn w2_1d_examples() {
        assert_eq!(w2_1d(&d1(&[0.3, -1.0, 2.0]), &d1(&[2.0, 0.3, -1.0])).unwrap(), 0.0);
        assert_eq!(w2_1d(&d1(&[0.0, 1.0]), &d1(&[1.0, 2.0])).unwrap(), 1.0);
    }

    #[test]
    fn w2_1d_errors() {
        assert_eq!(w2_1d(&d1(&[0.0]), &d1(&[1.0, 2.0])).unwrap_err(), Error::UnequalSupport(1, 2));
        assert_eq!(EmpiricalDist::from_1d(&[]).unwrap_err(), Error::EmptyDist);
    }

    #[test]
    fn assign_matches_1d_and_identity() {
        let a = rng::standard_normals(1, 0, "a", 40);
        let b = rng::standard_normals(1, 1, "b", 40);
        let exact = w2_1d(&d1(&a), &d1(&b)).unwrap();
        let via = w2_assign(&d1(&a), &d1(&b)).unwrap();
        assert!((exact - via).abs() < 1e-12);
        let cloud = EmpiricalDist::new(DMatrix::from_vec(10, 3, rng::standard_normals(2, 0, "c", 30))).unwrap();
        assert_eq!(w2_assign(&cloud, &cloud).unwrap(), 0.0);
    }

    #[test]
    fn assign_matches_exhaustive_search() {
        let perms = permutations(6);
        assert_eq!(perms.len(), 720);
        for trial in 0..20 {
            let a = DMatrix::from_vec(6, 2, rng::standard_normals(trial, 0, "cloud-a", 12));
            let b = DMatrix::from_vec(6, 2, rng::standard_normals(trial, 0, "cloud-b", 12));
            let brute = perms
                .iter()
                .map(|p| (0..6).map(|i| (a.row(i) - b.row(p[i])).norm_squared()).sum::<f64>() / 6.0)
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let got = w2_assign(&EmpiricalDist::new(a).unwrap(), &EmpiricalDist::new(b).unwrap()).unwrap();
            assert!((got - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn assign_cap() {
        let big = EmpiricalDist::new(DMatrix::zeros(513, 1)).unwrap();
        assert!(matches!(w2_assign(&big, &big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn gaussian_w2_examples() {
        assert_eq!(gaussian_w2(0.5, 2.0, 0.5, 2.0).unwrap(), 0.0);
        assert_eq!(gaussian_w2(0.0, 1.0, 3.0, 1.0).unwrap(), 3.0);
        assert_eq!(gaussian_w2(0.0, 1.0, 0.0, 3.0).unwrap(), 2.0);
        assert!(gaussian_w2(0.0, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn sample_rule() {
        let e2 = std::f64::consts::E.powi(2);
        let anchor = 10.0 * (e2 / 2.0f64).powi(2);
        assert_eq!(anchor.ceil(), 137.0);
        assert!(min_samples_for_width(1).is_err());
        for w in 8..2000 {
            assert!(min_samples_for_width(2 * w).unwrap() > min_samples_for_width(w).unwrap());
        }
        let w = max_width_for_samples(10_000, 1.0).unwrap();
        assert!((600..=700).contains(&w), "{w}");
        assert!(samples_for_width(w, 1.0).unwrap() <= 10_000);
        assert!(samples_for_width(w + 1, 1.0).unwrap() > 10_000);
        let w10 = max_width_for_samples(10_000, SAMPLE_FACTOR).unwrap();
        assert!(min_samples_for_width(w10).unwrap() <= 10_000);
        assert!(min_samples_for_width(w10 + 1).unwrap() > 10_000);
        assert_eq!(max_width_for_samples(1, 10.0), None);
    }

    proptest! {
        #[test]
        fn metric_axioms(seed in any::<u64>(), n in 1usize..40, shift in -5.0f64..5.0) {
            let a = rng::standard_normals(seed, 0, "a", n);
            let b = rng::standard_normals(seed, 1, "b", n);
            let c = rng::uniforms(seed, 2, "c", n, -2.0, 2.0);
            let ab = w2_1d_slices(&a, &b).unwrap();
            prop_assert_eq!(ab, w2_1d_slices(&b, &a).unwrap());
            let ac = w2_1d_slices(&a, &c).unwrap();
            let cb = w2_1d_slices(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-10);
            // Any pairing is a coupling, so it bounds the optimum.
            let paired = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt();
            prop_assert!(ab <= paired + 1e-12);
            let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
            prop_assert!((w2_1d_slices(&sa, &sb).unwrap() - ab).abs() < 1e-9);
            prop_assert!((w2_1d_slices(&sa, &a).unwrap() - shift.abs()).abs() < 1e-9);
        }
    }
}
