//! Ensemble training and the two experiments built on it: the Wasserstein
//! sweep over widths and the Gaussian-band overlay.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ntkgauss_core::gp::{self, GpMoments};
use ntkgauss_core::kernels::LimitKernel;
use ntkgauss_core::network::{forward_batch, init_params_replica, train_gd};
use ntkgauss_core::{ot, rng, Dataset};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ReplicaPolicy, RunConfig};
use crate::data;
use crate::error::{HarnessError, Result};
use crate::fit::{power_law_fit, PowerLaw};

/// Bootstrap resamples behind each sweep row's spread estimate.
pub const BOOTSTRAP_ROUNDS: usize = 200;

/// Member index reserved for the Gaussian draws of a width group.
const GP_MEMBER: u32 = u32::MAX;
const BOOTSTRAP_MEMBER: u32 = u32::MAX - 1;

/// Trained networks of one width evaluated on a set of test points.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub width: usize,
    /// One row per replica, one column per test point.
    pub outputs: DMatrix<f64>,
    pub final_loss: Vec<f64>,
}

/// Trains `replicas` networks of width `width` on `ds` with full-batch
/// gradient descent and evaluates each on `test`.
///
/// Replica `r` of width group `group` draws its initialization from stream
/// `replica_id(group, r)`, so the result does not depend on scheduling.
pub fn train_ensemble(
    cfg: &RunConfig,
    ds: &Dataset,
    width: usize,
    group: u32,
    replicas: usize,
    test: &DMatrix<f64>,
) -> Result<Ensemble> {
    let act = cfg.act();
    let per: Vec<(DVector<f64>, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<(DVector<f64>, f64)> {
            let p0 = init_params_replica(cfg.n0, width, cfg.seed, rng::replica_id(group, r as u32))?;
            let traj = train_gd(&p0, act, ds, cfg.lr, cfg.steps, cfg.steps.max(1))?;
            let out = forward_batch(traj.final_params(), act, test)?;
            Ok((out, *traj.loss_at.last().expect("at least one checkpoint")))
        })
        .collect::<Result<_>>()?;
    let mut outputs = DMatrix::zeros(replicas, test.ncols());
    let mut final_loss = Vec::with_capacity(replicas);
    for (r, (out, loss)) in per.into_iter().enumerate() {
        outputs.row_mut(r).copy_from(&out.transpose());
        final_loss.push(loss);
    }
    Ok(Ensemble { width, outputs, final_loss })
}

/// Replica count at `width` under the config's policy, and the count the
/// sample-size rule asks for.
pub fn replica_budget(cfg: &RunConfig, width: usize) -> Result<(usize, usize)> {
    let required = ot::min_samples_for_width(width)?;
    let used = match cfg.replica_policy {
        ReplicaPolicy::Fixed => cfg.replicas,
        ReplicaPolicy::MinSamples => required.min(cfg.replicas),
    };
    Ok((used, required))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub width: usize,
    pub t: f64,
    pub w2_hat: f64,
    pub replicas: usize,
    pub required_replicas: usize,
    pub undersampled: bool,
    /// Bootstrap standard deviation of `w2_hat` over replica resampling.
    pub boot_sd: f64,
    /// `ln w2_hat` minus the fitted log value; absent without a fit.
    pub fit_residual: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub point: Vec<f64>,
    pub gp_mean: f64,
    pub gp_sd: f64,
    pub rows: Vec<SweepRow>,
    pub fit: Option<PowerLaw>,
    pub trainings: usize,
    pub undersampled: bool,
    pub warnings: Vec<String>,
}

/// Guard for the sample-size rule; returns whether any width is undersampled.
pub fn check_budget(cfg: &RunConfig) -> Result<bool> {
    let mut any = false;
    for &w in &cfg.widths {
        let (used, required) = replica_budget(cfg, w)?;
        if used < required {
            if !cfg.ack_undersampled {
                return Err(HarnessError::Undersampled { width: w, replicas: used, required });
            }
            any = true;
        }
    }
    Ok(any)
}

pub fn experiment_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let undersampled = check_budget(cfg)?;
    let ds = data::dataset_for(cfg)?;
    let point = data::sweep_point(cfg);
    let kernel = LimitKernel::new(cfg.act(), cfg.quadrature_order)?;
    let t = cfg.final_time();
    let moments = gp::gp_moments(&point, &ds, &kernel, t)?;

    let mut rows = Vec::with_capacity(cfg.widths.len());
    let mut trainings = 0;
    for (wi, &width) in cfg.widths.iter().enumerate() {
        let started = Instant::now();
        let (replicas, required) = replica_budget(cfg, width)?;
        if replicas == 0 {
            return Err(HarnessError::Argument(format!("width {width} would train zero replicas")));
        }
        let group = wi as u32;
        let ens = train_ensemble(cfg, &ds, width, group, replicas, &point)?;
        trainings += replicas;
        let nets: Vec<f64> = ens.outputs.column(0).iter().copied().collect();
        let draws = gp::sample_gp_stream(&moments, replicas, cfg.seed, rng::replica_id(group, GP_MEMBER))?;
        let gps: Vec<f64> = draws.column(0).iter().copied().collect();
        let w2_hat = ot::w2_1d_slices(&nets, &gps)?;
        let boot_sd = bootstrap_sd(&nets, &gps, cfg.seed, rng::replica_id(group, BOOTSTRAP_MEMBER))?;
        rows.push(SweepRow {
            width,
            t,
            w2_hat,
            replicas,
            required_replicas: required,
            undersampled: replicas < required,
            boot_sd,
            fit_residual: None,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }

    let mut warnings = Vec::new();
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.width as f64, r.w2_hat)).collect();
    let fit = match power_law_fit(&pts) {
        Ok(f) => {
            for r in rows.iter_mut() {
                r.fit_residual = Some(f.log_residual(r.width as f64, r.w2_hat));
            }
            Some(f)
        }
        Err(e) => {
            warnings.push(format!("power-law fit skipped: {e}"));
            None
        }
    };
    if undersampled {
        warnings.push("some widths have fewer replicas than the sample-size rule asks for".into());
    }
    Ok(SweepOutcome {
        point: point.column(0).iter().copied().collect(),
        gp_mean: moments.mean[0],
        gp_sd: moments.cov.get(0, 0).max(0.0).sqrt(),
        rows,
        fit,
        trainings,
        undersampled,
        warnings,
    })
}

/// Standard deviation of the equal-count W2 estimate when both samples are
/// resampled with replacement.
pub fn bootstrap_sd(a: &[f64], b: &[f64], seed: u64, stream: u64) -> Result<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return Ok(0.0);
    }
    let u = rng::uniforms(seed, stream, "bootstrap", 2 * n * BOOTSTRAP_ROUNDS, 0.0, n as f64);
    let pick = |k: usize| (u[k] as usize).min(n - 1);
    let mut stats = Vec::with_capacity(BOOTSTRAP_ROUNDS);
    let (mut ra, mut rb) = (vec![0.0; n], vec![0.0; n]);
    for round in 0..BOOTSTRAP_ROUNDS {
        let base = 2 * n * round;
        for i in 0..n {
            ra[i] = a[pick(base + i)];
            rb[i] = b[pick(base + n + i)];
        }
        stats.push(ot::w2_1d_slices(&ra, &rb)?);
    }
    Ok(ntkgauss_core::stats::variance(&stats).sqrt())
}

#[derive(Debug, Clone)]
pub struct BandsOutcome {
    pub width: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub moments: GpMoments,
    pub band: Vec<(f64, f64)>,
    pub ensemble: Ensemble,
    /// Fraction of (replica, test point) values inside the band.
    pub coverage: Option<f64>,
    pub undersampled: bool,
    pub warnings: Vec<String>,
}

/// Trains the ensemble at the first configured width and sets it against the
/// pointwise band of `G_t` on the test points.
///
/// The sample-size rule concerns Wasserstein estimates, so a small ensemble
/// here is only recorded, never refused.
pub fn experiment_bands(cfg: &RunConfig) -> Result<BandsOutcome> {
    let width = cfg.widths[0];
    let mut warnings = Vec::new();
    if cfg.widths.len() > 1 {
        warnings.push(format!("bands uses the first width ({width}); {} others ignored", cfg.widths.len() - 1));
    }
    let ds = data::dataset_for(cfg)?;
    let test = data::test_points(&cfg.test_points, cfg.n0, cfg.seed);
    let kernel = LimitKernel::new(cfg.act(), cfg.quadrature_order)?;
    let t = cfg.final_time();
    let moments = gp::gp_moments(&test, &ds, &kernel, t)?;
    let band = gp::gp_band(&moments, cfg.band_level)?;
    let ensemble = train_ensemble(cfg, &ds, width, 0, cfg.replicas, &test)?;
    let coverage = (cfg.replicas > 0).then(|| band_coverage(&ensemble.outputs, &band));
    let undersampled = width >= 2 && cfg.replicas < ot::min_samples_for_width(width)?;
    Ok(BandsOutcome {
        width,
        t,
        x: test.row(0).iter().copied().collect(),
        moments,
        band,
        ensemble,
        coverage,
        undersampled,
        warnings,
    })
}

pub fn band_coverage(outputs: &DMatrix<f64>, band: &[(f64, f64)]) -> f64 {
    let total = outputs.len();
    if total == 0 {
        return f64::NAN;
    }
    let inside = outputs
        .row_iter()
        .flat_map(|row| row.iter().zip(band).map(|(v, (lo, hi))| (lo <= v && v <= hi) as usize).collect::<Vec<_>>())
        .sum::<usize>();
    inside as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Layout;

    fn small() -> RunConfig {
        let base = RunConfig::default();
        RunConfig {
            widths: vec![8, 16, 32],
            replicas: 40,
            replica_policy: ReplicaPolicy::Fixed,
            steps: 5,
            ack_undersampled: true,
            dataset: crate::config::DatasetSpec { n: 1, ..base.dataset.clone() },
            ..base
        }
    }

    #[test]
    fn ensemble_ignores_thread_count() {
        let cfg = small();
        let ds = data::dataset_for(&cfg).unwrap();
        let test = DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 2.0]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| train_ensemble(&cfg, &ds, 16, 0, 25, &test)).unwrap();
        let b = four.install(|| train_ensemble(&cfg, &ds, 16, 0, 25, &test)).unwrap();
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn undersampled_budget_is_refused_without_ack() {
        let mut cfg = small();
        cfg.ack_undersampled = false;
        assert!(matches!(experiment_sweep(&cfg), Err(HarnessError::Undersampled { width: 8, .. })));
        cfg.replica_policy = ReplicaPolicy::MinSamples;
        cfg.replicas = 100_000;
        assert!(!check_budget(&cfg).unwrap());
    }

    #[test]
    fn sweep_counts_trainings_and_fits() {
        let cfg = small();
        let out = experiment_sweep(&cfg).unwrap();
        assert_eq!(out.trainings, 3 * 40);
        assert_eq!(out.rows.len(), 3);
        assert!(out.fit.is_some());
        assert!(out.undersampled);
        for r in &out.rows {
            assert!(r.w2_hat >= 0.0 && r.boot_sd > 0.0);
            assert!(r.fit_residual.is_some());
        }
    }

    #[test]
    fn single_width_skips_fit() {
        let mut cfg = small();
        cfg.widths = vec![16];
        let out = experiment_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.fit.is_none());
        assert!(out.rows[0].fit_residual.is_none());
    }

    #[test]
    fn repeated_width_agrees_within_bootstrap_noise() {
        let mut cfg = small();
        cfg.widths = vec![16, 16];
        cfg.replicas = 400;
        let out = experiment_sweep(&cfg).unwrap();
        let (a, b) = (&out.rows[0], &out.rows[1]);
        assert_ne!(a.w2_hat, b.w2_hat);
        let c = a.boot_sd.max(b.boot_sd);
        assert!((a.w2_hat - b.w2_hat).abs() < 4.0 * c, "{} vs {} (sd {c})", a.w2_hat, b.w2_hat);
    }

    #[test]
    fn zero_replica_bands_are_gp_only() {
        let mut cfg = small();
        cfg.replicas = 0;
        cfg.test_points.count = 11;
        let out = experiment_bands(&cfg).unwrap();
        assert_eq!(out.ensemble.outputs.nrows(), 0);
        assert!(out.coverage.is_none());
        assert_eq!(out.band.len(), 11);
    }

    #[test]
    fn gp_mean_interpolates_a_single_noiseless_label() {
        let mut cfg = small();
        cfg.replicas = 0;
        cfg.dataset.noise_sd = 0.0;
        cfg.lr = 1.0;
        cfg.steps = 100_000;
        let ds = data::dataset_for(&cfg).unwrap();
        cfg.test_points = crate::config::TestSpec { count: 1, lo: ds.x[(0, 0)], hi: ds.x[(0, 0)], layout: Layout::Grid };
        let out = experiment_bands(&cfg).unwrap();
        assert!((out.moments.mean[0] - ds.y[0]).abs() < 1e-4);
    }

    #[test]
    fn coverage_counts_inclusive_bounds() {
        let outputs = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let band = [(0.0, 1.0), (-1.0, 0.5)];
        assert_eq!(band_coverage(&outputs, &band), 0.5);
    }
}
