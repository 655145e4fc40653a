//! Command-line front end. Every subcommand resolves a [`RunConfig`], writes
//! its outputs and a `meta.json` manifest into the output directory, and
//! returns human-readable summary lines.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use ntkgauss_core::bounds::{self, TheoryInputs};
use ntkgauss_core::kernels::{LimitKernel, KernelKind};
use ntkgauss_core::{gp, matops, ot};
use serde_json::json;

use crate::config::{Overrides, RunConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{self, BandsOutcome, SweepOutcome};
use crate::output::{self, num, Chart, Manifest, Mark, Scale};
use crate::data;

/// Samples behind the width anchor quoted alongside the sample-size rule.
pub const ANCHOR_SAMPLES: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "ntkgauss", version, about = "Trained shallow networks against their Gaussian-process limit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named configuration: default, desk-sweep, desk-bands, paper-fig1-left,
    /// paper-fig1-center, paper-fig1-right.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_delimiter = ',', value_name = "CSV-LIST")]
    pub widths: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true, value_name = "NAME")]
    pub activation: Option<String>,
    /// Run even when replicas fall short of the sample-size rule.
    #[arg(long, global = true)]
    pub ack_undersampled: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "NTKGAUSS_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an ensemble at every width and record outputs on the test points.
    Train,
    /// Mean, variance and band of G_t on the test points.
    GpMoments,
    /// Ensemble curves against the G_t band (bands.csv, bands.svg).
    Bands,
    /// Empirical W2 between ensemble and G_t across widths (sweep.csv, sweep.svg).
    Sweep,
    /// Evaluate the width condition on the configured dataset.
    CheckAssumptions {
        #[arg(long, default_value_t = 5.0)]
        r: f64,
        /// Upper end of the search for the smallest admissible width.
        #[arg(long, default_value_t = 1usize << 40)]
        max_width: usize,
    },
    /// Sample-size rule N >= factor (n1 / ln n1)^2, in either direction.
    MinSamples {
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = ot::SAMPLE_FACTOR)]
        factor: f64,
    },
    /// Convergence-rate template over widths and times, up to unknown constants.
    RateEnvelope {
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,10")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        a1: f64,
        #[arg(long, default_value_t = 1.0)]
        a2: f64,
        #[arg(long, default_value_t = 5.0)]
        r: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::GpMoments => "gp-moments",
            Command::Bands => "bands",
            Command::Sweep => "sweep",
            Command::CheckAssumptions { .. } => "check-assumptions",
            Command::MinSamples { .. } => "min-samples",
            Command::RateEnvelope { .. } => "rate-envelope",
        }
    }
}

/// What a finished subcommand reports.
#[derive(Debug)]
pub struct Report {
    pub lines: Vec<String>,
    pub out: PathBuf,
    pub manifest: Manifest,
}

pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        out: common.out.clone(),
        widths: common.widths.clone(),
        replicas: common.replicas,
        lr: common.lr,
        steps: common.steps,
        activation: common.activation.clone(),
        ack_undersampled: common.ack_undersampled,
    })?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Report> {
    let cfg = resolve_config(&cli.common)?;
    let workers = match cli.common.workers {
        Some(0) => return Err(HarnessError::Argument("--workers must be positive".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Argument(format!("cannot start {workers} workers: {e}")))?;
    output::ensure_dir(&cfg.out)?;
    let mut manifest = Manifest::new(cli.command.name(), cli.common.preset.as_deref(), &cfg, workers);
    if cli.common.preset.as_deref().is_some_and(RunConfig::is_paper_scale) {
        manifest.warnings.push("paper-scale preset: expect hours of runtime on a laptop".into());
    }
    let started = Instant::now();
    let lines = pool.install(|| match &cli.command {
        Command::Train => cmd_train(&cfg, &mut manifest),
        Command::GpMoments => cmd_gp_moments(&cfg, &mut manifest),
        Command::Bands => cmd_bands(&cfg, &mut manifest),
        Command::Sweep => cmd_sweep(&cfg, &mut manifest),
        Command::CheckAssumptions { r, max_width } => cmd_check(&cfg, *r, *max_width, &mut manifest),
        Command::MinSamples { width, samples, factor } => cmd_min_samples(&cfg, *width, *samples, *factor, &mut manifest),
        Command::RateEnvelope { times, a1, a2, r } => cmd_rate(&cfg, times, *a1, *a2, *r, &mut manifest),
    })?;
    manifest.wall_seconds.insert("total".into(), started.elapsed().as_secs_f64());
    manifest.write(&cfg.out)?;
    let mut lines = lines;
    lines.extend(manifest.warnings.iter().map(|w| format!("warning: {w}")));
    Ok(Report { lines, out: cfg.out.clone(), manifest })
}

fn save_csv(cfg: &RunConfig, m: &mut Manifest, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    output::write_csv(&cfg.out.join(name), header, rows)?;
    m.files.push(name.into());
    Ok(())
}

fn save_svg(cfg: &RunConfig, m: &mut Manifest, name: &str, chart: &Chart) -> Result<()> {
    output::write_text(&cfg.out.join(name), &chart.render())?;
    m.files.push(name.into());
    Ok(())
}

fn point_header(n0: usize) -> Vec<String> {
    if n0 == 1 {
        vec!["x".into()]
    } else {
        (1..=n0).map(|i| format!("x_{i}")).collect()
    }
}

fn cmd_train(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<String>> {
    let ds = data::dataset_for(cfg)?;
    let test = data::test_points(&cfg.test_points, cfg.n0, cfg.seed);
    let mut header: Vec<String> = ["width", "replica", "t", "final_loss"].map(String::from).to_vec();
    header.extend((1..=test.ncols()).map(|j| format!("f_{j}")));
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (wi, &w) in cfg.widths.iter().enumerate() {
        let started = Instant::now();
        let ens = experiment::train_ensemble(cfg, &ds, w, wi as u32, cfg.replicas, &test)?;
        m.wall_seconds.insert(format!("width_{w}"), started.elapsed().as_secs_f64());
        for r in 0..cfg.replicas {
            let mut row = vec![w.to_string(), r.to_string(), num(cfg.final_time()), num(ens.final_loss[r])];
            row.extend(ens.outputs.row(r).iter().map(|v| num(*v)));
            rows.push(row);
        }
        let mean_loss = ens.final_loss.iter().sum::<f64>() / ens.final_loss.len().max(1) as f64;
        lines.push(format!("width {w}: {} replicas, mean final loss {mean_loss:.3e}", cfg.replicas));
    }
    save_csv(cfg, m, "train.csv", &header, &rows)?;
    write_points(cfg, m, &test)?;
    m.results = json!({ "t": cfg.final_time(), "trainings": cfg.widths.len() * cfg.replicas });
    Ok(lines)
}

fn write_points(cfg: &RunConfig, m: &mut Manifest, test: &DMatrix<f64>) -> Result<()> {
    let mut header = vec!["index".to_string()];
    header.extend(point_header(cfg.n0));
    let rows: Vec<Vec<String>> = (0..test.ncols())
        .map(|j| {
            let mut row = vec![(j + 1).to_string()];
            row.extend(test.column(j).iter().map(|v| num(*v)));
            row
        })
        .collect();
    save_csv(cfg, m, "test_points.csv", &header, &rows)
}

fn cmd_gp_moments(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<String>> {
    let ds = data::dataset_for(cfg)?;
    let test = data::test_points(&cfg.test_points, cfg.n0, cfg.seed);
    let kernel = LimitKernel::new(cfg.act(), cfg.quadrature_order)?;
    let mo = gp::gp_moments(&test, &ds, &kernel, cfg.final_time())?;
    let band = gp::gp_band(&mo, cfg.band_level)?;
    let var = mo.variances();
    let mut header = point_header(cfg.n0);
    header.extend(["mu", "var", "lo", "hi"].map(String::from));
    let rows: Vec<Vec<String>> = (0..test.ncols())
        .map(|j| {
            let mut row: Vec<String> = test.column(j).iter().map(|v| num(*v)).collect();
            row.extend([num(mo.mean[j]), num(var[j]), num(band[j].0), num(band[j].1)]);
            row
        })
        .collect();
    save_csv(cfg, m, "gp_moments.csv", &header, &rows)?;
    m.results = json!({ "t": mo.time, "kernel": mo.provenance, "points": test.ncols() });
    Ok(vec![format!("G_t moments at t = {} on {} points ({})", mo.time, test.ncols(), mo.provenance)])
}

pub fn bands_table(out: &BandsOutcome) -> (Vec<String>, Vec<Vec<String>>) {
    let reps = out.ensemble.outputs.nrows();
    let mut header: Vec<String> = ["x", "mu", "lo", "hi"].map(String::from).to_vec();
    header.extend((1..=reps).map(|r| format!("net_{r}")));
    let rows = (0..out.x.len())
        .map(|j| {
            let mut row = vec![num(out.x[j]), num(out.moments.mean[j]), num(out.band[j].0), num(out.band[j].1)];
            row.extend((0..reps).map(|r| num(out.ensemble.outputs[(r, j)])));
            row
        })
        .collect();
    (header, rows)
}

fn cmd_bands(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<String>> {
    let out = experiment::experiment_bands(cfg)?;
    let (header, rows) = bands_table(&out);
    save_csv(cfg, m, "bands.csv", &header, &rows)?;

    let mut chart = Chart::new(
        &format!("width {} at t = {:.3}: networks against the {:.0}% band", out.width, out.t, 100.0 * cfg.band_level),
        "x",
        "f(x)",
        Scale::Linear,
        Scale::Linear,
    );
    chart.comments.push(format!("config {}", m.config_hash));
    chart.comments.push("x,mu,lo,hi".into());
    for j in 0..out.x.len() {
        chart.comments.push(format!("{},{},{},{}", out.x[j], out.moments.mean[j], out.band[j].0, out.band[j].1));
    }
    chart.marks.push(Mark::Area {
        upper: out.x.iter().zip(&out.band).map(|(x, b)| (*x, b.1)).collect(),
        lower: out.x.iter().zip(&out.band).map(|(x, b)| (*x, b.0)).collect(),
        color: "#bbbbbb",
    });
    for r in 0..out.ensemble.outputs.nrows() {
        let pts = out.x.iter().enumerate().map(|(j, x)| (*x, out.ensemble.outputs[(r, j)])).collect();
        chart.marks.push(Mark::Line { points: pts, color: "#1f77b4", width: 0.8, opacity: 0.4 });
    }
    chart.marks.push(Mark::Line {
        points: out.x.iter().zip(out.moments.mean.iter()).map(|(x, y)| (*x, *y)).collect(),
        color: "black",
        width: 2.0,
        opacity: 1.0,
    });
    save_svg(cfg, m, "bands.svg", &chart)?;

    m.undersampled = out.undersampled;
    m.warnings.extend(out.warnings.iter().cloned());
    m.results = json!({ "width": out.width, "t": out.t, "replicas": cfg.replicas, "coverage": out.coverage });
    let mut lines = vec![format!("width {}, t = {}, {} replicas", out.width, out.t, cfg.replicas)];
    if let Some(c) = out.coverage {
        lines.push(format!("band coverage: {c:.4}"));
    }
    Ok(lines)
}

pub fn sweep_table(out: &SweepOutcome) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["width", "t", "replicas", "required_replicas", "undersampled", "w2_hat", "boot_sd", "fit_residual"]
        .map(String::from)
        .to_vec();
    let rows = out
        .rows
        .iter()
        .map(|r| {
            vec![
                r.width.to_string(),
                num(r.t),
                r.replicas.to_string(),
                r.required_replicas.to_string(),
                r.undersampled.to_string(),
                num(r.w2_hat),
                num(r.boot_sd),
                r.fit_residual.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    (header, rows)
}

fn cmd_sweep(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<String>> {
    let out = experiment::experiment_sweep(cfg)?;
    let (header, rows) = sweep_table(&out);
    save_csv(cfg, m, "sweep.csv", &header, &rows)?;

    let mut chart = Chart::new("empirical W2 between trained networks and G_t", "width", "W2", Scale::Log, Scale::Log);
    chart.comments.push(format!("config {}", m.config_hash));
    chart.comments.push("width,w2_hat,boot_sd".into());
    chart.comments.extend(out.rows.iter().map(|r| format!("{},{},{}", r.width, r.w2_hat, r.boot_sd)));
    chart.marks.push(Mark::Dots { points: out.rows.iter().map(|r| (r.width as f64, r.w2_hat)).collect(), color: "#1f77b4" });
    if let Some(f) = out.fit {
        chart.comments.push(format!("fit: w2 = {} * width^{} (r2 {})", f.prefactor, f.exponent, f.r2));
        let lo = out.rows.iter().map(|r| r.width).min().unwrap_or(1) as f64;
        let hi = out.rows.iter().map(|r| r.width).max().unwrap_or(1) as f64;
        let pts = (0..=32).map(|k| lo * (hi / lo).powf(k as f64 / 32.0)).map(|x| (x, f.eval(x))).collect();
        chart.marks.push(Mark::Line { points: pts, color: "#d62728", width: 1.5, opacity: 1.0 });
    }
    save_svg(cfg, m, "sweep.svg", &chart)?;

    for r in &out.rows {
        m.wall_seconds.insert(format!("width_{}", r.width), r.wall_seconds);
    }
    m.undersampled = out.undersampled;
    m.warnings.extend(out.warnings.iter().cloned());
    m.results = json!({
        "point": out.point,
        "gp_mean": out.gp_mean,
        "gp_sd": out.gp_sd,
        "trainings": out.trainings,
        "fit": out.fit,
        "rows": out.rows.iter().map(|r| json!({
            "width": r.width, "w2_hat": r.w2_hat, "replicas": r.replicas, "undersampled": r.undersampled
        })).collect::<Vec<_>>(),
    });
    let mut lines: Vec<String> = out
        .rows
        .iter()
        .map(|r| format!("width {:>5}: W2 {:.5} (boot sd {:.5}, {} replicas)", r.width, r.w2_hat, r.boot_sd, r.replicas))
        .collect();
    if let Some(f) = out.fit {
        lines.push(format!("fit: W2 ~ {:.4} * width^{:.4} (r2 {:.3})", f.prefactor, f.exponent, f.r2));
    }
    Ok(lines)
}

/// Smallest eigenvalue of the limiting NTK on the configured training inputs.
pub fn kernel_lambda_min(cfg: &RunConfig) -> Result<f64> {
    let ds = data::dataset_for(cfg)?;
    let kernel = LimitKernel::new(cfg.act(), cfg.quadrature_order)?;
    Ok(matops::min_eig(&kernel.gram(KernelKind::NtkLimit, &ds.x)?)?)
}

fn theory_inputs(cfg: &RunConfig, r: f64) -> Result<TheoryInputs> {
    let audit = bounds::activation_norms(cfg.act())?;
    let ds = data::dataset_for(cfg)?;
    Ok(TheoryInputs {
        norm_x: ds.x.norm(),
        norm_y: ds.y.norm(),
        lam_min_inf: kernel_lambda_min(cfg)?,
        n0: cfg.n0,
        n: ds.len(),
        r,
        ..TheoryInputs::with_activation(&audit.norms)?
    })
}

fn cmd_check(cfg: &RunConfig, r: f64, max_width: usize, m: &mut Manifest) -> Result<Vec<String>> {
    let ti = theory_inputs(cfg, r)?;
    let header = ["width", "lhs", "lambda_min", "holds"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut lines = vec![format!("lambda_min(k_inf) = {:.6e}", ti.lam_min_inf)];
    for &w in &cfg.widths {
        let t = TheoryInputs { n1: w, ..ti };
        let lhs = bounds::assumption_r_lhs(&t)?;
        let holds = lhs < ti.lam_min_inf;
        rows.push(vec![w.to_string(), num(lhs), num(ti.lam_min_inf), holds.to_string()]);
        lines.push(format!("width {w:>8}: lhs {lhs:.6e} -> {}", if holds { "pass" } else { "fail" }));
    }
    let smallest = bounds::smallest_admissible_width(&ti, max_width)?;
    lines.push(match smallest {
        Some(w) => format!("smallest admissible width: {w}"),
        None => format!("no admissible width up to {max_width}"),
    });
    save_csv(cfg, m, "assumptions.csv", &header, &rows)?;
    m.results = json!({ "lambda_min": ti.lam_min_inf, "r": r, "smallest_admissible_width": smallest });
    Ok(lines)
}

/// Largest width the anchor sample count supports under `factor`.
pub fn anchor_width(factor: f64) -> Option<usize> {
    ot::max_width_for_samples(ANCHOR_SAMPLES, factor)
}

fn cmd_min_samples(
    cfg: &RunConfig,
    width: Option<usize>,
    samples: Option<usize>,
    factor: f64,
    m: &mut Manifest,
) -> Result<Vec<String>> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(HarnessError::Argument(format!("factor {factor} must be positive")));
    }
    let samples = samples.or(if width.is_none() { Some(ANCHOR_SAMPLES) } else { None });
    let header = ["factor", "width", "samples"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut lines = vec![format!("rule: N >= {factor} * (n1 / ln n1)^2")];
    let mut results = serde_json::Map::new();
    if let Some(w) = width {
        let need = ot::samples_for_width(w, factor)?;
        let bare = ot::samples_for_width(w, 1.0)?;
        lines.push(format!("width {w}: N >= {need} (bare ratio without the safety factor: {bare})"));
        rows.push(vec![num(factor), w.to_string(), need.to_string()]);
        rows.push(vec![num(1.0), w.to_string(), bare.to_string()]);
        results.insert("required_samples".into(), json!(need));
        results.insert("bare_samples".into(), json!(bare));
    }
    if let Some(n) = samples {
        let wmax = ot::max_width_for_samples(n, factor);
        let bare = ot::max_width_for_samples(n, 1.0);
        let show = |w: Option<usize>| w.map_or("none".to_string(), |w| w.to_string());
        lines.push(format!("N = {n}: max width {} (bare ratio: {})", show(wmax), show(bare)));
        rows.push(vec![num(factor), show(wmax), n.to_string()]);
        rows.push(vec![num(1.0), show(bare), n.to_string()]);
        results.insert("max_width".into(), json!(wmax));
        results.insert("bare_max_width".into(), json!(bare));
    }
    let anchor = anchor_width(1.0);
    lines.push(format!(
        "anchor: N = {ANCHOR_SAMPLES} with the bare ratio gives max width {} (quoted as approximately 650)",
        anchor.map_or("none".into(), |w| w.to_string())
    ));
    results.insert("anchor_samples".into(), json!(ANCHOR_SAMPLES));
    results.insert("anchor_width".into(), json!(anchor));
    save_csv(cfg, m, "min_samples.csv", &header, &rows)?;
    m.results = serde_json::Value::Object(results);
    Ok(lines)
}

fn cmd_rate(cfg: &RunConfig, times: &[f64], a1: f64, a2: f64, r: f64, m: &mut Manifest) -> Result<Vec<String>> {
    let ti = theory_inputs(cfg, r)?;
    let header = ["width", "t", "rate"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut chart = Chart::new(
        &format!("W2^2 rate template, up to unknown constants (a1 = {a1}, a2 = {a2}, r = {r})"),
        "width",
        "bound",
        Scale::Log,
        Scale::Log,
    );
    chart.comments.push("up to unknown constants".into());
    chart.comments.push("width,t,rate".into());
    const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
    for (k, &t) in times.iter().enumerate() {
        let mut pts = Vec::new();
        for &w in &cfg.widths {
            let rate = bounds::theorem_rate(&TheoryInputs { n1: w, ..ti }, t, a1, a2)?;
            rows.push(vec![w.to_string(), num(t), num(rate)]);
            chart.comments.push(format!("{w},{t},{rate}"));
            pts.push((w as f64, rate));
        }
        chart.marks.push(Mark::Line { points: pts, color: COLORS[k % COLORS.len()], width: 1.5, opacity: 1.0 });
    }
    save_csv(cfg, m, "rate_envelope.csv", &header, &rows)?;
    save_svg(cfg, m, "rate_envelope.svg", &chart)?;
    m.results = json!({ "lambda_min": ti.lam_min_inf, "a1": a1, "a2": a2, "r": r, "note": "up to unknown constants" });
    Ok(vec![format!(
        "rate template for {} widths x {} times written (up to unknown constants; lambda_min = {:.4e})",
        cfg.widths.len(),
        times.len(),
        ti.lam_min_inf
    )])
}
