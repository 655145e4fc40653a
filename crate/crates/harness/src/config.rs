//! Run configuration: a versioned TOML file, named presets, and flag overrides.
//!
//! A complete file looks like
//!
//! ```toml
//! version = 1
//! activation = "sigmoid"
//! n0 = 1
//! seed = 0
//! widths = [16, 32, 64, 128, 256]
//! replicas = 2000
//! replica_policy = "min-samples"   # or "fixed"
//! lr = 0.1
//! steps = 10
//! quadrature_order = 64
//! ack_undersampled = false
//! band_level = 0.95
//! out = "out"
//!
//! [dataset]
//! lo = -10.0
//! hi = 10.0
//! n = 2
//! noise_sd = 0.1
//!
//! [test_points]
//! count = 200
//! lo = -10.0
//! hi = 10.0
//! layout = "grid"                  # or "uniform"
//! ```
//!
//! Every key is optional and falls back to [`RunConfig::default`]. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use ntkgauss_core::Activation;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const CONFIG_VERSION: u32 = 1;

pub const PRESETS: [&str; 6] =
    ["default", "desk-sweep", "desk-bands", "paper-fig1-left", "paper-fig1-center", "paper-fig1-right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicaPolicy {
    /// `replicas` networks at every width.
    Fixed,
    /// `min(min_samples_for_width(w), replicas)` networks at width `w`.
    MinSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Grid,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub noise_sd: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec { lo: -10.0, hi: 10.0, n: 2, noise_sd: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSpec {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
    pub layout: Layout,
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec { count: 200, lo: -10.0, hi: 10.0, layout: Layout::Grid }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub activation: String,
    pub n0: usize,
    pub seed: u64,
    pub widths: Vec<usize>,
    pub replicas: usize,
    pub replica_policy: ReplicaPolicy,
    pub lr: f64,
    pub steps: usize,
    pub quadrature_order: usize,
    pub ack_undersampled: bool,
    pub band_level: f64,
    /// Input at which the sweep compares the ensemble with `G_t`. Drawn
    /// uniformly from the test interval when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_point: Option<Vec<f64>>,
    pub out: PathBuf,
    pub dataset: DatasetSpec,
    pub test_points: TestSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            activation: "sigmoid".into(),
            n0: 1,
            seed: 0,
            widths: vec![16, 32, 64, 128, 256],
            replicas: 2000,
            replica_policy: ReplicaPolicy::MinSamples,
            lr: 0.1,
            steps: 10,
            quadrature_order: ntkgauss_core::kernels::DEFAULT_ORDER,
            ack_undersampled: false,
            band_level: 0.95,
            sweep_point: None,
            out: PathBuf::from("out"),
            dataset: DatasetSpec::default(),
            test_points: TestSpec::default(),
        }
    }
}

/// Command-line values that replace config entries when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub widths: Option<Vec<usize>>,
    pub replicas: Option<usize>,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub activation: Option<String>,
    pub ack_undersampled: bool,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = RunConfig::default();
        let cfg = match name {
            "default" => base,
            "desk-sweep" => RunConfig { dataset: DatasetSpec { n: 1, ..base.dataset.clone() }, ..base },
            "desk-bands" => RunConfig {
                widths: vec![512],
                replicas: 100,
                replica_policy: ReplicaPolicy::Fixed,
                lr: 1.0 / 700.0,
                steps: 20_000,
                ..base
            },
            "paper-fig1-left" => RunConfig {
                widths: vec![700],
                replicas: 100,
                replica_policy: ReplicaPolicy::Fixed,
                lr: 1.0 / 700.0,
                steps: 20_000,
                ..base
            },
            "paper-fig1-center" => RunConfig {
                widths: vec![1000],
                replicas: 100,
                replica_policy: ReplicaPolicy::Fixed,
                lr: 7.0 / 1000.0,
                steps: 20_000,
                ..base
            },
            "paper-fig1-right" => RunConfig {
                widths: (1..=8).map(|k| 1usize << k).collect(),
                replicas: 10_000,
                replica_policy: ReplicaPolicy::Fixed,
                lr: 0.1,
                steps: 100,
                dataset: DatasetSpec { n: 1, ..base.dataset.clone() },
                ..base
            },
            other => {
                return Err(HarnessError::Config {
                    message: format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
                    line: None,
                    field: Some("preset".into()),
                })
            }
        };
        Ok(cfg)
    }

    /// Presets whose runtime is measured in hours rather than minutes.
    pub fn is_paper_scale(name: &str) -> bool {
        name == "paper-fig1-right"
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            let field = line.and_then(|l| key_on_line(text, l)).or_else(|| backticked(e.message()));
            HarnessError::Config { message: e.message().trim().to_string(), line, field }
        })?;
        cfg.validate().map_err(|e| match e {
            HarnessError::Config { message, field: Some(f), .. } => {
                let line = find_key(text, &f);
                HarnessError::Config { message, line, field: Some(f) }
            }
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.widths {
            self.widths = v.clone();
        }
        if let Some(v) = o.replicas {
            self.replicas = v;
        }
        if let Some(v) = o.lr {
            self.lr = v;
        }
        if let Some(v) = o.steps {
            self.steps = v;
        }
        if let Some(v) = &o.activation {
            self.activation = v.clone();
        }
        self.ack_undersampled |= o.ack_undersampled;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| -> Result<()> {
            Err(HarnessError::Config { message, line: None, field: Some(field.into()) })
        };
        if self.version != CONFIG_VERSION {
            return bad("version", format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if let Err(e) = self.activation.parse::<Activation>() {
            return bad("activation", e.to_string());
        }
        if self.n0 == 0 {
            return bad("n0", "n0 must be at least 1".into());
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths", "widths must be a nonempty list of positive integers".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("learning rate {} must be positive and finite", self.lr));
        }
        if self.quadrature_order < 2 {
            return bad("quadrature_order", "quadrature order must be at least 2".into());
        }
        if !(self.band_level > 0.0 && self.band_level < 1.0) {
            return bad("band_level", format!("band level {} outside (0, 1)", self.band_level));
        }
        if !(self.dataset.lo < self.dataset.hi) {
            return bad("dataset.lo", format!("dataset interval [{}, {}] is empty", self.dataset.lo, self.dataset.hi));
        }
        if self.dataset.n == 0 {
            return bad("dataset.n", "dataset needs at least one point".into());
        }
        if !(self.dataset.noise_sd >= 0.0) {
            return bad("dataset.noise_sd", format!("noise sd {} must be non-negative", self.dataset.noise_sd));
        }
        if self.test_points.count == 0 || !(self.test_points.lo <= self.test_points.hi) {
            return bad("test_points.count", "test points need a positive count and lo <= hi".into());
        }
        if let Some(p) = &self.sweep_point {
            if p.len() != self.n0 {
                return bad("sweep_point", format!("sweep point has {} coordinates, n0 is {}", p.len(), self.n0));
            }
        }
        Ok(())
    }

    pub fn act(&self) -> Activation {
        self.activation.parse().expect("validated activation")
    }

    pub fn final_time(&self) -> f64 {
        ntkgauss_core::network::time_of(self.lr, self.steps)
    }

    /// Hex SHA-256 of the configuration with the output directory blanked, so
    /// the same run written to two places shares a hash.
    pub fn hash(&self) -> String {
        let canon = RunConfig { out: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn key_on_line(text: &str, line: usize) -> Option<String> {
    let l = text.lines().nth(line - 1)?;
    let (key, _) = l.split_once('=')?;
    let key = key.trim();
    (!key.is_empty()).then(|| key.to_string())
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Line of `field` (dotted for keys inside a table) in the source text.
fn find_key(text: &str, field: &str) -> Option<usize> {
    let mut table = String::new();
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            table = name.trim().to_string();
            continue;
        }
        if let Some((k, _)) = t.split_once('=') {
            let k = k.trim();
            let full = if table.is_empty() { k.to_string() } else { format!("{table}.{k}") };
            if full == field {
                return Some(i + 1);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn every_preset_validates() {
        for p in PRESETS {
            RunConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn fig1_left_time() {
        let c = RunConfig::preset("paper-fig1-left").unwrap();
        assert!((c.final_time() - 28.571).abs() < 1e-3);
    }

    #[test]
    fn unknown_key_reports_line_and_field() {
        let err = RunConfig::from_toml("version = 1\nlr = 0.1\nlearning_rate = 2\n").unwrap_err();
        match err {
            HarnessError::Config { line, field, .. } => {
                assert_eq!(line, Some(3));
                assert_eq!(field.as_deref(), Some("learning_rate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_reports_line() {
        let err = RunConfig::from_toml("seed = 3\nsteps = \"ten\"\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: Some(2), .. }), "{err:?}");
    }

    #[test]
    fn semantic_error_reports_field_line() {
        let err = RunConfig::from_toml("seed = 3\n\nactivation = \"softplus\"\n").unwrap_err();
        match err {
            HarnessError::Config { line, field, .. } => {
                assert_eq!(line, Some(3));
                assert_eq!(field.as_deref(), Some("activation"));
            }
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::from_toml("version = 2").is_err());
        let err = RunConfig::from_toml("n0 = 1\n[dataset]\nlo = 3.0\nhi = 1.0\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: Some(3), .. }), "{err:?}");
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let mut c = RunConfig::default();
        let o = Overrides { widths: Some(vec![4, 8]), seed: Some(9), ack_undersampled: true, ..Default::default() };
        c.apply(&o).unwrap();
        assert_eq!((c.widths.clone(), c.seed, c.ack_undersampled), (vec![4, 8], 9, true));
        let bad = Overrides { lr: Some(-1.0), ..Default::default() };
        assert!(c.apply(&bad).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig { out: "elsewhere".into(), ..a.clone() };
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
