//! Run configuration: a flat `key = value` text format with one section
//! per concern. Unknown sections or keys are errors.
//!
//! ```text
//! [experiment]
//! algorithm = adg_mf        # adg_bc | adg_mf | sync_svrg | async_svrg
//!                           # | asgd | dsgd | plain_gradient
//! m = 4
//! backend = simulated       # simulated | threaded
//! seed = 42
//! epsilon = 1e-4
//! max_epochs = 200
//!
//! [data]
//! source = synth_ratings    # synth_ratings | synth_classification
//!                           # | classification_file | ratings_file
//! n_users = 200
//! n_items = 100
//! k_true = 5
//! noise = 0.1
//! density = 0.2
//! valid_fraction = 0.1
//! test_fraction = 0.1
//!
//! [solver]
//! gamma = 0.005
//! lambda = 0.05
//! k_latent = 5
//! batch_size = 10
//! t_max = 100
//!
//! [delay]
//! kind = constant           # constant | uniform_random | adversarial_cycle
//! d_max = 0
//!
//! [timing]
//! compute_ticks = 10,10,10,40
//! comm_ticks = 0
//!
//! [async]
//! broadcast_on_ingest = false
//! warm_start = true
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::RatingsFormat;
use crate::error::{Error, Result};
use crate::sim::DelayKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    AdgBc,
    AdgMf,
    SyncSvrg,
    AsyncSvrg,
    Asgd,
    Dsgd,
    PlainGradient,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "adg_bc" => Algorithm::AdgBc,
            "adg_mf" => Algorithm::AdgMf,
            "sync_svrg" => Algorithm::SyncSvrg,
            "async_svrg" => Algorithm::AsyncSvrg,
            "asgd" => Algorithm::Asgd,
            "dsgd" => Algorithm::Dsgd,
            "plain_gradient" => Algorithm::PlainGradient,
            other => return Err(Error::Config(format!("unknown algorithm {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::AdgBc => "adg_bc",
            Algorithm::AdgMf => "adg_mf",
            Algorithm::SyncSvrg => "sync_svrg",
            Algorithm::AsyncSvrg => "async_svrg",
            Algorithm::Asgd => "asgd",
            Algorithm::Dsgd => "dsgd",
            Algorithm::PlainGradient => "plain_gradient",
        }
    }

    pub fn is_factorization(&self) -> bool {
        matches!(self, Algorithm::AdgMf | Algorithm::Asgd | Algorithm::Dsgd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Simulated,
    Threaded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    SynthClassification { n: usize, dim: usize, separation: f64, noise: f64 },
    SynthRatings { n_users: usize, n_items: usize, k_true: usize, noise: f64, density: f64 },
    ClassificationFile { path: PathBuf },
    RatingsFile { path: PathBuf, format: RatingsFormat },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub m: usize,
    pub backend: BackendKind,
    pub seed: u64,
    pub epsilon: f64,
    pub max_epochs: u64,
    pub speedup_target: Option<f64>,

    pub data: DataSource,
    pub valid_fraction: f64,
    pub test_fraction: f64,

    pub gamma: f64,
    /// `None` means the classification default `1 / n_train`.
    pub lambda: Option<f64>,
    pub k_latent: usize,
    pub batch_size: usize,
    pub t_max: usize,

    pub delay_kind: DelayKind,
    pub d_max: u64,

    pub compute_ticks: Option<Vec<u64>>,
    pub comm_ticks: u64,

    pub broadcast_on_ingest: bool,
    pub warm_start: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be >= 1".to_string()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".to_string()));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("lambda must be >= 0, got {l}")));
            }
        }
        if self.k_latent == 0 || self.batch_size == 0 || self.t_max == 0 {
            return Err(Error::Config(
                "k_latent, batch_size and t_max must be >= 1".to_string(),
            ));
        }
        if let Some(ticks) = &self.compute_ticks {
            if ticks.len() != self.m {
                return Err(Error::Config(format!(
                    "compute_ticks lists {} machines but m = {}",
                    ticks.len(),
                    self.m
                )));
            }
            if ticks.iter().any(|&t| t == 0) {
                return Err(Error::Config("compute_ticks entries must be >= 1".to_string()));
            }
        }
        let frac = self.valid_fraction + self.test_fraction;
        if !(0.0..1.0).contains(&frac) || self.valid_fraction < 0.0 || self.test_fraction < 0.0 {
            return Err(Error::Config("split fractions must be in [0, 1) total".to_string()));
        }
        Ok(())
    }
}

type KeyMap = BTreeMap<(String, String), String>;

fn parse_key_map(text: &str) -> Result<KeyMap> {
    let mut map = KeyMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
        })?;
        if section.is_empty() {
            return Err(Error::Config(format!(
                "line {}: key {key:?} appears before any [section]",
                lineno + 1
            )));
        }
        map.insert((section.clone(), key.trim().to_string()), value.trim().to_string());
    }
    Ok(map)
}

struct KeyReader {
    map: KeyMap,
    used: std::collections::HashSet<(String, String)>,
}

impl KeyReader {
    fn get(&mut self, section: &str, key: &str) -> Option<String> {
        let k = (section.to_string(), key.to_string());
        let v = self.map.get(&k).cloned();
        if v.is_some() {
            self.used.insert(k);
        }
        v
    }

    fn parse<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad value for {section}.{key}: {v:?}"))),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<T> {
        self.parse(section, key)?
            .ok_or_else(|| Error::Config(format!("missing required key {section}.{key}")))
    }

    fn finish(self) -> Result<()> {
        for (section, key) in self.map.keys() {
            if !self.used.contains(&(section.clone(), key.clone())) {
                return Err(Error::Config(format!("unknown key {section}.{key}")));
            }
        }
        Ok(())
    }
}

/// Parses a config from text, with `section.key=value` overrides applied
/// on top.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut map = parse_key_map(text)?;
    for o in overrides {
        let (path, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override must be section.key=value: {o:?}")))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override must be section.key=value: {o:?}")))?;
        map.insert((section.trim().to_string(), key.trim().to_string()), value.trim().to_string());
    }
    let mut r = KeyReader { map, used: std::collections::HashSet::new() };

    let algorithm = Algorithm::parse(&r.require::<String>("experiment", "algorithm")?)?;
    let m: usize = r.require("experiment", "m")?;
    let backend = match r.get("experiment", "backend").as_deref() {
        None | Some("simulated") => BackendKind::Simulated,
        Some("threaded") => BackendKind::Threaded,
        Some(other) => return Err(Error::Config(format!("unknown backend {other:?}"))),
    };
    let seed: u64 = r.parse("experiment", "seed")?.unwrap_or(0);
    let epsilon: f64 = r.parse("experiment", "epsilon")?.unwrap_or(1e-4);
    let max_epochs: u64 = r.parse("experiment", "max_epochs")?.unwrap_or(100);
    let speedup_target: Option<f64> = r.parse("experiment", "speedup_target")?;

    let source = r.require::<String>("data", "source")?;
    let data = match source.as_str() {
        "synth_classification" => DataSource::SynthClassification {
            n: r.require("data", "n")?,
            dim: r.require("data", "dim")?,
            separation: r.parse("data", "separation")?.unwrap_or(0.5),
            noise: r.parse("data", "noise")?.unwrap_or(0.0),
        },
        "synth_ratings" => DataSource::SynthRatings {
            n_users: r.require("data", "n_users")?,
            n_items: r.require("data", "n_items")?,
            k_true: r.require("data", "k_true")?,
            noise: r.parse("data", "noise")?.unwrap_or(0.0),
            density: r.parse("data", "density")?.unwrap_or(0.2),
        },
        "classification_file" => DataSource::ClassificationFile {
            path: PathBuf::from(r.require::<String>("data", "path")?),
        },
        "ratings_file" => DataSource::RatingsFile {
            path: PathBuf::from(r.require::<String>("data", "path")?),
            format: match r.get("data", "format").as_deref() {
                None | Some("tab_separated") => RatingsFormat::TabSeparated,
                Some("double_colon") => RatingsFormat::DoubleColon,
                Some(other) => {
                    return Err(Error::Config(format!("unknown ratings format {other:?}")))
                }
            },
        },
        other => return Err(Error::Config(format!("unknown data source {other:?}"))),
    };
    let valid_fraction: f64 = r.parse("data", "valid_fraction")?.unwrap_or(0.0);
    let test_fraction: f64 = r.parse("data", "test_fraction")?.unwrap_or(0.0);

    let factorization = algorithm.is_factorization();
    let gamma: f64 =
        r.parse("solver", "gamma")?.unwrap_or(if factorization { 0.005 } else { 0.01 });
    let lambda: Option<f64> = match r.parse::<f64>("solver", "lambda")? {
        Some(l) => Some(l),
        None if factorization => Some(0.05),
        None => None, // classification default 1 / n_train, resolved at run time
    };
    let k_latent: usize = r.parse("solver", "k_latent")?.unwrap_or(40);
    let batch_size: usize = r.parse("solver", "batch_size")?.unwrap_or(10);
    let t_max: usize = r.parse("solver", "t_max")?.unwrap_or(100);

    let delay_kind = match r.get("delay", "kind").as_deref() {
        None | Some("constant") => DelayKind::Constant,
        Some("uniform_random") => DelayKind::UniformRandom,
        Some("adversarial_cycle") => DelayKind::AdversarialCycle,
        Some(other) => return Err(Error::Config(format!("unknown delay kind {other:?}"))),
    };
    let d_max: u64 = r.parse("delay", "d_max")?.unwrap_or(0);

    let compute_ticks: Option<Vec<u64>> = match r.get("timing", "compute_ticks") {
        None => None,
        Some(v) => Some(
            v.split(',')
                .map(|t| {
                    t.trim().parse::<u64>().map_err(|_| {
                        Error::Config(format!("bad value in timing.compute_ticks: {t:?}"))
                    })
                })
                .collect::<Result<Vec<u64>>>()?,
        ),
    };
    let comm_ticks: u64 = r.parse("timing", "comm_ticks")?.unwrap_or(0);

    let broadcast_on_ingest: bool = r.parse("async", "broadcast_on_ingest")?.unwrap_or(false);
    // a synchronized first pass is the default for the classification
    // algorithms only
    let warm_start_default = matches!(
        algorithm,
        Algorithm::AdgBc | Algorithm::SyncSvrg | Algorithm::AsyncSvrg
    );
    let warm_start: bool = r.parse("async", "warm_start")?.unwrap_or(warm_start_default);

    r.finish()?;
    let config = ExperimentConfig {
        algorithm,
        m,
        backend,
        seed,
        epsilon,
        max_epochs,
        speedup_target,
        data,
        valid_fraction,
        test_fraction,
        gamma,
        lambda,
        k_latent,
        batch_size,
        t_max,
        delay_kind,
        d_max,
        compute_ticks,
        comm_ticks,
        broadcast_on_ingest,
        warm_start,
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, overrides)
}
