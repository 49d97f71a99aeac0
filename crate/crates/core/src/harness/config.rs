use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifier::ClassifierConfig;
use crate::clonal::CloneConfig;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Cnn,
    CnnAis,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::CnnAis => "cnn-ais",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cnn" => Ok(Variant::Cnn),
            "cnn-ais" | "cnn_ais" => Ok(Variant::CnnAis),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected cnn or cnn-ais)"))),
        }
    }
}

/// Everything an experiment run needs. Built from defaults, then a flat
/// `key = value` file, then command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub variants: Vec<Variant>,
    /// Training images per class for the size sweep.
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// `memory_capacity` is overwritten per run by
    /// `memory_factor × images per class`.
    pub clone: CloneConfig,
    pub memory_factor: usize,
    pub test_per_class: usize,
    pub curve_per_class: usize,
    pub curve_epochs: usize,
    pub app_classes: [usize; 2],
    pub app_novel_class: usize,
    pub app_train_per_class: usize,
    pub app_test_count: usize,
    pub app_novel_count: usize,
    pub classifier: ClassifierConfig,
    /// Match threshold used when probing for unseen classes.
    pub novel_tau_match: f64,
    pub clonalg_population: usize,
    pub clonalg_select: usize,
    pub clonalg_generations: usize,
    pub clonalg_eta: f64,
    pub clonalg_alpha: f64,
    pub clonalg_sigma: f64,
    pub gradcheck_instances: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("out"),
            variants: vec![Variant::Cnn, Variant::CnnAis],
            sizes: vec![10, 25, 50, 100],
            seeds: vec![1, 2, 3],
            train: TrainConfig {
                learning_rate: 0.02,
                ..TrainConfig::default()
            },
            // Clone noise comparable to the feature scale; bootstrap noise
            // for new pools stays at std 0.2.
            clone: CloneConfig {
                sigma: 10.0,
                bootstrap_rate: 0.02,
                ..CloneConfig::default()
            },
            memory_factor: 3,
            test_per_class: 100,
            curve_per_class: 100,
            curve_epochs: 20,
            app_classes: [3, 7],
            app_novel_class: 0,
            app_train_per_class: 20,
            app_test_count: 200,
            app_novel_count: 20,
            classifier: ClassifierConfig::default(),
            novel_tau_match: 0.97,
            clonalg_population: 50,
            clonalg_select: 10,
            clonalg_generations: 200,
            clonalg_eta: 10.0,
            clonalg_alpha: 0.2,
            clonalg_sigma: 0.1,
            gradcheck_instances: 20,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {value:?}: expected true or false"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value.trim()),
            "out_dir" | "out" => self.out_dir = PathBuf::from(value.trim()),
            "variants" | "variant" => self.variants = parse_list(key, value)?,
            "sizes" => self.sizes = parse_list(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "lr" | "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "eta" => self.clone.eta = parse(key, value)?,
            "alpha" => self.clone.alpha = parse(key, value)?,
            "tau" => self.clone.tau = parse(key, value)?,
            "sigma" => self.clone.sigma = parse(key, value)?,
            "rate_cap" => self.clone.rate_cap = parse(key, value)?,
            "crossover_prob" => self.clone.crossover_prob = parse(key, value)?,
            "bootstrap_rate" => self.clone.bootstrap_rate = parse(key, value)?,
            "memory_factor" => self.memory_factor = parse(key, value)?,
            "test_per_class" => self.test_per_class = parse(key, value)?,
            "curve_per_class" => self.curve_per_class = parse(key, value)?,
            "curve_epochs" => self.curve_epochs = parse(key, value)?,
            "app_classes" => {
                let v: Vec<usize> = parse_list(key, value)?;
                self.app_classes = v
                    .try_into()
                    .map_err(|_| Error::Config("app_classes needs exactly two labels".into()))?;
            }
            "app_novel_class" => self.app_novel_class = parse(key, value)?,
            "app_train_per_class" => self.app_train_per_class = parse(key, value)?,
            "app_test_count" => self.app_test_count = parse(key, value)?,
            "app_novel_count" => self.app_novel_count = parse(key, value)?,
            "tau_match" => self.classifier.tau_match = parse(key, value)?,
            "c_min" => self.classifier.c_min = parse(key, value)?,
            "raw_count" => self.classifier.raw_count = parse_bool(key, value)?,
            "novel_tau_match" => self.novel_tau_match = parse(key, value)?,
            "clonalg_population" => self.clonalg_population = parse(key, value)?,
            "clonalg_select" => self.clonalg_select = parse(key, value)?,
            "clonalg_generations" => self.clonalg_generations = parse(key, value)?,
            "clonalg_eta" => self.clonalg_eta = parse(key, value)?,
            "clonalg_alpha" => self.clonalg_alpha = parse(key, value)?,
            "clonalg_sigma" => self.clonalg_sigma = parse(key, value)?,
            "gradcheck_instances" => self.gradcheck_instances = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config("sizes must be non-empty and positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if self.memory_factor == 0 || self.test_per_class == 0 || self.curve_per_class == 0 {
            return Err(Error::Config("memory_factor, test_per_class and curve_per_class must be positive".into()));
        }
        if self.app_classes[0] == self.app_classes[1] || self.app_classes.contains(&self.app_novel_class) {
            return Err(Error::Config(format!(
                "application classes {:?} and novel class {} must be distinct",
                self.app_classes, self.app_novel_class
            )));
        }
        self.train.validate()?;
        self.clone.validate()?;
        self.classifier.validate()
    }

    /// Clone settings for a run with `per_class` seeds per class.
    pub fn clone_config_for(&self, per_class: usize, stream: u64) -> CloneConfig {
        CloneConfig {
            memory_capacity: self.memory_factor * per_class,
            rng_seed: stream,
            ..self.clone
        }
    }
}
