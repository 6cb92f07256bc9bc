//! Run configuration: an INI file whose keys can each be overridden by a
//! same-named command-line flag.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use rrn::curriculum::PhaseSource;
use rrn::glyphs::NovelKind;
use rrn::network::{LayerSpec, OptimizerKind};
use rrn::property::PerturbCondition;
use rrn::retina::{Property, PropertyRanges, RetinaConfig};
use sha2::{Digest, Sha256};

use crate::CliError;

/// `(section, key, default)`; an empty default means the key is required.
const KEYS: &[(&str, &str, &str)] = &[
    ("run", "seed", ""),
    ("run", "out", "out"),
    ("run", "workers", "1"),
    ("run", "checkpoint", ""),
    ("data", "images", "data/mnist5k-images-idx3-ubyte.gz"),
    ("data", "labels", "data/mnist5k-labels-idx1-ubyte.gz"),
    ("data", "train_count", "1000"),
    ("data", "heldout_start", "1000"),
    ("retina", "width", "32"),
    ("retina", "glyph_scale", "0.5"),
    ("retina", "x_range", "-0.2,0.2"),
    ("retina", "y_range", "-0.2,0.2"),
    ("retina", "s_range", "0.7,1.3"),
    ("retina", "r_range", "-45,45"),
    ("network", "widths", "1024,256,128,64,32,64,128,256,1024"),
    ("train", "steps", "50000"),
    ("train", "batch_size", "32"),
    ("train", "learning_rate", "0.001"),
    ("train", "optimizer", "adam"),
    ("train", "snapshots", "geometric"),
    ("train", "probe_size", "64"),
    ("train", "firing_threshold", "0.6"),
    ("train", "ctp_sensitivity", "3"),
    ("analysis", "alpha", "0.01"),
    ("analysis", "corr_trials", "128"),
    ("analysis", "decoder_trials", "500"),
    ("analysis", "ridge", "0"),
    ("analysis", "classifier_samples", "1000"),
    ("analysis", "l2", "0.0001"),
    ("analysis", "perturbations", "none,x=0.2,y=0.2,s=1.3,r=45"),
    ("analysis", "tsne_points", "1000"),
    ("analysis", "perplexity", "30"),
    ("analysis", "tsne_iter", "1000"),
    ("perturb", "neuron", "top_x"),
    ("perturb", "values", "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"),
    ("perturb", "sweep_stimuli", "9"),
    ("perturb", "lesion_stimuli", "200"),
    ("curriculum", "novel", "novel_only:symbol_x"),
    ("curriculum", "novel_steps", "10000"),
    ("curriculum", "control", "digits_only"),
    ("curriculum", "recovery", "digits_only"),
    ("curriculum", "recovery_steps", "10000"),
    ("curriculum", "eval_every", "500"),
    ("curriculum", "eval_size", "128"),
    ("curriculum", "plasticity_layer", "0"),
];

/// Keys that do not affect results and are left out of the digest.
const UNDIGESTED: &[&str] = &["out", "workers", "checkpoint"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub snapshots: Vec<usize>,
    pub probe_size: usize,
    pub firing_threshold: f64,
    pub ctp_sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub alpha: f64,
    pub corr_trials: usize,
    pub decoder_trials: usize,
    pub ridge: Option<f64>,
    pub classifier_samples: usize,
    pub l2: f64,
    pub perturbations: Vec<PerturbCondition>,
    pub tsne_points: usize,
    pub perplexity: f64,
    pub tsne_iter: usize,
}

/// Which encoding unit a perturbation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronRole {
    /// Highest |r| for a property.
    Top(Property),
    /// Highest correlation with one digit's indicator.
    Digit(u8),
    Unit(usize),
}

impl std::str::FromStr for NeuronRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("unknown neuron role `{s}` (expected top_x|top_y|top_s|top_r|digit<d>|unit<k>)");
        if let Some(p) = s.strip_prefix("top_") {
            return p.parse::<Property>().map(NeuronRole::Top).map_err(|_| bad());
        }
        if let Some(d) = s.strip_prefix("digit") {
            return match d.parse::<u8>() {
                Ok(d) if d < 10 => Ok(NeuronRole::Digit(d)),
                _ => Err(bad()),
            };
        }
        if let Some(k) = s.strip_prefix("unit") {
            return match k.parse::<usize>() {
                Ok(k) if k < rrn::network::ENCODING_WIDTH => Ok(NeuronRole::Unit(k)),
                _ => Err(bad()),
            };
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbSettings {
    pub neuron: NeuronRole,
    pub values: Vec<f64>,
    pub sweep_stimuli: usize,
    pub lesion_stimuli: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumSettings {
    pub novel: PhaseSource,
    pub novel_steps: usize,
    pub control: PhaseSource,
    pub recovery: PhaseSource,
    pub recovery_steps: usize,
    pub eval_every: usize,
    pub eval_size: usize,
    /// `None` compares every weight layer.
    pub plasticity_layer: Option<usize>,
}

impl CurriculumSettings {
    /// The novel structure evaluated throughout.
    pub fn novel_kind(&self) -> NovelKind {
        match self.novel {
            PhaseSource::NovelOnly(k) | PhaseSource::Mixed { kind: k, .. } => k,
            PhaseSource::DigitsOnly => NovelKind::SymbolX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    /// Model read by analysis commands; defaults to `<out>/model.ckpt`.
    pub checkpoint: PathBuf,
    pub images: PathBuf,
    pub labels: PathBuf,
    pub train_count: usize,
    pub heldout_start: usize,
    pub retina: RetinaConfig,
    pub spec: LayerSpec,
    pub train: TrainSettings,
    pub analysis: AnalysisSettings,
    pub perturb: PerturbSettings,
    pub curriculum: CurriculumSettings,
    /// Every key's final value.
    pub values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Fields<'a>(&'a BTreeMap<String, String>);

impl Fields<'_> {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).expect("every key has a value")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.trim()
            .parse()
            .map_err(|e| config_err(format!("{key}: cannot parse `{raw}`: {e}")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| config_err(format!("{key}: cannot parse `{}`: {e}", s.trim())))
            })
            .collect()
    }

    fn range(&self, key: &str) -> Result<(f64, f64), CliError> {
        let v: Vec<f64> = self.list(key)?;
        match v.as_slice() {
            [lo, hi] => Ok((*lo, *hi)),
            _ => Err(config_err(format!("{key}: expected `lo,hi`"))),
        }
    }
}

/// 1-2-5 steps up to `total`, plus 0 and `total`.
pub fn geometric_schedule(total: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let s = m * decade;
            if s >= total {
                break 'outer;
            }
            if s >= 100 {
                out.push(s);
            }
        }
        decade *= 10;
    }
    out.push(total);
    out.dedup();
    out
}

impl RunConfig {
    /// Read `path` (if any), apply `overrides`, validate.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            KEYS.iter().map(|(_, k, d)| (k.to_string(), d.to_string())).collect();
        if let Some(path) = path {
            let ini = Ini::load_from_file(path)
                .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
            for (section, props) in ini.iter() {
                for (key, value) in props.iter() {
                    match KEYS.iter().find(|(_, k, _)| *k == key) {
                        Some((s, _, _)) if section.is_none_or(|sec| sec == *s) => {
                            values.insert(key.to_string(), value.to_string());
                        }
                        Some((s, _, _)) => {
                            return Err(config_err(format!(
                                "key `{key}` belongs in section [{s}], found in [{}]",
                                section.unwrap_or("")
                            )))
                        }
                        None => return Err(config_err(format!("unknown config key `{key}`"))),
                    }
                }
            }
        }
        for (key, value) in overrides {
            if !values.contains_key(key) {
                return Err(config_err(format!("unknown flag `--{key}`")));
            }
            values.insert(key.clone(), value.clone());
        }
        Self::from_values(values)
    }

    fn from_values(values: BTreeMap<String, String>) -> Result<Self, CliError> {
        if values["seed"].trim().is_empty() {
            return Err(config_err("seed: a seed is required (set [run] seed or pass --seed)"));
        }
        let f = Fields(&values);
        let mut ranges = PropertyRanges::default();
        ranges.x = f.range("x_range")?;
        ranges.y = f.range("y_range")?;
        ranges.s = f.range("s_range")?;
        ranges.r = f.range("r_range")?;
        let retina = RetinaConfig {
            width: f.parse("width")?,
            glyph_scale: f.parse("glyph_scale")?,
            ranges,
        };
        retina.validate().map_err(|e| config_err(format!("retina: {e}")))?;
        let spec = LayerSpec::new(f.list("widths")?).map_err(|e| config_err(format!("widths: {e}")))?;
        if spec.retina_pixels() != retina.pixels() {
            return Err(config_err(format!(
                "widths: retina layer has {} units but a {}x{} retina has {}",
                spec.retina_pixels(),
                retina.width,
                retina.width,
                retina.pixels()
            )));
        }

        let steps: usize = f.parse("steps")?;
        let snapshots = match f.raw("snapshots").trim() {
            "geometric" => geometric_schedule(steps),
            "none" => Vec::new(),
            _ => f.list("snapshots")?,
        };
        let optimizer = match f.raw("optimizer").trim() {
            "adam" => OptimizerKind::adam(),
            "sgd" => OptimizerKind::Sgd,
            other => return Err(config_err(format!("optimizer: unknown optimizer `{other}`"))),
        };
        let learning_rate: f64 = f.parse("learning_rate")?;
        if !(learning_rate > 0.0) {
            return Err(config_err("learning_rate: must be positive"));
        }
        let batch_size: usize = f.parse("batch_size")?;
        if batch_size == 0 {
            return Err(config_err("batch_size: must be at least 1"));
        }
        let train = TrainSettings {
            steps,
            batch_size,
            learning_rate,
            optimizer,
            snapshots,
            probe_size: f.parse("probe_size")?,
            firing_threshold: f.parse("firing_threshold")?,
            ctp_sensitivity: f.parse("ctp_sensitivity")?,
        };

        let perturbations = f
            .raw("perturbations")
            .split(',')
            .map(|s| s.parse::<PerturbCondition>().map_err(|e| config_err(format!("perturbations: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let ridge: f64 = f.parse("ridge")?;
        let analysis = AnalysisSettings {
            alpha: f.parse("alpha")?,
            corr_trials: f.parse("corr_trials")?,
            decoder_trials: f.parse("decoder_trials")?,
            ridge: (ridge > 0.0).then_some(ridge),
            classifier_samples: f.parse("classifier_samples")?,
            l2: f.parse("l2")?,
            perturbations,
            tsne_points: f.parse("tsne_points")?,
            perplexity: f.parse("perplexity")?,
            tsne_iter: f.parse("tsne_iter")?,
        };

        let values_grid: Vec<f64> = f.list("values")?;
        if values_grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(config_err("values: modulation values must lie in [0, 1]"));
        }
        let perturb = PerturbSettings {
            neuron: f.parse("neuron")?,
            values: values_grid,
            sweep_stimuli: f.parse("sweep_stimuli")?,
            lesion_stimuli: f.parse("lesion_stimuli")?,
        };

        let phase = |key: &str| -> Result<PhaseSource, CliError> {
            f.raw(key).parse().map_err(|e| config_err(format!("{key}: {e}")))
        };
        let plasticity_layer = match f.raw("plasticity_layer").trim() {
            "all" => None,
            _ => Some(f.parse("plasticity_layer")?),
        };
        let curriculum = CurriculumSettings {
            novel: phase("novel")?,
            novel_steps: f.parse("novel_steps")?,
            control: phase("control")?,
            recovery: phase("recovery")?,
            recovery_steps: f.parse("recovery_steps")?,
            eval_every: f.parse("eval_every")?,
            eval_size: f.parse("eval_size")?,
            plasticity_layer,
        };
        if curriculum.eval_every == 0 {
            return Err(config_err("eval_every: must be at least 1"));
        }

        let workers: usize = f.parse("workers")?;
        if workers == 0 {
            return Err(config_err("workers: must be at least 1"));
        }
        let out = PathBuf::from(f.raw("out"));
        let checkpoint = match f.raw("checkpoint").trim() {
            "" => out.join("model.ckpt"),
            p => PathBuf::from(p),
        };
        Ok(Self {
            seed: f.parse("seed")?,
            out,
            checkpoint,
            workers,
            images: PathBuf::from(f.raw("images")),
            labels: PathBuf::from(f.raw("labels")),
            train_count: f.parse("train_count")?,
            heldout_start: f.parse("heldout_start")?,
            retina,
            spec,
            train,
            analysis,
            perturb,
            curriculum,
            values,
        })
    }

    /// Fail with a message naming the file when a dataset path is missing.
    pub fn check_data_paths(&self) -> Result<(), CliError> {
        for (key, p) in [("images", &self.images), ("labels", &self.labels)] {
            if !p.is_file() {
                return Err(config_err(format!("{key}: dataset file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 over every result-affecting key and value.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if !UNDIGESTED.contains(&k.as_str()) {
                h.update(format!("{k}={v}\n"));
            }
        }
        format!("{:x}", h.finalize())
    }

    /// Seed for a named sub-task, stable across runs.
    pub fn sub_seed(&self, tag: &str) -> u64 {
        let d = Sha256::digest(format!("{}:{tag}", self.seed));
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}
