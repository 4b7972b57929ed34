//! Declarative run configuration (TOML) with CLI-flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use boosted_ae::adam::AdamConfig;
use boosted_ae::boost::BoostConfig;
use boosted_ae::cluster::PcaTarget;
use boosted_ae::data::{self, Dataset};
use boosted_ae::error::{Error, Result};
use boosted_ae::network::{InitScheme, NetworkSpec};
use boosted_ae::presets;
use boosted_ae::LayerSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub boost: BoostSection,
    #[serde(default)]
    pub single: SingleSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.dataset.validate()?;
        Ok(config)
    }

    /// Shrinks training and synthetic-data sizes to desk scale.
    pub fn apply_desk_scale(&mut self) {
        self.boost.num_encoders = self.boost.num_encoders.min(3);
        self.boost.iterations = self.boost.iterations.min(50);
        self.boost.batch_size = self.boost.batch_size.min(16);
        self.single.epochs = self.single.epochs.min(3);
        self.single.batch_size = self.single.batch_size.min(16);
        if let Some(n) = self.dataset.n.as_mut() {
            *n = (*n).min(500);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// One of: synth-blobs, synth-images, idx, cifar, csv.
    pub kind: String,
    // file-backed datasets
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub paths: Option<Vec<PathBuf>>,
    pub path: Option<PathBuf>,
    pub label_column: Option<usize>,
    // synthetic generators
    pub n: Option<usize>,
    pub classes: Option<usize>,
    pub dim: Option<usize>,
    pub size: Option<usize>,
    pub spread: Option<f64>,
    pub noise: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Train/val/test fractions when no one-class split is requested.
    #[serde(default = "default_fractions")]
    pub split: (f64, f64, f64),
    #[serde(default)]
    pub split_seed: u64,
    pub one_class: Option<OneClassConfig>,
}

fn default_fractions() -> (f64, f64, f64) {
    (0.8, 0.1, 0.1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneClassConfig {
    pub normal_class: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_val_fraction() -> f64 {
    0.1
}

impl DatasetConfig {
    fn validate(&self) -> Result<()> {
        let need = |field: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "dataset.{field} is required for kind {:?}",
                    self.kind
                )))
            }
        };
        match self.kind.as_str() {
            "idx" => {
                need("images", self.images.is_some())?;
                need("labels", self.labels.is_some())
            }
            "cifar" => need("paths", self.paths.as_ref().is_some_and(|p| !p.is_empty())),
            "csv" => need("path", self.path.is_some()),
            "synth-blobs" => {
                need("n", self.n.is_some())?;
                need("classes", self.classes.is_some())?;
                need("dim", self.dim.is_some())
            }
            "synth-images" => {
                need("n", self.n.is_some())?;
                need("classes", self.classes.is_some())?;
                need("size", self.size.is_some())
            }
            other => Err(Error::Config(format!(
                "unknown dataset kind {other:?}; expected idx, cifar, csv, synth-blobs or synth-images"
            ))),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self.kind.as_str() {
            "idx" => data::load_idx(self.images.as_ref().unwrap(), self.labels.as_ref().unwrap()),
            "cifar" => {
                let paths: Vec<&Path> = self.paths.as_ref().unwrap().iter().map(|p| p.as_path()).collect();
                data::load_cifar_binary(&paths)
            }
            "csv" => data::load_csv(self.path.as_ref().unwrap(), self.label_column),
            "synth-blobs" => Ok(data::synth_blobs(
                self.n.unwrap(),
                self.classes.unwrap(),
                self.dim.unwrap(),
                self.spread.unwrap_or(0.05),
                self.seed,
            )),
            "synth-images" => Ok(data::synth_images(
                self.n.unwrap(),
                self.classes.unwrap(),
                self.size.unwrap(),
                self.noise.unwrap_or(0.1),
                self.seed,
            )),
            _ => unreachable!("validated at load"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub preset: Option<String>,
    pub input_shape: Option<Vec<usize>>,
    pub encoder: Option<Vec<LayerSpec>>,
    pub decoder: Option<Vec<LayerSpec>>,
}

impl ArchitectureConfig {
    pub fn resolve(&self) -> Result<(NetworkSpec, NetworkSpec)> {
        if let Some(name) = &self.preset {
            return presets::preset(name);
        }
        let (Some(input_shape), Some(encoder), Some(decoder)) =
            (&self.input_shape, &self.encoder, &self.decoder)
        else {
            return Err(Error::Config(
                "architecture needs either a preset or input_shape + encoder + decoder".into(),
            ));
        };
        let enc = NetworkSpec::new(input_shape.clone(), encoder.clone())?;
        let dec = NetworkSpec::new(enc.output_shape()?, decoder.clone())?;
        Ok((enc, dec))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostSection {
    pub num_encoders: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init: InitScheme,
    pub seed: u64,
    pub val_every: usize,
}

impl Default for BoostSection {
    fn default() -> Self {
        BoostSection {
            num_encoders: 5,
            iterations: 2000,
            batch_size: 50,
            learning_rate: 3e-3,
            init: InitScheme::PaperNormal,
            seed: 0,
            val_every: 100,
        }
    }
}

impl BoostSection {
    pub fn to_boost_config(&self) -> BoostConfig {
        BoostConfig {
            num_encoders: self.num_encoders,
            iterations: self.iterations,
            batch_size: self.batch_size,
            adam: AdamConfig::with_lr(self.learning_rate),
            init: self.init,
            seed: self.seed,
            val_every: self.val_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init: InitScheme,
    pub seed: u64,
}

impl Default for SingleSection {
    fn default() -> Self {
        SingleSection {
            epochs: 50,
            batch_size: 50,
            learning_rate: 3e-3,
            init: InitScheme::PaperNormal,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub anomaly: Option<AnomalyEvalConfig>,
    pub cluster: Option<ClusterEvalConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyEvalConfig {
    /// Normal classes to evaluate; defaults to dataset.one_class.normal_class.
    pub normal_classes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterEvalConfig {
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Any of: boosted-ae, pca, identity.
    #[serde(default = "default_reducers")]
    pub reducers: Vec<String>,
    pub pca_dimensions: Option<usize>,
    pub pca_variance_fraction: Option<f64>,
}

impl ClusterEvalConfig {
    pub fn pca_target(&self) -> Result<PcaTarget> {
        match (self.pca_dimensions, self.pca_variance_fraction) {
            (Some(d), None) => Ok(PcaTarget::Dimensions(d)),
            (None, Some(v)) => Ok(PcaTarget::VarianceFraction(v)),
            (None, None) => Ok(PcaTarget::VarianceFraction(0.95)),
            (Some(_), Some(_)) => Err(Error::Config(
                "set only one of eval.cluster.pca_dimensions / pca_variance_fraction".into(),
            )),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_reducers() -> Vec<String> {
    vec!["boosted-ae".into(), "pca".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs/out"),
        }
    }
}
