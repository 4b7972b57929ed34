//! Boosted autoencoder ensembles: M sequentially trained encoders sharing a
//! single continuously trained decoder, with reconstruction-error-weighted
//! data sampling. Includes a self-contained f64 neural-network engine,
//! anomaly-detection (reconstruction error + AUC-ROC) and clustering
//! (K-means + NMI) pipelines, dataset loaders and model persistence.

pub mod adam;
pub mod anomaly;
pub mod boost;
pub mod cluster;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layer;
pub mod network;
pub mod persist;
pub mod presets;
pub mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use boost::{BoostConfig, EnsembleModel, SampleWeights, TrainTrace};
pub use error::{Error, Result};
pub use layer::{Activation, LayerSpec};
pub use network::{InitScheme, Network, NetworkSpec};
pub use tensor::Tensor;
