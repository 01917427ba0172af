//! Gaussian-state estimation from very few quadrature angles.

pub mod dataset;
pub mod lls;
pub mod nn;

pub use dataset::{gen_dataset, Dataset, DatasetConfig, FeatureNoise, ParamBox};
pub use lls::{lls_fit, LlsResult, TrigFit};
pub use nn::{nn_infer, nn_train, NnModel, TrainConfig, TrainReport};
