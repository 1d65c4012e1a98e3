//! Minimal neural network engine: dense and 1-D convolution layers,
//! pooling, batch normalization, leaky ReLU, SGD/ADAM, and the AE, CAE
//! and CNN builders.

mod config;
mod layers;
mod network;
mod tensor;
mod train;

pub use config::{
    ae_blueprint, ae_widths, blueprint_for, build_ae, build_cae, build_cnn, cae_blueprint, cnn_blueprint,
    derive_cnn_architecture, Architecture, ChannelSchedule, FactorVector, LossKind, NetConfig, OptimizerKind,
    PRESET_NAMES,
};
pub use layers::{BatchNorm, Conv1d, Dense, Layer, LeakyRelu, MaxPool, Param, Upsample};
pub use network::{argmax, encode, predict_cnn, softmax, Blueprint, LayerSpec, Network, OutputKind};
pub use tensor::Tensor;
pub use train::{
    apply_l2, cross_entropy_loss, evaluate_loss, mse_loss, train_network, History, Optimizer, Samples, Targets,
};
