//! Fully connected deep autoencoder trained on normalized benign snapshots.

mod io;
mod network;
mod normalizer;
mod train;

pub use io::{load_model, save_model, ModelEnvelope, MODEL_FORMAT, MODEL_VERSION};
pub(crate) use network::Workspace;
pub use network::{
    hidden_dim, layer_dims_for, Activation, AutoencoderModel, Gradients, Layer, LayerGradient, ReconstructionError,
    ENCODER_FRACTIONS,
};
pub use normalizer::{fit_normalizer, Normalizer};
pub use train::{train, train_with_dims, TrainOutcome, TrainingConfig};
