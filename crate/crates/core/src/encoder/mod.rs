//! Embedding network: relative local-geometry features, a tanh MLP trunk with
//! L2-normalised output, and two logistic heads (traversability regression
//! and the baseline segmentation head).

mod features;
mod model;

pub use features::{featurize, featurize_subset, PointFeatures, FEATURE_DIM};
pub use model::{
    EncoderGrads, EncoderModel, EncoderShape, ForwardPass, InputNorm, Layer, DEFAULT_EMBED_DIM,
    DEFAULT_HEAD_HIDDEN, DEFAULT_HIDDEN, DEFAULT_K_ENC,
};
