//! Desk-scale denoising network: scene, text and step encoders, the
//! cross-attention noise predictor, the negative-prompt head and their
//! analytic gradients.

pub mod checkpoint;
mod denoiser;
pub mod encoder;
pub mod gradcheck;
mod grad;
pub mod layers;
mod scaling;
pub mod text;

pub use denoiser::{AttentionKv, DenoiserOutput, DenoiserParams, Embedding, ModelConfig, SceneTokens};
pub use encoder::{time_embedding, SceneGroups};
pub use grad::{batch_loss, param_gradients, LossReport, LossWeights, SceneInput, TrainItem};
pub use scaling::{GraspScaling, PointScaling, MIN_SPREAD};
pub use text::{prompt_for, TextToken, Vocabulary, NULL_PROMPT};
