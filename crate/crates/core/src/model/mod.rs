//! Decoder-only transformer: config, parameters, masks and the forward pass.

pub mod config;
pub mod mask;
pub mod params;
pub mod transformer;

pub use config::{count_params, Activation, ModelConfig, ParamCount};
pub use mask::{build_causal_mask, build_prefix_mask, AttentionMask};
pub use params::{Layout, ModelParams};
pub use transformer::{BoundModel, Segment};
