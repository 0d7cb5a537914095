//! Graph-attention fusion of visual regions and OCR tokens.
//!
//! Everything is double precision with hand-written backward passes so the
//! gradients can be checked against finite differences
//! ([`gradcheck::gradient_check`]). There is no training loop.

pub mod attention;
pub mod config;
pub mod dual_stream;
pub mod embedding;
pub mod gradcheck;
pub mod layer;
pub mod mixture;
pub mod model;
pub mod nn;
pub mod spatial;

pub use attention::{attention_scores, confidence_gate, BiasMlp, ConfidenceGate, EdgeAttention, EdgeInputs};
pub use config::{EdgeType, GraphConfig, NodeKind};
pub use dual_stream::{dual_stream_fuse, DualStreamFusion, DualStreamInput, FusedStreams};
pub use embedding::{EmbeddingProvider, HashEmbedding};
pub use gradcheck::{compare_gradients, gradient_check, GradientReport, Loss};
pub use layer::{graph_layer, GraphContext, GraphLayer, LayerPart, NodeSet, TargetBlock};
pub use mixture::{copy_mixture, residual_preserve};
pub use model::{FusionModel, Instance, ParamSite, Trace};
pub use spatial::{random_regions, spatial_features, text_row, BoundingBox, SPATIAL_DIM};

#[cfg(test)]
mod tests;
