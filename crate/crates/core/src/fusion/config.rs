use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::FusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Visual,
    Text,
}

/// Directed edge family; queries come from the target set, keys and values
/// from the source set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    VToT,
    TToV,
    TToT,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::VToT, EdgeType::TToV, EdgeType::TToT];

    pub fn source(self) -> NodeKind {
        match self {
            EdgeType::VToT => NodeKind::Visual,
            EdgeType::TToV | EdgeType::TToT => NodeKind::Text,
        }
    }

    pub fn target(self) -> NodeKind {
        match self {
            EdgeType::TToV => NodeKind::Visual,
            EdgeType::VToT | EdgeType::TToT => NodeKind::Text,
        }
    }

    pub fn ident(self) -> &'static str {
        match self {
            EdgeType::VToT => "v_to_t",
            EdgeType::TToV => "t_to_v",
            EdgeType::TToT => "t_to_t",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeType::VToT => "V→T",
            EdgeType::TToV => "T→V",
            EdgeType::TToT => "T→T",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub edge_types: Vec<EdgeType>,
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    /// Hidden width of the spatial and phonological bias perceptrons.
    pub bias_hidden: usize,
    /// Feed-forward hidden width; `None` means 4 × model_dim.
    pub ffn_dim: Option<usize>,
    pub use_spatial_bias: bool,
    pub use_phono_bias: bool,
    pub use_confidence_gate: bool,
    pub residual_enabled: bool,
    pub residual_init: f64,
    pub recognition_dim: usize,
    pub detection_dim: usize,
    pub linguistic_dim: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig::full_scale()
    }
}

impl GraphConfig {
    /// d = 768, H = 8, L = 3, all edge types and both biases.
    pub fn full_scale() -> Self {
        GraphConfig {
            edge_types: EdgeType::ALL.to_vec(),
            layers: 3,
            heads: 8,
            model_dim: 768,
            bias_hidden: 32,
            ffn_dim: None,
            use_spatial_bias: true,
            use_phono_bias: true,
            use_confidence_gate: true,
            residual_enabled: true,
            residual_init: 0.5,
            recognition_dim: 256,
            detection_dim: 256,
            linguistic_dim: 768,
        }
    }

    /// Same structure at d = 32, H = 4.
    pub fn compact() -> Self {
        GraphConfig {
            model_dim: 32,
            heads: 4,
            ..GraphConfig::full_scale()
        }
    }

    /// The topology where visual nodes bypass graph processing.
    pub fn text_only(mut self) -> Self {
        self.edge_types = vec![EdgeType::TToT];
        self
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn ffn_hidden(&self) -> usize {
        self.ffn_dim.unwrap_or(4 * self.model_dim)
    }

    pub fn has_edge(&self, e: EdgeType) -> bool {
        self.edge_types.contains(&e)
    }

    /// Whether any active edge type points into `kind`.
    pub fn targets(&self, kind: NodeKind) -> bool {
        self.edge_types.iter().any(|e| e.target() == kind)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidConfig(m));
        if self.edge_types.is_empty() {
            return bad("edge_types is empty".into());
        }
        for (k, e) in self.edge_types.iter().enumerate() {
            if self.edge_types[..k].contains(e) {
                return bad(format!("edge type {e} listed twice"));
            }
        }
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if self.heads == 0 || self.model_dim == 0 || self.model_dim % self.heads != 0 {
            return bad(format!(
                "model_dim {} must be a positive multiple of heads {}",
                self.model_dim, self.heads
            ));
        }
        if self.bias_hidden == 0 || self.ffn_hidden() == 0 {
            return bad("hidden widths must be positive".into());
        }
        if self.recognition_dim == 0 || self.detection_dim == 0 || self.linguistic_dim == 0 {
            return bad("stream widths must be positive".into());
        }
        if !self.residual_init.is_finite() {
            return bad("residual_init must be finite".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, FusionError> {
        let c: GraphConfig = toml::from_str(text).map_err(|e| FusionError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FusionError::InvalidConfig(format!("{}: {e}", path.display())))?;
        GraphConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
