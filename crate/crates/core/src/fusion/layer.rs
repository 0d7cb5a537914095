//! One heterogeneous graph layer: attention per active edge type, summed per
//! target set, then a residual + layer-norm transformer block.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::attention::{EdgeAttention, EdgeCache, EdgeInputs};
use super::config::{EdgeType, GraphConfig, NodeKind};
use super::nn::{FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, ParamPath};
use super::spatial::{spatial_features, BoundingBox, SPATIAL_DIM};
use crate::error::FusionError;
use crate::phono::{PhonoTensor, FEATURE_COUNT};

/// Visual and text nodes with their geometry and text confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    pub v_features: Array2<f64>,
    pub t_features: Array2<f64>,
    pub v_boxes: Vec<BoundingBox>,
    pub t_boxes: Vec<BoundingBox>,
    pub confidences: Vec<f64>,
}

impl NodeSet {
    pub fn check(&self) -> Result<(), FusionError> {
        let pairs = [
            ("visual boxes", self.v_features.nrows(), self.v_boxes.len()),
            ("text boxes", self.t_features.nrows(), self.t_boxes.len()),
            ("confidences", self.t_features.nrows(), self.confidences.len()),
            ("visual width", self.t_features.ncols(), self.v_features.ncols()),
        ];
        for (context, expected, found) in pairs {
            if expected != found {
                return Err(FusionError::DimensionMismatch { context, expected, found });
            }
        }
        for b in self.v_boxes.iter().chain(&self.t_boxes) {
            b.check()?;
        }
        Ok(())
    }
}

fn spatial_matrix(targets: &[BoundingBox], sources: &[BoundingBox]) -> Result<Array2<f64>, FusionError> {
    let mut m = Array2::zeros((targets.len() * sources.len(), SPATIAL_DIM));
    for (i, bi) in targets.iter().enumerate() {
        for (j, bj) in sources.iter().enumerate() {
            let f = spatial_features(bi, bj)?;
            for (c, v) in f.iter().enumerate() {
                m[[i * sources.len() + j, c]] = *v;
            }
        }
    }
    Ok(m)
}

/// Fixed per-instance inputs shared by every layer: pair features and
/// confidences.
#[derive(Debug, Clone)]
pub struct GraphContext {
    spatial_v_to_t: Array2<f64>,
    spatial_t_to_v: Array2<f64>,
    spatial_t_to_t: Array2<f64>,
    phono: Array2<f64>,
    confidences: Vec<f64>,
}

impl GraphContext {
    /// A missing tensor is treated as all-zero features.
    pub fn new(nodes: &NodeSet, phono: Option<&PhonoTensor>) -> Result<Self, FusionError> {
        nodes.check()?;
        GraphContext::from_parts(&nodes.v_boxes, &nodes.t_boxes, &nodes.confidences, phono)
    }

    pub fn from_parts(
        v_boxes: &[BoundingBox],
        t_boxes: &[BoundingBox],
        confidences: &[f64],
        phono: Option<&PhonoTensor>,
    ) -> Result<Self, FusionError> {
        let nt = t_boxes.len();
        if confidences.len() != nt {
            return Err(FusionError::DimensionMismatch {
                context: "confidences",
                expected: nt,
                found: confidences.len(),
            });
        }
        let phono = match phono {
            Some(p) => {
                if p.token_count() != nt {
                    return Err(FusionError::DimensionMismatch {
                        context: "phonological tensor",
                        expected: nt,
                        found: p.token_count(),
                    });
                }
                let rows = p.to_f64_rows();
                Array2::from_shape_fn((nt * nt, FEATURE_COUNT), |(r, c)| rows[r][c])
            }
            None => Array2::zeros((nt * nt, FEATURE_COUNT)),
        };
        Ok(GraphContext {
            spatial_v_to_t: spatial_matrix(t_boxes, v_boxes)?,
            spatial_t_to_v: spatial_matrix(v_boxes, t_boxes)?,
            spatial_t_to_t: spatial_matrix(t_boxes, t_boxes)?,
            phono,
            confidences: confidences.to_vec(),
        })
    }

    pub fn edge_inputs(&self, edge: EdgeType) -> EdgeInputs<'_> {
        let spatial = match edge {
            EdgeType::VToT => &self.spatial_v_to_t,
            EdgeType::TToV => &self.spatial_t_to_v,
            EdgeType::TToT => &self.spatial_t_to_t,
        };
        EdgeInputs {
            spatial: Some(spatial.view()),
            phono: (edge == EdgeType::TToT).then(|| self.phono.view()),
            confidences: (edge.source() == NodeKind::Text).then_some(self.confidences.as_slice()),
        }
    }
}

/// `z = LN₂(y + FFN(y))` with `y = LN₁(x + m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBlock {
    pub attn_norm: LayerNorm,
    pub ffn: FeedForward,
    pub ffn_norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    attn_norm: LayerNormCache,
    y: Array2<f64>,
    ffn: FeedForwardCache,
    ffn_norm: LayerNormCache,
}

impl TargetBlock {
    pub fn new<R: Rng>(rng: &mut R, config: &GraphConfig) -> Self {
        TargetBlock {
            attn_norm: LayerNorm::new(config.model_dim),
            ffn: FeedForward::new(rng, config.model_dim, config.ffn_hidden()),
            ffn_norm: LayerNorm::new(config.model_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        TargetBlock {
            attn_norm: self.attn_norm.zeros_like(),
            ffn: self.ffn.zeros_like(),
            ffn_norm: self.ffn_norm.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, message: &Array2<f64>) -> (Array2<f64>, BlockCache) {
        let (y, attn_norm) = self.attn_norm.forward(&(x + message));
        let (f, ffn) = self.ffn.forward(y.view());
        let (z, ffn_norm) = self.ffn_norm.forward(&(&y + &f));
        (
            z,
            BlockCache {
                attn_norm,
                y,
                ffn,
                ffn_norm,
            },
        )
    }

    /// Returns the gradient reaching both `x` and the message (they are equal).
    pub fn backward(&self, cache: &BlockCache, dz: &Array2<f64>, grad: &mut TargetBlock) -> Array2<f64> {
        let du2 = self.ffn_norm.backward(&cache.ffn_norm, dz, &mut grad.ffn_norm);
        let dy = &du2 + &self.ffn.backward(cache.y.view(), &cache.ffn, &du2, &mut grad.ffn);
        self.attn_norm.backward(&cache.attn_norm, &dy, &mut grad.attn_norm)
    }

    pub fn parameter_count(&self) -> usize {
        self.attn_norm.parameter_count() + self.ffn.parameter_count() + self.ffn_norm.parameter_count()
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        self.attn_norm.visit(&prefix.child("attn_norm"), f);
        self.ffn.visit(&prefix.child("ffn"), f);
        self.ffn_norm.visit(&prefix.child("ffn_norm"), f);
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        self.attn_norm.visit_mut(&prefix.child("attn_norm"), f);
        self.ffn.visit_mut(&prefix.child("ffn"), f);
        self.ffn_norm.visit_mut(&prefix.child("ffn_norm"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphLayer {
    pub edges: Vec<EdgeAttention>,
    pub visual: Option<TargetBlock>,
    pub text: Option<TargetBlock>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub edges: Vec<EdgeCache>,
    /// One message per edge type, in the layer's edge order.
    pub messages: Vec<Array2<f64>>,
    visual: Option<BlockCache>,
    text: Option<BlockCache>,
}

/// Which part of a layer a parameter belongs to. Used to resume a forward pass
/// from the earliest computation the parameter affects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerPart {
    /// The attention of the edge at this index.
    Edge(usize),
    /// The norm and feed-forward blocks that consume the summed messages.
    Blocks,
}

impl GraphLayer {
    pub fn new<R: Rng>(rng: &mut R, config: &GraphConfig) -> Self {
        GraphLayer {
            edges: config
                .edge_types
                .iter()
                .map(|&e| EdgeAttention::new(rng, e, config))
                .collect(),
            visual: config.targets(NodeKind::Visual).then(|| TargetBlock::new(rng, config)),
            text: config.targets(NodeKind::Text).then(|| TargetBlock::new(rng, config)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GraphLayer {
            edges: self.edges.iter().map(EdgeAttention::zeros_like).collect(),
            visual: self.visual.as_ref().map(TargetBlock::zeros_like),
            text: self.text.as_ref().map(TargetBlock::zeros_like),
        }
    }

    /// Messages are computed from the layer's inputs for all edge types before
    /// any node set is updated.
    pub fn forward(
        &self,
        v: &Array2<f64>,
        t: &Array2<f64>,
        ctx: &GraphContext,
    ) -> Result<(Array2<f64>, Array2<f64>, LayerCache), FusionError> {
        let mut messages = Vec::with_capacity(self.edges.len());
        let mut edge_caches = Vec::with_capacity(self.edges.len());
        for edge in &self.edges {
            let (tgt, src) = endpoints(edge.edge, v, t);
            let (m, c) = edge.forward(tgt, src, &ctx.edge_inputs(edge.edge))?;
            messages.push(m);
            edge_caches.push(c);
        }
        let refs: Vec<&Array2<f64>> = messages.iter().collect();
        let (v_out, t_out, visual, text) = self.apply_blocks(v, t, &refs);
        Ok((
            v_out,
            t_out,
            LayerCache {
                edges: edge_caches,
                messages,
                visual,
                text,
            },
        ))
    }

    /// Recomputes the layer output when only `part` has changed since `cache`
    /// was recorded from the same inputs.
    pub fn forward_from(
        &self,
        v: &Array2<f64>,
        t: &Array2<f64>,
        ctx: &GraphContext,
        cache: &LayerCache,
        part: LayerPart,
    ) -> Result<(Array2<f64>, Array2<f64>), FusionError> {
        let fresh = match part {
            LayerPart::Edge(k) => {
                let edge = &self.edges[k];
                let (tgt, src) = endpoints(edge.edge, v, t);
                Some((k, edge.forward(tgt, src, &ctx.edge_inputs(edge.edge))?.0))
            }
            LayerPart::Blocks => None,
        };
        let refs: Vec<&Array2<f64>> = cache
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| match &fresh {
                Some((k, f)) if *k == i => f,
                _ => m,
            })
            .collect();
        let (v_out, t_out, _, _) = self.apply_blocks(v, t, &refs);
        Ok((v_out, t_out))
    }

    /// Sums the per-edge messages into each target set and runs its block.
    /// Sets no edge targets pass through unchanged.
    fn apply_blocks(
        &self,
        v: &Array2<f64>,
        t: &Array2<f64>,
        messages: &[&Array2<f64>],
    ) -> (Array2<f64>, Array2<f64>, Option<BlockCache>, Option<BlockCache>) {
        let mut v_msg = Array2::zeros(v.raw_dim());
        let mut t_msg = Array2::zeros(t.raw_dim());
        for (edge, m) in self.edges.iter().zip(messages) {
            match edge.edge.target() {
                NodeKind::Visual => v_msg += *m,
                NodeKind::Text => t_msg += *m,
            }
        }
        let (v_out, visual) = match &self.visual {
            Some(b) => {
                let (z, c) = b.forward(v, &v_msg);
                (z, Some(c))
            }
            None => (v.clone(), None),
        };
        let (t_out, text) = match &self.text {
            Some(b) => {
                let (z, c) = b.forward(t, &t_msg);
                (z, Some(c))
            }
            None => (t.clone(), None),
        };
        (v_out, t_out, visual, text)
    }

    pub fn backward(
        &self,
        v: &Array2<f64>,
        t: &Array2<f64>,
        ctx: &GraphContext,
        cache: &LayerCache,
        dv_out: &Array2<f64>,
        dt_out: &Array2<f64>,
        grad: &mut GraphLayer,
    ) -> (Array2<f64>, Array2<f64>) {
        let (mut dv, dv_msg) = match (&self.visual, &cache.visual, &mut grad.visual) {
            (Some(b), Some(c), Some(g)) => {
                let du = b.backward(c, dv_out, g);
                (du.clone(), Some(du))
            }
            _ => (dv_out.clone(), None),
        };
        let (mut dt, dt_msg) = match (&self.text, &cache.text, &mut grad.text) {
            (Some(b), Some(c), Some(g)) => {
                let du = b.backward(c, dt_out, g);
                (du.clone(), Some(du))
            }
            _ => (dt_out.clone(), None),
        };
        for ((edge, c), g) in self.edges.iter().zip(&cache.edges).zip(grad.edges.iter_mut()) {
            let dmsg = match edge.edge.target() {
                NodeKind::Visual => dv_msg.as_ref(),
                NodeKind::Text => dt_msg.as_ref(),
            }
            .expect("targeted set has a block");
            let (tgt, src) = endpoints(edge.edge, v, t);
            let (dtgt, dsrc) = edge.backward(tgt, src, &ctx.edge_inputs(edge.edge), c, dmsg, g);
            match edge.edge.target() {
                NodeKind::Visual => dv += &dtgt,
                NodeKind::Text => dt += &dtgt,
            }
            match edge.edge.source() {
                NodeKind::Visual => dv += &dsrc,
                NodeKind::Text => dt += &dsrc,
            }
        }
        (dv, dt)
    }

    pub fn edge(&self, e: EdgeType) -> Option<&EdgeAttention> {
        self.edges.iter().find(|a| a.edge == e)
    }

    /// Parameters of the phonological bias perceptrons in this layer.
    pub fn phono_parameter_count(&self) -> usize {
        self.edges
            .iter()
            .filter_map(|e| e.phono.as_ref())
            .map(|m| m.parameter_count())
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.edges.iter().map(EdgeAttention::parameter_count).sum::<usize>()
            + self.visual.as_ref().map_or(0, TargetBlock::parameter_count)
            + self.text.as_ref().map_or(0, TargetBlock::parameter_count)
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        self.visit_parts(prefix, &mut |_, n, p| f(n, p));
    }

    /// Like [`GraphLayer::visit`], also reporting the part each tensor belongs to.
    pub fn visit_parts(&self, prefix: &ParamPath, f: &mut dyn FnMut(LayerPart, &ParamPath, &[f64])) {
        for (k, e) in self.edges.iter().enumerate() {
            e.visit(&prefix.child(e.edge.ident()), &mut |n, p| f(LayerPart::Edge(k), n, p));
        }
        if let Some(b) = &self.visual {
            b.visit(&prefix.child("visual_block"), &mut |n, p| f(LayerPart::Blocks, n, p));
        }
        if let Some(b) = &self.text {
            b.visit(&prefix.child("text_block"), &mut |n, p| f(LayerPart::Blocks, n, p));
        }
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        for e in &mut self.edges {
            e.visit_mut(&prefix.child(e.edge.ident()), f);
        }
        if let Some(b) = &mut self.visual {
            b.visit_mut(&prefix.child("visual_block"), f);
        }
        if let Some(b) = &mut self.text {
            b.visit_mut(&prefix.child("text_block"), f);
        }
    }
}

fn endpoints<'a>(edge: EdgeType, v: &'a Array2<f64>, t: &'a Array2<f64>) -> (ArrayView2<'a, f64>, ArrayView2<'a, f64>) {
    let pick = |k: NodeKind| match k {
        NodeKind::Visual => v.view(),
        NodeKind::Text => t.view(),
    };
    (pick(edge.target()), pick(edge.source()))
}

/// Applies one layer to a node set.
pub fn graph_layer(nodes: &NodeSet, phono: Option<&PhonoTensor>, layer: &GraphLayer) -> Result<NodeSet, FusionError> {
    let ctx = GraphContext::new(nodes, phono)?;
    let (v, t, _) = layer.forward(&nodes.v_features, &nodes.t_features, &ctx)?;
    Ok(NodeSet {
        v_features: v,
        t_features: t,
        ..nodes.clone()
    })
}
