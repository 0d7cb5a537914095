//! Gated fusion of the visual OCR stream and the linguistic stream into the
//! initial text-node embeddings.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use super::config::GraphConfig;
use super::nn::{sigmoid, LayerNorm, LayerNormCache, Linear, ParamPath};
use super::spatial::{BoundingBox, SPATIAL_DIM};
use crate::error::FusionError;

/// Per-token inputs of both streams, one row per OCR token.
#[derive(Debug, Clone, PartialEq)]
pub struct DualStreamInput {
    pub recognition: Array2<f64>,
    pub detection: Array2<f64>,
    pub linguistic: Array2<f64>,
}

impl DualStreamInput {
    pub fn tokens(&self) -> usize {
        self.recognition.nrows()
    }

    pub fn check(&self) -> Result<(), FusionError> {
        for (context, m) in [("detection rows", &self.detection), ("linguistic rows", &self.linguistic)] {
            if m.nrows() != self.recognition.nrows() {
                return Err(FusionError::DimensionMismatch {
                    context,
                    expected: self.recognition.nrows(),
                    found: m.nrows(),
                });
            }
        }
        for (name, m) in [
            ("recognition", &self.recognition),
            ("detection", &self.detection),
            ("linguistic", &self.linguistic),
        ] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(FusionError::NonFinite(format!("{name} features")));
            }
        }
        Ok(())
    }

    /// `[r/‖r‖ ; d/‖d‖]` per row.
    pub fn visual_stream(&self) -> Result<Array2<f64>, FusionError> {
        let unit = |m: &Array2<f64>, stream: &'static str| {
            let mut out = m.clone();
            for (row_idx, mut row) in out.rows_mut().into_iter().enumerate() {
                let norm = row.dot(&row).sqrt();
                if norm == 0.0 {
                    return Err(FusionError::ZeroVector { stream, row: row_idx });
                }
                row.mapv_inplace(|v| v / norm);
            }
            Ok(out)
        };
        let r = unit(&self.recognition, "recognition")?;
        let d = unit(&self.detection, "detection")?;
        Ok(concatenate(Axis(1), &[r.view(), d.view()]).expect("equal row counts"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualStreamFusion {
    pub visual: Linear,
    pub visual_norm: LayerNorm,
    pub linguistic: Linear,
    pub linguistic_norm: LayerNorm,
    pub gate: Linear,
    pub box_proj: Linear,
    pub box_norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct FusionCache {
    visual_in: Array2<f64>,
    visual_pre_norm: LayerNormCache,
    linguistic_pre_norm: LayerNormCache,
    v_vis: Array2<f64>,
    v_pho: Array2<f64>,
    gate_in: Array2<f64>,
    /// Per-dimension gate values.
    pub gate: Array2<f64>,
    boxes: Option<(Array2<f64>, LayerNormCache)>,
}

fn box_matrix(boxes: &[BoundingBox]) -> Array2<f64> {
    Array2::from_shape_fn((boxes.len(), SPATIAL_DIM), |(i, c)| {
        let b = &boxes[i];
        [b.cx, b.cy, b.w, b.h][c]
    })
}

impl DualStreamFusion {
    pub fn new<R: Rng>(rng: &mut R, config: &GraphConfig) -> Self {
        let d = config.model_dim;
        DualStreamFusion {
            visual: Linear::new(rng, config.recognition_dim + config.detection_dim, d, false),
            visual_norm: LayerNorm::new(d),
            linguistic: Linear::new(rng, config.linguistic_dim, d, false),
            linguistic_norm: LayerNorm::new(d),
            gate: Linear::new(rng, 2 * d, d, true),
            box_proj: Linear::new(rng, SPATIAL_DIM, d, false),
            box_norm: LayerNorm::new(d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        DualStreamFusion {
            visual: self.visual.zeros_like(),
            visual_norm: self.visual_norm.zeros_like(),
            linguistic: self.linguistic.zeros_like(),
            linguistic_norm: self.linguistic_norm.zeros_like(),
            gate: self.gate.zeros_like(),
            box_proj: self.box_proj.zeros_like(),
            box_norm: self.box_norm.zeros_like(),
        }
    }

    fn check_input(&self, input: &DualStreamInput) -> Result<(), FusionError> {
        input.check()?;
        let widths = [
            ("visual stream width", self.visual.inputs(), input.recognition.ncols() + input.detection.ncols()),
            ("linguistic width", self.linguistic.inputs(), input.linguistic.ncols()),
        ];
        for (context, expected, found) in widths {
            if expected != found {
                return Err(FusionError::DimensionMismatch { context, expected, found });
            }
        }
        Ok(())
    }

    fn fuse_parts(&self, input: &DualStreamInput) -> Result<(Array2<f64>, FusionCache), FusionError> {
        self.check_input(input)?;
        let visual_in = input.visual_stream()?;
        let (v_vis, visual_pre_norm) = self.visual_norm.forward(&self.visual.forward(visual_in.view()));
        let (v_pho, linguistic_pre_norm) = self.linguistic_norm.forward(&self.linguistic.forward(input.linguistic.view()));
        let gate_in = concatenate(Axis(1), &[v_vis.view(), v_pho.view()]).expect("equal row counts");
        let gate = self.gate.forward(gate_in.view()).mapv(sigmoid);
        let f = &gate * &v_vis + &(1.0 - &gate) * &v_pho;
        let cache = FusionCache {
            visual_in,
            visual_pre_norm,
            linguistic_pre_norm,
            v_vis,
            v_pho,
            gate_in,
            gate,
            boxes: None,
        };
        Ok((f, cache))
    }

    /// The gated fusion `f = g⊙v_vis + (1−g)⊙v_pho`, plus both streams.
    pub fn fuse(&self, input: &DualStreamInput) -> Result<FusedStreams, FusionError> {
        let (fused, c) = self.fuse_parts(input)?;
        Ok(FusedStreams {
            fused,
            visual: c.v_vis,
            linguistic: c.v_pho,
            gate: c.gate,
        })
    }

    /// Text-node embeddings `t = f + LN(W_bbox·b)`.
    pub fn forward(&self, input: &DualStreamInput, boxes: &[BoundingBox]) -> Result<(Array2<f64>, FusionCache), FusionError> {
        if boxes.len() != input.tokens() {
            return Err(FusionError::DimensionMismatch {
                context: "token boxes",
                expected: input.tokens(),
                found: boxes.len(),
            });
        }
        let (f, mut cache) = self.fuse_parts(input)?;
        let b = box_matrix(boxes);
        let (pos, box_pre_norm) = self.box_norm.forward(&self.box_proj.forward(b.view()));
        cache.boxes = Some((b, box_pre_norm));
        Ok((f + pos, cache))
    }

    pub fn backward(&self, input: &DualStreamInput, cache: &FusionCache, dt: &Array2<f64>, grad: &mut DualStreamFusion) {
        if let Some((b, norm_cache)) = &cache.boxes {
            let dpos = self.box_norm.backward(norm_cache, dt, &mut grad.box_norm);
            self.box_proj.backward(b.view(), &dpos, &mut grad.box_proj);
        }

        let g = &cache.gate;
        let mut dv_vis = dt * g;
        let mut dv_pho = dt * &(1.0 - g);
        let dg = dt * &(&cache.v_vis - &cache.v_pho);
        let dz = dg * &(g * &(1.0 - g));
        let dgate_in = self.gate.backward(cache.gate_in.view(), &dz, &mut grad.gate);
        let d = self.gate.outputs();
        dv_vis += &dgate_in.slice(s![.., ..d]);
        dv_pho += &dgate_in.slice(s![.., d..]);

        let dvis_pre = self.visual_norm.backward(&cache.visual_pre_norm, &dv_vis, &mut grad.visual_norm);
        self.visual.backward(cache.visual_in.view(), &dvis_pre, &mut grad.visual);
        let dling_pre = self.linguistic_norm.backward(&cache.linguistic_pre_norm, &dv_pho, &mut grad.linguistic_norm);
        self.linguistic.backward(input.linguistic.view(), &dling_pre, &mut grad.linguistic);
    }

    pub fn parameter_count(&self) -> usize {
        self.visual.parameter_count()
            + self.visual_norm.parameter_count()
            + self.linguistic.parameter_count()
            + self.linguistic_norm.parameter_count()
            + self.gate.parameter_count()
            + self.box_proj.parameter_count()
            + self.box_norm.parameter_count()
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        self.visual.visit(&prefix.child("visual"), f);
        self.visual_norm.visit(&prefix.child("visual_norm"), f);
        self.linguistic.visit(&prefix.child("linguistic"), f);
        self.linguistic_norm.visit(&prefix.child("linguistic_norm"), f);
        self.gate.visit(&prefix.child("gate"), f);
        self.box_proj.visit(&prefix.child("box_proj"), f);
        self.box_norm.visit(&prefix.child("box_norm"), f);
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        self.visual.visit_mut(&prefix.child("visual"), f);
        self.visual_norm.visit_mut(&prefix.child("visual_norm"), f);
        self.linguistic.visit_mut(&prefix.child("linguistic"), f);
        self.linguistic_norm.visit_mut(&prefix.child("linguistic_norm"), f);
        self.gate.visit_mut(&prefix.child("gate"), f);
        self.box_proj.visit_mut(&prefix.child("box_proj"), f);
        self.box_norm.visit_mut(&prefix.child("box_norm"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedStreams {
    pub fused: Array2<f64>,
    pub visual: Array2<f64>,
    pub linguistic: Array2<f64>,
    pub gate: Array2<f64>,
}

pub fn dual_stream_fuse(input: &DualStreamInput, weights: &DualStreamFusion) -> Result<Array2<f64>, FusionError> {
    Ok(weights.fuse(input)?.fused)
}
