//! The full text-node pipeline: dual-stream embedding, L graph layers, and the
//! scalar residual back to the pre-graph embeddings.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::GraphConfig;
use super::dual_stream::{DualStreamFusion, DualStreamInput, FusionCache};
use super::embedding::EmbeddingProvider;
use super::layer::{GraphContext, GraphLayer, LayerCache, LayerPart};
use super::nn::{sigmoid, ParamPath};
use super::spatial::BoundingBox;
use crate::dataset::OcrToken;
use crate::error::FusionError;
use crate::phono::{build_tensor, PhonoTensor};

/// Everything the model reads for one image; none of it is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub streams: DualStreamInput,
    pub t_boxes: Vec<BoundingBox>,
    pub confidences: Vec<f64>,
    /// Already-projected visual region features, N_v × d.
    pub v_features: Array2<f64>,
    pub v_boxes: Vec<BoundingBox>,
    pub phono: Option<PhonoTensor>,
}

fn random_box<R: Rng>(rng: &mut R) -> BoundingBox {
    BoundingBox {
        cx: rng.random_range(0.1..0.9),
        cy: rng.random_range(0.1..0.9),
        w: rng.random_range(0.05..0.4),
        h: rng.random_range(0.03..0.2),
    }
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

impl Instance {
    /// Builds an instance from OCR tokens. Missing recognition or detection
    /// vectors and all visual features are drawn from a generator seeded with
    /// `seed`; linguistic vectors come from `provider`.
    pub fn from_ocr(
        tokens: &[OcrToken],
        visual_boxes: &[BoundingBox],
        config: &GraphConfig,
        provider: &dyn EmbeddingProvider,
        seed: u64,
    ) -> Result<Self, FusionError> {
        if provider.dim() != config.linguistic_dim {
            return Err(FusionError::DimensionMismatch {
                context: "embedding provider",
                expected: config.linguistic_dim,
                found: provider.dim(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = tokens.len();
        let mut streams = DualStreamInput {
            recognition: Array2::zeros((n, config.recognition_dim)),
            detection: Array2::zeros((n, config.detection_dim)),
            linguistic: Array2::zeros((n, config.linguistic_dim)),
        };
        for (i, tok) in tokens.iter().enumerate() {
            for (target, given, name) in [
                (&mut streams.recognition, &tok.recognition, "recognition"),
                (&mut streams.detection, &tok.detection, "detection"),
            ] {
                let width = target.ncols();
                let row: Vec<f64> = match given {
                    Some(v) if v.len() == width => v.clone(),
                    Some(v) => {
                        return Err(FusionError::DimensionMismatch {
                            context: if name == "recognition" { "recognition vector" } else { "detection vector" },
                            expected: width,
                            found: v.len(),
                        })
                    }
                    None => (0..width).map(|_| rng.random_range(-1.0..1.0)).collect(),
                };
                target.row_mut(i).assign(&ndarray::Array1::from(row));
            }
            streams
                .linguistic
                .row_mut(i)
                .assign(&ndarray::Array1::from(provider.embed(&tok.text)));
        }
        let texts: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
        Ok(Instance {
            phono: Some(build_tensor(&texts)),
            tokens: texts,
            streams,
            t_boxes: tokens.iter().map(|t| t.bbox).collect(),
            confidences: tokens.iter().map(|t| t.confidence).collect(),
            v_features: random_matrix(&mut rng, visual_boxes.len(), config.model_dim),
            v_boxes: visual_boxes.to_vec(),
        })
    }

    /// A random instance over the given token strings with `visual` regions.
    pub fn synthetic(config: &GraphConfig, tokens: &[&str], visual: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = tokens.len();
        Instance {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            streams: DualStreamInput {
                recognition: random_matrix(&mut rng, n, config.recognition_dim),
                detection: random_matrix(&mut rng, n, config.detection_dim),
                linguistic: random_matrix(&mut rng, n, config.linguistic_dim),
            },
            t_boxes: (0..n).map(|_| random_box(&mut rng)).collect(),
            confidences: (0..n).map(|_| rng.random_range(0.05..1.0)).collect(),
            v_features: random_matrix(&mut rng, visual, config.model_dim),
            v_boxes: (0..visual).map(|_| random_box(&mut rng)).collect(),
            phono: Some(build_tensor(tokens)),
        }
    }

    pub fn context(&self) -> Result<GraphContext, FusionError> {
        GraphContext::from_parts(&self.v_boxes, &self.t_boxes, &self.confidences, self.phono.as_ref())
    }
}

/// Activations of one forward pass, kept for the backward pass and for
/// restarting evaluation part-way through.
#[derive(Debug, Clone)]
pub struct Trace {
    pub context: GraphContext,
    fusion: FusionCache,
    /// `(v, t)` entering each layer, then the final layer output.
    pub states: Vec<(Array2<f64>, Array2<f64>)>,
    pub layers: Vec<LayerCache>,
    pub t_out: Array2<f64>,
    pub v_out: Array2<f64>,
}

impl Trace {
    /// Text embeddings before graph processing.
    pub fn pre_graph(&self) -> &Array2<f64> {
        &self.states[0].1
    }
}

/// Where a parameter enters the forward pass: stage 0 is the stream fusion,
/// stages `1..=L` are the graph layers and `L + 1` is the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSite {
    pub stage: usize,
    pub part: Option<LayerPart>,
}

impl ParamSite {
    pub fn stage(stage: usize) -> Self {
        ParamSite { stage, part: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub config: GraphConfig,
    pub fusion: DualStreamFusion,
    pub layers: Vec<GraphLayer>,
    pub alpha: f64,
}

impl FusionModel {
    pub fn new<R: Rng>(config: &GraphConfig, rng: &mut R) -> Result<Self, FusionError> {
        config.validate()?;
        Ok(FusionModel {
            config: config.clone(),
            fusion: DualStreamFusion::new(rng, config),
            layers: (0..config.layers).map(|_| GraphLayer::new(rng, config)).collect(),
            alpha: config.residual_init,
        })
    }

    pub fn seeded(config: &GraphConfig, seed: u64) -> Result<Self, FusionError> {
        FusionModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros_like(&self) -> Self {
        FusionModel {
            config: self.config.clone(),
            fusion: self.fusion.zeros_like(),
            layers: self.layers.iter().map(GraphLayer::zeros_like).collect(),
            alpha: 0.0,
        }
    }

    /// Adds uniform noise in ±`scale` to every parameter. Used to move away
    /// from the neutral initialization (zero bias outputs, unit gains).
    pub fn jitter<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        self.visit_mut(&mut |_, _, p| {
            for v in p {
                *v += rng.random_range(-scale..scale);
            }
        });
    }

    /// Number of evaluation stages: embedding, each layer, residual.
    pub fn stage_count(&self) -> usize {
        self.layers.len() + 2
    }

    fn check_visual(&self, instance: &Instance) -> Result<(), FusionError> {
        if instance.v_features.ncols() != self.config.model_dim {
            return Err(FusionError::DimensionMismatch {
                context: "visual width",
                expected: self.config.model_dim,
                found: instance.v_features.ncols(),
            });
        }
        if instance.v_features.nrows() != instance.v_boxes.len() {
            return Err(FusionError::DimensionMismatch {
                context: "visual boxes",
                expected: instance.v_features.nrows(),
                found: instance.v_boxes.len(),
            });
        }
        Ok(())
    }

    fn finish(&self, pre: &Array2<f64>, post: Array2<f64>) -> Array2<f64> {
        if self.config.residual_enabled {
            post + &(pre * sigmoid(self.alpha))
        } else {
            post
        }
    }

    pub fn forward(&self, instance: &Instance) -> Result<Trace, FusionError> {
        self.check_visual(instance)?;
        let context = instance.context()?;
        let (t0, fusion) = self.fusion.forward(&instance.streams, &instance.t_boxes)?;
        let mut states = vec![(instance.v_features.clone(), t0)];
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (v, t) = states.last().expect("at least the input state");
            let (v2, t2, cache) = layer.forward(v, t, &context)?;
            layers.push(cache);
            states.push((v2, t2));
        }
        let (v_last, t_last) = states.last().expect("final state").clone();
        let t_out = self.finish(&states[0].1, t_last);
        Ok(Trace {
            context,
            fusion,
            states,
            layers,
            t_out,
            v_out: v_last,
        })
    }

    /// Re-evaluates the outputs after a change confined to `site`, taking every
    /// earlier intermediate from `trace`.
    pub fn outputs_from(
        &self,
        site: ParamSite,
        instance: &Instance,
        trace: &Trace,
    ) -> Result<(Array2<f64>, Array2<f64>), FusionError> {
        let l = self.layers.len();
        let (t0, first_layer, mut state) = if site.stage == 0 {
            let (t0, _) = self.fusion.forward(&instance.streams, &instance.t_boxes)?;
            let s = (instance.v_features.clone(), t0.clone());
            (t0, 0, s)
        } else {
            let start = (site.stage - 1).min(l);
            let t0 = trace.states[0].1.clone();
            match site.part {
                Some(part) if start < l => {
                    let (v, t) = &trace.states[start];
                    let next = self.layers[start].forward_from(v, t, &trace.context, &trace.layers[start], part)?;
                    (t0, start + 1, next)
                }
                _ => (t0, start, trace.states[start].clone()),
            }
        };
        for layer in &self.layers[first_layer..] {
            let (v, t, _) = layer.forward(&state.0, &state.1, &trace.context)?;
            state = (v, t);
        }
        Ok((self.finish(&t0, state.1), state.0))
    }

    /// Gradients of a loss with output gradients `dt_out`, `dv_out`, returned
    /// in a model-shaped container.
    pub fn backward(&self, instance: &Instance, trace: &Trace, dt_out: &Array2<f64>, dv_out: &Array2<f64>) -> FusionModel {
        let mut grad = self.zeros_like();
        let t0 = trace.pre_graph();
        let mut dt0_residual = None;
        if self.config.residual_enabled {
            let s = sigmoid(self.alpha);
            grad.alpha = (dt_out * t0).sum() * s * (1.0 - s);
            dt0_residual = Some(dt_out * s);
        }
        let mut dv = dv_out.clone();
        let mut dt = dt_out.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (v, t) = &trace.states[k];
            let (dv_in, dt_in) = layer.backward(v, t, &trace.context, &trace.layers[k], &dv, &dt, &mut grad.layers[k]);
            dv = dv_in;
            dt = dt_in;
        }
        if let Some(r) = dt0_residual {
            dt += &r;
        }
        self.fusion.backward(&instance.streams, &trace.fusion, &dt, &mut grad.fusion);
        grad
    }

    /// Visits parameters in stage order along with where each one enters the
    /// computation.
    pub fn visit(&self, f: &mut dyn FnMut(ParamSite, &ParamPath, &[f64])) {
        self.fusion.visit(&ParamPath::root("fusion"), &mut |n, p| f(ParamSite::stage(0), n, p));
        for (k, layer) in self.layers.iter().enumerate() {
            layer.visit_parts(&ParamPath::indexed("layer", k + 1), &mut |part, n, p| {
                f(
                    ParamSite {
                        stage: k + 1,
                        part: Some(part),
                    },
                    n,
                    p,
                )
            });
        }
        if self.config.residual_enabled {
            f(
                ParamSite::stage(self.layers.len() + 1),
                &ParamPath::root("alpha"),
                std::slice::from_ref(&self.alpha),
            );
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(usize, &ParamPath, &mut [f64])) {
        self.fusion.visit_mut(&ParamPath::root("fusion"), &mut |n, p| f(0, n, p));
        let l = self.layers.len();
        for (k, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&ParamPath::indexed("layer", k + 1), &mut |n, p| f(k + 1, n, p));
        }
        if self.config.residual_enabled {
            f(l + 1, &ParamPath::root("alpha"), std::slice::from_mut(&mut self.alpha));
        }
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, p| n += p.len());
        n
    }

    /// Flat parameter vector in visiting order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |_, _, p| out.extend_from_slice(p));
        out
    }
}
