//! Multi-head attention over one edge type, with additive pairwise biases and
//! a post-softmax confidence gate.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::config::{EdgeType, GraphConfig, NodeKind};
use super::nn::{sigmoid, softmax_rows, softmax_rows_backward, FeedForward, FeedForwardCache, Linear, ParamPath};
use crate::error::FusionError;

/// Maps pair features to one additive score per head: in → hidden (ReLU) → H.
///
/// The output layer starts at zero so a fresh perceptron contributes nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasMlp {
    pub mlp: FeedForward,
}

impl BiasMlp {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, hidden: usize, heads: usize) -> Self {
        BiasMlp {
            mlp: FeedForward {
                hidden: Linear::new(rng, inputs, hidden, true),
                output: Linear::zeros(hidden, heads, true),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        BiasMlp {
            mlp: self.mlp.zeros_like(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.mlp.hidden.inputs()
    }

    pub fn heads(&self) -> usize {
        self.mlp.output.outputs()
    }

    /// `features` is (pairs × inputs); the result is (pairs × heads).
    pub fn forward(&self, features: ArrayView2<f64>) -> (Array2<f64>, FeedForwardCache) {
        self.mlp.forward(features)
    }

    pub fn apply(&self, features: ArrayView2<f64>) -> Array2<f64> {
        self.forward(features).0
    }

    pub fn backward(&self, features: ArrayView2<f64>, cache: &FeedForwardCache, dy: &Array2<f64>, grad: &mut BiasMlp) {
        self.mlp.backward(features, cache, dy, &mut grad.mlp);
    }

    pub fn parameter_count(&self) -> usize {
        self.mlp.parameter_count()
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        self.mlp.visit(prefix, f);
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        self.mlp.visit_mut(prefix, f);
    }
}

/// Per-head `sigmoid(scale·c + shift)` applied to keys' confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceGate {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
}

impl ConfidenceGate {
    pub fn new(heads: usize) -> Self {
        ConfidenceGate {
            scale: Array1::ones(heads),
            shift: Array1::zeros(heads),
        }
    }

    pub fn uniform(heads: usize, scale: f64, shift: f64) -> Self {
        ConfidenceGate {
            scale: Array1::from_elem(heads, scale),
            shift: Array1::from_elem(heads, shift),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ConfidenceGate::uniform(self.scale.len(), 0.0, 0.0)
    }

    /// Gate values, keys × heads.
    pub fn values(&self, confidences: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((confidences.len(), self.scale.len()), |(j, h)| {
            sigmoid(self.scale[h] * confidences[j] + self.shift[h])
        })
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.scale.len()
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        f(&prefix.child("scale"), self.scale.as_slice().expect("standard layout"));
        f(&prefix.child("shift"), self.shift.as_slice().expect("standard layout"));
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        f(&prefix.child("scale"), self.scale.as_slice_mut().expect("standard layout"));
        f(&prefix.child("shift"), self.shift.as_slice_mut().expect("standard layout"));
    }
}

/// Scales each key column of each head's weights by its gate value. Rows are
/// not renormalized, so gated rows sum to at most one.
pub fn confidence_gate(attention: &[Array2<f64>], confidences: &[f64], gate: &ConfidenceGate) -> Result<Vec<Array2<f64>>, FusionError> {
    if attention.len() != gate.scale.len() {
        return Err(FusionError::DimensionMismatch {
            context: "gate heads",
            expected: gate.scale.len(),
            found: attention.len(),
        });
    }
    let g = gate.values(confidences);
    attention
        .iter()
        .enumerate()
        .map(|(h, a)| {
            if a.ncols() != confidences.len() {
                return Err(FusionError::DimensionMismatch {
                    context: "gate keys",
                    expected: a.ncols(),
                    found: confidences.len(),
                });
            }
            Ok(a * &g.column(h))
        })
        .collect()
}

/// Per-head `q·k/√d_h` plus any bias matrices (pairs × heads, row-major over
/// query then key).
fn combine_scores(q: ArrayView2<f64>, k: ArrayView2<f64>, heads: usize, biases: &[&Array2<f64>]) -> Vec<Array2<f64>> {
    let dh = q.ncols() / heads;
    let scale = (dh as f64).sqrt();
    let nk = k.nrows();
    (0..heads)
        .map(|h| {
            let qh = q.slice(s![.., h * dh..(h + 1) * dh]);
            let kh = k.slice(s![.., h * dh..(h + 1) * dh]);
            let mut sc = qh.dot(&kh.t()) / scale;
            for b in biases {
                for ((i, j), v) in sc.indexed_iter_mut() {
                    *v += b[[i * nk + j, h]];
                }
            }
            sc
        })
        .collect()
}

fn check_dims(context: &'static str, expected: usize, found: usize) -> Result<(), FusionError> {
    if expected == found {
        Ok(())
    } else {
        Err(FusionError::DimensionMismatch { context, expected, found })
    }
}

/// Pre-softmax scores per head. `spatial` and `phono` pair each perceptron
/// with its (queries·keys × features) input; `None` omits that bias.
pub fn attention_scores(
    queries: ArrayView2<f64>,
    keys: ArrayView2<f64>,
    heads: usize,
    spatial: Option<(&BiasMlp, ArrayView2<f64>)>,
    phono: Option<(&BiasMlp, ArrayView2<f64>)>,
) -> Result<Vec<Array2<f64>>, FusionError> {
    check_dims("key width", queries.ncols(), keys.ncols())?;
    if heads == 0 || queries.ncols() % heads != 0 {
        return Err(FusionError::InvalidConfig(format!(
            "width {} not divisible by {heads} heads",
            queries.ncols()
        )));
    }
    let pairs = queries.nrows() * keys.nrows();
    let mut biases = Vec::new();
    for (mlp, feats) in [spatial, phono].into_iter().flatten() {
        check_dims("bias pairs", pairs, feats.nrows())?;
        check_dims("bias features", mlp.inputs(), feats.ncols())?;
        check_dims("bias heads", heads, mlp.heads())?;
        biases.push(mlp.apply(feats));
    }
    let refs: Vec<&Array2<f64>> = biases.iter().collect();
    Ok(combine_scores(queries, keys, heads, &refs))
}

/// Side inputs for one edge type, all fixed (not trained).
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeInputs<'a> {
    /// (targets·sources × 4) spatial pair features.
    pub spatial: Option<ArrayView2<'a, f64>>,
    /// (targets·sources × 8) phonological pair features.
    pub phono: Option<ArrayView2<'a, f64>>,
    /// Source-node confidences, used when the gate is active.
    pub confidences: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAttention {
    pub edge: EdgeType,
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub spatial: Option<BiasMlp>,
    pub phono: Option<BiasMlp>,
    pub gate: Option<ConfidenceGate>,
}

#[derive(Debug, Clone)]
pub struct EdgeCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    spatial: Option<FeedForwardCache>,
    phono: Option<FeedForwardCache>,
    /// Pre-softmax scores per head.
    pub scores: Vec<Array2<f64>>,
    /// Softmax weights per head.
    pub softmax: Vec<Array2<f64>>,
    /// Keys × heads gate values.
    gates: Option<Array2<f64>>,
    /// Weights actually used to mix values.
    pub weights: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl EdgeAttention {
    pub fn new<R: Rng>(rng: &mut R, edge: EdgeType, config: &GraphConfig) -> Self {
        let d = config.model_dim;
        let h = config.heads;
        let b = config.bias_hidden;
        EdgeAttention {
            edge,
            heads: h,
            query: Linear::new(rng, d, d, false),
            key: Linear::new(rng, d, d, false),
            value: Linear::new(rng, d, d, false),
            output: Linear::new(rng, d, d, false),
            spatial: config.use_spatial_bias.then(|| BiasMlp::new(rng, super::SPATIAL_DIM, b, h)),
            phono: (config.use_phono_bias && edge == EdgeType::TToT)
                .then(|| BiasMlp::new(rng, crate::phono::FEATURE_COUNT, b, h)),
            gate: (config.use_confidence_gate && edge.source() == NodeKind::Text).then(|| ConfidenceGate::new(h)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        EdgeAttention {
            edge: self.edge,
            heads: self.heads,
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            output: self.output.zeros_like(),
            spatial: self.spatial.as_ref().map(BiasMlp::zeros_like),
            phono: self.phono.as_ref().map(BiasMlp::zeros_like),
            gate: self.gate.as_ref().map(ConfidenceGate::zeros_like),
        }
    }

    fn head_dim(&self) -> usize {
        self.query.outputs() / self.heads
    }

    pub fn forward(
        &self,
        targets: ArrayView2<f64>,
        sources: ArrayView2<f64>,
        inputs: &EdgeInputs,
    ) -> Result<(Array2<f64>, EdgeCache), FusionError> {
        let d = self.query.inputs();
        check_dims("target width", d, targets.ncols())?;
        check_dims("source width", d, sources.ncols())?;
        let pairs = targets.nrows() * sources.nrows();
        let q = self.query.forward(targets);
        let k = self.key.forward(sources);
        let v = self.value.forward(sources);

        let mut bias_outputs = Vec::new();
        let mut run_bias = |mlp: &Option<BiasMlp>, feats: Option<ArrayView2<f64>>, what: &'static str| {
            let Some(mlp) = mlp else { return Ok(None) };
            let feats = feats.ok_or(FusionError::InvalidConfig(format!("{what} features missing")))?;
            check_dims(what, pairs, feats.nrows())?;
            let (out, cache) = mlp.forward(feats);
            bias_outputs.push(out);
            Ok::<_, FusionError>(Some(cache))
        };
        let spatial = run_bias(&self.spatial, inputs.spatial, "spatial pairs")?;
        let phono = run_bias(&self.phono, inputs.phono, "phonological pairs")?;
        let refs: Vec<&Array2<f64>> = bias_outputs.iter().collect();
        let scores = combine_scores(q.view(), k.view(), self.heads, &refs);
        let softmax: Vec<Array2<f64>> = scores.iter().map(softmax_rows).collect();

        let gates = match &self.gate {
            Some(g) => {
                let c = inputs
                    .confidences
                    .ok_or(FusionError::InvalidConfig("confidences missing".into()))?;
                check_dims("confidences", sources.nrows(), c.len())?;
                Some(g.values(c))
            }
            None => None,
        };
        let weights: Vec<Array2<f64>> = match &gates {
            Some(g) => softmax.iter().enumerate().map(|(h, a)| a * &g.column(h)).collect(),
            None => softmax.clone(),
        };

        let dh = self.head_dim();
        let mut ctx = Array2::zeros((targets.nrows(), d));
        for (h, w) in weights.iter().enumerate() {
            let vh = v.slice(s![.., h * dh..(h + 1) * dh]);
            ctx.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&w.dot(&vh));
        }
        let message = self.output.forward(ctx.view());
        let cache = EdgeCache {
            q,
            k,
            v,
            spatial,
            phono,
            scores,
            softmax,
            gates,
            weights,
            ctx,
        };
        Ok((message, cache))
    }

    /// Returns gradients with respect to the target and source features.
    pub fn backward(
        &self,
        targets: ArrayView2<f64>,
        sources: ArrayView2<f64>,
        inputs: &EdgeInputs,
        cache: &EdgeCache,
        dmessage: &Array2<f64>,
        grad: &mut EdgeAttention,
    ) -> (Array2<f64>, Array2<f64>) {
        let dh = self.head_dim();
        let sqrt_dh = (dh as f64).sqrt();
        let nk = sources.nrows();
        let pairs = targets.nrows() * nk;
        let dctx = self.output.backward(cache.ctx.view(), dmessage, &mut grad.output);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        let mut dbias = Array2::zeros((pairs, self.heads));

        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dctx_h = dctx.slice(cols);
            let vh = cache.v.slice(cols);
            let w = &cache.weights[h];
            let dw = dctx_h.dot(&vh.t());
            dv.slice_mut(cols).assign(&w.t().dot(&dctx_h));

            let a = &cache.softmax[h];
            let da = match (&cache.gates, &mut grad.gate, inputs.confidences) {
                (Some(gv), Some(ggrad), Some(c)) => {
                    let g = gv.column(h);
                    for j in 0..nk {
                        let dg: f64 = (0..a.nrows()).map(|i| dw[[i, j]] * a[[i, j]]).sum();
                        let dz = dg * g[j] * (1.0 - g[j]);
                        ggrad.scale[h] += dz * c[j];
                        ggrad.shift[h] += dz;
                    }
                    &dw * &g
                }
                _ => dw,
            };
            let ds = softmax_rows_backward(a, &da);
            let qh = cache.q.slice(cols);
            let kh = cache.k.slice(cols);
            dq.slice_mut(cols).assign(&(ds.dot(&kh) / sqrt_dh));
            dk.slice_mut(cols).assign(&(ds.t().dot(&qh) / sqrt_dh));
            for ((i, j), &g) in ds.indexed_iter() {
                dbias[[i * nk + j, h]] = g;
            }
        }

        if let (Some(mlp), Some(c), Some(gm), Some(f)) =
            (&self.spatial, &cache.spatial, &mut grad.spatial, inputs.spatial)
        {
            mlp.backward(f, c, &dbias, gm);
        }
        if let (Some(mlp), Some(c), Some(gm), Some(f)) = (&self.phono, &cache.phono, &mut grad.phono, inputs.phono) {
            mlp.backward(f, c, &dbias, gm);
        }

        let dtargets = self.query.backward(targets, &dq, &mut grad.query);
        let dsources = self.key.backward(sources, &dk, &mut grad.key) + self.value.backward(sources, &dv, &mut grad.value);
        (dtargets, dsources)
    }

    pub fn parameter_count(&self) -> usize {
        self.query.parameter_count()
            + self.key.parameter_count()
            + self.value.parameter_count()
            + self.output.parameter_count()
            + self.spatial.as_ref().map_or(0, BiasMlp::parameter_count)
            + self.phono.as_ref().map_or(0, BiasMlp::parameter_count)
            + self.gate.as_ref().map_or(0, ConfidenceGate::parameter_count)
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        self.query.visit(&prefix.child("query"), f);
        self.key.visit(&prefix.child("key"), f);
        self.value.visit(&prefix.child("value"), f);
        self.output.visit(&prefix.child("output"), f);
        if let Some(m) = &self.spatial {
            m.visit(&prefix.child("spatial_bias"), f);
        }
        if let Some(m) = &self.phono {
            m.visit(&prefix.child("phono_bias"), f);
        }
        if let Some(g) = &self.gate {
            g.visit(&prefix.child("gate"), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        self.query.visit_mut(&prefix.child("query"), f);
        self.key.visit_mut(&prefix.child("key"), f);
        self.value.visit_mut(&prefix.child("value"), f);
        self.output.visit_mut(&prefix.child("output"), f);
        if let Some(m) = &mut self.spatial {
            m.visit_mut(&prefix.child("spatial_bias"), f);
        }
        if let Some(m) = &mut self.phono {
            m.visit_mut(&prefix.child("phono_bias"), f);
        }
        if let Some(g) = &mut self.gate {
            g.visit_mut(&prefix.child("gate"), f);
        }
    }
}

/// Row sums of each head's weights.
pub fn row_sums(weights: &[Array2<f64>]) -> Vec<Array1<f64>> {
    weights.iter().map(|w| w.sum_axis(Axis(1))).collect()
}
