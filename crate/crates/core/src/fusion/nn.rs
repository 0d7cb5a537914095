//! Dense building blocks with explicit forward caches and backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Dotted parameter name built on the stack while visiting, e.g.
/// `layer2.t_to_t.phono_bias.hidden.weight`. Rendering allocates; building
/// does not.
#[derive(Debug, Clone, Copy)]
pub struct ParamPath<'a> {
    parent: Option<&'a ParamPath<'a>>,
    name: &'a str,
    index: Option<usize>,
}

impl<'a> ParamPath<'a> {
    pub const fn root(name: &'a str) -> Self {
        ParamPath {
            parent: None,
            name,
            index: None,
        }
    }

    /// A root segment with a numeric suffix, such as `layer3`.
    pub const fn indexed(name: &'a str, index: usize) -> Self {
        ParamPath {
            parent: None,
            name,
            index: Some(index),
        }
    }

    pub fn child(&'a self, name: &'a str) -> ParamPath<'a> {
        ParamPath {
            parent: Some(self),
            name,
            index: None,
        }
    }
}

impl std::fmt::Display for ParamPath<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(p) = self.parent {
            write!(f, "{p}.")?;
        }
        f.write_str(self.name)?;
        if let Some(i) = self.index {
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform in ±1/√fan_in.
pub fn uniform_init<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Row-wise softmax, max-shifted.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Gradient of the scores given the gradient of `softmax_rows(scores) = a`.
pub fn softmax_rows_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let mut ds = a * da;
    for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
        let dot = row.sum();
        row.zip_mut_with(&arow, |g, &p| *g -= p * dot);
    }
    ds
}

/// `y = x Wᵀ (+ b)` with `W` stored out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl Linear {
    pub fn new<R: Rng>(rng: &mut R, inputs: usize, outputs: usize, with_bias: bool) -> Self {
        Linear {
            weight: uniform_init(rng, outputs, inputs, inputs),
            bias: with_bias.then(|| Array1::zeros(outputs)),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, with_bias: bool) -> Self {
        Linear {
            weight: Array2::zeros((outputs, inputs)),
            bias: with_bias.then(|| Array1::zeros(outputs)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        Linear::zeros(self.inputs(), self.outputs(), self.bias.is_some())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        if let Some(b) = &self.bias {
            y += b;
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(&x);
        if let Some(gb) = &mut grad.bias {
            *gb += &dy.sum_axis(Axis(0));
        }
        dy.dot(&self.weight)
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        f(&prefix.child("weight"), self.weight.as_slice().expect("standard layout"));
        if let Some(b) = &self.bias {
            f(&prefix.child("bias"), b.as_slice().expect("standard layout"));
        }
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        f(&prefix.child("weight"), self.weight.as_slice_mut().expect("standard layout"));
        if let Some(b) = &mut self.bias {
            f(&prefix.child("bias"), b.as_slice_mut().expect("standard layout"));
        }
    }
}

/// Per-row layer normalization with learned gain and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LayerNorm {
            gamma: Array1::zeros(self.gamma.len()),
            beta: Array1::zeros(self.beta.len()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let n = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.fold(0.0, |a, &v| a + v * v) / n;
            *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            let is = *s;
            row.mapv_inplace(|v| v * is);
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).0
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Array2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let n = dy.ncols() as f64;
        let dxhat = dy * &self.gamma;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (((mut out, g), xh), &is) in dx
            .rows_mut()
            .into_iter()
            .zip(dxhat.rows())
            .zip(cache.xhat.rows())
            .zip(cache.inv_std.iter())
        {
            let mean_g = g.sum() / n;
            let mean_gx = g.dot(&xh) / n;
            for ((o, &gi), &xi) in out.iter_mut().zip(g.iter()).zip(xh.iter()) {
                *o = is * (gi - mean_g - xi * mean_gx);
            }
        }
        dx
    }

    pub fn parameter_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        f(&prefix.child("gamma"), self.gamma.as_slice().expect("standard layout"));
        f(&prefix.child("beta"), self.beta.as_slice().expect("standard layout"));
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        f(&prefix.child("gamma"), self.gamma.as_slice_mut().expect("standard layout"));
        f(&prefix.child("beta"), self.beta.as_slice_mut().expect("standard layout"));
    }
}

/// Position-wise two-layer perceptron with a rectified hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new<R: Rng>(rng: &mut R, dim: usize, hidden: usize) -> Self {
        FeedForward {
            hidden: Linear::new(rng, dim, hidden, true),
            output: Linear::new(rng, hidden, dim, true),
        }
    }

    pub fn zeros_like(&self) -> Self {
        FeedForward {
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.hidden.forward(x);
        let act = pre.mapv(|v| v.max(0.0));
        let y = self.output.forward(act.view());
        (y, FeedForwardCache { pre, act })
    }

    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        cache: &FeedForwardCache,
        dy: &Array2<f64>,
        grad: &mut FeedForward,
    ) -> Array2<f64> {
        let mut dact = self.output.backward(cache.act.view(), dy, &mut grad.output);
        dact.zip_mut_with(&cache.pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        self.hidden.backward(x, &dact, &mut grad.hidden)
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden.parameter_count() + self.output.parameter_count()
    }

    pub fn visit(&self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &[f64])) {
        self.hidden.visit(&prefix.child("hidden"), f);
        self.output.visit(&prefix.child("output"), f);
    }

    pub fn visit_mut(&mut self, prefix: &ParamPath, f: &mut dyn FnMut(&ParamPath, &mut [f64])) {
        self.hidden.visit_mut(&prefix.child("hidden"), f);
        self.output.visit_mut(&prefix.child("output"), f);
    }
}
