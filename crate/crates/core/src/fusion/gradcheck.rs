//! Central finite-difference check of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{FusionModel, Instance, ParamSite, Trace};
use crate::error::FusionError;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale, since a
/// relative error between two near-zero numbers measures only rounding noise.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// The rectified-linear units make the loss piecewise smooth, and a central
/// difference whose interval straddles a kink is meaningless. When the forward
/// and backward one-sided slopes disagree by more than `KINK_TOLERANCE`
/// (relative), the central difference is retaken with a step ten times
/// smaller. The coarse estimate is kept when the two agree within
/// `STEP_AGREEMENT`, since it carries less rounding noise; otherwise the coarse
/// interval straddled a kink and the fine estimate replaces it. Going smaller
/// still buys nothing: at 1e-7 rounding noise dominates.
pub const KINK_TOLERANCE: f64 = 1e-4;
pub const STEP_AGREEMENT: f64 = 5e-5;

/// Scalar reductions of the model outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    /// `Σ A⊙t_out + Σ B⊙v_out` with fixed coefficient matrices.
    Linear { text: Array2<f64>, visual: Array2<f64> },
    /// `½ Σ t_out² + ½ Σ v_out²`.
    SumOfSquares,
}

impl Loss {
    pub fn seeded_linear(text_nodes: usize, visual_nodes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r| Array2::from_shape_fn((r, dim), |_| rng.random_range(-1.0..1.0));
        Loss::Linear {
            text: m(text_nodes),
            visual: m(visual_nodes),
        }
    }

    pub fn value(&self, t: &Array2<f64>, v: &Array2<f64>) -> f64 {
        match self {
            Loss::Linear { text, visual } => (text * t).sum() + (visual * v).sum(),
            Loss::SumOfSquares => 0.5 * (t.iter().map(|x| x * x).sum::<f64>() + v.iter().map(|x| x * x).sum::<f64>()),
        }
    }

    pub fn gradient(&self, t: &Array2<f64>, v: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        match self {
            Loss::Linear { text, visual } => (text.clone(), visual.clone()),
            Loss::SumOfSquares => (t.clone(), v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub parameters_checked: usize,
    /// Entries whose difference was cross-checked at smaller steps.
    pub refined: usize,
    pub loss: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

pub fn analytic_gradient(model: &FusionModel, instance: &Instance, loss: &Loss) -> Result<(FusionModel, Trace), FusionError> {
    let trace = model.forward(instance)?;
    let (dt, dv) = loss.gradient(&trace.t_out, &trace.v_out);
    let grad = model.backward(instance, &trace, &dt, &dv);
    Ok((grad, trace))
}

struct Slot {
    site: ParamSite,
    name: String,
    start: usize,
    len: usize,
}

fn set_parameter(model: &mut FusionModel, slot_index: usize, offset: usize, value: f64) {
    let mut k = 0;
    model.visit_mut(&mut |_, _, p| {
        if k == slot_index {
            p[offset] = value;
        }
        k += 1;
    });
}

/// Compares `analytic` (a model-shaped gradient) against central differences
/// of `loss`. Each perturbed evaluation resumes where the parameter first acts.
pub fn compare_gradients(
    model: &FusionModel,
    instance: &Instance,
    loss: &Loss,
    analytic: &FusionModel,
) -> Result<GradientReport, FusionError> {
    let trace = model.forward(instance)?;
    let base_loss = loss.value(&trace.t_out, &trace.v_out);
    if !base_loss.is_finite() {
        return Err(FusionError::NonFinite("loss".into()));
    }
    let mut slots = Vec::new();
    let mut values = Vec::new();
    model.visit(&mut |site, name, p| {
        slots.push(Slot {
            site,
            name: name.to_string(),
            start: values.len(),
            len: p.len(),
        });
        values.extend_from_slice(p);
    });
    let grads = analytic.flatten();
    if grads.len() != values.len() {
        return Err(FusionError::DimensionMismatch {
            context: "gradient length",
            expected: values.len(),
            found: grads.len(),
        });
    }

    let mut work = model.clone();
    let mut report = GradientReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        parameters_checked: values.len(),
        refined: 0,
        loss: base_loss,
    };
    for (si, slot) in slots.iter().enumerate() {
        for off in 0..slot.len {
            let idx = slot.start + off;
            let orig = values[idx];
            let mut eval = |x: f64| -> Result<f64, FusionError> {
                set_parameter(&mut work, si, off, x);
                let (t, v) = work.outputs_from(slot.site, instance, &trace)?;
                Ok(loss.value(&t, &v))
            };
            let mut estimate = |step: f64| -> Result<(f64, f64), FusionError> {
                let plus = eval(orig + step)?;
                let minus = eval(orig - step)?;
                let forward = (plus - base_loss) / step;
                let backward = (base_loss - minus) / step;
                let spread = relative_error(forward, backward);
                Ok(((plus - minus) / (2.0 * step), spread))
            };
            let (mut numeric, spread) = estimate(FD_STEP)?;
            let suspicious = spread > KINK_TOLERANCE;
            if suspicious {
                let (finer, _) = estimate(FD_STEP / 10.0)?;
                if relative_error(numeric, finer) > STEP_AGREEMENT {
                    numeric = finer;
                }
            }
            set_parameter(&mut work, si, off, orig);
            report.refined += usize::from(suspicious);
            let a = grads[idx];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(FusionError::NonFinite(format!("gradient of {}[{off}]", slot.name)));
            }
            let err = relative_error(a, numeric);
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = format!("{}[{off}]", slot.name);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Maximum relative error between backpropagated and finite-difference
/// gradients over every trainable parameter.
pub fn gradient_check(model: &FusionModel, instance: &Instance, loss: &Loss) -> Result<GradientReport, FusionError> {
    let (grad, _) = analytic_gradient(model, instance, loss)?;
    compare_gradients(model, instance, loss, &grad)
}
