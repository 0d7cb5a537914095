//! Scalar residual preservation and the copy-mixture output distribution.

use ndarray::Array2;

use super::nn::sigmoid;
use crate::error::FusionError;

pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// `post + sigmoid(alpha)·pre`.
pub fn residual_preserve(pre_graph: &Array2<f64>, post_graph: &Array2<f64>, alpha: f64) -> Result<Array2<f64>, FusionError> {
    if pre_graph.dim() != post_graph.dim() {
        return Err(FusionError::ShapeMismatch {
            left: pre_graph.dim(),
            right: post_graph.dim(),
        });
    }
    Ok(post_graph + &(pre_graph * sigmoid(alpha)))
}

fn check_distribution(p: &[f64], what: &'static str) -> Result<(), FusionError> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(FusionError::NotADistribution { what, sum });
    }
    Ok(())
}

/// `(1−p)·p_vocab` followed by `p·p_ocr`: the two supports are disjoint, with
/// vocabulary entries first.
pub fn copy_mixture(p_vocab: &[f64], p_ocr: &[f64], p_copy: f64) -> Result<Vec<f64>, FusionError> {
    check_distribution(p_vocab, "vocabulary distribution")?;
    check_distribution(p_ocr, "OCR distribution")?;
    if !(0.0..=1.0).contains(&p_copy) {
        return Err(FusionError::InvalidConfig(format!("copy weight {p_copy} outside [0, 1]")));
    }
    Ok(p_vocab
        .iter()
        .map(|&p| (1.0 - p_copy) * p)
        .chain(p_ocr.iter().map(|&p| p_copy * p))
        .collect())
}
