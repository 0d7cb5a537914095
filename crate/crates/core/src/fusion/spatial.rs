//! Box geometry and the scale-invariant pairwise spatial features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::FusionError;

/// Axis-aligned box, centre plus extent, in normalized image units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, FusionError> {
        let b = BoundingBox { cx, cy, w, h };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<(), FusionError> {
        // NaN fails the comparison too
        if self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite() {
            Ok(())
        } else {
            Err(FusionError::DegenerateBox { w: self.w, h: self.h })
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

pub const SPATIAL_DIM: usize = 4;

/// `[(cx_j - cx_i)/w_i, (cy_j - cy_i)/h_i, ln(w_j/w_i), ln(h_j/h_i)]`
pub fn spatial_features(i: &BoundingBox, j: &BoundingBox) -> Result<[f64; SPATIAL_DIM], FusionError> {
    i.check()?;
    j.check()?;
    Ok([
        (j.cx - i.cx) / i.w,
        (j.cy - i.cy) / i.h,
        (j.w / i.w).ln(),
        (j.h / i.h).ln(),
    ])
}

/// `count` boxes of equal width laid left to right along the image midline.
pub fn text_row(count: usize) -> Vec<BoundingBox> {
    let n = count.max(1) as f64;
    (0..count)
        .map(|i| BoundingBox {
            cx: (i as f64 + 0.5) / n,
            cy: 0.5,
            w: 0.8 / n,
            h: 0.1,
        })
        .collect()
}

/// Random region boxes standing in for detector proposals.
pub fn random_regions<R: Rng>(rng: &mut R, count: usize) -> Vec<BoundingBox> {
    (0..count)
        .map(|_| BoundingBox {
            cx: rng.random_range(0.1..0.9),
            cy: rng.random_range(0.1..0.9),
            w: rng.random_range(0.1..0.5),
            h: rng.random_range(0.1..0.5),
        })
        .collect()
}
