use serde::{Deserialize, Serialize};

use crate::complex::ProbabilityGrid;
use crate::oracle::BinaryMask;
use crate::{Error, Result};

/// Additive smoothing in the Dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;
/// Probabilities are clipped to `[BCE_CLIP, 1 - BCE_CLIP]` inside the BCE.
pub const BCE_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Dice,
    Bce,
}

impl LossKind {
    pub fn evaluate(self, s: &ProbabilityGrid, y: &BinaryMask) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::Dice => dice_loss(s, y),
            LossKind::Bce => bce_loss(s, y),
        }
    }
}

fn check_shapes(s: &ProbabilityGrid, y: &BinaryMask) -> Result<()> {
    if s.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: s.values().len(),
            actual: y.bits().len(),
        });
    }
    Ok(())
}

/// Soft Dice loss `1 - (2 sum(S Y) + 1) / (sum S + sum Y + 1)` and its gradient.
pub fn dice_loss(s: &ProbabilityGrid, y: &BinaryMask) -> Result<(f64, Vec<f64>)> {
    check_shapes(s, y)?;
    let target = |b: bool| if b { 1.0 } else { 0.0 };
    let (mut inter, mut sum_s, mut sum_y) = (0.0, 0.0, 0.0);
    for (&v, &b) in s.values().iter().zip(y.bits()) {
        inter += v * target(b);
        sum_s += v;
        sum_y += target(b);
    }
    let num = 2.0 * inter + DICE_SMOOTH;
    let den = sum_s + sum_y + DICE_SMOOTH;
    let grad = y
        .bits()
        .iter()
        .map(|&b| -(2.0 * target(b)) / den + num / (den * den))
        .collect();
    Ok((1.0 - num / den, grad))
}

/// Mean binary cross-entropy and its gradient (zero where clipping is active).
pub fn bce_loss(s: &ProbabilityGrid, y: &BinaryMask) -> Result<(f64, Vec<f64>)> {
    check_shapes(s, y)?;
    let n = s.values().len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(s.values().len());
    for (&v, &b) in s.values().iter().zip(y.bits()) {
        let clipped = v.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        let inside = clipped == v;
        if b {
            loss -= clipped.ln();
            grad.push(if inside { -1.0 / (clipped * n) } else { 0.0 });
        } else {
            loss -= (1.0 - clipped).ln();
            grad.push(if inside { 1.0 / ((1.0 - clipped) * n) } else { 0.0 });
        }
    }
    Ok((loss / n, grad))
}
