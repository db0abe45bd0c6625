//! Pixelwise topological gradients from persistence barcodes.
//!
//! [`topo_grad_beta1`] is the single-loop procedure: on a working copy of
//! the probabilities it repeatedly finds the longest loop bar, fills in the
//! pixel that creates it (gradient `-1`) and empties the pixel that kills it
//! (gradient `+1`), recomputing the barcode each time. [`topo_grad_general`]
//! does the same for any number of wanted features per dimension and can
//! also shorten the most persistent unwanted one.

use std::collections::BTreeMap;

use crate::complex::{build_complex, Cell, FilteredComplex, ProbabilityGrid};
use crate::persistence::{compute_barcode, Bar};
use crate::{Error, Result};

/// Tolerance used by [`Placement::ValueMatch`].
pub const VALUE_MATCH_TOLERANCE: f64 = 1e-12;

/// Gradient of the topological loss with respect to each pixel probability.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl GradientMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: height * width,
                actual: values.len(),
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&g| g == 0.0)
    }

    /// `(row, col, value)` for every nonzero entry, row-major.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &g)| g != 0.0)
            .map(|(idx, &g)| (idx / self.width, idx % self.width, g))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|g| g * factor).collect(),
        }
    }
}

/// Desired Betti numbers per dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyPrior {
    desired: BTreeMap<usize, usize>,
    penalize_extra: bool,
    extra_per_iteration: usize,
}

impl TopologyPrior {
    pub fn new(desired: BTreeMap<usize, usize>, penalize_extra: bool) -> Result<Self> {
        if desired.is_empty() {
            return Err(Error::InvalidConfig("topology prior names no dimension".into()));
        }
        if let Some(d) = desired.keys().find(|&&d| d > 1) {
            return Err(Error::InvalidConfig(format!(
                "dimension {d} is not supported for 2D grids"
            )));
        }
        let wants_features = desired.values().any(|&n| n > 0);
        if wants_features && desired.get(&0) == Some(&0) {
            return Err(Error::InvalidConfig(
                "a prior asking for features needs at least one component".into(),
            ));
        }
        Ok(Self {
            desired,
            penalize_extra,
            extra_per_iteration: 1,
        })
    }

    /// `(beta0, beta1)` with both dimensions specified.
    pub fn betti(beta0: usize, beta1: usize, penalize_extra: bool) -> Result<Self> {
        Self::new(BTreeMap::from([(0, beta0), (1, beta1)]), penalize_extra)
    }

    /// One loop and nothing else asked for.
    pub fn single_loop() -> Self {
        Self::new(BTreeMap::from([(1, 1)]), false).expect("valid prior")
    }

    /// Number of unwanted bars shortened per dimension per iteration.
    pub fn with_extra_per_iteration(mut self, r: usize) -> Self {
        self.extra_per_iteration = r;
        self
    }

    pub fn desired(&self, dim: usize) -> Option<usize> {
        self.desired.get(&dim).copied()
    }

    pub fn dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.desired.iter().map(|(&d, &n)| (d, n))
    }

    pub fn penalize_extra(&self) -> bool {
        self.penalize_extra
    }

    /// Parses `"b0,b1"`; an empty field leaves that dimension unconstrained.
    pub fn parse_betti(text: &str, penalize_extra: bool) -> Result<Self> {
        let mut desired = BTreeMap::new();
        for (dim, field) in text.split(',').enumerate() {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            let n = field
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad Betti number {field:?}")))?;
            desired.insert(dim, n);
        }
        Self::new(desired, penalize_extra)
    }
}

/// How the pixel at a bar end is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// The determining pixel of the creator (birth) or destroyer (death) cell.
    #[default]
    PairedCell,
    /// Every pixel whose value equals the endpoint value within
    /// [`VALUE_MATCH_TOLERANCE`].
    ValueMatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopoGradConfig {
    /// Pixels per bar end.
    pub k: usize,
    /// Bar ends within `epsilon` of 0 or 1 are left alone.
    pub epsilon: f64,
    pub placement: Placement,
}

impl Default for TopoGradConfig {
    fn default() -> Self {
        Self {
            k: 5,
            epsilon: 0.01,
            placement: Placement::PairedCell,
        }
    }
}

impl TopoGradConfig {
    pub fn new(k: usize, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            k,
            epsilon,
            placement: Placement::PairedCell,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum End {
    Birth,
    Death,
}

/// Pixels at one end of a bar in the current working copy.
fn end_pixels(
    bar: &Bar,
    end: End,
    complex: &FilteredComplex,
    working: &ProbabilityGrid,
    placement: Placement,
) -> Vec<(usize, usize)> {
    let (cell, value): (Option<Cell>, f64) = match end {
        End::Birth => (Some(bar.creator), bar.birth),
        End::Death => (bar.destroyer, bar.death),
    };
    let Some(cell) = cell else {
        return Vec::new();
    };
    match placement {
        Placement::PairedCell => vec![complex.determining_pixel(cell)],
        Placement::ValueMatch => {
            let target = 1.0 - value;
            let (h, w) = working.shape();
            (0..h)
                .flat_map(|i| (0..w).map(move |j| (i, j)))
                .filter(|&(i, j)| (working.get(i, j) - target).abs() <= VALUE_MATCH_TOLERANCE)
                .collect()
        }
    }
}

/// Sets each pixel to `fill` in the working copy and writes `grad` into `g`.
/// Returns whether any pixel value changed.
fn push(
    pixels: &[(usize, usize)],
    fill: f64,
    grad: f64,
    working: &mut ProbabilityGrid,
    g: &mut GradientMap,
) -> bool {
    let mut changed = false;
    for &(i, j) in pixels {
        changed |= working.get(i, j) != fill;
        working.set(i, j, fill);
        g.set(i, j, grad);
    }
    changed
}

/// Gradient that makes the most persistent loop more persistent.
pub fn topo_grad_beta1(s: &ProbabilityGrid, cfg: &TopoGradConfig) -> Result<GradientMap> {
    cfg.validate()?;
    let (h, w) = s.shape();
    let mut g = GradientMap::zeros(h, w);
    let mut working = s.clone();
    for _ in 0..cfg.k {
        let complex = build_complex(&working)?;
        let barcode = compute_barcode(&complex)?;
        let Some(&bar) = barcode.longest_bar(1, 1) else {
            break;
        };
        let mut changed = false;
        if bar.birth > cfg.epsilon {
            let pixels = end_pixels(&bar, End::Birth, &complex, &working, cfg.placement);
            changed |= push(&pixels, 1.0, -1.0, &mut working, &mut g);
        }
        if bar.death < 1.0 - cfg.epsilon {
            let pixels = end_pixels(&bar, End::Death, &complex, &working, cfg.placement);
            changed |= push(&pixels, 0.0, 1.0, &mut working, &mut g);
        }
        if !changed {
            // nothing moved, so every later iteration would repeat this one
            break;
        }
    }
    Ok(g)
}

/// Gradient for an arbitrary prior: lengthens the `beta_d*` longest bars of
/// each named dimension and, with `penalize_extra`, shortens the next most
/// persistent non-essential bar(s).
pub fn topo_grad_general(
    s: &ProbabilityGrid,
    prior: &TopologyPrior,
    cfg: &TopoGradConfig,
) -> Result<GradientMap> {
    cfg.validate()?;
    let (h, w) = s.shape();
    let mut g = GradientMap::zeros(h, w);
    let mut working = s.clone();
    for _ in 0..cfg.k {
        let complex = build_complex(&working)?;
        let barcode = compute_barcode(&complex)?;
        let mut changed = false;
        for (dim, wanted) in prior.dims() {
            let ranked: Vec<Bar> = barcode.ranked(dim).copied().collect();
            for bar in ranked.iter().take(wanted) {
                if bar.birth > cfg.epsilon {
                    let pixels = end_pixels(bar, End::Birth, &complex, &working, cfg.placement);
                    changed |= push(&pixels, 1.0, -1.0, &mut working, &mut g);
                }
                if !bar.essential && bar.death < 1.0 - cfg.epsilon {
                    let pixels = end_pixels(bar, End::Death, &complex, &working, cfg.placement);
                    changed |= push(&pixels, 0.0, 1.0, &mut working, &mut g);
                }
            }
            if !prior.penalize_extra() {
                continue;
            }
            let extras = ranked
                .iter()
                .skip(wanted)
                .filter(|b| !b.essential)
                .take(prior.extra_per_iteration);
            for bar in extras {
                // Collapse the bar in the working copy by lowering its creator
                // to the death level. Raising the destroyer as well would make
                // it the creator of the same feature on the next pass.
                let deaths = end_pixels(bar, End::Death, &complex, &working, cfg.placement);
                for &(i, j) in &deaths {
                    g.set(i, j, -1.0);
                }
                let births = end_pixels(bar, End::Birth, &complex, &working, cfg.placement);
                changed |= push(&births, 1.0 - bar.death, 1.0, &mut working, &mut g);
            }
        }
        if !changed {
            break;
        }
    }
    Ok(g)
}

/// One gradient-descent step on the probabilities, clamped to `[0, 1]`.
pub fn apply_gradient_step(
    s: &ProbabilityGrid,
    g: &GradientMap,
    eta: f64,
) -> Result<ProbabilityGrid> {
    if s.shape() != g.shape() {
        return Err(Error::ShapeMismatch {
            expected: s.values().len(),
            actual: g.values().len(),
        });
    }
    let values = s
        .values()
        .iter()
        .zip(g.values())
        .map(|(&v, &d)| (v - eta * d).clamp(0.0, 1.0))
        .collect();
    ProbabilityGrid::new(s.height(), s.width(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(ring: f64, center: f64) -> ProbabilityGrid {
        ProbabilityGrid::from_rows(&[
            vec![ring, ring, ring],
            vec![ring, center, ring],
            vec![ring, ring, ring],
        ])
        .unwrap()
    }

    #[test]
    fn ring_trace_k1() {
        let s = ring(0.9, 0.1);
        let g = topo_grad_beta1(&s, &TopoGradConfig::new(1, 0.01).unwrap()).unwrap();
        assert_eq!(g.get(1, 1), 1.0);
        let negatives: Vec<_> = g.nonzero().filter(|e| e.2 == -1.0).collect();
        assert_eq!(negatives.len(), 1);
        assert_eq!(g.nonzero().count(), 2);
        let (i, j, _) = negatives[0];
        assert_eq!(s.get(i, j), 0.9);
    }

    #[test]
    fn value_match_hits_every_tied_pixel() {
        let s = ring(0.9, 0.1);
        let cfg = TopoGradConfig::new(1, 0.01).unwrap().with_placement(Placement::ValueMatch);
        let g = topo_grad_beta1(&s, &cfg).unwrap();
        assert_eq!(g.get(1, 1), 1.0);
        assert_eq!(g.nonzero().filter(|e| e.2 == -1.0).count(), 8);
    }

    #[test]
    fn fixed_points() {
        let cfg = TopoGradConfig::new(5, 0.01).unwrap();
        assert!(topo_grad_beta1(&ring(1.0, 0.0), &cfg).unwrap().is_zero());
        let flat = ProbabilityGrid::filled(6, 6, 0.5).unwrap();
        assert!(topo_grad_beta1(&flat, &cfg).unwrap().is_zero());
        let prior = TopologyPrior::new(BTreeMap::from([(0, 1)]), false).unwrap();
        let ones = ProbabilityGrid::filled(4, 4, 1.0).unwrap();
        assert!(topo_grad_general(&ones, &prior, &cfg).unwrap().is_zero());
    }

    #[test]
    fn input_is_not_mutated() {
        let s = ring(0.7, 0.2);
        let before = s.clone();
        let cfg = TopoGradConfig::new(3, 0.01).unwrap();
        topo_grad_beta1(&s, &cfg).unwrap();
        topo_grad_general(&s, &TopologyPrior::betti(1, 1, true).unwrap(), &cfg).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn config_validation() {
        assert!(TopoGradConfig::new(0, 0.01).is_err());
        assert!(TopoGradConfig::new(1, 0.0).is_err());
        assert!(TopoGradConfig::new(1, 0.5).is_err());
        assert!(TopologyPrior::new(BTreeMap::new(), false).is_err());
        assert!(TopologyPrior::betti(0, 1, false).is_err());
        assert!(TopologyPrior::new(BTreeMap::from([(2, 1)]), false).is_err());
        let p = TopologyPrior::parse_betti("1,1", false).unwrap();
        assert_eq!((p.desired(0), p.desired(1)), (Some(1), Some(1)));
        assert_eq!(TopologyPrior::parse_betti(",1", false).unwrap().desired(0), None);
    }

    #[test]
    fn gradient_step() {
        let s = ProbabilityGrid::new(1, 3, vec![0.1, 0.02, 0.5]).unwrap();
        let g = GradientMap::from_values(1, 3, vec![1.0, 1.0, 0.0]).unwrap();
        let out = apply_gradient_step(&s, &g, 0.05).unwrap();
        assert!((out.get(0, 0) - 0.05).abs() < 1e-15);
        assert_eq!(out.get(0, 1), 0.0);
        assert_eq!(out.get(0, 2), 0.5);
        let zero = GradientMap::zeros(1, 3);
        assert_eq!(apply_gradient_step(&s, &zero, 0.3).unwrap(), s);
        assert!(apply_gradient_step(&s, &GradientMap::zeros(3, 1), 0.1).is_err());
    }
}
