use serde::{Deserialize, Serialize};

use crate::complex::ProbabilityGrid;
use crate::topograd::{topo_grad_general, TopoGradConfig, TopologyPrior};
use crate::{Error, Result};

/// Step size, fidelity weight, topological weight and iteration cap for
/// [`refine_mask`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub eta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub max_iters: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            mu: 0.5,
            lambda: 1.0,
            max_iters: 200,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(ok(self.eta) && ok(self.mu) && ok(self.lambda)) {
            return Err(Error::InvalidConfig(format!(
                "eta, mu and lambda must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub grid: ProbabilityGrid,
    pub iterations: usize,
    /// The topological gradient vanished before the iteration cap.
    pub converged: bool,
}

/// Gradient descent on the probabilities themselves:
/// `S <- clamp(S - eta * (lambda * G + mu * (S - S0)))`, stopping once
/// `G` is zero.
pub fn refine_mask(
    s0: &ProbabilityGrid,
    prior: &TopologyPrior,
    topo: &TopoGradConfig,
    cfg: &RefineConfig,
) -> Result<Refinement> {
    cfg.validate()?;
    topo.validate()?;
    let mut s = s0.clone();
    for iteration in 0..cfg.max_iters {
        let g = topo_grad_general(&s, prior, topo)?;
        if g.is_zero() {
            return Ok(Refinement {
                grid: s,
                iterations: iteration,
                converged: true,
            });
        }
        let values = s
            .values()
            .iter()
            .zip(s0.values())
            .zip(g.values())
            .map(|((&v, &v0), &gv)| {
                (v - cfg.eta * (cfg.lambda * gv + cfg.mu * (v - v0))).clamp(0.0, 1.0)
            })
            .collect();
        s = ProbabilityGrid::new(s.height(), s.width(), values)?;
    }
    Ok(Refinement {
        grid: s,
        iterations: cfg.max_iters,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring() -> ProbabilityGrid {
        ProbabilityGrid::from_rows(&[
            vec![1.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn full_span_ring_is_left_alone() {
        let out = refine_mask(
            &ring(),
            &TopologyPrior::single_loop(),
            &TopoGradConfig::default(),
            &RefineConfig::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.grid, ring());
    }

    #[test]
    fn heavy_fidelity_keeps_input() {
        let mut s0 = ring();
        s0.set(1, 1, 0.3);
        s0.set(0, 1, 0.6);
        let cfg = RefineConfig {
            eta: 0.01,
            mu: 50.0,
            lambda: 0.01,
            max_iters: 50,
        };
        let out = refine_mask(&s0, &TopologyPrior::single_loop(), &TopoGradConfig::default(), &cfg)
            .unwrap();
        for (a, b) in out.grid.values().iter().zip(s0.values()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn weak_ring_gets_stronger() {
        let mut s0 = ring();
        s0.set(0, 1, 0.4);
        let out = refine_mask(
            &s0,
            &TopologyPrior::single_loop(),
            &TopoGradConfig::default(),
            &RefineConfig::default(),
        )
        .unwrap();
        assert!(out.grid.get(0, 1) > 0.5);
        assert!(out.grid.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
