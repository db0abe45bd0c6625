//! Simulated k-space undersampling.
//!
//! Rows of the centred 2D spectrum are treated as phase-encode lines. Lines
//! outside a central band are zero-filled at random and the image is
//! reconstructed as the magnitude of the inverse transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::complex::ProbabilityGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    /// Central k-space lines that are always kept.
    pub band: usize,
    /// Probability of dropping each line outside the band.
    pub p_remove: f64,
    pub seed: u64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            band: 8,
            p_remove: 0.75,
            seed: 0,
        }
    }
}

impl DegradeConfig {
    pub fn validate(&self, height: usize) -> Result<()> {
        if self.band == 0 || self.band > height {
            return Err(Error::InvalidConfig(format!(
                "band {} must lie in 1..={height}",
                self.band
            )));
        }
        if !(0.0..=1.0).contains(&self.p_remove) {
            return Err(Error::InvalidConfig(format!(
                "p_remove {} outside [0, 1]",
                self.p_remove
            )));
        }
        Ok(())
    }
}

/// Signed frequency of FFT row `r` in a spectrum of `n` rows.
fn signed_frequency(r: usize, n: usize) -> i64 {
    if r < n.div_ceil(2) {
        r as i64
    } else {
        r as i64 - n as i64
    }
}

/// Which FFT rows survive, indexed in the unshifted FFT layout.
///
/// The band covers signed frequencies `-(band/2) ..= band - 1 - band/2`.
/// Remaining rows are visited from the most negative frequency upward and
/// each consumes one uniform draw from a ChaCha8 stream seeded with
/// `cfg.seed`.
pub fn retained_rows(height: usize, cfg: &DegradeConfig) -> Result<Vec<bool>> {
    cfg.validate(height)?;
    let lo = -((cfg.band / 2) as i64);
    let hi = lo + cfg.band as i64 - 1;
    let mut rows: Vec<usize> = (0..height).collect();
    rows.sort_by_key(|&r| signed_frequency(r, height));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut keep = vec![true; height];
    for r in rows {
        let f = signed_frequency(r, height);
        if (lo..=hi).contains(&f) {
            continue;
        }
        if rng.random::<f64>() < cfg.p_remove {
            keep[r] = false;
        }
    }
    Ok(keep)
}

fn transform_axes(data: &mut [Complex<f64>], height: usize, width: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for j in 0..width {
        for (i, c) in column.iter_mut().enumerate() {
            *c = data[i * width + j];
        }
        col_fft.process(&mut column);
        for (i, c) in column.iter().enumerate() {
            data[i * width + j] = *c;
        }
    }
}

/// Unnormalized forward 2D DFT of a row-major array.
pub fn fft2(data: &mut [Complex<f64>], height: usize, width: usize) {
    transform_axes(data, height, width, false);
}

/// Inverse 2D DFT including the `1 / (height * width)` factor.
pub fn ifft2(data: &mut [Complex<f64>], height: usize, width: usize) {
    transform_axes(data, height, width, true);
    let scale = 1.0 / (height * width) as f64;
    for c in data.iter_mut() {
        *c *= scale;
    }
}

/// Drops k-space lines and reconstructs a magnitude image clamped to `[0, 1]`.
pub fn degrade_kspace(image: &ProbabilityGrid, cfg: &DegradeConfig) -> Result<ProbabilityGrid> {
    let (h, w) = image.shape();
    let keep = retained_rows(h, cfg)?;
    let mut spectrum: Vec<Complex<f64>> =
        image.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(&mut spectrum, h, w);
    for (row, &kept) in spectrum.chunks_exact_mut(w).zip(&keep) {
        if !kept {
            row.fill(Complex::new(0.0, 0.0));
        }
    }
    ifft2(&mut spectrum, h, w);
    ProbabilityGrid::from_clamped(h, w, spectrum.iter().map(|c| c.norm()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_rows_are_centered() {
        let keep = retained_rows(
            8,
            &DegradeConfig {
                band: 4,
                p_remove: 1.0,
                seed: 3,
            },
        )
        .unwrap();
        // frequencies -2, -1, 0, 1 live at rows 6, 7, 0, 1
        assert_eq!(keep, vec![true, true, false, false, false, false, true, true]);
    }

    #[test]
    fn odd_heights_have_full_band() {
        let cfg = DegradeConfig {
            band: 7,
            p_remove: 1.0,
            seed: 0,
        };
        assert!(retained_rows(7, &cfg).unwrap().iter().all(|&k| k));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = DegradeConfig {
            band: 9,
            ..DegradeConfig::default()
        };
        assert!(retained_rows(8, &cfg).is_err());
        cfg.band = 2;
        cfg.p_remove = 1.5;
        assert!(retained_rows(8, &cfg).is_err());
    }

    #[test]
    fn seeds_are_reproducible() {
        let cfg = DegradeConfig {
            seed: 11,
            ..DegradeConfig::default()
        };
        assert_eq!(retained_rows(64, &cfg).unwrap(), retained_rows(64, &cfg).unwrap());
    }

    #[test]
    fn dc_of_constant_image() {
        let mut data = vec![Complex::new(2.0, 0.0); 6];
        fft2(&mut data, 2, 3);
        assert!((data[0].re - 12.0).abs() < 1e-12);
        assert!(data[1..].iter().all(|c| c.norm() < 1e-12));
    }
}
