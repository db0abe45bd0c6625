//! Synthetic annulus phantoms, k-space degradation and dataset files.
//!
//! All randomness comes from ChaCha8 streams seeded with explicit `u64`
//! seeds, so generated datasets are reproducible across platforms.

mod kspace;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use kspace::{degrade_kspace, fft2, ifft2, retained_rows, DegradeConfig};

use crate::complex::ProbabilityGrid;
use crate::gridio;
use crate::oracle::{betti0_bruteforce, betti1_bruteforce, BinaryMask};
use crate::{Error, Result};

/// Mean intensities of the three phantom regions and the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomIntensities {
    pub ring: f64,
    pub interior: f64,
    pub exterior: f64,
    pub noise_sigma: f64,
}

impl Default for PhantomIntensities {
    fn default() -> Self {
        Self {
            ring: 0.8,
            interior: 0.4,
            exterior: 0.2,
            noise_sigma: 0.05,
        }
    }
}

/// Annulus placement; `center` is in pixel-index coordinates `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusGeometry {
    pub height: usize,
    pub width: usize,
    pub center: (f64, f64),
    pub r_inner: f64,
    pub r_outer: f64,
}

impl AnnulusGeometry {
    fn validate(&self) -> Result<()> {
        let limit = self.height.min(self.width) as f64 / 2.0;
        if !(0.0 < self.r_inner && self.r_inner < self.r_outer && self.r_outer < limit) {
            return Err(Error::DegeneratePhantom(format!(
                "radii must satisfy 0 < {} < {} < {limit}",
                self.r_inner, self.r_outer
            )));
        }
        Ok(())
    }

    /// Pixels whose index lies within the closed annulus.
    pub fn label(&self) -> BinaryMask {
        let bits = (0..self.height)
            .flat_map(|i| (0..self.width).map(move |j| (i, j)))
            .map(|(i, j)| {
                let d = (i as f64 - self.center.0).hypot(j as f64 - self.center.1);
                self.r_inner <= d && d <= self.r_outer
            })
            .collect();
        BinaryMask::new(self.height, self.width, bits).expect("positive shape")
    }

    /// Inside the hole (strictly within the inner radius).
    fn is_interior(&self, i: usize, j: usize) -> bool {
        (i as f64 - self.center.0).hypot(j as f64 - self.center.1) < self.r_inner
    }
}

/// An intensity image and its ground-truth ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: ProbabilityGrid,
    pub label: BinaryMask,
}

fn check_single_ring(label: &BinaryMask) -> Result<()> {
    let betti = (betti0_bruteforce(label), betti1_bruteforce(label));
    if betti != (1, 1) {
        return Err(Error::DegeneratePhantom(format!(
            "label has Betti numbers {betti:?}, expected (1, 1)"
        )));
    }
    Ok(())
}

/// Draws a noisy annulus phantom. The label is checked to be one ring.
pub fn make_annulus(
    geometry: &AnnulusGeometry,
    intensities: &PhantomIntensities,
    seed: u64,
) -> Result<Phantom> {
    geometry.validate()?;
    let label = geometry.label();
    check_single_ring(&label)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, intensities.noise_sigma)
        .map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
    let (h, w) = (geometry.height, geometry.width);
    let mut values = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let base = if label.get(i, j) {
                intensities.ring
            } else if geometry.is_interior(i, j) {
                intensities.interior
            } else {
                intensities.exterior
            };
            values.push(base + noise.sample(&mut rng));
        }
    }
    Ok(Phantom {
        image: ProbabilityGrid::from_clamped(h, w, values)?,
        label,
    })
}

/// A probability map that looks like an imperfect ring prediction: high
/// on the annulus, low elsewhere, with Gaussian noise, a weak arc that
/// breaks the ring, and a spurious bright blob outside it.
pub fn make_defective_prediction(
    geometry: &AnnulusGeometry,
    seed: u64,
) -> Result<(ProbabilityGrid, BinaryMask)> {
    geometry.validate()?;
    let label = geometry.label();
    check_single_ring(&label)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.08).expect("valid sigma");
    let (h, w) = (geometry.height, geometry.width);
    let mut values: Vec<f64> = (0..h * w)
        .map(|idx| {
            let base = if label.bits()[idx] { 0.85 } else { 0.1 };
            base + noise.sample(&mut rng)
        })
        .collect();

    let (ci, cj) = geometry.center;
    let gap_angle = rng.random_range(0.0..std::f64::consts::TAU);
    let gap_half_width = rng.random_range(0.15..0.35);
    let gap_level = rng.random_range(0.25..0.45);
    for i in 0..h {
        for j in 0..w {
            if !label.get(i, j) {
                continue;
            }
            let angle = (j as f64 - cj).atan2(i as f64 - ci);
            let mut delta = (angle - gap_angle).rem_euclid(std::f64::consts::TAU);
            if delta > std::f64::consts::PI {
                delta = std::f64::consts::TAU - delta;
            }
            if delta < gap_half_width {
                values[i * w + j] = gap_level + 0.5 * noise.sample(&mut rng);
            }
        }
    }

    if rng.random_bool(0.5) {
        let blob_angle = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = geometry.r_outer + 4.0;
        let bi = (ci + radius * blob_angle.cos()).round();
        let bj = (cj + radius * blob_angle.sin()).round();
        let level = rng.random_range(0.6..0.75);
        for di in -1..=1 {
            for dj in -1..=1 {
                let (i, j) = (bi + di as f64, bj + dj as f64);
                if i >= 0.0 && j >= 0.0 && (i as usize) < h && (j as usize) < w {
                    values[i as usize * w + j as usize] = level;
                }
            }
        }
    }

    Ok((ProbabilityGrid::from_clamped(h, w, values)?, label))
}

/// Which part of a dataset an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Labeled,
    Unlabeled,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub height: usize,
    pub width: usize,
    /// Inner radius range `[lo, hi)`.
    pub r_inner: (f64, f64),
    /// Ring thickness range `[lo, hi)`.
    pub thickness: (f64, f64),
    /// Maximum offset of the centre from the image middle, per axis.
    pub center_jitter: f64,
    pub intensities: PhantomIntensities,
    pub band: usize,
    pub p_remove: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_labeled: 5,
            n_unlabeled: 50,
            n_test: 50,
            height: 64,
            width: 64,
            r_inner: (7.0, 12.0),
            thickness: (3.0, 6.0),
            center_jitter: 4.0,
            intensities: PhantomIntensities::default(),
            band: 8,
            p_remove: 0.75,
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn total(&self) -> usize {
        self.n_labeled + self.n_unlabeled + self.n_test
    }

    /// Defaults with geometry and k-space band scaled to `size x size`
    /// images. Radii are floored so small images still hold a clean ring.
    pub fn for_size(size: usize) -> Self {
        let base = Self::default();
        let s = size as f64 / base.height as f64;
        let r_lo = (base.r_inner.0 * s).max(2.5);
        let t_lo = (base.thickness.0 * s).max(1.5);
        Self {
            height: size,
            width: size,
            r_inner: (r_lo, (base.r_inner.1 * s).max(r_lo + 0.5)),
            thickness: (t_lo, (base.thickness.1 * s).max(t_lo + 0.5)),
            center_jitter: base.center_jitter * s,
            band: ((base.band as f64 * s).round() as usize).clamp(1, size),
            ..base
        }
    }
}

/// A degraded image with its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ProbabilityGrid,
    pub label: BinaryMask,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Generates `total()` phantoms: labeled first, then unlabeled, then test.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.total() == 0 {
        return Err(Error::InvalidConfig("dataset has no items".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let splits = std::iter::repeat_n(Split::Labeled, cfg.n_labeled)
        .chain(std::iter::repeat_n(Split::Unlabeled, cfg.n_unlabeled))
        .chain(std::iter::repeat_n(Split::Test, cfg.n_test));
    let mut samples = Vec::with_capacity(cfg.total());
    for split in splits {
        let r_inner = rng.random_range(cfg.r_inner.0..cfg.r_inner.1);
        let thickness = rng.random_range(cfg.thickness.0..cfg.thickness.1);
        let jitter = |rng: &mut ChaCha8Rng| {
            if cfg.center_jitter > 0.0 {
                rng.random_range(-cfg.center_jitter..cfg.center_jitter)
            } else {
                0.0
            }
        };
        let center = (
            cfg.height as f64 / 2.0 + jitter(&mut rng),
            cfg.width as f64 / 2.0 + jitter(&mut rng),
        );
        let geometry = AnnulusGeometry {
            height: cfg.height,
            width: cfg.width,
            center,
            r_inner,
            r_outer: r_inner + thickness,
        };
        let phantom = make_annulus(&geometry, &cfg.intensities, rng.random())?;
        let degrade = DegradeConfig {
            band: cfg.band,
            p_remove: cfg.p_remove,
            seed: rng.random(),
        };
        samples.push(Sample {
            image: degrade_kspace(&phantom.image, &degrade)?,
            label: phantom.label,
            split,
        });
    }
    Ok(Dataset {
        config: cfg.clone(),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub image_path: PathBuf,
    pub label_path: PathBuf,
    pub split: Split,
}

/// Index of a dataset directory. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub items: Vec<ManifestItem>,
    pub seed: u64,
    pub config: DatasetConfig,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes images as CSV, labels as PGM and `manifest.json` into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<Manifest> {
    for sub in ["images", "labels"] {
        let path = dir.join(sub);
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
    }
    let mut items = Vec::with_capacity(dataset.samples.len());
    for (idx, sample) in dataset.samples.iter().enumerate() {
        let image_path = PathBuf::from(format!("images/{idx:04}.csv"));
        let label_path = PathBuf::from(format!("labels/{idx:04}.pgm"));
        gridio::write_grid(&dir.join(&image_path), &sample.image)?;
        gridio::write_mask(&dir.join(&label_path), &sample.label)?;
        items.push(ManifestItem {
            image_path,
            label_path,
            split: sample.split,
        });
    }
    let manifest = Manifest {
        items,
        seed: dataset.config.seed,
        config: dataset.config.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads a dataset from a manifest file or a directory containing one.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        kind: "manifest",
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let samples = manifest
        .items
        .iter()
        .map(|item| {
            Ok(Sample {
                image: gridio::read_grid(&root.join(&item.image_path))?,
                label: gridio::read_mask(&root.join(&item.label_path))?,
                split: item.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: manifest.config,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(r_inner: f64, r_outer: f64) -> AnnulusGeometry {
        AnnulusGeometry {
            height: 64,
            width: 64,
            center: (32.0, 32.0),
            r_inner,
            r_outer,
        }
    }

    #[test]
    fn annulus_is_one_ring() {
        let ph = make_annulus(&geometry(8.0, 14.0), &PhantomIntensities::default(), 3).unwrap();
        assert_eq!(betti0_bruteforce(&ph.label), 1);
        assert_eq!(betti1_bruteforce(&ph.label), 1);
        assert!(ph.image.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn thin_annulus_around_a_pixel() {
        let g = AnnulusGeometry {
            height: 5,
            width: 5,
            center: (2.0, 2.0),
            r_inner: 0.5,
            r_outer: 1.2,
        };
        let ph = make_annulus(&g, &PhantomIntensities::default(), 0).unwrap();
        assert_eq!(ph.label.count(), 4);
        assert!(!ph.label.get(2, 2));
    }

    #[test]
    fn rejects_bad_radii() {
        let intens = PhantomIntensities::default();
        assert!(make_annulus(&geometry(0.0, 5.0), &intens, 0).is_err());
        assert!(make_annulus(&geometry(6.0, 5.0), &intens, 0).is_err());
        assert!(make_annulus(&geometry(6.0, 32.0), &intens, 0).is_err());
        // a ring too thin to close under 8-connectivity
        assert!(make_annulus(&geometry(10.0, 10.2), &intens, 0).is_err());
    }

    #[test]
    fn phantoms_are_deterministic() {
        let intens = PhantomIntensities::default();
        let a = make_annulus(&geometry(8.0, 14.0), &intens, 42).unwrap();
        let b = make_annulus(&geometry(8.0, 14.0), &intens, 42).unwrap();
        assert_eq!(a, b);
        let c = make_annulus(&geometry(8.0, 14.0), &intens, 43).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn small_dataset_splits() {
        let cfg = DatasetConfig {
            n_labeled: 2,
            n_unlabeled: 3,
            n_test: 1,
            height: 32,
            width: 32,
            r_inner: (5.0, 7.0),
            thickness: (2.0, 4.0),
            center_jitter: 2.0,
            ..DatasetConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.samples.len(), 6);
        assert_eq!(ds.split(Split::Labeled).count(), 2);
        assert_eq!(ds.split(Split::Unlabeled).count(), 3);
        assert_eq!(ds.split(Split::Test).count(), 1);
        assert_eq!(ds, generate_dataset(&cfg).unwrap());
    }

    #[test]
    fn scaled_configs_generate() {
        assert_eq!(DatasetConfig::for_size(64), DatasetConfig::default());
        for size in [16, 32, 128] {
            let cfg = DatasetConfig {
                n_labeled: 3,
                n_unlabeled: 3,
                n_test: 3,
                ..DatasetConfig::for_size(size)
            };
            assert_eq!(generate_dataset(&cfg).unwrap().samples.len(), 9, "size {size}");
        }
    }
}
