mod common;

use proptest::prelude::*;
use rustfft::num_complex::Complex;
use topoprior::data::{
    degrade_kspace, fft2, generate_dataset, ifft2, load_dataset, retained_rows, write_dataset, DatasetConfig,
    DegradeConfig,
};
use topoprior::ProbabilityGrid;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fft_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let grid = common::uniform_grid(&mut rng, h, w);
        let mut data: Vec<Complex<f64>> = grid.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2(&mut data, h, w);
        ifft2(&mut data, h, w);
        for (c, &v) in data.iter().zip(grid.values()) {
            prop_assert!((c.re - v).abs() < 1e-12 && c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn parseval(h in 1usize..10, w in 1usize..10, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let grid = common::uniform_grid(&mut rng, h, w);
        let mut data: Vec<Complex<f64>> = grid.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2(&mut data, h, w);
        let spatial: f64 = grid.values().iter().map(|v| v * v).sum();
        let spectral: f64 = data.iter().map(|c| c.norm_sqr()).sum::<f64>() / (h * w) as f64;
        prop_assert!((spatial - spectral).abs() < 1e-9 * spatial.max(1.0));
    }

    #[test]
    fn no_removal_is_identity(h in 1usize..16, w in 1usize..16, seed in any::<u64>(), band in 1usize..16) {
        let mut rng = common::rng(seed);
        let grid = common::uniform_grid(&mut rng, h, w);
        let cfg = DegradeConfig { band: band.min(h), p_remove: 0.0, seed };
        let out = degrade_kspace(&grid, &cfg).unwrap();
        for (a, b) in out.values().iter().zip(grid.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn band_rows_always_kept(h in 1usize..64, band in 1usize..64, seed in any::<u64>(), p in 0.0f64..=1.0) {
        let band = band.min(h);
        let keep = retained_rows(h, &DegradeConfig { band, p_remove: p, seed }).unwrap();
        let kept = keep.iter().filter(|&&k| k).count();
        prop_assert!(kept >= band);
        prop_assert!(keep[0]);
        if p == 1.0 {
            prop_assert_eq!(kept, band);
        }
    }

    #[test]
    fn degraded_values_in_unit_interval(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let grid = common::uniform_grid(&mut rng, 16, 16);
        let out = degrade_kspace(&grid, &DegradeConfig { band: 4, p_remove: 0.75, seed }).unwrap();
        prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn full_removal_keeps_only_band() {
    // a pure vertical-frequency image loses everything outside the band
    let h = 16;
    let values: Vec<f64> = (0..h * 4)
        .map(|idx| 0.5 + 0.4 * (2.0 * std::f64::consts::PI * 5.0 * (idx / 4) as f64 / h as f64).cos())
        .collect();
    let grid = ProbabilityGrid::new(h, 4, values).unwrap();
    let out = degrade_kspace(&grid, &DegradeConfig { band: 4, p_remove: 1.0, seed: 0 }).unwrap();
    for v in out.values() {
        assert!((v - 0.5).abs() < 1e-9);
    }
}

#[test]
fn dataset_files_round_trip() {
    let cfg = DatasetConfig {
        n_labeled: 2,
        n_unlabeled: 2,
        n_test: 2,
        ..DatasetConfig::for_size(32)
    };
    let ds = generate_dataset(&cfg).unwrap();
    assert_eq!(ds, generate_dataset(&cfg).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&ds, dir.path()).unwrap();
    assert_eq!(manifest.items.len(), 6);
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded, ds);
}
