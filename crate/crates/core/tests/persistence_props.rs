mod common;

use proptest::prelude::*;
use topoprior::oracle::{betti0_bruteforce, betti1_bruteforce, euler_characteristic};
use topoprior::persistence::compute_barcode_with;
use topoprior::{binarize, build_complex, compute_barcode, Barcode, PairingMethod, ProbabilityGrid};

fn decile_grids() -> impl Strategy<Value = ProbabilityGrid> {
    (1usize..7, 1usize..7).prop_flat_map(|(h, w)| {
        proptest::collection::vec(0u8..=10, h * w)
            .prop_map(move |d| common::grid_from_deciles(h, w, &d))
    })
}

fn real_grids() -> impl Strategy<Value = ProbabilityGrid> {
    (1usize..7, 1usize..7).prop_flat_map(|(h, w)| {
        proptest::collection::vec(0.0f64..=1.0, h * w)
            .prop_map(move |v| ProbabilityGrid::new(h, w, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn barcode_matches_oracle_on_deciles(grid in decile_grids()) {
        prop_assert_eq!(common::oracle_mismatches(&grid), vec![]);
    }

    #[test]
    fn barcode_matches_oracle_on_reals(grid in real_grids()) {
        prop_assert_eq!(common::oracle_mismatches(&grid), vec![]);
    }

    #[test]
    fn pairing_methods_agree(grid in real_grids()) {
        let complex = build_complex(&grid).unwrap();
        let uf = compute_barcode_with(&complex, PairingMethod::UnionFind).unwrap();
        let bm = compute_barcode_with(&complex, PairingMethod::BoundaryMatrix).unwrap();
        prop_assert_eq!(uf, bm);
    }

    #[test]
    fn euler_identity_at_every_threshold(grid in decile_grids()) {
        for step in 0..=10 {
            let mask = binarize(&grid, f64::from(step) / 10.0);
            let chi = betti0_bruteforce(&mask) as i64 - betti1_bruteforce(&mask) as i64;
            prop_assert_eq!(chi, euler_characteristic(&mask));
        }
    }

    #[test]
    fn filtration_is_a_nested_family(grid in real_grids()) {
        let complex = build_complex(&grid).unwrap();
        prop_assert!(complex.validate().is_ok());
        for (cell, value) in complex.cells() {
            for face in cell.faces() {
                prop_assert!(complex.filtration(face) <= value);
            }
        }
    }

    #[test]
    fn bar_structure(grid in real_grids()) {
        let barcode = compute_barcode(&build_complex(&grid).unwrap()).unwrap();
        let essential: Vec<_> = barcode.bars().iter().filter(|b| b.essential).collect();
        prop_assert_eq!(essential.len(), 1);
        prop_assert_eq!(essential[0].dim, 0);
        prop_assert_eq!(essential[0].death, 1.0);
        let min = grid.values().iter().fold(1.0f64, |m, &v| m.min(1.0 - v));
        prop_assert_eq!(essential[0].birth, min);
        for bar in barcode.bars() {
            prop_assert!(bar.birth <= bar.death);
            prop_assert!((0.0..=1.0).contains(&bar.birth) && (0.0..=1.0).contains(&bar.death));
            prop_assert_eq!(bar.creator.dim(), bar.dim);
            if let Some(d) = bar.destroyer {
                prop_assert_eq!(d.dim(), bar.dim + 1);
            }
        }
        // everything is born by threshold 1, where the whole grid is one blob
        prop_assert_eq!(barcode.betti_at(1.0, 0), 1);
        prop_assert_eq!(barcode.betti_at(1.0, 1), 0);
    }

    #[test]
    fn json_round_trip(grid in real_grids()) {
        let barcode = compute_barcode(&build_complex(&grid).unwrap()).unwrap();
        prop_assert_eq!(Barcode::from_json(&barcode.to_json()).unwrap(), barcode);
    }

    #[test]
    fn ranked_bars_are_sorted(grid in real_grids()) {
        let barcode = compute_barcode(&build_complex(&grid).unwrap()).unwrap();
        for d in 0..2 {
            let lengths: Vec<f64> = barcode.ranked(d).map(|b| b.persistence()).collect();
            prop_assert!(lengths.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(lengths.iter().all(|&l| l > 0.0));
        }
    }
}

#[test]
fn transposed_grid_has_same_barcode_lengths() {
    let mut rng = common::rng(5);
    for _ in 0..20 {
        let grid = common::uniform_grid(&mut rng, 5, 7);
        let t: Vec<f64> = (0..7)
            .flat_map(|j| (0..5).map(move |i| (i, j)))
            .map(|(i, j)| grid.get(i, j))
            .collect();
        let transposed = ProbabilityGrid::new(7, 5, t).unwrap();
        let lengths = |g: &ProbabilityGrid| {
            let b = compute_barcode(&build_complex(g).unwrap()).unwrap();
            b.bars().iter().map(|x| (x.dim, x.birth, x.death)).collect::<Vec<_>>()
        };
        let (mut a, mut b) = (lengths(&grid), lengths(&transposed));
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }
}
