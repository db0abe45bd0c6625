//! Brute-force Betti numbers of binary masks.
//!
//! Nothing here touches the persistence machinery: components are counted by
//! flood fill and loops through the Euler characteristic of the union of
//! closed pixel squares, so the two can be checked against each other.

use std::collections::{HashSet, VecDeque};

use crate::complex::{binarize, ProbabilityGrid};
use crate::{Error, Result};

/// A boolean pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid { height, width });
        }
        if bits.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: height * width,
                actual: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    /// Parses rows of `#`/`1` (foreground) and `.`/`0` (background).
    pub fn from_art(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut bits = Vec::with_capacity(height * width);
        for row in rows {
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    expected: width,
                    actual: row.len(),
                });
            }
            bits.extend(row.chars().map(|c| matches!(c, '#' | '1')));
        }
        Self::new(height, width, bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// The mask as a 0/1 probability grid.
    pub fn to_grid(&self) -> ProbabilityGrid {
        let values = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ProbabilityGrid::new(self.height, self.width, values).expect("mask shape is valid")
    }

    fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |i| (0..self.width).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.get(i, j))
    }
}

/// Number of 8-connected foreground components.
pub fn betti0_bruteforce(mask: &BinaryMask) -> usize {
    let (h, w) = mask.shape();
    let mut seen = vec![false; h * w];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for (i, j) in mask.foreground() {
        if seen[i * w + j] {
            continue;
        }
        components += 1;
        seen[i * w + j] = true;
        queue.push_back((i, j));
        while let Some((y, x)) = queue.pop_front() {
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if mask.get(ny, nx) && !seen[ny * w + nx] {
                        seen[ny * w + nx] = true;
                        queue.push_back((ny, nx));
                    }
                }
            }
        }
    }
    components
}

/// `V - E + F` of the union of closed unit squares of the foreground pixels.
///
/// Pixel `(i, j)` is the square `[i, i+1] x [j, j+1]`; vertices are lattice
/// points and edges are recorded by their lower-left endpoint and direction.
pub fn euler_characteristic(mask: &BinaryMask) -> i64 {
    let mut vertices = HashSet::new();
    let mut edges = HashSet::new();
    let mut squares = 0i64;
    for (i, j) in mask.foreground() {
        squares += 1;
        for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            vertices.insert((i + di, j + dj));
        }
        // horizontal edges run along j, vertical along i
        edges.insert((i, j, 'h'));
        edges.insert((i + 1, j, 'h'));
        edges.insert((i, j, 'v'));
        edges.insert((i, j + 1, 'v'));
    }
    vertices.len() as i64 - edges.len() as i64 + squares
}

/// Number of independent loops, `beta0 - chi`.
pub fn betti1_bruteforce(mask: &BinaryMask) -> usize {
    let b1 = betti0_bruteforce(mask) as i64 - euler_characteristic(mask);
    debug_assert!(b1 >= 0, "negative first Betti number");
    b1.max(0) as usize
}

/// One sample of a Betti curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BettiPoint {
    pub p: f64,
    pub beta0: usize,
    pub beta1: usize,
}

/// Betti numbers of the thresholded grid at every distinct `p = 1 - v`,
/// plus `p = 1`, ascending in `p`.
pub fn betti_curve(grid: &ProbabilityGrid) -> Vec<BettiPoint> {
    let mut thresholds: Vec<f64> = grid.values().iter().map(|&v| 1.0 - v).collect();
    thresholds.push(1.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|p| {
            let mask = binarize(grid, p);
            BettiPoint {
                p,
                beta0: betti0_bruteforce(&mask),
                beta1: betti1_bruteforce(&mask),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring3() -> BinaryMask {
        BinaryMask::from_art(&["###", "#.#", "###"]).unwrap()
    }

    #[test]
    fn components() {
        assert_eq!(betti0_bruteforce(&BinaryMask::empty(4, 4).unwrap()), 0);
        assert_eq!(betti0_bruteforce(&BinaryMask::from_art(&["#.", ".#"]).unwrap()), 1);
        assert_eq!(betti0_bruteforce(&BinaryMask::from_art(&["#..", "...", "..#"]).unwrap()), 2);
    }

    #[test]
    fn euler_counts() {
        assert_eq!(euler_characteristic(&BinaryMask::from_art(&["#"]).unwrap()), 1);
        assert_eq!(euler_characteristic(&BinaryMask::from_art(&["##", "##"]).unwrap()), 1);
        assert_eq!(euler_characteristic(&ring3()), 0);
        // diagonal touch: 7 vertices, 8 edges, 2 squares
        assert_eq!(euler_characteristic(&BinaryMask::from_art(&["#.", ".#"]).unwrap()), 1);
    }

    #[test]
    fn loops() {
        assert_eq!(betti1_bruteforce(&ring3()), 1);
        assert_eq!(betti1_bruteforce(&BinaryMask::from_art(&["###", "###"]).unwrap()), 0);
        let two = BinaryMask::from_art(&["###.###", "#.#.#.#", "###.###"]).unwrap();
        assert_eq!(betti0_bruteforce(&two), 2);
        assert_eq!(euler_characteristic(&two), 0);
        assert_eq!(betti1_bruteforce(&two), 2);
    }

    #[test]
    fn diamond_of_diagonals_encloses_a_hole() {
        let diamond = BinaryMask::from_art(&[".#.", "#.#", ".#."]).unwrap();
        assert_eq!(betti0_bruteforce(&diamond), 1);
        assert_eq!(betti1_bruteforce(&diamond), 1);
    }

    #[test]
    fn curves() {
        let ones = ProbabilityGrid::filled(3, 3, 1.0).unwrap();
        let curve = betti_curve(&ones);
        assert_eq!(
            curve,
            vec![
                BettiPoint { p: 0.0, beta0: 1, beta1: 0 },
                BettiPoint { p: 1.0, beta0: 1, beta1: 0 }
            ]
        );

        let half = betti_curve(&ProbabilityGrid::filled(2, 2, 0.5).unwrap());
        assert_eq!(half.len(), 2);
        assert_eq!((half[0].p, half[0].beta0, half[0].beta1), (0.5, 1, 0));

        let ring = ProbabilityGrid::from_rows(&[
            vec![0.9, 0.9, 0.9],
            vec![0.9, 0.1, 0.9],
            vec![0.9, 0.9, 0.9],
        ])
        .unwrap();
        let curve = betti_curve(&ring);
        let summary: Vec<_> = curve.iter().map(|b| (b.beta0, b.beta1)).collect();
        assert_eq!(summary, vec![(1, 1), (1, 0), (1, 0)]);
        assert!((curve[0].p - 0.1).abs() < 1e-12);
        assert!((curve[1].p - 0.9).abs() < 1e-12);
    }
}
