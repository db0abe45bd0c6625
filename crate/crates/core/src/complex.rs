//! Filtered cubical complexes of probability grids.
//!
//! A grid of `H x W` pixels lives on the doubled index lattice of size
//! `(2H+1) x (2W+1)`: entry `(a, b)` is a vertex when both coordinates are
//! even, an edge when exactly one is odd and a pixel square when both are
//! odd. Pixel `(i, j)` is the square `(2i+1, 2j+1)`.
//!
//! Pixels enter the filtration at `p = 1 - S[i,j]`; every lower-dimensional
//! cell enters with its earliest incident pixel. Two pixels that share only a
//! corner are therefore joined through that vertex as soon as either of them
//! is present (8-connectivity for the foreground).

use std::cmp::Ordering;

use crate::oracle::BinaryMask;
use crate::{Error, Result};

/// Per-pixel foreground probabilities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ProbabilityGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid { height, width });
        }
        if values.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: height * width,
                actual: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange {
                row: idx / width,
                col: idx % width,
                value: values[idx],
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::ShapeMismatch {
                expected: width,
                actual: bad.len(),
            });
        }
        Self::new(height, width, rows.concat())
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Builds a grid by clamping arbitrary reals into `[0, 1]`. NaN maps to 0.
    pub fn from_clamped(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, values)
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Overwrites one pixel.
    ///
    /// # Panics
    /// If `value` is outside `[0, 1]` or the index is out of bounds.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            (0.0..=1.0).contains(&value),
            "probability {value} outside [0, 1]"
        );
        self.values[row * self.width + col] = value;
    }
}

/// A cell of the cubical complex, addressed on the doubled lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// The square cell of pixel `(i, j)`.
    pub const fn pixel(i: usize, j: usize) -> Self {
        Self::new(2 * i + 1, 2 * j + 1)
    }

    pub const fn dim(&self) -> usize {
        self.row % 2 + self.col % 2
    }

    /// Pixel index if this cell is a square.
    pub fn as_pixel(&self) -> Option<(usize, usize)> {
        (self.dim() == 2).then_some((self.row / 2, self.col / 2))
    }

    /// Codimension-one faces: two vertices for an edge, four edges for a square.
    pub fn faces(&self) -> impl Iterator<Item = Cell> + '_ {
        let vertical = (self.row % 2 == 1)
            .then(|| [Cell::new(self.row - 1, self.col), Cell::new(self.row + 1, self.col)]);
        let horizontal = (self.col % 2 == 1)
            .then(|| [Cell::new(self.row, self.col - 1), Cell::new(self.row, self.col + 1)]);
        vertical.into_iter().flatten().chain(horizontal.into_iter().flatten())
    }

    /// Pixels whose closed square contains this cell, in lexicographic order.
    pub fn incident_pixels(&self, height: usize, width: usize) -> impl Iterator<Item = (usize, usize)> {
        let rows = incident_range(self.row, height);
        let cols = incident_range(self.col, width);
        rows.flat_map(move |i| cols.clone().map(move |j| (i, j)))
    }
}

/// Pixel indices along one axis adjacent to doubled coordinate `a`.
fn incident_range(a: usize, n: usize) -> std::ops::Range<usize> {
    if a % 2 == 1 {
        let i = a / 2;
        i..i + 1
    } else {
        let hi = (a / 2 + 1).min(n);
        a.saturating_sub(1) / 2..hi
    }
}

/// Filtration values for every cell of the doubled lattice plus the cell
/// order in which they enter.
#[derive(Debug, Clone)]
pub struct FilteredComplex {
    height: usize,
    width: usize,
    filtration: Vec<f64>,
    determining: Vec<(usize, usize)>,
    order: Vec<usize>,
}

impl FilteredComplex {
    /// Builds a complex from explicit per-cell filtration values, indexed
    /// row-major on the `(2H+1) x (2W+1)` lattice.
    ///
    /// Values are not checked for face-before-coface consistency here;
    /// [`crate::compute_barcode`] rejects inconsistent complexes.
    pub fn from_cell_values(height: usize, width: usize, filtration: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid { height, width });
        }
        let cols = 2 * width + 1;
        let expected = (2 * height + 1) * cols;
        if filtration.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: filtration.len(),
            });
        }
        if let Some(idx) = filtration.iter().position(|v| v.is_nan()) {
            return Err(Error::OutOfRange {
                row: idx / cols,
                col: idx % cols,
                value: f64::NAN,
            });
        }
        let pixel_value = |(i, j): (usize, usize)| filtration[(2 * i + 1) * cols + 2 * j + 1];
        let determining = (0..expected)
            .map(|id| {
                let cell = Cell::new(id / cols, id % cols);
                let mut best: Option<(usize, usize)> = None;
                for px in cell.incident_pixels(height, width) {
                    // strict comparison keeps the lexicographically first pixel on ties
                    if best.is_none_or(|b| pixel_value(px) < pixel_value(b)) {
                        best = Some(px);
                    }
                }
                best.expect("every cell has an incident pixel")
            })
            .collect();

        let mut order: Vec<usize> = (0..expected).collect();
        order.sort_unstable_by(|&x, &y| {
            let (cx, cy) = (Cell::new(x / cols, x % cols), Cell::new(y / cols, y % cols));
            filtration[x]
                .total_cmp(&filtration[y])
                .then(cx.dim().cmp(&cy.dim()))
                .then(cx.cmp(&cy))
        });

        Ok(Self {
            height,
            width,
            filtration,
            determining,
            order,
        })
    }

    /// Pixel grid height.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel grid width.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_cells(&self) -> usize {
        self.filtration.len()
    }

    pub(crate) fn lattice_cols(&self) -> usize {
        2 * self.width + 1
    }

    pub fn cell_id(&self, cell: Cell) -> usize {
        cell.row * self.lattice_cols() + cell.col
    }

    pub fn cell_at(&self, id: usize) -> Cell {
        Cell::new(id / self.lattice_cols(), id % self.lattice_cols())
    }

    pub fn filtration(&self, cell: Cell) -> f64 {
        self.filtration[self.cell_id(cell)]
    }

    /// Cell ids sorted by `(filtration, dimension, lattice index)`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Cells in filtration order together with their entry values.
    pub fn cells(&self) -> impl Iterator<Item = (Cell, f64)> + '_ {
        self.order.iter().map(|&id| (self.cell_at(id), self.filtration[id]))
    }

    /// The incident pixel whose value realizes this cell's entry.
    pub fn determining_pixel(&self, cell: Cell) -> (usize, usize) {
        self.determining[self.cell_id(cell)]
    }

    /// Checks that every cell enters no earlier than its faces.
    pub fn validate(&self) -> Result<()> {
        for id in 0..self.num_cells() {
            let cell = self.cell_at(id);
            let value = self.filtration[id];
            for face in cell.faces() {
                let face_value = self.filtration(face);
                if face_value.total_cmp(&value) == Ordering::Greater {
                    return Err(Error::InvalidFiltration {
                        row: cell.row,
                        col: cell.col,
                        value,
                        face_value,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Builds the filtered cubical complex of a grid.
pub fn build_complex(grid: &ProbabilityGrid) -> Result<FilteredComplex> {
    let (h, w) = grid.shape();
    let cols = 2 * w + 1;
    let rows = 2 * h + 1;
    let mut filtration = vec![f64::INFINITY; rows * cols];
    for i in 0..h {
        for j in 0..w {
            let value = 1.0 - grid.get(i, j);
            for a in 2 * i..=2 * i + 2 {
                for b in 2 * j..=2 * j + 2 {
                    let slot = &mut filtration[a * cols + b];
                    if value < *slot {
                        *slot = value;
                    }
                }
            }
        }
    }
    FilteredComplex::from_cell_values(h, w, filtration)
}

/// Thresholds a grid: pixel is foreground iff its filtration value
/// `1 - S[i,j]` is at most `p`, i.e. `S[i,j] >= 1 - p`.
///
/// The comparison is made on the filtration value so that the mask agrees
/// bit-for-bit with the pixel cells of [`build_complex`] at the same `p`.
pub fn binarize(grid: &ProbabilityGrid, p: f64) -> BinaryMask {
    let bits = grid.values().iter().map(|&s| 1.0 - s <= p).collect();
    BinaryMask::new(grid.height(), grid.width(), bits).expect("grid shape is valid")
}

/// Free-function form of [`FilteredComplex::determining_pixel`] that works
/// straight from a grid: the incident pixel with maximal probability, ties
/// broken by the lexicographically smallest index.
pub fn determining_pixel(cell: Cell, grid: &ProbabilityGrid) -> (usize, usize) {
    let mut best: Option<(usize, usize)> = None;
    for px in cell.incident_pixels(grid.height(), grid.width()) {
        if best.is_none_or(|b| grid.get(px.0, px.1) > grid.get(b.0, b.1)) {
            best = Some(px);
        }
    }
    best.expect("cell lies inside the grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_complex() {
        let grid = ProbabilityGrid::new(1, 1, vec![0.3]).unwrap();
        let cx = build_complex(&grid).unwrap();
        assert_eq!(cx.num_cells(), 9);
        for (cell, value) in cx.cells() {
            assert_eq!(value, 1.0 - 0.3, "cell {cell:?}");
        }
        assert_eq!(cx.filtration(Cell::pixel(0, 0)), 1.0 - 0.3);
        // square enters last
        assert_eq!(cx.cells().last().unwrap().0, Cell::pixel(0, 0));
    }

    #[test]
    fn shared_edge_takes_min() {
        let grid = ProbabilityGrid::new(1, 2, vec![0.2, 0.8]).unwrap();
        let cx = build_complex(&grid).unwrap();
        assert_eq!(cx.filtration(Cell::new(1, 2)), 1.0 - 0.8);
        assert_eq!(cx.filtration(Cell::pixel(0, 0)), 1.0 - 0.2);
    }

    #[test]
    fn diagonal_vertex_enters_with_first_pixel() {
        let grid = ProbabilityGrid::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let cx = build_complex(&grid).unwrap();
        assert_eq!(cx.filtration(Cell::new(2, 2)), 1.0 - 0.9);
        assert_eq!(cx.determining_pixel(Cell::new(2, 2)), (0, 0));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            ProbabilityGrid::new(0, 3, vec![]),
            Err(Error::EmptyGrid { .. })
        ));
        assert!(matches!(
            ProbabilityGrid::new(1, 2, vec![0.1]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            ProbabilityGrid::new(1, 2, vec![0.1, 1.2]),
            Err(Error::OutOfRange { col: 1, .. })
        ));
        assert!(ProbabilityGrid::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn binarize_boundaries() {
        let half = ProbabilityGrid::new(1, 1, vec![0.5]).unwrap();
        assert!(binarize(&half, 0.5).get(0, 0));
        let below = ProbabilityGrid::new(1, 1, vec![0.49]).unwrap();
        assert!(!binarize(&below, 0.5).get(0, 0));
        let zeros = ProbabilityGrid::filled(3, 4, 0.0).unwrap();
        assert_eq!(binarize(&zeros, 1.0).count(), 12);
    }

    #[test]
    fn determining_pixel_rules() {
        let grid = ProbabilityGrid::from_rows(&[vec![0.1, 0.9], vec![0.3, 0.3]]).unwrap();
        assert_eq!(determining_pixel(Cell::new(2, 2), &grid), (0, 1));
        assert_eq!(determining_pixel(Cell::pixel(1, 0), &grid), (1, 0));

        let tie = ProbabilityGrid::new(1, 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(determining_pixel(Cell::new(0, 2), &tie), (0, 0));
        assert_eq!(build_complex(&tie).unwrap().determining_pixel(Cell::new(0, 2)), (0, 0));
    }

    #[test]
    fn faces_and_incidence() {
        let edge = Cell::new(1, 2);
        assert_eq!(edge.dim(), 1);
        assert_eq!(edge.faces().collect::<Vec<_>>(), vec![Cell::new(0, 2), Cell::new(2, 2)]);
        assert_eq!(Cell::pixel(0, 0).faces().count(), 4);
        assert_eq!(Cell::new(0, 0).faces().count(), 0);
        // corner vertex of a 2x3 grid touches one pixel, interior vertex four
        assert_eq!(Cell::new(0, 0).incident_pixels(2, 3).count(), 1);
        assert_eq!(Cell::new(2, 2).incident_pixels(2, 3).collect::<Vec<_>>().len(), 4);
        assert_eq!(Cell::new(4, 6).incident_pixels(2, 3).collect::<Vec<_>>(), vec![(1, 2)]);
    }

    #[test]
    fn inconsistent_cell_values_are_caught() {
        let mut values = vec![0.0; 9];
        values[4] = 0.5;
        values[0] = 0.7; // vertex after the square
        let cx = FilteredComplex::from_cell_values(1, 1, values).unwrap();
        assert!(matches!(cx.validate(), Err(Error::InvalidFiltration { .. })));
    }
}
