//! Persistent homology of 2D probability grids over cubical complexes, and
//! the explicit topological-prior gradients built on top of it.
//!
//! The pipeline runs roughly bottom-up through the modules:
//!
//! * [`complex`] builds the filtered cubical complex of a [`ProbabilityGrid`].
//! * [`persistence`] reduces it to a [`Barcode`] with creator/destroyer cells.
//! * [`topograd`] turns the barcode into sparse pixelwise gradients that
//!   lengthen the bars a [`TopologyPrior`] asks for.
//! * [`oracle`] is an independent brute-force Betti number reference.
//! * [`data`], [`model`] and [`trainer`] form a small semi-supervised
//!   segmentation harness on synthetic annulus phantoms.
//!
//! ```
//! use topoprior::{build_complex, compute_barcode, ProbabilityGrid};
//!
//! let grid = ProbabilityGrid::from_rows(&[
//!     vec![0.9, 0.9, 0.9],
//!     vec![0.9, 0.1, 0.9],
//!     vec![0.9, 0.9, 0.9],
//! ])
//! .unwrap();
//! let barcode = compute_barcode(&build_complex(&grid).unwrap()).unwrap();
//! let hole = barcode.longest_bar(1, 1).unwrap();
//! assert!((hole.birth - 0.1).abs() < 1e-12 && (hole.death - 0.9).abs() < 1e-12);
//! ```

pub mod complex;
pub mod data;
mod error;
pub mod gridio;
pub mod model;
pub mod oracle;
pub mod persistence;
pub mod topograd;
pub mod trainer;

pub use complex::{binarize, build_complex, Cell, FilteredComplex, ProbabilityGrid};
pub use error::{Error, Result};
pub use oracle::BinaryMask;
pub use persistence::{compute_barcode, Bar, Barcode, PairingMethod};
pub use topograd::{GradientMap, Placement, TopoGradConfig, TopologyPrior};
