//! Persistence barcodes of filtered cubical complexes.
//!
//! The default pairing runs two union-find sweeps. Components (dimension 0)
//! are tracked forward over vertices and edges with the elder rule. Loops
//! (dimension 1) are the dual problem: sweeping edges backwards over the
//! pixel adjacency graph plus one exterior node, each merge of two dual
//! components pairs the edge with the younger component's first square.
//!
//! [`PairingMethod::BoundaryMatrix`] computes the same pairing by reducing
//! the boundary matrix over the two-element field (with clearing). It is
//! quadratic in the worst case and mostly useful as a cross-check.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::complex::{Cell, FilteredComplex};
use crate::Result;

/// One persistence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "BarRecord", try_from = "BarRecord")]
pub struct Bar {
    pub dim: usize,
    pub birth: f64,
    /// `1.0` for essential classes.
    pub death: f64,
    pub creator: Cell,
    pub destroyer: Option<Cell>,
    pub essential: bool,
}

impl Bar {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    /// Alive on `[birth, death)`, or `[birth, 1]` for essential bars.
    pub fn is_alive(&self, p: f64) -> bool {
        if self.essential {
            self.birth <= p
        } else {
            self.birth <= p && p < self.death
        }
    }

    fn rank_cmp(&self, other: &Bar) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then(other.persistence().total_cmp(&self.persistence()))
            .then(self.birth.total_cmp(&other.birth))
            .then(self.creator.cmp(&other.creator))
    }
}

#[derive(Serialize, Deserialize)]
struct BarRecord {
    dim: usize,
    birth: f64,
    death: f64,
    essential: bool,
    creator: [usize; 2],
    destroyer: Option<[usize; 2]>,
}

impl From<Bar> for BarRecord {
    fn from(bar: Bar) -> Self {
        Self {
            dim: bar.dim,
            birth: bar.birth,
            death: bar.death,
            essential: bar.essential,
            creator: [bar.creator.row, bar.creator.col],
            destroyer: bar.destroyer.map(|c| [c.row, c.col]),
        }
    }
}

impl TryFrom<BarRecord> for Bar {
    type Error = String;

    fn try_from(r: BarRecord) -> std::result::Result<Self, String> {
        if r.birth > r.death {
            return Err(format!("bar born at {} after it dies at {}", r.birth, r.death));
        }
        if r.essential != r.destroyer.is_none() {
            return Err("essential bars have no destroyer, finite bars need one".into());
        }
        let creator = Cell::new(r.creator[0], r.creator[1]);
        if creator.dim() != r.dim {
            return Err(format!("creator {:?} is not a {}-cell", r.creator, r.dim));
        }
        let destroyer = r.destroyer.map(|[a, b]| Cell::new(a, b));
        if destroyer.is_some_and(|c| c.dim() != r.dim + 1) {
            return Err(format!("destroyer {:?} is not a {}-cell", r.destroyer, r.dim + 1));
        }
        Ok(Bar {
            dim: r.dim,
            birth: r.birth,
            death: r.death,
            creator,
            destroyer,
            essential: r.essential,
        })
    }
}

/// All bars of a filtration, grouped by dimension and ranked by persistence
/// (longest first; ties by earlier birth, then creator cell).
///
/// Zero-persistence pairs are kept but skipped by ranked queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Barcode {
    bars: Vec<Bar>,
}

impl Barcode {
    pub fn new(mut bars: Vec<Bar>) -> Self {
        bars.sort_by(Bar::rank_cmp);
        Self { bars }
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn dim(&self, d: usize) -> impl Iterator<Item = &Bar> + '_ {
        self.bars.iter().filter(move |b| b.dim == d)
    }

    /// Bars of dimension `d` with positive persistence, in rank order.
    pub fn ranked(&self, d: usize) -> impl Iterator<Item = &Bar> + '_ {
        self.dim(d).filter(|b| b.persistence() > 0.0)
    }

    /// Number of `d`-dimensional bars alive at `p`.
    pub fn betti_at(&self, p: f64, d: usize) -> usize {
        self.dim(d).filter(|b| b.is_alive(p)).count()
    }

    /// The `rank`-th longest positive-persistence bar of dimension `d`
    /// (1-based), if there is one.
    pub fn longest_bar(&self, d: usize, rank: usize) -> Option<&Bar> {
        rank.checked_sub(1).and_then(|skip| self.ranked(d).nth(skip))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bars serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: Barcode = serde_json::from_str(text)?;
        Ok(Self::new(parsed.bars))
    }

    /// `dim,birth,death` rows for plotting; zero-persistence bars omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,birth,death\n");
        for bar in self.bars.iter().filter(|b| b.persistence() > 0.0) {
            out.push_str(&format!(
                "{},{},{}\n",
                bar.dim,
                format_real(bar.birth),
                format_real(bar.death)
            ));
        }
        out
    }
}

/// Formats a filtration value rounded to 12 decimals with trailing zeros
/// trimmed, so `1 - 0.9` prints as `0.1`.
pub fn format_real(value: f64) -> String {
    let s = format!("{value:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairingMethod {
    #[default]
    UnionFind,
    BoundaryMatrix,
}

pub fn compute_barcode(complex: &FilteredComplex) -> Result<Barcode> {
    compute_barcode_with(complex, PairingMethod::UnionFind)
}

pub fn compute_barcode_with(complex: &FilteredComplex, method: PairingMethod) -> Result<Barcode> {
    complex.validate()?;
    let bars = match method {
        PairingMethod::UnionFind => union_find_pairs(complex),
        PairingMethod::BoundaryMatrix => matrix_pairs(complex),
    };
    Ok(Barcode::new(bars))
}

/// Union-find with the root always being the eldest member.
struct ElderForest {
    parent: Vec<usize>,
}

impl ElderForest {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            let grand = self.parent[self.parent[x]];
            self.parent[x] = grand;
            x = grand;
        }
        x
    }
}

fn union_find_pairs(cx: &FilteredComplex) -> Vec<Bar> {
    let (h, w) = (cx.height(), cx.width());
    let order = cx.order();
    let mut position = vec![0usize; order.len()];
    for (pos, &id) in order.iter().enumerate() {
        position[id] = pos;
    }
    let finite = |creator: Cell, destroyer: Cell, dim: usize| Bar {
        dim,
        birth: cx.filtration(creator),
        death: cx.filtration(destroyer),
        creator,
        destroyer: Some(destroyer),
        essential: false,
    };
    let mut bars = Vec::with_capacity(order.len() / 2 + 1);

    // components: vertices are numbered on the (H+1) x (W+1) lattice
    let vertex_id = |c: Cell| (c.row / 2) * (w + 1) + c.col / 2;
    let vertex_cell = |v: usize| Cell::new(2 * (v / (w + 1)), 2 * (v % (w + 1)));
    let mut forest = ElderForest::new((h + 1) * (w + 1));
    for &id in order {
        let edge = cx.cell_at(id);
        if edge.dim() != 1 {
            continue;
        }
        let mut ends = edge.faces().map(|f| forest.find(vertex_id(f)));
        let (a, b) = (ends.next().unwrap(), ends.next().unwrap());
        if a == b {
            continue;
        }
        let age = |v: usize| position[cx.cell_id(vertex_cell(v))];
        let (elder, younger) = if age(a) < age(b) { (a, b) } else { (b, a) };
        forest.parent[younger] = elder;
        bars.push(finite(vertex_cell(younger), edge, 0));
    }
    let first = cx.cell_at(order[0]);
    bars.push(Bar {
        dim: 0,
        birth: cx.filtration(first),
        death: 1.0,
        creator: first,
        destroyer: None,
        essential: true,
    });

    // loops: dual sweep over pixels, node h*w is the exterior
    let exterior = h * w;
    let mut dual = ElderForest::new(h * w + 1);
    let dual_age = |node: usize| {
        if node == exterior {
            usize::MAX
        } else {
            position[cx.cell_id(Cell::pixel(node / w, node % w))]
        }
    };
    for &id in order.iter().rev() {
        let edge = cx.cell_at(id);
        if edge.dim() != 1 {
            continue;
        }
        let mut sides = edge.incident_pixels(h, w).map(|(i, j)| i * w + j);
        let a = sides.next().unwrap();
        let b = sides.next().unwrap_or(exterior);
        let (a, b) = (dual.find(a), dual.find(b));
        if a == b {
            continue;
        }
        // in reverse time the later-entering square is the elder
        let (elder, younger) = if dual_age(a) > dual_age(b) { (a, b) } else { (b, a) };
        dual.parent[younger] = elder;
        bars.push(finite(edge, Cell::pixel(younger / w, younger % w), 1));
    }
    bars
}

fn matrix_pairs(cx: &FilteredComplex) -> Vec<Bar> {
    let order = cx.order();
    let n = order.len();
    let mut position = vec![0usize; n];
    for (pos, &id) in order.iter().enumerate() {
        position[id] = pos;
    }
    let cells: Vec<Cell> = order.iter().map(|&id| cx.cell_at(id)).collect();
    let mut columns: Vec<Vec<usize>> = cells
        .iter()
        .map(|c| {
            let mut col: Vec<usize> = c.faces().map(|f| position[cx.cell_id(f)]).collect();
            col.sort_unstable();
            col
        })
        .collect();

    let mut pivot_owner: Vec<Option<usize>> = vec![None; n];
    let mut cleared = vec![false; n];
    for dim in [2, 1] {
        for j in (0..n).filter(|&j| cells[j].dim() == dim) {
            if cleared[j] {
                columns[j].clear();
                continue;
            }
            let mut col = std::mem::take(&mut columns[j]);
            while let Some(&low) = col.last() {
                match pivot_owner[low] {
                    Some(k) => col = symmetric_difference(&col, &columns[k]),
                    None => break,
                }
            }
            if let Some(&low) = col.last() {
                pivot_owner[low] = Some(j);
                cleared[low] = true;
            }
            columns[j] = col;
        }
    }

    let mut bars = Vec::new();
    for (low, owner) in pivot_owner.iter().enumerate() {
        if let Some(j) = *owner {
            bars.push(Bar {
                dim: cells[low].dim(),
                birth: cx.filtration(cells[low]),
                death: cx.filtration(cells[j]),
                creator: cells[low],
                destroyer: Some(cells[j]),
                essential: false,
            });
        }
    }
    for (j, cell) in cells.iter().enumerate() {
        // unpaired positive cells are essential; only one vertex qualifies
        if cell.dim() < 2 && pivot_owner[j].is_none() && columns[j].is_empty() && !cleared[j] {
            bars.push(Bar {
                dim: cell.dim(),
                birth: cx.filtration(*cell),
                death: 1.0,
                creator: *cell,
                destroyer: None,
                essential: true,
            });
        }
    }
    bars
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
