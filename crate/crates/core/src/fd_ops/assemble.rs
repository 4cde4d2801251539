//! Matrix representations over the interior unknowns.
//!
//! Boundary values are substituted and ghost values are eliminated through the
//! auxiliary condition, so each ghost becomes a known constant minus the value at
//! the interior node two steps inside.

use std::collections::HashMap;

use crate::grid::{Grid, NodeClass, Point};
use crate::sparse::SparseOperator;

use super::{Stencil, StencilWeights};

/// Where a stencil slot of an interior node takes its value from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotRef {
    Unknown(usize),
    Known(f64),
    /// Value is `c - U_center`.
    Ghost(f64),
}

/// Slot table for every interior node with Dirichlet data and ghosts folded in.
#[derive(Debug, Clone)]
pub struct EliminatedStencil<const D: usize> {
    slots: usize,
    table: Vec<SlotRef>,
}

impl<const D: usize> EliminatedStencil<D> {
    /// `aux` holds `Δ_h U` targets indexed by flat mesh id (`None` means zero).
    pub fn new(grid: &Grid<D>, g: impl Fn(&Point<D>) -> f64, aux: Option<&[f64]>) -> Self {
        let stencil = Stencil::<D>::new();
        let ns = stencil.len();
        let h = grid.spacings();
        let mut table = Vec::with_capacity(ns * grid.num_unknowns());
        for &node in grid.interior_ids() {
            for off in stencil.offsets() {
                let k = grid.neighbor(node, off).expect("interior stencils stay in the extended grid");
                let slot = match grid.class(k) {
                    NodeClass::Interior => SlotRef::Unknown(grid.unknown_index(k).unwrap()),
                    NodeClass::Boundary => SlotRef::Known(g(&grid.coords(k))),
                    NodeClass::Ghost => {
                        let axis = (0..D).find(|&i| off[i] != 0).unwrap();
                        let mut half = [0isize; D];
                        half[axis] = off[axis] / 2;
                        let b = grid.neighbor(node, &half).unwrap();
                        let gb = g(&grid.coords(b));
                        let mut tangential = 0.0;
                        for j in (0..D).filter(|&j| j != axis) {
                            let mut e = [0isize; D];
                            e[j] = 1;
                            let up = g(&grid.coords(grid.neighbor(b, &e).unwrap()));
                            e[j] = -1;
                            let um = g(&grid.coords(grid.neighbor(b, &e).unwrap()));
                            tangential += (up - 2.0 * gb + um) / (h[j] * h[j]);
                        }
                        let a = aux.map(|t| t[b]).unwrap_or(0.0);
                        SlotRef::Ghost(h[axis] * h[axis] * (a - tangential) + 2.0 * gb)
                    }
                };
                table.push(slot);
            }
        }
        Self { slots: ns, table }
    }

    /// Zero Dirichlet data and zero auxiliary target.
    pub fn homogeneous(grid: &Grid<D>) -> Self {
        Self::new(grid, |_| 0.0, None)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn node_slots(&self, n: usize) -> &[SlotRef] {
        &self.table[n * self.slots..(n + 1) * self.slots]
    }

    /// Slot values of interior node `n` for the unknown vector `u`.
    pub fn values_into(&self, n: usize, u: &[f64], out: &mut [f64]) {
        let centre = u[n];
        for (o, s) in out.iter_mut().zip(self.node_slots(n)) {
            *o = match *s {
                SlotRef::Unknown(m) => u[m],
                SlotRef::Known(v) => v,
                SlotRef::Ghost(c) => c - centre,
            };
        }
    }

    pub fn values(&self, n: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.slots];
        self.values_into(n, u, &mut out);
        out
    }

    /// Adds the row of `U -> Σ_s w_s U(slot s)` for node `n` to `triplets`.
    pub fn scatter(&self, n: usize, w: &[f64], triplets: &mut Vec<(usize, usize, f64)>) {
        for (s, &ws) in self.node_slots(n).iter().zip(w) {
            if ws == 0.0 {
                continue;
            }
            match *s {
                SlotRef::Unknown(m) => triplets.push((n, m, ws)),
                SlotRef::Ghost(_) => triplets.push((n, n, -ws)),
                SlotRef::Known(_) => {}
            }
        }
    }

    /// Data-dependent constant of `Σ_s w_s U(slot s)` at node `n`.
    pub fn constant(&self, n: usize, w: &[f64]) -> f64 {
        self.node_slots(n)
            .iter()
            .zip(w)
            .map(|(s, &ws)| match *s {
                SlotRef::Unknown(_) => 0.0,
                SlotRef::Known(v) | SlotRef::Ghost(v) => ws * v,
            })
            .sum()
    }
}

/// Matrix of the slot functional `w` with homogeneous boundary and auxiliary data.
pub fn assemble_slot_functional<const D: usize>(grid: &Grid<D>, w: &[f64]) -> SparseOperator {
    let st = EliminatedStencil::homogeneous(grid);
    let n = grid.num_unknowns();
    let mut t = Vec::with_capacity(n * st.slots());
    for k in 0..n {
        st.scatter(k, w, &mut t);
    }
    SparseOperator::from_triplets(n, n, &t)
}

/// `D_i`, the central first difference along `axis` with zero Dirichlet data.
pub fn assemble_first_central<const D: usize>(grid: &Grid<D>, axis: usize) -> SparseOperator {
    let w = StencilWeights::<D>::new(&grid.spacings());
    assemble_slot_functional(grid, &w.grad[axis])
}

/// Diagonal corrections `B_i`: `1 / (2 h_i^2)` for every side along axis `i` on
/// which the node touches the boundary.
pub fn boundary_corrections<const D: usize>(grid: &Grid<D>) -> Vec<SparseOperator> {
    let h = grid.spacings();
    (0..D)
        .map(|i| {
            let diag: Vec<f64> = grid
                .interior_ids()
                .iter()
                .map(|&k| {
                    let sides = [1isize, -1]
                        .iter()
                        .filter(|&&s| {
                            let mut e = [0isize; D];
                            e[i] = s;
                            grid.class(grid.neighbor(k, &e).unwrap()) == NodeClass::Boundary
                        })
                        .count();
                    sides as f64 / (2.0 * h[i] * h[i])
                })
                .collect();
            SparseOperator::from_diagonal(&diag)
        })
        .collect()
}

/// `M`, the matrix of `-Δ_{2h}` with ghosts eliminated, and the corrections `B_i`.
pub fn assemble_wide_laplacian<const D: usize>(grid: &Grid<D>) -> (SparseOperator, Vec<SparseOperator>) {
    let w = StencilWeights::<D>::new(&grid.spacings());
    let mut lap = vec![0.0; w.slots];
    for i in 0..D {
        for (l, x) in lap.iter_mut().zip(&w.bar[i * D + i]) {
            *l -= x;
        }
    }
    (assemble_slot_functional(grid, &lap), boundary_corrections(grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HessianKind {
    Hat,
    Tilde,
}

/// `D̂_{ij,0}` and `D̃_{ij,0}` for every ordered pair `(i, j)`.
pub fn assemble_hessian_blocks<const D: usize>(grid: &Grid<D>) -> HashMap<(usize, usize, HessianKind), SparseOperator> {
    let w = StencilWeights::<D>::new(&grid.spacings());
    let mut out = HashMap::new();
    for i in 0..D {
        for j in 0..D {
            out.insert((i, j, HessianKind::Hat), assemble_slot_functional(grid, &w.hat[i * D + j]));
            out.insert((i, j, HessianKind::Tilde), assemble_slot_functional(grid, &w.tilde[i * D + j]));
        }
    }
    out
}
