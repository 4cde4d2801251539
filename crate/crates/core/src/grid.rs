//! Uniform Cartesian grids over a d-rectangle with a one-layer ghost extension.
//!
//! Mesh nodes (interior and boundary) are numbered lexicographically with axis 0
//! varying fastest. Ghost nodes follow the mesh nodes in the flat numbering and are
//! placed only where the wide axis stencil `x ± 2 h_i e_i` of an interior node leaves
//! the closed domain.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::SVector;

use crate::error::{Error, Result};

pub type Point<const D: usize> = SVector<f64, D>;
pub type MultiIndex<const D: usize> = [isize; D];

/// Open d-rectangle `(lo_1, hi_1) x ... x (lo_d, hi_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<const D: usize> {
    pub lo: [f64; D],
    pub hi: [f64; D],
}

impl<const D: usize> Domain<D> {
    pub fn new(lo: [f64; D], hi: [f64; D]) -> Result<Self> {
        for axis in 0..D {
            if !(hi[axis] > lo[axis]) {
                return Err(Error::InvalidDomain { axis });
            }
        }
        Ok(Self { lo, hi })
    }

    /// The cube `(a, b)^d`.
    pub fn cube(a: f64, b: f64) -> Result<Self> {
        Self::new([a; D], [b; D])
    }

    pub fn contains_open(&self, x: &Point<D>) -> bool {
        (0..D).all(|i| x[i] > self.lo[i] && x[i] < self.hi[i])
    }

    pub fn contains_closed(&self, x: &Point<D>) -> bool {
        (0..D).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Interior,
    Boundary,
    Ghost,
}

#[derive(Debug, Clone)]
pub struct Grid<const D: usize> {
    domain: Domain<D>,
    counts: [usize; D],
    spacings: [f64; D],
    strides: [usize; D],
    mesh_len: usize,
    classes: Vec<NodeClass>,
    in_sh: Vec<bool>,
    interior_ids: Vec<usize>,
    boundary_ids: Vec<usize>,
    ghost_ids: Vec<usize>,
    sh_ids: Vec<usize>,
    unknown_of: Vec<Option<usize>>,
    ghost_multi: Vec<MultiIndex<D>>,
    ghost_lookup: HashMap<MultiIndex<D>, usize>,
}

/// Builds the mesh, its boundary classification and the ghost layer.
pub fn build_grid<const D: usize>(domain: Domain<D>, counts: [usize; D]) -> Result<Grid<D>> {
    Grid::new(domain, counts)
}

/// Returns `(boundary_ids, sh_ids)` by direct neighbour enumeration.
///
/// A boundary node belongs to `S_h` iff one of its axis neighbours `x ± h_i e_i` is an
/// interior node.
pub fn classify_boundary<const D: usize>(grid: &Grid<D>) -> (Vec<usize>, Vec<usize>) {
    let mut boundary = Vec::new();
    let mut sh = Vec::new();
    for k in 0..grid.mesh_len() {
        if grid.class(k) != NodeClass::Boundary {
            continue;
        }
        boundary.push(k);
        let m = grid.multi(k);
        let touches_interior = (0..D).any(|i| {
            [-1isize, 1].iter().any(|&s| {
                let mut n = m;
                n[i] += s;
                grid.flat(&n)
                    .map(|id| grid.class(id) == NodeClass::Interior)
                    .unwrap_or(false)
            })
        });
        if touches_interior {
            sh.push(k);
        }
    }
    (boundary, sh)
}

impl<const D: usize> Grid<D> {
    pub fn new(domain: Domain<D>, counts: [usize; D]) -> Result<Self> {
        for (axis, &count) in counts.iter().enumerate() {
            if count < 3 {
                return Err(Error::InvalidGrid { axis, count });
            }
        }
        let mut spacings = [0.0; D];
        let mut strides = [0usize; D];
        let mut stride = 1;
        for i in 0..D {
            spacings[i] = (domain.hi[i] - domain.lo[i]) / (counts[i] - 1) as f64;
            strides[i] = stride;
            stride *= counts[i];
        }
        let mesh_len = stride;

        let mut grid = Self {
            domain,
            counts,
            spacings,
            strides,
            mesh_len,
            classes: Vec::with_capacity(mesh_len),
            in_sh: vec![false; mesh_len],
            interior_ids: Vec::new(),
            boundary_ids: Vec::new(),
            ghost_ids: Vec::new(),
            sh_ids: Vec::new(),
            unknown_of: vec![None; mesh_len],
            ghost_multi: Vec::new(),
            ghost_lookup: HashMap::new(),
        };

        for k in 0..mesh_len {
            let m = grid.multi_mesh(k);
            let on_boundary = (0..D).any(|i| m[i] == 0 || m[i] == counts[i] as isize - 1);
            if on_boundary {
                grid.classes.push(NodeClass::Boundary);
            } else {
                grid.unknown_of[k] = Some(grid.interior_ids.len());
                grid.interior_ids.push(k);
                grid.classes.push(NodeClass::Interior);
            }
        }

        // Ghosts: y ± 2 h_i e_i for interior y whose axis neighbour y ± h_i e_i is on the boundary.
        let mut ghosts = Vec::new();
        for &k in &grid.interior_ids {
            let m = grid.multi_mesh(k);
            for i in 0..D {
                for s in [-1isize, 1] {
                    let mut g = m;
                    g[i] += 2 * s;
                    if g[i] < 0 || g[i] >= counts[i] as isize {
                        ghosts.push(g);
                    }
                }
            }
        }
        // Lexicographic order with axis 0 fastest.
        ghosts.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
        ghosts.dedup();
        for (n, g) in ghosts.into_iter().enumerate() {
            let id = mesh_len + n;
            grid.ghost_lookup.insert(g, id);
            grid.ghost_multi.push(g);
            grid.ghost_ids.push(id);
            grid.classes.push(NodeClass::Ghost);
        }

        let (boundary, sh) = classify_boundary(&grid);
        for &k in &sh {
            grid.in_sh[k] = true;
        }
        grid.boundary_ids = boundary;
        grid.sh_ids = sh;
        Ok(grid)
    }

    fn multi_mesh(&self, k: usize) -> MultiIndex<D> {
        let mut m = [0isize; D];
        let mut rest = k;
        for i in 0..D {
            m[i] = (rest % self.counts[i]) as isize;
            rest /= self.counts[i];
        }
        m
    }

    pub fn domain(&self) -> &Domain<D> {
        &self.domain
    }

    /// Total node counts per axis, boundary included.
    pub fn counts(&self) -> [usize; D] {
        self.counts
    }

    pub fn spacings(&self) -> [f64; D] {
        self.spacings
    }

    /// Largest axis spacing.
    pub fn h_axis(&self) -> f64 {
        self.spacings.iter().cloned().fold(0.0, f64::max)
    }

    /// Length of the cell diagonal, `sqrt(sum h_i^2)`.
    pub fn h_diag(&self) -> f64 {
        self.spacings.iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    /// Number of mesh nodes `prod J_i`.
    pub fn mesh_len(&self) -> usize {
        self.mesh_len
    }

    /// Number of nodes in the extended grid (mesh plus ghosts).
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, k: usize) -> NodeClass {
        self.classes[k]
    }

    pub fn is_sh(&self, k: usize) -> bool {
        k < self.mesh_len && self.in_sh[k]
    }

    pub fn interior_ids(&self) -> &[usize] {
        &self.interior_ids
    }

    pub fn boundary_ids(&self) -> &[usize] {
        &self.boundary_ids
    }

    pub fn ghost_ids(&self) -> &[usize] {
        &self.ghost_ids
    }

    pub fn sh_ids(&self) -> &[usize] {
        &self.sh_ids
    }

    pub fn num_unknowns(&self) -> usize {
        self.interior_ids.len()
    }

    /// Position of a flat node id in the interior unknown vector.
    pub fn unknown_index(&self, k: usize) -> Option<usize> {
        self.unknown_of.get(k).copied().flatten()
    }

    /// Multi-index (0-based; ghosts have a component equal to -1 or J_i).
    pub fn multi(&self, k: usize) -> MultiIndex<D> {
        if k < self.mesh_len {
            self.multi_mesh(k)
        } else {
            self.ghost_multi[k - self.mesh_len]
        }
    }

    pub fn flat(&self, m: &MultiIndex<D>) -> Option<usize> {
        let inside = (0..D).all(|i| m[i] >= 0 && m[i] < self.counts[i] as isize);
        if inside {
            Some((0..D).map(|i| m[i] as usize * self.strides[i]).sum())
        } else {
            self.ghost_lookup.get(m).copied()
        }
    }

    /// Flat id of `node + offset`, if that node is in the extended grid.
    pub fn neighbor(&self, node: usize, offset: &MultiIndex<D>) -> Option<usize> {
        let mut m = self.multi(node);
        for i in 0..D {
            m[i] += offset[i];
        }
        self.flat(&m)
    }

    pub fn coords_of_multi(&self, m: &MultiIndex<D>) -> Point<D> {
        Point::<D>::from_fn(|i, _| self.domain.lo[i] + m[i] as f64 * self.spacings[i])
    }

    pub fn coords(&self, k: usize) -> Point<D> {
        self.coords_of_multi(&self.multi(k))
    }

    /// Writes `flat_id,class,x,y,...` rows for every extended node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        const AXES: [&str; 3] = ["x", "y", "z"];
        write!(out, "flat_id,class")?;
        for axis in AXES.iter().take(D) {
            write!(out, ",{axis}")?;
        }
        writeln!(out)?;
        for k in 0..self.len() {
            let class = match self.class(k) {
                NodeClass::Interior => "interior",
                NodeClass::Boundary if self.is_sh(k) => "sh",
                NodeClass::Boundary => "boundary",
                NodeClass::Ghost => "ghost",
            };
            write!(out, "{k},{class}")?;
            let x = self.coords(k);
            for i in 0..D {
                write!(out, ",{:.12e}", x[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Real values on every node of the extended grid.
#[derive(Debug, Clone)]
pub struct GridFunction<'g, const D: usize> {
    grid: &'g Grid<D>,
    values: Vec<f64>,
}

impl<'g, const D: usize> GridFunction<'g, D> {
    pub fn zeros(grid: &'g Grid<D>) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    /// Samples `f` at every extended node, ghosts included.
    pub fn sample(grid: &'g Grid<D>, f: impl Fn(&Point<D>) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.coords(k))).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: &'g Grid<D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    /// Interior values from `unknowns`, boundary values from `g`, ghosts from the
    /// auxiliary condition `Δ_h U = 0` on `S_h`.
    pub fn from_unknowns(grid: &'g Grid<D>, unknowns: &[f64], g: impl Fn(&Point<D>) -> f64) -> Result<Self> {
        if unknowns.len() != grid.num_unknowns() {
            return Err(Error::DimensionMismatch { expected: grid.num_unknowns(), got: unknowns.len() });
        }
        let mut u = Self::zeros(grid);
        for (n, &k) in grid.interior_ids().iter().enumerate() {
            u.values[k] = unknowns[n];
        }
        u.set_boundary(g);
        u.apply_auxiliary(None);
        Ok(u)
    }

    pub fn grid(&self) -> &'g Grid<D> {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn unknowns(&self) -> Vec<f64> {
        self.grid.interior_ids().iter().map(|&k| self.values[k]).collect()
    }

    pub fn set_boundary(&mut self, g: impl Fn(&Point<D>) -> f64) {
        for &k in self.grid.boundary_ids() {
            self.values[k] = g(&self.grid.coords(k));
        }
    }

    /// Redefines every ghost value so that `Δ_h U = aux` holds on `S_h`.
    ///
    /// `aux` is indexed by flat mesh id; `None` means `aux = 0`. Boundary values
    /// already stored in `self` are used for the tangential second differences.
    pub fn apply_auxiliary(&mut self, aux: Option<&[f64]>) {
        let grid = self.grid;
        let h = grid.spacings();
        for &ghost in grid.ghost_ids() {
            let gm = grid.multi(ghost);
            // Exactly one component lies outside the mesh.
            let axis = (0..D)
                .find(|&i| gm[i] < 0 || gm[i] >= grid.counts()[i] as isize)
                .expect("ghost lies outside along one axis");
            let inward = if gm[axis] < 0 { 1 } else { -1 };
            let mut bm = gm;
            bm[axis] += inward;
            let mut ym = bm;
            ym[axis] += inward;
            let b = grid.flat(&bm).expect("face node");
            let y = grid.flat(&ym).expect("interior node");
            let mut tangential = 0.0;
            for j in (0..D).filter(|&j| j != axis) {
                let mut plus = bm;
                plus[j] += 1;
                let mut minus = bm;
                minus[j] -= 1;
                let up = self.values[grid.flat(&plus).expect("face neighbour")];
                let um = self.values[grid.flat(&minus).expect("face neighbour")];
                tangential += (up - 2.0 * self.values[b] + um) / (h[j] * h[j]);
            }
            let a = aux.map(|t| t[b]).unwrap_or(0.0);
            self.values[ghost] = h[axis] * h[axis] * (a - tangential) + 2.0 * self.values[b] - self.values[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit2(n: usize) -> Grid<2> {
        build_grid(Domain::cube(0.0, 1.0).unwrap(), [n, n]).unwrap()
    }

    #[test]
    fn smallest_grid() {
        let g = unit2(3);
        assert_eq!(g.interior_ids().len(), 1);
        assert_eq!(g.boundary_ids().len(), 8);
        assert_eq!(g.ghost_ids().len(), 4);
        let x = g.coords(g.interior_ids()[0]);
        assert_relative_eq!(x[0], 0.5);
        assert_relative_eq!(x[1], 0.5);
    }

    #[test]
    fn rejects_too_few_nodes() {
        let d = Domain::cube(0.0, 1.0).unwrap();
        assert_eq!(build_grid(d, [2, 5]).unwrap_err(), Error::InvalidGrid { axis: 0, count: 2 });
        assert!(Domain::<2>::new([0.0, 1.0], [1.0, 1.0]).is_err());
    }

    #[test]
    fn test_one_and_three_spacings() {
        let g = build_grid(Domain::cube(-1.0, 1.0).unwrap(), [12, 12]).unwrap();
        assert_relative_eq!(g.spacings()[0], 2.0 / 11.0);
        assert!((g.h_axis() - 1.82e-1).abs() < 5e-4);
        let g = unit2(12);
        assert!((g.h_diag() - 1.29e-1).abs() < 5e-4);
    }

    #[test]
    fn sh_excludes_corners() {
        let g = unit2(3);
        assert_eq!(g.sh_ids().len(), 4);
        for &k in g.sh_ids() {
            let m = g.multi(k);
            assert!(m.iter().filter(|&&c| c == 1).count() == 1);
        }
        let g = unit2(4);
        assert_eq!(g.sh_ids().len(), 8);
        assert_eq!(g.boundary_ids().len(), 12);
    }

    #[test]
    fn strip_sh_is_all_non_corner_boundary() {
        let g = build_grid(Domain::cube(0.0, 1.0).unwrap(), [3, 5]).unwrap();
        let corners = g
            .boundary_ids()
            .iter()
            .filter(|&&k| {
                let m = g.multi(k);
                (m[0] == 0 || m[0] == 2) && (m[1] == 0 || m[1] == 4)
            })
            .count();
        assert_eq!(corners, 4);
        assert_eq!(g.sh_ids().len(), g.boundary_ids().len() - 4);
    }

    #[test]
    fn ghosts_lie_two_steps_from_an_interior_node() {
        let g = build_grid(Domain::new([0.0, -1.0], [2.0, 1.0]).unwrap(), [6, 5]).unwrap();
        for &k in g.ghost_ids() {
            let x = g.coords(k);
            assert!(!g.domain().contains_closed(&x));
            let m = g.multi(k);
            let found = (0..2).any(|i| {
                [-2isize, 2].iter().any(|&s| {
                    let mut y = m;
                    y[i] += s;
                    g.flat(&y).map(|id| g.class(id) == NodeClass::Interior).unwrap_or(false)
                })
            });
            assert!(found);
        }
        // Two ghosts per interior row/column touching each face.
        assert_eq!(g.ghost_ids().len(), 2 * 3 + 2 * 4);
    }

    #[test]
    fn index_round_trip_and_classes() {
        let g = build_grid(Domain::new([0.0, 0.0, 0.0], [1.0, 2.0, 1.0]).unwrap(), [4, 5, 3]).unwrap();
        assert_eq!(g.mesh_len(), 60);
        for k in 0..g.len() {
            assert_eq!(g.flat(&g.multi(k)), Some(k));
            let x = g.coords(k);
            match g.class(k) {
                NodeClass::Interior => assert!(g.domain().contains_open(&x)),
                NodeClass::Boundary => {
                    assert!(g.domain().contains_closed(&x) && !g.domain().contains_open(&x))
                }
                NodeClass::Ghost => assert!(!g.domain().contains_closed(&x)),
            }
        }
        assert_eq!(g.interior_ids().len() + g.boundary_ids().len(), g.mesh_len());
    }

    #[test]
    fn auxiliary_ghosts_make_discrete_laplacian_vanish_on_sh() {
        let g = unit2(6);
        let mut u = GridFunction::sample(&g, |x| (3.0 * x[0]).sin() + x[1] * x[1] * x[0]);
        u.apply_auxiliary(None);
        let h = g.spacings();
        for &b in g.sh_ids() {
            // Only the normal direction needs a ghost.
            let lap: f64 = (0..2)
                .map(|i| {
                    let mut e = [0isize; 2];
                    e[i] = 1;
                    let p = g.neighbor(b, &e);
                    e[i] = -1;
                    let m = g.neighbor(b, &e);
                    match (p, m) {
                        (Some(p), Some(m)) => (u.values()[p] - 2.0 * u.values()[b] + u.values()[m]) / (h[i] * h[i]),
                        _ => panic!("missing neighbour"),
                    }
                })
                .sum();
            assert!(lap.abs() < 1e-9, "lap = {lap}");
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_node() {
        let g = unit2(3);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "flat_id,class,x,y");
        assert_eq!(lines.len(), 1 + g.len());
        assert_eq!(text.matches(",sh,").count(), 4);
        assert_eq!(text.matches(",ghost,").count(), 4);
    }
}
