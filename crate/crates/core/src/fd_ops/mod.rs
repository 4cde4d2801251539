//! Point-wise difference operators and their matrix forms.
//!
//! Every second-order operator used by the scheme is a linear functional of the
//! values on a fixed local stencil: the centre, `±e_i`, `±2e_i` and the diagonal
//! neighbours `±e_i ± e_j`. [`Stencil`] fixes the slot layout and
//! [`HessianBundle::from_slots`] evaluates all Hessians from slot values.

mod assemble;

pub use assemble::{
    assemble_first_central, assemble_hessian_blocks, assemble_slot_functional, assemble_wide_laplacian,
    boundary_corrections, EliminatedStencil, HessianKind, SlotRef,
};

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, MultiIndex, NodeClass};

pub type Mat<const D: usize> = SMatrix<f64, D, D>;
pub type Vector<const D: usize> = SVector<f64, D>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    Forward,
    Backward,
    Central,
}

/// Slot layout of the local stencil.
///
/// Slot 0 is the centre; axis `i` owns slots `1 + 4i ..= 4 + 4i` for
/// `+e_i, -e_i, +2e_i, -2e_i`; each pair `i < j` then owns four slots for
/// `(+,+), (+,-), (-,+), (-,-)` in the order `(sign_i, sign_j)`.
#[derive(Debug, Clone)]
pub struct Stencil<const D: usize> {
    offsets: Vec<MultiIndex<D>>,
}

impl<const D: usize> Default for Stencil<D> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const D: usize> Stencil<D> {
    pub fn new() -> Self {
        let mut offsets = vec![[0isize; D]];
        for i in 0..D {
            for s in [1isize, -1, 2, -2] {
                let mut o = [0isize; D];
                o[i] = s;
                offsets.push(o);
            }
        }
        for i in 0..D {
            for j in i + 1..D {
                for (si, sj) in [(1isize, 1isize), (1, -1), (-1, 1), (-1, -1)] {
                    let mut o = [0isize; D];
                    o[i] = si;
                    o[j] = sj;
                    offsets.push(o);
                }
            }
        }
        Self { offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[MultiIndex<D>] {
        &self.offsets
    }

    /// Slot of `s * k * e_i` with `k` in {1, 2}.
    #[inline]
    pub fn axis(i: usize, s: isize, k: isize) -> usize {
        let base = 1 + 4 * i;
        match (s > 0, k) {
            (true, 1) => base,
            (false, 1) => base + 1,
            (true, _) => base + 2,
            (false, _) => base + 3,
        }
    }

    /// Slot of `si e_i + sj e_j` for `i != j`.
    #[inline]
    pub fn diagonal(i: usize, si: isize, j: usize, sj: isize) -> usize {
        let (a, sa, b, sb) = if i < j { (i, si, j, sj) } else { (j, sj, i, si) };
        // pairs (a, b) with a < b enumerated row by row
        let pair = a * (2 * D - a - 1) / 2 + (b - a - 1);
        let within = match (sa > 0, sb > 0) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        1 + 4 * D + 4 * pair + within
    }
}

/// The four one-sided Hessians at a node and their averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianBundle<const D: usize> {
    pub dpp: Mat<D>,
    pub dpm: Mat<D>,
    pub dmp: Mat<D>,
    pub dmm: Mat<D>,
    pub dhat: Mat<D>,
    pub dtilde: Mat<D>,
    pub dbar: Mat<D>,
}

impl<const D: usize> HessianBundle<D> {
    /// Evaluates `D^{μν}_{ij} = δ^ν_{x_j} δ^μ_{x_i} V` from stencil slot values.
    pub fn from_slots(v: &[f64], h: &[f64; D]) -> Self {
        let one_sided = |mu: isize, nu: isize| -> Mat<D> {
            Mat::<D>::from_fn(|i, j| {
                if i == j {
                    let hh = h[i] * h[i];
                    let c = v[0];
                    let (p1, m1) = (v[Stencil::<D>::axis(i, 1, 1)], v[Stencil::<D>::axis(i, -1, 1)]);
                    match (mu > 0, nu > 0) {
                        (true, true) => (v[Stencil::<D>::axis(i, 1, 2)] - 2.0 * p1 + c) / hh,
                        (false, false) => (c - 2.0 * m1 + v[Stencil::<D>::axis(i, -1, 2)]) / hh,
                        _ => (p1 - 2.0 * c + m1) / hh,
                    }
                } else {
                    let corner = v[Stencil::<D>::diagonal(i, mu, j, nu)];
                    let vj = v[Stencil::<D>::axis(j, nu, 1)];
                    let vi = v[Stencil::<D>::axis(i, mu, 1)];
                    (mu * nu) as f64 * (corner - vj - vi + v[0]) / (h[i] * h[j])
                }
            })
        };
        let dpp = one_sided(1, 1);
        let dpm = one_sided(1, -1);
        let dmp = one_sided(-1, 1);
        let dmm = one_sided(-1, -1);
        let dhat = (dpm + dmp) * 0.5;
        let dtilde = (dpp + dmm) * 0.5;
        let dbar = (dhat + dtilde) * 0.5;
        Self { dpp, dpm, dmp, dmm, dhat, dtilde, dbar }
    }

    /// `D̃² - D̂²`, the argument of the numerical moment.
    pub fn moment_difference(&self) -> Mat<D> {
        self.dtilde - self.dhat
    }
}

/// Central gradient from slot values.
pub fn central_gradient_from_slots<const D: usize>(v: &[f64], h: &[f64; D]) -> Vector<D> {
    Vector::<D>::from_fn(|i, _| {
        (v[Stencil::<D>::axis(i, 1, 1)] - v[Stencil::<D>::axis(i, -1, 1)]) / (2.0 * h[i])
    })
}

/// Per-slot weights of every linear functional the scheme needs.
///
/// Obtained by applying [`HessianBundle::from_slots`] to indicator vectors, so the
/// weights and the point-wise evaluation can never disagree.
#[derive(Debug, Clone)]
pub struct StencilWeights<const D: usize> {
    pub slots: usize,
    /// `bar[i * D + j][s]`: weight of slot `s` in `D̄²_{ij}`.
    pub bar: Vec<Vec<f64>>,
    pub hat: Vec<Vec<f64>>,
    pub tilde: Vec<Vec<f64>>,
    /// Weights of `D̃²_{ij} - D̂²_{ij}`.
    pub diff: Vec<Vec<f64>>,
    pub grad: Vec<Vec<f64>>,
}

impl<const D: usize> StencilWeights<D> {
    pub fn new(h: &[f64; D]) -> Self {
        let ns = Stencil::<D>::new().len();
        let mut bar = vec![vec![0.0; ns]; D * D];
        let mut hat = bar.clone();
        let mut tilde = bar.clone();
        let mut diff = bar.clone();
        let mut grad = vec![vec![0.0; ns]; D];
        let mut e = vec![0.0; ns];
        for s in 0..ns {
            e[s] = 1.0;
            let b = HessianBundle::<D>::from_slots(&e, h);
            let g = central_gradient_from_slots::<D>(&e, h);
            for i in 0..D {
                for j in 0..D {
                    bar[i * D + j][s] = b.dbar[(i, j)];
                    hat[i * D + j][s] = b.dhat[(i, j)];
                    tilde[i * D + j][s] = b.dtilde[(i, j)];
                    diff[i * D + j][s] = b.dtilde[(i, j)] - b.dhat[(i, j)];
                }
                grad[i][s] = g[i];
            }
            e[s] = 0.0;
        }
        Self { slots: ns, bar, hat, tilde, diff, grad }
    }
}

fn gather<const D: usize>(u: &GridFunction<'_, D>, node: usize) -> Result<Vec<f64>> {
    let grid = u.grid();
    if grid.class(node) != NodeClass::Interior {
        return Err(Error::NotInterior { node });
    }
    Stencil::<D>::new()
        .offsets()
        .iter()
        .map(|o| {
            grid.neighbor(node, o)
                .map(|k| u.values()[k])
                .ok_or_else(|| Error::StencilOutOfRange { node, offset: o.to_vec() })
        })
        .collect()
}

/// First difference along `axis` at `node`.
pub fn diff1<const D: usize>(u: &GridFunction<'_, D>, axis: usize, mode: DiffMode, node: usize) -> Result<f64> {
    let grid = u.grid();
    let h = grid.spacings()[axis];
    let at = |s: isize| -> Result<f64> {
        let mut o = [0isize; D];
        o[axis] = s;
        grid.neighbor(node, &o)
            .map(|k| u.values()[k])
            .ok_or_else(|| Error::StencilOutOfRange { node, offset: o.to_vec() })
    };
    let c = u.values()[node];
    Ok(match mode {
        DiffMode::Forward => (at(1)? - c) / h,
        DiffMode::Backward => (c - at(-1)?) / h,
        DiffMode::Central => (at(1)? - at(-1)?) / (2.0 * h),
    })
}

pub fn central_gradient<const D: usize>(u: &GridFunction<'_, D>, node: usize) -> Result<Vector<D>> {
    let mut g = Vector::<D>::zeros();
    for i in 0..D {
        g[i] = diff1(u, i, DiffMode::Central, node)?;
    }
    Ok(g)
}

/// All Hessians at an interior node; ghost values are read from `u` as stored.
pub fn hessian_bundle<const D: usize>(u: &GridFunction<'_, D>, node: usize) -> Result<HessianBundle<D>> {
    let v = gather(u, node)?;
    Ok(HessianBundle::from_slots(&v, &u.grid().spacings()))
}

/// `A : (D̃²U - D̂²U)` at `node`.
pub fn moment<const D: usize>(u: &GridFunction<'_, D>, a: &Mat<D>, node: usize) -> Result<f64> {
    let b = hessian_bundle(u, node)?;
    Ok(a.component_mul(&b.moment_difference()).sum())
}

/// `(Δ_h U, Δ_{2h} U)` at an interior node.
pub fn discrete_laplacians<const D: usize>(u: &GridFunction<'_, D>, node: usize) -> Result<(f64, f64)> {
    let b = hessian_bundle(u, node)?;
    Ok((b.dhat.trace(), b.dbar.trace()))
}
