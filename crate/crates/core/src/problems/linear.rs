use std::f64::consts::PI;

use crate::fd_ops::{Mat, Vector};
use crate::grid::{Domain, Point};

use super::{Jet, Partials, Problem};

/// Which manufactured solution drives the non-aligned linear problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonalignedSolution {
    /// `sin(π (x + y)² / 2)`.
    Smooth,
    /// `x³ (3 ln x² - 11) / 18 + |y - 1/2|^{8/3} |x + 1/5|^{5/2}`, in `C²` but not `C³`.
    LowRegularity,
}

/// `-A(x) : P - f(x)` on `(-1, 1)²` with a discontinuous coefficient whose
/// eigenvectors are not aligned with any of the benchmark meshes.
#[derive(Debug, Clone)]
pub struct LinearNonaligned {
    solution: NonalignedSolution,
    frames: [Mat<2>; 4],
    name: &'static str,
}

/// `sign` with `sign(0) = 0`.
pub fn sign0(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl LinearNonaligned {
    pub fn new(solution: NonalignedSolution) -> Self {
        let h = 2.0 / 301.0;
        let dirs: [[f64; 2]; 4] = [[1.0, h / 2.0], [h, 5.0 * h], [10.0 * h, h], [h / 2.0, 2.0]];
        let frames = dirs.map(|[a, b]| {
            let n = (a * a + b * b).sqrt();
            let (c, s) = (a / n, b / n);
            Mat::<2>::new(c, -s, s, c)
        });
        let name = match solution {
            NonalignedSolution::Smooth => "linear1",
            NonalignedSolution::LowRegularity => "linear2",
        };
        Self { solution, frames, name }
    }

    pub fn eigenvalues(x: &Point<2>) -> (f64, f64) {
        let l1 = 2.0 - (5.0 * x[0]).exp().sin() * (-3.0 * x[1]).exp().cos();
        let l2 = 2.0 - sign0((6.0 * PI * x[0]).cos() * (6.0 * PI * x[1]).sin());
        (l1, l2)
    }

    /// Frame index (0-based) of the quadrant rule.
    pub fn quadrant(x: &Point<2>) -> usize {
        match (x[0] >= 0.0, x[1] >= 0.0) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        }
    }

    pub fn frame(&self, k: usize) -> Mat<2> {
        self.frames[k]
    }

    pub fn coefficient(&self, x: &Point<2>) -> Mat<2> {
        let q = self.frames[Self::quadrant(x)];
        let (l1, l2) = Self::eigenvalues(x);
        q * Mat::<2>::new(l1, 0.0, 0.0, l2) * q.transpose()
    }

    pub fn source(&self, x: &Point<2>) -> f64 {
        let j = self.jet(x);
        -self.coefficient(x).component_mul(&j.hess).sum()
    }

    fn jet(&self, p: &Point<2>) -> Jet<2> {
        let (x, y) = (p[0], p[1]);
        match self.solution {
            NonalignedSolution::Smooth => {
                let s = x + y;
                let phi = PI * s * s / 2.0;
                let d1 = PI * s * phi.cos();
                let c = PI * phi.cos() - PI * PI * s * s * phi.sin();
                Jet { u: phi.sin(), grad: Vector::<2>::new(d1, d1), hess: Mat::<2>::from_element(c) }
            }
            NonalignedSolution::LowRegularity => {
                let (t, t1, t2) = if x == 0.0 {
                    (0.0, 0.0, 0.0)
                } else {
                    let l = x.abs().ln();
                    (x.powi(3) * (6.0 * l - 11.0) / 18.0, x * x * (l - 1.5), 2.0 * x * l - 2.0 * x)
                };
                let (ay, sy) = ((y - 0.5).abs(), sign0(y - 0.5));
                let (ax, sx) = ((x + 0.2).abs(), sign0(x + 0.2));
                let yv = ay.powf(8.0 / 3.0);
                let y1 = 8.0 / 3.0 * ay.powf(5.0 / 3.0) * sy;
                let y2 = 40.0 / 9.0 * ay.powf(2.0 / 3.0);
                let xv = ax.powf(2.5);
                let x1 = 2.5 * ax.powf(1.5) * sx;
                let x2 = 3.75 * ax.sqrt();
                let uxy = y1 * x1;
                Jet {
                    u: t + yv * xv,
                    grad: Vector::<2>::new(t1 + yv * x1, y1 * xv),
                    hess: Mat::<2>::new(t2 + yv * x2, uxy, uxy, y2 * xv),
                }
            }
        }
    }
}

impl Problem<2> for LinearNonaligned {
    fn name(&self) -> &str {
        self.name
    }

    fn domain(&self) -> Domain<2> {
        Domain { lo: [-1.0, -1.0], hi: [1.0, 1.0] }
    }

    fn eval(&self, p: &Mat<2>, _q: &Vector<2>, _v: f64, x: &Point<2>) -> f64 {
        -self.coefficient(x).component_mul(p).sum() - self.source(x)
    }

    fn partials(&self, _p: &Mat<2>, _q: &Vector<2>, _v: f64, x: &Point<2>) -> Option<Partials<2>> {
        Some(Partials { dp: -self.coefficient(x), dq: Vector::<2>::zeros(), dv: 0.0 })
    }

    fn boundary(&self, x: &Point<2>) -> f64 {
        self.jet(x).u
    }

    fn exact(&self, x: &Point<2>) -> Option<f64> {
        Some(self.jet(x).u)
    }

    fn exact_jet(&self, x: &Point<2>) -> Option<Jet<2>> {
        Some(self.jet(x))
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn ellipticity(&self) -> Option<f64> {
        Some(1.0)
    }
}

type JetFn<const D: usize> = dyn Fn(&Point<D>) -> Jet<D> + Send + Sync;

/// `-A : P + c v - f(x)` with constant `A` and `c`, data manufactured from a jet.
pub struct ConstantCoefficient<const D: usize> {
    a: Mat<D>,
    c: f64,
    domain: Domain<D>,
    solution: Box<JetFn<D>>,
}

impl<const D: usize> ConstantCoefficient<D> {
    pub fn new(a: Mat<D>, c: f64, domain: Domain<D>, solution: impl Fn(&Point<D>) -> Jet<D> + Send + Sync + 'static) -> Self {
        Self { a, c, domain, solution: Box::new(solution) }
    }

    /// `-Δu = 0` with boundary value `value`; the solution is that constant.
    pub fn constant_solution(domain: Domain<D>, value: f64) -> Self {
        Self::new(Mat::<D>::identity(), 0.0, domain, move |_| Jet {
            u: value,
            grad: Vector::<D>::zeros(),
            hess: Mat::<D>::zeros(),
        })
    }

    pub fn coefficient(&self) -> Mat<D> {
        self.a
    }

    fn source(&self, x: &Point<D>) -> f64 {
        let j = (self.solution)(x);
        -self.a.component_mul(&j.hess).sum() + self.c * j.u
    }
}

impl<const D: usize> Problem<D> for ConstantCoefficient<D> {
    fn name(&self) -> &str {
        "constant_coefficient"
    }

    fn domain(&self) -> Domain<D> {
        self.domain
    }

    fn eval(&self, p: &Mat<D>, _q: &Vector<D>, v: f64, x: &Point<D>) -> f64 {
        -self.a.component_mul(p).sum() + self.c * v - self.source(x)
    }

    fn partials(&self, _p: &Mat<D>, _q: &Vector<D>, _v: f64, _x: &Point<D>) -> Option<Partials<D>> {
        Some(Partials { dp: -self.a, dq: Vector::<D>::zeros(), dv: self.c })
    }

    fn boundary(&self, x: &Point<D>) -> f64 {
        (self.solution)(x).u
    }

    fn exact(&self, x: &Point<D>) -> Option<f64> {
        Some((self.solution)(x).u)
    }

    fn exact_jet(&self, x: &Point<D>) -> Option<Jet<D>> {
        Some((self.solution)(x))
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn ellipticity(&self) -> Option<f64> {
        let sym = (self.a + self.a.transpose()) * 0.5;
        let dense = nalgebra::DMatrix::from_iterator(D, D, sym.iter().copied());
        Some(dense.symmetric_eigen().eigenvalues.min())
    }
}
