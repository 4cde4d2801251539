use crate::fd_ops::{Mat, Vector};
use crate::grid::{Domain, Point};

use super::{Jet, Partials, Problem};

fn det2(p: &Mat<2>) -> f64 {
    p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)]
}

/// `∂ det(P) / ∂P` for a possibly non-symmetric `P`.
fn det2_gradient(p: &Mat<2>) -> Mat<2> {
    Mat::<2>::new(p[(1, 1)], -p[(1, 0)], -p[(0, 1)], p[(0, 0)])
}

/// `u = exp((x² + y²) / 2)` and its derivatives.
fn gaussian_bump(p: &Point<2>) -> Jet<2> {
    let (x, y) = (p[0], p[1]);
    let u = (0.5 * (x * x + y * y)).exp();
    Jet {
        u,
        grad: Vector::<2>::new(x * u, y * u),
        hess: Mat::<2>::new((1.0 + x * x) * u, x * y * u, x * y * u, (1.0 + y * y) * u),
    }
}

/// `-det P + f(x)` on `(0, 1)²` with `f = e^{x²+y²}(1 + x² + y²)`.
#[derive(Debug, Clone, Default)]
pub struct MongeAmpere;

impl MongeAmpere {
    pub fn new() -> Self {
        Self
    }

    pub fn source(x: &Point<2>) -> f64 {
        let r2 = x.norm_squared();
        r2.exp() * (1.0 + r2)
    }
}

impl Problem<2> for MongeAmpere {
    fn name(&self) -> &str {
        "monge_ampere"
    }

    fn domain(&self) -> Domain<2> {
        Domain { lo: [0.0, 0.0], hi: [1.0, 1.0] }
    }

    fn eval(&self, p: &Mat<2>, _q: &Vector<2>, _v: f64, x: &Point<2>) -> f64 {
        -det2(p) + Self::source(x)
    }

    fn partials(&self, p: &Mat<2>, _q: &Vector<2>, _v: f64, _x: &Point<2>) -> Option<Partials<2>> {
        Some(Partials { dp: -det2_gradient(p), dq: Vector::<2>::zeros(), dv: 0.0 })
    }

    fn boundary(&self, x: &Point<2>) -> f64 {
        gaussian_bump(x).u
    }

    fn exact(&self, x: &Point<2>) -> Option<f64> {
        Some(gaussian_bump(x).u)
    }

    fn exact_jet(&self, x: &Point<2>) -> Option<Jet<2>> {
        Some(gaussian_bump(x))
    }
}

/// `-det P / (1 + |q|²)² + K f(x)` on `(0, 1)²`, with `f` manufactured from the
/// same exact solution as [`MongeAmpere`].
#[derive(Debug, Clone)]
pub struct GaussCurvature {
    k: f64,
}

impl GaussCurvature {
    pub fn new(k: f64) -> Self {
        Self { k }
    }

    pub fn curvature(&self) -> f64 {
        self.k
    }

    pub fn source(&self, x: &Point<2>) -> f64 {
        let j = gaussian_bump(x);
        let w = 1.0 + j.grad.norm_squared();
        det2(&j.hess) / (self.k * w * w)
    }
}

impl Problem<2> for GaussCurvature {
    fn name(&self) -> &str {
        "gauss_curvature"
    }

    fn domain(&self) -> Domain<2> {
        Domain { lo: [0.0, 0.0], hi: [1.0, 1.0] }
    }

    fn eval(&self, p: &Mat<2>, q: &Vector<2>, _v: f64, x: &Point<2>) -> f64 {
        let w = 1.0 + q.norm_squared();
        -det2(p) / (w * w) + self.k * self.source(x)
    }

    fn partials(&self, p: &Mat<2>, q: &Vector<2>, _v: f64, _x: &Point<2>) -> Option<Partials<2>> {
        let w = 1.0 + q.norm_squared();
        Some(Partials {
            dp: -det2_gradient(p) / (w * w),
            dq: q * (4.0 * det2(p) / (w * w * w)),
            dv: 0.0,
        })
    }

    fn boundary(&self, x: &Point<2>) -> f64 {
        gaussian_bump(x).u
    }

    fn exact(&self, x: &Point<2>) -> Option<f64> {
        Some(gaussian_bump(x).u)
    }

    fn exact_jet(&self, x: &Point<2>) -> Option<Jet<2>> {
        Some(gaussian_bump(x))
    }
}
