use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd_ops::{Mat, Vector};
use crate::grid::{Domain, Point};

use super::{ControlFamily, Jet, Partials, Problem};

/// Tensor sample of the control set: `phi` uniform on `[0, phi_max]` with both
/// endpoints, rotation angle uniform on `[0, rot_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    pub phi_count: usize,
    pub rot_count: usize,
    pub phi_max: f64,
    pub rot_max: f64,
}

impl Default for ControlSet {
    fn default() -> Self {
        Self { phi_count: 16, rot_count: 32, phi_max: PI / 3.0, rot_max: PI }
    }
}

impl ControlSet {
    pub fn with_counts(phi_count: usize, rot_count: usize) -> Self {
        Self { phi_count, rot_count, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi_count == 0 || self.rot_count == 0 {
            return Err(Error::InvalidProblem("control sample must contain at least one control".into()));
        }
        Ok(())
    }

    pub fn phi(&self, i: usize) -> f64 {
        if self.phi_count == 1 {
            0.0
        } else {
            self.phi_max * i as f64 / (self.phi_count - 1) as f64
        }
    }

    pub fn rotation(&self, l: usize) -> f64 {
        self.rot_max * l as f64 / self.rot_count as f64
    }
}

/// Diffusion `½ σσᵀ` with `σ = Rᵀ [[1, sin φ], [0, cos φ]]` and `R` the rotation by `angle`.
pub fn control_diffusion(phi: f64, angle: f64) -> Mat<2> {
    let r = Mat::<2>::new(angle.cos(), -angle.sin(), angle.sin(), angle.cos());
    let t = Mat::<2>::new(1.0, phi.sin(), 0.0, phi.cos());
    let sigma = r.transpose() * t;
    sigma * sigma.transpose() * 0.5
}

/// `inf_θ (-A^θ : P + π² v - f_θ(x))` on `(0, 1)²`, with
/// `f_θ = √3 sin²(φ/π²) + g̃(x)` and `g̃` chosen so that
/// `u = e^{xy} sin(πx) sin(πy)` solves the sampled problem exactly.
#[derive(Debug, Clone)]
pub struct Hjb {
    set: ControlSet,
    diffusions: Vec<Mat<2>>,
    sources: Vec<f64>,
}

impl Hjb {
    pub fn new(set: ControlSet) -> Result<Self> {
        set.validate()?;
        let mut diffusions = Vec::with_capacity(set.phi_count * set.rot_count);
        let mut sources = Vec::with_capacity(diffusions.capacity());
        for i in 0..set.phi_count {
            let phi = set.phi(i);
            for l in 0..set.rot_count {
                diffusions.push(control_diffusion(phi, set.rotation(l)));
                sources.push(3f64.sqrt() * (phi / (PI * PI)).sin().powi(2));
            }
        }
        Ok(Self { set, diffusions, sources })
    }

    pub fn control_set(&self) -> ControlSet {
        self.set
    }

    /// Minimum over controls of `-A_k : P + π² v - s_k` and its first minimiser.
    fn min_operator(&self, p: &Mat<2>, v: f64) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (k, (a, s)) in self.diffusions.iter().zip(&self.sources).enumerate() {
            let val = -a.component_mul(p).sum() + PI * PI * v - s;
            if val < best.0 {
                best = (val, k);
            }
        }
        best
    }

    /// Minimiser of the operator at `(P, v)`; ties go to the lowest index.
    pub fn argmin(&self, p: &Mat<2>, v: f64) -> usize {
        self.min_operator(p, v).1
    }

    fn jet(&self, p: &Point<2>) -> Jet<2> {
        let (x, y) = (p[0], p[1]);
        let e = (x * y).exp();
        let (sx, cx) = ((PI * x).sin(), (PI * x).cos());
        let (sy, cy) = ((PI * y).sin(), (PI * y).cos());
        let u = e * sx * sy;
        let ux = e * (y * sx * sy + PI * cx * sy);
        let uy = e * (x * sx * sy + PI * sx * cy);
        let uxx = e * (y * y * sx * sy + 2.0 * PI * y * cx * sy - PI * PI * sx * sy);
        let uyy = e * (x * x * sx * sy + 2.0 * PI * x * sx * cy - PI * PI * sx * sy);
        let uxy = e * (x * (y * sx * sy + PI * cx * sy) + sx * sy + PI * y * sx * cy + PI * PI * cx * cy);
        Jet { u, grad: Vector::<2>::new(ux, uy), hess: Mat::<2>::new(uxx, uxy, uxy, uyy) }
    }
}

impl ControlFamily<2> for Hjb {
    fn len(&self) -> usize {
        self.diffusions.len()
    }

    fn diffusion(&self, k: usize) -> Mat<2> {
        self.diffusions[k]
    }

    fn reaction(&self, _k: usize) -> f64 {
        PI * PI
    }

    fn control_source(&self, k: usize) -> f64 {
        self.sources[k]
    }

    fn shared_source(&self, x: &Point<2>) -> f64 {
        let j = self.jet(x);
        self.min_operator(&j.hess, j.u).0
    }

    fn describe(&self, k: usize) -> String {
        let (i, l) = (k / self.set.rot_count, k % self.set.rot_count);
        format!("phi={:.6} angle={:.6}", self.set.phi(i), self.set.rotation(l))
    }
}

impl Problem<2> for Hjb {
    fn name(&self) -> &str {
        "hjb"
    }

    fn domain(&self) -> Domain<2> {
        Domain { lo: [0.0, 0.0], hi: [1.0, 1.0] }
    }

    fn eval(&self, p: &Mat<2>, _q: &Vector<2>, v: f64, x: &Point<2>) -> f64 {
        self.min_operator(p, v).0 - self.shared_source(x)
    }

    fn partials(&self, p: &Mat<2>, _q: &Vector<2>, v: f64, _x: &Point<2>) -> Option<Partials<2>> {
        let k = self.argmin(p, v);
        Some(Partials { dp: -self.diffusions[k], dq: Vector::<2>::zeros(), dv: PI * PI })
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

    fn ellipticity(&self) -> Option<f64> {
        // some sampled controls are degenerate
        Some(0.0)
    }

    fn controls(&self) -> Option<&dyn ControlFamily<2>> {
        Some(self)
    }
}
