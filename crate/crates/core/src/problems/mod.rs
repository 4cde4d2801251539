//! Benchmark problems `F(P, q, v, x) = 0` with manufactured data.

mod hjb;
mod linear;
mod monge;

pub use hjb::{ControlSet, Hjb};
pub use linear::{ConstantCoefficient, LinearNonaligned, NonalignedSolution};
pub use monge::{GaussCurvature, MongeAmpere};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fd_ops::{Mat, Vector};
use crate::grid::{Domain, Point};

/// `∂F/∂P`, `∂F/∂q`, `∂F/∂v` at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials<const D: usize> {
    pub dp: Mat<D>,
    pub dq: Vector<D>,
    pub dv: f64,
}

/// Value, gradient and Hessian of an exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const D: usize> {
    pub u: f64,
    pub grad: Vector<D>,
    pub hess: Mat<D>,
}

/// A finite family of linear operators `-A_k : P + c_k v - f_k(x)` whose pointwise
/// minimum defines the problem, with `f_k(x) = control_source(k) + shared_source(x)`.
pub trait ControlFamily<const D: usize>: Send + Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn diffusion(&self, k: usize) -> Mat<D>;
    fn reaction(&self, k: usize) -> f64;
    fn control_source(&self, k: usize) -> f64;
    fn shared_source(&self, x: &Point<D>) -> f64;
    /// Human-readable parameters of control `k`.
    fn describe(&self, k: usize) -> String;
}

pub trait Problem<const D: usize>: Send + Sync {
    fn name(&self) -> &str;
    fn domain(&self) -> Domain<D>;
    fn eval(&self, p: &Mat<D>, q: &Vector<D>, v: f64, x: &Point<D>) -> f64;
    fn partials(&self, p: &Mat<D>, q: &Vector<D>, v: f64, x: &Point<D>) -> Option<Partials<D>>;
    /// Dirichlet data `g`.
    fn boundary(&self, x: &Point<D>) -> f64;
    fn exact(&self, _x: &Point<D>) -> Option<f64> {
        None
    }
    fn exact_jet(&self, _x: &Point<D>) -> Option<Jet<D>> {
        None
    }
    /// True when `F` is affine in `(P, q, v)`.
    fn is_affine(&self) -> bool {
        false
    }
    /// Lower ellipticity constant `λ` where one is known.
    fn ellipticity(&self) -> Option<f64> {
        None
    }
    /// Problems defined as a minimum over controls expose the family here.
    fn controls(&self) -> Option<&dyn ControlFamily<D>> {
        None
    }
}

/// Builds a two-dimensional benchmark by name.
pub fn by_name(name: &str, controls: ControlSet) -> Result<Box<dyn Problem<2>>> {
    Ok(match name {
        "linear1" => Box::new(LinearNonaligned::new(NonalignedSolution::Smooth)),
        "linear2" => Box::new(LinearNonaligned::new(NonalignedSolution::LowRegularity)),
        "hjb" => Box::new(Hjb::new(controls)?),
        "monge_ampere" => Box::new(MongeAmpere::new()),
        "gauss_curvature" => Box::new(GaussCurvature::new(0.1)),
        other => return Err(Error::UnknownProblem(other.to_string())),
    })
}

pub const PROBLEM_NAMES: [&str; 5] = ["linear1", "linear2", "hjb", "monge_ampere", "gauss_curvature"];

/// Outcome of comparing analytic partials with central differences of `eval`.
#[derive(Debug, Clone, Serialize)]
pub struct PartialsAudit {
    pub problem: String,
    pub samples: usize,
    pub worst_relative: f64,
    pub passed: bool,
}

/// Draws a random state `(P, q, v, x)` with symmetric `P` and `x` in the domain.
pub fn random_state<const D: usize>(
    rng: &mut ChaCha8Rng,
    domain: &Domain<D>,
    scale: f64,
) -> (Mat<D>, Vector<D>, f64, Point<D>) {
    let mut p = Mat::<D>::from_fn(|_, _| rng.random_range(-scale..scale));
    p = (p + p.transpose()) * 0.5;
    let q = Vector::<D>::from_fn(|_, _| rng.random_range(-scale..scale));
    let v = rng.random_range(-scale..scale);
    let x = Point::<D>::from_fn(|i, _| rng.random_range(domain.lo[i]..domain.hi[i]));
    (p, q, v, x)
}

/// Checks each analytic partial against a centred difference of `eval`.
///
/// Problems defined by a control minimum are probed away from switching points:
/// samples where the minimiser changes inside the probe are skipped.
pub fn check_partials<const D: usize>(problem: &dyn Problem<D>, samples: usize, seed: u64, rel_tol: f64) -> Result<PartialsAudit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = problem.domain();
    let mut worst = 0.0f64;
    let mut used = 0;
    let mut attempts = 0;
    while used < samples && attempts < 20 * samples {
        attempts += 1;
        let (p, q, v, x) = random_state(&mut rng, &domain, 2.0);
        let Some(d) = problem.partials(&p, &q, v, &x) else {
            return Err(Error::MissingPartials(problem.name().to_string()));
        };
        let eps = 1e-6;
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        let mut kinks = false;
        let mut probe = |fp: f64, fm: f64, f0: f64, analytic: f64, pairs: &mut Vec<(f64, f64)>| {
            // a one-sided slope mismatch signals a kink inside the probe
            let (left, right) = ((f0 - fm) / eps, (fp - f0) / eps);
            if (left - right).abs() > 1e-3 * (1.0 + left.abs()) {
                kinks = true;
            }
            pairs.push(((fp - fm) / (2.0 * eps), analytic));
        };
        let f0 = problem.eval(&p, &q, v, &x);
        for i in 0..D {
            for j in 0..D {
                let mut pp = p;
                let mut pm = p;
                pp[(i, j)] += eps;
                pm[(i, j)] -= eps;
                probe(problem.eval(&pp, &q, v, &x), problem.eval(&pm, &q, v, &x), f0, d.dp[(i, j)], &mut pairs);
            }
            let mut qp = q;
            let mut qm = q;
            qp[i] += eps;
            qm[i] -= eps;
            probe(problem.eval(&p, &qp, v, &x), problem.eval(&p, &qm, v, &x), f0, d.dq[i], &mut pairs);
        }
        probe(problem.eval(&p, &q, v + eps, &x), problem.eval(&p, &q, v - eps, &x), f0, d.dv, &mut pairs);
        if kinks {
            continue;
        }
        used += 1;
        for (fd, an) in pairs {
            worst = worst.max((fd - an).abs() / (1.0 + an.abs()));
        }
    }
    Ok(PartialsAudit {
        problem: problem.name().to_string(),
        samples: used,
        worst_relative: worst,
        passed: used == samples && worst <= rel_tol,
    })
}

/// `max |F(D²u, ∇u, u, x)|` over the sample points.
pub fn exact_residual<const D: usize>(problem: &dyn Problem<D>, points: &[Point<D>]) -> Option<f64> {
    let mut worst = 0.0f64;
    for x in points {
        let j = problem.exact_jet(x)?;
        worst = worst.max(problem.eval(&j.hess, &j.grad, j.u, x).abs());
    }
    Some(worst)
}
