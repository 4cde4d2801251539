//! Structural audits of numerical operators written in unreduced form, i.e. as
//! functions of the four one-sided Hessians `P^{++}, P^{+-}, P^{-+}, P^{--}`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fd_ops::{central_gradient_from_slots, HessianBundle, Mat, Stencil, Vector};
use crate::grid::Point;
use crate::problems::Problem;

use super::{evaluate_local, LocalState, Scheme, SchemeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnreducedState<const D: usize> {
    pub pp: Mat<D>,
    pub pm: Mat<D>,
    pub mp: Mat<D>,
    pub mm: Mat<D>,
    pub q: Vector<D>,
    pub v: f64,
    pub x: Point<D>,
    pub shared: Option<f64>,
}

impl<const D: usize> UnreducedState<D> {
    pub fn from_bundle(b: &HessianBundle<D>, q: Vector<D>, v: f64, x: Point<D>, shared: Option<f64>) -> Self {
        Self { pp: b.dpp, pm: b.dpm, mp: b.dmp, mm: b.dmm, q, v, x, shared }
    }

    /// All four Hessians equal to `p`.
    pub fn consistent(p: Mat<D>, q: Vector<D>, v: f64, x: Point<D>) -> Self {
        Self { pp: p, pm: p, mp: p, mm: p, q, v, x, shared: None }
    }

    pub fn bundle(&self) -> HessianBundle<D> {
        let dhat = (self.pm + self.mp) * 0.5;
        let dtilde = (self.pp + self.mm) * 0.5;
        HessianBundle {
            dpp: self.pp,
            dpm: self.pm,
            dmp: self.mp,
            dmm: self.mm,
            dhat,
            dtilde,
            dbar: (dhat + dtilde) * 0.5,
        }
    }
}

pub trait NumericalOperator<const D: usize>: Sync {
    fn name(&self) -> String;
    fn eval(&self, s: &UnreducedState<D>) -> Result<f64>;
    /// The operator with its state-dependent weights held at `at`.
    fn eval_frozen(&self, s: &UnreducedState<D>, _at: &UnreducedState<D>) -> Result<f64> {
        self.eval(s)
    }
}

/// `F̂_{γ,σ}` for a problem.
pub struct FhatOperator<'a, const D: usize> {
    pub problem: &'a dyn Problem<D>,
    pub params: SchemeParams<D>,
}

impl<'a, const D: usize> FhatOperator<'a, D> {
    pub fn new(problem: &'a dyn Problem<D>, params: SchemeParams<D>) -> Self {
        Self { problem, params }
    }
}

impl<const D: usize> NumericalOperator<D> for FhatOperator<'_, D> {
    fn name(&self) -> String {
        format!("fhat(gamma={}, sigma={})", self.params.gamma, self.params.sigma)
    }

    fn eval(&self, s: &UnreducedState<D>) -> Result<f64> {
        let b = s.bundle();
        let st = LocalState { hess: &b, grad: &s.q, v: s.v, x: &s.x, shared: s.shared };
        Ok(evaluate_local(self.problem, &self.params, &st, None)?.value)
    }

    fn eval_frozen(&self, s: &UnreducedState<D>, at: &UnreducedState<D>) -> Result<f64> {
        let ba = at.bundle();
        let sa = LocalState { hess: &ba, grad: &at.q, v: at.v, x: &at.x, shared: at.shared };
        let frozen = evaluate_local(self.problem, &self.params, &sa, None)?.frozen;
        let b = s.bundle();
        let st = LocalState { hess: &b, grad: &s.q, v: s.v, x: &s.x, shared: s.shared };
        Ok(evaluate_local(self.problem, &self.params, &st, Some(&frozen))?.value)
    }
}

/// Deliberately broken operators used as negative controls.
pub mod corrupted {
    use super::*;

    /// Applies the moment weight to `D̄²` instead of `D̃² - D̂²`; not consistent.
    pub struct MomentOnAverage<'a, const D: usize>(pub FhatOperator<'a, D>);

    impl<const D: usize> NumericalOperator<D> for MomentOnAverage<'_, D> {
        fn name(&self) -> String {
            "moment applied to the averaged Hessian".into()
        }

        fn eval(&self, s: &UnreducedState<D>) -> Result<f64> {
            let base = self.0.eval(s)?;
            let b = s.bundle();
            let w = self.0.params.shift() + Mat::<D>::identity();
            Ok(base - w.component_mul(&b.moment_difference()).sum() + w.component_mul(&b.dbar).sum())
        }
    }

    /// Uses `P^{++}` alone in place of `D̃²`; consistent but not in reduced form.
    pub struct PlusPlusOnly<'a, const D: usize>(pub FhatOperator<'a, D>);

    impl<const D: usize> NumericalOperator<D> for PlusPlusOnly<'_, D> {
        fn name(&self) -> String {
            "moment built from the ++ Hessian alone".into()
        }

        fn eval(&self, s: &UnreducedState<D>) -> Result<f64> {
            let mut t = *s;
            t.mm = s.pp;
            self.0.eval(&t)
        }
    }
}

fn random_symmetric<const D: usize>(rng: &mut ChaCha8Rng, scale: f64) -> Mat<D> {
    let m = Mat::<D>::from_fn(|_, _| rng.random_range(-scale..scale));
    (m + m.transpose()) * 0.5
}

fn random_point<const D: usize>(rng: &mut ChaCha8Rng, problem: &dyn Problem<D>) -> Point<D> {
    let d = problem.domain();
    Point::<D>::from_fn(|i, _| rng.random_range(d.lo[i]..d.hi[i]))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub operator: String,
    pub problem: String,
    pub samples: usize,
    pub seed: u64,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Samples random quadratics `u`, evaluates the one-sided Hessians from stencil
/// values of `u`, and compares the operator with `F(D²u, ∇u, u, x)`.
pub fn audit_consistency<const D: usize>(
    op: &dyn NumericalOperator<D>,
    problem: &dyn Problem<D>,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<ConsistencyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stencil = Stencil::<D>::new();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let p = random_symmetric::<D>(&mut rng, 2.0);
        let b = Vector::<D>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let c = rng.random_range(-1.0..1.0);
        let x0 = random_point(&mut rng, problem);
        let h: [f64; D] = std::array::from_fn(|_| rng.random_range(0.05..0.2));
        let u = |y: &Vector<D>| 0.5 * (y.transpose() * p * y)[(0, 0)] + b.dot(y) + c;
        let slots: Vec<f64> = stencil
            .offsets()
            .iter()
            .map(|o| {
                let y = x0 + Vector::<D>::from_fn(|i, _| o[i] as f64 * h[i]);
                u(&y)
            })
            .collect();
        let bundle = HessianBundle::from_slots(&slots, &h);
        let grad = central_gradient_from_slots(&slots, &h);
        let s = UnreducedState::from_bundle(&bundle, grad, slots[0], x0, None);
        let exact_grad = p * x0 + b;
        let want = problem.eval(&p, &exact_grad, u(&x0), &x0);
        worst = worst.max((op.eval(&s)? - want).abs());
    }
    Ok(ConsistencyReport {
        operator: op.name(),
        problem: problem.name().to_string(),
        samples,
        seed,
        max_deviation: worst,
        tolerance,
        passed: worst <= tolerance,
    })
}

/// Random unreduced state scattered around a random symmetric base Hessian.
pub fn random_unreduced<const D: usize>(rng: &mut ChaCha8Rng, problem: &dyn Problem<D>, scale: f64) -> UnreducedState<D> {
    let base = random_symmetric::<D>(rng, scale);
    let mut jitter = || base + Mat::<D>::from_fn(|_, _| rng.random_range(-0.3..0.3));
    let (pp, pm, mp, mm) = (jitter(), jitter(), jitter(), jitter());
    let q = Vector::<D>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let v = rng.random_range(-1.0..1.0);
    let x = random_point(rng, problem);
    UnreducedState { pp, pm, mp, mm, q, v, x, shared: None }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedFormReport {
    pub operator: String,
    pub problem: String,
    pub samples: usize,
    pub seed: u64,
    pub max_change: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Shifts `P^{++}` by `+E`, `P^{--}` by `-E` (and the mixed pair likewise) and
/// measures the change of the operator.
pub fn audit_reduced_form<const D: usize>(
    op: &dyn NumericalOperator<D>,
    problem: &dyn Problem<D>,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<ReducedFormReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let s = random_unreduced(&mut rng, problem, 2.0);
        let e = Mat::<D>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let f0 = op.eval(&s)?;
        let mut t = s;
        t.pp += e;
        t.mm -= e;
        worst = worst.max((op.eval(&t)? - f0).abs());
        let mut t = s;
        t.pm += e;
        t.mp -= e;
        worst = worst.max((op.eval(&t)? - f0).abs());
    }
    Ok(ReducedFormReport {
        operator: op.name(),
        problem: problem.name().to_string(),
        samples,
        seed,
        max_change: worst,
        tolerance,
        passed: worst <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GmonoMode {
    /// Derivatives of the operator with its weights frozen at the reference state.
    Linearized,
    /// Derivatives of the full operator, weights included.
    Exact,
}

#[derive(Debug, Clone, Serialize)]
pub struct GmonoViolation {
    pub node: usize,
    pub slot: String,
    pub entry: (usize, usize),
    pub derivative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GmonoReport {
    pub mode: GmonoMode,
    pub nodes: usize,
    /// Largest amount by which a derivative has the wrong sign (0 when none do).
    pub worst_violation: f64,
    pub location: Option<GmonoViolation>,
    pub tolerance: f64,
    pub passed: bool,
}

const GMONO_TOL: f64 = 1e-8;

/// Worst sign violation of the slot derivatives at one state.
pub fn gmono_at_state<const D: usize>(
    op: &dyn NumericalOperator<D>,
    s: &UnreducedState<D>,
    at: &UnreducedState<D>,
    mode: GmonoMode,
) -> Result<(f64, Option<(String, (usize, usize), f64)>)> {
    let f = |t: &UnreducedState<D>| match mode {
        GmonoMode::Linearized => op.eval_frozen(t, at),
        GmonoMode::Exact => op.eval(t),
    };
    let mut worst = 0.0f64;
    let mut loc = None;
    let mut note = |viol: f64, name: &str, entry: (usize, usize), d: f64| {
        if viol > worst {
            worst = viol;
            loc = Some((name.to_string(), entry, d));
        }
    };
    // (name, selector, required sign)
    type Sel<const D: usize> = fn(&mut UnreducedState<D>) -> &mut Mat<D>;
    let slots: [(&str, Sel<D>, f64); 4] = [
        ("++", |t| &mut t.pp, 1.0),
        ("--", |t| &mut t.mm, 1.0),
        ("+-", |t| &mut t.pm, -1.0),
        ("-+", |t| &mut t.mp, -1.0),
    ];
    for (name, sel, sign) in slots {
        for i in 0..D {
            for j in 0..D {
                let mut base = *s;
                let value = sel(&mut base)[(i, j)];
                let step = 1e-6 * (1.0 + value.abs());
                let mut up = *s;
                sel(&mut up)[(i, j)] += step;
                let mut dn = *s;
                sel(&mut dn)[(i, j)] -= step;
                let d = (f(&up)? - f(&dn)?) / (2.0 * step);
                note(-(sign * d), name, (i, j), d);
            }
        }
    }
    let step = 1e-6 * (1.0 + s.v.abs());
    let (mut up, mut dn) = (*s, *s);
    up.v += step;
    dn.v -= step;
    let d = (f(&up)? - f(&dn)?) / (2.0 * step);
    note(-d, "v", (0, 0), d);
    Ok((worst, loc))
}

/// Checks g-monotonicity at every interior node of the iterate `u`.
///
/// In [`GmonoMode::Linearized`] the weights are frozen at `weights_at` (or at `u`
/// itself when `None`).
pub fn audit_gmonotonicity<const D: usize>(
    scheme: &Scheme<'_, D>,
    u: &[f64],
    mode: GmonoMode,
    weights_at: Option<&[f64]>,
) -> Result<GmonoReport> {
    let op = FhatOperator::new(scheme.problem(), *scheme.params());
    let state = |n: usize, w: &[f64]| {
        let (b, g, slots) = scheme.local(n, w);
        UnreducedState::from_bundle(&b, g, slots[0], *scheme.coords(n), scheme.shared_source(n))
    };
    let mut worst = 0.0f64;
    let mut location = None;
    for n in 0..scheme.num_unknowns() {
        let s = state(n, u);
        let at = state(n, weights_at.unwrap_or(u));
        let (viol, loc) = gmono_at_state(&op, &s, &at, mode)?;
        if viol > worst {
            worst = viol;
            location = loc.map(|(slot, entry, derivative)| GmonoViolation { node: n, slot, entry, derivative });
        }
    }
    Ok(GmonoReport {
        mode,
        nodes: scheme.num_unknowns(),
        worst_violation: worst,
        location,
        tolerance: GMONO_TOL,
        passed: worst <= GMONO_TOL,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticReport {
    pub operator: String,
    pub samples: usize,
    pub lambda: f64,
    /// Smallest `c` with `-(∂F̂/∂P̃ + ∂F̂/∂P̂) ⪰ c λ I` over the samples.
    pub worst_c: f64,
    pub passed: bool,
}

/// Estimates `∂F̂/∂P̃ + ∂F̂/∂P̂` at each state (weights frozen) and reports the worst
/// ellipticity ratio against `λ` (taken as 1 when the problem supplies none).
pub fn audit_elliptic_compat<const D: usize>(
    op: &dyn NumericalOperator<D>,
    problem: &dyn Problem<D>,
    states: &[UnreducedState<D>],
) -> Result<EllipticReport> {
    let lambda = problem.ellipticity().filter(|l| *l > 0.0).unwrap_or(1.0);
    let mut worst = f64::INFINITY;
    for s in states {
        let mut sum = DMatrix::<f64>::zeros(D, D);
        for i in 0..D {
            for j in 0..D {
                let step = 1e-6;
                let shifted = |e: f64| -> Result<f64> {
                    let mut t = *s;
                    t.pp[(i, j)] += e;
                    t.mm[(i, j)] += e;
                    t.pm[(i, j)] += e;
                    t.mp[(i, j)] += e;
                    op.eval_frozen(&t, s)
                };
                sum[(i, j)] = (shifted(step)? - shifted(-step)?) / (2.0 * step);
            }
        }
        let sym = -(&sum + sum.transpose()) * 0.5;
        worst = worst.min(sym.symmetric_eigen().eigenvalues.min() / lambda);
    }
    Ok(EllipticReport { operator: op.name(), samples: states.len(), lambda, worst_c: worst, passed: worst > 0.0 })
}
