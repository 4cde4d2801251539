//! The numerical operator `F̂_{γ,σ}`, its residual over a grid and its Jacobian.
//!
//! At an interior node
//! `F̂ = F(D̄²U, ∇̄U, U, x) + (M + γI + σ1) : (D̃²U - D̂²U)` with
//! `M_ij = ½ |∂F/∂P_ij|` evaluated at `(D̄²U, ∇̄U, U, x)`. Problems given as a
//! minimum over controls are discretised control by control and the minimum is
//! taken afterwards.

mod audit;

pub use audit::{
    audit_consistency, audit_elliptic_compat, audit_gmonotonicity, audit_reduced_form, corrupted, gmono_at_state,
    random_unreduced, ConsistencyReport, EllipticReport, FhatOperator, GmonoMode, GmonoReport, GmonoViolation,
    NumericalOperator, ReducedFormReport, UnreducedState,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd_ops::{central_gradient_from_slots, EliminatedStencil, HessianBundle, Mat, Stencil, StencilWeights, Vector};
use crate::grid::{Grid, GridFunction, NodeClass, Point};
use crate::problems::Problem;
use crate::sparse::SparseOperator;

/// Choice of the nonlinear part of the moment weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentMode<const D: usize> {
    /// `½ |∂F/∂P|` at the current state.
    Auto,
    /// A given constant weight in place of `½ |∂F/∂P|`.
    Fixed(#[serde(with = "mat_serde")] Mat<D>),
}

mod mat_serde {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(m: &Mat<D>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..D).map(|i| (0..D).map(|j| m[(i, j)]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(d: De) -> Result<Mat<D>, De::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        if rows.len() != D || rows.iter().any(|r| r.len() != D) {
            return Err(serde::de::Error::custom(format!("expected a {D}x{D} matrix")));
        }
        Ok(Mat::<D>::from_fn(|i, j| rows[i][j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams<const D: usize> {
    pub gamma: f64,
    pub sigma: f64,
    pub moment: MomentMode<D>,
    /// Skip the `σ ≥ 0, γ + σ ≥ 0` check.
    pub allow_unsafe: bool,
}

impl<const D: usize> SchemeParams<D> {
    pub fn new(gamma: f64, sigma: f64) -> Self {
        Self { gamma, sigma, moment: MomentMode::Auto, allow_unsafe: false }
    }

    pub fn with_moment(mut self, moment: MomentMode<D>) -> Self {
        self.moment = moment;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || !self.sigma.is_finite() {
            return Err(Error::InvalidParams("gamma and sigma must be finite".into()));
        }
        if self.allow_unsafe {
            return Ok(());
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParams(format!("sigma = {} must be nonnegative", self.sigma)));
        }
        if self.gamma + self.sigma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma + sigma = {} must be nonnegative",
                self.gamma + self.sigma
            )));
        }
        Ok(())
    }

    /// `γI + σ1`.
    pub fn shift(&self) -> Mat<D> {
        Mat::<D>::identity() * self.gamma + Mat::<D>::from_element(self.sigma)
    }
}

/// Quantities held fixed when the scheme is linearised at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frozen<const D: usize> {
    /// Full moment weight `M + γI + σ1`.
    pub weight: Mat<D>,
    /// Active control for problems defined by a minimum.
    pub control: Option<usize>,
}

/// Result of one point evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeValue<const D: usize> {
    pub value: f64,
    pub frozen: Frozen<D>,
}

/// Local arguments of the scheme at a node.
#[derive(Debug, Clone, Copy)]
pub struct LocalState<'x, const D: usize> {
    pub hess: &'x HessianBundle<D>,
    pub grad: &'x Vector<D>,
    pub v: f64,
    pub x: &'x Point<D>,
    /// `x`-dependent source shared by every control, if the problem has controls.
    pub shared: Option<f64>,
}

fn abs_half<const D: usize>(m: &Mat<D>) -> Mat<D> {
    m.abs() * 0.5
}

/// Evaluates `F̂` from local arguments; `frozen` replaces the state-dependent
/// weight and control when given.
pub fn evaluate_local<const D: usize>(
    problem: &dyn Problem<D>,
    params: &SchemeParams<D>,
    s: &LocalState<'_, D>,
    frozen: Option<&Frozen<D>>,
) -> Result<NodeValue<D>> {
    let diff = s.hess.moment_difference();
    let shift = params.shift();
    let out = if let Some(family) = problem.controls() {
        let shared = match s.shared {
            Some(v) => v,
            None => family.shared_source(s.x),
        };
        let weight_of = |k: usize| match params.moment {
            MomentMode::Auto => abs_half(&family.diffusion(k)) + shift,
            MomentMode::Fixed(w) => w + shift,
        };
        let value_of = |k: usize| {
            let a = family.diffusion(k);
            -a.component_mul(&s.hess.dbar).sum() + family.reaction(k) * s.v - family.control_source(k) - shared
                + weight_of(k).component_mul(&diff).sum()
        };
        let k = match frozen.and_then(|f| f.control) {
            Some(k) => k,
            None => {
                if family.is_empty() {
                    return Err(Error::InvalidProblem("empty control family".into()));
                }
                let mut best = (f64::INFINITY, 0usize);
                for k in 0..family.len() {
                    let val = value_of(k);
                    if val < best.0 {
                        best = (val, k);
                    }
                }
                best.1
            }
        };
        let weight = match frozen {
            Some(f) => f.weight,
            None => weight_of(k),
        };
        let a = family.diffusion(k);
        let value = -a.component_mul(&s.hess.dbar).sum() + family.reaction(k) * s.v - family.control_source(k) - shared
            + weight.component_mul(&diff).sum();
        NodeValue { value, frozen: Frozen { weight, control: Some(k) } }
    } else {
        let f = problem.eval(&s.hess.dbar, s.grad, s.v, s.x);
        let weight = match (frozen, params.moment) {
            (Some(fz), _) => fz.weight,
            (None, MomentMode::Fixed(w)) => w + shift,
            (None, MomentMode::Auto) => {
                let d = problem
                    .partials(&s.hess.dbar, s.grad, s.v, s.x)
                    .ok_or_else(|| Error::MissingPartials(problem.name().to_string()))?;
                abs_half(&d.dp) + shift
            }
        };
        NodeValue { value: f + weight.component_mul(&diff).sum(), frozen: Frozen { weight, control: None } }
    };
    if !out.value.is_finite() {
        return Err(Error::ProblemEval { x: s.x.iter().copied().collect(), value: out.value });
    }
    Ok(out)
}

/// Residual of the scheme at every interior node.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub values: Vec<f64>,
    /// `max |U - g|` on boundary nodes; zero because boundary data is substituted.
    pub boundary_misfit: f64,
    /// Active control per node, for problems defined by a minimum.
    pub controls: Option<Vec<usize>>,
}

impl Residual {
    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `F̂_{γ,σ}` assembled over a grid with boundary data and ghosts eliminated.
pub struct Scheme<'a, const D: usize> {
    grid: &'a Grid<D>,
    problem: &'a dyn Problem<D>,
    params: SchemeParams<D>,
    stencil: EliminatedStencil<D>,
    weights: StencilWeights<D>,
    coords: Vec<Point<D>>,
    shared: Option<Vec<f64>>,
    aux: Option<Vec<f64>>,
}

impl<'a, const D: usize> Scheme<'a, D> {
    pub fn new(grid: &'a Grid<D>, problem: &'a dyn Problem<D>, params: SchemeParams<D>) -> Result<Self> {
        Self::with_aux(grid, problem, params, None)
    }

    /// `aux` gives the auxiliary target `Δ_h U` per flat mesh id (zero when `None`).
    pub fn with_aux(grid: &'a Grid<D>, problem: &'a dyn Problem<D>, params: SchemeParams<D>, aux: Option<Vec<f64>>) -> Result<Self> {
        params.validate()?;
        if let Some(a) = &aux {
            if a.len() != grid.mesh_len() {
                return Err(Error::DimensionMismatch { expected: grid.mesh_len(), got: a.len() });
            }
        }
        let stencil = EliminatedStencil::new(grid, |x| problem.boundary(x), aux.as_deref());
        let coords: Vec<Point<D>> = grid.interior_ids().iter().map(|&k| grid.coords(k)).collect();
        let shared = problem
            .controls()
            .map(|family| coords.par_iter().map(|x| family.shared_source(x)).collect());
        Ok(Self { grid, problem, params, stencil, weights: StencilWeights::new(&grid.spacings()), coords, shared, aux })
    }

    pub fn grid(&self) -> &'a Grid<D> {
        self.grid
    }

    pub fn problem(&self) -> &'a dyn Problem<D> {
        self.problem
    }

    pub fn params(&self) -> &SchemeParams<D> {
        &self.params
    }

    pub fn num_unknowns(&self) -> usize {
        self.grid.num_unknowns()
    }

    /// Same grid and data with different `(γ, σ)`.
    pub fn with_params(&self, params: SchemeParams<D>) -> Result<Scheme<'a, D>> {
        params.validate()?;
        Ok(Scheme {
            grid: self.grid,
            problem: self.problem,
            params,
            stencil: self.stencil.clone(),
            weights: self.weights.clone(),
            coords: self.coords.clone(),
            shared: self.shared.clone(),
            aux: self.aux.clone(),
        })
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.num_unknowns() {
            return Err(Error::DimensionMismatch { expected: self.num_unknowns(), got: u.len() });
        }
        Ok(())
    }

    /// Hessians, gradient, value and slot values of node `n`.
    pub fn local(&self, n: usize, u: &[f64]) -> (HessianBundle<D>, Vector<D>, Vec<f64>) {
        let v = self.stencil.values(n, u);
        let h = self.grid.spacings();
        (HessianBundle::from_slots(&v, &h), central_gradient_from_slots(&v, &h), v)
    }

    pub fn coords(&self, n: usize) -> &Point<D> {
        &self.coords[n]
    }

    pub fn shared_source(&self, n: usize) -> Option<f64> {
        self.shared.as_ref().map(|s| s[n])
    }

    pub fn node_value(&self, n: usize, u: &[f64], frozen: Option<&Frozen<D>>) -> Result<NodeValue<D>> {
        let (hess, grad, slots) = self.local(n, u);
        let state = LocalState { hess: &hess, grad: &grad, v: slots[0], x: &self.coords[n], shared: self.shared_source(n) };
        evaluate_local(self.problem, &self.params, &state, frozen)
    }

    fn evaluate_all(&self, u: &[f64], frozen: Option<&[Frozen<D>]>) -> Result<Vec<NodeValue<D>>> {
        self.check_len(u)?;
        (0..self.num_unknowns())
            .into_par_iter()
            .map(|n| self.node_value(n, u, frozen.map(|f| &f[n])))
            .collect()
    }

    pub fn residual(&self, u: &[f64]) -> Result<Residual> {
        let vals = self.evaluate_all(u, None)?;
        Ok(self.pack(vals))
    }

    /// Residual with weights and controls held at `frozen`.
    pub fn residual_frozen(&self, u: &[f64], frozen: &[Frozen<D>]) -> Result<Residual> {
        if frozen.len() != self.num_unknowns() {
            return Err(Error::DimensionMismatch { expected: self.num_unknowns(), got: frozen.len() });
        }
        let vals = self.evaluate_all(u, Some(frozen))?;
        Ok(self.pack(vals))
    }

    fn pack(&self, vals: Vec<NodeValue<D>>) -> Residual {
        let controls = self.problem.controls().map(|_| vals.iter().map(|v| v.frozen.control.unwrap_or(0)).collect());
        Residual { values: vals.iter().map(|v| v.value).collect(), boundary_misfit: 0.0, controls }
    }

    /// Weights and controls at `u`.
    pub fn linearization(&self, u: &[f64]) -> Result<Vec<Frozen<D>>> {
        Ok(self.evaluate_all(u, None)?.into_iter().map(|v| v.frozen).collect())
    }

    /// `∂ residual / ∂U` with the moment weight and active control frozen at `u`.
    pub fn jacobian(&self, u: &[f64]) -> Result<SparseOperator> {
        let frozen = self.linearization(u)?;
        self.jacobian_frozen(u, &frozen)
    }

    pub fn jacobian_frozen(&self, u: &[f64], frozen: &[Frozen<D>]) -> Result<SparseOperator> {
        self.check_len(u)?;
        let n = self.num_unknowns();
        let ns = self.weights.slots;
        let rows: Vec<Vec<(usize, usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|k| -> Result<Vec<(usize, usize, f64)>> {
                let row = self.slot_derivatives(k, u, &frozen[k])?;
                let mut t = Vec::with_capacity(ns);
                self.stencil.scatter(k, &row, &mut t);
                Ok(t)
            })
            .collect::<Result<_>>()?;
        let triplets: Vec<_> = rows.into_iter().flatten().collect();
        Ok(SparseOperator::from_triplets(n, n, &triplets))
    }

    /// `∂F̂/∂(slot value)` at node `k`, weights frozen.
    pub fn slot_derivatives(&self, k: usize, u: &[f64], frozen: &Frozen<D>) -> Result<Vec<f64>> {
        let ns = self.weights.slots;
        let (hess, grad, slots) = self.local(k, u);
        let (dp, dq, dv) = match (self.problem.controls(), frozen.control) {
            (Some(family), Some(c)) => (-family.diffusion(c), Vector::<D>::zeros(), family.reaction(c)),
            _ => {
                let d = self
                    .problem
                    .partials(&hess.dbar, &grad, slots[0], &self.coords[k])
                    .ok_or_else(|| Error::MissingPartials(self.problem.name().to_string()))?;
                (d.dp, d.dq, d.dv)
            }
        };
        let mut row = vec![0.0; ns];
        row[0] += dv;
        for i in 0..D {
            for j in 0..D {
                let (a, w) = (dp[(i, j)], frozen.weight[(i, j)]);
                let (bar, diff) = (&self.weights.bar[i * D + j], &self.weights.diff[i * D + j]);
                for s in 0..ns {
                    row[s] += a * bar[s] + w * diff[s];
                }
            }
            let g = &self.weights.grad[i];
            for s in 0..ns {
                row[s] += dq[i] * g[s];
            }
        }
        Ok(row)
    }

    /// Extended grid function with boundary data and auxiliary ghosts.
    pub fn to_grid_function(&self, u: &[f64]) -> Result<GridFunction<'a, D>> {
        self.check_len(u)?;
        let mut gf = GridFunction::zeros(self.grid);
        for (n, &k) in self.grid.interior_ids().iter().enumerate() {
            gf.values_mut()[k] = u[n];
        }
        gf.set_boundary(|x| self.problem.boundary(x));
        gf.apply_auxiliary(self.aux.as_deref());
        Ok(gf)
    }
}

/// `F̂` at an interior node of a grid function whose ghosts are already set.
pub fn eval_fhat<const D: usize>(
    u: &GridFunction<'_, D>,
    params: &SchemeParams<D>,
    problem: &dyn Problem<D>,
    node: usize,
) -> Result<f64> {
    let grid = u.grid();
    if grid.class(node) != NodeClass::Interior {
        return Err(Error::NotInterior { node });
    }
    let slots: Vec<f64> = Stencil::<D>::new()
        .offsets()
        .iter()
        .map(|o| {
            grid.neighbor(node, o)
                .map(|k| u.values()[k])
                .ok_or_else(|| Error::StencilOutOfRange { node, offset: o.to_vec() })
        })
        .collect::<Result<_>>()?;
    let h = grid.spacings();
    let hess = HessianBundle::from_slots(&slots, &h);
    let grad = central_gradient_from_slots(&slots, &h);
    let x = grid.coords(node);
    let state = LocalState { hess: &hess, grad: &grad, v: slots[0], x: &x, shared: None };
    Ok(evaluate_local(problem, params, &state, None)?.value)
}

/// Pointwise control minimisation at `node`: the minimum over sampled controls of
/// the per-control scheme and the first minimiser.
pub fn hjb_pointwise_min<const D: usize>(
    u: &GridFunction<'_, D>,
    node: usize,
    params: &SchemeParams<D>,
    problem: &dyn Problem<D>,
) -> Result<(f64, usize)> {
    if problem.controls().is_none() {
        return Err(Error::InvalidProblem(format!("'{}' has no control family", problem.name())));
    }
    let grid = u.grid();
    let slots: Vec<f64> = Stencil::<D>::new()
        .offsets()
        .iter()
        .map(|o| {
            grid.neighbor(node, o)
                .map(|k| u.values()[k])
                .ok_or_else(|| Error::StencilOutOfRange { node, offset: o.to_vec() })
        })
        .collect::<Result<_>>()?;
    let h = grid.spacings();
    let hess = HessianBundle::from_slots(&slots, &h);
    let grad = central_gradient_from_slots(&slots, &h);
    let x = grid.coords(node);
    let state = LocalState { hess: &hess, grad: &grad, v: slots[0], x: &x, shared: None };
    let out = evaluate_local(problem, params, &state, None)?;
    Ok((out.value, out.frozen.control.unwrap_or(0)))
}
