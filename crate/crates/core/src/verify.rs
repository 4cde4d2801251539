//! Convergence studies and empirical checks of the structural lemmas behind the scheme.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fd_ops::{assemble_first_central, assemble_hessian_blocks, assemble_wide_laplacian, HessianKind, Mat};
use crate::grid::{Domain, Grid, GridFunction, NodeClass, Point};
use crate::problems::{ConstantCoefficient, Jet, Problem};
use crate::scheme::{MomentMode, Scheme, SchemeParams};
use crate::solver::{solve, Solution, SolveConfig};
use crate::sparse::SparseOperator;

/// Default seed of every randomised check.
pub const DEFAULT_SEED: u64 = 42;

/// `max |U - u|` over interior and boundary nodes (ghosts excluded).
pub fn linf_error<const D: usize>(u: &GridFunction<'_, D>, exact: impl Fn(&Point<D>) -> f64) -> f64 {
    let grid = u.grid();
    (0..grid.mesh_len())
        .filter(|&k| grid.class(k) != NodeClass::Ghost)
        .map(|k| (u.values()[k] - exact(&grid.coords(k))).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMeasure {
    Axis,
    Diag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub counts: Vec<usize>,
    pub h_axis: f64,
    pub h_diag: f64,
    pub error_linf: f64,
    pub order: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual_linf: f64,
    pub wall_time: f64,
    /// Set when the mesh repeats the previous one, so no order is defined.
    pub duplicate: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub problem: String,
    pub params: SchemeParams<2>,
    pub schedule: Vec<(f64, f64)>,
    pub order_measure: OrderMeasure,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn new(problem: &str, params: SchemeParams<2>, schedule: Vec<(f64, f64)>, order_measure: OrderMeasure) -> Self {
        Self { problem: problem.to_string(), params, schedule, order_measure, rows: Vec::new() }
    }

    /// Appends a row and fills its order from the previous row.
    pub fn push(&mut self, mut row: ConvergenceRow) {
        row.order = None;
        row.duplicate = false;
        if let Some(prev) = self.rows.last() {
            let (h0, h1) = match self.order_measure {
                OrderMeasure::Axis => (prev.h_axis, row.h_axis),
                OrderMeasure::Diag => (prev.h_diag, row.h_diag),
            };
            if (h0 - h1).abs() <= 1e-14 * h0.abs() {
                row.duplicate = true;
            } else if prev.error_linf > 0.0 && row.error_linf > 0.0 {
                row.order = Some((prev.error_linf / row.error_linf).ln() / (h0 / h1).ln());
            }
        }
        self.rows.push(row);
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error_linf).collect()
    }

    pub fn orders(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.order).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h_axis,h_diag,error_linf,order\n");
        for r in &self.rows {
            let order = r.order.map(|o| format!("{o:.9e}")).unwrap_or_default();
            let _ = writeln!(out, "{:.9e},{:.9e},{:.9e},{}", r.h_axis, r.h_diag, r.error_linf, order);
        }
        out
    }
}

/// Solves on `grid` and returns the solution with its ℓ∞ error.
pub fn solve_on_grid<'a>(
    grid: &'a Grid<2>,
    problem: &'a dyn Problem<2>,
    params: SchemeParams<2>,
    config: &SolveConfig,
) -> Result<(Solution, f64)> {
    let scheme = Scheme::new(grid, problem, params)?;
    let sol = solve(&scheme, config)?;
    let gf = scheme.to_grid_function(&sol.u)?;
    let exact = |x: &Point<2>| problem.exact(x).unwrap_or(f64::NAN);
    let err = linf_error(&gf, exact);
    Ok((sol, err))
}

/// One solve per mesh; failures are recorded in their row and the table is still
/// returned.
pub fn run_convergence(
    problem: &dyn Problem<2>,
    params: SchemeParams<2>,
    meshes: &[[usize; 2]],
    config: &SolveConfig,
    order_measure: OrderMeasure,
) -> Result<ConvergenceTable> {
    run_convergence_with(problem, params, meshes, config, order_measure, |_, _| Ok(()))
}

/// [`run_convergence`] that hands every successful solve to `on_solution`.
pub fn run_convergence_with(
    problem: &dyn Problem<2>,
    params: SchemeParams<2>,
    meshes: &[[usize; 2]],
    config: &SolveConfig,
    order_measure: OrderMeasure,
    mut on_solution: impl FnMut(&Grid<2>, &Solution) -> Result<()>,
) -> Result<ConvergenceTable> {
    let mut table = ConvergenceTable::new(problem.name(), params, config.continuation.clone(), order_measure);
    let domain = problem.domain();
    for &counts in meshes {
        let start = Instant::now();
        let grid = Grid::new(domain, counts)?;
        let mut row = ConvergenceRow {
            counts: counts.to_vec(),
            h_axis: grid.h_axis(),
            h_diag: grid.h_diag(),
            error_linf: f64::NAN,
            order: None,
            converged: false,
            iterations: 0,
            residual_linf: f64::NAN,
            wall_time: 0.0,
            duplicate: false,
            message: None,
        };
        match solve_on_grid(&grid, problem, params, config) {
            Ok((sol, err)) => {
                on_solution(&grid, &sol)?;
                row.error_linf = err;
                row.converged = sol.report.converged;
                row.iterations = sol.report.iterations;
                row.residual_linf = sol.report.final_residual_linf;
                row.message = sol.report.message;
            }
            Err(e) => row.message = Some(e.to_string()),
        }
        row.wall_time = start.elapsed().as_secs_f64();
        table.push(row);
    }
    Ok(table)
}

/// Grids with `n × m` interior nodes on the unit square.
fn interior_grid(n: usize, m: usize) -> Result<Grid<2>> {
    Grid::new(Domain::cube(0.0, 1.0)?, [n + 2, m + 2])
}

fn dense_sym_min(a: &DMatrix<f64>) -> f64 {
    let s = (a + a.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.min()
}

fn asym(a: &DMatrix<f64>) -> f64 {
    let scale = a.abs().max().max(1.0);
    (a - a.transpose()).abs().max() / scale
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianLemmaRow {
    pub interior: [usize; 2],
    pub block: (usize, usize),
    pub asymmetry: f64,
    pub min_eig: f64,
    pub factor_error: f64,
    /// Smallest eigenvalues of `D̄ - D̂` and `D̃ - D̄`.
    pub chain_min_eig: (f64, f64),
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianLemmaReport {
    pub rows: Vec<HessianLemmaRow>,
    pub passed: bool,
}

/// `D̃_{ij,0} - D̂_{ij,0}` is symmetric positive definite, equals
/// `(h_i h_j / 2) D̂_{ii,0} D̂_{jj,0}`, and `D̂ < D̄ < D̃` blockwise.
pub fn verify_hessian_lemma(sizes: &[[usize; 2]]) -> Result<HessianLemmaReport> {
    let mut rows = Vec::new();
    for &[n, m] in sizes {
        let grid = interior_grid(n, m)?;
        let h = grid.spacings();
        let blocks = assemble_hessian_blocks(&grid);
        for i in 0..2 {
            for j in 0..2 {
                let hat = &blocks[&(i, j, HessianKind::Hat)];
                let tilde = &blocks[&(i, j, HessianKind::Tilde)];
                let diff = tilde.sub(hat).to_dense();
                let prod = blocks[&(i, i, HessianKind::Hat)]
                    .matmul(&blocks[&(j, j, HessianKind::Hat)])
                    .scale(0.5 * h[i] * h[j])
                    .to_dense();
                let scale = diff.abs().max().max(1.0);
                let factor_error = (&diff - &prod).abs().max() / scale;
                let bar = hat.axpby(0.5, tilde, 0.5).to_dense();
                let (hat, tilde) = (hat.to_dense(), tilde.to_dense());
                let chain = (dense_sym_min(&(&bar - &hat)), dense_sym_min(&(&tilde - &bar)));
                let asymmetry = asym(&diff);
                let min_eig = dense_sym_min(&diff);
                let passed = asymmetry <= 1e-12 && min_eig > 0.0 && factor_error <= 1e-12 && chain.0 > 0.0 && chain.1 > 0.0;
                rows.push(HessianLemmaRow {
                    interior: [n, m],
                    block: (i, j),
                    asymmetry,
                    min_eig,
                    factor_error,
                    chain_min_eig: chain,
                    passed,
                });
            }
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(HessianLemmaReport { rows, passed })
}

/// `L = -Σ a_ij D_i D_j + Σ a_ii B_i` assembled from its factors.
pub fn assemble_l(grid: &Grid<2>, a: &Mat<2>) -> SparseOperator {
    let n = grid.num_unknowns();
    let d: Vec<SparseOperator> = (0..2).map(|i| assemble_first_central(grid, i)).collect();
    let (_, b) = assemble_wide_laplacian(grid);
    let mut l = SparseOperator::from_triplets(n, n, &[]);
    for i in 0..2 {
        for j in 0..2 {
            l = l.sub(&d[i].matmul(&d[j]).scale(a[(i, j)]));
        }
        l = l.add(&b[i].scale(a[(i, i)]));
    }
    l
}

fn zero_problem(a: Mat<2>) -> Result<ConstantCoefficient<2>> {
    Ok(ConstantCoefficient::new(a, 0.0, Domain::cube(0.0, 1.0)?, |_| Jet {
        u: 0.0,
        grad: Default::default(),
        hess: Mat::<2>::zeros(),
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpdRow {
    pub interior: [usize; 2],
    pub a: [[f64; 2]; 2],
    pub lambda0: f64,
    pub asymmetry: f64,
    pub min_eig: f64,
    /// Smallest eigenvalue of `L - λ₀ M`.
    pub min_eig_minus_m: f64,
    /// `max |L - J|` against the scheme Jacobian with zero numerical moment.
    pub route_difference: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpdReport {
    pub rows: Vec<SpdRow>,
    pub passed: bool,
}

/// Symmetric positive definiteness of `L` and `L ⪰ λ₀ M` for constant SPD `A`.
pub fn verify_spd_l(coefficients: &[Mat<2>], sizes: &[[usize; 2]]) -> Result<SpdReport> {
    let mut rows = Vec::new();
    for a in coefficients {
        let lambda0 = {
            let s = DMatrix::from_row_slice(2, 2, &[a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]]);
            dense_sym_min(&s)
        };
        let problem = zero_problem(*a)?;
        for &[n, m] in sizes {
            let grid = interior_grid(n, m)?;
            let l = assemble_l(&grid, a).to_dense();
            let (mm, _) = assemble_wide_laplacian(&grid);
            let params = SchemeParams::new(0.0, 0.0).with_moment(MomentMode::Fixed(Mat::<2>::zeros()));
            let scheme = Scheme::new(&grid, &problem, params)?;
            let j = scheme.jacobian(&vec![0.0; grid.num_unknowns()])?.to_dense();
            let scale = l.abs().max().max(1.0);
            let route_difference = (&l - &j).abs().max() / scale;
            let asymmetry = asym(&l);
            let min_eig = dense_sym_min(&l);
            let min_eig_minus_m = dense_sym_min(&(&l - mm.to_dense() * lambda0));
            let passed = asymmetry <= 1e-12 && min_eig > 0.0 && min_eig_minus_m >= -1e-10 * scale && route_difference <= 1e-12;
            rows.push(SpdRow {
                interior: [n, m],
                a: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]],
                lambda0,
                asymmetry,
                min_eig,
                min_eig_minus_m,
                route_difference,
                passed,
            });
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(SpdReport { rows, passed })
}

/// Random symmetric positive definite 2×2 coefficient.
pub fn random_spd(rng: &mut ChaCha8Rng) -> Mat<2> {
    let g = Mat::<2>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    g * g.transpose() + Mat::<2>::identity() * 0.2
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetrizationReport {
    pub seed: u64,
    pub trials: usize,
    pub sizes: Vec<usize>,
    pub epsilons: Vec<f64>,
    /// Trials with `‖σI - FB‖₂ > σ`.
    pub plain_failures: usize,
    pub worst_plain_ratio: f64,
    /// The same bound in the norm `‖x‖_F = ‖R^{-*} x‖₂`, i.e. `‖σI - R B R^*‖₂ ≤ σ`.
    pub weighted_failures: usize,
    pub worst_weighted_ratio: f64,
    /// `B = 0` and `F = I` edge cases.
    pub edge_cases_passed: bool,
    pub passed: bool,
}

fn norm2(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// Random `B ≥ 0`, `F > 0`, `F = R^* R`, `σ = (1 + ε) λ_max(R B R^*)`: checks
/// `‖σI - FB‖₂ ≤ σ`, and the similarity-weighted version of the same bound.
pub fn verify_symmetrization(sizes: &[usize], trials: usize, seed: u64) -> Result<SymmetrizationReport> {
    let epsilons = vec![0.01, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut plain_failures, mut weighted_failures) = (0, 0);
    let (mut worst_plain, mut worst_weighted) = (0.0f64, 0.0f64);
    let mut edge = true;
    for &n in sizes {
        let eye = DMatrix::<f64>::identity(n, n);
        for _ in 0..trials {
            let rank = rng.random_range(1..=n);
            let g = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
            let b = &g * g.transpose();
            let hmat = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let f = &hmat * hmat.transpose() + &eye * 0.1;
            let r = Cholesky::new(f.clone()).expect("F is positive definite").l().transpose();
            let rbr = &r * &b * r.transpose();
            let lmax = rbr.clone().symmetric_eigen().eigenvalues.max();
            let fb = &f * &b;
            let mut plain_failed = false;
            let mut weighted_failed = false;
            for &eps in &epsilons {
                let sigma = (1.0 + eps) * lmax;
                let p = norm2(&(&eye * sigma - &fb)) / sigma;
                let w = norm2(&(&eye * sigma - &rbr)) / sigma;
                worst_plain = worst_plain.max(p);
                worst_weighted = worst_weighted.max(w);
                plain_failed |= p > 1.0 + 1e-12;
                weighted_failed |= w > 1.0 + 1e-12;
            }
            plain_failures += plain_failed as usize;
            weighted_failures += weighted_failed as usize;
            // F = I with the same B, and B = 0 with the same F
            let sigma = 1.01 * b.clone().symmetric_eigen().eigenvalues.max();
            edge &= norm2(&(&eye * sigma - &b)) <= sigma * (1.0 + 1e-12);
            edge &= (norm2(&(&eye * 2.0)) - 2.0).abs() <= 1e-12;
        }
    }
    Ok(SymmetrizationReport {
        seed,
        trials,
        sizes: sizes.to_vec(),
        epsilons,
        plain_failures,
        worst_plain_ratio: worst_plain,
        weighted_failures,
        worst_weighted_ratio: worst_weighted,
        edge_cases_passed: edge,
        passed: plain_failures == 0 && weighted_failures == 0 && edge,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionRow {
    pub interior: [usize; 2],
    pub rho_factor: f64,
    pub rho: f64,
    /// `‖I - ρL‖₂` for the linearised map.
    pub predicted: f64,
    /// Largest `‖M_ρU - M_ρV‖ / ‖U - V‖` over the trials.
    pub single_step: f64,
    /// Per-sweep growth of `‖M_ρ^k U - M_ρ^k V‖` over many sweeps.
    pub asymptotic: f64,
    pub contractive: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub seed: u64,
    pub rows: Vec<ContractionRow>,
    pub passed: bool,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Contraction of `M_ρ U = U - ρ F̂[U]` in ℓ² for a linear constant-coefficient
/// problem, with `ρ = factor / λ_max(L)`. A row passes when the measured behaviour
/// (contracting or not) agrees with `‖I - ρL‖₂` and the single-step ratio stays
/// below that bound.
pub fn verify_contraction(a: Mat<2>, sizes: &[[usize; 2]], rho_factors: &[f64], trials: usize, seed: u64) -> Result<ContractionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = ConstantCoefficient::new(a, 0.0, Domain::cube(0.0, 1.0)?, |x| Jet {
        u: x[0] * x[0] + x[1],
        grad: nalgebra::Vector2::new(2.0 * x[0], 1.0),
        hess: Mat::<2>::new(2.0, 0.0, 0.0, 0.0),
    });
    let mut rows = Vec::new();
    for &[n, m] in sizes {
        let grid = interior_grid(n, m)?;
        let scheme = Scheme::new(&grid, &problem, SchemeParams::new(0.0, 0.0))?;
        let k = grid.num_unknowns();
        let l = scheme.jacobian(&vec![0.0; k])?.to_dense();
        let lmax = l.complex_eigenvalues().iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
        for &factor in rho_factors {
            let rho = factor / lmax;
            let predicted = norm2(&(DMatrix::<f64>::identity(k, k) - &l * rho));
            let map = |u: &[f64]| -> Result<Vec<f64>> {
                let r = scheme.residual(u)?;
                Ok(u.iter().zip(&r.values).map(|(x, y)| x - rho * y).collect())
            };
            let mut single = 0.0f64;
            let mut asymptotic = 0.0f64;
            for _ in 0..trials {
                let mut u: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let d0 = l2(&u.iter().zip(&v).map(|(x, y)| x - y).collect::<Vec<_>>());
                let (mut uu, mut vv) = (map(&u)?, map(&v)?);
                let d1 = l2(&uu.iter().zip(&vv).map(|(x, y)| x - y).collect::<Vec<_>>());
                single = single.max(d1 / d0);
                let sweeps = 200;
                for _ in 1..sweeps {
                    u = uu;
                    v = vv;
                    uu = map(&u)?;
                    vv = map(&v)?;
                }
                let dk = l2(&uu.iter().zip(&vv).map(|(x, y)| x - y).collect::<Vec<_>>());
                asymptotic = asymptotic.max((dk / d0).powf(1.0 / sweeps as f64));
            }
            let contractive = predicted < 1.0;
            let passed = single <= predicted * (1.0 + 1e-9) && (asymptotic < 1.0) == contractive;
            rows.push(ContractionRow { interior: [n, m], rho_factor: factor, rho, predicted, single_step: single, asymptotic, contractive, passed });
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(ContractionReport { seed, rows, passed })
}

/// Every pair `n × m` with `n, m ∈ lo..=hi`.
pub fn size_range(lo: usize, hi: usize) -> Vec<[usize; 2]> {
    (lo..=hi).flat_map(|n| (lo..=hi).map(move |m| [n, m])).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaBattery {
    pub seed: u64,
    pub hessian: HessianLemmaReport,
    pub spd: SpdReport,
    pub symmetrization: SymmetrizationReport,
    pub contraction: Vec<ContractionReport>,
    pub wall_time: f64,
}

impl LemmaBattery {
    pub fn passed(&self) -> bool {
        self.hessian.passed && self.spd.passed && self.symmetrization.passed && self.contraction.iter().all(|c| c.passed)
    }
}

/// All lemma checks on interior grids `{2..8}²`, with `trials` random
/// symmetrization samples.
pub fn run_lemma_battery(seed: u64, trials: usize) -> Result<LemmaBattery> {
    let start = Instant::now();
    let sizes = size_range(2, 8);
    let hessian = verify_hessian_lemma(&sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefficients = [Mat::<2>::identity(), Mat::<2>::new(2.0, 1.0, 1.0, 2.0), random_spd(&mut rng), random_spd(&mut rng)];
    let spd = verify_spd_l(&coefficients, &sizes)?;
    let symmetrization = verify_symmetrization(&[8], trials, seed)?;
    let contraction = [Mat::<2>::identity(), Mat::<2>::new(2.0, 1.0, 1.0, 2.0)]
        .iter()
        .map(|a| verify_contraction(*a, &sizes, &[0.05, 1.0, 1.9, 3.0], 3, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(LemmaBattery { seed, hessian, spd, symmetrization, contraction, wall_time: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::MongeAmpere;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linf_error_examples() {
        let grid = interior_grid(6, 5).unwrap();
        let f = |x: &Point<2>| x[0].sin() + x[1];
        let mut u = GridFunction::sample(&grid, f);
        assert_eq!(linf_error(&u, f), 0.0);
        for v in u.values_mut() {
            *v += 0.25;
        }
        assert_abs_diff_eq!(linf_error(&u, f), 0.25, epsilon = 1e-15);
        // ghosts do not count
        let mut u = GridFunction::sample(&grid, f);
        let g = grid.ghost_ids()[0];
        u.values_mut()[g] += 10.0;
        assert_eq!(linf_error(&u, f), 0.0);
        // a sampled bump of size h² shows up at its peak
        let h2 = grid.h_axis().powi(2);
        let bump = |x: &Point<2>| h2 * (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
        let u = GridFunction::sample(&grid, |x| f(x) + bump(x));
        let want = (0..grid.mesh_len()).map(|k| bump(&grid.coords(k))).fold(0.0, f64::max);
        assert_abs_diff_eq!(linf_error(&u, f), want, epsilon = 1e-15);
    }

    fn row(h: f64, e: f64) -> ConvergenceRow {
        ConvergenceRow {
            counts: vec![],
            h_axis: h,
            h_diag: h * 2f64.sqrt(),
            error_linf: e,
            order: None,
            converged: true,
            iterations: 1,
            residual_linf: 0.0,
            wall_time: 0.0,
            duplicate: false,
            message: None,
        }
    }

    #[test]
    fn orders_and_duplicates() {
        let mut t = ConvergenceTable::new("x", SchemeParams::new(0.0, 0.0), vec![], OrderMeasure::Axis);
        t.push(row(0.1, 1e-2));
        t.push(row(0.05, 2.5e-3));
        t.push(row(0.05, 2.4e-3));
        assert_eq!(t.rows[0].order, None);
        assert_abs_diff_eq!(t.rows[1].order.unwrap(), 2.0, epsilon = 1e-12);
        assert!(t.rows[2].duplicate && t.rows[2].order.is_none());
        let csv = t.to_csv();
        assert!(csv.starts_with("h_axis,h_diag,error_linf,order\n"));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
        assert!(csv.contains("2.000000000e0"));
    }

    #[test]
    fn orders_are_scale_invariant() {
        let mk = |s: f64| {
            let mut t = ConvergenceTable::new("x", SchemeParams::new(0.0, 0.0), vec![], OrderMeasure::Diag);
            for (h, e) in [(0.2, 3e-2), (0.1, 8e-3), (0.05, 2.1e-3)] {
                t.push(row(h, s * e));
            }
            t.orders()
        };
        for (a, b) in mk(1.0).iter().zip(mk(37.0)) {
            match (a, b) {
                (Some(a), Some(b)) => assert_abs_diff_eq!(*a, b, epsilon = 1e-12),
                (None, None) => {}
                _ => panic!("order presence differs"),
            }
        }
    }

    #[test]
    fn small_monge_ampere_table() {
        let p = MongeAmpere::new();
        let cfg = SolveConfig { continuation: crate::solver::default_schedule("monge_ampere"), ..Default::default() };
        let t = run_convergence(&p, SchemeParams::new(0.0, 0.0), &[[6, 6], [12, 12]], &cfg, OrderMeasure::Diag).unwrap();
        assert!(t.rows.iter().all(|r| r.converged), "{:?}", t.rows);
        assert!(t.rows[1].error_linf < t.rows[0].error_linf);
    }

    #[test]
    fn hessian_lemma_small() {
        let r = verify_hessian_lemma(&[[2, 2], [4, 4], [3, 5]]).unwrap();
        assert!(r.passed, "{:?}", r.rows.iter().find(|r| !r.passed));
    }

    #[test]
    fn identity_coefficient_gives_m() {
        let grid = interior_grid(4, 5).unwrap();
        let (m, _) = assemble_wide_laplacian(&grid);
        let l = assemble_l(&grid, &Mat::<2>::identity());
        assert!(l.sub(&m).max_abs() < 1e-9);
        let r = verify_spd_l(&[Mat::<2>::new(2.0, 1.0, 1.0, 2.0)], &[[3, 3], [5, 4]]).unwrap();
        assert!(r.passed, "{:?}", r.rows);
    }

    #[test]
    fn symmetrization_weighted_bound_holds() {
        let r = verify_symmetrization(&[4, 8], 10, DEFAULT_SEED).unwrap();
        assert_eq!(r.weighted_failures, 0);
        assert!(r.edge_cases_passed);
    }

    #[test]
    fn plain_two_norm_bound_has_a_counterexample() {
        // F = diag(1, 100), B = 11ᵀ: σ = 1.01 λ_max(RBR*) but ‖σI - FB‖₂ > σ.
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 100.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = Cholesky::new(f.clone()).unwrap().l().transpose();
        let lmax = (&r * &b * r.transpose()).symmetric_eigen().eigenvalues.max();
        let sigma = 1.01 * lmax;
        assert!(norm2(&(DMatrix::identity(2, 2) * sigma - &f * &b)) > sigma);
    }

    #[test]
    fn contraction_detects_oversized_steps() {
        let r = verify_contraction(Mat::<2>::identity(), &[[5, 5]], &[1.9, 3.0], 2, DEFAULT_SEED).unwrap();
        assert!(r.passed, "{:?}", r.rows);
        assert!(r.rows[0].contractive && r.rows[0].asymptotic < 1.0);
        assert!(!r.rows[1].contractive && r.rows[1].asymptotic > 1.0);
    }
}
