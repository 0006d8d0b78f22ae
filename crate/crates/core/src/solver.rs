//! Damped Newton solver for the discrete p-curl-curl problem in mixed form:
//!
//! ```text
//! (flux(curl u), curl v) + (G phi, v)_M = (S, v)   for all free-edge v
//! (u, G psi)_M                          = 0        for all interior psi
//! ```
//!
//! Each Newton step solves the symmetric indefinite saddle system with a
//! registered Krylov method and preconditioner. Steps are damped by
//! backtracking on the convex energy `J(u) = sum_T vol W(curl u) - (S, u)`,
//! so the energy decreases within every (p, eps) stage. Large exponents are
//! reached by continuation in p (starting from the linear problem) and in
//! the regularization length eps.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::assembly::{energy_density, EdgeField, FeSpace, NodalField, PExponent};
use crate::error::{Error, Result};
use crate::helmholtz::project_div_free;
use crate::linalg::krylov::strategies::{linear_solvers, LinearSolver};
use crate::linalg::krylov::KrylovOptions;
use crate::linalg::precond::{
    BlockDiagonalPreconditioner, IdentityPreconditioner, InnerCgPreconditioner, JacobiPreconditioner,
    Preconditioner,
};
use crate::linalg::vector::{axpy, dot, norm};
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::mesh::Point;
use crate::registry::{Named, Registry};
use crate::whitney::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub p_target: f64,
    /// Exponents visited in order; empty means the default doubling path
    /// from 2 to `p_target`.
    pub p_schedule: Vec<f64>,
    /// Regularization lengths relative to the curl scale, strictly decreasing.
    pub eps_schedule: Vec<f64>,
    /// Relative KKT residual at which a stage is converged.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub linear_solver: String,
    pub preconditioner: String,
    pub linear_tol: f64,
    pub linear_maxit: usize,
    /// CG tolerance of Helmholtz projections (load and initial guess).
    pub projection_tol: f64,
}

impl SolveConfig {
    pub fn new(p_target: f64) -> Self {
        Self {
            p_target,
            p_schedule: Vec::new(),
            eps_schedule: (2..=8).map(|k| 10f64.powi(-k)).collect(),
            newton_tol: 1e-9,
            max_newton: 50,
            max_halvings: 30,
            linear_solver: "minres".into(),
            preconditioner: "jacobi".into(),
            linear_tol: 1e-11,
            linear_maxit: 20_000,
            projection_tol: 1e-12,
        }
    }

    /// Exponents of the continuation path, ending at `p_target`.
    pub fn stages(&self) -> Vec<f64> {
        if !self.p_schedule.is_empty() {
            return self.p_schedule.clone();
        }
        let mut out = vec![2.0];
        let mut p = 2.0;
        while p * 2.0 < self.p_target {
            p *= 2.0;
            out.push(p);
        }
        if self.p_target > 2.0 {
            out.push(self.p_target);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        PExponent::new(self.p_target, 0.0)?;
        let stages = self.stages();
        for &p in &stages {
            PExponent::new(p, 0.0)?;
        }
        if stages.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(format!("p schedule must be nondecreasing: {stages:?}")));
        }
        if stages.last() != Some(&self.p_target) {
            return Err(Error::Config(format!(
                "p schedule {stages:?} must end at p_target = {}",
                self.p_target
            )));
        }
        if self.eps_schedule.is_empty() {
            return Err(Error::Config("eps schedule must be nonempty".into()));
        }
        if self.eps_schedule.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("eps schedule entries must be positive".into()));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!(
                "eps schedule must be strictly decreasing: {:?}",
                self.eps_schedule
            )));
        }
        for (name, v) in [
            ("newton_tol", self.newton_tol),
            ("linear_tol", self.linear_tol),
            ("projection_tol", self.projection_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.max_newton == 0 || self.linear_maxit == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        let solver = linear_solvers().get(&self.linear_solver)?;
        if !solver.handles_indefinite() {
            return Err(Error::Config(format!(
                "linear solver '{}' cannot handle the indefinite saddle system",
                self.linear_solver
            )));
        }
        saddle_preconditioners().get(&self.preconditioner)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub p: f64,
    /// Absolute regularization length used in this stage.
    pub eps: f64,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// One row per Newton iterate (including the stage's starting point).
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub stage: usize,
    pub p: f64,
    pub eps: f64,
    pub newton_iter: usize,
    /// KKT residual relative to the load norm.
    pub residual: f64,
    pub energy: f64,
    /// `||G^T M u|| / ||u||_M` (0 for the zero field).
    pub constraint: f64,
    pub step_length: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    pub history: Vec<IterateRecord>,
    /// Norm of the gradient part removed from the load.
    pub discarded_load_norm: f64,
    pub load_norm: f64,
    /// RMS curl of the linear solution, the scale for eps.
    pub curl_scale: f64,
    pub linear_iterations: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    /// Final relative KKT residual.
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.residual)
    }

    /// True when every stage has non-increasing energy up to rounding
    /// (`slack` relative to the stage's starting energy magnitude).
    pub fn energy_monotone(&self, slack: f64) -> bool {
        (0..self.stages.len()).all(|s| {
            let e: Vec<f64> = self.history.iter().filter(|r| r.stage == s).map(|r| r.energy).collect();
            let scale = e.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
            e.windows(2).all(|w| w[1] <= w[0] + slack * scale)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Converged,
    /// Solve aborted; fields hold the last accepted iterate.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: EdgeField,
    pub multiplier: NodalField,
    pub report: SolveReport,
    pub status: SolveStatus,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Right-hand side of the problem.
pub enum Load<'a> {
    /// Analytic source integrated against the edge basis.
    Analytic {
        source: &'a dyn Fn(&Point) -> Vec3,
        quad_order: usize,
    },
    /// Edge field `s`; the load functional is `M s`.
    Field(&'a EdgeField),
}

impl Load<'_> {
    pub fn assemble(&self, space: &FeSpace<'_>) -> Result<Vec<f64>> {
        match self {
            Load::Analytic { source, quad_order } => space.assemble_load(*source, *quad_order),
            Load::Field(s) => Ok(space.mass().mul_vec(&space.restrict(s))),
        }
    }
}

/// `J(u) = sum_T vol W(curl u) - load . u` with the regularized density.
pub fn energy(space: &FeSpace<'_>, u_free: &[f64], load: &[f64], p: &PExponent) -> f64 {
    let curls = space.tet_curls(u_free);
    let bulk: f64 = curls
        .iter()
        .enumerate()
        .map(|(t, g)| space.geometry(t).volume * energy_density(g, p))
        .sum();
    bulk - dot(load, u_free)
}

/// `|bulk| + |load . u|`, the magnitude against which energy rounding is judged.
fn energy_magnitude(space: &FeSpace<'_>, u_free: &[f64], load: &[f64], p: &PExponent) -> f64 {
    let curls = space.tet_curls(u_free);
    let bulk: f64 = curls
        .iter()
        .enumerate()
        .map(|(t, g)| space.geometry(t).volume * energy_density(g, p))
        .sum();
    bulk.abs() + dot(load, u_free).abs()
}

/// Removes the discrete-gradient part of a load functional:
/// `f0 = f - M G (G^T M G)^{-1} G^T f`, so that `G^T f0 = 0`.
pub fn project_load(space: &FeSpace<'_>, load: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    let rhs = space.gradient().mul_transpose_vec(load);
    if norm(&rhs) == 0.0 {
        return Ok((load.to_vec(), 0.0));
    }
    let lap = space.laplacian();
    let opts = KrylovOptions {
        tol,
        max_iter: 10 * lap.rows().max(100),
    };
    let (phi, rep) = crate::linalg::cg(lap, &rhs, None, &JacobiPreconditioner::new(&lap.diagonal()), &opts);
    if !rep.converged {
        return Err(Error::LinearSolve {
            solver: "cg (load projection)".into(),
            iterations: rep.iterations,
            residual: rep.relative_residual,
        });
    }
    let removed = space.mass_gradient().mul_vec(&phi);
    let projected: Vec<f64> = load.iter().zip(&removed).map(|(f, r)| f - r).collect();
    Ok((projected, norm(&removed)))
}

/// Builds a preconditioner for `[[J, B], [B^T, 0]]` with `B = M G`.
pub trait SaddlePreconditioner: Named + Send + Sync {
    fn build(&self, space: &FeSpace<'_>, jacobian: &SparseMatrix) -> Box<dyn Preconditioner>;
}

/// No preconditioning.
pub struct IdentitySaddle;

/// Block Jacobi: `diag(J + g M)` on edges and `diag(G^T M G) / g` on
/// vertices. With `J G = 0`, the exact blocks `J + g M` and `G^T M G / g`
/// form an ideal block-diagonal preconditioner for every `g > 0`; `g`
/// balances the trace of `J` against that of `M`.
pub struct JacobiSaddle;

/// The same blocks as [`JacobiSaddle`], inverted by inner CG.
pub struct BlockSaddle;

fn balance(space: &FeSpace<'_>, jacobian: &SparseMatrix) -> f64 {
    let tj: f64 = jacobian.diagonal().iter().sum();
    let tm: f64 = space.mass().diagonal().iter().sum();
    if tj > 0.0 && tm > 0.0 {
        tj / tm
    } else {
        1.0
    }
}

impl Named for IdentitySaddle {
    fn name(&self) -> &str {
        "identity"
    }
}

impl Named for JacobiSaddle {
    fn name(&self) -> &str {
        "jacobi"
    }
}

impl Named for BlockSaddle {
    fn name(&self) -> &str {
        "block"
    }
}

impl SaddlePreconditioner for IdentitySaddle {
    fn build(&self, _: &FeSpace<'_>, _: &SparseMatrix) -> Box<dyn Preconditioner> {
        Box::new(IdentityPreconditioner)
    }
}

impl SaddlePreconditioner for JacobiSaddle {
    fn build(&self, space: &FeSpace<'_>, jacobian: &SparseMatrix) -> Box<dyn Preconditioner> {
        let g = balance(space, jacobian);
        let mut diag: Vec<f64> = jacobian
            .diagonal()
            .iter()
            .zip(space.mass().diagonal())
            .map(|(j, m)| j + g * m)
            .collect();
        diag.extend(space.laplacian().diagonal().iter().map(|d| d / g));
        Box::new(JacobiPreconditioner::new(&diag))
    }
}

impl SaddlePreconditioner for BlockSaddle {
    fn build(&self, space: &FeSpace<'_>, jacobian: &SparseMatrix) -> Box<dyn Preconditioner> {
        let g = balance(space, jacobian);
        let ne = space.num_free_edges();
        let nv = space.num_interior_vertices();
        let inner = KrylovOptions {
            tol: 1e-13,
            max_iter: 5_000,
        };
        Box::new(BlockDiagonalPreconditioner::new(vec![
            (
                0..ne,
                Box::new(InnerCgPreconditioner::new(jacobian.add_scaled(g, space.mass()), inner))
                    as Box<dyn Preconditioner>,
            ),
            (
                ne..ne + nv,
                Box::new(InnerCgPreconditioner::new(space.laplacian().scale(1.0 / g), inner)),
            ),
        ]))
    }
}

pub fn saddle_preconditioners() -> Registry<dyn SaddlePreconditioner> {
    let mut reg: Registry<dyn SaddlePreconditioner> = Registry::new("preconditioner");
    reg.register(Arc::new(IdentitySaddle));
    reg.register(Arc::new(JacobiSaddle));
    reg.register(Arc::new(BlockSaddle));
    reg
}

struct Newton<'s, 'm> {
    space: &'s FeSpace<'m>,
    config: &'s SolveConfig,
    load: Vec<f64>,
    reference: f64,
    solver: Arc<dyn LinearSolver>,
    precond: Arc<dyn SaddlePreconditioner>,
    constraint_block: Vec<(usize, usize, f64)>,
    report: SolveReport,
}

struct Iterate {
    u: Vec<f64>,
    phi: Vec<f64>,
}

enum StageOutcome {
    Converged,
    Failed(String),
}

impl Newton<'_, '_> {
    fn kkt(&self, it: &Iterate, p: &PExponent) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let mut r = self.space.assemble_residual(&it.u, &self.load, p)?;
        axpy(1.0, &self.space.mass_gradient().mul_vec(&it.phi), &mut r);
        let c = self.space.constraint(&it.u);
        let res = (dot(&r, &r) + dot(&c, &c)).sqrt() / self.reference;
        Ok((r, c, res))
    }

    fn constraint_ratio(&self, u: &[f64], c: &[f64]) -> f64 {
        let m = self.space.mass_norm(u);
        if m > 0.0 {
            norm(c) / m
        } else {
            0.0
        }
    }

    fn saddle_matrix(&self, jacobian: &SparseMatrix) -> SparseMatrix {
        let n = self.space.num_free_edges() + self.space.num_interior_vertices();
        let mut b = TripletBuilder::with_capacity(n, n, jacobian.nnz() + self.constraint_block.len());
        for (r, c, v) in jacobian.triplets() {
            b.push(r, c, v);
        }
        for &(r, c, v) in &self.constraint_block {
            b.push(r, c, v);
        }
        b.build()
    }

    fn stage(&mut self, it: &mut Iterate, p: &PExponent, stage: usize) -> Result<StageOutcome> {
        let ne = self.space.num_free_edges();
        let mut step_length = 0.0;
        for k in 0..=self.config.max_newton {
            let (r, c, res) = self.kkt(it, p)?;
            let e0 = energy(self.space, &it.u, &self.load, p);
            self.report.history.push(IterateRecord {
                stage,
                p: p.p,
                eps: p.eps,
                newton_iter: k,
                residual: res,
                energy: e0,
                constraint: self.constraint_ratio(&it.u, &c),
                step_length,
            });
            let finish = |conv: bool, report: &mut SolveReport| {
                report.stages.push(StageReport {
                    p: p.p,
                    eps: p.eps,
                    newton_iterations: k,
                    final_residual: res,
                    converged: conv,
                });
            };
            if res <= self.config.newton_tol {
                finish(true, &mut self.report);
                return Ok(StageOutcome::Converged);
            }
            if k == self.config.max_newton {
                finish(false, &mut self.report);
                return Ok(StageOutcome::Failed(
                    Error::NewtonStall {
                        p: p.p,
                        eps: p.eps,
                        residual: res,
                    }
                    .to_string(),
                ));
            }

            let jac = self.space.assemble_jacobian(&it.u, p);
            let a = self.saddle_matrix(&jac);
            let pre = self.precond.build(self.space, &jac);
            let rhs: Vec<f64> = r.iter().chain(&c).map(|x| -x).collect();
            let opts = KrylovOptions {
                tol: self.config.linear_tol,
                max_iter: self.config.linear_maxit,
            };
            let (step, lrep) = self.solver.solve(&a, &rhs, None, pre.as_ref(), &opts);
            self.report.linear_iterations += lrep.iterations;
            if !lrep.converged {
                finish(false, &mut self.report);
                return Err(Error::LinearSolve {
                    solver: self.solver.name().to_string(),
                    iterations: lrep.iterations,
                    residual: lrep.relative_residual,
                });
            }
            let (du, dphi) = step.split_at(ne);

            // energy gradient is the residual without the multiplier term
            let grad = self.space.assemble_residual(&it.u, &self.load, p)?;
            let slope = dot(&grad, du);
            let trial = |alpha: f64| -> Vec<f64> {
                let mut u = it.u.clone();
                axpy(alpha, du, &mut u);
                u
            };
            // Energy differences below this level are rounding noise. There
            // the Armijo test is meaningless, so a step is accepted when it
            // keeps the energy within the noise and reduces the KKT residual.
            let noise = 1e3 * f64::EPSILON * energy_magnitude(self.space, &it.u, &self.load, p);
            let mut accepted = None;
            let mut alpha = 1.0;
            if slope < 0.0 {
                for _ in 0..=self.config.max_halvings {
                    let u = trial(alpha);
                    let e = energy(self.space, &u, &self.load, p);
                    if e <= e0 + 1e-4 * alpha * slope && -alpha * slope > noise {
                        accepted = Some((alpha, u));
                        break;
                    }
                    if e <= e0 + noise && -alpha * slope <= noise {
                        let mut phi = it.phi.clone();
                        axpy(alpha, dphi, &mut phi);
                        let cand = Iterate { u, phi };
                        let (_, _, res1) = self.kkt(&cand, p)?;
                        if res1 < (1.0 - 1e-4 * alpha) * res {
                            accepted = Some((alpha, cand.u));
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
            }
            if accepted.is_none() {
                finish(false, &mut self.report);
                return Ok(StageOutcome::Failed(
                    Error::LineSearch {
                        p: p.p,
                        eps: p.eps,
                        step: k,
                        reason: format!(
                            "no acceptable step after {} halvings (slope {slope:e})",
                            self.config.max_halvings
                        ),
                    }
                    .to_string(),
                ));
            }
            let (alpha, u) = accepted.expect("step accepted");
            it.u = u;
            axpy(alpha, dphi, &mut it.phi);
            step_length = alpha;
        }
        unreachable!("loop returns on its last iteration")
    }
}

/// Solves from the zero initial guess.
pub fn solve(space: &FeSpace<'_>, load: &Load<'_>, config: &SolveConfig) -> Result<Solution> {
    solve_from(space, load, config, None)
}

/// Solves starting the first continuation stage from `initial` (projected
/// onto the discretely divergence-free subspace first).
///
/// Configuration and assembly errors are returned as `Err`; a solve that
/// starts but cannot finish returns `Ok` with [`SolveStatus::Failed`] and
/// the last accepted iterate.
pub fn solve_from(
    space: &FeSpace<'_>,
    load: &Load<'_>,
    config: &SolveConfig,
    initial: Option<&EdgeField>,
) -> Result<Solution> {
    let start = Instant::now();
    config.validate()?;
    let raw = load.assemble(space)?;
    let (projected, discarded) = project_load(space, &raw, config.projection_tol)?;
    let load_norm = norm(&projected);

    let ne = space.num_free_edges();
    let nv = space.num_interior_vertices();
    let mut it = Iterate {
        u: vec![0.0; ne],
        phi: vec![0.0; nv],
    };
    if let Some(u0) = initial {
        if u0.0.len() != space.mesh.num_edges() {
            return Err(Error::Dimension {
                expected: space.mesh.num_edges(),
                got: u0.0.len(),
            });
        }
        if !u0.satisfies_boundary(space.mesh) {
            return Err(Error::Boundary("initial guess".into()));
        }
        it.u = project_div_free(space, &space.restrict(u0), config.projection_tol)?.div_free;
    }

    let mut report = SolveReport {
        discarded_load_norm: discarded,
        load_norm,
        ..SolveReport::default()
    };
    // a load that is a discrete gradient up to the projection tolerance has
    // the zero field as its unique solution
    if load_norm <= 10.0 * config.projection_tol * norm(&raw) || load_norm == 0.0 {
        report.wall_time = start.elapsed();
        return Ok(Solution {
            u: EdgeField::zeros(space.mesh),
            multiplier: NodalField::zeros(space.mesh),
            report,
            status: SolveStatus::Converged,
        });
    }

    let mut constraint_block = Vec::new();
    for (r, c, v) in space.mass_gradient().triplets() {
        constraint_block.push((r, ne + c, v));
        constraint_block.push((ne + c, r, v));
    }
    let mut newton = Newton {
        space,
        config,
        load: projected,
        reference: load_norm.max(f64::MIN_POSITIVE),
        solver: linear_solvers().get(&config.linear_solver)?,
        precond: saddle_preconditioners().get(&config.preconditioner)?,
        constraint_block,
        report,
    };

    let stages = config.stages();
    let volume = space.mesh.domain.volume();
    let rms_curl = |u: &[f64]| space.lp_norm_curl(u, 2.0) / volume.sqrt();
    let mut curl_scale = None;
    if stages[0] != 2.0 {
        // scale estimate from an auxiliary linear solve
        let mut aux = Iterate {
            u: vec![0.0; ne],
            phi: vec![0.0; nv],
        };
        let saved = std::mem::take(&mut newton.report.history);
        let saved_stages = std::mem::take(&mut newton.report.stages);
        let outcome = newton.stage(&mut aux, &PExponent::linear(), 0)?;
        newton.report.history = saved;
        newton.report.stages = saved_stages;
        if let StageOutcome::Failed(msg) = outcome {
            return Ok(failed(space, it, newton.report, start, msg));
        }
        curl_scale = Some(rms_curl(&aux.u));
    }

    let mut stage_index = 0;
    for &p in &stages {
        let eps_values: Vec<f64> = if p == 2.0 {
            vec![0.0]
        } else {
            let c2 = *curl_scale.get_or_insert_with(|| rms_curl(&it.u));
            let scale = c2.powf(1.0 / (p - 1.0));
            config.eps_schedule.iter().map(|e| e * scale).collect()
        };
        for eps in eps_values {
            let exponent = PExponent::new(p, eps)?;
            match newton.stage(&mut it, &exponent, stage_index)? {
                StageOutcome::Converged => {}
                StageOutcome::Failed(msg) => return Ok(failed(space, it, newton.report, start, msg)),
            }
            stage_index += 1;
        }
        if p == 2.0 && curl_scale.is_none() {
            curl_scale = Some(rms_curl(&it.u));
        }
    }
    let mut report = newton.report;
    report.curl_scale = curl_scale.unwrap_or(0.0);
    report.wall_time = start.elapsed();
    Ok(Solution {
        u: space.extend(&it.u),
        multiplier: space.extend_nodal(&it.phi),
        report,
        status: SolveStatus::Converged,
    })
}

fn failed(space: &FeSpace<'_>, it: Iterate, mut report: SolveReport, start: Instant, msg: String) -> Solution {
    report.wall_time = start.elapsed();
    Solution {
        u: space.extend(&it.u),
        multiplier: space.extend_nodal(&it.phi),
        report,
        status: SolveStatus::Failed(msg),
    }
}
