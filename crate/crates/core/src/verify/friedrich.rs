//! Discrete Friedrich constant `C_h = max ||u||_{L^p} / ||curl u||_{L^p}` over
//! discretely divergence-free fields with vanishing tangential trace.
//!
//! For `p = 2` this is `1 / sqrt(lambda_min)` of the pencil `(K, M)` on the
//! divergence-free subspace, found by shifted subspace iteration with a
//! projection after every solve. For `p > 2` the ratio is increased by
//! projected gradient ascent from the `p = 2` maximizer; the result is a
//! lower bound.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{FeSpace, PExponent};
use crate::error::{Error, Result};
use crate::helmholtz::project_div_free;
use crate::linalg::krylov::{cg, KrylovOptions};
use crate::linalg::precond::JacobiPreconditioner;
use crate::linalg::vector::{dot, scaled};
use crate::mesh::{build_box_mesh, Point};
use crate::whitney::{eval_basis, quadrature};

#[derive(Debug, Clone, PartialEq)]
pub struct FriedrichOptions {
    /// Relative change of the eigenvalue at which inverse iteration stops.
    pub eig_tol: f64,
    pub max_iter: usize,
    pub linear_tol: f64,
    /// Gradient-ascent steps for `p > 2`.
    pub ascent_iter: usize,
    pub quad_order: usize,
    pub seed: u64,
}

impl Default for FriedrichOptions {
    fn default() -> Self {
        Self {
            eig_tol: 1e-12,
            max_iter: 500,
            linear_tol: 1e-12,
            ascent_iter: 100,
            quad_order: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedrichReport {
    pub p: f64,
    pub divisions: Vec<usize>,
    pub h: Vec<f64>,
    pub estimates: Vec<f64>,
    /// Iterations per level (inverse iteration, plus ascent steps for p > 2).
    pub iterations: Vec<usize>,
    /// Richardson extrapolation of the last two levels assuming `O(h^2)`
    /// eigenvalue error (p = 2); the finest estimate otherwise.
    pub extrapolated: f64,
    /// Observed eigenvalue convergence order from the last three levels.
    pub observed_order: Option<f64>,
    /// True for p > 2, where estimates only bound the constant from below.
    pub lower_bound: bool,
}

impl FriedrichReport {
    /// Differences between consecutive estimates shrink.
    pub fn cauchy_decreasing(&self) -> bool {
        let d: Vec<f64> = self.estimates.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        d.windows(2).all(|w| w[1] <= w[0])
    }
}

/// M-orthonormalizes `block` in place (twice-repeated Gram-Schmidt),
/// dropping vectors that are dependent on earlier ones.
fn m_orthonormalize(space: &FeSpace<'_>, block: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut mout: Vec<Vec<f64>> = Vec::new();
    for mut v in block {
        let original = space.mass_norm(&v);
        for _ in 0..2 {
            for (q, mq) in out.iter().zip(&mout) {
                let c = dot(mq, &v);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nv = space.mass_norm(&v);
        if nv > 1e-10 * original && nv > 0.0 {
            let q = scaled(1.0 / nv, &v);
            mout.push(space.mass().mul_vec(&q));
            out.push(q);
        }
    }
    out
}

/// Smallest eigenvalue of `(K, M)` on the divergence-free subspace and its
/// eigenvector (free-edge coordinates, unit M-norm), by shifted subspace
/// iteration with Rayleigh-Ritz on a block of six vectors.
pub fn smallest_eigenpair(space: &FeSpace<'_>, opts: &FriedrichOptions) -> Result<(f64, Vec<f64>, usize)> {
    const BLOCK: usize = 6;
    let n = space.num_free_edges();
    if n == 0 || space.stiffness().nnz() == 0 {
        return Err(Error::InvalidMesh("no divergence-free edge fields on this mesh".into()));
    }
    let ext = space.mesh.domain.extents;
    let length = ext.x.max(ext.y).max(ext.z);
    let shifted = space.stiffness().add_scaled(1.0 / (length * length), space.mass());
    let pre = JacobiPreconditioner::new(&shifted.diagonal());
    let kopts = KrylovOptions {
        tol: opts.linear_tol,
        max_iter: 20 * n.max(100),
    };
    let project = |v: &[f64]| -> Result<Vec<f64>> { Ok(project_div_free(space, v, opts.linear_tol)?.div_free) };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block = Vec::new();
    for _ in 0..BLOCK.min(n) {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        block.push(project(&v)?);
    }
    let mut x = m_orthonormalize(space, block);
    if x.is_empty() {
        return Err(Error::InvalidMesh("no divergence-free edge fields on this mesh".into()));
    }
    let mut lambda = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut next = Vec::with_capacity(x.len());
        for v in &x {
            let (y, rep) = cg(&shifted, &space.mass().mul_vec(v), Some(v), &pre, &kopts);
            if !rep.converged {
                return Err(Error::LinearSolve {
                    solver: "cg (inverse iteration)".into(),
                    iterations: rep.iterations,
                    residual: rep.relative_residual,
                });
            }
            next.push(project(&y)?);
        }
        let y = m_orthonormalize(space, next);
        let k = y.len();
        let ky: Vec<Vec<f64>> = y.iter().map(|v| space.stiffness().mul_vec(v)).collect();
        let h = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        x = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (i, yi) in y.iter().enumerate() {
                    let w = eig.eigenvectors[(i, c)];
                    v.iter_mut().zip(yi).for_each(|(a, b)| *a += w * b);
                }
                v
            })
            .collect();
        let smallest = eig.eigenvalues[order[0]];
        if (smallest - lambda).abs() <= opts.eig_tol * smallest {
            let v = x.swap_remove(0);
            return Ok((smallest, v, it));
        }
        lambda = smallest;
    }
    Err(Error::Stagnation(format!(
        "inverse iteration did not settle in {} steps (lambda ~ {lambda:e})",
        opts.max_iter
    )))
}

/// `(||u||_p^p, d/du (1/p) ||u||_p^p)` by tet quadrature.
fn field_power(space: &FeSpace<'_>, u: &[f64], p: f64, order: usize) -> Result<(f64, Vec<f64>)> {
    let rule = quadrature(order)?;
    let full = space.extend(u);
    let mut total = 0.0;
    let mut grad_full = vec![0.0; space.mesh.num_edges()];
    for t in 0..space.mesh.num_tets() {
        let g = space.geometry(t);
        let te = &space.mesh.tet_edges[t];
        for (bary, w) in rule.iter() {
            let val = space.eval_field(&full, t, bary);
            let r = val.norm();
            let dv = w * g.volume;
            total += dv * r.powf(p);
            if r > 0.0 {
                let flux = val * r.powf(p - 2.0);
                let basis = eval_basis(g, bary);
                for k in 0..6 {
                    grad_full[te[k].edge] += dv * f64::from(te[k].sign) * flux.dot(&basis[k]);
                }
            }
        }
    }
    let grad = space.free_edges().iter().map(|&e| grad_full[e]).collect();
    Ok((total, grad))
}

fn log_ratio(space: &FeSpace<'_>, u: &[f64], p: f64, order: usize) -> Result<f64> {
    let (num, _) = field_power(space, u, p, order)?;
    let den = space.lp_norm_curl(u, p).powf(p);
    Ok((num.ln() - den.ln()) / p)
}

/// Projected gradient ascent on `log(||u||_p / ||curl u||_p)`.
fn ascend(space: &FeSpace<'_>, start: Vec<f64>, p: f64, opts: &FriedrichOptions) -> Result<(f64, usize)> {
    let exponent = PExponent::new(p, 0.0)?;
    let zero = vec![0.0; start.len()];
    let mass = space.mass();
    let mpre = JacobiPreconditioner::new(&mass.diagonal());
    let kopts = KrylovOptions {
        tol: opts.linear_tol,
        max_iter: 10 * start.len().max(100),
    };
    let mut u = start;
    let mut f = log_ratio(space, &u, p, opts.quad_order)?;
    let mut steps = 0;
    for _ in 0..opts.ascent_iter {
        let (num, gnum) = field_power(space, &u, p, opts.quad_order)?;
        let den = space.lp_norm_curl(&u, p).powf(p);
        let gden = space.assemble_residual(&u, &zero, &exponent)?;
        let grad: Vec<f64> = gnum.iter().zip(&gden).map(|(a, b)| a / num - b / den).collect();
        let (riesz, _) = cg(mass, &grad, None, &mpre, &kopts);
        let dir = project_div_free(space, &riesz, opts.linear_tol)?.div_free;
        let dn = space.mass_norm(&dir);
        if dn == 0.0 {
            break;
        }
        let mut alpha = 0.1 * space.mass_norm(&u) / dn;
        let mut improved = None;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
            let ft = log_ratio(space, &trial, p, opts.quad_order)?;
            if ft > f {
                improved = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, fnext)) = improved else { break };
        steps += 1;
        let gain = fnext - f;
        u = next;
        f = fnext;
        if gain <= 1e-10 {
            break;
        }
    }
    Ok((f.exp(), steps))
}

/// Estimates on `n x n x n` meshes of the box `[0, extents]` for each `n`
/// in `divisions`.
pub fn friedrich_constant(divisions: &[usize], extents: Point, p: f64, opts: &FriedrichOptions) -> Result<FriedrichReport> {
    PExponent::new(p, 0.0)?;
    if divisions.is_empty() {
        return Err(Error::Config("at least one mesh level is required".into()));
    }
    let mut report = FriedrichReport {
        p,
        divisions: divisions.to_vec(),
        h: Vec::new(),
        estimates: Vec::new(),
        iterations: Vec::new(),
        extrapolated: 0.0,
        observed_order: None,
        lower_bound: p > 2.0,
    };
    let mut eigenvalues = Vec::new();
    for &n in divisions {
        let mesh = build_box_mesh([n; 3], Point::zeros(), extents)?;
        let space = FeSpace::new(&mesh)?;
        let (lambda, x, iters) = smallest_eigenpair(&space, opts)?;
        eigenvalues.push(lambda);
        report.h.push(mesh.h());
        if p == 2.0 {
            report.estimates.push(1.0 / lambda.sqrt());
            report.iterations.push(iters);
        } else {
            let (c, steps) = ascend(&space, x, p, opts)?;
            report.estimates.push(c);
            report.iterations.push(iters + steps);
        }
    }
    let k = eigenvalues.len();
    report.extrapolated = *report.estimates.last().expect("nonempty");
    if p == 2.0 && k >= 2 {
        let (hc, hf) = (report.h[k - 2], report.h[k - 1]);
        let (lc, lf) = (eigenvalues[k - 2], eigenvalues[k - 1]);
        let lambda = (hc * hc * lf - hf * hf * lc) / (hc * hc - hf * hf);
        if lambda > 0.0 {
            report.extrapolated = 1.0 / lambda.sqrt();
        }
    }
    if k >= 3 {
        let d1 = eigenvalues[k - 3] - eigenvalues[k - 2];
        let d2 = eigenvalues[k - 2] - eigenvalues[k - 1];
        if d1 * d2 > 0.0 {
            report.observed_order = Some((d1 / d2).ln() / (report.h[k - 2] / report.h[k - 1]).ln());
        }
    }
    Ok(report)
}
