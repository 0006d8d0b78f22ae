//! Discrete Helmholtz splitting `u = u0 + G phi` of boundary-constrained edge
//! fields, with `u0` orthogonal to all discrete gradients in the edge mass
//! inner product (`G^T M u0 = 0`) and `phi` vanishing on the boundary.

use crate::assembly::{EdgeField, FeSpace, NodalField};
use crate::error::{Error, Result};
use crate::linalg::krylov::{cg, KrylovOptions, LinearSolveReport};
use crate::linalg::precond::JacobiPreconditioner;
use crate::linalg::vector::sub;
use crate::linalg::SparseMatrix;

/// Edge mass matrix on free edges (exact degree-2 quadrature).
pub fn edge_mass_matrix<'a>(space: &'a FeSpace<'_>) -> &'a SparseMatrix {
    space.mass()
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Discretely divergence-free part on free edges.
    pub div_free: Vec<f64>,
    /// Potential on interior vertices.
    pub potential: Vec<f64>,
    pub solve: LinearSolveReport,
}

/// Splits a free-edge vector. Solves `(G^T M G) phi = G^T M u` by
/// Jacobi-preconditioned CG to relative tolerance `tol`.
pub fn project_div_free(space: &FeSpace<'_>, u_free: &[f64], tol: f64) -> Result<Decomposition> {
    let rhs = space.constraint(u_free);
    let lap = space.laplacian();
    let opts = KrylovOptions {
        tol,
        max_iter: 10 * lap.rows().max(100),
    };
    let (phi, report) = cg(lap, &rhs, None, &JacobiPreconditioner::new(&lap.diagonal()), &opts);
    if !report.converged {
        return Err(Error::LinearSolve {
            solver: "cg (Helmholtz projection)".into(),
            iterations: report.iterations,
            residual: report.relative_residual,
        });
    }
    let grad = space.gradient().mul_vec(&phi);
    Ok(Decomposition {
        div_free: sub(u_free, &grad),
        potential: phi,
        solve: report,
    })
}

/// Full-field variant of [`project_div_free`].
pub fn project_field(space: &FeSpace<'_>, u: &EdgeField, tol: f64) -> Result<(EdgeField, NodalField)> {
    if !u.satisfies_boundary(space.mesh) {
        return Err(Error::Boundary(
            "nonzero circulation on a boundary edge".into(),
        ));
    }
    let d = project_div_free(space, &space.restrict(u), tol)?;
    Ok((space.extend(&d.div_free), space.extend_nodal(&d.potential)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector::{dot, norm};
    use crate::mesh::{build_box_mesh, Point};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> crate::mesh::Mesh {
        build_box_mesh([n; 3], Point::zeros(), Point::new(1.0, 2.0, 1.5)).unwrap()
    }

    #[test]
    fn pure_gradient_has_no_remainder() {
        let mesh = setup(3);
        let space = FeSpace::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi: Vec<f64> = (0..space.num_interior_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = space.gradient().mul_vec(&psi);
        let d = project_div_free(&space, &u, 1e-12).unwrap();
        assert!(norm(&d.div_free) <= 1e-10 * norm(&u));
        for (a, b) in d.potential.iter().zip(&psi) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn random_field_constraint_ratio() {
        let mesh = setup(3);
        let space = FeSpace::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..space.num_free_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = project_div_free(&space, &u, 1e-12).unwrap();
        let before = norm(&space.constraint(&u));
        let after = norm(&space.constraint(&d.div_free));
        assert!(after / before <= 1e-10, "{}", after / before);
        // curl is untouched
        let c0 = space.tet_curls(&u);
        let c1 = space.tet_curls(&d.div_free);
        for (a, b) in c0.iter().zip(&c1) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
        // M-orthogonal split
        let g = space.gradient().mul_vec(&d.potential);
        let total = space.mass_norm(&u).powi(2);
        let split = space.mass_norm(&d.div_free).powi(2) + space.mass_norm(&g).powi(2);
        assert!((total - split).abs() <= 1e-10 * total);
        let cross = dot(&d.div_free, &space.mass().mul_vec(&g));
        assert!(cross.abs() <= 1e-10 * total);
    }

    #[test]
    fn idempotent() {
        let mesh = setup(2);
        let space = FeSpace::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..space.num_free_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tol = 1e-12;
        let once = project_div_free(&space, &u, tol).unwrap();
        let twice = project_div_free(&space, &once.div_free, tol).unwrap();
        assert!(norm(&twice.potential) <= 10.0 * tol * norm(&once.potential).max(1.0));
        assert!(norm(&sub(&twice.div_free, &once.div_free)) <= 10.0 * tol * norm(&once.div_free));
    }

    #[test]
    fn boundary_violation_rejected() {
        let mesh = setup(2);
        let space = FeSpace::new(&mesh).unwrap();
        let mut u = EdgeField::zeros(&mesh);
        u.0[*mesh.boundary_edges.iter().next().unwrap()] = 1.0;
        assert!(matches!(project_field(&space, &u, 1e-12), Err(Error::Boundary(_))));
        let (u0, phi) = project_field(&space, &EdgeField::zeros(&mesh), 1e-12).unwrap();
        assert!(u0.0.iter().all(|&x| x == 0.0) && phi.0.iter().all(|&x| x == 0.0));
    }
}
