//! Discrete fields, the nonlinear curl operator and its Jacobian, and the
//! linear blocks (mass, stiffness, gradient) that the solver couples.
//!
//! Vectors named `*_free` live on the free (interior) edges only; boundary
//! edge coefficients are pinned to zero, which is exactly `n x u = 0` for
//! Whitney elements. [`EdgeField`] and [`NodalField`] carry full-length
//! coefficient vectors.

use crate::error::{Error, Result};
use crate::linalg::krylov::{cg, KrylovOptions};
use crate::linalg::precond::JacobiPreconditioner;
use crate::linalg::vector::dot;
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::mesh::{Mesh, Point, LOCAL_EDGES};
use crate::whitney::{eval_basis, eval_curl, quadrature, TetGeometry, Vec3, EDGE_GAUSS};

/// Circulation coefficients over all mesh edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField(pub Vec<f64>);

/// Vertex values of a continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(pub Vec<f64>);

impl EdgeField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self(vec![0.0; mesh.num_edges()])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// True when every boundary-edge coefficient vanishes.
    pub fn satisfies_boundary(&self, mesh: &Mesh) -> bool {
        mesh.boundary_edges.iter().all(|&e| self.0[e] == 0.0)
    }
}

impl NodalField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self(vec![0.0; mesh.num_vertices()])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }
}

/// Exponent of the nonlinear flux together with its regularization length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PExponent {
    pub p: f64,
    pub q: f64,
    pub eps: f64,
}

impl PExponent {
    pub fn new(p: f64, eps: f64) -> Result<Self> {
        if !p.is_finite() || p < 2.0 {
            return Err(Error::InvalidExponent(format!(
                "p must satisfy 2 <= p < infinity, got {p}"
            )));
        }
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::InvalidExponent(format!("eps must be >= 0, got {eps}")));
        }
        Ok(Self {
            p,
            q: p / (p - 1.0),
            eps,
        })
    }

    pub fn linear() -> Self {
        Self { p: 2.0, q: 2.0, eps: 0.0 }
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        Self::new(self.p, eps)
    }
}

/// Regularized flux `(eps^2 + |g|^2)^((p-2)/2) g`. With `eps = 0` this is
/// `|g|^(p-2) g`, continuous at zero for `p >= 2`.
pub fn power_map(g: &Vec3, p: &PExponent) -> Vec3 {
    if p.p == 2.0 {
        return *g;
    }
    let s = p.eps * p.eps + g.norm_squared();
    if s == 0.0 {
        return Vec3::zeros();
    }
    g * s.powf(0.5 * (p.p - 2.0))
}

/// Derivative of [`power_map`]:
/// `s^((p-2)/2) I + (p-2) s^((p-4)/2) g g^T` with `s = eps^2 + |g|^2`.
/// Returns the zero matrix at the degenerate point `s = 0, p > 2`.
pub fn power_map_derivative(g: &Vec3, p: &PExponent) -> nalgebra::Matrix3<f64> {
    if p.p == 2.0 {
        return nalgebra::Matrix3::identity();
    }
    let s = p.eps * p.eps + g.norm_squared();
    if s == 0.0 {
        return nalgebra::Matrix3::zeros();
    }
    let a = s.powf(0.5 * (p.p - 2.0));
    let b = (p.p - 2.0) * s.powf(0.5 * (p.p - 4.0));
    nalgebra::Matrix3::identity() * a + g * g.transpose() * b
}

/// Regularized energy density `(eps^2 + |g|^2)^(p/2) / p`, whose gradient
/// in `g` is [`power_map`].
pub fn energy_density(g: &Vec3, p: &PExponent) -> f64 {
    let s = p.eps * p.eps + g.norm_squared();
    if p.p == 2.0 {
        return 0.5 * s;
    }
    s.powf(0.5 * p.p) / p.p
}

/// Precomputed geometry, degree-of-freedom maps and linear blocks of the
/// lowest-order edge space with homogeneous tangential boundary condition.
#[derive(Debug, Clone)]
pub struct FeSpace<'m> {
    pub mesh: &'m Mesh,
    geometry: Vec<TetGeometry>,
    /// Signed curls of the six global basis functions restricted to each tet.
    local_curls: Vec<[Vec3; 6]>,
    free_edges: Vec<usize>,
    edge_to_free: Vec<Option<usize>>,
    interior_vertices: Vec<usize>,
    vertex_to_interior: Vec<Option<usize>>,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    gradient: SparseMatrix,
    mass_gradient: SparseMatrix,
    laplacian: SparseMatrix,
}

impl<'m> FeSpace<'m> {
    pub fn new(mesh: &'m Mesh) -> Result<Self> {
        let geometry = (0..mesh.num_tets())
            .map(|t| {
                TetGeometry::new(mesh.tet_points(t)).map_err(|e| match e {
                    Error::DegenerateTet { volume, .. } => Error::DegenerateTet { tet: t, volume },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let local_curls = geometry
            .iter()
            .zip(&mesh.tet_edges)
            .map(|(g, te)| {
                let c = eval_curl(g);
                std::array::from_fn(|k| c[k] * f64::from(te[k].sign))
            })
            .collect();

        let mut edge_to_free = vec![None; mesh.num_edges()];
        let mut free_edges = Vec::new();
        for e in 0..mesh.num_edges() {
            if !mesh.is_boundary_edge(e) {
                edge_to_free[e] = Some(free_edges.len());
                free_edges.push(e);
            }
        }
        let mut vertex_to_interior = vec![None; mesh.num_vertices()];
        let mut interior_vertices = Vec::new();
        for v in 0..mesh.num_vertices() {
            if !mesh.is_boundary_vertex(v) {
                vertex_to_interior[v] = Some(interior_vertices.len());
                interior_vertices.push(v);
            }
        }

        let mut space = Self {
            mesh,
            geometry,
            local_curls,
            free_edges,
            edge_to_free,
            interior_vertices,
            vertex_to_interior,
            mass: SparseMatrix::identity(0),
            stiffness: SparseMatrix::identity(0),
            gradient: SparseMatrix::identity(0),
            mass_gradient: SparseMatrix::identity(0),
            laplacian: SparseMatrix::identity(0),
        };
        space.mass = space.assemble_mass();
        space.stiffness = space.assemble_jacobian(&vec![0.0; space.num_free_edges()], &PExponent::linear());
        space.gradient = space.assemble_gradient_map();
        space.mass_gradient = space.mass.matmul(&space.gradient);
        space.laplacian = space.gradient.transpose().matmul(&space.mass_gradient);
        Ok(space)
    }

    pub fn num_free_edges(&self) -> usize {
        self.free_edges.len()
    }

    pub fn num_interior_vertices(&self) -> usize {
        self.interior_vertices.len()
    }

    pub fn free_edges(&self) -> &[usize] {
        &self.free_edges
    }

    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior_vertices
    }

    pub fn geometry(&self, t: usize) -> &TetGeometry {
        &self.geometry[t]
    }

    /// Edge mass matrix on free edges, `M_ef = int W_e . W_f`.
    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// Curl-curl stiffness on free edges, `K_ef = int curl W_e . curl W_f`.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// Discrete gradient from interior vertices to free edges.
    pub fn gradient(&self) -> &SparseMatrix {
        &self.gradient
    }

    /// `M G`, the constraint block of the saddle system.
    pub fn mass_gradient(&self) -> &SparseMatrix {
        &self.mass_gradient
    }

    /// Nodal Laplacian `G^T M G` with homogeneous Dirichlet vertices.
    pub fn laplacian(&self) -> &SparseMatrix {
        &self.laplacian
    }

    /// Free-edge coefficients of a full field (boundary entries dropped).
    pub fn restrict(&self, u: &EdgeField) -> Vec<f64> {
        self.free_edges.iter().map(|&e| u.0[e]).collect()
    }

    /// Full field from free-edge coefficients, zero on the boundary.
    pub fn extend(&self, u_free: &[f64]) -> EdgeField {
        let mut full = vec![0.0; self.mesh.num_edges()];
        for (&e, &v) in self.free_edges.iter().zip(u_free) {
            full[e] = v;
        }
        EdgeField(full)
    }

    pub fn restrict_nodal(&self, phi: &NodalField) -> Vec<f64> {
        self.interior_vertices.iter().map(|&v| phi.0[v]).collect()
    }

    pub fn extend_nodal(&self, phi_int: &[f64]) -> NodalField {
        let mut full = vec![0.0; self.mesh.num_vertices()];
        for (&v, &x) in self.interior_vertices.iter().zip(phi_int) {
            full[v] = x;
        }
        NodalField(full)
    }

    fn check_free(&self, u_free: &[f64]) -> Result<()> {
        if u_free.len() != self.num_free_edges() {
            return Err(Error::Dimension {
                expected: self.num_free_edges(),
                got: u_free.len(),
            });
        }
        if u_free.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("edge coefficients"));
        }
        Ok(())
    }

    /// Constant curl of a free-edge field on every tet.
    pub fn tet_curls(&self, u_free: &[f64]) -> Vec<Vec3> {
        self.local_curls
            .iter()
            .zip(&self.mesh.tet_edges)
            .map(|(curls, te)| {
                (0..6).fold(Vec3::zeros(), |acc, k| match self.edge_to_free[te[k].edge] {
                    Some(i) => acc + curls[k] * u_free[i],
                    None => acc,
                })
            })
            .collect()
    }

    /// Constant curl of a full field (boundary coefficients included).
    pub fn field_curls(&self, u: &EdgeField) -> Vec<Vec3> {
        self.local_curls
            .iter()
            .zip(&self.mesh.tet_edges)
            .map(|(curls, te)| (0..6).fold(Vec3::zeros(), |acc, k| acc + curls[k] * u.0[te[k].edge]))
            .collect()
    }

    /// Value of a full field at a barycentric point of tet `t`.
    pub fn eval_field(&self, u: &EdgeField, t: usize, bary: &[f64; 4]) -> Vec3 {
        let w = eval_basis(&self.geometry[t], bary);
        let te = &self.mesh.tet_edges[t];
        (0..6).fold(Vec3::zeros(), |acc, k| acc + w[k] * (f64::from(te[k].sign) * u.0[te[k].edge]))
    }

    /// `R_i = (flux(curl u), curl v_i) - load_i` over free edges. The flux
    /// term is piecewise constant, so the one-point evaluation is exact.
    pub fn assemble_residual(&self, u_free: &[f64], load: &[f64], p: &PExponent) -> Result<Vec<f64>> {
        self.check_free(u_free)?;
        if load.len() != self.num_free_edges() {
            return Err(Error::Dimension {
                expected: self.num_free_edges(),
                got: load.len(),
            });
        }
        let mut r: Vec<f64> = load.iter().map(|f| -f).collect();
        let curls_u = self.tet_curls(u_free);
        for (t, (curls, te)) in self.local_curls.iter().zip(&self.mesh.tet_edges).enumerate() {
            let flux = power_map(&curls_u[t], p) * self.geometry[t].volume;
            for k in 0..6 {
                if let Some(i) = self.edge_to_free[te[k].edge] {
                    r[i] += flux.dot(&curls[k]);
                }
            }
        }
        Ok(r)
    }

    /// Jacobian of [`Self::assemble_residual`]: symmetric positive
    /// semidefinite, and the curl-curl stiffness when `p = 2`.
    pub fn assemble_jacobian(&self, u_free: &[f64], p: &PExponent) -> SparseMatrix {
        let n = self.num_free_edges();
        let mut b = TripletBuilder::with_capacity(n, n, 36 * self.mesh.num_tets());
        let curls_u = self.tet_curls(u_free);
        for (t, (curls, te)) in self.local_curls.iter().zip(&self.mesh.tet_edges).enumerate() {
            let d = power_map_derivative(&curls_u[t], p) * self.geometry[t].volume;
            if d.iter().all(|&x| x == 0.0) {
                continue;
            }
            let dc: [Vec3; 6] = std::array::from_fn(|k| d * curls[k]);
            for a in 0..6 {
                let Some(i) = self.edge_to_free[te[a].edge] else { continue };
                for bb in 0..6 {
                    let Some(j) = self.edge_to_free[te[bb].edge] else { continue };
                    b.push(i, j, curls[a].dot(&dc[bb]));
                }
            }
        }
        b.build()
    }

    fn assemble_mass(&self) -> SparseMatrix {
        let n = self.num_free_edges();
        let rule = quadrature(2).expect("order 2 rule");
        let mut b = TripletBuilder::with_capacity(n, n, 36 * self.mesh.num_tets());
        for (t, g) in self.geometry.iter().enumerate() {
            let te = &self.mesh.tet_edges[t];
            let mut local = [[0.0; 6]; 6];
            for (bary, w) in rule.iter() {
                let basis = eval_basis(g, bary);
                for a in 0..6 {
                    for c in 0..6 {
                        local[a][c] += w * g.volume * basis[a].dot(&basis[c]);
                    }
                }
            }
            for a in 0..6 {
                let Some(i) = self.edge_to_free[te[a].edge] else { continue };
                for c in 0..6 {
                    let Some(j) = self.edge_to_free[te[c].edge] else { continue };
                    b.push(i, j, f64::from(te[a].sign * te[c].sign) * local[a][c]);
                }
            }
        }
        b.build()
    }

    fn assemble_gradient_map(&self) -> SparseMatrix {
        let mut b = TripletBuilder::new(self.num_free_edges(), self.num_interior_vertices());
        for (i, &e) in self.free_edges.iter().enumerate() {
            let (lo, hi) = self.mesh.edges[e];
            if let Some(c) = self.vertex_to_interior[hi] {
                b.push(i, c, 1.0);
            }
            if let Some(c) = self.vertex_to_interior[lo] {
                b.push(i, c, -1.0);
            }
        }
        b.build()
    }

    /// Discrete divergence constraint `G^T M u`.
    pub fn constraint(&self, u_free: &[f64]) -> Vec<f64> {
        self.mass_gradient.mul_transpose_vec(u_free)
    }

    /// `sqrt(u^T M u)`.
    pub fn mass_norm(&self, u_free: &[f64]) -> f64 {
        dot(u_free, &self.mass.mul_vec(u_free)).max(0.0).sqrt()
    }

    /// Load vector `(S, v_i)` over free edges by tet quadrature.
    pub fn assemble_load(&self, source: &dyn Fn(&Point) -> Vec3, order: usize) -> Result<Vec<f64>> {
        let rule = quadrature(order)?;
        let mut f = vec![0.0; self.num_free_edges()];
        for (t, g) in self.geometry.iter().enumerate() {
            let te = &self.mesh.tet_edges[t];
            let mut local = [0.0; 6];
            for (bary, w) in rule.iter() {
                let s = source(&g.point(bary));
                let basis = eval_basis(g, bary);
                for k in 0..6 {
                    local[k] += w * g.volume * s.dot(&basis[k]);
                }
            }
            for k in 0..6 {
                if let Some(i) = self.edge_to_free[te[k].edge] {
                    f[i] += f64::from(te[k].sign) * local[k];
                }
            }
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("load vector"));
        }
        Ok(f)
    }

    /// `||curl u||_{L^p}`, exact for piecewise-constant curls.
    pub fn lp_norm_curl(&self, u_free: &[f64], p: f64) -> f64 {
        let curls = self.tet_curls(u_free);
        lp_sum(curls.iter().zip(&self.geometry).map(|(c, g)| (g.volume, c.norm())), p)
    }

    /// `||u||_{L^p}` by tet quadrature.
    pub fn lp_norm_field(&self, u: &EdgeField, p: f64, order: usize) -> Result<f64> {
        let rule = quadrature(order)?;
        let mut acc = 0.0;
        for (t, g) in self.geometry.iter().enumerate() {
            for (bary, w) in rule.iter() {
                acc += w * g.volume * self.eval_field(u, t, bary).norm().powf(p);
            }
        }
        Ok(acc.powf(1.0 / p))
    }

    /// Dual-norm proxy `sqrt(r^T K^+ r)` for a functional `r` that vanishes on
    /// discrete gradients; one CG solve with the curl-curl stiffness.
    pub fn dual_norm_proxy(&self, r: &[f64], tol: f64) -> Result<f64> {
        let opts = KrylovOptions {
            tol,
            max_iter: 20 * self.num_free_edges().max(10),
        };
        let (y, rep) = cg(&self.stiffness, r, None, &JacobiPreconditioner::new(&self.stiffness.diagonal()), &opts);
        if !rep.converged {
            return Err(Error::LinearSolve {
                solver: "cg (dual norm)".into(),
                iterations: rep.iterations,
                residual: rep.relative_residual,
            });
        }
        Ok(dot(r, &y).max(0.0).sqrt())
    }
}

fn lp_sum(items: impl Iterator<Item = (f64, f64)>, p: f64) -> f64 {
    let s: f64 = items.map(|(vol, x)| vol * x.powf(p)).sum();
    s.powf(1.0 / p)
}

/// Edge interpolant: the circulation of `f` along every mesh edge.
pub fn interpolate(mesh: &Mesh, f: &dyn Fn(&Point) -> Vec3) -> EdgeField {
    EdgeField(
        mesh.edges
            .iter()
            .map(|&(lo, hi)| {
                let (a, b) = (mesh.vertices[lo], mesh.vertices[hi]);
                let t = b - a;
                EDGE_GAUSS.iter().map(|&(s, w)| w * f(&(a + t * s)).dot(&t)).sum()
            })
            .collect(),
    )
}

/// Discrete gradient over all vertices and all edges, `(G phi)_e = phi_hi - phi_lo`.
pub fn assemble_full_gradient(mesh: &Mesh) -> SparseMatrix {
    let mut b = TripletBuilder::new(mesh.num_edges(), mesh.num_vertices());
    for (e, &(lo, hi)) in mesh.edges.iter().enumerate() {
        b.push(e, hi, 1.0);
        b.push(e, lo, -1.0);
    }
    b.build()
}

/// Local 6x6 mass matrix of unsigned Whitney functions, from the closed form
/// `int l_i l_k = vol (1 + delta_ik) / 20`. Used as a test oracle.
pub fn whitney_mass_closed_form(g: &TetGeometry) -> [[f64; 6]; 6] {
    let m = |i: usize, k: usize| g.volume * if i == k { 2.0 } else { 1.0 } / 20.0;
    let gg = |j: usize, l: usize| g.grads[j].dot(&g.grads[l]);
    let mut out = [[0.0; 6]; 6];
    for (a, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
        for (c, &(k, l)) in LOCAL_EDGES.iter().enumerate() {
            out[a][c] = m(i, k) * gg(j, l) - m(i, l) * gg(j, k) - m(j, k) * gg(i, l) + m(j, l) * gg(i, k);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(n: usize) -> Mesh {
        build_box_mesh([n; 3], Point::zeros(), Point::new(1.0, 1.0, 1.0)).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn exponent_validation() {
        assert!(PExponent::new(1.5, 0.0).is_err());
        assert!(PExponent::new(f64::INFINITY, 0.0).is_err());
        assert!(PExponent::new(3.0, -1.0).is_err());
        let p = PExponent::new(4.0, 0.1).unwrap();
        assert!((1.0 / p.p + 1.0 / p.q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_map_examples() {
        let g = Vec3::new(3.0, 4.0, 0.0);
        let p2 = PExponent::new(2.0, 0.7).unwrap();
        assert_eq!(power_map(&g, &p2), g);
        let p4 = PExponent::new(4.0, 0.0).unwrap();
        assert_eq!(power_map(&g, &p4), Vec3::new(75.0, 100.0, 0.0));
        let p3 = PExponent::new(3.0, 0.0).unwrap();
        assert_eq!(power_map(&Vec3::zeros(), &p3), Vec3::zeros());
    }

    #[test]
    fn power_map_derivative_matches_differences() {
        let p = PExponent::new(3.5, 0.2).unwrap();
        let g = Vec3::new(0.3, -0.8, 0.5);
        let d = power_map_derivative(&g, &p);
        let h = 1e-6;
        for j in 0..3 {
            let mut e = Vec3::zeros();
            e[j] = h;
            let col = (power_map(&(g + e), &p) - power_map(&(g - e), &p)) / (2.0 * h);
            for i in 0..3 {
                assert!((col[i] - d[(i, j)]).abs() < 1e-8);
            }
        }
        // energy density gradient is the flux
        for j in 0..3 {
            let mut e = Vec3::zeros();
            e[j] = h;
            let fd = (energy_density(&(g + e), &p) - energy_density(&(g - e), &p)) / (2.0 * h);
            assert!((fd - power_map(&g, &p)[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_residual_cases() {
        let mesh = cube(2);
        let space = FeSpace::new(&mesh).unwrap();
        let n = space.num_free_edges();
        let p = PExponent::new(3.0, 0.0).unwrap();
        let r = space.assemble_residual(&vec![0.0; n], &vec![0.0; n], &p).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let load = random(&mut rng, n);
        let r = space.assemble_residual(&vec![0.0; n], &load, &p).unwrap();
        assert!(r.iter().zip(&load).all(|(r, f)| *r == -f));
    }

    #[test]
    fn residual_rejects_non_finite() {
        let mesh = cube(1);
        let space = FeSpace::new(&mesh).unwrap();
        let n = space.num_free_edges();
        let mut u = vec![0.0; n];
        u[0] = f64::NAN;
        assert!(matches!(
            space.assemble_residual(&u, &vec![0.0; n], &PExponent::linear()),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(n, 1);
        assert!(space.assemble_residual(&[0.0, 0.0], &vec![0.0; n], &PExponent::linear()).is_err());
    }

    #[test]
    fn linear_residual_is_stiffness_times_u() {
        let mesh = cube(3);
        let space = FeSpace::new(&mesh).unwrap();
        let n = space.num_free_edges();
        // independent stiffness assembly straight from the reference curls
        let mut b = TripletBuilder::new(n, n);
        for t in 0..mesh.num_tets() {
            let g = TetGeometry::new(mesh.tet_points(t)).unwrap();
            let curls = eval_curl(&g);
            let te = &mesh.tet_edges[t];
            for a in 0..6 {
                for c in 0..6 {
                    if let (Some(i), Some(j)) = (
                        space.free_edges.iter().position(|&e| e == te[a].edge),
                        space.free_edges.iter().position(|&e| e == te[c].edge),
                    ) {
                        let s = f64::from(te[a].sign * te[c].sign);
                        b.push(i, j, s * g.volume * curls[a].dot(&curls[c]));
                    }
                }
            }
        }
        let k = b.build();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random(&mut rng, n);
        let f = random(&mut rng, n);
        let r = space.assemble_residual(&u, &f, &PExponent::new(2.0, 0.3).unwrap()).unwrap();
        let ku = k.mul_vec(&u);
        for i in 0..n {
            assert!((r[i] - (ku[i] - f[i])).abs() < 1e-12);
        }
        assert!(k.relative_asymmetry() < 1e-14);
        assert!(space.stiffness().relative_asymmetry() < 1e-14);
        let jac = space.assemble_jacobian(&u, &PExponent::linear());
        let diff = jac.add_scaled(-1.0, &k);
        assert!(diff.triplets().all(|(_, _, v)| v.abs() < 1e-12));
    }

    #[test]
    fn jacobian_symmetric_and_degenerate() {
        let mesh = cube(2);
        let space = FeSpace::new(&mesh).unwrap();
        let n = space.num_free_edges();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random(&mut rng, n);
        let j = space.assemble_jacobian(&u, &PExponent::new(4.0, 0.1).unwrap());
        assert!(j.relative_asymmetry() < 1e-12);
        // a gradient field has zero curl: the eps = 0 Jacobian vanishes
        let phi = random(&mut rng, space.num_interior_vertices());
        let grad = space.gradient().mul_vec(&phi);
        let j0 = space.assemble_jacobian(&grad, &PExponent::new(4.0, 0.0).unwrap());
        assert!(j0.triplets().all(|(_, _, v)| v.abs() < 1e-20));
    }

    #[test]
    fn gradient_map_properties() {
        let mesh = cube(3);
        let space = FeSpace::new(&mesh).unwrap();
        assert_eq!(space.gradient().cols(), mesh.num_vertices() - mesh.boundary_vertices.len());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = random(&mut rng, space.num_interior_vertices());
        let g = space.gradient().mul_vec(&phi);
        let full = space.extend_nodal(&phi);
        for (i, &e) in space.free_edges().iter().enumerate() {
            let (lo, hi) = mesh.edges[e];
            assert!((g[i] - (full.0[hi] - full.0[lo])).abs() < 1e-15);
        }
        assert!(space.tet_curls(&g).iter().all(|c| c.norm() < 1e-12));
        let k = space.stiffness().mul_vec(&g);
        assert!(dot(&g, &k).abs() < 1e-12 * dot(&g, &g) * space.stiffness().norm_inf());
        // gradients carry no curl energy: R(G phi + u) = R(u) at p = 2, S = 0
        let u = random(&mut rng, space.num_free_edges());
        let zero = vec![0.0; space.num_free_edges()];
        let shifted: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a + b).collect();
        let r1 = space.assemble_residual(&u, &zero, &PExponent::linear()).unwrap();
        let r2 = space.assemble_residual(&shifted, &zero, &PExponent::linear()).unwrap();
        assert!(r1.iter().zip(&r2).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn affine_potential_gradient() {
        let mesh = cube(2);
        let space = FeSpace::new(&mesh).unwrap();
        let affine = |x: &Point| 1.0 + 2.0 * x.x - x.y + 0.5 * x.z;
        let phi: Vec<f64> = space.interior_vertices().iter().map(|&v| affine(&mesh.vertices[v])).collect();
        let g = space.gradient().mul_vec(&phi);
        for (i, &e) in space.free_edges().iter().enumerate() {
            let (lo, hi) = mesh.edges[e];
            let val = |v: usize| if mesh.is_boundary_vertex(v) { 0.0 } else { affine(&mesh.vertices[v]) };
            assert!((g[i] - (val(hi) - val(lo))).abs() < 1e-14);
        }
    }

    #[test]
    fn mass_matches_closed_form() {
        let g = TetGeometry::new([
            Point::zeros(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ])
        .unwrap();
        let oracle = whitney_mass_closed_form(&g);
        let rule = quadrature(2).unwrap();
        for a in 0..6 {
            for c in 0..6 {
                let q: f64 = rule
                    .iter()
                    .map(|(l, w)| {
                        let b = eval_basis(&g, l);
                        w * g.volume * b[a].dot(&b[c])
                    })
                    .sum();
                assert!((q - oracle[a][c]).abs() < 1e-15);
            }
        }
        // int |W_01|^2 on the reference tet, expanded by hand:
        // 1/60 |grad l1|^2 - 2/120 grad l0.grad l1 + 1/60 |grad l0|^2 = 1/12
        assert!((oracle[0][0] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn mass_is_spd_and_scales() {
        let m2 = cube(4);
        let m4 = cube(8);
        let s2 = FeSpace::new(&m2).unwrap();
        let s4 = FeSpace::new(&m4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = random(&mut rng, s4.num_free_edges());
            let mx = s4.mass().mul_vec(&x);
            assert!(dot(&x, &mx) > 0.0);
        }
        assert!(s4.mass().relative_asymmetry() < 1e-14);
        // entries are vol * |W|^2 ~ h^3 * h^-2; circulations of a unit field
        // carry the remaining factor h^2
        let ratio = s4.mass().norm_inf() / s2.mass().norm_inf();
        assert!((ratio - 0.5).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn load_of_constant_on_single_tet() {
        let mesh = build_box_mesh([2, 2, 2], Point::zeros(), Point::new(2.0, 2.0, 2.0)).unwrap();
        let space = FeSpace::new(&mesh).unwrap();
        let c = Vec3::new(0.4, -1.0, 2.0);
        assert!(space.assemble_load(&|_| Vec3::zeros(), 2).unwrap().iter().all(|&x| x == 0.0));
        // closed form on one tet: int W_ij = vol/4 (grad l_j - grad l_i)
        let g = TetGeometry::new(mesh.tet_points(0)).unwrap();
        let rule = quadrature(1).unwrap();
        for (k, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
            let q: f64 = rule.iter().map(|(l, w)| w * g.volume * c.dot(&eval_basis(&g, l)[k])).sum();
            let exact = g.volume / 4.0 * c.dot(&(g.grads[j] - g.grads[i]));
            assert!((q - exact).abs() < 1e-14);
        }
        // the load of a constant is M times its interpolant on free edges
        let f = space.assemble_load(&|_| c, 2).unwrap();
        let ic = space.restrict(&interpolate(&mesh, &|_| c));
        let full_interp = interpolate(&mesh, &|_| c);
        // boundary circulations of a constant do not vanish, so compare against
        // the full mass action computed element by element
        let mut expected = vec![0.0; space.num_free_edges()];
        for t in 0..mesh.num_tets() {
            let g = TetGeometry::new(mesh.tet_points(t)).unwrap();
            let te = &mesh.tet_edges[t];
            let local = whitney_mass_closed_form(&g);
            for a in 0..6 {
                let Some(i) = space.edge_to_free[te[a].edge] else { continue };
                for b in 0..6 {
                    let sb = f64::from(te[b].sign) * full_interp.0[te[b].edge];
                    expected[i] += f64::from(te[a].sign) * local[a][b] * sb;
                }
            }
        }
        assert_eq!(ic.len(), f.len());
        for i in 0..f.len() {
            assert!((f[i] - expected[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn load_self_convergence_across_orders() {
        let s = |x: &Point| Vec3::new((x.y).sin(), (x.x * x.z).cos(), (x.x + x.y).exp());
        let mut diffs = Vec::new();
        for n in [2, 4, 8] {
            let mesh = cube(n);
            let space = FeSpace::new(&mesh).unwrap();
            let f2 = space.assemble_load(&s, 2).unwrap();
            let f4 = space.assemble_load(&s, 4).unwrap();
            let d = f2.iter().zip(&f4).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = f4.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            diffs.push(d / scale);
        }
        // relative difference between the degree-2 and degree-5 loads is O(h^2)
        assert!(diffs[0] / diffs[1] > 3.5, "{diffs:?}");
        assert!(diffs[1] / diffs[2] > 3.5, "{diffs:?}");
    }

    #[test]
    fn norms() {
        let mesh = cube(2);
        let space = FeSpace::new(&mesh).unwrap();
        let n = space.num_free_edges();
        assert_eq!(space.lp_norm_curl(&vec![0.0; n], 3.0), 0.0);
        assert_eq!(space.lp_norm_field(&EdgeField::zeros(&mesh), 3.0, 2).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random(&mut rng, n);
        let cu: Vec<f64> = u.iter().map(|x| -2.5 * x).collect();
        let a = space.lp_norm_curl(&u, 4.0);
        assert!((space.lp_norm_curl(&cu, 4.0) - 2.5 * a).abs() < 1e-12 * a);
        let c = Vec3::new(1.0, 2.0, -2.0);
        let field = interpolate(&mesh, &|_| c);
        let l3 = space.lp_norm_field(&field, 3.0, 4).unwrap();
        assert!((l3 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn curl_norm_of_sine_interpolant() {
        let pi = std::f64::consts::PI;
        let mesh = build_box_mesh([12; 3], Point::zeros(), Point::new(pi, pi, pi)).unwrap();
        let space = FeSpace::new(&mesh).unwrap();
        let u = interpolate(&mesh, &|x| Vec3::new(0.0, 0.0, x.x.sin() * x.y.sin()));
        let norm = space.lp_norm_curl(&space.restrict(&u), 2.0);
        // int (sin^2 x cos^2 y + cos^2 x sin^2 y) over [0, pi]^3 = pi^3 / 2
        let exact = (pi.powi(3) / 2.0).sqrt();
        assert!((norm - exact).abs() / exact < 0.02, "{norm} vs {exact}");
    }
}
