//! Lowest-order Whitney edge basis on tetrahedra and the quadrature rules
//! used by assembly.
//!
//! For a tet with barycentric coordinates `l_i`, the edge basis function of
//! local edge (i, j) is `W_ij = l_i grad l_j - l_j grad l_i` and its curl is
//! the constant `2 grad l_i x grad l_j`. Because the curl is piecewise
//! constant, any integrand built only from curls (the nonlinear flux, the
//! Jacobian blocks, the energy density) is piecewise constant and a one-point
//! rule integrates it exactly. Products of two basis functions are quadratic,
//! so the degree-2 rule is exact for mass matrices.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{Point, LOCAL_EDGES};

pub type Vec3 = Vector3<f64>;

/// Barycentric gradients and volume of one tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetGeometry {
    pub vertices: [Point; 4],
    pub grads: [Vec3; 4],
    pub volume: f64,
}

impl TetGeometry {
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        let [a, b, c, d] = vertices;
        let jac = Matrix3::from_columns(&[b - a, c - a, d - a]);
        let volume = jac.determinant() / 6.0;
        if !(volume > 0.0) {
            return Err(Error::DegenerateTet { tet: usize::MAX, volume });
        }
        // l_{1..3} = J^{-1}(x - a), so their gradients are the rows of J^{-1}
        let inv = jac.try_inverse().ok_or(Error::DegenerateTet { tet: usize::MAX, volume })?;
        let g1 = inv.row(0).transpose();
        let g2 = inv.row(1).transpose();
        let g3 = inv.row(2).transpose();
        Ok(Self {
            vertices,
            grads: [-(g1 + g2 + g3), g1, g2, g3],
            volume,
        })
    }

    pub fn point(&self, bary: &[f64; 4]) -> Point {
        self.vertices
            .iter()
            .zip(bary)
            .fold(Point::zeros(), |acc, (v, &l)| acc + v * l)
    }

    pub fn centroid(&self) -> Point {
        self.point(&[0.25; 4])
    }
}

/// Unsigned Whitney functions of the six local edges at a barycentric point.
pub fn eval_basis(geom: &TetGeometry, bary: &[f64; 4]) -> [Vec3; 6] {
    debug_assert!(
        bary.iter().all(|&l| l >= -1e-12) && (bary.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
        "barycentric coordinates out of range: {bary:?}"
    );
    LOCAL_EDGES.map(|(i, j)| geom.grads[j] * bary[i] - geom.grads[i] * bary[j])
}

/// Unsigned constant curls of the six local Whitney functions.
pub fn eval_curl(geom: &TetGeometry) -> [Vec3; 6] {
    LOCAL_EDGES.map(|(i, j)| 2.0 * geom.grads[i].cross(&geom.grads[j]))
}

/// Symmetric quadrature rule on a simplex in barycentric coordinates.
/// Weights sum to one and are scaled by the simplex measure at the use site.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const N: usize> {
    pub points: Vec<[f64; N]>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: usize,
}

pub type TetRule = QuadratureRule<4>;
pub type TriRule = QuadratureRule<3>;

impl<const N: usize> QuadratureRule<N> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; N], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Tetrahedral rule of at least the requested order.
///
/// Order 1 is the centroid rule, order 2 the 4-point rule. Order 4 is served
/// by a 14-point rule with positive weights, exact to degree 5.
pub fn quadrature(order: usize) -> Result<TetRule> {
    match order {
        1 => Ok(TetRule {
            points: vec![[0.25; 4]],
            weights: vec![1.0],
            degree: 1,
        }),
        2 => {
            let a = 0.585_410_196_624_968_5;
            let b = 0.138_196_601_125_010_5;
            Ok(TetRule {
                points: (0..4)
                    .map(|i| {
                        let mut p = [b; 4];
                        p[i] = a;
                        p
                    })
                    .collect(),
                weights: vec![0.25; 4],
                degree: 2,
            })
        }
        4 => {
            let mut points = Vec::with_capacity(14);
            let mut weights = Vec::with_capacity(14);
            // weights below are for the reference volume 1/6
            for (a, w) in [
                (0.092_735_250_310_891_2, 0.012_248_840_519_393_66),
                (0.310_885_919_263_300_6, 0.018_781_320_953_002_64),
            ] {
                for i in 0..4 {
                    let mut p = [a; 4];
                    p[i] = 1.0 - 3.0 * a;
                    points.push(p);
                    weights.push(6.0 * w);
                }
            }
            let b = 0.454_496_295_874_350_4;
            let c = 0.5 - b;
            for &(i, j) in &LOCAL_EDGES {
                let mut p = [c; 4];
                p[i] = b;
                p[j] = b;
                points.push(p);
                weights.push(6.0 * 0.007_091_003_462_846_911);
            }
            Ok(TetRule {
                points,
                weights,
                degree: 5,
            })
        }
        other => Err(Error::UnsupportedQuadrature(other)),
    }
}

/// Triangle rule matched to [`quadrature`] of the same order.
pub fn triangle_quadrature(order: usize) -> Result<TriRule> {
    match order {
        1 => Ok(TriRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
            degree: 1,
        }),
        2 => Ok(TriRule {
            points: vec![
                [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            ],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }),
        4 => {
            let mut points = vec![[1.0 / 3.0; 3]];
            let mut weights = vec![0.225];
            for (a, w) in [
                (0.470_142_064_105_115, 0.132_394_152_788_506),
                (0.101_286_507_323_456, 0.125_939_180_544_827),
            ] {
                for i in 0..3 {
                    let mut p = [a; 3];
                    p[i] = 1.0 - 2.0 * a;
                    points.push(p);
                    weights.push(w);
                }
            }
            Ok(TriRule {
                points,
                weights,
                degree: 5,
            })
        }
        other => Err(Error::UnsupportedQuadrature(other)),
    }
}

/// Gauss-Legendre nodes and weights on [0, 1], five points.
pub const EDGE_GAUSS: [(f64, f64); 5] = [
    (0.046_910_077_030_668_0, 0.118_463_442_528_094_5),
    (0.230_765_344_947_158_5, 0.239_314_335_249_683_2),
    (0.5, 0.284_444_444_444_444_4),
    (0.769_234_655_052_841_5, 0.239_314_335_249_683_2),
    (0.953_089_922_969_332_0, 0.118_463_442_528_094_5),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> TetGeometry {
        TetGeometry::new([
            Point::zeros(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    fn skewed() -> TetGeometry {
        TetGeometry::new([
            Point::new(0.1, 0.2, -0.3),
            Point::new(1.3, 0.1, 0.2),
            Point::new(0.4, 1.1, 0.0),
            Point::new(0.2, 0.5, 0.9),
        ])
        .unwrap()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn to_bary(g: &TetGeometry, x: &Point) -> [f64; 4] {
        let mut l = [0.0; 4];
        for i in 0..4 {
            l[i] = if i == 0 { 1.0 } else { 0.0 } + g.grads[i].dot(&(x - g.vertices[0]));
        }
        l
    }

    #[test]
    fn barycentric_partition_of_unity() {
        let g = skewed();
        let s = g.grads.iter().fold(Vec3::zeros(), |a, b| a + b);
        assert!(s.norm() < 1e-13);
        for j in 0..4 {
            let l = to_bary(&g, &g.vertices[j]);
            for i in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((l[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_tet_rejected() {
        let flat = TetGeometry::new([
            Point::zeros(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
        ]);
        assert!(flat.is_err());
    }

    #[test]
    fn circulation_normalization() {
        let g = skewed();
        for (k, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
            for (m, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                let t = g.vertices[b] - g.vertices[a];
                let mut circ = 0.0;
                for &(s, w) in &EDGE_GAUSS {
                    let mut bary = [0.0; 4];
                    bary[a] = 1.0 - s;
                    bary[b] = s;
                    circ += w * eval_basis(&g, &bary)[k].dot(&t);
                }
                let expected = if k == m { 1.0 } else { 0.0 };
                assert!((circ - expected).abs() < 1e-12, "edge {i}{j} along {a}{b}: {circ}");
            }
        }
    }

    #[test]
    fn edge_midpoint_value() {
        let g = reference();
        let w = eval_basis(&g, &[0.5, 0.5, 0.0, 0.0]);
        let expected = (g.grads[1] - g.grads[0]) * 0.5;
        assert!((w[0] - expected).norm() < 1e-15);
    }

    #[test]
    fn constants_are_reproduced() {
        let g = skewed();
        let c = Vec3::new(0.3, -1.2, 2.5);
        let coeffs: Vec<f64> = LOCAL_EDGES
            .iter()
            .map(|&(i, j)| c.dot(&(g.vertices[j] - g.vertices[i])))
            .collect();
        for (bary, _) in quadrature(4).unwrap().iter() {
            let w = eval_basis(&g, bary);
            let v = w.iter().zip(&coeffs).fold(Vec3::zeros(), |a, (w, c)| a + w * *c);
            assert!((v - c).norm() < 1e-12);
        }
        let curl = eval_curl(&g)
            .iter()
            .zip(&coeffs)
            .fold(Vec3::zeros(), |a, (w, c)| a + w * *c);
        assert!(curl.norm() < 1e-12);
    }

    #[test]
    fn curl_formula_on_reference() {
        let g = reference();
        let curls = eval_curl(&g);
        assert!((curls[0] - 2.0 * g.grads[0].cross(&g.grads[1])).norm() < 1e-15);
    }

    #[test]
    fn gradient_coefficients_are_curl_free() {
        let g = skewed();
        let phi = [0.7, -1.3, 2.2, 0.4];
        let curl = eval_curl(&g)
            .iter()
            .zip(LOCAL_EDGES.iter())
            .fold(Vec3::zeros(), |a, (w, &(i, j))| a + w * (phi[j] - phi[i]));
        assert!(curl.norm() < 1e-12);
    }

    #[test]
    fn curl_matches_finite_differences() {
        let g = skewed();
        let h = 1e-6;
        let x0 = g.centroid();
        let curls = eval_curl(&g);
        for k in 0..6 {
            let f = |x: Point| eval_basis(&g, &to_bary(&g, &x))[k];
            let d = |a: usize| {
                let mut e = Point::zeros();
                e[a] = h;
                (f(x0 + e) - f(x0 - e)) / (2.0 * h)
            };
            let (dx, dy, dz) = (d(0), d(1), d(2));
            let fd = Vec3::new(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x);
            assert!((fd - curls[k]).norm() < 1e-8);
        }
    }

    #[test]
    fn tet_rules_exact_to_degree() {
        for order in [1, 2, 4] {
            let rule = quadrature(order).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for a in 0..=rule.degree {
                for b in 0..=(rule.degree - a) {
                    for c in 0..=(rule.degree - a - b) {
                        // reference tet volume is 1/6
                        let exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
                        let q: f64 = rule
                            .iter()
                            .map(|(l, w)| w / 6.0 * l[1].powi(a as i32) * l[2].powi(b as i32) * l[3].powi(c as i32))
                            .sum();
                        assert!((q - exact).abs() < 1e-15, "order {order}: x^{a} y^{b} z^{c}");
                    }
                }
            }
        }
        assert_eq!(quadrature(1).unwrap().len(), 1);
        assert_eq!(quadrature(2).unwrap().len(), 4);
        assert!(matches!(quadrature(3), Err(Error::UnsupportedQuadrature(3))));
    }

    #[test]
    fn triangle_rules_exact_to_degree() {
        for order in [1, 2, 4] {
            let rule = triangle_quadrature(order).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for a in 0..=rule.degree {
                for b in 0..=(rule.degree - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let q: f64 = rule
                        .iter()
                        .map(|(l, w)| w / 2.0 * l[1].powi(a as i32) * l[2].powi(b as i32))
                        .sum();
                    assert!((q - exact).abs() < 1e-14, "order {order}: x^{a} y^{b}");
                }
            }
        }
        assert!(triangle_quadrature(7).is_err());
    }

    #[test]
    fn second_moment_of_barycentrics() {
        // closed form: int l0 l1 = 1! 1! / 5! * 6 vol = 1/120 on the reference tet
        let rule = quadrature(2).unwrap();
        let vol = 1.0 / 6.0;
        let q: f64 = rule.iter().map(|(l, w)| w * vol * l[0] * l[1]).sum();
        assert!((q - 1.0 / 120.0).abs() < 1e-16);
    }

    #[test]
    fn edge_gauss_weights() {
        let s: f64 = EDGE_GAUSS.iter().map(|p| p.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
        let m8: f64 = EDGE_GAUSS.iter().map(|&(x, w)| w * x.powi(9)).sum();
        assert!((m8 - 0.1).abs() < 1e-14);
    }
}
