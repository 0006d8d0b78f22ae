//! Quadrature checks of the integration-by-parts identities
//!
//! ```text
//! (u, grad phi) + (div u, phi) = int_{boundary} (u . n) phi
//! (curl u, v) - (u, curl v)    = int_{boundary} (n x u) . v
//! ```
//!
//! for analytic fields with analytic derivatives.

use crate::error::Result;
use crate::mesh::{Mesh, Point};
use crate::whitney::{quadrature, triangle_quadrature, TetGeometry, Vec3};

/// Analytic fields `u`, `v`, `phi` and the derivatives the identities need.
pub trait GreenFields: Sync {
    fn u(&self, x: &Point) -> Vec3;
    fn div_u(&self, x: &Point) -> f64;
    fn curl_u(&self, x: &Point) -> Vec3;
    fn v(&self, x: &Point) -> Vec3;
    fn curl_v(&self, x: &Point) -> Vec3;
    fn phi(&self, x: &Point) -> f64;
    fn grad_phi(&self, x: &Point) -> Vec3;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenResiduals {
    /// `|(u, grad phi) + (div u, phi) - int (u . n) phi|`
    pub div: f64,
    /// `|(curl u, v) - (u, curl v) - int (n x u) . v|`
    pub curl: f64,
}

/// Non-polynomial fields without symmetry, so quadrature errors do not
/// cancel between opposite faces.
pub struct SmoothFields;

impl GreenFields for SmoothFields {
    fn u(&self, x: &Point) -> Vec3 {
        let ez = (0.5 * x.z).exp();
        Vec3::new(
            (x.x + 2.0 * x.y).sin() * ez,
            (1.3 * x.x - x.y + x.z).cos(),
            x.x * x.x * x.y + x.z.sin() * x.y,
        )
    }

    fn div_u(&self, x: &Point) -> f64 {
        (x.x + 2.0 * x.y).cos() * (0.5 * x.z).exp() + (1.3 * x.x - x.y + x.z).sin() + x.y * x.z.cos()
    }

    fn curl_u(&self, x: &Point) -> Vec3 {
        let ez = (0.5 * x.z).exp();
        let a = x.x + 2.0 * x.y;
        let b = 1.3 * x.x - x.y + x.z;
        Vec3::new(
            x.x * x.x + x.z.sin() + b.sin(),
            0.5 * a.sin() * ez - 2.0 * x.x * x.y,
            -1.3 * b.sin() - 2.0 * a.cos() * ez,
        )
    }

    fn v(&self, x: &Point) -> Vec3 {
        Vec3::new(x.y.exp() * x.z.cos(), x.x * x.z * x.z, (x.x * x.y).sin())
    }

    fn curl_v(&self, x: &Point) -> Vec3 {
        let c = (x.x * x.y).cos();
        Vec3::new(
            x.x * c - 2.0 * x.x * x.z,
            -x.y.exp() * x.z.sin() - x.y * c,
            x.z * x.z - x.y.exp() * x.z.cos(),
        )
    }

    fn phi(&self, x: &Point) -> f64 {
        x.x.exp() * (x.y + 0.5 * x.z).sin()
    }

    fn grad_phi(&self, x: &Point) -> Vec3 {
        let e = x.x.exp();
        let (s, c) = (x.y + 0.5 * x.z).sin_cos();
        Vec3::new(e * s, e * c, 0.5 * e * c)
    }
}

/// `u = grad(xyz)`, `phi = 1`, constant `v`: the divergence theorem for a
/// harmonic quadratic.
pub struct GradientXyz;

impl GreenFields for GradientXyz {
    fn u(&self, x: &Point) -> Vec3 {
        Vec3::new(x.y * x.z, x.x * x.z, x.x * x.y)
    }

    fn div_u(&self, _: &Point) -> f64 {
        0.0
    }

    fn curl_u(&self, _: &Point) -> Vec3 {
        Vec3::zeros()
    }

    fn v(&self, _: &Point) -> Vec3 {
        Vec3::new(1.0, -2.0, 0.5)
    }

    fn curl_v(&self, _: &Point) -> Vec3 {
        Vec3::zeros()
    }

    fn phi(&self, _: &Point) -> f64 {
        1.0
    }

    fn grad_phi(&self, _: &Point) -> Vec3 {
        Vec3::zeros()
    }
}

/// Constant `u`, `v`, `phi`.
pub struct ConstantFields;

impl GreenFields for ConstantFields {
    fn u(&self, _: &Point) -> Vec3 {
        Vec3::new(1.0, 2.0, 3.0)
    }

    fn div_u(&self, _: &Point) -> f64 {
        0.0
    }

    fn curl_u(&self, _: &Point) -> Vec3 {
        Vec3::zeros()
    }

    fn v(&self, _: &Point) -> Vec3 {
        Vec3::new(-1.0, 0.5, 2.0)
    }

    fn curl_v(&self, _: &Point) -> Vec3 {
        Vec3::zeros()
    }

    fn phi(&self, _: &Point) -> f64 {
        1.5
    }

    fn grad_phi(&self, _: &Point) -> Vec3 {
        Vec3::zeros()
    }
}

/// Both residuals with tet and face rules of the given order (1, 2 or 4).
pub fn check_green_formulas(mesh: &Mesh, fields: &dyn GreenFields, quad_order: usize) -> Result<GreenResiduals> {
    let tet_rule = quadrature(quad_order)?;
    let tri_rule = triangle_quadrature(quad_order)?;

    let (mut div_lhs, mut curl_lhs) = (0.0, 0.0);
    for t in 0..mesh.num_tets() {
        let g = TetGeometry::new(mesh.tet_points(t))?;
        for (bary, w) in tet_rule.iter() {
            let x = g.point(bary);
            let dv = w * g.volume;
            div_lhs += dv * (fields.u(&x).dot(&fields.grad_phi(&x)) + fields.div_u(&x) * fields.phi(&x));
            curl_lhs += dv * (fields.curl_u(&x).dot(&fields.v(&x)) - fields.u(&x).dot(&fields.curl_v(&x)));
        }
    }

    let (mut div_rhs, mut curl_rhs) = (0.0, 0.0);
    for face in mesh.boundary_faces() {
        let [a, b, c] = face.vertices.map(|v| mesh.vertices[v]);
        let area = 0.5 * (b - a).cross(&(c - a)).norm();
        for (bary, w) in tri_rule.iter() {
            let x = a * bary[0] + b * bary[1] + c * bary[2];
            let u = fields.u(&x);
            div_rhs += w * area * u.dot(&face.normal) * fields.phi(&x);
            curl_rhs += w * area * face.normal.cross(&u).dot(&fields.v(&x));
        }
    }

    Ok(GreenResiduals {
        div: (div_lhs - div_rhs).abs(),
        curl: (curl_lhs - curl_rhs).abs(),
    })
}
