//! Manufactured solutions on `[0, pi]^3`.
//!
//! Every case uses the field `u* = (0, 0, sin x sin y)`, which is
//! divergence-free and has vanishing tangential trace on the cube. Its curl
//! `w = (sin x cos y, -cos x sin y, 0)` depends on `(x, y)` only, so the load
//! `S = curl(|w|^{p-2} w)` has a single nonzero component:
//!
//! ```text
//! S_z = 2 s^m sin x sin y - m s^{m-1} (sin 2x cos 2y cos x sin y + sin 2y cos 2x sin x cos y)
//! ```
//!
//! with `s = |w|^2` and `m = (p - 2) / 2`. Where `s = 0` the load is 0 (the
//! limit for `p > 2`).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::assembly::{EdgeField, FeSpace};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::registry::{Named, Registry};
use crate::whitney::{quadrature, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedCase {
    pub name: String,
    pub p: f64,
    pub notes: String,
}

impl ManufacturedCase {
    pub fn exact(&self, x: &Point) -> Vec3 {
        Vec3::new(0.0, 0.0, x.x.sin() * x.y.sin())
    }

    pub fn exact_curl(&self, x: &Point) -> Vec3 {
        Vec3::new(x.x.sin() * x.y.cos(), -x.x.cos() * x.y.sin(), 0.0)
    }

    pub fn load(&self, x: &Point) -> Vec3 {
        let (sx, cx) = x.x.sin_cos();
        let (sy, cy) = x.y.sin_cos();
        let m = 0.5 * (self.p - 2.0);
        if m == 0.0 {
            return Vec3::new(0.0, 0.0, 2.0 * sx * sy);
        }
        let s = sx * sx * cy * cy + cx * cx * sy * sy;
        if s == 0.0 {
            return Vec3::zeros();
        }
        let ds = (2.0 * x.x).sin() * (2.0 * x.y).cos() * cx * sy + (2.0 * x.y).sin() * (2.0 * x.x).cos() * sx * cy;
        let z = 2.0 * s.powf(m) * sx * sy - m * s.powf(m - 1.0) * ds;
        Vec3::new(0.0, 0.0, z)
    }

    pub fn domain_extents() -> Point {
        Point::new(PI, PI, PI)
    }
}

/// A named family of manufactured cases, instantiated per exponent.
pub trait CaseFamily: Named + Send + Sync {
    fn build(&self, p: f64) -> Result<ManufacturedCase>;
}

pub struct P2Sine;
pub struct GeneralP;

impl Named for P2Sine {
    fn name(&self) -> &str {
        "p2_sine"
    }
}

impl Named for GeneralP {
    fn name(&self) -> &str {
        "general_p"
    }
}

impl CaseFamily for P2Sine {
    fn build(&self, p: f64) -> Result<ManufacturedCase> {
        if p != 2.0 {
            return Err(Error::InvalidExponent(format!("case p2_sine requires p = 2, got {p}")));
        }
        Ok(case_p2_sine())
    }
}

impl CaseFamily for GeneralP {
    fn build(&self, p: f64) -> Result<ManufacturedCase> {
        case_general_p(p)
    }
}

pub fn case_p2_sine() -> ManufacturedCase {
    ManufacturedCase {
        name: "p2_sine".into(),
        p: 2.0,
        notes: "u* = (0, 0, sin x sin y), S = (0, 0, 2 sin x sin y); n x u* = 0 on the cube".into(),
    }
}

pub fn case_general_p(p: f64) -> Result<ManufacturedCase> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(format!("manufactured cases need p >= 2, got {p}")));
    }
    let smooth = if p == 2.0 || p >= 3.0 {
        "closed-form load"
    } else {
        "closed-form load; its derivative is unbounded where curl u* = 0"
    };
    Ok(ManufacturedCase {
        name: "general_p".into(),
        p,
        notes: format!("u* = (0, 0, sin x sin y), p = {p}; {smooth}"),
    })
}

pub fn cases() -> Registry<dyn CaseFamily> {
    let mut reg: Registry<dyn CaseFamily> = Registry::new("manufactured case");
    reg.register(Arc::new(P2Sine));
    reg.register(Arc::new(GeneralP));
    reg
}

/// `(||u_h - u*||_{L^2}, ||curl u_h - curl u*||_{L^p})` by tet quadrature.
pub fn measure_error(
    space: &FeSpace<'_>,
    u_h: &EdgeField,
    case: &ManufacturedCase,
    quad_order: usize,
) -> Result<(f64, f64)> {
    let rule = quadrature(quad_order)?;
    let curls = space.field_curls(u_h);
    let (mut l2, mut lp) = (0.0, 0.0);
    for (t, curl) in curls.iter().enumerate() {
        let g = space.geometry(t);
        for (bary, w) in rule.iter() {
            let x = g.point(bary);
            let dv = w * g.volume;
            l2 += dv * (space.eval_field(u_h, t, bary) - case.exact(&x)).norm_squared();
            lp += dv * (curl - case.exact_curl(&x)).norm().powf(case.p);
        }
    }
    Ok((l2.sqrt(), lp.powf(1.0 / case.p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{interpolate, power_map, PExponent};
    use crate::mesh::build_box_mesh;

    fn flux(case: &ManufacturedCase, x: &Point) -> Vec3 {
        power_map(&case.exact_curl(x), &PExponent::new(case.p, 0.0).unwrap())
    }

    // central-difference curl of the flux
    fn fd_load(case: &ManufacturedCase, x: &Point, h: f64) -> Vec3 {
        let d = |i: usize, j: usize| {
            let mut e = Point::zeros();
            e[j] = h;
            (flux(case, &(x + e))[i] - flux(case, &(x - e))[i]) / (2.0 * h)
        };
        Vec3::new(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1))
    }

    fn grid(n: usize) -> impl Iterator<Item = Point> {
        let step = PI / (n as f64 + 1.0);
        (1..=n).flat_map(move |i| {
            (1..=n).flat_map(move |j| {
                (1..=2).map(move |k| Point::new(i as f64 * step + 0.013, j as f64 * step - 0.007, k as f64))
            })
        })
    }

    #[test]
    fn boundary_and_divergence() {
        let c = case_p2_sine();
        for t in [0.3, 1.1, 2.9] {
            for face in [
                Point::new(0.0, t, 0.7),
                Point::new(PI, t, 0.7),
                Point::new(t, 0.0, 0.7),
                Point::new(t, PI, 0.7),
            ] {
                assert!(c.exact(&face).norm() < 1e-15);
            }
            // z faces: n x u* = 0 because u* is parallel to the normal
            let u = c.exact(&Point::new(t, 0.4, 0.0));
            assert_eq!((u.x, u.y), (0.0, 0.0));
        }
    }

    #[test]
    fn curl_matches_finite_differences() {
        let c = case_p2_sine();
        let h = 1e-5;
        for x in grid(6) {
            let d = |i: usize, j: usize| {
                let mut e = Point::zeros();
                e[j] = h;
                (c.exact(&(x + e))[i] - c.exact(&(x - e))[i]) / (2.0 * h)
            };
            let fd = Vec3::new(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
            assert!((fd - c.exact_curl(&x)).norm() < 1e-9);
        }
    }

    #[test]
    fn p2_load_is_closed_form() {
        let c = case_p2_sine();
        let g = case_general_p(2.0).unwrap();
        for x in grid(5) {
            let expected = 2.0 * x.x.sin() * x.y.sin();
            assert_eq!(c.load(&x).z, expected);
            assert_eq!(g.load(&x), c.load(&x));
        }
    }

    #[test]
    fn load_matches_flux_finite_differences() {
        for p in [2.0, 3.0, 4.0, 6.0, 10.0] {
            let c = case_general_p(p).unwrap();
            let scale = grid(8).map(|x| c.load(&x).norm()).fold(0.0, f64::max);
            let err = |h: f64| grid(8).map(|x| (fd_load(&c, &x, h) - c.load(&x)).norm()).fold(0.0, f64::max);
            let (e1, e2) = (err(1e-3), err(5e-4));
            assert!(e1 < 1e-4 * scale, "p={p}: {e1}");
            // second order: halving the step divides the error by about 4
            assert!(e2 < e1 / 3.0 || e1 < 1e-9 * scale, "p={p}: {e1} -> {e2}");
        }
    }

    #[test]
    fn p4_point_check() {
        // w vanishes at (pi/2, pi/2); at (pi/4, pi/2) s = 1/2 and the bracket is -1/sqrt2
        let c = case_general_p(4.0).unwrap();
        assert!(c.load(&Point::new(PI / 2.0, PI / 2.0, 1.0)).norm() < 1e-14);
        let x = Point::new(PI / 4.0, PI / 2.0, 0.3);
        let r = 0.5f64.sqrt();
        let expected = 2.0 * 0.5 * r * 1.0 - (1.0 * -1.0 * r * 1.0 + 0.0);
        assert!((c.load(&x).z - expected).abs() < 1e-14);
    }

    #[test]
    fn load_is_divergence_free() {
        for p in [2.0, 4.0, 10.0] {
            let c = case_general_p(p).unwrap();
            let h = 1e-4;
            for x in grid(6) {
                let div: f64 = (0..3)
                    .map(|i| {
                        let mut e = Point::zeros();
                        e[i] = h;
                        (c.load(&(x + e))[i] - c.load(&(x - e))[i]) / (2.0 * h)
                    })
                    .sum();
                assert!(div.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn registry_and_validation() {
        let reg = cases();
        assert_eq!(reg.names(), vec!["general_p".to_string(), "p2_sine".to_string()]);
        assert!(reg.get("p2_sine").unwrap().build(3.0).is_err());
        assert!(reg.get("general_p").unwrap().build(1.5).is_err());
        assert_eq!(reg.get("general_p").unwrap().build(6.0).unwrap().p, 6.0);
    }

    #[test]
    fn exact_field_norm() {
        let mesh = build_box_mesh([4; 3], Point::zeros(), ManufacturedCase::domain_extents()).unwrap();
        let space = FeSpace::new(&mesh).unwrap();
        let c = case_p2_sine();
        let zero = EdgeField::zeros(&mesh);
        let (l2, curl) = measure_error(&space, &zero, &c, 4).unwrap();
        let pi3 = PI.powi(3);
        assert!((l2 * l2 - pi3 / 4.0).abs() < 1e-2 * pi3 / 4.0);
        assert!((curl * curl - pi3 / 2.0).abs() < 1e-2 * pi3 / 2.0);
    }

    #[test]
    fn interpolant_errors_are_first_order() {
        let c = case_p2_sine();
        let errs: Vec<(f64, f64)> = [4, 8, 16]
            .iter()
            .map(|&n| {
                let mesh = build_box_mesh([n; 3], Point::zeros(), ManufacturedCase::domain_extents()).unwrap();
                let space = FeSpace::new(&mesh).unwrap();
                let u = interpolate(&mesh, &|x| c.exact(x));
                measure_error(&space, &u, &c, 4).unwrap()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[0].0 / w[1].0 > 1.8, "{errs:?}");
            assert!(w[0].1 / w[1].1 > 1.8, "{errs:?}");
        }
    }
}
