//! Scalar potentials of discretely curl-free edge fields by integration
//! along a breadth-first spanning tree of the mesh graph.

use std::collections::VecDeque;

use crate::assembly::{EdgeField, NodalField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::whitney::{eval_curl, TetGeometry, Vec3};

/// Curl coefficients are accepted as zero below this multiple of the size
/// of the terms that cancel in them.
pub const CURL_TOL: f64 = 1e-12;
/// Allowed mismatch on non-tree edges, relative to `max(1, |u_e|)`.
pub const CLOSURE_TOL: f64 = 1e-10;

/// Largest per-tet curl of `u`, each divided by `max(1, sum_k |u_k| |curl w_k|)`.
pub fn relative_curl(mesh: &Mesh, u: &EdgeField) -> Result<f64> {
    let mut worst = 0.0f64;
    for (t, te) in mesh.tet_edges.iter().enumerate() {
        let g = TetGeometry::new(mesh.tet_points(t)).map_err(|_| Error::DegenerateTet {
            tet: t,
            volume: mesh.signed_volume(t),
        })?;
        let curls = eval_curl(&g);
        let mut c = Vec3::zeros();
        let mut scale = 0.0;
        for k in 0..6 {
            let coeff = f64::from(te[k].sign) * u.0[te[k].edge];
            c += curls[k] * coeff;
            scale += coeff.abs() * curls[k].norm();
        }
        worst = worst.max(c.norm() / scale.max(1.0));
    }
    Ok(worst)
}

/// `phi` with `phi_hi - phi_lo = u_e` on every edge and zero vertex mean.
pub fn extract_scalar_potential(mesh: &Mesh, u: &EdgeField) -> Result<NodalField> {
    if u.0.len() != mesh.num_edges() {
        return Err(Error::Dimension {
            expected: mesh.num_edges(),
            got: u.0.len(),
        });
    }
    let curl = relative_curl(mesh, u)?;
    if curl > CURL_TOL {
        return Err(Error::NotCurlFree(format!("relative curl {curl:e} exceeds {CURL_TOL:e}")));
    }

    let nv = mesh.num_vertices();
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for (e, &(lo, hi)) in mesh.edges.iter().enumerate() {
        adjacency[lo].push((hi, e));
        adjacency[hi].push((lo, e));
    }
    let mut phi = vec![f64::NAN; nv];
    let mut tree = vec![false; mesh.num_edges()];
    let mut queue = VecDeque::new();
    phi[0] = 0.0;
    queue.push_back(0);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adjacency[v] {
            if phi[w].is_nan() {
                let (lo, _) = mesh.edges[e];
                phi[w] = if lo == v { phi[v] + u.0[e] } else { phi[v] - u.0[e] };
                tree[e] = true;
                queue.push_back(w);
            }
        }
    }
    if phi.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidMesh("mesh graph is not connected".into()));
    }
    for (e, &(lo, hi)) in mesh.edges.iter().enumerate() {
        if tree[e] {
            continue;
        }
        let gap = (phi[hi] - phi[lo] - u.0[e]).abs();
        if gap > CLOSURE_TOL * u.0[e].abs().max(1.0) {
            return Err(Error::NotCurlFree(format!("closure gap {gap:e} on edge {e} ({lo}, {hi})")));
        }
    }
    let mean = phi.iter().sum::<f64>() / nv as f64;
    phi.iter_mut().for_each(|x| *x -= mean);
    Ok(NodalField(phi))
}
