//! On-disk artifacts: VTK legacy fields, CSV tables and text summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pcurl_core::solver::IterateRecord;
use pcurl_core::whitney::Vec3;
use pcurl_core::{EdgeField, FeSpace, Mesh};

use crate::error::CliError;

/// Fixed 17-significant-digit scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Field value at each vertex, averaged over the tets that contain it.
pub fn vertex_average(space: &FeSpace<'_>, u: &EdgeField) -> Vec<Vec3> {
    let mesh = space.mesh;
    let mut sum = vec![Vec3::zeros(); mesh.num_vertices()];
    let mut count = vec![0usize; mesh.num_vertices()];
    for (t, tet) in mesh.tets.iter().enumerate() {
        for (i, &v) in tet.iter().enumerate() {
            let mut bary = [0.0; 4];
            bary[i] = 1.0;
            sum[v] += space.eval_field(u, t, &bary);
            count[v] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// Legacy ASCII unstructured grid with per-tet curl and vertex-averaged field.
pub fn vtk_string(mesh: &Mesh, title: &str, curls: &[Vec3], vertex_field: &[Vec3]) -> String {
    let vec3 = |v: &Vec3| format!("{} {} {}", num(v.x), num(v.y), num(v.z));
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    // the title line is limited to 256 characters and may not contain newlines
    let title: String = title.replace('\n', " ").chars().take(255).collect();
    let _ = writeln!(s, "{title}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for x in &mesh.vertices {
        let _ = writeln!(s, "{}", vec3(x));
    }
    let n = mesh.num_tets();
    let _ = writeln!(s, "CELLS {n} {}", 5 * n);
    for t in &mesh.tets {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        s.push_str("10\n");
    }
    let _ = writeln!(s, "CELL_DATA {n}\nVECTORS curl double");
    for c in curls {
        let _ = writeln!(s, "{}", vec3(c));
    }
    let _ = writeln!(s, "POINT_DATA {}\nVECTORS field double", mesh.num_vertices());
    for v in vertex_field {
        let _ = writeln!(s, "{}", vec3(v));
    }
    s
}

pub fn write_vtk(path: &Path, space: &FeSpace<'_>, u: &EdgeField, title: &str) -> Result<(), CliError> {
    let text = vtk_string(space.mesh, title, &space.field_curls(u), &vertex_average(space, u));
    fs::write(path, text)?;
    Ok(())
}

/// Writes a CSV table with the given header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const HISTORY_HEADER: [&str; 7] = ["stage", "p", "eps", "newton_iter", "residual", "energy", "constraint"];

pub fn history_rows(history: &[IterateRecord]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|r| {
            vec![
                r.stage.to_string(),
                r.p.to_string(),
                num(r.eps),
                r.newton_iter.to_string(),
                num(r.residual),
                num(r.energy),
                num(r.constraint),
            ]
        })
        .collect()
}

/// `log(e0 / e1) / log(h0 / h1)` when both errors are positive.
pub fn observed_order(e0: f64, e1: f64, h0: f64, h1: f64) -> Option<f64> {
    (e0 > 0.0 && e1 > 0.0 && h0 != h1).then(|| (e0 / e1).ln() / (h0 / h1).ln())
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
