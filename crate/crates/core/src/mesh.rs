//! Structured tetrahedral meshes of axis-aligned boxes.
//!
//! Every grid cube is split into six tetrahedra that share the cube diagonal
//! from its lowest to its highest corner (Kuhn split). Edges are oriented from
//! the lower to the higher global vertex index.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Local edge order inside a tetrahedron, as pairs of local vertex indices.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub origin: Point,
    pub extents: Point,
}

impl BoxDomain {
    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }
}

/// Oriented reference from a tetrahedron to one of its global edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TetEdge {
    pub edge: usize,
    /// +1 when the local orientation (lower local index to higher) agrees
    /// with the global orientation, -1 otherwise.
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub tets: Vec<[usize; 4]>,
    /// Global edges stored as (lo, hi) with lo < hi.
    pub edges: Vec<(usize, usize)>,
    pub tet_edges: Vec<[TetEdge; 6]>,
    pub boundary_edges: BTreeSet<usize>,
    pub boundary_vertices: BTreeSet<usize>,
    pub divisions: [usize; 3],
    pub domain: BoxDomain,
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    /// Largest grid spacing over the three axes.
    pub fn h(&self) -> f64 {
        (0..3)
            .map(|a| self.domain.extents[a] / self.divisions[a] as f64)
            .fold(0.0, f64::max)
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        let tet = &self.tets[t];
        [
            self.vertices[tet[0]],
            self.vertices[tet[1]],
            self.vertices[tet[2]],
            self.vertices[tet[3]],
        ]
    }

    /// Signed volume of tet `t` under its stored vertex order.
    pub fn signed_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tet_points(t);
        signed_volume(&a, &b, &c, &d)
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edges.contains(&e)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertices.contains(&v)
    }

    /// Boundary triangles as (tet, local face opposite to local vertex, outward unit normal).
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let grid = self.grid_indices();
        let mut faces = Vec::new();
        for (t, tet) in self.tets.iter().enumerate() {
            for opposite in 0..4 {
                let tri: Vec<usize> = (0..4).filter(|&k| k != opposite).map(|k| tet[k]).collect();
                for axis in 0..3 {
                    for (side, level) in [(-1.0, 0), (1.0, self.divisions[axis])] {
                        if tri.iter().all(|&v| grid[v][axis] == level) {
                            let mut normal = Vector3::zeros();
                            normal[axis] = side;
                            faces.push(BoundaryFace {
                                tet: t,
                                vertices: [tri[0], tri[1], tri[2]],
                                normal,
                            });
                        }
                    }
                }
            }
        }
        faces
    }

    fn grid_indices(&self) -> Vec<[usize; 3]> {
        let [nx, ny, _] = self.divisions;
        (0..self.vertices.len())
            .map(|v| {
                let i = v % (nx + 1);
                let j = (v / (nx + 1)) % (ny + 1);
                let k = v / ((nx + 1) * (ny + 1));
                [i, j, k]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    pub tet: usize,
    pub vertices: [usize; 3],
    pub normal: Vector3<f64>,
}

pub fn signed_volume(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    Matrix3::from_columns(&[b - a, c - a, d - a]).determinant() / 6.0
}

/// Builds the Kuhn-split tetrahedral mesh of the box `origin + [0, extents]`.
pub fn build_box_mesh(divisions: [usize; 3], origin: Point, extents: Point) -> Result<Mesh> {
    if divisions.iter().any(|&n| n == 0) {
        return Err(Error::InvalidMesh(format!(
            "divisions must be positive, got {divisions:?}"
        )));
    }
    if extents.iter().any(|&l| !(l > 0.0) || !l.is_finite()) || origin.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "extents must be positive and finite, got {:?}",
            extents.as_slice()
        )));
    }
    let [nx, ny, nz] = divisions;
    let vid = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Point::new(
                    origin.x + extents.x * i as f64 / nx as f64,
                    origin.y + extents.y * j as f64 / ny as f64,
                    origin.z + extents.z * k as f64 / nz as f64,
                ));
            }
        }
    }

    const PERMUTATIONS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMUTATIONS {
                    let mut corner = [i, j, k];
                    let mut tet = [vid(i, j, k), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = vid(corner[0], corner[1], corner[2]);
                    }
                    let [a, b, c, d] = tet.map(|v| vertices[v]);
                    if signed_volume(&a, &b, &c, &d) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut tet_edges = Vec::with_capacity(tets.len());
    for tet in &tets {
        let mut local = [TetEdge { edge: 0, sign: 1 }; 6];
        for (slot, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            let (va, vb) = (tet[a], tet[b]);
            let key = (va.min(vb), va.max(vb));
            let edge = *edge_index.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
            local[slot] = TetEdge {
                edge,
                sign: if va < vb { 1 } else { -1 },
            };
        }
        tet_edges.push(local);
    }

    let mut mesh = Mesh {
        vertices,
        tets,
        edges,
        tet_edges,
        boundary_edges: BTreeSet::new(),
        boundary_vertices: BTreeSet::new(),
        divisions,
        domain: BoxDomain { origin, extents },
    };
    let (be, bv) = classify_boundary(&mesh);
    mesh.boundary_edges = be;
    mesh.boundary_vertices = bv;
    Ok(mesh)
}

/// Edges and vertices on the box surface. An edge is a boundary edge when
/// both endpoints lie on one common face of the box; tangential degrees of
/// freedom on these edges carry the `n x u = 0` condition.
pub fn classify_boundary(mesh: &Mesh) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let grid = mesh.grid_indices();
    let on_face = |v: usize, axis: usize| -> Option<usize> {
        let g = grid[v][axis];
        (g == 0 || g == mesh.divisions[axis]).then_some(g)
    };
    let vertices: BTreeSet<usize> = (0..mesh.vertices.len())
        .filter(|&v| (0..3).any(|a| on_face(v, a).is_some()))
        .collect();
    let edges = mesh
        .edges
        .iter()
        .enumerate()
        .filter(|(_, &(lo, hi))| {
            (0..3).any(|a| matches!((on_face(lo, a), on_face(hi, a)), (Some(x), Some(y)) if x == y))
        })
        .map(|(e, _)| e)
        .collect();
    (edges, vertices)
}
