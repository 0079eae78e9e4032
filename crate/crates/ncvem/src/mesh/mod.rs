//! Polygonal meshes: construction from vertex/cell data, derived edge
//! topology with globally oriented normals, per-cell geometry, regularity
//! reporting, and the JSON mesh file format.
//!
//! Edges carry a single global orientation fixed at build time: an interior
//! edge is directed as traversed by its lower-indexed cell, so its unit
//! normal points from the lower-indexed cell to the higher-indexed one;
//! boundary edges are directed as traversed by their only cell and their
//! normal points outward. Both adjacent cells therefore agree on every
//! edge quantity, which is what makes shared edge moments well defined.

mod families;
mod voronoi;

pub use families::{generate_family, MeshFamily};
pub use voronoi::{index_polygon_soup, lloyd_cvt, mirrored_voronoi_cells, sample_seeds, voronoi_cells};

use crate::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Computational domain of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    UnitSquare,
    Lshape,
}

impl Domain {
    /// Counterclockwise boundary polygon.
    pub fn polygon(&self) -> Vec<Point2> {
        match self {
            Domain::UnitSquare => vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            // (-1,1)^2 minus the closed quadrant (0,1) x (-1,0)
            Domain::Lshape => vec![
                Point2::new(-1.0, -1.0),
                Point2::new(0.0, -1.0),
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(-1.0, 1.0),
            ],
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Domain::UnitSquare => 1.0,
            Domain::Lshape => 3.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::UnitSquare => "unit_square",
            Domain::Lshape => "lshape",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit_square" => Ok(Domain::UnitSquare),
            "lshape" => Ok(Domain::Lshape),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {cell} is degenerate (area {area:.3e} below tolerance)")]
    DegenerateCell { cell: usize, area: f64 },
    #[error("edge ({v0}, {v1}) is shared by more than two cells or traversed inconsistently")]
    NonManifoldEdge { v0: usize, v1: usize },
    #[error("cell {cell} lists vertex {vertex} more than once")]
    DuplicateVertexInLoop { cell: usize, vertex: usize },
    #[error("cell {cell} is oriented clockwise (loops must be counterclockwise)")]
    ClockwiseLoop { cell: usize },
    #[error("cell {cell} references vertex index {index} out of range")]
    VertexIndexOutOfRange { cell: usize, index: usize },
    #[error("cell {cell} has fewer than 3 vertices")]
    LoopTooShort { cell: usize },
    #[error("mesh family {family} does not support domain {domain}")]
    UnsupportedCombination { family: String, domain: String },
    #[error("refinement level {level} exceeds the supported maximum (6)")]
    LevelTooLarge { level: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh file parse error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A mesh edge with its fixed global orientation `vertices[0] -> vertices[1]`.
#[derive(Debug, Clone)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// Cell on the left of the direction of travel (the lower-indexed one
    /// for interior edges).
    pub left: usize,
    /// Cell on the right, `None` on the boundary.
    pub right: Option<usize>,
    /// Unit normal pointing from `left` to `right` (outward on the boundary).
    pub normal: Vector2,
    pub midpoint: Point2,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// Edge incidence of one cell, in boundary-traversal order.
#[derive(Debug, Clone, Copy)]
pub struct CellEdge {
    pub edge: usize,
    /// True when the cell traverses the edge in its global orientation.
    pub forward: bool,
}

/// An immutable polygonal mesh with derived topology and geometry.
#[derive(Debug, Clone)]
pub struct PolygonalMesh {
    pub domain: Domain,
    pub vertices: Vec<Point2>,
    /// Counterclockwise vertex loops.
    pub cells: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    /// Per cell: incident edges in traversal order.
    pub cell_edges: Vec<Vec<CellEdge>>,
    pub centroids: Vec<Point2>,
    pub diameters: Vec<f64>,
    pub areas: Vec<f64>,
    /// Mesh size: maximum cell diameter.
    pub h: f64,
}

/// Mesh-regularity summary used to monitor the shape-regularity constant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegularityReport {
    /// min over cells of (distance from centroid to boundary) / h_P, a
    /// proxy for the star-shapedness radius ratio.
    pub min_inradius_ratio: f64,
    /// min over edges and owning cells of h_S / h_P.
    pub min_edge_ratio: f64,
    /// Largest vertex count of any cell.
    pub max_vertices_per_cell: usize,
}

fn polygon_signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

fn polygon_centroid(pts: &[Point2], area: f64) -> Point2 {
    let n = pts.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point2::new(cx / (6.0 * area), cy / (6.0 * area))
}

fn polygon_diameter(pts: &[Point2]) -> f64 {
    let mut d2: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            d2 = d2.max((pts[i] - pts[j]).norm_squared());
        }
    }
    d2.sqrt()
}

/// Builds a mesh from raw vertex coordinates and counterclockwise cell
/// loops; all edge topology and geometric quantities are derived here.
pub fn build_mesh(
    vertices: Vec<Point2>,
    cells: Vec<Vec<usize>>,
    domain: Domain,
) -> Result<PolygonalMesh, MeshError> {
    let nv = vertices.len();
    let mut centroids = Vec::with_capacity(cells.len());
    let mut diameters = Vec::with_capacity(cells.len());
    let mut areas = Vec::with_capacity(cells.len());

    for (ci, loop_) in cells.iter().enumerate() {
        if loop_.len() < 3 {
            return Err(MeshError::LoopTooShort { cell: ci });
        }
        let mut seen = loop_.to_vec();
        seen.sort_unstable();
        for w in seen.windows(2) {
            if w[0] == w[1] {
                return Err(MeshError::DuplicateVertexInLoop { cell: ci, vertex: w[0] });
            }
        }
        for &v in loop_ {
            if v >= nv {
                return Err(MeshError::VertexIndexOutOfRange { cell: ci, index: v });
            }
        }
        let pts: Vec<Point2> = loop_.iter().map(|&v| vertices[v]).collect();
        let area = polygon_signed_area(&pts);
        let diam = polygon_diameter(&pts);
        if area < 0.0 {
            return Err(MeshError::ClockwiseLoop { cell: ci });
        }
        if area < 1e-14 * diam * diam || diam == 0.0 {
            return Err(MeshError::DegenerateCell { cell: ci, area });
        }
        centroids.push(polygon_centroid(&pts, area));
        diameters.push(diam);
        areas.push(area);
    }

    // Edge discovery: first traversal fixes the global orientation (the
    // first-visiting cell has the lower index).
    let mut edge_of_pair: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut cell_edges: Vec<Vec<CellEdge>> = vec![Vec::new(); cells.len()];

    for (ci, loop_) in cells.iter().enumerate() {
        let n = loop_.len();
        for i in 0..n {
            let a = loop_[i];
            let b = loop_[(i + 1) % n];
            let key = (a.min(b), a.max(b));
            match edge_of_pair.get(&key) {
                None => {
                    let pa = vertices[a];
                    let pb = vertices[b];
                    let d = pb - pa;
                    let len = d.norm();
                    // Right of travel = outward from the traversing cell.
                    let normal = Vector2::new(d.y, -d.x) / len;
                    edges.push(Edge {
                        vertices: [a, b],
                        left: ci,
                        right: None,
                        normal,
                        midpoint: nalgebra::center(&pa, &pb),
                        length: len,
                    });
                    edge_of_pair.insert(key, edges.len() - 1);
                    cell_edges[ci].push(CellEdge { edge: edges.len() - 1, forward: true });
                }
                Some(&ei) => {
                    let e = &mut edges[ei];
                    if e.right.is_some() || e.vertices != [b, a] {
                        return Err(MeshError::NonManifoldEdge { v0: a, v1: b });
                    }
                    e.right = Some(ci);
                    cell_edges[ci].push(CellEdge { edge: ei, forward: false });
                }
            }
        }
    }

    let h = diameters.iter().cloned().fold(0.0, f64::max);
    Ok(PolygonalMesh {
        domain,
        vertices,
        cells,
        edges,
        cell_edges,
        centroids,
        diameters,
        areas,
        h,
    })
}

impl PolygonalMesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    /// Borrowed per-cell geometry view used by the local operators.
    pub fn cell(&self, cell: usize) -> CellView<'_> {
        CellView { mesh: self, cell }
    }

    /// Distance from each cell centroid to the cell boundary, edge/diameter
    /// ratios and vertex counts, as empirical shape-regularity proxies.
    pub fn regularity_report(&self) -> RegularityReport {
        let mut min_inr = f64::INFINITY;
        let mut min_edge = f64::INFINITY;
        let mut max_v = 0usize;
        for ci in 0..self.n_cells() {
            let view = self.cell(ci);
            let pts = view.points();
            max_v = max_v.max(pts.len());
            let c = self.centroids[ci];
            let hp = self.diameters[ci];
            let mut dist = f64::INFINITY;
            for i in 0..pts.len() {
                dist = dist.min(point_segment_distance(c, pts[i], pts[(i + 1) % pts.len()]));
            }
            min_inr = min_inr.min(dist / hp);
        }
        for e in &self.edges {
            for owner in [Some(e.left), e.right].into_iter().flatten() {
                min_edge = min_edge.min(e.length / self.diameters[owner]);
            }
        }
        RegularityReport {
            min_inradius_ratio: min_inr,
            min_edge_ratio: min_edge,
            max_vertices_per_cell: max_v,
        }
    }

    /// Serializes vertices, cells and the domain tag; edge topology is
    /// always re-derived on load.
    pub fn save_json(&self, path: &Path) -> Result<(), MeshError> {
        let file = MeshFile {
            vertices: self.vertices.iter().map(|p| [p.x, p.y]).collect(),
            cells: self.cells.clone(),
            domain: self.domain,
        };
        let mut out = serde_json::to_string(&file)?;
        out.push('\n');
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<PolygonalMesh, MeshError> {
        let text = std::fs::read_to_string(path)?;
        let file: MeshFile = serde_json::from_str(&text)?;
        build_mesh(
            file.vertices.iter().map(|&[x, y]| Point2::new(x, y)).collect(),
            file.cells,
            file.domain,
        )
    }
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    domain: Domain,
}

/// One edge of a cell boundary as seen from inside that cell.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub edge: usize,
    /// Global start / end points of the edge (global orientation, not the
    /// cell traversal order).
    pub p0: Point2,
    pub p1: Point2,
    /// Outward unit normal for this cell.
    pub outward_normal: Vector2,
    pub midpoint: Point2,
    pub length: f64,
    pub forward: bool,
}

/// Borrowed view of one cell with its geometry.
#[derive(Clone, Copy)]
pub struct CellView<'a> {
    pub mesh: &'a PolygonalMesh,
    pub cell: usize,
}

impl<'a> CellView<'a> {
    pub fn points(&self) -> Vec<Point2> {
        self.mesh.cells[self.cell]
            .iter()
            .map(|&v| self.mesh.vertices[v])
            .collect()
    }

    pub fn centroid(&self) -> Point2 {
        self.mesh.centroids[self.cell]
    }

    pub fn diameter(&self) -> f64 {
        self.mesh.diameters[self.cell]
    }

    pub fn area(&self) -> f64 {
        self.mesh.areas[self.cell]
    }

    pub fn n_edges(&self) -> usize {
        self.mesh.cell_edges[self.cell].len()
    }

    /// Boundary edges in traversal order, with globally oriented endpoints
    /// and this cell's outward normal.
    pub fn boundary_edges(&self) -> impl Iterator<Item = BoundaryEdge> + 'a {
        let mesh = self.mesh;
        let cell = self.cell;
        mesh.cell_edges[cell].iter().map(move |ce| {
            let e = &mesh.edges[ce.edge];
            let sign = if e.left == cell { 1.0 } else { -1.0 };
            BoundaryEdge {
                edge: ce.edge,
                p0: mesh.vertices[e.vertices[0]],
                p1: mesh.vertices[e.vertices[1]],
                outward_normal: e.normal * sign,
                midpoint: e.midpoint,
                length: e.length,
                forward: ce.forward,
            }
        })
    }
}

/// A free-standing single-cell mesh, convenient for local-operator work.
pub fn single_cell_mesh(points: &[Point2]) -> Result<PolygonalMesh, MeshError> {
    build_mesh(
        points.to_vec(),
        vec![(0..points.len()).collect()],
        Domain::UnitSquare,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square_cell() -> PolygonalMesh {
        single_cell_mesh(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn unit_square_geometry() {
        let m = unit_square_cell();
        assert_relative_eq!(m.areas[0], 1.0);
        assert_relative_eq!(m.diameters[0], 2f64.sqrt());
        assert_relative_eq!(m.centroids[0].x, 0.5);
        assert_relative_eq!(m.centroids[0].y, 0.5);
        assert_eq!(m.n_boundary_edges(), 4);
        assert_eq!(m.n_edges(), 4);
    }

    #[test]
    fn two_by_two_grid_counts() {
        let mut vertices = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                vertices.push(Point2::new(i as f64 / 2.0, j as f64 / 2.0));
            }
        }
        let idx = |i: usize, j: usize| j * 3 + i;
        let mut cells = Vec::new();
        for j in 0..2 {
            for i in 0..2 {
                cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let m = build_mesh(vertices, cells, Domain::UnitSquare).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_edges(), 12);
        assert_eq!(m.n_boundary_edges(), 8);
        assert_eq!(m.n_edges() - m.n_boundary_edges(), 4);
        let total: f64 = m.areas.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        // Euler: V - E + F = 1
        assert_eq!(m.vertices.len() as i64 - m.n_edges() as i64 + m.n_cells() as i64, 1);
    }

    #[test]
    fn duplicate_vertex_rejected() {
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let err = build_mesh(verts, vec![vec![0, 1, 2, 1]], Domain::UnitSquare).unwrap_err();
        assert!(matches!(err, MeshError::DuplicateVertexInLoop { .. }));
    }

    #[test]
    fn clockwise_loop_rejected() {
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
        ];
        let err = build_mesh(verts, vec![vec![0, 2, 1]], Domain::UnitSquare).unwrap_err();
        assert!(matches!(err, MeshError::ClockwiseLoop { .. }));
    }

    #[test]
    fn nonmanifold_edge_rejected() {
        // Three triangles all sharing edge (0, 1).
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.5, 1.0),
            Point2::new(0.5, -1.0),
            Point2::new(1.5, 1.0),
        ];
        let cells = vec![vec![0, 1, 2], vec![1, 0, 3], vec![0, 1, 4]];
        let err = build_mesh(verts, cells, Domain::UnitSquare).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { .. }));
    }

    #[test]
    fn edge_normals_point_lower_to_higher() {
        let verts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let cells = vec![vec![0, 1, 4, 5], vec![1, 2, 3, 4]];
        let m = build_mesh(verts, cells, Domain::UnitSquare).unwrap();
        let shared = m.edges.iter().find(|e| e.right.is_some()).unwrap();
        assert_eq!(shared.left, 0);
        assert_eq!(shared.right, Some(1));
        // cell 1 lies to the +x side of the shared edge
        assert_relative_eq!(shared.normal.x, 1.0, epsilon = 1e-15);
        assert_relative_eq!(shared.normal.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(shared.normal.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn square_regularity_ratio() {
        let m = unit_square_cell();
        let rep = m.regularity_report();
        assert_relative_eq!(rep.min_edge_ratio, 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(rep.min_inradius_ratio, 0.5 / 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(rep.max_vertices_per_cell, 4);
    }

    #[test]
    fn regular_hexagon_inradius_ratio() {
        // side s = 1: apothem sqrt(3)/2, diameter 2; ratio = sqrt(3)/4.
        let pts: Vec<Point2> = (0..6)
            .map(|i| {
                let a = std::f64::consts::PI / 3.0 * i as f64;
                Point2::new(a.cos(), a.sin())
            })
            .collect();
        let m = single_cell_mesh(&pts).unwrap();
        let rep = m.regularity_report();
        assert_relative_eq!(rep.min_inradius_ratio, 3f64.sqrt() / 4.0, epsilon = 1e-12);
        // brute-force oracle: largest min-distance-to-boundary over a grid
        let mut best = 0.0f64;
        for i in -40..=40 {
            for j in -40..=40 {
                let p = Point2::new(i as f64 / 40.0, j as f64 / 40.0);
                let inside = (0..6).all(|k| {
                    let a = pts[k];
                    let b = pts[(k + 1) % 6];
                    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) > 0.0
                });
                if inside {
                    let d = (0..6)
                        .map(|k| point_segment_distance(p, pts[k], pts[(k + 1) % 6]))
                        .fold(f64::INFINITY, f64::min);
                    best = best.max(d);
                }
            }
        }
        assert_relative_eq!(best, 3f64.sqrt() / 2.0, epsilon = 2e-2);
        assert!(rep.min_inradius_ratio <= best / 2.0 + 1e-9);
    }

    #[test]
    fn json_round_trip_rederives_edges() {
        let m = unit_square_cell();
        let dir = std::env::temp_dir().join("ncvem_mesh_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("square.json");
        m.save_json(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"vertices\""));
        assert!(text.contains("\"domain\":\"unit_square\""));
        assert!(!text.contains("edges"));
        let re = PolygonalMesh::load_json(&path).unwrap();
        assert_eq!(re.n_edges(), 4);
        assert_relative_eq!(re.areas[0], 1.0);
    }
}
