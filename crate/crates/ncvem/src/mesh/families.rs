//! The four benchmark mesh families on the unit square plus Voronoi meshes
//! of the L-shaped domain.
//!
//! Level `l` roughly halves the mesh size of level `l - 1`. Resolution per
//! family:
//!
//! * `random_quads` — `n x n` tensor grid, `n = 4 * 2^l`, interior vertices
//!   jittered uniformly in `[-h/4, h/4]^2`;
//! * `hexagonal_distorted` — Voronoi cells of a triangular seed lattice
//!   with spacing `0.32 / 2^l`, interior vertices displaced by the smooth
//!   field `0.1 h sin(2 pi x) sin(2 pi y) (1, 1)`;
//! * `nonconvex_octagon` — `n x n` grid, `n = 3 * 2^l`, each cell an
//!   octagon whose interior-edge midpoints are pushed sideways by `0.2 h`,
//!   which makes the receiving cell reentrant;
//! * `voronoi_cvt` — seeded random points relaxed by 100 Lloyd iterations
//!   (`12 * 4^l` cells on the square, `8 * 4^l` on the L-shape).

use super::voronoi::{index_polygon_soup, lloyd_cvt, mirrored_voronoi_cells, sample_seeds};
use super::{build_mesh, Domain, MeshError, PolygonalMesh};
use crate::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const MAX_LEVEL: usize = 6;
pub const LLOYD_ITERATIONS: usize = 100;

/// Benchmark mesh family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFamily {
    HexagonalDistorted,
    NonconvexOctagon,
    RandomQuads,
    VoronoiCvt,
}

impl MeshFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeshFamily::HexagonalDistorted => "hexagonal_distorted",
            MeshFamily::NonconvexOctagon => "nonconvex_octagon",
            MeshFamily::RandomQuads => "random_quads",
            MeshFamily::VoronoiCvt => "voronoi_cvt",
        }
    }

    pub const ALL: [MeshFamily; 4] = [
        MeshFamily::HexagonalDistorted,
        MeshFamily::NonconvexOctagon,
        MeshFamily::RandomQuads,
        MeshFamily::VoronoiCvt,
    ];
}

impl std::str::FromStr for MeshFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hexagonal_distorted" => Ok(MeshFamily::HexagonalDistorted),
            "nonconvex_octagon" => Ok(MeshFamily::NonconvexOctagon),
            "random_quads" => Ok(MeshFamily::RandomQuads),
            "voronoi_cvt" => Ok(MeshFamily::VoronoiCvt),
            other => Err(format!("unknown mesh family `{other}`")),
        }
    }
}

fn stream_rng(family: MeshFamily, level: usize, domain: Domain, seed: u64) -> ChaCha8Rng {
    let tag = match family {
        MeshFamily::HexagonalDistorted => 1u64,
        MeshFamily::NonconvexOctagon => 2,
        MeshFamily::RandomQuads => 3,
        MeshFamily::VoronoiCvt => 4,
    };
    let dtag = match domain {
        Domain::UnitSquare => 0u64,
        Domain::Lshape => 1,
    };
    let mixed = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (level as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ dtag.wrapping_mul(0x1656_67B1_9E37_79F9);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Generates a mesh of the requested family. Deterministic in
/// `(family, level, domain, seed)`.
pub fn generate_family(
    family: MeshFamily,
    level: usize,
    domain: Domain,
    seed: u64,
) -> Result<PolygonalMesh, MeshError> {
    if level > MAX_LEVEL {
        return Err(MeshError::LevelTooLarge { level });
    }
    if domain == Domain::Lshape && family != MeshFamily::VoronoiCvt {
        return Err(MeshError::UnsupportedCombination {
            family: family.as_str().to_owned(),
            domain: domain.as_str().to_owned(),
        });
    }
    let mut rng = stream_rng(family, level, domain, seed);
    match family {
        MeshFamily::RandomQuads => random_quads(level, &mut rng),
        MeshFamily::NonconvexOctagon => nonconvex_octagon(level),
        MeshFamily::HexagonalDistorted => hexagonal_distorted(level),
        MeshFamily::VoronoiCvt => voronoi_cvt(level, domain, &mut rng),
    }
}

fn random_quads(level: usize, rng: &mut impl Rng) -> Result<PolygonalMesh, MeshError> {
    let n = 4usize << level;
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let mut p = Point2::new(i as f64 * h, j as f64 * h);
            if i > 0 && i < n && j > 0 && j < n {
                p.x += rng.random_range(-0.25 * h..0.25 * h);
                p.y += rng.random_range(-0.25 * h..0.25 * h);
            }
            vertices.push(p);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build_mesh(vertices, cells, Domain::UnitSquare)
}

fn nonconvex_octagon(level: usize) -> Result<PolygonalMesh, MeshError> {
    let n = 3usize << level;
    let h = 1.0 / n as f64;
    let push = 0.2 * h;
    let corner = |i: usize, j: usize| j * (n + 1) + i;
    let n_corners = (n + 1) * (n + 1);
    // midpoint ids: vertical edge (i, j)-(i, j+1): i in 0..=n, j in 0..n
    let vmid = |i: usize, j: usize| n_corners + j * (n + 1) + i;
    let n_vmid = (n + 1) * n;
    // horizontal edge (i, j)-(i+1, j): i in 0..n, j in 0..=n
    let hmid = |i: usize, j: usize| n_corners + n_vmid + j * n + i;

    let mut vertices = vec![Point2::origin(); n_corners + n_vmid + n * (n + 1)];
    for j in 0..=n {
        for i in 0..=n {
            vertices[corner(i, j)] = Point2::new(i as f64 * h, j as f64 * h);
        }
    }
    for j in 0..n {
        for i in 0..=n {
            // interior vertical-edge midpoints pushed toward the left cell
            let dx = if i > 0 && i < n { -push } else { 0.0 };
            vertices[vmid(i, j)] = Point2::new(i as f64 * h + dx, (j as f64 + 0.5) * h);
        }
    }
    for j in 0..=n {
        for i in 0..n {
            // interior horizontal-edge midpoints pushed toward the lower cell
            let dy = if j > 0 && j < n { -push } else { 0.0 };
            vertices[hmid(i, j)] = Point2::new((i as f64 + 0.5) * h, j as f64 * h + dy);
        }
    }
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![
                corner(i, j),
                hmid(i, j),
                corner(i + 1, j),
                vmid(i + 1, j),
                corner(i + 1, j + 1),
                hmid(i, j + 1),
                corner(i, j + 1),
                vmid(i, j),
            ]);
        }
    }
    build_mesh(vertices, cells, Domain::UnitSquare)
}

fn hexagonal_distorted(level: usize) -> Result<PolygonalMesh, MeshError> {
    // Round the triangular-lattice spacing so seed rows and columns sit at
    // a fixed fraction of a cell away from the boundary at every level;
    // this keeps the clipped boundary cells uniformly shaped.
    let target = 0.32 / (1usize << level) as f64;
    let nx = (1.0 / target).round().max(2.0);
    let a = 1.0 / nx;
    let ny = (1.0 / (a * 3f64.sqrt() / 2.0)).round().max(2.0);
    let dy = 1.0 / ny;
    let mut seeds = Vec::new();
    let jmax = ny as i64;
    let imax = nx as i64;
    for j in 0..jmax {
        for i in -1..=imax {
            let x = (i as f64 + 0.5) * a + if j.rem_euclid(2) == 1 { 0.5 * a } else { 0.0 };
            let y = (j as f64 + 0.5) * dy;
            if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
                seeds.push(Point2::new(x, y));
            }
        }
    }
    let boundary = Domain::UnitSquare.polygon();
    let cells = mirrored_voronoi_cells(&seeds, &boundary);
    let (mut pts, loops) = index_polygon_soup(&cells, &boundary, 0.05);

    // Smooth interior distortion, scaled by the undistorted mesh size.
    let undistorted = build_mesh(pts.clone(), loops.clone(), Domain::UnitSquare)?;
    let h = undistorted.h;
    let tp = std::f64::consts::TAU;
    for p in &mut pts {
        let on_boundary =
            p.x.abs() < 1e-12 || (p.x - 1.0).abs() < 1e-12 || p.y.abs() < 1e-12 || (p.y - 1.0).abs() < 1e-12;
        if !on_boundary {
            let d = 0.1 * h * (tp * p.x).sin() * (tp * p.y).sin();
            p.x += d;
            p.y += d;
        }
    }
    build_mesh(pts, loops, Domain::UnitSquare)
}

fn voronoi_cvt(level: usize, domain: Domain, rng: &mut impl Rng) -> Result<PolygonalMesh, MeshError> {
    let n_seeds = match domain {
        Domain::UnitSquare => 12 * (1usize << (2 * level)),
        Domain::Lshape => 8 * (1usize << (2 * level)),
    };
    let boundary = domain.polygon();
    let mut seeds = sample_seeds(n_seeds, &boundary, rng);
    lloyd_cvt(&mut seeds, &boundary, LLOYD_ITERATIONS);
    let cells = mirrored_voronoi_cells(&seeds, &boundary);
    let (pts, loops) = index_polygon_soup(&cells, &boundary, 0.08);
    build_mesh(pts, loops, domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn voronoi_generation_is_deterministic() {
        let a = generate_family(MeshFamily::VoronoiCvt, 1, Domain::UnitSquare, 42).unwrap();
        let b = generate_family(MeshFamily::VoronoiCvt, 1, Domain::UnitSquare, 42).unwrap();
        assert_eq!(a.vertices.len(), b.vertices.len());
        assert_eq!(a.cells, b.cells);
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert_eq!(p, q); // bitwise
        }
    }

    #[test]
    fn octagon_mesh_has_reentrant_cells() {
        let m = generate_family(MeshFamily::NonconvexOctagon, 0, Domain::UnitSquare, 0).unwrap();
        let mut found = false;
        'outer: for ci in 0..m.n_cells() {
            let pts = m.cell(ci).points();
            let n = pts.len();
            for i in 0..n {
                let a = pts[(i + n - 1) % n];
                let b = pts[i];
                let c = pts[(i + 1) % n];
                let cross = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
                if cross < -1e-12 {
                    found = true; // interior angle > pi
                    break 'outer;
                }
            }
        }
        assert!(found, "octagon family must contain a nonconvex cell");
    }

    #[test]
    fn random_quads_topology_matches_tensor_grid() {
        let m = generate_family(MeshFamily::RandomQuads, 2, Domain::UnitSquare, 7).unwrap();
        let n = 4usize << 2;
        assert_eq!(m.vertices.len(), (n + 1) * (n + 1));
        assert_eq!(m.n_cells(), n * n);
        assert_eq!(m.n_edges(), 2 * n * (n + 1));
    }

    #[test]
    fn lshape_only_for_voronoi() {
        let err = generate_family(MeshFamily::RandomQuads, 0, Domain::Lshape, 0).unwrap_err();
        assert!(matches!(err, MeshError::UnsupportedCombination { .. }));
    }

    #[test]
    fn families_cover_domain_and_halve_h() {
        for family in MeshFamily::ALL {
            let mut prev_h = f64::INFINITY;
            for level in 0..=2 {
                let m = generate_family(family, level, Domain::UnitSquare, 5).unwrap();
                let total: f64 = m.areas.iter().sum();
                assert_relative_eq!(total, 1.0, epsilon = 1e-10);
                let ratio = m.h / prev_h;
                if level > 0 {
                    assert!(
                        ratio > 0.35 && ratio < 0.75,
                        "{family:?} level {level}: h ratio {ratio}"
                    );
                }
                prev_h = m.h;
                // Euler relation on the simply connected square
                assert_eq!(
                    m.vertices.len() as i64 - m.n_edges() as i64 + m.n_cells() as i64,
                    1,
                    "{family:?} level {level}"
                );
            }
        }
    }

    #[test]
    fn regularity_smoke_bound_across_levels() {
        for family in MeshFamily::ALL {
            for level in 0..=2 {
                let m = generate_family(family, level, Domain::UnitSquare, 5).unwrap();
                let rep = m.regularity_report();
                assert!(
                    rep.min_inradius_ratio >= 0.05 && rep.min_edge_ratio >= 0.05,
                    "{family:?} level {level}: {rep:?}"
                );
                assert!(rep.min_inradius_ratio > 0.0 && rep.min_inradius_ratio <= 1.0);
            }
        }
    }
}
