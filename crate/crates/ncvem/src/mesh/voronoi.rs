//! Clipped Voronoi diagrams and Lloyd relaxation for centroidal Voronoi
//! meshes on convex or L-shaped domains.
//!
//! Each Voronoi cell is computed by clipping the domain polygon against the
//! perpendicular-bisector half-planes of nearby seeds. A uniform bin grid
//! over the seeds limits the candidate set: a seed farther than twice the
//! current cell radius cannot cut the cell, so rings of bins are visited
//! until that bound is passed.

use crate::{Point2, Vector2};
use rand::Rng;

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

fn polygon_centroid(pts: &[Point2]) -> Point2 {
    let n = pts.len();
    let area = polygon_signed_area(pts);
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

/// Keeps the part of `poly` with `(x - origin) . dir <= 0`.
fn clip_halfplane(poly: &[Point2], origin: Point2, dir: Vector2) -> Vec<Point2> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let n = poly.len();
    for i in 0..n {
        let cur = poly[i];
        let nxt = poly[(i + 1) % n];
        let fc = (cur - origin).dot(&dir);
        let fnx = (nxt - origin).dot(&dir);
        if fc <= 0.0 {
            out.push(cur);
        }
        if (fc < 0.0 && fnx > 0.0) || (fc > 0.0 && fnx < 0.0) {
            let t = fc / (fc - fnx);
            out.push(cur + (nxt - cur) * t);
        }
    }
    out
}

struct SeedGrid {
    bins: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
    min: Point2,
    cell: f64,
}

impl SeedGrid {
    fn new(seeds: &[Point2], spacing: f64) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in seeds {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        let cell = spacing.max(1e-12);
        let nx = (((max.x - min.x) / cell).ceil() as usize + 1).max(1);
        let ny = (((max.y - min.y) / cell).ceil() as usize + 1).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        for (i, p) in seeds.iter().enumerate() {
            let bx = (((p.x - min.x) / cell) as usize).min(nx - 1);
            let by = (((p.y - min.y) / cell) as usize).min(ny - 1);
            bins[by * nx + bx].push(i);
        }
        SeedGrid { bins, nx, ny, min, cell }
    }

    fn bin_of(&self, p: Point2) -> (i64, i64) {
        (
            (((p.x - self.min.x) / self.cell) as i64).clamp(0, self.nx as i64 - 1),
            (((p.y - self.min.y) / self.cell) as i64).clamp(0, self.ny as i64 - 1),
        )
    }

    /// Seeds in bins at Chebyshev ring `r` around `center`.
    fn ring(&self, center: (i64, i64), r: i64, out: &mut Vec<usize>) {
        out.clear();
        let (cx, cy) = center;
        let push = |out: &mut Vec<usize>, x: i64, y: i64, grid: &SeedGrid| {
            if x >= 0 && y >= 0 && (x as usize) < grid.nx && (y as usize) < grid.ny {
                out.extend_from_slice(&grid.bins[y as usize * grid.nx + x as usize]);
            }
        };
        if r == 0 {
            push(out, cx, cy, self);
            return;
        }
        for x in (cx - r)..=(cx + r) {
            push(out, x, cy - r, self);
            push(out, x, cy + r, self);
        }
        for y in (cy - r + 1)..(cy + r) {
            push(out, cx - r, y, self);
            push(out, cx + r, y, self);
        }
    }
}

/// Voronoi cells of `seeds` clipped to the (possibly nonconvex) CCW
/// `boundary` polygon. Cells of seeds whose region misses the domain come
/// back empty.
pub fn voronoi_cells(seeds: &[Point2], boundary: &[Point2]) -> Vec<Vec<Point2>> {
    voronoi_cells_for(seeds, boundary, seeds.len())
}

/// Like [`voronoi_cells`] but computes cells only for the first `count`
/// seeds; the remaining seeds (e.g. boundary mirrors) still cut the cells.
pub fn voronoi_cells_for(
    seeds: &[Point2],
    boundary: &[Point2],
    count: usize,
) -> Vec<Vec<Point2>> {
    let n = count.min(seeds.len());
    let area = polygon_signed_area(boundary).abs();
    let spacing = (area / seeds.len().max(1) as f64).sqrt();
    let grid = SeedGrid::new(seeds, spacing);
    let max_ring = (grid.nx.max(grid.ny) + 1) as i64;

    let mut cells = Vec::with_capacity(n);
    let mut candidates: Vec<usize> = Vec::new();
    for (i, &p) in seeds.iter().enumerate().take(n) {
        let mut poly: Vec<Point2> = boundary.to_vec();
        let mut radius2 = poly
            .iter()
            .map(|q| (q - p).norm_squared())
            .fold(0.0f64, f64::max);
        let center = grid.bin_of(p);
        'rings: for r in 0..=max_ring {
            // Bins on ring r hold no point closer than (r-1) * cell.
            let ring_min_dist = (r - 1).max(0) as f64 * grid.cell;
            if ring_min_dist * ring_min_dist > 4.0 * radius2 {
                break;
            }
            grid.ring(center, r, &mut candidates);
            candidates.sort_by(|&a, &b| {
                (seeds[a] - p)
                    .norm_squared()
                    .total_cmp(&(seeds[b] - p).norm_squared())
            });
            for &j in &candidates {
                if j == i {
                    continue;
                }
                let d = seeds[j] - p;
                let d2 = d.norm_squared();
                if d2 < 1e-28 {
                    continue; // coincident seeds
                }
                if d2 > 4.0 * radius2 {
                    break; // ring candidates are distance-sorted
                }
                let mid = p + d * 0.5;
                poly = clip_halfplane(&poly, mid, d);
                if poly.len() < 3 {
                    poly.clear();
                    break 'rings;
                }
                radius2 = poly
                    .iter()
                    .map(|q| (q - p).norm_squared())
                    .fold(0.0f64, f64::max);
            }
        }
        cells.push(poly);
    }
    cells
}

/// Mirror images of the seeds lying within `band` of a boundary segment,
/// reflected across that segment's line. Keeping such mirrors in the seed
/// set forces the Voronoi diagram to produce cell edges on the boundary
/// itself, so clipped boundary cells stay well shaped.
pub fn mirror_seeds(seeds: &[Point2], boundary: &[Point2], band: f64) -> Vec<Point2> {
    let n = boundary.len();
    let mut mirrors = Vec::new();
    for &p in seeds {
        for i in 0..n {
            let a = boundary[i];
            let b = boundary[(i + 1) % n];
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = (p - a).dot(&ab) / len2;
            if !(-0.25..=1.25).contains(&t) {
                continue;
            }
            let foot = a + ab * t;
            let d = p - foot;
            let dist = d.norm();
            if dist > band || dist < 1e-14 {
                continue;
            }
            // reflect only seeds on the interior side of the segment
            let inward = Vector2::new(-ab.y, ab.x); // CCW boundary: interior on the left
            if d.dot(&inward) > 0.0 {
                mirrors.push(foot - d);
            }
        }
    }
    mirrors
}

/// Runs `iters` Lloyd iterations (seed -> centroid of its clipped cell),
/// maintaining boundary mirrors of the current seeds throughout.
pub fn lloyd_cvt(seeds: &mut Vec<Point2>, boundary: &[Point2], iters: usize) {
    let n = seeds.len();
    let area = polygon_signed_area(boundary).abs();
    let band = 1.5 * (area / n.max(1) as f64).sqrt();
    for _ in 0..iters {
        let mut all = seeds.clone();
        all.extend(mirror_seeds(seeds, boundary, band));
        let cells = voronoi_cells_for(&all, boundary, n);
        for (s, cell) in seeds.iter_mut().zip(&cells) {
            if cell.len() >= 3 && polygon_signed_area(cell).abs() > 1e-300 {
                *s = polygon_centroid(cell);
            }
        }
    }
}

/// Final clipped Voronoi cells of the seeds, with boundary mirrors active.
pub fn mirrored_voronoi_cells(seeds: &[Point2], boundary: &[Point2]) -> Vec<Vec<Point2>> {
    let n = seeds.len();
    let area = polygon_signed_area(boundary).abs();
    let band = 1.5 * (area / n.max(1) as f64).sqrt();
    let mut all = seeds.to_vec();
    all.extend(mirror_seeds(seeds, boundary, band));
    voronoi_cells_for(&all, boundary, n)
}

fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let xc = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < xc {
                inside = !inside;
            }
        }
    }
    inside
}

/// Uniform rejection sampling of `n` seed points inside the polygon.
pub fn sample_seeds(n: usize, boundary: &[Point2], rng: &mut impl Rng) -> Vec<Point2> {
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in boundary {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let mut seeds = Vec::with_capacity(n);
    while seeds.len() < n {
        let p = Point2::new(
            rng.random_range(min.x..max.x),
            rng.random_range(min.y..max.y),
        );
        if point_in_polygon(p, boundary) {
            seeds.push(p);
        }
    }
    seeds
}

// --- polygon soup -> indexed mesh -----------------------------------------

enum PointClass {
    Corner,
    Boundary,
    Interior,
}

fn classify(p: Point2, boundary: &[Point2], tol: f64) -> PointClass {
    let n = boundary.len();
    for q in boundary.iter() {
        if (p - q).norm() <= tol {
            return PointClass::Corner;
        }
    }
    for i in 0..n {
        let a = boundary[i];
        let b = boundary[(i + 1) % n];
        let ab = b - a;
        let t = (p - a).dot(&ab) / ab.norm_squared();
        if (-1e-12..=1.0 + 1e-12).contains(&t) && (p - (a + ab * t)).norm() <= tol {
            return PointClass::Boundary;
        }
    }
    PointClass::Interior
}

struct Welder {
    map: std::collections::HashMap<(i64, i64), Vec<usize>>,
    pts: Vec<Point2>,
    tol: f64,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Welder { map: Default::default(), pts: Vec::new(), tol }
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        ((p.x / self.tol).round() as i64, (p.y / self.tol).round() as i64)
    }

    fn insert(&mut self, p: Point2) -> usize {
        let (kx, ky) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.map.get(&(kx + dx, ky + dy)) {
                    for &id in ids {
                        if (self.pts[id] - p).norm() <= self.tol {
                            return id;
                        }
                    }
                }
            }
        }
        let id = self.pts.len();
        self.pts.push(p);
        self.map.entry((kx, ky)).or_default().push(id);
        id
    }
}

/// Indexes a Voronoi polygon soup into shared vertices and collapses edges
/// shorter than `collapse_frac * sqrt(mean cell area)`. Boundary vertices
/// stay on their boundary segment and domain corners never move, so the
/// covered region is preserved exactly.
pub fn index_polygon_soup(
    polys: &[Vec<Point2>],
    boundary: &[Point2],
    collapse_frac: f64,
) -> (Vec<Point2>, Vec<Vec<usize>>) {
    let total_area: f64 = polys.iter().map(|p| polygon_signed_area(p).abs()).sum();
    let n_cells = polys.iter().filter(|p| p.len() >= 3).count().max(1);
    let scale = (total_area / n_cells as f64).sqrt();
    let weld_tol = 1e-8 * scale;

    let mut welder = Welder::new(weld_tol);
    let mut cells: Vec<Vec<usize>> = Vec::new();
    for poly in polys {
        if poly.len() < 3 {
            continue;
        }
        let mut loop_: Vec<usize> = poly.iter().map(|&p| welder.insert(p)).collect();
        loop_.dedup();
        while loop_.len() > 1 && loop_.first() == loop_.last() {
            loop_.pop();
        }
        if loop_.len() >= 3 {
            cells.push(loop_);
        }
    }
    let mut pts = welder.pts;

    // Short-edge collapse, repeated until stable.
    let threshold = collapse_frac * scale;
    if threshold > 0.0 {
        for _pass in 0..8 {
            let mut parent: Vec<usize> = (0..pts.len()).collect();
            fn find(parent: &mut Vec<usize>, i: usize) -> usize {
                let mut r = i;
                while parent[r] != r {
                    r = parent[r];
                }
                let mut c = i;
                while parent[c] != c {
                    let nx = parent[c];
                    parent[c] = r;
                    c = nx;
                }
                r
            }
            let mut merged_any = false;
            for loop_ in &cells {
                let n = loop_.len();
                for i in 0..n {
                    let a = find(&mut parent, loop_[i]);
                    let b = find(&mut parent, loop_[(i + 1) % n]);
                    if a == b {
                        continue;
                    }
                    if (pts[a] - pts[b]).norm() < threshold {
                        // never merge two distinct domain corners
                        let ca = classify(pts[a], boundary, weld_tol);
                        let cb = classify(pts[b], boundary, weld_tol);
                        if matches!(ca, PointClass::Corner) && matches!(cb, PointClass::Corner) {
                            continue;
                        }
                        parent[b.max(a)] = b.min(a);
                        merged_any = true;
                    }
                }
            }
            if !merged_any {
                break;
            }
            // Merged position: corner wins, else stay on the boundary
            // segment, else average.
            let mut groups: std::collections::HashMap<usize, Vec<usize>> = Default::default();
            for i in 0..pts.len() {
                let r = find(&mut parent, i);
                groups.entry(r).or_default().push(i);
            }
            let mut newpos = pts.clone();
            for (&root, members) in &groups {
                if members.len() == 1 {
                    continue;
                }
                let mut corner = None;
                let mut on_boundary: Vec<usize> = Vec::new();
                for &m in members {
                    match classify(pts[m], boundary, weld_tol) {
                        PointClass::Corner => corner = Some(m),
                        PointClass::Boundary => on_boundary.push(m),
                        PointClass::Interior => {}
                    }
                }
                let pos = if let Some(c) = corner {
                    pts[c]
                } else if !on_boundary.is_empty() {
                    let mut acc = Vector2::zeros();
                    for &m in &on_boundary {
                        acc += pts[m].coords;
                    }
                    Point2::from(acc / on_boundary.len() as f64)
                } else {
                    let mut acc = Vector2::zeros();
                    for &m in members {
                        acc += pts[m].coords;
                    }
                    Point2::from(acc / members.len() as f64)
                };
                newpos[root] = pos;
            }
            pts = newpos;
            let mut next_cells = Vec::with_capacity(cells.len());
            for loop_ in &cells {
                let mut mapped: Vec<usize> = loop_.iter().map(|&v| find(&mut parent, v)).collect();
                mapped.dedup();
                while mapped.len() > 1 && mapped.first() == mapped.last() {
                    mapped.pop();
                }
                if mapped.len() >= 3 {
                    next_cells.push(mapped);
                }
            }
            cells = next_cells;
        }
    }

    // Drop unused vertices, renumber densely.
    let mut used = vec![false; pts.len()];
    for loop_ in &cells {
        for &v in loop_ {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; pts.len()];
    let mut out_pts = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = out_pts.len();
            out_pts.push(pts[i]);
        }
    }
    let out_cells = cells
        .into_iter()
        .map(|loop_| loop_.into_iter().map(|v| remap[v]).collect())
        .collect();
    (out_pts, out_cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn voronoi_partitions_square() {
        let boundary = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut seeds = sample_seeds(40, &boundary, &mut rng);
        lloyd_cvt(&mut seeds, &boundary, 20);
        let cells = voronoi_cells(&seeds, &boundary);
        let total: f64 = cells.iter().map(|c| polygon_signed_area(c).abs()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lshape_partition_and_mesh() {
        let boundary = crate::mesh::Domain::Lshape.polygon();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut seeds = sample_seeds(60, &boundary, &mut rng);
        lloyd_cvt(&mut seeds, &boundary, 30);
        let cells = voronoi_cells(&seeds, &boundary);
        let (pts, loops) = index_polygon_soup(&cells, &boundary, 0.08);
        let mesh = crate::mesh::build_mesh(pts, loops, crate::mesh::Domain::Lshape).unwrap();
        let total: f64 = mesh.areas.iter().sum();
        assert_relative_eq!(total, 3.0, epsilon = 1e-10);
        // Euler relation for a simply connected planar subdivision
        assert_eq!(
            mesh.vertices.len() as i64 - mesh.n_edges() as i64 + mesh.n_cells() as i64,
            1
        );
    }
}
