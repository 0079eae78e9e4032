//! Gauss–Legendre tables and quadrature rules on edges, triangles and
//! simple polygons.
//!
//! The 1D nodes/weights are tabulated up to 10 points (exactness degree 19),
//! which covers every polynomial exactness requirement of the library with
//! margin. Polygon rules for non-polynomial integrands triangulate the cell
//! (centroid fan when the cell is star-shaped with respect to its centroid,
//! ear clipping otherwise) and place a tensor Gauss rule on each triangle
//! through the Duffy map; `n`-point rules are exact for bivariate
//! polynomials of degree `2n - 2`.

use crate::{Point2, Vector2};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, `GAUSS_LEGENDRE[n-1]`
/// holds the `n`-point rule.
pub const GAUSS_LEGENDRE: [&[(f64, f64)]; 10] = [
    &[(0.0, 2.0)],
    &[
        (-0.5773502691896257645, 1.0),
        (0.5773502691896257645, 1.0),
    ],
    &[
        (-0.7745966692414833770, 0.5555555555555555556),
        (0.0, 0.8888888888888888889),
        (0.7745966692414833770, 0.5555555555555555556),
    ],
    &[
        (-0.8611363115940525752, 0.3478548451374538574),
        (-0.3399810435848562648, 0.6521451548625461426),
        (0.3399810435848562648, 0.6521451548625461426),
        (0.8611363115940525752, 0.3478548451374538574),
    ],
    &[
        (-0.9061798459386639928, 0.2369268850561890875),
        (-0.5384693101056830910, 0.4786286704993664680),
        (0.0, 0.5688888888888888889),
        (0.5384693101056830910, 0.4786286704993664680),
        (0.9061798459386639928, 0.2369268850561890875),
    ],
    &[
        (-0.9324695142031520278, 0.1713244923791703450),
        (-0.6612093864662645137, 0.3607615730481386076),
        (-0.2386191860831969086, 0.4679139345726910474),
        (0.2386191860831969086, 0.4679139345726910474),
        (0.6612093864662645137, 0.3607615730481386076),
        (0.9324695142031520278, 0.1713244923791703450),
    ],
    &[
        (-0.9491079123427585245, 0.1294849661688696933),
        (-0.7415311855993944399, 0.2797053914892766679),
        (-0.4058451513773971669, 0.3818300505051189450),
        (0.0, 0.4179591836734693878),
        (0.4058451513773971669, 0.3818300505051189450),
        (0.7415311855993944399, 0.2797053914892766679),
        (0.9491079123427585245, 0.1294849661688696933),
    ],
    &[
        (-0.9602898564975362317, 0.1012285362903762592),
        (-0.7966664774136267396, 0.2223810344533744705),
        (-0.5255324099163289858, 0.3137066458778872873),
        (-0.1834346424956498049, 0.3626837833783619830),
        (0.1834346424956498049, 0.3626837833783619830),
        (0.5255324099163289858, 0.3137066458778872873),
        (0.7966664774136267396, 0.2223810344533744705),
        (0.9602898564975362317, 0.1012285362903762592),
    ],
    &[
        (-0.9681602395076260898, 0.08127438836157441197),
        (-0.8360311073266357943, 0.1806481606948574041),
        (-0.6133714327005903973, 0.2606106964029354623),
        (-0.3242534234038089290, 0.3123470770400028401),
        (0.0, 0.3302393550012597632),
        (0.3242534234038089290, 0.3123470770400028401),
        (0.6133714327005903973, 0.2606106964029354623),
        (0.8360311073266357943, 0.1806481606948574041),
        (0.9681602395076260898, 0.08127438836157441197),
    ],
    &[
        (-0.9739065285171717201, 0.06667134430868813759),
        (-0.8650633666889845107, 0.1494513491505805931),
        (-0.6794095682990244062, 0.2190863625159820440),
        (-0.4333953941292471908, 0.2692667193099963551),
        (-0.1488743389816312109, 0.2955242247147528702),
        (0.1488743389816312109, 0.2955242247147528702),
        (0.4333953941292471908, 0.2692667193099963551),
        (0.6794095682990244062, 0.2190863625159820440),
        (0.8650633666889845107, 0.1494513491505805931),
        (0.9739065285171717201, 0.06667134430868813759),
    ],
];

/// The `n`-point Gauss–Legendre rule (1 ≤ n ≤ 10), exact to degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    GAUSS_LEGENDRE[n.clamp(1, 10) - 1]
}

/// Smallest rule exact for 1D polynomials of the given degree.
pub fn rule_for_degree(degree: usize) -> &'static [(f64, f64)] {
    gauss_legendre(degree / 2 + 1)
}

/// Integrates `f` along the segment `a -> b` with an `n`-point rule
/// (includes the arc-length measure).
pub fn integrate_segment(a: Point2, b: Point2, n: usize, mut f: impl FnMut(Point2) -> f64) -> f64 {
    let mid = nalgebra::center(&a, &b);
    let half: Vector2 = (b - a) * 0.5;
    let len = (b - a).norm();
    let mut acc = 0.0;
    for &(x, w) in gauss_legendre(n) {
        acc += w * f(mid + half * x);
    }
    acc * 0.5 * len
}

/// A 2D quadrature node with its weight (weights sum to the cell area).
pub type QuadPoint = (Point2, f64);

fn signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

fn centroid(pts: &[Point2]) -> Point2 {
    let n = pts.len();
    let area = signed_area(pts);
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

/// Duffy-mapped tensor Gauss points on the triangle `(p0, p1, p2)`;
/// exact for polynomials of degree `2n - 2`.
fn triangle_duffy(p0: Point2, p1: Point2, p2: Point2, n: usize, out: &mut Vec<QuadPoint>) {
    let rule = gauss_legendre(n);
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let jac = (e1.x * e2.y - e1.y * e2.x).abs();
    for &(xu, wu) in rule {
        let u = 0.5 * (xu + 1.0);
        for &(xv, wv) in rule {
            let v = 0.5 * (xv + 1.0);
            // (u, v(1-u)) maps the unit square onto the reference triangle.
            let r = u;
            let s = v * (1.0 - u);
            let w = 0.25 * wu * wv * (1.0 - u) * jac;
            out.push((p0 + e1 * r + e2 * s, w));
        }
    }
}

/// True if every centroid fan triangle of the loop is positively oriented,
/// i.e. the polygon is star-shaped with respect to its centroid.
fn star_shaped_wrt_centroid(pts: &[Point2], c: Point2) -> bool {
    let n = pts.len();
    let area = signed_area(pts);
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let tri2 = (p.x - c.x) * (q.y - c.y) - (q.x - c.x) * (p.y - c.y);
        if tri2 <= 1e-12 * area.abs() {
            return false;
        }
    }
    true
}

/// Ear-clipping triangulation of a simple CCW polygon; returns index triples.
pub fn ear_clip(pts: &[Point2]) -> Vec<[usize; 3]> {
    let n = pts.len();
    assert!(n >= 3, "polygon needs at least 3 vertices");
    let mut idx: Vec<usize> = (0..n).collect();
    let mut tris = Vec::with_capacity(n - 2);
    let cross = |a: Point2, b: Point2, c: Point2| (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let inside = |a: Point2, b: Point2, c: Point2, p: Point2| {
        cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
    };
    let mut guard = 0usize;
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let (ia, ib, ic) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if cross(a, b, c) <= 0.0 {
                continue; // reflex or collinear corner, not an ear
            }
            let mut ok = true;
            for &j in &idx {
                if j == ia || j == ib || j == ic {
                    continue;
                }
                if inside(a, b, c, pts[j]) {
                    ok = false;
                    break;
                }
            }
            if ok {
                tris.push([ia, ib, ic]);
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        guard += 1;
        if !clipped || guard > 4 * n {
            // Collinear chains can starve strict ears; fall back to clipping
            // the least-reflex corner to keep making progress.
            let m = idx.len();
            let mut best = 0;
            let mut best_cross = f64::NEG_INFINITY;
            for i in 0..m {
                let (a, b, c) = (
                    pts[idx[(i + m - 1) % m]],
                    pts[idx[i]],
                    pts[idx[(i + 1) % m]],
                );
                let cr = cross(a, b, c);
                if cr > best_cross {
                    best_cross = cr;
                    best = i;
                }
            }
            let m = idx.len();
            tris.push([idx[(best + m - 1) % m], idx[best], idx[(best + 1) % m]]);
            idx.remove(best);
            guard = 0;
        }
    }
    tris.push([idx[0], idx[1], idx[2]]);
    tris
}

/// Quadrature over a simple CCW polygon, exact for polynomials of degree
/// `2n - 2`. Star-shaped-from-centroid cells use a centroid fan, the rest
/// are ear-clipped.
pub fn polygon_quadrature(pts: &[Point2], n: usize) -> Vec<QuadPoint> {
    let m = pts.len();
    let c = centroid(pts);
    let mut out = Vec::with_capacity(m * n * n);
    if star_shaped_wrt_centroid(pts, c) {
        for i in 0..m {
            triangle_duffy(c, pts[i], pts[(i + 1) % m], n, &mut out);
        }
    } else {
        for tri in ear_clip(pts) {
            triangle_duffy(pts[tri[0]], pts[tri[1]], pts[tri[2]], n, &mut out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_rules_integrate_monomials_exactly() {
        for n in 1..=10usize {
            let rule = gauss_legendre(n);
            for d in 0..=(2 * n - 1) {
                let num: f64 = rule.iter().map(|&(x, w)| w * x.powi(d as i32)).sum();
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                assert_relative_eq!(num, exact, epsilon = 1e-14, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn segment_rule_measures_length() {
        let v = integrate_segment(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0), 2, |_| 1.0);
        assert_relative_eq!(v, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn polygon_rule_on_unit_square() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let pts = polygon_quadrature(&sq, 5);
        let area: f64 = pts.iter().map(|&(_, w)| w).sum();
        assert_relative_eq!(area, 1.0, epsilon = 1e-13);
        // degree-8 monomial, exact for n = 5
        let v: f64 = pts.iter().map(|&(p, w)| w * p.x.powi(4) * p.y.powi(4)).sum();
        assert_relative_eq!(v, 1.0 / 25.0, epsilon = 1e-13);
    }

    #[test]
    fn nonconvex_polygon_area() {
        // L-shaped hexagon, area 3/4
        let l = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.5),
            Point2::new(0.5, 0.5),
            Point2::new(0.5, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let pts = polygon_quadrature(&l, 4);
        let area: f64 = pts.iter().map(|&(_, w)| w).sum();
        assert_relative_eq!(area, 0.75, epsilon = 1e-13);
    }
}
