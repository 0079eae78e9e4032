use ncvem::eigsolve::{solve_gevp, StiffnessKind};
use ncvem::forms::{assemble, FormOptions, MassVariant};
use ncvem::harness::fit_rate;
use ncvem::mesh::*;
use ncvem::vemspace::BoundaryCondition;
use ncvem::Point2;

// undistorted hexagonal tiling at a given spacing
fn hex_mesh(a_target: f64, distort: f64) -> PolygonalMesh {
    let nx = (1.0 / a_target).round().max(2.0);
    let a = 1.0 / nx;
    let ny = (1.0 / (a * 3f64.sqrt() / 2.0)).round().max(2.0);
    let dy = 1.0 / ny;
    let mut seeds = Vec::new();
    for j in 0..(ny as i64) {
        for i in -1..=(nx as i64) {
            let x = (i as f64 + 0.5) * a + if j.rem_euclid(2) == 1 { 0.5 * a } else { 0.0 };
            let y = (j as f64 + 0.5) * dy;
            if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
                seeds.push(Point2::new(x, y));
            }
        }
    }
    let boundary = Domain::UnitSquare.polygon();
    let cells = mirrored_voronoi_cells(&seeds, &boundary);
    let (mut pts, loops) = index_polygon_soup_pub(&cells, &boundary);
    let und = build_mesh(pts.clone(), loops.clone(), Domain::UnitSquare).unwrap();
    let h = und.h;
    let tp = std::f64::consts::TAU;
    for p in &mut pts {
        let on_b = p.x.abs() < 1e-12 || (p.x - 1.0).abs() < 1e-12 || p.y.abs() < 1e-12 || (p.y - 1.0).abs() < 1e-12;
        if !on_b {
            let d = distort * h * (tp * p.x).sin() * (tp * p.y).sin();
            p.x += d;
            p.y += d;
        }
    }
    build_mesh(pts, loops, Domain::UnitSquare).unwrap()
}

fn index_polygon_soup_pub(cells: &[Vec<Point2>], boundary: &[Point2]) -> (Vec<Point2>, Vec<Vec<usize>>) {
    ncvem::mesh::index_polygon_soup(cells, boundary, 0.05)
}

fn lam1_err(mesh: &PolygonalMesh, k: usize) -> f64 {
    let opts = FormOptions::new(k, BoundaryCondition::Dirichlet, MassVariant::Nonstabilized);
    let sys = assemble(mesh, &opts).unwrap();
    let eig = solve_gevp(&sys.a, &sys.b, 1, StiffnessKind::PositiveDefinite).unwrap();
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    (eig.eigenvalues[0] - exact).abs() / exact
}

fn main() {
    for distort in [0.0, 0.1] {
        let mut pairs = Vec::new();
        for l in 0..=3 {
            let m = hex_mesh(0.32 / (1 << l) as f64, distort);
            let e = lam1_err(&m, 2);
            println!("hex distort={distort} l{l}: h={:.4} cells={} err={:.3e}", m.h, m.n_cells(), e);
            pairs.push((m.h, e));
        }
        println!("  k=2 rate (last3): {:.2}", fit_rate(&pairs[1..]).unwrap());
    }
}
