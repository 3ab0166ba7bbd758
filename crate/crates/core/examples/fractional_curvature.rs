//! Fractional mean curvature of a bump approaching the classical limit as s -> 1.

use fracmin::geometry::{GraphSheet, GridSpec};
use fracmin::kernel::{c_circ, FractionalParams};
use fracmin::nonlocal::hs_graph;
use fracmin::quadrature::QuadratureSpec;

fn main() {
    let spec = QuadratureSpec::new(0.02, 0.05, 200.0, 1e-9).unwrap();
    let eps = 0.1;
    let bump = |t: f64| if t.abs() < 2.0 { (1.0 - (t / 2.0).powi(2)).powi(4) } else { 0.0 };
    let grid = GridSpec::new(1, 4.0, 801, false).unwrap();
    let sheet = GraphSheet::from_fn(grid, |x| eps * x[0] * x[0] * bump(x[0])).unwrap();
    let limit = c_circ(2) * (-2.0 * eps);
    println!("classical limit c_circ H(0) = {limit:.6}");
    for sigma in [0.2, 0.1, 0.05, 0.02, 0.01] {
        let p = FractionalParams::from_sigma(2, sigma).unwrap();
        let v = hs_graph(&sheet, &[0.0], &p, &spec).unwrap();
        println!("sigma {sigma:<5} H_s(0) = {:.6}  error {:.3e}  (est {:.1e})", v.value, (v.value - limit).abs(), v.est_error);
    }
}
