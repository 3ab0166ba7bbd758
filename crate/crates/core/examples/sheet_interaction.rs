//! Interaction of two parallel sheets against the 2σ/d prediction.

use fracmin::geometry::{build_stack_fn, GridSpec};
use fracmin::kernel::{c_circ, c_ns, FractionalParams};
use fracmin::nonlocal::{hs_cross, interaction_prediction};
use fracmin::quadrature::QuadratureSpec;

fn main() {
    let spec = QuadratureSpec::new(0.02, 0.05, 200.0, 1e-9).unwrap();
    let sigma: f64 = 0.05;
    let p = FractionalParams::from_sigma(2, sigma).unwrap();
    println!("{:>6} {:>10} {:>10} {:>10} {:>8}", "d", "measured", "closed", "2 sigma/d", "rel dev");
    for d in [0.4, 0.2, 0.1, 0.05, 0.02] {
        let grid = GridSpec::new(1, 4.0, 64, true).unwrap();
        let st = build_stack_fn(grid, &[&|_: &[f64]| 0.0, &move |_: &[f64]| d], p).unwrap();
        let cross = hs_cross(&st, 0, &[0.0], 1, &spec).unwrap();
        let measured = cross.signed.value.abs() / c_circ(2);
        let closed = sigma * c_ns(&p) * d.powf(-p.s) / c_circ(2);
        let pred = interaction_prediction(&st, 0, &[0.0]).unwrap();
        println!("{d:>6} {measured:>10.5} {closed:>10.5} {pred:>10.5} {:>7.2}%", 100.0 * (measured - pred) / pred);
    }
    // the deviation is the factor c_ns d^σ / 2 - 1, of order σ |log d|
}
