//! Column constants of the fractional kernel and the vertical profile `F`.

use fracmin::kernel::{c_circ, c_ns, c_ns_quadrature, profile_f, FractionalParams};

fn main() {
    println!("{:>2} {:>6} {:>12} {:>12} {:>10}", "n", "s", "c_ns", "quadrature", "c_circ");
    for n in [2, 3, 4] {
        for s in [0.5, 0.9, 0.99, 0.999] {
            let p = FractionalParams::new(n, s).unwrap();
            println!("{n:>2} {s:>6} {:>12.8} {:>12.8} {:>10.6}", c_ns(&p), c_ns_quadrature(&p), c_circ(n));
        }
    }
    // c_ns approaches 2 c_circ as s -> 1
    let p = FractionalParams::new(3, 0.8).unwrap();
    for t in [0.0, 0.5, 1.0, 5.0, 50.0] {
        println!("F({t}) = {:.6}", profile_f(t, &p, 1.0));
    }
}
