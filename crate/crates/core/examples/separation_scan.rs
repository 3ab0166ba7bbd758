//! Stability threshold of the periodic slab stack and the separation exponent.
//!
//! Runs on a coarser horizontal grid than `ScanConfig::standard()` so that it
//! finishes in a couple of minutes.

use fracmin::quadrature::QuadratureSpec;
use fracmin::slab::{separation_exponent_fit, slab_stability_scan, ScanConfig};

fn main() {
    let mut config = ScanConfig::standard();
    config.resolution = 61;
    let spec = QuadratureSpec::new(0.1, 0.2, 200.0, 1e-4).unwrap();
    let mut pts = Vec::new();
    for sigma in [0.2, 0.1, 0.05] {
        let rec = slab_stability_scan(sigma, &[0.5, 1.0, 2.0, 4.0], &config, &spec).unwrap();
        println!("sigma {sigma:<5} d* = {:.4}  c* = d*/sqrt(sigma) = {:.3}  worst mode {}", rec.d_star, rec.c_star, rec.worst_mode_id);
        pts.push((sigma, rec.d_star));
    }
    let fit = separation_exponent_fit(&pts, false).unwrap();
    println!("d* ~ {:.3} sigma^{:.3} (r2 {:.4})", fit.prefactor, fit.exponent, fit.r2);
}
