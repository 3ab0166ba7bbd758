//! Principal-value integration with antipodal pairing and analytic tails.

use fracmin::quadrature::{am_hm_bound, pv_integrate_symmetric, tail_integral, QuadratureSpec};

fn main() {
    let spec = QuadratureSpec::new(0.01, 0.1, 50.0, 1e-10).unwrap();
    let s = 0.6;

    // (-Δ)^{s/2}-type integral of u(x) = exp(-x²) at x0: ∫ (u(x0) - u(x0+z)) |z|^{-1-s} dz
    let x0 = 0.4;
    let u = |x: f64| (-x * x).exp();
    let f = |z: &[f64]| (u(x0) - u(x0 + z[0])) * z[0].abs().powf(-1.0 - s);
    let r = pv_integrate_symmetric(f, &[x0], &spec).unwrap();
    // beyond the tail radius only u(x0) survives
    let far = u(x0) * tail_integral(spec.r_tail, 1.0 + s, 1).unwrap();
    println!("fractional Laplacian value {:.8} (core {:.3e}, far-field {:.3e})", r.value + far, r.core_contrib, far);

    // odd singular integrand: exactly zero by symmetry
    let odd = pv_integrate_symmetric(|z: &[f64]| z[0].signum() * z[0].abs().powf(-1.5) * (-z[0] * z[0]).exp(), &[0.0], &spec).unwrap();
    println!("odd integrand: {:e}", odd.value);

    let gaps = [0.1, 0.3, 0.05, 0.6];
    let (lhs, rhs) = am_hm_bound(&gaps).unwrap();
    println!("1/(sum h)^2 = {lhs:.4} <= N^-3 sum h^-2 = {rhs:.4}");
}
