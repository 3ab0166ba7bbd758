//! Stability quadratic form and the variation oracles on a two-sheet stack.

use fracmin::geometry::{build_stack_fn, GridSpec};
use fracmin::kernel::FractionalParams;
use fracmin::nonlocal::{first_variation, per_s, second_variation, stability_form, CylinderDomain, PerturbationField};
use fracmin::quadrature::QuadratureSpec;

fn main() {
    let spec = QuadratureSpec::new(0.05, 0.1, 200.0, 1e-7).unwrap();
    let p = FractionalParams::new(2, 0.7).unwrap();
    let grid = GridSpec::new(1, 3.0, 241, false).unwrap();
    let omega = CylinderDomain::new(1.0, -1.0, 1.0).unwrap();
    let st = build_stack_fn(grid, &[&|x: &[f64]| 0.05 * x[0].sin() - 0.3, &|x: &[f64]| 0.3 + 0.05 * x[0] * x[0]], p).unwrap();
    let pert = PerturbationField::from_fn(grid, 2, 0.6, |j, x| (1.0 + 0.5 * j as f64) * (1.0 - (x[0] / 0.6).powi(2)).powi(3)).unwrap();

    let form = stability_form(&st, &pert, &omega, &spec).unwrap();
    println!("interaction {:.5}  dirichlet {:.5}  ext2 {:.5}  margin {:.5}", form.lhs_interaction, form.rhs_dirichlet, form.ext2, form.margin);

    let phi: Vec<Vec<f64>> = pert.eta.iter().map(|e| e.values.clone()).collect();
    let per = |t: f64| per_s(&st.perturbed(t, &phi).unwrap(), &omega, &p, &spec).unwrap().value;
    let h = 0.01;
    let (pm, p0, pp) = (per(-h), per(0.0), per(h));
    let v1 = first_variation(&st, &pert, &omega, &spec).unwrap();
    let v2 = second_variation(&st, &pert, &omega, &spec).unwrap();
    println!("per_s = {p0:.6}");
    println!("first variation  {v1:.6}  finite difference {:.6}", (pp - pm) / (2.0 * h));
    println!("second variation {:.6}  finite difference {:.6}", v2.value, (pp - 2.0 * p0 + pm) / (h * h));
}
