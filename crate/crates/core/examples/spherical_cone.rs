//! Spherical Toda solutions, the integral certificate and the Hardy constant.

use fracmin::cone::{dimension_gap, farina_certificate, hardy_ratio, sphere_toda_residual, HardyCutoff, SphereGrid};
use fracmin::toda::TodaState;

fn main() {
    for n in [3, 4] {
        let grid = SphereGrid::for_dimension(n, 32).unwrap();
        let c = 1.0 / ((n - 2) as f64).sqrt();
        let st = TodaState::on_sphere(grid.clone(), n, vec![vec![-c; grid.len()], vec![c; grid.len()]]).unwrap();
        let res = sphere_toda_residual(&st, n).unwrap().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let rep = farina_certificate(&st, n, 0.01).unwrap();
        println!(
            "n={n}: residual {res:.1e}  A={:.5} B={:.5}  stability bound {:.5}  contradiction {}",
            rep.per_gap[0].a, rep.per_gap[0].b, rep.stability_bound, rep.contradiction
        );
    }
    let fam = HardyCutoff::family();
    for n in 3..=12 {
        println!("n={n:>2}: dimension gap {:+.2}  Hardy ratio {:.4} (constant {:.4})", dimension_gap(n), hardy_ratio(n, &fam).unwrap(), ((n as f64 - 3.0) / 2.0).powi(2));
    }
}
