//! Balancing amplitudes, Lane–Emden profile and the Toda system on a disc.

use fracmin::toda::{ansatz, lane_emden_radial, solve_balancing, toda_residual, toda_solve, TodaDomain, TodaOptions, TodaState};

fn main() {
    for n in 2..=5 {
        println!("balancing N={n}: {:?}", solve_balancing(n).unwrap().a);
    }
    let le = lane_emden_radial(2, 1.0, 1.0).unwrap();
    println!("Lane-Emden (disc): g(0) = {}, g(0.5) = {:.6}, g(1) = {:.6}", le.value(0.0), le.value(0.5), le.value(1.0));

    for k in [1, 2, 4] {
        let dom = TodaDomain::Disc { radius: 1.0, n_r: 8 * k, n_theta: 16 * k };
        let (bnd, guess) = ansatz(&dom, 2, 1.0).unwrap();
        let interp = TodaState::new(dom.clone(), guess.clone(), bnd.clone()).unwrap();
        let r0 = toda_residual(&interp).unwrap().max.into_iter().fold(0.0, f64::max);
        let sol = toda_solve(&dom, bnd, None, &TodaOptions::default()).unwrap();
        let log: Vec<String> = sol.history.iter().map(|h| format!("{:.1e}", h.residual)).collect();
        println!("grid {:>3}x{:<3} ansatz residual {r0:.3e}  Newton {}", 8 * k, 16 * k, log.join(" -> "));
    }
}
