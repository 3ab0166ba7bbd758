//! Exact one-dimensional reduction for horizontal slabs.

use fracmin::kernel::FractionalParams;
use fracmin::slab::{slab_hs_1d, SlabPattern};

fn main() {
    let p = FractionalParams::from_sigma(2, 0.1).unwrap();
    let periodic = SlabPattern::alternating(p, 5.0).unwrap();
    println!("periodic pattern: H_s at its planes = {:e}, {:e}", slab_hs_1d(&periodic, 0).unwrap(), slab_hs_1d(&periodic, 1).unwrap());

    // a finite stack feels its missing neighbours; outer planes bend outward
    let finite = SlabPattern::alternating_finite(p, 5.0, 6).unwrap();
    for k in 0..6 {
        println!("finite stack, plane {k}: H_s = {:+.6}", slab_hs_1d(&finite, k).unwrap());
    }
}
