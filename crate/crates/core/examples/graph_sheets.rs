//! Building a stack of graph sheets, local geometry and JSON round trip.

use fracmin::geometry::{build_stack_fn, normal_and_curvature, sheet_distance, GridSpec, SheetStack};
use fracmin::kernel::FractionalParams;

fn main() {
    let grid = GridSpec::new(1, 2.0, 161, false).unwrap();
    let p = FractionalParams::new(2, 0.9).unwrap();
    let lower = |x: &[f64]| -0.2 + 0.1 * x[0] * x[0];
    let upper = |x: &[f64]| 0.3 + 0.05 * (2.0 * x[0]).sin();
    let stack = build_stack_fn(grid, &[&lower, &upper], p).unwrap();

    for x in [-0.5, 0.0, 0.5] {
        let (nu, h, a) = normal_and_curvature(&stack.sheets[0], &[x]).unwrap();
        let d = sheet_distance(&stack, 0, &[x], 1).unwrap();
        let heights = stack.heights(&[x]);
        println!("x={x:+.1}: H={h:+.4} |A|={a:.4} nu=({:+.3},{:+.3}) vertical gap {:.4} distance {d:.4}", nu[0], nu[1], heights[1] - heights[0]);
    }

    let text = stack.to_json();
    let back = SheetStack::from_json(&text).unwrap();
    println!("json document: {} bytes, round trip equal: {}", text.len(), back.to_json() == text);
}
