//! Driving experiments from a JSON configuration without the binary.

use fracmin::cli::{execute, ExperimentConfig};

fn main() {
    let cfg = ExperimentConfig::from_json(r#"{"command": "slab-check", "slab": {"sigma": 0.05, "cstar": 3.0, "sheets": 8}}"#).unwrap();
    let report = execute(&cfg).unwrap();
    println!("{}", report.summary);
    println!("config hash {}", cfg.hash());
    print!("{}", String::from_utf8(report.to_csv(&cfg.hash()).unwrap()).unwrap());

    let cfg = ExperimentConfig::from_json(r#"{"command": "cone", "params": {"n": 3}, "cone": {"eps": 0.05}}"#).unwrap();
    println!("{}", execute(&cfg).unwrap().summary);
}
