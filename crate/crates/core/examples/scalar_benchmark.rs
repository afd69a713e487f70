//! Monte-Carlo ARMSE of the whole filter family on the scalar benchmark
//! under noises a, b and c.
//!
//! ```text
//! cargo run --release --example scalar_benchmark -- [trials]
//! ```

use gci_ukf::harness::{run, ExperimentConfig, NoiseSpec};

fn main() -> gci_ukf::Result<()> {
    let trials = std::env::args().nth(1).map_or(Ok(100), |s| s.parse()).expect("trials must be an integer");
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/scalar_table4.json");
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.trials = trials;

    print!("{:<12}", "filter");
    let noises = ["a", "b", "c"];
    for n in noises {
        print!("{:>12}", format!("noise {n}"));
    }
    println!();

    let mut columns = Vec::new();
    for n in noises {
        cfg.measurement_noise = NoiseSpec::Preset(n.into());
        columns.push(run(&cfg)?);
    }
    for (i, f) in cfg.filters.iter().enumerate() {
        print!("{:<12}", f.name);
        for c in &columns {
            print!("{:>12.4}", c.reports[i].armse("x").unwrap());
        }
        println!();
    }
    Ok(())
}
