//! Sensitivity of SR-GCI-IUKF to the kernel shape δ on the vehicle benchmark.

use gci_ukf::harness::{run, ExperimentConfig};

fn main() -> gci_ukf::Result<()> {
    let trials = std::env::args().nth(1).map_or(Ok(100), |s| s.parse()).expect("trials must be an integer");
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/vehicle_delta_sweep.json"))?;
    cfg.trials = trials;
    let result = run(&cfg)?;
    println!("{:<10} {:>10} {:>10} {:>8}", "filter", "position", "velocity", "iters");
    for r in &result.reports {
        println!("{:<10} {:>10.4} {:>10.4} {:>8.2}", r.name, r.armse("position").unwrap(), r.armse("velocity").unwrap(), r.mean_iterations);
    }
    Ok(())
}
