//! Builds an experiment in code and writes its report files.

use gci_ukf::harness::{emit_report, run_with, ExperimentConfig, FilterEntry, NoiseSpec, RunOptions, SystemConfig};
use gci_ukf::prelude::*;

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/report_example".into());
    let cfg = ExperimentConfig {
        name: Some("report-example".into()),
        system: SystemConfig::Scalar { time_varying: false },
        horizon: 50,
        trials: 20,
        seed: 7,
        process_noise: NoiseModel::gaussian(0.0, 1.0)?.into(),
        measurement_noise: NoiseSpec::Preset("b".into()),
        filter_noise: Default::default(),
        ut: UtParams::default(),
        initial: Default::default(),
        filters: vec![
            FilterEntry::new("ukf", FilterKind::Ukf),
            FilterEntry::new("gci", FilterKind::SrGciIukf).with_kernel(KernelKind::Gci(GciParams::new(1.8, 15.0)?)),
            FilterEntry::new("gci-adapt", FilterKind::SrGciIukfAdapt)
                .with_kernel(KernelKind::Gci(GciParams::new(1.8, 15.0)?))
                .with_adapt(AdaptConfig::default()),
        ],
        output: None,
        divergence_threshold: 0.01,
    };
    cfg.validate()?;
    let result = run_with(&cfg, RunOptions { workers: Some(2) })?;
    let files = emit_report(&result, &out)?;
    println!("summary     {}", files.summary.display());
    println!("config echo {}", files.config_echo.display());
    println!("timing      {}", files.timing.display());
    for csv in &files.csv {
        println!("series      {}", csv.display());
    }
    for r in &result.reports {
        println!("{:<10} ARMSE {:.4}, divergence rate {:.4}", r.name, r.armse("x").unwrap(), r.divergence_rate);
    }
    Ok(())
}
