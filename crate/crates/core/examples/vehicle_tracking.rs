//! One vehicle trajectory under impulsive measurement noise, tracked by a
//! UKF and an SR-GCI-IUKF side by side.

use gci_ukf::noise::ChannelNoise;
use gci_ukf::prelude::*;
use rand::Rng;

fn main() -> Result<()> {
    let model = VehicleSystem::default();
    let noise = ChannelNoise::Shared(presets::noise_e());
    let v = Mat::from_diagonal(&Vector::from_vec(noise.variances(4)));
    let w = Mat::identity(4, 4) * 0.01;
    let mut rng = SeededStream::new(3, 0).rng();

    let mut truth = Vector::from_vec(vec![0.0, 10.0, 5.0, 10.0]);
    let x0 = Vector::from_element(4, 1.0);
    let p0 = Mat::identity(4, 4);
    let gci = FilterSpec::new(FilterKind::SrGciIukf).with_kernel(KernelKind::Gci(GciParams::new(1.8, 15.0)?));
    let mut robust = Filter::new(gci, &model, &w, &v, &x0, &p0)?;
    let mut ukf = Filter::new(FilterSpec::new(FilterKind::Ukf), &model, &w, &v, &x0, &p0)?;

    println!("{:>5} {:>10} {:>10} {:>6}", "step", "ukf err", "gci err", "iters");
    for k in 1..=200 {
        truth = model.transition(&truth, k) + Vector::from_fn(4, |_, _| 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal));
        let z = model.measure(&truth) + Vector::from_vec(noise.sample_vec(4, &mut rng));
        ukf.step(&z)?;
        let d = robust.step(&z)?;
        if k % 20 == 0 {
            let err = |f: &Filter| (f.estimate().rows(0, 2) - truth.rows(0, 2)).norm();
            println!("{k:>5} {:>10.4} {:>10.4} {:>6}", err(&ukf), err(&robust), d.iterations_used);
        }
    }
    Ok(())
}
