//! Forecasting-aided state estimation on the bundled IEEE 14-bus network
//! from a flat start.

use gci_ukf::noise::ChannelNoise;
use gci_ukf::prelude::*;
use rand::Rng;

fn main() -> Result<()> {
    let net = PowerNetwork::ieee14();
    println!("{}: {} buses, {} states, {} measurements", net.name, net.bus_count(), net.state_dim(), net.meas_dim());
    let na = net.angle_count();
    let sys = PowerSystem::new(net.clone());
    let (n, m) = (net.state_dim(), net.meas_dim());

    let noise = ChannelNoise::Shared(presets::power_laplace_mixture());
    let v = Mat::from_diagonal(&Vector::from_vec(noise.variances(m)));
    let w = Mat::identity(n, n) * 1e-6;
    let p0 = Mat::identity(n, n) * 0.01;
    let x0 = net.flat_start();
    let mut truth = net.base_state();
    let mut rng = SeededStream::new(11, 0).rng();

    let gci = FilterSpec::new(FilterKind::SrGciIukf).with_kernel(KernelKind::Gci(GciParams::new(1.8, 10.0)?));
    let mut filters = [
        ("ukf", Filter::new(FilterSpec::new(FilterKind::Ukf), &sys, &w, &v, &x0, &p0)?),
        ("sr-gci-iukf", Filter::new(gci, &sys, &w, &v, &x0, &p0)?),
    ];
    let mut sq = [[0.0; 2]; 2];
    let steps = 100;
    for k in 1..=steps {
        truth = sys.transition(&truth, k) + Vector::from_fn(n, |_, _| 1e-3 * rng.sample::<f64, _>(rand_distr::StandardNormal));
        let z = sys.measure(&truth) + Vector::from_vec(noise.sample_vec(m, &mut rng));
        for (i, (_, f)) in filters.iter_mut().enumerate() {
            f.step(&z)?;
            let e = f.estimate() - &truth;
            sq[i][0] += e.rows(0, na).norm();
            sq[i][1] += e.rows(na, n - na).norm();
        }
    }
    for (i, (name, _)) in filters.iter().enumerate() {
        println!("{name:<12} mean angle error {:.4} rad, magnitude error {:.4} p.u.", sq[i][0] / steps as f64, sq[i][1] / steps as f64);
    }
    Ok(())
}
