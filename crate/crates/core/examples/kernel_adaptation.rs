//! Grid selection of the GCI shape and scale, first on synthetic
//! generalized-Gaussian residuals, then inside a running filter.

use gci_ukf::prelude::*;
use gci_ukf::robust::adapt_parameters;
use rand::Rng;
use rand_distr::Gamma;

/// Density `∝ exp(−|x|^δ/θ)`.
fn generalized_gaussian(rng: &mut impl Rng, delta: f64, theta: f64) -> f64 {
    let g: f64 = rng.sample(Gamma::new(1.0 / delta, 1.0).unwrap());
    let m = (theta * g).powf(1.0 / delta);
    if rng.random() { m } else { -m }
}

fn main() -> Result<()> {
    let cfg = AdaptConfig::default();
    let mut rng = SeededStream::new(2, 0).rng();
    println!("true (δ, θ)    selected");
    for (d, t) in [(1.0, 5.0), (1.4, 10.0), (2.0, 15.0), (2.6, 25.0)] {
        let e: Vec<f64> = (0..500).map(|_| generalized_gaussian(&mut rng, d, t)).collect();
        let p = adapt_parameters(&e, 2.0, &cfg)?;
        println!("({d:.1}, {t:>4.1})    ({:.1}, {:.1})", p.delta, p.theta);
    }

    let model = ScalarSystem::default();
    let one = Mat::identity(1, 1);
    let v = Mat::from_element(1, 1, presets::noise_a().moments().1);
    let spec = FilterSpec::new(FilterKind::SrGciIukfAdapt)
        .with_kernel(KernelKind::Gci(GciParams::new(1.8, 15.0)?))
        .with_adapt(cfg);
    let mut f = Filter::new(spec, &model, &(one.clone() * 40.0), &v, &Vector::zeros(1), &one)?;
    let mut x = 0.0;
    println!("\nstep   δ     θ");
    for k in 1..=100 {
        x = model.f(x, k) + 40f64.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let z = ScalarSystem::h(x) + presets::noise_a().sample(&mut rng);
        let d = f.step(&Vector::from_element(1, z))?;
        if d.adapted && k % 10 == 0 {
            let p = d.params.unwrap();
            println!("{k:>4}  {:.1}  {:>4.1}", p.delta, p.theta);
        }
    }
    Ok(())
}
