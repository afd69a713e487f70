//! The benchmark noise presets: closed-form moments against sample moments.

use gci_ukf::noise::mixture_moments;
use gci_ukf::prelude::*;

fn main() {
    let mut rng = SeededStream::new(1, 0).rng();
    println!("{:<8} {:>10} {:>10} {:>10} {:>10}", "preset", "mean", "sample", "variance", "sample");
    for name in ["a", "b", "c", "e", "f", "g", "power-a", "power-b", "power-c"] {
        let model = presets::by_name(name).unwrap();
        let (mean, var) = mixture_moments(&model);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| model.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        println!("{name:<8} {mean:>10.4} {m:>10.4} {var:>10.4} {v:>10.4}");
    }

    let custom = NoiseModel::new(vec![Component::laplace(0.95, 0.0, 0.5), Component::gaussian(0.05, 3.0, 50.0)]).unwrap();
    let (m, v) = custom.moments();
    println!("custom Laplace/Gaussian mixture: mean {m:.3}, variance {v:.3}");
}
