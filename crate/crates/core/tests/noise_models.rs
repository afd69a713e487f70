use gci_ukf::noise::{mixture_moments, presets, Component, NoiseModel, SeededStream};

const N: usize = 1_000_000;

fn empirical(model: &NoiseModel, seed: u64) -> (f64, f64, f64) {
    let mut rng = SeededStream::new(seed, 0).rng();
    let xs: Vec<f64> = (0..N).map(|_| model.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / N as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / N as f64;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / N as f64;
    (mean, var, m4 / (var * var))
}

#[test]
fn presets_match_closed_form_moments() {
    for (i, name) in ["a", "b", "c", "f", "g", "power-a", "power-b", "power-c"].into_iter().enumerate() {
        let model = presets::by_name(name).unwrap();
        let (mean, var) = mixture_moments(&model);
        let (m, v, _) = empirical(&model, 100 + i as u64);
        assert!((v - var).abs() <= 0.02 * var, "{name}: variance {v} vs {var}");
        assert!((m - mean).abs() <= 4.0 * (var / N as f64).sqrt(), "{name}: mean {m} vs {mean}");
    }
}

#[test]
fn closed_form_examples() {
    assert!((presets::noise_a().moments().1 - 10.09).abs() < 1e-12);
    let (m, v) = presets::power_asymmetric_mixture().moments();
    assert_eq!(m, 0.0);
    assert!((v - 21.0).abs() < 1e-12);
}

#[test]
fn laplace_has_unit_excess_shape() {
    let model = NoiseModel::new(vec![Component::laplace(1.0, 0.5, 2.0)]).unwrap();
    let (m, v, kurt) = empirical(&model, 7);
    assert!((m - 0.5).abs() < 0.01);
    assert!((v - 2.0).abs() < 0.04);
    assert!((kurt - 6.0).abs() < 0.2, "kurtosis {kurt}");
}

#[test]
fn streams_are_independent_of_each_other() {
    let model = presets::noise_a();
    let draw = |id| {
        let mut rng = SeededStream::new(5, id).rng();
        (0..8).map(|_| model.sample(&mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(1), draw(1));
    assert_ne!(draw(1), draw(2));
}
