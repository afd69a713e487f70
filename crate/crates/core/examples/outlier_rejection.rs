//! A linear tracking problem with one gross measurement error: how each
//! kernel treats it.

use gci_ukf::prelude::*;
use rand::Rng;

fn main() -> Result<()> {
    let dt = 0.1;
    let model = LinearModel {
        f: Mat::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        h: Mat::from_row_slice(1, 2, &[1.0, 0.0]),
    };
    let w = Mat::from_diagonal(&Vector::from_vec(vec![1e-4, 1e-3]));
    let v = Mat::from_element(1, 1, 0.04);
    let x0 = Vector::zeros(2);
    let p0 = Mat::identity(2, 2);
    let mut rng = SeededStream::new(9, 0).rng();

    let mut truth = Vector::from_vec(vec![0.0, 1.0]);
    let mut zs = Vec::new();
    let mut xs = Vec::new();
    for k in 0..80 {
        truth = &model.f * &truth;
        let glitch = if k == 40 { 25.0 } else { 0.0 };
        zs.push(Vector::from_element(1, truth[0] + 0.2 * rng.sample::<f64, _>(rand_distr::StandardNormal) + glitch));
        xs.push(truth.clone());
    }

    let specs = [
        ("ukf", FilterSpec::new(FilterKind::Ukf)),
        ("mcc-ukf", FilterSpec::new(FilterKind::MccUkf).with_kernel(KernelKind::Mcc { sigma: 2.0 })),
        ("sr-ci-iukf", FilterSpec::new(FilterKind::SrCiIukf).with_kernel(KernelKind::Ci { sigma: 2.0 })),
        ("sr-gci-iukf", FilterSpec::new(FilterKind::SrGciIukf).with_kernel(KernelKind::Gci(GciParams::new(1.8, 4.0)?))),
    ];
    println!("{:<12} {:>14} {:>14}", "filter", "error at 40", "worst after");
    for (name, spec) in specs {
        let mut f = Filter::new(spec, &model, &w, &v, &x0, &p0)?;
        let mut at = 0.0;
        let mut worst: f64 = 0.0;
        for (k, (z, x)) in zs.iter().zip(&xs).enumerate() {
            f.step(z)?;
            let e = (f.estimate()[0] - x[0]).abs();
            if k == 40 {
                at = e;
            }
            if k >= 40 {
                worst = worst.max(e);
            }
        }
        println!("{name:<12} {at:>14.4} {worst:>14.4}");
    }
    Ok(())
}
