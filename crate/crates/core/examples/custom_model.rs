//! Plugging a user-defined model into the filters: a pendulum observed
//! through the horizontal position of its bob, with occasional glitches.

use gci_ukf::prelude::*;
use rand::Rng;

struct Pendulum {
    dt: f64,
    length: f64,
}

impl StateSpaceModel for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition(&self, x: &Vector, _k: usize) -> Vector {
        let (a, w) = (x[0], x[1]);
        Vector::from_vec(vec![a + self.dt * w, w - self.dt * 9.81 / self.length * a.sin()])
    }

    fn measure(&self, x: &Vector) -> Vector {
        Vector::from_element(1, self.length * x[0].sin())
    }
}

fn main() -> Result<()> {
    let model = Pendulum { dt: 0.01, length: 1.5 };
    let w = Mat::from_diagonal(&Vector::from_vec(vec![1e-6, 1e-4]));
    let v = Mat::from_element(1, 1, 0.01);
    let x0 = Vector::from_vec(vec![0.3, 0.0]);
    let p0 = Mat::identity(2, 2) * 0.1;
    let mut rng = SeededStream::new(5, 0).rng();

    let kinds = [
        FilterSpec::new(FilterKind::Ukf),
        FilterSpec::new(FilterKind::MccUkf).with_kernel(KernelKind::Mcc { sigma: 2.0 }),
        FilterSpec::new(FilterKind::SrGciIukf).with_kernel(KernelKind::Gci(GciParams::new(1.6, 4.0)?)),
    ];
    let mut filters: Vec<Filter> = kinds.into_iter().map(|s| Filter::new(s, &model, &w, &v, &x0, &p0)).collect::<Result<_>>()?;
    let mut sq = vec![0.0; filters.len()];
    let mut truth = Vector::from_vec(vec![0.5, 0.0]);
    for k in 1..=1000 {
        truth = model.transition(&truth, k);
        let glitch = if rng.random_bool(0.05) { rng.random_range(-5.0..5.0) } else { 0.0 };
        let z = model.measure(&truth) + Vector::from_element(1, 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal) + glitch);
        for (f, s) in filters.iter_mut().zip(&mut sq) {
            f.step(&z)?;
            *s += (f.estimate()[0] - truth[0]).powi(2);
        }
    }
    for (f, s) in filters.iter().zip(&sq) {
        println!("{:<12} angle RMSE {:.5}", f.kind(), (s / 1000.0).sqrt());
    }
    Ok(())
}
