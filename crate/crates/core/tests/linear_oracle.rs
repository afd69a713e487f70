mod common;

use common::*;
use gci_ukf::filter::{Filter, FilterKind, FilterSpec, IterationStart, JacobianMode, PosteriorPath};
use gci_ukf::linalg::{cholesky_factor, Mat, Vector};
use gci_ukf::model::LinearModel;
use gci_ukf::robust::{GciParams, KernelKind};
use gci_ukf::unscented::{sr_measure, sr_predict, SqrtBelief, UtParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    model: LinearModel,
    w: Mat,
    v: Mat,
    x0: Vector,
    p0: Mat,
    zs: Vec<Vector>,
    truth: Vec<Vector>,
}

fn setup(seed: u64, n: usize, m: usize, steps: usize) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = LinearModel { f: random_stable(&mut rng, n, 0.95), h: random_mat(&mut rng, m, n) };
    let w = random_spd(&mut rng, n, 0.05);
    let v = random_spd(&mut rng, m, 0.2);
    let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut x = x0.clone();
    let (mut zs, mut truth) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        x = &model.f * &x + gaussian_vec(&mut rng, &w);
        zs.push(&model.h * &x + gaussian_vec(&mut rng, &v));
        truth.push(x.clone());
    }
    Setup { model, w, v, x0, p0: Mat::identity(n, n), zs, truth }
}

fn oracle(s: &Setup) -> TextbookKf {
    TextbookKf { f: s.model.f.clone(), h: s.model.h.clone(), w: s.w.clone(), v: s.v.clone(), x: s.x0.clone(), p: s.p0.clone() }
}

fn spec(kind: FilterKind) -> FilterSpec {
    let s = FilterSpec::new(kind);
    if kind.is_robust() {
        s.with_kernel(KernelKind::Uniform)
    } else {
        s
    }
}

#[test]
fn every_kind_reduces_to_the_kalman_filter() {
    for seed in 0..5 {
        let s = setup(seed, 4, 2, 100);
        for kind in FilterKind::ALL {
            let mut f = Filter::new(spec(kind), &s.model, &s.w, &s.v, &s.x0, &s.p0).unwrap();
            let mut kf = oracle(&s);
            for z in &s.zs {
                let d = f.step(z).unwrap();
                kf.step(z);
                assert!(!d.divergence_flag);
                assert!((f.estimate() - &kf.x).amax() < 1e-8, "{kind} mean");
                assert!((f.covariance() - &kf.p).norm() < 1e-8, "{kind} covariance");
            }
        }
    }
}

#[test]
fn wide_kernels_stay_close_to_the_kalman_filter() {
    let s = setup(7, 3, 3, 100);
    let kernels = [
        (FilterKind::MccUkf, KernelKind::Mcc { sigma: 1e4 }),
        (FilterKind::SrCiIukf, KernelKind::Ci { sigma: 1e4 }),
        (FilterKind::SrGciIukf, KernelKind::Gci(GciParams::new(2.0, 1e8).unwrap())),
    ];
    let mut kf = oracle(&s);
    let mut oracle_sq = 0.0;
    for (z, x) in s.zs.iter().zip(&s.truth) {
        kf.step(z);
        oracle_sq += (&kf.x - x).norm_squared();
    }
    for (kind, kernel) in kernels {
        let mut f = Filter::new(FilterSpec::new(kind).with_kernel(kernel), &s.model, &s.w, &s.v, &s.x0, &s.p0).unwrap();
        let mut sq = 0.0;
        for (z, x) in s.zs.iter().zip(&s.truth) {
            f.step(z).unwrap();
            sq += (f.estimate() - x).norm_squared();
        }
        let ratio = (sq / oracle_sq).sqrt();
        assert!((ratio - 1.0).abs() < 0.05, "{kind}: ARMSE ratio {ratio}");
    }
}

#[test]
fn jacobian_modes_agree_on_linear_models() {
    let s = setup(3, 3, 2, 30);
    let mut outs = Vec::new();
    for mode in [JacobianMode::Analytic, JacobianMode::FiniteDifference, JacobianMode::Statistical] {
        let spec = FilterSpec::new(FilterKind::SrGciIukf)
            .with_kernel(KernelKind::Gci(GciParams::new(1.8, 15.0).unwrap()))
            .with_jacobian(mode);
        let mut f = Filter::new(spec, &s.model, &s.w, &s.v, &s.x0, &s.p0).unwrap();
        for z in &s.zs {
            f.step(z).unwrap();
        }
        outs.push(f.estimate().clone());
    }
    assert!((&outs[0] - &outs[2]).amax() < 1e-8);
    assert!((&outs[0] - &outs[1]).amax() < 1e-4);
}

#[test]
fn square_root_moments_are_exact_for_linear_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in 1..=5 {
        let f = random_mat(&mut rng, n, n);
        let h = random_mat(&mut rng, 2, n);
        let p = random_spd(&mut rng, n, 0.3);
        let w = random_spd(&mut rng, n, 0.1);
        let v = random_spd(&mut rng, 2, 0.1);
        let x = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let b = SqrtBelief::new(x.clone(), cholesky_factor(&p).unwrap()).unwrap();
        let ut = UtParams::default();
        let pred = sr_predict(&b, &|s: &Vector| &f * s, &cholesky_factor(&w).unwrap(), &ut).unwrap();
        assert!((&pred.x - &f * &x).amax() < 1e-10);
        assert!((pred.covariance() - (&f * &p * f.transpose() + &w)).amax() < 1e-10);
        let stats = sr_measure(&b, &|s: &Vector| &h * s, &cholesky_factor(&v).unwrap(), &ut).unwrap();
        assert!((&stats.zhat - &h * &x).amax() < 1e-10);
        assert!((&stats.pxz - &p * h.transpose()).amax() < 1e-10);
        assert!((stats.d.covariance() - (&h * &p * h.transpose() + &v)).amax() < 1e-10);
    }
}

#[test]
fn outliers_are_downweighted() {
    let s = setup(9, 2, 2, 60);
    let spike = 20;
    let mut zs = s.zs.clone();
    zs[spike][0] += 500.0;
    let run = |spec: FilterSpec| {
        let mut f = Filter::new(spec, &s.model, &s.w, &s.v, &s.x0, &s.p0).unwrap();
        let mut worst: f64 = 0.0;
        for (k, z) in zs.iter().enumerate() {
            f.step(z).unwrap();
            if k >= spike {
                worst = worst.max((f.estimate() - &s.truth[k]).amax());
            }
        }
        worst
    };
    let ukf = run(FilterSpec::new(FilterKind::Ukf));
    for delta in [1.5, 1.8, 2.0, 2.3] {
        let kernel = KernelKind::Gci(GciParams::new(delta, 8.0).unwrap());
        let gci = run(FilterSpec::new(FilterKind::SrGciIukf).with_kernel(kernel));
        assert!(gci < ukf / 10.0, "δ={delta}: GCI {gci} vs UKF {ukf}");
    }
    let mut unweighted = FilterSpec::new(FilterKind::SrGciIukf).with_kernel(KernelKind::Gci(GciParams::new(2.0, 8.0).unwrap()));
    unweighted.start = IterationStart::UnweightedStep;
    assert!(run(unweighted) > ukf / 2.0);
}

#[test]
fn posterior_factor_stays_positive_under_heavy_outliers() {
    let s = setup(4, 3, 2, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let spec = FilterSpec::new(FilterKind::SrGciIukf).with_kernel(KernelKind::Gci(GciParams::new(1.5, 5.0).unwrap()));
    let mut f = Filter::new(spec, &s.model, &s.w, &s.v, &s.x0, &s.p0).unwrap();
    for z in &s.zs {
        let mut z = z.clone();
        if rng.random_bool(0.2) {
            z[0] += rng.random_range(-1e3..1e3);
        }
        let d = f.step(&z).unwrap();
        assert!(d.cov_min_diag > 0.0);
        if d.posterior != PosteriorPath::KeptPrior {
            assert!(f.factor().unwrap().has_positive_diagonal());
        }
        assert!(f.estimate().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn reset_restarts_from_a_given_belief() {
    let s = setup(5, 2, 2, 10);
    let mut a = Filter::new(spec(FilterKind::SrUkf), &s.model, &s.w, &s.v, &s.x0, &s.p0).unwrap();
    for z in &s.zs[..5] {
        a.step(z).unwrap();
    }
    let mut b = Filter::new(spec(FilterKind::SrUkf), &s.model, &s.w, &s.v, &s.x0, &s.p0).unwrap();
    b.reset(a.estimate(), &a.covariance(), a.steps()).unwrap();
    for z in &s.zs[5..] {
        a.step(z).unwrap();
        b.step(z).unwrap();
    }
    assert_eq!(b.steps(), 10);
    assert!((a.estimate() - b.estimate()).amax() < 1e-10);
    assert!(b.reset(&Vector::zeros(3), &s.p0, 0).is_err());
}
