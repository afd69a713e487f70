#![allow(dead_code)]

use gci_ukf::linalg::{Mat, Vector};
use rand::Rng;
use rand_distr::Gamma;

/// Textbook covariance-form Kalman filter.
pub struct TextbookKf {
    pub f: Mat,
    pub h: Mat,
    pub w: Mat,
    pub v: Mat,
    pub x: Vector,
    pub p: Mat,
}

impl TextbookKf {
    pub fn step(&mut self, z: &Vector) {
        let x = &self.f * &self.x;
        let p = &self.f * &self.p * self.f.transpose() + &self.w;
        let s = &self.h * &p * self.h.transpose() + &self.v;
        let k = &p * self.h.transpose() * s.try_inverse().expect("innovation covariance is invertible");
        self.x = &x + &k * (z - &self.h * &x);
        let a = Mat::identity(x.len(), x.len()) - &k * &self.h;
        self.p = &a * &p * a.transpose() + &k * &self.v * k.transpose();
    }
}

pub fn random_mat(rng: &mut impl Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// `A·Aᵀ + shift·I` for a random square `A`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> Mat {
    let a = random_mat(rng, n, n);
    &a * a.transpose() + Mat::identity(n, n) * shift
}

/// Random `F` with spectral norm at most `radius`.
pub fn random_stable(rng: &mut impl Rng, n: usize, radius: f64) -> Mat {
    let f = random_mat(rng, n, n);
    let norm = f.norm();
    f * (radius / norm)
}

pub fn gaussian_vec(rng: &mut impl Rng, cov: &Mat) -> Vector {
    let l = cov.clone().cholesky().expect("covariance is SPD").l();
    let n = cov.nrows();
    let u = Vector::from_fn(n, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng));
    l * u
}

/// Inverse-CDF draw from the density `∝ exp(−|x|^δ/θ)`: `|X|^δ/θ` is `Gamma(1/δ, 1)`.
pub fn generalized_gaussian(rng: &mut impl Rng, delta: f64, theta: f64) -> f64 {
    let g: f64 = rng.sample(Gamma::new(1.0 / delta, 1.0).expect("valid shape"));
    let m = (theta * g).powf(1.0 / delta);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn config_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}
