//! Sigma-point construction and the square-root unscented recursions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, LinalgContext, Result};
use crate::linalg::{qr_triangularize, rank1_update_in_place, Mat, Rank1, UpperTri, Vector};

/// Scaling of the unscented transform, `lambda = alpha²·(N + kappa) − N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 2.0, kappa: 0.0 }
    }
}

impl UtParams {
    pub fn new(alpha: f64, beta: f64, kappa: f64) -> Result<Self> {
        if !(alpha > 0.0) || !beta.is_finite() || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "UT parameters must be finite with alpha > 0 (alpha={alpha}, beta={beta}, kappa={kappa})"
            )));
        }
        Ok(Self { alpha, beta, kappa })
    }

    pub fn lambda(&self, n: usize) -> f64 {
        let n = n as f64;
        self.alpha * self.alpha * (n + self.kappa) - n
    }

    /// `sqrt(N + lambda)`, the sigma offset multiplier.
    pub fn spread(&self, n: usize) -> Result<f64> {
        let s = n as f64 + self.lambda(n);
        if !(s > 0.0) {
            return Err(Error::DegenerateScaling(s));
        }
        Ok(s.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

pub fn make_weights(n: usize, p: &UtParams) -> Result<Weights> {
    if n == 0 {
        return Err(Error::InvalidParameter("state dimension must be at least 1".into()));
    }
    let lambda = p.lambda(n);
    let denom = n as f64 + lambda;
    if !(denom > 0.0) {
        return Err(Error::DegenerateScaling(denom));
    }
    let wi = 1.0 / (2.0 * denom);
    let mut mean = vec![wi; 2 * n + 1];
    mean[0] = lambda / denom;
    let mut cov = mean.clone();
    cov[0] = mean[0] + (1.0 - p.alpha * p.alpha + p.beta);
    Ok(Weights { mean, cov })
}

#[derive(Debug, Clone)]
pub struct SigmaSet {
    pub points: Vec<Vector>,
    pub weights: Weights,
}

impl SigmaSet {
    pub fn weighted_mean(&self) -> Vector {
        weighted_sum(&self.points, &self.weights.mean)
    }
}

/// Mean vector with its upper-triangular covariance factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtBelief {
    pub x: Vector,
    pub s: UpperTri,
}

impl SqrtBelief {
    pub fn new(x: Vector, s: UpperTri) -> Result<Self> {
        if x.len() != s.dim() {
            return Err(Error::DimensionMismatch {
                context: "SqrtBelief",
                expected: s.dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate);
        }
        Ok(Self { x, s })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn covariance(&self) -> Mat {
        self.s.covariance()
    }
}

/// Predicted measurement statistics.
#[derive(Debug, Clone)]
pub struct MeasStats {
    pub zhat: Vector,
    /// Factor of the innovation covariance, `P_z = Dᵀ·D`.
    pub d: UpperTri,
    pub pxz: Mat,
}

fn weighted_sum(points: &[Vector], w: &[f64]) -> Vector {
    let mut acc = Vector::zeros(points[0].len());
    for (p, wi) in points.iter().zip(w) {
        acc.axpy(*wi, p, 1.0);
    }
    acc
}

/// Sigma points around `x` spread along the rows of `factor`.
pub fn sigma_points_from(x: &Vector, factor: &UpperTri, p: &UtParams) -> Result<SigmaSet> {
    let n = x.len();
    let weights = make_weights(n, p)?;
    let gamma = p.spread(n)?;
    let s = factor.as_mat();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(x.clone());
    for i in 0..n {
        let row = s.row(i).transpose();
        points.push(x + &row * gamma);
    }
    for i in 0..n {
        let row = s.row(i).transpose();
        points.push(x - &row * gamma);
    }
    Ok(SigmaSet { points, weights })
}

pub fn sigma_points(b: &SqrtBelief, p: &UtParams) -> Result<SigmaSet> {
    sigma_points_from(&b.x, &b.s, p)
}

/// Weighted mean and square-root covariance of propagated points plus
/// additive noise with factor `noise`.
fn sqrt_moments(
    ys: &[Vector],
    w: &Weights,
    noise: &UpperTri,
    context: &'static str,
) -> Result<(Vector, UpperTri)> {
    let dim = ys[0].len();
    if noise.dim() != dim {
        return Err(Error::DimensionMismatch { context, expected: dim, found: noise.dim() });
    }
    let mean = weighted_sum(ys, &w.mean);
    let np = ys.len() - 1;
    let sw = w.cov[1].sqrt();
    let mut a = Mat::zeros(np + dim, dim);
    for (r, y) in ys[1..].iter().enumerate() {
        for c in 0..dim {
            a[(r, c)] = sw * (y[c] - mean[c]);
        }
    }
    a.view_mut((np, 0), (dim, dim)).copy_from(noise.as_mat());
    let mut s = qr_triangularize(&a).ctx(context)?;
    let w0 = w.cov[0];
    if w0 != 0.0 {
        let d0 = (&ys[0] - &mean) * w0.abs().sqrt();
        rank1_update_in_place(&mut s, &d0, Rank1::from_sign(w0)).ctx(context)?;
    }
    Ok((mean, s))
}

/// Square-root time update through `f` with process-noise factor `sqrt_w`.
pub fn sr_predict(
    b: &SqrtBelief,
    f: &dyn Fn(&Vector) -> Vector,
    sqrt_w: &UpperTri,
    p: &UtParams,
) -> Result<SqrtBelief> {
    let sig = sigma_points(b, p)?;
    let ys: Vec<Vector> = sig.points.iter().map(f).collect();
    if ys.iter().any(|y| y.len() != b.dim() || y.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteDynamics);
    }
    let (x, s) = sqrt_moments(&ys, &sig.weights, sqrt_w, "sr_predict")?;
    SqrtBelief::new(x, s)
}

/// Square-root measurement statistics of `h` at the predicted belief.
pub fn sr_measure(
    b: &SqrtBelief,
    h: &dyn Fn(&Vector) -> Vector,
    sqrt_v: &UpperTri,
    p: &UtParams,
) -> Result<MeasStats> {
    let sig = sigma_points(b, p)?;
    let zs: Vec<Vector> = sig.points.iter().map(h).collect();
    if zs.iter().any(|z| z.len() != sqrt_v.dim() || z.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteMeasurement);
    }
    let (zhat, d) = sqrt_moments(&zs, &sig.weights, sqrt_v, "sr_measure")?;
    let pxz = cross_covariance(&sig, &b.x, &zs, &zhat);
    Ok(MeasStats { zhat, d, pxz })
}

fn cross_covariance(sig: &SigmaSet, x: &Vector, zs: &[Vector], zhat: &Vector) -> Mat {
    let mut pxz = Mat::zeros(x.len(), zhat.len());
    for ((chi, z), w) in sig.points.iter().zip(zs).zip(&sig.weights.cov) {
        pxz += (chi - x) * (z - zhat).transpose() * *w;
    }
    pxz
}

/// Full-covariance unscented transform: returns the weighted mean and
/// `Σ w_c·d·dᵀ + noise` of `g` over sigma points of `(x, P = factorᵀ·factor)`.
pub fn ut_moments(
    x: &Vector,
    factor: &UpperTri,
    g: &dyn Fn(&Vector) -> Vector,
    noise: &Mat,
    p: &UtParams,
) -> Result<(Vector, Mat, Mat)> {
    let sig = sigma_points_from(x, factor, p)?;
    let ys: Vec<Vector> = sig.points.iter().map(g).collect();
    if ys.iter().any(|y| y.len() != noise.nrows() || y.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteMeasurement);
    }
    let mean = weighted_sum(&ys, &sig.weights.mean);
    let mut cov = noise.clone();
    for (y, w) in ys.iter().zip(&sig.weights.cov) {
        let d = y - &mean;
        cov += &d * d.transpose() * *w;
    }
    let cross = cross_covariance(&sig, x, &ys, &mean);
    Ok((mean, cov, cross))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_factor;

    #[test]
    fn weights_scalar_default() {
        let w = make_weights(1, &UtParams::default()).unwrap();
        assert_eq!(w.mean, vec![0.0, 0.5, 0.5]);
        assert_eq!(w.cov, vec![2.0, 0.5, 0.5]);
    }

    #[test]
    fn weights_two_dim_kappa_one() {
        let w = make_weights(2, &UtParams::new(1.0, 0.0, 1.0).unwrap()).unwrap();
        let third = 1.0 / 3.0;
        let sixth = 1.0 / 6.0;
        assert!((w.mean[0] - third).abs() < 1e-15);
        for wi in &w.mean[1..] {
            assert!((wi - sixth).abs() < 1e-15);
        }
        assert!((w.mean.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // beta = 0 and alpha = 1 leave the central covariance weight unchanged
        assert_eq!(w.cov[0], w.mean[0]);
    }

    #[test]
    fn degenerate_scaling_rejected() {
        // alpha² (N + kappa) = 0
        let p = UtParams::new(1.0, 2.0, -1.0).unwrap();
        assert!(matches!(make_weights(1, &p), Err(Error::DegenerateScaling(_))));
    }

    #[test]
    fn unit_spread_scalar_points() {
        let b = SqrtBelief::new(Vector::from_vec(vec![0.0]), UpperTri::identity(1)).unwrap();
        let set = sigma_points(&b, &UtParams::default()).unwrap();
        let pts: Vec<f64> = set.points.iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, 1.0, -1.0]);
        assert_eq!(set.weighted_mean()[0], 0.0);
    }

    #[test]
    fn two_dim_offsets_are_sqrt3() {
        let b = SqrtBelief::new(Vector::from_vec(vec![1.0, 2.0]), UpperTri::identity(2)).unwrap();
        let set = sigma_points(&b, &UtParams::new(1.0, 0.0, 1.0).unwrap()).unwrap();
        let r3 = 3f64.sqrt();
        assert!((set.points[1][0] - (1.0 + r3)).abs() < 1e-15);
        assert!((set.points[2][1] - (2.0 + r3)).abs() < 1e-15);
        assert!((set.points[3][0] - (1.0 - r3)).abs() < 1e-15);
        assert!((set.points[4][1] - (2.0 - r3)).abs() < 1e-15);
        assert!((set.weighted_mean() - &b.x).amax() < 1e-15);
    }

    #[test]
    fn identity_predict_keeps_mean() {
        let s = cholesky_factor(&Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let b = SqrtBelief::new(Vector::from_vec(vec![0.5, -1.0]), s).unwrap();
        let eps = UpperTri::from_variances(&[1e-12, 1e-12]).unwrap();
        let out = sr_predict(&b, &|x| x.clone(), &eps, &UtParams::default()).unwrap();
        assert!((&out.x - &b.x).amax() < 1e-14);
        assert!((out.covariance() - b.covariance()).amax() < 1e-10);
    }

    #[test]
    fn scalar_benchmark_one_step_mean() {
        let f = |x: f64| 0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * x).cos();
        let b = SqrtBelief::new(Vector::from_vec(vec![0.0]), UpperTri::identity(1)).unwrap();
        let w = UpperTri::identity(1);
        let out =
            sr_predict(&b, &|x| Vector::from_vec(vec![f(x[0])]), &w, &UtParams::default()).unwrap();
        // weights [0, 1/2, 1/2] at points {0, 1, -1}
        let expected = 0.5 * f(1.0) + 0.5 * f(-1.0);
        assert!((out.x[0] - expected).abs() < 1e-14);
        assert!((expected - 8.0 * 1.2f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn identity_measurement_stats() {
        let s = cholesky_factor(&Mat::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 0.7])).unwrap();
        let b = SqrtBelief::new(Vector::from_vec(vec![3.0, 4.0]), s).unwrap();
        let v = UpperTri::from_variances(&[1e-6, 1e-6]).unwrap();
        let m = sr_measure(&b, &|x| x.clone(), &v, &UtParams::default()).unwrap();
        assert!((&m.zhat - &b.x).amax() < 1e-14);
        let expect = b.covariance() + Mat::identity(2, 2) * 1e-6;
        assert!((m.d.covariance() - expect).amax() < 1e-12);
        assert!((&m.pxz - b.covariance()).amax() < 1e-12);
    }

    #[test]
    fn squared_measurement_near_point_mass() {
        let b = SqrtBelief::new(Vector::from_vec(vec![1.0]), UpperTri::from_diagonal(&[1e-4]).unwrap())
            .unwrap();
        let v = UpperTri::identity(1);
        let m = sr_measure(&b, &|x| Vector::from_vec(vec![x[0] * x[0] / 20.0]), &v, &UtParams::default())
            .unwrap();
        // UT mean of x²/20 for x ~ (1, 1e-8): (1 + 1e-8)/20
        assert!((m.zhat[0] - (1.0 + 1e-8) / 20.0).abs() < 1e-15);
    }
}
