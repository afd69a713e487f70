//! The filter family.
//!
//! Every member shares the unscented time update. They differ in the
//! measurement update:
//!
//! | kind                | covariance | update                                 |
//! |---------------------|------------|----------------------------------------|
//! | `ukf`               | full       | one-shot `K = P_xz·P_z⁻¹`              |
//! | `iukf`              | full       | iterated, uniform weights              |
//! | `sr-ukf`            | factor     | one-shot, square-root                  |
//! | `mcc-ukf`           | full       | iterated, Gaussian correntropy weights |
//! | `sr-ci-iukf`        | factor     | iterated, CI weights                   |
//! | `sr-gci-iukf`       | factor     | iterated, GCI weights                  |
//! | `sr-gci-iukf-adapt` | factor     | iterated, GCI with on-line `(δ, θ)`    |
//!
//! The iterated update treats the prediction and the measurement as one
//! whitened regression `e = Ψ⁻¹([x̂⁻; z] − [x; h(x)])` with
//! `Ψ = blockdiag(Sᵀ, S_vᵀ)`, reweights each residual by the kernel and
//! solves the weighted problem by Gauss–Newton steps around `x̂⁻`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LinalgContext, Result};
use crate::linalg::{
    cholesky_factor, qr_triangularize, rank1_update_in_place, symmetrize, tri_solve, tri_solve_vec, vstack, Mat,
    Rank1, Side, UpperTri, Vector,
};
use crate::model::StateSpaceModel;
use crate::robust::{adapt_parameters, AdaptConfig, AdaptResiduals, ErrorWindow, GciParams, KernelKind};
use crate::systems::fd_jacobian_of;
use crate::unscented::{sr_measure, sr_predict, ut_moments, MeasStats, SqrtBelief, UtParams};

/// Kernel weights below this fraction of the largest weight are raised to it.
const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Ukf,
    Iukf,
    SrUkf,
    MccUkf,
    SrCiIukf,
    SrGciIukf,
    SrGciIukfAdapt,
}

impl FilterKind {
    pub const ALL: [FilterKind; 7] = [
        Self::Ukf,
        Self::Iukf,
        Self::SrUkf,
        Self::MccUkf,
        Self::SrCiIukf,
        Self::SrGciIukf,
        Self::SrGciIukfAdapt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ukf => "ukf",
            Self::Iukf => "iukf",
            Self::SrUkf => "sr-ukf",
            Self::MccUkf => "mcc-ukf",
            Self::SrCiIukf => "sr-ci-iukf",
            Self::SrGciIukf => "sr-gci-iukf",
            Self::SrGciIukfAdapt => "sr-gci-iukf-adapt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::Ukf => "unscented Kalman filter, covariance form",
            Self::Iukf => "iterated UKF with unweighted Gauss-Newton measurement update",
            Self::SrUkf => "square-root UKF",
            Self::MccUkf => "iterated UKF weighted by the maximum-correntropy kernel",
            Self::SrCiIukf => "square-root iterated UKF with correntropy-induced weights",
            Self::SrGciIukf => "square-root iterated UKF with generalized correntropy-induced weights",
            Self::SrGciIukfAdapt => "SR-GCI-IUKF with on-line kernel shape and scale selection",
        }
    }

    pub fn is_square_root(self) -> bool {
        matches!(self, Self::SrUkf | Self::SrCiIukf | Self::SrGciIukf | Self::SrGciIukfAdapt)
    }

    pub fn is_iterated(self) -> bool {
        !matches!(self, Self::Ukf | Self::SrUkf)
    }

    /// Whether the kind takes a kernel; the others ignore it.
    pub fn is_robust(self) -> bool {
        matches!(self, Self::MccUkf | Self::SrCiIukf | Self::SrGciIukf | Self::SrGciIukfAdapt)
    }

    fn accepts(self, kernel: &KernelKind) -> bool {
        matches!(
            (self, kernel),
            (_, KernelKind::Uniform)
                | (Self::MccUkf, KernelKind::Mcc { .. })
                | (Self::SrCiIukf, KernelKind::Ci { .. })
                | (Self::SrGciIukf | Self::SrGciIukfAdapt, KernelKind::Gci(_))
        )
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// Analytic when the model has one at the point, finite differences otherwise.
    #[default]
    Auto,
    Analytic,
    FiniteDifference,
    /// `(P⁻¹·P_xz)ᵀ` from the predicted sigma-point statistics.
    Statistical,
}

/// Which posterior covariance the update tries first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorForm {
    /// `P⁻ − K·P_z·Kᵀ` with the sigma-point innovation covariance `P_z`.
    #[default]
    Downdate,
    /// `P⁻ − K·(HP⁻Hᵀ + V)·Kᵀ` with `H` at the final iterate.
    Linearized,
    /// `(I−KH)P⁻(I−KH)ᵀ + KVKᵀ`.
    Joseph,
}

/// Where the weighted fixed-point loop takes its first weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationStart {
    /// Weights evaluated at `x⁰ = x⁻`, where the state residual is zero.
    Prior,
    /// First iteration unweighted; kernel weights from the second on.
    UnweightedStep,
    /// At `x⁰ = x⁻`, state weights taken at a unit whitened residual, the
    /// expected prior error magnitude; measurement weights at the innovation.
    #[default]
    UnitStateResidual,
}

fn default_iter_tol() -> f64 {
    1e-6
}

fn default_iter_max() -> usize {
    10
}

fn default_gain_ceiling() -> f64 {
    1e8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Required for `mcc-ukf`, `sr-ci-iukf`, `sr-gci-iukf[-adapt]`; `uniform` is accepted by all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelKind>,
    #[serde(default)]
    pub ut: UtParams,
    #[serde(default = "default_iter_tol")]
    pub iter_tol: f64,
    #[serde(default = "default_iter_max")]
    pub iter_max: usize,
    #[serde(default)]
    pub jacobian: JacobianMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapt: Option<AdaptConfig>,
    /// Steps whose gain Frobenius norm exceeds this are rejected.
    #[serde(default = "default_gain_ceiling")]
    pub gain_ceiling: f64,
    #[serde(default)]
    pub posterior: PosteriorForm,
    #[serde(default)]
    pub start: IterationStart,
}

impl FilterSpec {
    pub fn new(kind: FilterKind) -> Self {
        Self {
            kind,
            kernel: None,
            ut: UtParams::default(),
            iter_tol: default_iter_tol(),
            iter_max: default_iter_max(),
            jacobian: JacobianMode::Auto,
            adapt: None,
            gain_ceiling: default_gain_ceiling(),
            posterior: PosteriorForm::Downdate,
            start: IterationStart::UnitStateResidual,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelKind) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn with_jacobian(mut self, mode: JacobianMode) -> Self {
        self.jacobian = mode;
        self
    }

    pub fn with_adapt(mut self, cfg: AdaptConfig) -> Self {
        self.adapt = Some(cfg);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iter_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("iter_tol must be positive, got {}", self.iter_tol)));
        }
        if self.iter_max == 0 {
            return Err(Error::InvalidParameter("iter_max must be at least 1".into()));
        }
        if !(self.gain_ceiling > 0.0) {
            return Err(Error::InvalidParameter("gain_ceiling must be positive".into()));
        }
        UtParams::new(self.ut.alpha, self.ut.beta, self.ut.kappa)?;
        match (&self.kernel, self.kind.is_robust()) {
            (None, true) => {
                return Err(Error::InvalidParameter(format!("filter kind {} needs a kernel", self.kind)))
            }
            (Some(k), true) => {
                k.validate()?;
                if !self.kind.accepts(k) {
                    return Err(Error::InvalidParameter(format!(
                        "kernel {k:?} does not match filter kind {}",
                        self.kind
                    )));
                }
            }
            _ => {}
        }
        if let Some(a) = &self.adapt {
            a.validate()?;
        }
        Ok(())
    }

    fn kernel(&self) -> KernelKind {
        match self.kind {
            k if k.is_robust() => self.kernel.unwrap_or(KernelKind::Uniform),
            _ => KernelKind::Uniform,
        }
    }
}

/// The whitened regression at one predicted belief and measurement.
#[derive(Debug, Clone)]
pub struct RegressionFrame {
    pub x_pred: Vector,
    pub z: Vector,
    pub s: UpperTri,
    pub sqrt_v: UpperTri,
    /// `Ψ⁻¹·[x̂⁻; z]`.
    pub q: Vector,
}

impl RegressionFrame {
    pub fn state_dim(&self) -> usize {
        self.x_pred.len()
    }

    /// The lower block-diagonal `Ψ` with `Ψ·Ψᵀ = blockdiag(P⁻, V)`.
    pub fn psi(&self) -> Mat {
        let (n, m) = (self.s.dim(), self.sqrt_v.dim());
        let mut psi = Mat::zeros(n + m, n + m);
        psi.view_mut((0, 0), (n, n)).copy_from(&self.s.as_mat().transpose());
        psi.view_mut((n, n), (m, m)).copy_from(&self.sqrt_v.as_mat().transpose());
        psi
    }

    /// `Ψ⁻¹·[x; h(x)]`.
    pub fn g(&self, x: &Vector, h: &dyn Fn(&Vector) -> Vector) -> Result<Vector> {
        let gx = tri_solve_vec(&self.s, x, true).ctx("regression frame")?;
        let gz = tri_solve_vec(&self.sqrt_v, &h(x), true).ctx("regression frame")?;
        Ok(concat(&gx, &gz))
    }

    /// `e = Q − g(x)`, evaluated from differences to avoid cancellation.
    pub fn residual(&self, x: &Vector, hx: &Vector) -> Result<Vector> {
        let ex = tri_solve_vec(&self.s, &(&self.x_pred - x), true).ctx("regression frame")?;
        let ez = tri_solve_vec(&self.sqrt_v, &(&self.z - hx), true).ctx("regression frame")?;
        Ok(concat(&ex, &ez))
    }
}

fn concat(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

pub fn build_frame(pred: &SqrtBelief, z: &Vector, sqrt_v: &UpperTri) -> Result<RegressionFrame> {
    if z.len() != sqrt_v.dim() {
        return Err(Error::DimensionMismatch { context: "build_frame", expected: sqrt_v.dim(), found: z.len() });
    }
    let qx = tri_solve_vec(&pred.s, &pred.x, true).ctx("build_frame")?;
    let qz = tri_solve_vec(sqrt_v, z, true).ctx("build_frame")?;
    Ok(RegressionFrame {
        x_pred: pred.x.clone(),
        z: z.clone(),
        s: pred.s.clone(),
        sqrt_v: sqrt_v.clone(),
        q: concat(&qx, &qz),
    })
}

/// `K = Σ'Hᵀ(HΣ'Hᵀ + V')⁻¹` with `Σ' = SᵀΘx⁻¹S`, `V' = S_vᵀΘz⁻¹S_v`.
///
/// `theta_x` and `theta_z` are the diagonals of the weight matrices.
pub fn robust_gain(
    s_pred: &UpperTri,
    h: &Mat,
    theta_x: &[f64],
    theta_z: &[f64],
    sqrt_v: &UpperTri,
) -> Result<Mat> {
    let (n, m) = (s_pred.dim(), sqrt_v.dim());
    if h.shape() != (m, n) || theta_x.len() != n || theta_z.len() != m {
        return Err(Error::DimensionMismatch { context: "robust_gain", expected: m * n, found: h.len() });
    }
    if theta_x.iter().chain(theta_z).any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be positive and finite".into()));
    }
    // B = S·Hᵀ, so HΣ'Hᵀ = Bᵀ·Θx⁻¹·B and Σ'Hᵀ = Sᵀ·Θx⁻¹·B.
    let b = s_pred.as_mat() * h.transpose();
    let mut bw = b.clone();
    for (i, w) in theta_x.iter().enumerate() {
        bw.row_mut(i).scale_mut(1.0 / w);
    }
    let mut vw = sqrt_v.as_mat().clone();
    for (i, w) in theta_z.iter().enumerate() {
        vw.row_mut(i).scale_mut(1.0 / w);
    }
    let inner = symmetrize(&(b.tr_mul(&bw) + sqrt_v.as_mat().tr_mul(&vw)));
    let r = cholesky_factor(&inner).map_err(|_| Error::InnerMatrixNotPD)?;
    let c = s_pred.as_mat().tr_mul(&bw);
    // K·Rᵀ·R = C
    let y = tri_solve(&r, &c, Side::Right, false).ctx("robust_gain")?;
    tri_solve(&r, &y, Side::Right, true).ctx("robust_gain")
}

/// `∂h/∂x` at `x` under `mode`; `stats` is needed for the statistical mode.
pub fn jacobian(
    model: &dyn StateSpaceModel,
    x: &Vector,
    mode: JacobianMode,
    stats: Option<(&UpperTri, &Mat)>,
) -> Result<Mat> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIterate);
    }
    match mode {
        JacobianMode::Analytic => model.measurement_jacobian(x).ok_or(Error::JacobianUnavailable),
        JacobianMode::FiniteDifference => Ok(fd_jacobian_of(model, x)),
        JacobianMode::Auto => Ok(model.measurement_jacobian(x).unwrap_or_else(|| fd_jacobian_of(model, x))),
        JacobianMode::Statistical => {
            let (s, pxz) = stats.ok_or(Error::JacobianUnavailable)?;
            // P⁻¹·P_xz = S⁻¹·S⁻ᵀ·P_xz
            let t = tri_solve(s, pxz, Side::Left, true).ctx("statistical jacobian")?;
            Ok(tri_solve(s, &t, Side::Left, false).ctx("statistical jacobian")?.transpose())
        }
    }
}

/// How the posterior covariance of a step was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorPath {
    /// The configured [`PosteriorForm`].
    #[default]
    Primary,
    /// Joseph form `(I−KH)P⁻(I−KH)ᵀ + KVKᵀ` after the primary form lost definiteness.
    Joseph,
    /// Eigenvalues of the symmetrized posterior clamped to a floor.
    EigenFloor,
    /// Every path failed; the predicted covariance was kept.
    KeptPrior,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StepDiagnostics {
    pub iterations_used: usize,
    pub gain_norm: f64,
    pub cov_min_diag: f64,
    /// Kernel cost of the whitened residual at each iterate, the last one at the returned state.
    pub cost_trace: Vec<f64>,
    pub divergence_flag: bool,
    pub posterior: PosteriorPath,
    /// Kernel parameters in force for this step (GCI kinds only).
    pub params: Option<GciParams>,
    pub adapted: bool,
}

/// Result of the reweighted Gauss–Newton loop.
#[derive(Debug, Clone)]
pub struct IteratedUpdate {
    pub x: Vector,
    pub gain: Mat,
    pub h: Mat,
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
    /// Whitened residual at the starting point `x⁰ = x̂⁻`.
    pub initial_residual: Vector,
}

/// The robust fixed-point iteration around `frame.x_pred`.
pub fn iterate_update(
    frame: &RegressionFrame,
    model: &dyn StateSpaceModel,
    kernel: &KernelKind,
    spec: &FilterSpec,
    stats: Option<(&UpperTri, &Mat)>,
) -> Result<IteratedUpdate> {
    let n = frame.state_dim();
    let h_fn = |x: &Vector| model.measure(x);
    let mut x = frame.x_pred.clone();
    let mut hx = h_fn(&x);
    if hx.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMeasurement);
    }
    let mut e = frame.residual(&x, &hx)?;
    let initial_residual = e.clone();
    let mut cost_trace = vec![kernel.cost(e.as_slice())];
    let fixed_h = match spec.jacobian {
        JacobianMode::Statistical => Some(jacobian(model, &x, JacobianMode::Statistical, stats)?),
        _ => None,
    };
    let mut gain = Mat::zeros(n, frame.z.len());
    let mut h = Mat::zeros(frame.z.len(), n);
    let mut iterations = 0;
    while iterations < spec.iter_max {
        iterations += 1;
        let w = match spec.start {
            IterationStart::UnweightedStep if iterations == 1 => vec![1.0; e.len()],
            IterationStart::UnitStateResidual if iterations == 1 => {
                let mut probe = e.clone();
                probe.rows_mut(0, n).fill(1.0);
                normalized_weights(&probe, kernel)
            }
            _ => normalized_weights(&e, kernel),
        };
        let (wx, wz) = w.split_at(n);
        h = match &fixed_h {
            Some(h) => h.clone(),
            None => jacobian(model, &x, spec.jacobian, stats)?,
        };
        gain = robust_gain(&frame.s, &h, wx, wz, &frame.sqrt_v)?;
        let innov = &frame.z - &hx - &h * (&frame.x_pred - &x);
        let next = &frame.x_pred + &gain * innov;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate);
        }
        let step = (&next - &x).norm() / x.norm().max(1e-12);
        x = next;
        hx = h_fn(&x);
        if hx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteMeasurement);
        }
        e = frame.residual(&x, &hx)?;
        cost_trace.push(kernel.cost(e.as_slice()));
        if step <= spec.iter_tol {
            break;
        }
    }
    Ok(IteratedUpdate { x, gain, h, iterations, cost_trace, initial_residual })
}

/// Kernel weights divided by their maximum and floored; the gain is
/// invariant to the common scale.
fn normalized_weights(e: &Vector, kernel: &KernelKind) -> Vec<f64> {
    let mut w: Vec<f64> = e.iter().map(|r| kernel.relative_weight(*r)).collect();
    let max = w.iter().cloned().fold(0.0_f64, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return vec![1.0; w.len()];
    }
    for v in &mut w {
        *v = (*v / max).max(WEIGHT_FLOOR);
    }
    w
}

/// Square-root posterior: downdate `S⁻` by the columns of `K·Dᵀ` (no
/// downdate when `d` is `None`), then the fallback chain of [`PosteriorPath`].
fn sqrt_posterior(
    s_pred: &UpperTri,
    gain: &Mat,
    d: Option<&UpperTri>,
    h: &Mat,
    sqrt_v: &UpperTri,
) -> (UpperTri, PosteriorPath) {
    let joseph = || {
        // [S⁻(I−KH)ᵀ; S_v·Kᵀ]
        let n = s_pred.dim();
        let ikh = Mat::identity(n, n) - gain * h;
        let stacked = vstack(&[&(s_pred.as_mat() * ikh.transpose()), &(sqrt_v.as_mat() * gain.transpose())]);
        qr_triangularize(&stacked).ok().filter(|s| s.has_positive_diagonal())
    };
    let Some(d) = d else {
        return match joseph() {
            Some(s) => (s, PosteriorPath::Primary),
            None => match eigen_floor(&joseph_full(&s_pred.covariance(), gain, h, &sqrt_v.covariance())) {
                Some(s) => (s, PosteriorPath::EigenFloor),
                None => (s_pred.clone(), PosteriorPath::KeptPrior),
            },
        };
    };
    let g = gain * d.as_mat().transpose();
    let mut s = s_pred.clone();
    let ok = (0..g.ncols())
        .all(|c| rank1_update_in_place(&mut s, &g.column(c).into_owned(), Rank1::Downdate).is_ok());
    if ok && s.has_positive_diagonal() {
        return (s, PosteriorPath::Primary);
    }
    if let Some(s) = joseph() {
        return (s, PosteriorPath::Joseph);
    }
    match eigen_floor(&(s_pred.covariance() - &g * g.transpose())) {
        Some(s) => (s, PosteriorPath::EigenFloor),
        None => (s_pred.clone(), PosteriorPath::KeptPrior),
    }
}

fn joseph_full(p_pred: &Mat, gain: &Mat, h: &Mat, v: &Mat) -> Mat {
    let n = p_pred.nrows();
    let ikh = Mat::identity(n, n) - gain * h;
    symmetrize(&(&ikh * p_pred * ikh.transpose() + gain * v * gain.transpose()))
}

/// Full-covariance counterpart of [`sqrt_posterior`].
fn full_posterior(p_pred: &Mat, gain: &Mat, pz: Option<&Mat>, h: &Mat, v: &Mat) -> (Mat, PosteriorPath) {
    let joseph = joseph_full(p_pred, gain, h, v);
    let (p, primary_is_joseph) = match pz {
        Some(pz) => (symmetrize(&(p_pred - gain * pz * gain.transpose())), false),
        None => (joseph.clone(), true),
    };
    if cholesky_factor(&p).is_ok() {
        return (p, PosteriorPath::Primary);
    }
    if !primary_is_joseph && cholesky_factor(&joseph).is_ok() {
        return (joseph, PosteriorPath::Joseph);
    }
    match eigen_floor(&p) {
        Some(s) => (s.covariance(), PosteriorPath::EigenFloor),
        None => (p_pred.clone(), PosteriorPath::KeptPrior),
    }
}

/// Re-factorizes `P` after clamping its eigenvalues at `1e-12·trace/N`.
fn eigen_floor(p: &Mat) -> Option<UpperTri> {
    let p = symmetrize(p);
    if p.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let n = p.nrows();
    let floor = 1e-12 * p.trace().abs() / n as f64;
    if !(floor > 0.0) {
        return None;
    }
    let eig = SymmetricEigen::new(p);
    let lam = eig.eigenvalues.map(|l| l.max(floor));
    let rebuilt = &eig.eigenvectors * Mat::from_diagonal(&lam) * eig.eigenvectors.transpose();
    cholesky_factor(&symmetrize(&rebuilt)).ok()
}

#[derive(Debug, Clone)]
enum Cov {
    Full(Mat),
    Sqrt(UpperTri),
}

/// A running filter bound to one model and one pair of noise covariances.
pub struct Filter<'m> {
    spec: FilterSpec,
    kernel: KernelKind,
    model: &'m dyn StateSpaceModel,
    w: Mat,
    sqrt_w: UpperTri,
    v: Mat,
    sqrt_v: UpperTri,
    x: Vector,
    cov: Cov,
    k: usize,
    window: Option<ErrorWindow>,
}

impl std::fmt::Debug for Filter<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Filter").field("kind", &self.spec.kind).field("k", &self.k).field("x", &self.x).finish()
    }
}

impl<'m> Filter<'m> {
    /// `w`, `v` are the process and measurement covariances; `(x0, p0)` the initial belief.
    pub fn new(
        spec: FilterSpec,
        model: &'m dyn StateSpaceModel,
        w: &Mat,
        v: &Mat,
        x0: &Vector,
        p0: &Mat,
    ) -> Result<Self> {
        spec.validate()?;
        let (n, m) = (model.state_dim(), model.meas_dim());
        let dims = [(w.nrows(), n), (w.ncols(), n), (v.nrows(), m), (v.ncols(), m), (x0.len(), n), (p0.nrows(), n)];
        if let Some((found, expected)) = dims.into_iter().find(|(a, b)| a != b) {
            return Err(Error::DimensionMismatch { context: "Filter::new", expected, found });
        }
        let sqrt_w = cholesky_factor(w).ctx("process noise")?;
        let sqrt_v = cholesky_factor(v).ctx("measurement noise")?;
        let s0 = cholesky_factor(p0).ctx("initial covariance")?;
        let cov = if spec.kind.is_square_root() { Cov::Sqrt(s0) } else { Cov::Full(symmetrize(p0)) };
        let kernel = spec.kernel();
        let window = match (spec.kind, kernel) {
            (FilterKind::SrGciIukfAdapt, KernelKind::Gci(_)) => {
                Some(ErrorWindow::new(spec.adapt.clone().unwrap_or_default().window))
            }
            _ => None,
        };
        Ok(Self { spec, kernel, model, w: w.clone(), sqrt_w, v: v.clone(), sqrt_v, x: x0.clone(), cov, k: 0, window })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn kind(&self) -> FilterKind {
        self.spec.kind
    }

    pub fn estimate(&self) -> &Vector {
        &self.x
    }

    pub fn covariance(&self) -> Mat {
        match &self.cov {
            Cov::Full(p) => p.clone(),
            Cov::Sqrt(s) => s.covariance(),
        }
    }

    /// The upper factor of the current covariance (computed for full-covariance kinds).
    pub fn factor(&self) -> Result<UpperTri> {
        match &self.cov {
            Cov::Full(p) => cholesky_factor(p).ctx("posterior covariance"),
            Cov::Sqrt(s) => Ok(s.clone()),
        }
    }

    pub fn belief(&self) -> Result<SqrtBelief> {
        SqrtBelief::new(self.x.clone(), self.factor()?)
    }

    /// Current kernel, including any adapted parameters.
    pub fn kernel(&self) -> &KernelKind {
        &self.kernel
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.k
    }

    /// Replace the belief with `(x, p)` as if `k` steps had completed.
    pub fn reset(&mut self, x: &Vector, p: &Mat, k: usize) -> Result<()> {
        let n = self.model.state_dim();
        if let Some((found, expected)) = [(x.len(), n), (p.nrows(), n), (p.ncols(), n)].into_iter().find(|(a, b)| a != b) {
            return Err(Error::DimensionMismatch { context: "Filter::reset", expected, found });
        }
        let s = cholesky_factor(p).ctx("reset covariance")?;
        self.cov = if self.spec.kind.is_square_root() { Cov::Sqrt(s) } else { Cov::Full(symmetrize(p)) };
        self.x = x.clone();
        self.k = k;
        Ok(())
    }

    /// One predict/update cycle with measurement `z` at the next time index.
    ///
    /// Numerical failures in the update freeze the predicted belief and
    /// set `divergence_flag`; only failures of the time update are errors.
    pub fn step(&mut self, z: &Vector) -> Result<StepDiagnostics> {
        if z.len() != self.model.meas_dim() {
            return Err(Error::DimensionMismatch {
                context: "Filter::step",
                expected: self.model.meas_dim(),
                found: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteMeasurement);
        }
        let k = self.k + 1;
        let model = self.model;
        let f = |x: &Vector| model.transition(x, k);
        let h = |x: &Vector| model.measure(x);
        let ut = self.spec.ut;

        let (pred, p_pred) = match &self.cov {
            Cov::Full(p) => {
                let s = match cholesky_factor(p) {
                    Ok(s) => s,
                    Err(_) => eigen_floor(p).ok_or(Error::Linalg {
                        context: "covariance before predict",
                        source: crate::linalg::LinalgError::NotPositiveDefinite { pivot: 0 },
                    })?,
                };
                let (x, pp, _) = ut_moments(&self.x, &s, &f, &self.w, &ut).map_err(|_| Error::NonFiniteDynamics)?;
                let pp = symmetrize(&pp);
                let sp = cholesky_factor(&pp).ctx("predicted covariance")?;
                (SqrtBelief::new(x, sp)?, Some(pp))
            }
            Cov::Sqrt(s) => {
                let b = SqrtBelief { x: self.x.clone(), s: s.clone() };
                (sr_predict(&b, &f, &self.sqrt_w, &ut)?, None)
            }
        };
        self.k = k;

        let mut diag = StepDiagnostics {
            params: match self.kernel {
                KernelKind::Gci(p) => Some(p),
                _ => None,
            },
            ..StepDiagnostics::default()
        };
        match self.update(&pred, p_pred.as_ref(), z, &h, &mut diag) {
            Ok(()) => {}
            Err(_) => {
                self.x = pred.x.clone();
                self.cov = match p_pred {
                    Some(p) => Cov::Full(p),
                    None => Cov::Sqrt(pred.s.clone()),
                };
                diag.divergence_flag = true;
                diag.posterior = PosteriorPath::KeptPrior;
            }
        }
        diag.cov_min_diag = match &self.cov {
            Cov::Sqrt(s) => s.min_diag(),
            Cov::Full(p) => cholesky_factor(p).map(|s| s.min_diag()).unwrap_or(0.0),
        };
        Ok(diag)
    }

    fn update(
        &mut self,
        pred: &SqrtBelief,
        p_pred: Option<&Mat>,
        z: &Vector,
        h: &dyn Fn(&Vector) -> Vector,
        diag: &mut StepDiagnostics,
    ) -> Result<()> {
        let ut = self.spec.ut;
        let stats = match p_pred {
            Some(_) => {
                let (zhat, pz, pxz) = ut_moments(&pred.x, &pred.s, h, &self.v, &ut)?;
                let d = cholesky_factor(&symmetrize(&pz)).ctx("innovation covariance")?;
                MeasStats { zhat, d, pxz }
            }
            None => sr_measure(pred, h, &self.sqrt_v, &ut)?,
        };

        let (x, gain, hmat) = if self.spec.kind.is_iterated() {
            let frame = build_frame(pred, z, &self.sqrt_v)?;
            let cfg = self.spec.adapt.clone().unwrap_or_default();
            if let Some(window) = &mut self.window {
                match cfg.residuals {
                    AdaptResiduals::Innovation => {
                        let n = pred.dim();
                        window.extend(frame.residual(&pred.x, &h(&pred.x))?.iter().skip(n).copied());
                    }
                    AdaptResiduals::WhitenedInnovation => {
                        let r = tri_solve_vec(&stats.d, &(z - &stats.zhat), true).ctx("innovation whitening")?;
                        window.extend(r.iter().copied());
                    }
                    AdaptResiduals::Posterior => {}
                }
                if window.len() >= cfg.window && window.should_adapt(&cfg.trigger) {
                    if let KernelKind::Gci(p) = self.kernel {
                        let np = adapt_parameters(&window.to_vec(), p.delta, &cfg)?;
                        diag.adapted = np != p;
                        self.kernel = KernelKind::Gci(np);
                        diag.params = Some(np);
                    }
                }
            }
            let it = iterate_update(&frame, self.model, &self.kernel, &self.spec, Some((&pred.s, &stats.pxz)))?;
            if let (Some(window), AdaptResiduals::Posterior) = (&mut self.window, cfg.residuals) {
                window.extend(frame.residual(&it.x, &h(&it.x))?.iter().copied());
            }
            diag.iterations_used = it.iterations;
            diag.cost_trace = it.cost_trace;
            (it.x, it.gain, it.h)
        } else {
            // K = P_xz·P_z⁻¹ = P_xz·D⁻¹·D⁻ᵀ
            let y = tri_solve(&stats.d, &stats.pxz, Side::Right, false).ctx("gain")?;
            let gain = tri_solve(&stats.d, &y, Side::Right, true).ctx("gain")?;
            let x = &pred.x + &gain * (z - &stats.zhat);
            diag.iterations_used = 1;
            let hmat = jacobian(self.model, &pred.x, self.spec.jacobian, Some((&pred.s, &stats.pxz)))
                .unwrap_or_else(|_| fd_jacobian_of(self.model, &pred.x));
            (x, gain, hmat)
        };
        diag.gain_norm = gain.norm();
        if !diag.gain_norm.is_finite() || diag.gain_norm > self.spec.gain_ceiling {
            return Err(Error::NonFiniteIterate);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate);
        }

        let form = if self.spec.kind.is_iterated() { self.spec.posterior } else { PosteriorForm::Downdate };
        let (cov, path) = match p_pred {
            Some(pp) => {
                let pz = match form {
                    PosteriorForm::Downdate => Some(stats.d.covariance()),
                    PosteriorForm::Linearized => Some(symmetrize(&(&hmat * pp * hmat.transpose() + &self.v))),
                    PosteriorForm::Joseph => None,
                };
                let (p, path) = full_posterior(pp, &gain, pz.as_ref(), &hmat, &self.v);
                (Cov::Full(p), path)
            }
            None => {
                let d = match form {
                    PosteriorForm::Downdate => Some(stats.d.clone()),
                    PosteriorForm::Linearized => {
                        let stacked = vstack(&[&(pred.s.as_mat() * hmat.transpose()), self.sqrt_v.as_mat()]);
                        Some(qr_triangularize(&stacked).ctx("linearized innovation factor")?)
                    }
                    PosteriorForm::Joseph => None,
                };
                let (s, path) = sqrt_posterior(&pred.s, &gain, d.as_ref(), &hmat, &self.sqrt_v);
                (Cov::Sqrt(s), path)
            }
        };
        diag.posterior = path;
        if path == PosteriorPath::KeptPrior {
            diag.divergence_flag = true;
        }
        self.x = x;
        self.cov = cov;
        Ok(())
    }
}
