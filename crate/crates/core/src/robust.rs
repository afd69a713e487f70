//! Correntropy-type loss family and the IRLS weights derived from it.
//!
//! The generalized correntropy-induced (GCI) loss of a residual vector is
//! `μ·Σ(1 − exp(−φ|e_i|^δ))` with `φ = 1/θ` and `μ = δ/(2θΓ(1/δ))`. Its IRLS
//! weight `μδφ|e|^{δ−2}exp(−φ|e|^δ)` drives the iterated robust update in
//! [`crate::filter`]. At `δ = 2` the weights are the correntropy-induced
//! (CI) weights `exp(−e²/σ²)` with `σ² = θ`, scaled by the constant `2μφ`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual magnitudes below this are clamped before evaluating `|e|^{δ−2}`.
pub const RESIDUAL_FLOOR: f64 = 1e-8;

/// Γ(x) by the Lanczos approximation (g = 7, nine terms).
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Shape `delta` and scale `theta` of the generalized Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GciParams {
    pub delta: f64,
    pub theta: f64,
    #[serde(skip)]
    phi: f64,
    #[serde(skip)]
    mu: f64,
}

impl GciParams {
    pub fn new(delta: f64, theta: f64) -> Result<Self> {
        if !(delta > 0.0) || !(theta > 0.0) || !delta.is_finite() || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "GCI needs delta > 0 and theta > 0 (delta={delta}, theta={theta})"
            )));
        }
        let mu = delta / (2.0 * theta * gamma(1.0 / delta));
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("GCI normalizer is not finite for delta={delta}")));
        }
        Ok(Self { delta, theta, phi: 1.0 / theta, mu })
    }

    /// Kernel factor `1/θ`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Normalizer `δ/(2θΓ(1/δ))`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Per-sample loss `μ(1 − exp(−φ|e|^δ))`.
    pub fn loss(&self, e: f64) -> f64 {
        self.mu * (1.0 - (-self.phi * e.abs().powf(self.delta)).exp())
    }
}

impl<'de> Deserialize<'de> for GciParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            delta: f64,
            theta: f64,
        }
        let raw = Raw::deserialize(d)?;
        GciParams::new(raw.delta, raw.theta).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KernelKind {
    Gci(GciParams),
    /// Correntropy-induced weight `exp(−e²/σ²)`.
    Ci { sigma: f64 },
    /// Gaussian correntropy weight `exp(−e²/(2σ²))`.
    Mcc { sigma: f64 },
    Uniform,
}

impl KernelKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Ci { sigma } | Self::Mcc { sigma } if !(*sigma > 0.0) || !sigma.is_finite() => {
                Err(Error::InvalidParameter(format!("kernel width must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn weight(&self, e: f64) -> f64 {
        match self {
            Self::Gci(p) => irls_weight(e, p),
            Self::Ci { sigma } => (-(e * e) / (sigma * sigma)).exp(),
            Self::Mcc { sigma } => (-(e * e) / (2.0 * sigma * sigma)).exp(),
            Self::Uniform => 1.0,
        }
    }

    /// [`KernelKind::weight`] up to a positive factor that does not depend on `e`.
    pub fn relative_weight(&self, e: f64) -> f64 {
        match self {
            Self::Gci(p) => {
                let a = e.abs();
                a.max(RESIDUAL_FLOOR).powf(p.delta - 2.0) * (-a.powf(p.delta) / p.theta).exp()
            }
            _ => self.weight(e),
        }
    }

    /// The loss whose IRLS weights are [`KernelKind::weight`].
    pub fn cost(&self, e: &[f64]) -> f64 {
        match self {
            Self::Gci(p) => gci_cost(e, p),
            Self::Ci { sigma } => {
                let s2 = sigma * sigma;
                s2 / (2.0 * e.len() as f64) * e.iter().map(|x| 1.0 - (-(x * x) / s2).exp()).sum::<f64>()
            }
            Self::Mcc { sigma } => {
                let s2 = sigma * sigma;
                s2 * e.iter().map(|x| 1.0 - (-(x * x) / (2.0 * s2)).exp()).sum::<f64>()
            }
            Self::Uniform => 0.5 * e.iter().map(|x| x * x).sum::<f64>(),
        }
    }
}

/// `μ·Σ_i (1 − exp(−φ|e_i|^δ))`.
pub fn gci_cost(e: &[f64], p: &GciParams) -> f64 {
    e.iter().map(|x| p.loss(*x)).sum()
}

/// Gradient of [`gci_cost`] with respect to each residual.
pub fn gci_cost_gradient(e: &[f64], p: &GciParams) -> Vec<f64> {
    e.iter()
        .map(|x| {
            let a = x.abs();
            p.mu * p.delta * p.phi * a.powf(p.delta - 1.0) * (-p.phi * a.powf(p.delta)).exp() * x.signum()
        })
        .collect()
}

/// IRLS weight `μδφ·max(|e|, ε)^{δ−2}·exp(−φ|e|^δ)`.
pub fn irls_weight(e: f64, p: &GciParams) -> f64 {
    let a = e.abs();
    p.mu * p.delta * p.phi * a.max(RESIDUAL_FLOOR).powf(p.delta - 2.0) * (-p.phi * a.powf(p.delta)).exp()
}

/// Diagonals of the state-block and measurement-block weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiagonals {
    pub state: Vec<f64>,
    pub meas: Vec<f64>,
}

pub fn weight_matrices(e: &[f64], n: usize, kernel: &KernelKind) -> Result<WeightDiagonals> {
    if n > e.len() {
        return Err(Error::DimensionMismatch { context: "weight_matrices", expected: n, found: e.len() });
    }
    let w: Vec<f64> = e.iter().map(|x| kernel.weight(*x)).collect();
    let (state, meas) = w.split_at(n);
    Ok(WeightDiagonals { state: state.to_vec(), meas: meas.to_vec() })
}

/// Sample information-potential objective `Q − V/2`, with `Q` the mean
/// per-sample loss and `V` the mean loss over all pairwise differences.
pub fn ip_objective(errors: &[f64], delta: f64, theta: f64) -> Result<f64> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let p = GciParams::new(delta, theta)?;
    let nf = n as f64;
    let q = errors.iter().map(|e| p.loss(*e)).sum::<f64>() / nf;
    let mut v = 0.0;
    for (i, ei) in errors.iter().enumerate() {
        // q(0) = 0 and q is even, so the double sum is twice the upper triangle.
        for ej in &errors[i + 1..] {
            v += p.loss(ei - ej);
        }
    }
    v = 2.0 * v / (nf * nf);
    Ok(q - 0.5 * v)
}

/// Density-matching score `mean_i p(e_i) − ½∫p²` for the normalized
/// generalized Gaussian density `p ∝ exp(−|x|^δ/θ)`.
pub fn density_match_objective(errors: &[f64], delta: f64, theta: f64) -> Result<f64> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let p = GciParams::new(delta, theta)?;
    let g = gamma(1.0 / delta);
    let c = delta / (2.0 * theta.powf(1.0 / delta) * g);
    let fit = errors.iter().map(|e| (-p.phi * e.abs().powf(delta)).exp()).sum::<f64>() * c / n as f64;
    // ∫exp(−2|x|^δ/θ)dx = 2Γ(1/δ)/δ·(θ/2)^{1/δ}
    let self_energy = c * c * 2.0 * g / delta * (theta / 2.0).powf(1.0 / delta);
    Ok(fit - 0.5 * self_energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptObjective {
    /// [`ip_objective`].
    InformationPotential,
    /// [`density_match_objective`].
    #[default]
    DensityMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptSearch {
    /// One pass: best θ at the current δ, then best δ at that θ.
    Alternating,
    /// Exhaustive search over the product grid.
    #[default]
    Joint,
}

/// Which regression residuals feed the adaptation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptResiduals {
    /// Measurement components of `e` at the predicted state, before the update.
    #[default]
    Innovation,
    /// All `N+M` components of `e` at the final iterate.
    Posterior,
    /// Innovation `z − ẑ` whitened by the unscented innovation covariance.
    WhitenedInnovation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum AdaptTrigger {
    EveryStep,
    /// Re-run only when the window variance moved by more than `threshold` (relative).
    OnInnovationChange { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub delta_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub window: usize,
    pub trigger: AdaptTrigger,
    pub objective: AdaptObjective,
    pub search: AdaptSearch,
    /// Divide the window by its standard deviation before searching.
    pub normalize: bool,
    pub residuals: AdaptResiduals,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            delta_grid: (0..=10).map(|i| (10 + 2 * i) as f64 / 10.0).collect(),
            theta_grid: (0..=8).map(|i| (20 + 10 * i) as f64 / 4.0).collect(),
            window: 50,
            trigger: AdaptTrigger::EveryStep,
            objective: AdaptObjective::default(),
            search: AdaptSearch::default(),
            normalize: false,
            residuals: AdaptResiduals::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let ascending = |g: &[f64]| g.windows(2).all(|w| w[0] < w[1]);
        if self.delta_grid.is_empty() || self.theta_grid.is_empty() {
            return Err(Error::InvalidParameter("adaptation grids must be nonempty".into()));
        }
        if !ascending(&self.delta_grid) || !ascending(&self.theta_grid) {
            return Err(Error::InvalidParameter("adaptation grids must be strictly ascending".into()));
        }
        if self.delta_grid.iter().chain(&self.theta_grid).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("adaptation grid values must be positive".into()));
        }
        if self.window < 2 {
            return Err(Error::InvalidParameter("adaptation window must hold at least 2 samples".into()));
        }
        if let AdaptTrigger::OnInnovationChange { threshold } = self.trigger {
            if !(threshold >= 0.0) {
                return Err(Error::InvalidParameter("trigger threshold must be nonnegative".into()));
            }
        }
        Ok(())
    }

    fn score(&self, e: &[f64], delta: f64, theta: f64) -> Result<f64> {
        match self.objective {
            AdaptObjective::InformationPotential => ip_objective(e, delta, theta),
            AdaptObjective::DensityMatch => density_match_objective(e, delta, theta),
        }
    }
}

fn std_dev(e: &[f64]) -> f64 {
    let n = e.len() as f64;
    let m = e.iter().sum::<f64>() / n;
    (e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Grid argmax with ties resolved toward the first (smallest) candidate.
fn argmax(grid: &[f64], mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut best = (grid[0], f(grid[0])?);
    for &g in &grid[1..] {
        let v = f(g)?;
        if v > best.1 {
            best = (g, v);
        }
    }
    Ok(best.0)
}

/// Picks `(δ, θ)` from the configured grids for the given residual samples.
///
/// `current_delta` seeds the alternating search; it is ignored by the joint search.
pub fn adapt_parameters(errors: &[f64], current_delta: f64, cfg: &AdaptConfig) -> Result<GciParams> {
    cfg.validate()?;
    if errors.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: errors.len() });
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter("adaptation samples must be finite".into()));
    }
    let scaled: Vec<f64>;
    let e = if cfg.normalize {
        let sd = std_dev(errors);
        scaled = if sd > 0.0 { errors.iter().map(|x| x / sd).collect() } else { errors.to_vec() };
        &scaled[..]
    } else {
        errors
    };

    let (delta, theta) = match cfg.search {
        AdaptSearch::Alternating => {
            let theta = argmax(&cfg.theta_grid, |t| cfg.score(e, current_delta, t))?;
            let delta = argmax(&cfg.delta_grid, |d| cfg.score(e, d, theta))?;
            (delta, theta)
        }
        AdaptSearch::Joint => {
            let mut best = (cfg.delta_grid[0], cfg.theta_grid[0], f64::NEG_INFINITY);
            for &d in &cfg.delta_grid {
                for &t in &cfg.theta_grid {
                    let v = cfg.score(e, d, t)?;
                    if v > best.2 {
                        best = (d, t, v);
                    }
                }
            }
            (best.0, best.1)
        }
    };
    GciParams::new(delta, theta)
}

/// Sliding window of recent residual samples owned by one filter.
#[derive(Debug, Clone)]
pub struct ErrorWindow {
    samples: VecDeque<f64>,
    capacity: usize,
    variance_at_last_adapt: Option<f64>,
}

impl ErrorWindow {
    pub fn new(capacity: usize) -> Self {
        Self { samples: VecDeque::with_capacity(capacity), capacity, variance_at_last_adapt: None }
    }

    pub fn push(&mut self, e: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(e);
    }

    pub fn extend(&mut self, es: impl IntoIterator<Item = f64>) {
        for e in es {
            self.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.samples.iter().copied().collect()
    }

    fn variance(&self) -> f64 {
        let s = self.to_vec();
        let sd = std_dev(&s);
        sd * sd
    }

    /// Whether adaptation should run now under `trigger`; records the
    /// window variance when it says yes.
    pub fn should_adapt(&mut self, trigger: &AdaptTrigger) -> bool {
        let var = self.variance();
        let fire = match (trigger, self.variance_at_last_adapt) {
            (AdaptTrigger::EveryStep, _) | (_, None) => true,
            (AdaptTrigger::OnInnovationChange { threshold }, Some(prev)) => {
                (var - prev).abs() > threshold * prev.abs().max(f64::MIN_POSITIVE)
            }
        };
        if fire {
            self.variance_at_last_adapt = Some(var);
        }
        fire
    }
}
