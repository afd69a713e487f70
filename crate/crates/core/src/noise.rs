//! Seeded finite-mixture noise generators.
//!
//! A [`NoiseModel`] is a mixture of Gaussian and Laplace components, each
//! parameterized by mean and variance. Laplace components use scale
//! `b = sqrt(variance/2)` so the stated variance is the actual second
//! central moment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub family: Family,
    pub mean: f64,
    pub variance: f64,
}

impl Component {
    pub fn gaussian(weight: f64, mean: f64, variance: f64) -> Self {
        Self { weight, family: Family::Gaussian, mean, variance }
    }

    pub fn laplace(weight: f64, mean: f64, variance: f64) -> Self {
        Self { weight, family: Family::Laplace, mean, variance }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self.family {
            Family::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.mean + self.variance.sqrt() * z
            }
            Family::Laplace => {
                let b = (self.variance / 2.0).sqrt();
                // u uniform on (-1/2, 1/2]
                let u: f64 = 0.5 - rng.random::<f64>();
                self.mean - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct NoiseModel {
    components: Vec<Component>,
}

impl TryFrom<Vec<Component>> for NoiseModel {
    type Error = Error;

    fn try_from(components: Vec<Component>) -> Result<Self> {
        Self::new(components)
    }
}

impl From<NoiseModel> for Vec<Component> {
    fn from(m: NoiseModel) -> Self {
        m.components
    }
}

impl NoiseModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("noise model needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight > 0.0) || !(c.variance > 0.0) || !c.mean.is_finite() || !c.variance.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "noise component needs weight > 0, variance > 0 and finite mean: {c:?}"
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![Component::gaussian(1.0, mean, variance)])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let last = self.components.len() - 1;
        let mut u: f64 = rng.random();
        for (i, c) in self.components.iter().enumerate() {
            if u < c.weight || i == last {
                return c.draw(rng);
            }
            u -= c.weight;
        }
        unreachable!()
    }

    /// Exact `(mean, variance)` of the mixture.
    pub fn moments(&self) -> (f64, f64) {
        mixture_moments(self)
    }
}

pub fn mixture_moments(model: &NoiseModel) -> (f64, f64) {
    let mean: f64 = model.components.iter().map(|c| c.weight * c.mean).sum();
    // Σ w(σ² + μ²) − mean², written about the mixture mean
    let var = model.components.iter().map(|c| c.weight * (c.variance + (c.mean - mean).powi(2))).sum();
    (mean, var)
}

/// Deterministic random stream for one Monte-Carlo trial.
///
/// Streams with the same `(seed, stream_id)` are bit-identical; distinct
/// `stream_id`s select independent ChaCha streams under the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Independent per-channel noise: one model shared by every channel or one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelNoise {
    Shared(NoiseModel),
    PerChannel(Vec<NoiseModel>),
}

impl ChannelNoise {
    pub fn model(&self, channel: usize) -> &NoiseModel {
        match self {
            Self::Shared(m) => m,
            Self::PerChannel(ms) => &ms[channel],
        }
    }

    pub fn check_channels(&self, dim: usize) -> Result<()> {
        match self {
            Self::PerChannel(ms) if ms.len() != dim => Err(Error::DimensionMismatch {
                context: "channel noise",
                expected: dim,
                found: ms.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn sample_vec(&self, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..dim).map(|i| self.model(i).sample(rng)).collect()
    }

    pub fn means(&self, dim: usize) -> Vec<f64> {
        (0..dim).map(|i| self.model(i).moments().0).collect()
    }

    /// Per-channel variances, i.e. the diagonal of the noise covariance.
    pub fn variances(&self, dim: usize) -> Vec<f64> {
        (0..dim).map(|i| self.model(i).moments().1).collect()
    }
}

/// Measurement and process noise regimes used by the benchmarks.
pub mod presets {
    use super::{Component, NoiseModel};

    fn mix(c: Vec<Component>) -> NoiseModel {
        NoiseModel::new(c).expect("preset mixtures are valid")
    }

    /// `0.9·N(0, 0.1) + 0.1·N(0, 100)`; noise "e" is the same mixture.
    pub fn noise_a() -> NoiseModel {
        mix(vec![Component::gaussian(0.9, 0.0, 0.1), Component::gaussian(0.1, 0.0, 100.0)])
    }

    pub fn noise_b() -> NoiseModel {
        mix(vec![Component::gaussian(0.8, 0.0, 0.1), Component::gaussian(0.2, 0.0, 100.0)])
    }

    pub fn noise_c() -> NoiseModel {
        mix(vec![Component::gaussian(0.7, 0.0, 0.1), Component::gaussian(0.3, 0.0, 100.0)])
    }

    pub fn noise_e() -> NoiseModel {
        noise_a()
    }

    pub fn noise_f() -> NoiseModel {
        mix(vec![Component::gaussian(0.9, -0.1, 0.1), Component::gaussian(0.1, 0.1, 100.0)])
    }

    pub fn noise_g() -> NoiseModel {
        mix(vec![
            Component::gaussian(0.49, -0.1, 0.1),
            Component::gaussian(0.49, 0.1, 0.1),
            Component::gaussian(0.02, 0.0, 100.0),
        ])
    }

    /// Power case a: `0.9·N(0, 0.01) + 0.1·N(0, 1000)`.
    pub fn power_gaussian_mixture() -> NoiseModel {
        mix(vec![Component::gaussian(0.9, 0.0, 0.01), Component::gaussian(0.1, 0.0, 1000.0)])
    }

    /// Power case b: `0.9·L(0, 0.1) + 0.1·N(0, 100)`, Laplace variance 0.1.
    pub fn power_laplace_mixture() -> NoiseModel {
        mix(vec![Component::laplace(0.9, 0.0, 0.1), Component::gaussian(0.1, 0.0, 100.0)])
    }

    /// Power case c: `0.8·N(0, 1) + 0.1·N(1, 100) + 0.1·N(−1, 100)`.
    pub fn power_asymmetric_mixture() -> NoiseModel {
        mix(vec![
            Component::gaussian(0.8, 0.0, 1.0),
            Component::gaussian(0.1, 1.0, 100.0),
            Component::gaussian(0.1, -1.0, 100.0),
        ])
    }

    pub fn by_name(name: &str) -> Option<NoiseModel> {
        Some(match name {
            "a" => noise_a(),
            "b" => noise_b(),
            "c" => noise_c(),
            "e" => noise_e(),
            "f" => noise_f(),
            "g" => noise_g(),
            "power-a" => power_gaussian_mixture(),
            "power-b" => power_laplace_mixture(),
            "power-c" => power_asymmetric_mixture(),
            _ => return None,
        })
    }
}
