//! Robust square-root unscented filtering with generalized
//! correntropy-induced (GCI) weighting.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: Cholesky, QR, rank-1 update/downdate and triangular solves
//!   on upper factors `P = Sᵀ·S`.
//! - [`unscented`]: sigma points and square-root time/measurement updates.
//! - [`robust`]: GCI, CI and MCC losses, IRLS weights and kernel-parameter adaptation.
//! - [`filter`]: the filter family and its iterated robust update.
//! - [`noise`]: seeded Gaussian/Laplace mixtures.
//! - [`systems`]: scalar, vehicle and IEEE 14-bus benchmark models.
//! - [`harness`]: Monte-Carlo experiments and report files.
//!
//! ```
//! use gci_ukf::prelude::*;
//!
//! let model = ScalarSystem::default();
//! let spec = FilterSpec::new(FilterKind::SrGciIukf)
//!     .with_kernel(KernelKind::Gci(GciParams::new(1.8, 15.0).unwrap()));
//! let one = Mat::identity(1, 1);
//! let mut f = Filter::new(spec, &model, &one, &one, &Vector::zeros(1), &one).unwrap();
//! let diag = f.step(&Vector::from_vec(vec![2.5])).unwrap();
//! assert!(diag.iterations_used >= 1);
//! ```

pub mod error;
pub mod filter;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod robust;
pub mod systems;
pub mod unscented;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::filter::{Filter, FilterKind, FilterSpec, JacobianMode, StepDiagnostics};
    pub use crate::linalg::{Mat, UpperTri, Vector};
    pub use crate::model::{LinearModel, StateSpaceModel};
    pub use crate::noise::{presets, Component, NoiseModel, SeededStream};
    pub use crate::robust::{AdaptConfig, GciParams, KernelKind};
    pub use crate::systems::{PowerNetwork, PowerSystem, ScalarSystem, VehicleMeasurement, VehicleSystem};
    pub use crate::unscented::{SqrtBelief, UtParams};
}
