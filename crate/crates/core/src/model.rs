use crate::linalg::{Mat, Vector};

/// Discrete-time model `x_k = f(x_{k−1}) + w`, `z_k = h(x_k) + v` with
/// additive noise.
pub trait StateSpaceModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn meas_dim(&self) -> usize;

    /// `f`, evaluated when propagating from step `k − 1` to step `k`.
    fn transition(&self, x: &Vector, k: usize) -> Vector;

    /// `h`.
    fn measure(&self, x: &Vector) -> Vector;

    /// Analytic `∂h/∂x`, if the model has one.
    fn measurement_jacobian(&self, _x: &Vector) -> Option<Mat> {
        None
    }
}

/// Linear-Gaussian model used by tests and examples.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub f: Mat,
    pub h: Mat,
}

impl StateSpaceModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    fn transition(&self, x: &Vector, _k: usize) -> Vector {
        &self.f * x
    }

    fn measure(&self, x: &Vector) -> Vector {
        &self.h * x
    }

    fn measurement_jacobian(&self, _x: &Vector) -> Option<Mat> {
        Some(self.h.clone())
    }
}
