//! The three benchmark models: a scalar strongly-nonlinear system, a 4-state
//! vehicle navigation model, and forecasting-aided state estimation on a
//! power network.

mod power;
mod scalar;
mod vehicle;

pub use power::{
    load_network, Branch, Bus, BusType, Measurement, MeasurementKind, NetworkFormat, PowerNetwork,
    PowerSystem, IEEE14_JSON,
};
pub use scalar::ScalarSystem;
pub use vehicle::{VehicleMeasurement, VehicleSystem};

use crate::linalg::{Mat, Vector};
use crate::model::StateSpaceModel;

/// Central-difference Jacobian of `h` with step `max(1e-6, 1e-6·|x_i|)`.
pub fn finite_difference_jacobian(h: &dyn Fn(&Vector) -> Vector, x: &Vector) -> Mat {
    let z0 = h(x);
    let mut jac = Mat::zeros(z0.len(), x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let step = (1e-6 * x[i].abs()).max(1e-6);
        xp[i] = x[i] + step;
        let hi = h(&xp);
        xp[i] = x[i] - step;
        let lo = h(&xp);
        xp[i] = x[i];
        jac.set_column(i, &((hi - lo) / (2.0 * step)));
    }
    jac
}

pub(crate) fn fd_jacobian_of(model: &dyn StateSpaceModel, x: &Vector) -> Mat {
    finite_difference_jacobian(&|v| model.measure(v), x)
}
