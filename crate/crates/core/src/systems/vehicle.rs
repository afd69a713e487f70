use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::StateSpaceModel;

/// Offset of the bearing reference point in both axes.
const BEARING_OFFSET: f64 = 100.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VehicleMeasurement {
    /// `[−x₁−x₃, −x₂−x₄, √(x₁²+x₂²), atan((x₁+100)/(x₂+100))]`.
    #[default]
    Verbatim,
    /// Range and bearing channels only.
    RangeBearing,
}

/// Constant-velocity vehicle with state `[east, north, v_east, v_north]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSystem {
    pub dt: f64,
    pub measurement: VehicleMeasurement,
}

impl Default for VehicleSystem {
    fn default() -> Self {
        Self { dt: 0.1, measurement: VehicleMeasurement::Verbatim }
    }
}

impl VehicleSystem {
    pub fn transition_matrix(&self) -> Mat {
        let t = self.dt;
        Mat::from_row_slice(4, 4, &[1.0, 0.0, t, 0.0, 0.0, 1.0, 0.0, t, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    }

    fn range_bearing(x: &Vector) -> (f64, f64) {
        let r = x[0].hypot(x[1]);
        let b = ((x[0] + BEARING_OFFSET) / (x[1] + BEARING_OFFSET)).atan();
        (r, b)
    }

    /// Jacobian that reports the range singularity instead of returning NaN.
    pub fn try_jacobian(&self, x: &Vector) -> Result<Mat> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Err(Error::RangeSingularity);
        }
        let a = x[0] + BEARING_OFFSET;
        let b = x[1] + BEARING_OFFSET;
        let q = a * a + b * b;
        let range = [x[0] / r, x[1] / r, 0.0, 0.0];
        let bearing = [b / q, -a / q, 0.0, 0.0];
        Ok(match self.measurement {
            VehicleMeasurement::Verbatim => {
                let mut j = Mat::zeros(4, 4);
                j[(0, 0)] = -1.0;
                j[(0, 2)] = -1.0;
                j[(1, 1)] = -1.0;
                j[(1, 3)] = -1.0;
                for c in 0..4 {
                    j[(2, c)] = range[c];
                    j[(3, c)] = bearing[c];
                }
                j
            }
            VehicleMeasurement::RangeBearing => {
                let mut j = Mat::zeros(2, 4);
                for c in 0..4 {
                    j[(0, c)] = range[c];
                    j[(1, c)] = bearing[c];
                }
                j
            }
        })
    }
}

impl StateSpaceModel for VehicleSystem {
    fn state_dim(&self) -> usize {
        4
    }

    fn meas_dim(&self) -> usize {
        match self.measurement {
            VehicleMeasurement::Verbatim => 4,
            VehicleMeasurement::RangeBearing => 2,
        }
    }

    fn transition(&self, x: &Vector, _k: usize) -> Vector {
        self.transition_matrix() * x
    }

    fn measure(&self, x: &Vector) -> Vector {
        let (r, b) = Self::range_bearing(x);
        match self.measurement {
            VehicleMeasurement::Verbatim => Vector::from_vec(vec![-x[0] - x[2], -x[1] - x[3], r, b]),
            VehicleMeasurement::RangeBearing => Vector::from_vec(vec![r, b]),
        }
    }

    fn measurement_jacobian(&self, x: &Vector) -> Option<Mat> {
        self.try_jacobian(x).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::finite_difference_jacobian;
    use rand::{Rng, SeedableRng};

    #[test]
    fn initial_state_measurement() {
        let v = VehicleSystem::default();
        let z = v.measure(&Vector::from_vec(vec![0.0, 10.0, 5.0, 10.0]));
        assert_eq!(z[0], -5.0);
        assert_eq!(z[1], -20.0);
        assert_eq!(z[2], 10.0);
        assert!((z[3] - (100.0f64 / 110.0).atan()).abs() < 1e-15);
    }

    #[test]
    fn position_advances_by_velocity() {
        let v = VehicleSystem::default();
        let x = v.transition(&Vector::from_vec(vec![1.0, 2.0, 3.0, -4.0]), 1);
        assert!((x - Vector::from_vec(vec![1.3, 1.6, 3.0, -4.0])).amax() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for mode in [VehicleMeasurement::Verbatim, VehicleMeasurement::RangeBearing] {
            let v = VehicleSystem { measurement: mode, ..VehicleSystem::default() };
            for _ in 0..100 {
                let x = Vector::from_fn(4, |_, _| rng.random_range(-50.0..50.0));
                let fd = finite_difference_jacobian(&|s| v.measure(s), &x);
                let an = v.measurement_jacobian(&x).unwrap();
                assert!((fd - an).amax() < 1e-5);
            }
        }
    }

    #[test]
    fn origin_is_singular() {
        let v = VehicleSystem::default();
        assert!(matches!(v.try_jacobian(&Vector::zeros(4)), Err(Error::RangeSingularity)));
        assert!(v.measurement_jacobian(&Vector::zeros(4)).is_none());
    }
}
