use crate::linalg::{Mat, Vector};
use crate::model::StateSpaceModel;

/// `x' = 0.5x + 25x/(1+x²) + 8cos(1.2·c)`, `z = x²/20`.
///
/// With `time_varying = false` the cosine argument is the state (`c = x`);
/// otherwise it is the step index, as in the classic growth model.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarSystem {
    pub time_varying: bool,
}

impl ScalarSystem {
    pub fn f(&self, x: f64, k: usize) -> f64 {
        let c = if self.time_varying { k as f64 } else { x };
        0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * c).cos()
    }

    pub fn h(x: f64) -> f64 {
        x * x / 20.0
    }

    pub fn dh(x: f64) -> f64 {
        x / 10.0
    }
}

impl StateSpaceModel for ScalarSystem {
    fn state_dim(&self) -> usize {
        1
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition(&self, x: &Vector, k: usize) -> Vector {
        Vector::from_element(1, self.f(x[0], k))
    }

    fn measure(&self, x: &Vector) -> Vector {
        Vector::from_element(1, Self::h(x[0]))
    }

    fn measurement_jacobian(&self, x: &Vector) -> Option<Mat> {
        Some(Mat::from_element(1, 1, Self::dh(x[0])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::finite_difference_jacobian;

    #[test]
    fn reference_evaluations() {
        let s = ScalarSystem::default();
        assert_eq!(s.f(0.0, 0), 8.0);
        assert_eq!(ScalarSystem::h(0.0), 0.0);
        assert_eq!(ScalarSystem::h(2.0), 0.2);
        assert_eq!(ScalarSystem::dh(2.0), 0.2);
        // 0.5 + 12.5 + 8cos(1.2)
        assert!((s.f(1.0, 0) - (13.0 + 8.0 * 1.2f64.cos())).abs() < 1e-14);
        let tv = ScalarSystem { time_varying: true };
        assert!((tv.f(1.0, 3) - (13.0 + 8.0 * 3.6f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let s = ScalarSystem::default();
        for x in [-17.0, -2.5, 0.0, 0.3, 11.0] {
            let x = Vector::from_element(1, x);
            let fd = finite_difference_jacobian(&|v| s.measure(v), &x);
            assert!((fd - s.measurement_jacobian(&x).unwrap()).amax() < 1e-5);
        }
    }
}
