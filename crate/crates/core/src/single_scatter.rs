//! Attenuation kernel and the single-scattering lidar return.
//!
//! `attenuation` is the survival factor along a straight path through the
//! stratified medium; `single_scatter_return` is the familiar lidar equation:
//! backscatter at range `t/2`, two-way attenuation, inverse-square range
//! spread through the receiver disk.

use crate::error::{Error, Result};
use crate::geometry::DetectorGeometry;
use crate::medium::MediumModel;

/// A straight path of length `path_length` starting at height `start_height`
/// whose height decreases at rate `direction_cosine` per unit path (the
/// kernel looks back along the trajectory of a particle travelling with
/// polar-angle cosine `direction_cosine`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationQuery {
    pub path_length: f64,
    pub start_height: f64,
    pub direction_cosine: f64,
}

impl AttenuationQuery {
    fn validate(&self) -> Result<()> {
        if !self.path_length.is_finite() || self.path_length < 0.0 {
            return Err(Error::Domain(format!(
                "attenuation path length must be finite and >= 0, got {}",
                self.path_length
            )));
        }
        if !self.start_height.is_finite() {
            return Err(Error::Domain(format!(
                "attenuation start height must be finite, got {}",
                self.start_height
            )));
        }
        if !self.direction_cosine.is_finite() || self.direction_cosine.abs() > 1.0 {
            return Err(Error::Domain(format!(
                "attenuation direction cosine must satisfy |cos| <= 1, got {}",
                self.direction_cosine
            )));
        }
        Ok(())
    }
}

/// `exp[-integral_0^t sigma_t(z - tau cos(theta)) dtau]`.
///
/// The line integral collapses to an optical depth between the endpoint
/// heights divided by `|cos(theta)|`; a horizontal path sees the local
/// extinction for its whole length.
pub fn attenuation(q: &AttenuationQuery, medium: &MediumModel) -> Result<f64> {
    q.validate()?;
    Ok(attenuation_raw(
        q.path_length,
        q.start_height,
        q.direction_cosine,
        medium,
    ))
}

#[inline]
pub(crate) fn attenuation_raw(t: f64, z: f64, cos_theta: f64, medium: &MediumModel) -> f64 {
    let od = if cos_theta == 0.0 {
        medium.sigma_t_raw(z) * t
    } else {
        medium.optical_depth_raw(z, z - t * cos_theta) / cos_theta.abs()
    };
    (-od).exp()
}

/// Single-scattering return rate `I1(t)` per emitted particle:
///
/// `I1(t) = (2 pi rho0^2 / t^2) * exp[-2 integral_0^{t/2} sigma_t] * sigma(-1, t/2)`
///
/// The attenuation is two-way (out to range `t/2` and back), matching the
/// product `E(t/2, 0, pi) * E(t/2, t/2, 0)` of one-way kernels.
///
/// Only claimed accurate in the far field (`check_far_field`); the caller is
/// expected to surface that diagnostic, the value is computed regardless.
pub fn single_scatter_return(t: f64, geom: &DetectorGeometry, medium: &MediumModel) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::Domain(format!(
            "single_scatter_return requires t > 0, got {t}"
        )));
    }
    let half = 0.5 * t;
    let two_way = (-2.0 * medium.optical_depth_raw(0.0, half)).exp();
    let backscatter = medium.sigma_scatter_raw(-1.0, half);
    let rho0 = geom.rho0();
    Ok(2.0 * std::f64::consts::PI * rho0 * rho0 / (t * t) * two_way * backscatter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{ExtinctionProfile, PhaseFunction};
    use approx::assert_relative_eq;

    fn homogeneous(sigma_t: f64, s: f64) -> MediumModel {
        MediumModel::new(
            ExtinctionProfile::Homogeneous { sigma_t },
            PhaseFunction::Isotropic { scattering: s },
        )
        .unwrap()
    }

    #[test]
    fn attenuation_vacuum_is_one() {
        let m = homogeneous(0.0, 0.0);
        let q = AttenuationQuery {
            path_length: 25.0,
            start_height: 3.0,
            direction_cosine: 0.4,
        };
        assert_eq!(attenuation(&q, &m).unwrap(), 1.0);
    }

    #[test]
    fn attenuation_homogeneous_vertical() {
        let m = homogeneous(0.1, 0.05);
        let q = AttenuationQuery {
            path_length: 10.0,
            start_height: 12.0,
            direction_cosine: 1.0,
        };
        assert_relative_eq!(
            attenuation(&q, &m).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn attenuation_tabulated_matches_numeric_quadrature() {
        let m = MediumModel::new(
            ExtinctionProfile::PiecewiseLinear {
                nodes: vec![(0.0, 0.2), (10.0, 0.0)],
            },
            PhaseFunction::Isotropic { scattering: 0.0 },
        )
        .unwrap();
        let q = AttenuationQuery {
            path_length: 10.0,
            start_height: 10.0,
            direction_cosine: 1.0,
        };
        assert_relative_eq!(
            attenuation(&q, &m).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
        // Oblique path: integrate sigma_t along the segment numerically.
        let q = AttenuationQuery {
            path_length: 8.0,
            start_height: 7.0,
            direction_cosine: 0.6,
        };
        let n = 1 << 20;
        let h = q.path_length / n as f64;
        let f = |tau: f64| m.sigma_t_raw(q.start_height - tau * q.direction_cosine);
        let mut od = 0.5 * (f(0.0) + f(q.path_length));
        for k in 1..n {
            od += f(k as f64 * h);
        }
        od *= h;
        assert_relative_eq!(
            attenuation(&q, &m).unwrap(),
            (-od).exp(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn attenuation_horizontal_path() {
        let m = homogeneous(0.25, 0.0);
        let q = AttenuationQuery {
            path_length: 4.0,
            start_height: 2.0,
            direction_cosine: 0.0,
        };
        assert_relative_eq!(
            attenuation(&q, &m).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn attenuation_in_unit_interval_and_one_iff_zero_depth() {
        let m = homogeneous(0.3, 0.1);
        for (t, z, c) in [(5.0, 0.0, -1.0), (40.0, 20.0, 1.0), (3.0, 1.0, 0.5)] {
            let a = attenuation(
                &AttenuationQuery {
                    path_length: t,
                    start_height: z,
                    direction_cosine: c,
                },
                &m,
            )
            .unwrap();
            assert!(a > 0.0 && a <= 1.0);
        }
        // Path entirely in vacuum below the medium: depth 0, attenuation 1.
        let a = attenuation(
            &AttenuationQuery {
                path_length: 5.0,
                start_height: -1.0,
                direction_cosine: 1.0,
            },
            &m,
        )
        .unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn attenuation_multiplicative_under_path_splitting() {
        let m = MediumModel::new(
            ExtinctionProfile::PiecewiseLinear {
                nodes: vec![(0.0, 0.05), (2.0, 0.3), (7.0, 0.1), (9.0, 0.1)],
            },
            PhaseFunction::Isotropic { scattering: 0.0 },
        )
        .unwrap();
        let (z, c, t, s) = (8.0, 0.7, 9.0, 3.5);
        let whole = attenuation_raw(t, z, c, &m);
        let first = attenuation_raw(s, z, c, &m);
        let second = attenuation_raw(t - s, z - s * c, c, &m);
        assert_relative_eq!(whole, first * second, max_relative = 1e-12);
    }

    #[test]
    fn attenuation_rejects_invalid_queries() {
        let m = homogeneous(0.1, 0.0);
        for q in [
            AttenuationQuery {
                path_length: -1.0,
                start_height: 0.0,
                direction_cosine: 1.0,
            },
            AttenuationQuery {
                path_length: 1.0,
                start_height: 0.0,
                direction_cosine: 1.5,
            },
            AttenuationQuery {
                path_length: f64::NAN,
                start_height: 0.0,
                direction_cosine: 1.0,
            },
        ] {
            assert!(attenuation(&q, &m).is_err());
        }
    }

    #[test]
    fn no_backscatter_means_no_return() {
        let m = homogeneous(0.1, 0.0);
        let g = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
        assert_eq!(single_scatter_return(20.0, &g, &m).unwrap(), 0.0);
    }

    #[test]
    fn lidar_formula_closed_form() {
        let m = homogeneous(0.1, 0.05);
        let g = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
        let t = 20.0;
        let expected = 2.0 * std::f64::consts::PI * 0.01 / 400.0
            * (-2.0f64).exp()
            * (0.05 / (4.0 * std::f64::consts::PI));
        assert_relative_eq!(
            single_scatter_return(t, &g, &m).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn doubling_radius_quadruples_return() {
        let m = homogeneous(0.1, 0.05);
        let g1 = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
        let g2 = DetectorGeometry::from_epsilon(0.2, 0.1).unwrap();
        let t = 30.0;
        assert_relative_eq!(
            single_scatter_return(t, &g2, &m).unwrap(),
            4.0 * single_scatter_return(t, &g1, &m).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn range_corrected_signal_recovers_backscatter() {
        // I1 * t^2 * exp(+2 OD(0, t/2)) / (2 pi rho0^2) == sigma(-1, t/2)
        let m = MediumModel::new(
            ExtinctionProfile::PiecewiseLinear {
                nodes: vec![(0.0, 0.12), (6.0, 0.02), (15.0, 0.08)],
            },
            PhaseFunction::HenyeyGreenstein {
                scattering: 0.01,
                g: 0.4,
            },
        )
        .unwrap();
        let g = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
        for t in [8.0, 14.0, 26.0] {
            let i1 = single_scatter_return(t, &g, &m).unwrap();
            let corrected = i1 * t * t * (2.0 * m.optical_depth(0.0, 0.5 * t).unwrap()).exp()
                / (2.0 * std::f64::consts::PI * g.rho0() * g.rho0());
            assert_relative_eq!(
                corrected,
                m.sigma_scatter(-1.0, 0.5 * t).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rejects_nonpositive_time() {
        let m = homogeneous(0.1, 0.05);
        let g = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
        assert!(single_scatter_return(0.0, &g, &m).is_err());
        assert!(single_scatter_return(-3.0, &g, &m).is_err());
    }
}
