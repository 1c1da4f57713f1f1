//! Source/detector geometry, return-time grid, and validity-regime checks.
//!
//! The geometry is monostatic and fixed: a point impulse source at the origin
//! fires along `+z` into the medium, and the receiver is a disk of radius
//! `rho0` in the `z = 0` plane accepting directions within `theta0` of the
//! downward vertical (`theta` in `[pi - theta0, pi]`).

use crate::error::{Error, Result};
use crate::medium::MediumModel;

/// Receiver disk radius and angular aperture. `epsilon = tan(theta0)` is
/// cached because every validity check and domain bound is phrased in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorGeometry {
    rho0: f64,
    theta0: f64,
    epsilon: f64,
}

impl DetectorGeometry {
    pub fn new(rho0: f64, theta0: f64) -> Result<Self> {
        if !rho0.is_finite() || rho0 <= 0.0 {
            return Err(Error::Domain(format!(
                "detector radius rho0 must be finite and > 0, got {rho0}"
            )));
        }
        if !theta0.is_finite() || theta0 <= 0.0 || theta0 >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Domain(format!(
                "aperture half-angle theta0 must lie in (0, pi/2), got {theta0}"
            )));
        }
        Ok(DetectorGeometry {
            rho0,
            theta0,
            epsilon: theta0.tan(),
        })
    }

    /// Convenience constructor from `epsilon = tan(theta0)`.
    pub fn from_epsilon(rho0: f64, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::Domain(format!(
                "epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        Self::new(rho0, epsilon.atan())
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Cosine of the aperture half-angle; a direction with `dir_z <=
    /// -cos(theta0)` is inside the acceptance cone.
    pub fn cos_theta0(&self) -> f64 {
        self.theta0.cos()
    }
}

/// Strictly increasing positive return times (path-length units, `c = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Domain("time grid must not be empty".into()));
        }
        for &t in &times {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Domain(format!(
                    "time grid entries must be finite and > 0, got {t}"
                )));
            }
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Domain(format!(
                    "time grid must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid { times })
    }

    pub fn linear(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if n < 1 || !(t_max > t_min) {
            return Err(Error::Domain(format!(
                "linear grid requires t_max > t_min and n >= 1, got [{t_min}, {t_max}] n = {n}"
            )));
        }
        if n == 1 {
            return Self::new(vec![t_min]);
        }
        let step = (t_max - t_min) / (n - 1) as f64;
        Self::new((0..n).map(|k| t_min + k as f64 * step).collect())
    }

    pub fn log(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if t_min <= 0.0 || n < 1 || !(t_max > t_min) {
            return Err(Error::Domain(format!(
                "log grid requires 0 < t_min < t_max and n >= 1, got [{t_min}, {t_max}] n = {n}"
            )));
        }
        if n == 1 {
            return Self::new(vec![t_min]);
        }
        let (a, b) = (t_min.ln(), t_max.ln());
        let step = (b - a) / (n - 1) as f64;
        Self::new((0..n).map(|k| (a + k as f64 * step).exp()).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tally bin edges centered on the grid points: interior edges at the
    /// midpoints between neighbours, end bins extended by half the adjacent
    /// spacing. A single-point grid gets a bin of width `0.1 t` around it.
    pub fn bin_edges(&self) -> Vec<f64> {
        let t = &self.times;
        if t.len() == 1 {
            return vec![t[0] * 0.95, t[0] * 1.05];
        }
        let mut edges = Vec::with_capacity(t.len() + 1);
        edges.push((t[0] - 0.5 * (t[1] - t[0])).max(0.0));
        for w in t.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        let n = t.len();
        edges.push(t[n - 1] + 0.5 * (t[n - 1] - t[n - 2]));
        edges
    }
}

/// Result of the far-field check for the single-scattering formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarField {
    /// `t/2 > rho0/epsilon` (strict).
    pub ok: bool,
    /// `(t/2) / (rho0/epsilon)`; values above 1 are far-field.
    pub margin: f64,
}

/// The single-scattering formula drops the receiver-radius constraint in
/// favour of the aperture one, which is only valid when the echo range `t/2`
/// exceeds `rho0/epsilon`.
pub fn check_far_field(t: f64, geom: &DetectorGeometry) -> FarField {
    debug_assert!(t > 0.0, "check_far_field requires t > 0");
    let margin = 0.5 * t * geom.epsilon() / geom.rho0();
    FarField {
        ok: margin > 1.0,
        margin,
    }
}

/// Smallness parameter `q = epsilon * sigma_max * rho0 * ln(t / rho0)` that
/// governs how safely the partial-acceptance double-scattering terms can be
/// neglected. Callers compare against their own threshold (0.01 by default in
/// the driver); the check is reported, never silently enforced.
pub fn check_double_scatter_validity(
    t: f64,
    geom: &DetectorGeometry,
    medium: &MediumModel,
) -> Result<f64> {
    if !(t > geom.rho0()) {
        return Err(Error::Domain(format!(
            "smallness parameter requires t > rho0, got t = {t}, rho0 = {}",
            geom.rho0()
        )));
    }
    Ok(geom.epsilon() * medium.sigma_max() * geom.rho0() * (t / geom.rho0()).ln())
}

/// Default threshold used to classify the smallness parameter `q`.
pub const DEFAULT_Q_THRESHOLD: f64 = 0.01;
