//! Double-scattering return `I21(t)`: the closed-form reduction of the
//! two-collision contribution to a two-dimensional integral over the
//! scattering heights `(z1, z2)`, plus analytic bounds for the neglected
//! partial-acceptance terms `I22`/`I23`.
//!
//! Geometry of a contributing trajectory: straight up from the source to the
//! first collision at height `z1`, a slant leg of length `t - z1 - z2` to the
//! second collision at height `z2`, then down through the receiver disk. The
//! second collision is the detector-side vertex: it carries both the solid
//! angle factor `1/z2^2` and the aperture constraint `epsilon z2 > rho0` of
//! the acceptance domain `D0`. Inside `D0` the full receiver disk is visible
//! within the aperture, which is what makes the inner integrals collapse.
//!
//! The integrand's only singular line inside the integration square is the
//! corner `z1, z2 -> t/2` where the slant length vanishes; the singularity is
//! integrable and is either mapped away by the substitution
//! `u = t - z1 - z2` (corner wedge in `(c, u) = ((z1 - z2)/u, u)` variables)
//! or left to graded bisection, per [`QuadratureConfig::corner_substitution`].
//!
//! Integrand evaluation is pure; the adaptive driver itself runs
//! single-threaded with a fixed refinement and reduction order, so results
//! for a given configuration are bit-identical however many workers evaluate
//! different time points in parallel.

use crate::error::{Error, Result};
use crate::geometry::DetectorGeometry;
use crate::medium::{MediumModel, PhaseApproximationMode};
use crate::quad2d::{adaptive_2d, QuadOptions};

/// A point of the `(z1, z2)` integration square: `z1` is the height of the
/// first (beam-side) scattering, `z2` the height of the second
/// (detector-side) scattering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D0Point {
    pub z1: f64,
    pub z2: f64,
}

/// Tolerances and switches for the adaptive double-scattering quadrature.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub corner_substitution: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-300,
            max_subdivisions: 40_000,
            corner_substitution: true,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::Domain(format!(
                "quadrature rel_tol must be > 0, got {}",
                self.rel_tol
            )));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Domain(
                "quadrature max_subdivisions must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Membership in the full-acceptance domain `D0`.
///
/// Uses the multiplied-out inequality `(t - 2 z1)(t - 2 z2) < (eps z2 -
/// rho0)^2` together with `eps z2 > rho0`, avoiding the division by
/// `t - 2 z2` of the threshold form.
pub fn d0_contains(p: &D0Point, t: f64, geom: &DetectorGeometry) -> bool {
    debug_assert!(t > 0.0);
    let (z1, z2) = (p.z1, p.z2);
    let eps = geom.epsilon();
    let rho0 = geom.rho0();
    z1 >= 0.0
        && z1 <= 0.5 * t
        && z2 >= 0.0
        && z2 < 0.5 * t
        && eps * z2 > rho0
        && (t - 2.0 * z1) * (t - 2.0 * z2) < (eps * z2 - rho0) * (eps * z2 - rho0)
}

/// `D0` is empty unless the echo range `t/2` reaches past `rho0/epsilon`.
pub fn d0_is_empty(t: f64, geom: &DetectorGeometry) -> bool {
    0.5 * t * geom.epsilon() <= geom.rho0()
}

/// Exponential attenuation factor of the double-scattering integrand in
/// height variables:
///
/// `E = exp[-2 int_0^{z1} sigma_t - ((t - 2 z1)/(t - z1 - z2)) int_{z1}^{z2} sigma_t]`
///
/// The second integral is signed (`int_{z1}^{z2} = -int_{z2}^{z1}` when
/// `z2 < z1`); the whole expression is symmetric under `z1 <-> z2`.
pub fn double_attenuation(p: &D0Point, t: f64, medium: &MediumModel) -> Result<f64> {
    let (z1, z2) = (p.z1, p.z2);
    if !z1.is_finite() || !z2.is_finite() || z1 < 0.0 || z2 < 0.0 {
        return Err(Error::Domain(format!(
            "double_attenuation requires finite z1, z2 >= 0, got ({z1}, {z2})"
        )));
    }
    if !(z1 + z2 < t) {
        return Err(Error::Domain(format!(
            "double_attenuation requires z1 + z2 < t (geometric degeneracy), got z1 + z2 = {} vs t = {t}",
            z1 + z2
        )));
    }
    Ok(double_attenuation_raw(z1, z2, t, medium))
}

#[inline]
fn double_attenuation_raw(z1: f64, z2: f64, t: f64, medium: &MediumModel) -> f64 {
    let tau = t - z1 - z2;
    let signed = if z2 >= z1 {
        medium.optical_depth_raw(z1, z2)
    } else {
        -medium.optical_depth_raw(z2, z1)
    };
    (-2.0 * medium.optical_depth_raw(0.0, z1) - (t - 2.0 * z1) / tau * signed).exp()
}

/// Double-scattering integrand (the quantity integrated over `D0` and scaled
/// by `2 pi^2 rho0^2`):
///
/// `E * sigma(-cos_theta1, z2) * sigma(cos_theta1, z1) / (z2^2 (t - z1 - z2))`
///
/// with `cos_theta1 = (z2 - z1)/(t - z1 - z2)` the slant-leg direction
/// cosine. Under `HalfApertureShift` the detector-side argument becomes
/// `cos(pi - theta1 - theta0/2)`.
pub fn double_scatter_integrand(
    p: &D0Point,
    t: f64,
    geom: &DetectorGeometry,
    medium: &MediumModel,
    mode: PhaseApproximationMode,
) -> Result<f64> {
    let (z1, z2) = (p.z1, p.z2);
    if !z1.is_finite() || !z2.is_finite() || z1 < 0.0 || z2 < 0.0 {
        return Err(Error::Domain(format!(
            "double_scatter_integrand requires finite z1, z2 >= 0, got ({z1}, {z2})"
        )));
    }
    if z1 == 0.0 || z2 == 0.0 || z1 + z2 >= t {
        return Err(Error::Singular(format!(
            "double_scatter_integrand evaluated on a singular line: z1 = {z1}, z2 = {z2}, t = {t}"
        )));
    }
    Ok(integrand_raw(z1, z2, t, geom, medium, mode))
}

#[inline]
pub(crate) fn integrand_raw(
    z1: f64,
    z2: f64,
    t: f64,
    geom: &DetectorGeometry,
    medium: &MediumModel,
    mode: PhaseApproximationMode,
) -> f64 {
    let tau = t - z1 - z2;
    if tau <= 0.0 || z2 <= 0.0 || z1 < 0.0 {
        return 0.0;
    }
    let cos_theta1 = ((z2 - z1) / tau).clamp(-1.0, 1.0);
    let detector_mu = match mode {
        // The closed form is already reduced at exact backscatter, so the
        // exact mode cannot improve on it here (the Monte Carlo oracle can).
        PhaseApproximationMode::Exact | PhaseApproximationMode::BackscatterApprox => -cos_theta1,
        PhaseApproximationMode::HalfApertureShift => {
            let sin_theta1 = (1.0 - cos_theta1 * cos_theta1).max(0.0).sqrt();
            let half = 0.5 * geom.theta0();
            -(cos_theta1 * half.cos() - sin_theta1 * half.sin()).clamp(-1.0, 1.0)
        }
    };
    let e = double_attenuation_raw(z1, z2, t, medium);
    e * medium.sigma_scatter_raw(detector_mu, z2) * medium.sigma_scatter_raw(cos_theta1, z1)
        / (z2 * z2 * tau)
}

/// Result of the adaptive evaluation of `I21(t)`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleScatter {
    pub value: f64,
    /// A posteriori quadrature error estimate (absolute).
    pub error: f64,
    pub d0_empty: bool,
    pub cells: usize,
    pub evaluations: usize,
}

/// `I21(t) = 2 pi^2 rho0^2 * integral over D0 of the integrand`.
///
/// The domain is integrated in boundary-fitted coordinates: for each `z2` the
/// admissible `z1` interval `[max(0, z1_threshold(z2)), t/2]` is mapped to a
/// unit coordinate, so the curved boundary of `D0` is exact and never clipped
/// through cells. With `corner_substitution` on, a wedge around the corner
/// `z1, z2 -> t/2` is integrated in `(c, u)` variables where the `1/u`
/// singularity cancels against the wedge Jacobian.
pub fn double_scatter_return(
    t: f64,
    geom: &DetectorGeometry,
    medium: &MediumModel,
    mode: PhaseApproximationMode,
    qcfg: &QuadratureConfig,
) -> Result<DoubleScatter> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::Domain(format!(
            "double_scatter_return requires t > 0, got {t}"
        )));
    }
    qcfg.validate()?;
    if d0_is_empty(t, geom) {
        return Ok(DoubleScatter {
            value: 0.0,
            error: 0.0,
            d0_empty: true,
            cells: 0,
            evaluations: 0,
        });
    }

    let eps = geom.epsilon();
    let rho0 = geom.rho0();
    let half = 0.5 * t;
    let z2_lo = rho0 / eps;
    let prefactor = 2.0 * std::f64::consts::PI * std::f64::consts::PI * rho0 * rho0;

    // Lower z1 boundary of D0 at given z2 (clamped to 0).
    let z1_lo = |z2: f64| -> f64 {
        let d2 = t - 2.0 * z2;
        if d2 <= 0.0 {
            return 0.0;
        }
        let a = eps * z2 - rho0;
        (half - a * a / (2.0 * d2)).max(0.0)
    };

    // With the substitution on, the corner triangle z1 + z2 >= t - u_cut of
    // the square is split off and integrated in (c, u) coordinates; u_cut is
    // small enough that the whole triangle lies inside D0.
    let u_cut = if qcfg.corner_substitution {
        0.5 * (eps * half - rho0) / (1.0 + eps)
    } else {
        0.0
    };

    // Main region in (z2, w) coordinates, w the unit coordinate along the
    // admissible z1 interval [z1_lo(z2), z1_hi(z2)]. Both boundary curves are
    // exact, so no cell ever straddles an integrand discontinuity.
    let z1_hi = |z2: f64| -> f64 { half.min(t - u_cut - z2) };
    let f_main = |z2: f64, w: f64| -> f64 {
        let lo = z1_lo(z2);
        let span = z1_hi(z2) - lo;
        if span <= 0.0 {
            return 0.0;
        }
        let z1 = lo + w * span;
        integrand_raw(z1, z2, t, geom, medium, mode) * span
    };

    // Seed lines: the z2 where the threshold reaches z1 = 0 (a kink of the
    // mapping, root of eps^2 z2^2 + 2(t - eps rho0) z2 + rho0^2 - t^2 = 0)
    // and the edge of the excluded corner wedge.
    let mut xs = vec![z2_lo, half];
    {
        let a = eps * eps;
        let b = 2.0 * (t - eps * rho0);
        let c = rho0 * rho0 - t * t;
        let disc = b * b - 4.0 * a * c;
        if disc > 0.0 {
            let z2_kink = (-b + disc.sqrt()) / (2.0 * a);
            if z2_kink > z2_lo && z2_kink < half {
                xs.push(z2_kink);
            }
        }
    }
    if qcfg.corner_substitution && half - u_cut > z2_lo {
        xs.push(half - u_cut);
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let ys = [0.0, 0.5, 1.0];

    let opts = QuadOptions {
        rel_tol: qcfg.rel_tol,
        abs_tol: 0.5 * qcfg.abs_tol / prefactor.max(1e-300),
        max_refinements: qcfg.max_subdivisions,
    };
    let main = adaptive_2d(&f_main, &xs, &ys, &opts)?;

    let (wedge_value, wedge_error, wedge_cells, wedge_evals, wedge_converged) =
        if qcfg.corner_substitution && u_cut > 0.0 {
            // Corner triangle in (c, u): z1 = (t - u(1 - c))/2,
            // z2 = (t - u(1 + c))/2, dz1 dz2 = (u/2) dc du; the u/2 cancels
            // the integrand's 1/(t - z1 - z2).
            let f_wedge = |c: f64, u: f64| -> f64 {
                let z1 = 0.5 * (t - u * (1.0 - c));
                let z2 = 0.5 * (t - u * (1.0 + c));
                integrand_raw(z1, z2, t, geom, medium, mode) * 0.5 * u
            };
            let w = adaptive_2d(
                &f_wedge,
                &[-1.0, 0.0, 1.0],
                &[0.0, 0.5 * u_cut, u_cut],
                &opts,
            )?;
            (w.value, w.error, w.cells, w.evaluations, w.converged)
        } else {
            (0.0, 0.0, 0, 0, true)
        };

    let value = prefactor * (main.value + wedge_value);
    let error = prefactor * (main.error + wedge_error);
    if !main.converged || !wedge_converged {
        return Err(Error::Convergence {
            best: value,
            achieved: error,
            cells: main.cells + wedge_cells,
        });
    }
    Ok(DoubleScatter {
        value,
        error,
        d0_empty: false,
        cells: main.cells + wedge_cells,
        evaluations: main.evaluations + wedge_evals,
    })
}

/// Rough upper bound on the partial-acceptance term with
/// `rho0 <= xi_max`: `I22 <= 8 pi^2 sigma_max^2 rho0^3 epsilon / t^2`.
pub fn i22_bound(t: f64, geom: &DetectorGeometry, medium: &MediumModel) -> f64 {
    debug_assert!(t > 0.0);
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let sm = medium.sigma_max();
    8.0 * pi2 * sm * sm * geom.rho0().powi(3) * geom.epsilon() / (t * t)
}

/// Rough upper bound on the partial-acceptance term with `xi_max <= rho0`:
/// `I23 <= 16 pi^2 sigma_max^2 rho0^3 epsilon (2 + pi + ln(eps t / 2 rho0)) / t^2`.
pub fn i23_bound(t: f64, geom: &DetectorGeometry, medium: &MediumModel) -> Result<f64> {
    let ratio = geom.epsilon() * t / (2.0 * geom.rho0());
    if !(ratio > 1.0) {
        return Err(Error::Domain(format!(
            "i23_bound requires eps*t > 2*rho0, got eps*t/(2 rho0) = {ratio}"
        )));
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let sm = medium.sigma_max();
    Ok(16.0
        * pi2
        * sm
        * sm
        * geom.rho0().powi(3)
        * geom.epsilon()
        * (2.0 + std::f64::consts::PI + ratio.ln())
        / (t * t))
}
