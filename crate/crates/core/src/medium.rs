//! Stratified medium: total (extinction) cross-section profile `sigma_t(z)`
//! and differential elastic-scattering cross-section `sigma(mu, z)`.
//!
//! The medium occupies the half-space `z >= 0`; everything below the `z = 0`
//! plane is vacuum and both cross-sections evaluate to exactly zero there.
//! Extinction profiles are restricted to shapes whose optical depth has a
//! closed form (constant, constant layer, piecewise linear), so none of the
//! attenuation kernels built on top of [`MediumModel::optical_depth`] carry
//! inner quadrature error.
//!
//! Units: cross-sections are per unit length (the differential one per unit
//! length per steradian), heights and times are path lengths (`c = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total (extinction) cross-section as a function of height.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtinctionProfile {
    /// Constant `sigma_t` on the whole half-space `z >= 0`.
    Homogeneous { sigma_t: f64 },
    /// Constant `sigma_t` on `0 <= z <= thickness`, vacuum above.
    Layer { sigma_t: f64, thickness: f64 },
    /// Piecewise-linear interpolation of `(z, sigma_t)` nodes. The first node
    /// must sit at `z = 0`; beyond the last node the profile continues with
    /// the last node value (half-infinite medium).
    PiecewiseLinear { nodes: Vec<(f64, f64)> },
}

impl ExtinctionProfile {
    fn validate(&self) -> Result<()> {
        match self {
            ExtinctionProfile::Homogeneous { sigma_t } => {
                if !sigma_t.is_finite() || *sigma_t < 0.0 {
                    return Err(Error::InvalidMedium(format!(
                        "homogeneous sigma_t must be finite and >= 0, got {sigma_t}"
                    )));
                }
            }
            ExtinctionProfile::Layer { sigma_t, thickness } => {
                if !sigma_t.is_finite() || *sigma_t < 0.0 {
                    return Err(Error::InvalidMedium(format!(
                        "layer sigma_t must be finite and >= 0, got {sigma_t}"
                    )));
                }
                if !thickness.is_finite() || *thickness <= 0.0 {
                    return Err(Error::InvalidMedium(format!(
                        "layer thickness must be finite and > 0, got {thickness}"
                    )));
                }
            }
            ExtinctionProfile::PiecewiseLinear { nodes } => {
                if nodes.len() < 2 {
                    return Err(Error::InvalidMedium(
                        "tabulated profile needs at least two (z, sigma_t) nodes".into(),
                    ));
                }
                if nodes[0].0 != 0.0 {
                    return Err(Error::InvalidMedium(format!(
                        "tabulated profile must start at z = 0, got z = {}",
                        nodes[0].0
                    )));
                }
                for w in nodes.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::InvalidMedium(format!(
                            "tabulated z nodes must be strictly increasing ({} then {})",
                            w[0].0, w[1].0
                        )));
                    }
                }
                for &(z, v) in nodes {
                    if !z.is_finite() || !v.is_finite() || v < 0.0 {
                        return Err(Error::InvalidMedium(format!(
                            "tabulated sigma_t values must be finite and >= 0, got ({z}, {v})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `sigma_t(z)`; zero below the medium and above a layer.
    pub fn value(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        match self {
            ExtinctionProfile::Homogeneous { sigma_t } => *sigma_t,
            ExtinctionProfile::Layer { sigma_t, thickness } => {
                if z <= *thickness {
                    *sigma_t
                } else {
                    0.0
                }
            }
            ExtinctionProfile::PiecewiseLinear { nodes } => {
                let last = nodes.len() - 1;
                if z >= nodes[last].0 {
                    return nodes[last].1;
                }
                // z < last node; find the bracketing segment
                let idx = match nodes.binary_search_by(|(zn, _)| zn.partial_cmp(&z).unwrap()) {
                    Ok(i) => return nodes[i].1,
                    Err(i) => i - 1, // nodes[0].0 == 0.0 <= z guarantees i >= 1
                };
                let (z0, v0) = nodes[idx];
                let (z1, v1) = nodes[idx + 1];
                v0 + (v1 - v0) * (z - z0) / (z1 - z0)
            }
        }
    }

    /// Unsigned optical depth between two heights, closed form.
    pub fn optical_depth(&self, z_a: f64, z_b: f64) -> f64 {
        let lo = z_a.min(z_b).max(0.0);
        let hi = z_a.max(z_b).max(0.0);
        if hi <= lo {
            return 0.0;
        }
        match self {
            ExtinctionProfile::Homogeneous { sigma_t } => sigma_t * (hi - lo),
            ExtinctionProfile::Layer { sigma_t, thickness } => {
                let lo = lo.min(*thickness);
                let hi = hi.min(*thickness);
                sigma_t * (hi - lo)
            }
            ExtinctionProfile::PiecewiseLinear { nodes } => {
                let mut acc = 0.0;
                for w in nodes.windows(2) {
                    let (z0, v0) = w[0];
                    let (z1, v1) = w[1];
                    let a = lo.max(z0);
                    let b = hi.min(z1);
                    if b > a {
                        let slope = (v1 - v0) / (z1 - z0);
                        let va = v0 + slope * (a - z0);
                        let vb = v0 + slope * (b - z0);
                        acc += 0.5 * (va + vb) * (b - a);
                    }
                }
                let (z_last, v_last) = nodes[nodes.len() - 1];
                if hi > z_last {
                    acc += v_last * (hi - lo.max(z_last));
                }
                acc
            }
        }
    }

    /// Largest `sigma_t` anywhere in the medium.
    pub fn max_value(&self) -> f64 {
        match self {
            ExtinctionProfile::Homogeneous { sigma_t }
            | ExtinctionProfile::Layer { sigma_t, .. } => *sigma_t,
            ExtinctionProfile::PiecewiseLinear { nodes } => {
                nodes.iter().map(|&(_, v)| v).fold(0.0, f64::max)
            }
        }
    }

    /// Path length along a ray from height `z0` with direction cosine `dir_z`
    /// at which the accumulated optical depth reaches `target`, or `None` if
    /// the ray escapes the medium (or runs out of extinction) first.
    ///
    /// This is the closed-form inverse of the along-ray optical-depth CDF:
    /// constant pieces invert linearly, linear pieces by a stable quadratic.
    pub fn distance_to_optical_depth(&self, z0: f64, dir_z: f64, target: f64) -> Option<f64> {
        debug_assert!(target >= 0.0);
        if target == 0.0 {
            return Some(0.0);
        }
        if dir_z == 0.0 {
            let v = self.value(z0);
            return if v > 0.0 { Some(target / v) } else { None };
        }
        // Work in height space: the per-height optical depth budget is
        // target * |dir_z|, and path length is |dz| / |dir_z|.
        let budget = target * dir_z.abs();
        let dz = self.height_for_budget(z0, dir_z > 0.0, budget)?;
        Some(dz / dir_z.abs())
    }

    /// Height distance travelled (always positive) until `budget` of
    /// per-height optical depth is consumed, or `None` on escape.
    fn height_for_budget(&self, z0: f64, up: bool, budget: f64) -> Option<f64> {
        match self {
            ExtinctionProfile::Homogeneous { sigma_t } => {
                if *sigma_t == 0.0 {
                    return None;
                }
                let need = budget / sigma_t;
                if up {
                    // A ray below the medium re-enters at z = 0 and then has
                    // unlimited extinction above it.
                    Some(need + (-z0).max(0.0))
                } else {
                    let avail = z0.max(0.0);
                    if need <= avail {
                        Some(need + (z0 - avail))
                    } else {
                        None
                    }
                }
            }
            ExtinctionProfile::Layer { sigma_t, thickness } => {
                if *sigma_t == 0.0 {
                    return None;
                }
                let need = budget / sigma_t;
                if up {
                    let entry = z0.clamp(0.0, *thickness);
                    if z0 > *thickness {
                        return None;
                    }
                    let avail = thickness - entry;
                    if need <= avail {
                        Some(need + (entry - z0))
                    } else {
                        None
                    }
                } else {
                    let entry = z0.min(*thickness);
                    let avail = entry.max(0.0);
                    if need <= avail {
                        Some(need + (z0 - entry).max(0.0))
                    } else {
                        None
                    }
                }
            }
            ExtinctionProfile::PiecewiseLinear { nodes } => {
                self.walk_piecewise(nodes, z0, up, budget)
            }
        }
    }

    fn walk_piecewise(&self, nodes: &[(f64, f64)], z0: f64, up: bool, budget: f64) -> Option<f64> {
        let mut remaining = budget;
        let mut z = z0.max(0.0);
        let start = z0;
        let (z_last, v_last) = nodes[nodes.len() - 1];
        if up {
            if z >= z_last {
                return consume_constant(v_last, remaining).map(|d| z + d - start);
            }
            let mut idx = segment_index(nodes, z);
            loop {
                let (za, va) = nodes[idx];
                let (zb, vb) = nodes[idx + 1];
                let a = z.max(za);
                let slope = (vb - va) / (zb - za);
                let v_at_a = va + slope * (a - za);
                let seg_mass = 0.5 * (v_at_a + vb) * (zb - a);
                if remaining <= seg_mass {
                    let d = invert_linear_mass(v_at_a, slope, zb - a, remaining);
                    return Some(a + d - start);
                }
                remaining -= seg_mass;
                z = zb;
                idx += 1;
                if idx + 1 >= nodes.len() {
                    return consume_constant(v_last, remaining).map(|d| z_last + d - start);
                }
            }
        } else {
            // Downward: constant tail first if starting above the table.
            if z > z_last {
                let seg_mass = v_last * (z - z_last);
                if remaining <= seg_mass {
                    return consume_constant(v_last, remaining).map(|d| start - (z - d));
                }
                remaining -= seg_mass;
                z = z_last;
            }
            let mut idx = segment_index(nodes, z).min(nodes.len() - 2);
            loop {
                let (za, va) = nodes[idx];
                let (zb, vb) = nodes[idx + 1];
                let b = z.min(zb);
                let slope = (vb - va) / (zb - za);
                let v_at_b = va + slope * (b - za);
                // descending from b toward za: sigma(h below b) = v_at_b + slope_down * h
                let slope_down = -slope;
                let seg_mass = 0.5 * (v_at_b + va) * (b - za);
                if remaining <= seg_mass {
                    let d = invert_linear_mass(v_at_b, slope_down, b - za, remaining);
                    return Some(start - (b - d));
                }
                remaining -= seg_mass;
                z = za;
                if idx == 0 {
                    return None; // reached the z = 0 boundary, vacuum below
                }
                idx -= 1;
            }
        }
    }
}

fn consume_constant(v: f64, remaining: f64) -> Option<f64> {
    if v > 0.0 {
        Some(remaining / v)
    } else {
        None
    }
}

fn segment_index(nodes: &[(f64, f64)], z: f64) -> usize {
    match nodes.binary_search_by(|(zn, _)| zn.partial_cmp(&z).unwrap()) {
        Ok(i) => i.min(nodes.len() - 2),
        Err(i) => i.saturating_sub(1).min(nodes.len() - 2),
    }
}

/// Solve `v0*x + slope*x^2/2 = mass` for `x` in `[0, width]`, where the
/// integrand `v0 + slope*h` stays non-negative on the interval.
fn invert_linear_mass(v0: f64, slope: f64, width: f64, mass: f64) -> f64 {
    debug_assert!(mass >= 0.0);
    if mass == 0.0 {
        return 0.0;
    }
    if slope.abs() * width < 1e-14 * v0.abs() || slope == 0.0 {
        return (mass / v0).min(width);
    }
    // Stable root of slope/2 x^2 + v0 x - mass = 0 with x >= 0.
    let disc = (v0 * v0 + 2.0 * slope * mass).max(0.0);
    let sq = disc.sqrt();
    let x = if slope > 0.0 {
        2.0 * mass / (v0 + sq)
    } else {
        (v0 - sq) / (-slope)
    };
    x.clamp(0.0, width)
}

/// Differential elastic-scattering cross-section `sigma(mu, z)` with
/// `mu = cos(gamma)` the scattering-angle cosine.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseFunction {
    /// `sigma(mu, z) = scattering / 4pi` wherever the medium exists.
    Isotropic { scattering: f64 },
    /// Henyey-Greenstein shape with asymmetry `g`, normalized so the full
    /// solid-angle integral equals `scattering`.
    HenyeyGreenstein { scattering: f64, g: f64 },
    /// Bilinear table over `mu` nodes x `z` nodes; `values[i][j]` is
    /// `sigma(mu[i], z[j])`. Constant continuation beyond the last z node.
    Table {
        mu: Vec<f64>,
        z: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

fn hg_shape(mu: f64, g: f64) -> f64 {
    let denom = 1.0 + g * g - 2.0 * g * mu;
    (1.0 - g * g) / (FOUR_PI * denom * denom.sqrt())
}

impl PhaseFunction {
    fn validate(&self) -> Result<()> {
        match self {
            PhaseFunction::Isotropic { scattering } => {
                if !scattering.is_finite() || *scattering < 0.0 {
                    return Err(Error::InvalidMedium(format!(
                        "scattering coefficient must be finite and >= 0, got {scattering}"
                    )));
                }
            }
            PhaseFunction::HenyeyGreenstein { scattering, g } => {
                if !scattering.is_finite() || *scattering < 0.0 {
                    return Err(Error::InvalidMedium(format!(
                        "scattering coefficient must be finite and >= 0, got {scattering}"
                    )));
                }
                if !g.is_finite() || g.abs() >= 1.0 {
                    return Err(Error::InvalidMedium(format!(
                        "Henyey-Greenstein asymmetry must satisfy |g| < 1, got {g}"
                    )));
                }
            }
            PhaseFunction::Table { mu, z, values } => {
                if mu.len() < 2 || z.is_empty() {
                    return Err(Error::InvalidMedium(
                        "phase table needs at least two mu nodes and one z node".into(),
                    ));
                }
                if mu[0] != -1.0 || *mu.last().unwrap() != 1.0 {
                    return Err(Error::InvalidMedium(format!(
                        "phase table mu nodes must span [-1, 1], got [{}, {}]",
                        mu[0],
                        mu.last().unwrap()
                    )));
                }
                for w in mu.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::InvalidMedium(
                            "phase table mu nodes must be strictly increasing".into(),
                        ));
                    }
                }
                for w in z.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::InvalidMedium(
                            "phase table z nodes must be strictly increasing".into(),
                        ));
                    }
                }
                if z[0] < 0.0 {
                    return Err(Error::InvalidMedium(
                        "phase table z nodes must be >= 0".into(),
                    ));
                }
                if values.len() != mu.len() {
                    return Err(Error::InvalidMedium(format!(
                        "phase table has {} rows but {} mu nodes",
                        values.len(),
                        mu.len()
                    )));
                }
                for row in values {
                    if row.len() != z.len() {
                        return Err(Error::InvalidMedium(format!(
                            "phase table row has {} columns but {} z nodes",
                            row.len(),
                            z.len()
                        )));
                    }
                    for &v in row {
                        if !v.is_finite() || v < 0.0 {
                            return Err(Error::InvalidMedium(format!(
                                "phase table values must be finite and >= 0, got {v}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Raw table/shape value, before any medium-support clipping.
    fn value_raw(&self, mu: f64, z: f64) -> f64 {
        match self {
            PhaseFunction::Isotropic { scattering } => scattering / FOUR_PI,
            PhaseFunction::HenyeyGreenstein { scattering, g } => scattering * hg_shape(mu, *g),
            PhaseFunction::Table {
                mu: mus,
                z: zs,
                values,
            } => {
                let (i, fi) = table_coords(mus, mu);
                let (j, fj) = table_coords(zs, z);
                let v00 = values[i][j];
                let v10 = values[(i + 1).min(mus.len() - 1)][j];
                let v01 = values[i][(j + 1).min(zs.len() - 1)];
                let v11 = values[(i + 1).min(mus.len() - 1)][(j + 1).min(zs.len() - 1)];
                let a = v00 + (v10 - v00) * fi;
                let b = v01 + (v11 - v01) * fi;
                a + (b - a) * fj
            }
        }
    }

    /// `2pi * integral of sigma(mu, z) dmu` over `[-1, 1]` (trapezoid-exact
    /// for tables, closed form otherwise).
    fn scattering_coefficient_raw(&self, z: f64) -> f64 {
        match self {
            PhaseFunction::Isotropic { scattering }
            | PhaseFunction::HenyeyGreenstein { scattering, .. } => *scattering,
            PhaseFunction::Table { mu, .. } => {
                let mut acc = 0.0;
                for w in mu.windows(2) {
                    let a = self.value_raw(w[0], z);
                    let b = self.value_raw(w[1], z);
                    acc += 0.5 * (a + b) * (w[1] - w[0]);
                }
                2.0 * std::f64::consts::PI * acc
            }
        }
    }

    fn max_value(&self) -> f64 {
        match self {
            PhaseFunction::Isotropic { scattering } => scattering / FOUR_PI,
            PhaseFunction::HenyeyGreenstein { scattering, g } => {
                scattering * hg_shape(if *g >= 0.0 { 1.0 } else { -1.0 }, *g)
            }
            PhaseFunction::Table { values, .. } => values
                .iter()
                .flat_map(|row| row.iter().copied())
                .fold(0.0, f64::max),
        }
    }

    /// Inverse-CDF sample of the scattering-angle cosine at height `z`,
    /// driven by a uniform variate `u` in `[0, 1)`. Pure in `(z, u)`.
    pub fn sample_mu(&self, z: f64, u: f64) -> f64 {
        match self {
            PhaseFunction::Isotropic { .. } => 2.0 * u - 1.0,
            PhaseFunction::HenyeyGreenstein { g, .. } => {
                if g.abs() < 1e-6 {
                    2.0 * u - 1.0
                } else {
                    let a = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
                    ((1.0 + g * g - a * a) / (2.0 * g)).clamp(-1.0, 1.0)
                }
            }
            PhaseFunction::Table { mu, .. } => {
                // Piecewise-linear density in mu at this height.
                let dens: Vec<f64> = mu.iter().map(|&m| self.value_raw(m, z)).collect();
                let mut masses = Vec::with_capacity(mu.len() - 1);
                let mut total = 0.0;
                for (k, w) in mu.windows(2).enumerate() {
                    let m = 0.5 * (dens[k] + dens[k + 1]) * (w[1] - w[0]);
                    masses.push(m);
                    total += m;
                }
                if total <= 0.0 {
                    return 2.0 * u - 1.0; // degenerate; callers reject via NoScatter first
                }
                let mut target = u * total;
                for (k, w) in mu.windows(2).enumerate() {
                    if target <= masses[k] || k == masses.len() - 1 {
                        let width = w[1] - w[0];
                        let slope = (dens[k + 1] - dens[k]) / width;
                        let x = invert_linear_mass(dens[k], slope, width, target.min(masses[k]));
                        return (w[0] + x).clamp(-1.0, 1.0);
                    }
                    target -= masses[k];
                }
                unreachable!()
            }
        }
    }
}

fn table_coords(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if x <= nodes[0] {
        return (0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 1, 0.0);
    }
    let i = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => return (i, 0.0),
        Err(i) => i - 1,
    };
    (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
}

/// How the detector-side phase-function argument of the double-scattering
/// integrand is evaluated.
///
/// The closed-form double-scattering integral is derived under a
/// near-backscatter reduction, so `Exact` and `BackscatterApprox` coincide on
/// the analytic path; they differ only for the Monte Carlo oracle, which
/// always uses the true scattering-angle cosine. `HalfApertureShift` shifts
/// the backscatter angle by half the receiver aperture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseApproximationMode {
    Exact,
    #[default]
    BackscatterApprox,
    HalfApertureShift,
}

/// Immutable stratified medium: extinction profile plus phase function.
///
/// Construction validates every invariant, in particular that the extinction
/// dominates the scattering coefficient everywhere (`sigma_t(z) >= integral
/// of sigma over solid angle`); the difference is the absorption.
#[derive(Debug, Clone)]
pub struct MediumModel {
    extinction: ExtinctionProfile,
    phase: PhaseFunction,
}

impl MediumModel {
    pub fn new(extinction: ExtinctionProfile, phase: PhaseFunction) -> Result<Self> {
        extinction.validate()?;
        phase.validate()?;
        let medium = MediumModel { extinction, phase };
        medium.check_dominance()?;
        Ok(medium)
    }

    /// Probe that `sigma_s(z) <= sigma_t(z)` on the union of all breakpoints.
    /// Both sides are piecewise linear in z between breakpoints, so checking
    /// the breakpoints (plus one tail point) is exhaustive.
    fn check_dominance(&self) -> Result<()> {
        let mut probes: Vec<f64> = vec![0.0];
        match &self.extinction {
            ExtinctionProfile::Layer { thickness, .. } => probes.push(*thickness),
            ExtinctionProfile::PiecewiseLinear { nodes } => {
                probes.extend(nodes.iter().map(|&(z, _)| z));
                probes.push(nodes.last().unwrap().0 + 1.0);
            }
            ExtinctionProfile::Homogeneous { .. } => {}
        }
        if let PhaseFunction::Table { z, .. } = &self.phase {
            probes.extend(z.iter().copied());
            probes.push(z.last().unwrap() + 1.0);
        }
        for &z in &probes {
            let st = self.sigma_t_raw(z);
            let ss = self.scattering_coefficient(z);
            if ss > st * (1.0 + 1e-9) + 1e-300 {
                return Err(Error::InvalidMedium(format!(
                    "sigma_t(z) must dominate the angular integral of sigma at every height: \
                     at z = {z}, sigma_t = {st} but the scattering coefficient is {ss}"
                )));
            }
        }
        Ok(())
    }

    pub fn extinction(&self) -> &ExtinctionProfile {
        &self.extinction
    }

    pub fn phase(&self) -> &PhaseFunction {
        &self.phase
    }

    /// Total cross-section `sigma_t(z)`; zero for `z < 0`.
    pub fn sigma_t(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::Domain(format!("sigma_t: z must be finite, got {z}")));
        }
        Ok(self.sigma_t_raw(z))
    }

    #[inline]
    pub(crate) fn sigma_t_raw(&self, z: f64) -> f64 {
        self.extinction.value(z)
    }

    /// Differential scattering cross-section `sigma(mu, z)`; zero for `z < 0`
    /// and above a layer top.
    pub fn sigma_scatter(&self, mu: f64, z: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&mu) {
            return Err(Error::Domain(format!(
                "sigma_scatter: |mu| <= 1 required, got {mu}"
            )));
        }
        if !z.is_finite() {
            return Err(Error::Domain(format!(
                "sigma_scatter: z must be finite, got {z}"
            )));
        }
        Ok(self.sigma_scatter_raw(mu, z))
    }

    #[inline]
    pub(crate) fn sigma_scatter_raw(&self, mu: f64, z: f64) -> f64 {
        if z < 0.0 || !self.in_support(z) {
            return 0.0;
        }
        self.phase.value_raw(mu, z)
    }

    fn in_support(&self, z: f64) -> bool {
        match &self.extinction {
            ExtinctionProfile::Layer { thickness, .. } => z <= *thickness,
            _ => true,
        }
    }

    /// `2pi * integral sigma(mu, z) dmu`: the scattering part of `sigma_t`.
    pub fn scattering_coefficient(&self, z: f64) -> f64 {
        if z < 0.0 || !self.in_support(z) {
            return 0.0;
        }
        self.phase.scattering_coefficient_raw(z)
    }

    /// Unsigned optical depth `integral sigma_t dz` over the height interval
    /// between `z_a` and `z_b` (arguments in either order), trapezoid-exact.
    pub fn optical_depth(&self, z_a: f64, z_b: f64) -> Result<f64> {
        if !z_a.is_finite() || !z_b.is_finite() {
            return Err(Error::Domain(format!(
                "optical_depth: bounds must be finite, got ({z_a}, {z_b})"
            )));
        }
        Ok(self.optical_depth_raw(z_a, z_b))
    }

    #[inline]
    pub(crate) fn optical_depth_raw(&self, z_a: f64, z_b: f64) -> f64 {
        self.extinction.optical_depth(z_a, z_b)
    }

    /// Global maximum of `sigma(mu, z)` over all angles and heights (node
    /// maximum for tables, analytic peak otherwise).
    pub fn sigma_max(&self) -> f64 {
        self.phase.max_value()
    }
}

// ---------------------------------------------------------------------------
// Profile file schema
// ---------------------------------------------------------------------------

/// Serialized form of a medium, used both for stand-alone profile files and
/// for the `[medium]` section of a run configuration.
///
/// ```toml
/// kind = "tabulated"            # "homogeneous" | "layer" | "tabulated"
/// z = [0.0, 10.0]               # tabulated only
/// sigma_t = [0.2, 0.0]          # scalar for homogeneous/layer
/// # thickness = 5.0             # layer only
///
/// [phase]
/// kind = "isotropic"            # "isotropic" | "henyey-greenstein" | "table"
/// scattering = 0.05             # analytic kinds
/// # g = 0.6                     # henyey-greenstein only
/// # mu = [-1.0, 0.0, 1.0]       # table only: mu nodes
/// # z = [0.0, 10.0]             # table only: z nodes
/// # values = [[...], [...]]     # table only: mu-nodes x z-nodes matrix
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub kind: ProfileKind,
    /// Scalar `sigma_t` for homogeneous/layer profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_t: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
    /// z nodes for tabulated profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    pub phase: PhaseSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Homogeneous,
    Layer,
    Tabulated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub kind: PhaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scattering: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    Isotropic,
    HenyeyGreenstein,
    Table,
}

impl MediumSpec {
    pub fn build(&self) -> Result<MediumModel> {
        let extinction = match self.kind {
            ProfileKind::Homogeneous => ExtinctionProfile::Homogeneous {
                sigma_t: self.scalar_sigma_t()?,
            },
            ProfileKind::Layer => ExtinctionProfile::Layer {
                sigma_t: self.scalar_sigma_t()?,
                thickness: self.thickness.ok_or_else(|| {
                    Error::InvalidMedium("layer profile requires `thickness`".into())
                })?,
            },
            ProfileKind::Tabulated => {
                let z = self
                    .z
                    .as_ref()
                    .ok_or_else(|| Error::InvalidMedium("tabulated profile requires `z`".into()))?;
                let values = self.vector_sigma_t()?;
                if z.len() != values.len() {
                    return Err(Error::InvalidMedium(format!(
                        "tabulated profile has {} z nodes but {} sigma_t values",
                        z.len(),
                        values.len()
                    )));
                }
                ExtinctionProfile::PiecewiseLinear {
                    nodes: z.iter().copied().zip(values).collect(),
                }
            }
        };
        let phase =
            match self.phase.kind {
                PhaseKind::Isotropic => PhaseFunction::Isotropic {
                    scattering: self.phase.scattering.ok_or_else(|| {
                        Error::InvalidMedium("isotropic phase requires `scattering`".into())
                    })?,
                },
                PhaseKind::HenyeyGreenstein => PhaseFunction::HenyeyGreenstein {
                    scattering: self.phase.scattering.ok_or_else(|| {
                        Error::InvalidMedium("henyey-greenstein phase requires `scattering`".into())
                    })?,
                    g: self.phase.g.ok_or_else(|| {
                        Error::InvalidMedium("henyey-greenstein phase requires `g`".into())
                    })?,
                },
                PhaseKind::Table => {
                    PhaseFunction::Table {
                        mu: self.phase.mu.clone().ok_or_else(|| {
                            Error::InvalidMedium("table phase requires `mu`".into())
                        })?,
                        z: self.phase.z.clone().ok_or_else(|| {
                            Error::InvalidMedium("table phase requires `z`".into())
                        })?,
                        values: self.phase.values.clone().ok_or_else(|| {
                            Error::InvalidMedium("table phase requires `values`".into())
                        })?,
                    }
                }
            };
        MediumModel::new(extinction, phase)
    }

    fn scalar_sigma_t(&self) -> Result<f64> {
        match &self.sigma_t {
            Some(toml::Value::Float(v)) => Ok(*v),
            Some(toml::Value::Integer(v)) => Ok(*v as f64),
            Some(_) => Err(Error::InvalidMedium(
                "sigma_t must be a scalar for this profile kind".into(),
            )),
            None => Err(Error::InvalidMedium("profile requires `sigma_t`".into())),
        }
    }

    fn vector_sigma_t(&self) -> Result<Vec<f64>> {
        match &self.sigma_t {
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(x) => Ok(*x as f64),
                    _ => Err(Error::InvalidMedium(
                        "sigma_t entries must be numbers".into(),
                    )),
                })
                .collect(),
            Some(_) => Err(Error::InvalidMedium(
                "sigma_t must be an array for tabulated profiles".into(),
            )),
            None => Err(Error::InvalidMedium("profile requires `sigma_t`".into())),
        }
    }
}
