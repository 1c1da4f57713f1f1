//! Free-path and scattering-direction sampling for the transport walk.

use rand::Rng;

use crate::error::{Error, Result};
use crate::medium::MediumModel;

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[inline]
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Outcome of a free-path draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreePath {
    /// Collision after this path length.
    Interaction(f64),
    /// The ray leaves the medium (or its remaining optical depth is finite
    /// and already exhausted) without interacting.
    Escape,
}

/// Sample the distance to the next interaction along `dir` from `position`.
///
/// Draws a target optical depth `-ln(1 - u)` and inverts the closed-form
/// along-ray optical-depth accumulation of the extinction profile.
pub fn sample_free_path<R: Rng>(
    position: Vec3,
    dir: Vec3,
    medium: &MediumModel,
    rng: &mut R,
) -> FreePath {
    debug_assert!((norm(dir) - 1.0).abs() < 1e-9, "direction must be unit");
    let u: f64 = rng.gen();
    let target = -(-u).ln_1p(); // -ln(1 - u)
    match medium
        .extinction()
        .distance_to_optical_depth(position[2], dir[2], target)
    {
        Some(s) => FreePath::Interaction(s),
        None => FreePath::Escape,
    }
}

/// Sample a post-scattering direction at height `z` for a particle arriving
/// along `dir_in`: the deflection cosine comes from the normalized phase
/// density at `z` (inverse CDF), the azimuth about `dir_in` is uniform.
///
/// Errors with [`Error::NoScatter`] when the phase function integrates to
/// zero at this height; callers treat that as absorption.
pub fn sample_scatter_direction<R: Rng>(
    dir_in: Vec3,
    z: f64,
    medium: &MediumModel,
    rng: &mut R,
) -> Result<Vec3> {
    if medium.scattering_coefficient(z) <= 0.0 {
        return Err(Error::NoScatter { z });
    }
    let mu = medium.phase().sample_mu(z, rng.gen());
    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    Ok(rotate_about(dir_in, mu, phi))
}

/// Direction at polar cosine `mu` and azimuth `phi` about the axis `axis`.
/// The result is renormalized so repeated scatterings cannot drift off the
/// unit sphere.
pub fn rotate_about(axis: Vec3, mu: f64, phi: f64) -> Vec3 {
    let sin_gamma = (1.0 - mu * mu).max(0.0).sqrt();
    // Orthonormal frame around the axis; pick the seed vector least aligned
    // with it.
    let seed = if axis[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let e1 = normalize(cross(seed, axis));
    let e2 = cross(axis, e1);
    let (s, c) = phi.sin_cos();
    normalize([
        mu * axis[0] + sin_gamma * (c * e1[0] + s * e2[0]),
        mu * axis[1] + sin_gamma * (c * e1[1] + s * e2[1]),
        mu * axis[2] + sin_gamma * (c * e1[2] + s * e2[2]),
    ])
}
