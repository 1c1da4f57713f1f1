//! Monte-Carlo-vs-analytic cross-checks beyond the homogeneous isotropic
//! acceptance cases. These target convention mistakes that homogeneous or
//! even phase functions cannot expose: the height assignment of the two
//! phase factors in the double-scattering integrand (only visible with a
//! stratified, forward/backward-asymmetric phase), the Henyey-Greenstein
//! value/sampler consistency, and layer-top transport clipping.

use lidar_scatter::double_scatter::{double_scatter_return, QuadratureConfig};
use lidar_scatter::geometry::{DetectorGeometry, TimeGrid};
use lidar_scatter::medium::{
    ExtinctionProfile, MediumModel, PhaseApproximationMode, PhaseFunction,
};
use lidar_scatter::montecarlo::{estimate_returns, EstimatorMode, McConfig, OrderClass};
use lidar_scatter::single_scatter::single_scatter_return;

fn gauss7_average(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const NODES: [f64; 7] = [
        -0.9491079123427585,
        -0.7415311855993945,
        -0.4058451513773972,
        0.0,
        0.4058451513773972,
        0.7415311855993945,
        0.9491079123427585,
    ];
    const WEIGHTS: [f64; 7] = [
        0.1294849661688697,
        0.2797053914892766,
        0.3818300505051189,
        0.4179591836734694,
        0.3818300505051189,
        0.2797053914892766,
        0.1294849661688697,
    ];
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    NODES
        .iter()
        .zip(&WEIGHTS)
        .map(|(&x, &w)| w * f(c + h * x))
        .sum::<f64>()
        / 2.0
}

/// Stratified, mu-asymmetric tabulated phase: forward scattering grows with
/// height while backscatter decays. Swapping the heights of the two phase
/// factors in the integrand would change I21 here by a factor of ~3, so a
/// 10% agreement window pins the convention.
#[test]
fn stratified_asymmetric_phase_double_scatter() {
    let medium = MediumModel::new(
        ExtinctionProfile::Homogeneous { sigma_t: 0.02 },
        PhaseFunction::Table {
            mu: vec![-1.0, 1.0],
            z: vec![0.0, 60.0],
            values: vec![vec![0.0016, 0.0002], vec![0.0004, 0.0024]],
        },
    )
    .unwrap();
    let geom = DetectorGeometry::from_epsilon(0.1, 0.08).unwrap();
    let grid = TimeGrid::linear(50.0, 110.0, 7).unwrap();
    let tally = estimate_returns(
        &McConfig {
            histories: 8_000_000,
            blocks: 64,
            seed: 4242,
            mode: EstimatorMode::NextEvent,
            horizon: 115.0,
        },
        &geom,
        &medium,
        &grid,
    )
    .unwrap();
    let qcfg = QuadratureConfig::default();
    for bin in 0..tally.n_bins() {
        let mc = tally.rate(bin, OrderClass::TwoInD0);
        let reference = gauss7_average(
            |t| {
                double_scatter_return(
                    t,
                    &geom,
                    &medium,
                    PhaseApproximationMode::BackscatterApprox,
                    &qcfg,
                )
                .unwrap()
                .value
            },
            tally.edges()[bin],
            tally.edges()[bin + 1],
        );
        let rel = (mc - reference) / reference;
        assert!(
            rel.abs() < 0.10,
            "stratified asymmetric phase: bin {bin} (t ~ {}) off by {:.1}%",
            tally.bin_center(bin),
            rel * 100.0
        );
    }
}

/// Homogeneous Henyey-Greenstein medium: ties the analytic backscatter value
/// sigma(-1, z) (order 1) and the integrand's phase values (order 2) to the
/// inverse-CDF sampler through the full transport chain.
#[test]
fn henyey_greenstein_end_to_end() {
    let medium = MediumModel::new(
        ExtinctionProfile::Homogeneous { sigma_t: 0.02 },
        PhaseFunction::HenyeyGreenstein {
            scattering: 0.015,
            g: 0.5,
        },
    )
    .unwrap();
    let geom = DetectorGeometry::from_epsilon(0.1, 0.08).unwrap();
    let grid = TimeGrid::linear(40.0, 100.0, 7).unwrap();
    let tally = estimate_returns(
        &McConfig {
            histories: 8_000_000,
            blocks: 64,
            seed: 777,
            mode: EstimatorMode::NextEvent,
            horizon: 105.0,
        },
        &geom,
        &medium,
        &grid,
    )
    .unwrap();
    let qcfg = QuadratureConfig::default();
    for bin in 0..tally.n_bins() {
        let lo = tally.edges()[bin];
        let hi = tally.edges()[bin + 1];
        let mc1 = tally.rate(bin, OrderClass::One);
        let se1 = tally.stderr(bin, OrderClass::One);
        let i1 = gauss7_average(
            |t| single_scatter_return(t, &geom, &medium).unwrap(),
            lo,
            hi,
        );
        assert!(
            (mc1 - i1).abs() <= 4.0 * se1,
            "HG order-1 bin {bin}: mc {mc1:e} vs {i1:e} (se {se1:e})"
        );
        let mc2 = tally.rate(bin, OrderClass::TwoInD0);
        let i21 = gauss7_average(
            |t| {
                double_scatter_return(
                    t,
                    &geom,
                    &medium,
                    PhaseApproximationMode::BackscatterApprox,
                    &qcfg,
                )
                .unwrap()
                .value
            },
            lo,
            hi,
        );
        let rel = (mc2 - i21) / i21;
        assert!(
            rel.abs() < 0.10,
            "HG order-2 bin {bin} (t ~ {}) off by {:.1}%",
            tally.bin_center(bin),
            rel * 100.0
        );
    }
}

/// Finite layer: the echo dies exactly when the half-range leaves the layer,
/// and transport must clip scattering (and free paths) above the top.
#[test]
fn layer_medium_end_to_end() {
    let medium = MediumModel::new(
        ExtinctionProfile::Layer {
            sigma_t: 0.05,
            thickness: 12.0,
        },
        PhaseFunction::Isotropic { scattering: 0.04 },
    )
    .unwrap();
    let geom = DetectorGeometry::from_epsilon(0.1, 0.1).unwrap();
    // Last grid point echoes from beyond the layer top: I1 must vanish there.
    assert_eq!(single_scatter_return(30.0, &geom, &medium).unwrap(), 0.0);

    let grid = TimeGrid::linear(6.0, 22.0, 5).unwrap();
    let tally = estimate_returns(
        &McConfig {
            histories: 6_000_000,
            blocks: 64,
            seed: 99,
            mode: EstimatorMode::NextEvent,
            horizon: 24.0,
        },
        &geom,
        &medium,
        &grid,
    )
    .unwrap();
    for bin in 0..tally.n_bins() {
        let mc = tally.rate(bin, OrderClass::One);
        let se = tally.stderr(bin, OrderClass::One);
        let i1 = gauss7_average(
            |t| single_scatter_return(t, &geom, &medium).unwrap(),
            tally.edges()[bin],
            tally.edges()[bin + 1],
        );
        assert!(
            (mc - i1).abs() <= 4.0 * se.max(1e-12 * i1.max(1e-300)),
            "layer order-1 bin {bin}: mc {mc:e} vs {i1:e} (se {se:e})"
        );
    }
}
