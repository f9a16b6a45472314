//! Frozen regression baselines for the shipped reference scenario. The
//! runs are deterministic, so these values only move when the numerics
//! change on purpose.

use degenbeam::analysis::{fit_decay_rate, lemma_checks, spectrum, SPECTRUM_STABLE_TOL};
use degenbeam::evolution::{assemble_closed_loop, simulate};
use degenbeam::model::certificate_constants;
use degenbeam::scenario::{reference_scenario_text, Scenario};

#[test]
fn reference_trajectory_baselines() {
    let scn = Scenario::parse(reference_scenario_text()).unwrap();
    let cfg = scn.to_model_config().unwrap();
    let consts = certificate_constants(&cfg).unwrap();
    let sys = assemble_closed_loop(&cfg, scn.n, scn.beta, Some(scn.m_d)).unwrap();
    let rec = simulate(&sys, &scn.integrator().unwrap(), Some(&consts), false).unwrap();

    // initial energy of the parabolic release: bending 1, axial 2/3,
    // springs 1/2 + 2, total 25/6
    let e0 = rec.e0();
    assert!((e0 - 25.0 / 6.0).abs() <= 1e-9 * e0, "E(0) = {e0}");

    // twenty-second decay factor, frozen from the first accepted run
    let ratio = rec.energy.last().unwrap() / e0;
    let baseline = 4.9186678701877505e-6;
    assert!(
        (ratio - baseline).abs() <= 1e-6 * baseline,
        "E(20)/E(0) = {ratio:.12e}, baseline {baseline:.12e}"
    );

    // tail decay rate
    let fit = fit_decay_rate(&rec.times, &rec.energy, 10.0, 20.0).unwrap();
    let theta_baseline = 6.601236799245e-2;
    assert!(
        (fit.theta_hat - theta_baseline).abs() <= 1e-6 * theta_baseline,
        "theta_hat = {:.12e}",
        fit.theta_hat
    );

    // windowed estimates on the (1, 10) window stay clearly positive
    let lem = lemma_checks(&sys, &rec, &consts, 1.0, 10.0).unwrap();
    assert!(lem.cross_derivative >= -1e-8 * e0, "{lem:?}");
    assert!(lem.energy_integral >= -1e-8 * e0, "{lem:?}");
    assert!(lem.boundary_traces >= -1e-8 * e0, "{lem:?}");

    // the computed abscissa sits at zero within eigensolver resolution:
    // modes pinned at the degenerate end decay too slowly to resolve
    let sp = spectrum(&sys, 2000).unwrap();
    assert!(sp.abscissa <= SPECTRUM_STABLE_TOL, "abscissa {}", sp.abscissa);
    assert!(sp.abscissa.abs() <= 1e-8, "abscissa {}", sp.abscissa);
}
