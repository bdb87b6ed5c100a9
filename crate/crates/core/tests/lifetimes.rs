use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use subrad::dynamics::PopulationObserver;
use subrad::{
    build_chain, build_couplings, integrate, make_initial_state, sector_spectrum, subradiant_lifetime,
    InitialState, IntegratorSettings, KernelKind,
};

// Late-time decay of the single-excitation population follows the slowest
// mode of the one-excitation sector.
#[test]
fn late_decay_matches_slowest_single_excitation_mode() {
    let atoms = build_chain(5, FRAC_PI_2, Vector3::x(), Vector3::z()).unwrap();
    let couplings = build_couplings(&atoms, KernelKind::Vectorial).unwrap();
    let tau1 = subradiant_lifetime(&sector_spectrum(&couplings, 1).unwrap()).unwrap();

    let (t_a, t_b) = (8.0 * tau1, 10.0 * tau1);
    let rho0 = make_initial_state(&InitialState::Mixture, 5, None).unwrap();
    let settings = IntegratorSettings::with_times(vec![0.0, t_a, t_b]);
    let mut pops = PopulationObserver { n_atoms: 5 };
    let traj = integrate(&rho0, &couplings, None, &atoms, &settings, &mut [&mut pops]).unwrap();
    let p1 = traj.series.column("P1").unwrap();
    let slope = (p1[1] / p1[2]).ln() / (t_b - t_a);
    assert!(
        (slope * tau1 - 1.0).abs() < 0.05,
        "fitted rate {slope}, spectrum rate {}",
        1.0 / tau1
    );
}

#[test]
fn two_excitation_sector_decays_faster() {
    for n in 4..=7 {
        let atoms = build_chain(n, FRAC_PI_2, Vector3::x(), Vector3::z()).unwrap();
        let couplings = build_couplings(&atoms, KernelKind::Vectorial).unwrap();
        let tau1 = subradiant_lifetime(&sector_spectrum(&couplings, 1).unwrap()).unwrap();
        let tau2 = subradiant_lifetime(&sector_spectrum(&couplings, 2).unwrap()).unwrap();
        assert!(tau2 < tau1, "N={n}: tau2 = {tau2}, tau1 = {tau1}");
    }
}
