use oscfluct::correlations::{finite_time_correlations, CorrelationOptions, StationaryCorrelations};
use oscfluct::genfunc::{Dynamics, DynamicsOptions, MomentState};
use oscfluct::noise::friction_kernel;
use oscfluct::oracle::{current_plateau, discretize, w_slope, ModeLayout, NormalModeSystem};
use oscfluct::scenario::Scenario;
use oscfluct::spectral::SpectralDensity;
use oscfluct::transport::TransportModel;

fn system(sc: &Scenario, n: usize, layout: ModeLayout) -> NormalModeSystem {
    let baths = sc
        .baths()
        .iter()
        .map(|b| discretize(&b.spectral, &b.preparation, n, layout).unwrap())
        .collect();
    NormalModeSystem::new(sc.omega0(), baths).unwrap()
}

const DENSE: ModeLayout = ModeLayout::Graded {
    dense_max: 40.0,
    dense_fraction: 0.9,
    omega_max: 5000.0,
};

#[test]
fn discrete_kernel_matches_drude() {
    // A narrow cutoff keeps the spectral tail inside a uniform grid.
    let spec = SpectralDensity::drude_ohmic(0.05, 1.0).unwrap();
    let prep = oscfluct::preparations::BathPreparation::thermal(1.0).unwrap();
    let layout = ModeLayout::Graded {
        dense_max: 50.0,
        dense_fraction: 1.0,
        omega_max: 50.0,
    };
    let b = discretize(&spec, &prep, 200, layout).unwrap();
    let t_rec = layout.recurrence_time(200).unwrap();
    let mut worst = 0.0_f64;
    for k in 0..=40 {
        let t = 0.8 * t_rec * k as f64 / 40.0;
        let exact = 0.05 * (-t).exp();
        assert!((friction_kernel(&spec, t).unwrap() - exact).abs() < 1e-10);
        worst = worst.max((b.friction_kernel(t) - exact).abs() / 0.05);
    }
    eprintln!("discrete kernel deviation relative to K(0): {worst:.3e}");
    assert!(worst < 2e-2);
}

#[test]
fn propagator_is_symplectic_and_conserves_energy() {
    let sc = Scenario::drude_thermal_pair(1.0, 0.05, 10.0, 2.0, 1.0).unwrap();
    let sys = system(&sc, 100, DENSE);
    let init = MomentState::coherent(1.0, 1.0, -0.5);
    let g0 = sys.initial_state(&init);
    let e0 = sys.total_energy(&g0);
    for &t in &[0.3, 7.0, 30.0] {
        assert!(sys.symplectic_defect(t) < 1e-9, "t = {t}: {}", sys.symplectic_defect(t));
        let e = sys.total_energy(&sys.evolve_moments(&g0, t));
        assert!((e - e0).abs() < 1e-9 * e0.abs(), "t = {t}: {e} vs {e0}");
    }
}

#[test]
fn current_is_rate_of_bath_energy() {
    let sc = Scenario::drude_thermal_pair(1.0, 0.05, 10.0, 2.0, 1.0).unwrap();
    let sys = system(&sc, 100, DENSE);
    let init = MomentState::coherent(1.0, 0.5, 0.0);
    // Modes reach ω = 5000, so the difference step must resolve them.
    let h = 2e-6;
    for &t in &[1.0, 5.0, 20.0] {
        let tr = sys.energy_current_trajectory(&init, 0, &[t - h, t, t + h]).unwrap();
        let rate = (tr[2].0 - tr[0].0) / (2.0 * h);
        let current = tr[1].1;
        assert!(
            (rate + current).abs() < 1e-5 * current.abs().max(1e-3),
            "t = {t}: {rate} vs {current}"
        );
    }
}

#[test]
fn moments_and_correlations_match_continuum() {
    let sc = Scenario::drude_thermal_pair(1.0, 0.05, 10.0, 2.0, 1.0).unwrap();
    let n = 300;
    let t_rec = DENSE.recurrence_time(n).unwrap();
    let sys = system(&sc, n, DENSE);
    let d = Dynamics::new(
        &sc,
        DynamicsOptions {
            t_max: t_rec,
            ..Default::default()
        },
    )
    .unwrap();
    let init = MomentState::coherent(1.0, 1.0, 0.0);
    let times: Vec<f64> = (0..=40).map(|k| 0.9 * t_rec * k as f64 / 40.0).collect();
    let oracle = sys.central_trajectory(&init, &times);
    let exact = d.trajectory(&init, &times).unwrap();
    let (mut du, mut dsig) = (0.0_f64, 0.0_f64);
    for ((t, o), e) in times.iter().zip(&oracle).zip(&exact) {
        du = du.max((sys.response(*t) - d.response().at(*t)[0]).abs());
        let scale = e.cov.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..2 {
            for j in 0..2 {
                dsig = dsig.max((o.cov[i][j] - e.cov[i][j]).abs() / scale);
            }
        }
    }
    eprintln!("t_rec {t_rec:.1}: u deviation {du:.3e}, covariance deviation {dsig:.3e}");
    assert!(du < 1e-3);
    assert!(dsig < 1e-3);

    // Lagged correlations of the relaxed oscillator against the stationary ones.
    let st = StationaryCorrelations::new(&sc, CorrelationOptions::default()).unwrap();
    let psi0 = st.variance();
    let t = 0.45 * t_rec;
    let pairs: Vec<(f64, f64)> = (0..=20).map(|k| (t, 0.4 * t_rec * k as f64 / 20.0)).collect();
    let exact_pairs = finite_time_correlations(&d, &init, &pairs).unwrap();
    let mut dpsi = 0.0_f64;
    for (&(t, s), &(pt, ft)) in pairs.iter().zip(&exact_pairs) {
        let (po, fo) = sys.two_time_position_corr(&init, t, s);
        dpsi = dpsi.max((po - pt).abs().max((fo - ft).abs()) / psi0);
    }
    eprintln!("two-time deviation relative to Psi(0): {dpsi:.3e}");
    assert!(dpsi < 1e-3);
}

#[test]
fn current_plateau_matches_steady_current() {
    let sc = Scenario::drude_thermal_pair(1.0, 0.05, 10.0, 2.0, 1.0).unwrap();
    let layout = ModeLayout::Graded {
        dense_max: 10.0,
        dense_fraction: 0.85,
        omega_max: 5000.0,
    };
    let n = 300;
    let t_rec = layout.recurrence_time(n).unwrap();
    let sys = system(&sc, n, layout);
    let init = MomentState::thermal(1.0, 1.5).unwrap();
    let exact = TransportModel::new(&sc).unwrap().steady_current();
    let plateau = current_plateau(&sys, &init, 0, t_rec, 400).unwrap();
    let slope = w_slope(&sys, &init, 0, 0.5 * t_rec, 0.9 * t_rec, 400).unwrap();
    eprintln!("t_rec {t_rec:.1}: plateau {plateau:.6e}, W slope {slope:.6e}, steady current {exact:.6e}");
    assert!(((plateau.abs() - exact) / exact).abs() < 2e-2);
    assert!(((slope - exact) / exact).abs() < 2e-2);
}
