use num_complex::Complex64 as C64;
use oscfluct::preparations::{BathPreparation, Profile};
use oscfluct::quadrature::{adaptive, AdaptiveOptions};
use oscfluct::scenario::{Bath, Scenario};
use oscfluct::spectral::SpectralDensity;
use oscfluct::transport::{Affinity, TransportModel};

fn drude() -> SpectralDensity {
    SpectralDensity::drude_ohmic(0.05, 10.0).unwrap()
}

fn pair(l: BathPreparation, r: BathPreparation) -> TransportModel {
    TransportModel::new(&Scenario::new(1.0, vec![Bath::new(drude(), l), Bath::new(drude(), r)]).unwrap()).unwrap()
}

fn thermal(tl: f64, tr: f64) -> TransportModel {
    pair(
        BathPreparation::thermal(tl).unwrap(),
        BathPreparation::thermal(tr).unwrap(),
    )
}

fn squeezed_left() -> TransportModel {
    pair(
        BathPreparation::squeezed_thermal(2.0, Profile::gaussian(0.5, 1.0, 0.5)).unwrap(),
        BathPreparation::thermal(1.0).unwrap(),
    )
}

#[test]
fn steady_current_against_adaptive_quadrature() {
    let m = thermal(2.0, 1.0);
    let sc = m.scenario();
    let sus = sc.susceptibility();
    let f = |w: f64| {
        let b = sc.baths();
        std::f64::consts::FRAC_PI_2
            * b[0].spectral.gamma(w).unwrap()
            * b[1].spectral.gamma(w).unwrap()
            * sus.eval_unchecked(w).norm_sqr()
            * (b[0].preparation.energy(w) - b[1].preparation.energy(w))
    };
    let mut bp: Vec<f64> = (0..=40).map(|k| 0.05 * k as f64).collect();
    bp.extend([3.0, 5.0, 10.0, 30.0, 100.0, 1000.0]);
    let reference = adaptive(
        f,
        &bp,
        AdaptiveOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            max_intervals: 100_000,
        },
    )
    .unwrap()
    .value;
    let i = m.steady_current();
    eprintln!("I_inf = {i:.12} (adaptive {reference:.12}), {} nodes", m.node_count());
    assert!(i > 0.0);
    assert!((i - reference).abs() < 1e-11);
    assert!((i - m.first_cumulant_rate()).abs() < 1e-10 * i);
    let back = m.swapped().unwrap().steady_current();
    assert!((i + back).abs() < 1e-12, "{i} {back}");
}

#[test]
fn vanishing_currents() {
    let off = SpectralDensity::drude_ohmic(0.0, 10.0).unwrap();
    let m = TransportModel::new(
        &Scenario::new(
            1.0,
            vec![
                Bath::new(drude(), BathPreparation::thermal(3.0).unwrap()),
                Bath::new(off, BathPreparation::thermal(1.0).unwrap()),
            ],
        )
        .unwrap(),
    )
    .unwrap();
    assert!(m.steady_current().abs() < 1e-10);
    assert!(m.second_cumulant_rate().unwrap().abs() < 1e-10);
    let same = pair(
        BathPreparation::squeezed_thermal(1.0, Profile::constant(0.3)).unwrap(),
        BathPreparation::squeezed_thermal(1.0, Profile::constant(0.3)).unwrap(),
    );
    assert!(same.steady_current().abs() < 1e-10);
}

#[test]
fn linear_response_slope() {
    let m = thermal(1.0, 1.0);
    let h = 1e-3;
    let slope = m.linear_response_current(1.0, 1.0).unwrap();
    let fd = (thermal(1.0 + h, 1.0).steady_current() - thermal(1.0 - h, 1.0).steady_current()) / (2.0 * h);
    eprintln!("linear slope {slope:.10} finite difference {fd:.10}");
    assert!((slope - fd).abs() < 1e-3 * slope.abs());
    assert_eq!(m.linear_response_current(1.0, 0.0).unwrap(), 0.0);
    assert!(squeezed_left().linear_response_current(1.0, 0.1).is_err());
}

#[test]
fn second_cumulant_paths_agree() {
    for (tl, tr) in [(2.0, 1.0), (1.0, 1.0), (0.3, 4.0)] {
        let m = thermal(tl, tr);
        let a = m.second_cumulant_rate().unwrap();
        let b = m.second_cumulant_rate_thermal().unwrap();
        eprintln!("T = ({tl}, {tr}): {a:.14e} vs {b:.14e}");
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-10 * a);
    }
    assert!(squeezed_left().second_cumulant_rate().unwrap() > 0.0);
}

#[test]
fn cumulants_from_generating_function() {
    for m in [thermal(2.0, 1.0), squeezed_left()] {
        let (c1, c2) = m.cgf_cumulants(0.005).unwrap();
        let i = m.steady_current();
        let s = m.second_cumulant_rate().unwrap();
        eprintln!("dG = {c1:.12e} vs {i:.12e}; d2G = {c2:.12e} vs {s:.12e}");
        assert!((c1 - i).abs() < 1e-6 * i.abs());
        assert!((c2 - s).abs() < 1e-6 * s.abs());
    }
    assert!(thermal(2.0, 1.0).cgf(C64::new(0.0, 0.0)).unwrap().norm() < 1e-17);
}

#[test]
fn gallavotti_cohen_symmetry() {
    let xis: Vec<f64> = (0..=80).map(|k| -2.0 + 0.05 * k as f64).collect();
    let omegas: Vec<f64> = (1..=200).map(|k| 0.05 * k as f64).collect();

    let m = thermal(2.0, 1.0);
    let a = m.affinity(&omegas, 1e-9).unwrap().value().unwrap();
    let r = m.gc_residual(&xis, a).unwrap();
    eprintln!("thermal: A = {a}, residual {r:.3e}");
    assert!((a - 0.5).abs() < 1e-12);
    assert!(r < 1e-8);

    // Thermal energy distributions carried by correlated quadratures.
    let c = pair(
        BathPreparation::correlated_thermal(2.0, 0.8).unwrap(),
        BathPreparation::correlated_thermal(1.0, -0.6).unwrap(),
    );
    let a = c.affinity(&omegas, 1e-9).unwrap().value().unwrap();
    let r = c.gc_residual(&xis, a).unwrap();
    eprintln!("correlated: A = {a}, residual {r:.3e}");
    assert!(r < 1e-8);

    let s = squeezed_left();
    assert!(matches!(s.affinity(&omegas, 1e-9).unwrap(), Affinity::Varying { .. }));
    let r = s.gc_residual(&xis, 0.5).unwrap();
    eprintln!("squeezed: residual {r:.3e} (symmetry not expected)");
    assert!(r > 1e-3);
}

#[test]
fn real_counting_fields_have_nonpositive_real_part() {
    let m = squeezed_left();
    for k in -20..=20 {
        let g = m.cgf(C64::new(0.25 * k as f64, 0.0)).unwrap();
        assert!(g.re <= 1e-15, "{k}: {g}");
    }
}
