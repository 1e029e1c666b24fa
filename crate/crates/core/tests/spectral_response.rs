//! Classical response checks against independent time-domain oracles.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use oscfluct::spectral::{ClassicalResponse, ResponseOptions, SpectralDensity, Susceptibility};

const OMEGA: f64 = 1.0;
const KAPPA: f64 = 0.05;
const WC: f64 = 10.0;

fn s0() -> Arc<Susceptibility> {
    Arc::new(
        Susceptibility::new(
            OMEGA,
            vec![
                SpectralDensity::drude_ohmic(KAPPA, WC).unwrap(),
                SpectralDensity::drude_ohmic(KAPPA, WC).unwrap(),
            ],
        )
        .unwrap(),
    )
}

/// Roots of a complex cubic by Durand–Kerner iteration.
fn cubic_roots(c: [Complex64; 4]) -> [Complex64; 3] {
    let lead = c[0];
    let p = |z: Complex64| ((c[0] * z + c[1]) * z + c[2]) * z + c[3];
    let mut r = [
        Complex64::new(0.4, 0.9),
        Complex64::new(0.4, 0.9).powu(2),
        Complex64::new(0.4, 0.9).powu(3),
    ];
    for _ in 0..500 {
        for i in 0..3 {
            let mut den = lead;
            for j in 0..3 {
                if i != j {
                    den *= r[i] - r[j];
                }
            }
            r[i] -= p(r[i]) / den;
        }
    }
    r
}

/// Exact u, u̇, ü for two Drude baths with equal cutoff from the residues
/// of e^{−izt}F(z); F(z)·(z + iω_c) is a ratio with a cubic denominator.
struct Residues {
    roots: [Complex64; 3],
    amps: [Complex64; 3],
}

impl Residues {
    fn new() -> Self {
        let i = Complex64::i();
        let kt = 2.0 * KAPPA;
        let c = [
            Complex64::new(-1.0, 0.0),
            -i * WC,
            Complex64::new(OMEGA * OMEGA + kt * WC, 0.0),
            i * WC * OMEGA * OMEGA,
        ];
        let roots = cubic_roots(c);
        let dp = |z: Complex64| 3.0 * c[0] * z * z + 2.0 * c[1] * z + c[2];
        let amps = roots.map(|r| -i * (r + i * WC) / dp(r));
        Self { roots, amps }
    }

    fn eval(&self, t: f64) -> [f64; 3] {
        let i = Complex64::i();
        let mut out = [0.0; 3];
        for (r, a) in self.roots.iter().zip(&self.amps) {
            let e = a * (-i * r * t).exp();
            out[0] += e.re;
            out[1] += (e * (-i * r)).re;
            out[2] += (e * (-i * r) * (-i * r)).re;
        }
        out
    }
}

/// RK4 integration of ü + Ω²u + ∫₀^t K(t−s)u̇(s)ds = 0 with the
/// exponential Drude kernel K(t) = κ_tot ω_c e^{−ω_c t}, using the
/// auxiliary memory variable z(t) = ∫K(t−s)u̇(s)ds.
fn langevin_ode(t_max: f64, h: f64) -> Vec<(f64, f64)> {
    let k0 = 2.0 * KAPPA * WC;
    let rhs = |y: [f64; 3]| [y[1], -OMEGA * OMEGA * y[0] - y[2], k0 * y[1] - WC * y[2]];
    let mut y = [0.0, 1.0, 0.0];
    let n = (t_max / h).round() as usize;
    let mut out = vec![(0.0, 0.0)];
    for k in 0..n {
        let a = rhs(y);
        let b = rhs([0, 1, 2].map(|j| y[j] + 0.5 * h * a[j]));
        let c = rhs([0, 1, 2].map(|j| y[j] + 0.5 * h * b[j]));
        let d = rhs([0, 1, 2].map(|j| y[j] + h * c[j]));
        for j in 0..3 {
            y[j] += h / 6.0 * (a[j] + 2.0 * b[j] + 2.0 * c[j] + d[j]);
        }
        out.push(((k + 1) as f64 * h, y[0]));
    }
    out
}

#[test]
fn response_matches_residue_solution() {
    let start = Instant::now();
    let resp = ClassicalResponse::new(
        s0(),
        ResponseOptions {
            t_max: 300.0,
            ..Default::default()
        },
    )
    .unwrap();
    eprintln!(
        "response: {} panels, omega_max {:.3e}, built in {:?}",
        resp.panel_count(),
        resp.omega_max(),
        start.elapsed()
    );
    let exact = Residues::new();
    let mut worst = [0.0_f64; 3];
    for (k, t) in resp.times().iter().enumerate().step_by(7) {
        let e = exact.eval(*t);
        let got = [resp.u_grid()[k], resp.udot_grid()[k], resp.uddot_grid()[k]];
        if *t > 0.0 {
            for j in 0..3 {
                worst[j] = worst[j].max((got[j] - e[j]).abs());
            }
        }
    }
    eprintln!("max deviation u, udot, uddot: {worst:?}");
    assert!(worst[0] < 1e-9);
    assert!(worst[1] < 1e-9);
    assert!(worst[2] < 1e-7);
    assert_eq!(resp.u_grid()[0], 0.0);
    // Sum rule: u̇(0⁺) = 1.
    assert!((resp.udot_zero() - 1.0).abs() < 1e-8, "{}", resp.udot_zero());
    // Decay: |u| at long times is governed by the pole with Im z ≈ −0.05.
    let late = exact.eval(300.0)[0].abs();
    assert!((resp.at(300.0)[0]).abs() < 2.0 * late + 1e-9);
}

#[test]
fn response_matches_time_domain_langevin_integration() {
    let resp = ClassicalResponse::new(
        s0(),
        ResponseOptions {
            t_max: 100.0,
            ..Default::default()
        },
    )
    .unwrap();
    let ode = langevin_ode(100.0, 1e-3);
    let mut worst: f64 = 0.0;
    for (t, u) in ode.iter().step_by(250) {
        worst = worst.max((resp.at(*t)[0] - u).abs());
    }
    eprintln!("ODE deviation {worst:e}");
    assert!(worst < 1e-4);
}

#[test]
fn partial_transform_limits() {
    let resp = ClassicalResponse::new(
        s0(),
        ResponseOptions {
            t_max: 400.0,
            ..Default::default()
        },
    )
    .unwrap();
    let exact = Residues::new();
    // t = 0: empty integral.
    let (u0, v0) = resp.partial_ft(0.0, 1.3).unwrap();
    assert_eq!(u0.norm(), 0.0);
    assert_eq!(v0.norm(), 0.0);
    // ω = 0: running integral of u, real. ∫₀^t u = Σ a/(−ir)(e^{−irt} − 1).
    let i = Complex64::i();
    for &t in &[3.7, 50.0, 123.45] {
        let (u, _) = resp.partial_ft(t, 0.0).unwrap();
        let mut ex = 0.0;
        for (r, a) in exact.roots.iter().zip(&exact.amps) {
            ex += (a / (-i * r) * ((-i * r * t).exp() - 1.0)).re;
        }
        assert_eq!(u.im, 0.0);
        assert!((u.re - ex).abs() < 1e-8, "t={t}: {} vs {ex}", u.re);
    }
    // Finite ω against the residue form e^{iωt}Σ a/(i(ω−... )) evaluated exactly.
    for &w in &[0.3, 1.0, 2.5, 40.0] {
        for &t in &[10.0, 77.77, 400.0] {
            let (u, v) = resp.partial_ft(t, w).unwrap();
            let mut ex = Complex64::new(0.0, 0.0);
            for (r, a) in exact.roots.iter().zip(&exact.amps) {
                // ∫₀^t e^{−irτ}e^{iω(t−τ)}dτ for both conjugate parts of Re.
                let k1 = -i * (*r + w);
                let k2 = -i * (-r.conj() + w);
                let part = |amp: Complex64, k: Complex64| amp * (i * w * t).exp() * ((k * t).exp() - 1.0) / k;
                ex += 0.5 * (part(*a, k1) + part(a.conj(), k2));
            }
            assert!((u - ex).norm() < 1e-8 * ex.norm().max(1.0), "w={w} t={t}: {u} vs {ex}");
            let vex = exact.eval(t)[0] + i * w * ex;
            assert!((v - vex).norm() < 1e-7 * vex.norm().max(1.0));
        }
    }
    // Long-time asymptote u(t,ω) → e^{iωt} u(ω).
    for &w in &[0.2, 3.0, 8.0] {
        let (u, _) = resp.partial_ft(400.0, w).unwrap();
        let asym = Complex64::from_polar(1.0, w * 400.0) * resp.full_ft(w);
        assert!((u - asym).norm() < 1e-4, "w={w}");
    }
}
