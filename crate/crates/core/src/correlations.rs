//! Position correlation functions of the central oscillator.
//!
//! Ψ(t,s) = ½⟨{Q(t), Q(t+s)}⟩ and Φ(t,s) = (1/i)⟨[Q(t), Q(t+s)]⟩, their
//! long-time limits Ψ(s), Φ(s) and spectra
//!
//! Ψ(ω) = π Σ_α γ_α|F(ω)|²E_α(ω)/ω,   Φ(ω)/i = π Σ_α γ_α|F(ω)|².
//!
//! Φ(ω) is carried as the real coefficient of i throughout.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfunc::{Dynamics, MomentState};
use crate::oscillatory::FourierTable;
use crate::preparations::inverse_temperature;
use crate::scenario::Scenario;
use crate::spectral::response_breakpoints;

fn check_frequency(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Domain(format!("frequency must be > 0, got {omega}")));
    }
    Ok(())
}

/// Per-bath contributions π γ_α|F|²E_α/ω to Ψ(ω).
pub fn psi_spectrum_by_bath(scenario: &Scenario, omega: f64) -> Result<Vec<f64>> {
    check_frequency(omega)?;
    let f2 = scenario.susceptibility().eval(omega)?.norm_sqr();
    Ok(scenario
        .baths()
        .iter()
        .map(|b| PI * b.spectral.gamma_over_omega(omega) * f2 * b.preparation.energy(omega))
        .collect())
}

/// Ψ(ω) for ω > 0.
pub fn psi_spectrum(scenario: &Scenario, omega: f64) -> Result<f64> {
    Ok(psi_spectrum_by_bath(scenario, omega)?.iter().sum())
}

/// Φ(ω)/i for ω > 0. Depends on the spectral densities only.
pub fn phi_spectrum(scenario: &Scenario, omega: f64) -> Result<f64> {
    check_frequency(omega)?;
    let sus = scenario.susceptibility();
    Ok(PI * sus.gamma_sum(omega) * sus.eval(omega)?.norm_sqr())
}

/// Σ_α γ_αE_α / Σ_α γ_α: the bath-averaged energy seen by the oscillator.
pub fn mixed_energy(scenario: &Scenario, omega: f64) -> Result<f64> {
    check_frequency(omega)?;
    let g = scenario.susceptibility().gamma_sum(omega);
    if !(g > 0.0) {
        return Err(Error::Domain(format!("no bath couples at omega = {omega}")));
    }
    Ok(scenario.weighted_energy(omega) / g)
}

/// Lags, frequencies and the correlation functions on both grids.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationResult {
    pub lags: Vec<f64>,
    pub psi_lag: Vec<f64>,
    pub phi_lag: Vec<f64>,
    pub omegas: Vec<f64>,
    pub psi_freq: Vec<f64>,
    /// Φ(ω)/i.
    pub phi_freq: Vec<f64>,
    /// psi_freq split by bath: `psi_freq_by_bath[k][α]`.
    pub psi_freq_by_bath: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct CorrelationOptions {
    /// L1 interpolation tolerance of the spectral integrands.
    pub tol: f64,
    pub tail_tol: f64,
    pub max_panels: usize,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            tail_tol: 1e-11,
            max_panels: 200_000,
        }
    }
}

/// Tabulated stationary integrands, ready for repeated lag evaluations.
#[derive(Debug, Clone)]
pub struct StationaryCorrelations {
    scenario: Scenario,
    table: FourierTable<2>,
}

impl StationaryCorrelations {
    pub fn new(scenario: &Scenario, opts: CorrelationOptions) -> Result<Self> {
        scenario.require_pole_free()?;
        let sus = scenario.susceptibility().clone();
        let w_max = sus.transform_cutoff(opts.tail_tol);
        let mut bp = response_breakpoints(&sus, w_max);
        bp.extend(scenario.breakpoints().into_iter().filter(|w| *w < w_max));
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        let sc = scenario.clone();
        let table = FourierTable::build(
            move |w| {
                let f2 = sc.susceptibility().eval_unchecked(w).norm_sqr();
                let mut psi = 0.0;
                let mut phi = 0.0;
                for b in sc.baths() {
                    let g = b.spectral.gamma_over_omega(w);
                    if g != 0.0 {
                        psi += g * b.preparation.energy(w);
                        phi += g * w;
                    }
                }
                [psi * f2, phi * f2]
            },
            &bp,
            [opts.tol, opts.tol],
            opts.max_panels,
        )?;
        Ok(Self {
            scenario: scenario.clone(),
            table,
        })
    }

    /// (Ψ(s), Φ(s)) for any real lag.
    pub fn at(&self, s: f64) -> (f64, f64) {
        let v = self.table.transform(s);
        (v[0].re, v[1].im)
    }

    /// (Ψ(s), Φ(s)) on a uniform lag grid s_k = k·ds, k = 0..n.
    pub fn on_grid(&self, ds: f64, n: usize) -> Vec<(f64, f64)> {
        self.table
            .transform_grid(ds, n)
            .into_iter()
            .map(|v| (v[0].re, v[1].im))
            .collect()
    }

    /// Ψ(0), the stationary position variance.
    pub fn variance(&self) -> f64 {
        self.table.integral()[0]
    }

    pub fn evaluate(&self, lags: &[f64], omegas: &[f64]) -> Result<CorrelationResult> {
        let (psi_lag, phi_lag) = lags.iter().map(|&s| self.at(s)).unzip();
        let mut psi_freq = Vec::with_capacity(omegas.len());
        let mut phi_freq = Vec::with_capacity(omegas.len());
        let mut by_bath = Vec::with_capacity(omegas.len());
        for &w in omegas {
            let parts = psi_spectrum_by_bath(&self.scenario, w)?;
            psi_freq.push(parts.iter().sum());
            phi_freq.push(phi_spectrum(&self.scenario, w)?);
            by_bath.push(parts);
        }
        Ok(CorrelationResult {
            lags: lags.to_vec(),
            psi_lag,
            phi_lag,
            omegas: omegas.to_vec(),
            psi_freq,
            phi_freq,
            psi_freq_by_bath: by_bath,
        })
    }
}

/// Stationary correlations on the given lag and frequency grids.
pub fn stationary_correlations(scenario: &Scenario, lags: &[f64], omegas: &[f64]) -> Result<CorrelationResult> {
    StationaryCorrelations::new(scenario, CorrelationOptions::default())?.evaluate(lags, omegas)
}

/// Transient (Ψ(t,s), Φ(t,s)) for each (t, s) pair, including the terms
/// carried by the initial oscillator state, the single bath integral and
/// the cross-mode double integral.
pub fn finite_time_correlations(
    dynamics: &Dynamics,
    initial: &MomentState,
    pairs: &[(f64, f64)],
) -> Result<Vec<(f64, f64)>> {
    for &(t, s) in pairs {
        if !(t >= 0.0 && t + s >= 0.0) {
            return Err(Error::Domain(format!(
                "need t >= 0 and t + s >= 0, got t = {t}, s = {s}"
            )));
        }
    }
    let bath = dynamics.bath_position_correlations(pairs)?;
    let cross = dynamics.cross_position_correlations(pairs)?;
    let mut times: Vec<f64> = pairs.iter().flat_map(|&(t, s)| [t, t + s]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let states = dynamics.trajectory(initial, &times)?;
    let mean_at = |t: f64| states[times.partition_point(|x| *x < t)].mean[0];
    let resp = dynamics.response();
    let c = &initial.cov;
    Ok(pairs
        .iter()
        .zip(bath.iter().zip(&cross))
        .map(|(&(t, s), (&(psi1, phi_b), &psi2))| {
            let [u1, ud1, _] = resp.at(t);
            let [u2, ud2, _] = resp.at(t + s);
            let central = ud1 * (c[0][0] * ud2 + c[0][1] * u2) + u1 * (c[1][0] * ud2 + c[1][1] * u2);
            let psi = mean_at(t) * mean_at(t + s) + central + psi1 + psi2;
            let phi = ud1 * u2 - u1 * ud2 + phi_b;
            (psi, phi)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct FdtReport {
    pub omegas: Vec<f64>,
    /// Ψ(ω).
    pub lhs: Vec<f64>,
    /// [Σγ_αE_α/(ωΣγ_α)]·Φ(ω)/i.
    pub rhs: Vec<f64>,
    /// max |lhs − rhs|/|lhs|.
    pub residual: f64,
}

/// Compares Ψ(ω) with the bath-averaged fluctuation relation.
pub fn fdt_check(scenario: &Scenario, omegas: &[f64]) -> Result<FdtReport> {
    let mut lhs = Vec::with_capacity(omegas.len());
    let mut rhs = Vec::with_capacity(omegas.len());
    let mut residual: f64 = 0.0;
    for &w in omegas {
        let l = psi_spectrum(scenario, w)?;
        let r = mixed_energy(scenario, w)? / w * phi_spectrum(scenario, w)?;
        if l != 0.0 {
            residual = residual.max((l - r).abs() / l.abs());
        }
        lhs.push(l);
        rhs.push(r);
    }
    Ok(FdtReport {
        omegas: omegas.to_vec(),
        lhs,
        rhs,
        residual,
    })
}

/// Frequency-resolved temperature, or a flag when the bath-averaged energy
/// does not exceed the zero-point value ω/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EffectiveTemperature {
    Finite(f64),
    ZeroPointDominated,
}

impl EffectiveTemperature {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Finite(t) => Some(*t),
            Self::ZeroPointDominated => None,
        }
    }
}

/// T(ω) solving ½coth(ω/2T) = Σγ_αE_α/(ωΣγ_α).
pub fn effective_temperature(scenario: &Scenario, omega: f64) -> Result<EffectiveTemperature> {
    let e = mixed_energy(scenario, omega)?;
    Ok(match inverse_temperature(omega, e) {
        Some(beta) if beta > 0.0 => EffectiveTemperature::Finite(1.0 / beta),
        _ => EffectiveTemperature::ZeroPointDominated,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermalizationReport {
    pub omegas: Vec<f64>,
    pub temperatures: Vec<EffectiveTemperature>,
    /// max − min of the finite temperatures; infinite if any point is flagged.
    pub spread: f64,
    pub passed: bool,
}

/// Passes when the effective temperature is constant on the grid to `tol`.
pub fn thermalization_check(scenario: &Scenario, omegas: &[f64], tol: f64) -> Result<ThermalizationReport> {
    let temperatures = omegas
        .iter()
        .map(|&w| effective_temperature(scenario, w))
        .collect::<Result<Vec<_>>>()?;
    let finite: Option<Vec<f64>> = temperatures.iter().map(|t| t.value()).collect();
    let spread = match finite {
        Some(v) if !v.is_empty() => {
            let hi = v.iter().cloned().fold(f64::MIN, f64::max);
            let lo = v.iter().cloned().fold(f64::MAX, f64::min);
            hi - lo
        }
        Some(_) => 0.0,
        None => f64::INFINITY,
    };
    Ok(ThermalizationReport {
        omegas: omegas.to_vec(),
        temperatures,
        spread,
        passed: spread < tol,
    })
}

/// Best uniform fit of ratio(ω) = Ψ(ω)/[Φ(ω)/i] by ½coth(ω/2T): returns
/// (T, max_ω |ratio/(½coth(ω/2T)) − 1|) for the T minimizing that maximum.
pub fn best_thermal_fit(omegas: &[f64], ratio: &[f64]) -> (f64, f64) {
    let dev = |t: f64| {
        omegas
            .iter()
            .zip(ratio)
            .map(|(&w, &r)| (r / (0.5 / (w / (2.0 * t)).tanh()) - 1.0).abs())
            .fold(0.0_f64, f64::max)
    };
    // Coarse logarithmic scan, then golden-section refinement.
    let grid: Vec<f64> = (0..=400).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 400.0)).collect();
    let k = (0..grid.len())
        .min_by(|&a, &b| dev(grid[a]).total_cmp(&dev(grid[b])))
        .unwrap_or(0);
    let (mut lo, mut hi) = (grid[k.saturating_sub(1)].ln(), grid[(k + 1).min(grid.len() - 1)].ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if dev(a.exp()) < dev(b.exp()) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let t = (0.5 * (lo + hi)).exp();
    (t, dev(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preparations::{thermal_energy, BathPreparation, Profile};

    fn s0(tl: f64, tr: f64) -> Scenario {
        Scenario::drude_thermal_pair(1.0, 0.05, 10.0, tl, tr).unwrap()
    }

    #[test]
    fn spectra_assemble_from_factors() {
        let sc = s0(1.0, 2.0);
        let b = &sc.baths()[0].spectral;
        let f2 = sc.susceptibility().eval(1.0).unwrap().norm_sqr();
        let g = b.gamma(1.0).unwrap();
        let expected = PI * (g * thermal_energy(1.0, 1.0).unwrap() + g * thermal_energy(1.0, 2.0).unwrap()) * f2;
        assert!((psi_spectrum(&sc, 1.0).unwrap() - expected).abs() < 1e-14 * expected);
        assert!((phi_spectrum(&sc, 1.0).unwrap() - PI * 2.0 * g * f2).abs() < 1e-14);
        assert!(psi_spectrum(&sc, 0.0).is_err());
        assert!(phi_spectrum(&sc, -1.0).is_err());
    }

    #[test]
    fn equilibrium_temperature_is_recovered() {
        let sc = s0(1.5, 1.5);
        for &w in &[0.1, 0.7, 2.0, 5.0] {
            let t = effective_temperature(&sc, w).unwrap().value().unwrap();
            assert!((t - 1.5).abs() < 1e-10, "{w}: {t}");
        }
        let rep = thermalization_check(&sc, &[0.1, 1.0, 3.0], 1e-8).unwrap();
        assert!(rep.passed);
        let rep = thermalization_check(&s0(2.0, 1.0), &[0.1, 1.0, 3.0], 1e-3).unwrap();
        assert!(!rep.passed && rep.spread > 0.01);
    }

    #[test]
    fn squeezed_single_bath_ratio_is_energy_over_omega() {
        let spec = crate::spectral::SpectralDensity::drude_ohmic(0.05, 10.0).unwrap();
        let prep = BathPreparation::squeezed_thermal(1.0, Profile::constant(0.4)).unwrap();
        let sc = Scenario::new(1.0, vec![crate::scenario::Bath::new(spec, prep.clone())]).unwrap();
        for &w in &[0.3, 1.0, 4.0] {
            let r = psi_spectrum(&sc, w).unwrap() / phi_spectrum(&sc, w).unwrap();
            assert!((r - prep.energy(w) / w).abs() < 1e-13);
        }
    }

    #[test]
    fn thermal_fit_finds_temperature() {
        let omegas: Vec<f64> = (1..50).map(|k| 0.1 * k as f64).collect();
        let ratio: Vec<f64> = omegas.iter().map(|w| 0.5 / (w / 1.6).tanh()).collect();
        let (t, dev) = best_thermal_fit(&omegas, &ratio);
        assert!((t - 0.8).abs() < 1e-6 && dev < 1e-6, "{t} {dev}");
    }
}
