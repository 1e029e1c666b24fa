//! Energy transfer between two baths through the central oscillator.
//!
//! All steady-state quantities are frequency integrals of the transmission
//! T(ω) = π²γ_l(ω)γ_r(ω)|F(ω)|² against the excess energies
//! n_α(ω) = E_α(ω) − ω/2 of the two preparations. The cumulant generating
//! function is written with forward and backward rates
//! a = n_l(n_r + ω), b = n_r(n_l + ω) so that complex counting fields with
//! Im ξ > 0 never multiply an exponentially large factor by a cancelled
//! difference.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::preparations::{inverse_temperature, SecondMoments};
use crate::quadrature::CompositeRule;
use crate::scenario::Scenario;
use crate::spectral::response_breakpoints;

const ORDER: usize = 20;
/// Largest |Re ξ|·(panel width) tolerated before panels are split.
const PHASE_PER_PANEL: f64 = 4.0;

/// Per-node data shared by every transport integral.
#[derive(Debug, Clone)]
struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// π²γ_lγ_r|F|²/ω²: finite at ω = 0 for Ohmic-like densities.
    trans: Vec<f64>,
    el: Vec<f64>,
    er: Vec<f64>,
    nl: Vec<f64>,
    nr: Vec<f64>,
}

/// A two-bath scenario prepared for transport calculations. Bath 0 is the
/// left bath and bath 1 the right bath; positive currents flow from left to
/// right.
#[derive(Debug, Clone)]
pub struct TransportModel {
    scenario: Scenario,
    edges: Vec<f64>,
    grid: Grid,
    xi_limit: f64,
}

impl TransportModel {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        if scenario.bath_count() != 2 {
            return Err(Error::Unsupported(format!(
                "transport requires exactly two baths, got {}",
                scenario.bath_count()
            )));
        }
        scenario.require_pole_free()?;
        let top = band_edge(scenario);
        let sus = scenario.susceptibility();
        let mut edges = response_breakpoints(sus, top);
        edges.extend(scenario.breakpoints().into_iter().filter(|w| *w < top));
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let xi_limit = 4.0;
        let grid = build_grid(scenario, &edges, xi_limit);
        Ok(Self {
            scenario: scenario.clone(),
            edges,
            grid,
            xi_limit,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Upper end of the frequency band.
    pub fn band_edge(&self) -> f64 {
        *self.edges.last().expect("band has edges")
    }

    /// Number of quadrature nodes in the base grid.
    pub fn node_count(&self) -> usize {
        self.grid.nodes.len()
    }

    /// The same spectral densities with left and right exchanged.
    pub fn swapped(&self) -> Result<Self> {
        let mut baths = self.scenario.baths().to_vec();
        baths.swap(0, 1);
        Self::new(&Scenario::new(self.scenario.omega0(), baths)?)
    }

    /// I_∞ = (π/2)∫γ_lγ_r|F|²(E_l − E_r)dω.
    pub fn steady_current(&self) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.nodes.len() {
            let w = g.nodes[k];
            acc += g.weights[k] * g.trans[k] * w * w * (g.el[k] - g.er[k]);
        }
        acc / (2.0 * PI)
    }

    /// First cumulant rate from the forward and backward rates,
    /// (1/2π)∫T ω (a − b)dω, an assembly independent of [`Self::steady_current`].
    pub fn first_cumulant_rate(&self) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.nodes.len() {
            let w = g.nodes[k];
            let (a, b) = rates(g.nl[k], g.nr[k], w);
            acc += g.weights[k] * g.trans[k] * w * (a - b);
        }
        acc / (2.0 * PI)
    }

    /// Linear-response current ΔT·(π/2)∫γ_lγ_r|F|²(ω/2T_r)²sinh⁻²(ω/2T_r)dω.
    /// Both baths must be plainly thermal.
    pub fn linear_response_current(&self, t_r: f64, delta_t: f64) -> Result<f64> {
        for (k, b) in self.scenario.baths().iter().enumerate() {
            let p = &b.preparation;
            if !matches!(p.moments, SecondMoments::Thermal { .. }) || p.has_means() || p.cross.is_some() {
                return Err(Error::Unsupported(format!(
                    "linear response needs thermal baths; bath {k} is {:?}",
                    p.label
                )));
            }
        }
        if !(t_r > 0.0) {
            return Err(Error::Domain(format!("temperature must be > 0, got {t_r}")));
        }
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.nodes.len() {
            let w = g.nodes[k];
            let x = w / (2.0 * t_r);
            let de = if x < 1e-8 { 1.0 } else { (x / x.sinh()).powi(2) };
            acc += g.weights[k] * g.trans[k] * w * w * de;
        }
        Ok(delta_t * acc / (2.0 * PI))
    }

    /// lim ⟨⟨W²⟩⟩/t = (π³/2)∫γ_l²γ_r²|F|⁴(E_l − E_r)² + (π/2)∫γ_lγ_r|F|²(2E_lE_r − ω²/2).
    pub fn second_cumulant_rate(&self) -> Result<f64> {
        let g = &self.grid;
        let (mut fluct, mut noise) = (0.0, 0.0);
        for k in 0..g.nodes.len() {
            let w = g.nodes[k];
            let t = g.trans[k] * w * w;
            let de = g.el[k] - g.er[k];
            fluct += g.weights[k] * t * t * de * de;
            noise += g.weights[k] * t * (2.0 * g.el[k] * g.er[k] - 0.5 * w * w);
        }
        let value = (fluct + noise) / (2.0 * PI);
        let scale = (fluct.abs() + noise.abs()) / (2.0 * PI);
        if value < -1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Consistency(format!(
                "second cumulant rate is negative: {value:e}"
            )));
        }
        Ok(value)
    }

    /// Thermal-only evaluation of the second cumulant rate through Bose
    /// occupations f_α = 1/(e^{ω/T_α} − 1).
    pub fn second_cumulant_rate_thermal(&self) -> Result<f64> {
        let temps: Vec<f64> = self
            .scenario
            .baths()
            .iter()
            .enumerate()
            .map(|(k, b)| {
                b.preparation
                    .temperature()
                    .ok_or_else(|| Error::Unsupported(format!("bath {k} is not thermal")))
            })
            .collect::<Result<_>>()?;
        let (tl, tr) = (temps[0], temps[1]);
        let g = &self.grid;
        let mut acc = 0.0;
        for k in 0..g.nodes.len() {
            let w = g.nodes[k];
            // φ = ω·f, with the limit T at ω = 0.
            let phi = |t: f64| if w == 0.0 { t } else { w / (w / t).exp_m1() };
            let (pl, pr) = (phi(tl), phi(tr));
            let tau = g.trans[k];
            // τ²ω⁴(φ_l − φ_r)² + τω²(2φ_lφ_r + ω(φ_l + φ_r))
            let diff = w * (pl - pr);
            acc += g.weights[k] * (tau * tau * w * w * diff * diff + tau * w * w * (2.0 * pl * pr + w * (pl + pr)));
        }
        Ok(acc / (2.0 * PI))
    }

    /// G(ξ) = −(1/2π)∫ln{1 + T[D(1 − cos ξω) − iV sin ξω]}dω with the
    /// logarithm followed continuously from ω = 0.
    pub fn cgf(&self, xi: C64) -> Result<C64> {
        if !(xi.re.is_finite() && xi.im.is_finite()) {
            return Err(Error::Domain(format!("counting field must be finite, got {xi}")));
        }
        if xi.re.abs() <= self.xi_limit {
            cgf_on(&self.grid, xi)
        } else {
            let grid = build_grid(&self.scenario, &self.edges, xi.re.abs());
            cgf_on(&grid, xi)
        }
    }

    /// G at each counting field.
    pub fn cgf_many(&self, xis: &[C64]) -> Result<Vec<C64>> {
        let lim = xis.iter().fold(self.xi_limit, |m, x| m.max(x.re.abs()));
        if lim > self.xi_limit {
            let grid = build_grid(&self.scenario, &self.edges, lim);
            xis.iter().map(|&x| cgf_on(&grid, x)).collect()
        } else {
            xis.iter().map(|&x| cgf_on(&self.grid, x)).collect()
        }
    }

    /// First and second derivatives of G with respect to iξ at ξ = 0, by
    /// Richardson-extrapolated central differences with step `h`.
    pub fn cgf_cumulants(&self, h: f64) -> Result<(f64, f64)> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("difference step must be > 0, got {h}")));
        }
        let steps = [-h, -0.5 * h, 0.0, 0.5 * h, h];
        let xis: Vec<C64> = steps.iter().map(|&k| C64::new(0.0, -k)).collect();
        let g: Vec<f64> = self.cgf_many(&xis)?.iter().map(|v| v.re).collect();
        let d1 = |lo: usize, hi: usize, step: f64| (g[hi] - g[lo]) / (2.0 * step);
        let d2 = |lo: usize, hi: usize, step: f64| (g[hi] - 2.0 * g[2] + g[lo]) / (step * step);
        let first = (4.0 * d1(1, 3, 0.5 * h) - d1(0, 4, h)) / 3.0;
        let second = (4.0 * d2(1, 3, 0.5 * h) - d2(0, 4, h)) / 3.0;
        Ok((first, second))
    }

    /// Inverse temperatures β_α(ω) = (2/ω)arcoth(2E_α/ω) on a grid; the
    /// affinity A = β_r − β_l when both are constant within `tol`.
    pub fn affinity(&self, omegas: &[f64], tol: f64) -> Result<Affinity> {
        let mut beta = [Vec::with_capacity(omegas.len()), Vec::with_capacity(omegas.len())];
        for &w in omegas {
            if !(w > 0.0) {
                return Err(Error::Domain(format!("frequency must be > 0, got {w}")));
            }
            for (k, b) in self.scenario.baths().iter().enumerate() {
                match inverse_temperature(w, b.preparation.energy(w)) {
                    Some(x) => beta[k].push(x),
                    None => return Ok(Affinity::Undefined { bath: k, omega: w }),
                }
            }
        }
        let spread = |v: &[f64]| {
            let hi = v.iter().cloned().fold(f64::MIN, f64::max);
            let lo = v.iter().cloned().fold(f64::MAX, f64::min);
            (hi - lo) / hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
        };
        let [bl, br] = beta;
        if spread(&bl) <= tol && spread(&br) <= tol {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Ok(Affinity::Constant(mean(&br) - mean(&bl)))
        } else {
            Ok(Affinity::Varying {
                omegas: omegas.to_vec(),
                beta_left: bl,
                beta_right: br,
            })
        }
    }

    /// max over the grid of |G(ξ) − G(−ξ + iA)|.
    pub fn gc_residual(&self, xis: &[f64], affinity: f64) -> Result<f64> {
        let fwd: Vec<C64> = xis.iter().map(|&x| C64::new(x, 0.0)).collect();
        let rev: Vec<C64> = xis.iter().map(|&x| C64::new(-x, affinity)).collect();
        let a = self.cgf_many(&fwd)?;
        let b = self.cgf_many(&rev)?;
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
    }
}

/// Outcome of [`TransportModel::affinity`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Affinity {
    Constant(f64),
    Varying {
        omegas: Vec<f64>,
        beta_left: Vec<f64>,
        beta_right: Vec<f64>,
    },
    /// 2E/ω ≤ 1 for this bath at this frequency.
    Undefined {
        bath: usize,
        omega: f64,
    },
}

impl Affinity {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Constant(a) => Some(*a),
            _ => None,
        }
    }
}

fn rates(nl: f64, nr: f64, w: f64) -> (f64, f64) {
    (nl * (nr + w), nr * (nl + w))
}

fn cgf_on(g: &Grid, xi: C64) -> Result<C64> {
    let i = C64::i();
    let mut acc = C64::new(0.0, 0.0);
    let mut phase = 0.0_f64;
    for k in 0..g.nodes.len() {
        let w = g.nodes[k];
        let (a, b) = rates(g.nl[k], g.nr[k], w);
        let d = 2.0 * g.nl[k] * g.nr[k] + w * (g.nl[k] + g.nr[k]);
        let fwd = (i * xi * w).exp();
        let bwd = (-i * xi * w).exp();
        let x = g.trans[k] * (d - a * fwd - b * bwd);
        let z = 1.0 + x;
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Tolerance(format!(
                "counting-field integrand overflows at omega = {w}, xi = {xi}"
            )));
        }
        // Follow the phase continuously and refuse to cross the cut.
        let arg = z.arg();
        let mut unwrapped = arg;
        while unwrapped - phase > PI {
            unwrapped -= 2.0 * PI;
        }
        while unwrapped - phase < -PI {
            unwrapped += 2.0 * PI;
        }
        if unwrapped.abs() >= PI {
            return Err(Error::Branch { omega: w, xi });
        }
        phase = unwrapped;
        let log = if x.norm() < 1e-8 {
            // ln(1 + x) without cancellation for small x.
            x - 0.5 * x * x + x * x * x / 3.0
        } else {
            C64::new(z.norm().ln(), unwrapped)
        };
        acc += g.weights[k] * log;
    }
    Ok(-acc / (2.0 * PI))
}

/// Frequency beyond which the transport integrands are negligible.
fn band_edge(scenario: &Scenario) -> f64 {
    let baths = scenario.baths();
    let ends: Vec<f64> = baths.iter().filter_map(|b| b.spectral.support_end()).collect();
    if !ends.is_empty() {
        return ends.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    let sus = scenario.susceptibility();
    // ω times the largest transport integrand, which bounds the tail.
    let envelope = |w: f64| {
        let f2 = sus.eval_unchecked(w).norm_sqr();
        let t = PI * PI * baths[0].spectral.gamma_over_omega(w) * baths[1].spectral.gamma_over_omega(w) * f2 * w * w;
        let nl = baths[0].preparation.excess_energy(w);
        let nr = baths[1].preparation.excess_energy(w);
        let noise = 2.0 * nl * nr + w * (nl + nr);
        t * (noise + w * (nl - nr).abs() + t * w * w * (nl - nr).powi(2)) * w
    };
    let mut w = sus.scan_max();
    while envelope(w) > 1e-17 && w < 1e6 {
        w *= 1.25;
    }
    w
}

fn build_grid(scenario: &Scenario, edges: &[f64], xi_limit: f64) -> Grid {
    let mut fine = Vec::with_capacity(edges.len());
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let pieces = ((b - a) * xi_limit / PHASE_PER_PANEL).ceil().max(1.0) as usize;
        for j in 0..pieces {
            fine.push(a + (b - a) * j as f64 / pieces as f64);
        }
    }
    fine.push(*edges.last().expect("band has edges"));
    let rule = CompositeRule::gauss_legendre(&fine, ORDER);
    let baths = scenario.baths();
    let sus = scenario.susceptibility();
    let n = rule.nodes.len();
    let mut g = Grid {
        nodes: rule.nodes,
        weights: rule.weights,
        trans: Vec::with_capacity(n),
        el: Vec::with_capacity(n),
        er: Vec::with_capacity(n),
        nl: Vec::with_capacity(n),
        nr: Vec::with_capacity(n),
    };
    for k in 0..n {
        let w = g.nodes[k];
        let f2 = sus.eval_unchecked(w).norm_sqr();
        let (l, r) = (&baths[0], &baths[1]);
        g.trans
            .push(PI * PI * l.spectral.gamma_over_omega(w) * r.spectral.gamma_over_omega(w) * f2);
        g.el.push(l.preparation.energy(w));
        g.er.push(r.preparation.energy(w));
        g.nl.push(l.preparation.excess_energy(w));
        g.nr.push(r.preparation.excess_energy(w));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preparations::BathPreparation;
    use crate::scenario::Bath;
    use crate::spectral::SpectralDensity;

    fn model(tl: f64, tr: f64) -> TransportModel {
        TransportModel::new(&Scenario::drude_thermal_pair(1.0, 0.05, 10.0, tl, tr).unwrap()).unwrap()
    }

    #[test]
    fn requires_two_baths() {
        let spec = SpectralDensity::drude_ohmic(0.05, 10.0).unwrap();
        let sc = Scenario::new(1.0, vec![Bath::new(spec, BathPreparation::thermal(1.0).unwrap())]).unwrap();
        let err = TransportModel::new(&sc).unwrap_err();
        assert!(err.to_string().contains("transport requires exactly two baths"));
    }

    #[test]
    fn equal_temperatures_carry_no_current() {
        let m = model(1.3, 1.3);
        assert!(m.steady_current().abs() < 1e-14);
        assert!(m.cgf(C64::new(0.0, 0.0)).unwrap().norm() < 1e-16);
    }

    #[test]
    fn affinity_of_thermal_pair() {
        let m = model(2.0, 1.0);
        let omegas: Vec<f64> = (1..100).map(|k| 0.05 * k as f64).collect();
        let a = m.affinity(&omegas, 1e-9).unwrap().value().unwrap();
        assert!((a - 0.5).abs() < 1e-9, "{a}");
        assert_eq!(model(1.0, 1.0).affinity(&omegas, 1e-9).unwrap().value(), Some(0.0));
    }

    #[test]
    fn excess_energy_matches_subtraction() {
        let p = BathPreparation::thermal(0.7).unwrap();
        for &w in &[1e-6, 0.1, 1.0, 5.0] {
            assert!((p.excess_energy(w) - (p.energy(w) - 0.5 * w)).abs() < 1e-12);
        }
    }
}
