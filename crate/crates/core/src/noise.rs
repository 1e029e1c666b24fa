//! Fluctuating forces exerted by each bath on the central oscillator.
//!
//! For bath α the unperturbed force is η(t) = Σ_ν λ_ν(Q_ν cos ω_νt + P_ν sin ω_νt/ω_ν);
//! in the continuum
//!
//! ⟨η(t)⟩ = ∫√(ωγ)X_Q cos ωt + √(γ/ω)X_P sin ωt dω,
//! S(t,s) = ∫(γ/ω)[E cos ω(t−s) + ½(a − c)cos ω(t+s) + b sin ω(t+s)]dω + σ⁽²⁾ part,
//!
//! with (a, b, c) = (ω²σ_QQ, ωσ_QP, σ_PP). S is the symmetrized connected
//! correlation ½⟨{δη(t), δη(s)}⟩. Including the initial slip −K(t)Q(0) adds
//! Σ_QQ(0)K(t)K(s).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::oscillatory::FourierTable;
use crate::preparations::BathPreparation;
use crate::quadrature::CompositeRule;
use crate::scenario::Scenario;
use crate::spectral::SpectralDensity;

/// Band edge for densities without compact support, relative to their
/// scale. Integrands decaying like 1/ω leave a truncation error of order
/// 1/(Wτ), so the edge is pushed far out; panels grow geometrically.
const FAR_EDGE: f64 = 1e11;

#[derive(Debug, Clone, Copy)]
pub struct NoiseOptions {
    pub tol: f64,
    pub max_panels: usize,
    /// Largest number of kernel evaluations for the σ⁽²⁾ double integral.
    pub cross_budget: usize,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_panels: 100_000,
            cross_budget: 10_000_000,
        }
    }
}

fn band(spec: &SpectralDensity, prep: Option<&BathPreparation>) -> Vec<f64> {
    let top = spec.support_end().unwrap_or(FAR_EDGE * spec.scale());
    let mut pts = vec![0.0];
    let mut x = spec.scale() / 64.0;
    while x < top {
        pts.push(x);
        x *= if x < 4.0 * spec.scale() { 1.25 } else { 2.0 };
    }
    pts.push(top);
    pts.extend(spec.breakpoints());
    if let Some(p) = prep {
        pts.extend(p.breakpoints());
    }
    pts.retain(|w| (0.0..=top).contains(w));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// K(t) = ∫₀^∞ (γ(ω)/ω) cos ωt dω.
pub fn friction_kernel(spec: &SpectralDensity, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    if spec.is_zero() {
        return Ok(0.0);
    }
    let s = spec.clone();
    let table = FourierTable::build(move |w| [s.gamma_over_omega(w)], &band(spec, None), [1e-13], 100_000)?;
    Ok(table.transform(t)[0].re)
}

/// The force statistics of one bath.
#[derive(Debug, Clone)]
pub struct NoiseKernel {
    bath: usize,
    spectral: SpectralDensity,
    preparation: BathPreparation,
    /// Channels: (γ/ω)E, (γ/ω)(a − c)/2, (γ/ω)b, √(ωγ)X_Q, √(γ/ω)X_P, γ/ω.
    table: FourierTable<6>,
    /// Whether ∫(γ/ω)E dω converges, i.e. whether S(t,t) is finite.
    finite_variance: bool,
    opts: NoiseOptions,
}

impl NoiseKernel {
    pub fn new(scenario: &Scenario, bath: usize) -> Result<Self> {
        Self::with_options(scenario, bath, NoiseOptions::default())
    }

    pub fn with_options(scenario: &Scenario, bath: usize, opts: NoiseOptions) -> Result<Self> {
        let b = scenario
            .baths()
            .get(bath)
            .ok_or_else(|| Error::Domain(format!("no bath with index {bath}")))?;
        let (spec, prep) = (b.spectral.clone(), b.preparation.clone());
        let (s, p) = (spec.clone(), prep.clone());
        let table = FourierTable::build(
            move |w| {
                let g = s.gamma_over_omega(w);
                let [a, bb, c] = p.scaled_moments(w);
                let [xq, xp] = p.mean(w);
                let e = if w == 0.0 { p.energy(w) } else { 0.5 * (a + c) };
                [g * e, 0.5 * g * (a - c), g * bb, w * g.sqrt() * xq, g.sqrt() * xp, g]
            },
            &band(&spec, Some(&prep)),
            [opts.tol; 6],
            opts.max_panels,
        )?;
        let finite_variance = spec.support_end().is_some() || {
            // (γ/ω)E ~ c/ω at large ω makes the variance diverge.
            let w = 1e6 * spec.scale();
            w * spec.gamma_over_omega(w) * prep.energy(w) < 1e-12
        };
        Ok(Self {
            bath,
            spectral: spec,
            preparation: prep,
            table,
            finite_variance,
            opts,
        })
    }

    pub fn bath(&self) -> usize {
        self.bath
    }

    pub fn friction_kernel(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.table.transform(t)[5].re)
    }

    /// ⟨η(t)⟩.
    pub fn mean(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if !self.preparation.has_means() {
            return Ok(0.0);
        }
        let v = self.table.transform(t);
        Ok(v[3].re + v[4].im)
    }

    /// ∫(γ/ω)E cos ωτ dω, the long-time limit of S(t, t + τ).
    pub fn stationary_correlation(&self, tau: f64) -> Result<f64> {
        if tau == 0.0 && !self.finite_variance {
            return Err(Error::Domain(
                "equal-time noise variance diverges for this spectral density".into(),
            ));
        }
        Ok(self.table.transform(tau)[0].re)
    }

    /// S(t, s) = ½⟨{δη(t), δη(s)}⟩.
    pub fn correlation(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t)?;
        check_time(s)?;
        let mut value = self.stationary_correlation(t - s)?;
        let plus = self.table.transform(t + s);
        value += plus[1].re + plus[2].im;
        if self.preparation.cross.is_some() {
            value += self.cross_part(t, s)?;
        }
        Ok(value)
    }

    fn cross_part(&self, t: f64, s: f64) -> Result<f64> {
        let kernel = self.preparation.cross.as_ref().expect("checked by caller");
        let (lo, hi) = kernel.support;
        let top = t.max(s);
        let mut width = (hi - lo) / 4.0;
        if top > 0.0 {
            width = width.min(PI / (2.0 * top));
        }
        let n_panels = ((hi - lo) / width).ceil() as usize;
        let edges: Vec<f64> = (0..=n_panels)
            .map(|k| lo + (hi - lo) * k as f64 / n_panels as f64)
            .collect();
        let rule = CompositeRule::gauss_legendre(&edges, 8);
        let n = rule.len();
        if n.saturating_mul(n) > self.opts.cross_budget {
            return Err(Error::Budget(format!(
                "cross-kernel noise integral needs {} evaluations, budget {}",
                n * n,
                self.opts.cross_budget
            )));
        }
        let row = |w: f64, time: f64| {
            let l = (w * self.spectral.gamma_over_omega(w) * w).sqrt();
            [l * (w * time).cos(), l * (w * time).sin() / w]
        };
        let rt: Vec<[f64; 2]> = rule.nodes.iter().map(|&w| row(w, t)).collect();
        let rs: Vec<[f64; 2]> = rule.nodes.iter().map(|&w| row(w, s)).collect();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let m = kernel.eval(rule.nodes[i], rule.nodes[j]);
                let (x, y) = (rt[i], rs[j]);
                let v = x[0] * (m[0][0] * y[0] + m[0][1] * y[1]) + x[1] * (m[1][0] * y[0] + m[1][1] * y[1]);
                // Symmetrize over the order of the two times.
                let (x2, y2) = (rs[i], rt[j]);
                let v2 = x2[0] * (m[0][0] * y2[0] + m[0][1] * y2[1]) + x2[1] * (m[1][0] * y2[0] + m[1][1] * y2[1]);
                total += rule.weights[i] * rule.weights[j] * 0.5 * (v + v2);
            }
        }
        Ok(total)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// ⟨η_α(t)⟩.
pub fn noise_mean(kernel: &NoiseKernel, t: f64) -> Result<f64> {
    kernel.mean(t)
}

/// S_{η_αη_β}(t, s); baths are prepared independently, so different baths
/// are uncorrelated.
pub fn noise_correlation(alpha: &NoiseKernel, beta: &NoiseKernel, t: f64, s: f64) -> Result<f64> {
    if alpha.bath() != beta.bath() {
        check_time(t)?;
        check_time(s)?;
        return Ok(0.0);
    }
    alpha.correlation(t, s)
}

/// S_{ξ_αξ_β}(t, s) = S_{η_αη_β}(t, s) + Σ_QQ(0)K_α(t)K_β(s).
pub fn slip_correlation(alpha: &NoiseKernel, beta: &NoiseKernel, sigma_qq0: f64, t: f64, s: f64) -> Result<f64> {
    if !(sigma_qq0 >= 0.0) {
        return Err(Error::Domain(format!(
            "position variance must be >= 0, got {sigma_qq0}"
        )));
    }
    let base = noise_correlation(alpha, beta, t, s)?;
    if sigma_qq0 == 0.0 {
        return Ok(base);
    }
    Ok(base + sigma_qq0 * alpha.friction_kernel(t)? * beta.friction_kernel(s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preparations::{PreparationLabel, Profile};
    use crate::scenario::Bath;

    #[test]
    fn drude_kernel_is_exponential() {
        let spec = SpectralDensity::drude_ohmic(0.05, 10.0).unwrap();
        for &t in &[0.0, 0.01, 0.1, 0.5, 2.0] {
            let k = friction_kernel(&spec, t).unwrap();
            let exact = 0.05 * 10.0 * (-10.0 * t).exp();
            assert!((k - exact).abs() < 1e-10, "t = {t}: {k} vs {exact}");
        }
        let zero = SpectralDensity::drude_ohmic(0.0, 10.0).unwrap();
        assert_eq!(friction_kernel(&zero, 1.0).unwrap(), 0.0);
        assert!(friction_kernel(&spec, -1.0).is_err());
    }

    #[test]
    fn thermal_noise_is_unbiased_and_homogeneous() {
        let sc = Scenario::drude_thermal_pair(1.0, 0.05, 10.0, 2.0, 1.0).unwrap();
        let k = NoiseKernel::new(&sc, 0).unwrap();
        assert_eq!(k.mean(3.0).unwrap(), 0.0);
        let a = k.correlation(5.0, 7.5).unwrap();
        let b = k.correlation(105.0, 107.5).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!(k.correlation(4.0, 4.0).is_err());
        let other = NoiseKernel::new(&sc, 1).unwrap();
        assert_eq!(noise_correlation(&k, &other, 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn displaced_bath_force_decays() {
        let spec = SpectralDensity::drude_ohmic(0.05, 10.0).unwrap();
        let prep = BathPreparation::displaced_thermal(1.0, Profile::gaussian(1.0, 1.0, 0.2), Profile::Zero).unwrap();
        assert_eq!(prep.label, PreparationLabel::DisplacedThermal);
        let sc = Scenario::new(1.0, vec![Bath::new(spec, prep)]).unwrap();
        let k = NoiseKernel::new(&sc, 0).unwrap();
        assert!(k.mean(0.0).unwrap() > 0.01);
        assert!(k.mean(200.0).unwrap().abs() < 1e-5);
    }
}
