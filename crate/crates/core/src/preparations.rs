//! Gaussian initial states of the baths in the thermodynamic limit.
//!
//! A preparation is described per frequency: the mean displacement
//! X(ω) = (X_Q, X_P), the diagonal second moments σ⁽¹⁾(ω) and an optional
//! off-diagonal kernel σ⁽²⁾(ω₁, ω₂) coupling different modes of the same
//! bath.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal energy E_th(ω, T) = (ω/2)·coth(ω/2T), with the limit T at ω = 0.
pub fn thermal_energy(omega: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be > 0, got {temperature}")));
    }
    if omega < 0.0 || omega.is_nan() {
        return Err(Error::Domain(format!("thermal energy needs omega >= 0, got {omega}")));
    }
    Ok(thermal_energy_unchecked(omega, temperature))
}

pub(crate) fn thermal_energy_unchecked(omega: f64, temperature: f64) -> f64 {
    let x = omega / (2.0 * temperature);
    if x < 1e-4 {
        // x·coth(x) = 1 + x²/3 − x⁴/45 + …
        temperature * (1.0 + x * x / 3.0 - x.powi(4) / 45.0)
    } else {
        0.5 * omega / x.tanh()
    }
}

/// Bose occupation 1/(e^{ω/T} − 1).
pub fn bose(omega: f64, temperature: f64) -> f64 {
    1.0 / (omega / temperature).exp_m1()
}

/// A real function of frequency used for means, squeeze factors and
/// custom kernels.
#[derive(Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// amplitude·exp(−(ω − center)²/(2·width²)).
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Linear interpolation with zero extension outside the grid.
    Table {
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    #[serde(skip)]
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant { value } => write!(f, "Constant({value})"),
            Self::Gaussian {
                amplitude,
                center,
                width,
            } => write!(f, "Gaussian({amplitude}, {center}, {width})"),
            Self::Table { grid, .. } => write!(f, "Table({} points)", grid.len()),
            Self::Function(_) => write!(f, "Function"),
        }
    }
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn gaussian(amplitude: f64, center: f64, width: f64) -> Self {
        Self::Gaussian {
            amplitude,
            center,
            width,
        }
    }

    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, omega: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { value } => *value,
            Self::Gaussian {
                amplitude,
                center,
                width,
            } => amplitude * (-0.5 * ((omega - center) / width).powi(2)).exp(),
            Self::Table { grid, values } => {
                let n = grid.len();
                if n == 0 || omega < grid[0] || omega > grid[n - 1] {
                    return 0.0;
                }
                let k = grid.partition_point(|g| *g <= omega).clamp(1, n - 1);
                let t = (omega - grid[k - 1]) / (grid[k] - grid[k - 1]);
                values[k - 1] * (1.0 - t) + values[k] * t
            }
            Self::Function(f) => f(omega),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Constant { value } => *value == 0.0,
            Self::Gaussian { amplitude, .. } => *amplitude == 0.0,
            Self::Table { values, .. } => values.iter().all(|v| *v == 0.0),
            Self::Function(_) => false,
        }
    }

    /// Table nodes, Gaussian centre and ±6σ edges: points quadrature
    /// panels should contain.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Table { grid, .. } => grid.clone(),
            Self::Gaussian { center, width, .. } => (-6..=6).map(|k| center + k as f64 * width).collect(),
            _ => Vec::new(),
        }
    }

    /// Interval outside which the profile vanishes, if bounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Zero => Some((0.0, 0.0)),
            Self::Table { grid, .. } => Some((grid[0], *grid.last()?)),
            _ => None,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        match self {
            Self::Table { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(Error::InvalidPreparation(format!(
                        "{name}: table needs matching grid/value arrays of length >= 2"
                    )));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidPreparation(format!(
                        "{name}: table grid must be strictly increasing"
                    )));
                }
                if grid.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPreparation(format!(
                        "{name}: table entries must be finite"
                    )));
                }
            }
            Self::Gaussian { width, .. } if !(*width > 0.0) => {
                return Err(Error::InvalidPreparation(format!("{name}: Gaussian width must be > 0")));
            }
            Self::Constant { value } if !value.is_finite() => {
                return Err(Error::InvalidPreparation(format!("{name}: constant must be finite")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Diagonal per-mode second moments σ⁽¹⁾.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SecondMoments {
    /// ω²σ_QQ = σ_PP = E_th(ω, T), σ_QP = 0.
    Thermal { temperature: f64 },
    /// Thermal moments squeezed per mode: σ_QQ → e^{2r}σ_QQ, σ_PP → e^{−2r}σ_PP.
    SqueezedThermal { temperature: f64, squeeze: Profile },
    /// Thermal energy distribution carried by correlated quadratures:
    /// ω²σ_QQ = σ_PP = E_th and ω·σ_QP = f·sech(ω/2T)·E_th, where
    /// |f| ≤ 1 is the fraction of the largest correlation the uncertainty
    /// relation allows.
    CorrelatedThermal { temperature: f64, correlation: f64 },
    /// Arbitrary tabulated kernels.
    Custom { qq: Profile, qp: Profile, pp: Profile },
}

/// Second moments of one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMoments {
    pub qq: f64,
    pub qp: f64,
    pub pp: f64,
}

impl ModeMoments {
    pub fn determinant(&self) -> f64 {
        self.qq * self.pp - self.qp * self.qp
    }
}

/// Which family a preparation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreparationLabel {
    Thermal,
    SqueezedThermal,
    DisplacedThermal,
    Custom,
}

/// Off-diagonal kernel σ⁽²⁾(ω₁, ω₂) as a 2×2 matrix [[QQ, QP], [PQ, PP]]
/// with support restricted to a box.
#[derive(Clone)]
pub struct CrossKernel {
    pub support: (f64, f64),
    kernel: Arc<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>,
}

impl fmt::Debug for CrossKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CrossKernel(support = {:?})", self.support)
    }
}

impl CrossKernel {
    pub fn new(support: (f64, f64), kernel: impl Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Self {
            support,
            kernel: Arc::new(kernel),
        }
    }

    /// Rank-one kernel g(ω₁)g(ω₂)·M on [lo, hi]².
    pub fn separable(support: (f64, f64), shape: Profile, matrix: [[f64; 2]; 2]) -> Self {
        let (lo, hi) = support;
        Self::new(support, move |a, b| {
            if a < lo || a > hi || b < lo || b > hi {
                return [[0.0; 2]; 2];
            }
            let s = shape.eval(a) * shape.eval(b);
            [
                [s * matrix[0][0], s * matrix[0][1]],
                [s * matrix[1][0], s * matrix[1][1]],
            ]
        })
    }

    pub fn eval(&self, w1: f64, w2: f64) -> [[f64; 2]; 2] {
        (self.kernel)(w1, w2)
    }
}

/// Serializable description of σ⁽²⁾: a separable kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossKernelSpec {
    pub support: (f64, f64),
    pub shape: Profile,
    pub matrix: [[f64; 2]; 2],
}

/// Frequency-resolved Gaussian initial state of one bath.
#[derive(Debug, Clone)]
pub struct BathPreparation {
    pub label: PreparationLabel,
    pub mean_q: Profile,
    pub mean_p: Profile,
    pub moments: SecondMoments,
    pub cross: Option<CrossKernel>,
}

/// Serializable preparation descriptor used by configuration files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum PreparationSpec {
    Thermal {
        temperature: f64,
    },
    SqueezedThermal {
        temperature: f64,
        squeeze: f64,
    },
    DisplacedThermal {
        temperature: f64,
        #[serde(default)]
        mean_q: Profile,
        #[serde(default)]
        mean_p: Profile,
    },
    CorrelatedThermal {
        temperature: f64,
        correlation: f64,
    },
    Custom {
        qq: Profile,
        #[serde(default)]
        qp: Profile,
        pp: Profile,
        #[serde(default)]
        mean_q: Profile,
        #[serde(default)]
        mean_p: Profile,
        #[serde(default)]
        cross: Option<CrossKernelSpec>,
    },
}

impl PreparationSpec {
    /// Builds and validates the preparation.
    pub fn build(&self) -> Result<BathPreparation> {
        match self {
            Self::Thermal { temperature } => BathPreparation::thermal(*temperature),
            Self::SqueezedThermal { temperature, squeeze } => {
                BathPreparation::squeezed_thermal(*temperature, Profile::constant(*squeeze))
            }
            Self::DisplacedThermal {
                temperature,
                mean_q,
                mean_p,
            } => BathPreparation::displaced_thermal(*temperature, mean_q.clone(), mean_p.clone()),
            Self::CorrelatedThermal {
                temperature,
                correlation,
            } => BathPreparation::correlated_thermal(*temperature, *correlation),
            Self::Custom {
                qq,
                qp,
                pp,
                mean_q,
                mean_p,
                cross,
            } => {
                let mut p = BathPreparation::custom(qq.clone(), qp.clone(), pp.clone())?
                    .with_means(mean_q.clone(), mean_p.clone())?;
                if let Some(c) = cross {
                    p = p.with_cross(CrossKernel::separable(c.support, c.shape.clone(), c.matrix));
                }
                Ok(p)
            }
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPreparation(format!(
            "temperature must be finite and > 0, got {t}"
        )))
    }
}

impl BathPreparation {
    pub fn thermal(temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(Self {
            label: PreparationLabel::Thermal,
            mean_q: Profile::Zero,
            mean_p: Profile::Zero,
            moments: SecondMoments::Thermal { temperature },
            cross: None,
        })
    }

    pub fn squeezed_thermal(temperature: f64, squeeze: Profile) -> Result<Self> {
        check_temperature(temperature)?;
        squeeze.validate("squeeze")?;
        let p = Self {
            label: PreparationLabel::SqueezedThermal,
            mean_q: Profile::Zero,
            mean_p: Profile::Zero,
            moments: SecondMoments::SqueezedThermal { temperature, squeeze },
            cross: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn displaced_thermal(temperature: f64, mean_q: Profile, mean_p: Profile) -> Result<Self> {
        let mut p = Self::thermal(temperature)?.with_means(mean_q, mean_p)?;
        p.label = PreparationLabel::DisplacedThermal;
        Ok(p)
    }

    /// Thermal energy distribution with correlated quadratures; valid for
    /// |correlation| ≤ 1.
    pub fn correlated_thermal(temperature: f64, correlation: f64) -> Result<Self> {
        check_temperature(temperature)?;
        let p = Self {
            label: PreparationLabel::Custom,
            mean_q: Profile::Zero,
            mean_p: Profile::Zero,
            moments: SecondMoments::CorrelatedThermal {
                temperature,
                correlation,
            },
            cross: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn custom(qq: Profile, qp: Profile, pp: Profile) -> Result<Self> {
        qq.validate("sigma_qq")?;
        qp.validate("sigma_qp")?;
        pp.validate("sigma_pp")?;
        let p = Self {
            label: PreparationLabel::Custom,
            mean_q: Profile::Zero,
            mean_p: Profile::Zero,
            moments: SecondMoments::Custom { qq, qp, pp },
            cross: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_means(mut self, mean_q: Profile, mean_p: Profile) -> Result<Self> {
        mean_q.validate("mean_q")?;
        mean_p.validate("mean_p")?;
        self.mean_q = mean_q;
        self.mean_p = mean_p;
        Ok(self)
    }

    pub fn with_cross(mut self, cross: CrossKernel) -> Self {
        self.cross = Some(cross);
        self
    }

    /// σ⁽¹⁾(ω). For thermal-type moments σ_QQ diverges like T/ω² at ω → 0.
    pub fn sigma1(&self, omega: f64) -> ModeMoments {
        let w2 = omega * omega;
        match &self.moments {
            SecondMoments::Thermal { temperature } => {
                let e = thermal_energy_unchecked(omega, *temperature);
                ModeMoments {
                    qq: e / w2,
                    qp: 0.0,
                    pp: e,
                }
            }
            SecondMoments::SqueezedThermal { temperature, squeeze } => {
                let e = thermal_energy_unchecked(omega, *temperature);
                let r = squeeze.eval(omega);
                ModeMoments {
                    qq: (2.0 * r).exp() * e / w2,
                    qp: 0.0,
                    pp: (-2.0 * r).exp() * e,
                }
            }
            SecondMoments::CorrelatedThermal {
                temperature,
                correlation,
            } => {
                let e = thermal_energy_unchecked(omega, *temperature);
                ModeMoments {
                    qq: e / w2,
                    qp: correlation * correlated_fraction(omega, *temperature) * e / omega,
                    pp: e,
                }
            }
            SecondMoments::Custom { qq, qp, pp } => ModeMoments {
                qq: qq.eval(omega),
                qp: qp.eval(omega),
                pp: pp.eval(omega),
            },
        }
    }

    /// The weighted combinations (ω²σ_QQ, ωσ_QP, σ_PP), finite at ω = 0
    /// for the thermal-type families.
    pub fn scaled_moments(&self, omega: f64) -> [f64; 3] {
        match &self.moments {
            SecondMoments::Thermal { temperature } => {
                let e = thermal_energy_unchecked(omega, *temperature);
                [e, 0.0, e]
            }
            SecondMoments::SqueezedThermal { temperature, squeeze } => {
                let e = thermal_energy_unchecked(omega, *temperature);
                let r = squeeze.eval(omega);
                [(2.0 * r).exp() * e, 0.0, (-2.0 * r).exp() * e]
            }
            SecondMoments::CorrelatedThermal {
                temperature,
                correlation,
            } => {
                let e = thermal_energy_unchecked(omega, *temperature);
                [e, correlation * correlated_fraction(omega, *temperature) * e, e]
            }
            SecondMoments::Custom { qq, qp, pp } => {
                [omega * omega * qq.eval(omega), omega * qp.eval(omega), pp.eval(omega)]
            }
        }
    }

    /// Frequency-resolved energy E(ω) = ½(ω²σ_QQ + σ_PP).
    pub fn energy_distribution(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 || omega.is_nan() {
            return Err(Error::Domain(format!("energy needs omega >= 0, got {omega}")));
        }
        let m = self.sigma1(omega.max(f64::MIN_POSITIVE));
        if self.in_support(omega) && omega > 0.0 && m.determinant() < 0.25 * (1.0 - 1e-12) {
            return Err(Error::InvalidPreparation(format!(
                "Heisenberg bound violated at omega = {omega}: det sigma = {}",
                m.determinant()
            )));
        }
        Ok(self.energy(omega))
    }

    /// E(ω) without the positivity check.
    pub fn energy(&self, omega: f64) -> f64 {
        match &self.moments {
            SecondMoments::Thermal { temperature } | SecondMoments::CorrelatedThermal { temperature, .. } => {
                thermal_energy_unchecked(omega, *temperature)
            }
            SecondMoments::SqueezedThermal { temperature, squeeze } => {
                (2.0 * squeeze.eval(omega)).cosh() * thermal_energy_unchecked(omega, *temperature)
            }
            SecondMoments::Custom { .. } => {
                let s = self.scaled_moments(omega);
                0.5 * (s[0] + s[2])
            }
        }
    }

    /// E(ω) − ω/2, evaluated without cancellation for the thermal-type
    /// families so that exponentially small occupations stay accurate.
    pub fn excess_energy(&self, omega: f64) -> f64 {
        let thermal_excess = |t: f64| {
            if omega == 0.0 {
                t
            } else {
                omega / (omega / t).exp_m1()
            }
        };
        match &self.moments {
            SecondMoments::Thermal { temperature } | SecondMoments::CorrelatedThermal { temperature, .. } => {
                thermal_excess(*temperature)
            }
            SecondMoments::SqueezedThermal { temperature, squeeze } => {
                let c = (2.0 * squeeze.eval(omega)).cosh();
                c * thermal_excess(*temperature) + (c - 1.0) * 0.5 * omega
            }
            SecondMoments::Custom { .. } => self.energy(omega) - 0.5 * omega,
        }
    }

    /// Mean displacement (X_Q, X_P) at ω.
    pub fn mean(&self, omega: f64) -> [f64; 2] {
        [self.mean_q.eval(omega), self.mean_p.eval(omega)]
    }

    pub fn has_means(&self) -> bool {
        !(self.mean_q.is_zero() && self.mean_p.is_zero())
    }

    /// Thermal temperature, if the second moments are exactly thermal.
    pub fn temperature(&self) -> Option<f64> {
        match &self.moments {
            SecondMoments::Thermal { temperature } => Some(*temperature),
            _ => None,
        }
    }

    fn in_support(&self, omega: f64) -> bool {
        match &self.moments {
            SecondMoments::Custom { qq, qp: _, pp } => {
                let inside = |p: &Profile| match p.support() {
                    Some((a, b)) => omega >= a && omega <= b,
                    None => true,
                };
                inside(qq) && inside(pp)
            }
            _ => true,
        }
    }

    /// Kinks and support edges of every profile in the preparation.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = self.mean_q.breakpoints();
        pts.extend(self.mean_p.breakpoints());
        match &self.moments {
            SecondMoments::Custom { qq, qp, pp } => {
                for p in [qq, qp, pp] {
                    pts.extend(p.breakpoints());
                }
            }
            SecondMoments::SqueezedThermal { squeeze, .. } => pts.extend(squeeze.breakpoints()),
            _ => {}
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Frequencies at which positivity is checked: table nodes and their
    /// midpoints inside the support, plus a logarithmic sweep.
    pub fn validation_grid(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = (0..=400).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 400.0)).collect();
        let mut nodes = Vec::new();
        match &self.moments {
            SecondMoments::Custom { qq, qp, pp } => {
                for p in [qq, qp, pp] {
                    nodes.extend(p.breakpoints());
                }
            }
            SecondMoments::SqueezedThermal { squeeze, .. } => nodes.extend(squeeze.breakpoints()),
            _ => {}
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        for w in nodes.windows(2) {
            pts.push(0.5 * (w[0] + w[1]));
        }
        pts.extend(nodes);
        pts.retain(|&w| w > 0.0 && self.in_support(w));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Heisenberg positivity σ_QQσ_PP − σ_QP² ≥ 1/4 on the validation grid.
    pub fn validate(&self) -> Result<()> {
        if let SecondMoments::Thermal { temperature }
        | SecondMoments::SqueezedThermal { temperature, .. }
        | SecondMoments::CorrelatedThermal { temperature, .. } = &self.moments
        {
            check_temperature(*temperature)?;
        }
        for w in self.validation_grid() {
            let s = self.scaled_moments(w);
            // ω²·det = (ω²σ_QQ)σ_PP − (ωσ_QP)² ≥ ω²/4
            let det_scaled = s[0] * s[2] - s[1] * s[1];
            if !(det_scaled.is_finite() && det_scaled >= 0.25 * w * w * (1.0 - 1e-12)) {
                return Err(Error::InvalidPreparation(format!(
                    "Heisenberg bound violated at omega = {w}: det sigma = {}",
                    det_scaled / (w * w)
                )));
            }
        }
        Ok(())
    }
}

fn correlated_fraction(omega: f64, temperature: f64) -> f64 {
    1.0 / (omega / (2.0 * temperature)).cosh()
}

/// Ground-state energy ω/2, the lower bound of E(ω) for σ_QP = 0.
pub fn zero_point(omega: f64) -> f64 {
    0.5 * omega
}

/// Frequency-resolved inverse temperature β(ω) = (2/ω)·arcoth(2E/ω);
/// `None` when 2E/ω ≤ 1.
pub fn inverse_temperature(omega: f64, energy: f64) -> Option<f64> {
    let x = 2.0 * energy / omega;
    if !(x > 1.0) || !x.is_finite() {
        return None;
    }
    // arcoth(x) = ½ ln((x+1)/(x−1)), written to keep accuracy for large x.
    Some((2.0 / omega) * 0.5 * (2.0 / (x - 1.0)).ln_1p())
}
