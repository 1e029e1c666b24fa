//! The central oscillator together with its baths.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preparations::{BathPreparation, PreparationSpec};
use crate::spectral::{PoleScanReport, SpectralDensity, Susceptibility};

/// One bath: its spectral density and initial preparation.
#[derive(Debug, Clone)]
pub struct Bath {
    pub spectral: SpectralDensity,
    pub preparation: BathPreparation,
}

impl Bath {
    pub fn new(spectral: SpectralDensity, preparation: BathPreparation) -> Self {
        Self { spectral, preparation }
    }
}

/// Central frequency Ω and an ordered list of baths. Every computation in
/// the crate takes its physical input from a `Scenario`.
#[derive(Debug, Clone)]
pub struct Scenario {
    omega0: f64,
    baths: Vec<Bath>,
    sus: Arc<Susceptibility>,
}

impl Scenario {
    pub fn new(omega0: f64, baths: Vec<Bath>) -> Result<Self> {
        for (k, b) in baths.iter().enumerate() {
            b.preparation
                .validate()
                .map_err(|e| Error::InvalidPreparation(format!("bath {k}: {e}")))?;
        }
        let sus = Susceptibility::new(omega0, baths.iter().map(|b| b.spectral.clone()).collect())?;
        Ok(Self {
            omega0,
            baths,
            sus: Arc::new(sus),
        })
    }

    /// Two Drude–Ohmic baths with equal coupling and cutoff in thermal
    /// states at temperatures `tl`, `tr`.
    pub fn drude_thermal_pair(omega0: f64, coupling: f64, cutoff: f64, tl: f64, tr: f64) -> Result<Self> {
        let spec = SpectralDensity::drude_ohmic(coupling, cutoff)?;
        Self::new(
            omega0,
            vec![
                Bath::new(spec.clone(), BathPreparation::thermal(tl)?),
                Bath::new(spec, BathPreparation::thermal(tr)?),
            ],
        )
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn baths(&self) -> &[Bath] {
        &self.baths
    }

    pub fn bath_count(&self) -> usize {
        self.baths.len()
    }

    pub fn susceptibility(&self) -> &Arc<Susceptibility> {
        &self.sus
    }

    pub fn pole_scan(&self) -> PoleScanReport {
        self.sus.pole_scan()
    }

    /// Fails with the scan candidates if F has undamped poles.
    pub fn require_pole_free(&self) -> Result<()> {
        let scan = self.pole_scan();
        if scan.passed {
            Ok(())
        } else {
            Err(Error::PoleScan(scan.candidates))
        }
    }

    /// Same baths with new preparations, in bath order.
    pub fn with_preparations(&self, preps: Vec<BathPreparation>) -> Result<Self> {
        if preps.len() != self.baths.len() {
            return Err(Error::Domain(format!(
                "expected {} preparations, got {}",
                self.baths.len(),
                preps.len()
            )));
        }
        let baths = self
            .baths
            .iter()
            .zip(preps)
            .map(|(b, p)| Bath::new(b.spectral.clone(), p))
            .collect();
        Ok(Self {
            omega0: self.omega0,
            baths,
            sus: self.sus.clone(),
        })
    }

    /// Σ_α γ_α(ω)E_α(ω).
    pub fn weighted_energy(&self, omega: f64) -> f64 {
        self.baths
            .iter()
            .map(|b| b.spectral.gamma_unchecked(omega) * b.preparation.energy(omega))
            .sum()
    }

    /// Breakpoints of all bath densities and preparation profiles.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .baths
            .iter()
            .flat_map(|b| {
                let mut v = b.spectral.breakpoints();
                v.extend(b.preparation.breakpoints());
                v
            })
            .filter(|w| *w > 0.0 && w.is_finite())
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

/// Serializable description of a bath.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BathSpec {
    pub spectral: SpectralDensity,
    pub preparation: PreparationSpec,
}

/// Serializable description of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub omega0: f64,
    pub baths: Vec<BathSpec>,
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::Domain(format!("omega0 must be > 0, got {}", self.omega0)));
        }
        let mut baths = Vec::with_capacity(self.baths.len());
        for (k, b) in self.baths.iter().enumerate() {
            b.spectral
                .validate()
                .map_err(|e| Error::InvalidSpectral(format!("bath {k}: {e}")))?;
            let prep = b
                .preparation
                .build()
                .map_err(|e| Error::InvalidPreparation(format!("bath {k}: {e}")))?;
            baths.push(Bath::new(b.spectral.clone(), prep));
        }
        Scenario::new(self.omega0, baths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trip() {
        let json = r#"{
            "omega0": 1.0,
            "baths": [
                {"spectral": {"kind": "drude_ohmic", "coupling": 0.05, "cutoff": 10.0},
                 "preparation": {"kind": "thermal", "temperature": 1.0}},
                {"spectral": {"kind": "drude_ohmic", "coupling": 0.05, "cutoff": 10.0},
                 "preparation": {"kind": "squeezed_thermal", "temperature": 1.0, "squeeze": 0.5}}
            ]
        }"#;
        let spec: ScenarioSpec = serde_json::from_str(json).unwrap();
        let sc = spec.build().unwrap();
        assert_eq!(sc.bath_count(), 2);
        assert!(sc.pole_scan().passed);
        let again: ScenarioSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again.baths.len(), 2);
    }

    #[test]
    fn negative_coupling_is_rejected() {
        let json = r#"{"omega0": 1.0, "baths": [
            {"spectral": {"kind": "drude_ohmic", "coupling": -0.05, "cutoff": 10.0},
             "preparation": {"kind": "thermal", "temperature": 1.0}}]}"#;
        let spec: ScenarioSpec = serde_json::from_str(json).unwrap();
        assert!(matches!(spec.build(), Err(Error::InvalidSpectral(_))));
    }
}
