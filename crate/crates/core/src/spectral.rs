//! Bath spectral densities, the susceptibility `F(z)` and the classical
//! response `u(t)` with its partial and full Fourier transforms.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillatory::FourierTable;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coupling-weighted bath mode density γ(ω).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// γ(ω) = (2/π)·κ·ω·ω_c²/(ω² + ω_c²).
    DrudeOhmic { coupling: f64, cutoff: f64 },
    /// Piecewise-linear γ on a strictly increasing grid, zero outside.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl SpectralDensity {
    pub fn drude_ohmic(coupling: f64, cutoff: f64) -> Result<Self> {
        let s = Self::DrudeOhmic { coupling, cutoff };
        s.validate()?;
        Ok(s)
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = Self::Tabulated { grid, values };
        s.validate()?;
        Ok(s)
    }

    /// Checks the parameter ranges; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::DrudeOhmic { coupling, cutoff } => {
                if !(coupling.is_finite() && *coupling >= 0.0) {
                    return Err(Error::InvalidSpectral(format!(
                        "coupling must be finite and >= 0, got {coupling}"
                    )));
                }
                if !(cutoff.is_finite() && *cutoff > 0.0) {
                    return Err(Error::InvalidSpectral(format!(
                        "cutoff must be finite and > 0, got {cutoff}"
                    )));
                }
            }
            Self::Tabulated { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(Error::InvalidSpectral(
                        "tabulated density needs matching grid/value arrays of length >= 2".into(),
                    ));
                }
                if grid[0] < 0.0 || grid.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSpectral("grid must be finite and >= 0".into()));
                }
                if let Some(k) = grid.windows(2).position(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidSpectral(format!(
                        "grid not strictly increasing at index {}",
                        k + 1
                    )));
                }
                if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidSpectral(format!(
                        "value at omega = {} must be finite and >= 0",
                        grid[k]
                    )));
                }
                if grid[0] == 0.0 && values[0] != 0.0 {
                    return Err(Error::InvalidSpectral(
                        "gamma(0) must vanish so that gamma/omega stays bounded".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// γ(ω) for ω ≥ 0.
    pub fn gamma(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 || omega.is_nan() {
            return Err(Error::Domain(format!("gamma needs omega >= 0, got {omega}")));
        }
        Ok(self.gamma_unchecked(omega))
    }

    pub(crate) fn gamma_unchecked(&self, omega: f64) -> f64 {
        match self {
            Self::DrudeOhmic { coupling, cutoff } => {
                if omega.is_infinite() {
                    return 0.0;
                }
                2.0 / PI * coupling * omega * cutoff * cutoff / (omega * omega + cutoff * cutoff)
            }
            Self::Tabulated { grid, values } => interpolate(grid, values, omega),
        }
    }

    /// γ(ω)/ω, finite at ω = 0.
    pub fn gamma_over_omega(&self, omega: f64) -> f64 {
        match self {
            Self::DrudeOhmic { coupling, cutoff } => {
                2.0 / PI * coupling * cutoff * cutoff / (omega * omega + cutoff * cutoff)
            }
            Self::Tabulated { grid, values } => {
                if omega > 0.0 {
                    interpolate(grid, values, omega) / omega
                } else if grid[0] == 0.0 {
                    (values[1] - values[0]) / (grid[1] - grid[0])
                } else {
                    0.0
                }
            }
        }
    }

    /// Counter-term integral ∫₀^∞ γ(ω)/ω dω, which equals the friction
    /// kernel at zero time.
    pub fn counter_term(&self) -> f64 {
        match self {
            Self::DrudeOhmic { coupling, cutoff } => coupling * cutoff,
            Self::Tabulated { grid, values } => grid
                .windows(2)
                .zip(values.windows(2))
                .map(|(x, y)| {
                    let c1 = (y[1] - y[0]) / (x[1] - x[0]);
                    let c0 = y[0] - c1 * x[0];
                    let log = if c0 == 0.0 { 0.0 } else { c0 * (x[1] / x[0]).ln() };
                    log + c1 * (x[1] - x[0])
                })
                .sum(),
        }
    }

    /// Characteristic frequency scale (cutoff or end of the table).
    pub fn scale(&self) -> f64 {
        match self {
            Self::DrudeOhmic { cutoff, .. } => *cutoff,
            Self::Tabulated { grid, .. } => *grid.last().expect("validated length"),
        }
    }

    /// Upper end of the support, if finite.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            Self::DrudeOhmic { .. } => None,
            Self::Tabulated { grid, .. } => grid.last().copied(),
        }
    }

    /// Kinks of γ that quadrature panels should respect.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::DrudeOhmic { .. } => Vec::new(),
            Self::Tabulated { grid, .. } => grid.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::DrudeOhmic { coupling, .. } => *coupling == 0.0,
            Self::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Continuation Γ(z) for Im z > 0, normalised so that Γ(i0⁺) = 0.
    ///
    /// The counter-term contribution is already subtracted, so the
    /// susceptibility denominator reads Ω² − z² + Σ Γ_α(z). On the real
    /// axis, Im Γ(ω + i0⁺) = −(π/2)·γ(ω).
    pub fn continuation(&self, z: Complex64) -> Result<Complex64> {
        if !(z.im > 0.0) {
            return Err(Error::Domain(format!("continuation needs Im z > 0, got {z}")));
        }
        Ok(self.continuation_unchecked(z))
    }

    /// Boundary value Γ(ω + i0⁺) for real ω.
    pub fn boundary_value(&self, omega: f64) -> Complex64 {
        let z = if omega < 0.0 {
            return self.boundary_value(-omega).conj();
        } else {
            Complex64::new(omega, 0.0)
        };
        match self {
            // On the real axis Im Γ = −(π/2)γ exactly; the log terms only
            // reproduce it up to rounding, which would hide undamped modes.
            Self::Tabulated { grid, values } => Complex64::new(
                self.continuation_unchecked(z).re,
                -0.5 * PI * interpolate(grid, values, omega),
            ),
            Self::DrudeOhmic { .. } => self.continuation_unchecked(z),
        }
    }

    fn continuation_unchecked(&self, z: Complex64) -> Complex64 {
        match self {
            Self::DrudeOhmic { coupling, cutoff } => coupling * cutoff * z / (z + I * cutoff),
            Self::Tabulated { grid, values } => tabulated_continuation(grid, values, z),
        }
    }
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if !(x >= grid[0] && x <= grid[n - 1]) {
        return 0.0;
    }
    let k = grid.partition_point(|g| *g <= x).clamp(1, n - 1);
    let (x0, x1) = (grid[k - 1], grid[k]);
    let t = (x - x0) / (x1 - x0);
    values[k - 1] * (1.0 - t) + values[k] * t
}

/// Closed-form integral of the piecewise-linear density against the kernel
/// z²/(ω′(z² − ω′²)) = 1/ω′ + ½[1/(z − ω′) − 1/(z + ω′)], with the log
/// terms grouped per node so that vanishing coefficients drop out.
fn tabulated_continuation(grid: &[f64], values: &[f64], z: Complex64) -> Complex64 {
    let n = grid.len();
    let seg = |k: usize| -> (f64, f64) {
        // Segment k spans [grid[k], grid[k+1]]; outside the table the line is 0.
        if k + 1 >= n {
            return (0.0, 0.0);
        }
        let c1 = (values[k + 1] - values[k]) / (grid[k + 1] - grid[k]);
        (values[k] - c1 * grid[k], c1)
    };
    let line = |(c0, c1): (f64, f64), w: Complex64| w * c1 + c0;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev = (0.0, 0.0);
    for (k, &x) in grid.iter().enumerate() {
        let cur = seg(k);
        let c0_jump = prev.0 - cur.0;
        if c0_jump != 0.0 && x > 0.0 {
            acc += c0_jump * x.ln();
        }
        let a = line(cur, z) - line(prev, z);
        if a.norm() > 0.0 && z != Complex64::new(x, 0.0) {
            let d = z - x;
            let d = if d.im == 0.0 { Complex64::new(d.re, 0.0) } else { d };
            acc += 0.5 * a * d.ln();
        }
        let b = line(prev, -z) - line(cur, -z);
        if b.norm() > 0.0 {
            acc -= 0.5 * b * (z + x).ln();
        }
        prev = cur;
    }
    acc
}

/// Report of the real-axis pole scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoleScanReport {
    pub passed: bool,
    pub candidates: Vec<f64>,
    pub min_denominator: f64,
    pub min_location: f64,
    pub omega_max: f64,
    pub points: usize,
}

/// The susceptibility F(z) = 1/(Ω² − z² + Σ_α Γ_α(z)).
#[derive(Debug, Clone)]
pub struct Susceptibility {
    omega0: f64,
    baths: Vec<SpectralDensity>,
    scan_grid: Vec<f64>,
    scan_values: Vec<Complex64>,
}

/// Threshold on |F⁻¹| below which a frequency counts as a pole.
pub const POLE_TOLERANCE: f64 = 1e-6;
/// Number of points of the real-axis scan.
pub const SCAN_POINTS: usize = 10_000;

impl Susceptibility {
    pub fn new(omega0: f64, baths: Vec<SpectralDensity>) -> Result<Self> {
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::Domain(format!("oscillator frequency must be > 0, got {omega0}")));
        }
        for b in &baths {
            b.validate()?;
        }
        let mut s = Self {
            omega0,
            baths,
            scan_grid: Vec::new(),
            scan_values: Vec::new(),
        };
        let top = s.scan_max();
        let mut grid: Vec<f64> = (0..SCAN_POINTS)
            .map(|k| top * k as f64 / (SCAN_POINTS - 1) as f64)
            .collect();
        // Just above a support edge Re F⁻¹ may carry a logarithmic spike
        // that the uniform grid would step over.
        for b in &s.baths {
            if let Some(end) = b.support_end() {
                for eps in [1e-9, 1e-6, 1e-3] {
                    let w = end * (1.0 + eps);
                    if w < top {
                        grid.push(w);
                    }
                }
            }
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        s.scan_grid = grid;
        s.scan_values = s.scan_grid.iter().map(|&w| s.denominator_boundary(w)).collect();
        Ok(s)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn baths(&self) -> &[SpectralDensity] {
        &self.baths
    }

    /// Frequency cutoff 50·max(Ω, scales), widened if the dressed
    /// frequency √(Ω² + Σ counter terms) lies beyond it.
    pub fn scan_max(&self) -> f64 {
        let scale = self
            .baths
            .iter()
            .map(SpectralDensity::scale)
            .fold(self.omega0, f64::max);
        let dressed = (self.omega0.powi(2) + self.baths.iter().map(|b| b.counter_term()).sum::<f64>()).sqrt();
        (50.0 * scale).max(4.0 * dressed)
    }

    pub fn gamma_sum(&self, omega: f64) -> f64 {
        self.baths.iter().map(|b| b.gamma_unchecked(omega.abs())).sum()
    }

    /// F⁻¹(z) for Im z > 0.
    pub fn denominator(&self, z: Complex64) -> Result<Complex64> {
        let mut d = self.omega0 * self.omega0 - z * z;
        for b in &self.baths {
            d += b.continuation(z)?;
        }
        Ok(d)
    }

    /// F⁻¹(ω + i0⁺) for real ω.
    pub fn denominator_boundary(&self, omega: f64) -> Complex64 {
        let mut d = Complex64::new(self.omega0 * self.omega0 - omega * omega, 0.0);
        for b in &self.baths {
            d += b.boundary_value(omega);
        }
        d
    }

    /// F(ω + i0⁺), refusing frequencies where the denominator vanishes.
    pub fn eval(&self, omega: f64) -> Result<Complex64> {
        let d = self.denominator_boundary(omega);
        if d.norm() < POLE_TOLERANCE {
            return Err(Error::Pole {
                omega,
                magnitude: d.norm(),
            });
        }
        Ok(1.0 / d)
    }

    /// F(ω + i0⁺) without the pole guard.
    pub fn eval_unchecked(&self, omega: f64) -> Complex64 {
        1.0 / self.denominator_boundary(omega)
    }

    /// F(z) anywhere in the upper half-plane.
    pub fn eval_complex(&self, z: Complex64) -> Result<Complex64> {
        Ok(1.0 / self.denominator(z)?)
    }

    /// Cached scan grid and the values of F on it.
    pub fn cached(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.scan_grid
            .iter()
            .zip(&self.scan_values)
            .map(|(&w, &d)| (w, 1.0 / d))
    }

    /// Scans the real axis for zeros of the denominator: grid points with
    /// |F⁻¹| below [`POLE_TOLERANCE`], and sign changes of Re F⁻¹ between
    /// neighbouring points where the bath spectra vanish (isolated modes),
    /// which are located by bisection.
    pub fn pole_scan(&self) -> PoleScanReport {
        let mut candidates = Vec::new();
        let mut min_d = f64::INFINITY;
        let mut min_at = 0.0;
        for (k, (&w, d)) in self.scan_grid.iter().zip(&self.scan_values).enumerate() {
            let m = d.norm();
            if m < min_d {
                min_d = m;
                min_at = w;
            }
            if m < POLE_TOLERANCE {
                candidates.push(w);
                continue;
            }
            if k + 1 < self.scan_grid.len() {
                let (w1, d1) = (self.scan_grid[k + 1], self.scan_values[k + 1]);
                let undamped = d.im == 0.0 && d1.im == 0.0;
                if undamped && d.re.signum() != d1.re.signum() && d1.norm() >= POLE_TOLERANCE {
                    if let Some(root) = self.bisect_real_root(w, w1) {
                        candidates.push(root);
                    }
                }
            }
        }
        // Above the scan range Re F⁻¹ ≈ Ω² + Σ counter terms − ω² < 0; a
        // sign change there is already excluded by the widened cutoff.
        PoleScanReport {
            passed: candidates.is_empty(),
            candidates,
            min_denominator: min_d,
            min_location: min_at,
            omega_max: self.scan_max(),
            points: self.scan_grid.len(),
        }
    }

    fn bisect_real_root(&self, mut a: f64, mut b: f64) -> Option<f64> {
        let mut fa = self.denominator_boundary(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = self.denominator_boundary(m);
            if fm.im != 0.0 {
                // Damped interior point: a sign change caused by a log
                // singularity at a support edge, not an isolated mode.
                return None;
            }
            if fm.re == 0.0 || (b - a) < 1e-14 * b.max(1.0) {
                return Some(m);
            }
            if fm.re.signum() == fa.re.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let m = 0.5 * (a + b);
        let v = self.denominator_boundary(m).re.abs();
        if v.is_finite() && v < 1.0 {
            Some(m)
        } else {
            None
        }
    }

    /// Position of the maximum of Im F on the scan grid.
    pub fn peak(&self) -> f64 {
        let mut best = (0.0, self.omega0);
        for (w, d) in self.scan_grid.iter().zip(&self.scan_values) {
            let v = (1.0 / d).im;
            if v > best.0 {
                best = (v, *w);
            }
        }
        best.1
    }

    /// Upper edge of the frequency band used for time-domain transforms:
    /// the end of the spectral support, or a tail estimate such that the
    /// neglected part of ∫ω² Im F dω is below `tail_tol`.
    pub fn transform_cutoff(&self, tail_tol: f64) -> f64 {
        let mut top = self.scan_max();
        let mut drude_weight = 0.0;
        for b in &self.baths {
            match b {
                SpectralDensity::DrudeOhmic { coupling, cutoff } => {
                    drude_weight += coupling * cutoff * cutoff;
                }
                SpectralDensity::Tabulated { .. } => {
                    top = top.max(b.scale());
                }
            }
        }
        if drude_weight > 0.0 {
            // Im F ≈ Σκω_c²/ω⁵ at large ω, so ∫_W^∞ ω² Im F ≈ Σκω_c²/(2W²).
            top = top.max((drude_weight / (2.0 * tail_tol)).sqrt());
        }
        top
    }
}

/// Options for [`ClassicalResponse::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseOptions {
    /// Largest time on the grid.
    pub t_max: f64,
    /// Grid step.
    pub dt: f64,
    /// L1 tolerance of the frequency-domain interpolant of Im F.
    pub tol: f64,
    /// Tolerance for the neglected high-frequency tail.
    pub tail_tol: f64,
    pub max_panels: usize,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            t_max: 100.0,
            dt: 0.02,
            tol: 1e-11,
            tail_tol: 1e-9,
            max_panels: 200_000,
        }
    }
}

/// Classical response u(t) = (2/π)∫₀^∞ sin(ωt) Im F(ω + i0⁺) dω together
/// with its first two derivatives on a uniform time grid.
#[derive(Debug, Clone)]
pub struct ClassicalResponse {
    sus: Arc<Susceptibility>,
    table: Arc<FourierTable<3>>,
    dt: f64,
    u: Vec<f64>,
    udot: Vec<f64>,
    uddot: Vec<f64>,
    omega_max: f64,
}

impl ClassicalResponse {
    pub fn new(sus: Arc<Susceptibility>, opts: ResponseOptions) -> Result<Self> {
        let scan = sus.pole_scan();
        if !scan.passed {
            return Err(Error::PoleScan(scan.candidates));
        }
        if !(opts.dt > 0.0 && opts.t_max >= 0.0) {
            return Err(Error::Domain("time grid needs dt > 0 and t_max >= 0".into()));
        }
        let omega_max = sus.transform_cutoff(opts.tail_tol);
        let breakpoints = response_breakpoints(&sus, omega_max);
        let s = sus.clone();
        let table = FourierTable::build(
            move |w| {
                let f = s.eval_unchecked(w).im;
                [f, w * f, w * w * f]
            },
            &breakpoints,
            [opts.tol, opts.tol, 10.0 * opts.tol],
            opts.max_panels,
        )?;
        let n = (opts.t_max / opts.dt).ceil() as usize + 1;
        let tr = table.transform_grid(opts.dt, n);
        let c = 2.0 / PI;
        let mut u = Vec::with_capacity(n);
        let mut udot = Vec::with_capacity(n);
        let mut uddot = Vec::with_capacity(n);
        for v in &tr {
            u.push(c * v[0].im);
            udot.push(c * v[1].re);
            uddot.push(-c * v[2].im);
        }
        u[0] = 0.0;
        uddot[0] = 0.0;
        Ok(Self {
            sus,
            table: Arc::new(table),
            dt: opts.dt,
            u,
            udot,
            uddot,
            omega_max,
        })
    }

    pub fn susceptibility(&self) -> &Arc<Susceptibility> {
        &self.sus
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_max(&self) -> f64 {
        (self.u.len() - 1) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.u.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn u_grid(&self) -> &[f64] {
        &self.u
    }

    pub fn udot_grid(&self) -> &[f64] {
        &self.udot
    }

    pub fn uddot_grid(&self) -> &[f64] {
        &self.uddot
    }

    /// Upper edge of the frequency band of the transforms.
    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Number of Filon panels used for the transforms.
    pub fn panel_count(&self) -> usize {
        self.table.panel_count()
    }

    /// Estimated L1 error of the Im F interpolant per channel.
    pub fn interpolation_error(&self) -> [f64; 3] {
        self.table.error
    }

    /// Panel edges of the Im F table; useful as a frequency layout that
    /// already resolves the resonance.
    pub fn frequency_edges(&self) -> Vec<f64> {
        self.table.edges()
    }

    /// (u, u̇, ü) at an arbitrary time, directly from the transforms.
    /// Zero for t < 0; at t = 0 the right limits are returned.
    pub fn at(&self, t: f64) -> [f64; 3] {
        if t < 0.0 {
            return [0.0; 3];
        }
        if t == 0.0 {
            return [0.0, self.udot[0], 0.0];
        }
        let v = self.table.transform(t);
        let c = 2.0 / PI;
        [c * v[0].im, c * v[1].re, -c * v[2].im]
    }

    /// Measured u̇(0⁺), equal to the sum rule (2/π)∫ω Im F dω.
    pub fn udot_zero(&self) -> f64 {
        self.udot[0]
    }

    /// Full transform u(ω) = ∫₀^∞ u(τ)e^{−iωτ}dτ = F(−ω + i0⁺).
    pub fn full_ft(&self, omega: f64) -> Complex64 {
        full_ft(&self.sus, omega)
    }

    /// Partial transforms (u(t,ω), v(t,ω)) for one time and frequency.
    pub fn partial_ft(&self, t: f64, omega: f64) -> Result<(Complex64, Complex64)> {
        Ok(self.partial_ft_batch(&[t], &[omega])?[0][0])
    }

    /// Partial transforms for every (time, frequency) pair; the result is
    /// indexed as `[time][frequency]`. Times need not be sorted but must
    /// lie in [0, t_max].
    pub fn partial_ft_batch(&self, times: &[f64], omegas: &[f64]) -> Result<Vec<Vec<(Complex64, Complex64)>>> {
        use rayon::prelude::*;
        let t_max = self.t_max();
        for &t in times {
            if !(0.0..=t_max * (1.0 + 1e-12)).contains(&t) {
                return Err(Error::Domain(format!(
                    "partial transform needs 0 <= t <= {t_max}, got {t}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let per_omega: Vec<Vec<(Complex64, Complex64)>> =
            omegas.par_iter().map(|&w| self.sweep(w, times, &order)).collect();
        let mut out = vec![vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); omegas.len()]; times.len()];
        for (j, col) in per_omega.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                out[i][j] = v;
            }
        }
        Ok(out)
    }

    fn sweep(&self, omega: f64, times: &[f64], order: &[usize]) -> Vec<(Complex64, Complex64)> {
        let mut out = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); times.len()];
        self.sweep_with(omega, times, order, |idx, u, v| out[idx] = (u, v));
        out
    }

    /// Streams (u(t,ω), v(t,ω)) to `sink` for the times visited in the
    /// order given by `order`, which must sort `times` increasingly.
    pub(crate) fn sweep_with(
        &self,
        omega: f64,
        times: &[f64],
        order: &[usize],
        mut sink: impl FnMut(usize, Complex64, Complex64),
    ) {
        let h = self.dt;
        let w = StepWeights::new(omega, h);
        let rot = Complex64::from_polar(1.0, omega * h);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut j = 0usize;
        let last = self.u.len() - 1;
        for &idx in order {
            let t = times[idx];
            let target = ((t / h).floor() as usize).min(last);
            while j < target {
                acc =
                    rot * acc + w.u0 * self.u[j] + w.d0 * self.udot[j] + w.u1 * self.u[j + 1] + w.d1 * self.udot[j + 1];
                j += 1;
            }
            let frac = t - j as f64 * h;
            let (val, ut) = if frac > 1e-14 * h.max(t) && j < last {
                // Restrict the cubic on [t_j, t_{j+1}] to [t_j, t].
                let x = frac / h;
                let (p, dp) = hermite(self.u[j], self.udot[j], self.u[j + 1], self.udot[j + 1], h, x);
                let ws = StepWeights::new(omega, frac);
                let v = Complex64::from_polar(1.0, omega * frac) * acc
                    + ws.u0 * self.u[j]
                    + ws.d0 * self.udot[j]
                    + ws.u1 * p
                    + ws.d1 * dp;
                (v, p)
            } else {
                (acc, self.u[j])
            };
            sink(idx, val, ut + I * omega * val);
        }
    }
}

/// u(ω) = F(−ω + i0⁺) = conj F(ω + i0⁺) for ω ≥ 0.
pub fn full_ft(sus: &Susceptibility, omega: f64) -> Complex64 {
    let f = sus.eval_unchecked(omega.abs());
    if omega >= 0.0 {
        f.conj()
    } else {
        f
    }
}

fn hermite(u0: f64, d0: f64, u1: f64, d1: f64, h: f64, x: f64) -> (f64, f64) {
    let x2 = x * x;
    let x3 = x2 * x;
    let p = u0 * (2.0 * x3 - 3.0 * x2 + 1.0)
        + h * d0 * (x3 - 2.0 * x2 + x)
        + u1 * (-2.0 * x3 + 3.0 * x2)
        + h * d1 * (x3 - x2);
    let dp = (u0 * (6.0 * x2 - 6.0 * x) + u1 * (-6.0 * x2 + 6.0 * x)) / h
        + d0 * (3.0 * x2 - 4.0 * x + 1.0)
        + d1 * (3.0 * x2 - 2.0 * x);
    (p, dp)
}

/// Exact weights of ∫₀^h p(τ) e^{iω(h−τ)} dτ for the cubic Hermite
/// interpolant p through (u0, u̇0) at 0 and (u1, u̇1) at h.
#[derive(Debug, Clone, Copy)]
struct StepWeights {
    u0: Complex64,
    d0: Complex64,
    u1: Complex64,
    d1: Complex64,
}

impl StepWeights {
    fn new(omega: f64, h: f64) -> Self {
        let a = omega * h;
        // E_m = ∫₀¹ y^m e^{iay} dy
        let mut e = [Complex64::new(0.0, 0.0); 4];
        if a.abs() < 1.0 {
            let ia = Complex64::new(0.0, a);
            for (m, em) in e.iter_mut().enumerate() {
                let mut term = Complex64::new(1.0, 0.0);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..30 {
                    acc += term / (m + k + 1) as f64;
                    term = term * ia / (k + 1) as f64;
                    if term.norm() < 1e-18 {
                        break;
                    }
                }
                *em = acc;
            }
        } else {
            let ex = Complex64::from_polar(1.0, a);
            let inv = Complex64::new(0.0, -1.0 / a);
            e[0] = (ex - 1.0) * inv;
            for m in 1..4 {
                e[m] = (ex - e[m - 1] * m as f64) * inv;
            }
        }
        // N_n = ∫₀¹ x^n e^{ia(1−x)} dx via x = 1 − y.
        let n0 = e[0];
        let n1 = e[0] - e[1];
        let n2 = e[0] - 2.0 * e[1] + e[2];
        let n3 = e[0] - 3.0 * e[1] + 3.0 * e[2] - e[3];
        Self {
            u0: h * (2.0 * n3 - 3.0 * n2 + n0),
            d0: h * h * (n3 - 2.0 * n2 + n1),
            u1: h * (-2.0 * n3 + 3.0 * n2),
            d1: h * h * (n3 - n2),
        }
    }
}

pub(crate) fn response_breakpoints(sus: &Susceptibility, omega_max: f64) -> Vec<f64> {
    let peak = sus.peak().max(1e-3);
    let mut pts: Vec<f64> = (0..=64).map(|k| 2.0 * peak * k as f64 / 64.0).collect();
    let mut x = 2.0 * peak;
    while x < omega_max {
        x *= 1.5;
        pts.push(x.min(omega_max));
    }
    for b in sus.baths() {
        pts.extend(b.breakpoints());
    }
    pts.retain(|&p| p >= 0.0 && p <= omega_max);
    pts.push(omega_max);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{adaptive, AdaptiveOptions};

    fn s0() -> Arc<Susceptibility> {
        Arc::new(
            Susceptibility::new(
                1.0,
                vec![
                    SpectralDensity::drude_ohmic(0.05, 10.0).unwrap(),
                    SpectralDensity::drude_ohmic(0.05, 10.0).unwrap(),
                ],
            )
            .unwrap(),
        )
    }

    /// Independent Cauchy-integral evaluation of the subtracted
    /// continuation by adaptive quadrature, valid for Im z > 0.
    fn cauchy_oracle(spec: &SpectralDensity, z: Complex64, top: f64) -> Complex64 {
        let f = |w: f64| {
            let g = spec.gamma_over_omega(w);
            g * z * z / (z * z - w * w)
        };
        let mut bps = vec![0.0, z.re.abs().max(1e-3), top];
        let mut x = z.norm() / 100.0;
        while x < top {
            bps.push(x);
            x *= 10.0;
        }
        bps.extend(spec.breakpoints());
        bps.retain(|x| *x <= top);
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let opts = AdaptiveOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-13,
            max_intervals: 100_000,
        };
        adaptive(f, &bps, opts).unwrap().value
    }

    #[test]
    fn drude_gamma_values() {
        let s = SpectralDensity::drude_ohmic(0.1, 10.0).unwrap();
        assert_eq!(s.gamma(0.0).unwrap(), 0.0);
        assert!((s.gamma(10.0).unwrap() - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
        assert!(s.gamma(1e12).unwrap() < 1e-9);
        assert!(matches!(s.gamma(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn drude_continuation_matches_cauchy_integral() {
        let s = SpectralDensity::drude_ohmic(0.1, 10.0).unwrap();
        // The kernel z²/(z² − ω²) makes the tail beyond `top` negligible.
        for &z in &[
            Complex64::new(0.0, 1e-6),
            Complex64::new(1.0, 0.5),
            Complex64::new(3.0, 2.0),
            Complex64::new(-2.0, 0.1),
        ] {
            let top = 1e7;
            let num = cauchy_oracle(&s, z, top);
            let closed = s.continuation(z).unwrap();
            assert!((num - closed).norm() < 1e-8, "z={z}: {num} vs {closed}");
        }
        assert!(s.continuation(Complex64::new(0.0, 1e-12)).unwrap().norm() < 1e-10);
        assert!(s.continuation(Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn boundary_imaginary_part_is_minus_half_pi_gamma() {
        let s = SpectralDensity::drude_ohmic(0.1, 10.0).unwrap();
        for k in 1..200 {
            let w = k as f64 * 0.1;
            let im = s.boundary_value(w).im;
            let expected = -0.5 * PI * s.gamma(w).unwrap();
            assert!((im - expected).abs() <= 1e-12 * expected.abs());
        }
    }

    #[test]
    fn tabulated_continuation_matches_cauchy_integral() {
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let values: Vec<f64> = grid.iter().map(|w| w * (-w / 3.0).exp() * 0.1).collect();
        let s = SpectralDensity::tabulated(grid, values).unwrap();
        for &z in &[
            Complex64::new(0.0, 1e-6),
            Complex64::new(1.3, 0.2),
            Complex64::new(4.0, 1e-3),
            Complex64::new(12.0, 0.5),
        ] {
            let num = cauchy_oracle(&s, z, 10.0);
            let closed = s.continuation(z).unwrap();
            assert!((num - closed).norm() < 1e-9, "z={z}: {num} vs {closed}");
        }
        for k in 1..80 {
            let w = k as f64 * 0.123;
            let im = s.boundary_value(w).im;
            let expected = -0.5 * PI * s.gamma(w).unwrap();
            assert!((im - expected).abs() <= 1e-12 + 1e-10 * expected.abs(), "w={w}");
        }
        assert!((s.counter_term() - cauchy_oracle_counter(&s)).abs() < 1e-12);
    }

    fn cauchy_oracle_counter(s: &SpectralDensity) -> f64 {
        adaptive(|w| s.gamma_over_omega(w), &s.breakpoints(), AdaptiveOptions::default())
            .unwrap()
            .value
    }

    #[test]
    fn zero_tabulated_density_has_zero_continuation() {
        let s = SpectralDensity::tabulated(vec![0.0, 1.0, 2.0], vec![0.0; 3]).unwrap();
        assert_eq!(
            s.continuation(Complex64::new(0.5, 0.5)).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn tabulated_validation() {
        assert!(SpectralDensity::tabulated(vec![0.0, 1.0], vec![0.1, 0.2]).is_err());
        assert!(SpectralDensity::tabulated(vec![0.0, 0.0, 1.0], vec![0.0; 3]).is_err());
        assert!(SpectralDensity::tabulated(vec![0.0, 1.0], vec![0.0, -1.0]).is_err());
        assert!(SpectralDensity::drude_ohmic(-0.1, 1.0).is_err());
    }

    #[test]
    fn free_oscillator_poles() {
        let sus = Susceptibility::new(1.0, vec![SpectralDensity::drude_ohmic(0.0, 10.0).unwrap()]).unwrap();
        assert!((sus.eval(0.0).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(matches!(sus.eval(1.0), Err(Error::Pole { .. })));
        let scan = sus.pole_scan();
        assert!(!scan.passed);
        assert_eq!(scan.candidates.len(), 1);
        assert!((scan.candidates[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pole_scan_passes_with_one_damped_bath() {
        let sus = Susceptibility::new(
            1.0,
            vec![
                SpectralDensity::drude_ohmic(0.0, 10.0).unwrap(),
                SpectralDensity::drude_ohmic(0.05, 10.0).unwrap(),
            ],
        )
        .unwrap();
        assert!(sus.pole_scan().passed);
        assert!(s0().pole_scan().passed);
    }

    #[test]
    fn undamped_mode_below_support_is_found() {
        let s = SpectralDensity::tabulated(vec![5.0, 6.0, 7.0], vec![0.0, 0.1, 0.0]).unwrap();
        let sus = Susceptibility::new(1.0, vec![s]).unwrap();
        assert_eq!(sus.denominator_boundary(2.0).im, 0.0);
        let scan = sus.pole_scan();
        assert!(!scan.passed);
        assert!((scan.candidates[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn isolated_mode_outside_support_is_found() {
        let s = SpectralDensity::tabulated(vec![0.0, 0.25, 0.5], vec![0.0, 0.05, 0.0]).unwrap();
        let sus = Susceptibility::new(1.0, vec![s]).unwrap();
        let scan = sus.pole_scan();
        assert!(!scan.passed);
        assert_eq!(scan.candidates.len(), 1);
        let w = scan.candidates[0];
        assert!(w > 0.5 && sus.denominator_boundary(w).norm() < 1e-9);
    }

    #[test]
    fn tabulated_support_edge_creates_isolated_mode() {
        // Density ending at a finite value: Re F⁻¹ has a log spike at the
        // edge and must cross zero above it.
        let s = SpectralDensity::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 0.5]).unwrap();
        let sus = Susceptibility::new(1.0, vec![s]).unwrap();
        let scan = sus.pole_scan();
        assert!(!scan.passed);
        assert!(scan.candidates.iter().all(|&w| w > 2.0));
    }

    #[test]
    fn s0_susceptibility_has_positive_imaginary_part() {
        let sus = s0();
        let f = sus.eval(1.0).unwrap();
        assert!(f.im > 0.0);
        for (w, f) in sus.cached().skip(1) {
            assert!(f.im >= 0.0, "w={w}");
        }
    }

    #[test]
    fn hermite_weights_are_exact_for_cubics() {
        let p = |t: f64| 0.3 - 1.2 * t + 0.7 * t * t + 0.25 * t * t * t;
        let dp = |t: f64| -1.2 + 1.4 * t + 0.75 * t * t;
        for &(omega, h) in &[(0.0, 0.3), (0.2, 0.5), (7.0, 0.4), (300.0, 0.02)] {
            let w = StepWeights::new(omega, h);
            let got = w.u0 * p(0.0) + w.d0 * dp(0.0) + w.u1 * p(h) + w.d1 * dp(h);
            let exact = adaptive(
                |t: f64| Complex64::from_polar(p(t), omega * (h - t)),
                &[0.0, h],
                AdaptiveOptions::default(),
            )
            .unwrap()
            .value;
            assert!((got - exact).norm() < 1e-13, "omega={omega}");
        }
    }
}
