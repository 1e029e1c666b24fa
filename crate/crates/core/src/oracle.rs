//! Finite-N brute force: the central oscillator coupled to discretized
//! baths, evolved exactly through the normal modes of the full quadratic
//! Hamiltonian H = ½pᵀp + ½xᵀVx with x = (Q, Q_1, …, Q_N).
//!
//! A continuum bath is realized by quadrature nodes ω_ν with weights w_ν:
//! λ_ν = √(γ(ω_ν)ω_ν w_ν), mode means √w_ν·X(ω_ν), mode covariances
//! σ⁽¹⁾(ω_ν) and cross-mode covariances √(w_ν w_μ)σ⁽²⁾(ω_ν, ω_μ).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genfunc::MomentState;
use crate::preparations::BathPreparation;
use crate::quadrature::{gauss_legendre, CompositeRule};
use crate::spectral::SpectralDensity;

/// Largest number of coupled oscillators accepted.
pub const MAX_MODES: usize = 5000;

/// How quadrature nodes are placed on the frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeLayout {
    /// Gauss–Legendre nodes on [0, ω_max].
    GaussLegendre { omega_max: f64 },
    /// Uniform midpoint nodes on [0, dense_max] carrying `dense_fraction`
    /// of the modes, then geometrically growing cells up to ω_max.
    Graded {
        dense_max: f64,
        dense_fraction: f64,
        omega_max: f64,
    },
}

impl ModeLayout {
    /// Nodes and weights for `n` modes.
    pub fn nodes(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n == 0 {
            return Err(Error::Domain("a discrete bath needs at least one mode".into()));
        }
        match *self {
            Self::GaussLegendre { omega_max } => {
                if !(omega_max > 0.0) {
                    return Err(Error::Domain("omega_max must be > 0".into()));
                }
                let (x, w) = gauss_legendre(n);
                let h = 0.5 * omega_max;
                Ok((
                    x.iter().map(|x| h * (x + 1.0)).collect(),
                    w.iter().map(|w| h * w).collect(),
                ))
            }
            Self::Graded {
                dense_max,
                dense_fraction,
                omega_max,
            } => {
                if !(dense_max > 0.0 && omega_max >= dense_max && (0.0..=1.0).contains(&dense_fraction)) {
                    return Err(Error::Domain(format!(
                        "invalid graded layout: dense_max {dense_max}, fraction {dense_fraction}, omega_max {omega_max}"
                    )));
                }
                let n_dense = if omega_max == dense_max {
                    n
                } else {
                    ((dense_fraction * n as f64).round() as usize).clamp(1, n)
                };
                let n_tail = n - n_dense;
                let delta = dense_max / n_dense as f64;
                let mut nodes: Vec<f64> = (0..n_dense).map(|k| (k as f64 + 0.5) * delta).collect();
                let mut weights = vec![delta; n_dense];
                if n_tail > 0 {
                    // Cells grow geometrically from the dense spacing.
                    let ratio = solve_ratio(delta, omega_max - dense_max, n_tail);
                    let mut lo = dense_max;
                    let mut width = delta * ratio;
                    for _ in 0..n_tail {
                        nodes.push(lo + 0.5 * width);
                        weights.push(width);
                        lo += width;
                        width *= ratio;
                    }
                }
                Ok((nodes, weights))
            }
        }
    }

    /// Smallest node spacing inside the dense part; the recurrence time of
    /// the discrete bath is about 2π divided by it.
    pub fn recurrence_time(&self, n: usize) -> Result<f64> {
        let (nodes, _) = self.nodes(n)?;
        let max_gap = nodes
            .windows(2)
            .filter(|w| w[1] < self.band_of_interest())
            .map(|w| w[1] - w[0])
            .fold(0.0_f64, f64::max);
        Ok(2.0 * PI / max_gap.max(f64::MIN_POSITIVE))
    }

    fn band_of_interest(&self) -> f64 {
        match *self {
            Self::GaussLegendre { omega_max } => omega_max,
            Self::Graded { dense_max, .. } => dense_max,
        }
    }
}

/// Ratio r with Σ_{k=1..n} δ r^k = span.
fn solve_ratio(delta: f64, span: f64, n: usize) -> f64 {
    let total = |r: f64| (1..=n).map(|k| delta * r.powi(k as i32)).sum::<f64>();
    let (mut lo, mut hi) = (1.0, 2.0);
    while total(hi) < span {
        hi *= 2.0;
    }
    if total(lo) >= span {
        return 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < span {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One bath realized by finitely many modes.
#[derive(Debug, Clone)]
pub struct DiscreteBath {
    pub omegas: Vec<f64>,
    pub weights: Vec<f64>,
    pub couplings: Vec<f64>,
    /// (⟨Q_ν⟩, ⟨P_ν⟩)
    pub means: Vec<[f64; 2]>,
    /// Per-mode covariance (σ_QQ, σ_QP, σ_PP).
    pub covariances: Vec<[f64; 3]>,
    /// Dense cross-mode covariance over (Q_1..Q_N, P_1..P_N), if any.
    pub cross: Option<DMatrix<f64>>,
}

/// Realizes a continuum bath with `n` modes placed by `layout`.
pub fn discretize(
    spectral: &SpectralDensity,
    prep: &BathPreparation,
    n: usize,
    layout: ModeLayout,
) -> Result<DiscreteBath> {
    prep.validate()?;
    let (omegas, weights) = layout.nodes(n)?;
    if omegas.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("mode frequencies must be positive".into()));
    }
    let couplings = omegas
        .iter()
        .zip(&weights)
        .map(|(&w, &dw)| (spectral.gamma_unchecked(w) * w * dw).sqrt())
        .collect();
    let means = omegas
        .iter()
        .zip(&weights)
        .map(|(&w, &dw)| {
            let m = prep.mean(w);
            [dw.sqrt() * m[0], dw.sqrt() * m[1]]
        })
        .collect();
    let covariances = omegas
        .iter()
        .map(|&w| {
            let s = prep.sigma1(w);
            [s.qq, s.qp, s.pp]
        })
        .collect();
    let cross = prep.cross.as_ref().map(|k| {
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let s = k.eval(omegas[a], omegas[b]);
                let f = (weights[a] * weights[b]).sqrt();
                m[(a, b)] = f * s[0][0];
                m[(a, n + b)] = f * s[0][1];
                m[(n + a, b)] = f * s[1][0];
                m[(n + a, n + b)] = f * s[1][1];
            }
        }
        m
    });
    Ok(DiscreteBath {
        omegas,
        weights,
        couplings,
        means,
        covariances,
        cross,
    })
}

impl DiscreteBath {
    /// Single-mode bath, mostly for tests.
    pub fn single(omega: f64, coupling: f64, prep: &BathPreparation) -> Self {
        let s = prep.sigma1(omega);
        Self {
            omegas: vec![omega],
            weights: vec![1.0],
            couplings: vec![coupling],
            means: vec![[0.0, 0.0]],
            covariances: vec![[s.qq, s.qp, s.pp]],
            cross: None,
        }
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Σ_ν (λ_ν/ω_ν)² cos(ω_ν t).
    pub fn friction_kernel(&self, t: f64) -> f64 {
        self.omegas
            .iter()
            .zip(&self.couplings)
            .map(|(w, l)| (l / w).powi(2) * (w * t).cos())
            .sum()
    }

    /// Σ_ν (λ_ν/ω_ν)²: the counter-term stiffness.
    pub fn counter_term(&self) -> f64 {
        self.friction_kernel(0.0)
    }
}

/// The coupled system diagonalized once; all evolution is exact.
#[derive(Debug, Clone)]
pub struct NormalModeSystem {
    dim: usize,
    omega0: f64,
    /// Index range of each bath in the coordinate vector.
    ranges: Vec<(usize, usize)>,
    baths: Vec<DiscreteBath>,
    potential: DMatrix<f64>,
    /// Columns are normal-mode eigenvectors.
    modes: DMatrix<f64>,
    freqs: Vec<f64>,
    /// Oᵀe₀: overlap of each normal mode with the central coordinate.
    central: DVector<f64>,
}

/// Initial state of the full system: central-oscillator moments plus the
/// bath moments stored in the [`DiscreteBath`]s.
#[derive(Debug, Clone)]
pub struct GlobalState {
    /// Means of (x, p) in original coordinates.
    pub mean: DVector<f64>,
    /// Symmetrized covariance of (x, p) in original coordinates.
    pub cov: DMatrix<f64>,
}

/// A global state expressed in normal-mode coordinates (x′, p′).
#[derive(Debug, Clone)]
pub struct NormalState {
    mean_x: DVector<f64>,
    mean_p: DVector<f64>,
    xx: DMatrix<f64>,
    xp: DMatrix<f64>,
    pp: DMatrix<f64>,
}

impl NormalModeSystem {
    pub fn new(omega0: f64, baths: Vec<DiscreteBath>) -> Result<Self> {
        let n_total: usize = baths.iter().map(|b| b.len()).sum();
        if n_total + 1 > MAX_MODES {
            return Err(Error::Budget(format!(
                "{} oscillators exceed the limit of {MAX_MODES}",
                n_total + 1
            )));
        }
        let dim = n_total + 1;
        let mut v = DMatrix::zeros(dim, dim);
        v[(0, 0)] = omega0 * omega0;
        let mut ranges = Vec::with_capacity(baths.len());
        let mut offset = 1;
        for b in &baths {
            for (k, (&w, &l)) in b.omegas.iter().zip(&b.couplings).enumerate() {
                let i = offset + k;
                v[(i, i)] = w * w;
                v[(0, i)] = l;
                v[(i, 0)] = l;
                v[(0, 0)] += (l / w).powi(2);
            }
            ranges.push((offset, offset + b.len()));
            offset += b.len();
        }
        let eig = SymmetricEigen::new(v.clone());
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::Oracle(format!(
                "potential matrix is not positive definite (smallest eigenvalue {min})"
            )));
        }
        let freqs: Vec<f64> = eig.eigenvalues.iter().map(|e| e.sqrt()).collect();
        let modes = eig.eigenvectors;
        let central = modes.row(0).transpose();
        Ok(Self {
            dim,
            omega0,
            ranges,
            baths,
            potential: v,
            modes,
            freqs,
            central,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// Normal-mode frequencies in increasing order.
    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn baths(&self) -> &[DiscreteBath] {
        &self.baths
    }

    pub fn potential(&self) -> &DMatrix<f64> {
        &self.potential
    }

    /// The central-oscillator response u(t): coefficient of P(0) in Q(t).
    pub fn response(&self, t: f64) -> f64 {
        self.central
            .iter()
            .zip(&self.freqs)
            .map(|(c, f)| c * c * (f * t).sin() / f)
            .sum()
    }

    /// Full phase-space propagator R(t) in original coordinates:
    /// (x(t), p(t)) = R(t)(x(0), p(0)).
    pub fn propagator(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim;
        let o = &self.modes;
        let scale = |f: &dyn Fn(f64) -> f64| {
            let mut m = o.clone();
            for (j, mut col) in m.column_iter_mut().enumerate() {
                col *= f(self.freqs[j]);
            }
            &m * o.transpose()
        };
        let c = scale(&|w| (w * t).cos());
        let s_over = scale(&|w| (w * t).sin() / w);
        let s_times = scale(&|w| -w * (w * t).sin());
        let mut r = DMatrix::zeros(2 * n, 2 * n);
        r.view_mut((0, 0), (n, n)).copy_from(&c);
        r.view_mut((0, n), (n, n)).copy_from(&s_over);
        r.view_mut((n, 0), (n, n)).copy_from(&s_times);
        r.view_mut((n, n), (n, n)).copy_from(&c);
        r
    }

    /// max |RᵀJR − J| at time t.
    pub fn symplectic_defect(&self, t: f64) -> f64 {
        let n = self.dim;
        let r = self.propagator(t);
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            j[(i, n + i)] = 1.0;
            j[(n + i, i)] = -1.0;
        }
        let d = r.transpose() * &j * &r - j;
        d.amax()
    }

    /// Assembles the factorized initial state.
    pub fn initial_state(&self, central: &MomentState) -> GlobalState {
        let n = self.dim;
        let mut mean = DVector::zeros(2 * n);
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        mean[0] = central.mean[0];
        mean[n] = central.mean[1];
        cov[(0, 0)] = central.cov[0][0];
        cov[(0, n)] = central.cov[0][1];
        cov[(n, 0)] = central.cov[1][0];
        cov[(n, n)] = central.cov[1][1];
        for (b, &(lo, _)) in self.baths.iter().zip(&self.ranges) {
            for k in 0..b.len() {
                let i = lo + k;
                mean[i] = b.means[k][0];
                mean[n + i] = b.means[k][1];
                let [qq, qp, pp] = b.covariances[k];
                cov[(i, i)] = qq;
                cov[(i, n + i)] = qp;
                cov[(n + i, i)] = qp;
                cov[(n + i, n + i)] = pp;
            }
            if let Some(cross) = &b.cross {
                let m = b.len();
                for a in 0..m {
                    for c in 0..m {
                        for (da, db) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let v = cross[(da * m + a, db * m + c)];
                            if v != 0.0 {
                                cov[(da * n + lo + a, db * n + lo + c)] += v;
                            }
                        }
                    }
                }
            }
        }
        GlobalState { mean, cov }
    }

    /// Transforms a global state into normal-mode coordinates.
    pub fn to_normal(&self, s: &GlobalState) -> NormalState {
        let n = self.dim;
        let ot = self.modes.transpose();
        let mean_x = &ot * s.mean.rows(0, n);
        let mean_p = &ot * s.mean.rows(n, n);
        let xx = &ot * s.cov.view((0, 0), (n, n)) * &self.modes;
        let xp = &ot * s.cov.view((0, n), (n, n)) * &self.modes;
        let pp = &ot * s.cov.view((n, n), (n, n)) * &self.modes;
        NormalState {
            mean_x,
            mean_p,
            xx,
            xp,
            pp,
        }
    }

    /// Exact evolution of a normal-mode state by time t.
    pub fn evolve_normal(&self, s: &NormalState, t: f64) -> NormalState {
        let n = self.dim;
        let c: Vec<f64> = self.freqs.iter().map(|w| (w * t).cos()).collect();
        let so: Vec<f64> = self.freqs.iter().map(|w| (w * t).sin() / w).collect();
        let sw: Vec<f64> = self.freqs.iter().map(|w| -w * (w * t).sin()).collect();
        let mut mean_x = DVector::zeros(n);
        let mut mean_p = DVector::zeros(n);
        for a in 0..n {
            mean_x[a] = c[a] * s.mean_x[a] + so[a] * s.mean_p[a];
            mean_p[a] = sw[a] * s.mean_x[a] + c[a] * s.mean_p[a];
        }
        let mut xx = DMatrix::zeros(n, n);
        let mut xp = DMatrix::zeros(n, n);
        let mut pp = DMatrix::zeros(n, n);
        for b in 0..n {
            for a in 0..n {
                let (x0, y_ab, y_ba, z0) = (s.xx[(a, b)], s.xp[(a, b)], s.xp[(b, a)], s.pp[(a, b)]);
                xx[(a, b)] = c[a] * c[b] * x0 + c[a] * so[b] * y_ab + so[a] * c[b] * y_ba + so[a] * so[b] * z0;
                xp[(a, b)] = c[a] * sw[b] * x0 + c[a] * c[b] * y_ab + so[a] * sw[b] * y_ba + so[a] * c[b] * z0;
                pp[(a, b)] = sw[a] * sw[b] * x0 + sw[a] * c[b] * y_ab + c[a] * sw[b] * y_ba + c[a] * c[b] * z0;
            }
        }
        NormalState {
            mean_x,
            mean_p,
            xx,
            xp,
            pp,
        }
    }

    /// Back to original coordinates.
    pub fn from_normal(&self, s: &NormalState) -> GlobalState {
        let n = self.dim;
        let o = &self.modes;
        let mut mean = DVector::zeros(2 * n);
        mean.rows_mut(0, n).copy_from(&(o * &s.mean_x));
        mean.rows_mut(n, n).copy_from(&(o * &s.mean_p));
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        let xx = o * &s.xx * o.transpose();
        let xp = o * &s.xp * o.transpose();
        let pp = o * &s.pp * o.transpose();
        cov.view_mut((0, 0), (n, n)).copy_from(&xx);
        cov.view_mut((0, n), (n, n)).copy_from(&xp);
        cov.view_mut((n, 0), (n, n)).copy_from(&xp.transpose());
        cov.view_mut((n, n), (n, n)).copy_from(&pp);
        GlobalState { mean, cov }
    }

    /// Global means and covariances at time t.
    pub fn evolve_moments(&self, s: &GlobalState, t: f64) -> GlobalState {
        self.from_normal(&self.evolve_normal(&self.to_normal(s), t))
    }

    /// Central-oscillator marginal of a normal-mode state.
    pub fn central_moments(&self, s: &NormalState, t: f64) -> MomentState {
        let e = &self.central;
        let q = e.dot(&s.mean_x);
        let p = e.dot(&s.mean_p);
        let qq = (e.transpose() * &s.xx * e)[(0, 0)];
        let qp = (e.transpose() * &s.xp * e)[(0, 0)];
        let pp = (e.transpose() * &s.pp * e)[(0, 0)];
        MomentState {
            t,
            mean: [q, p],
            cov: [[qq, qp], [qp, pp]],
        }
    }

    /// Central-oscillator moments at each time.
    pub fn central_trajectory(&self, initial: &MomentState, times: &[f64]) -> Vec<MomentState> {
        let s0 = self.to_normal(&self.initial_state(initial));
        times
            .iter()
            .map(|&t| self.central_moments(&self.evolve_normal(&s0, t), t))
            .collect()
    }

    /// (Ψ(t,s), Φ(t,s)) with Ψ = ½⟨{Q(t), Q(t+s)}⟩ and Φ = (1/i)⟨[Q(t), Q(t+s)]⟩.
    pub fn two_time_position_corr(&self, initial: &MomentState, t: f64, s: f64) -> (f64, f64) {
        let st = self.evolve_normal(&self.to_normal(&self.initial_state(initial)), t);
        self.two_time_from_state(&st, s)
    }

    /// Two-time correlations from an already evolved normal-mode state.
    pub fn two_time_from_state(&self, st: &NormalState, s: f64) -> (f64, f64) {
        let e = &self.central;
        let n = self.dim;
        let mut psi = 0.0;
        for b in 0..n {
            let cb = (self.freqs[b] * s).cos();
            let sb = (self.freqs[b] * s).sin() / self.freqs[b];
            let mut col = 0.0;
            for a in 0..n {
                col += e[a] * (st.xx[(a, b)] * cb + st.xp[(a, b)] * sb);
            }
            psi += col * e[b];
        }
        let q_t = e.dot(&st.mean_x);
        let q_ts: f64 = (0..n)
            .map(|a| {
                let w = self.freqs[a];
                e[a] * ((w * s).cos() * st.mean_x[a] + (w * s).sin() / w * st.mean_p[a])
            })
            .sum();
        (psi + q_t * q_ts, self.response(s))
    }

    fn bath_range(&self, bath: usize) -> Result<(usize, usize)> {
        self.ranges
            .get(bath)
            .copied()
            .ok_or_else(|| Error::Domain(format!("no bath with index {bath}")))
    }

    /// (⟨H_B(t)⟩, I(t)) for one bath, where I = Σ_ν λ_ν ½⟨{P_ν, Q}⟩ is the
    /// energy current leaving the bath.
    pub fn bath_energy_and_current(&self, g: &GlobalState, bath: usize) -> Result<(f64, f64)> {
        let (lo, hi) = self.bath_range(bath)?;
        let n = self.dim;
        let b = &self.baths[bath];
        let mut energy = 0.0;
        let mut current = 0.0;
        for (k, i) in (lo..hi).enumerate() {
            let w2 = b.omegas[k] * b.omegas[k];
            let (mq, mp) = (g.mean[i], g.mean[n + i]);
            energy += 0.5 * (g.cov[(n + i, n + i)] + mp * mp + w2 * (g.cov[(i, i)] + mq * mq));
            current += b.couplings[k] * (g.cov[(n + i, 0)] + mp * g.mean[0]);
        }
        Ok((energy, current))
    }

    /// Bath energies and currents along a list of times.
    pub fn energy_current_trajectory(
        &self,
        initial: &MomentState,
        bath: usize,
        times: &[f64],
    ) -> Result<Vec<(f64, f64)>> {
        let (lo, hi) = self.bath_range(bath)?;
        let n = self.dim;
        let b = &self.baths[bath];
        // Bath energy and current are linear in the evolved normal-mode
        // moments; contract with fixed matrices instead of transforming back.
        let o = &self.modes;
        let mut wx = DMatrix::zeros(n, n);
        let mut wp = DMatrix::zeros(n, n);
        let mut lam = DVector::zeros(n);
        for (k, i) in (lo..hi).enumerate() {
            wx[(i, i)] = b.omegas[k] * b.omegas[k];
            wp[(i, i)] = 1.0;
            lam[i] = b.couplings[k];
        }
        let gx = o.transpose() * &wx * o;
        let gp = o.transpose() * &wp * o;
        let lam_n = o.transpose() * &lam;
        let e = &self.central;
        let s0 = self.to_normal(&self.initial_state(initial));
        times
            .iter()
            .map(|&t| {
                let s = self.evolve_normal(&s0, t);
                let energy = 0.5
                    * (gx.component_mul(&s.xx).sum()
                        + gp.component_mul(&s.pp).sum()
                        + (s.mean_x.transpose() * &gx * &s.mean_x)[(0, 0)]
                        + (s.mean_p.transpose() * &gp * &s.mean_p)[(0, 0)]);
                // Σ_ν λ_ν Cov(P_ν, Q): p-side vector λ′, x-side vector e.
                let cov = (lam_n.transpose() * s.xp.transpose() * e)[(0, 0)];
                let current = cov + lam_n.dot(&s.mean_p) * e.dot(&s.mean_x);
                Ok((energy, current))
            })
            .collect()
    }

    /// ⟨W(t)⟩ = ⟨H_B(0)⟩ − ⟨H_B(t)⟩ for the given bath.
    pub fn w_first_moment(&self, initial: &MomentState, bath: usize, t: f64) -> Result<f64> {
        let e = self.energy_current_trajectory(initial, bath, &[0.0, t])?;
        Ok(e[0].0 - e[1].0)
    }

    /// Total energy ⟨H⟩ of a global state.
    pub fn total_energy(&self, g: &GlobalState) -> f64 {
        let n = self.dim;
        let mut e = 0.0;
        for i in 0..n {
            e += 0.5 * (g.cov[(n + i, n + i)] + g.mean[n + i] * g.mean[n + i]);
        }
        let x = g.mean.rows(0, n);
        let vx = &self.potential * x;
        e += 0.5 * x.dot(&vx);
        e += 0.5 * self.potential.component_mul(&g.cov.view((0, 0), (n, n))).sum();
        e
    }
}

/// Mean current over [0.5, 0.9]·t_rec, sampled at `samples` points; the
/// window sits after the transient and before finite-N revivals.
pub fn current_plateau(
    sys: &NormalModeSystem,
    initial: &MomentState,
    bath: usize,
    t_rec: f64,
    samples: usize,
) -> Result<f64> {
    let times: Vec<f64> = (0..samples)
        .map(|k| t_rec * (0.5 + 0.4 * (k as f64 + 0.5) / samples as f64))
        .collect();
    let tr = sys.energy_current_trajectory(initial, bath, &times)?;
    Ok(tr.iter().map(|(_, i)| i).sum::<f64>() / samples as f64)
}

/// Time-averaged slope of ⟨W(t)⟩ over [t0, t1] by least squares on
/// `samples` points.
pub fn w_slope(
    sys: &NormalModeSystem,
    initial: &MomentState,
    bath: usize,
    t0: f64,
    t1: f64,
    samples: usize,
) -> Result<f64> {
    let mut times = vec![0.0];
    times.extend((0..samples).map(|k| t0 + (t1 - t0) * k as f64 / (samples - 1) as f64));
    let tr = sys.energy_current_trajectory(initial, bath, &times)?;
    let e0 = tr[0].0;
    let pts: Vec<(f64, f64)> = times[1..]
        .iter()
        .zip(&tr[1..])
        .map(|(&t, (e, _))| (t, e0 - e))
        .collect();
    let m = pts.len() as f64;
    let (st, sw) = pts.iter().fold((0.0, 0.0), |(a, b), (t, w)| (a + t, b + w));
    let (mt, mw) = (st / m, sw / m);
    let num: f64 = pts.iter().map(|(t, w)| (t - mt) * (w - mw)).sum();
    let den: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    Ok(num / den)
}

/// Composite Gauss–Legendre rule, exposed for convergence studies.
pub fn composite_layout(edges: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let r = CompositeRule::gauss_legendre(edges, order);
    (r.nodes, r.weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thermal(t: f64) -> BathPreparation {
        BathPreparation::thermal(t).unwrap()
    }

    #[test]
    fn single_mode_kernel_is_one_cosine() {
        let b = DiscreteBath::single(2.0, 0.3, &thermal(1.0));
        for &t in &[0.0, 0.4, 3.3] {
            assert!((b.friction_kernel(t) - (0.3_f64 / 2.0).powi(2) * (2.0 * t).cos()).abs() < 1e-16);
        }
    }

    #[test]
    fn thermal_mode_covariance() {
        let spec = SpectralDensity::drude_ohmic(0.05, 10.0).unwrap();
        let b = discretize(&spec, &thermal(2.0), 20, ModeLayout::GaussLegendre { omega_max: 50.0 }).unwrap();
        for (w, c) in b.omegas.iter().zip(&b.covariances) {
            let e = crate::preparations::thermal_energy(*w, 2.0).unwrap();
            assert!((c[0] - e / (w * w)).abs() < 1e-14 * c[0]);
            assert_eq!(c[1], 0.0);
            assert!((c[2] - e).abs() < 1e-14 * e);
        }
    }

    #[test]
    fn zero_coupling_modes_are_bare_frequencies() {
        let spec = SpectralDensity::drude_ohmic(0.0, 10.0).unwrap();
        let b = discretize(&spec, &thermal(1.0), 5, ModeLayout::GaussLegendre { omega_max: 7.0 }).unwrap();
        let mut expected = b.omegas.clone();
        expected.push(1.3);
        expected.sort_by(f64::total_cmp);
        let sys = NormalModeSystem::new(1.3, vec![b]).unwrap();
        let mut got = sys.frequencies().to_vec();
        got.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn graded_layout_covers_band() {
        let layout = ModeLayout::Graded {
            dense_max: 10.0,
            dense_fraction: 0.85,
            omega_max: 500.0,
        };
        let (nodes, weights) = layout.nodes(200).unwrap();
        assert_eq!(nodes.len(), 200);
        let total: f64 = weights.iter().sum();
        assert!((total - 500.0).abs() < 1e-9);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        let t_rec = layout.recurrence_time(200).unwrap();
        assert!((t_rec - 2.0 * PI / (10.0 / 170.0)).abs() < 1e-9);
    }

    #[test]
    fn guard_rejects_huge_systems() {
        let b = DiscreteBath {
            omegas: vec![1.0; MAX_MODES],
            weights: vec![1.0; MAX_MODES],
            couplings: vec![0.0; MAX_MODES],
            means: vec![[0.0; 2]; MAX_MODES],
            covariances: vec![[0.5, 0.0, 0.5]; MAX_MODES],
            cross: None,
        };
        assert!(matches!(NormalModeSystem::new(1.0, vec![b]), Err(Error::Budget(_))));
    }
}
