//! Gaussian moment propagation of the central oscillator and the position
//! generating function Z_Q(ξ, t).
//!
//! The state of the oscillator at time t follows from
//! X(t) = U(t)X(0) + I(t) and Σ(t) = U(t)Σ(0)U(t)ᵀ + C(t), where U(t) is
//! built from u̇, u and ü and the bath terms I(t), C(t) are frequency
//! integrals over the partial transforms u(t,ω), v(t,ω).
//!
//! Those integrands oscillate like e^{iωt}. They are evaluated exactly
//! in that phase by splitting u(t,ω) = e^{iωt}u(ω) − R(t,ω), where both
//! u(ω) and the remainder R are smooth in ω. Every bath integrand then
//! becomes a trigonometric polynomial in ωt with smooth coefficients,
//! which are integrated with per-panel Filon weights.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oscillatory::{panel_nodes, panel_weights, FourierTable, PANEL_POINTS};
use crate::preparations::CrossKernel;
use crate::quadrature::CompositeRule;
use crate::scenario::Scenario;
use crate::spectral::{ClassicalResponse, ResponseOptions};

type C64 = Complex64;

/// Mean vector and covariance matrix of the central oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentState {
    pub t: f64,
    /// (⟨Q⟩, ⟨P⟩)
    pub mean: [f64; 2],
    /// Symmetrized covariance [[Σ_QQ, Σ_QP], [Σ_QP, Σ_PP]].
    pub cov: [[f64; 2]; 2],
}

impl MomentState {
    /// Validated initial state at t = 0.
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let s = Self { t: 0.0, mean, cov };
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 * (cov[0][0].abs() + cov[1][1].abs()) {
            return Err(Error::Domain("covariance must be symmetric".into()));
        }
        if !(cov[0][0] >= 0.0 && cov[1][1] >= 0.0) || s.determinant() < 0.25 * (1.0 - 1e-12) {
            return Err(Error::Domain(format!(
                "initial covariance violates the uncertainty relation: det = {}",
                s.determinant()
            )));
        }
        Ok(s)
    }

    /// Minimum-uncertainty state of a unit-mass oscillator of frequency
    /// `omega` displaced to (q, p).
    pub fn coherent(omega: f64, q: f64, p: f64) -> Self {
        Self {
            t: 0.0,
            mean: [q, p],
            cov: [[0.5 / omega, 0.0], [0.0, 0.5 * omega]],
        }
    }

    /// Thermal state of the bare oscillator.
    pub fn thermal(omega: f64, temperature: f64) -> Result<Self> {
        let e = crate::preparations::thermal_energy(omega, temperature)?;
        Ok(Self {
            t: 0.0,
            mean: [0.0, 0.0],
            cov: [[e / (omega * omega), 0.0], [0.0, e]],
        })
    }

    pub fn determinant(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    pub fn qq(&self) -> f64 {
        self.cov[0][0]
    }

    pub fn qp(&self) -> f64 {
        self.cov[0][1]
    }

    pub fn pp(&self) -> f64 {
        self.cov[1][1]
    }
}

/// The affine map taking the initial oscillator moments to time t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Propagator {
    pub t: f64,
    /// [[u̇, u], [ü, u̇]]
    pub u: [[f64; 2]; 2],
    /// Bath-mean drift I(t).
    pub drift: [f64; 2],
    /// Bath covariance source C(t).
    pub source: [[f64; 2]; 2],
}

impl Propagator {
    pub fn apply(&self, s: &MomentState) -> MomentState {
        let u = &self.u;
        let mut mean = self.drift;
        for i in 0..2 {
            for j in 0..2 {
                mean[i] += u[i][j] * s.mean[j];
            }
        }
        let mut cov = self.source;
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += u[i][k] * s.cov[k][l] * u[j][l];
                    }
                }
                cov[i][j] += acc;
            }
        }
        let sym = 0.5 * (cov[0][1] + cov[1][0]);
        cov[0][1] = sym;
        cov[1][0] = sym;
        MomentState { t: self.t, mean, cov }
    }
}

/// Numerical settings for [`Dynamics`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DynamicsOptions {
    /// Largest time that can be queried.
    pub t_max: f64,
    /// Time step of the tabulated response.
    pub dt: f64,
    /// Tolerance of the response transforms.
    pub response_tol: f64,
    /// L1 interpolation tolerance of the smooth bath-integral coefficients.
    pub grid_tol: f64,
    pub max_panels: usize,
    /// Maximum number of kernel evaluations for σ⁽²⁾ double integrals.
    pub cross_budget: usize,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            t_max: 100.0,
            dt: 0.02,
            response_tol: 1e-11,
            grid_tol: 1e-10,
            max_panels: 200_000,
            cross_budget: 10_000_000,
        }
    }
}

/// Bath-summed smooth data at one frequency node.
#[derive(Debug, Clone, Copy, Default)]
struct Node {
    omega: f64,
    /// u(ω) = ∫₀^∞ u(τ)e^{−iωτ}dτ
    uw: C64,
    /// Σ_α (γ_α/ω)·(ω²σ_QQ, ωσ_QP, σ_PP)
    a: f64,
    b: f64,
    c: f64,
    /// Σ_α γ_α(ω)
    gamma: f64,
    /// Σ_α √(ωγ_α)X_Q and Σ_α √(γ_α/ω)X_P
    mq: f64,
    mp: f64,
}

/// Which partial transform a bilinear term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    U,
    V,
}

/// One requested bath integral; times index into the sorted time list.
#[derive(Debug, Clone, Copy)]
enum Request {
    /// ∫ Re x_i Re x_j-type symmetric form with the (a, b, c) weights.
    Sym {
        i: usize,
        ci: Channel,
        j: usize,
        cj: Channel,
    },
    /// ∫ γ·(Re x_i Im x_j − Im x_i Re x_j).
    Anti {
        i: usize,
        ci: Channel,
        j: usize,
        cj: Channel,
    },
    /// ∫ (mq·Re x + mp·Im x).
    Mean { i: usize, ci: Channel },
}

/// Frequency-integral engine shared by the moment propagation and the
/// two-time correlations.
#[derive(Debug, Clone)]
pub struct Dynamics {
    scenario: Scenario,
    response: Arc<ClassicalResponse>,
    panels: Vec<(f64, f64)>,
    nodes: Vec<Node>,
    has_means: bool,
    opts: DynamicsOptions,
}

impl Dynamics {
    pub fn new(scenario: &Scenario, opts: DynamicsOptions) -> Result<Self> {
        scenario.require_pole_free()?;
        let response = ClassicalResponse::new(
            scenario.susceptibility().clone(),
            ResponseOptions {
                t_max: opts.t_max,
                dt: opts.dt,
                tol: opts.response_tol,
                ..Default::default()
            },
        )?;
        Self::with_response(scenario, Arc::new(response), opts)
    }

    /// Reuses an existing response; its time range bounds the queries.
    pub fn with_response(scenario: &Scenario, response: Arc<ClassicalResponse>, opts: DynamicsOptions) -> Result<Self> {
        let w_max = response.omega_max();
        let mut bp = response.frequency_edges();
        bp.extend(scenario.breakpoints().into_iter().filter(|w| *w < w_max));
        for b in scenario.baths() {
            if let Some(cross) = &b.preparation.cross {
                bp.extend(
                    [cross.support.0, cross.support.1]
                        .into_iter()
                        .filter(|w| *w > 0.0 && *w < w_max),
                );
            }
        }
        bp.sort_by(f64::total_cmp);
        bp.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
        let sc = scenario.clone();
        let sus = response.susceptibility().clone();
        let proxy = move |w: f64| {
            let n = node_data(&sc, &sus, w);
            let m2 = n.uw.norm_sqr();
            [
                (n.a + n.c) * m2 * (1.0 + w * w),
                n.b.abs() * m2 * w,
                (n.mq.abs() + n.mp.abs()) * m2.sqrt() * (1.0 + w),
            ]
        };
        let tol = opts.grid_tol;
        let table = FourierTable::build(proxy, &bp, [tol, tol, tol], opts.max_panels)?;
        let edges = table.edges();
        let panels: Vec<(f64, f64)> = edges.windows(2).map(|e| (e[0], e[1])).collect();
        let sus = response.susceptibility().clone();
        let nodes: Vec<Node> = panels
            .par_iter()
            .flat_map_iter(|&(a, b)| {
                panel_nodes(a, b)
                    .into_iter()
                    .map(|w| node_data(scenario, &sus, w))
                    .collect::<Vec<_>>()
            })
            .collect();
        let has_means = scenario.baths().iter().any(|b| b.preparation.has_means());
        Ok(Self {
            scenario: scenario.clone(),
            response,
            panels,
            nodes,
            has_means,
            opts,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn response(&self) -> &Arc<ClassicalResponse> {
        &self.response
    }

    pub fn t_max(&self) -> f64 {
        self.response.t_max()
    }

    /// Number of frequency panels of the bath integrals.
    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    pub fn options(&self) -> &DynamicsOptions {
        &self.opts
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        if t > self.t_max() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "time {t} exceeds the tabulated range {}",
                self.t_max()
            )));
        }
        Ok(())
    }

    /// Runs the requested bath integrals. `times` must be sorted.
    fn integrate(&self, times: &[f64], requests: &[Request]) -> Vec<f64> {
        let order: Vec<usize> = (0..times.len()).collect();
        let n_out = requests.len();
        let nt = times.len();
        let zero = C64::new(0.0, 0.0);
        // Fixed chunks summed in order keep results independent of the
        // thread count.
        const CHUNK: usize = 32;
        let n_chunks = self.panels.len().div_ceil(CHUNK);
        let partial: Vec<Vec<f64>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; n_out];
                for p in c * CHUNK..((c + 1) * CHUNK).min(self.panels.len()) {
                    let (a, b) = self.panels[p];
                    let nodes = &self.nodes[p * PANEL_POINTS..(p + 1) * PANEL_POINTS];
                    // β_u, β_v per time and node.
                    let mut beta = vec![[(zero, zero); PANEL_POINTS]; nt];
                    for (k, n) in nodes.iter().enumerate() {
                        let w = n.omega;
                        let alpha_v = C64::new(0.0, w) * n.uw;
                        self.response.sweep_with(w, times, &order, |idx, u, v| {
                            let e = C64::from_polar(1.0, w * times[idx]);
                            beta[idx][k] = (u - e * n.uw, v - e * alpha_v);
                        });
                    }
                    let mut wcache: Vec<(f64, [C64; PANEL_POINTS])> = Vec::new();
                    let mut weights = |tau: f64| -> [C64; PANEL_POINTS] {
                        if let Some((_, w)) = wcache.iter().find(|(t, _)| *t == tau) {
                            return *w;
                        }
                        let w = panel_weights(a, b, tau);
                        if wcache.len() > 64 {
                            wcache.clear();
                        }
                        wcache.push((tau, w));
                        w
                    };
                    for (out, req) in acc.iter_mut().zip(requests) {
                        *out += panel_request(nodes, &beta, times, req, &mut weights);
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![0.0; n_out];
        for chunk in partial {
            for (a, b) in total.iter_mut().zip(chunk) {
                *a += b;
            }
        }
        total
    }

    /// Propagators at the given times (any order).
    pub fn propagators(&self, times: &[f64]) -> Result<Vec<Propagator>> {
        for &t in times {
            self.check_time(t)?;
        }
        let (sorted, index) = sort_unique(times);
        let mut reqs = Vec::new();
        for i in 0..sorted.len() {
            reqs.push(Request::Sym {
                i,
                ci: Channel::U,
                j: i,
                cj: Channel::U,
            });
            reqs.push(Request::Sym {
                i,
                ci: Channel::U,
                j: i,
                cj: Channel::V,
            });
            reqs.push(Request::Sym {
                i,
                ci: Channel::V,
                j: i,
                cj: Channel::V,
            });
            if self.has_means {
                reqs.push(Request::Mean { i, ci: Channel::U });
                reqs.push(Request::Mean { i, ci: Channel::V });
            }
        }
        let vals = self.integrate(&sorted, &reqs);
        let cross = self.cross_covariances(&sorted)?;
        let stride = if self.has_means { 5 } else { 3 };
        let per_time: Vec<Propagator> = sorted
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let v = &vals[k * stride..(k + 1) * stride];
                let [u, ud, udd] = self.response.at(t);
                let mut source = [[v[0], v[1]], [v[1], v[2]]];
                if let Some(c) = &cross {
                    for i in 0..2 {
                        for j in 0..2 {
                            source[i][j] += c[k][i][j];
                        }
                    }
                }
                let drift = if self.has_means { [-v[3], -v[4]] } else { [0.0, 0.0] };
                let (drift, source) = if t == 0.0 {
                    ([0.0; 2], [[0.0; 2]; 2])
                } else {
                    (drift, source)
                };
                Propagator {
                    t,
                    u: [[ud, u], [udd, ud]],
                    drift,
                    source,
                }
            })
            .collect();
        Ok(index.iter().map(|&k| per_time[k]).collect())
    }

    pub fn propagator(&self, t: f64) -> Result<Propagator> {
        Ok(self.propagators(&[t])?[0])
    }

    /// Moments at time t; fails if the result violates the uncertainty
    /// relation beyond numerical noise.
    pub fn propagate(&self, initial: &MomentState, t: f64) -> Result<MomentState> {
        Ok(self.trajectory(initial, &[t])?.remove(0))
    }

    /// Moments at every requested time.
    pub fn trajectory(&self, initial: &MomentState, times: &[f64]) -> Result<Vec<MomentState>> {
        let props = self.propagators(times)?;
        props
            .iter()
            .map(|p| {
                let s = p.apply(initial);
                check_uncertainty(&s)?;
                Ok(s)
            })
            .collect()
    }

    /// Bath parts of the symmetrized and antisymmetrized position
    /// correlations for each pair (t, t + s): returns (Ψ⁽¹⁾, Φ_bath) with
    /// Ψ⁽¹⁾ = Σ_α ∫(γ/ω)[a u_R u_R′ + b(u_R u_I′ + u_I u_R′) + c u_I u_I′] and
    /// Φ_bath = Σ_α ∫γ[u_R u_I′ − u_I u_R′].
    pub fn bath_position_correlations(&self, pairs: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
        let mut all = Vec::with_capacity(2 * pairs.len());
        for &(t, s) in pairs {
            self.check_time(t)?;
            self.check_time(t + s)?;
            all.push(t);
            all.push(t + s);
        }
        let (sorted, index) = sort_unique(&all);
        let mut reqs = Vec::with_capacity(2 * pairs.len());
        for k in 0..pairs.len() {
            let (i, j) = (index[2 * k], index[2 * k + 1]);
            reqs.push(Request::Sym {
                i,
                ci: Channel::U,
                j,
                cj: Channel::U,
            });
            reqs.push(Request::Anti {
                i,
                ci: Channel::U,
                j,
                cj: Channel::U,
            });
        }
        let vals = self.integrate(&sorted, &reqs);
        Ok(vals.chunks(2).map(|c| (c[0], c[1])).collect())
    }

    /// σ⁽²⁾ contributions to the position correlation for each pair.
    pub fn cross_position_correlations(&self, pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
        let kernels: Vec<(usize, &CrossKernel)> = self
            .scenario
            .baths()
            .iter()
            .enumerate()
            .filter_map(|(k, b)| b.preparation.cross.as_ref().map(|c| (k, c)))
            .collect();
        if kernels.is_empty() {
            return Ok(vec![0.0; pairs.len()]);
        }
        let mut all = Vec::new();
        for &(t, s) in pairs {
            self.check_time(t)?;
            self.check_time(t + s)?;
            all.push(t);
            all.push(t + s);
        }
        let (sorted, index) = sort_unique(&all);
        let t_top = sorted.last().copied().unwrap_or(0.0);
        let mut out = vec![0.0; pairs.len()];
        for (bath, kernel) in kernels {
            let rows = self.cross_rows(bath, kernel, &sorted, t_top, pairs.len())?;
            for (k, o) in out.iter_mut().enumerate() {
                let (i, j) = (index[2 * k], index[2 * k + 1]);
                *o += double_form(kernel, &rows.nodes, &rows.weights, &rows.q[i], &rows.q[j]);
            }
        }
        Ok(out)
    }

    fn cross_covariances(&self, sorted: &[f64]) -> Result<Option<Vec<[[f64; 2]; 2]>>> {
        let kernels: Vec<(usize, &CrossKernel)> = self
            .scenario
            .baths()
            .iter()
            .enumerate()
            .filter_map(|(k, b)| b.preparation.cross.as_ref().map(|c| (k, c)))
            .collect();
        if kernels.is_empty() {
            return Ok(None);
        }
        let t_top = sorted.last().copied().unwrap_or(0.0);
        let mut out = vec![[[0.0; 2]; 2]; sorted.len()];
        for (bath, kernel) in kernels {
            let rows = self.cross_rows(bath, kernel, sorted, t_top, 3 * sorted.len())?;
            for (k, o) in out.iter_mut().enumerate() {
                let (q, p) = (&rows.q[k], &rows.p[k]);
                let qq = double_form(kernel, &rows.nodes, &rows.weights, q, q);
                let qp = 0.5
                    * (double_form(kernel, &rows.nodes, &rows.weights, q, p)
                        + double_form(kernel, &rows.nodes, &rows.weights, p, q));
                let pp = double_form(kernel, &rows.nodes, &rows.weights, p, p);
                o[0][0] += qq;
                o[0][1] += qp;
                o[1][0] += qp;
                o[1][1] += pp;
            }
        }
        Ok(Some(out))
    }

    /// Gauss–Legendre nodes on the σ⁽²⁾ support and the rows
    /// (√(ωγ)u_R, √(γ/ω)u_I) and (√(ωγ)v_R, √(γ/ω)v_I) at each time.
    fn cross_rows(
        &self,
        bath: usize,
        kernel: &CrossKernel,
        sorted: &[f64],
        t_top: f64,
        forms: usize,
    ) -> Result<CrossRows> {
        let (lo, hi) = kernel.support;
        if !(hi > lo && lo >= 0.0) {
            return Err(Error::InvalidPreparation(format!(
                "cross kernel support ({lo}, {hi}) is empty or negative"
            )));
        }
        let width = (hi - lo) / 4.0;
        let width = if t_top > 0.0 {
            width.min(std::f64::consts::PI / (2.0 * t_top))
        } else {
            width
        };
        let n_panels = ((hi - lo) / width).ceil() as usize;
        let edges: Vec<f64> = (0..=n_panels)
            .map(|k| lo + (hi - lo) * k as f64 / n_panels as f64)
            .collect();
        let rule = CompositeRule::gauss_legendre(&edges, 8);
        let n = rule.len();
        let cost = n.saturating_mul(n).saturating_mul(forms.max(1));
        if cost > self.opts.cross_budget {
            return Err(Error::Budget(format!(
                "cross-kernel double integral needs {cost} evaluations, budget {}",
                self.opts.cross_budget
            )));
        }
        let spec = &self.scenario.baths()[bath].spectral;
        let tr = self.response.partial_ft_batch(sorted, &rule.nodes)?;
        let mut q = Vec::with_capacity(sorted.len());
        let mut p = Vec::with_capacity(sorted.len());
        for row in &tr {
            let mut qr = Vec::with_capacity(n);
            let mut pr = Vec::with_capacity(n);
            for (k, &w) in rule.nodes.iter().enumerate() {
                let g = spec.gamma_over_omega(w);
                let (s1, s2) = (w * g.sqrt(), g.sqrt());
                let (u, v) = row[k];
                qr.push([s1 * u.re, s2 * u.im]);
                pr.push([s1 * v.re, s2 * v.im]);
            }
            q.push(qr);
            p.push(pr);
        }
        Ok(CrossRows {
            nodes: rule.nodes,
            weights: rule.weights,
            q,
            p,
        })
    }
}

struct CrossRows {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    q: Vec<Vec<[f64; 2]>>,
    p: Vec<Vec<[f64; 2]>>,
}

fn double_form(kernel: &CrossKernel, nodes: &[f64], weights: &[f64], x: &[[f64; 2]], y: &[[f64; 2]]) -> f64 {
    let mut total = 0.0;
    for (i, &w1) in nodes.iter().enumerate() {
        let mut inner = 0.0;
        for (j, &w2) in nodes.iter().enumerate() {
            let m = kernel.eval(w1, w2);
            let r = x[i];
            let s = y[j];
            inner += weights[j] * (r[0] * (m[0][0] * s[0] + m[0][1] * s[1]) + r[1] * (m[1][0] * s[0] + m[1][1] * s[1]));
        }
        total += weights[i] * inner;
    }
    total
}

/// Contribution of one panel to one request.
fn panel_request(
    nodes: &[Node],
    beta: &[[(C64, C64); PANEL_POINTS]],
    times: &[f64],
    req: &Request,
    weights: &mut impl FnMut(f64) -> [C64; PANEL_POINTS],
) -> f64 {
    let pick = |n: &Node, b: (C64, C64), ch: Channel| -> (C64, C64) {
        match ch {
            Channel::U => (n.uw, b.0),
            Channel::V => (C64::new(0.0, n.omega) * n.uw, b.1),
        }
    };
    match *req {
        Request::Sym { i, ci, j, cj } | Request::Anti { i, ci, j, cj } => {
            let (t1, t2) = (times[i], times[j]);
            let anti = matches!(req, Request::Anti { .. });
            // Coefficients at τ = t1 + t2, t1, t2, t1 − t2, 0.
            let mut coef = [[C64::new(0.0, 0.0); PANEL_POINTS]; 5];
            for (k, n) in nodes.iter().enumerate() {
                let (ai, bi) = pick(n, beta[i][k], ci);
                let (aj, bj) = pick(n, beta[j][k], cj);
                let (s, h) = if anti {
                    (C64::new(0.0, 0.0), C64::new(0.0, n.gamma))
                } else {
                    (C64::new(0.5 * (n.a - n.c), -n.b), C64::new(0.5 * (n.a + n.c), 0.0))
                };
                coef[0][k] = s * ai * aj;
                coef[1][k] = s * ai * bj + h * ai * bj.conj();
                coef[2][k] = s * bi * aj + h.conj() * bi.conj() * aj;
                coef[3][k] = h * ai * aj.conj();
                coef[4][k] = s * bi * bj + h * bi * bj.conj();
            }
            let taus = [t1 + t2, t1, t2, t1 - t2, 0.0];
            let mut total = 0.0;
            for (c, &tau) in coef.iter().zip(&taus) {
                let w = weights(tau);
                let v: C64 = c.iter().zip(&w).map(|(c, w)| c * w).sum();
                total += v.re;
            }
            total
        }
        Request::Mean { i, ci } => {
            let t = times[i];
            let mut c1 = [C64::new(0.0, 0.0); PANEL_POINTS];
            let mut c0 = [C64::new(0.0, 0.0); PANEL_POINTS];
            for (k, n) in nodes.iter().enumerate() {
                let (a, b) = pick(n, beta[i][k], ci);
                c1[k] = C64::new(n.mq, -n.mp) * a;
                c0[k] = C64::new(n.mq * b.re + n.mp * b.im, 0.0);
            }
            let w1 = weights(t);
            let w0 = weights(0.0);
            let v1: C64 = c1.iter().zip(&w1).map(|(c, w)| c * w).sum();
            let v0: C64 = c0.iter().zip(&w0).map(|(c, w)| c * w).sum();
            v1.re + v0.re
        }
    }
}

fn node_data(scenario: &Scenario, sus: &crate::spectral::Susceptibility, w: f64) -> Node {
    let mut n = Node {
        omega: w,
        uw: crate::spectral::full_ft(sus, w),
        ..Default::default()
    };
    for bath in scenario.baths() {
        let g = bath.spectral.gamma_over_omega(w);
        if g == 0.0 {
            continue;
        }
        let [a, b, c] = bath.preparation.scaled_moments(w);
        n.a += g * a;
        n.b += g * b;
        n.c += g * c;
        n.gamma += g * w;
        if bath.preparation.has_means() {
            let [xq, xp] = bath.preparation.mean(w);
            n.mq += w * g.sqrt() * xq;
            n.mp += g.sqrt() * xp;
        }
    }
    n
}

fn check_uncertainty(s: &MomentState) -> Result<()> {
    let det = s.determinant();
    if !(det.is_finite() && det >= 0.25 * (1.0 - 1e-6) && s.cov[0][0] >= 0.0 && s.cov[1][1] >= 0.0) {
        return Err(Error::Consistency(format!(
            "propagated covariance violates the uncertainty relation at t = {}: det = {det}",
            s.t
        )));
    }
    Ok(())
}

/// Sorted distinct values and, for each input, its index in that list.
fn sort_unique(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let index = values.iter().map(|v| sorted.partition_point(|s| s < v)).collect();
    (sorted, index)
}

/// Z_Q(ξ, t) = exp(−ξ²Σ_QQ(t)/2 + iξ⟨Q(t)⟩) for a Gaussian state.
pub fn zq(state: &MomentState, xi: C64) -> C64 {
    (-xi * xi * (0.5 * state.qq()) + C64::i() * xi * state.mean[0]).exp()
}

/// A(t) = 2⟨Q(t)⟩/Σ_QQ(t), the shift in Z_Q(−ξ + iA, t) = Z_Q(ξ, t).
pub fn gc_shift(state: &MomentState) -> Result<f64> {
    if !(state.qq() > 0.0) {
        return Err(Error::Domain(format!(
            "position variance must be > 0, got {}",
            state.qq()
        )));
    }
    Ok(2.0 * state.mean[0] / state.qq())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zq_normalization_and_symmetry() {
        let s = MomentState {
            t: 3.0,
            mean: [0.7, -0.2],
            cov: [[0.9, 0.1], [0.1, 0.6]],
        };
        assert_eq!(zq(&s, C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
        let a = gc_shift(&s).unwrap();
        for &x in &[-2.0, -0.3, 0.0, 1.1, 4.0] {
            let xi = C64::new(x, 0.0);
            let lhs = zq(&s, -xi + C64::new(0.0, a));
            assert!((lhs - zq(&s, xi)).norm() < 1e-14);
        }
    }

    #[test]
    fn gc_shift_from_definition() {
        let s = MomentState::new([1.0, 0.0], [[0.5, 0.0], [0.0, 0.5]]).unwrap();
        assert_eq!(gc_shift(&s).unwrap(), 4.0);
        let z = MomentState {
            cov: [[0.0, 0.0], [0.0, 1.0]],
            ..s
        };
        assert!(gc_shift(&z).is_err());
    }

    #[test]
    fn initial_state_validation() {
        assert!(MomentState::new([0.0; 2], [[0.4, 0.0], [0.0, 0.4]]).is_err());
        assert!(MomentState::new([0.0; 2], [[0.5, 0.1], [0.0, 0.5]]).is_err());
        assert!(MomentState::new([0.0; 2], [[1.0, 0.0], [0.0, 0.25]]).is_ok());
    }

    #[test]
    fn sort_unique_indexes() {
        let (s, i) = sort_unique(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(s, vec![1.0, 2.0, 3.0]);
        assert_eq!(i, vec![2, 0, 2, 1]);
    }
}
