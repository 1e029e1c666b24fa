//! Filon-type Fourier integrals over a finite frequency band.
//!
//! A [`FourierTable`] samples a vector-valued integrand on adaptively refined
//! panels and stores, per panel, the degree-8 interpolant through nine
//! equispaced samples. Transforms `∫ f(ω) e^{iωτ} dω` are then evaluated
//! with exact polynomial-times-exponential moments, so the cost per `τ` is
//! independent of how fast the kernel oscillates.

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use nalgebra::SMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

const NPTS: usize = 9;

/// Monomial coefficients of the interpolant through x_j = -1 + j/4 are
/// obtained by applying this matrix to the sample vector.
fn vandermonde_inverse() -> &'static SMatrix<f64, NPTS, NPTS> {
    static INV: OnceLock<SMatrix<f64, NPTS, NPTS>> = OnceLock::new();
    INV.get_or_init(|| {
        let v = SMatrix::<f64, NPTS, NPTS>::from_fn(|i, j| {
            let x = -1.0 + i as f64 * 0.25;
            x.powi(j as i32)
        });
        v.try_inverse().expect("equispaced Vandermonde matrix is invertible")
    })
}

/// Weights that evaluate the quartic through x = -1, -1/2, 0, 1/2, 1 at the
/// four interior midpoints ±1/4, ±3/4.
fn quartic_midpoint_weights() -> &'static [[f64; 5]; 4] {
    static W: OnceLock<[[f64; 5]; 4]> = OnceLock::new();
    W.get_or_init(|| {
        let nodes = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let targets = [-0.75, -0.25, 0.25, 0.75];
        let mut out = [[0.0; 5]; 4];
        for (row, &x) in out.iter_mut().zip(&targets) {
            for (j, w) in row.iter_mut().enumerate() {
                let mut l = 1.0;
                for (m, &xm) in nodes.iter().enumerate() {
                    if m != j {
                        l *= (x - xm) / (nodes[j] - xm);
                    }
                }
                *w = l;
            }
        }
        out
    })
}

/// Below this |θ| the per-panel Taylor expansion replaces the upward
/// moment recursion, whose error grows like k!/θ^k.
const TAYLOR_THETA: f64 = 2.0;
const NTAYLOR: usize = 34;

/// Exact moments M_k(θ) = ∫_{-1}^{1} x^k e^{iθx} dx for k = 0..8.
pub fn moments(theta: f64) -> [Complex64; NPTS] {
    if theta.abs() < TAYLOR_THETA {
        let mut m = [Complex64::new(0.0, 0.0); NPTS];
        let it = Complex64::new(0.0, theta);
        for (k, mk) in m.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            for n in 0..NTAYLOR {
                if (k + n) % 2 == 0 {
                    *mk += term * (2.0 / (k + n + 1) as f64);
                }
                term = term * it / (n + 1) as f64;
            }
        }
        m
    } else {
        moments_from_rotation(theta, Complex64::new(theta.cos(), theta.sin()))
    }
}

/// Number of equispaced samples per panel.
pub const PANEL_POINTS: usize = NPTS;

/// The equispaced sample points of the panel [a, b].
pub fn panel_nodes(a: f64, b: f64) -> [f64; NPTS] {
    std::array::from_fn(|j| a + (b - a) * j as f64 / 8.0)
}

/// Weights W_j with ∫_a^b p(ω) e^{iωτ} dω = Σ_j W_j f(ω_j), where p is the
/// degree-8 interpolant of f through [`panel_nodes`].
pub fn panel_weights(a: f64, b: f64, tau: f64) -> [Complex64; NPTS] {
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    let m = moments(tau * half);
    let phase = Complex64::from_polar(half, tau * center);
    let inv = vandermonde_inverse();
    std::array::from_fn(|j| {
        let mut s = Complex64::new(0.0, 0.0);
        for (i, mi) in m.iter().enumerate() {
            s += mi * inv[(i, j)];
        }
        s * phase
    })
}

#[derive(Debug, Clone)]
struct Panel<const K: usize> {
    center: f64,
    half: f64,
    coeffs: [[f64; NPTS]; K],
    /// power[k][n] = ∫ x^n p_k(x) dx, the Taylor coefficients in θ.
    power: [[f64; NTAYLOR]; K],
}

impl<const K: usize> Panel<K> {
    /// ∫_{-1}^{1} p_k(x) e^{iθx} dx for every channel; `e` is e^{iθ}.
    #[inline]
    fn unit_integral(&self, theta: f64, e: Complex64) -> [Complex64; K] {
        let mut out = [Complex64::new(0.0, 0.0); K];
        if theta.abs() < TAYLOR_THETA {
            // Σ_n (iθ)^n/n! · power[n]; powers of i cycle through 1, i, −1, −i.
            let mut re = [0.0; K];
            let mut im = [0.0; K];
            let mut c = 1.0;
            for n in 0..NTAYLOR {
                for k in 0..K {
                    let v = c * self.power[k][n];
                    match n % 4 {
                        0 => re[k] += v,
                        1 => im[k] += v,
                        2 => re[k] -= v,
                        _ => im[k] -= v,
                    }
                }
                c *= theta / (n + 1) as f64;
            }
            for k in 0..K {
                out[k] = Complex64::new(re[k], im[k]);
            }
        } else {
            let m = moments_from_rotation(theta, e);
            for k in 0..K {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..NPTS {
                    s += m[i] * self.coeffs[k][i];
                }
                out[k] = s;
            }
        }
        out
    }
}

struct Pending<const K: usize> {
    a: f64,
    b: f64,
    samples: [[f64; K]; NPTS],
    score: f64,
}

impl<const K: usize> PartialEq for Pending<K> {
    fn eq(&self, o: &Self) -> bool {
        self.score == o.score
    }
}
impl<const K: usize> Eq for Pending<K> {}
impl<const K: usize> PartialOrd for Pending<K> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<const K: usize> Ord for Pending<K> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.score.total_cmp(&o.score)
    }
}

/// Piecewise-polynomial representation of a K-channel integrand on a
/// finite band, ready for repeated Fourier transforms.
#[derive(Debug, Clone)]
pub struct FourierTable<const K: usize> {
    panels: Vec<Panel<K>>,
    /// Estimated L1 interpolation error per channel.
    pub error: [f64; K],
    /// Integration band.
    pub band: (f64, f64),
}

fn panel_score<const K: usize>(samples: &[[f64; K]; NPTS], width: f64, tol: &[f64; K]) -> (f64, [f64; K]) {
    let w = quartic_midpoint_weights();
    let mut errs = [0.0; K];
    for (k, e) in errs.iter_mut().enumerate() {
        let coarse = [
            samples[0][k],
            samples[2][k],
            samples[4][k],
            samples[6][k],
            samples[8][k],
        ];
        let fine = [samples[1][k], samples[3][k], samples[5][k], samples[7][k]];
        let mut worst: f64 = 0.0;
        for (row, &actual) in w.iter().zip(&fine) {
            let p: f64 = row.iter().zip(&coarse).map(|(a, b)| a * b).sum();
            worst = worst.max((p - actual).abs());
        }
        *e = worst * width;
    }
    let score = errs.iter().zip(tol).fold(0.0_f64, |m, (e, t)| m.max(e / t));
    (score, errs)
}

impl<const K: usize> FourierTable<K> {
    /// Samples `f` on adaptively bisected panels covering the span of
    /// `breakpoints` until the summed per-channel L1 interpolation error
    /// is below `tol[k]` for every channel.
    pub fn build(
        f: impl Fn(f64) -> [f64; K] + Sync,
        breakpoints: &[f64],
        tol: [f64; K],
        max_panels: usize,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Domain("Fourier table needs at least one panel".into()));
        }
        let sample_panel = |a: f64, b: f64| -> [[f64; K]; NPTS] {
            let mut s = [[0.0; K]; NPTS];
            for (j, sj) in s.iter_mut().enumerate() {
                *sj = f(a + (b - a) * j as f64 / 8.0);
            }
            s
        };
        let mut heap: BinaryHeap<Pending<K>> = BinaryHeap::new();
        let mut total_err = [0.0; K];
        for pair in breakpoints.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let samples = sample_panel(a, b);
            check_finite(&samples, a, b)?;
            let (score, errs) = panel_score(&samples, b - a, &tol);
            for k in 0..K {
                total_err[k] += errs[k];
            }
            heap.push(Pending { a, b, samples, score });
        }
        let within = |e: &[f64; K]| e.iter().zip(&tol).all(|(e, t)| e <= t);
        while !within(&total_err) {
            if heap.len() >= max_panels {
                return Err(Error::Tolerance(format!(
                    "Fourier table exceeded {max_panels} panels; error {total_err:?} vs {tol:?}"
                )));
            }
            let worst = heap.pop().expect("non-empty");
            let (_, old) = panel_score(&worst.samples, worst.b - worst.a, &tol);
            let m = 0.5 * (worst.a + worst.b);
            if m <= worst.a || m >= worst.b {
                heap.push(worst);
                break;
            }
            for (lo, hi, base) in [(worst.a, m, 0usize), (m, worst.b, 4usize)] {
                let mut s = [[0.0; K]; NPTS];
                for j in 0..5 {
                    s[2 * j] = worst.samples[base + j];
                }
                for j in 0..4 {
                    s[2 * j + 1] = f(lo + (hi - lo) * (2 * j + 1) as f64 / 8.0);
                }
                check_finite(&s, lo, hi)?;
                let (score, errs) = panel_score(&s, hi - lo, &tol);
                for k in 0..K {
                    total_err[k] += errs[k];
                }
                heap.push(Pending {
                    a: lo,
                    b: hi,
                    samples: s,
                    score,
                });
            }
            for k in 0..K {
                total_err[k] = (total_err[k] - old[k]).max(0.0);
            }
        }
        let inv = vandermonde_inverse();
        let mut panels: Vec<Panel<K>> = heap
            .into_iter()
            .map(|p| {
                let mut coeffs = [[0.0; NPTS]; K];
                for (k, ck) in coeffs.iter_mut().enumerate() {
                    for (i, ci) in ck.iter_mut().enumerate() {
                        *ci = (0..NPTS).map(|j| inv[(i, j)] * p.samples[j][k]).sum();
                    }
                }
                let mut power = [[0.0; NTAYLOR]; K];
                for k in 0..K {
                    for (n, pn) in power[k].iter_mut().enumerate() {
                        *pn = coeffs[k]
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| (i + n) % 2 == 0)
                            .map(|(i, c)| c * 2.0 / (i + n + 1) as f64)
                            .sum();
                    }
                }
                Panel {
                    center: 0.5 * (p.a + p.b),
                    half: 0.5 * (p.b - p.a),
                    coeffs,
                    power,
                }
            })
            .collect();
        panels.sort_by(|a, b| a.center.total_cmp(&b.center));
        let band = (breakpoints[0], *breakpoints.last().expect("len >= 2"));
        Ok(Self {
            panels,
            error: total_err,
            band,
        })
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    /// Panel edges in increasing order.
    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.panels.iter().map(|p| p.center - p.half).collect();
        if let Some(last) = self.panels.last() {
            e.push(last.center + last.half);
        }
        e
    }

    /// `∫ f_k(ω) e^{iωτ} dω` for every channel.
    pub fn transform(&self, tau: f64) -> [Complex64; K] {
        let mut out = [Complex64::new(0.0, 0.0); K];
        for p in &self.panels {
            let theta = tau * p.half;
            let v = p.unit_integral(theta, Complex64::new(theta.cos(), theta.sin()));
            let phase = Complex64::from_polar(p.half, tau * p.center);
            for k in 0..K {
                out[k] += v[k] * phase;
            }
        }
        out
    }

    /// Plain integral `∫ f_k(ω) dω` of the interpolant.
    pub fn integral(&self) -> [f64; K] {
        let t = self.transform(0.0);
        let mut out = [0.0; K];
        for k in 0..K {
            out[k] = t[k].re;
        }
        out
    }

    /// Transforms at τ_j = j·dt for j = 0..n, using rotation recurrences
    /// that are re-synchronised periodically.
    pub fn transform_grid(&self, dt: f64, n: usize) -> Vec<[Complex64; K]> {
        const BLOCK: usize = 256;
        const RESYNC: usize = 32;
        let blocks: Vec<usize> = (0..n.div_ceil(BLOCK)).collect();
        let chunks: Vec<Vec<[Complex64; K]>> = blocks
            .par_iter()
            .map(|&b| {
                let start = b * BLOCK;
                let end = ((b + 1) * BLOCK).min(n);
                let mut out = vec![[Complex64::new(0.0, 0.0); K]; end - start];
                for p in &self.panels {
                    let step_theta = Complex64::from_polar(1.0, dt * p.half);
                    let step_phase = Complex64::from_polar(1.0, dt * p.center);
                    let mut rot_theta = Complex64::new(1.0, 0.0);
                    let mut rot_phase = Complex64::new(1.0, 0.0);
                    for (offset, slot) in out.iter_mut().enumerate() {
                        let j = start + offset;
                        if offset % RESYNC == 0 {
                            let tau = j as f64 * dt;
                            rot_theta = Complex64::from_polar(1.0, tau * p.half);
                            rot_phase = Complex64::from_polar(1.0, tau * p.center);
                        }
                        let theta = j as f64 * dt * p.half;
                        let v = p.unit_integral(theta, rot_theta);
                        let phase = rot_phase * p.half;
                        for k in 0..K {
                            slot[k] += v[k] * phase;
                        }
                        rot_theta *= step_theta;
                        rot_phase *= step_phase;
                    }
                }
                out
            })
            .collect();
        chunks.into_iter().flatten().collect()
    }
}

fn check_finite<const K: usize>(s: &[[f64; K]; NPTS], a: f64, b: f64) -> Result<()> {
    if s.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Tolerance(format!("non-finite integrand on panel [{a}, {b}]")))
    }
}

fn moments_from_rotation(theta: f64, e: Complex64) -> [Complex64; NPTS] {
    let mut m = [Complex64::new(0.0, 0.0); NPTS];
    let ec = e.conj();
    let inv_it = Complex64::new(0.0, -1.0 / theta);
    m[0] = Complex64::new(2.0 * e.im / theta, 0.0);
    for k in 1..NPTS {
        let boundary = if k % 2 == 0 { e - ec } else { e + ec };
        m[k] = (boundary - m[k - 1] * k as f64) * inv_it;
    }
    m
}
