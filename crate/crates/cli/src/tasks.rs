//! One function per task. Each returns its tables, identity checks and the
//! numerical settings it actually used.

use num_complex::Complex64;
use oscfluct::correlations::{
    fdt_check, finite_time_correlations, phi_spectrum, psi_spectrum_by_bath, thermalization_check, CorrelationOptions,
    StationaryCorrelations,
};
use oscfluct::genfunc::{gc_shift, zq, Dynamics, DynamicsOptions, MomentState};
use oscfluct::noise::NoiseKernel;
use oscfluct::oracle::{current_plateau, discretize, ModeLayout, NormalModeSystem};
use oscfluct::preparations::{BathPreparation, SecondMoments};
use oscfluct::scenario::Scenario;
use oscfluct::transport::{Affinity, TransportModel};
use serde_json::{json, Map, Value};

use crate::config::{Grid, InitialState, Task, Tolerances};
use crate::output::{Check, Table};
use crate::CliError;

/// Step for the difference quotients of the generating function.
const CGF_STEP: f64 = 0.005;

#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub achieved: Map<String, Value>,
}

impl Report {
    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.achieved.insert(key.to_string(), value.into());
    }

    fn check(&mut self, c: Check) {
        self.note(&c.name, c.value);
        self.checks.push(c);
    }
}

pub fn run(task: &Task, sc: &Scenario, tol: &Tolerances) -> Result<Report, CliError> {
    match task {
        Task::Fdt { omegas } => fdt(sc, omegas, tol),
        Task::Correlations { lags, omegas } => correlations(sc, lags, omegas, tol),
        Task::Zq { times, xi, initial } => zq_task(sc, times, xi, initial, tol),
        Task::Current { delta_t } => current(sc, delta_t, tol),
        Task::Cgf {
            xi,
            xi_imag,
            affinity_omegas,
        } => cgf(sc, xi, *xi_imag, affinity_omegas, tol),
        Task::Noise { bath, times, lags } => noise(sc, *bath, times, lags, tol),
        Task::OracleCompare {
            modes,
            layout,
            samples,
            initial,
            plateau,
            plateau_layout,
            plateau_initial,
        } => {
            let plateau = plateau.then_some((*plateau_layout, plateau_initial));
            oracle_compare(sc, *modes, *layout, *samples, initial, plateau, tol)
        }
    }
}

/// Temperature of a plainly thermal preparation.
fn plain_temperature(p: &BathPreparation) -> Option<f64> {
    match p.moments {
        SecondMoments::Thermal { temperature } if !p.has_means() && p.cross.is_none() => Some(temperature),
        _ => None,
    }
}

/// Common temperature when every bath is plainly thermal at the same T.
fn equilibrium_temperature(sc: &Scenario) -> Option<f64> {
    let temps: Vec<f64> = sc
        .baths()
        .iter()
        .map(|b| plain_temperature(&b.preparation))
        .collect::<Option<_>>()?;
    let first = *temps.first()?;
    temps.iter().all(|t| *t == first).then_some(first)
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = b.abs();
    if scale > 0.0 {
        (a - b).abs() / scale
    } else {
        (a - b).abs()
    }
}

fn spectra_columns(sc: &Scenario, leading: &[&'static str]) -> Vec<String> {
    let mut cols: Vec<String> = leading.iter().map(|s| s.to_string()).collect();
    cols.extend((0..sc.bath_count()).map(|k| format!("psi_bath{k} [position^2 x time]")));
    cols
}

fn fdt(sc: &Scenario, omegas: &Grid, tol: &Tolerances) -> Result<Report, CliError> {
    let w = omegas.values();
    let rep = fdt_check(sc, &w)?;
    let mut report = Report::default();
    let cols = spectra_columns(
        sc,
        &[
            "omega [frequency]",
            "psi [position^2 x time]",
            "phi_over_i [position^2 x time]",
            "generalized_rhs [position^2 x time]",
        ],
    );
    let mut table = Table {
        name: "fdt".into(),
        columns: cols,
        rows: Vec::new(),
    };
    let mut eq_residual = 0.0_f64;
    let temperature = equilibrium_temperature(sc);
    for (k, &om) in w.iter().enumerate() {
        let phi = phi_spectrum(sc, om)?;
        let mut row = vec![om, rep.lhs[k], phi, rep.rhs[k]];
        row.extend(psi_spectrum_by_bath(sc, om)?);
        table.rows.push(row);
        if let Some(t) = temperature {
            let thermal = 0.5 / (om / (2.0 * t)).tanh() * phi;
            eq_residual = eq_residual.max(relative(rep.lhs[k], thermal));
        }
    }
    report.tables.push(table);
    report.check(Check::bound(
        "generalized_fdt_residual",
        rep.residual,
        tol.fdt_generalized,
    ));
    if temperature.is_some() {
        report.check(Check::bound(
            "equilibrium_fdt_residual",
            eq_residual,
            tol.fdt_equilibrium,
        ));
    }
    let therm = thermalization_check(sc, &w, tol.fdt_equilibrium)?;
    report.check(Check::report("effective_temperature_spread", therm.spread));
    Ok(report)
}

fn correlations(sc: &Scenario, lags: &Grid, omegas: &Grid, tol: &Tolerances) -> Result<Report, CliError> {
    let st = StationaryCorrelations::new(sc, CorrelationOptions::default())?;
    let res = st.evaluate(&lags.values(), &omegas.values())?;
    let mut report = Report::default();
    let mut lag_table = Table::new("lags", &["s [time]", "psi [position^2]", "phi [position^2]"]);
    for ((s, psi), phi) in res.lags.iter().zip(&res.psi_lag).zip(&res.phi_lag) {
        lag_table.push(vec![*s, *psi, *phi]);
    }
    let mut spec_table = Table {
        name: "spectra".into(),
        columns: spectra_columns(
            sc,
            &[
                "omega [frequency]",
                "psi [position^2 x time]",
                "phi_over_i [position^2 x time]",
            ],
        ),
        rows: Vec::new(),
    };
    for k in 0..res.omegas.len() {
        let mut row = vec![res.omegas[k], res.psi_freq[k], res.phi_freq[k]];
        row.extend(res.psi_freq_by_bath[k].iter().copied());
        spec_table.rows.push(row);
    }
    report.tables.push(lag_table);
    report.tables.push(spec_table);
    report.note("stationary_variance", st.variance());
    let rep = fdt_check(sc, &res.omegas)?;
    report.check(Check::bound(
        "generalized_fdt_residual",
        rep.residual,
        tol.fdt_generalized,
    ));
    Ok(report)
}

fn zq_task(
    sc: &Scenario,
    times: &Grid,
    xi: &Grid,
    initial: &InitialState,
    tol: &Tolerances,
) -> Result<Report, CliError> {
    let init = initial.build(sc.omega0())?;
    let t = times.values();
    let d = Dynamics::new(
        sc,
        DynamicsOptions {
            t_max: times.stop.max(1.0),
            ..Default::default()
        },
    )?;
    let traj = d.trajectory(&init, &t)?;
    let mut report = Report::default();
    report.note("frequency_panels", d.panel_count());
    let mut moments = Table::new(
        "moments",
        &[
            "t [time]",
            "q [position]",
            "p [momentum]",
            "qq [position^2]",
            "qp [position x momentum]",
            "pp [momentum^2]",
            "shift_a [1/position]",
        ],
    );
    let mut zt = Table::new(
        "zq",
        &[
            "t [time]",
            "xi [1/position]",
            "re_zq [1]",
            "im_zq [1]",
            "symmetry_residual [1]",
        ],
    );
    let mut worst = 0.0_f64;
    for s in &traj {
        let a = gc_shift(s)?;
        moments.push(vec![s.t, s.mean[0], s.mean[1], s.qq(), s.qp(), s.pp(), a]);
        for x in xi.values() {
            let v = zq(s, Complex64::new(x, 0.0));
            let mirrored = zq(s, Complex64::new(-x, a));
            let r = (mirrored - v).norm() / v.norm();
            worst = worst.max(r);
            zt.push(vec![s.t, x, v.re, v.im, r]);
        }
    }
    report.tables.push(moments);
    report.tables.push(zt);
    report.check(Check::bound("zq_symmetry_residual", worst, tol.zq_symmetry));
    Ok(report)
}

fn current(sc: &Scenario, delta_t: &[f64], tol: &Tolerances) -> Result<Report, CliError> {
    let m = TransportModel::new(sc)?;
    let mut report = Report::default();
    report.note("band_edge", m.band_edge());
    report.note("frequency_nodes", m.node_count());
    let i = m.steady_current();
    let first = m.first_cumulant_rate();
    let second = m.second_cumulant_rate()?;
    let mut t = Table::new(
        "current",
        &[
            "current [energy/time]",
            "first_cumulant [energy/time]",
            "second_cumulant [energy^2/time]",
        ],
    );
    t.push(vec![i, first, second]);
    report.tables.push(t);
    report.check(Check::bound(
        "current_path_difference",
        relative(first, i),
        tol.current_paths,
    ));
    if !delta_t.is_empty() {
        let tr = plain_temperature(&sc.baths()[1].preparation)
            .filter(|_| plain_temperature(&sc.baths()[0].preparation).is_some())
            .ok_or_else(|| CliError::Config("task.delta_t: a temperature sweep needs two thermal baths".into()))?;
        let mut sweep = Table::new(
            "current_sweep",
            &[
                "delta_t [temperature]",
                "current [energy/time]",
                "linear_response [energy/time]",
            ],
        );
        for &dt in delta_t {
            let left = BathPreparation::thermal(tr + dt)
                .map_err(|e| CliError::Config(format!("task.delta_t: {dt} gives {e}")))?;
            let shifted = sc.with_preparations(vec![left, sc.baths()[1].preparation.clone()])?;
            let cur = TransportModel::new(&shifted)?.steady_current();
            sweep.push(vec![dt, cur, m.linear_response_current(tr, dt)?]);
        }
        report.tables.push(sweep);
    }
    Ok(report)
}

fn cgf(sc: &Scenario, xi: &Grid, xi_imag: f64, omegas: &Grid, tol: &Tolerances) -> Result<Report, CliError> {
    let m = TransportModel::new(sc)?;
    let mut report = Report::default();
    report.note("band_edge", m.band_edge());
    report.note("frequency_nodes", m.node_count());
    let xs = xi.values();
    let fields: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(x, xi_imag)).collect();
    let values = m.cgf_many(&fields)?;
    let mut t = Table::new(
        "cgf",
        &["xi_re [1/energy]", "xi_im [1/energy]", "re_g [1/time]", "im_g [1/time]"],
    );
    for (f, g) in fields.iter().zip(&values) {
        t.push(vec![f.re, f.im, g.re, g.im]);
    }
    report.tables.push(t);

    let (c1, c2) = m.cgf_cumulants(CGF_STEP)?;
    report.check(Check::bound(
        "first_cumulant_mismatch",
        relative(c1, m.steady_current()),
        tol.cumulants,
    ));
    report.check(Check::bound(
        "second_cumulant_mismatch",
        relative(c2, m.second_cumulant_rate()?),
        tol.cumulants,
    ));

    let affinity = m.affinity(&omegas.values(), 1e-8)?;
    let (a, exact) = match &affinity {
        Affinity::Constant(a) => (Some(*a), true),
        Affinity::Varying {
            beta_left, beta_right, ..
        } => {
            // No single affinity exists; report the residual for the
            // median of β_r − β_l as a diagnostic.
            let mut diff: Vec<f64> = beta_right.iter().zip(beta_left).map(|(r, l)| r - l).collect();
            diff.sort_by(f64::total_cmp);
            (diff.get(diff.len() / 2).copied(), false)
        }
        Affinity::Undefined { bath, omega } => {
            report.note("affinity_undefined", json!({"bath": bath, "omega": omega}));
            (None, false)
        }
    };
    if let Some(a) = a {
        report.note("affinity", a);
        let mut gc = Table::new("gc", &["xi [1/energy]", "residual [1/time]"]);
        let mut worst = 0.0_f64;
        for &x in &xs {
            let r = m.gc_residual(&[x], a)?;
            worst = worst.max(r);
            gc.push(vec![x, r]);
        }
        report.tables.push(gc);
        if exact {
            report.check(Check::bound("gallavotti_cohen_residual", worst, tol.gallavotti_cohen));
        } else {
            report.check(Check::report("gallavotti_cohen_residual", worst));
        }
    }
    Ok(report)
}

fn noise(sc: &Scenario, bath: usize, times: &Grid, lags: &Grid, tol: &Tolerances) -> Result<Report, CliError> {
    if bath >= sc.bath_count() {
        return Err(CliError::Config(format!(
            "task.bath: index {bath} out of range for {} baths",
            sc.bath_count()
        )));
    }
    let k = NoiseKernel::new(sc, bath)?;
    let mut report = Report::default();
    let (ts, ls) = (times.values(), lags.values());
    let mut surface = Table::new("noise_surface", &["t [time]", "s [time]", "s_corr [force^2]"]);
    let mut drift = 0.0_f64;
    let stationary: Vec<f64> = ls
        .iter()
        .map(|&l| k.stationary_correlation(l.abs()))
        .collect::<Result<_, _>>()?;
    for &t in &ts {
        for (&l, st) in ls.iter().zip(&stationary) {
            let s = t + l;
            if s < 0.0 {
                continue;
            }
            let v = k.correlation(t, s)?;
            drift = drift.max((v - st).abs());
            surface.push(vec![t, s, v]);
        }
    }
    let mut slice = Table::new("noise_stationary", &["lag [time]", "s_corr [force^2]"]);
    for (&l, &v) in ls.iter().zip(&stationary) {
        slice.push(vec![l, v]);
    }
    let mut mean = Table::new(
        "noise_mean",
        &["t [time]", "kernel [frequency^2]", "mean_force [force]"],
    );
    for &t in &ts {
        mean.push(vec![t, k.friction_kernel(t)?, k.mean(t)?]);
    }
    report.tables.extend([surface, slice, mean]);
    if plain_temperature(&sc.baths()[bath].preparation).is_some() {
        report.check(Check::bound("noise_homogeneity", drift, tol.noise_homogeneity));
    } else {
        report.check(Check::report("noise_distance_from_stationary", drift));
    }
    Ok(report)
}

fn oracle_compare(
    sc: &Scenario,
    modes: usize,
    layout: ModeLayout,
    samples: usize,
    initial: &InitialState,
    plateau: Option<(ModeLayout, &InitialState)>,
    tol: &Tolerances,
) -> Result<Report, CliError> {
    let init = initial.build(sc.omega0())?;
    let build = |layout: ModeLayout| -> Result<NormalModeSystem, CliError> {
        let baths = sc
            .baths()
            .iter()
            .map(|b| discretize(&b.spectral, &b.preparation, modes, layout))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NormalModeSystem::new(sc.omega0(), baths)?)
    };
    let sys = build(layout)?;
    let t_rec = layout.recurrence_time(modes)?;
    let d = Dynamics::new(
        sc,
        DynamicsOptions {
            t_max: t_rec,
            ..Default::default()
        },
    )?;
    let mut report = Report::default();
    report.note("recurrence_time", t_rec);
    report.note("oscillators", sys.dim());

    let times: Vec<f64> = (0..samples)
        .map(|k| 0.9 * t_rec * k as f64 / (samples - 1) as f64)
        .collect();
    let exact = d.trajectory(&init, &times)?;
    let oracle = sys.central_trajectory(&init, &times);
    let mut table = Table::new(
        "oracle_moments",
        &[
            "t [time]",
            "u_exact [time]",
            "u_oracle [time]",
            "qq_exact [position^2]",
            "qq_oracle [position^2]",
            "qp_exact [position x momentum]",
            "qp_oracle [position x momentum]",
            "pp_exact [momentum^2]",
            "pp_oracle [momentum^2]",
        ],
    );
    let (mut du, mut u_scale, mut dsig) = (0.0_f64, 0.0_f64, 0.0_f64);
    for ((&t, e), o) in times.iter().zip(&exact).zip(&oracle) {
        let (ue, uo) = (d.response().at(t)[0], sys.response(t));
        du = du.max((ue - uo).abs());
        u_scale = u_scale.max(ue.abs());
        dsig = dsig.max(matrix_deviation(e, o));
        table.push(vec![t, ue, uo, e.qq(), o.qq(), e.qp(), o.qp(), e.pp(), o.pp()]);
    }
    report.tables.push(table);
    report.check(Check::bound("oracle_response_deviation", du / u_scale, tol.oracle));
    report.check(Check::bound("oracle_covariance_deviation", dsig, tol.oracle));

    // Two-time correlations in the middle of the validity window.
    let t0 = 0.45 * t_rec;
    let pairs: Vec<(f64, f64)> = (0..samples)
        .map(|k| (t0, 0.4 * t_rec * k as f64 / (samples - 1) as f64))
        .collect();
    let exact_pairs = finite_time_correlations(&d, &init, &pairs)?;
    let psi0 = exact_pairs[0].0.abs();
    let mut corr = Table::new(
        "oracle_correlations",
        &[
            "t [time]",
            "s [time]",
            "psi_exact [position^2]",
            "psi_oracle [position^2]",
            "phi_exact [position^2]",
            "phi_oracle [position^2]",
        ],
    );
    let mut dpsi = 0.0_f64;
    for (&(t, s), &(pe, fe)) in pairs.iter().zip(&exact_pairs) {
        let (po, fo) = sys.two_time_position_corr(&init, t, s);
        dpsi = dpsi.max((pe - po).abs().max((fe - fo).abs()) / psi0);
        corr.push(vec![t, s, pe, po, fe, fo]);
    }
    report.tables.push(corr);
    report.check(Check::bound("oracle_correlation_deviation", dpsi, tol.oracle));

    if let Some((pl, start)) = plateau {
        let m = TransportModel::new(sc)?;
        let start = start.build(sc.omega0())?;
        let psys = build(pl)?;
        let p_rec = pl.recurrence_time(modes)?;
        let value = current_plateau(&psys, &start, 0, p_rec, 400)?;
        report.note("plateau_recurrence_time", p_rec);
        report.note("plateau_current", value);
        report.check(Check::bound(
            "oracle_plateau_deviation",
            relative(value, m.steady_current()),
            tol.plateau,
        ));
    }
    Ok(report)
}

/// max |Σ_exact − Σ_oracle| over max |Σ_exact|.
fn matrix_deviation(e: &MomentState, o: &MomentState) -> f64 {
    let scale = e.cov.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((e.cov[i][j] - o.cov[i][j]).abs());
        }
    }
    worst / scale
}
