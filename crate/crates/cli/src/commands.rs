use serde::Serialize;

use cqed_pairs::analysis::{
    classify_events, coincidence_probability, exit_states, merit_figures, success_probability,
    EventClass, MeritFigures,
};
use cqed_pairs::coherent::{calibrate_pulse, evolve_with_stride, final_population, pulse_area, CalibrationMode};
use cqed_pairs::fock_space::{Cavity, Sector};
use cqed_pairs::lindblad::exit_density;
use cqed_pairs::mcwf::{binomial_se, run_ensemble, ClickPattern, Ensemble, Observable, TrajectoryDump, Window};
use cqed_pairs::model::{coupling, detunings_in_units_of_g};
use cqed_pairs::{Basis, Error, ModelParams, NamedState, StateVector};

use crate::config::{CalibrationKind, CalibrationTarget, Resolved};
use crate::output::{fmt, output_path, write_csv, write_json, write_ndjson, Provenance};
use crate::CliError;

/// Largest `|z|` accepted by `oracle-check`.
pub const Z_LIMIT: f64 = 3.0;

/// Largest step of the master-equation reference in `oracle-check`.
pub const ORACLE_DT: f64 = 1e-3;

const POPULATION_COLUMNS: [&str; 5] = ["pop_I", "pop_B", "pop_D", "pop_Eplus", "pop_Eminus"];

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Merit figures, with the post-selected quantities set to NaN when no
/// trajectory ends with one photon in each cavity.
fn merit_or_undefined(states: &[StateVector]) -> Result<MeritFigures, CliError> {
    match merit_figures(states) {
        Err(Error::NoPostSelection) => {
            let (p, p2) = (success_probability(states), coincidence_probability(states));
            Ok(MeritFigures {
                n_traj: states.len(),
                P: p.value,
                p2ph: p2.value,
                alpha: f64::NAN,
                F_model: f64::NAN,
                F_direct: f64::NAN,
                S_fixed: f64::NAN,
                S_opt: f64::NAN,
                se_P: p.se,
                se_p2ph: p2.se,
                se_alpha: f64::NAN,
                se_F_model: f64::NAN,
                se_F_direct: f64::NAN,
                se_S_fixed: f64::NAN,
                se_S_opt: f64::NAN,
            })
        }
        other => Ok(other?),
    }
}

pub fn coherent(run: &Resolved) -> Result<Vec<String>, CliError> {
    let p = run.model();
    let basis = Basis::simulation(p.n_max)?;
    let stride = run.config.stride.unwrap_or(10);
    let ev = evolve_with_stride(&NamedState::I.vector(&basis), p, 0.0, p.t_exit(), run.step(), stride)?;
    let mut header = strings(&["g_t"]);
    header.extend(strings(&POPULATION_COLUMNS));
    header.extend(strings(&["g1_of_t", "g2_of_t"]));
    let rows: Vec<Vec<String>> = ev
        .times
        .iter()
        .zip(&ev.states)
        .map(|(&t, psi)| {
            let mut row = vec![fmt(t)];
            row.extend(NamedState::ALL.iter().map(|n| fmt(n.population(psi))));
            row.push(fmt(coupling(Cavity::One, t, p)));
            row.push(fmt(coupling(Cavity::Two, t, p)));
            row
        })
        .collect();
    let path = output_path(&run.config.out, "coherent.csv")?;
    write_csv(&path, &Provenance::new("coherent", run, "exit"), &header, &rows)?;
    Ok(vec![
        format!("final pop_Eplus = {}", NamedState::EPlus.population(ev.final_state())),
        format!("wrote {}", path.display()),
    ])
}

#[derive(Serialize)]
struct EventRow {
    class: &'static str,
    probability: f64,
    se: f64,
}

#[derive(Serialize)]
struct TrajectoriesReport {
    provenance: Provenance,
    merit: MeritFigures,
    norm_violations: u64,
    mean_residual_photons: f64,
    click_counts: Option<Vec<(ClickPattern, u64)>>,
    events: Option<Vec<EventRow>>,
}

pub fn trajectories(run: &Resolved) -> Result<Vec<String>, CliError> {
    let p = run.model();
    let window = run.config.window;
    let ens = run_ensemble(p, &run.ensemble(window))?;
    let stats = &ens.stats;
    let basis = Basis::simulation(p.n_max)?;

    let mut columns: Vec<(String, Observable, bool)> = Vec::new();
    for s in Sector::SIMULATION {
        columns.push((Observable::Sector(s).label(&basis), Observable::Sector(s), false));
    }
    for s in Sector::SIMULATION {
        columns.push((format!("se_{}", Observable::Sector(s).label(&basis)), Observable::Sector(s), true));
    }
    for (name, label) in NamedState::ALL.iter().zip(POPULATION_COLUMNS) {
        columns.push((label.to_string(), Observable::Named(*name), false));
    }
    let mut header = vec!["g_t".to_string()];
    header.extend(columns.iter().map(|c| c.0.clone()));
    let index: Vec<(usize, bool)> = columns
        .iter()
        .map(|(_, obs, se)| (stats.index_of(*obs).expect("standard observable"), *se))
        .collect();
    let rows: Vec<Vec<String>> = (0..stats.times.len())
        .map(|k| {
            let mut row = vec![fmt(stats.times[k])];
            row.extend(index.iter().map(|&(i, se)| {
                fmt(if se { stats.std_error[i][k] } else { stats.mean[i][k] })
            }));
            row
        })
        .collect();

    let merit = merit_or_undefined(&exit_states(&ens.records))?;
    let events = match window {
        Window::Exit => None,
        Window::LeakOut { .. } => {
            let success = success_probability(&exit_states(&ens.records));
            let classes = classify_events(&ens.records, success)?;
            Some(
                EventClass::ALL
                    .iter()
                    .map(|&c| {
                        let e = classes.get(c);
                        EventRow { class: c.label(), probability: e.value, se: e.se }
                    })
                    .collect(),
            )
        }
    };
    let prov = Provenance::new("trajectories", run, window.label());
    let out = &run.config.out;
    let csv_path = output_path(out, "trajectories.csv")?;
    write_csv(&csv_path, &prov, &header, &rows)?;
    let report = TrajectoriesReport {
        provenance: prov,
        merit,
        norm_violations: stats.norm_violations,
        mean_residual_photons: stats.mean_residual_photons,
        click_counts: stats
            .click_counts
            .map(|c| ClickPattern::ALL.iter().copied().zip(c).collect()),
        events,
    };
    let json_path = output_path(out, "merit.json")?;
    write_json(&json_path, &report)?;
    let mut lines = vec![
        format!(
            "P = {} +- {}, F_model = {}, S_fixed = {}, S_opt = {} ({} window)",
            merit.P,
            merit.se_P,
            merit.F_model,
            merit.S_fixed,
            merit.S_opt,
            window.label()
        ),
        format!("wrote {}", csv_path.display()),
        format!("wrote {}", json_path.display()),
    ];
    if run.config.dump_trajectories {
        let path = dump(&ens, out)?;
        lines.push(format!("wrote {}", path.display()));
    }
    Ok(lines)
}

fn dump(ens: &Ensemble, out: &std::path::Path) -> Result<std::path::PathBuf, CliError> {
    let path = output_path(out, "trajectories.ndjson")?;
    write_ndjson(&path, ens.records.iter().map(TrajectoryDump::from))?;
    Ok(path)
}

#[derive(Serialize)]
struct DecayPoint {
    kappa_over_g: f64,
    gamma_over_g: f64,
    merit: MeritFigures,
}

#[derive(Serialize)]
struct SweepReport<T> {
    provenance: Provenance,
    points: Vec<T>,
}

pub fn sweep_decay(run: &Resolved) -> Result<Vec<String>, CliError> {
    let c = &run.config;
    if c.kappa_grid.is_empty() || c.gamma_grid.is_empty() {
        return Err(CliError::Usage("sweep-decay needs non-empty kappa and gamma grids".into()));
    }
    let cfg = run.ensemble(Window::Exit);
    let mut points = Vec::new();
    for &kappa in &c.kappa_grid {
        for &gamma in &c.gamma_grid {
            let p = run.model().clone().with_kappa(kappa).with_gamma(gamma);
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let ens = run_ensemble(&p, &cfg)?;
            let merit = merit_or_undefined(&exit_states(&ens.records))?;
            points.push(DecayPoint { kappa_over_g: kappa, gamma_over_g: gamma, merit });
        }
    }
    let header = strings(&[
        "kappa_over_g",
        "gamma_over_g",
        "P",
        "F_model",
        "F_direct",
        "S_fixed",
        "S_opt",
        "se_P",
    ]);
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|d| {
            let m = &d.merit;
            [d.kappa_over_g, d.gamma_over_g, m.P, m.F_model, m.F_direct, m.S_fixed, m.S_opt, m.se_P]
                .map(fmt)
                .to_vec()
        })
        .collect();
    let prov = Provenance::new("sweep-decay", run, "exit");
    let csv_path = output_path(&c.out, "sweep_decay.csv")?;
    write_csv(&csv_path, &prov, &header, &rows)?;
    let json_path = output_path(&c.out, "sweep_decay.json")?;
    write_json(&json_path, &SweepReport { provenance: prov, points })?;
    Ok(vec![
        format!("{} grid points", rows.len()),
        format!("wrote {}", csv_path.display()),
        format!("wrote {}", json_path.display()),
    ])
}

/// `(B, single, two)` grid points; detunings follow `Delta+- = (single +- two) / 2`.
fn detuning_points(run: &Resolved) -> Result<Vec<(Option<f64>, f64, f64)>, CliError> {
    let c = &run.config;
    let points: Vec<(Option<f64>, f64, f64)> = match &c.b_grid {
        Some(fields) => fields
            .iter()
            .map(|&b| {
                let (dp, dm) = detunings_in_units_of_g(b, c.lande_g, c.g_over_2pi_mhz * 1e6);
                (Some(b), dp + dm, dp - dm)
            })
            .collect(),
        None => c
            .single_photon_grid
            .iter()
            .flat_map(|&s| c.two_photon_grid.iter().map(move |&t| (None, s, t)))
            .collect(),
    };
    if points.is_empty() {
        return Err(CliError::Usage("sweep-detuning needs a non-empty grid".into()));
    }
    Ok(points)
}

pub fn sweep_detuning(run: &Resolved) -> Result<Vec<String>, CliError> {
    let c = &run.config;
    let points = detuning_points(run)?;
    let field_mode = c.b_grid.is_some();
    let cfg = run.ensemble(Window::Exit);
    let mut rows = Vec::with_capacity(points.len());
    for (b, single, two) in points {
        let (dp, dm) = ((single + two) / 2.0, (single - two) / 2.0);
        let p = run.model().clone().with_detunings(dp, dm);
        let (value, se, engine) = if p.is_closed() {
            (final_population(&p, p.t_exit(), run.step(), NamedState::EPlus)?, 0.0, "coherent")
        } else {
            let e = success_probability(&exit_states(&run_ensemble(&p, &cfg)?.records));
            (e.value, e.se, "mcwf")
        };
        let mut row = Vec::new();
        if let Some(b) = b {
            row.push(fmt(b));
        }
        row.extend([single, two, dp, dm, value, se].map(fmt));
        row.push(engine.to_string());
        rows.push(row);
    }
    let mut header = if field_mode { strings(&["B_tesla"]) } else { Vec::new() };
    header.extend(strings(&[
        "single_photon_detuning",
        "two_photon_detuning",
        "delta_plus",
        "delta_minus",
        "P",
        "se_P",
        "engine",
    ]));
    let path = output_path(&c.out, "sweep_detuning.csv")?;
    write_csv(&path, &Provenance::new("sweep-detuning", run, "exit"), &header, &rows)?;
    Ok(vec![format!("{} grid points", rows.len()), format!("wrote {}", path.display())])
}

#[derive(Serialize)]
struct CalibrationReport {
    provenance: Provenance,
    target_area: f64,
    area_cavity1: f64,
    area_cavity2: f64,
    params: ModelParams,
}

pub fn calibrate(run: &Resolved) -> Result<Vec<String>, CliError> {
    let cal = &run.config.calibration;
    let mode = match cal.mode {
        CalibrationKind::Amplitude => CalibrationMode::Amplitude,
        CalibrationKind::Width => CalibrationMode::Width,
    };
    let cavities: &[Cavity] = match cal.cavity {
        CalibrationTarget::One => &[Cavity::One],
        CalibrationTarget::Two => &[Cavity::Two],
        CalibrationTarget::Both => &[Cavity::One, Cavity::Two],
    };
    let mut p = run.model().clone();
    for &cavity in cavities {
        p = calibrate_pulse(&p, cavity, cal.target_area, mode)?;
    }
    let report = CalibrationReport {
        provenance: Provenance::new("calibrate", run, "exit"),
        target_area: cal.target_area,
        area_cavity1: pulse_area(&p, Cavity::One),
        area_cavity2: pulse_area(&p, Cavity::Two),
        params: p,
    };
    let path = output_path(&run.config.out, "calibrated_params.json")?;
    write_json(&path, &report)?;
    Ok(vec![
        format!(
            "areas: cavity 1 = {}, cavity 2 = {}; amp1 = {}, amp2 = {}, tau1 = {}, tau2 = {}",
            report.area_cavity1,
            report.area_cavity2,
            report.params.amp1,
            report.params.amp2,
            report.params.tau1,
            report.params.tau2
        ),
        format!("wrote {}", path.display()),
    ])
}

#[derive(Serialize)]
struct StateComparison {
    state: String,
    mcwf: f64,
    se: f64,
    lindblad: f64,
    z: f64,
}

#[derive(Serialize)]
struct OracleReport {
    provenance: Provenance,
    z_limit: f64,
    oracle_dt: f64,
    max_abs_z: f64,
    passed: bool,
    states: Vec<StateComparison>,
}

/// `(x - exact) / se`, with `0 / 0 = 0`.
fn z_score(x: f64, exact: f64, se: f64) -> f64 {
    let diff = x - exact;
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY.copysign(diff)
    } else {
        diff / se
    }
}

pub fn oracle_check(run: &Resolved) -> Result<Vec<String>, CliError> {
    let p = run.model();
    let n = run.config.n_traj;
    let ens = run_ensemble(p, &run.ensemble(Window::Exit))?;
    let rho = exit_density(p, run.step().min(ORACLE_DT))?;
    let basis = rho.basis();
    let states: Vec<StateComparison> = (0..basis.len())
        .map(|i| {
            let (mcwf, se_hat) = ens.stats.final_value(Observable::Basis(i)).expect("basis observable");
            let lindblad = rho.population(i);
            let se = se_hat.max(binomial_se(lindblad, n));
            StateComparison { state: basis.state(i).to_string(), mcwf, se, lindblad, z: z_score(mcwf, lindblad, se) }
        })
        .collect();
    let max_abs_z = states.iter().map(|s| s.z.abs()).fold(0.0, f64::max);
    let passed = max_abs_z <= Z_LIMIT;
    let prov = Provenance::new("oracle-check", run, "exit");
    let header = strings(&["state", "mcwf", "se", "lindblad", "z"]);
    let rows: Vec<Vec<String>> = states
        .iter()
        .map(|s| vec![s.state.clone(), fmt(s.mcwf), fmt(s.se), fmt(s.lindblad), fmt(s.z)])
        .collect();
    let out = &run.config.out;
    let csv_path = output_path(out, "oracle_check.csv")?;
    write_csv(&csv_path, &prov, &header, &rows)?;
    let json_path = output_path(out, "oracle_check.json")?;
    write_json(&json_path, &OracleReport {
            provenance: prov,
            z_limit: Z_LIMIT,
            oracle_dt: run.step().min(ORACLE_DT),
            max_abs_z, passed, states })?;
    let summary = format!("max |z| = {max_abs_z:.3} over {} states (limit {Z_LIMIT})", basis.len());
    if !passed {
        return Err(CliError::Validation(format!("MCWF and Lindblad populations disagree: {summary}")));
    }
    Ok(vec![
        summary,
        format!("wrote {}", csv_path.display()),
        format!("wrote {}", json_path.display()),
    ])
}
