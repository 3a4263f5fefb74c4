//! Turn a parsed `RunConfig` into trajectories, steady-state summaries,
//! sweeps, convergence reports and oracle checks. All text output is
//! deterministic byte-for-byte except fields that record wall time.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, Array};
use num_complex::Complex;
use rayon::prelude::*;

use crate::config::{CouplingOp, InitialState, Method, RunConfig, SpectralBlock};
use crate::propagation::{
    channel_fixed_point, pinv, trotter_order, BathSetup, PropagationOptions, Propagator,
};
use crate::reference::four_level::FourLevelModel;
use crate::reference::oracles::{dense_history_maps, SingleModeEd};
use crate::reference::polaron::PolaronModel;
use crate::reference::rc;
use crate::system::{excited_projector, sigma_x, vectorize, devectorize, SystemSpec};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Bath(#[from] crate::baths::BathError),
    #[error(transparent)]
    Propagation(#[from] crate::propagation::PropagationError),
    #[error(transparent)]
    System(#[from] crate::system::SystemError),
    #[error(transparent)]
    Linalg(#[from] crate::scalar::LinalgError),
    #[error("method setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn setup_err(msg: impl Into<String>) -> RunError {
    RunError::Setup(msg.into())
}

/// One sampled time in a trajectory.
#[derive(Debug, Clone)]
pub struct TrajRow {
    pub t: f64,
    pub rho: Array2<Complex<f64>>,
    /// Largest bond dimension seen up to this time, over all baths.
    pub max_bond: usize,
    /// Accumulated relative discarded SVD weight, summed over baths.
    pub discarded: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub trajectory: Vec<TrajRow>,
    /// Ordered `key = value` pairs for the summary file.
    pub summary: Vec<(String, String)>,
    pub steady_rho_ee: Option<f64>,
    pub drift: Option<f64>,
    pub max_bond: usize,
}

pub fn initial_state(which: InitialState) -> Array2<Complex<f64>> {
    let z = Complex::new(0.0, 0.0);
    let h = Complex::new(0.5, 0.0);
    let o = Complex::new(1.0, 0.0);
    match which {
        InitialState::Ground => Array::from_shape_vec((2, 2), vec![o, z, z, z]).unwrap(),
        InitialState::Excited => Array::from_shape_vec((2, 2), vec![z, z, z, o]).unwrap(),
        InitialState::Mixed => Array::from_shape_vec((2, 2), vec![h, z, z, h]).unwrap(),
        InitialState::Plus => Array::from_shape_vec((2, 2), vec![h, h, h, h]).unwrap(),
    }
}

fn coupling_matrix(op: CouplingOp) -> Array2<Complex<f64>> {
    match op {
        CouplingOp::SigmaZProj => excited_projector(),
        CouplingOp::SigmaX => sigma_x(),
    }
}

pub fn build_system(cfg: &RunConfig) -> Result<SystemSpec<f64>, RunError> {
    let h = excited_projector::<f64>().mapv(|z| z * cfg.system.splitting_ev);
    let ops = cfg
        .baths
        .iter()
        .map(|b| coupling_matrix(b.coupling))
        .collect();
    Ok(SystemSpec::new(h, ops)?)
}

fn build_setups(cfg: &RunConfig) -> Result<Vec<BathSetup<f64>>, RunError> {
    cfg.baths
        .iter()
        .enumerate()
        .map(|(i, b)| b.to_setup(i).map_err(RunError::from))
        .collect()
}

fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

fn rho_ee(rho: &Array2<Complex<f64>>) -> f64 {
    rho[(1, 1)].re
}

/// Locate the single optical (`sigma_x`) and single diagonal
/// (`sigma_z_proj`) bath required by the reference methods.
fn split_optical_vibrational(cfg: &RunConfig) -> Result<(usize, usize), RunError> {
    let optical: Vec<usize> = cfg
        .baths
        .iter()
        .enumerate()
        .filter(|(_, b)| b.coupling == CouplingOp::SigmaX)
        .map(|(i, _)| i)
        .collect();
    let vib: Vec<usize> = cfg
        .baths
        .iter()
        .enumerate()
        .filter(|(_, b)| b.coupling == CouplingOp::SigmaZProj)
        .map(|(i, _)| i)
        .collect();
    if optical.len() != 1 || vib.len() != 1 {
        return Err(setup_err(
            "this method needs exactly one sigma_x bath and one sigma_z_proj bath",
        ));
    }
    Ok((optical[0], vib[0]))
}

pub fn run_config(cfg: &RunConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    match cfg.method {
        Method::Tempo => run_tempo(cfg),
        Method::DenseOracle => run_dense(cfg),
        Method::SingleModeEd => run_single_mode(cfg),
        Method::Polaron => run_polaron(cfg),
        Method::Rc => run_rc(cfg),
        Method::FourLevel => run_four_level(cfg),
    }
}

fn run_tempo(cfg: &RunConfig) -> Result<RunResult, RunError> {
    let system = build_system(cfg)?;
    let setups = build_setups(cfg)?;
    let opts = PropagationOptions {
        delta_p: cfg.numerics.delta_p_inv_ev,
        n_steps: cfg.numerics.steps,
        chi: cfg.numerics.chi,
        steady: None,
    };
    let rho0 = initial_state(cfg.system.initial);
    let v0 = vectorize(&rho0);
    let dt = cfg.numerics.delta_p_inv_ev;
    let d = system.dim();

    let stride = cfg.numerics.map_stride.max(1);
    let mut prop = Propagator::new(&system, &setups, &opts)?;
    let mut rows = vec![TrajRow {
        t: 0.0,
        rho: rho0.clone(),
        max_bond: 1,
        discarded: 0.0,
    }];
    let mut estimates: Vec<Array2<Complex<f64>>> = Vec::new();
    let mut last_map: Option<Array2<Complex<f64>>> = None;
    for sample in 1..=cfg.numerics.steps / stride {
        for _ in 0..stride {
            prop.advance_without_map()?;
        }
        let k = sample * stride;
        let lam = prop.map_now()?;
        let diag = prop.diagnostics();
        rows.push(TrajRow {
            t: dt * k as f64,
            rho: devectorize(&lam.dot(&v0), d),
            max_bond: diag.max_bond.iter().copied().max().unwrap_or(1),
            discarded: diag.discarded.iter().sum(),
        });
        if let Some(prev) = &last_map {
            let e = lam.dot(&pinv(prev, 1e-12)?);
            if let Some(rho) = channel_fixed_point(&e, d)? {
                estimates.push(rho);
            }
        }
        last_map = Some(lam);
    }

    let window = cfg.numerics.steady_window.min(estimates.len().saturating_sub(1));
    let (steady_rho_ee, drift) = match estimates.last() {
        Some(last) if window > 0 => {
            let drift = estimates[estimates.len() - 1 - window..]
                .iter()
                .map(|r| (r - last).iter().map(|z| z.norm()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            (Some(rho_ee(last)), Some(drift))
        }
        Some(last) => (Some(rho_ee(last)), None),
        None => (None, None),
    };

    let max_bond = rows.iter().map(|r| r.max_bond).max().unwrap_or(1);
    let mut summary = vec![
        ("method".to_string(), "tempo".to_string()),
        ("steps".to_string(), cfg.numerics.steps.to_string()),
        ("delta_p_inv_ev".to_string(), fmt_f(dt)),
        ("chi".to_string(), fmt_f(cfg.numerics.chi)),
        ("max_bond".to_string(), max_bond.to_string()),
        (
            "final_rho_ee".to_string(),
            fmt_f(rho_ee(&rows.last().unwrap().rho)),
        ),
    ];
    if let Some(p) = steady_rho_ee {
        summary.push(("steady_rho_ee".to_string(), fmt_f(p)));
    }
    if let Some(dr) = drift {
        summary.push(("steady_drift".to_string(), fmt_f(dr)));
        let converged = dr < cfg.numerics.steady_tol;
        summary.push(("steady_converged".to_string(), converged.to_string()));
    }
    Ok(RunResult {
        method: Method::Tempo,
        trajectory: rows,
        summary,
        steady_rho_ee,
        drift,
        max_bond,
    })
}

fn rows_from_states(times: &[f64], states: Vec<Array2<Complex<f64>>>) -> Vec<TrajRow> {
    times
        .iter()
        .zip(states)
        .map(|(&t, rho)| TrajRow {
            t,
            rho,
            max_bond: 0,
            discarded: 0.0,
        })
        .collect()
}

fn run_dense(cfg: &RunConfig) -> Result<RunResult, RunError> {
    let system = build_system(cfg)?;
    let setups = build_setups(cfg)?;
    let dt = cfg.numerics.delta_p_inv_ev;
    let maps = dense_history_maps(&system, &setups, dt, cfg.numerics.steps)?;
    let rho0 = initial_state(cfg.system.initial);
    let v0 = vectorize(&rho0);
    let d = system.dim();
    let times: Vec<f64> = (0..maps.len()).map(|k| dt * k as f64).collect();
    let states = maps.iter().map(|m| devectorize(&m.dot(&v0), d)).collect();
    let rows = rows_from_states(&times, states);
    let summary = vec![
        ("method".to_string(), "dense_oracle".to_string()),
        ("steps".to_string(), cfg.numerics.steps.to_string()),
        (
            "final_rho_ee".to_string(),
            fmt_f(rho_ee(&rows.last().unwrap().rho)),
        ),
    ];
    Ok(RunResult {
        method: Method::DenseOracle,
        trajectory: rows,
        summary,
        steady_rho_ee: None,
        drift: None,
        max_bond: 0,
    })
}

fn run_single_mode(cfg: &RunConfig) -> Result<RunResult, RunError> {
    if cfg.baths.len() != 1 {
        return Err(setup_err("single_mode_ed needs exactly one bath"));
    }
    let (omega, g) = match cfg.baths[0].spectral {
        SpectralBlock::Mode { omega_ev, g_ev } => (omega_ev, g_ev),
        _ => return Err(setup_err("single_mode_ed needs a mode bath")),
    };
    let system = build_system(cfg)?;
    let ed = SingleModeEd::new(
        &system,
        0,
        omega,
        g,
        cfg.baths[0].temperature_ev,
        cfg.numerics.fock_levels,
    )?;
    let rho0 = initial_state(cfg.system.initial);
    let dt = cfg.numerics.delta_p_inv_ev;
    let times: Vec<f64> = (0..=cfg.numerics.steps).map(|k| dt * k as f64).collect();
    let states = times.iter().map(|&t| ed.reduced_state(&rho0, t)).collect();
    let rows = rows_from_states(&times, states);
    let summary = vec![
        ("method".to_string(), "single_mode_ed".to_string()),
        ("fock_levels".to_string(), cfg.numerics.fock_levels.to_string()),
        (
            "mode_tail_population".to_string(),
            fmt_f(ed.top_level_population()),
        ),
        (
            "final_rho_ee".to_string(),
            fmt_f(rho_ee(&rows.last().unwrap().rho)),
        ),
    ];
    Ok(RunResult {
        method: Method::SingleModeEd,
        trajectory: rows,
        summary,
        steady_rho_ee: None,
        drift: None,
        max_bond: 0,
    })
}

fn run_polaron(cfg: &RunConfig) -> Result<RunResult, RunError> {
    let (oi, vi) = split_optical_vibrational(cfg)?;
    let model = PolaronModel {
        splitting: cfg.system.splitting_ev,
        optical: cfg.baths[oi].to_spec(0)?,
        vibrational: cfg.baths[vi].to_spec(1)?,
        rel_tol: 1e-7,
    };
    model.validate()?;
    let (up, down) = model.rates();
    let pop = up / (up + down);
    let summary = vec![
        ("method".to_string(), "polaron".to_string()),
        ("rate_up_ev".to_string(), fmt_f(up)),
        ("rate_down_ev".to_string(), fmt_f(down)),
        ("dressing_weight".to_string(), fmt_f(model.phi_zero())),
        ("steady_rho_ee".to_string(), fmt_f(pop)),
    ];
    Ok(RunResult {
        method: Method::Polaron,
        trajectory: Vec::new(),
        summary,
        steady_rho_ee: Some(pop),
        drift: Some(0.0),
        max_bond: 0,
    })
}

fn run_rc(cfg: &RunConfig) -> Result<RunResult, RunError> {
    let (oi, vi) = split_optical_vibrational(cfg)?;
    let (a, omega0, width) = match cfg.baths[vi].spectral {
        SpectralBlock::Underdamped {
            alpha,
            omega0_ev,
            width_ev,
        } => (alpha, omega0_ev, width_ev),
        _ => return Err(setup_err("rc needs an underdamped sigma_z_proj bath")),
    };
    let model = rc::from_underdamped(
        cfg.system.splitting_ev,
        a,
        omega0,
        width,
        cfg.baths[vi].temperature_ev,
        cfg.baths[oi].to_spec(0)?,
        cfg.numerics.fock_levels,
    );
    let steady = model.steady_state()?;
    let pop = rho_ee(&steady.rho_tls);
    let summary = vec![
        ("method".to_string(), "rc".to_string()),
        ("fock_levels".to_string(), cfg.numerics.fock_levels.to_string()),
        ("mode_occupation".to_string(), fmt_f(steady.mode_occupation)),
        ("fock_tail".to_string(), fmt_f(steady.fock_tail)),
        ("steady_rho_ee".to_string(), fmt_f(pop)),
    ];
    Ok(RunResult {
        method: Method::Rc,
        trajectory: Vec::new(),
        summary,
        steady_rho_ee: Some(pop),
        drift: Some(0.0),
        max_bond: 0,
    })
}

fn run_four_level(cfg: &RunConfig) -> Result<RunResult, RunError> {
    let (oi, vi) = split_optical_vibrational(cfg)?;
    let (omega, g) = match cfg.baths[vi].spectral {
        SpectralBlock::Mode { omega_ev, g_ev } => (omega_ev, g_ev),
        _ => return Err(setup_err("four_level needs a mode sigma_z_proj bath")),
    };
    let model = FourLevelModel {
        splitting: cfg.system.splitting_ev,
        mode_frequency: omega,
        huang_rhys: (g / omega) * (g / omega),
        sideband: cfg.numerics.sideband,
        optical: cfg.baths[oi].to_spec(0)?,
    };
    model.validate()?;
    let pop = model.excited_population();
    let summary = vec![
        ("method".to_string(), "four_level".to_string()),
        ("huang_rhys".to_string(), fmt_f(model.huang_rhys)),
        ("sideband".to_string(), cfg.numerics.sideband.to_string()),
        ("population_ratio".to_string(), fmt_f(model.population_ratio())),
        ("steady_rho_ee".to_string(), fmt_f(pop)),
    ];
    Ok(RunResult {
        method: Method::FourLevel,
        trajectory: Vec::new(),
        summary,
        steady_rho_ee: Some(pop),
        drift: Some(0.0),
        max_bond: 0,
    })
}

/// Trajectory CSV: `t, rho_re_ij..., rho_im_ij..., max_bond,
/// discarded_weight`, row-major element order.
pub fn trajectory_csv(result: &RunResult) -> String {
    let d = result
        .trajectory
        .first()
        .map(|r| r.rho.nrows())
        .unwrap_or(2);
    let mut out = String::from("t");
    for i in 0..d {
        for j in 0..d {
            write!(out, ",rho_re_{i}{j}").unwrap();
        }
    }
    for i in 0..d {
        for j in 0..d {
            write!(out, ",rho_im_{i}{j}").unwrap();
        }
    }
    out.push_str(",max_bond,discarded_weight\n");
    for row in &result.trajectory {
        write!(out, "{}", fmt_f(row.t)).unwrap();
        for z in row.rho.iter() {
            write!(out, ",{}", fmt_f(z.re)).unwrap();
        }
        for z in row.rho.iter() {
            write!(out, ",{}", fmt_f(z.im)).unwrap();
        }
        writeln!(out, ",{},{}", row.max_bond, fmt_f(row.discarded)).unwrap();
    }
    out
}

pub fn summary_text(result: &RunResult) -> String {
    let mut out = String::new();
    for (k, v) in &result.summary {
        writeln!(out, "{k} = {v}").unwrap();
    }
    out
}

/// One sweep point. Timing is recorded but excluded from determinism
/// guarantees; failures land in `error` and leave the numbers empty.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub steady_rho_ee: Option<f64>,
    pub drift: Option<f64>,
    pub max_bond: usize,
    pub wall_s: f64,
    pub error: Option<String>,
}

pub fn run_sweep(cfg: &RunConfig, workers: usize) -> Result<Vec<SweepRow>, RunError> {
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| setup_err("sweep requires a [sweep] block"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| setup_err(e.to_string()))?;
    let rows = pool.install(|| {
        sweep
            .values
            .par_iter()
            .map(|&value| {
                let start = Instant::now();
                let mut point = cfg.clone();
                point.sweep = None;
                let outcome = point
                    .apply_sweep_value(&sweep.path, value)
                    .map_err(RunError::from)
                    .and_then(|()| run_config(&point));
                let wall_s = start.elapsed().as_secs_f64();
                match outcome {
                    Ok(res) => SweepRow {
                        value,
                        steady_rho_ee: res.steady_rho_ee.or_else(|| {
                            res.trajectory.last().map(|r| rho_ee(&r.rho))
                        }),
                        drift: res.drift,
                        max_bond: res.max_bond,
                        wall_s,
                        error: None,
                    },
                    Err(e) => SweepRow {
                        value,
                        steady_rho_ee: None,
                        drift: None,
                        max_bond: 0,
                        wall_s,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,steady_rho_ee,drift,max_bond,wall_s,error\n");
    for r in rows {
        let pop = r.steady_rho_ee.map(fmt_f).unwrap_or_default();
        let drift = r.drift.map(fmt_f).unwrap_or_default();
        let err = r
            .error
            .as_deref()
            .unwrap_or("")
            .replace(',', ";")
            .replace('\n', " ");
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f(r.value),
            pop,
            drift,
            r.max_bond,
            fmt_f(r.wall_s),
            err
        )
        .unwrap();
    }
    out
}

/// Run the configured method at each value of the sweep path (at least
/// three), measure the change of the final state against the last (finest)
/// value, and fit the convergence order.
pub fn convergence_report(cfg: &RunConfig, workers: usize) -> Result<String, RunError> {
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| setup_err("converge requires a [sweep] block"))?;
    if sweep.values.len() < 3 {
        return Err(setup_err("converge needs at least 3 sweep values"));
    }
    let rows = run_sweep(cfg, workers)?;
    for r in &rows {
        if let Some(e) = &r.error {
            return Err(setup_err(format!("point {} failed: {e}", r.value)));
        }
    }
    let reference = rows
        .last()
        .and_then(|r| r.steady_rho_ee)
        .ok_or_else(|| setup_err("no observable produced"))?;
    let mut out = String::new();
    writeln!(out, "parameter = {}", sweep.path).unwrap();
    writeln!(out, "reference_value = {}", fmt_f(rows.last().unwrap().value)).unwrap();
    writeln!(out, "reference_rho_ee = {}", fmt_f(reference)).unwrap();
    let mut deltas = Vec::new();
    let mut errors = Vec::new();
    for r in &rows[..rows.len() - 1] {
        let err = (r.steady_rho_ee.unwrap() - reference).abs();
        writeln!(out, "value {} error {}", fmt_f(r.value), fmt_f(err)).unwrap();
        if err > 0.0 && r.value > 0.0 {
            deltas.push(r.value);
            errors.push(err);
        }
    }
    if deltas.len() >= 2 {
        let slope = trotter_order(&deltas, &errors);
        writeln!(out, "fitted_order = {}", fmt_f(slope)).unwrap();
    } else {
        writeln!(out, "fitted_order = indeterminate").unwrap();
    }
    Ok(out)
}

/// Compare the tensor-network propagation against an independent oracle on
/// the same configuration: exact diagonalisation when the model is a
/// single discrete mode, a dense history sum otherwise.
pub fn oracle_check(cfg: &RunConfig) -> Result<String, RunError> {
    let mut base = cfg.clone();
    base.method = Method::Tempo;
    base.sweep = None;
    let tempo = run_config(&base)?;

    let single_mode = cfg.baths.len() == 1
        && matches!(cfg.baths[0].spectral, SpectralBlock::Mode { .. })
        && cfg.baths[0].numerics.ratio == 1
        && cfg.baths[0].numerics.memory_steps == 0;
    let mut oracle_cfg = base.clone();
    let oracle_name;
    if single_mode {
        oracle_cfg.method = Method::SingleModeEd;
        oracle_name = "single_mode_ed";
    } else {
        oracle_cfg.method = Method::DenseOracle;
        oracle_name = "dense_oracle";
        if cfg.numerics.steps > 8 / cfg.baths.len().max(1) {
            return Err(setup_err(
                "dense oracle cost is exponential in steps; use fewer steps",
            ));
        }
    }
    let oracle = run_config(&oracle_cfg)?;

    let n = tempo.trajectory.len().min(oracle.trajectory.len());
    let mut max_dev = 0.0f64;
    for k in 0..n {
        let diff = &tempo.trajectory[k].rho - &oracle.trajectory[k].rho;
        let dev = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
        max_dev = max_dev.max(dev);
    }
    let mut out = String::new();
    writeln!(out, "oracle = {oracle_name}").unwrap();
    writeln!(out, "points_compared = {n}").unwrap();
    writeln!(out, "max_state_deviation = {}", fmt_f(max_dev)).unwrap();
    if oracle_name == "single_mode_ed" {
        // ED is exact in time, so the deviation here is Trotter error plus
        // truncation; flag it only against a loose sanity bound.
        writeln!(out, "note = deviation includes Trotter error O(delta^2)").unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn four_level_toml() -> &'static str {
        r#"
method = "four_level"

[system]
splitting_ev = 1.0

[[bath]]
coupling = "sigma_x"
temperature_ev = 5.0
[bath.spectral]
kind = "power_law_exp"
alpha = 0.001
p = 3.0
cutoff_ev = 10.0

[[bath]]
coupling = "sigma_z_proj"
temperature_ev = 0.0258
[bath.spectral]
kind = "mode"
omega_ev = 0.2
g_ev = 0.0

[numerics]
delta_p_inv_ev = 0.1
steps = 1
sideband = 1
"#
    }

    #[test]
    fn four_level_uncoupled_matches_boltzmann() {
        let cfg = RunConfig::from_toml(four_level_toml()).unwrap();
        let res = run_config(&cfg).unwrap();
        // S = 0: detailed balance pins the ratio at exp(-delta/T).
        let want = (-1.0f64 / 5.0).exp();
        let got: f64 = res
            .summary
            .iter()
            .find(|(k, _)| k == "population_ratio")
            .unwrap()
            .1
            .parse()
            .unwrap();
        assert!((got - want).abs() < 1e-12 * want);
        assert!((res.steady_rho_ee.unwrap() - want / (1.0 + want)).abs() < 1e-12);
    }

    fn tempo_mode_toml() -> String {
        r#"
method = "tempo"

[system]
splitting_ev = 0.5
initial = "excited"

[[bath]]
coupling = "sigma_x"
temperature_ev = 0.0
[bath.spectral]
kind = "mode"
omega_ev = 1.0
g_ev = 0.0

[numerics]
delta_p_inv_ev = 0.05
steps = 20
chi = 1e-10
fock_levels = 12
"#
        .to_string()
    }

    #[test]
    fn zero_coupling_reduces_to_free_evolution() {
        let mut cfg = RunConfig::from_toml(&tempo_mode_toml()).unwrap();
        cfg.system.initial = InitialState::Plus;
        let res = run_config(&cfg).unwrap();
        // With g = 0 the excited population is frozen and the coherence
        // rotates at the bare splitting.
        for row in &res.trajectory {
            assert!((rho_ee(&row.rho) - 0.5).abs() < 1e-10);
            let want = 0.5 * Complex::new(0.0, -0.5 * row.t).exp();
            assert!((row.rho[(1, 0)] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn trajectory_csv_is_deterministic_and_well_formed() {
        let cfg = RunConfig::from_toml(&tempo_mode_toml()).unwrap();
        let a = trajectory_csv(&run_config(&cfg).unwrap());
        let b = trajectory_csv(&run_config(&cfg).unwrap());
        assert_eq!(a, b);
        let mut lines = a.lines();
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "t,rho_re_00,rho_re_01,rho_re_10,rho_re_11,\
             rho_im_00,rho_im_01,rho_im_10,rho_im_11,max_bond,discarded_weight"
        );
        assert_eq!(lines.count(), 21);
        assert!(!a.contains(','.to_string().as_str()) || a.contains('.'));
    }

    #[test]
    fn oracle_check_flags_small_deviation_for_mode_bath() {
        let mut cfg = RunConfig::from_toml(&tempo_mode_toml()).unwrap();
        if let SpectralBlock::Mode { g_ev, .. } = &mut cfg.baths[0].spectral {
            *g_ev = 0.1;
        }
        cfg.method = Method::Tempo;
        let report = oracle_check(&cfg).unwrap();
        let dev: f64 = report
            .lines()
            .find(|l| l.starts_with("max_state_deviation"))
            .unwrap()
            .split(" = ")
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert!(dev < 1e-3, "deviation {dev}");
    }

    #[test]
    fn sweep_records_failures_per_row() {
        let mut cfg = RunConfig::from_toml(four_level_toml()).unwrap();
        cfg.sweep = Some(crate::config::SweepBlock {
            path: "system.splitting_ev".to_string(),
            // 0.1 < mode quantum: the sideband model rejects it, but the
            // other rows must still complete.
            values: vec![1.0, 0.1, 2.0],
        });
        let rows = run_sweep(&cfg, 2).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.is_some());
        assert!(rows[2].error.is_none());
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
    }
}
