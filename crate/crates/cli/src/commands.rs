//! Subcommand bodies. Each returns the process exit code or an error that
//! `main` maps to one.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use switchgrid::export::{write_field_metadata, write_json, write_paths_csv, write_value_csv, LevelSelection};
use switchgrid::harness::{penalty_ladder, verify, Oracle, VerifyOptions};
use switchgrid::oracle::{counterexample_value, lattice_dp, ExtValue, LatticeDp, LATTICE_LIMIT};
use switchgrid::simulate::default_dt_sim;
use switchgrid::{
    build_grid, constraint_violation_rate, extract_policy, payoff_statistics, simulate_paths_with, solve, Grid,
    Recording, Result, Scheme,
};

use crate::config::{config_error, load, LoadedModel, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY: u8 = 4;

struct Setup {
    cfg: RunConfig,
    model: LoadedModel,
    grid: Arc<Grid>,
    out: std::path::PathBuf,
}

fn setup(cfg: RunConfig) -> Result<Setup> {
    let path = cfg.model.clone().ok_or_else(|| config_error("no model given (set \"model\" or pass --model)"))?;
    let model = load(&path)?;
    let grid = Arc::new(build_grid(&model.spec, &model.grid_spec(&cfg)?)?);
    let out = cfg.output.dir.clone();
    std::fs::create_dir_all(&out)
        .map_err(|e| config_error(format!("output directory {} is not writable: {e}", out.display())))?;
    log::info!(
        "model {} on {:?} nodes, {} time steps, dt = {}",
        model.spec.name(),
        grid.spec().points,
        grid.time_steps(),
        grid.dt()
    );
    Ok(Setup { cfg, model, grid, out })
}

pub fn cmd_solve(cfg: RunConfig) -> Result<u8> {
    let s = setup(cfg)?;
    let field = solve(&s.model.spec, s.cfg.penalty()?, Arc::clone(&s.grid), s.cfg.scheme_params()?)?;
    let levels: LevelSelection = s.cfg.output.levels.into();
    write_value_csv(&s.out.join("value.csv"), &field, levels)?;
    write_field_metadata(&s.out.join("value.json"), &field, levels)?;
    println!("wrote {}", s.out.join("value.csv").display());
    Ok(EXIT_OK)
}

pub fn cmd_converge(cfg: RunConfig) -> Result<u8> {
    let s = setup(cfg)?;
    let oracle = s.model.counterexample.as_ref().map(|o| o as &dyn Oracle);
    let ladder = penalty_ladder(&s.model.spec, Arc::clone(&s.grid), &s.cfg.ladder()?, s.cfg.scheme_params()?, oracle)?;
    write_json(&s.out.join("convergence.json"), &ladder.report)?;
    print!("{}", ladder.report.table());
    if let Some(e) = ladder.failure {
        return Err(e);
    }
    Ok(if ladder.report.monotone { EXIT_OK } else { EXIT_VERIFY })
}

#[derive(Serialize)]
struct SimulationSummary {
    model: String,
    model_fingerprint: String,
    penalty: u32,
    seed: u64,
    dt_sim: f64,
    start_t: f64,
    start_x: Vec<f64>,
    start_regime: usize,
    paths: usize,
    completed: usize,
    escaped: usize,
    mean: f64,
    stderr: f64,
    value_at_start: f64,
    violation_rate: f64,
    max_excursion: f64,
    switches: usize,
}

pub fn cmd_simulate(cfg: RunConfig) -> Result<u8> {
    let s = setup(cfg)?;
    let sim = s.cfg.simulation.clone().ok_or_else(|| config_error("the config has no \"simulation\" section"))?;
    if sim.paths == 0 {
        return Err(config_error("simulation.paths must be positive"));
    }
    let start = &sim.start;
    if start.regime == 0 || start.regime > s.model.spec.regimes() {
        return Err(config_error(format!(
            "simulation.start.regime {} is not in 1..={}",
            start.regime,
            s.model.spec.regimes()
        )));
    }
    let spec = &s.model.spec;
    let n = s.cfg.penalty()?;
    let field = solve(spec, n, Arc::clone(&s.grid), s.cfg.scheme_params()?)?;
    let policy = extract_policy(&field, spec, s.cfg.scheme.policy_eps);
    let dt_sim = sim.dt_sim.unwrap_or_else(|| default_dt_sim(&policy));
    let recording = if sim.write_paths { Recording::Full } else { Recording::Endpoints };
    let i0 = start.regime - 1;
    let bundle = simulate_paths_with(spec, &policy, start.t, &start.x, i0, sim.paths, dt_sim, sim.seed, recording)?;
    let est = payoff_statistics(&bundle);
    let viol = constraint_violation_rate(&bundle);
    let summary = SimulationSummary {
        model: spec.name().to_string(),
        model_fingerprint: spec.fingerprint(),
        penalty: n.get(),
        seed: sim.seed,
        dt_sim,
        start_t: start.t,
        start_x: start.x.clone(),
        start_regime: start.regime,
        paths: sim.paths,
        completed: est.paths,
        escaped: est.escaped,
        mean: est.mean,
        stderr: est.std_error,
        value_at_start: field.interp(start.t, &start.x, i0)?,
        violation_rate: viol.rate,
        max_excursion: viol.max_excursion,
        switches: bundle.paths.iter().map(|p| p.switches.len()).sum(),
    };
    write_json(&s.out.join("summary.json"), &summary)?;
    if sim.write_paths {
        write_paths_csv(&s.out.join("paths.csv"), &bundle, spec.dim())?;
    }
    println!(
        "mean {:.6} ± {:.6} over {} paths ({} escaped); v_n at start {:.6}; violation rate {}",
        summary.mean, summary.stderr, summary.completed, summary.escaped, summary.value_at_start, summary.violation_rate
    );
    Ok(EXIT_OK)
}

pub fn cmd_verify(cfg: RunConfig) -> Result<u8> {
    let s = setup(cfg)?;
    let v = &s.cfg.verify;
    let mut opts = VerifyOptions::new(s.cfg.penalty()?);
    opts.ladder = s.cfg.ladder()?;
    opts.params = s.cfg.scheme_params()?;
    opts.lookahead = v.lookahead;
    opts.dpp_samples = v.samples;
    opts.dpp_factor = v.dpp_factor;
    opts.eta = v.eta;
    opts.seed = v.seed;
    opts.obstacle_tol = v.obstacle_tol;
    opts.oracle_tol = v.oracle_tol;
    opts.perturb = v.perturb.map(|p| p.to_perturbation()).transpose()?;
    let oracle = s.model.counterexample.as_ref().map(|o| o as &dyn Oracle);
    let report = verify(&s.model.spec, Arc::clone(&s.grid), &opts, oracle)?;
    write_json(&s.out.join("verify.json"), &report)?;
    print!("{}", report.table());
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY })
}

#[derive(Serialize)]
struct OracleSummary {
    model: String,
    closed_form: bool,
    lattice: Option<LatticeSummary>,
}

#[derive(Serialize)]
struct LatticeSummary {
    penalty: u32,
    entries: usize,
    /// Largest |solver − lattice| over finite entries.
    solver_gap: f64,
    self_residual: f64,
    neg_inf_entries: usize,
}

fn write_ext_csv(
    path: &Path,
    grid: &Grid,
    regimes: usize,
    levels: LevelSelection,
    value: impl Fn(usize, usize, usize) -> ExtValue,
) -> Result<()> {
    let d = grid.dim();
    switchgrid::export::write_atomic(path, |w| {
        let coords: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
        writeln!(w, "t,{},regime,value", coords.join(","))?;
        for level in levels.levels(grid.time_steps() + 1) {
            let t = grid.time(level);
            for node in 0..grid.node_count() {
                let xs: Vec<String> = grid.coordinates(node).iter().map(f64::to_string).collect();
                for i in 0..regimes {
                    let v = match value(level, node, i) {
                        ExtValue::Finite(v) => v.to_string(),
                        ExtValue::NegInf => "-inf".to_string(),
                    };
                    writeln!(w, "{t},{},{},{v}", xs.join(","), i + 1)?;
                }
            }
        }
        Ok(())
    })
}

/// Writes the closed-form values on the grid when the model has them and
/// the exhaustive lattice solution of the scheme when it is small enough.
pub fn cmd_oracle(cfg: RunConfig) -> Result<u8> {
    use std::io::Write as _;
    let s = setup(cfg)?;
    let spec = &s.model.spec;
    let m = spec.regimes();
    let levels: LevelSelection = s.cfg.output.levels.into();
    if let Some(o) = &s.model.counterexample {
        let grid = &s.grid;
        write_ext_csv(&s.out.join("closed_form.csv"), grid, m, levels, |level, node, i| {
            counterexample_value(grid.time(level), &grid.coordinates(node), i, o.horizon, o.cost)
        })?;
    }
    let entries = (s.grid.time_steps() + 1) * s.grid.node_count() * m;
    let lattice = if entries <= LATTICE_LIMIT {
        let n = s.cfg.penalty()?;
        let params = s.cfg.scheme_params()?;
        let scheme = Scheme::new(spec, n, Arc::clone(&s.grid), params)?;
        let dp = LatticeDp::from_scheme(&scheme, &scheme.terminal_level()?);
        let sol = lattice_dp(&dp)?;
        let field = solve(spec, n, Arc::clone(&s.grid), params)?;
        let mut gap = 0.0f64;
        let mut neg_inf = 0;
        for level in 0..field.levels() {
            for node in 0..s.grid.node_count() {
                for i in 0..m {
                    match sol.value(level, node, i, m) {
                        ExtValue::Finite(v) => gap = gap.max((v - field.get(level, node, i)).abs()),
                        ExtValue::NegInf => neg_inf += 1,
                    }
                }
            }
        }
        write_ext_csv(&s.out.join("lattice.csv"), &s.grid, m, levels, |level, node, i| sol.value(level, node, i, m))?;
        Some(LatticeSummary {
            penalty: n.get(),
            entries,
            solver_gap: gap,
            self_residual: sol.dpp_residual(&dp),
            neg_inf_entries: neg_inf,
        })
    } else {
        log::warn!("{entries} entries exceed the lattice limit {LATTICE_LIMIT}; lattice skipped");
        None
    };
    let summary = OracleSummary {
        model: spec.name().to_string(),
        closed_form: s.model.counterexample.is_some(),
        lattice,
    };
    write_json(&s.out.join("oracle.json"), &summary)?;
    let mut stdout = std::io::stdout();
    match &summary.lattice {
        Some(l) => writeln!(stdout, "lattice: solver gap {:.3e}, self residual {:.3e}", l.solver_gap, l.self_residual)?,
        None => writeln!(stdout, "lattice: skipped ({entries} entries)")?,
    }
    if summary.closed_form {
        writeln!(stdout, "wrote {}", s.out.join("closed_form.csv").display())?;
    }
    Ok(EXIT_OK)
}
