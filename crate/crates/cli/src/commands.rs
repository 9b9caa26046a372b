//! Subcommand implementations wiring the library into batch experiments.

use std::path::PathBuf;

use num_complex::Complex64;

use peierls::drive::{DriveField, ObservableTarget, TargetCurrent, UniformSeries};
use peierls::dynamics::{
    propagate_driven, propagate_tracking_program, ConstraintConfig, ConstraintMode,
    PropagationOptions, TimeGrid, TrackedObservable, TrackingProgram, Trajectory,
};
use peierls::groundstate::{ground_state, tight_binding_ground_energy, GroundStateOptions};
use peierls::spectral::{self, WindowKind};
use peierls::{Error as CoreError, LatticeOperators};

use crate::config::{ExperimentConfig, ScaleBlock, TargetBlock};
use crate::error::{CliError, Result};
use crate::runio::{self, RunContext};

fn build_operators(config: &ExperimentConfig) -> Result<LatticeOperators> {
    Ok(LatticeOperators::build(config.system_params()?)?)
}

fn solve_ground(ops: &LatticeOperators, config: &ExperimentConfig) -> Result<peierls::groundstate::GroundStateResult> {
    let opts = GroundStateOptions {
        seed: config.seed,
        ..Default::default()
    };
    Ok(ground_state(ops, &opts)?)
}

fn propagation_options(config: &ExperimentConfig) -> PropagationOptions {
    PropagationOptions {
        snapshot_stride: config.output.snapshot_stride,
        ..Default::default()
    }
}

fn write_snapshots(ctx: &mut RunContext, traj: &Trajectory) -> Result<()> {
    for (step, psi) in &traj.snapshots {
        let name = format!("state_{step:08}.tsv");
        runio::write_state(&ctx.path(&name), psi)?;
        ctx.register(&name);
    }
    Ok(())
}

fn write_run_products(
    ctx: &mut RunContext,
    traj: &Trajectory,
    omega0: Option<f64>,
    window: WindowKind,
) -> Result<()> {
    runio::write_trajectory(&ctx.path(runio::TRAJECTORY_FILE), traj)?;
    ctx.register(runio::TRAJECTORY_FILE);
    let residual = runio::write_ehrenfest(&ctx.path(runio::EHRENFEST_FILE), traj)?;
    ctx.register(runio::EHRENFEST_FILE);
    ctx.note("ehrenfest_max_residual", residual);
    if let Some(omega0) = omega0 {
        let djdt = spectral::numerical_gradient(&traj.current, traj.dt).map_err(CliError::Core)?;
        let spec = spectral::harmonic_spectrum(&djdt, traj.dt, omega0, window)
            .map_err(CliError::Core)?;
        runio::write_spectrum(&ctx.path(runio::SPECTRUM_FILE), &spec)?;
        ctx.register(runio::SPECTRUM_FILE);
    } else {
        ctx.note("spectrum", "skipped: no omega0 available");
    }
    let max_norm_dev = traj
        .norm
        .iter()
        .fold(0.0f64, |m, &n| m.max((n - 1.0).abs()));
    ctx.note("max_norm_deviation", max_norm_dev);
    ctx.note("energy_shift", traj.energy_shift);
    ctx.record_events(traj);
    write_snapshots(ctx, traj)?;
    Ok(())
}

pub fn cmd_ground(config: ExperimentConfig, out_dir: PathBuf, threads: usize) -> Result<()> {
    let ops = build_operators(&config)?;
    let gs = solve_ground(&ops, &config)?;
    let mut ctx = RunContext::new(out_dir, "ground", config.clone(), threads)?;

    let p = ops.params();
    let mut text = String::new();
    text.push_str("# peierls ground v1\n");
    let mut names = vec!["energy", "residual", "dim"];
    let mut row = vec![gs.energy, gs.residual, ops.dim() as f64];
    println!(
        "ground: L={} N=({},{}) U={}  E = {:.12}  residual = {:.3e}  dim = {}",
        p.sites, p.n_up, p.n_down, p.repulsion, gs.energy, gs.residual, ops.dim()
    );
    if p.repulsion == 0.0 {
        let analytic = tight_binding_ground_energy(p.sites, p.n_up, p.n_down, p.hopping);
        names.push("analytic_energy");
        row.push(analytic);
        println!(
            "ground: analytic E = {:.12}  |difference| = {:.3e}",
            analytic,
            (gs.energy - analytic).abs()
        );
        ctx.note("analytic_energy", analytic);
        ctx.note("analytic_energy_gap", (gs.energy - analytic).abs());
        let lambda_im = peierls::groundstate::ground_bond_check(&gs, &ops)?;
        ctx.note("bond_check_im_k", lambda_im);
    }
    text.push_str(&names.join("\t"));
    text.push('\n');
    text.push_str(
        &row.iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join("\t"),
    );
    text.push('\n');
    std::fs::write(ctx.path("ground.tsv"), text)?;
    ctx.register("ground.tsv");

    if ctx.config.output.write_state {
        runio::write_state(&ctx.path("state.tsv"), &gs.psi)?;
        ctx.register("state.tsv");
    }
    ctx.note("energy", gs.energy);
    ctx.note("residual", gs.residual);
    ctx.note("dim", ops.dim() as i64);
    ctx.finish()
}

pub fn cmd_drive(config: ExperimentConfig, out_dir: PathBuf, threads: usize) -> Result<()> {
    let ops = build_operators(&config)?;
    let gs = solve_ground(&ops, &config)?;
    let pulse = config.pulse()?;
    let grid = config.time_grid()?;
    let window = config.window()?;
    let opts = propagation_options(&config);
    let traj = propagate_driven(&ops, &gs.psi, &DriveField::Pulse(pulse), &grid, &opts)?;

    let mut ctx = RunContext::new(out_dir, "drive", config, threads)?;
    ctx.note("ground_energy", gs.energy);
    write_run_products(&mut ctx, &traj, Some(pulse.omega0), window)?;
    println!(
        "drive: {} steps, dt = {:.6}; max |J| = {:.6}",
        grid.steps,
        grid.dt,
        traj.current.iter().fold(0.0f64, |m, &j| m.max(j.abs()))
    );
    ctx.finish()
}

/// Target series for current tracking, on its own uniform grid.
fn load_target_series(config: &ExperimentConfig) -> Result<UniformSeries> {
    let tracking = config
        .tracking
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a [tracking] block".into()))?;
    let (path, column) = match &tracking.target {
        TargetBlock::File { path } => (path, None),
        TargetBlock::Run { path } => (path, Some("current")),
        TargetBlock::Hold => {
            return Err(CliError::Config(
                "a 'hold' target only applies to observable tracking".into(),
            ))
        }
    };
    let resolved = resolve_path(path);
    let table = runio::read_table(&resolved)?;
    let time = table.column("time")?;
    if time.is_empty() || time[0] != 0.0 {
        return Err(CliError::Config(format!(
            "target series in {} must start at time 0",
            resolved.display()
        )));
    }
    let values = match column {
        Some(name) => table.column(name)?.to_vec(),
        None => {
            // two-column (time, value) file: take the non-time column
            let (name, _) = table
                .columns
                .iter()
                .find(|(n, _)| n != "time")
                .ok_or_else(|| CliError::Config("target file needs a value column".into()))?;
            table.column(name)?.to_vec()
        }
    };
    Ok(UniformSeries::new(table.dt()?, values).map_err(CliError::Core)?)
}

fn resolve_path(path: &str) -> PathBuf {
    // relative paths resolve against the working directory
    PathBuf::from(path)
}

struct ScaledRun {
    traj: Trajectory,
    scale: f64,
    attempts: usize,
    pilot_r_min: Option<f64>,
}

/// Run current tracking with either the configured fixed scale or the
/// pilot-scan auto scale, halving on failure.
#[allow(clippy::too_many_arguments)]
fn run_scaled_tracking(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    series: &UniformSeries,
    scale_block: &ScaleBlock,
    grid: &TimeGrid,
    constraints: ConstraintConfig,
    opts: &PropagationOptions,
) -> Result<ScaledRun> {
    let run = |k: f64| -> peierls::Result<Trajectory> {
        let target = TargetCurrent::new(series.clone(), k);
        propagate_tracking_program(
            ops,
            psi0,
            &TrackingProgram::Current(target),
            grid,
            constraints,
            opts,
        )
    };
    match scale_block {
        ScaleBlock::Fixed { k } => Ok(ScaledRun {
            traj: run(*k)?,
            scale: *k,
            attempts: 1,
            pilot_r_min: None,
        }),
        ScaleBlock::Auto {
            safety,
            pilot_fraction,
        } => {
            let params = ops.params();
            let front = 2.0 * params.charge * params.lattice_constant * params.hopping;
            let max_j = series
                .values()
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            if max_j == 0.0 {
                return Ok(ScaledRun {
                    traj: run(1.0)?,
                    scale: 1.0,
                    attempts: 1,
                    pilot_r_min: None,
                });
            }
            let r0 = ops.bond_expectation(psi0)?.magnitude;
            let k_pilot = pilot_fraction * front * r0 / max_j;
            let pilot = run(k_pilot)?;
            let r_min = pilot
                .bond_magnitude
                .iter()
                .fold(f64::INFINITY, |m, &r| m.min(r));
            let mut k = safety * (1.0 - constraints.eps1) * front * r_min / max_j;
            let mut attempts = 0usize;
            loop {
                attempts += 1;
                match run(k) {
                    Ok(traj) => {
                        return Ok(ScaledRun {
                            traj,
                            scale: k,
                            attempts,
                            pilot_r_min: Some(r_min),
                        })
                    }
                    Err(
                        e @ (CoreError::ConstraintViolation { .. }
                        | CoreError::IntegratorFailure { .. }),
                    ) => {
                        if attempts >= 4 {
                            return Err(e.into());
                        }
                        k *= 0.5;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
}

pub fn cmd_track(
    config: ExperimentConfig,
    out_dir: PathBuf,
    threads: usize,
    command_name: &str,
    observable_override: Option<&str>,
) -> Result<()> {
    let observable = config.observable(observable_override)?;
    let ops = build_operators(&config)?;
    let gs = solve_ground(&ops, &config)?;
    let constraints = config.constraints(ConstraintMode::Enforce);
    let opts = propagation_options(&config);
    let omega0 = config.drive.as_ref().map(|d| d.omega0);
    let window = config.window()?;

    let (traj, scale_note) = match observable {
        TrackedObservable::Current => {
            let series = load_target_series(&config)?;
            let grid = match config.time_grid() {
                Ok(g) => g,
                // default to the target's own grid
                Err(_) => TimeGrid::new(series.dt(), series.len() - 1)?,
            };
            let scale_block = config
                .tracking
                .as_ref()
                .map(|t| t.scale.clone())
                .unwrap_or_default();
            let run =
                run_scaled_tracking(&ops, &gs.psi, &series, &scale_block, &grid, constraints, &opts)?;
            (run.traj, Some((run.scale, run.attempts, run.pilot_r_min)))
        }
        TrackedObservable::Doublon | TrackedObservable::BondReal => {
            let tracking = config
                .tracking
                .as_ref()
                .ok_or_else(|| CliError::Config("this command needs a [tracking] block".into()))?;
            let target = match &tracking.target {
                TargetBlock::Hold => ObservableTarget::Hold,
                TargetBlock::File { path } => {
                    let resolved = resolve_path(path);
                    let table = runio::read_table(&resolved)?;
                    let values = table
                        .column(runio::target_column_for(observable))
                        .or_else(|_| table.column("value"))?
                        .to_vec();
                    ObservableTarget::Series(
                        UniformSeries::new(table.dt()?, values).map_err(CliError::Core)?,
                    )
                }
                TargetBlock::Run { path } => {
                    let resolved = resolve_path(path);
                    let table = runio::read_table(&resolved)?;
                    let values = table.column(runio::target_column_for(observable))?.to_vec();
                    ObservableTarget::Series(
                        UniformSeries::new(table.dt()?, values).map_err(CliError::Core)?,
                    )
                }
            };
            let grid = config.time_grid()?;
            let program = match observable {
                TrackedObservable::Doublon => TrackingProgram::Doublon(target),
                TrackedObservable::BondReal => TrackingProgram::BondReal(target),
                TrackedObservable::Current => unreachable!(),
            };
            let traj =
                propagate_tracking_program(&ops, &gs.psi, &program, &grid, constraints, &opts)?;
            (traj, None)
        }
    };

    let mut ctx = RunContext::new(out_dir, command_name, config, threads)?;
    ctx.note("observable", observable.label());
    ctx.note("ground_energy", gs.energy);
    if let Some((k, attempts, pilot_r_min)) = scale_note {
        ctx.note("target_scale", k);
        ctx.note("scale_attempts", attempts as i64);
        if let Some(r) = pilot_r_min {
            ctx.note("pilot_bond_magnitude_min", r);
        }
    }
    let max_err = traj.max_tracking_error().unwrap_or(0.0);
    ctx.note("max_tracking_error", max_err);
    let r_min = traj
        .bond_magnitude
        .iter()
        .fold(f64::INFINITY, |m, &r| m.min(r));
    ctx.note("bond_magnitude_min", r_min);
    write_run_products(&mut ctx, &traj, omega0, window)?;
    println!(
        "{command_name}: {} steps; max |{} - target| = {max_err:.3e}; min R = {r_min:.6}",
        traj.len() - 1,
        observable.label(),
    );
    ctx.finish()
}

pub fn cmd_multiplicity_demo(
    config: ExperimentConfig,
    out_dir: PathBuf,
    threads: usize,
) -> Result<()> {
    let params = config.system_params()?;
    if params.repulsion != 0.0 {
        return Err(CliError::Config(
            "the multiplicity demonstration uses the U = 0 ring (bond phase pinned at zero)"
                .into(),
        ));
    }
    let ops = build_operators(&config)?;
    let gs = solve_ground(&ops, &config)?;
    let pulse = config.pulse()?;
    let grid = config.time_grid()?;
    let opts = propagation_options(&config);
    let window = config.window()?;

    let driven = propagate_driven(&ops, &gs.psi, &DriveField::Pulse(pulse), &grid, &opts)?;
    let target = TargetCurrent::new(
        UniformSeries::new(grid.dt, driven.current.clone()).map_err(CliError::Core)?,
        1.0,
    );
    // the demo intentionally rides through |X| = 1: monitor instead of abort
    let constraints = config.constraints(ConstraintMode::Monitor);
    let tracked = propagate_tracking_program(
        &ops,
        &gs.psi,
        &TrackingProgram::Current(target),
        &grid,
        constraints,
        &opts,
    )?;

    let mut max_current_gap = 0.0f64;
    let mut max_field_gap = 0.0f64;
    let mut max_sin_gap = 0.0f64;
    for i in 0..tracked.len() {
        max_current_gap = max_current_gap.max((tracked.current[i] - driven.current[i]).abs());
        max_field_gap = max_field_gap.max((tracked.phi[i] - driven.phi[i]).abs());
        max_sin_gap = max_sin_gap.max((tracked.phi[i].sin() - driven.phi[i].sin()).abs());
    }

    let mut ctx = RunContext::new(out_dir, "multiplicity-demo", config, threads)?;
    let text = {
        use std::fmt::Write as _;
        let mut t = String::from("# peierls multiplicity comparison v1\n");
        let _ = writeln!(t, "# dt: {}", grid.dt);
        t.push_str("time\tphi_driven\tphi_tracking\tcurrent_driven\tcurrent_tracking\tsin_gap\n");
        for i in 0..tracked.len() {
            let _ = writeln!(
                t,
                "{}\t{}\t{}\t{}\t{}\t{}",
                tracked.times[i],
                driven.phi[i],
                tracked.phi[i],
                driven.current[i],
                tracked.current[i],
                (tracked.phi[i].sin() - driven.phi[i].sin()).abs()
            );
        }
        t
    };
    std::fs::write(ctx.path("comparison.tsv"), text)?;
    ctx.register("comparison.tsv");
    runio::write_trajectory(&ctx.path("trajectory_driven.tsv"), &driven)?;
    ctx.register("trajectory_driven.tsv");
    runio::write_trajectory(&ctx.path("trajectory_tracking.tsv"), &tracked)?;
    ctx.register("trajectory_tracking.tsv");
    let residual = runio::write_ehrenfest(&ctx.path(runio::EHRENFEST_FILE), &tracked)?;
    ctx.register(runio::EHRENFEST_FILE);
    let _ = window;

    ctx.note("max_current_gap", max_current_gap);
    ctx.note("max_field_gap", max_field_gap);
    ctx.note("max_sin_gap", max_sin_gap);
    ctx.note("ehrenfest_max_residual", residual);
    ctx.note("pulse_amplitude", pulse.amplitude);
    ctx.record_events(&tracked);
    println!(
        "multiplicity-demo: max |J - J_T| = {max_current_gap:.3e}; max |phi_T - phi| = {max_field_gap:.3e}; max |sin phi_T - sin phi| = {max_sin_gap:.3e}"
    );
    if max_field_gap > 0.1 {
        println!("multiplicity-demo: fields diverge while the current is reproduced (threshold crossed)");
    } else {
        println!("multiplicity-demo: fields agree (sub-threshold control case)");
    }
    ctx.finish()
}

pub fn cmd_filter_sweep(config: ExperimentConfig, out_dir: PathBuf, threads: usize) -> Result<()> {
    let filter = config
        .filter
        .clone()
        .ok_or_else(|| CliError::Config("filter-sweep needs a [filter] block".into()))?;
    if filter.cutoffs.is_empty() {
        return Err(CliError::Config("filter.cutoffs must not be empty".into()));
    }
    let ops = build_operators(&config)?;
    let gs = solve_ground(&ops, &config)?;
    let window = config.window()?;
    let omega0 = filter.omega0;

    let source = resolve_path(&filter.phi_source);
    let table = runio::read_table(&source)?;
    let dt = table.dt()?;
    let phi = UniformSeries::new(dt, table.column("phi")?.to_vec()).map_err(CliError::Core)?;
    let target_current = table.column("target")?;

    // the spectrum the band-limited re-runs are judged against
    let target_djdt = spectral::numerical_gradient(target_current, dt).map_err(CliError::Core)?;
    let target_spectrum =
        spectral::harmonic_spectrum(&target_djdt, dt, omega0, window).map_err(CliError::Core)?;

    let opts = propagation_options(&config);
    let entries = spectral::filter_sweep(
        &ops,
        &gs.psi,
        &phi,
        &filter.cutoffs,
        omega0,
        window,
        &opts,
    );

    let mut ctx = RunContext::new(out_dir, "filter-sweep", config, threads)?;
    runio::write_spectrum(&ctx.path("target_spectrum.tsv"), &target_spectrum)?;
    ctx.register("target_spectrum.tsv");

    let mut sweep_rows = String::from("# peierls filter sweep v1\ncutoff\tmismatch\tok\n");
    for (i, entry) in entries.iter().enumerate() {
        match &entry.outcome {
            Ok(out) => {
                let name = format!("spectrum_wc_{i:02}.tsv");
                runio::write_spectrum(&ctx.path(&name), &out.spectrum)?;
                ctx.register(&name);
                let mismatch =
                    spectral::spectral_mismatch(&out.spectrum, &target_spectrum, entry.cutoff);
                use std::fmt::Write as _;
                let _ = writeln!(sweep_rows, "{}\t{}\t1", entry.cutoff, mismatch);
                println!(
                    "filter-sweep: cutoff {:>8.3} w0  mismatch {mismatch:.6}",
                    entry.cutoff
                );
            }
            Err(e) => {
                use std::fmt::Write as _;
                let _ = writeln!(sweep_rows, "# cutoff {} failed: {e}", entry.cutoff);
                let _ = writeln!(sweep_rows, "{}\tnan\t0", entry.cutoff);
                eprintln!("filter-sweep: cutoff {} failed: {e}", entry.cutoff);
            }
        }
    }
    std::fs::write(ctx.path("sweep.tsv"), sweep_rows)?;
    ctx.register("sweep.tsv");
    ctx.note("cutoffs", filter.cutoffs.len() as i64);
    ctx.note(
        "failed_entries",
        entries.iter().filter(|e| e.outcome.is_err()).count() as i64,
    );
    ctx.finish()
}
