//! Delimited-text writers and readers for run outputs, plus the manifest.
//!
//! Floats are printed with the shortest representation that parses back to
//! the identical bits, so written files round-trip exactly and re-runs of
//! the same configuration are byte-for-byte reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use peierls::dynamics::{RunKind, TrackedObservable, Trajectory};
use peierls::spectral::{self, Spectrum};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const TRAJECTORY_FILE: &str = "trajectory.tsv";
pub const SPECTRUM_FILE: &str = "spectrum.tsv";
pub const EHRENFEST_FILE: &str = "ehrenfest.tsv";
pub const MANIFEST_FILE: &str = "manifest.toml";

fn fmt_row(values: &[f64]) -> String {
    let mut line = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            line.push('\t');
        }
        let _ = write!(line, "{v}");
    }
    line.push('\n');
    line
}

fn kind_label(kind: RunKind) -> String {
    match kind {
        RunKind::Driven => "driven".into(),
        RunKind::Tracking(obs) => format!("tracking({})", obs.label()),
    }
}

pub fn trajectory_text(traj: &Trajectory) -> String {
    let p = &traj.params;
    let mut text = String::new();
    text.push_str("# peierls trajectory v1\n");
    let _ = writeln!(
        text,
        "# system: L={} N_up={} N_down={} t0={} U={} a={} e={}",
        p.sites, p.n_up, p.n_down, p.hopping, p.repulsion, p.lattice_constant, p.charge
    );
    let _ = writeln!(text, "# kind: {}", kind_label(traj.kind));
    let _ = writeln!(text, "# dt: {}", traj.dt);
    let _ = writeln!(text, "# energy_shift: {}", traj.energy_shift);
    text.push_str(
        "# units: time hbar/t0; current e*a*t0/hbar; energy t0; phases rad; bond_phase unwrapped\n",
    );

    let mut names: Vec<&str> = vec!["time", "phi", "current"];
    let has_target = traj.target.is_some();
    let observable_run = traj.observable.is_some();
    if has_target && !observable_run {
        names.push("target");
        names.push("tracking_error");
    }
    if observable_run {
        names.push("observable");
        names.push("observable_target");
        names.push("tracking_error");
    }
    names.extend_from_slice(&[
        "bond_magnitude",
        "bond_phase",
        "comm_magnitude",
        "comm_phase",
        "norm",
        "energy",
        "x",
        "doublons",
    ]);
    text.push_str(&names.join("\t"));
    text.push('\n');

    let mut row: Vec<f64> = Vec::with_capacity(names.len());
    for i in 0..traj.len() {
        row.clear();
        row.push(traj.times[i]);
        row.push(traj.phi[i]);
        row.push(traj.current[i]);
        if has_target && !observable_run {
            let t = traj.target.as_ref().unwrap()[i];
            row.push(t);
            row.push((traj.current[i] - t).abs());
        }
        if observable_run {
            let o = traj.observable.as_ref().unwrap()[i];
            let t = traj.target.as_ref().unwrap()[i];
            row.push(o);
            row.push(t);
            row.push((o - t).abs());
        }
        row.push(traj.bond_magnitude[i]);
        row.push(traj.bond_phase[i]);
        row.push(traj.comm_magnitude[i]);
        row.push(traj.comm_phase[i]);
        row.push(traj.norm[i]);
        row.push(traj.energy[i]);
        row.push(traj.x[i]);
        row.push(traj.doublons[i]);
        text.push_str(&fmt_row(&row));
    }
    text
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, trajectory_text(traj))?;
    Ok(())
}

pub fn spectrum_text(spec: &Spectrum) -> String {
    let mut text = String::new();
    text.push_str("# peierls spectrum v1\n");
    let _ = writeln!(text, "# omega0: {}", spec.omega0);
    let _ = writeln!(text, "# window: {}", spec.window.label());
    text.push_str("# power: one-sided |FFT|^2 / N, interior bins doubled (Parseval-exact)\n");
    text.push_str("harmonic_order\tpower\n");
    for (o, p) in spec.harmonic_order.iter().zip(&spec.power) {
        text.push_str(&fmt_row(&[*o, *p]));
    }
    text
}

pub fn write_spectrum(path: &Path, spec: &Spectrum) -> Result<()> {
    std::fs::write(path, spectrum_text(spec))?;
    Ok(())
}

/// Ehrenfest diagnostic table: numerical dJ/dt, the two-term analytic form,
/// and their difference.
pub fn write_ehrenfest(path: &Path, traj: &Trajectory) -> Result<f64> {
    let grad = spectral::numerical_gradient(&traj.current, traj.dt).map_err(CliError::Core)?;
    let phi_unwrapped = peierls::dynamics::unwrap_phase(&traj.phi);
    let dphi = spectral::numerical_gradient(&phi_unwrapped, traj.dt).map_err(CliError::Core)?;
    let mut text = String::new();
    text.push_str("# peierls ehrenfest v1\n");
    text.push_str("time\tdjdt_numeric\tdjdt_analytic\tresidual\n");
    let mut max_residual = 0.0f64;
    for i in 0..traj.len() {
        let analytic = peierls::dynamics::ehrenfest_from_parts(
            &traj.params,
            traj.phi[i],
            dphi[i],
            traj.bond_magnitude[i],
            traj.bond_phase[i],
            traj.comm_magnitude[i],
            traj.comm_phase[i],
        );
        let residual = (analytic - grad[i]).abs();
        max_residual = max_residual.max(residual);
        text.push_str(&fmt_row(&[traj.times[i], grad[i], analytic, residual]));
    }
    std::fs::write(path, text)?;
    Ok(max_residual)
}

pub fn write_state(path: &Path, psi: &[Complex64]) -> Result<()> {
    let mut text = String::new();
    text.push_str("# peierls state v1\nindex\tre\tim\n");
    for (i, amp) in psi.iter().enumerate() {
        let _ = writeln!(text, "{i}\t{}\t{}", amp.re, amp.im);
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// A parsed delimited-text table with named columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<(String, Vec<f64>)>,
    pub header_dt: Option<f64>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| CliError::Config(format!("table has no column '{name}'")))
    }

    /// Grid spacing: the exact header value when present, otherwise the
    /// first difference of the time column.
    pub fn dt(&self) -> Result<f64> {
        if let Some(dt) = self.header_dt {
            return Ok(dt);
        }
        let time = self.column("time")?;
        if time.len() < 2 {
            return Err(CliError::Config("time column too short".into()));
        }
        let dt = time[1] - time[0];
        for w in time.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-12) {
                return Err(CliError::Config("time column is not uniform".into()));
            }
        }
        Ok(dt)
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut header_dt = None;
    let mut names: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("dt:") {
                header_dt = v.trim().parse::<f64>().ok();
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match &names {
            None => {
                names = Some(fields.iter().map(|s| s.to_string()).collect());
                columns = vec![Vec::new(); fields.len()];
            }
            Some(n) => {
                if fields.len() != n.len() {
                    return Err(CliError::Config(format!(
                        "{}:{}: expected {} fields, got {}",
                        path.display(),
                        lineno + 1,
                        n.len(),
                        fields.len()
                    )));
                }
                for (c, f) in fields.iter().enumerate() {
                    let v: f64 = f.parse().map_err(|_| {
                        CliError::Config(format!(
                            "{}:{}: '{f}' is not a number",
                            path.display(),
                            lineno + 1
                        ))
                    })?;
                    columns[c].push(v);
                }
            }
        }
    }
    let names =
        names.ok_or_else(|| CliError::Config(format!("{} has no data", path.display())))?;
    Ok(Table {
        columns: names.into_iter().zip(columns).collect(),
        header_dt,
    })
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

#[derive(Debug, Serialize)]
struct RunInfo {
    command: String,
    version: String,
    seed: u64,
    threads: usize,
    wall_seconds: f64,
    status: String,
}

#[derive(Debug, Serialize)]
struct EventRow {
    time: f64,
    kind: String,
    value: f64,
}

#[derive(Debug, Serialize)]
struct ManifestDoc<'a> {
    run: RunInfo,
    summary: &'a toml::map::Map<String, toml::Value>,
    checksums: BTreeMap<String, String>,
    constraint_events: Vec<EventRow>,
    config: &'a ExperimentConfig,
}

/// Collects run products and writes the manifest last, with checksums over
/// every data file it names.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub command: String,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub summary: toml::map::Map<String, toml::Value>,
    files: Vec<String>,
    events: Vec<EventRow>,
    start: std::time::Instant,
}

impl RunContext {
    pub fn new(out_dir: PathBuf, command: &str, config: ExperimentConfig, threads: usize) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)?;
        Ok(RunContext {
            out_dir,
            command: command.to_string(),
            config,
            threads,
            summary: toml::map::Map::new(),
            files: Vec::new(),
            events: Vec::new(),
            start: std::time::Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn register(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn note(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn record_events(&mut self, traj: &Trajectory) {
        // cap what goes into the manifest; the total is kept in the summary
        for ev in traj.constraint_events.iter().take(200) {
            self.events.push(EventRow {
                time: ev.time,
                kind: ev.kind.to_string(),
                value: ev.value,
            });
        }
        let prev = self
            .summary
            .get("total_constraint_events")
            .and_then(|v| v.as_integer())
            .unwrap_or(0);
        self.note(
            "total_constraint_events",
            prev + traj.total_constraint_events as i64,
        );
    }

    pub fn finish(self) -> Result<()> {
        let mut checksums = BTreeMap::new();
        for name in &self.files {
            checksums.insert(name.clone(), sha256_hex(&self.out_dir.join(name))?);
        }
        let doc = ManifestDoc {
            run: RunInfo {
                command: self.command.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: self.config.seed,
                threads: self.threads,
                wall_seconds: self.start.elapsed().as_secs_f64(),
                status: "success".into(),
            },
            summary: &self.summary,
            checksums,
            constraint_events: self.events,
            config: &self.config,
        };
        let text = toml::to_string_pretty(&doc)
            .map_err(|e| CliError::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(self.out_dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

/// Observable column name used by trajectory-sourced targets.
pub fn target_column_for(observable: TrackedObservable) -> &'static str {
    match observable {
        TrackedObservable::Current => "current",
        TrackedObservable::Doublon => "doublons",
        TrackedObservable::BondReal => "observable",
    }
}
