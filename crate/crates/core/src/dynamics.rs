//! Propagation of the driven Schrödinger equation and of the field-free
//! nonlinear tracking equation of motion.
//!
//! Both evolutions share one stepping kernel. A stage evaluation produces
//! the kinetic coefficient multiplying K in
//!
//!   H psi = coeff K psi + conj(coeff) K† psi + U D psi,
//!
//! where for a driven run coeff = -t0 e^{-i phi(t)} and for a tracking run
//! coeff = -t0 (sqrt(1 - Y^2) - i Y) e^{-i theta_eff} with
//! Y = (B - dO_T/dt) / (2 t0 R_eff). Tracking the current is the special
//! case R_eff = e a R(psi), theta_eff = theta(psi), B = 0, and the target
//! rate replaced by the target current value, which reduces the inversion to
//! phi_T = arcsin(-X) + theta with X = J_T / (2 e a t0 R).
//!
//! The integrator is a fixed-step classical Runge-Kutta scheme; the state
//! dependence of the tracking generator is handled by re-evaluating the bond
//! expectation at every stage. Propagation happens in a frame shifted by a
//! constant reference energy, which changes states only by a global phase
//! and keeps the norm drift of the explicit scheme far below tolerance.

use num_complex::Complex64;

use crate::drive::{DriveField, ObservableTarget, TargetCurrent};
use crate::error::{ConstraintKind, Error, Result};
use crate::fock::SystemParams;
use crate::linalg;
use crate::operators::{BondExpectation, LatticeOperators};
use crate::sparse::SparseOperator;
use crate::spectral;

/// How constraint violations are handled during tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// Abort with [`Error::ConstraintViolation`].
    Enforce,
    /// Log the event, clamp the inversion argument, and continue. Used by
    /// the multiplicity demonstration, which deliberately drives through
    /// |X| = 1.
    Monitor,
}

#[derive(Debug, Clone, Copy)]
pub struct ConstraintConfig {
    /// |X| < 1 - eps1 keeps the tracking generator Hermitian.
    pub eps1: f64,
    /// R > eps2 keeps the inversion away from the singular bond.
    pub eps2: f64,
    pub mode: ConstraintMode,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            eps1: 1e-3,
            eps2: 1e-8,
            mode: ConstraintMode::Enforce,
        }
    }
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps1 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps1 must lie in (0, 1), got {}",
                self.eps1
            )));
        }
        if !(self.eps2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps2 must be positive, got {}",
                self.eps2
            )));
        }
        Ok(())
    }
}

/// Uniform time grid: t_n = n dt for n = 0..=steps.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("need at least one step".into()));
        }
        Ok(TimeGrid { dt, steps })
    }

    /// Grid covering one pulse with a fixed number of steps per carrier
    /// cycle.
    pub fn for_pulse(pulse: &crate::drive::PulseSpec, steps_per_cycle: usize) -> Result<Self> {
        if steps_per_cycle == 0 {
            return Err(Error::InvalidParameter(
                "steps_per_cycle must be positive".into(),
            ));
        }
        let steps = steps_per_cycle * pulse.cycles as usize;
        Self::new(pulse.duration() / steps as f64, steps)
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PropagationOptions {
    /// Abort when | ||psi|| - 1 | exceeds this.
    pub norm_tol: f64,
    /// Constant energy shift of the propagation frame; `None` picks the
    /// initial energy expectation.
    pub energy_shift: Option<f64>,
    /// Keep a copy of the state every this many steps (0 = never).
    pub snapshot_stride: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            norm_tol: 1e-8,
            energy_shift: None,
            snapshot_stride: 0,
        }
    }
}

/// Which observable a tracking run steers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackedObservable {
    Current,
    Doublon,
    BondReal,
}

impl TrackedObservable {
    pub fn label(&self) -> &'static str {
        match self {
            TrackedObservable::Current => "current",
            TrackedObservable::Doublon => "doublon",
            TrackedObservable::BondReal => "bond-real",
        }
    }
}

/// A tracking assignment: the observable plus its target trajectory.
#[derive(Debug, Clone)]
pub enum TrackingProgram {
    Current(TargetCurrent),
    Doublon(ObservableTarget),
    BondReal(ObservableTarget),
}

impl TrackingProgram {
    pub fn kind(&self) -> TrackedObservable {
        match self {
            TrackingProgram::Current(_) => TrackedObservable::Current,
            TrackingProgram::Doublon(_) => TrackedObservable::Doublon,
            TrackingProgram::BondReal(_) => TrackedObservable::BondReal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Driven,
    Tracking(TrackedObservable),
}

#[derive(Debug, Clone, Copy)]
pub struct ConstraintEvent {
    pub time: f64,
    pub kind: ConstraintKind,
    pub value: f64,
}

const MAX_LOGGED_EVENTS: usize = 10_000;

/// Per-step record of a propagation.
///
/// `bond_phase` is stored unwrapped (no 2 pi jumps); `phi` is the applied
/// field for driven runs and the reconstructed control field for tracking
/// runs, branch-continued across steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: SystemParams,
    pub kind: RunKind,
    pub dt: f64,
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub current: Vec<f64>,
    /// Target series for tracking runs (current or observable target).
    pub target: Option<Vec<f64>>,
    /// Tracked observable expectation for non-current tracking runs.
    pub observable: Option<Vec<f64>>,
    pub bond_magnitude: Vec<f64>,
    pub bond_phase: Vec<f64>,
    pub comm_magnitude: Vec<f64>,
    pub comm_phase: Vec<f64>,
    pub norm: Vec<f64>,
    pub energy: Vec<f64>,
    /// Tracking argument X (or Y for observable tracking), recorded before
    /// any clamping.
    pub x: Vec<f64>,
    pub doublons: Vec<f64>,
    pub snapshots: Vec<(usize, Vec<Complex64>)>,
    pub constraint_events: Vec<ConstraintEvent>,
    pub total_constraint_events: usize,
    pub energy_shift: f64,
}

impl Trajectory {
    fn with_capacity(params: SystemParams, kind: RunKind, grid: &TimeGrid) -> Self {
        let n = grid.steps + 1;
        let tracking = !matches!(kind, RunKind::Driven);
        let observable = matches!(
            kind,
            RunKind::Tracking(TrackedObservable::Doublon)
                | RunKind::Tracking(TrackedObservable::BondReal)
        );
        Trajectory {
            params,
            kind,
            dt: grid.dt,
            times: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            current: Vec::with_capacity(n),
            target: tracking.then(|| Vec::with_capacity(n)),
            observable: observable.then(|| Vec::with_capacity(n)),
            bond_magnitude: Vec::with_capacity(n),
            bond_phase: Vec::with_capacity(n),
            comm_magnitude: Vec::with_capacity(n),
            comm_phase: Vec::with_capacity(n),
            norm: Vec::with_capacity(n),
            energy: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            doublons: Vec::with_capacity(n),
            snapshots: Vec::new(),
            constraint_events: Vec::new(),
            total_constraint_events: 0,
            energy_shift: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest |tracked - target| over the stored steps (tracking runs).
    pub fn max_tracking_error(&self) -> Option<f64> {
        let target = self.target.as_ref()?;
        let traced: &[f64] = match self.kind {
            RunKind::Tracking(TrackedObservable::Current) => &self.current,
            RunKind::Tracking(_) => self.observable.as_ref()?,
            RunKind::Driven => return None,
        };
        Some(
            traced
                .iter()
                .zip(target)
                .fold(0.0f64, |m, (j, t)| m.max((j - t).abs())),
        )
    }
}

/// Remove artificial 2 pi jumps: each output step differs from its
/// predecessor by the principal-value increment.
pub fn unwrap_phase(series: &[f64]) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = Vec::with_capacity(series.len());
    let mut offset = 0.0;
    for (i, &v) in series.iter().enumerate() {
        if i == 0 {
            out.push(v);
            continue;
        }
        let prev = out[i - 1];
        let mut step = v + offset - prev;
        while step > std::f64::consts::PI {
            offset -= tau;
            step -= tau;
        }
        while step < -std::f64::consts::PI {
            offset += tau;
            step += tau;
        }
        out.push(v + offset);
    }
    out
}

/// Shift `candidate` by whole turns until it lies within pi of `prev`.
fn continue_branch(candidate: f64, prev: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = candidate;
    while out - prev > std::f64::consts::PI {
        out -= tau;
    }
    while prev - out > std::f64::consts::PI {
        out += tau;
    }
    out
}

/// Commutator data entering the field inversion for an arbitrary observable:
/// <[K, O]> = R_O e^{i theta_O} and the interaction drift B = i U <[D, O]>.
#[derive(Debug, Clone, Copy)]
pub struct ObservableTerms {
    pub magnitude: f64,
    pub phase: f64,
    pub drift: f64,
}

/// Evaluate (R_O, theta_O, B) for a Hermitian observable whose expectation
/// does not depend explicitly on the field.
pub fn observable_tracking_terms(
    ops: &LatticeOperators,
    psi: &[Complex64],
    observable: &SparseOperator,
) -> Result<ObservableTerms> {
    if observable.dim() != ops.dim() || psi.len() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            got: observable.dim().max(psi.len()),
        });
    }
    let w = ops.bond().apply_alloc(psi);
    let wd = ops.bond_dag().apply_alloc(psi);
    let u = observable.apply_alloc(psi);
    let (v, b) = observable_terms_from_parts(ops, psi, &w, &wd, &u);
    Ok(ObservableTerms {
        magnitude: v.norm(),
        phase: v.arg(),
        drift: b,
    })
}

/// (<[K, O]>, B) from precomputed K psi, K† psi and O psi.
fn observable_terms_from_parts(
    ops: &LatticeOperators,
    psi: &[Complex64],
    w: &[Complex64],
    wd: &[Complex64],
    u: &[Complex64],
) -> (Complex64, f64) {
    // <K O> = (K† psi)† (O psi), <O K> = (O psi)† (K psi)
    let v = linalg::dot(wd, u) - linalg::dot(u, w);
    // B = i U <[D, O]> with <[D, O]> = z - conj(z), z = <D O>
    let z = linalg::weighted_dot(psi, ops.doublon_diagonal(), u);
    let b = -2.0 * ops.params().repulsion * z.im;
    (v, b)
}

/// Control field for an arbitrary observable:
/// phi_O = arcsin[(B - dO_T/dt) / (2 t0 R_O)] + theta_O, branch-continued
/// against `prev_phi`. `time` only labels constraint errors.
pub fn observable_tracking_field(
    terms: &ObservableTerms,
    rate_target: f64,
    t0: f64,
    constraints: &ConstraintConfig,
    prev_phi: f64,
    time: f64,
) -> Result<f64> {
    let inv = invert_field(terms, rate_target, t0, constraints, prev_phi, time, false, None)?;
    Ok(inv.phi)
}

/// phi_T = arcsin(-X) + theta via the observable inversion with
/// R_eff = e a R, theta_eff = theta, B = 0 and the target current as rate.
pub fn reconstruct_phi(
    bond: &BondExpectation,
    j_target: f64,
    params: &SystemParams,
    constraints: &ConstraintConfig,
    prev_phi: f64,
    time: f64,
) -> Result<f64> {
    let terms = current_terms(bond, params);
    observable_tracking_field(&terms, j_target, params.hopping, constraints, prev_phi, time)
}

fn current_terms(bond: &BondExpectation, params: &SystemParams) -> ObservableTerms {
    ObservableTerms {
        magnitude: params.charge * params.lattice_constant * bond.magnitude,
        phase: bond.phase,
        drift: 0.0,
    }
}

struct Inversion {
    /// Clamped arcsin argument Y.
    y: f64,
    /// Raw (unclamped) argument, for diagnostics.
    y_raw: f64,
    phi: f64,
    /// Field held from the previous step because the observable is
    /// momentarily uncontrollable but the target is consistent.
    held: bool,
}

#[allow(clippy::too_many_arguments)]
fn invert_field(
    terms: &ObservableTerms,
    rate_target: f64,
    t0: f64,
    constraints: &ConstraintConfig,
    prev_phi: f64,
    time: f64,
    allow_hold: bool,
    mut events: Option<&mut dyn FnMut(ConstraintEvent)>,
) -> Result<Inversion> {
    let numer = terms.drift - rate_target;
    let mut emit = |kind: ConstraintKind, value: f64| -> Result<()> {
        match constraints.mode {
            ConstraintMode::Enforce => Err(Error::ConstraintViolation { time, kind, value }),
            ConstraintMode::Monitor => {
                if let Some(cb) = events.as_mut() {
                    cb(ConstraintEvent { time, kind, value });
                }
                Ok(())
            }
        }
    };

    if terms.magnitude <= constraints.eps2 {
        // a consistent target (rate already carried by the drift term)
        // leaves the field free; keep it constant so an eigenstate stays an
        // eigenstate
        if allow_hold && numer.abs() <= 2.0 * t0 * constraints.eps2 {
            return Ok(Inversion {
                y: 0.0,
                y_raw: 0.0,
                phi: prev_phi,
                held: true,
            });
        }
        emit(ConstraintKind::BondMagnitude, terms.magnitude)?;
    }

    let y_raw = if terms.magnitude > f64::MIN_POSITIVE {
        numer / (2.0 * t0 * terms.magnitude)
    } else {
        2.0 * numer.signum()
    };
    let mut y = y_raw;
    if y_raw.abs() >= 1.0 - constraints.eps1 {
        emit(ConstraintKind::TrackingArgument, y_raw.abs())?;
        y = y_raw.clamp(-1.0, 1.0);
    }
    let phi = continue_branch(y.asin() + terms.phase, prev_phi);
    Ok(Inversion {
        y,
        y_raw,
        phi,
        held: false,
    })
}

enum Mode<'a> {
    Driven {
        field: &'a DriveField,
    },
    Tracking {
        program: &'a TrackingProgram,
        /// Assembled observable matrix for the non-current kinds.
        observable: Option<SparseOperator>,
        /// O(0), the hold value and record baseline.
        initial_value: f64,
    },
}

struct StageAux {
    coeff: Complex64,
    phi: f64,
    bond: Option<BondExpectation>,
    /// Signed tracking argument as recorded: X for current, Y otherwise.
    x_raw: f64,
}

struct Propagator<'a> {
    ops: &'a LatticeOperators,
    constraints: ConstraintConfig,
    mode: Mode<'a>,
    shift: f64,
    prev_phi: f64,
    events: Vec<ConstraintEvent>,
    total_events: usize,
    w: Vec<Complex64>,
    wd: Vec<Complex64>,
    u: Vec<Complex64>,
}

impl Propagator<'_> {
    fn stage_eval(&mut self, t: f64, psi: &[Complex64]) -> Result<StageAux> {
        self.ops.bond().apply(psi, &mut self.w);
        self.ops.bond_dag().apply(psi, &mut self.wd);
        match &self.mode {
            Mode::Driven { field } => {
                let phi = field.phi(t);
                Ok(StageAux {
                    coeff: self.ops.hop_coefficient(phi),
                    phi,
                    bond: None,
                    x_raw: 0.0,
                })
            }
            Mode::Tracking {
                program,
                observable,
                ..
            } => {
                let params = *self.ops.params();
                let bond = BondExpectation::from_k(linalg::dot(psi, &self.w));
                let (terms, rate, record_sign, allow_hold) = match program {
                    TrackingProgram::Current(target) => {
                        (current_terms(&bond, &params), target.value(t), -1.0, false)
                    }
                    TrackingProgram::Doublon(target) | TrackingProgram::BondReal(target) => {
                        let obs = observable.as_ref().expect("observable matrix assembled");
                        obs.apply(psi, &mut self.u);
                        let (v, b) =
                            observable_terms_from_parts(self.ops, psi, &self.w, &self.wd, &self.u);
                        (
                            ObservableTerms {
                                magnitude: v.norm(),
                                phase: v.arg(),
                                drift: b,
                            },
                            target.rate(t),
                            1.0,
                            true,
                        )
                    }
                };
                let constraints = self.constraints;
                let t0 = params.hopping;
                let prev_phi = self.prev_phi;
                let events = &mut self.events;
                let total = &mut self.total_events;
                let mut log = |ev: ConstraintEvent| {
                    *total += 1;
                    if events.len() < MAX_LOGGED_EVENTS {
                        events.push(ev);
                    }
                };
                let inv = invert_field(
                    &terms,
                    rate,
                    t0,
                    &constraints,
                    prev_phi,
                    t,
                    allow_hold,
                    Some(&mut log),
                )?;
                let coeff = if inv.held {
                    self.ops.hop_coefficient(inv.phi)
                } else {
                    let root = (1.0 - inv.y * inv.y).max(0.0).sqrt();
                    -t0 * Complex64::new(root, -inv.y)
                        * Complex64::new(terms.phase.cos(), -terms.phase.sin())
                };
                Ok(StageAux {
                    coeff,
                    phi: inv.phi,
                    bond: Some(bond),
                    x_raw: record_sign * inv.y_raw,
                })
            }
        }
    }

    fn record(&mut self, traj: &mut Trajectory, t: f64, psi: &[Complex64], aux: &StageAux) {
        let bond = aux
            .bond
            .unwrap_or_else(|| BondExpectation::from_k(linalg::dot(psi, &self.w)));
        let comm = self.ops.commutator_from_parts(psi, &self.w, &self.wd);
        let doublons = linalg::weighted_norm2(self.ops.doublon_diagonal(), psi);
        let current = self.ops.current_from_bond(&bond, aux.phi);
        let energy =
            self.ops
                .energy_from_parts(&bond, self.ops.hop_coefficient(aux.phi), doublons);
        traj.times.push(t);
        traj.phi.push(aux.phi);
        traj.current.push(current);
        traj.bond_magnitude.push(bond.magnitude);
        traj.bond_phase.push(bond.phase);
        traj.comm_magnitude.push(comm.norm());
        traj.comm_phase.push(comm.arg());
        traj.norm.push(linalg::norm(psi));
        traj.energy.push(energy);
        traj.doublons.push(doublons);
        match &self.mode {
            Mode::Driven { .. } => {
                let denom = 2.0
                    * self.ops.params().charge
                    * self.ops.params().lattice_constant
                    * self.ops.params().hopping
                    * bond.magnitude;
                traj.x.push(if denom > 0.0 { current / denom } else { 0.0 });
            }
            Mode::Tracking {
                program,
                initial_value,
                ..
            } => {
                traj.x.push(aux.x_raw);
                let target_value = match program {
                    TrackingProgram::Current(target) => target.value(t),
                    TrackingProgram::Doublon(target) | TrackingProgram::BondReal(target) => {
                        match target {
                            ObservableTarget::Hold => *initial_value,
                            ObservableTarget::Series(s) => s.value(t),
                        }
                    }
                };
                if let Some(col) = traj.target.as_mut() {
                    col.push(target_value);
                }
                if let Some(col) = traj.observable.as_mut() {
                    let value = match program {
                        TrackingProgram::Doublon(_) => doublons,
                        TrackingProgram::BondReal(_) => 2.0 * bond.k.re,
                        TrackingProgram::Current(_) => unreachable!(),
                    };
                    col.push(value);
                }
            }
        }
        self.prev_phi = aux.phi;
    }
}

fn check_normalized(psi: &[Complex64]) -> Result<()> {
    let n = linalg::norm(psi);
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "initial state is not normalized: ||psi|| = {n}"
        )));
    }
    Ok(())
}

fn propagate(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    mode: Mode<'_>,
    grid: &TimeGrid,
    constraints: ConstraintConfig,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    if psi0.len() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            got: psi0.len(),
        });
    }
    check_normalized(psi0)?;
    constraints.validate()?;

    let kind = match &mode {
        Mode::Driven { .. } => RunKind::Driven,
        Mode::Tracking { program, .. } => RunKind::Tracking(program.kind()),
    };
    let shift = match opts.energy_shift {
        Some(s) => s,
        None => {
            let phi0 = match &mode {
                Mode::Driven { field } => field.phi(0.0),
                Mode::Tracking { .. } => 0.0,
            };
            ops.energy_expectation(psi0, phi0)?
        }
    };

    let dim = ops.dim();
    let mut prop = Propagator {
        ops,
        constraints,
        mode,
        shift,
        prev_phi: 0.0,
        events: Vec::new(),
        total_events: 0,
        w: vec![Complex64::ZERO; dim],
        wd: vec![Complex64::ZERO; dim],
        u: vec![Complex64::ZERO; dim],
    };
    let mut traj = Trajectory::with_capacity(*ops.params(), kind, grid);
    traj.energy_shift = shift;

    let mut psi = psi0.to_vec();
    let mut k1 = vec![Complex64::ZERO; dim];
    let mut k2 = vec![Complex64::ZERO; dim];
    let mut k3 = vec![Complex64::ZERO; dim];
    let mut k4 = vec![Complex64::ZERO; dim];
    let mut stage = vec![Complex64::ZERO; dim];

    let dt = grid.dt;
    for n in 0..=grid.steps {
        let t = n as f64 * dt;
        let aux = prop.stage_eval(t, &psi)?;
        prop.record(&mut traj, t, &psi, &aux);
        if opts.snapshot_stride > 0 && (n % opts.snapshot_stride == 0 || n == grid.steps) {
            traj.snapshots.push((n, psi.clone()));
        }
        if n == grid.steps {
            break;
        }

        ops.schrodinger_rhs_into(aux.coeff, prop.shift, &psi, &prop.w, &prop.wd, &mut k1);

        linalg::stage_update(&psi, 0.5 * dt, &k1, &mut stage);
        let aux2 = prop.stage_eval(t + 0.5 * dt, &stage)?;
        ops.schrodinger_rhs_into(aux2.coeff, prop.shift, &stage, &prop.w, &prop.wd, &mut k2);

        linalg::stage_update(&psi, 0.5 * dt, &k2, &mut stage);
        let aux3 = prop.stage_eval(t + 0.5 * dt, &stage)?;
        ops.schrodinger_rhs_into(aux3.coeff, prop.shift, &stage, &prop.w, &prop.wd, &mut k3);

        linalg::stage_update(&psi, dt, &k3, &mut stage);
        let aux4 = prop.stage_eval(t + dt, &stage)?;
        ops.schrodinger_rhs_into(aux4.coeff, prop.shift, &stage, &prop.w, &prop.wd, &mut k4);

        linalg::rk4_combine(&mut psi, dt, &k1, &k2, &k3, &k4);

        let norm = linalg::norm(&psi);
        if (norm - 1.0).abs() > opts.norm_tol {
            return Err(Error::IntegratorFailure {
                time: t + dt,
                reason: format!(
                    "norm drift | ||psi|| - 1 | = {:.3e} exceeds {:.3e}",
                    (norm - 1.0).abs(),
                    opts.norm_tol
                ),
            });
        }
    }

    traj.bond_phase = unwrap_phase(&traj.bond_phase);
    traj.constraint_events = std::mem::take(&mut prop.events);
    traj.total_constraint_events = prop.total_events;
    Ok(traj)
}

/// Evolve under H(phi(t)) and record the observable series.
pub fn propagate_driven(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    field: &DriveField,
    grid: &TimeGrid,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    propagate(
        ops,
        psi0,
        Mode::Driven { field },
        grid,
        ConstraintConfig::default(),
        opts,
    )
}

/// Evolve under the field-free tracking generator so the programmed
/// observable follows its target, recording the reconstructed control field.
pub fn propagate_tracking_program(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    program: &TrackingProgram,
    grid: &TimeGrid,
    constraints: ConstraintConfig,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    let observable = match program {
        TrackingProgram::Current(_) => None,
        TrackingProgram::Doublon(_) => Some(SparseOperator::diagonal(ops.doublon_diagonal())),
        TrackingProgram::BondReal(_) => Some(bond_real_observable(ops)),
    };
    let initial_value = match program {
        TrackingProgram::Current(_) => 0.0,
        TrackingProgram::Doublon(_) => ops.doublon_expectation(psi0),
        TrackingProgram::BondReal(_) => 2.0 * ops.bond_expectation(psi0)?.k.re,
    };
    propagate(
        ops,
        psi0,
        Mode::Tracking {
            program,
            observable,
            initial_value,
        },
        grid,
        constraints,
        opts,
    )
}

/// Current tracking: the observable inversion reduced to
/// phi_T = arcsin(-X) + theta.
pub fn propagate_tracking(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    target: &TargetCurrent,
    grid: &TimeGrid,
    constraints: ConstraintConfig,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    propagate_tracking_program(
        ops,
        psi0,
        &TrackingProgram::Current(target.clone()),
        grid,
        constraints,
        opts,
    )
}

/// The Hermitian bond observable K + K†.
pub fn bond_real_observable(ops: &LatticeOperators) -> SparseOperator {
    SparseOperator::linear_combination(
        Complex64::new(1.0, 0.0),
        ops.bond(),
        Complex64::new(1.0, 0.0),
        ops.bond_dag(),
    )
    .expect("same sector")
}

/// -i H_T(J_T, psi) psi: the tracking equation of motion at one instant.
pub fn tracking_rhs(
    ops: &LatticeOperators,
    psi: &[Complex64],
    j_target: f64,
    constraints: &ConstraintConfig,
) -> Result<Vec<Complex64>> {
    if psi.len() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            got: psi.len(),
        });
    }
    let params = ops.params();
    let bond = ops.bond_expectation(psi)?;
    let terms = current_terms(&bond, params);
    let inv = invert_field(&terms, j_target, params.hopping, constraints, 0.0, 0.0, false, None)?;
    let root = (1.0 - inv.y * inv.y).max(0.0).sqrt();
    let coeff = -params.hopping
        * Complex64::new(root, -inv.y)
        * Complex64::new(terms.phase.cos(), -terms.phase.sin());
    let w = ops.bond().apply_alloc(psi);
    let wd = ops.bond_dag().apply_alloc(psi);
    let mut out = vec![Complex64::ZERO; ops.dim()];
    ops.schrodinger_rhs_into(coeff, 0.0, psi, &w, &wd, &mut out);
    Ok(out)
}

/// Analytic dJ/dt from the two-term expectation form:
/// -2 e a t0 [ dphi/dt R cos(phi - theta) + U C cos(phi - kappa) ].
pub fn ehrenfest_rhs(
    ops: &LatticeOperators,
    psi: &[Complex64],
    phi: f64,
    dphi_dt: f64,
) -> Result<f64> {
    let bond = ops.bond_expectation(psi)?;
    let (c_mag, c_phase) = ops.doublon_bond_commutator(psi)?;
    Ok(ehrenfest_from_parts(
        ops.params(),
        phi,
        dphi_dt,
        bond.magnitude,
        bond.phase,
        c_mag,
        c_phase,
    ))
}

pub fn ehrenfest_from_parts(
    params: &SystemParams,
    phi: f64,
    dphi_dt: f64,
    bond_magnitude: f64,
    bond_phase: f64,
    comm_magnitude: f64,
    comm_phase: f64,
) -> f64 {
    let front = 2.0 * params.charge * params.lattice_constant * params.hopping;
    -front * dphi_dt * bond_magnitude * (phi - bond_phase).cos()
        - front * params.repulsion * comm_magnitude * (phi - comm_phase).cos()
}

/// Max deviation between the analytic dJ/dt and the centered numerical
/// gradient of the recorded current, with dphi/dt taken from centered
/// differences of the unwrapped field.
pub fn ehrenfest_residual(traj: &Trajectory) -> Result<f64> {
    let grad_j = spectral::numerical_gradient(&traj.current, traj.dt)?;
    let phi = unwrap_phase(&traj.phi);
    let dphi = spectral::numerical_gradient(&phi, traj.dt)?;
    let mut max = 0.0f64;
    for i in 0..traj.len() {
        let analytic = ehrenfest_from_parts(
            &traj.params,
            traj.phi[i],
            dphi[i],
            traj.bond_magnitude[i],
            traj.bond_phase[i],
            traj.comm_magnitude[i],
            traj.comm_phase[i],
        );
        max = max.max((analytic - grad_j[i]).abs());
    }
    Ok(max)
}
