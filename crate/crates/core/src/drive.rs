//! Drive fields and target series.
//!
//! The reference pulse is a ramped sine, phi(t) = A sin^2(w0 t / 2 Nc) sin(w0 t),
//! which starts at zero, is smooth, and closes after Nc carrier cycles.
//! Recorded fields and targets live on uniform grids and are interpolated
//! with a C1 cubic (Catmull-Rom slopes), so target derivatives are available
//! analytically from the interpolant.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseForm {
    /// sin^2 envelope over the full pulse, zero at both ends.
    RampedSine,
}

/// Parameters of the analytic drive pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    /// Peak Peierls phase amplitude (dimensionless).
    pub amplitude: f64,
    /// Carrier angular frequency (inverse time).
    pub omega0: f64,
    /// Number of carrier cycles under the envelope.
    pub cycles: u32,
    pub form: PulseForm,
}

impl PulseSpec {
    pub fn new(amplitude: f64, omega0: f64, cycles: u32) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pulse frequency must be positive, got {omega0}"
            )));
        }
        if cycles == 0 {
            return Err(Error::InvalidParameter("pulse needs at least one cycle".into()));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidParameter("pulse amplitude must be finite".into()));
        }
        Ok(PulseSpec {
            amplitude,
            omega0,
            cycles,
            form: PulseForm::RampedSine,
        })
    }

    pub fn duration(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.cycles as f64 / self.omega0
    }

    /// phi(t); zero outside [0, duration].
    pub fn phi(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() {
            return 0.0;
        }
        match self.form {
            PulseForm::RampedSine => {
                let env = (self.omega0 * t / (2.0 * self.cycles as f64)).sin();
                self.amplitude * env * env * (self.omega0 * t).sin()
            }
        }
    }
}

/// Samples on a uniform grid starting at t = 0 with C1 cubic interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    dt: f64,
    values: Vec<f64>,
}

impl UniformSeries {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "series step must be positive, got {dt}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidParameter(
                "series needs at least two samples".into(),
            ));
        }
        Ok(UniformSeries { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    /// Catmull-Rom slope at node i, in value units per sample.
    fn slope(&self, i: usize) -> f64 {
        let v = &self.values;
        let n = v.len();
        if i == 0 {
            v[1] - v[0]
        } else if i + 1 == n {
            v[n - 1] - v[n - 2]
        } else {
            0.5 * (v[i + 1] - v[i - 1])
        }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.values.len();
        let x = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let mut i = x.floor() as usize;
        if i >= n - 1 {
            i = n - 2;
        }
        (i, x - i as f64)
    }

    /// Interpolated value; t is clamped to the sampled range.
    pub fn value(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slope(i), self.slope(i + 1));
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * m1
    }

    /// Analytic derivative of the interpolant.
    pub fn derivative(&self, t: f64) -> f64 {
        let (i, s) = self.locate(t);
        let (p0, p1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slope(i), self.slope(i + 1));
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * p0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * p1
            + (3.0 * s2 - 2.0 * s) * m1)
            / self.dt
    }
}

/// A drive field: the analytic pulse or a tabulated control field (e.g. a
/// reconstructed or band-limited tracking field).
#[derive(Debug, Clone)]
pub enum DriveField {
    Pulse(PulseSpec),
    Samples(UniformSeries),
}

impl DriveField {
    pub fn phi(&self, t: f64) -> f64 {
        match self {
            DriveField::Pulse(p) => p.phi(t),
            DriveField::Samples(s) => s.value(t),
        }
    }
}

/// Target current J_s(t) = scale * (sampled J_T)(t).
#[derive(Debug, Clone)]
pub struct TargetCurrent {
    pub series: UniformSeries,
    pub scale: f64,
}

impl TargetCurrent {
    pub fn new(series: UniformSeries, scale: f64) -> Self {
        TargetCurrent { series, scale }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.scale * self.series.value(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.scale * self.series.derivative(t)
    }

    pub fn max_abs(&self) -> f64 {
        self.series
            .values()
            .iter()
            .fold(0.0f64, |m, &v| m.max((self.scale * v).abs()))
    }
}

/// Target for an arbitrary tracked observable.
#[derive(Debug, Clone)]
pub enum ObservableTarget {
    /// Hold the observable at its initial expectation: dO/dt = 0.
    Hold,
    /// Follow a sampled O_T(t); the rate comes from the interpolant.
    Series(UniformSeries),
}

impl ObservableTarget {
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            ObservableTarget::Hold => 0.0,
            ObservableTarget::Series(s) => s.derivative(t),
        }
    }
}
