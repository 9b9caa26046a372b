//! Harmonic spectra, numerical gradients, and the band-limited control
//! field filter.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::drive::{DriveField, UniformSeries};
use crate::dynamics::{propagate_driven, PropagationOptions, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::operators::LatticeOperators;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rectangular,
    Hann,
    Blackman,
}

impl WindowKind {
    pub fn label(&self) -> &'static str {
        match self {
            WindowKind::Rectangular => "rectangular",
            WindowKind::Hann => "hann",
            WindowKind::Blackman => "blackman",
        }
    }

    fn weight(&self, n: usize, len: usize) -> f64 {
        if len < 2 {
            return 1.0;
        }
        let x = n as f64 / (len - 1) as f64;
        match self {
            WindowKind::Rectangular => 1.0,
            WindowKind::Hann => {
                let s = (std::f64::consts::PI * x).sin();
                s * s
            }
            WindowKind::Blackman => {
                0.42 - 0.5 * (2.0 * std::f64::consts::PI * x).cos()
                    + 0.08 * (4.0 * std::f64::consts::PI * x).cos()
            }
        }
    }
}

/// One-sided power spectrum on a harmonic-order axis.
///
/// `power[k]` uses the one-sided convention |X_k|^2 / N with the interior
/// bins doubled, so the bins sum to the windowed-signal energy exactly
/// (Parseval).
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Bin frequency in units of omega0.
    pub harmonic_order: Vec<f64>,
    pub power: Vec<f64>,
    pub omega0: f64,
    pub window: WindowKind,
}

impl Spectrum {
    /// Total power at or below the given harmonic order.
    pub fn power_below(&self, order: f64) -> f64 {
        self.harmonic_order
            .iter()
            .zip(&self.power)
            .take_while(|(o, _)| **o <= order)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Centered differences in the interior, second-order one-sided stencils at
/// the ends.
pub fn numerical_gradient(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "gradient needs at least 3 samples, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gradient step must be positive, got {dt}"
        )));
    }
    let mut g = vec![0.0; n];
    let inv2 = 1.0 / (2.0 * dt);
    g[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) * inv2;
    for i in 1..n - 1 {
        g[i] = (series[i + 1] - series[i - 1]) * inv2;
    }
    g[n - 1] = (3.0 * series[n - 1] - 4.0 * series[n - 2] + series[n - 3]) * inv2;
    Ok(g)
}

fn fft_forward(x: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(x.len()).process(x);
}

fn fft_inverse(x: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(x.len()).process(x);
    let scale = 1.0 / x.len() as f64;
    for v in x.iter_mut() {
        *v *= scale;
    }
}

/// Power spectrum of a real signal (typically dJ/dt) against harmonic order
/// omega / omega0.
pub fn harmonic_spectrum(
    series: &[f64],
    dt: f64,
    omega0: f64,
    window: WindowKind,
) -> Result<Spectrum> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "spectrum needs at least two samples".into(),
        ));
    }
    if !(dt > 0.0) || !(omega0 > 0.0) {
        return Err(Error::InvalidParameter(
            "spectrum needs positive dt and omega0".into(),
        ));
    }
    let mut buf: Vec<Complex64> = series
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex64::new(v * window.weight(i, n), 0.0))
        .collect();
    fft_forward(&mut buf);
    let half = n / 2;
    let n_bins = half + 1; // includes DC; includes Nyquist for even n
    let d_order = 2.0 * std::f64::consts::PI / (n as f64 * dt * omega0);
    let mut harmonic_order = Vec::with_capacity(n_bins);
    let mut power = Vec::with_capacity(n_bins);
    for k in 0..n_bins {
        let mut p = buf[k].norm_sqr() / n as f64;
        let is_edge = k == 0 || (n % 2 == 0 && k == half);
        if !is_edge {
            p *= 2.0;
        }
        harmonic_order.push(k as f64 * d_order);
        power.push(p);
    }
    Ok(Spectrum {
        harmonic_order,
        power,
        omega0,
        window,
    })
}

/// Brick-wall low-pass: transform, zero every bin with |omega| > omega_c,
/// transform back. A cut-off at or above the Nyquist frequency returns the
/// input unchanged.
pub fn lowpass_filter(series: &[f64], dt: f64, omega_c: f64) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return series.to_vec();
    }
    let nyquist = std::f64::consts::PI / dt;
    if omega_c >= nyquist {
        return series.to_vec();
    }
    let omega_c = omega_c.max(0.0);
    let mut buf: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    let d_omega = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    for (k, v) in buf.iter_mut().enumerate() {
        let freq_index = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        if (freq_index * d_omega).abs() > omega_c {
            *v = Complex64::ZERO;
        }
    }
    fft_inverse(&mut buf);
    buf.into_iter().map(|v| v.re).collect()
}

/// One entry of a cut-off sweep.
#[derive(Debug)]
pub struct SweepEntry {
    /// Cut-off in units of omega0.
    pub cutoff: f64,
    pub outcome: Result<SweepOutcome>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub filtered_phi: Vec<f64>,
    pub trajectory: Trajectory,
    pub spectrum: Spectrum,
}

/// For each cut-off: band-limit the control field, re-drive the system with
/// it, and return the harmonic spectrum of the resulting dJ/dt. Entries are
/// independent and run concurrently; per-entry failures are reported in
/// place without aborting the sweep.
pub fn filter_sweep(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    phi: &UniformSeries,
    cutoffs_harmonics: &[f64],
    omega0: f64,
    window: WindowKind,
    opts: &PropagationOptions,
) -> Vec<SweepEntry> {
    let run_one = |&cutoff: &f64| -> SweepEntry {
        let outcome = (|| {
            let filtered = lowpass_filter(phi.values(), phi.dt(), cutoff * omega0);
            let field = DriveField::Samples(UniformSeries::new(phi.dt(), filtered.clone())?);
            let grid = TimeGrid::new(phi.dt(), phi.len() - 1)?;
            let trajectory = propagate_driven(ops, psi0, &field, &grid, opts)?;
            let djdt = numerical_gradient(&trajectory.current, grid.dt)?;
            let spectrum = harmonic_spectrum(&djdt, grid.dt, omega0, window)?;
            Ok(SweepOutcome {
                filtered_phi: filtered,
                trajectory,
                spectrum,
            })
        })();
        SweepEntry { cutoff, outcome }
    };
    #[cfg(feature = "parallel")]
    {
        cutoffs_harmonics.par_iter().map(run_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        cutoffs_harmonics.iter().map(run_one).collect()
    }
}

/// Target-power-weighted mean |log10(P_run / P_target)| over the bins at or
/// below the cut-off order.
///
/// Weighting by the target's own power makes the measure answer "how well
/// is the target's below-cut-off content reproduced": bins past the
/// target's spectral content carry no weight, and a widened window changes
/// the score only through bins that matter.
pub fn spectral_mismatch(candidate: &Spectrum, target: &Spectrum, max_order: f64) -> f64 {
    debug_assert_eq!(candidate.power.len(), target.power.len());
    let peak = target.power.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return 0.0;
    }
    let floor = peak * 1e-30;
    let mut acc = 0.0;
    let mut weight = 0.0;
    for i in 0..candidate.power.len().min(target.power.len()) {
        if target.harmonic_order[i] > max_order {
            break;
        }
        let p_t = target.power[i].max(floor);
        let p_c = candidate.power[i].max(floor);
        acc += p_t * (p_c.log10() - p_t.log10()).abs();
        weight += p_t;
    }
    if weight == 0.0 {
        0.0
    } else {
        acc / weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_examples() {
        // linear ramp: exact slope everywhere, including the ends
        let series: Vec<f64> = (0..50).map(|i| 0.7 * i as f64 - 3.0).collect();
        let g = numerical_gradient(&series, 0.5).unwrap();
        for v in g {
            assert!((v - 1.4).abs() < 1e-12);
        }
        // constant: zero
        let g = numerical_gradient(&[2.0; 10], 0.1).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-13));
        // too short
        assert!(numerical_gradient(&[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn gradient_of_sine_converges_at_second_order() {
        let err = |dt: f64| {
            let n = (20.0 / dt) as usize;
            let series: Vec<f64> = (0..n).map(|i| (i as f64 * dt).sin()).collect();
            let g = numerical_gradient(&series, dt).unwrap();
            let mut e = 0.0f64;
            for (i, &v) in g.iter().enumerate() {
                e = e.max((v - (i as f64 * dt).cos()).abs());
            }
            e
        };
        let ratio = err(0.02) / err(0.01);
        assert!((3.3..4.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn sine_spectrum_peaks_at_order_one() {
        let omega0 = 0.5;
        let dt = 2.0 * std::f64::consts::PI / omega0 / 128.0;
        let n = 128 * 8; // eight full cycles: the tone sits exactly on a bin
        let series: Vec<f64> = (0..n).map(|i| (omega0 * i as f64 * dt).sin()).collect();
        let spec = harmonic_spectrum(&series, dt, omega0, WindowKind::Rectangular).unwrap();
        let peak = spec
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((spec.harmonic_order[peak] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_tone_power_ratio_matches_amplitudes() {
        let omega0 = 0.5;
        let cycles = 16usize;
        let per_cycle = 64usize;
        let dt = 2.0 * std::f64::consts::PI / omega0 / per_cycle as f64;
        let n = cycles * per_cycle;
        let (a1, a3) = (1.0, 0.2);
        let series: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                a1 * (omega0 * t).sin() + a3 * (3.0 * omega0 * t).sin()
            })
            .collect();
        let spec = harmonic_spectrum(&series, dt, omega0, WindowKind::Rectangular).unwrap();
        // both tones sit exactly on bins: k = cycles and 3 cycles
        let p1 = spec.power[cycles];
        let p3 = spec.power[3 * cycles];
        let ratio = p1 / p3;
        let expect = (a1 / a3) * (a1 / a3);
        assert!(
            (ratio - expect).abs() < 1e-6 * expect,
            "ratio {ratio} vs {expect}"
        );
    }

    #[test]
    fn parseval_consistency() {
        for window in [WindowKind::Rectangular, WindowKind::Hann, WindowKind::Blackman] {
            for n in [256usize, 255] {
                let series: Vec<f64> = (0..n)
                    .map(|i| (0.37 * i as f64).sin() + 0.4 * (1.9 * i as f64).cos())
                    .collect();
                let spec = harmonic_spectrum(&series, 0.05, 1.0, window).unwrap();
                let energy: f64 = series
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let w = window.weight(i, n);
                        (v * w) * (v * w)
                    })
                    .sum();
                let total: f64 = spec.power.iter().sum();
                assert!(
                    (total - energy).abs() < 1e-9 * energy.max(1.0),
                    "window {:?} n {}: {} vs {}",
                    window,
                    n,
                    total,
                    energy
                );
            }
        }
    }

    #[test]
    fn lowpass_above_nyquist_is_identity() {
        let series: Vec<f64> = (0..100).map(|i| (0.9 * i as f64).sin()).collect();
        let dt = 0.1;
        let out = lowpass_filter(&series, dt, std::f64::consts::PI / dt);
        assert_eq!(out, series);
    }

    #[test]
    fn lowpass_at_zero_keeps_only_the_mean() {
        let series: Vec<f64> = (0..64).map(|i| 3.0 + (0.7 * i as f64).sin()).collect();
        let mean: f64 = series.iter().sum::<f64>() / series.len() as f64;
        let out = lowpass_filter(&series, 0.1, 0.0);
        for v in out {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn lowpass_removes_the_upper_tone() {
        let omega0 = 1.0;
        let per_cycle = 64usize;
        let dt = 2.0 * std::f64::consts::PI / omega0 / per_cycle as f64;
        let n = per_cycle * 8;
        let series: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                (omega0 * t).sin() + 0.5 * (2.0 * omega0 * t).sin()
            })
            .collect();
        let out = lowpass_filter(&series, dt, 1.5 * omega0);
        for (i, v) in out.iter().enumerate() {
            let want = (omega0 * i as f64 * dt).sin();
            assert!((v - want).abs() < 1e-10, "sample {i}");
        }
    }

    #[test]
    fn lowpass_is_idempotent_and_a_projection() {
        let series: Vec<f64> = (0..300)
            .map(|i| (0.31 * i as f64).sin() + 0.7 * (1.3 * i as f64).cos())
            .collect();
        let dt = 0.07;
        let omega_c = 9.0;
        let once = lowpass_filter(&series, dt, omega_c);
        let twice = lowpass_filter(&once, dt, omega_c);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
        // no energy above the cut-off
        let spec = harmonic_spectrum(&once, dt, 1.0, WindowKind::Rectangular).unwrap();
        let peak = spec.power.iter().cloned().fold(0.0f64, f64::max);
        for (o, p) in spec.harmonic_order.iter().zip(&spec.power) {
            // the brick wall sits between DFT bins; allow the edge bin itself
            if *o > omega_c + 1e-9 {
                assert!(*p < 1e-20 * peak, "order {o}: {p}");
            }
        }
    }

    #[test]
    fn mismatch_is_zero_for_identical_spectra() {
        let series: Vec<f64> = (0..128).map(|i| (0.3 * i as f64).sin()).collect();
        let spec = harmonic_spectrum(&series, 0.1, 1.0, WindowKind::Blackman).unwrap();
        assert_eq!(spectral_mismatch(&spec, &spec, 5.0), 0.0);
    }
}
