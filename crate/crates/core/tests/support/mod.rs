//! Dense reference propagators used as oracles against the sparse
//! Runge-Kutta path.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use peierls::dense;
use peierls::drive::TargetCurrent;
use peierls::LatticeOperators;

/// Exponential step psi -> exp(-i h (A - shift)) psi via the dense
/// eigensystem of the Hermitian matrix A.
fn exp_step(a: &DMatrix<Complex64>, psi: &[Complex64], h: f64, shift: f64) -> Vec<Complex64> {
    let (vals, vecs) = dense::hermitian_eigen(a);
    dense::evolve_eigen(&vals, &vecs, psi, h, shift)
}

/// Fourth-order commutator-free Magnus propagator for a driven run: each
/// step uses the Hamiltonian at the two Gauss nodes and two exponentials.
/// Entirely dense, independent of the sparse stepping kernel.
pub fn magnus_driven(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    phi_of_t: &dyn Fn(f64) -> f64,
    dt: f64,
    steps: usize,
    shift: f64,
) -> Vec<Complex64> {
    let root3 = 3.0f64.sqrt();
    let c1 = 0.5 - root3 / 6.0;
    let c2 = 0.5 + root3 / 6.0;
    let a1 = 0.25 + root3 / 6.0;
    let a2 = 0.25 - root3 / 6.0;
    let mut psi = psi0.to_vec();
    for n in 0..steps {
        let t = n as f64 * dt;
        let h1 = ops.hamiltonian_matrix(phi_of_t(t + c1 * dt)).to_dense();
        let h2 = ops.hamiltonian_matrix(phi_of_t(t + c2 * dt)).to_dense();
        let first = &h1 * Complex64::new(a1, 0.0) + &h2 * Complex64::new(a2, 0.0);
        let second = &h1 * Complex64::new(a2, 0.0) + &h2 * Complex64::new(a1, 0.0);
        psi = exp_step(&first, &psi, dt, shift * 0.5);
        psi = exp_step(&second, &psi, dt, shift * 0.5);
    }
    psi
}

/// Dense tracking propagator: classical Runge-Kutta with the tracking
/// generator assembled as a full matrix at every stage from dense
/// expectations. Shares only the target interpolant with the sparse path.
pub fn dense_tracking(
    ops: &LatticeOperators,
    psi0: &[Complex64],
    target: &TargetCurrent,
    dt: f64,
    steps: usize,
    shift: f64,
) -> Vec<Complex64> {
    let params = *ops.params();
    let kd = ops.bond().to_dense();
    let kdag = kd.adjoint();
    let diag: Vec<Complex64> = ops
        .doublon_diagonal()
        .iter()
        .map(|&d| Complex64::new(params.repulsion * d - shift, 0.0))
        .collect();
    let dim = ops.dim();

    let rhs = |t: f64, v: &DVector<Complex64>| -> DVector<Complex64> {
        let k_exp = (v.adjoint() * (&kd * v))[(0, 0)];
        let r = k_exp.norm();
        let theta = k_exp.arg();
        let x = target.value(t)
            / (2.0 * params.charge * params.lattice_constant * params.hopping * r);
        let root = (1.0 - x * x).max(0.0).sqrt();
        let p_plus = -params.hopping * Complex64::new(root, x);
        let phase = Complex64::new(theta.cos(), -theta.sin());
        let coeff = p_plus * phase;
        let mut h = &kd * coeff + &kdag * coeff.conj();
        for i in 0..dim {
            h[(i, i)] += diag[i];
        }
        (h * v) * Complex64::new(0.0, -1.0)
    };

    let mut psi = DVector::from_column_slice(psi0);
    for n in 0..steps {
        let t = n as f64 * dt;
        let k1 = rhs(t, &psi);
        let k2 = rhs(t + 0.5 * dt, &(&psi + &k1 * Complex64::new(0.5 * dt, 0.0)));
        let k3 = rhs(t + 0.5 * dt, &(&psi + &k2 * Complex64::new(0.5 * dt, 0.0)));
        let k4 = rhs(t + dt, &(&psi + &k3 * Complex64::new(dt, 0.0)));
        psi += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(dt / 6.0, 0.0);
    }
    psi.iter().copied().collect()
}

pub fn state_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}
