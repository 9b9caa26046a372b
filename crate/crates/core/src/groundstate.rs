//! Interacting ground states and the analytic tight-binding checks.
//!
//! Small sectors go through a dense solve; larger ones use restarted Lanczos
//! with full reorthogonalization. The starting vector comes from a seeded
//! generator so degenerate ground spaces resolve reproducibly: for open
//! shells the returned vector is one deterministic member of the degenerate
//! space, not a physically preferred one.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::LatticeOperators;
use crate::sparse::SparseOperator;

/// Sectors at or below this dimension are solved densely.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Dense when dim <= [`DENSE_LIMIT`], Lanczos otherwise.
    Auto,
    Lanczos,
    Dense,
}

#[derive(Debug, Clone, Copy)]
pub struct GroundStateOptions {
    /// Convergence tolerance on the residual ||H psi - E psi||.
    pub tol: f64,
    pub max_restarts: usize,
    pub krylov_dim: usize,
    pub seed: u64,
    pub method: SolverMethod,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions {
            tol: 1e-10,
            max_restarts: 400,
            krylov_dim: 64,
            seed: 1,
            method: SolverMethod::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub energy: f64,
    pub psi: Vec<Complex64>,
    /// ||H psi - E psi|| at return.
    pub residual: f64,
}

/// Lowest eigenpair of H(phi = 0).
pub fn ground_state(
    ops: &LatticeOperators,
    opts: &GroundStateOptions,
) -> Result<GroundStateResult> {
    let dim = ops.dim();
    let h = ops.hamiltonian_matrix(0.0);
    if dim == 1 {
        let psi = vec![Complex64::new(1.0, 0.0)];
        let energy = linalg::dot(&psi, &h.apply_alloc(&psi)).re;
        return Ok(GroundStateResult {
            energy,
            psi,
            residual: 0.0,
        });
    }
    let use_dense = match opts.method {
        SolverMethod::Dense => true,
        SolverMethod::Lanczos => false,
        SolverMethod::Auto => dim <= DENSE_LIMIT,
    };
    if use_dense {
        dense_ground(&h)
    } else {
        lanczos_ground(&h, opts)
    }
}

fn dense_ground(h: &SparseOperator) -> Result<GroundStateResult> {
    // H(0) is real symmetric: hop amplitudes are +-t0 and the interaction is
    // diagonal, so solve in real arithmetic
    let hd = h.to_dense();
    let n = h.dim();
    let mut real = nalgebra::DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            debug_assert!(hd[(r, c)].im == 0.0);
            real[(r, c)] = hd[(r, c)].re;
        }
    }
    let (values, vectors) = dense::symmetric_eigen(&real);
    let psi: Vec<Complex64> = vectors
        .column(0)
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    let energy = values[0];
    let residual = residual_norm(h, &psi, energy);
    Ok(GroundStateResult {
        energy,
        psi,
        residual,
    })
}

fn seeded_start(dim: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    linalg::normalize(&mut v);
    v
}

fn residual_norm(h: &SparseOperator, psi: &[Complex64], energy: f64) -> f64 {
    let mut r = h.apply_alloc(psi);
    linalg::axpy(Complex64::new(-energy, 0.0), psi, &mut r);
    linalg::norm(&r)
}

/// Restarted Lanczos with full reorthogonalization on the Krylov window.
fn lanczos_ground(h: &SparseOperator, opts: &GroundStateOptions) -> Result<GroundStateResult> {
    let dim = h.dim();
    let m = opts.krylov_dim.min(dim).max(2);
    let mut v0 = seeded_start(dim, opts.seed);
    let mut best = (f64::INFINITY, Vec::new(), f64::INFINITY);

    for _restart in 0..opts.max_restarts {
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        let mut alphas: Vec<f64> = Vec::with_capacity(m);
        let mut betas: Vec<f64> = Vec::with_capacity(m);
        basis.push(v0.clone());

        for j in 0..m {
            let mut w = h.apply_alloc(&basis[j]);
            let alpha = linalg::dot(&basis[j], &w).re;
            alphas.push(alpha);
            // two passes of full reorthogonalization keep the window
            // orthonormal at working precision
            for _pass in 0..2 {
                for v in basis.iter() {
                    let ovl = linalg::dot(v, &w);
                    linalg::axpy(-ovl, v, &mut w);
                }
            }
            let beta = linalg::norm(&w);
            if j + 1 == m || beta < 1e-13 {
                if beta < 1e-13 {
                    // invariant subspace: the tridiagonal block is exact
                    betas.truncate(j);
                    alphas.truncate(j + 1);
                }
                break;
            }
            betas.push(beta);
            let inv = Complex64::new(1.0 / beta, 0.0);
            let next: Vec<Complex64> = w.iter().map(|&x| x * inv).collect();
            basis.push(next);
        }

        // lowest Ritz pair of the tridiagonal window
        let k = alphas.len();
        let mut t = nalgebra::DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (values, vectors) = dense::symmetric_eigen(&t);
        let energy = values[0];
        let mut ritz = vec![Complex64::ZERO; dim];
        for (j, v) in basis.iter().enumerate().take(k) {
            linalg::axpy(Complex64::new(vectors[(j, 0)], 0.0), v, &mut ritz);
        }
        linalg::normalize(&mut ritz);
        let residual = residual_norm(h, &ritz, energy);
        if residual < best.2 {
            best = (energy, ritz.clone(), residual);
        }
        if residual <= opts.tol {
            return Ok(GroundStateResult {
                energy,
                psi: ritz,
                residual,
            });
        }
        v0 = ritz;
    }

    Err(Error::SolverFailure {
        residual: best.2,
        restarts: opts.max_restarts,
        tol: opts.tol,
    })
}

/// Per-species tight-binding ground energy E_sigma for N particles on an
/// L-site ring: the N momentum modes closest to w = 0 are filled.
///
/// Even N leaves an open shell; the formula books one of the two degenerate
/// edge modes, which already gives the minimal total energy.
pub fn tight_binding_energy(sites: usize, n_sigma: usize, t0: f64) -> f64 {
    assert!(n_sigma <= sites);
    if n_sigma == 0 {
        return 0.0;
    }
    let l = sites as f64;
    let omega = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / l;
    let mut acc = 1.0;
    if n_sigma % 2 == 0 {
        for k in 1..=(n_sigma / 2 - 1) {
            acc += 2.0 * omega(k).cos();
        }
        acc += (std::f64::consts::PI * n_sigma as f64 / l).cos();
    } else {
        for k in 1..=((n_sigma - 1) / 2) {
            acc += 2.0 * omega(k).cos();
        }
    }
    -2.0 * t0 * acc
}

/// E_g = E_up + E_down for the non-interacting ring.
pub fn tight_binding_ground_energy(sites: usize, n_up: usize, n_down: usize, t0: f64) -> f64 {
    tight_binding_energy(sites, n_up, t0) + tight_binding_energy(sites, n_down, t0)
}

/// For U = 0, check Re K(psi_g) = -E_g / (2 t0) and return Im K(psi_g).
///
/// The imaginary part is the sine sum over occupied momenta; it vanishes for
/// symmetric +-k occupations but is returned rather than assumed for open
/// shells.
pub fn ground_bond_check(
    result: &GroundStateResult,
    ops: &LatticeOperators,
) -> Result<f64> {
    let params = ops.params();
    if params.repulsion != 0.0 {
        return Err(Error::InvalidParameter(
            "ground_bond_check applies to the U = 0 ring".into(),
        ));
    }
    let bond = ops.bond_expectation(&result.psi)?;
    let expected = -result.energy / (2.0 * params.hopping);
    let scale = expected.abs().max(1.0);
    if (bond.k.re - expected).abs() > 1e-8 * scale {
        return Err(Error::Consistency(format!(
            "Re K(psi_g) = {} but -E_g/(2 t0) = {}",
            bond.k.re, expected
        )));
    }
    Ok(bond.k.im)
}
