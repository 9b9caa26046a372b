//! Dense vector kernels on state vectors.
//!
//! Reductions are evaluated over fixed-size chunks that are summed in index
//! order, so results are bit-identical for any thread count and with the
//! `parallel` feature on or off.

use num_complex::Complex64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions and the minimum size worth
/// splitting across threads.
pub(crate) const CHUNK: usize = 4096;

/// Inner product <a|b> with the physics convention: a is conjugated.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    let chunk_sums = map_chunks2(a, b, |xa, xb| {
        let mut s = Complex64::ZERO;
        for (x, y) in xa.iter().zip(xb) {
            s += x.conj() * y;
        }
        s
    });
    chunk_sums.into_iter().sum()
}

/// Inner product <a| diag(w) |b> for a real diagonal weight.
pub fn weighted_dot(a: &[Complex64], w: &[f64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    assert_eq!(a.len(), w.len());
    let n = a.len();
    let sums: Vec<Complex64> = (0..n.div_ceil(CHUNK))
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = Complex64::ZERO;
            for i in lo..hi {
                s += a[i].conj() * w[i] * b[i];
            }
            s
        })
        .collect();
    sums.into_iter().sum()
}

/// Sum of w_i |a_i|^2.
pub fn weighted_norm2(w: &[f64], a: &[Complex64]) -> f64 {
    assert_eq!(a.len(), w.len());
    let n = a.len();
    let sums: Vec<f64> = (0..n.div_ceil(CHUNK))
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = 0.0;
            for i in lo..hi {
                s += w[i] * a[i].norm_sqr();
            }
            s
        })
        .collect();
    sums.into_iter().sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    dot(a, a).re.sqrt()
}

pub fn normalize(a: &mut [Complex64]) {
    let n = norm(a);
    if n > 0.0 {
        let inv = 1.0 / n;
        for x in a.iter_mut() {
            *x *= inv;
        }
    }
}

/// y += alpha * x
pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    assert_eq!(x.len(), y.len());
    for_chunks2_mut(y, x, |ys, xs| {
        for (yi, xi) in ys.iter_mut().zip(xs) {
            *yi += alpha * xi;
        }
    });
}

/// out = psi + scale * k  (Runge-Kutta stage update)
pub fn stage_update(psi: &[Complex64], scale: f64, k: &[Complex64], out: &mut [Complex64]) {
    assert_eq!(psi.len(), k.len());
    assert_eq!(psi.len(), out.len());
    let scale = Complex64::new(scale, 0.0);
    #[cfg(feature = "parallel")]
    {
        if psi.len() >= CHUNK {
            out.par_chunks_mut(CHUNK)
                .zip(psi.par_chunks(CHUNK).zip(k.par_chunks(CHUNK)))
                .for_each(|(o, (p, kk))| {
                    for i in 0..o.len() {
                        o[i] = p[i] + scale * kk[i];
                    }
                });
            return;
        }
    }
    for i in 0..psi.len() {
        out[i] = psi[i] + scale * k[i];
    }
}

/// psi += (dt/6) (k1 + 2 k2 + 2 k3 + k4)
pub fn rk4_combine(
    psi: &mut [Complex64],
    dt: f64,
    k1: &[Complex64],
    k2: &[Complex64],
    k3: &[Complex64],
    k4: &[Complex64],
) {
    let w = dt / 6.0;
    #[cfg(feature = "parallel")]
    {
        if psi.len() >= CHUNK {
            psi.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, p)| {
                    let lo = c * CHUNK;
                    for (i, pi) in p.iter_mut().enumerate() {
                        let j = lo + i;
                        *pi += w * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                    }
                });
            return;
        }
    }
    for (i, pi) in psi.iter_mut().enumerate() {
        *pi += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn map_chunks2<F>(a: &[Complex64], b: &[Complex64], f: F) -> Vec<Complex64>
where
    F: Fn(&[Complex64], &[Complex64]) -> Complex64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if a.len() >= 2 * CHUNK {
            return a
                .par_chunks(CHUNK)
                .zip(b.par_chunks(CHUNK))
                .map(|(xa, xb)| f(xa, xb))
                .collect();
        }
    }
    a.chunks(CHUNK)
        .zip(b.chunks(CHUNK))
        .map(|(xa, xb)| f(xa, xb))
        .collect()
}

fn for_chunks2_mut<F>(y: &mut [Complex64], x: &[Complex64], f: F)
where
    F: Fn(&mut [Complex64], &[Complex64]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if y.len() >= 2 * CHUNK {
            y.par_chunks_mut(CHUNK)
                .zip(x.par_chunks(CHUNK))
                .for_each(|(ys, xs)| f(ys, xs));
            return;
        }
    }
    y.chunks_mut(CHUNK)
        .zip(x.chunks(CHUNK))
        .for_each(|(ys, xs)| f(ys, xs));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dot_conjugates_left_argument() {
        let a = vec![c(0.0, 1.0), c(2.0, 0.0)];
        let b = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let d = dot(&a, &b);
        assert_eq!(d, c(0.0, 1.0));
    }

    #[test]
    fn chunked_reduction_matches_naive_sum_order_invariantly() {
        let n = 3 * CHUNK + 17;
        let a: Vec<Complex64> = (0..n).map(|i| c((i % 7) as f64 * 0.1, -(i as f64) * 1e-4)).collect();
        let b: Vec<Complex64> = (0..n).map(|i| c(1.0 / (i + 1) as f64, 0.3)).collect();
        let naive: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        let d = dot(&a, &b);
        assert!((d - naive).norm() < 1e-9 * naive.norm().max(1.0));
    }

    #[test]
    fn weighted_kernels() {
        let a = vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0)];
        let w = vec![2.0, 0.5, 3.0];
        assert!((weighted_norm2(&w, &a) - (2.0 * 2.0 + 0.5 * 4.0 + 3.0)).abs() < 1e-14);
        let z = weighted_dot(&a, &w, &a);
        assert!((z.re - weighted_norm2(&w, &a)).abs() < 1e-14);
        assert!(z.im.abs() < 1e-14);
    }

    #[test]
    fn normalization() {
        let mut a = vec![c(3.0, 0.0), c(0.0, 4.0)];
        normalize(&mut a);
        assert!((norm(&a) - 1.0).abs() < 1e-15);
    }
}
