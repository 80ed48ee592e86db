//! Small dense linear-algebra and spectral helpers.
//!
//! Complex Hermitian eigenproblems are solved with a cyclic Jacobi sweep so
//! the whole crate stays generic over the working scalar; matrix sizes here
//! are at most a few hundred.

use crate::scalar::{c, C, Real};
use nalgebra::{DMatrix, DVector};

/// Hermitian-symmetrize a square complex matrix in place.
pub fn hermitize<S: Real>(m: &mut DMatrix<C<S>>) {
    let n = m.nrows();
    let half = S::lit(0.5);
    for i in 0..n {
        m[(i, i)] = c(m[(i, i)].re, S::zero());
        for j in (i + 1)..n {
            let a = m[(i, j)];
            let b = m[(j, i)].conj();
            let avg = c((a.re + b.re) * half, (a.im + b.im) * half);
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub fn adjoint<S: Real>(m: &DMatrix<C<S>>) -> DMatrix<C<S>> {
    let (r, cl) = m.shape();
    DMatrix::from_fn(cl, r, |i, j| m[(j, i)].conj())
}

pub fn frobenius_norm<S: Real>(m: &DMatrix<C<S>>) -> S {
    m.iter()
        .map(|z| z.re * z.re + z.im * z.im)
        .fold(S::zero(), |a, b| a + b)
        .sqrt()
}

/// Inner product tr(A† B) on complex matrices.
pub fn frobenius_inner<S: Real>(a: &DMatrix<C<S>>, b: &DMatrix<C<S>>) -> C<S> {
    let mut acc = c(S::zero(), S::zero());
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * *y;
    }
    acc
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order together with the matching unitary
/// column eigenvectors.
pub fn hermitian_eigen<S: Real>(m: &DMatrix<C<S>>) -> (DVector<S>, DMatrix<C<S>>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eigen needs a square matrix");
    let mut a = m.clone();
    hermitize(&mut a);
    let mut v = DMatrix::<C<S>>::identity(n, n);
    let eps = S::default_epsilon() * S::lit(16.0);
    let scale = frobenius_norm(&a).max(S::one());

    for _sweep in 0..60 {
        let mut off = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let norm = apq.norm_sqr().sqrt();
                if norm <= eps * scale * S::lit(1e-3) {
                    continue;
                }
                // Phase factor turning the 2x2 block real, then a real Jacobi
                // rotation zeroing the off-diagonal entry.
                let phase = apq / c(norm, S::zero());
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (app - aqq) / (S::lit(2.0) * norm);
                let t = if tau >= S::zero() {
                    S::one() / (tau + (S::one() + tau * tau).sqrt())
                } else {
                    -S::one() / (-tau + (S::one() + tau * tau).sqrt())
                };
                let cth = S::one() / (S::one() + t * t).sqrt();
                let sth = t * cth;
                // Column rotation: col_p' = c*col_p*phase - s*col_q ;
                // col_q' = s*conj? Work with explicit unitary G:
                // G = [[c*phase, -s*phase], [s, c]] acting on columns (p,q).
                let g_pp = phase.scale(cth);
                let g_pq = phase.scale(-sth);
                let g_qp = c(sth, S::zero());
                let g_qq = c(cth, S::zero());
                // a <- G† a G, v <- v G
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * g_pp + aiq * g_qp;
                    a[(i, q)] = aip * g_pq + aiq * g_qq;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = g_pp.conj() * apj + g_qp.conj() * aqj;
                    a[(q, j)] = g_pq.conj() * apj + g_qq.conj() * aqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * g_pp + viq * g_qp;
                    v[(i, q)] = vip * g_pq + viq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<S> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| evals[i].partial_cmp(&evals[j]).unwrap());
    let vals = DVector::from_iterator(n, order.iter().map(|&i| evals[i]));
    let vecs = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (vals, vecs)
}

/// Spectral (operator 2-) norm via the Hermitian eigenvalues of M†M.
pub fn operator_norm<S: Real>(m: &DMatrix<C<S>>) -> S {
    let gram = adjoint(m) * m;
    let (vals, _) = hermitian_eigen(&gram);
    vals[vals.len() - 1].max(S::zero()).sqrt()
}

/// Forward DFT, direct O(N^2) evaluation: X_k = sum_j x_j e^{-2pi i jk/N}.
pub fn dft<S: Real>(x: &[C<S>]) -> Vec<C<S>> {
    let n = x.len();
    let w = -S::two_pi() / S::from_usize_(n);
    (0..n)
        .map(|k| {
            let mut acc = c(S::zero(), S::zero());
            for (j, xj) in x.iter().enumerate() {
                let th = w * S::from_usize_(j * k);
                acc += *xj * c(th.cos(), th.sin());
            }
            acc
        })
        .collect()
}

fn idft<S: Real>(x: &[C<S>]) -> Vec<C<S>> {
    let n = x.len();
    let w = S::two_pi() / S::from_usize_(n);
    let inv = S::one() / S::from_usize_(n);
    (0..n)
        .map(|j| {
            let mut acc = c(S::zero(), S::zero());
            for (k, xk) in x.iter().enumerate() {
                let th = w * S::from_usize_(j * k);
                acc += *xk * c(th.cos(), th.sin());
            }
            acc.scale(inv)
        })
        .collect()
}

/// Signed frequency of DFT bin k for length n.
fn freq(k: usize, n: usize) -> i64 {
    let k = k as i64;
    let n = n as i64;
    if 2 * k <= n {
        k
    } else {
        k - n
    }
}

/// Derivative of a periodic sample vector on [0,1) by trigonometric
/// interpolation (exact for band-limited data).
pub fn spectral_derivative<S: Real>(x: &[S]) -> Vec<S> {
    let n = x.len();
    let cx: Vec<C<S>> = x.iter().map(|&v| c(v, S::zero())).collect();
    let mut hat = dft(&cx);
    for (k, h) in hat.iter_mut().enumerate() {
        let m = freq(k, n);
        if 2 * (k as i64) == n as i64 {
            *h = c(S::zero(), S::zero()); // drop the Nyquist mode
        } else {
            let im = S::two_pi() * S::lit(m as f64);
            *h = c(-h.im * im, h.re * im);
        }
    }
    idft(&hat).into_iter().map(|z| z.re).collect()
}

/// Periodic antiderivative (zero-mean primitive) of a zero-mean sample
/// vector on [0,1), by trigonometric interpolation.
pub fn spectral_antiderivative<S: Real>(x: &[S]) -> Vec<S> {
    let n = x.len();
    let cx: Vec<C<S>> = x.iter().map(|&v| c(v, S::zero())).collect();
    let mut hat = dft(&cx);
    for (k, h) in hat.iter_mut().enumerate() {
        let m = freq(k, n);
        if m == 0 || 2 * (k as i64) == n as i64 {
            *h = c(S::zero(), S::zero());
        } else {
            let im = S::two_pi() * S::lit(m as f64);
            *h = c(h.im / im, -h.re / im);
        }
    }
    idft(&hat).into_iter().map(|z| z.re).collect()
}

/// 4th-order centered difference of a periodic sample vector on [0,1).
pub fn centered_derivative4<S: Real>(x: &[S]) -> Vec<S> {
    let n = x.len();
    let h = S::one() / S::from_usize_(n);
    let c12 = S::lit(12.0) * h;
    (0..n)
        .map(|i| {
            let ip1 = x[(i + 1) % n];
            let im1 = x[(i + n - 1) % n];
            let ip2 = x[(i + 2) % n];
            let im2 = x[(i + n - 2) % n];
            (S::lit(8.0) * (ip1 - im1) - (ip2 - im2)) / c12
        })
        .collect()
}

/// Derivative scheme for loop-parameter differentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeScheme {
    /// 4th-order centered finite differences (default).
    #[default]
    Centered4,
    /// Trigonometric interpolation, exact for band-limited profiles.
    Spectral,
}

impl DerivativeScheme {
    pub fn name(&self) -> &'static str {
        match self {
            DerivativeScheme::Centered4 => "centered-4",
            DerivativeScheme::Spectral => "spectral",
        }
    }

    pub fn apply<S: Real>(&self, x: &[S]) -> Vec<S> {
        match self {
            DerivativeScheme::Centered4 => centered_derivative4(x),
            DerivativeScheme::Spectral => spectral_derivative(x),
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre<S: Real>(n: usize) -> (Vec<S>, Vec<S>) {
    let mut nodes = vec![S::zero(); n];
    let mut weights = vec![S::zero(); n];
    let nf = S::from_usize_(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (S::pi() * (S::from_usize_(i) + S::lit(0.75))
            / (nf + S::lit(0.5)))
        .cos();
        let mut dp = S::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= S::default_epsilon() * S::lit(4.0) {
                break;
            }
        }
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = S::lit(2.0) / ((S::one() - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative<S: Real>(n: usize, x: S) -> (S, S) {
    let mut p0 = S::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = S::from_usize_(k);
        let p2 = ((S::lit(2.0) * kf - S::one()) * x * p1 - (kf - S::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = nf_derivative(n, x, p0, p1);
    (p1, d)
}

fn nf_derivative<S: Real>(n: usize, x: S, pnm1: S, pn: S) -> S {
    let nf = S::from_usize_(n);
    nf * (x * pn - pnm1) / (x * x - S::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::lit;

    #[test]
    fn jacobi_eigen_matches_known_spectrum() {
        // Pauli-y has eigenvalues -1, 1.
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                c(0.0_f64, 0.0),
                c(0.0, -1.0),
                c(0.0, 1.0),
                c(0.0, 0.0),
            ],
        );
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] + 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        // Reconstruction residual.
        let d = DMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                c(vals[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let rec = &vecs * d * adjoint(&vecs);
        assert!(frobenius_norm(&(rec - m)) < 1e-12);
    }

    #[test]
    fn jacobi_eigen_random_reconstruction() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for n in [3usize, 5, 8] {
            let mut m = DMatrix::from_fn(n, n, |_, _| {
                c::<f64>(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            hermitize(&mut m);
            let (vals, vecs) = hermitian_eigen(&m);
            let d = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    c(vals[i], 0.0)
                } else {
                    c(0.0, 0.0)
                }
            });
            let rec = &vecs * d * adjoint(&vecs);
            assert!(frobenius_norm(&(rec - m.clone())) < 1e-10 * frobenius_norm(&m).max(1.0));
            let gram = adjoint(&vecs) * &vecs;
            let id = DMatrix::<C<f64>>::identity(n, n);
            assert!(frobenius_norm(&(gram - id)) < 1e-11);
        }
    }

    #[test]
    fn spectral_derivative_exact_on_band_limited() {
        let n = 64;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (2.0 * std::f64::consts::PI * 3.0 * s).sin()
            })
            .collect();
        let d = spectral_derivative(&xs);
        for (i, di) in d.iter().enumerate() {
            let s = i as f64 / n as f64;
            let exact =
                2.0 * std::f64::consts::PI * 3.0 * (2.0 * std::f64::consts::PI * 3.0 * s).cos();
            assert!((di - exact).abs() < 1e-9, "i={i}: {di} vs {exact}");
        }
    }

    #[test]
    fn antiderivative_inverts_derivative() {
        let n = 48;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (2.0 * std::f64::consts::PI * s).cos() * 0.3
                    + (2.0 * std::f64::consts::PI * 5.0 * s).sin()
            })
            .collect();
        let back = spectral_derivative(&spectral_antiderivative(&xs));
        for (a, b) in xs.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn centered4_order() {
        let err = |n: usize| -> f64 {
            let xs: Vec<f64> = (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * 2.0 * (i as f64 / n as f64)).sin())
                .collect();
            let d = centered_derivative4(&xs);
            (0..n)
                .map(|i| {
                    let s = i as f64 / n as f64;
                    let exact = 4.0
                        * std::f64::consts::PI
                        * (2.0 * std::f64::consts::PI * 2.0 * s).cos();
                    (d[i] - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let order = (err(32) / err(64)).log2();
        assert!(order > 3.7, "observed order {order}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre::<f64>(12);
        // degree-10 polynomial integrated exactly
        let val: f64 = x
            .iter()
            .zip(w.iter())
            .map(|(&xi, &wi)| wi * (xi.powi(10) + 3.0 * xi.powi(3) - xi))
            .sum();
        assert!((val - 2.0 / 11.0).abs() < 1e-13, "{val}");
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
        let _x32: (Vec<f32>, Vec<f32>) = gauss_legendre(8);
        assert!((lit::<f64>(1.0) - 1.0).abs() < 1e-15);
    }
}
