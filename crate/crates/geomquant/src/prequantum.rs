//! Prequantization data and Souriau-Kostant operators on a discretized
//! line bundle over the torus.
//!
//! The level-`k` bundle is realized lattice-gauge style: unitary link
//! variables on an `n x n` grid carry the connection, with the transport
//! phase of a link equal to `exp(2 pi i k int(alpha))` for `alpha = p dq`
//! and a gauge seam at `p = 1` completing the first Chern class. Every
//! plaquette holonomy is then exactly the enclosed-area phase
//! `exp(2 pi i k / n^2)`.
//!
//! Conventions (calibrated once against the torus bracket oracle, then
//! frozen): the working symplectic form at level `k` is `omega_k = k omega`;
//! the Kostant derivative direction is `Y_f = (-f_q, f_p)/k`, the sign for
//! which the commutator identity holds with a plus sign,
//! `[Q_f, Q_g] = Q_{{f,g}_k}` with `{f,g}_k = {f,g}/k`.

use crate::error::{Error, Result};
use crate::phase::{PhaseKind, PhaseModel, ScalarField};
use crate::scalar::{c, cis, lit, C, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Discretized prequantum line bundle over the torus at level `k`.
#[derive(Debug, Clone)]
pub struct PrequantumBundle<S: Real> {
    pub model: PhaseModel<S>,
    /// Grid points per direction.
    pub n: usize,
    /// Tensor power of the basic bundle.
    pub level: u32,
    /// Logarithm of the hermitian weight `e^phi` relative to the flat
    /// reference structure, sampled on the grid.
    phi: Vec<S>,
    /// Transport `(i, j) -> (i+1, j)`; the row `i = n-1` carries the seam.
    link_p: Vec<C<S>>,
    /// Transport `(i, j) -> (i, j+1)`.
    link_q: Vec<C<S>>,
}

/// A section sampled on the grid of its bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSection<S: Real> {
    pub n: usize,
    pub level: u32,
    values: Vec<C<S>>,
}

impl<S: Real> DiscretizedSection<S> {
    pub fn zero(n: usize, level: u32) -> Self {
        DiscretizedSection { n, level, values: vec![c(S::zero(), S::zero()); n * n] }
    }

    pub fn from_values(n: usize, level: u32, values: Vec<C<S>>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch(values.len(), n * n));
        }
        Ok(DiscretizedSection { n, level, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C<S> {
        self.values[(i % self.n) * self.n + (j % self.n)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C<S>) {
        let n = self.n;
        self.values[(i % n) * n + (j % n)] = v;
    }

    pub fn values(&self) -> &[C<S>] {
        &self.values
    }

    pub fn scale(&self, z: C<S>) -> Self {
        DiscretizedSection {
            n: self.n,
            level: self.level,
            values: self.values.iter().map(|v| *v * z).collect(),
        }
    }

    pub fn axpy(&mut self, a: C<S>, other: &Self) {
        for (v, o) in self.values.iter_mut().zip(other.values.iter()) {
            *v += a * *o;
        }
    }
}

impl<S: Real> PrequantumBundle<S> {
    /// Flat hermitian structure (`phi = 0`).
    pub fn flat(n: usize, level: u32) -> Result<Self> {
        Self::with_weight(n, level, &|_, _| S::zero())
    }

    /// Bundle with hermitian weight `e^{phi(p, q)}`; the compatible
    /// connection adds the real part `d phi / 2` to the links.
    pub fn with_weight(n: usize, level: u32, phi_fn: &dyn Fn(S, S) -> S) -> Result<Self> {
        if n < 8 {
            return Err(Error::Resolution(format!("grid {n} too coarse")));
        }
        if level < 1 {
            return Err(Error::Config("level must be >= 1".into()));
        }
        let model = PhaseModel::torus(level);
        let nf = S::from_usize_(n);
        let kf = lit::<S>(level as f64);
        let mut phi = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                phi[i * n + j] = phi_fn(S::from_usize_(i) / nf, S::from_usize_(j) / nf);
            }
        }
        let mut link_p = vec![c(S::one(), S::zero()); n * n];
        let mut link_q = vec![c(S::one(), S::zero()); n * n];
        for i in 0..n {
            for j in 0..n {
                // T(x -> y) = exp(-(phi(y) - phi(x))/2) * exp(2 pi i k int alpha)
                let ip = (i + 1) % n;
                let jq = (j + 1) % n;
                let dphi_p = phi[ip * n + j] - phi[i * n + j];
                let dphi_q = phi[i * n + jq] - phi[i * n + j];
                let damp_p = (-dphi_p * lit::<S>(0.5)).exp();
                let damp_q = (-dphi_q * lit::<S>(0.5)).exp();
                // alpha = p dq: zero on p-links; p * (1/n) on q-links
                let q_phase = S::two_pi() * kf * S::from_usize_(i) / (nf * nf);
                link_q[i * n + j] = cis(q_phase).scale(damp_q);
                link_p[i * n + j] = if i == n - 1 {
                    // seam gauge factor closing the Chern class
                    let seam = -S::two_pi() * kf * S::from_usize_(j) / nf;
                    cis(seam).scale(damp_p)
                } else {
                    c(damp_p, S::zero())
                };
            }
        }
        Ok(PrequantumBundle { model, n, level, phi, link_p, link_q })
    }

    pub fn weight(&self, i: usize, j: usize) -> S {
        self.phi[(i % self.n) * self.n + (j % self.n)].exp()
    }

    pub fn phi(&self, i: usize, j: usize) -> S {
        self.phi[(i % self.n) * self.n + (j % self.n)]
    }

    #[inline]
    fn lp(&self, i: usize, j: usize) -> C<S> {
        self.link_p[(i % self.n) * self.n + (j % self.n)]
    }

    #[inline]
    fn lq(&self, i: usize, j: usize) -> C<S> {
        self.link_q[(i % self.n) * self.n + (j % self.n)]
    }

    /// Holonomy of one counterclockwise plaquette based at `(i, j)`.
    pub fn plaquette(&self, i: usize, j: usize) -> C<S> {
        let a = self.lp(i, j);
        let b = self.lq(i + 1, j);
        let cc = self.lp(i, j + 1);
        let d = self.lq(i, j);
        a * b * (cc.inv()) * (d.inv())
    }

    /// Total flux `(1/2pi) sum arg(plaquette)`, an integer Chern check.
    pub fn chern_number(&self) -> S {
        let mut total = S::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let w = self.plaquette(i, j);
                total += w.im.atan2(w.re);
            }
        }
        total / S::two_pi()
    }

    /// Liouville-weighted hermitian pairing `<s1, s2>_q` (conjugate-linear
    /// in the first slot).
    pub fn pairing(&self, s1: &DiscretizedSection<S>, s2: &DiscretizedSection<S>) -> C<S> {
        let cell = S::one() / S::from_usize_(self.n * self.n);
        let mut acc = c(S::zero(), S::zero());
        for i in 0..self.n {
            for j in 0..self.n {
                acc += s1.at(i, j).conj() * s2.at(i, j) * c(self.weight(i, j) * cell, S::zero());
            }
        }
        acc
    }

    pub fn norm(&self, s: &DiscretizedSection<S>) -> S {
        self.pairing(s, s).re.max(S::zero()).sqrt()
    }

    /// Covariant centered difference along `p` at `(i, j)`.
    pub fn grad_p(&self, s: &DiscretizedSection<S>, i: usize, j: usize) -> C<S> {
        let n = self.n;
        let h2 = lit::<S>(2.0) / S::from_usize_(n);
        let fwd = self.lp(i, j).inv() * s.at(i + 1, j);
        let back = self.lp((i + n - 1) % n, j) * s.at(i + n - 1, j);
        (fwd - back) / c(h2, S::zero())
    }

    /// Covariant centered difference along `q` at `(i, j)`.
    pub fn grad_q(&self, s: &DiscretizedSection<S>, i: usize, j: usize) -> C<S> {
        let n = self.n;
        let h2 = lit::<S>(2.0) / S::from_usize_(n);
        let fwd = self.lq(i, j).inv() * s.at(i, j + 1);
        let back = self.lq(i, (j + n - 1) % n) * s.at(i, j + n - 1);
        (fwd - back) / c(h2, S::zero())
    }

    /// Deterministic random smooth section: a theta-like carrier matching
    /// the seam gauge times a band-limited random periodic profile.
    pub fn random_smooth_section(&self, seed: u64) -> DiscretizedSection<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        let nf = S::from_usize_(n);
        let k = self.level;
        let kf = lit::<S>(k as f64);
        // band-limited random periodic profile
        let mut coefs = Vec::new();
        for mp in -2i32..=2 {
            for mq in -2i32..=2 {
                coefs.push((
                    mp,
                    mq,
                    c::<S>(
                        lit(rng.random_range(-1.0..1.0)),
                        lit(rng.random_range(-1.0..1.0)),
                    ),
                ));
            }
        }
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let p = S::from_usize_(i) / nf;
                let q = S::from_usize_(j) / nf;
                // carrier: sum_l exp(-pi k (p + l - 1/2)^2) e^{-2 pi i k l q}
                let mut carrier = c(S::zero(), S::zero());
                for l in -4i32..=4 {
                    let u = p + lit::<S>(l as f64) - lit::<S>(0.5);
                    let amp = (-S::pi() * kf * u * u).exp();
                    carrier += cis(-S::two_pi() * kf * lit::<S>(l as f64) * q).scale(amp);
                }
                let mut prof = c(S::zero(), S::zero());
                for (mp, mq, a) in &coefs {
                    prof += *a
                        * cis(S::two_pi()
                            * (lit::<S>(*mp as f64) * p + lit::<S>(*mq as f64) * q));
                }
                values.push(carrier * prof);
            }
        }
        DiscretizedSection { n, level: k, values }
    }
}

/// The Souriau-Kostant operator of a classical observable on a bundle:
/// `Q_f = grad_{Y_f} + 2 pi i f` with `Y_f = (-f_q, f_p)/k`, and its
/// hermitized version `i Q_f`.
pub struct KostantOperator<S: Real> {
    pub n: usize,
    pub level: u32,
    /// `Y_f` components on the grid.
    yp: Vec<S>,
    yq: Vec<S>,
    fval: Vec<S>,
    /// Apply `i Q_f` instead of `Q_f`.
    pub hermitized: bool,
}

/// Build `Q_f` (and `i Q_f` via the flag) as a matrix-free grid operator.
///
/// Preconditions: `f` smooth; the per-cell displacement of the derivative
/// direction must stay below one cell, `max |Y_f| <= n`.
pub fn kostant_operator<S: Real>(
    f: &dyn ScalarField<S>,
    b: &PrequantumBundle<S>,
    hermitized: bool,
) -> Result<KostantOperator<S>> {
    let n = b.n;
    let nf = S::from_usize_(n);
    let kf = lit::<S>(b.level as f64);
    let mut yp = vec![S::zero(); n * n];
    let mut yq = vec![S::zero(); n * n];
    let mut fval = vec![S::zero(); n * n];
    let mut max_y = S::zero();
    for i in 0..n {
        for j in 0..n {
            let x = nalgebra::Vector3::new(S::from_usize_(i) / nf, S::from_usize_(j) / nf, S::zero());
            let g = crate::phase::gradient_or_fd(f, &b.model, &x);
            // Y_f = (-f_q, f_p) / k
            yp[i * n + j] = -g.y / kf;
            yq[i * n + j] = g.x / kf;
            fval[i * n + j] = f.eval(&b.model, &x);
            max_y = max_y.max(yp[i * n + j].abs()).max(yq[i * n + j].abs());
        }
    }
    // resolution check: the derivative direction must be resolved by the
    // grid, i.e. its displacement across one cell stays below its magnitude
    let mut max_jump = S::zero();
    for i in 0..n {
        for j in 0..n {
            let here = (yp[i * n + j], yq[i * n + j]);
            let right = (yp[((i + 1) % n) * n + j], yq[((i + 1) % n) * n + j]);
            let up = (yp[i * n + (j + 1) % n], yq[i * n + (j + 1) % n]);
            let d1 = ((here.0 - right.0).abs()).max((here.1 - right.1).abs());
            let d2 = ((here.0 - up.0).abs()).max((here.1 - up.1).abs());
            max_jump = max_jump.max(d1).max(d2);
        }
    }
    if max_jump > max_y.max(lit(1e-12)) {
        return Err(Error::Resolution(format!(
            "derivative direction varies by {:.2}x its magnitude per cell; refine the grid",
            (max_jump / max_y.max(lit(1e-12))).to_f64().unwrap_or(f64::NAN)
        )));
    }
    Ok(KostantOperator { n, level: b.level, yp, yq, fval, hermitized })
}

impl<S: Real> KostantOperator<S> {
    pub fn apply(
        &self,
        b: &PrequantumBundle<S>,
        s: &DiscretizedSection<S>,
    ) -> Result<DiscretizedSection<S>> {
        if s.n != self.n || s.level != self.level {
            return Err(Error::DimensionMismatch(s.n, self.n));
        }
        let n = self.n;
        let mut out = DiscretizedSection::zero(n, self.level);
        let two_pi_i = c(S::zero(), S::two_pi());
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let grad = self.grad_term(b, s, i, j);
                let mut v = grad + two_pi_i * s.at(i, j).scale(self.fval[idx]);
                if self.hermitized {
                    v *= c(S::zero(), S::one());
                }
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    fn grad_term(
        &self,
        b: &PrequantumBundle<S>,
        s: &DiscretizedSection<S>,
        i: usize,
        j: usize,
    ) -> C<S> {
        let idx = i * self.n + j;
        b.grad_p(s, i, j).scale(self.yp[idx]) + b.grad_q(s, i, j).scale(self.yq[idx])
    }
}

/// RMS residual of an operator expression over a fixed batch of random
/// smooth sections (seeded, deterministic): `sqrt(sum |M s|^2 / sum |s|^2)`.
pub fn batch_residual<S: Real>(
    b: &PrequantumBundle<S>,
    apply: &dyn Fn(&DiscretizedSection<S>) -> Result<DiscretizedSection<S>>,
    batch: usize,
    seed: u64,
) -> Result<S> {
    let mut num = S::zero();
    let mut den = S::zero();
    for t in 0..batch {
        let s = b.random_smooth_section(seed.wrapping_add(t as u64));
        let ms = apply(&s)?;
        num += b.pairing(&ms, &ms).re;
        den += b.pairing(&s, &s).re;
    }
    Ok((num / den.max(lit(1e-300))).sqrt())
}

/// `|| [Q_f, Q_g] - Q_{{f,g}_k} ||` estimated on a batch of 20 random
/// smooth sections. The identity is exact in the continuum; the residual is
/// pure discretization and decays at second order in the grid spacing.
pub fn commutator_residual<S: Real>(
    f: &dyn ScalarField<S>,
    g: &dyn ScalarField<S>,
    b: &PrequantumBundle<S>,
) -> Result<S> {
    let qf = kostant_operator(f, b, false)?;
    let qg = kostant_operator(g, b, false)?;
    // {f, g}_k = {f, g}/k enters through a Bracket field scaled by 1/k;
    // its own gradients fall back to finite differences inside the
    // operator assembly
    let kf = lit::<S>(b.level as f64);
    let br = BracketField { f, g, scale: S::one() / kf };
    let qbr = kostant_operator(&br, b, false)?;
    batch_residual(
        b,
        &|s| {
            let a = qf.apply(b, &qg.apply(b, s)?)?;
            let bqs = qg.apply(b, &qf.apply(b, s)?)?;
            let mut m = a;
            m.axpy(c(-S::one(), S::zero()), &bqs);
            let qb = qbr.apply(b, s)?;
            m.axpy(c(-S::one(), S::zero()), &qb);
            Ok(m)
        },
        20,
        977,
    )
}

struct BracketField<'a, S: Real> {
    f: &'a dyn ScalarField<S>,
    g: &'a dyn ScalarField<S>,
    scale: S,
}

impl<S: Real> ScalarField<S> for BracketField<'_, S> {
    fn eval(&self, model: &PhaseModel<S>, x: &nalgebra::Vector3<S>) -> S {
        crate::phase::poisson_bracket_canonical(model, self.f, self.g, x) * self.scale
    }
}

/// Skew-adjointness defect `|<Q_f s1, s2>_q + <s1, Q_f s2>_q|`.
pub fn adjointness_residual<S: Real>(
    f: &dyn ScalarField<S>,
    b: &PrequantumBundle<S>,
    s1: &DiscretizedSection<S>,
    s2: &DiscretizedSection<S>,
) -> Result<S> {
    let q = kostant_operator(f, b, false)?;
    let left = b.pairing(&q.apply(b, s1)?, s2);
    let right = b.pairing(s1, &q.apply(b, s2)?);
    Ok((left + right).norm_sqr().sqrt())
}

/// Comparison of two hermitian structures on the same grid and level.
#[derive(Debug, Clone)]
pub struct HermitianComparison<S: Real> {
    /// Recovered log-ratio `phi = log(w1 / w2)` on the grid.
    pub phi: Vec<S>,
    /// Max defect of `Re(delta connection) = d phi / 2` per link, with the
    /// derivative of the recovered phi reconstructed by finite differences.
    pub real_residual: S,
    /// Max plaquette curvature of the imaginary part of the difference
    /// (must be closed: the two connections share the curvature).
    pub imag_curvature_residual: S,
}

/// Recover `phi` from two bundles and verify the compatible connections
/// differ by `d phi / 2` plus a closed imaginary part.
pub fn hermitian_compare<S: Real>(
    b1: &PrequantumBundle<S>,
    b2: &PrequantumBundle<S>,
) -> Result<HermitianComparison<S>> {
    if b1.n != b2.n || b1.level != b2.level {
        return Err(Error::DimensionMismatch(b1.n, b2.n));
    }
    let n = b1.n;
    let nf = S::from_usize_(n);
    let mut phi = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let w1 = b1.weight(i, j);
            let w2 = b2.weight(i, j);
            if w1 <= S::zero() || w2 <= S::zero() {
                return Err(Error::InvalidStructure("non-positive hermitian weight".into()));
            }
            phi[i * n + j] = (w1 / w2).ln();
        }
    }
    // per-link real parts: -log|T| integrates Re(A) = d phi / 2 along the link
    let mut real_res = S::zero();
    let h = S::one() / nf;
    for i in 0..n {
        for j in 0..n {
            let dp = -(b1.lp(i, j).norm_sqr().sqrt() / b2.lp(i, j).norm_sqr().sqrt()).ln();
            let dq = -(b1.lq(i, j).norm_sqr().sqrt() / b2.lq(i, j).norm_sqr().sqrt()).ln();
            // independent route: midlink slope of the recovered phi by a
            // 4-point stencil, integrated with the midpoint rule
            let stencil = |pm: S, p0: S, p1: S, p2: S| -> S {
                // phi'(midlink) ~ (27 (p1 - p0) - (p2 - pm)) / (24 h)
                (lit::<S>(27.0) * (p1 - p0) - (p2 - pm)) / (lit::<S>(24.0) * h)
            };
            let sp = stencil(
                phi[((i + n - 1) % n) * n + j],
                phi[i * n + j],
                phi[((i + 1) % n) * n + j],
                phi[((i + 2) % n) * n + j],
            );
            let sq = stencil(
                phi[i * n + (j + n - 1) % n],
                phi[i * n + j],
                phi[i * n + (j + 1) % n],
                phi[i * n + (j + 2) % n],
            );
            // link integral of d phi / 2 by the midpoint rule
            let mid_p = sp * h * lit::<S>(0.5);
            let mid_q = sq * h * lit::<S>(0.5);
            real_res = real_res.max((dp - mid_p).abs() / h).max((dq - mid_q).abs() / h);
        }
    }
    // imaginary part of the difference must be closed
    let mut curv = S::zero();
    for i in 0..n {
        for j in 0..n {
            let w1 = b1.plaquette(i, j);
            let w2 = b2.plaquette(i, j);
            let ratio = w1 * w2.inv();
            curv = curv.max(ratio.im.atan2(ratio.re).abs());
        }
    }
    Ok(HermitianComparison { phi, real_residual: real_res, imag_curvature_residual: curv })
}

/// Contact-lift data of an observable.
#[derive(Debug, Clone)]
pub struct ContactLift<S: Real> {
    /// Vertical component recovered by line integration of `-i_{Y_f} omega_k`.
    pub vertical: Vec<S>,
    /// Max deviation of `vertical - f` from its mean (must be a constant).
    pub constancy_residual: S,
    /// Finite-difference estimate of `|| Lie_{Y-lift} A ||` on the
    /// discretized principal circle bundle.
    pub lie_residual: S,
}

/// Lift `X_f` to the principal circle bundle preserving the connection:
/// recovers the vertical component (equal to `f` up to a constant) by grid
/// line integration and returns the discretized invariance residual.
pub fn contact_lift<S: Real>(
    f: &dyn ScalarField<S>,
    b: &PrequantumBundle<S>,
) -> Result<ContactLift<S>> {
    let n = b.n;
    let nf = S::from_usize_(n);
    let kf = lit::<S>(b.level as f64);
    let model = &b.model;
    let at = |i: usize, j: usize| {
        nalgebra::Vector3::new(
            S::from_usize_(i % n) / nf,
            S::from_usize_(j % n) / nf,
            S::zero(),
        )
    };
    // -i_{Y_f} omega_k = df in the continuum; integrate the 1-form whose
    // components come from Y_f only (independent route)
    let comp = |i: usize, j: usize| -> (S, S) {
        let g = crate::phase::gradient_or_fd(f, model, &at(i, j));
        let yp = -g.y / kf;
        let yq = g.x / kf;
        // omega_k = k dp ^ dq: i_Y omega_k = k (Y^p dq - Y^q dp)
        // => -i_Y omega_k has components (k Y^q, -k Y^p) in (dp, dq)
        (kf * yq, -kf * yp)
    };
    let mut vertical = vec![S::zero(); n * n];
    // integrate along the first row, then down the columns (trapezoid)
    let h = S::one() / nf;
    for j in 1..n {
        let (_, aq_prev) = comp(0, j - 1);
        let (_, aq_here) = comp(0, j);
        vertical[j] = vertical[j - 1] + (aq_prev + aq_here) * lit::<S>(0.5) * h;
    }
    for i in 1..n {
        for j in 0..n {
            let (ap_prev, _) = comp(i - 1, j);
            let (ap_here, _) = comp(i, j);
            vertical[i * n + j] =
                vertical[(i - 1) * n + j] + (ap_prev + ap_here) * lit::<S>(0.5) * h;
        }
    }
    // g - f must be constant
    let mut diff = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            diff.push(vertical[i * n + j] - f.eval(model, &at(i, j)));
        }
    }
    let mean = diff.iter().copied().sum::<S>() / S::from_usize_(n * n);
    let constancy = diff.iter().map(|&d| (d - mean).abs()).fold(S::zero(), |a, b| a.max(b));
    // normalize the vertical component to match f's constant
    for v in vertical.iter_mut() {
        *v -= mean;
    }
    // Lie residual: the invariance 1-form collapses to
    // `R = d(vertical) + k i_{Y_f} omega`, evaluated with centered
    // differences of the recovered grid function against the analytic
    // components (the fiber and alpha terms cancel identically)
    let gval = |i: usize, j: usize| vertical[(i % n) * n + (j % n)];
    let mut lie = S::zero();
    for i in 0..n {
        for j in 0..n {
            let dp = (gval(i + 1, j) - gval(i + n - 1, j)) / (lit::<S>(2.0) * h);
            let dq = (gval(i, j + 1) - gval(i, j + n - 1)) / (lit::<S>(2.0) * h);
            let (mp, mq) = comp(i, j); // (k Y^q, -k Y^p) = components of -k i_Y omega
            lie = lie.max((dp - mp).abs()).max((dq - mq).abs());
        }
    }
    Ok(ContactLift { vertical, constancy_residual: constancy, lie_residual: lie })
}

/// Souriau-Kostant functional `tau int f <s, s>_h d mu_L`.
pub fn sk_functional<S: Real>(
    f: &dyn ScalarField<S>,
    b: &PrequantumBundle<S>,
    s: &DiscretizedSection<S>,
    tau: S,
) -> Result<S> {
    if s.n != b.n {
        return Err(Error::DimensionMismatch(s.n, b.n));
    }
    let n = b.n;
    let nf = S::from_usize_(n);
    let cell = S::one() / S::from_usize_(n * n);
    let mut acc = S::zero();
    for i in 0..n {
        for j in 0..n {
            let x = nalgebra::Vector3::new(S::from_usize_(i) / nf, S::from_usize_(j) / nf, S::zero());
            acc += f.eval(&b.model, &x) * s.at(i, j).norm_sqr() * b.weight(i, j) * cell;
        }
    }
    Ok(tau * acc)
}

/// Compatibility defect of the connection with the hermitian structure:
/// max over sites and directions of
/// `| d<s1,s2>_h - <grad s1, s2>_h - <s1, grad s2>_h |`.
pub fn compatibility_residual<S: Real>(
    b: &PrequantumBundle<S>,
    s1: &DiscretizedSection<S>,
    s2: &DiscretizedSection<S>,
) -> S {
    let n = b.n;
    let h2 = lit::<S>(2.0) / S::from_usize_(n);
    let pair = |i: usize, j: usize| -> C<S> {
        s1.at(i, j).conj() * s2.at(i, j) * c(b.weight(i, j), S::zero())
    };
    let mut worst = S::zero();
    for i in 0..n {
        for j in 0..n {
            let wij = c(b.weight(i, j), S::zero());
            let dh_p = (pair(i + 1, j) - pair(i + n - 1, j)) / c(h2, S::zero());
            let dh_q = (pair(i, j + 1) - pair(i, j + n - 1)) / c(h2, S::zero());
            let rhs_p =
                (b.grad_p(s1, i, j).conj() * s2.at(i, j) + s1.at(i, j).conj() * b.grad_p(s2, i, j))
                    * wij;
            let rhs_q =
                (b.grad_q(s1, i, j).conj() * s2.at(i, j) + s1.at(i, j).conj() * b.grad_q(s2, i, j))
                    * wij;
            worst = worst
                .max((dh_p - rhs_p).norm_sqr().sqrt())
                .max((dh_q - rhs_q).norm_sqr().sqrt());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Serialization: JSON header line + little-endian f64 pairs
// ---------------------------------------------------------------------------

/// Serialize a section: one JSON header line, then `2 n^2` little-endian
/// `f64` values (re, im per site, row-major with `p` outer).
pub fn write_section<S: Real>(
    s: &DiscretizedSection<S>,
    out: &mut dyn std::io::Write,
) -> std::io::Result<()> {
    let header = serde_json::json!({
        "grid": s.n,
        "level": s.level,
        "twist": "seam-gauge alpha=p dq",
        "endianness": "little",
        "layout": "row-major p-outer",
        "dtype": "c128",
    });
    writeln!(out, "{header}")?;
    for v in s.values() {
        out.write_all(&v.re.to_f64().unwrap().to_le_bytes())?;
        out.write_all(&v.im.to_f64().unwrap().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_section<S: Real>(input: &[u8]) -> Result<DiscretizedSection<S>> {
    let newline = input
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Config("missing section header".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&input[..newline])
        .map_err(|e| Error::Config(format!("bad section header: {e}")))?;
    let n = header["grid"].as_u64().ok_or_else(|| Error::Config("missing grid".into()))? as usize;
    let level =
        header["level"].as_u64().ok_or_else(|| Error::Config("missing level".into()))? as u32;
    let body = &input[newline + 1..];
    if body.len() != 16 * n * n {
        return Err(Error::Config(format!(
            "expected {} payload bytes, got {}",
            16 * n * n,
            body.len()
        )));
    }
    let mut values = Vec::with_capacity(n * n);
    for chunk in body.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        values.push(c(S::lit(re), S::lit(im)));
    }
    DiscretizedSection::from_values(n, level, values)
}
