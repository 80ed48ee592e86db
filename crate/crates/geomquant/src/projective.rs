//! Finite-dimensional quantum mechanics in projective/Kähler form: Berezin
//! symbols, the three brackets, uncertainty, geodesic transition
//! probabilities, spectral probes and the Killing-residual diagnostic.
//!
//! The hermitian pairing is conjugate-linear in its first slot and is split
//! as `<u, v> = G(u, v)/(2h) + i Omega(u, v)/(2h)`, so `G = 2h Re<,>` and
//! `Omega = 2h Im<,>`. The Schroedinger field of an observable is
//! `Y_F(psi) = (i/h) F psi`; its symbol is the expectation value.
//!
//! With this orientation the bracket identity holds verbatim,
//! `Omega(X_F, X_K) = <(1/ih)[F, K]>`, while the differential pairs as
//! `df = Omega(. , X_f)`; the sign was calibrated once against the 2x2
//! Pauli oracle and is frozen by the tests.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermitize};
use crate::scalar::{c, lit, C, Real};
use nalgebra::{DMatrix, DVector};

/// Conventions of the projective Kähler structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KahlerConventions<S: Real> {
    /// Planck parameter `h > 0` of the pairing split (default 1).
    pub planck: S,
}

impl<S: Real> Default for KahlerConventions<S> {
    fn default() -> Self {
        KahlerConventions { planck: S::one() }
    }
}

impl<S: Real> KahlerConventions<S> {
    pub fn new(planck: S) -> Result<Self> {
        if planck <= S::zero() {
            return Err(Error::Config("planck must be positive".into()));
        }
        Ok(KahlerConventions { planck })
    }
}

/// A finite-dimensional quantum observable: a Hermitian matrix.
///
/// The stored matrix is Hermitian-symmetrized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianObservable<S: Real> {
    matrix: DMatrix<C<S>>,
}

impl<S: Real> HermitianObservable<S> {
    pub fn new(mut matrix: DMatrix<C<S>>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() < 2 {
            return Err(Error::DimensionMismatch(matrix.nrows(), matrix.ncols()));
        }
        hermitize(&mut matrix);
        Ok(HermitianObservable { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        HermitianObservable { matrix: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C<S>> {
        &self.matrix
    }

    pub fn apply(&self, v: &DVector<C<S>>) -> DVector<C<S>> {
        &self.matrix * v
    }

    /// Hermitian eigendecomposition (ascending eigenvalues).
    pub fn eigen(&self) -> (DVector<S>, DMatrix<C<S>>) {
        hermitian_eigen(&self.matrix)
    }

    /// The observable `(1/(i h)) [F, K]`, the Poisson-bracket witness.
    pub fn commutator_observable(
        f: &HermitianObservable<S>,
        k: &HermitianObservable<S>,
        conv: &KahlerConventions<S>,
    ) -> Result<HermitianObservable<S>> {
        check_dims(f, k)?;
        let comm = &f.matrix * &k.matrix - &k.matrix * &f.matrix;
        // (1/(i h)) C = (-i/h) C
        let factor = c(S::zero(), -S::one() / conv.planck);
        HermitianObservable::new(comm.map(|z| z * factor))
    }

    /// The Jordan product observable `(F K + K F)/2`.
    pub fn jordan_observable(
        f: &HermitianObservable<S>,
        k: &HermitianObservable<S>,
    ) -> Result<HermitianObservable<S>> {
        check_dims(f, k)?;
        let m = (&f.matrix * &k.matrix + &k.matrix * &f.matrix).map(|z| z.scale(lit(0.5)));
        HermitianObservable::new(m)
    }

    /// Serialize as a JSON array of rows of `[re, im]` pairs (row-major).
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.dim())
            .map(|i| {
                (0..self.dim())
                    .map(|j| {
                        let z = self.matrix[(i, j)];
                        [z.re.to_f64().unwrap(), z.im.to_f64().unwrap()]
                    })
                    .collect()
            })
            .collect();
        serde_json::json!(rows)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let rows: Vec<Vec<[f64; 2]>> = serde_json::from_value(v.clone())
            .map_err(|e| Error::Config(format!("hermitian matrix: {e}")))?;
        let n = rows.len();
        if n < 2 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Config("matrix must be square, dim >= 2".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| c(S::lit(rows[i][j][0]), S::lit(rows[i][j][1])));
        HermitianObservable::new(m)
    }
}

fn check_dims<S: Real>(a: &HermitianObservable<S>, b: &HermitianObservable<S>) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(a.dim(), b.dim()))
    }
}

/// A quantum state: a unit vector up to phase.
///
/// The stored representative is canonicalized (the largest component is
/// rotated to be real positive) so serialization is reproducible; all
/// operations are phase-insensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray<S: Real> {
    rep: DVector<C<S>>,
}

impl<S: Real> Ray<S> {
    pub fn new(v: DVector<C<S>>) -> Result<Self> {
        let n2: S = v.iter().map(|z| z.norm_sqr()).sum();
        if n2 <= S::lit(1e-24) {
            return Err(Error::Config("zero vector does not define a ray".into()));
        }
        let mut rep = v.map(|z| z.unscale(n2.sqrt()));
        let mut best = 0usize;
        let mut best_mag = S::zero();
        for (i, z) in rep.iter().enumerate() {
            if z.norm_sqr() > best_mag {
                best_mag = z.norm_sqr();
                best = i;
            }
        }
        let pivot = rep[best];
        let phase = pivot.unscale(pivot.norm_sqr().sqrt());
        rep = rep.map(|z| z * phase.conj());
        Ok(Ray { rep })
    }

    pub fn basis_vector(dim: usize, idx: usize) -> Self {
        let mut v = DVector::from_element(dim, c(S::zero(), S::zero()));
        v[idx] = c(S::one(), S::zero());
        Ray { rep: v }
    }

    pub fn dim(&self) -> usize {
        self.rep.len()
    }

    /// A unit representative of the ray.
    pub fn representative(&self) -> &DVector<C<S>> {
        &self.rep
    }

    /// Hermitian overlap `<self, other>` of representatives.
    pub fn overlap(&self, other: &Ray<S>) -> C<S> {
        inner(&self.rep, &other.rep)
    }

    /// Phase-insensitive distance: `sqrt(1 - |<a, b>|^2)`.
    pub fn distance(&self, other: &Ray<S>) -> S {
        (S::one() - self.overlap(other).norm_sqr()).max(S::zero()).sqrt()
    }
}

/// `<u, v>`, conjugate-linear in the first argument.
pub fn inner<S: Real>(u: &DVector<C<S>>, v: &DVector<C<S>>) -> C<S> {
    let mut acc = c(S::zero(), S::zero());
    for (a, b) in u.iter().zip(v.iter()) {
        acc += a.conj() * *b;
    }
    acc
}

/// Expectation value `<psi, F psi>` of the observable at the ray.
pub fn symbol_value<S: Real>(f: &HermitianObservable<S>, p: &Ray<S>) -> Result<S> {
    if f.dim() != p.dim() {
        return Err(Error::DimensionMismatch(f.dim(), p.dim()));
    }
    Ok(inner(p.representative(), &f.apply(p.representative())).re)
}

/// The Schroedinger/Hamiltonian field of the symbol at `p`, represented in
/// the horizontal complement of the ray: `(i/h)(F - <F>) psi`.
pub fn symbol_field<S: Real>(
    f: &HermitianObservable<S>,
    p: &Ray<S>,
    conv: &KahlerConventions<S>,
) -> Result<DVector<C<S>>> {
    let val = symbol_value(f, p)?;
    let psi = p.representative();
    let ih = c(S::zero(), S::one() / conv.planck);
    Ok(DVector::from_iterator(
        p.dim(),
        f.apply(psi)
            .iter()
            .zip(psi.iter())
            .map(|(fp, ps)| (*fp - *ps * c(val, S::zero())) * ih),
    ))
}

/// The three brackets of two symbols at a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolBrackets<S> {
    /// `{f, k}_Omega = Omega(X_f, X_k)`.
    pub poisson: S,
    /// Riemannian bracket `(f, k) = (h/2) G(X_f, X_k)` (quantum covariance).
    pub riemann: S,
    /// Symmetric bracket `(f, k) + f k`, the Jordan-product symbol.
    pub symmetric: S,
}

/// Poisson, Riemannian and symmetric brackets evaluated geometrically from
/// the horizontal Hamiltonian fields (not through the commutator matrix).
pub fn symbol_brackets<S: Real>(
    f: &HermitianObservable<S>,
    k: &HermitianObservable<S>,
    p: &Ray<S>,
    conv: &KahlerConventions<S>,
) -> Result<SymbolBrackets<S>> {
    check_dims(f, k)?;
    let h = conv.planck;
    let xf = symbol_field(f, p, conv)?;
    let xk = symbol_field(k, p, conv)?;
    let pairing = inner(&xf, &xk);
    // Omega(u, v) = 2h Im<u, v>, G(u, v) = 2h Re<u, v>
    let poisson = lit::<S>(2.0) * h * pairing.im;
    let riemann = h * h * pairing.re; // (h/2) * 2h Re<..>
    let fv = symbol_value(f, p)?;
    let kv = symbol_value(k, p)?;
    Ok(SymbolBrackets { poisson, riemann, symmetric: riemann + fv * kv })
}

/// Uncertainty data of a pair of observables at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyReport<S> {
    pub variance_f: S,
    pub variance_k: S,
    pub lower_bound: S,
    pub satisfied: bool,
}

/// Robertson-Schroedinger relation: `(Df)^2 (Dk)^2 >= (h/2 {f,k})^2 + (f,k)^2`.
pub fn uncertainty_relation<S: Real>(
    f: &HermitianObservable<S>,
    k: &HermitianObservable<S>,
    p: &Ray<S>,
    conv: &KahlerConventions<S>,
) -> Result<UncertaintyReport<S>> {
    let both = symbol_brackets(f, k, p, conv)?;
    let var_f = symbol_brackets(f, f, p, conv)?.riemann;
    let var_k = symbol_brackets(k, k, p, conv)?.riemann;
    let half_h = conv.planck * lit::<S>(0.5);
    let lower = (half_h * both.poisson) * (half_h * both.poisson) + both.riemann * both.riemann;
    Ok(UncertaintyReport {
        variance_f: var_f,
        variance_k: var_k,
        lower_bound: lower,
        satisfied: var_f * var_k >= lower - lit(1e-10),
    })
}

/// Transition probability together with its geodesic-distance cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionReport<S> {
    /// `|<psi_0, psi>|^2`.
    pub prob: S,
    /// `cos^2(sigma / sqrt(2h))` with `sigma` integrated along the
    /// connecting great-circle path.
    pub geodesic_check: S,
    /// Integrated Fubini-Study arc length `sigma`.
    pub sigma: S,
}

/// Probability by overlap and, independently, by arc-length quadrature
/// (64-point Gauss-Legendre) along the normalized-chord path.
pub fn transition_probability<S: Real>(
    p0: &Ray<S>,
    p: &Ray<S>,
    conv: &KahlerConventions<S>,
) -> Result<TransitionReport<S>> {
    if p0.dim() != p.dim() {
        return Err(Error::DimensionMismatch(p0.dim(), p.dim()));
    }
    let h = conv.planck;
    let psi0 = p0.representative().clone();
    let ov = inner(&psi0, p.representative());
    let prob = ov.norm_sqr();
    // phase-align the target (make <psi0, psi1> real positive) so the chord
    // path follows the minimal geodesic
    let mag = ov.norm_sqr().sqrt();
    let phase =
        if mag > lit(1e-14) { ov.conj().unscale(mag) } else { c(S::one(), S::zero()) };
    let psi1 = p.representative().map(|z| z * phase);
    let dv: DVector<C<S>> = &psi1 - &psi0;

    let (nodes, weights) = crate::linalg::gauss_legendre::<S>(64);
    let mut sigma = S::zero();
    for (x, w) in nodes.iter().zip(weights.iter()) {
        let t = (*x + S::one()) * lit::<S>(0.5);
        let v: DVector<C<S>> = &psi0 + dv.map(|z| z.scale(t));
        let n2: S = v.iter().map(|z| z.norm_sqr()).sum();
        let n = n2.sqrt();
        let cpath = v.map(|z| z.unscale(n));
        // d/dt (v/|v|) = v'/|v| - v Re<v, v'>/|v|^3
        let rad = inner(&v, &dv).re / (n2 * n);
        let cdot: DVector<C<S>> = dv.map(|z| z.unscale(n)) - v.map(|z| z.scale(rad));
        // horizontal part: remove the complex span of the path point
        let proj = inner(&cpath, &cdot);
        let hdot: DVector<C<S>> = &cdot - cpath.map(|z| z * proj);
        let speed2: S = hdot.iter().map(|z| z.norm_sqr()).sum();
        // G = 2h Re<,>  =>  ds = sqrt(2h) |c_h'|
        sigma += *w * lit::<S>(0.5) * (lit::<S>(2.0) * h * speed2).sqrt();
    }
    let check = (sigma / (lit::<S>(2.0) * h).sqrt()).cos();
    Ok(TransitionReport { prob, geodesic_check: check * check, sigma })
}

/// Result of the spectral probe at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProbe<S: Real> {
    /// Whether the state is a critical point of the symbol.
    pub is_critical: bool,
    /// Max of `1/((Df)^2 + (f - lambda)^2)` over the sampled state set,
    /// `lambda` the midpoint of the window.
    pub n_lambda_max: S,
    /// Normalized projection of the state onto the spectral subspace.
    pub projected: Ray<S>,
}

/// Criticality test, spectral-membership functional and spectral projection
/// for the window `[lo, hi]`.
///
/// The sampled state set walks from a generic ray toward each eigenray, the
/// operational stand-in for a supremum over all states.
pub fn spectrum_tools<S: Real>(
    f: &HermitianObservable<S>,
    window: (S, S),
    p: &Ray<S>,
    conv: &KahlerConventions<S>,
) -> Result<SpectralProbe<S>> {
    if window.1 < window.0 {
        return Err(Error::Config("empty spectral window".into()));
    }
    if f.dim() != p.dim() {
        return Err(Error::DimensionMismatch(f.dim(), p.dim()));
    }
    let dim = f.dim();
    let field_norm: S =
        symbol_field(f, p, conv)?.iter().map(|z| z.norm_sqr()).sum::<S>().sqrt();
    let scale = f.matrix().iter().map(|z| z.norm_sqr()).sum::<S>().sqrt().max(S::one());
    let is_critical = field_norm <= lit::<S>(1e-8) * scale;

    let lambda = (window.0 + window.1) * lit(0.5);
    let (vals, vecs) = f.eigen();

    // state sample: the base ray plus rays approaching each eigenray
    let mut sample: Vec<Ray<S>> = vec![p.clone()];
    let generic = DVector::from_fn(dim, |i, _| {
        c(S::one() / S::from_usize_(i + 1), S::lit(0.3) / S::from_usize_(i + 2))
    });
    for j in 0..dim {
        let ev = vecs.column(j).into_owned();
        for &t in &[0.0, 0.5, 0.9, 0.99, 0.999, 1.0] {
            let tl = S::lit(t);
            let v: DVector<C<S>> =
                generic.map(|z| z.scale(S::one() - tl)) + ev.map(|z| z.scale(tl));
            if let Ok(r) = Ray::new(v) {
                sample.push(r);
            }
        }
    }
    let mut n_max = S::zero();
    for r in &sample {
        let var = symbol_brackets(f, f, r, conv)?.riemann;
        let fv = symbol_value(f, r)?;
        let denom = var + (fv - lambda) * (fv - lambda);
        let n = S::one() / denom.max(lit(1e-300));
        n_max = n_max.max(n);
    }

    // orthogonal projection onto the span of eigenvectors in the window
    let psi = p.representative();
    let mut proj = DVector::from_element(dim, c(S::zero(), S::zero()));
    for j in 0..dim {
        if vals[j] >= window.0 && vals[j] <= window.1 {
            let ev = vecs.column(j).into_owned();
            let coef = inner(&ev, psi);
            proj += ev.map(|z| z * coef);
        }
    }
    let norm2: S = proj.iter().map(|z| z.norm_sqr()).sum();
    if norm2 <= lit(1e-20) {
        return Err(Error::UndefinedProjection);
    }
    Ok(SpectralProbe { is_critical, n_lambda_max: n_max, projected: Ray::new(proj)? })
}

// ---------------------------------------------------------------------------
// Killing-residual diagnostic
// ---------------------------------------------------------------------------

/// Local real chart around a ray: an orthonormal complex basis of the
/// orthogonal complement gives `2(d-1)` real directions.
struct RayChart<S: Real> {
    base: DVector<C<S>>,
    dirs: Vec<DVector<C<S>>>,
}

impl<S: Real> RayChart<S> {
    fn new(p: &Ray<S>) -> Self {
        let dim = p.dim();
        let psi = p.representative().clone();
        let mut basis: Vec<DVector<C<S>>> = Vec::new();
        let mut idx = 0usize;
        while basis.len() < dim - 1 && idx < dim {
            let mut v = DVector::from_element(dim, c(S::zero(), S::zero()));
            v[idx] = c(S::one(), S::zero());
            idx += 1;
            let mut w = v.clone();
            let cpsi = inner(&psi, &v);
            w -= psi.map(|z| z * cpsi);
            for b in &basis {
                let cb = inner(b, &w);
                w -= b.map(|z| z * cb);
            }
            let n2: S = w.iter().map(|z| z.norm_sqr()).sum();
            if n2 > lit(1e-12) {
                basis.push(w.map(|z| z.unscale(n2.sqrt())));
            }
        }
        let mut dirs = Vec::with_capacity(2 * basis.len());
        for b in basis {
            dirs.push(b.clone());
            dirs.push(b.map(|z| z * c(S::zero(), S::one())));
        }
        RayChart { base: psi, dirs }
    }

    fn dim(&self) -> usize {
        self.dirs.len()
    }

    fn point(&self, x: &[S]) -> DVector<C<S>> {
        let mut v = self.base.clone();
        for (xi, d) in x.iter().zip(self.dirs.iter()) {
            v += d.map(|z| z.scale(*xi));
        }
        let n2: S = v.iter().map(|z| z.norm_sqr()).sum();
        v.map(|z| z.unscale(n2.sqrt()))
    }

    /// Chart point and the pushforwards of the coordinate directions.
    fn frame(&self, x: &[S]) -> (DVector<C<S>>, Vec<DVector<C<S>>>) {
        let mut v = self.base.clone();
        for (xi, d) in x.iter().zip(self.dirs.iter()) {
            v += d.map(|z| z.scale(*xi));
        }
        let n2: S = v.iter().map(|z| z.norm_sqr()).sum();
        let n = n2.sqrt();
        let point = v.map(|z| z.unscale(n));
        let frame = self
            .dirs
            .iter()
            .map(|d| {
                let rad = inner(&v, d).re / (n2 * n);
                d.map(|z| z.unscale(n)) - v.map(|z| z.scale(rad))
            })
            .collect();
        (point, frame)
    }

    /// Metric and symplectic components at chart coordinates `x`.
    fn tensors(&self, x: &[S], h: S) -> (DMatrix<S>, DMatrix<S>) {
        let (point, frame) = self.frame(x);
        let m = self.dim();
        let mut g = DMatrix::zeros(m, m);
        let mut om = DMatrix::zeros(m, m);
        let two_h = lit::<S>(2.0) * h;
        let hframe: Vec<DVector<C<S>>> = frame
            .iter()
            .map(|e| {
                let pr = inner(&point, e);
                e - point.map(|z| z * pr)
            })
            .collect();
        for j in 0..m {
            for k in 0..m {
                let pair = inner(&hframe[j], &hframe[k]);
                g[(j, k)] = two_h * pair.re;
                om[(j, k)] = two_h * pair.im;
            }
        }
        (g, om)
    }
}

/// Finite-difference estimate of `max_p || Lie_{X_f} G ||` over the sample,
/// for a scalar function given directly on rays.
///
/// Vanishes (to FD accuracy) exactly for Berezin symbols; strictly positive
/// for generic smooth functions.
pub fn killing_residual<S: Real>(
    f: &dyn Fn(&Ray<S>) -> S,
    sample: &[Ray<S>],
    conv: &KahlerConventions<S>,
) -> S {
    let h = conv.planck;
    let delta = lit::<S>(1e-4);
    let mut worst = S::zero();
    for p in sample {
        let chart = RayChart::new(p);
        let m = chart.dim();
        let feval = |x: &[S]| f(&Ray { rep: chart.point(x) });
        // Omega(X, e_j) = df_j up to overall sign, immaterial for the norm
        let field = |x: &[S]| -> DVector<S> {
            let (_, om) = chart.tensors(x, h);
            let mut df = DVector::zeros(m);
            for j in 0..m {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += delta;
                xm[j] -= delta;
                df[j] = (feval(&xp) - feval(&xm)) / (lit::<S>(2.0) * delta);
            }
            om.lu().solve(&df).unwrap_or_else(|| DVector::zeros(m))
        };
        let x0 = vec![S::zero(); m];
        let xf = field(&x0);
        let mut dfield = DMatrix::zeros(m, m); // (l, j) = d X^l / d x_j
        for j in 0..m {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] += delta;
            xm[j] -= delta;
            let fp = field(&xp);
            let fm = field(&xm);
            for l in 0..m {
                dfield[(l, j)] = (fp[l] - fm[l]) / (lit::<S>(2.0) * delta);
            }
        }
        let (g0, _) = chart.tensors(&x0, h);
        let mut dg = vec![DMatrix::zeros(m, m); m];
        for (l, slot) in dg.iter_mut().enumerate() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[l] += delta;
            xm[l] -= delta;
            let gp = chart.tensors(&xp, h).0;
            let gm = chart.tensors(&xm, h).0;
            *slot = (gp - gm) / (lit::<S>(2.0) * delta);
        }
        // (Lie_X G)_{jk} = X^l dG_{jk}/dx_l + G_{lk} dX^l/dx_j + G_{jl} dX^l/dx_k
        let mut lie = DMatrix::zeros(m, m);
        for j in 0..m {
            for k in 0..m {
                let mut acc = S::zero();
                for l in 0..m {
                    acc += xf[l] * dg[l][(j, k)]
                        + g0[(l, k)] * dfield[(l, j)]
                        + g0[(j, l)] * dfield[(l, k)];
                }
                lie[(j, k)] = acc;
            }
        }
        let norm = lie.iter().map(|v| *v * *v).sum::<S>().sqrt();
        worst = worst.max(norm);
    }
    worst
}
