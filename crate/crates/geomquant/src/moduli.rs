//! The discretized moduli space of half-weighted Bohr-Sommerfeld cycles:
//! Kähler triple, induced functions, dynamical correspondence, the bracket
//! identity, critical points, isodrastic transport, level rescaling and the
//! quasi-classical objects.
//!
//! A point is a Bohr-Sommerfeld loop with a positive half-weight of fixed
//! mass; a tangent vector is a pair of vertex profiles `(psi1, psi2)` with
//! weighted zero mean. The loop-deformation coordinate `psi1` is realized
//! geometrically by the graph displacement
//! `V(psi1) = (D psi1) Rot90(tangent) / (speed w k)` (see
//! [`crate::bohr_sommerfeld::graph_displacement`]); the weight coordinate
//! rescales `theta` multiplicatively. With this realization the Kähler
//! triple is
//!
//! * `Omega(v, w) = int (psi1 phi2 - psi2 phi1) theta^2 ds`
//! * `I(psi1, psi2) = (-psi2, psi1)`
//! * `G(v, w) = int (psi1 phi1 + psi2 phi2) theta^2 ds`
//!
//! and the dynamical correspondence of an observable has coordinates
//! `psi1 = f|_S - mean`, `psi2 = (1/2) Lie_{W_f} theta^2 / theta^2`, where
//! `W_f` is the tangential part of the level-scaled Hamiltonian field. The
//! central verified identity is `X_{F_f} = 2 tau Theta_DC(X_f)`, a linear
//! solve against the closed form.

use crate::bohr_sommerfeld::{
    graph_displacement, holonomy_class_tol, loop_integral, HalfWeight, LagrangianLoop, TOL_HOL,
};
use crate::error::{Error, Result};
use crate::linalg::DerivativeScheme;
use crate::phase::{hamiltonian_field_canonical, Integrator, PhaseModel, ScalarField};
use crate::scalar::{lit, Real};
use nalgebra::{DMatrix, DVector, Vector3};

/// Canonical calibration of the paper's quantization conditions at level 1.
pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_VOLUME: f64 = 2.0;

/// `tau(k, hbar) = k hbar / 2`, the level calibration of the proportionality
/// constant in the correspondence identity.
pub fn tau_for<S: Real>(level: u32, planck: S) -> S {
    lit::<S>(level as f64) * planck * lit(0.5)
}

/// A point of the discretized moduli space.
#[derive(Debug, Clone)]
pub struct ModuliPoint<S: Real> {
    pub lp: LagrangianLoop<S>,
    pub weight: HalfWeight<S>,
    pub level: u32,
    pub tau: S,
}

impl<S: Real> ModuliPoint<S> {
    /// Validates the Bohr-Sommerfeld condition at `level` and the weight
    /// compatibility.
    pub fn new(lp: LagrangianLoop<S>, weight: HalfWeight<S>, level: u32, tau: S) -> Result<Self> {
        if weight.len() != lp.len() {
            return Err(Error::DimensionMismatch(weight.len(), lp.len()));
        }
        let h = holonomy_class_tol(&lp, level, lit(TOL_HOL))?;
        if !h.is_bs {
            return Err(Error::Level {
                level,
                residual: h.defect.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(ModuliPoint { lp, weight, level, tau })
    }

    /// Construct without re-validating the holonomy; used for variations
    /// and transported points whose defect is a measured quantity.
    pub fn unchecked(
        lp: LagrangianLoop<S>,
        weight: HalfWeight<S>,
        level: u32,
        tau: S,
    ) -> Self {
        ModuliPoint { lp, weight, level, tau }
    }

    pub fn len(&self) -> usize {
        self.lp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lp.is_empty()
    }

    pub fn volume(&self) -> S {
        self.weight.volume()
    }

    /// Vertex profile of an observable along the loop.
    pub fn restrict(&self, f: &dyn ScalarField<S>) -> Vec<S> {
        (0..self.len()).map(|i| f.eval(&self.lp.model, &self.lp.vertex(i))).collect()
    }

    /// Weighted mean `int v theta^2 / r`.
    pub fn weighted_mean(&self, values: &[S]) -> S {
        loop_integral(values, &self.weight) / self.volume()
    }

    /// Displace the point along a tangent direction (first order in `eps`).
    pub fn perturbed(&self, v: &ModuliTangent<S>, eps: S, scheme: DerivativeScheme) -> Self {
        let disp = graph_displacement(&self.lp, &v.psi1, scheme);
        let kf = lit::<S>(self.level as f64);
        let verts: Vec<Vector3<S>> = (0..self.len())
            .map(|i| {
                let mut x = self.lp.vertex(i) + disp[i] * (eps / kf);
                if self.lp.model.is_sphere() {
                    x = x.normalize();
                }
                x
            })
            .collect();
        let lp = LagrangianLoop::new(self.lp.model.clone(), verts, self.lp.winding)
            .expect("perturbed loop stays embedded");
        let dens: Vec<S> = (0..self.len())
            .map(|i| {
                let s = S::one() + eps * v.psi2[i];
                self.weight.density(i) * s * s
            })
            .collect();
        let weight = HalfWeight::from_density(&dens, self.volume()).expect("positive density");
        ModuliPoint { lp, weight, level: self.level, tau: self.tau }
    }
}

/// A tangent vector at a moduli point: two vertex profiles with weighted
/// zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuliTangent<S: Real> {
    pub psi1: Vec<S>,
    pub psi2: Vec<S>,
}

impl<S: Real> ModuliTangent<S> {
    /// Validate the zero-mean invariants against a base point.
    pub fn new(pt: &ModuliPoint<S>, psi1: Vec<S>, psi2: Vec<S>) -> Result<Self> {
        if psi1.len() != pt.len() || psi2.len() != pt.len() {
            return Err(Error::DimensionMismatch(psi1.len(), pt.len()));
        }
        let scale = psi1
            .iter()
            .chain(psi2.iter())
            .map(|v| v.abs())
            .fold(S::zero(), |a, b| a.max(b))
            .max(S::one());
        let m1 = loop_integral(&psi1, &pt.weight).abs();
        let m2 = loop_integral(&psi2, &pt.weight).abs();
        if m1 > lit::<S>(1e-10) * scale * pt.volume()
            || m2 > lit::<S>(1e-10) * scale * pt.volume()
        {
            return Err(Error::InvalidTangent((m1 + m2).to_f64().unwrap_or(f64::NAN)));
        }
        Ok(ModuliTangent { psi1, psi2 })
    }

    /// Center arbitrary profiles to satisfy the zero-mean invariants.
    pub fn centered(pt: &ModuliPoint<S>, psi1: Vec<S>, psi2: Vec<S>) -> Self {
        let c1 = pt.weighted_mean(&psi1);
        let c2 = pt.weighted_mean(&psi2);
        ModuliTangent {
            psi1: psi1.into_iter().map(|v| v - c1).collect(),
            psi2: psi2.into_iter().map(|v| v - c2).collect(),
        }
    }

    pub fn zero(n: usize) -> Self {
        ModuliTangent { psi1: vec![S::zero(); n], psi2: vec![S::zero(); n] }
    }

    /// The complex structure: `I (psi1, psi2) = (-psi2, psi1)`.
    pub fn rotated(&self) -> Self {
        ModuliTangent {
            psi1: self.psi2.iter().map(|v| -*v).collect(),
            psi2: self.psi1.clone(),
        }
    }

    pub fn norm_inf(&self) -> S {
        self.psi1
            .iter()
            .chain(self.psi2.iter())
            .map(|v| v.abs())
            .fold(S::zero(), |a, b| a.max(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        ModuliTangent {
            psi1: self.psi1.iter().zip(&other.psi1).map(|(a, b)| *a - *b).collect(),
            psi2: self.psi2.iter().zip(&other.psi2).map(|(a, b)| *a - *b).collect(),
        }
    }

    pub fn scaled(&self, a: S) -> Self {
        ModuliTangent {
            psi1: self.psi1.iter().map(|v| *v * a).collect(),
            psi2: self.psi2.iter().map(|v| *v * a).collect(),
        }
    }
}

/// The Kähler pairings of two tangents.
#[derive(Debug, Clone)]
pub struct KahlerEval<S: Real> {
    pub omega: S,
    pub metric: S,
    pub rotated: ModuliTangent<S>,
}

/// Symplectic form, metric and complex structure at a point.
pub fn kahler_eval<S: Real>(
    pt: &ModuliPoint<S>,
    v: &ModuliTangent<S>,
    w: &ModuliTangent<S>,
) -> Result<KahlerEval<S>> {
    // re-validate the zero-mean invariants
    let v = ModuliTangent::new(pt, v.psi1.clone(), v.psi2.clone())?;
    let w = ModuliTangent::new(pt, w.psi1.clone(), w.psi2.clone())?;
    let n = pt.len();
    let nf = S::from_usize_(n);
    let mut omega = S::zero();
    let mut metric = S::zero();
    for i in 0..n {
        let d = pt.weight.density(i);
        omega += (v.psi1[i] * w.psi2[i] - v.psi2[i] * w.psi1[i]) * d;
        metric += (v.psi1[i] * w.psi1[i] + v.psi2[i] * w.psi2[i]) * d;
    }
    Ok(KahlerEval { omega: omega / nf, metric: metric / nf, rotated: v.rotated() })
}

/// Induced function `F_f(S, theta) = tau int f|_S theta^2`.
pub fn induced_function<S: Real>(f: &dyn ScalarField<S>, pt: &ModuliPoint<S>) -> S {
    pt.tau * loop_integral(&pt.restrict(f), &pt.weight)
}

/// Tangential component profile `w_s = (X_f . tangent) / (k speed)` of the
/// level-scaled Hamiltonian field along the loop.
fn tangential_profile<S: Real>(f: &dyn ScalarField<S>, pt: &ModuliPoint<S>) -> Vec<S> {
    let kf = lit::<S>(pt.level as f64);
    (0..pt.len())
        .map(|i| {
            let x = pt.lp.vertex(i);
            let xf = hamiltonian_field_canonical(&pt.lp.model, f, &x);
            xf.dot(&pt.lp.unit_tangent(i)) / (kf * pt.lp.speed(i))
        })
        .collect()
}

/// The dynamically correspondent tangent of an observable:
/// `psi1 = f|_S - mean`, `psi2 = (1/2) D(w_s theta^2) / theta^2`.
pub fn dynamical_field<S: Real>(
    f: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    scheme: DerivativeScheme,
) -> ModuliTangent<S> {
    let n = pt.len();
    let values = pt.restrict(f);
    let mean = pt.weighted_mean(&values);
    let psi1 = values.into_iter().map(|v| v - mean).collect();
    let ws = tangential_profile(f, pt);
    let flux: Vec<S> = (0..n).map(|i| ws[i] * pt.weight.density(i)).collect();
    let dflux = scheme.apply(&flux);
    let psi2 = (0..n)
        .map(|i| dflux[i] / (lit::<S>(2.0) * pt.weight.density(i)))
        .collect();
    ModuliTangent { psi1, psi2 }
}

/// Basis of the discretized tangent space: per block, the `n - 1`
/// zero-weighted-mean combinations `e_a - (theta_a^2 / theta_0^2) e_0`.
fn basis_profiles<S: Real>(pt: &ModuliPoint<S>) -> Vec<Vec<S>> {
    let n = pt.len();
    let d0 = pt.weight.density(0);
    (1..n)
        .map(|a| {
            let mut v = vec![S::zero(); n];
            v[a] = S::one();
            v[0] = -pt.weight.density(a) / d0;
            v
        })
        .collect()
}

/// The Hamiltonian field of `F_f` by the linear solve `Omega(X, v) = dF_f(v)`
/// over the discretized tangent space.
///
/// `dF_f` is assembled from the analytic differential: the weight part is
/// `2 tau int f alpha_2 theta^2` and the loop part pairs the gradient of
/// `f` with the displacement realization of `alpha_1`. By the central
/// identity the result must equal `2 tau` times [`dynamical_field`].
pub fn hamiltonian_field<S: Real>(
    f: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    scheme: DerivativeScheme,
) -> Result<ModuliTangent<S>> {
    let n = pt.len();
    let nf = S::from_usize_(n);
    let basis = basis_profiles(pt);
    let dim = 2 * (n - 1);

    // Rows are the equations Omega(X, B_r) = dF(B_r); with
    // M[a][b] = int u_a u_b theta^2 ds the row for a psi1-type basis
    // vector reads -M c2 and the row for a psi2-type one reads +M c1.
    let mut amat = DMatrix::<S>::zeros(dim, dim);
    for (a, ua) in basis.iter().enumerate() {
        for (b, ub) in basis.iter().enumerate() {
            let mut m = S::zero();
            // u_a is supported on {0, a+1}, u_b on {0, b+1}
            m += ua[0] * ub[0] * pt.weight.density(0);
            if a == b {
                m += ua[a + 1] * ub[b + 1] * pt.weight.density(a + 1);
            }
            let m = m / nf;
            amat[(a, n - 1 + b)] = -m;
            amat[(n - 1 + b, a)] = m;
        }
    }

    // rhs: weight block 2 tau int f u_b theta^2; loop block through the
    // adjoint of the displacement realization
    let values = pt.restrict(f);
    let kf = lit::<S>(pt.level as f64);
    let inv_w = if pt.lp.model.is_sphere() {
        lit::<S>(4.0) * S::pi()
    } else {
        S::one()
    };
    // g_i = tau (grad f . Rot90(tangent)) inv_w theta_i^2 / (speed_i k N)
    let gvec: Vec<S> = (0..n)
        .map(|i| {
            let x = pt.lp.vertex(i);
            let grad = crate::phase::gradient_or_fd(f, &pt.lp.model, &x);
            let rot = crate::bohr_sommerfeld::rot90(&pt.lp.model, &x, &pt.lp.unit_tangent(i));
            pt.tau * grad.dot(&rot) * inv_w * pt.weight.density(i)
                / (pt.lp.speed(i) * kf * nf)
        })
        .collect();
    // rhs over the alpha1 block: sum_i (D u)_i g_i = -sum_i u_i (D g)_i
    let dg = scheme.apply(&gvec);
    let mut rhs = DVector::<S>::zeros(dim);
    for (a, ua) in basis.iter().enumerate() {
        let mut loop_term = S::zero();
        loop_term -= ua[0] * dg[0] + ua[a + 1] * dg[a + 1];
        rhs[a] = loop_term;
        let mut weight_term = S::zero();
        weight_term += ua[0] * values[0] * pt.weight.density(0);
        weight_term += ua[a + 1] * values[a + 1] * pt.weight.density(a + 1);
        rhs[n - 1 + a] = lit::<S>(2.0) * pt.tau * weight_term / nf;
    }

    let lu = amat.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("discretized symplectic form is singular".into()))?;
    let mut psi1 = vec![S::zero(); n];
    let mut psi2 = vec![S::zero(); n];
    for (a, ua) in basis.iter().enumerate() {
        psi1[0] += sol[a] * ua[0];
        psi1[a + 1] += sol[a] * ua[a + 1];
        psi2[0] += sol[n - 1 + a] * ua[0];
        psi2[a + 1] += sol[n - 1 + a] * ua[a + 1];
    }
    Ok(ModuliTangent { psi1, psi2 })
}

/// Differential of `F_f` along a realized tangent direction, by central
/// finite differences of [`induced_function`] (the oracle for the solve).
pub fn induced_function_derivative<S: Real>(
    f: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    v: &ModuliTangent<S>,
    eps: S,
    scheme: DerivativeScheme,
) -> S {
    let plus = induced_function(f, &pt.perturbed(v, eps, scheme));
    let minus = induced_function(f, &pt.perturbed(v, -eps, scheme));
    (plus - minus) / (lit::<S>(2.0) * eps)
}

/// Both sides of the correspondence bracket identity at a point.
#[derive(Debug, Clone, Copy)]
pub struct BracketCheck<S> {
    /// `Omega(X_{F_f}, X_{F_g})` with both fields from the linear solve.
    pub lhs: S,
    /// `(2 tau / k) F_{{f,g}}` from the induced function of the bracket.
    pub rhs: S,
    /// Sup norm of the pointwise restricted-bracket defect along the loop.
    pub restricted_residual: S,
}

/// Metric used for the tangential projection in the restricted-bracket
/// identity (the result is metric-independent in the limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricChoice<S> {
    /// Round/euclidean metric of the canonical coordinates.
    Canonical,
    /// Anisotropic scaling of the ambient coordinates.
    Anisotropic(S, S, S),
}

fn metric_dot<S: Real>(m: &MetricChoice<S>, u: &Vector3<S>, v: &Vector3<S>) -> S {
    match m {
        MetricChoice::Canonical => u.dot(v),
        MetricChoice::Anisotropic(a, b, cc) => {
            *a * u.x * v.x + *b * u.y * v.y + *cc * u.z * v.z
        }
    }
}

/// Pointwise restricted-bracket defect: the full bracket restricted to the
/// loop must equal the antisymmetrized pairing of the restricted
/// differentials with the metric-projected tangential fields.
pub fn restricted_bracket_residual<S: Real>(
    f: &dyn ScalarField<S>,
    g: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    metric: MetricChoice<S>,
    scheme: DerivativeScheme,
) -> S {
    let n = pt.len();
    let fv = pt.restrict(f);
    let gv = pt.restrict(g);
    let df = scheme.apply(&fv);
    let dg = scheme.apply(&gv);
    let mut worst = S::zero();
    for i in 0..n {
        let x = pt.lp.vertex(i);
        let tau_hat = pt.lp.unit_tangent(i);
        let speed = pt.lp.speed(i);
        let xf = hamiltonian_field_canonical(&pt.lp.model, f, &x);
        let xg = hamiltonian_field_canonical(&pt.lp.model, g, &x);
        let proj = |xfield: &Vector3<S>| -> S {
            metric_dot(&metric, xfield, &tau_hat) / metric_dot(&metric, &tau_hat, &tau_hat)
        };
        let lhs = crate::phase::poisson_bracket_canonical(&pt.lp.model, f, g, &x);
        let rhs = df[i] / speed * proj(&xg) - dg[i] / speed * proj(&xf);
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// The bracket identity `{F_f, F_g}_Omega = (2 tau / k) F_{{f,g}}` with the
/// left side assembled from two linear solves.
///
/// The moduli-space Poisson bracket pairs the solved fields in the order
/// `Omega(X_{F_g}, X_{F_f})`; with the base convention `{f,g} = omega(X_f,
/// X_g)` fixed by the torus oracle this is the orientation for which the
/// correspondence identity carries a plus sign.
pub fn bracket_check<S: Real>(
    f: &dyn ScalarField<S>,
    g: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    scheme: DerivativeScheme,
) -> Result<BracketCheck<S>> {
    let xf = hamiltonian_field(f, pt, scheme)?;
    let xg = hamiltonian_field(g, pt, scheme)?;
    let lhs = kahler_eval(pt, &xg, &xf)?.omega;
    let br = PointwiseBracket { f, g };
    let rhs = lit::<S>(2.0) * pt.tau * induced_function(&br, pt) / lit::<S>(pt.level as f64);
    let restricted =
        restricted_bracket_residual(f, g, pt, MetricChoice::Canonical, scheme);
    Ok(BracketCheck { lhs, rhs, restricted_residual: restricted })
}

struct PointwiseBracket<'a, S: Real> {
    f: &'a dyn ScalarField<S>,
    g: &'a dyn ScalarField<S>,
}

impl<S: Real> ScalarField<S> for PointwiseBracket<'_, S> {
    fn eval(&self, model: &PhaseModel<S>, x: &Vector3<S>) -> S {
        crate::phase::poisson_bracket_canonical(model, self.f, self.g, x)
    }
}

/// `var(f|_S) + sup |Lie_{W_f} theta^2 / theta^2|`: zero exactly at the
/// critical points of `F_f`.
pub fn critical_residual<S: Real>(
    f: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    scheme: DerivativeScheme,
) -> S {
    let values = pt.restrict(f);
    let mean = pt.weighted_mean(&values);
    let var = values
        .iter()
        .map(|v| (*v - mean) * (*v - mean))
        .fold(S::zero(), |a, b| a.max(b));
    let dyn_field = dynamical_field(f, pt, scheme);
    let lie = dyn_field
        .psi2
        .iter()
        .map(|v| (lit::<S>(2.0) * *v).abs())
        .fold(S::zero(), |a, b| a.max(b));
    var + lie
}

/// Transport a moduli point by the Hamiltonian flow of `f`: the loop flows,
/// the weight coefficients ride along materially (mass is conserved
/// exactly; holonomy and `F_f` drift only by integrator error).
pub fn isodrastic_flow<S: Real>(
    f: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    t: S,
    steps: usize,
    integrator: Integrator,
) -> Result<ModuliPoint<S>> {
    let lp = pt.lp.transported(f, t, steps, integrator)?;
    Ok(ModuliPoint::unchecked(lp, pt.weight.clone(), pt.level, pt.tau))
}

/// Bracket values at level `k` and level 1 for the same geometric point;
/// their ratio realizes the level-rescaling identity `1/k`.
///
/// The point must be Bohr-Sommerfeld at level 1 (then it is at every
/// level).
pub fn level_rescale<S: Real>(
    f: &dyn ScalarField<S>,
    g: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    k: u32,
    scheme: DerivativeScheme,
) -> Result<(S, S)> {
    let h1 = holonomy_class_tol(&pt.lp, 1, lit(TOL_HOL))?;
    if !h1.is_bs {
        return Err(Error::Level { level: 1, residual: h1.defect.to_f64().unwrap_or(f64::NAN) });
    }
    let base = ModuliPoint::unchecked(pt.lp.clone(), pt.weight.clone(), 1, pt.tau);
    let lifted = ModuliPoint::unchecked(pt.lp.clone(), pt.weight.clone(), k, pt.tau);
    let bracket_1 = bracket_check(f, g, &base, scheme)?.lhs;
    let bracket_k = bracket_check(f, g, &lifted, scheme)?.lhs;
    Ok((bracket_k, bracket_1))
}

// ---------------------------------------------------------------------------
// Surjectivity witness
// ---------------------------------------------------------------------------

/// Observable supported near a loop realizing a prescribed tangent under
/// the dynamical correspondence: `f = psi1(s) + n y(s)` in the symplectic
/// tubular coordinates `(s, n)` of the loop, cut off by a smooth bump in
/// `n`.
#[derive(Debug, Clone)]
pub struct LoopGraphField<S: Real> {
    verts: Vec<Vector3<S>>,
    tangents: Vec<Vector3<S>>,
    normals: Vec<Vector3<S>>,
    psi1: Vec<S>,
    dpsi1: Vec<S>,
    /// Tangential multiplier `y(s)`; the field's tangential part is
    /// `y speed tangent-hat`.
    y: Vec<S>,
    sphere: bool,
    speeds: Vec<S>,
    width: S,
}

impl<S: Real> LoopGraphField<S> {
    fn locate(&self, x: &Vector3<S>) -> (usize, S) {
        let mut best = 0usize;
        let mut best_d = S::max_value().unwrap_or_else(S::one);
        for (i, v) in self.verts.iter().enumerate() {
            let d = (x - v).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        (best, best_d.sqrt())
    }
}

impl<S: Real> ScalarField<S> for LoopGraphField<S> {
    fn eval(&self, _model: &PhaseModel<S>, x: &Vector3<S>) -> S {
        let (i, dist) = self.locate(x);
        if dist > self.width {
            return S::zero();
        }
        // symplectic normal coordinate: component along the nu direction
        let nu = self.normals[i];
        let n_coord = (x - self.verts[i]).dot(&nu) / nu.norm_squared();
        let u = dist / self.width;
        let cutoff = if u >= S::one() {
            S::zero()
        } else {
            (S::one() - S::one() / (S::one() - u * u)).exp()
        };
        // the bump is flat at the loop itself: n = 0 keeps the exact value
        self.psi1[i] + n_coord * self.y[i] * cutoff
    }

    fn gradient(&self, _model: &PhaseModel<S>, x: &Vector3<S>) -> Option<Vector3<S>> {
        let (i, dist) = self.locate(x);
        if dist > lit::<S>(1e-10) {
            return None; // off-loop queries fall back to finite differences
        }
        // exact vertex path: the Hamiltonian field in tubular coordinates
        // is X = y speed tangent - psi1' nu; invert the model's field map
        let x_des = self.tangents[i] * (self.y[i] * self.speeds[i])
            - self.normals[i] * self.dpsi1[i];
        if self.sphere {
            // X = 4 pi grad x r  =>  grad = (r x X) / 4 pi
            Some(self.verts[i].cross(&x_des) / (lit::<S>(4.0) * S::pi()))
        } else {
            // X = (g_q, -g_p)  =>  grad = (-X_q, X_p)
            Some(Vector3::new(-x_des.y, x_des.x, S::zero()))
        }
    }
}

/// Build an observable whose dynamical field at `pt` is the given target
/// (solvable for every valid tangent).
pub fn surjectivity_witness<S: Real>(
    target: &ModuliTangent<S>,
    pt: &ModuliPoint<S>,
) -> Result<LoopGraphField<S>> {
    let n = pt.len();
    if target.psi1.len() != n {
        return Err(Error::DimensionMismatch(target.psi1.len(), n));
    }
    // w_s theta^2 is the antiderivative of 2 psi2 theta^2 (zero mean makes
    // the primitive periodic); the trigonometric primitive is exact for
    // band-limited data
    let flux_rate: Vec<S> = (0..n)
        .map(|i| lit::<S>(2.0) * target.psi2[i] * pt.weight.density(i))
        .collect();
    let zeta = crate::linalg::spectral_antiderivative(&flux_rate);
    let kf = lit::<S>(pt.level as f64);
    let ws: Vec<S> = (0..n).map(|i| zeta[i] / pt.weight.density(i)).collect();
    // tangential multiplier: X . tangent = k speed w_s
    let y: Vec<S> = (0..n).map(|i| kf * ws[i]).collect();

    let model = &pt.lp.model;
    let inv_w = if model.is_sphere() { lit::<S>(4.0) * S::pi() } else { S::one() };
    let verts: Vec<Vector3<S>> = (0..n).map(|i| pt.lp.vertex(i)).collect();
    let tangents: Vec<Vector3<S>> = (0..n).map(|i| pt.lp.unit_tangent(i)).collect();
    let speeds: Vec<S> = (0..n).map(|i| pt.lp.speed(i)).collect();
    // nu = Rot90(tangent) inv_w / speed: omega(speed tangent, nu) = 1
    let normals: Vec<Vector3<S>> = (0..n)
        .map(|i| {
            crate::bohr_sommerfeld::rot90(model, &verts[i], &tangents[i]) * (inv_w / speeds[i])
        })
        .collect();
    let dpsi1 = DerivativeScheme::Spectral.apply(&target.psi1);
    let min_spacing = (0..n)
        .map(|i| (verts[(i + 1) % n] - verts[i]).norm())
        .fold(S::max_value().unwrap_or_else(S::one), |a, b| a.min(b));
    Ok(LoopGraphField {
        verts,
        tangents,
        normals,
        psi1: target.psi1.clone(),
        dpsi1,
        y,
        sphere: model.is_sphere(),
        speeds,
        width: min_spacing * lit(12.0),
    })
}

/// A quasi-classical object: a number on loops inside a level set, a
/// loop-deformation field otherwise.
#[derive(Debug, Clone)]
pub enum QuasiClassical<S: Real> {
    Number(S),
    /// Coordinate profile of the deformation field `d(f|_S)` (centered
    /// restriction) together with its displacement realization.
    Deformation { profile: Vec<S>, displacement: Vec<Vector3<S>> },
}

/// The quasi-classical limit object of an observable on an unweighted loop.
pub fn quasiclassical_object<S: Real>(
    f: &dyn ScalarField<S>,
    lp: &LagrangianLoop<S>,
    tol: S,
) -> QuasiClassical<S> {
    let n = lp.len();
    let values: Vec<S> = (0..n).map(|i| f.eval(&lp.model, &lp.vertex(i))).collect();
    let mean = values.iter().copied().sum::<S>() / S::from_usize_(n);
    let var = values.iter().map(|v| (*v - mean).abs()).fold(S::zero(), |a, b| a.max(b));
    if var <= tol {
        return QuasiClassical::Number(mean);
    }
    let profile: Vec<S> = values.into_iter().map(|v| v - mean).collect();
    let displacement = graph_displacement(lp, &profile, DerivativeScheme::Centered4);
    QuasiClassical::Deformation { profile, displacement }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bohr_sommerfeld::{adjust_to_bs, holonomy_class, LagrangianFibration};
    use crate::phase::Observable as Obs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere() -> PhaseModel<f64> {
        PhaseModel::sphere(1)
    }

    fn scheme() -> DerivativeScheme {
        DerivativeScheme::Centered4
    }

    /// Random BS moduli point around a latitude band.
    fn random_point(rng: &mut ChaCha8Rng, k: u32, n: usize) -> ModuliPoint<f64> {
        let t0 = rng.random_range(0.3..0.5);
        let z0 = 1.0 - 2.0 * t0;
        let a1 = rng.random_range(-0.08..0.08);
        let b1 = rng.random_range(-0.08..0.08);
        let a2 = rng.random_range(-0.05..0.05);
        let verts: Vec<Vector3<f64>> = (0..n)
            .map(|i| {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let z = z0 + a1 * phi.sin() + b1 * (2.0 * phi).cos() + a2 * (3.0 * phi).sin();
                let rho = (1.0 - z * z).sqrt();
                Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
            })
            .collect();
        let raw = LagrangianLoop::new(sphere(), verts, (0, 0)).unwrap();
        let lp = adjust_to_bs(&raw, k).unwrap();
        let amp1 = rng.random_range(0.1..0.35);
        let ph1 = rng.random_range(0.0..6.28);
        let amp3 = rng.random_range(0.05..0.2);
        let dens: Vec<f64> = (0..n)
            .map(|i| {
                let s = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                1.0 + amp1 * (s + ph1).sin() + amp3 * (3.0 * s).cos()
            })
            .collect();
        let weight = HalfWeight::from_density(&dens, DEFAULT_VOLUME).unwrap();
        ModuliPoint::new(lp, weight, k, DEFAULT_TAU).unwrap()
    }

    fn random_observable(rng: &mut ChaCha8Rng) -> Obs<f64> {
        let lin = |rng: &mut ChaCha8Rng| {
            Obs::Sum(vec![
                Obs::Coord(0).scaled(rng.random_range(-1.0..1.0)),
                Obs::Coord(1).scaled(rng.random_range(-1.0..1.0)),
                Obs::Coord(2).scaled(rng.random_range(-1.0..1.0)),
                Obs::Const(rng.random_range(-0.2..0.2)),
            ])
        };
        let a = lin(rng);
        let b = lin(rng);
        a.clone().plus(a.times(b).scaled(0.5))
    }

    fn random_tangent(rng: &mut ChaCha8Rng, pt: &ModuliPoint<f64>, modes: usize) -> ModuliTangent<f64> {
        let n = pt.len();
        let mut psi1 = vec![0.0; n];
        let mut psi2 = vec![0.0; n];
        for m in 1..=modes {
            let (a1, b1) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (a2, b2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            for i in 0..n {
                let s = 2.0 * std::f64::consts::PI * (m as f64) * i as f64 / n as f64;
                psi1[i] += a1 * s.sin() + b1 * s.cos();
                psi2[i] += a2 * s.sin() + b2 * s.cos();
            }
        }
        ModuliTangent::centered(pt, psi1, psi2)
    }

    #[test]
    fn moduli_point_validates_bs_and_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let pt = random_point(&mut rng, 3, 64);
        assert!(holonomy_class(&pt.lp, 3).unwrap().is_bs);
        assert!((pt.weight.mass() - DEFAULT_VOLUME).abs() < 1e-10);

        // a non-BS loop is rejected
        let lat = LagrangianLoop::latitude(sphere(), 0.37, 64).unwrap();
        let w = HalfWeight::uniform(64, DEFAULT_VOLUME);
        assert!(matches!(
            ModuliPoint::new(lat, w, 3, DEFAULT_TAU),
            Err(Error::Level { .. })
        ));
    }

    #[test]
    fn kahler_triple_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let pt = random_point(&mut rng, 2, 64);
        let v = random_tangent(&mut rng, &pt, 3);
        let w = random_tangent(&mut rng, &pt, 3);

        // antisymmetry and positivity
        let vv = kahler_eval(&pt, &v, &v).unwrap();
        assert!(vv.omega.abs() < 1e-14);
        assert!(vv.metric > 0.0);

        // I^2 = -1 exactly
        let ivv = v.rotated().rotated();
        for i in 0..pt.len() {
            assert!((ivv.psi1[i] + v.psi1[i]).abs() < 1e-15);
            assert!((ivv.psi2[i] + v.psi2[i]).abs() < 1e-15);
        }

        // compatibility G(v, w) = Omega(v, I w)
        let vw = kahler_eval(&pt, &v, &w).unwrap();
        let v_iw = kahler_eval(&pt, &v, &w.rotated()).unwrap();
        assert!((vw.metric - v_iw.omega).abs() < 1e-13);

        // invalid tangent is rejected
        let bad = ModuliTangent {
            psi1: vec![1.0; pt.len()],
            psi2: v.psi2.clone(),
        };
        assert!(matches!(kahler_eval(&pt, &bad, &w), Err(Error::InvalidTangent(_))));
    }

    #[test]
    fn induced_function_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        // constants: F_c = tau r c
        let pt = random_point(&mut rng, 2, 64);
        let c = 1.7;
        let val = induced_function(&Obs::Const(c), &pt);
        assert!((val - DEFAULT_TAU * DEFAULT_VOLUME * c).abs() < 1e-12);

        // height on a latitude: tau r z0 for any weight
        let lat = LagrangianLoop::latitude(sphere(), 0.25, 64).unwrap();
        let dens: Vec<f64> = (0..64)
            .map(|i| 1.0 + 0.4 * (2.0 * std::f64::consts::PI * i as f64 / 64.0).cos())
            .collect();
        let w = HalfWeight::from_density(&dens, DEFAULT_VOLUME).unwrap();
        let pt_lat = ModuliPoint::new(lat, w, 4, DEFAULT_TAU).unwrap();
        let z0 = 1.0 - 2.0 * 0.25;
        let vz = induced_function(&Obs::height(), &pt_lat);
        assert!((vz - DEFAULT_TAU * DEFAULT_VOLUME * z0).abs() < 1e-12);

        // observable supported away from the loop: zero
        let bump = Obs::Bump {
            center: Vector3::new(0.0, 0.0, -1.0),
            rad: 0.3,
            amp: 2.0,
        };
        assert!(induced_function(&bump, &pt_lat).abs() < 1e-15);
    }

    #[test]
    fn dynamical_field_examples() {
        let lat = LagrangianLoop::latitude(sphere(), 1.0 / 3.0, 96).unwrap();
        let fib = LagrangianFibration::SphereCapArea { model: sphere() };
        let w = crate::bohr_sommerfeld::invariant_half_weight(&lat, &fib, DEFAULT_VOLUME).unwrap();
        let pt = ModuliPoint::new(lat, w, 3, DEFAULT_TAU).unwrap();

        // constants map to zero
        let d0 = dynamical_field(&Obs::Const(2.0), &pt, scheme());
        assert!(d0.norm_inf() < 1e-13);

        // the fibration generator is critical at (latitude, invariant weight)
        let dz = dynamical_field(&Obs::height(), &pt, scheme());
        assert!(dz.norm_inf() < 1e-12, "{}", dz.norm_inf());

        // x gives the centered restriction in the first slot
        let dx = dynamical_field(&Obs::Coord(0), &pt, scheme());
        for i in 0..pt.len() {
            let want = pt.lp.vertex(i).x;
            assert!((dx.psi1[i] - want).abs() < 1e-12);
        }
        assert!(dx.norm_inf() > 0.5);

        // both slots satisfy the zero-mean invariant
        assert!(ModuliTangent::new(&pt, dx.psi1.clone(), dx.psi2.clone()).is_ok());
    }

    #[test]
    fn hamiltonian_field_matches_dynamical_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(94);
        for _ in 0..5 {
            let pt = random_point(&mut rng, 2, 96);
            let f = random_observable(&mut rng);
            let solved = hamiltonian_field(&f, &pt, scheme()).unwrap();
            let closed = dynamical_field(&f, &pt, scheme()).scaled(2.0 * pt.tau);
            let scale = closed.norm_inf().max(1e-9);
            let diff = solved.sub(&closed).norm_inf() / scale;
            assert!(diff < 1e-8, "relative defect {diff:.3e}");
        }
    }

    #[test]
    fn fd_gradient_oracle_matches_omega_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(95);
        let pt = random_point(&mut rng, 2, 128);
        let f = random_observable(&mut rng);
        let xf = hamiltonian_field(&f, &pt, scheme()).unwrap();
        for _ in 0..4 {
            let v = random_tangent(&mut rng, &pt, 3);
            let fd = induced_function_derivative(&f, &pt, &v, 1e-5, scheme());
            let pairing = kahler_eval(&pt, &xf, &v).unwrap().omega;
            assert!(
                (fd - pairing).abs() < 1e-6 * (1.0 + pairing.abs()),
                "fd {fd:.6e} vs omega {pairing:.6e}"
            );
        }
    }

    #[test]
    fn bracket_identity_on_latitudes_and_random_points() {
        // symmetric latitude with uniform weight: both sides vanish for (z, x)
        let lat = LagrangianLoop::latitude(sphere(), 0.5, 128).unwrap();
        let w = HalfWeight::uniform(128, DEFAULT_VOLUME);
        let pt = ModuliPoint::new(lat.clone(), w, 2, DEFAULT_TAU).unwrap();
        let bc = bracket_check(&Obs::height(), &Obs::Coord(0), &pt, scheme()).unwrap();
        assert!(bc.lhs.abs() < 1e-10 && bc.rhs.abs() < 1e-12, "{bc:?}");

        // constants: both zero
        let b0 = bracket_check(&Obs::Const(1.0), &Obs::Const(2.0), &pt, scheme()).unwrap();
        assert!(b0.lhs.abs() < 1e-13 && b0.rhs.abs() < 1e-13);

        // perturbed weight: nonzero and equal to tolerance
        let dens: Vec<f64> = (0..128)
            .map(|i| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * i as f64 / 128.0).sin())
            .collect();
        let wp = HalfWeight::from_density(&dens, DEFAULT_VOLUME).unwrap();
        let pt2 = ModuliPoint::new(lat, wp, 2, DEFAULT_TAU).unwrap();
        let bc2 = bracket_check(&Obs::height(), &Obs::Coord(0), &pt2, scheme()).unwrap();
        assert!(bc2.lhs.abs() > 1e-4, "degenerate test case");
        assert!(
            (bc2.lhs - bc2.rhs).abs() < 1e-7 * bc2.rhs.abs().max(1.0),
            "{} vs {}",
            bc2.lhs,
            bc2.rhs
        );
    }

    #[test]
    fn bracket_identity_converges_at_order_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(96);
        let f = random_observable(&mut rng);
        let g = random_observable(&mut rng);
        let defect = |n: usize| -> f64 {
            let mut rng = ChaCha8Rng::seed_from_u64(4242);
            let pt = random_point(&mut rng, 2, n);
            let bc = bracket_check(&f, &g, &pt, scheme()).unwrap();
            (bc.lhs - bc.rhs).abs()
        };
        let d64 = defect(64);
        let d128 = defect(128);
        let d256 = defect(256);
        let o1 = (d64 / d128).log2();
        let o2 = (d128 / d256).log2();
        assert!(
            o1 > 1.8 && o2 > 1.8,
            "orders {o1:.2} {o2:.2} ({d64:.3e} {d128:.3e} {d256:.3e})"
        );
    }

    #[test]
    fn restricted_bracket_identity_is_metric_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let pt = random_point(&mut rng, 2, 256);
        let f = random_observable(&mut rng);
        let g = random_observable(&mut rng);
        let r1 = restricted_bracket_residual(&f, &g, &pt, MetricChoice::Canonical, scheme());
        let r2 = restricted_bracket_residual(
            &f,
            &g,
            &pt,
            MetricChoice::Anisotropic(1.0, 2.3, 0.6),
            scheme(),
        );
        assert!(r1 < 5e-3, "canonical residual {r1:.3e}");
        assert!(r2 < 5e-3, "anisotropic residual {r2:.3e}");
        assert!((r1 - r2).abs() < 5e-3);
        // both shrink under refinement
        let pt2 = random_point(&mut ChaCha8Rng::seed_from_u64(97), 2, 512);
        let r1b = restricted_bracket_residual(&f, &g, &pt2, MetricChoice::Canonical, scheme());
        assert!(r1b < r1);
    }

    #[test]
    fn critical_residual_cases() {
        let fib = LagrangianFibration::SphereCapArea { model: sphere() };
        let lat = LagrangianLoop::latitude(sphere(), 0.25, 96).unwrap();
        let w_inv = crate::bohr_sommerfeld::invariant_half_weight(&lat, &fib, DEFAULT_VOLUME)
            .unwrap();
        let pt = ModuliPoint::new(lat.clone(), w_inv, 4, DEFAULT_TAU).unwrap();
        assert!(critical_residual(&Obs::height(), &pt, scheme()) < 1e-10);

        // non-invariant weight: first term ~ 0, Lie term positive
        let dens: Vec<f64> = (0..96)
            .map(|i| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * i as f64 / 96.0).sin())
            .collect();
        let wbad = HalfWeight::from_density(&dens, DEFAULT_VOLUME).unwrap();
        let pt2 = ModuliPoint::new(lat, wbad, 4, DEFAULT_TAU).unwrap();
        let r2 = critical_residual(&Obs::height(), &pt2, scheme());
        assert!(r2 > 1e-2, "{r2:.3e}");

        // tilted loop off the level set: variance term positive
        let mut rng = ChaCha8Rng::seed_from_u64(98);
        let pt3 = random_point(&mut rng, 4, 96);
        let r3 = critical_residual(&Obs::height(), &pt3, scheme());
        assert!(r3 > 1e-3);
    }

    #[test]
    fn isodrastic_flow_conserves_everything_it_should() {
        let lat = LagrangianLoop::latitude(sphere(), 0.25, 128).unwrap();
        let fib = LagrangianFibration::SphereCapArea { model: sphere() };
        let w = crate::bohr_sommerfeld::invariant_half_weight(&lat, &fib, DEFAULT_VOLUME)
            .unwrap();
        let pt = ModuliPoint::new(lat, w, 4, DEFAULT_TAU).unwrap();
        let f = Obs::Coord(0);
        let h0 = holonomy_class(&pt.lp, 4).unwrap().coordinate;
        let f0 = induced_function(&f, &pt);

        // a full period of the x-rotation (speed 4 pi) maps the loop to
        // itself: every drift is pure integrator error
        let moved = isodrastic_flow(&f, &pt, 0.5, 1000, Integrator::ImplicitMidpoint).unwrap();
        let h1 = holonomy_class(&moved.lp, 4).unwrap().coordinate;
        let f1 = induced_function(&f, &moved);
        let mut dh = (h1 - h0).abs();
        dh = dh.min(1.0 - dh);
        assert!(dh < 1e-9, "holonomy drift {dh:.3e}");
        // partial transport: the coordinate is conserved up to the
        // holonomy-quadrature error of the tilted polyline, O(1/N^2)
        let tilted = isodrastic_flow(&f, &pt, 0.04, 200, Integrator::ImplicitMidpoint).unwrap();
        let ht = holonomy_class(&tilted.lp, 4).unwrap().coordinate;
        let mut dt = (ht - h0).abs();
        dt = dt.min(1.0 - dt);
        assert!(dt < 2e-4, "tilted-transport drift {dt:.3e}");
        assert!((moved.weight.mass() - DEFAULT_VOLUME).abs() < 1e-12);
        assert!((f1 - f0).abs() < 1e-9, "F_f drift {:.3e}", f1 - f0);

        // t = 0 is the identity
        let same = isodrastic_flow(&f, &pt, 0.0, 1, Integrator::ImplicitMidpoint).unwrap();
        assert!((0..pt.len()).all(|i| (same.lp.vertex(i) - pt.lp.vertex(i)).norm() < 1e-15));

        // a critical point is a fixed point as a set: flowing by z rotates
        // the latitude inside itself
        let zmoved = isodrastic_flow(&Obs::height(), &pt, 0.07, 200, Integrator::ImplicitMidpoint)
            .unwrap();
        for i in 0..pt.len() {
            assert!((zmoved.lp.vertex(i).z - pt.lp.vertex(i).z).abs() < 1e-10);
        }
        assert!(critical_residual(&Obs::height(), &zmoved, scheme()) < 1e-9);
    }

    #[test]
    fn flow_transports_f_g_bracket_consistently() {
        // d/dt F_g along the isodrastic flow of f equals
        // {F_g, F_f}_Omega / (2 tau / k): the transport moves with the full
        // Hamiltonian field, k times the level-k correspondence speed
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let k = 2u32;
        let pt = random_point(&mut rng, k, 128);
        let f = random_observable(&mut rng);
        let g = random_observable(&mut rng);
        let eps = 1e-4;
        let plus = isodrastic_flow(&f, &pt, eps, 8, Integrator::ImplicitMidpoint).unwrap();
        let minus = isodrastic_flow(&f, &pt, -eps, 8, Integrator::ImplicitMidpoint).unwrap();
        let dfdt = (induced_function(&g, &plus) - induced_function(&g, &minus)) / (2.0 * eps);
        let bc = bracket_check(&g, &f, &pt, scheme()).unwrap();
        let predicted = k as f64 * bc.lhs / (2.0 * pt.tau);
        assert!(
            (dfdt - predicted).abs() < 1e-6 * (1.0 + predicted.abs()),
            "d/dt {dfdt:.6e} vs bracket {predicted:.6e}"
        );
    }

    #[test]
    fn level_rescale_ratios() {
        // torus fiber BS at level 1
        let torus = PhaseModel::torus(1);
        let lp = LagrangianLoop::torus_momentum_fiber(torus, 0.0, 96).unwrap();
        let dens: Vec<f64> = (0..96)
            .map(|i| 1.0 + 0.45 * (2.0 * std::f64::consts::PI * i as f64 / 96.0).sin())
            .collect();
        let w = HalfWeight::from_density(&dens, DEFAULT_VOLUME).unwrap();
        let pt = ModuliPoint::new(lp, w, 1, DEFAULT_TAU).unwrap();
        let f = Obs::Trig { mp: 1, mq: 0, amp: 1.0, phase: 0.2 };
        let g = Obs::Trig { mp: 0, mq: 1, amp: 1.0, phase: 0.9 };

        let (b1, b1b) = level_rescale(&f, &g, &pt, 1, scheme()).unwrap();
        assert!((b1 / b1b - 1.0).abs() < 1e-12);
        for k in [2u32, 4, 8] {
            let (bk, b1) = level_rescale(&f, &g, &pt, k, scheme()).unwrap();
            assert!(b1.abs() > 1e-6, "degenerate instance");
            let ratio = bk / b1;
            assert!(
                (ratio - 1.0 / k as f64).abs() < 1e-6,
                "k={k}: ratio {ratio} vs {}",
                1.0 / k as f64
            );
        }

        // non-BS-at-level-1 points are refused
        let lp2 = LagrangianLoop::torus_momentum_fiber(PhaseModel::torus(1), 0.5, 96).unwrap();
        let w2 = HalfWeight::uniform(96, DEFAULT_VOLUME);
        let pt2 = ModuliPoint::new(lp2, w2, 2, DEFAULT_TAU).unwrap();
        assert!(matches!(
            level_rescale(&f, &g, &pt2, 2, scheme()),
            Err(Error::Level { level: 1, .. })
        ));
    }

    #[test]
    fn surjectivity_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let pt = random_point(&mut rng, 2, 128);

        // zero target: the zero observable works
        let zero = ModuliTangent::zero(pt.len());
        let f0 = surjectivity_witness(&zero, &pt).unwrap();
        assert!(dynamical_field(&f0, &pt, scheme()).norm_inf() < 1e-12);

        for trial in 0..4 {
            let target = match trial {
                // pure loop deformation
                0 => {
                    let mut t = random_tangent(&mut rng, &pt, 3);
                    t.psi2 = vec![0.0; pt.len()];
                    t
                }
                // pure weight deformation
                1 => {
                    let mut t = random_tangent(&mut rng, &pt, 3);
                    t.psi1 = vec![0.0; pt.len()];
                    t
                }
                _ => random_tangent(&mut rng, &pt, 4),
            };
            let f = surjectivity_witness(&target, &pt).unwrap();
            let achieved = dynamical_field(&f, &pt, scheme());
            let scale = target.norm_inf().max(1e-6);
            let err = achieved.sub(&target).norm_inf() / scale;
            assert!(err < 1e-4, "trial {trial}: round-trip error {err:.3e}");
        }
    }

    #[test]
    fn kernel_triviality_witness() {
        // for bumps with small support there is a transported BS loop
        // meeting the support with a nonzero induced function
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let k = 3u32;
        let fib = LagrangianFibration::SphereCapArea { model: sphere() };
        for _ in 0..10 {
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let bump = Obs::Bump { center: dir, rad: 0.25, amp: 1.0 };
            // start from the BS latitude nearest in polar angle, rotate it
            // about an equatorial axis to pass through the bump center
            let lat = fib.fiber(1.0 / k as f64, 96).unwrap();
            let w = crate::bohr_sommerfeld::invariant_half_weight(&lat, &fib, DEFAULT_VOLUME)
                .unwrap();
            let pt = ModuliPoint::new(lat, w, k, DEFAULT_TAU).unwrap();
            // rotation about axis perpendicular to z and dir
            let z0 = 1.0 - 2.0 / k as f64;
            let polar_target = f64::acos(dir.z);
            let polar_loop = f64::acos(z0);
            let angle = polar_target - polar_loop;
            let axis = Vector3::new(-dir.y, dir.x, 0.0);
            let gen = if axis.norm() > 1e-8 {
                let a = axis.normalize();
                Obs::Sum(vec![
                    Obs::Coord(0).scaled(a.x),
                    Obs::Coord(1).scaled(a.y),
                ])
            } else {
                Obs::Coord(0)
            };
            // rotation flow of n.r has angular speed 4 pi
            let t = angle / (4.0 * std::f64::consts::PI);
            let moved = isodrastic_flow(&gen, &pt, t, 300, Integrator::ImplicitMidpoint).unwrap();
            assert!(holonomy_class(&moved.lp, k).unwrap().defect < 1e-3);
            let val = induced_function(&bump, &moved);
            assert!(val > 1e-6, "bump not met: {val:.3e}");
        }
    }

    #[test]
    fn critical_points_are_locally_isolated() {
        // perturbing a critical point in random tangent directions makes
        // the gradient visibly nonzero (local isolation of Prop-type
        // critical sets)
        let fib = LagrangianFibration::SphereCapArea { model: sphere() };
        let lat = fib.fiber(0.25, 64).unwrap();
        let w = crate::bohr_sommerfeld::invariant_half_weight(&lat, &fib, DEFAULT_VOLUME)
            .unwrap();
        let pt = ModuliPoint::new(lat, w, 4, DEFAULT_TAU).unwrap();
        let f = Obs::height();
        assert!(critical_residual(&f, &pt, scheme()) < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let eps = 1e-3;
        for _ in 0..20 {
            let v = random_tangent(&mut rng, &pt, 3);
            let v = v.scaled(1.0 / v.norm_inf());
            let moved = pt.perturbed(&v, eps, scheme());
            let grad = dynamical_field(&f, &moved, scheme());
            assert!(
                grad.norm_inf() > 1e-5 * eps,
                "no growth along the perturbation"
            );
        }
    }

    #[test]
    fn linearized_critical_set_is_complex_invariant() {
        // the kernel of the linearized gradient at a critical point is
        // closed under the complex structure (here the kernel is trivial,
        // which is closed under I vacuously; assert the lack of spurious
        // null directions under the FD linearization)
        let fib = LagrangianFibration::SphereCapArea { model: sphere() };
        let lat = fib.fiber(1.0 / 3.0, 48).unwrap();
        let w = crate::bohr_sommerfeld::invariant_half_weight(&lat, &fib, DEFAULT_VOLUME)
            .unwrap();
        let pt = ModuliPoint::new(lat, w, 3, DEFAULT_TAU).unwrap();
        let f = Obs::height();
        let n = pt.len();
        let eps = 1e-5;
        // FD linearization of the closed-form gradient along a frame of
        // low-mode tangents, tested for I-equivariance of the null space
        let mut frame = Vec::new();
        for m in 1..=4 {
            for phase in [0.0, std::f64::consts::FRAC_PI_2] {
                let prof: Vec<f64> = (0..n)
                    .map(|i| {
                        (2.0 * std::f64::consts::PI * m as f64 * i as f64 / n as f64 + phase)
                            .sin()
                    })
                    .collect();
                frame.push(ModuliTangent::centered(&pt, prof.clone(), vec![0.0; n]));
                frame.push(ModuliTangent::centered(&pt, vec![0.0; n], prof));
            }
        }
        let lin = |v: &ModuliTangent<f64>| -> f64 {
            let plus = pt.perturbed(v, eps, scheme());
            let g = dynamical_field(&f, &plus, scheme());
            g.norm_inf() / eps
        };
        for v in &frame {
            let gv = lin(v);
            let giv = lin(&v.rotated());
            // I-invariance of the (here trivial) kernel: growth rates for v
            // and I v are simultaneously nonzero
            assert!(gv > 1e-4 && giv > 1e-4, "gv {gv:.3e} giv {giv:.3e}");
        }
    }

    #[test]
    fn quasiclassical_objects_and_bracket_law() {
        let lat = LagrangianLoop::latitude(sphere(), 0.3, 96).unwrap();
        // constant restriction: a number
        match quasiclassical_object(&Obs::height(), &lat, 1e-8) {
            QuasiClassical::Number(v) => assert!((v - 0.4).abs() < 1e-12),
            _ => panic!("expected a number"),
        }
        // x restricts non-constantly: a deformation field
        let obj = quasiclassical_object(&Obs::Coord(0), &lat, 1e-8);
        match &obj {
            QuasiClassical::Deformation { profile, displacement } => {
                assert!(profile.iter().any(|v| v.abs() > 0.3));
                assert!(displacement.iter().any(|d| d.norm() > 1e-3));
            }
            _ => panic!("expected a deformation"),
        }

        // bracket law: the commutator of the x- and y-flows acts on a
        // non-level loop like the flow of -{x, y} (our field convention
        // has [X_f, X_g] = -X_{{f,g}})
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let pt = random_point(&mut rng, 2, 96);
        let lp = pt.lp.clone();
        let fx = Obs::Coord(0);
        let fy = Obs::Coord(1);
        let eps = 2e-3;
        let steps = 60;
        let fwd = |l: &LagrangianLoop<f64>, o: &Obs<f64>, s: f64| {
            l.transported(o, s, steps, Integrator::ImplicitMidpoint).unwrap()
        };
        let commuted = fwd(&fwd(&fwd(&fwd(&lp, &fx, eps), &fy, eps), &fx, -eps), &fy, -eps);
        // compare against the flow of {x, y} for time eps^2
        let bracket = fx.clone().bracket_with(fy.clone());
        let direct = fwd(&lp, &bracket, -eps * eps);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..lp.len() {
            worst = worst.max((commuted.vertex(i) - direct.vertex(i)).norm());
            scale = scale.max((direct.vertex(i) - lp.vertex(i)).norm());
        }
        assert!(scale > 1e-6, "degenerate commutator test");
        assert!(worst < 0.05 * scale, "defect {worst:.3e} vs motion {scale:.3e}");
    }
}
