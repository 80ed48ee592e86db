//! Lagrangian loops, prequantum holonomy, Bohr-Sommerfeld detection, fibers
//! of the model polarizations and invariant half-weights.
//!
//! Loops are closed oriented polylines with a uniform parameter grid
//! `s_i = i/N`; every loop integral is a periodic trapezoid sum. Sphere
//! loops store unit vectors, torus loops store points of the universal
//! cover together with an explicit winding pair, which is what makes the
//! line integral of `alpha = p dq` well defined across the cuts.

use crate::error::{Error, Result};
use crate::linalg::DerivativeScheme;
use crate::phase::{
    flow_canonical, hamiltonian_field_canonical, Integrator, Observable, PhaseKind, PhaseModel,
    ScalarField,
};
use crate::scalar::{cis, lit, C, Real};
use nalgebra::Vector3;

/// Default holonomy tolerance for Bohr-Sommerfeld detection.
pub const TOL_HOL: f64 = 1e-8;

/// A closed oriented Lagrangian loop: an `N`-point polyline in canonical
/// coordinates (every embedded loop of a 2d phase space is Lagrangian).
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianLoop<S: Real> {
    pub model: PhaseModel<S>,
    verts: Vec<Vector3<S>>,
    /// Integer homology data of a torus loop: closure requires
    /// `verts[0] + (winding_p, winding_q)` after the last vertex.
    pub winding: (i32, i32),
}

impl<S: Real> LagrangianLoop<S> {
    /// Build a loop from canonical vertices, validating closure and
    /// embeddedness.
    pub fn new(
        model: PhaseModel<S>,
        verts: Vec<Vector3<S>>,
        winding: (i32, i32),
    ) -> Result<Self> {
        if verts.len() < 16 {
            return Err(Error::Config(format!(
                "loop needs at least 16 vertices, got {}",
                verts.len()
            )));
        }
        let lp = LagrangianLoop { model, verts, winding };
        lp.check_embedded()?;
        Ok(lp)
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub fn vertices(&self) -> &[Vector3<S>] {
        &self.verts
    }

    pub fn vertex(&self, i: usize) -> Vector3<S> {
        self.verts[i % self.verts.len()]
    }

    /// Vertex `i+1` including the winding shift on the closing segment.
    pub fn next_vertex(&self, i: usize) -> Vector3<S> {
        let n = self.verts.len();
        if i % n == n - 1 {
            let mut v = self.verts[0];
            v.x += lit::<S>(self.winding.0 as f64);
            v.y += lit::<S>(self.winding.1 as f64);
            v
        } else {
            self.verts[(i + 1) % n]
        }
    }

    fn prev_vertex(&self, i: usize) -> Vector3<S> {
        let n = self.verts.len();
        let i = i % n;
        if i == 0 {
            let mut v = self.verts[n - 1];
            v.x -= lit::<S>(self.winding.0 as f64);
            v.y -= lit::<S>(self.winding.1 as f64);
            v
        } else {
            self.verts[i - 1]
        }
    }

    /// Latitude of the sphere at enclosed (north) area `t in (0,1)`,
    /// traversed in the `+phi` direction.
    pub fn latitude(model: PhaseModel<S>, t: S, n: usize) -> Result<Self> {
        if !model.is_sphere() {
            return Err(Error::Config("latitude loops need the sphere model".into()));
        }
        if t <= S::zero() || t >= S::one() {
            return Err(Error::DegenerateFiber(t.to_f64().unwrap_or(f64::NAN)));
        }
        let z = S::one() - lit::<S>(2.0) * t;
        let rho = (S::one() - z * z).max(S::zero()).sqrt();
        let verts = (0..n)
            .map(|i| {
                let phi = S::two_pi() * S::from_usize_(i) / S::from_usize_(n);
                Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
            })
            .collect();
        LagrangianLoop::new(model, verts, (0, 0))
    }

    /// Torus fiber `{p = const}` winding once in `q`.
    pub fn torus_momentum_fiber(model: PhaseModel<S>, p: S, n: usize) -> Result<Self> {
        if model.is_sphere() {
            return Err(Error::Config("momentum fibers need a planar model".into()));
        }
        let verts = (0..n)
            .map(|i| Vector3::new(p, S::from_usize_(i) / S::from_usize_(n), S::zero()))
            .collect();
        LagrangianLoop::new(model, verts, (0, 1))
    }

    /// Vertex at signed index offset, with winding shifts across the seam.
    fn offset_vertex(&self, i: usize, delta: i32) -> Vector3<S> {
        let n = self.verts.len() as i32;
        let raw = i as i32 + delta;
        let wraps = raw.div_euclid(n);
        let idx = raw.rem_euclid(n) as usize;
        let mut v = self.verts[idx];
        v.x += lit::<S>((wraps * self.winding.0) as f64);
        v.y += lit::<S>((wraps * self.winding.1) as f64);
        v
    }

    /// Position derivative `dx/ds` at vertex `i` (4th-order stencil over
    /// the uniform parameter grid), projected to the sphere's tangent
    /// plane for the sphere model.
    pub fn velocity(&self, i: usize) -> Vector3<S> {
        let nf = S::from_usize_(self.verts.len());
        let p1 = self.offset_vertex(i, 1) - self.offset_vertex(i, -1);
        let p2 = self.offset_vertex(i, 2) - self.offset_vertex(i, -2);
        let mut d = (p1 * lit::<S>(8.0) - p2) * (nf / lit::<S>(12.0));
        if self.model.is_sphere() {
            let x = self.vertex(i);
            d -= x * d.dot(&x);
        }
        d
    }

    /// Loop parameter speed `|dx/ds|` at vertex `i` (canonical metric).
    pub fn speed(&self, i: usize) -> S {
        self.velocity(i).norm()
    }

    fn seg_length(&self, i: usize) -> S {
        let a = self.vertex(i);
        let b = self.next_vertex(i);
        if self.model.is_sphere() {
            a.cross(&b).norm().atan2(a.dot(&b))
        } else {
            (b - a).norm()
        }
    }

    /// Unit tangent at vertex `i`.
    pub fn unit_tangent(&self, i: usize) -> Vector3<S> {
        self.velocity(i).normalize()
    }

    /// Total length of the loop in the canonical metric of the chart
    /// coordinates (unit-sphere arc length or euclidean length).
    pub fn canonical_length(&self) -> S {
        (0..self.verts.len()).map(|i| self.seg_length(i)).sum()
    }

    fn check_embedded(&self) -> Result<()> {
        // reject near self-intersections: non-adjacent vertices closer than
        // a fraction of the minimal spacing
        let n = self.verts.len();
        let mut min_spacing = S::max_value().unwrap_or_else(S::one);
        for i in 0..n {
            min_spacing = min_spacing.min(self.seg_length(i));
        }
        let tol = min_spacing * lit(0.45);
        for i in 0..n {
            let a = self.vertex(i);
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let d = if self.model.is_sphere() {
                    (self.vertex(j) - a).norm()
                } else {
                    let mut dd = self.vertex(j) - a;
                    if matches!(self.model.kind, PhaseKind::Torus) {
                        let sx = (dd.x + lit(0.5)).floor();
                        let sy = (dd.y + lit(0.5)).floor();
                        dd.x -= sx;
                        dd.y -= sy;
                    }
                    dd.norm()
                };
                if d < tol {
                    return Err(Error::Config(format!(
                        "loop self-intersects near vertices {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Transport every vertex by the Hamiltonian flow of `f`.
    ///
    /// The parameter grid is material: weights attached per-vertex ride
    /// along unchanged.
    pub fn transported(
        &self,
        f: &dyn ScalarField<S>,
        t: S,
        steps: usize,
        integrator: Integrator,
    ) -> Result<Self> {
        let mut verts = Vec::with_capacity(self.verts.len());
        for v in &self.verts {
            verts.push(flow_canonical(&self.model, f, v, t, steps, integrator)?);
        }
        Ok(LagrangianLoop { model: self.model.clone(), verts, winding: self.winding })
    }

    /// Resample to `m` vertices by linear interpolation in the parameter.
    pub fn resampled(&self, m: usize) -> Result<Self> {
        let n = self.verts.len();
        let verts = (0..m)
            .map(|j| {
                let s = S::from_usize_(j) * S::from_usize_(n) / S::from_usize_(m);
                let i = s.floor().to_usize().unwrap_or(0).min(n - 1);
                let frac = s - S::from_usize_(i);
                let a = self.vertex(i);
                let b = self.next_vertex(i);
                let mut v = a + (b - a) * frac;
                if self.model.is_sphere() {
                    v = v.normalize();
                }
                v
            })
            .collect();
        LagrangianLoop::new(self.model.clone(), verts, self.winding)
    }
}

/// A positive half-weight density on a loop, stored per vertex against the
/// parameter measure `ds`; `volume = sum theta_i^2 / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfWeight<S: Real> {
    theta: Vec<S>,
    volume: S,
}

impl<S: Real> HalfWeight<S> {
    /// Normalize a positive density profile to total `theta^2`-mass `r`.
    pub fn from_density(theta_sq_profile: &[S], r: S) -> Result<Self> {
        if r <= S::zero() {
            return Err(Error::Config("half-weight volume must be positive".into()));
        }
        let n = S::from_usize_(theta_sq_profile.len());
        let mut mass = S::zero();
        for &d in theta_sq_profile {
            if d <= S::zero() {
                return Err(Error::InvalidStructure(
                    "half-weight density must be strictly positive".into(),
                ));
            }
            mass += d;
        }
        mass /= n;
        let theta = theta_sq_profile.iter().map(|&d| (d * r / mass).sqrt()).collect();
        let w = HalfWeight { theta, volume: r };
        debug_assert!((w.mass() - r).abs() <= lit::<S>(1e-10) * r);
        Ok(w)
    }

    pub fn uniform(n: usize, r: S) -> Self {
        HalfWeight { theta: vec![r.sqrt(); n], volume: r }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `theta` at vertex `i`.
    pub fn theta(&self, i: usize) -> S {
        self.theta[i % self.theta.len()]
    }

    /// `theta^2` at vertex `i`.
    pub fn density(&self, i: usize) -> S {
        let t = self.theta(i);
        t * t
    }

    pub fn volume(&self) -> S {
        self.volume
    }

    /// Quadrature mass `sum theta^2 ds`.
    pub fn mass(&self) -> S {
        let n = S::from_usize_(self.theta.len());
        self.theta.iter().map(|&t| t * t).sum::<S>() / n
    }

    pub fn densities(&self) -> Vec<S> {
        self.theta.iter().map(|&t| t * t).collect()
    }
}

/// Integral `sum f(x_i) theta_i^2 / N` of a vertex profile against a weight.
pub fn loop_integral<S: Real>(values: &[S], w: &HalfWeight<S>) -> S {
    let n = S::from_usize_(values.len());
    values.iter().enumerate().map(|(i, &v)| v * w.density(i)).sum::<S>() / n
}

/// Choice of the sphere potential branch for loop integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialBranch {
    /// Pick the cap potential whose singular pole is farther from the loop.
    #[default]
    Auto,
    /// Force `alpha_N = (1 - z) dphi / 4pi` (singular at the north pole).
    North,
    /// Force `alpha_S = -(1 + z) dphi / 4pi` (singular at the south pole).
    South,
}

fn sphere_branch<S: Real>(lp: &LagrangianLoop<S>, branch: PotentialBranch) -> Result<bool> {
    let mut min_north = S::max_value().unwrap_or_else(S::one);
    let mut min_south = min_north;
    for v in lp.vertices() {
        min_north = min_north.min(S::one() - v.z);
        min_south = min_south.min(S::one() + v.z);
    }
    let pole_tol = lit::<S>(1e-9);
    let use_north = match branch {
        PotentialBranch::Auto => min_north >= min_south,
        PotentialBranch::North => true,
        PotentialBranch::South => false,
    };
    if (use_north && min_north <= pole_tol) || (!use_north && min_south <= pole_tol) {
        return Err(Error::HolonomyUndefined(
            "loop passes through the singular pole of the chosen potential".into(),
        ));
    }
    Ok(use_north)
}

fn principal<S: Real>(mut dphi: S) -> S {
    while dphi > S::pi() {
        dphi -= S::two_pi();
    }
    while dphi < -S::pi() {
        dphi += S::two_pi();
    }
    dphi
}

/// Per-segment increments of `k integral(alpha)` along the loop, trapezoid
/// quadrature of the model potential. One potential branch (a polar-cap
/// potential away from the loop on the sphere, `p dq` on the cover of the
/// torus) is used for all segments.
pub fn action_increments<S: Real>(lp: &LagrangianLoop<S>, k: u32) -> Result<Vec<S>> {
    action_increments_branch(lp, k, PotentialBranch::Auto)
}

/// As [`action_increments`], with an explicit sphere potential branch.
pub fn action_increments_branch<S: Real>(
    lp: &LagrangianLoop<S>,
    k: u32,
    branch: PotentialBranch,
) -> Result<Vec<S>> {
    let n = lp.len();
    let kf = lit::<S>(k as f64);
    match lp.model.kind {
        PhaseKind::Sphere => {
            let use_north = sphere_branch(lp, branch)?;
            let fourpi = lit::<S>(4.0) * S::pi();
            let coeff = |z: S| -> S {
                if use_north {
                    (S::one() - z) / fourpi
                } else {
                    -(S::one() + z) / fourpi
                }
            };
            Ok((0..n)
                .map(|i| {
                    let a = lp.vertex(i);
                    let b = lp.next_vertex(i);
                    let dphi = principal(b.y.atan2(b.x) - a.y.atan2(a.x));
                    kf * (coeff(a.z) + coeff(b.z)) * lit::<S>(0.5) * dphi
                })
                .collect())
        }
        _ => Ok((0..n)
            .map(|i| {
                let a = lp.vertex(i);
                let b = lp.next_vertex(i);
                kf * (a.x + b.x) * lit::<S>(0.5) * (b.y - a.y)
            })
            .collect()),
    }
}

/// Raw action integral `k closed-integral(alpha)` around the loop.
pub fn action_integral<S: Real>(lp: &LagrangianLoop<S>, k: u32) -> Result<S> {
    Ok(action_increments(lp, k)?.into_iter().sum())
}

/// As [`action_integral`], with an explicit sphere potential branch.
pub fn action_integral_branch<S: Real>(
    lp: &LagrangianLoop<S>,
    k: u32,
    branch: PotentialBranch,
) -> Result<S> {
    Ok(action_increments_branch(lp, k, branch)?.into_iter().sum())
}

/// Holonomy data of the level-`k` prequantum connection around a loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolonomyClass<S> {
    /// `exp(2 pi i k closed-integral(alpha))`.
    pub phase: C<S>,
    /// `k closed-integral(alpha) mod 1`, in `[0, 1)`.
    pub coordinate: S,
    /// Distance of the coordinate to the nearest integer.
    pub defect: S,
    pub is_bs: bool,
}

/// Holonomy class map of a loop at level `k` (default tolerance).
pub fn holonomy_class<S: Real>(lp: &LagrangianLoop<S>, k: u32) -> Result<HolonomyClass<S>> {
    holonomy_class_tol(lp, k, lit(TOL_HOL))
}

pub fn holonomy_class_tol<S: Real>(
    lp: &LagrangianLoop<S>,
    k: u32,
    tol: S,
) -> Result<HolonomyClass<S>> {
    let raw = action_integral(lp, k)?;
    let coordinate = raw - raw.floor();
    let defect = coordinate.min(S::one() - coordinate);
    Ok(HolonomyClass {
        phase: cis(S::two_pi() * raw),
        coordinate,
        defect,
        is_bs: defect <= tol,
    })
}

/// The model real polarizations with a 1-d base.
#[derive(Debug, Clone, PartialEq)]
pub enum LagrangianFibration<S: Real> {
    /// Sphere fibration by enclosed north-cap area `t = (1 - z)/2`,
    /// regular on `t in (0, 1)`; the poles are the degenerate fibers.
    SphereCapArea { model: PhaseModel<S> },
    /// Torus fibration by the momentum coordinate, `p in [0, 1)` cyclic.
    TorusMomentum { model: PhaseModel<S> },
}

impl<S: Real> LagrangianFibration<S> {
    pub fn model(&self) -> &PhaseModel<S> {
        match self {
            LagrangianFibration::SphereCapArea { model } => model,
            LagrangianFibration::TorusMomentum { model } => model,
        }
    }

    /// The action observable generating the fibration.
    pub fn action_observable(&self) -> Observable<S> {
        match self {
            // t = (1 - z)/2
            LagrangianFibration::SphereCapArea { .. } => Observable::Sum(vec![
                Observable::Const(lit(0.5)),
                Observable::Scale(lit(-0.5), Box::new(Observable::Coord(2))),
            ]),
            LagrangianFibration::TorusMomentum { .. } => Observable::Coord(0),
        }
    }

    /// Base interval of regular values.
    pub fn base_interval(&self) -> (S, S) {
        (S::zero(), S::one())
    }

    /// Whether the base is a circle (no boundary fibers).
    pub fn cyclic(&self) -> bool {
        matches!(self, LagrangianFibration::TorusMomentum { .. })
    }

    /// The fiber loop over base value `t`.
    pub fn fiber(&self, t: S, n: usize) -> Result<LagrangianLoop<S>> {
        match self {
            LagrangianFibration::SphereCapArea { model } => {
                LagrangianLoop::latitude(model.clone(), t, n)
            }
            LagrangianFibration::TorusMomentum { model } => {
                LagrangianLoop::torus_momentum_fiber(model.clone(), t, n)
            }
        }
    }

    fn fiber_action(&self, t: S, k: u32, n: usize) -> Result<S> {
        // one fixed potential branch keeps the action continuous in the
        // base parameter, which the root bracketing relies on
        let branch = match self {
            LagrangianFibration::SphereCapArea { .. } => PotentialBranch::North,
            LagrangianFibration::TorusMomentum { .. } => PotentialBranch::Auto,
        };
        action_integral_branch(&self.fiber(t, n)?, k, branch)
    }

    /// Degenerate fibers of the polarization, reported separately from the
    /// smooth Bohr-Sommerfeld census.
    pub fn degenerate_base_points(&self) -> Vec<S> {
        match self {
            LagrangianFibration::SphereCapArea { .. } => vec![S::zero(), S::one()],
            LagrangianFibration::TorusMomentum { .. } => vec![],
        }
    }
}

/// All base values in the regular interior whose fiber is Bohr-Sommerfeld
/// at level `k`, sorted ascending. Root-finding by bisection on the
/// monotone action coordinate.
pub fn bs_fibers<S: Real>(fib: &LagrangianFibration<S>, k: u32) -> Result<Vec<S>> {
    assert!(k >= 1);
    let n = 64usize; // fiber resolution used during the scan
    let (lo, hi) = fib.base_interval();
    let margin = lit::<S>(1e-7);
    let scan = 64 * k as usize;
    let mut roots: Vec<S> = Vec::new();

    if fib.cyclic() {
        // the base is a circle: t = 0 is a regular fiber, test it directly
        let a0 = fib.fiber_action(lo, k, n)?;
        if (a0 - a0.round()).abs() <= lit(TOL_HOL) {
            roots.push(lo);
        }
    }

    let mut prev_t = lo + margin;
    let mut prev_a = fib.fiber_action(prev_t, k, n)?;
    for j in 1..=scan {
        let t = lo
            + margin
            + (hi - lo - lit::<S>(2.0) * margin) * S::from_usize_(j) / S::from_usize_(scan);
        let a = fib.fiber_action(t, k, n)?;
        let (amin, amax) = if prev_a <= a { (prev_a, a) } else { (a, prev_a) };
        let mut m = amin.ceil();
        while m <= amax {
            let mut ta = prev_t;
            let mut tb = t;
            let mut fa = prev_a - m;
            for _ in 0..200 {
                let tm = (ta + tb) * lit(0.5);
                let fm = fib.fiber_action(tm, k, n)? - m;
                if (fm * fa) <= S::zero() {
                    tb = tm;
                } else {
                    ta = tm;
                    fa = fm;
                }
                if (tb - ta).abs() < lit(1e-14) {
                    break;
                }
            }
            let root = (ta + tb) * lit(0.5);
            if roots.iter().all(|r| (*r - root).abs() > lit(1e-9)) {
                roots.push(root);
            }
            m += S::one();
        }
        prev_t = t;
        prev_a = a;
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(roots)
}

/// The unique (up to sign) flow-invariant half-weight of total mass `r` on
/// a regular fiber: `theta^2` proportional to the time-parameter measure of
/// the Hamiltonian flow of the action observable.
pub fn invariant_half_weight<S: Real>(
    lp: &LagrangianLoop<S>,
    fib: &LagrangianFibration<S>,
    r: S,
) -> Result<HalfWeight<S>> {
    let f = fib.action_observable();
    let model = fib.model();
    let n = lp.len();
    // regular fiber: the action is constant along the loop and its flow
    // has tangential speed bounded below
    let values: Vec<S> = (0..n).map(|i| f.eval(model, &lp.vertex(i))).collect();
    let mean = values.iter().copied().sum::<S>() / S::from_usize_(n);
    let spread = values.iter().map(|&v| (v - mean).abs()).fold(S::zero(), |a, b| a.max(b));
    if spread > lit(1e-8) {
        return Err(Error::DegenerateFiber(mean.to_f64().unwrap_or(f64::NAN)));
    }
    let mut density = Vec::with_capacity(n);
    for i in 0..n {
        let x = lp.vertex(i);
        let xf = hamiltonian_field_canonical(model, &f, &x);
        let speed = xf.dot(&lp.unit_tangent(i)).abs();
        if speed <= lit::<S>(1e-10) {
            return Err(Error::DegenerateFiber(x.z.to_f64().unwrap_or(f64::NAN)));
        }
        density.push(lp.speed(i) / speed);
    }
    HalfWeight::from_density(&density, r)
}

/// Relative sup-norm of the flow-invariance defect of a weight on a fiber:
/// the density per unit flow time must be constant along the loop.
pub fn invariance_residual<S: Real>(
    lp: &LagrangianLoop<S>,
    w: &HalfWeight<S>,
    fib: &LagrangianFibration<S>,
) -> S {
    let f = fib.action_observable();
    let model = fib.model();
    let n = lp.len();
    let per_time: Vec<S> = (0..n)
        .map(|i| {
            let xf = hamiltonian_field_canonical(model, &f, &lp.vertex(i));
            let speed = xf.dot(&lp.unit_tangent(i)).abs();
            w.density(i) * speed / lp.speed(i)
        })
        .collect();
    let mean = per_time.iter().copied().sum::<S>() / S::from_usize_(n);
    per_time.iter().map(|&v| (v - mean).abs()).fold(S::zero(), |a, b| a.max(b))
        / mean.abs().max(lit(1e-300))
}

/// 90-degree rotation of a tangent vector in the oriented chart plane.
pub fn rot90<S: Real>(model: &PhaseModel<S>, x: &Vector3<S>, u: &Vector3<S>) -> Vector3<S> {
    if model.is_sphere() {
        x.cross(u)
    } else {
        Vector3::new(-u.y, u.x, S::zero())
    }
}

/// Displacement realization of a loop-deformation profile `psi`: the graph
/// of `d psi` in the symplectic normal direction,
/// `V_i = (D psi)_i / (speed_i w) Rot90(tangent_i)` with `w` the density of
/// `omega` against the chart area (`1/(4 pi)` on the sphere, 1 planar).
///
/// The orientation is calibrated so the moduli-space identities hold with
/// the positive sign; see the moduli module.
pub fn graph_displacement<S: Real>(
    lp: &LagrangianLoop<S>,
    psi: &[S],
    scheme: DerivativeScheme,
) -> Vec<Vector3<S>> {
    let dpsi = scheme.apply(psi);
    let inv_w = if lp.model.is_sphere() { lit::<S>(4.0) * S::pi() } else { S::one() };
    (0..lp.len())
        .map(|i| {
            let x = lp.vertex(i);
            let tau = lp.unit_tangent(i);
            rot90(&lp.model, &x, &tau) * (dpsi[i] * inv_w / lp.speed(i))
        })
        .collect()
}

/// The nearby loop that is the graph of `d psi` over `lp` in normal
/// coordinates. Errors when the displacement exceeds `max_step`.
pub fn darboux_chart<S: Real>(
    lp: &LagrangianLoop<S>,
    psi: &[S],
    max_step: S,
) -> Result<LagrangianLoop<S>> {
    if psi.len() != lp.len() {
        return Err(Error::DimensionMismatch(psi.len(), lp.len()));
    }
    let disp = graph_displacement(lp, psi, DerivativeScheme::Centered4);
    let mut verts = Vec::with_capacity(lp.len());
    for (i, d) in disp.iter().enumerate() {
        if d.norm() > max_step {
            return Err(Error::ChartOverflow(format!(
                "displacement {:.3e} at vertex {i} exceeds {:.3e}",
                d.norm().to_f64().unwrap_or(f64::NAN),
                max_step.to_f64().unwrap_or(f64::NAN)
            )));
        }
        let mut v = lp.vertex(i) + *d;
        if lp.model.is_sphere() {
            v = v.normalize();
        }
        verts.push(v);
    }
    LagrangianLoop::new(lp.model.clone(), verts, lp.winding)
}

/// Deform a loop until it is Bohr-Sommerfeld at level `k`: sphere loops are
/// pulled along meridians, torus loops shifted in `p`; the holonomy
/// coordinate is dialed to the nearest integer by bisection.
pub fn adjust_to_bs<S: Real>(lp: &LagrangianLoop<S>, k: u32) -> Result<LagrangianLoop<S>> {
    // pin one potential branch for the whole dial: the automatic choice can
    // flip between hemispheres mid-bisection, making the action jump by an
    // integer and breaking the bracketing
    let branch = if lp.model.is_sphere() {
        if sphere_branch(lp, PotentialBranch::Auto)? {
            PotentialBranch::North
        } else {
            PotentialBranch::South
        }
    } else {
        PotentialBranch::Auto
    };
    let target = action_integral_branch(lp, k, branch)?.round();
    let deform = |s: S| -> Result<LagrangianLoop<S>> {
        let verts = lp
            .vertices()
            .iter()
            .map(|v| {
                if lp.model.is_sphere() {
                    // polar pull: theta -> theta + s sin(theta)
                    let rho = (v.x * v.x + v.y * v.y).sqrt();
                    let theta = rho.atan2(v.z);
                    let theta2 = theta + s * theta.sin();
                    let scale = if rho > lit(1e-15) { theta2.sin() / rho } else { S::zero() };
                    Vector3::new(v.x * scale, v.y * scale, theta2.cos())
                } else {
                    Vector3::new(v.x + s, v.y, v.z)
                }
            })
            .collect();
        LagrangianLoop::new(lp.model.clone(), verts, lp.winding)
    };
    let act = |s: S| -> Result<S> { action_integral_branch(&deform(s)?, k, branch) };
    let mut a = -lit::<S>(0.45);
    let mut b = lit::<S>(0.45);
    let mut fa = act(a)? - target;
    let fb = act(b)? - target;
    if fa * fb > S::zero() {
        return Err(Error::Solver("holonomy dial does not bracket an integer".into()));
    }
    for _ in 0..200 {
        let m = (a + b) * lit(0.5);
        let fm = act(m)? - target;
        if fm * fa <= S::zero() {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
        if (b - a).abs() < lit(1e-16) {
            break;
        }
    }
    deform((a + b) * lit(0.5))
}

// ---------------------------------------------------------------------------
// CSV serialization: index, chart, coord1, coord2, density
// ---------------------------------------------------------------------------

/// Write a loop (and an optional weight) in the CSV exchange format.
///
/// Sphere loops are written in the cylindrical chart with the azimuth
/// unwrapped along the loop so the winding survives the round trip; torus
/// loops are written in cover coordinates with the winding recorded in the
/// header comment.
pub fn write_loop_csv<S: Real>(
    lp: &LagrangianLoop<S>,
    w: Option<&HalfWeight<S>>,
    out: &mut dyn std::io::Write,
) -> std::io::Result<()> {
    let model_name = if lp.model.is_sphere() { "sphere" } else { "torus" };
    writeln!(
        out,
        "# model={} level={} winding_p={} winding_q={}",
        model_name, lp.model.level, lp.winding.0, lp.winding.1
    )?;
    writeln!(out, "index,chart,coord1,coord2,density")?;
    let mut phi_prev = S::zero();
    let mut phi_acc = S::zero();
    for i in 0..lp.len() {
        let v = lp.vertex(i);
        let (chart, c1, c2) = if lp.model.is_sphere() {
            let phi = v.y.atan2(v.x);
            if i == 0 {
                phi_acc = phi;
            } else {
                phi_acc += principal(phi - phi_prev);
            }
            phi_prev = phi;
            ("cyl", phi_acc, v.z)
        } else {
            ("planar", v.x, v.y)
        };
        let density = w.map(|w| w.density(i)).unwrap_or_else(S::one);
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e}",
            i,
            chart,
            c1.to_f64().unwrap(),
            c2.to_f64().unwrap(),
            density.to_f64().unwrap()
        )?;
    }
    Ok(())
}

/// Read a loop and weight back from the CSV exchange format.
pub fn read_loop_csv<S: Real>(input: &str) -> Result<(LagrangianLoop<S>, HalfWeight<S>)> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty loop file".into()))?;
    let mut model_name = "";
    let mut level = 1u32;
    let mut winding = (0i32, 0i32);
    for tok in header.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = tok.split_once('=') {
            match k {
                "model" => model_name = v,
                "level" => level = v.parse().map_err(|_| Error::Config("bad level".into()))?,
                "winding_p" => {
                    winding.0 = v.parse().map_err(|_| Error::Config("bad winding".into()))?
                }
                "winding_q" => {
                    winding.1 = v.parse().map_err(|_| Error::Config("bad winding".into()))?
                }
                _ => {}
            }
        }
    }
    let model = match model_name {
        "sphere" => PhaseModel::sphere(level),
        "torus" => PhaseModel::torus(level),
        other => return Err(Error::Config(format!("unknown model '{other}'"))),
    };
    let mut verts = Vec::new();
    let mut density = Vec::new();
    for line in lines.skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Config(format!("bad row '{line}'")));
        }
        let c1: f64 = cols[2].parse().map_err(|_| Error::Config("bad coord".into()))?;
        let c2: f64 = cols[3].parse().map_err(|_| Error::Config("bad coord".into()))?;
        let d: f64 = cols[4].parse().map_err(|_| Error::Config("bad density".into()))?;
        let v = if model.is_sphere() {
            let rho = (1.0 - c2 * c2).max(0.0).sqrt();
            Vector3::new(S::lit(rho * c1.cos()), S::lit(rho * c1.sin()), S::lit(c2))
        } else {
            Vector3::new(S::lit(c1), S::lit(c2), S::zero())
        };
        verts.push(v);
        density.push(S::lit(d));
    }
    let lp = LagrangianLoop::new(model, verts, winding)?;
    let mass: S = density.iter().copied().sum::<S>() / S::from_usize_(density.len());
    let w = HalfWeight::from_density(&density, mass)?;
    Ok((lp, w))
}
