//! Classical phase spaces: the unit-area 2-sphere, the unit 2-torus and a
//! Darboux rectangle, with symplectic structure, Hamiltonian calculus,
//! flows and Liouville quadrature.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * `i_{X_f} omega = df` and `{f, g} = omega(X_f, X_g)`, so on the torus
//!   with `omega = dp ^ dq` one gets `{p, q} = 1` and `X_f = (f_q, -f_p)`.
//! * The sphere carries `omega = sigma / (4 pi)` where `sigma` is the round
//!   area form of the unit sphere in `R^3`; the total symplectic area is 1
//!   and `X_f(r) = 4 pi grad(f) x r` in ambient coordinates.
//! * The torus potential is `alpha = p dq` on the fundamental square; the
//!   sphere carries cap potentials `alpha_N = (1 - z) dphi / 4pi` and
//!   `alpha_S = -(1 + z) dphi / 4pi`.
//!
//! Points live in explicit charts; all heavy computations go through the
//! canonical representation (a unit vector in `R^3` for the sphere, an
//! unwrapped `(p, q)` pair for the planar models).

use crate::error::{Error, Result};
use crate::linalg::gauss_legendre;
use crate::scalar::{lit, Real};
use nalgebra::Vector3;

/// Supported phase-space geometries.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseKind<S: Real> {
    /// Round 2-sphere with total symplectic area normalized to 1.
    Sphere,
    /// Unit square with `omega = dp ^ dq` and opposite sides identified.
    Torus,
    /// Open rectangle `(p0, p1) x (q0, q1)` with `omega = dp ^ dq`.
    Darboux { p_range: (S, S), q_range: (S, S) },
}

/// A classical phase space at prequantum level `k` (`omega_k = k omega`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel<S: Real> {
    pub kind: PhaseKind<S>,
    pub level: u32,
    /// Planck parameter; enters only through downstream calibrations
    /// (`tau = k * planck / 2`), never the classical formulas.
    pub planck: S,
}

/// Chart labels of the atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// Sphere chart `(phi, z)`, valid away from the poles.
    Cylindrical,
    /// Orthographic chart `(x, y)` around the north pole.
    NorthCap,
    /// Orthographic chart `(x, y)` around the south pole.
    SouthCap,
    /// Fundamental-domain chart of the torus or the Darboux rectangle.
    Planar,
}

impl Chart {
    pub fn name(&self) -> &'static str {
        match self {
            Chart::Cylindrical => "cyl",
            Chart::NorthCap => "north",
            Chart::SouthCap => "south",
            Chart::Planar => "planar",
        }
    }
}

/// A point of the phase space: chart id plus two chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint<S: Real> {
    pub chart: Chart,
    pub u: S,
    pub v: S,
}

impl<S: Real> PhasePoint<S> {
    pub fn new(chart: Chart, u: S, v: S) -> Self {
        PhasePoint { chart, u, v }
    }
}

/// Flow integrators for `hamiltonian_flow`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Symplectic implicit midpoint rule (default).
    #[default]
    ImplicitMidpoint,
    /// Classical explicit Runge-Kutta 4 fallback.
    Rk4,
}

const CYL_ZMAX: f64 = 0.96;
const CAP_RMAX2: f64 = 0.5;

impl<S: Real> PhaseModel<S> {
    pub fn sphere(level: u32) -> Self {
        PhaseModel { kind: PhaseKind::Sphere, level, planck: S::one() }
    }

    pub fn torus(level: u32) -> Self {
        PhaseModel { kind: PhaseKind::Torus, level, planck: S::one() }
    }

    pub fn darboux(p_range: (S, S), q_range: (S, S), level: u32) -> Self {
        PhaseModel { kind: PhaseKind::Darboux { p_range, q_range }, level, planck: S::one() }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, PhaseKind::Sphere)
    }

    pub fn is_planar(&self) -> bool {
        !self.is_sphere()
    }

    /// Charts belonging to this model's atlas.
    pub fn atlas(&self) -> &'static [Chart] {
        match self.kind {
            PhaseKind::Sphere => &[Chart::Cylindrical, Chart::NorthCap, Chart::SouthCap],
            _ => &[Chart::Planar],
        }
    }

    pub fn chart_contains(&self, chart: Chart, u: S, v: S) -> bool {
        match (&self.kind, chart) {
            (PhaseKind::Sphere, Chart::Cylindrical) => v.abs() <= lit(CYL_ZMAX),
            (PhaseKind::Sphere, Chart::NorthCap | Chart::SouthCap) => {
                u * u + v * v <= lit(CAP_RMAX2)
            }
            (PhaseKind::Torus, Chart::Planar) => true,
            (PhaseKind::Darboux { p_range, q_range }, Chart::Planar) => {
                u >= p_range.0 && u <= p_range.1 && v >= q_range.0 && v <= q_range.1
            }
            _ => false,
        }
    }

    fn check_domain(&self, pt: &PhasePoint<S>) -> Result<()> {
        if self.chart_contains(pt.chart, pt.u, pt.v) {
            Ok(())
        } else {
            Err(Error::Domain {
                chart: pt.chart.name(),
                u: pt.u.to_f64().unwrap_or(f64::NAN),
                v: pt.v.to_f64().unwrap_or(f64::NAN),
            })
        }
    }

    /// Canonical coordinates: unit vector in `R^3` (sphere) or `(p, q, 0)`.
    pub fn to_canonical(&self, pt: &PhasePoint<S>) -> Result<Vector3<S>> {
        self.check_domain(pt)?;
        Ok(match (&self.kind, pt.chart) {
            (PhaseKind::Sphere, Chart::Cylindrical) => {
                let rho = (S::one() - pt.v * pt.v).max(S::zero()).sqrt();
                Vector3::new(rho * pt.u.cos(), rho * pt.u.sin(), pt.v)
            }
            (PhaseKind::Sphere, Chart::NorthCap) => {
                let z = (S::one() - pt.u * pt.u - pt.v * pt.v).max(S::zero()).sqrt();
                Vector3::new(pt.u, pt.v, z)
            }
            (PhaseKind::Sphere, Chart::SouthCap) => {
                let z = (S::one() - pt.u * pt.u - pt.v * pt.v).max(S::zero()).sqrt();
                Vector3::new(pt.u, pt.v, -z)
            }
            _ => Vector3::new(pt.u, pt.v, S::zero()),
        })
    }

    /// Phase point in the preferred chart of the canonical representation.
    ///
    /// Torus points are reduced to the fundamental domain `[0,1)^2`.
    pub fn from_canonical(&self, x: &Vector3<S>) -> PhasePoint<S> {
        match &self.kind {
            PhaseKind::Sphere => {
                let z = x.z.clamp(-S::one(), S::one());
                if z.abs() <= lit(0.8) {
                    PhasePoint::new(Chart::Cylindrical, x.y.atan2(x.x), z)
                } else if z > S::zero() {
                    PhasePoint::new(Chart::NorthCap, x.x, x.y)
                } else {
                    PhasePoint::new(Chart::SouthCap, x.x, x.y)
                }
            }
            PhaseKind::Torus => {
                let wrap = |t: S| t - t.floor();
                PhasePoint::new(Chart::Planar, wrap(x.x), wrap(x.y))
            }
            PhaseKind::Darboux { .. } => PhasePoint::new(Chart::Planar, x.x, x.y),
        }
    }

    /// Coefficient `w` of `omega = w du ^ dv` in the given chart.
    pub fn omega_coeff(&self, chart: Chart, u: S, v: S) -> S {
        let quarter_inv_pi = S::one() / (lit::<S>(4.0) * S::pi());
        match (&self.kind, chart) {
            (PhaseKind::Sphere, Chart::Cylindrical) => quarter_inv_pi,
            (PhaseKind::Sphere, Chart::NorthCap) => {
                let z = (S::one() - u * u - v * v).max(S::lit(1e-14)).sqrt();
                quarter_inv_pi / z
            }
            (PhaseKind::Sphere, Chart::SouthCap) => {
                let z = (S::one() - u * u - v * v).max(S::lit(1e-14)).sqrt();
                -quarter_inv_pi / z
            }
            _ => S::one(),
        }
    }

    /// A local symplectic potential `alpha = a_u du + a_v dv` with
    /// `d alpha = omega` on the chart.
    pub fn potential(&self, chart: Chart, u: S, v: S) -> (S, S) {
        let quarter_inv_pi = S::one() / (lit::<S>(4.0) * S::pi());
        match (&self.kind, chart) {
            // alpha_N = (1 - z) dphi / 4pi in (phi, z)
            (PhaseKind::Sphere, Chart::Cylindrical) => {
                ((S::one() - v) * quarter_inv_pi, S::zero())
            }
            // alpha = (1 - z)/(4 pi r^2) (x dy - y dx), smooth at the pole
            (PhaseKind::Sphere, Chart::NorthCap) => {
                let r2 = u * u + v * v;
                let z = (S::one() - r2).max(S::zero()).sqrt();
                let g = if r2 > lit(1e-12) {
                    (S::one() - z) / r2
                } else {
                    lit::<S>(0.5) + r2 * lit(0.125)
                };
                (-v * g * quarter_inv_pi, u * g * quarter_inv_pi)
            }
            // alpha_S = -(1 + z)/(4 pi r^2) (x dy - y dx) with z < 0, so the
            // coefficient (1 + z)/r^2 shares the smooth branch of the north
            // cap and the sign of the whole form flips.
            (PhaseKind::Sphere, Chart::SouthCap) => {
                let r2 = u * u + v * v;
                let zmag = (S::one() - r2).max(S::zero()).sqrt();
                let g = if r2 > lit(1e-12) {
                    (S::one() - zmag) / r2
                } else {
                    lit::<S>(0.5) + r2 * lit(0.125)
                };
                (v * g * quarter_inv_pi, -u * g * quarter_inv_pi)
            }
            // alpha = p dq
            _ => (S::zero(), u),
        }
    }
}

/// Real-valued field on a phase space, evaluated in canonical coordinates.
///
/// `gradient` returns the ambient gradient (`R^3` for the sphere, `(f_p,
/// f_q, 0)` for planar models) when an exact rule exists; callers fall back
/// to finite differences with step `h_fd` otherwise.
pub trait ScalarField<S: Real> {
    fn eval(&self, model: &PhaseModel<S>, x: &Vector3<S>) -> S;

    fn gradient(&self, _model: &PhaseModel<S>, _x: &Vector3<S>) -> Option<Vector3<S>> {
        None
    }
}

/// Relative finite-difference step for gradient fallbacks.
pub const H_FD: f64 = 1e-5;

/// Gradient with finite-difference fallback (central differences).
///
/// On the sphere the fallback produces the tangential gradient, which is
/// all the symplectic formulas consume.
pub fn gradient_or_fd<S: Real>(
    f: &dyn ScalarField<S>,
    model: &PhaseModel<S>,
    x: &Vector3<S>,
) -> Vector3<S> {
    if let Some(g) = f.gradient(model, x) {
        return g;
    }
    let h = lit::<S>(H_FD);
    if model.is_sphere() {
        let (e1, e2) = tangent_basis(x);
        let dir = |e: &Vector3<S>| {
            let xp = (x + e * h).normalize();
            let xm = (x - e * h).normalize();
            (f.eval(model, &xp) - f.eval(model, &xm)) / (lit::<S>(2.0) * h)
        };
        e1 * dir(&e1) + e2 * dir(&e2)
    } else {
        let ep = Vector3::new(h, S::zero(), S::zero());
        let eq = Vector3::new(S::zero(), h, S::zero());
        let dp = (f.eval(model, &(x + ep)) - f.eval(model, &(x - ep))) / (lit::<S>(2.0) * h);
        let dq = (f.eval(model, &(x + eq)) - f.eval(model, &(x - eq))) / (lit::<S>(2.0) * h);
        Vector3::new(dp, dq, S::zero())
    }
}

/// Orthonormal tangent basis at a unit vector.
pub fn tangent_basis<S: Real>(x: &Vector3<S>) -> (Vector3<S>, Vector3<S>) {
    let pick = if x.x.abs() < lit(0.9) {
        Vector3::new(S::one(), S::zero(), S::zero())
    } else {
        Vector3::new(S::zero(), S::one(), S::zero())
    };
    let e1 = (pick - x * pick.dot(x)).normalize();
    let e2 = x.cross(&e1);
    (e1, e2)
}

/// Classical observables as a small expression tree with exact gradients
/// where the node supports one.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable<S: Real> {
    Const(S),
    /// Canonical coordinate: sphere `0,1,2 -> x,y,z`; planar `0 -> p, 1 -> q`.
    Coord(usize),
    /// `amp * cos(2 pi (mp p + mq q) + phase)` on planar models.
    Trig { mp: i32, mq: i32, amp: S, phase: S },
    Sum(Vec<Observable<S>>),
    Product(Box<Observable<S>>, Box<Observable<S>>),
    Scale(S, Box<Observable<S>>),
    /// Poisson bracket of two observables; evaluation-only node (its own
    /// gradient falls back to finite differences).
    Bracket(Box<Observable<S>>, Box<Observable<S>>),
    /// Smooth bump `amp * exp(1 - 1/(1 - d^2/rad^2))` around a canonical
    /// center, vanishing outside the geodesic/euclidean ball of radius `rad`.
    Bump { center: Vector3<S>, rad: S, amp: S },
}

impl<S: Real> Observable<S> {
    pub fn height() -> Self {
        Observable::Coord(2)
    }

    pub fn scaled(self, a: S) -> Self {
        Observable::Scale(a, Box::new(self))
    }

    pub fn plus(self, other: Observable<S>) -> Self {
        Observable::Sum(vec![self, other])
    }

    pub fn times(self, other: Observable<S>) -> Self {
        Observable::Product(Box::new(self), Box::new(other))
    }

    pub fn bracket_with(self, other: Observable<S>) -> Self {
        Observable::Bracket(Box::new(self), Box::new(other))
    }
}

fn sphere_distance<S: Real>(a: &Vector3<S>, b: &Vector3<S>) -> S {
    a.cross(b).norm().atan2(a.dot(b))
}

impl<S: Real> ScalarField<S> for Observable<S> {
    fn eval(&self, model: &PhaseModel<S>, x: &Vector3<S>) -> S {
        match self {
            Observable::Const(cv) => *cv,
            Observable::Coord(i) => x[*i],
            Observable::Trig { mp, mq, amp, phase } => {
                let th = S::two_pi() * (lit::<S>(*mp as f64) * x.x + lit::<S>(*mq as f64) * x.y)
                    + *phase;
                *amp * th.cos()
            }
            Observable::Sum(terms) => terms.iter().map(|t| t.eval(model, x)).sum(),
            Observable::Product(a, b) => a.eval(model, x) * b.eval(model, x),
            Observable::Scale(a, f) => *a * f.eval(model, x),
            Observable::Bracket(f, g) => poisson_bracket_canonical(model, &**f, &**g, x),
            Observable::Bump { center, rad, amp } => {
                let d = if model.is_sphere() {
                    sphere_distance(x, center)
                } else {
                    (x - center).norm()
                };
                let u2 = (d / *rad) * (d / *rad);
                if u2 >= S::one() {
                    S::zero()
                } else {
                    *amp * (S::one() - S::one() / (S::one() - u2)).exp()
                }
            }
        }
    }

    fn gradient(&self, model: &PhaseModel<S>, x: &Vector3<S>) -> Option<Vector3<S>> {
        match self {
            Observable::Const(_) => Some(Vector3::zeros()),
            Observable::Coord(i) => {
                let mut g = Vector3::zeros();
                g[*i] = S::one();
                Some(g)
            }
            Observable::Trig { mp, mq, amp, phase } => {
                let mpf = lit::<S>(*mp as f64);
                let mqf = lit::<S>(*mq as f64);
                let th = S::two_pi() * (mpf * x.x + mqf * x.y) + *phase;
                let d = -*amp * S::two_pi() * th.sin();
                Some(Vector3::new(d * mpf, d * mqf, S::zero()))
            }
            Observable::Sum(terms) => {
                let mut g = Vector3::zeros();
                for t in terms {
                    g += t.gradient(model, x)?;
                }
                Some(g)
            }
            Observable::Product(a, b) => {
                let ga = a.gradient(model, x)?;
                let gb = b.gradient(model, x)?;
                Some(ga * b.eval(model, x) + gb * a.eval(model, x))
            }
            Observable::Scale(a, f) => Some(f.gradient(model, x)? * *a),
            Observable::Bracket(_, _) => None,
            Observable::Bump { .. } => None,
        }
    }
}

/// Hamiltonian vector field in canonical coordinates (base form `omega`,
/// level-independent): sphere `4 pi grad(f) x r`, planar `(f_q, -f_p)`.
pub fn hamiltonian_field_canonical<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    x: &Vector3<S>,
) -> Vector3<S> {
    let g = gradient_or_fd(f, model, x);
    if model.is_sphere() {
        g.cross(x) * (lit::<S>(4.0) * S::pi())
    } else {
        Vector3::new(g.y, -g.x, S::zero())
    }
}

/// `{f, g}` at a canonical point under `{f, g} = omega(X_f, X_g)`.
pub fn poisson_bracket_canonical<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    g: &dyn ScalarField<S>,
    x: &Vector3<S>,
) -> S {
    let gf = gradient_or_fd(f, model, x);
    let gg = gradient_or_fd(g, model, x);
    if model.is_sphere() {
        lit::<S>(4.0) * S::pi() * x.dot(&gf.cross(&gg))
    } else {
        gf.x * gg.y - gf.y * gg.x
    }
}

/// `{f, g}` at a chart point; errors if the point lies outside its chart.
pub fn poisson_bracket<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    g: &dyn ScalarField<S>,
    pt: &PhasePoint<S>,
) -> Result<S> {
    let x = model.to_canonical(pt)?;
    Ok(poisson_bracket_canonical(model, f, g, &x))
}

fn rk4_step<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    x: &Vector3<S>,
    h: S,
) -> Vector3<S> {
    let xf = |y: &Vector3<S>| hamiltonian_field_canonical(model, f, y);
    let k1 = xf(x);
    let k2 = xf(&(x + k1 * (h * lit::<S>(0.5))));
    let k3 = xf(&(x + k2 * (h * lit::<S>(0.5))));
    let k4 = xf(&(x + k3 * h));
    x + (k1 + k2 * lit::<S>(2.0) + k3 * lit::<S>(2.0) + k4) * (h / lit::<S>(6.0))
}

fn midpoint_step<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    x: &Vector3<S>,
    h: S,
) -> Vector3<S> {
    // Solve m = x + (h/2) X(m) by fixed-point iteration, then x' = 2m - x.
    let mut m = *x + hamiltonian_field_canonical(model, f, x) * (h * lit::<S>(0.5));
    let tol = S::default_epsilon() * lit::<S>(8.0) * (S::one() + x.norm());
    for _ in 0..64 {
        let m_next = *x + hamiltonian_field_canonical(model, f, &m) * (h * lit::<S>(0.5));
        let delta = (m_next - m).norm();
        m = m_next;
        if delta <= tol {
            break;
        }
    }
    m * lit::<S>(2.0) - x
}

/// Integrate the Hamiltonian flow of `f` in canonical coordinates.
///
/// Torus trajectories stay on the universal cover (no mod-1 reduction), so
/// winding information survives; sphere trajectories are renormalized for
/// round-off hygiene only.
pub fn flow_canonical<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    x0: &Vector3<S>,
    t: S,
    steps: usize,
    integrator: Integrator,
) -> Result<Vector3<S>> {
    assert!(steps >= 1, "steps must be >= 1");
    let h = t / S::from_usize_(steps);
    let mut x = *x0;
    for k in 0..steps {
        x = match integrator {
            Integrator::ImplicitMidpoint => midpoint_step(model, f, &x, h),
            Integrator::Rk4 => rk4_step(model, f, &x, h),
        };
        if model.is_sphere() {
            x = x.normalize();
        }
        if let PhaseKind::Darboux { p_range, q_range } = &model.kind {
            if x.x < p_range.0 || x.x > p_range.1 || x.y < q_range.0 || x.y > q_range.1 {
                return Err(Error::FlowEscape {
                    t: (h * S::from_usize_(k + 1)).to_f64().unwrap_or(f64::NAN),
                    u: x.x.to_f64().unwrap_or(f64::NAN),
                    v: x.y.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(x)
}

/// Time-`t` Hamiltonian flow of `f`, from chart point to chart point.
pub fn hamiltonian_flow<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    pt: &PhasePoint<S>,
    t: S,
    steps: usize,
    integrator: Integrator,
) -> Result<PhasePoint<S>> {
    let x0 = model.to_canonical(pt)?;
    let x = flow_canonical(model, f, &x0, t, steps, integrator)?;
    Ok(model.from_canonical(&x))
}

/// Expected energy-drift bound for the default integrator.
pub fn tol_flow<S: Real>(t: S, steps: usize, field_scale: S) -> S {
    let h = t / S::from_usize_(steps);
    let cube = field_scale * field_scale * field_scale;
    (lit::<S>(20.0) * t.abs() * h * h * cube).max(lit(1e-13))
}

/// Liouville quadrature nodes `(canonical point, weight)`.
///
/// Sphere: Gauss-Legendre in `z` times uniform longitudes (weights sum to
/// 1). Torus: uniform midpoint grid (weights sum to 1). Darboux: product
/// Gauss-Legendre scaled to the rectangle (weights sum to the area).
pub fn liouville_nodes<S: Real>(
    model: &PhaseModel<S>,
    n1: usize,
    n2: usize,
) -> Vec<(Vector3<S>, S)> {
    match &model.kind {
        PhaseKind::Sphere => {
            let (zs, ws) = gauss_legendre::<S>(n1);
            let mut nodes = Vec::with_capacity(n1 * n2);
            let wphi = S::one() / (lit::<S>(2.0) * S::from_usize_(n2));
            for (z, wz) in zs.iter().zip(ws.iter()) {
                let rho = (S::one() - *z * *z).max(S::zero()).sqrt();
                for j in 0..n2 {
                    let phi = S::two_pi() * S::from_usize_(j) / S::from_usize_(n2);
                    nodes.push((
                        Vector3::new(rho * phi.cos(), rho * phi.sin(), *z),
                        *wz * wphi,
                    ));
                }
            }
            nodes
        }
        PhaseKind::Torus => {
            let mut nodes = Vec::with_capacity(n1 * n2);
            let w = S::one() / S::from_usize_(n1 * n2);
            for i in 0..n1 {
                let p = (S::from_usize_(i) + lit(0.5)) / S::from_usize_(n1);
                for j in 0..n2 {
                    let q = (S::from_usize_(j) + lit(0.5)) / S::from_usize_(n2);
                    nodes.push((Vector3::new(p, q, S::zero()), w));
                }
            }
            nodes
        }
        PhaseKind::Darboux { p_range, q_range } => {
            let (xs, wxs) = gauss_legendre::<S>(n1);
            let (ys, wys) = gauss_legendre::<S>(n2);
            let half = lit::<S>(0.5);
            let cp = (p_range.0 + p_range.1) * half;
            let hp = (p_range.1 - p_range.0) * half;
            let cq = (q_range.0 + q_range.1) * half;
            let hq = (q_range.1 - q_range.0) * half;
            let mut nodes = Vec::with_capacity(n1 * n2);
            for (x, wx) in xs.iter().zip(wxs.iter()) {
                for (y, wy) in ys.iter().zip(wys.iter()) {
                    nodes.push((
                        Vector3::new(cp + hp * *x, cq + hq * *y, S::zero()),
                        *wx * *wy * hp * hq,
                    ));
                }
            }
            nodes
        }
    }
}

/// Default quadrature resolution (each direction).
pub const DEFAULT_QUAD: usize = 256;

/// `integral of f d mu_L` by product quadrature, deterministic for a fixed
/// resolution.
pub fn liouville_integral<S: Real>(
    model: &PhaseModel<S>,
    f: &dyn ScalarField<S>,
    n: usize,
) -> S {
    liouville_nodes(model, n, n)
        .into_iter()
        .map(|(x, w)| w * f.eval(model, &x))
        .sum()
}
