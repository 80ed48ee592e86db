//! The BPU map from half-weighted Bohr-Sommerfeld cycles on the sphere to
//! rays of holomorphic sections, with the eigenstate correspondence and
//! metric-adapted weights.
//!
//! The planckian lift is computed by discrete parallel transport of the
//! level-`k` connection along the loop, expressed in the unit frame of the
//! affine chart used by [`crate::toeplitz::HolomorphicModel`] (the north
//! potential branch); its global phase is pinned at the marked vertex 0.
//! The BPU functional pairs section amplitudes against the lift and the
//! half-weight, and is dualized through the analytic Gram matrix.

use crate::bohr_sommerfeld::{
    action_increments_branch, HalfWeight, LagrangianLoop, PotentialBranch, TOL_HOL,
};
use crate::error::{Error, Result};
use crate::linalg::DerivativeScheme;
use crate::moduli::{critical_residual, ModuliPoint};
use crate::phase::ScalarField;
use crate::projective::{symbol_value, Ray};
use crate::scalar::{c, cis, lit, C, Real};
use crate::toeplitz::{toeplitz_operator, HolomorphicModel};
use nalgebra::DVector;

/// Covariant-constant trivialization of the level-`k` connection along a
/// Bohr-Sommerfeld loop: one unit phase per vertex, pinned at vertex 0.
#[derive(Debug, Clone)]
pub struct PlanckianLift<S: Real> {
    pub level: u32,
    phases: Vec<C<S>>,
    /// Residual closure angle (radians) of the transport around the loop.
    pub closure_defect: S,
}

impl<S: Real> PlanckianLift<S> {
    pub fn phase(&self, i: usize) -> C<S> {
        self.phases[i % self.phases.len()]
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// The lift with its global phase rotated (still a planckian lift).
    pub fn rotated(&self, phase: C<S>) -> Self {
        PlanckianLift {
            level: self.level,
            phases: self.phases.iter().map(|u| *u * phase).collect(),
            closure_defect: self.closure_defect,
        }
    }
}

/// Parallel transport of the level-`k` prequantum connection along the
/// loop, in the affine-chart unit frame. Errors with the defect angle when
/// the loop is not Bohr-Sommerfeld.
pub fn planckian_lift<S: Real>(lp: &LagrangianLoop<S>, k: u32) -> Result<PlanckianLift<S>> {
    planckian_lift_tol(lp, k, lit(TOL_HOL))
}

/// As [`planckian_lift`] with an explicit closure tolerance, for loops
/// carrying transport or quadrature drift.
pub fn planckian_lift_tol<S: Real>(
    lp: &LagrangianLoop<S>,
    k: u32,
    tol: S,
) -> Result<PlanckianLift<S>> {
    let branch =
        if lp.model.is_sphere() { PotentialBranch::North } else { PotentialBranch::Auto };
    let inc = action_increments_branch(lp, k, branch)?;
    let total: S = inc.iter().copied().sum();
    let defect_coord = (total - total.round()).abs();
    if defect_coord > tol {
        return Err(Error::ClosureDefect {
            defect: defect_coord.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut phases = Vec::with_capacity(lp.len());
    let mut acc = S::zero();
    for d in inc.iter().take(lp.len()) {
        phases.push(cis(S::two_pi() * acc));
        acc += *d;
    }
    Ok(PlanckianLift {
        level: k,
        phases,
        closure_defect: S::two_pi() * defect_coord,
    })
}

/// The BPU image of a half-weighted Bohr-Sommerfeld cycle: the ray of the
/// holomorphic section representing the pairing functional
/// `s -> int_S s|_S theta^2` against the planckian trivialization.
pub fn bpu_map<S: Real>(pt: &ModuliPoint<S>, m: &HolomorphicModel<S>) -> Result<Ray<S>> {
    bpu_map_tol(pt, m, lit(TOL_HOL))
}

/// As [`bpu_map`] with an explicit Bohr-Sommerfeld tolerance.
pub fn bpu_map_tol<S: Real>(
    pt: &ModuliPoint<S>,
    m: &HolomorphicModel<S>,
    tol: S,
) -> Result<Ray<S>> {
    if pt.level != m.level {
        return Err(Error::DimensionMismatch(pt.level as usize, m.level as usize));
    }
    let lift = planckian_lift_tol(&pt.lp, pt.level, tol)?;
    let d = m.dim();
    let n = pt.len();
    let nf = S::from_usize_(n);
    let mut coeffs = DVector::from_element(d, c(S::zero(), S::zero()));
    for i in 0..n {
        let amps = m.amplitudes(&pt.lp.vertex(i));
        let weight = c(pt.weight.density(i) / nf, S::zero());
        let u_conj = lift.phase(i).conj();
        for j in 0..d {
            coeffs[j] += amps[j] * u_conj * weight;
        }
    }
    let norm2: S = coeffs.iter().map(|z| z.norm_sqr()).sum();
    if norm2 <= lit(1e-24) {
        return Err(Error::DegenerateImage(norm2.sqrt().to_f64().unwrap_or(f64::NAN)));
    }
    Ray::new(coeffs)
}

/// Eigenstate correspondence data at a moduli point.
#[derive(Debug, Clone)]
pub struct EigenstateCheck<S: Real> {
    pub is_critical: bool,
    pub critical_residual: S,
    /// `|| A_f v - <v, A_f v> v ||` for the BPU image `v`.
    pub eigen_residual: S,
    pub image: Ray<S>,
}

/// Critical points of the induced function must map to eigenstates of the
/// Toeplitz operator.
pub fn eigenstate_check<S: Real>(
    f: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    m: &HolomorphicModel<S>,
) -> Result<EigenstateCheck<S>> {
    eigenstate_check_tol(f, pt, m, lit(TOL_HOL))
}

/// As [`eigenstate_check`] with an explicit Bohr-Sommerfeld tolerance.
pub fn eigenstate_check_tol<S: Real>(
    f: &dyn ScalarField<S>,
    pt: &ModuliPoint<S>,
    m: &HolomorphicModel<S>,
    tol: S,
) -> Result<EigenstateCheck<S>> {
    let image = bpu_map_tol(pt, m, tol)?;
    let a = toeplitz_operator(f, m)?;
    let expectation = symbol_value(&a, &image)?;
    let v = image.representative();
    let av = a.apply(v);
    let mut res2 = S::zero();
    for (x, y) in av.iter().zip(v.iter()) {
        res2 += (*x - *y * c(expectation, S::zero())).norm_sqr();
    }
    let crit = critical_residual(f, pt, DerivativeScheme::Centered4);
    Ok(EigenstateCheck {
        is_critical: crit <= lit(1e-8),
        critical_residual: crit,
        eigen_residual: res2.sqrt(),
        image,
    })
}

/// Metric-adapted weight data of a loop.
#[derive(Debug, Clone)]
pub struct MetricWeight<S: Real> {
    /// Riemannian length of the loop (round metric compatible with the
    /// unit-area form: sphere radius `1/(2 sqrt(pi))`).
    pub volume: S,
    /// The half-weight with `theta^2` the riemannian arc measure; the
    /// second lift over the same loop is its negative branch.
    pub adapted: HalfWeight<S>,
    /// Which square root was returned.
    pub positive_branch: bool,
}

/// Round-metric radius compatible with the unit-area symplectic form.
pub fn round_radius<S: Real>() -> S {
    S::one() / (lit::<S>(2.0) * S::pi().sqrt())
}

/// Riemannian loop length and the arc-measure half-weight (4.3.8-style
/// metric adaptation).
pub fn metric_weight<S: Real>(lp: &LagrangianLoop<S>) -> Result<MetricWeight<S>> {
    if !lp.model.is_sphere() {
        return Err(Error::Config("metric weights use the sphere model".into()));
    }
    let r = round_radius::<S>();
    let n = lp.len();
    let density: Vec<S> = (0..n).map(|i| r * lp.speed(i)).collect();
    let volume: S = density.iter().copied().sum::<S>() / S::from_usize_(n);
    let adapted = HalfWeight::from_density(&density, volume)?;
    Ok(MetricWeight { volume, adapted, positive_branch: true })
}

/// JSON table of the smooth Bohr-Sommerfeld census at level `k`: fiber
/// position, monomial index of the BPU image, overlap and eigenstate
/// residual, with the two degenerate pole fibers documented.
pub fn bpu_census_json<S: Real>(
    m: &HolomorphicModel<S>,
    loop_n: usize,
    tau: S,
    volume: S,
) -> Result<serde_json::Value> {
    let k = m.level;
    let fib = crate::bohr_sommerfeld::LagrangianFibration::SphereCapArea {
        model: crate::phase::PhaseModel::sphere(k),
    };
    let height = crate::phase::Observable::height();
    let mut rows = Vec::new();
    for mm in 1..k {
        let t = lit::<S>(mm as f64) / lit::<S>(k as f64);
        let lp = fib.fiber(t, loop_n)?;
        let w = crate::bohr_sommerfeld::invariant_half_weight(&lp, &fib, volume)?;
        let pt = ModuliPoint::new(lp, w, k, tau)?;
        let check = eigenstate_check(&height, &pt, m)?;
        let monomial = Ray::<S>::basis_vector(m.dim(), mm as usize);
        let overlap = check.image.overlap(&monomial).norm_sqr();
        rows.push(serde_json::json!({
            "fiber": t.to_f64().unwrap(),
            "monomial_index": mm,
            "overlap": overlap.to_f64().unwrap(),
            "eigen_residual": check.eigen_residual.to_f64().unwrap(),
            "critical_residual": check.critical_residual.to_f64().unwrap(),
        }));
    }
    Ok(serde_json::json!({
        "level": k,
        "smooth_fibers": rows,
        "degenerate_fibers": [
            {"fiber": 0.0, "monomial_index": 0, "note": "pole limit, not a smooth cycle"},
            {"fiber": 1.0, "monomial_index": k, "note": "pole limit, not a smooth cycle"},
        ],
    }))
}
