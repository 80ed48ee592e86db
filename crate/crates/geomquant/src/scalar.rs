//! Scalar abstraction: everything numeric is generic over a real field type.
//!
//! `f64` is the working precision for all shipped tolerances; `f32` is
//! supported for smoke-level use through the same trait.

use num_complex::Complex;
use num_traits::{FromPrimitive, Num, NumAssign, ToPrimitive};

/// Real scalar: `f32` or `f64`.
pub trait Real:
    nalgebra::RealField
    + Num
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Default
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal conversion")
    }

    fn from_usize_(n: usize) -> Self {
        Self::from_usize(n).expect("usize conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over the working scalar.
pub type C<S> = Complex<S>;

/// Shorthand for `S::lit`.
#[inline]
pub fn lit<S: Real>(x: f64) -> S {
    S::lit(x)
}

#[inline]
pub fn c<S: Real>(re: S, im: S) -> C<S> {
    Complex::new(re, im)
}

/// e^{iθ} as a complex scalar.
#[inline]
pub fn cis<S: Real>(theta: S) -> C<S> {
    Complex::new(theta.cos(), theta.sin())
}

#[cfg(test)]
mod probe {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn generic_smoke<S: Real>() -> S {
        let x: S = lit(0.75);
        let y = x.sin().atan2(x.cos());
        let f = x.floor() + x.fract();
        let m = DMatrix::<S>::identity(3, 3) * lit::<S>(2.0);
        let lu = m.clone().lu();
        let sol = lu.solve(&DVector::from_element(3, lit::<S>(4.0))).unwrap();
        let z = c::<S>(lit(1.0), lit(2.0)) * cis::<S>(y);
        let cm = DMatrix::<C<S>>::from_element(2, 2, z);
        let prod = &cm * &cm;
        prod[(0, 0)].re + sol[0] + f
    }

    #[test]
    fn trait_surface_compiles_for_f32_and_f64() {
        let a: f64 = generic_smoke();
        let b: f32 = generic_smoke();
        assert!(a.is_finite() && b.is_finite());
    }
}
