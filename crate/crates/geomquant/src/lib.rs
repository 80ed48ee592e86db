//! Numerical laboratory for geometric quantization on concrete
//! low-dimensional phase spaces.
//!
//! The crate builds, on the unit-area 2-sphere, the unit 2-torus and a
//! Darboux rectangle:
//!
//! * classical Hamiltonian calculus and Liouville quadrature ([`phase`]),
//! * the Kähler geometry of finite-dimensional projective quantum state
//!   spaces ([`projective`]),
//! * prequantum line bundles and Souriau–Kostant operators on a torus grid
//!   ([`prequantum`]),
//! * Berezin–Toeplitz quantization on the sphere ([`toeplitz`]),
//! * Bohr–Sommerfeld loop detection and half-weights ([`bohr_sommerfeld`]),
//! * the discretized moduli space of half-weighted Bohr–Sommerfeld cycles
//!   with its Kähler triple, induced functions and dynamical correspondence
//!   ([`moduli`]),
//! * the BPU map from half-weighted cycles to rays of holomorphic sections
//!   ([`bpu`]).
//!
//! Every identity that can be verified numerically is exercised by the test
//! suites; the `acceptance` integration test runs the headline checks at
//! their shipped tolerances.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`];
//! concrete `f64` aliases live at the crate root.

pub mod bohr_sommerfeld;
pub mod bpu;
pub mod error;
pub mod linalg;
pub mod moduli;
pub mod phase;
pub mod prequantum;
pub mod projective;
pub mod scalar;
pub mod toeplitz;

pub use error::{Error, Result};
pub use scalar::{Real, C};

/// Concrete `f64` aliases for the main domain types.
pub mod f64_types {
    pub type PhaseModel = crate::phase::PhaseModel<f64>;
    pub type PhasePoint = crate::phase::PhasePoint<f64>;
    pub type Observable = crate::phase::Observable<f64>;
}
