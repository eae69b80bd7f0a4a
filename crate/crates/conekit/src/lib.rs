//! Cone-theoretic existence and multiplicity certificates for positive
//! solutions of systems of two perturbed Hammerstein integral equations
//!
//! The systems handled here have the form
//!
//! ```text
//! u(t) = γ11(t)·(H11(β11[u]) + L11(δ11[v])) + γ12(t)·(H12(β12[u]) + L12(δ12[v]))
//!        + ∫₀¹ k1(t,s) g1(s) f1(s, u(s), v(s)) ds,
//! v(t) = γ21(t)·(H21(β21[v]) + L21(δ21[u])) + γ22(t)·(H22(β22[v]) + L22(δ22[u]))
//!        + ∫₀¹ k2(t,s) g2(s) f2(s, u(s), v(s)) ds,
//! ```
//!
//! where the β/δ brackets are Riemann–Stieltjes functionals given by positive
//! measures, and the boundary nonlinearities H, L are sandwiched between
//! linear growth bounds (`h_lo·w ≤ H(w) ≤ h_hi·w`, `0 ≤ L(w) ≤ l_hi·w`).
//!
//! Given a problem description, the crate
//!
//! * computes every constant of the underlying fixed-point-index machinery
//!   ([`constants`]): kernel functionals, cone constants, the 2×2 coupling
//!   matrices and their inverses, and the sharp sub/superlinearity bounds;
//! * evaluates the index conditions at caller-chosen radii and assembles
//!   multiplicity certificates from alternating ladders of such conditions
//!   ([`index`]);
//! * locates the certified solutions numerically by damped Picard iteration
//!   on a shared discretization, with cone-membership checks ([`solver`]).
//!
//! Problem files are JSON ([`problem`]); scalar fields accept `"p/q"` strings
//! and are then carried through exact rational arithmetic wherever the input
//! data permits, so quantities like kernel functional integrals of piecewise
//! polynomial kernels come out as exact rationals rather than floats.
//!
//! The `conekit` binary exposes the pipeline as subcommands (`constants`,
//! `check`, `certify`, `solve`, `report`); see [`cli`].

pub mod cli;
pub mod constants;
pub mod expr;
pub mod index;
pub mod kernels;
pub mod poly;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod scalar;
pub mod solver;

pub use expr::Expression;
pub use problem::ProblemDef;
pub use scalar::Scalar;
