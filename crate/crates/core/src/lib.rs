//! Shift operators for exactly solvable one-dimensional Hamiltonians
//! `H = X(x) d²/dx² + V(x)`.
//!
//! * [`expr`]: expressions in `x`, exact differentiation, sampling-based
//!   identity checks.
//! * [`diffop`]: differential operators with expression coefficients.
//! * [`ladder`]: the constraint system, the six-family catalog and the
//!   derived raising/lowering operators.
//! * [`numerics`]: finite-difference eigensolver used as an independent
//!   oracle, and grid-level checks of the ladder action.
//! * [`search`]: least-squares search for new solvable `(X, Y)` pairs.

pub mod diffop;
pub mod expr;
pub mod ladder;
pub mod numerics;
pub mod search;
