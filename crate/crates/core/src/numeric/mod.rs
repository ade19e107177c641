//! Numerical building blocks: quadrature, tridiagonal eigenvalues,
//! compensated sums and Airy zeros.

pub mod airy;
pub mod quadrature;
pub mod sum;
pub mod tridiag;

pub use quadrature::{integrate, integrate_with_breaks, Integral, QuadratureOptions};
pub use sum::{log_add_exp, CompensatedSum, LogSumExp};
pub use tridiag::SymTridiagonal;
