//! Bernstein-form function approximation with one-bit coefficients.
//!
//! The crate turns point samples of a function on the uniform grid
//! `{0, 1/n, ..., 1}^d` into a polynomial approximant in the Bernstein
//! basis, replaces the real coefficients by signs `{-1, +1}` using a
//! directional noise-shaping quantizer, and compiles the result into a
//! network graph whose weights live in a tiny fixed alphabet (`{±1}`
//! with quadratic activations, or `{±1/2, ±1, ±2}` with ReLU).
//!
//! Pipeline stages, in dependency order:
//!
//! * [`bernstein`]: basis evaluation, central moments, the sampling
//!   operator on grids, and basis variation along an axis.
//! * [`smoothing`]: iterated smoothing that upgrades the `1/n` rate of
//!   plain Bernstein approximation to `n^(-s/2)` for `C^s` targets.
//! * [`sigma_delta`]: greedy higher-order noise shaping that maps
//!   coefficient tensors to sign tensors fiber by fiber.
//! * [`qnn`]: the quantized network IR, evaluation, size accounting,
//!   and the `.qnn` on-disk format.
//! * [`quad`] and [`relu`]: builders that compile the basis (and the
//!   signed combination) into quadratic or ReLU networks.
//! * [`verify`]: numerical certification of the error bounds, rate
//!   fits, and the end-to-end pipeline driver.
//! * [`functions`]: built-in targets with closed-form norms used by
//!   the certification layer.

pub mod bernstein;
pub mod error;
pub mod functions;
pub mod qnn;
pub mod quad;
pub mod relu;
pub mod sigma_delta;
pub mod smoothing;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
