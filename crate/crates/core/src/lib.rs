//! Rough-path numerics for hypoelliptic equations driven by fractional
//! Brownian motion.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! - exact arithmetic in the truncated tensor algebra and the free nilpotent
//!   Lie algebra in Lyndon coordinates ([`tensor`], [`lie`]);
//! - signatures of piecewise-linear paths and a constructive inverse that
//!   realizes any log-signature by a concrete path ([`path`], [`realize`]);
//! - exact fBm sampling and Cameron–Martin norms of grid paths ([`fbm`],
//!   [`cameron_martin`]);
//! - vector fields parsed from text, evaluated to arbitrary-order jets, the
//!   Taylor map `F_l`, and ODE / Davie-type RDE solvers ([`expr`], [`jet`],
//!   [`fields`], [`taylor`], [`ode`]);
//! - the iterative Cameron–Martin path joining construction and the control
//!   distance bounds built on it ([`join`]);
//! - Monte-Carlo density experiments ([`density`]).
//!
//! IO, file formats and the command-line runner live in the `roughkit`
//! companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cameron_martin;
pub mod density;
pub mod error;
pub mod expr;
pub mod fbm;
pub mod fields;
pub mod jet;
pub mod join;
pub mod lie;
mod linalg;
pub mod ode;
pub mod path;
pub mod realize;
pub mod taylor;
pub mod tensor;

pub use error::{Error, Result};
pub use fbm::{FbmSpec, GridPath};
pub use fields::VectorFieldSystem;
pub use lie::{LieBasis, LieCoordinates};
pub use path::PiecewiseLinearPath;
pub use tensor::TruncatedTensor;
