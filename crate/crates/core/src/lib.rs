//! Design, certification and simulation of linear control systems with
//! more input channels than states.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense kernels (matrix exponential, spectra, Gramians, rank).
//! - [`lattice`]: channel subsets, projections and controllability classification.
//! - [`lifting`]: the plant type and solutions of `B·Â = A`.
//! - [`design`]: resilient gains `K = -αBᵀ - Â`, set-point offsets and certificates.
//! - [`intermittency`]: Markov channel availability and switched-system simulation.
//! - [`uncertainty`]: steady-state error under channel noise.
//! - [`frames`]: tight-frame input matrices on circles and spheres.
//! - [`quantize`]: discretisation and binary-input emulation of linear flows.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod frames;
pub mod intermittency;
pub mod io;
pub mod lattice;
pub mod lifting;
pub mod numerics;
pub mod quantize;
pub mod uncertainty;

pub use design::{AlphaScaling, GainDesign, ResilienceCertificate};
pub use error::{Error, Result};
pub use lattice::{ChannelSet, LatticeReport};
pub use lifting::{LiftFamily, Plant};

pub use nalgebra::{Complex, DMatrix, DVector};
