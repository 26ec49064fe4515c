//! Herman–Kluk expectation values by Monte Carlo quadrature on double phase space.

pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod matel;
pub mod phasespace;
pub mod potential;
pub mod sampling;

pub use error::{HkError, Result};
pub use phasespace::{
    gaussian_eval, sigma0, DoublePhasePoint, GaussianWavepacket, Observable, PhaseSpacePoint,
    SimConfig, WidthMatrix,
};
pub use potential::Potential;
