//! Classical emulator of an eight-ion ququart processor built on
//! ¹⁷¹Yb⁺: native gates, qubit-to-qudit transpilation, calibrated noise and
//! staged readout, ion-chain pulse shaping, benchmarking protocols and the
//! iterative quantum-assisted eigensolver.

pub mod bench;
pub mod chain;
pub mod error;
pub mod formats;
pub mod gates;
pub mod iqae;
pub mod matrix;
pub mod noise;
pub mod pauli;
pub mod state;
pub mod synth;
pub mod transpile;

pub use error::{Error, Result};
