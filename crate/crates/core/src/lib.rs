//! Simulator, verifier and cost model for a resource-state quantum RAM.
//!
//! The crate is organised bottom-up:
//! [`encoding`] (classical one-hot maths), [`circuit`] (gate IR and NOHE circuits),
//! [`densesim`] (statevectors), [`cliffordlab`] (Pauli algebra, tableaux, Clifford
//! hierarchy), [`queryproto`] (the measurement-based query), [`noiselab`] (error models
//! and Haar averages) and [`factory`] (atom rearrangement and timing).

pub mod circuit;
pub mod cliffordlab;
pub mod densesim;
pub mod encoding;
pub mod factory;
pub mod noiselab;
pub mod par;
pub mod queryproto;

pub use circuit::{Circuit, Gate, LayeredCircuit};
pub use densesim::DenseState;
pub use encoding::{Address, Dataset};
