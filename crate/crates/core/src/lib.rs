//! Dynamic portfolio optimization as a QUBO/Ising problem, solved with a
//! simulated variational workflow and repaired with sample-based
//! configuration recovery.
//!
//! The crate is organized along the pipeline:
//!
//! - [`market`]: price ingestion and the derived return/covariance/dynamics
//!   tensors.
//! - [`model`]: the QUBO objective, binary weight encoding, and Ising form.
//! - [`sim`]: block-structured ansatz circuits, exact statevector simulation,
//!   expectations, and sampling.
//! - [`engine`]: the differential-evolution outer loop and the full- and
//!   single-time solve drivers.
//! - [`isqr`]: iterative sample-based configuration recovery.
//! - [`analytics`]: weight normalization, financial scores, the efficient
//!   frontier, and classical baselines.

pub mod analytics;
pub mod engine;
pub mod isqr;
pub mod market;
pub mod model;
pub mod sim;
pub mod util;

pub use market::{DayConvention, MarketError, MarketTensors, PriceSeries};
pub use model::{
    Bits, Dims, DpoProblem, ModelError, QuadraticForm, Strategy, VariableKind,
};
pub use sim::{AnsatzScheme, AnsatzSpec, SampleSet, SimError, StateVector};
