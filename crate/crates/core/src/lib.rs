//! Simulation core for a photon-heralded quantum repeater chain.
//!
//! The crate is organized in layers:
//! - [`quantum`]: exact state vectors and density matrices for up to
//!   four two-level atoms, with the heralded projections, decay
//!   trajectories and phase noise the protocol needs.
//! - [`photon`]: the Poisson photon-counting model and the heralding
//!   window that discriminates zero, one, and two bright atoms.
//! - [`config`]: scenario parameters and derived link quantities.
//! - [`engine`]: Monte-Carlo execution of nested entanglement swapping.
//! - [`analytics`]: closed-form figures of merit plus sampled CHSH, key
//!   distribution, and teleportation experiments.

pub mod analytics;
pub mod config;
pub mod engine;
pub mod error;
pub mod photon;
pub mod quantum;

pub use config::{RepeaterConfig, TimingMode, DEFAULT_SEED};
pub use engine::{Engine, EnsembleStats, EntangledPair, TrialResult};
pub use error::{Error, Result};
pub use photon::{DiscriminationProfile, PhotonCountModel};
pub use quantum::{DensityMatrix, PureState};
