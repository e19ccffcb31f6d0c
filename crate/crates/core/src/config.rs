//! Physical and protocol parameters for a repeater run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon::PhotonCountModel;

/// Fixed default seed so unseeded runs are still reproducible.
pub const DEFAULT_SEED: u64 = 0x5eed_2500;

/// How a nested trial accounts for the build time of child pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    /// Each swap attempt is charged the analytic expected build time of
    /// its child level, so the ensemble mean reproduces the closed-form
    /// T = 2^{m+1} T₀ / P₁^{m+1} exactly.
    MeanField,
    /// Children are built concurrently and each swap attempt costs the
    /// larger of the two sampled child build times.
    #[serde(rename = "parallel")]
    ParallelChildren,
}

/// All knobs for one protocol scenario. Times are seconds, distances km.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeaterConfig {
    /// Total distance L_t to span.
    pub l_t_km: f64,
    /// Nesting depth m; the chain has 2^m basic links of length L_t/2^m.
    pub nesting_m: u32,
    /// Fiber attenuation length L_att.
    pub l_att_km: f64,
    /// Signal speed in fiber (m/s).
    pub c_fiber_m_s: f64,
    /// Mean interval between forward photons from a bright atom.
    pub tau_b_s: f64,
    /// Probe durations: entanglement generation, swap, application
    /// readout, teleportation.
    pub t_e_s: f64,
    pub t_s_s: f64,
    pub t_a_s: f64,
    pub t_t_s: f64,
    /// Coherence (decay) time of the metastable level.
    pub t_c_s: f64,
    /// Dark-count vacuum coefficient; only acts in single-photon mode.
    pub c0: f64,
    pub count_model: PhotonCountModel,
    /// Per-link non-stationary channel phase noise (std dev, radians).
    pub phase_sigma_link: f64,
    /// Residual interferometer phase φ of the generation detector mode.
    pub channel_phase: f64,
    /// Node initialization phases are drawn uniformly from
    /// [0, init_phase_spread); zero keeps every φ_i = 0.
    pub init_phase_spread: f64,
    pub timing_mode: TimingMode,
    /// Charge the heralding signal round trip L_i/(2c) at each swap
    /// (ParallelChildren only).
    pub swap_heralding_latency: bool,
    /// Single-photon probing (t_e ≈ τ_B): heralded pairs carry the
    /// dark-count admixture c₀. Multi-photon probing excludes it.
    pub single_photon_mode: bool,
    /// Disable the closed-form fast paths in the engine and run every
    /// attempt through the full state-vector route.
    pub force_exact: bool,
    pub seed: u64,
}

impl Default for RepeaterConfig {
    fn default() -> Self {
        let tau_b = 6e-9;
        RepeaterConfig {
            l_t_km: 2500.0,
            nesting_m: 6,
            l_att_km: 22.0,
            c_fiber_m_s: 2.0e8,
            tau_b_s: tau_b,
            t_e_s: 100.0 * tau_b,
            t_s_s: 100.0 * tau_b,
            t_a_s: 100.0 * tau_b,
            t_t_s: 100.0 * tau_b,
            t_c_s: 6e-3,
            c0: 0.0,
            count_model: PhotonCountModel::default(),
            phase_sigma_link: 0.0,
            channel_phase: 0.0,
            init_phase_spread: 0.0,
            timing_mode: TimingMode::MeanField,
            swap_heralding_latency: false,
            single_photon_mode: false,
            force_exact: false,
            seed: DEFAULT_SEED,
        }
    }
}

/// Derived basic-link parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Basic link length L₀ = L_t / 2^m.
    pub l0_km: f64,
    /// Time per generation attempt T₀ = L₀/c + t_e·e^{L₀/L_att}.
    pub t0_s: f64,
}

impl RepeaterConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { field, message: format!("must be > 0, got {v}") })
            }
        }
        fn non_negative(field: &'static str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { field, message: format!("must be ≥ 0, got {v}") })
            }
        }
        positive("l_t_km", self.l_t_km)?;
        positive("l_att_km", self.l_att_km)?;
        positive("c_fiber_m_s", self.c_fiber_m_s)?;
        positive("tau_b_s", self.tau_b_s)?;
        non_negative("t_e_s", self.t_e_s)?;
        non_negative("t_s_s", self.t_s_s)?;
        non_negative("t_a_s", self.t_a_s)?;
        non_negative("t_t_s", self.t_t_s)?;
        positive("t_c_s", self.t_c_s)?;
        non_negative("c0", self.c0)?;
        non_negative("phase_sigma_link", self.phase_sigma_link)?;
        non_negative("init_phase_spread", self.init_phase_spread)?;
        if !self.channel_phase.is_finite() {
            return Err(Error::InvalidParameter {
                field: "channel_phase",
                message: "must be finite".into(),
            });
        }
        self.count_model.validate()
    }

    /// L₀ and T₀ for the configured segmentation.
    pub fn derive_link(&self) -> LinkParams {
        let l0_km = self.l_t_km / f64::from(1u32 << self.nesting_m);
        let t0_s = l0_km * 1000.0 / self.c_fiber_m_s + self.t_e_s * (l0_km / self.l_att_km).exp();
        LinkParams { l0_km, t0_s }
    }

    pub fn num_nodes(&self) -> u32 {
        (1u32 << self.nesting_m) + 1
    }
}
