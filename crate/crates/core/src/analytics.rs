//! Closed-form performance figures and the application-level experiments
//! (CHSH inequality runs, entanglement-based key distribution, state
//! teleportation) executed on sampled pairs.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{sample_bright_pattern, AttemptOutcome, Engine};
use crate::error::Result;
use crate::photon::{sample_count, threshold_bit, CountClass, PhotonCountModel};
use crate::quantum::{entangled_pair_state, single_bright_projection, PureState};

/// Expected distribution time T = 2^{m+1} T₀ / P₁^{m+1}, where P₁ is the
/// in-window probability of a single-bright count. Each heralded attempt
/// succeeds with P₁/2, so this equals T₀ / (P₁/2)^{m+1}.
pub fn analytic_expected_time(t0_s: f64, nesting_m: u32, p1: f64) -> f64 {
    let mp1 = nesting_m as i32 + 1;
    2f64.powi(mp1) * t0_s / p1.powi(mp1)
}

/// Upper bound on the fidelity loss of a pair whose two atoms stayed
/// exposed to decay for `exposure` each: ΔF ≤ 3(1 − e^{−exposure/t_c}).
pub fn decoherence_bound(exposure_s: f64, t_c_s: f64) -> f64 {
    3.0 * (1.0 - (-exposure_s / t_c_s).exp())
}

/// Standard deviation of the end-to-end channel phase after 2^m links of
/// independent per-link noise σ: a random walk grows it by √(2^m).
pub fn phase_walk_sigma(sigma_link: f64, nesting_m: u32) -> f64 {
    sigma_link * f64::from(1u32 << nesting_m).sqrt()
}

/// Measurement settings (a, b) in radians for the four CHSH correlators;
/// S = |E₁ + E₂ + E₃ − E₄| reaches 2√2 on ideal pairs.
pub const CHSH_SETTINGS: [(f64, f64); 4] =
    [(0.0, PI / 4.0), (PI / 2.0, PI / 4.0), (PI / 2.0, 3.0 * PI / 4.0), (0.0, 3.0 * PI / 4.0)];

/// Supplies fresh two-qubit pairs for the application experiments,
/// together with the nominal phase the consumer should compensate.
pub trait PairSource {
    /// Draw one pair as (state, nominal phase).
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> (PureState, f64);
}

/// Perfect |ψ(φ)⟩ every time.
pub struct IdealPairSource {
    pub phase: f64,
}

impl PairSource for IdealPairSource {
    fn sample(&mut self, _rng: &mut ChaCha8Rng) -> (PureState, f64) {
        (entangled_pair_state(self.phase), self.phase)
    }
}

/// |ψ(φ + δ)⟩ with δ ~ N(0, σ²), replaced by the all-dark state with the
/// dark-count branch weight c₀/(1 + c₀).
pub struct NoisyPairSource {
    pub phase: f64,
    pub c0: f64,
    pub sigma: f64,
}

impl PairSource for NoisyPairSource {
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> (PureState, f64) {
        if self.c0 > 0.0 {
            let w = self.c0 / (self.c0 + 1.0);
            if rng.random::<f64>() < w {
                return (PureState::basis(2, 0b11).expect("|ss>"), self.phase);
            }
        }
        let mut actual = self.phase;
        if self.sigma > 0.0 {
            let normal = rand_distr::Normal::new(0.0, self.sigma).expect("sigma >= 0");
            actual += rng.sample::<f64, _>(normal);
        }
        (entangled_pair_state(actual), self.phase)
    }
}

/// Pairs produced by repeated heralded generation attempts on a basic
/// link of the given engine (failed attempts are simply retried).
pub struct EnginePairSource<'a> {
    pub engine: &'a Engine,
}

impl PairSource for EnginePairSource<'_> {
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> (PureState, f64) {
        loop {
            let attempt = self.engine.attempt_generation((0, 1), 0.0, rng);
            if let AttemptOutcome::Success(pair) = attempt.outcome {
                return (pair.state(), pair.phase);
            }
        }
    }
}

/// How a station turns a collapsed atom into a classical bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutMode {
    /// Report the atomic level directly.
    Ideal,
    /// Sample a probe photon count (λ_one for a bright atom, λ_dark for a
    /// dark one) and threshold it at the window lower bound.
    PhotonCount,
}

/// z-measure `qubit`, then read it out as a bright(1)/dark(0) bit.
fn measure_bright_bit(
    state: &PureState,
    qubit: usize,
    readout: ReadoutMode,
    model: &PhotonCountModel,
    rng: &mut ChaCha8Rng,
) -> Result<(u8, PureState)> {
    let (z, post) = state.measure_z(qubit, rng)?;
    let bright = match readout {
        ReadoutMode::Ideal => 1 - z,
        ReadoutMode::PhotonCount => {
            let lambda = if z == 0 { model.lambda_one } else { model.lambda_dark };
            threshold_bit(sample_count(lambda, rng)?, model.window_lo)
        }
    };
    Ok((bright, post))
}

/// Rotate a compensated pair into the measurement bases (a, b) of one
/// CHSH/key round: phase gate α = π − φ on the left atom maps |ψ(φ)⟩ to
/// the singlet, then x rotations set the analyzer angles.
fn analyzer_state(state: &PureState, nominal: f64, a: f64, b: f64) -> Result<PureState> {
    state.apply_phase_gate(0, PI - nominal)?.apply_rotation_x(0, a)?.apply_rotation_x(1, b)
}

/// Correlator of one round: +1 when the bright bits differ (the right bit
/// is reported complemented so that ideal pairs give E = cos(a − b)).
fn round_product(
    state: &PureState,
    nominal: f64,
    a: f64,
    b: f64,
    readout: ReadoutMode,
    model: &PhotonCountModel,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let rotated = analyzer_state(state, nominal, a, b)?;
    let (bl, post) = measure_bright_bit(&rotated, 0, readout, model, rng)?;
    let (br, _) = measure_bright_bit(&post, 1, readout, model, rng)?;
    Ok(if bl != br { 1.0 } else { -1.0 })
}

/// Exact correlator E(a, b) of a perfect pair with nominal phase φ,
/// computed from the Born weights of the analyzer state. Equals
/// cos(a − b) identically.
pub fn exact_correlation(phase: f64, a: f64, b: f64) -> Result<f64> {
    let rotated = analyzer_state(&entangled_pair_state(phase), phase, a, b)?;
    let mut e = 0.0;
    for (i, amp) in rotated.amplitudes().iter().enumerate() {
        let sign =
            if rotated.bit_of(i, 0) != rotated.bit_of(i, 1) { 1.0 } else { -1.0 };
        e += sign * amp.norm_sqr();
    }
    Ok(e)
}

/// Exact CHSH parameter S = |E₁ + E₂ + E₃ − E₄| over [`CHSH_SETTINGS`].
pub fn chsh_exact_s(phase: f64) -> Result<f64> {
    let e: Vec<f64> = CHSH_SETTINGS
        .iter()
        .map(|&(a, b)| exact_correlation(phase, a, b))
        .collect::<Result<_>>()?;
    Ok((e[0] + e[1] + e[2] - e[3]).abs())
}

#[derive(Debug, Clone, Serialize)]
pub struct ChshResult {
    pub shots_per_setting: u64,
    /// Estimated correlators in [`CHSH_SETTINGS`] order.
    pub correlators: [f64; 4],
    /// Standard errors of the correlators.
    pub correlator_errs: [f64; 4],
    pub s: f64,
    pub s_err: f64,
}

/// Sampled CHSH run: `shots_per_setting` rounds for each of the four
/// settings on pairs drawn from `source`.
pub fn run_chsh(
    source: &mut dyn PairSource,
    shots_per_setting: u64,
    readout: ReadoutMode,
    model: &PhotonCountModel,
    rng: &mut ChaCha8Rng,
) -> Result<ChshResult> {
    let mut correlators = [0.0f64; 4];
    let mut errs = [0.0f64; 4];
    for (k, &(a, b)) in CHSH_SETTINGS.iter().enumerate() {
        let mut sum = 0.0;
        for _ in 0..shots_per_setting {
            let (state, nominal) = source.sample(rng);
            sum += round_product(&state, nominal, a, b, readout, model, rng)?;
        }
        let e = sum / shots_per_setting as f64;
        correlators[k] = e;
        errs[k] = ((1.0 - e * e).max(0.0) / shots_per_setting as f64).sqrt();
    }
    let s = (correlators[0] + correlators[1] + correlators[2] - correlators[3]).abs();
    let s_err = errs.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(ChshResult { shots_per_setting, correlators, correlator_errs: errs, s, s_err })
}

#[derive(Debug, Clone, Serialize)]
pub struct EkertResult {
    pub rounds: u64,
    /// Rounds where both stations chose the same basis.
    pub sifted: u64,
    pub mismatches: u64,
    /// Mismatch fraction of the sifted key.
    pub qber: f64,
}

/// Entanglement-based key distribution: both sides measure in a basis
/// drawn uniformly from {0, π/2}; rounds with equal bases are kept and
/// ideally give identical key bits.
pub fn run_ekert(
    source: &mut dyn PairSource,
    rounds: u64,
    readout: ReadoutMode,
    model: &PhotonCountModel,
    rng: &mut ChaCha8Rng,
) -> Result<EkertResult> {
    let mut sifted = 0u64;
    let mut mismatches = 0u64;
    for _ in 0..rounds {
        let a = if rng.random::<bool>() { 0.0 } else { PI / 2.0 };
        let b = if rng.random::<bool>() { 0.0 } else { PI / 2.0 };
        let (state, nominal) = source.sample(rng);
        if a != b {
            continue;
        }
        sifted += 1;
        let rotated = analyzer_state(&state, nominal, a, b)?;
        let (bl, post) = measure_bright_bit(&rotated, 0, readout, model, rng)?;
        let (br, _) = measure_bright_bit(&post, 1, readout, model, rng)?;
        // Key bits: left reports bright as 1, right reports the
        // complement, so ideal anticorrelated outcomes agree.
        if bl != 1 - br {
            mismatches += 1;
        }
    }
    let qber = if sifted > 0 { mismatches as f64 / sifted as f64 } else { 0.0 };
    Ok(EkertResult { rounds, sifted, mismatches, qber })
}

#[derive(Debug, Clone, Serialize)]
pub struct TeleportResult {
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Mean overlap of the delivered state with the input, over the
    /// heralded successes.
    pub mean_fidelity: f64,
}

/// Haar-random single-qubit input state.
fn random_input(rng: &mut ChaCha8Rng) -> PureState {
    let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
    let phi = 2.0 * PI * rng.random::<f64>();
    PureState::new(
        1,
        vec![
            Complex64::new((theta / 2.0).cos(), 0.0),
            Complex64::from_polar((theta / 2.0).sin(), phi),
        ],
    )
    .expect("valid Bloch point")
}

/// Heralded teleportation of Haar-random inputs through pairs from
/// `source`: the sender station probes the input atom together with its
/// pair half, and an in-window count with exactly one bright atom heralds
/// success; the paired projection phase is set to the pair's nominal
/// phase so the delivered state needs no further correction.
pub fn run_teleportation(
    source: &mut dyn PairSource,
    attempts: u64,
    model: &PhotonCountModel,
    rng: &mut ChaCha8Rng,
) -> Result<TeleportResult> {
    let mut successes = 0u64;
    let mut fid_sum = 0.0;
    for _ in 0..attempts {
        let input = random_input(rng);
        let (pair, nominal) = source.sample(rng);
        let joint = input.tensor(&pair)?;
        let (bright, _) = sample_bright_pattern(&joint, 0, 1, rng);
        let count = sample_count(model.lambda_for(bright), rng)?;
        if model.classify(count) != CountClass::InWindow {
            continue;
        }
        successes += 1;
        let delivered = if bright == 1 {
            single_bright_projection(&joint, 0, 1, nominal)?
                .state
                .expect("one-bright weight sampled positive")
                .relabel_s_to_g(&[0, 1])?
        } else {
            let bit = if bright == 0 { 1 } else { 0 };
            joint
                .project_bit(0, bit)?
                .project_bit(1, bit)?
                .relabel_s_to_g(&[0, 1])?
        };
        fid_sum += delivered.fidelity(&input)?;
    }
    let success_rate = successes as f64 / attempts as f64;
    let mean_fidelity = if successes > 0 { fid_sum / successes as f64 } else { 0.0 };
    Ok(TeleportResult { attempts, successes, success_rate, mean_fidelity })
}
