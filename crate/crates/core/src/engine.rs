//! Monte-Carlo execution of the repeater protocol: heralded entanglement
//! generation in basic links, nested entanglement swapping with photon
//! over-count failure detection, memory decay during waits, and ensemble
//! aggregation on reproducible per-trial rng substreams.
//!
//! Ideal pairs are tracked symbolically by their relative phase; any
//! noise event (decay jump, dark-count admixture, false herald) drops the
//! affected register to the full state-vector route in
//! [`crate::quantum`]. `force_exact` in the config disables the symbolic
//! shortcut entirely, which the test suite uses to cross-check the two
//! routes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::config::{LinkParams, RepeaterConfig, TimingMode};
use crate::error::{Error, Result};
use crate::photon::{CountClass, DiscriminationProfile};
use crate::quantum::{
    amplitude_decay_trajectory, entangled_pair_state, phase_kick, single_bright_projection,
    PureState,
};

/// Derive the rng for one trial (or one worker stream) from the run seed.
/// SplitMix64 over (seed, stream) so streams are independent and the
/// assignment of trials to workers cannot change the results.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

#[derive(Debug, Clone)]
enum PairRepr {
    /// Exactly |ψ(state_phase)⟩.
    Ideal { state_phase: f64 },
    Exact(PureState),
}

/// A distributed two-atom entangled pair.
#[derive(Debug, Clone)]
pub struct EntangledPair {
    /// Chain node ids of the two end stations.
    pub endpoints: (u32, u32),
    /// Nominal accumulated phase φ of |ψ(φ)⟩ (noise-free bookkeeping).
    pub phase: f64,
    /// Trial clock time at which the pair was heralded.
    pub created_at: f64,
    repr: PairRepr,
}

impl EntangledPair {
    pub fn ideal(endpoints: (u32, u32), phase: f64, created_at: f64) -> Self {
        EntangledPair { endpoints, phase, created_at, repr: PairRepr::Ideal { state_phase: phase } }
    }

    pub fn with_state(
        endpoints: (u32, u32),
        phase: f64,
        created_at: f64,
        state: PureState,
    ) -> Self {
        EntangledPair { endpoints, phase, created_at, repr: PairRepr::Exact(state) }
    }

    /// True while the pair is still exactly |ψ(φ)⟩ for some φ.
    pub fn is_ideal(&self) -> bool {
        matches!(self.repr, PairRepr::Ideal { .. })
    }

    /// Materialize the two-qubit state.
    pub fn state(&self) -> PureState {
        match &self.repr {
            PairRepr::Ideal { state_phase } => entangled_pair_state(*state_phase),
            PairRepr::Exact(s) => s.clone(),
        }
    }

    /// Fidelity to the nominal |ψ(phase)⟩.
    pub fn fidelity_to_nominal(&self) -> f64 {
        match &self.repr {
            PairRepr::Ideal { state_phase } => {
                let half = (state_phase - self.phase) / 2.0;
                half.cos().powi(2)
            }
            PairRepr::Exact(s) => s
                .fidelity(&entangled_pair_state(self.phase))
                .expect("pair states are two-qubit by construction"),
        }
    }
}

/// Outcome of a heralded attempt.
#[derive(Debug, Clone)]
pub enum AttemptOutcome {
    Success(EntangledPair),
    Failure,
}

impl AttemptOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, AttemptOutcome::Success(_))
    }
}

#[derive(Debug, Clone)]
pub struct GenerationAttempt {
    pub outcome: AttemptOutcome,
    /// Wall time consumed by the attempt (always T₀).
    pub elapsed: f64,
    /// Detector count recorded by the heralding station.
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct SwapAttempt {
    pub outcome: AttemptOutcome,
    pub count: u64,
    /// A decay jump fired during the probe and the heralding window still
    /// accepted the count.
    pub undetected_decay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    GenerationSuccess,
    GenerationFailure,
    SwapSuccess,
    SwapFailure,
}

/// One event of a trial's log: (trial clock, kind, nesting level).
pub type TrialEvent = (f64, EventKind, u32);

/// Full record of one end-to-end distribution trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub success_time: f64,
    /// Signed sum of all constituent generation phases (not reduced).
    pub final_phase: f64,
    pub final_fidelity: f64,
    pub generation_attempts: u64,
    pub swap_attempts_per_level: Vec<u64>,
    pub undetected_decays: u64,
    pub event_log: Vec<TrialEvent>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Aggregate statistics over an ensemble of independent trials.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub trials: u64,
    pub mean_time_s: f64,
    pub std_err_s: f64,
    pub min_time_s: f64,
    pub max_time_s: f64,
    pub p50_time_s: f64,
    pub p90_time_s: f64,
    pub p99_time_s: f64,
    pub histogram: Vec<HistogramBin>,
    pub mean_fidelity: f64,
    pub mean_generation_attempts: f64,
    pub mean_swap_attempts_per_level: Vec<f64>,
    /// Undetected-decay events per executed swap attempt.
    pub undetected_decay_rate: f64,
}

/// Precomputed execution context for one configuration.
pub struct Engine {
    cfg: RepeaterConfig,
    link: LinkParams,
    profile: DiscriminationProfile,
    poisson: [Poisson<f64>; 3],
    /// Analytic per-attempt success probability 0.5·P₁.
    success_p: f64,
    /// Decay jump probability over one swap probe, 1 − e^{−t_s/t_c}.
    p_swap_jump: f64,
    /// Analytic expected build time per level, E₀ = T₀/p, E_i = E_{i−1}/p.
    level_expected: Vec<f64>,
}

impl Engine {
    pub fn new(cfg: RepeaterConfig) -> Result<Self> {
        cfg.validate()?;
        let link = cfg.derive_link();
        let profile = cfg.count_model.discrimination_profile()?;
        let mk = |lambda: f64| {
            Poisson::new(lambda).map_err(|e| Error::InvalidParameter {
                field: "count_model",
                message: e.to_string(),
            })
        };
        let poisson = [
            mk(cfg.count_model.lambda_dark)?,
            mk(cfg.count_model.lambda_one)?,
            mk(cfg.count_model.lambda_two)?,
        ];
        let success_p = 0.5 * profile.p1;
        let p_swap_jump = 1.0 - (-cfg.t_s_s / cfg.t_c_s).exp();
        let mut level_expected = Vec::with_capacity(cfg.nesting_m as usize + 1);
        let mut e = link.t0_s / success_p;
        level_expected.push(e);
        for _ in 0..cfg.nesting_m {
            e /= success_p;
            level_expected.push(e);
        }
        Ok(Engine { cfg, link, profile, poisson, success_p, p_swap_jump, level_expected })
    }

    pub fn config(&self) -> &RepeaterConfig {
        &self.cfg
    }

    pub fn link(&self) -> LinkParams {
        self.link
    }

    pub fn profile(&self) -> DiscriminationProfile {
        self.profile
    }

    /// Analytic heralding success probability 0.5·P₁ of one attempt.
    pub fn success_probability(&self) -> f64 {
        self.success_p
    }

    /// Analytic expected build time of a level-`i` pair under the
    /// mean-field schedule.
    pub fn expected_level_time(&self, level: u32) -> f64 {
        self.level_expected[level as usize]
    }

    fn sample_classified(&self, bright: usize, rng: &mut ChaCha8Rng) -> (u64, CountClass) {
        let x: f64 = rng.sample(self.poisson[bright.min(2)]);
        let n = x as u64;
        (n, self.cfg.count_model.classify(n))
    }

    /// One entanglement-generation attempt over a basic link.
    pub fn attempt_generation(
        &self,
        endpoints: (u32, u32),
        now: f64,
        rng: &mut ChaCha8Rng,
    ) -> GenerationAttempt {
        let (phi_l, phi_r) = if self.cfg.init_phase_spread > 0.0 {
            (
                rng.random::<f64>() * self.cfg.init_phase_spread,
                rng.random::<f64>() * self.cfg.init_phase_spread,
            )
        } else {
            (0.0, 0.0)
        };
        let nominal = phi_l - phi_r + self.cfg.channel_phase;

        if self.cfg.force_exact {
            return self.attempt_generation_exact(endpoints, now, phi_l, phi_r, nominal, rng);
        }

        // Bright pattern of the two freshly initialized atoms: both dark
        // 1/4, exactly one bright 1/2, both bright 1/4.
        let u: f64 = rng.random();
        let bright = if u < 0.25 {
            0
        } else if u < 0.75 {
            1
        } else {
            2
        };
        let (count, class) = self.sample_classified(bright, rng);
        if class != CountClass::InWindow {
            return GenerationAttempt {
                outcome: AttemptOutcome::Failure,
                elapsed: self.link.t0_s,
                count,
            };
        }
        let pair = match bright {
            1 => self.finish_generated_pair(endpoints, nominal, now + self.link.t0_s, rng),
            // False heralds: the register holds no one-bright component.
            0 => EntangledPair::with_state(
                endpoints,
                nominal,
                now + self.link.t0_s,
                PureState::basis(2, 0b11).expect("|ss>"),
            ),
            _ => EntangledPair::with_state(
                endpoints,
                nominal,
                now + self.link.t0_s,
                PureState::basis(2, 0b00).expect("|gg>"),
            ),
        };
        GenerationAttempt {
            outcome: AttemptOutcome::Success(pair),
            elapsed: self.link.t0_s,
            count,
        }
    }

    fn finish_generated_pair(
        &self,
        endpoints: (u32, u32),
        nominal: f64,
        created_at: f64,
        rng: &mut ChaCha8Rng,
    ) -> EntangledPair {
        // Dark-count admixture (single-photon probing only), unravelled
        // as a vacuum branch with weight c₀/(1+c₀).
        if self.cfg.single_photon_mode && self.cfg.c0 > 0.0 {
            let w = self.cfg.c0 / (self.cfg.c0 + 1.0);
            if rng.random::<f64>() < w {
                return EntangledPair::with_state(
                    endpoints,
                    nominal,
                    created_at,
                    PureState::basis(2, 0b11).expect("|ss>"),
                );
            }
        }
        let mut state_phase = nominal;
        if self.cfg.phase_sigma_link > 0.0 {
            let normal = rand_distr::Normal::new(0.0, self.cfg.phase_sigma_link)
                .expect("validated sigma");
            state_phase += rng.sample::<f64, _>(normal);
        }
        EntangledPair {
            endpoints,
            phase: nominal,
            created_at,
            repr: PairRepr::Ideal { state_phase },
        }
    }

    fn attempt_generation_exact(
        &self,
        endpoints: (u32, u32),
        now: f64,
        phi_l: f64,
        phi_r: f64,
        nominal: f64,
        rng: &mut ChaCha8Rng,
    ) -> GenerationAttempt {
        let joint = crate::quantum::init_node_superposition(phi_l)
            .tensor(&crate::quantum::init_node_superposition(phi_r))
            .expect("two single qubits");
        let (bright, _) = sample_bright_pattern(&joint, 0, 1, rng);
        let (count, class) = self.sample_classified(bright, rng);
        if class != CountClass::InWindow {
            return GenerationAttempt {
                outcome: AttemptOutcome::Failure,
                elapsed: self.link.t0_s,
                count,
            };
        }
        let created_at = now + self.link.t0_s;
        let pair = if bright == 1 {
            let out = single_bright_projection(&joint, 0, 1, self.cfg.channel_phase)
                .expect("valid projection");
            let mut state = out.state.expect("one-bright weight sampled positive");
            if self.cfg.single_photon_mode && self.cfg.c0 > 0.0 {
                let w = self.cfg.c0 / (self.cfg.c0 + 1.0);
                if rng.random::<f64>() < w {
                    state = PureState::basis(2, 0b11).expect("|ss>");
                }
            }
            if self.cfg.phase_sigma_link > 0.0 {
                state = phase_kick(&state, 0, self.cfg.phase_sigma_link, rng)
                    .expect("validated sigma");
            }
            EntangledPair::with_state(endpoints, nominal, created_at, state)
        } else {
            let projected = joint
                .project_bit(0, if bright == 0 { 1 } else { 0 })
                .and_then(|s| s.project_bit(1, if bright == 0 { 1 } else { 0 }))
                .expect("pattern weight sampled positive");
            EntangledPair::with_state(endpoints, nominal, created_at, projected)
        };
        GenerationAttempt {
            outcome: AttemptOutcome::Success(pair),
            elapsed: self.link.t0_s,
            count,
        }
    }

    /// One entanglement-swap attempt fusing two adjacent pairs. On any
    /// failure both input pairs are consumed.
    pub fn attempt_swap(
        &self,
        pair_a: &EntangledPair,
        pair_b: &EntangledPair,
        now: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<SwapAttempt> {
        if pair_a.endpoints.1 != pair_b.endpoints.0 {
            return Err(Error::NonAdjacentPairs(pair_a.endpoints.1, pair_b.endpoints.0));
        }
        let endpoints = (pair_a.endpoints.0, pair_b.endpoints.1);
        let nominal = pair_a.phase + pair_b.phase;

        if !self.cfg.force_exact {
            if let (PairRepr::Ideal { state_phase: ph1 }, PairRepr::Ideal { state_phase: ph2 }) =
                (&pair_a.repr, &pair_b.repr)
            {
                return Ok(self.attempt_swap_symbolic(endpoints, nominal, *ph1, *ph2, now, rng));
            }
        }
        self.attempt_swap_exact(pair_a, pair_b, endpoints, nominal, now, rng)
    }

    /// Closed-form route for two ideal input pairs. The joint state on
    /// (L, I₁, I₂, R) is
    ///   (|gsgs⟩ + e^{iφ₂}|gssg⟩ + e^{iφ₁}|sggs⟩ + e^{i(φ₁+φ₂)}|sgsg⟩)/2
    /// and no-jump decay evolution only rescales the four magnitudes, so
    /// the trajectory can be tracked with four reals until a jump fires.
    fn attempt_swap_symbolic(
        &self,
        endpoints: (u32, u32),
        nominal: f64,
        ph1: f64,
        ph2: f64,
        now: f64,
        rng: &mut ChaCha8Rng,
    ) -> SwapAttempt {
        let p = self.p_swap_jump;
        let q = 1.0 - p;
        // Magnitudes of (|gsgs⟩, |gssg⟩, |sggs⟩, |sgsg⟩), unnormalized.
        let mut m = [1.0f64, 1.0, 1.0, 1.0];
        let mut jumped = false;
        let mut full: Option<PureState> = None;

        if p > 0.0 {
            // Decay step on I₁ (s in components 0 and 1).
            let total = m.iter().map(|x| x * x).sum::<f64>();
            let w_s = (m[0] * m[0] + m[1] * m[1]) / total;
            if rng.random::<f64>() < p * w_s {
                jumped = true;
                full = Some(joint_after_jump(ph1, ph2, &m, 1));
            } else {
                m[0] *= q.sqrt();
                m[1] *= q.sqrt();
            }
            if full.is_none() {
                // Decay step on I₂ (s in components 1 and 3).
                let total = m.iter().map(|x| x * x).sum::<f64>();
                let w_s = (m[1] * m[1] + m[3] * m[3]) / total;
                if rng.random::<f64>() < p * w_s {
                    jumped = true;
                    full = Some(joint_after_jump(ph1, ph2, &m, 2));
                } else {
                    m[1] *= q.sqrt();
                    m[3] *= q.sqrt();
                }
            }
        }

        if let Some(state) = full {
            // A jump fired: finish on the state-vector route.
            return self.herald_swap_on_state(&state, endpoints, nominal, now, jumped, rng);
        }

        let total = m.iter().map(|x| x * x).sum::<f64>();
        let w_dd = m[1] * m[1] / total;
        let w_bb = m[2] * m[2] / total;
        let u: f64 = rng.random();
        let bright = if u < w_dd {
            0
        } else if u < w_dd + w_bb {
            2
        } else {
            1
        };
        let (count, class) = self.sample_classified(bright, rng);
        if class != CountClass::InWindow {
            return SwapAttempt { outcome: AttemptOutcome::Failure, count, undetected_decay: false };
        }
        let pair = match bright {
            1 => {
                // Both one-bright magnitudes carry exactly one no-jump
                // factor, so the heralded pair is ideal again.
                debug_assert!((m[0] - m[3]).abs() < 1e-12);
                EntangledPair {
                    endpoints,
                    phase: nominal,
                    created_at: now,
                    repr: PairRepr::Ideal { state_phase: ph1 + ph2 },
                }
            }
            0 => EntangledPair::with_state(
                endpoints,
                nominal,
                now,
                // dd component |gssg⟩ relabeled on (I₁, I₂) → |gg⟩.
                PureState::basis(2, 0b00).expect("|gg>"),
            ),
            _ => EntangledPair::with_state(
                endpoints,
                nominal,
                now,
                // bb component |sggs⟩ relabeled → |ss⟩.
                PureState::basis(2, 0b11).expect("|ss>"),
            ),
        };
        SwapAttempt {
            outcome: AttemptOutcome::Success(pair),
            count,
            undetected_decay: false,
        }
    }

    fn attempt_swap_exact(
        &self,
        pair_a: &EntangledPair,
        pair_b: &EntangledPair,
        endpoints: (u32, u32),
        nominal: f64,
        now: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<SwapAttempt> {
        let mut joint = pair_a.state().tensor(&pair_b.state())?;
        let mut jumped = false;
        for q in [1usize, 2] {
            let (next, j) =
                amplitude_decay_trajectory(&joint, q, self.cfg.t_s_s, self.cfg.t_c_s, rng)?;
            joint = next;
            jumped |= j;
        }
        Ok(self.herald_swap_on_state(&joint, endpoints, nominal, now, jumped, rng))
    }

    fn herald_swap_on_state(
        &self,
        joint: &PureState,
        endpoints: (u32, u32),
        nominal: f64,
        now: f64,
        jumped: bool,
        rng: &mut ChaCha8Rng,
    ) -> SwapAttempt {
        let (bright, _) = sample_bright_pattern(joint, 1, 2, rng);
        let (count, class) = self.sample_classified(bright, rng);
        if class != CountClass::InWindow {
            return SwapAttempt { outcome: AttemptOutcome::Failure, count, undetected_decay: false };
        }
        let reduced = if bright == 1 {
            let out = single_bright_projection(joint, 1, 2, 0.0).expect("valid projection");
            out.state
                .expect("one-bright weight sampled positive")
                .relabel_s_to_g(&[1, 2])
                .expect("heralded components have definite intermediate bits")
        } else {
            let bit = if bright == 0 { 1 } else { 0 };
            joint
                .project_bit(1, bit)
                .and_then(|s| s.project_bit(2, bit))
                .and_then(|s| s.relabel_s_to_g(&[1, 2]))
                .expect("pattern weight sampled positive")
        };
        SwapAttempt {
            outcome: AttemptOutcome::Success(EntangledPair::with_state(
                endpoints, nominal, now, reduced,
            )),
            count,
            undetected_decay: jumped,
        }
    }

    /// Memory decay of a stored pair over a wait interval.
    fn decay_pair(&self, pair: &mut EntangledPair, dt: f64, rng: &mut ChaCha8Rng) {
        if dt <= 0.0 {
            return;
        }
        let p = 1.0 - (-dt / self.cfg.t_c_s).exp();
        if p == 0.0 {
            return;
        }
        match &pair.repr {
            PairRepr::Ideal { state_phase } => {
                let state_phase = *state_phase;
                let q = 1.0 - p;
                // Qubit 0: s weight 1/2.
                if rng.random::<f64>() < p * 0.5 {
                    // |sg⟩ survives the jump and becomes |gg⟩.
                    pair.repr =
                        PairRepr::Exact(PureState::basis(2, 0b00).expect("|gg>"));
                    return;
                }
                // After the no-jump rescale on qubit 0, the s weight on
                // qubit 1 is 1/(1+q).
                if rng.random::<f64>() < p / (1.0 + q) {
                    pair.repr =
                        PairRepr::Exact(PureState::basis(2, 0b00).expect("|gg>"));
                    return;
                }
                // Both no-jump factors hit exactly one component each:
                // the pair stays ideal.
                pair.repr = PairRepr::Ideal { state_phase };
            }
            PairRepr::Exact(state) => {
                let mut s = state.clone();
                for q in [0usize, 1] {
                    s = amplitude_decay_trajectory(&s, q, dt, self.cfg.t_c_s, rng)
                        .expect("valid decay parameters")
                        .0;
                }
                pair.repr = PairRepr::Exact(s);
            }
        }
    }

    /// One full nested distribution trial.
    pub fn run_nested_trial(&self, rng: &mut ChaCha8Rng) -> TrialResult {
        self.run_nested_trial_with(rng, true)
    }

    /// As [`Self::run_nested_trial`]; event logging is optional because
    /// large ensembles do not want per-event allocation.
    pub fn run_nested_trial_with(&self, rng: &mut ChaCha8Rng, log_events: bool) -> TrialResult {
        let m = self.cfg.nesting_m;
        let mut stats = TrialStats {
            generation_attempts: 0,
            swap_attempts: vec![0; m as usize],
            undetected_decays: 0,
            events: if log_events { Some(Vec::new()) } else { None },
        };
        let (pair, elapsed) = self.build_level(m, 0, 0.0, &mut stats, rng);
        let final_fidelity = pair.fidelity_to_nominal();
        TrialResult {
            success_time: elapsed,
            final_phase: pair.phase,
            final_fidelity,
            generation_attempts: stats.generation_attempts,
            swap_attempts_per_level: stats.swap_attempts,
            undetected_decays: stats.undetected_decays,
            event_log: stats.events.unwrap_or_default(),
        }
    }

    fn build_level(
        &self,
        level: u32,
        left_node: u32,
        start: f64,
        stats: &mut TrialStats,
        rng: &mut ChaCha8Rng,
    ) -> (EntangledPair, f64) {
        if level == 0 {
            let right_node = left_node + 1;
            let mut elapsed = 0.0;
            loop {
                stats.generation_attempts += 1;
                let attempt = self.attempt_generation((left_node, right_node), start + elapsed, rng);
                elapsed += attempt.elapsed;
                match attempt.outcome {
                    AttemptOutcome::Success(pair) => {
                        stats.log(start + elapsed, EventKind::GenerationSuccess, 0);
                        return (pair, elapsed);
                    }
                    AttemptOutcome::Failure => {
                        stats.log(start + elapsed, EventKind::GenerationFailure, 0);
                    }
                }
            }
        }

        let span = 1u32 << level;
        let mid_node = left_node + span / 2;
        let mut elapsed = 0.0;
        loop {
            let (mut pair_a, t_a) = self.build_level(level - 1, left_node, start + elapsed, stats, rng);
            let (mut pair_b, t_b) = self.build_level(level - 1, mid_node, start + elapsed, stats, rng);
            let attempt_time = match self.cfg.timing_mode {
                TimingMode::MeanField => self.level_expected[level as usize - 1],
                TimingMode::ParallelChildren => {
                    // Children run concurrently; the earlier one waits in
                    // memory for the later one.
                    let wait = (t_a - t_b).abs();
                    if t_a < t_b {
                        self.decay_pair(&mut pair_a, wait, rng);
                    } else {
                        self.decay_pair(&mut pair_b, wait, rng);
                    }
                    let latency = if self.cfg.swap_heralding_latency {
                        let l_level_km = self.link.l0_km * f64::from(span);
                        l_level_km * 1000.0 / (2.0 * self.cfg.c_fiber_m_s)
                    } else {
                        0.0
                    };
                    t_a.max(t_b) + latency
                }
            };
            elapsed += attempt_time;
            stats.swap_attempts[level as usize - 1] += 1;
            let attempt = self
                .attempt_swap(&pair_a, &pair_b, start + elapsed, rng)
                .expect("children are adjacent by construction");
            if attempt.undetected_decay {
                stats.undetected_decays += 1;
            }
            match attempt.outcome {
                AttemptOutcome::Success(pair) => {
                    stats.log(start + elapsed, EventKind::SwapSuccess, level);
                    return (pair, elapsed);
                }
                AttemptOutcome::Failure => {
                    stats.log(start + elapsed, EventKind::SwapFailure, level);
                }
            }
        }
    }

    /// Run `trials` independent trials on per-trial rng substreams and
    /// aggregate. Identical (seed, config) gives identical statistics no
    /// matter how the trials would be scheduled.
    pub fn run_ensemble(&self, trials: u64) -> EnsembleStats {
        assert!(trials >= 1, "at least one trial required");
        let mut times = Vec::with_capacity(trials as usize);
        let mut fid_sum = 0.0;
        let mut gen_sum = 0.0;
        let mut swap_sums = vec![0.0f64; self.cfg.nesting_m as usize];
        let mut swap_total = 0u64;
        let mut undetected = 0u64;
        for i in 0..trials {
            let mut rng = trial_rng(self.cfg.seed, i);
            let trial = self.run_nested_trial_with(&mut rng, false);
            times.push(trial.success_time);
            fid_sum += trial.final_fidelity;
            gen_sum += trial.generation_attempts as f64;
            for (acc, n) in swap_sums.iter_mut().zip(&trial.swap_attempts_per_level) {
                *acc += *n as f64;
                swap_total += n;
            }
            undetected += trial.undetected_decays;
        }
        let n = trials as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = if trials > 1 {
            times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = times.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        let pct = |p: f64| sorted[((p * (n - 1.0)).round() as usize).min(sorted.len() - 1)];
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        let bins = 20usize;
        let width = ((max - min) / bins as f64).max(f64::MIN_POSITIVE);
        let mut histogram: Vec<HistogramBin> = (0..bins)
            .map(|i| HistogramBin {
                lo: min + width * i as f64,
                hi: min + width * (i + 1) as f64,
                count: 0,
            })
            .collect();
        for t in &times {
            let idx = (((t - min) / width) as usize).min(bins - 1);
            histogram[idx].count += 1;
        }
        EnsembleStats {
            trials,
            mean_time_s: mean,
            std_err_s: (var / n).sqrt(),
            min_time_s: min,
            max_time_s: max,
            p50_time_s: pct(0.50),
            p90_time_s: pct(0.90),
            p99_time_s: pct(0.99),
            histogram,
            mean_fidelity: fid_sum / n,
            mean_generation_attempts: gen_sum / n,
            mean_swap_attempts_per_level: swap_sums.iter().map(|s| s / n).collect(),
            undetected_decay_rate: if swap_total > 0 {
                undetected as f64 / swap_total as f64
            } else {
                0.0
            },
        }
    }
}

struct TrialStats {
    generation_attempts: u64,
    swap_attempts: Vec<u64>,
    undetected_decays: u64,
    events: Option<Vec<TrialEvent>>,
}

impl TrialStats {
    fn log(&mut self, time: f64, kind: EventKind, level: u32) {
        if let Some(events) = &mut self.events {
            events.push((time, kind, level));
        }
    }
}

/// Sample the bright pattern (0, 1 or 2 bright atoms) of two qubits from
/// the state's Born weights. Returns the pattern and its weight.
pub(crate) fn sample_bright_pattern(
    state: &PureState,
    qubit_a: usize,
    qubit_b: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, f64) {
    let mut w = [0.0f64; 3]; // index = number of bright (g) atoms
    for (i, a) in state.amplitudes().iter().enumerate() {
        let dark =
            state.bit_of(i, qubit_a) as usize + state.bit_of(i, qubit_b) as usize;
        w[2 - dark] += a.norm_sqr();
    }
    let total = w[0] + w[1] + w[2];
    let u: f64 = rng.random::<f64>() * total;
    if u < w[0] {
        (0, w[0] / total)
    } else if u < w[0] + w[1] {
        (1, w[1] / total)
    } else {
        (2, w[2] / total)
    }
}

/// Materialize the post-jump joint state when a decay jump fires on
/// intermediate atom `which` (1 = I₁, 2 = I₂) of the symbolic four-term
/// register with magnitudes `m`.
fn joint_after_jump(ph1: f64, ph2: f64, m: &[f64; 4], which: usize) -> PureState {
    use num_complex::Complex64;
    let mut amps = vec![Complex64::ZERO; 16];
    let coeffs = [
        (0b0101usize, Complex64::new(m[0], 0.0)),
        (0b0110, Complex64::from_polar(m[1], ph2)),
        (0b1001, Complex64::from_polar(m[2], ph1)),
        (0b1010, Complex64::from_polar(m[3], ph1 + ph2)),
    ];
    let mask = if which == 1 { 0b0100usize } else { 0b0010 };
    for (idx, c) in coeffs {
        if idx & mask != 0 {
            amps[idx & !mask] = c;
        }
    }
    PureState::new(4, amps).expect("jump leaves a normalizable state")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RepeaterConfig;
    use std::f64::consts::PI;

    fn engine(cfg: RepeaterConfig) -> Engine {
        Engine::new(cfg).unwrap()
    }

    fn noiseless() -> RepeaterConfig {
        RepeaterConfig { t_c_s: 1e12, ..Default::default() }
    }

    #[test]
    fn generation_success_rate_matches_half_p1() {
        let eng = engine(RepeaterConfig::default());
        let mut rng = trial_rng(1, 0);
        let n = 200_000u64;
        let successes = (0..n)
            .filter(|_| eng.attempt_generation((0, 1), 0.0, &mut rng).outcome.is_success())
            .count() as f64;
        let p = eng.success_probability();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((successes / n as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn generation_elapsed_is_t0_and_pair_is_ideal() {
        let eng = engine(noiseless());
        let mut rng = trial_rng(2, 0);
        loop {
            let attempt = eng.attempt_generation((3, 4), 1.0, &mut rng);
            assert!((attempt.elapsed - eng.link().t0_s).abs() < 1e-18);
            if let AttemptOutcome::Success(pair) = attempt.outcome {
                assert_eq!(pair.endpoints, (3, 4));
                assert_eq!(pair.phase, 0.0);
                assert!((pair.fidelity_to_nominal() - 1.0).abs() < 1e-12);
                assert!((pair.created_at - (1.0 + eng.link().t0_s)).abs() < 1e-12);
                break;
            }
        }
    }

    #[test]
    fn exact_and_symbolic_generation_rates_agree() {
        let eng_fast = engine(RepeaterConfig::default());
        let eng_exact = engine(RepeaterConfig { force_exact: true, ..Default::default() });
        let n = 100_000u64;
        let rate = |eng: &Engine, seed: u64| {
            let mut rng = trial_rng(seed, 0);
            (0..n)
                .filter(|_| eng.attempt_generation((0, 1), 0.0, &mut rng).outcome.is_success())
                .count() as f64
                / n as f64
        };
        let (rf, re) = (rate(&eng_fast, 5), rate(&eng_exact, 6));
        let p = eng_fast.success_probability();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((rf - re).abs() < 6.0 * sigma, "{rf} vs {re}");
    }

    #[test]
    fn swap_combines_phases_and_preserves_fidelity() {
        let eng = engine(noiseless());
        let mut rng = trial_rng(3, 0);
        let a = EntangledPair::ideal((0, 1), PI / 4.0, 0.0);
        let b = EntangledPair::ideal((1, 2), PI / 3.0, 0.0);
        loop {
            let attempt = eng.attempt_swap(&a, &b, 0.0, &mut rng).unwrap();
            if let AttemptOutcome::Success(pair) = attempt.outcome {
                assert_eq!(pair.endpoints, (0, 2));
                assert!((pair.phase - 7.0 * PI / 12.0).abs() < 1e-12);
                assert!((pair.fidelity_to_nominal() - 1.0).abs() < 1e-12);
                assert!(!attempt.undetected_decay);
                break;
            }
        }
    }

    #[test]
    fn swap_success_rate_matches_half_p1() {
        let eng = engine(RepeaterConfig::default());
        let mut rng = trial_rng(4, 0);
        let n = 200_000u64;
        let a = EntangledPair::ideal((0, 1), 0.3, 0.0);
        let b = EntangledPair::ideal((1, 2), 0.5, 0.0);
        let successes = (0..n)
            .filter(|_| eng.attempt_swap(&a, &b, 0.0, &mut rng).unwrap().outcome.is_success())
            .count() as f64;
        // Decay during the probe perturbs the rate at most by ~p_jump.
        let p = eng.success_probability();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((successes / n as f64 - p).abs() < 3.0 * sigma + 2e-4);
    }

    #[test]
    fn swap_rejects_non_adjacent_pairs() {
        let eng = engine(RepeaterConfig::default());
        let mut rng = trial_rng(5, 0);
        let a = EntangledPair::ideal((0, 1), 0.0, 0.0);
        let b = EntangledPair::ideal((2, 3), 0.0, 0.0);
        assert!(matches!(
            eng.attempt_swap(&a, &b, 0.0, &mut rng),
            Err(Error::NonAdjacentPairs(1, 2))
        ));
    }

    #[test]
    fn decayed_intermediates_fail_by_overcount() {
        // Both intermediate atoms collapsed to |g⟩: the probe sees two
        // bright atoms, λ_two counts land above the window.
        let eng = engine(RepeaterConfig::default());
        let mut rng = trial_rng(6, 0);
        let gg = PureState::basis(2, 0b00).unwrap();
        // Pairs whose intermediate halves already decayed to |g⟩.
        let a = EntangledPair::with_state((0, 1), 0.0, 0.0, gg.clone());
        let b = EntangledPair::with_state((1, 2), 0.0, 0.0, gg);
        for _ in 0..2000 {
            let attempt = eng.attempt_swap(&a, &b, 0.0, &mut rng).unwrap();
            assert!(!attempt.outcome.is_success());
            assert!(attempt.count > eng.config().count_model.window_hi);
        }
    }

    #[test]
    fn single_link_trial_time_is_geometric() {
        let cfg = RepeaterConfig { nesting_m: 0, ..noiseless() };
        let eng = engine(cfg);
        let trials = 20_000u64;
        let mut sum = 0.0;
        for i in 0..trials {
            let mut rng = trial_rng(7, i);
            let trial = eng.run_nested_trial_with(&mut rng, false);
            assert!(trial.success_time >= eng.link().t0_s * (1.0 - 1e-12));
            sum += trial.success_time;
        }
        let mean = sum / trials as f64;
        let p = eng.success_probability();
        let expect = eng.link().t0_s / p;
        // Geometric: std = T0·sqrt(1-p)/p.
        let se = eng.link().t0_s * (1.0 - p).sqrt() / p / (trials as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect}");
    }

    #[test]
    fn noiseless_trials_have_unit_fidelity_and_consistent_phase() {
        let cfg = RepeaterConfig {
            nesting_m: 3,
            init_phase_spread: 2.0 * PI,
            ..noiseless()
        };
        let eng = engine(cfg);
        for i in 0..50 {
            let mut rng = trial_rng(8, i);
            let trial = eng.run_nested_trial(&mut rng);
            assert!((trial.final_fidelity - 1.0).abs() < 1e-9, "trial {i}");
            assert_eq!(trial.swap_attempts_per_level.len(), 3);
            assert!(trial.generation_attempts >= 8);
            assert!(!trial.event_log.is_empty());
        }
    }

    #[test]
    fn meanfield_matches_analytic_mean() {
        let cfg = RepeaterConfig { nesting_m: 3, ..Default::default() };
        let eng = engine(cfg);
        let stats = eng.run_ensemble(5000);
        let expect = eng.expected_level_time(3);
        assert!(
            (stats.mean_time_s - expect).abs() < 3.0 * stats.std_err_s,
            "{} vs {expect}",
            stats.mean_time_s
        );
    }

    #[test]
    fn parallel_children_mean_dominates_meanfield() {
        let base = RepeaterConfig { nesting_m: 4, seed: 99, ..Default::default() };
        let mf = engine(base.clone()).run_ensemble(3000);
        let par = engine(RepeaterConfig {
            timing_mode: TimingMode::ParallelChildren,
            ..base
        })
        .run_ensemble(3000);
        assert!(par.mean_time_s > mf.mean_time_s, "{} vs {}", par.mean_time_s, mf.mean_time_s);
    }

    #[test]
    fn ensembles_are_deterministic() {
        let cfg = RepeaterConfig { nesting_m: 2, ..Default::default() };
        let a = engine(cfg.clone()).run_ensemble(500);
        let b = engine(cfg).run_ensemble(500);
        assert_eq!(a.mean_time_s.to_bits(), b.mean_time_s.to_bits());
        assert_eq!(a.std_err_s.to_bits(), b.std_err_s.to_bits());
        assert_eq!(a.mean_fidelity.to_bits(), b.mean_fidelity.to_bits());
    }

    #[test]
    fn undetected_decay_rate_within_analytic_bound() {
        // Artificially short coherence time to make decays visible.
        let cfg = RepeaterConfig { nesting_m: 2, t_c_s: 1e-5, ..Default::default() };
        let eng = engine(cfg.clone());
        let stats = eng.run_ensemble(2000);
        let p1 = eng.profile().p1;
        let bound = 0.5 * p1 * (1.0 - (-cfg.t_s_s / cfg.t_c_s).exp());
        assert!(
            stats.undetected_decay_rate <= bound * 1.1 + 1e-4,
            "{} vs bound {bound}",
            stats.undetected_decay_rate
        );
    }

    #[test]
    fn symbolic_and_exact_swaps_agree_statistically() {
        let n = 60_000u64;
        let run = |force_exact: bool, seed: u64| {
            let cfg = RepeaterConfig { force_exact, t_c_s: 1e-4, ..Default::default() };
            let eng = engine(cfg);
            let mut rng = trial_rng(seed, 0);
            let mut successes = 0u64;
            let mut fid = 0.0;
            for _ in 0..n {
                let a = EntangledPair::ideal((0, 1), 0.4, 0.0);
                let b = EntangledPair::ideal((1, 2), 0.9, 0.0);
                let attempt = eng.attempt_swap(&a, &b, 0.0, &mut rng).unwrap();
                if let AttemptOutcome::Success(pair) = attempt.outcome {
                    successes += 1;
                    fid += pair.fidelity_to_nominal();
                }
            }
            (successes as f64 / n as f64, fid / successes as f64)
        };
        let (rate_sym, fid_sym) = run(false, 21);
        let (rate_ex, fid_ex) = run(true, 22);
        let sigma = (0.5 * 0.5 / n as f64).sqrt();
        assert!((rate_sym - rate_ex).abs() < 6.0 * sigma, "{rate_sym} vs {rate_ex}");
        assert!((fid_sym - fid_ex).abs() < 0.01, "{fid_sym} vs {fid_ex}");
    }
}
