//! Exact state-vector and density-matrix engine for registers of one to
//! four two-level atoms.
//!
//! Basis convention: level `g` maps to bit 0, the metastable level `s` to
//! bit 1, and qubit 0 is the most significant bit of the basis index. An
//! atom in `g` is *bright* (it transmits the forward probe photons), an
//! atom in `s` is *dark*.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Largest register size the engine supports.
pub const MAX_QUBITS: usize = 4;

/// Normalization tolerance enforced after every normalizing operation.
pub const NORM_TOL: f64 = 1e-12;

/// A normalized pure state of up to [`MAX_QUBITS`] qubits.
///
/// A zero-qubit register (a bare scalar) is permitted as the result of
/// relabeling every qubit away.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

/// Result of applying a heralded projection: the renormalized
/// post-measurement state together with the Born probability (squared norm
/// before renormalization). A zero-probability outcome carries no state.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub probability: f64,
    pub state: Option<PureState>,
}

impl PureState {
    /// Build a state from raw amplitudes, normalizing them.
    pub fn new(num_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::RegisterOverflow { requested: num_qubits, max: MAX_QUBITS });
        }
        if amps.len() != 1 << num_qubits {
            return Err(Error::DimensionMismatch(format!(
                "expected {} amplitudes for {} qubits, got {}",
                1 << num_qubits,
                num_qubits,
                amps.len()
            )));
        }
        let mut state = PureState { num_qubits, amps };
        state.normalize()?;
        Ok(state)
    }

    /// Computational basis state |index⟩.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::RegisterOverflow { requested: num_qubits, max: MAX_QUBITS });
        }
        if index >= 1 << num_qubits {
            return Err(Error::DimensionMismatch(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut amps = vec![Complex64::ZERO; 1 << num_qubits];
        amps[index] = Complex64::ONE;
        Ok(PureState { num_qubits, amps })
    }

    /// Single atom in the ground (bright) level |g⟩.
    pub fn g() -> Self {
        Self::basis(1, 0).unwrap()
    }

    /// Single atom in the metastable (dark) level |s⟩.
    pub fn s() -> Self {
        Self::basis(1, 1).unwrap()
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn normalize(&mut self) -> Result<()> {
        let n2 = self.norm_sqr();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(Error::ZeroNorm(n2));
        }
        if (n2 - 1.0).abs() > NORM_TOL {
            let inv = 1.0 / n2.sqrt();
            for a in &mut self.amps {
                *a *= inv;
            }
        }
        Ok(())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange { index: qubit, num_qubits: self.num_qubits });
        }
        Ok(())
    }

    /// Value (0 for g, 1 for s) of `qubit` in basis index `index`.
    #[inline]
    pub fn bit_of(&self, index: usize, qubit: usize) -> u8 {
        ((index >> (self.num_qubits - 1 - qubit)) & 1) as u8
    }

    /// Kronecker product with `self`'s qubits most significant.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let n = self.num_qubits + other.num_qubits;
        if n > MAX_QUBITS {
            return Err(Error::RegisterOverflow { requested: n, max: MAX_QUBITS });
        }
        let mut amps = Vec::with_capacity(1 << n);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        PureState::new(n, amps)
    }

    /// Probability that `qubit` is found with value `bit` (0 = g, 1 = s).
    pub fn prob_of(&self, qubit: usize, bit: u8) -> Result<f64> {
        self.check_qubit(qubit)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| self.bit_of(*i, qubit) == bit)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Apply a general single-qubit unitary `u` (row-major 2×2) on `qubit`.
    pub fn apply_one_qubit(&self, qubit: usize, u: &[[Complex64; 2]; 2]) -> Result<PureState> {
        self.check_qubit(qubit)?;
        let shift = self.num_qubits - 1 - qubit;
        let mask = 1usize << shift;
        let mut amps = self.amps.clone();
        for i in 0..amps.len() {
            if i & mask == 0 {
                let j = i | mask;
                let a0 = self.amps[i];
                let a1 = self.amps[j];
                amps[i] = u[0][0] * a0 + u[0][1] * a1;
                amps[j] = u[1][0] * a0 + u[1][1] * a1;
            }
        }
        Ok(PureState { num_qubits: self.num_qubits, amps })
    }

    /// Phase gate diag(1, e^{iα}) on `qubit`.
    pub fn apply_phase_gate(&self, qubit: usize, alpha: f64) -> Result<PureState> {
        let phase = Complex64::from_polar(1.0, alpha);
        self.apply_one_qubit(qubit, &[[Complex64::ONE, Complex64::ZERO], [Complex64::ZERO, phase]])
    }

    /// Rotation about the X axis by angle `theta`:
    /// [[cos θ/2, −i sin θ/2], [−i sin θ/2, cos θ/2]].
    pub fn apply_rotation_x(&self, qubit: usize, theta: f64) -> Result<PureState> {
        let c = Complex64::new((theta / 2.0).cos(), 0.0);
        let s = Complex64::new(0.0, -(theta / 2.0).sin());
        self.apply_one_qubit(qubit, &[[c, s], [s, c]])
    }

    /// Born-rule z measurement of `qubit`. Returns the outcome bit
    /// (0 = g, bright) and the collapsed, renormalized state.
    pub fn measure_z<R: Rng + ?Sized>(&self, qubit: usize, rng: &mut R) -> Result<(u8, PureState)> {
        self.check_qubit(qubit)?;
        let p0 = self.prob_of(qubit, 0)?;
        let bit = if rng.random::<f64>() < p0 { 0u8 } else { 1u8 };
        Ok((bit, self.project_bit(qubit, bit)?))
    }

    /// Project `qubit` onto `bit` and renormalize.
    pub fn project_bit(&self, qubit: usize, bit: u8) -> Result<PureState> {
        self.check_qubit(qubit)?;
        let mut amps = self.amps.clone();
        for (i, a) in amps.iter_mut().enumerate() {
            if self.bit_of(i, qubit) != bit {
                *a = Complex64::ZERO;
            }
        }
        PureState::new(self.num_qubits, amps)
    }

    /// Idealized π-pulse-and-decay relabeling |s⟩→|g⟩ on each listed
    /// qubit, after which the listed qubits are factored out of the
    /// register. Fails when two surviving components would merge, i.e.
    /// when the map is not a relabeling on the given state.
    pub fn relabel_s_to_g(&self, qubits: &[usize]) -> Result<PureState> {
        for &q in qubits {
            self.check_qubit(q)?;
        }
        let n_out = self.num_qubits - qubits.len();
        let mut amps = vec![Complex64::ZERO; 1 << n_out];
        let mut filled = vec![false; 1 << n_out];
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() < 1e-24 {
                continue;
            }
            // Drop the listed qubits; keep the survivors in order.
            let mut out = 0usize;
            for q in 0..self.num_qubits {
                if qubits.contains(&q) {
                    continue;
                }
                out = (out << 1) | self.bit_of(i, q) as usize;
            }
            if filled[out] {
                return Err(Error::NonFactorable(format!(
                    "basis components collide at reduced index {out}"
                )));
            }
            filled[out] = true;
            amps[out] = *a;
        }
        let mut state = PureState { num_qubits: n_out, amps };
        state.normalize()?;
        Ok(state)
    }

    /// Overlap fidelity |⟨target|self⟩|².
    pub fn fidelity(&self, target: &PureState) -> Result<f64> {
        if self.num_qubits != target.num_qubits {
            return Err(Error::DimensionMismatch(format!(
                "fidelity between {}- and {}-qubit states",
                self.num_qubits, target.num_qubits
            )));
        }
        let ip: Complex64 =
            target.amps.iter().zip(&self.amps).map(|(t, a)| t.conj() * a).sum();
        Ok(ip.norm_sqr())
    }
}

/// Node initialization state (|g⟩ + e^{iφ}|s⟩)/√2.
pub fn init_node_superposition(phase: f64) -> PureState {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    PureState {
        num_qubits: 1,
        amps: vec![Complex64::new(r, 0.0), Complex64::from_polar(r, phase)],
    }
}

/// Heralded single-bright projection confirmed by an in-window photon
/// count: K = |g⟩⟨g|_a ⊗ |s⟩⟨s|_b + e^{iφ}|s⟩⟨s|_a ⊗ |g⟩⟨g|_b restricted
/// to qubits (`qubit_a`, `qubit_b`), so the reported probability is the
/// Born weight of the exactly-one-bright subspace.
pub fn single_bright_projection(
    state: &PureState,
    qubit_a: usize,
    qubit_b: usize,
    channel_phase: f64,
) -> Result<ProjectionOutcome> {
    state.check_qubit(qubit_a)?;
    state.check_qubit(qubit_b)?;
    if qubit_a == qubit_b {
        return Err(Error::InvalidParameter {
            field: "qubit_b",
            message: "projection qubits must be distinct".into(),
        });
    }
    let phase = Complex64::from_polar(1.0, channel_phase);
    let mut amps = vec![Complex64::ZERO; state.amps.len()];
    let mut probability = 0.0;
    for (i, a) in state.amps.iter().enumerate() {
        let (ba, bb) = (state.bit_of(i, qubit_a), state.bit_of(i, qubit_b));
        match (ba, bb) {
            // a bright (g), b dark (s)
            (0, 1) => {
                amps[i] = *a;
                probability += a.norm_sqr();
            }
            // a dark, b bright: picks up the channel phase
            (1, 0) => {
                amps[i] = phase * a;
                probability += a.norm_sqr();
            }
            _ => {}
        }
    }
    if probability <= NORM_TOL {
        return Ok(ProjectionOutcome { probability: 0.0, state: None });
    }
    let state = PureState::new(state.num_qubits, amps)?;
    Ok(ProjectionOutcome { probability, state: Some(state) })
}

/// One stochastic-trajectory step of amplitude damping |s⟩→|g⟩ on `qubit`
/// over an exposed interval `dt` with coherence time `t_c`. Returns the
/// evolved state and whether the jump fired.
pub fn amplitude_decay_trajectory<R: Rng + ?Sized>(
    state: &PureState,
    qubit: usize,
    dt: f64,
    t_c: f64,
    rng: &mut R,
) -> Result<(PureState, bool)> {
    state.check_qubit(qubit)?;
    if dt < 0.0 {
        return Err(Error::InvalidParameter { field: "dt", message: "must be ≥ 0".into() });
    }
    if t_c <= 0.0 {
        return Err(Error::InvalidParameter { field: "t_c", message: "must be > 0".into() });
    }
    let p = 1.0 - (-dt / t_c).exp();
    if p == 0.0 {
        return Ok((state.clone(), false));
    }
    let w_s = state.prob_of(qubit, 1)?;
    if rng.random::<f64>() < p * w_s {
        // Jump: transfer every s component to the matching g component.
        let shift = state.num_qubits - 1 - qubit;
        let mask = 1usize << shift;
        let mut amps = vec![Complex64::ZERO; state.amps.len()];
        for (i, a) in state.amps.iter().enumerate() {
            if i & mask != 0 {
                amps[i & !mask] = *a;
            }
        }
        Ok((PureState::new(state.num_qubits, amps)?, true))
    } else {
        // No-jump evolution: rescale the s amplitude and renormalize.
        let scale = (1.0 - p).sqrt();
        let mut amps = state.amps.clone();
        for (i, a) in amps.iter_mut().enumerate() {
            if state.bit_of(i, qubit) == 1 {
                *a *= scale;
            }
        }
        Ok((PureState::new(state.num_qubits, amps)?, false))
    }
}

/// Trajectory amplitude damping, discarding the jump flag.
pub fn amplitude_decay_sample<R: Rng + ?Sized>(
    state: &PureState,
    qubit: usize,
    dt: f64,
    t_c: f64,
    rng: &mut R,
) -> Result<PureState> {
    amplitude_decay_trajectory(state, qubit, dt, t_c, rng).map(|(s, _)| s)
}

/// Random-walk channel phase noise: phase gate with α = δ, δ ~ N(0, σ²).
pub fn phase_kick<R: Rng + ?Sized>(
    state: &PureState,
    qubit: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<PureState> {
    if sigma < 0.0 {
        return Err(Error::InvalidParameter { field: "sigma", message: "must be ≥ 0".into() });
    }
    if sigma == 0.0 {
        return Ok(state.clone());
    }
    let normal = rand_distr::Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter {
        field: "sigma",
        message: e.to_string(),
    })?;
    let delta: f64 = rng.sample(normal);
    state.apply_phase_gate(qubit, delta)
}

/// A Hermitian, unit-trace, positive density matrix of up to four qubits,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    mat: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn from_pure(psi: &PureState) -> Self {
        let d = psi.amps.len();
        let mut mat = vec![Complex64::ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                mat[i * d + j] = psi.amps[i] * psi.amps[j].conj();
            }
        }
        DensityMatrix { num_qubits: psi.num_qubits, mat }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.mat[row * self.dim() + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.entry(i, i)).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (i..d).all(|j| (self.entry(i, j) - self.entry(j, i).conj()).norm() <= tol))
    }

    /// Smallest eigenvalue estimate for a Hermitian matrix: power
    /// iteration on the Gershgorin-shifted complement bI − ρ. The
    /// matrices here are at most 16×16, so this is plenty.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        // Gershgorin upper bound on eigenvalues of ρ.
        let b = (0..d)
            .map(|i| {
                self.entry(i, i).re
                    + (0..d).filter(|&j| j != i).map(|j| self.entry(i, j).norm()).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
            + 1.0;
        // Power iteration on B = bI − ρ; λ_max(B) = b − λ_min(ρ).
        let mut v: Vec<Complex64> =
            (0..d).map(|i| Complex64::new(1.0 + (i as f64) * 0.13, 0.07 * i as f64)).collect();
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let mut w = vec![Complex64::ZERO; d];
            for (i, wi) in w.iter_mut().enumerate() {
                let mut acc = b * v[i];
                for (j, vj) in v.iter().enumerate() {
                    acc -= self.entry(i, j) * vj;
                }
                *wi = acc;
            }
            let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return b;
            }
            let next: f64 = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (vi.conj() * wi).re)
                .sum::<f64>()
                / v.iter().map(|x| x.norm_sqr()).sum::<f64>();
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
            if (next - lambda).abs() < 1e-14 {
                lambda = next;
                break;
            }
            lambda = next;
        }
        b - lambda
    }

    /// ⟨target|ρ|target⟩.
    pub fn fidelity(&self, target: &PureState) -> Result<f64> {
        if self.num_qubits != target.num_qubits {
            return Err(Error::DimensionMismatch(format!(
                "fidelity between a {}-qubit matrix and a {}-qubit state",
                self.num_qubits, target.num_qubits
            )));
        }
        let d = self.dim();
        let mut acc = Complex64::ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += target.amps[i].conj() * self.entry(i, j) * target.amps[j];
            }
        }
        Ok(acc.re)
    }

    /// Conjugate by a single-qubit unitary: ρ → (U ⊗ 1) ρ (U ⊗ 1)†.
    pub fn apply_one_qubit(&self, qubit: usize, u: &[[Complex64; 2]; 2]) -> Result<DensityMatrix> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange { index: qubit, num_qubits: self.num_qubits });
        }
        let d = self.dim();
        let shift = self.num_qubits - 1 - qubit;
        let mask = 1usize << shift;
        let mut out = self.mat.clone();
        // Left multiply by U.
        for col in 0..d {
            for i in 0..d {
                if i & mask == 0 {
                    let j = i | mask;
                    let a0 = out[i * d + col];
                    let a1 = out[j * d + col];
                    out[i * d + col] = u[0][0] * a0 + u[0][1] * a1;
                    out[j * d + col] = u[1][0] * a0 + u[1][1] * a1;
                }
            }
        }
        // Right multiply by U†.
        for row in 0..d {
            for i in 0..d {
                if i & mask == 0 {
                    let j = i | mask;
                    let a0 = out[row * d + i];
                    let a1 = out[row * d + j];
                    out[row * d + i] = a0 * u[0][0].conj() + a1 * u[0][1].conj();
                    out[row * d + j] = a0 * u[1][0].conj() + a1 * u[1][1].conj();
                }
            }
        }
        Ok(DensityMatrix { num_qubits: self.num_qubits, mat: out })
    }

    /// Exact amplitude-damping channel on `qubit` with damping
    /// probability p = 1 − e^{−dt/t_c} (Kraus form). Closed-form partner
    /// of [`amplitude_decay_trajectory`].
    pub fn amplitude_damping(&self, qubit: usize, dt: f64, t_c: f64) -> Result<DensityMatrix> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange { index: qubit, num_qubits: self.num_qubits });
        }
        let p = 1.0 - (-dt / t_c).exp();
        let k0 = [
            [Complex64::ONE, Complex64::ZERO],
            [Complex64::ZERO, Complex64::new((1.0 - p).sqrt(), 0.0)],
        ];
        let k1 = [
            [Complex64::ZERO, Complex64::new(p.sqrt(), 0.0)],
            [Complex64::ZERO, Complex64::ZERO],
        ];
        let r0 = self.apply_kraus(qubit, &k0)?;
        let r1 = self.apply_kraus(qubit, &k1)?;
        let mat = r0.mat.iter().zip(&r1.mat).map(|(a, b)| a + b).collect();
        Ok(DensityMatrix { num_qubits: self.num_qubits, mat })
    }

    fn apply_kraus(&self, qubit: usize, k: &[[Complex64; 2]; 2]) -> Result<DensityMatrix> {
        // K ρ K† without renormalization; reuse the unitary conjugation
        // plumbing, which never assumed unitarity.
        self.apply_one_qubit(qubit, k)
    }

    /// Probability of reading `bit` on `qubit` in the z basis.
    pub fn prob_of(&self, qubit: usize, bit: u8) -> Result<f64> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange { index: qubit, num_qubits: self.num_qubits });
        }
        let d = self.dim();
        let shift = self.num_qubits - 1 - qubit;
        Ok((0..d)
            .filter(|i| ((i >> shift) & 1) as u8 == bit)
            .map(|i| self.entry(i, i).re)
            .sum())
    }

    /// Diagonal (joint z-basis) outcome probabilities.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i).re).collect()
    }
}

/// Detector-dark-count mixed state ρ(c₀, φ) = (c₀|ss⟩⟨ss| + |ψ⟩⟨ψ|)/(c₀+1),
/// where |ss⟩ is the both-atoms-dark component of a two-qubit register.
pub fn dark_count_mixture(psi: &PureState, c0: f64) -> Result<DensityMatrix> {
    if psi.num_qubits != 2 {
        return Err(Error::DimensionMismatch(format!(
            "dark-count mixture is defined on 2-qubit states, got {}",
            psi.num_qubits
        )));
    }
    if c0 < 0.0 {
        return Err(Error::InvalidParameter { field: "c0", message: "must be ≥ 0".into() });
    }
    let vacuum = PureState::basis(2, 0b11)?; // |ss⟩
    let mut rho = DensityMatrix::from_pure(psi);
    let vac = DensityMatrix::from_pure(&vacuum);
    let norm = 1.0 / (c0 + 1.0);
    for (r, v) in rho.mat.iter_mut().zip(&vac.mat) {
        *r = (*r + c0 * v) * norm;
    }
    Ok(rho)
}

/// |ψ(φ)⟩ = (|gs⟩ + e^{iφ}|sg⟩)/√2, the distributed entangled pair.
pub fn entangled_pair_state(phase: f64) -> PureState {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    PureState {
        num_qubits: 2,
        amps: vec![
            Complex64::ZERO,
            Complex64::new(r, 0.0),
            Complex64::from_polar(r, phase),
            Complex64::ZERO,
        ],
    }
}
