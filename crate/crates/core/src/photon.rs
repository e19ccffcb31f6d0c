//! Poisson photon-counting model for the threshold detectors.
//!
//! Forward-probe counts from zero, one, or two bright atoms are Poisson
//! with means λ_dark, λ_one and λ_two. The heralding window [lo, hi]
//! (inclusive) certifies the exactly-one-bright event; counts above the
//! window flag an over-count (e.g. both intermediate atoms decayed), and
//! counts below flag a failed attempt.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Poisson means and heralding window for one detector station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonCountModel {
    pub lambda_dark: f64,
    pub lambda_one: f64,
    pub lambda_two: f64,
    pub window_lo: u64,
    pub window_hi: u64,
}

impl Default for PhotonCountModel {
    fn default() -> Self {
        PhotonCountModel {
            lambda_dark: 10.0,
            lambda_one: 100.0,
            lambda_two: 200.0,
            window_lo: 40,
            window_hi: 120,
        }
    }
}

impl PhotonCountModel {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_dark.is_nan() || self.lambda_dark < 0.0 {
            return Err(Error::InvalidParameter {
                field: "lambda_dark",
                message: "must be ≥ 0".into(),
            });
        }
        if !(self.lambda_dark < self.lambda_one && self.lambda_one < self.lambda_two) {
            return Err(Error::InvalidParameter {
                field: "lambda_one",
                message: "means must satisfy lambda_dark < lambda_one < lambda_two".into(),
            });
        }
        if self.window_lo > self.window_hi {
            return Err(Error::InvalidParameter {
                field: "window_lo",
                message: "window_lo must be ≤ window_hi".into(),
            });
        }
        Ok(())
    }

    /// Mean count for the given number of bright atoms (0, 1 or 2).
    pub fn lambda_for(&self, bright: usize) -> f64 {
        match bright {
            0 => self.lambda_dark,
            1 => self.lambda_one,
            _ => self.lambda_two,
        }
    }

    /// Which side of the heralding window a count falls on. Both window
    /// bounds are inclusive.
    pub fn classify(&self, n: u64) -> CountClass {
        if n < self.window_lo {
            CountClass::BelowWindow
        } else if n <= self.window_hi {
            CountClass::InWindow
        } else {
            CountClass::AboveWindow
        }
    }

    pub fn discrimination_profile(&self) -> Result<DiscriminationProfile> {
        self.validate()?;
        Ok(DiscriminationProfile {
            p0: window_probability(self.lambda_dark, self.window_lo, self.window_hi)?,
            p1: window_probability(self.lambda_one, self.window_lo, self.window_hi)?,
            p2: window_probability(self.lambda_two, self.window_lo, self.window_hi)?,
        })
    }
}

/// In-window probabilities (P₀, P₁, P₂) for 0, 1 and 2 bright atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationProfile {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Exhaustive partition of counts around the heralding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountClass {
    BelowWindow,
    InWindow,
    AboveWindow,
}

/// Poisson pmf e^{−λ}λⁿ/n!, evaluated in log space so deep tails
/// (n ≫ λ or n ≪ λ) stay accurate.
pub fn poisson_pmf(n: u64, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidParameter {
            field: "lambda",
            message: format!("must be a positive finite real, got {lambda}"),
        });
    }
    let nf = n as f64;
    let log_p = nf * lambda.ln() - lambda - ln_gamma(nf + 1.0);
    Ok(log_p.exp())
}

/// Σ_{n=lo}^{hi} pmf(n, λ), accumulated in ascending magnitude.
pub fn window_probability(lambda: f64, lo: u64, hi: u64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidParameter {
            field: "lo",
            message: format!("window lower bound {lo} exceeds upper bound {hi}"),
        });
    }
    // The pmf is unimodal with mode ⌊λ⌋: sum each flank from its far end
    // toward the mode so small terms accumulate first.
    let mode = lambda.floor() as u64;
    let mid = mode.clamp(lo, hi);
    let mut left = 0.0;
    let mut n = lo;
    while n < mid {
        left += poisson_pmf(n, lambda)?;
        n += 1;
    }
    let mut right = 0.0;
    let mut n = hi;
    while n > mid {
        right += poisson_pmf(n, lambda)?;
        n -= 1;
    }
    Ok(left + right + poisson_pmf(mid, lambda)?)
}

/// Exact Poisson sample (inversion below, transformed rejection above;
/// never a normal approximation).
pub fn sample_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    let dist = rand_distr::Poisson::new(lambda).map_err(|e| Error::InvalidParameter {
        field: "lambda",
        message: e.to_string(),
    })?;
    let x: f64 = rng.sample(dist);
    Ok(x as u64)
}

/// Threshold readout used by the application protocols: 0 for n < lo
/// (dark), 1 for n ≥ lo (bright).
pub fn threshold_bit(n: u64, lo: u64) -> u8 {
    u8::from(n >= lo)
}

/// Mean detected photon number from one bright atom over a basic link:
/// N = e^{−L₀/(2 L_att)} · t_e / τ_B.
pub fn detected_mean(l0_km: f64, l_att_km: f64, t_e: f64, tau_b: f64) -> f64 {
    (-l0_km / (2.0 * l_att_km)).exp() * t_e / tau_b
}
