//! Seeded random processes and deterministic pulse trains driving the
//! data-center load patterns.
//!
//! All randomness flows through [`RngStream`]: one seed plus a per-consumer
//! stream id gives bit-identical draw sequences across runs while keeping
//! consumers (server noise, CPU jumps) statistically independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::{SimError, SimResult};

/// Seeded, stream-separated random number source.
///
/// Two streams built from the same seed but different stream ids never share
/// state; the same (seed, stream) pair always reproduces the same sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Zero-mean normal draw with the given standard deviation.
    pub fn normal(&mut self, std_dev: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * std_dev
    }

    /// Uniform draw on `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.rng.random_range(lo..=hi)
    }

    /// Bernoulli draw.
    pub fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p.clamp(0.0, 1.0))
    }
}

/// Ornstein-Uhlenbeck parameters: mean-reversion speed (1/s) and diffusion
/// coefficient (MW/sqrt(s)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub mean_reversion_per_s: f64,
    pub diffusion_mw: f64,
}

impl OuParams {
    /// Process disabled: stays at zero forever.
    pub const OFF: Self = Self {
        mean_reversion_per_s: 1.0,
        diffusion_mw: 0.0,
    };

    pub fn validate(&self) -> SimResult<()> {
        if !(self.mean_reversion_per_s > 0.0) {
            return Err(SimError::Config(format!(
                "OU mean reversion speed must be > 0, got {}",
                self.mean_reversion_per_s
            )));
        }
        if !(self.diffusion_mw >= 0.0) {
            return Err(SimError::Config(format!(
                "OU diffusion coefficient must be >= 0, got {}",
                self.diffusion_mw
            )));
        }
        Ok(())
    }

    /// Stationary standard deviation `sqrt(b^2 / 2a)`.
    pub fn stationary_std(&self) -> f64 {
        (self.diffusion_mw * self.diffusion_mw / (2.0 * self.mean_reversion_per_s)).sqrt()
    }
}

/// Compound-Poisson jump parameters for the batched CPU usage process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpParams {
    /// Jump scale multiplying the drawn amplitude.
    pub scale: f64,
    /// Poisson intensity (jumps per second).
    pub rate_per_s: f64,
    /// Uniform amplitude bounds.
    pub amp_lo: f64,
    pub amp_hi: f64,
}

impl JumpParams {
    pub const OFF: Self = Self {
        scale: 0.0,
        rate_per_s: 0.0,
        amp_lo: 0.0,
        amp_hi: 0.0,
    };

    pub fn validate(&self) -> SimResult<()> {
        if !(self.rate_per_s >= 0.0) {
            return Err(SimError::Config(format!(
                "jump rate must be >= 0, got {}",
                self.rate_per_s
            )));
        }
        if self.amp_lo > self.amp_hi {
            return Err(SimError::Config(format!(
                "jump amplitude bounds inverted: [{}, {}]",
                self.amp_lo, self.amp_hi
            )));
        }
        Ok(())
    }
}

/// Periodic pulse train: `high` on `[n*period, n*period + width)`, `low`
/// elsewhere, shifted by `phase_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    pub period_s: f64,
    pub width_s: f64,
    pub high: f64,
    pub low: f64,
    pub phase_offset_s: f64,
}

impl PulseParams {
    /// Constant-zero pulse train.
    pub const OFF: Self = Self {
        period_s: 1.0,
        width_s: 1.0,
        high: 0.0,
        low: 0.0,
        phase_offset_s: 0.0,
    };

    pub fn validate(&self) -> SimResult<()> {
        if !(self.width_s > 0.0 && self.width_s <= self.period_s) {
            return Err(SimError::Config(format!(
                "pulse width must satisfy 0 < width <= period, got width={} period={}",
                self.width_s, self.period_s
            )));
        }
        Ok(())
    }

    pub fn duty_cycle(&self) -> f64 {
        self.width_s / self.period_s
    }
}

/// One Euler-Maruyama step of the zero-mean OU process
/// `d eta = -a eta dt + b dW`.
///
/// When the diffusion is nonzero the output is clamped to three stationary
/// standard deviations, keeping the noise bounded.
pub fn ou_step(eta: f64, dt: f64, p: &OuParams, rng: &mut RngStream) -> SimResult<f64> {
    if !eta.is_finite() {
        return Err(SimError::NonFinite(format!("OU state eta = {eta}")));
    }
    debug_assert!(dt > 0.0);
    let dw = rng.normal(dt.sqrt());
    let mut next = eta - p.mean_reversion_per_s * eta * dt + p.diffusion_mw * dw;
    if p.diffusion_mw > 0.0 {
        let bound = 3.0 * p.stationary_std();
        next = next.clamp(-bound, bound);
    }
    Ok(next)
}

/// One step of the compound-Poisson usage process: with probability
/// `rate * dt` adds `scale * A`, `A ~ Uniform(amp_lo, amp_hi)`.
///
/// The result is clamped to `[0, 1]` (fraction of server resources in use).
pub fn jump_step(u: f64, dt: f64, p: &JumpParams, rng: &mut RngStream) -> f64 {
    debug_assert!((0.0..=1.0).contains(&u));
    let p_jump = (p.rate_per_s * dt).min(1.0);
    if p_jump > 0.0 && rng.chance(p_jump) {
        let amp = rng.uniform(p.amp_lo, p.amp_hi);
        (u + p.scale * amp).clamp(0.0, 1.0)
    } else {
        u
    }
}

/// Pulse train level at time `t`. The active interval is half-open
/// `[n*period, n*period + width)` so the function is single-valued at the
/// edges.
pub fn pulse_value(t: f64, p: &PulseParams) -> f64 {
    let phase = (t - p.phase_offset_s).rem_euclid(p.period_s);
    if phase < p.width_s {
        p.high
    } else {
        p.low
    }
}
