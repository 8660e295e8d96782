//! One-dimensional binary lattice partition chains and Gaussian-on-lattice
//! functionals: theta series, flatness factor, aliased entropy, mod-Λ channel
//! capacity, discrete Gaussian sampling, and per-level coset priors.
//!
//! All entropies and capacities are in bits. Lattice sums truncate once a
//! term drops below 1e-16 relative to the largest term seen.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::numeric::{adaptive_simpson, xlog2};
use crate::Result;

const LN2: f64 = std::f64::consts::LN_2;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const SUM_CUTOFF: f64 = 1e-16;

/// Scaled binary partition chain αZ / 2αZ / ... / 2^r αZ.
///
/// Level 0 is the top (finest) lattice αZ; level `levels` is the bottom
/// lattice 2^r αZ. Every step is a binary partition, so the fundamental
/// volume doubles per level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionChain {
    pub alpha: f64,
    pub levels: usize,
}

impl PartitionChain {
    pub fn new(alpha: f64, levels: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain("chain scaling alpha must be positive and finite"));
        }
        if levels == 0 {
            return Err(Error::domain("partition chain needs at least one level"));
        }
        Ok(PartitionChain { alpha, levels })
    }

    /// Spacing (= fundamental volume in 1-D) of the level-`l` lattice 2^l αZ,
    /// for 0 <= l <= levels.
    pub fn scale(&self, level: usize) -> f64 {
        debug_assert!(level <= self.levels);
        (1u64 << level) as f64 * self.alpha
    }

    pub fn top_scale(&self) -> f64 {
        self.alpha
    }

    pub fn bottom_scale(&self) -> f64 {
        self.scale(self.levels)
    }
}

/// Noise and shaping parameters of a wiretap instance.
///
/// `sigma_s` is the shaping standard deviation and is only required in shaped
/// mode; `center` is the discrete Gaussian center (0 for all built-in
/// constructions). The MMSE-scaled noise values are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub sigma_b: f64,
    pub sigma_e: f64,
    pub sigma_s: Option<f64>,
    pub center: f64,
}

impl GaussianParams {
    pub fn new(sigma_b: f64, sigma_e: f64, sigma_s: Option<f64>) -> Result<Self> {
        if !(sigma_b > 0.0 && sigma_e > 0.0) {
            return Err(Error::domain("noise deviations must be positive"));
        }
        if sigma_b > sigma_e {
            return Err(Error::domain(
                "wiretapper must be degraded: sigma_b <= sigma_e required",
            ));
        }
        if let Some(s) = sigma_s {
            if !(s > 0.0) {
                return Err(Error::domain("sigma_s must be positive"));
            }
        }
        Ok(GaussianParams { sigma_b, sigma_e, sigma_s, center: 0.0 })
    }

    /// MMSE-scaled noise pair (σ̃_b, σ̃_e) for the shaped construction.
    pub fn mmse_pair(&self) -> Result<(f64, f64)> {
        let s = self.sigma_s.ok_or_else(|| Error::config("sigma_s required for shaped mode"))?;
        Ok((mmse_sigma(s, self.sigma_b)?, mmse_sigma(s, self.sigma_e)?))
    }
}

/// Theta series of the lattice vZ: sum over k of exp(-pi*tau*(v k)^2).
pub fn theta_series(scale: f64, tau: f64) -> Result<f64> {
    if !(scale > 0.0 && tau > 0.0) {
        return Err(Error::domain("theta series needs positive scale and tau"));
    }
    let c = std::f64::consts::PI * tau * scale * scale;
    let mut sum = 1.0;
    let mut k = 1.0f64;
    loop {
        let term = (-c * k * k).exp();
        sum += 2.0 * term;
        if term < SUM_CUTOFF {
            break;
        }
        k += 1.0;
    }
    Ok(sum)
}

/// Flatness factor of vZ at noise deviation sigma, via the theta series.
pub fn flatness_factor(scale: f64, sigma: f64) -> Result<f64> {
    if !(scale > 0.0 && sigma > 0.0) {
        return Err(Error::domain("flatness factor needs positive scale and sigma"));
    }
    let vnr = scale * scale / (sigma * sigma);
    let theta = theta_series(scale, 1.0 / (TWO_PI * sigma * sigma))?;
    // Cancellation can leave a sub-ulp negative residue when the factor is ~0.
    Ok(((vnr / TWO_PI).sqrt() * theta - 1.0).max(0.0))
}

/// Density of the vZ-periodized Gaussian at x.
pub fn periodized_gaussian(x: f64, scale: f64, sigma: f64) -> f64 {
    let norm = 1.0 / ((TWO_PI).sqrt() * sigma);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let k0 = (x / scale).round();
    let mut sum = 0.0;
    let mut peak = 0.0f64;
    for dir in [1.0, -1.0] {
        let mut k = if dir > 0.0 { k0 } else { k0 - 1.0 };
        loop {
            let d = x - scale * k;
            let term = (-d * d * inv).exp();
            sum += term;
            peak = peak.max(term);
            if term < SUM_CUTOFF * peak.max(1e-300) {
                break;
            }
            k += dir;
        }
    }
    sum * norm
}

/// Differential entropy (bits) of the vZ-aliased Gaussian noise over one
/// fundamental region.
///
/// Uses adaptive Simpson quadrature at absolute tolerance 1e-9. When the
/// periodized density is already nearly uniform (dual-lattice parameter
/// q = exp(-2 pi^2 sigma^2 / v^2) below 1e-4) the quadrature would have to
/// resolve a ~q^2 deviation, so the closed small-q expansion
/// h = log2 v - (q^2 + q^4/2)/ln 2 is used instead; its error is O(q^6).
pub fn aliased_entropy(scale: f64, sigma: f64) -> Result<f64> {
    if !(scale > 0.0 && sigma > 0.0) {
        return Err(Error::domain("aliased entropy needs positive scale and sigma"));
    }
    let q = (-2.0 * std::f64::consts::PI.powi(2) * sigma * sigma / (scale * scale)).exp();
    if q < 1e-4 {
        return Ok(scale.log2() - (q * q + 0.5 * q.powi(4)) / LN2);
    }
    // Outside ~16 sigma from every lattice point the integrand is < 1e-55.
    let half = (0.5 * scale).min(16.0 * sigma);
    let integrand = |x: f64| -xlog2(periodized_gaussian(x, scale, sigma));
    let h = adaptive_simpson(integrand, -half, half, 1e-9)?;
    Ok(h)
}

/// Capacity (bits) of the mod-vZ channel with noise deviation sigma.
pub fn mod_capacity(scale: f64, sigma: f64) -> Result<f64> {
    let c = scale.log2() - aliased_entropy(scale, sigma)?;
    if c < 0.0 {
        if c > -1e-9 {
            return Ok(0.0);
        }
        return Err(Error::numeric(format!("mod capacity came out negative: {c:e}")));
    }
    Ok(c)
}

/// Capacity (bits) of the binary partition channel at `level` of the chain,
/// i.e. C(Λ_{l-1}/Λ_l, σ²) = C(Λ_l, σ²) − C(Λ_{l-1}, σ²).
pub fn partition_level_capacity(chain: &PartitionChain, level: usize, sigma: f64) -> Result<f64> {
    if level == 0 || level > chain.levels {
        return Err(Error::domain("level out of range"));
    }
    let c = mod_capacity(chain.scale(level), sigma)? - mod_capacity(chain.scale(level - 1), sigma)?;
    Ok(c.max(0.0))
}

/// MMSE-rescaled noise deviation σ_s σ / sqrt(σ_s² + σ²).
pub fn mmse_sigma(sigma_s: f64, sigma: f64) -> Result<f64> {
    if !(sigma_s > 0.0 && sigma > 0.0) {
        return Err(Error::domain("mmse_sigma needs positive deviations"));
    }
    Ok(sigma_s * sigma / (sigma_s * sigma_s + sigma * sigma).sqrt())
}

/// Probability that Gaussian noise of deviation sigma escapes the fundamental
/// region of vZ (the aliasing error event).
pub fn cell_escape_probability(scale: f64, sigma: f64) -> f64 {
    2.0 * crate::numeric::q_function(0.5 * scale / sigma)
}

/// Draw one point of the discrete Gaussian over vZ centered at c.
///
/// Support is truncated at |λ - c| <= 12 sigma (tail mass < 1e-30) and the
/// draw uses exact inverse-CDF over the truncated table, so results are
/// reproducible for a given RNG stream.
pub fn sample_discrete_gaussian<R: Rng + ?Sized>(
    scale: f64,
    center: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(scale > 0.0 && sigma > 0.0) {
        return Err(Error::domain("sampler needs positive scale and sigma"));
    }
    let k_lo = ((center - 12.0 * sigma) / scale).ceil() as i64;
    let k_hi = ((center + 12.0 * sigma) / scale).floor() as i64;
    if k_lo > k_hi {
        // Window narrower than one lattice step: all mass on the nearest point.
        return Ok((center / scale).round() * scale);
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut weights = Vec::with_capacity((k_hi - k_lo + 1) as usize);
    let mut max_e = f64::NEG_INFINITY;
    for k in k_lo..=k_hi {
        let d = k as f64 * scale - center;
        let e = -d * d * inv;
        max_e = max_e.max(e);
        weights.push(e);
    }
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max_e).exp();
        total += *w;
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok((k_lo + i as i64) as f64 * scale);
        }
    }
    Ok(k_hi as f64 * scale)
}

/// Total Gaussian weight of the sub-lattice {offset + step*k} under a
/// zero-mean Gaussian of deviation sigma, truncated at relative 1e-16.
pub fn coset_gaussian_weight(offset: f64, step: f64, sigma: f64) -> f64 {
    debug_assert!(step > 0.0 && sigma > 0.0);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let k0 = (-offset / step).round();
    let mut sum = 0.0;
    let mut peak = 0.0f64;
    for dir in [1.0, -1.0] {
        let mut k = if dir > 0.0 { k0 } else { k0 - 1.0 };
        loop {
            let x = offset + step * k;
            let term = (-x * x * inv).exp();
            sum += term;
            peak = peak.max(term);
            if term < SUM_CUTOFF * peak.max(1e-300) {
                break;
            }
            k += dir;
        }
    }
    sum
}

/// Conditional coset probabilities at a level of the chain under the
/// discrete Gaussian D_{αZ, σ_s}.
///
/// Given the prefix bits selecting a coset of 2^{l-1}αZ, returns the
/// probability pair of its two sub-cosets (bit 0 and bit 1 at level l).
pub fn coset_prior(
    chain: &PartitionChain,
    sigma_s: f64,
    level: usize,
    prefix: &[u8],
) -> Result<(f64, f64)> {
    if level == 0 || level > chain.levels {
        return Err(Error::domain("level out of range"));
    }
    if prefix.len() != level - 1 {
        return Err(Error::LengthMismatch { expected: level - 1, got: prefix.len() });
    }
    if !(sigma_s > 0.0) {
        return Err(Error::domain("sigma_s must be positive"));
    }
    let mut t: u64 = 0;
    for (j, &b) in prefix.iter().enumerate() {
        if b > 1 {
            return Err(Error::domain("prefix bits must be 0/1"));
        }
        t |= (b as u64) << j;
    }
    let step = chain.scale(level);
    let w0 = coset_gaussian_weight(chain.alpha * t as f64, step, sigma_s);
    let w1 = coset_gaussian_weight(chain.alpha * (t + (1 << (level - 1))) as f64, step, sigma_s);
    let total = w0 + w1;
    if total <= 0.0 {
        return Err(Error::numeric("coset prior underflow"));
    }
    Ok((w0 / total, w1 / total))
}
