//! Physical-layer math for the orthogonal multipoint multicast (OMPMC)
//! scheme: harmonic broadcasting arithmetic, transmit SNR, the analytic
//! erfc outage closed form for path-loss exponent 4, total bandwidth
//! consumption, and a brute-force spatial Monte-Carlo oracle that
//! cross-checks the closed form.
//!
//! All quantities are linear-scale SI; dB/dBm conversions happen exactly
//! once at config load in the companion crate. Distances are normalized
//! to the 1 km reference, so intensities are in points per km².

use crate::{CoreError, Result, SlotRng};
use alloc::format;
use alloc::vec::Vec;
use libm::{erfc, log2, pow, sqrt};

use core::f64::consts::PI;

/// Radio and library configuration.
///
/// `antenna_gain` is folded multiplicatively into the transmit power
/// wherever the link budget appears; the closed form has no separate
/// gain term.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    /// BS spatial intensity, points per km² (reference distance 1 km).
    pub lambda_bs: f64,
    /// Average transmit power, watts.
    pub p_tx: f64,
    /// Noise spectral density, W/Hz (noise-figure adjusted).
    pub n0: f64,
    /// Linear antenna gain.
    pub antenna_gain: f64,
    /// Path-loss exponent e.
    pub path_loss_exp: f64,
    /// Minimum required rate, bit/s.
    pub rate_r: f64,
    /// Content length, seconds.
    pub file_len_l: f64,
    /// Library size N.
    pub num_files_n: usize,
    /// Per-BS cache capacity C, in files.
    pub cache_cap_c: usize,
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("lambda_bs", self.lambda_bs),
            ("p_tx", self.p_tx),
            ("n0", self.n0),
            ("antenna_gain", self.antenna_gain),
            ("path_loss_exp", self.path_loss_exp),
            ("rate_R", self.rate_r),
            ("file_len_L", self.file_len_l),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::Domain(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        if self.num_files_n < 1 {
            return Err(CoreError::Domain("num_files_N must be >= 1".into()));
        }
        if self.cache_cap_c < 1 || self.cache_cap_c > self.num_files_n {
            return Err(CoreError::Infeasible(format!(
                "cache_cap_C = {} must satisfy 1 <= C <= N = {}",
                self.cache_cap_c, self.num_files_n
            )));
        }
        Ok(())
    }
}

/// Per-slot control a(t): cache probabilities, spectral efficiencies and
/// the harmonic index M (so the harmonic number is H(M)).
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAction {
    /// Cache probabilities, one per file, 0..=1, summing to C.
    pub p_cach: Vec<f64>,
    /// Spectral efficiencies α_n, bit/s/Hz, strictly positive.
    pub alpha: Vec<f64>,
    /// Harmonic index M >= 1; the realized harmonic number is H(M).
    pub n_hb: usize,
}

impl SlotAction {
    /// Checks the action invariants against a capacity C.
    pub fn validate(&self, cache_cap_c: usize) -> Result<()> {
        if self.p_cach.len() != self.alpha.len() {
            return Err(CoreError::Shape(format!(
                "p_cach has {} entries but alpha has {}",
                self.p_cach.len(),
                self.alpha.len()
            )));
        }
        if self.n_hb < 1 {
            return Err(CoreError::Domain("n_hb must be >= 1".into()));
        }
        let mut sum = 0.0;
        for (n, &p) in self.p_cach.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::Domain(format!(
                    "p_cach[{n}] = {p} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - cache_cap_c as f64).abs() > 1e-9 {
            return Err(CoreError::Domain(format!(
                "sum p_cach = {sum} != C = {cache_cap_c}"
            )));
        }
        for (n, &a) in self.alpha.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(CoreError::Domain(format!("alpha[{n}] = {a} must be > 0")));
            }
        }
        Ok(())
    }
}

/// H(m) = sum_{i=1..m} 1/i, summed in increasing-i order.
pub fn harmonic_number(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(CoreError::Domain("harmonic_number requires m >= 1".into()));
    }
    let mut h = 0.0;
    for i in 1..=m {
        h += 1.0 / i as f64;
    }
    Ok(h)
}

/// Largest m with H(m) <= target, so the realized bandwidth inflation
/// never exceeds the budgeted one.
pub fn inverse_harmonic(target_nhb: f64) -> Result<usize> {
    if !(target_nhb >= 1.0) {
        return Err(CoreError::Domain(format!(
            "inverse_harmonic requires target >= 1, got {target_nhb}"
        )));
    }
    let mut h = 0.0;
    let mut m = 0usize;
    loop {
        let next = h + 1.0 / (m + 1) as f64;
        if next > target_nhb {
            return Ok(m.max(1));
        }
        m += 1;
        h = next;
    }
}

/// Slot duration d = L / m under harmonic broadcasting with index m.
pub fn slot_duration(file_len_l: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(CoreError::Domain("slot_duration requires m >= 1".into()));
    }
    Ok(file_len_l / m as f64)
}

/// η_n = (2^{α_n} − 1) · Σ_m 1/α_m.
pub fn eta(alpha: &[f64], n: usize) -> Result<f64> {
    let mut inv_sum = 0.0;
    for (i, &a) in alpha.iter().enumerate() {
        if !(a > 0.0) {
            return Err(CoreError::Domain(format!("alpha[{i}] = {a} must be > 0")));
        }
        inv_sum += 1.0 / a;
    }
    let a_n = alpha
        .get(n)
        .ok_or_else(|| CoreError::Shape(format!("file index {n} out of range")))?;
    Ok((pow(2.0, *a_n) - 1.0) * inv_sum)
}

/// γ_R = (p_tx · g / N0) / (R · N_hb), dimensionless under the 1 km
/// normalization.
pub fn gamma_r(cfg: &RadioConfig, n_hb_value: f64) -> f64 {
    (cfg.p_tx * cfg.antenna_gain / cfg.n0) / (cfg.rate_r * n_hb_value)
}

/// Transmit SNR γ_tx = p_tx·g/(W N0) with W the total instantaneous
/// consumption, which reduces to γ_R / Σ_m(1/α_m).
pub fn gamma_tx(cfg: &RadioConfig, action: &SlotAction) -> Result<f64> {
    let h = harmonic_number(action.n_hb)?;
    let inv_sum: f64 = action.alpha.iter().map(|a| 1.0 / a).sum();
    Ok(gamma_r(cfg, h) / inv_sum)
}

/// Closed-form outage O_n = erfc(π²·λ_bs·p_cach[n]/4 · sqrt(γ_R/η_n)).
///
/// Only valid for path-loss exponent 4; other exponents must go through
/// [`mc_outage_oracle`].
pub fn outage_analytic(cfg: &RadioConfig, action: &SlotAction, n: usize) -> Result<f64> {
    if (cfg.path_loss_exp - 4.0).abs() > 1e-12 {
        return Err(CoreError::UnsupportedModel(format!(
            "analytic outage requires path_loss_exp = 4 (got {}); use mc_outage_oracle",
            cfg.path_loss_exp
        )));
    }
    let p = *action
        .p_cach
        .get(n)
        .ok_or_else(|| CoreError::Shape(format!("file index {n} out of range")))?;
    let h = harmonic_number(action.n_hb)?;
    let e_n = eta(&action.alpha, n)?;
    let arg = PI * PI * cfg.lambda_bs * p / 4.0 * sqrt(gamma_r(cfg, h) / e_n);
    Ok(erfc(arg))
}

/// Total resource consumption W = H(m) · Σ_n R/α_n.
pub fn bandwidth_total(cfg: &RadioConfig, action: &SlotAction) -> Result<f64> {
    let h = harmonic_number(action.n_hb)?;
    let mut w = 0.0;
    for (i, &a) in action.alpha.iter().enumerate() {
        if !(a > 0.0) {
            return Err(CoreError::Domain(format!("alpha[{i}] = {a} must be > 0")));
        }
        w += cfg.rate_r / a;
    }
    Ok(h * w)
}

/// Monte-Carlo disk radius; truncation bias beyond it is negligible at
/// the intensities the validation grid uses.
pub const MC_DISK_RADIUS: f64 = 30.0;

/// Samples per RNG chunk. The chunk size is fixed so the result is
/// independent of how chunks are scheduled across threads.
const MC_CHUNK: u64 = 1024;

/// Brute-force spatial outage estimate: realize the BSs caching file `n`
/// as a PPP of intensity λ_bs·p_cach[n] in a disk around the typical UE
/// (Slivnyak), draw unit-mean exponential fading per BS, and test
/// log2(1 + γ_tx Σ h·r^{-e}) <= α_n.
///
/// Returns the empirical outage probability and its binomial standard
/// error. Deterministic given `seed`.
///
/// Points are generated in increasing-radius order (arrival times of a
/// unit-rate Poisson process mapped through r = sqrt(A/(πλ'))), so a
/// sample can stop as soon as its running SNR sum exceeds the decoding
/// threshold.
pub fn mc_outage_oracle(
    cfg: &RadioConfig,
    action: &SlotAction,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(CoreError::Domain("mc_outage_oracle requires samples >= 1".into()));
    }
    let p = *action
        .p_cach
        .get(n)
        .ok_or_else(|| CoreError::Shape(format!("file index {n} out of range")))?;
    let alpha_n = action.alpha[n];
    let g_tx = gamma_tx(cfg, action)?;
    // Decoding fails iff the aggregate fading-weighted path gain is at or
    // below this threshold.
    let threshold = (pow(2.0, alpha_n) - 1.0) / g_tx;
    let intensity = cfg.lambda_bs * p;
    let e = cfg.path_loss_exp;

    if intensity == 0.0 {
        // No transmitters of this file anywhere: outage with certainty.
        return Ok((1.0, 0.0));
    }

    let area_rate = PI * intensity;
    let max_arrival = area_rate * MC_DISK_RADIUS * MC_DISK_RADIUS;
    // r² = A/(πλ'), so r^{-4} = (πλ'/A)²; precomputed for the e = 4 hot
    // path (general e falls back to pow below).
    let area_rate_sq = area_rate * area_rate;
    let mut outages: u64 = 0;
    let chunks = samples.div_ceil(MC_CHUNK);
    for chunk in 0..chunks {
        let mut rng = SlotRng::stream(seed, chunk);
        let in_chunk = MC_CHUNK.min(samples - chunk * MC_CHUNK);
        for _ in 0..in_chunk {
            let mut arrival = 0.0;
            let mut agg = 0.0;
            let outage = loop {
                arrival += rng.exponential();
                if arrival > max_arrival {
                    break agg <= threshold;
                }
                let path_gain = if e == 4.0 {
                    area_rate_sq / (arrival * arrival)
                } else {
                    pow(arrival / area_rate, -e / 2.0)
                };
                agg += rng.exponential() * path_gain;
                if agg > threshold {
                    break false;
                }
            };
            if outage {
                outages += 1;
            }
        }
    }
    let p_hat = outages as f64 / samples as f64;
    let se = sqrt(p_hat * (1.0 - p_hat) / samples as f64);
    Ok((p_hat, se))
}

/// Verifies that an SNR `gamma` decodes spectral efficiency `alpha`.
/// Exposed for the unicast baseline.
pub fn decodes(gamma: f64, alpha: f64) -> bool {
    log2(1.0 + gamma) > alpha
}
