//! Maps raw actor outputs to feasible [`SlotAction`]s and defines the
//! stochastic policy: Gaussian raw channels for cache and spectral
//! efficiency, a categorical over a harmonic-index menu, and the exact
//! Euclidean projection onto the capped simplex.
//!
//! Log-probabilities are taken in raw space; the deterministic
//! transforms are treated as part of the environment, so the policy
//! gradient never differentiates through the projection.

use crate::netmodel::SlotAction;
use crate::nn::{mlp_backward, mlp_forward, MlpGrads, MlpParams};
use crate::{CoreError, Result, SlotRng};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, log, log1p};

use core::f64::consts::PI;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Log-std floor for the cache raw channel, higher than the generic
/// floor: the capped-simplex projection clips raw values to a hard zero,
/// and any raw mean that drifts more than a few sigmas below the clip
/// boundary stops producing gradient signal (every sample maps to the
/// same placement). A persistent dither keeps samples crossing the
/// boundary so such files stay recoverable.
pub const CACHE_LOG_STD_MIN: f64 = -3.5;
pub const ALPHA_FLOOR: f64 = 0.05;
/// Initial log-std of the cache raw channel (the alpha channel starts
/// at log-std 0). Kept small so the projected placement opens near the
/// uniform C/N point instead of clipping a random subset of files to
/// zero, which would start every episode deep in full-outage territory.
pub const CACHE_LOG_STD_INIT: f64 = CACHE_LOG_STD_MIN;
/// Initial log-std of the alpha raw channel. Moderate rather than unit
/// noise: a spectral efficiency that overshoots the decode band pins its
/// file's outage at 1 and stops producing own-file gradient, so early
/// exploration has to stay inside the band.
pub const ALPHA_LOG_STD_INIT: f64 = -1.0;
/// Initial raw mean of the alpha channel, chosen so the transformed
/// spectral efficiency opens at 2 bit/s/Hz — the same operating point
/// the unicast reference uses — instead of at the softplus-zero value
/// of ~0.74, which wastes most of the run climbing out of a
/// bandwidth-hungry regime.
pub const ALPHA_RAW_INIT: f64 = 1.797_018_747_343_8;
/// Initial logit bonus on the finest chunking in the harmonic menu, so
/// the opening policy starts from the latency-safe end of the menu and
/// the preference weights decide how far to coarsen from there. The
/// bonus leaves a few percent of probability on every other entry for
/// exploration.
pub const MENU_LOGIT_INIT: f64 = 3.0;
/// Initial shrink factor for the actor's output layer weights, so the
/// opening policy is close to the neutral action regardless of the
/// random hidden-layer draw.
pub const OUTPUT_SCALE_INIT: f64 = 0.01;
/// Strength of the capped-simplex violation penalty on the cache means
/// (see [`projection_violation`]).
pub const PROJECTION_PENALTY: f64 = 100.0;
/// Raw value below which the softplus alpha transform saturates: all
/// samples land at the alpha floor, rewards stop depending on the draw,
/// and the likelihood-ratio gradient vanishes. The barrier penalty keeps
/// the channel inside the responsive region.
pub const ALPHA_RAW_MIN: f64 = -2.0;

/// Candidate harmonic indices the categorical head chooses from.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicMenu(Vec<usize>);

impl HarmonicMenu {
    pub fn new(values: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::Domain("harmonic menu must be non-empty".into()));
        }
        for w in values.windows(2) {
            if w[1] <= w[0] {
                return Err(CoreError::Domain("harmonic menu must be strictly increasing".into()));
            }
        }
        if values[0] < 1 {
            return Err(CoreError::Domain("harmonic menu entries must be >= 1".into()));
        }
        Ok(HarmonicMenu(values))
    }

    pub fn default_menu() -> Self {
        HarmonicMenu(vec![1, 2, 5, 10, 20, 50, 100, 200, 620])
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Actor network plus the fixed structure of its output layout:
/// N cache means, N alpha means, 2N per-dim log-stds, menu logits.
#[derive(Debug, Clone)]
pub struct PolicyHead {
    pub params: MlpParams,
    pub n_files: usize,
    pub cache_cap: usize,
    pub menu: HarmonicMenu,
}

/// Raw (pre-transform) sample the log-probability is defined over.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    /// 2N Gaussian draws: cache channel then alpha channel.
    pub gauss: Vec<f64>,
    /// Index into the harmonic menu.
    pub harmonic_choice: usize,
}

impl PolicyHead {
    pub fn output_dim(n_files: usize, menu_len: usize) -> usize {
        4 * n_files + menu_len
    }

    pub fn new(n_files: usize, cache_cap: usize, hidden: &[usize], menu: HarmonicMenu, seed: u64) -> Result<Self> {
        if cache_cap > n_files {
            return Err(CoreError::Infeasible(format!(
                "cache capacity {cache_cap} exceeds library size {n_files}"
            )));
        }
        let mut sizes = vec![n_files + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(Self::output_dim(n_files, menu.len()));
        let mut params = MlpParams::init(&sizes, seed)?;
        // Open near the neutral action: shrink the output layer so every
        // channel starts at its bias (cache means ~0 -> uniform C/N
        // placement after projection, menu logits ~uniform), and give the
        // cache channel small sampling noise so the opening placement does
        // not clip a random subset of files to zero. The alpha channel
        // keeps unit noise for exploration.
        for w in params.weights.last_mut().unwrap().iter_mut() {
            *w *= OUTPUT_SCALE_INIT;
        }
        let out_bias = params.biases.last_mut().unwrap();
        for b in out_bias[2 * n_files..3 * n_files].iter_mut() {
            *b = CACHE_LOG_STD_INIT;
        }
        for b in out_bias[n_files..2 * n_files].iter_mut() {
            *b = ALPHA_RAW_INIT;
        }
        if let Some(b) = out_bias.last_mut() {
            *b = MENU_LOGIT_INIT;
        }
        for b in out_bias[3 * n_files..4 * n_files].iter_mut() {
            *b = ALPHA_LOG_STD_INIT;
        }
        Ok(PolicyHead { params, n_files, cache_cap, menu })
    }

    /// Forward-state features: the request vector scaled to mean 1 (so
    /// inputs are O(1) regardless of N) plus the normalized slot index.
    pub fn features(&self, p_req: &[f64], slot: usize, horizon: usize) -> Vec<f64> {
        let n = self.n_files as f64;
        let mut f: Vec<f64> = p_req.iter().map(|&p| p * n).collect();
        f.push(slot as f64 / horizon as f64);
        f
    }
}

/// Output layout helper.
pub struct HeadOutputs<'a> {
    pub cache_mean: &'a [f64],
    pub alpha_mean: &'a [f64],
    pub log_std: &'a [f64],
    pub logits: &'a [f64],
}

pub fn split_outputs(out: &[f64], n: usize, menu_len: usize) -> Result<HeadOutputs<'_>> {
    if out.len() != 4 * n + menu_len {
        return Err(CoreError::Shape(format!(
            "actor output has {} entries, expected {}",
            out.len(),
            4 * n + menu_len
        )));
    }
    Ok(HeadOutputs {
        cache_mean: &out[0..n],
        alpha_mean: &out[n..2 * n],
        log_std: &out[2 * n..4 * n],
        logits: &out[4 * n..],
    })
}

/// Clamp bounds for the log-std of Gaussian channel `i` out of `2n`
/// (cache channels first, then alpha channels).
fn log_std_bounds(i: usize, n: usize) -> (f64, f64) {
    if i < n { (CACHE_LOG_STD_MIN, LOG_STD_MAX) } else { (LOG_STD_MIN, LOG_STD_MAX) }
}

fn clamp_log_std(s: f64, i: usize, n: usize) -> f64 {
    let (lo, hi) = log_std_bounds(i, n);
    s.clamp(lo, hi)
}

/// Euclidean projection of `raw` onto {x : 0 <= x <= 1, sum x = C}.
///
/// Bisection on the dual shift tau with sum clip(raw - tau, 0, 1) = C,
/// followed by an exact solve on the identified free set.
pub fn transform_cache(raw: &[f64], cache_cap: usize) -> Result<Vec<f64>> {
    let n = raw.len();
    let c = cache_cap as f64;
    if cache_cap > n {
        return Err(CoreError::Infeasible(format!(
            "cache capacity {cache_cap} exceeds vector length {n}"
        )));
    }
    if n == 0 {
        return Err(CoreError::Shape("empty cache vector".into()));
    }
    if cache_cap == n {
        return Ok(vec![1.0; n]);
    }
    let clip_sum = |tau: f64| -> f64 { raw.iter().map(|&r| (r - tau).clamp(0.0, 1.0)).sum() };
    let mut lo = raw.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // clip_sum(lo) = n >= C, clip_sum(hi) = 0 <= C.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clip_sum(mid) >= c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    // Exact solve on the free set to land on sum = C.
    let mut ones = 0usize;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for &r in raw {
        let x = r - tau;
        if x >= 1.0 {
            ones += 1;
        } else if x > 0.0 {
            free_sum += r;
            free_count += 1;
        }
    }
    let tau = if free_count > 0 {
        (free_sum + ones as f64 - c) / free_count as f64
    } else {
        tau
    };
    let x: Vec<f64> = raw.iter().map(|&r| (r - tau).clamp(0.0, 1.0)).collect();
    let sum: f64 = x.iter().sum();
    if (sum - c).abs() > 1e-9 {
        return Err(CoreError::Domain(format!(
            "capped-simplex projection failed to converge: sum = {sum}, C = {c}"
        )));
    }
    Ok(x)
}

/// alpha = softplus(raw) + floor, elementwise.
pub fn transform_alpha(raw: &[f64]) -> Vec<f64> {
    raw.iter()
        .map(|&r| {
            // Numerically stable softplus.
            let sp = if r > 30.0 { r } else { log1p(exp(r)) };
            sp + ALPHA_FLOOR
        })
        .collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + log(logits.iter().map(|&z| exp(z - max)).sum::<f64>());
    logits.iter().map(|&z| z - lse).collect()
}

/// Log-density of the raw sample under the head outputs: Gaussian
/// log-densities of the 2N raw draws plus the categorical log-mass.
pub fn log_prob(out: &HeadOutputs<'_>, raw: &RawSample) -> f64 {
    let n = out.cache_mean.len();
    let mut lp = 0.0;
    for i in 0..2 * n {
        let mean = if i < n { out.cache_mean[i] } else { out.alpha_mean[i - n] };
        let s = clamp_log_std(out.log_std[i], i, n);
        let sigma = exp(s);
        let z = (raw.gauss[i] - mean) / sigma;
        lp += -0.5 * log(2.0 * PI) - s - 0.5 * z * z;
    }
    lp + log_softmax(out.logits)[raw.harmonic_choice]
}

/// Policy entropy at the head outputs: Gaussian channel entropies plus
/// the categorical entropy.
pub fn entropy(out: &HeadOutputs<'_>) -> f64 {
    let n = out.cache_mean.len();
    let mut h = 0.0;
    for (i, &s) in out.log_std.iter().enumerate() {
        h += clamp_log_std(s, i, n) + 0.5 * log(2.0 * PI * core::f64::consts::E);
    }
    let lsm = log_softmax(out.logits);
    for &l in &lsm {
        h -= exp(l) * l;
    }
    h
}

/// Gradient of `weight`·log_prob + `ent_coef`·entropy with respect to
/// the raw head outputs. Log-std entries outside the clamp range get
/// zero gradient.
pub fn grad_outputs(
    out: &HeadOutputs<'_>,
    raw: &RawSample,
    weight: f64,
    ent_coef: f64,
) -> Vec<f64> {
    let n = out.cache_mean.len();
    let m = out.logits.len();
    let mut g = vec![0.0; 4 * n + m];
    for i in 0..2 * n {
        let mean = if i < n { out.cache_mean[i] } else { out.alpha_mean[i - n] };
        let s_raw = out.log_std[i];
        let s = clamp_log_std(s_raw, i, n);
        let sigma = exp(s);
        let z = (raw.gauss[i] - mean) / sigma;
        // d log p / d mean.
        g[i] = weight * z / sigma;
        // d (log p + H) / d log-std, zero where the clamp is active.
        let (lo, hi) = log_std_bounds(i, n);
        if (lo..=hi).contains(&s_raw) {
            g[2 * n + i] = weight * (z * z - 1.0) + ent_coef;
        }
    }
    let lsm = log_softmax(out.logits);
    let cat_h: f64 = lsm.iter().map(|&l| -exp(l) * l).sum();
    for k in 0..m {
        let p = exp(lsm[k]);
        let onehot = if k == raw.harmonic_choice { 1.0 } else { 0.0 };
        g[4 * n + k] = weight * (onehot - p) + ent_coef * (-p * (lsm[k] + cat_h));
    }
    g
}

/// Per-coordinate signed violation of a raw cache sample against its
/// capped-simplex projection: negative below a hedge margin above the
/// zero clip, positive above the unit cap, zero in between.
///
/// Used as a pathwise penalty gradient on the cache means. Two failure
/// modes motivate it. First, the hard clip maps every raw value below
/// the boundary to the same placement, so the likelihood-ratio gradient
/// alone cannot pull a deeply clipped file back. Second, a file held
/// exactly at the boundary still loses roughly half its exploration
/// samples to the clip, so the penalty targets a small margin above it:
/// each file is nudged to keep at least C/(2N) cache mass (always
/// jointly feasible, since those floors sum to C/2) unless the learning
/// signal actively overrides the nudge.
pub fn projection_violation(raw_cache: &[f64], cache_cap: usize) -> Result<Vec<f64>> {
    let p = transform_cache(raw_cache, cache_cap)?;
    let mut tau = None;
    for (&r, &pi) in raw_cache.iter().zip(&p) {
        if pi > 1e-9 && pi < 1.0 - 1e-9 {
            tau = Some(r - pi);
            break;
        }
    }
    // All-binary placements pin tau only to an interval; take its
    // midpoint.
    let tau = tau.unwrap_or_else(|| {
        let lo = raw_cache
            .iter()
            .zip(&p)
            .filter(|&(_, &pi)| pi >= 1.0 - 1e-9)
            .map(|(&r, _)| r - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = raw_cache
            .iter()
            .zip(&p)
            .filter(|&(_, &pi)| pi <= 1e-9)
            .map(|(&r, _)| r)
            .fold(f64::INFINITY, f64::min);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    });
    let margin = 0.5 * cache_cap as f64 / raw_cache.len() as f64;
    let mut v: Vec<f64> = raw_cache
        .iter()
        .map(|&r| (r - tau - margin).min(0.0) + (r - tau - 1.0).max(0.0))
        .collect();
    // The projection is invariant to uniform shifts of the raw vector, so
    // the mean component of the penalty would move tau without changing
    // the placement while inflating the optimizer's gradient scale.
    // Centering keeps only the redistributive part.
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
    Ok(v)
}

/// Signed distance of raw alpha samples below the saturation barrier
/// (zero inside the responsive region); same pathwise-penalty role as
/// [`projection_violation`] but for the softplus tail.
pub fn alpha_saturation_violation(raw_alpha: &[f64]) -> Vec<f64> {
    raw_alpha.iter().map(|&r| (r - ALPHA_RAW_MIN).min(0.0)).collect()
}

/// Draws an action: Gaussian raw vectors for the cache and alpha
/// channels, a categorical harmonic choice, and the deterministic
/// constraint-satisfying transforms.
pub fn sample_action(
    head: &PolicyHead,
    state_features: &[f64],
    rng: &mut SlotRng,
) -> Result<(SlotAction, RawSample, f64)> {
    let (out, _) = mlp_forward(&head.params, state_features)?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::NonFinite("actor network output".into()));
    }
    let o = split_outputs(&out, head.n_files, head.menu.len())?;
    let n = head.n_files;
    let mut gauss = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let mean = if i < n { o.cache_mean[i] } else { o.alpha_mean[i - n] };
        let sigma = exp(clamp_log_std(o.log_std[i], i, n));
        gauss.push(mean + sigma * rng.normal());
    }
    // Inverse-CDF draw from the categorical.
    let lsm = log_softmax(o.logits);
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut choice = lsm.len() - 1;
    for (k, &l) in lsm.iter().enumerate() {
        acc += exp(l);
        if u < acc {
            choice = k;
            break;
        }
    }
    let raw = RawSample { gauss, harmonic_choice: choice };
    let lp = log_prob(&o, &raw);
    let action = SlotAction {
        p_cach: transform_cache(&raw.gauss[0..n], head.cache_cap)?,
        alpha: transform_alpha(&raw.gauss[n..2 * n]),
        n_hb: head.menu.values()[choice],
    };
    Ok((action, raw, lp))
}

/// Log-probability of a recorded raw sample together with the gradient
/// of the log-probability with respect to the actor parameters.
pub fn log_prob_and_grad(
    head: &PolicyHead,
    state_features: &[f64],
    raw: &RawSample,
) -> Result<(f64, MlpGrads)> {
    if raw.gauss.len() != 2 * head.n_files {
        return Err(CoreError::Shape(format!(
            "raw sample has {} Gaussian entries, expected {}",
            raw.gauss.len(),
            2 * head.n_files
        )));
    }
    let (out, cache) = mlp_forward(&head.params, state_features)?;
    let o = split_outputs(&out, head.n_files, head.menu.len())?;
    let lp = log_prob(&o, raw);
    let out_grad = grad_outputs(&o, raw, 1.0, 0.0);
    let mut grads = head.params.zero_grads();
    mlp_backward(&head.params, &cache, &out_grad, &mut grads)?;
    Ok((lp, grads))
}

/// Brute-force minimizer of ||x - raw||² over the capped simplex for
/// small N, by enumerating every {0, free, 1} active-set assignment.
/// Test-support oracle, independent of [`transform_cache`].
pub fn brute_force_capped_simplex(raw: &[f64], cache_cap: usize) -> Vec<f64> {
    let n = raw.len();
    let c = cache_cap as f64;
    assert!(n <= 12, "oracle is exponential in N");
    let mut best: Option<(f64, Vec<f64>)> = None;
    // Each coordinate is 0, 1, or free (ternary enumeration).
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut kind = Vec::with_capacity(n);
        let mut k = code;
        for _ in 0..n {
            kind.push(k % 3);
            k /= 3;
        }
        let ones = kind.iter().filter(|&&t| t == 1).count() as f64;
        let free: Vec<usize> = (0..n).filter(|&i| kind[i] == 2).collect();
        let mut x = vec![0.0; n];
        for i in 0..n {
            if kind[i] == 1 {
                x[i] = 1.0;
            }
        }
        if free.is_empty() {
            if (ones - c).abs() > 1e-12 {
                continue;
            }
        } else {
            let free_sum: f64 = free.iter().map(|&i| raw[i]).sum();
            let tau = (free_sum + ones - c) / free.len() as f64;
            let mut ok = true;
            for &i in &free {
                let v = raw[i] - tau;
                if !(0.0..=1.0).contains(&v) {
                    ok = false;
                    break;
                }
                x[i] = v;
            }
            if !ok {
                continue;
            }
        }
        let obj: f64 = x.iter().zip(raw).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.expect("feasible set is non-empty when C <= N").1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn menu_validation() {
        assert!(HarmonicMenu::new(vec![]).is_err());
        assert!(HarmonicMenu::new(vec![2, 2]).is_err());
        assert!(HarmonicMenu::new(vec![0, 1]).is_err());
        assert!(HarmonicMenu::new(vec![1, 4, 9]).is_ok());
    }

    #[test]
    fn projection_examples() {
        // Equal raw -> C/N each.
        let x = transform_cache(&[0.3; 5], 2).unwrap();
        for &v in &x {
            assert!((v - 0.4).abs() < 1e-9);
        }
        // C = N -> all ones.
        let x = transform_cache(&[-3.0, 9.0, 0.0], 3).unwrap();
        assert_eq!(x, vec![1.0, 1.0, 1.0]);
        // Hand case checked against the brute-force oracle.
        let x = transform_cache(&[3.0, 0.0, -3.0], 1).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9);
        assert!(x[1].abs() < 1e-9 && x[2].abs() < 1e-9);
        assert!(transform_cache(&[0.0, 0.0], 3).is_err());
    }

    #[test]
    fn projection_matches_oracle() {
        let mut rng = SlotRng::from_seed(12);
        for trial in 0..300 {
            let n = 2 + rng.below(5);
            let c = 1 + rng.below(n);
            let raw: Vec<f64> = (0..n).map(|_| rng.normal() * 2.0).collect();
            let fast = transform_cache(&raw, c).unwrap();
            let slow = brute_force_capped_simplex(&raw, c);
            let dist: f64 = fast
                .iter()
                .zip(&slow)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(dist < 1e-6, "trial {trial}: dist {dist}, raw {raw:?}");
        }
    }

    #[test]
    fn projection_idempotent() {
        let mut rng = SlotRng::from_seed(5);
        for _ in 0..100 {
            let n = 3 + rng.below(5);
            let c = 1 + rng.below(n);
            let raw: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let x = transform_cache(&raw, c).unwrap();
            let y = transform_cache(&x, c).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_transform() {
        let a = transform_alpha(&[0.0]);
        assert!((a[0] - 0.7431471805599453).abs() < 1e-12);
        let lo = transform_alpha(&[-100.0]);
        assert!((lo[0] - ALPHA_FLOOR).abs() < 1e-12);
        let hi = transform_alpha(&[100.0]);
        assert!(hi[0] > 99.0);
        // Monotone.
        let pair = transform_alpha(&[-0.5, 0.5]);
        assert!(pair[0] < pair[1]);
    }

    fn tiny_head(seed: u64) -> PolicyHead {
        PolicyHead::new(3, 1, &[8], HarmonicMenu::new(vec![1, 5, 20]).unwrap(), seed).unwrap()
    }

    #[test]
    fn sampled_actions_are_feasible() {
        let head = tiny_head(0);
        let mut rng = SlotRng::from_seed(3);
        for slot in 1..=50 {
            let f = head.features(&[0.5, 0.3, 0.2], slot % 10 + 1, 10);
            let (action, _, lp) = sample_action(&head, &f, &mut rng).unwrap();
            action.validate(1).unwrap();
            assert!(action.alpha.iter().all(|&a| a >= ALPHA_FLOOR));
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let head = tiny_head(1);
        let f = head.features(&[0.2, 0.3, 0.5], 2, 8);
        let mut r1 = SlotRng::from_seed(77);
        let mut r2 = SlotRng::from_seed(77);
        let a = sample_action(&head, &f, &mut r1).unwrap();
        let b = sample_action(&head, &f, &mut r2).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn log_prob_closed_forms() {
        // raw = mean: Gaussian part is sum of -0.5 ln(2 pi sigma^2);
        // uniform logits over k entries contribute -ln k.
        let n = 2;
        let out_vec = vec![
            0.1, -0.2, // cache means
            0.3, 0.4, // alpha means
            0.0, -1.0, 0.5, 0.0, // log stds
            0.0, 0.0, 0.0, // logits (k = 3)
        ];
        let o = split_outputs(&out_vec, n, 3).unwrap();
        let raw = RawSample { gauss: vec![0.1, -0.2, 0.3, 0.4], harmonic_choice: 1 };
        let lp = log_prob(&o, &raw);
        let gauss_part: f64 = [0.0, -1.0, 0.5, 0.0]
            .iter()
            .map(|&s| -0.5 * log(2.0 * PI) - s)
            .sum();
        assert!((lp - (gauss_part - log(3.0))).abs() < 1e-12);
        // Single menu entry contributes 0.
        let out1 = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let o1 = split_outputs(&out1, n, 1).unwrap();
        let raw1 = RawSample { gauss: vec![0.0; 4], harmonic_choice: 0 };
        let lp1 = log_prob(&o1, &raw1);
        assert!((lp1 - 4.0 * (-0.5 * log(2.0 * PI))).abs() < 1e-12);
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let head = tiny_head(4);
        let f = head.features(&[0.6, 0.3, 0.1], 3, 10);
        let mut rng = SlotRng::from_seed(9);
        let (_, raw, _) = sample_action(&head, &f, &mut rng).unwrap();
        let (_, analytic) = log_prob_and_grad(&head, &f, &raw).unwrap();
        let numeric = crate::nn::finite_difference_grads(
            &head.params,
            |p| {
                let probe = PolicyHead { params: p.clone(), ..head.clone() };
                let (out, _) = mlp_forward(&probe.params, &f).unwrap();
                let o = split_outputs(&out, probe.n_files, probe.menu.len()).unwrap();
                log_prob(&o, &raw)
            },
            1e-5,
        );
        let err = crate::nn::max_grad_rel_error(&analytic, &numeric);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn entropy_grad_matches_finite_differences() {
        let head = tiny_head(6);
        let f = head.features(&[0.1, 0.1, 0.8], 1, 4);
        let (out, cache) = mlp_forward(&head.params, &f).unwrap();
        let o = split_outputs(&out, 3, 3).unwrap();
        let raw = RawSample { gauss: vec![0.0; 6], harmonic_choice: 0 };
        let og = grad_outputs(&o, &raw, 0.0, 1.0);
        let mut analytic = head.params.zero_grads();
        mlp_backward(&head.params, &cache, &og, &mut analytic).unwrap();
        let numeric = crate::nn::finite_difference_grads(
            &head.params,
            |p| {
                let (out, _) = mlp_forward(p, &f).unwrap();
                let o = split_outputs(&out, 3, 3).unwrap();
                entropy(&o)
            },
            1e-5,
        );
        let err = crate::nn::max_grad_rel_error(&analytic, &numeric);
        assert!(err < 1e-4, "rel err {err}");
    }
}
