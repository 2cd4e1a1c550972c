//! The coupled environment: time-varying Zipf popularity, the forward
//! request-probability recursion, the backward expected-latency
//! recursion, per-slot reward vectors and full-episode rollouts.
//!
//! The environment evolves probability flows deterministically given the
//! actions; stochasticity enters only through popularity generation and
//! policy sampling.

use crate::netmodel::{bandwidth_total, outage_analytic, slot_duration, RadioConfig, SlotAction};
use crate::{CoreError, Result, SlotRng};
use alloc::format;
use alloc::vec::Vec;
use libm::pow;

/// Request-probability vector p_req(t) over files; a probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub p_req: Vec<f64>,
    /// Time index t in 1..=T.
    pub slot: usize,
}

impl ForwardState {
    pub fn validate(&self) -> Result<()> {
        simplex_check(&self.p_req, 1.0, "p_req")
    }
}

/// Expected-latency vector L_n(t).
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    pub lat: Vec<f64>,
    pub slot: usize,
}

/// T x N matrix of popularity distributions, each row a Zipf(skew)
/// distribution over some permutation of ranks.
#[derive(Debug, Clone)]
pub struct PopularityTrack {
    pub p_pop: Vec<Vec<f64>>,
    pub skew: f64,
    pub churn_k: usize,
    pub seed: u64,
}

/// Per-slot cost vector (all three are costs; the learning objective
/// maximizes their negation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardVector {
    /// Overall probability of unsatisfied users, in [0, 1].
    pub r_qos: f64,
    /// Total resource consumption, Hz.
    pub r_bw: f64,
    /// Request-weighted expected latency, seconds.
    pub r_lat: f64,
}

/// The environment an episode runs in: radio configuration plus the
/// popularity track (immutable after construction, so concurrent
/// rollouts with distinct seeds are safe).
#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: RadioConfig,
    pub pop: PopularityTrack,
}

/// Aligned per-slot record of one episode.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub forward: Vec<ForwardState>,
    pub actions: Vec<SlotAction>,
    pub outages: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
    pub rewards: Vec<RewardVector>,
    pub backward: Vec<BackwardState>,
    pub seed: u64,
    pub config_hash: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.forward.len()
    }
}

fn simplex_check(v: &[f64], total: f64, name: &str) -> Result<()> {
    let mut sum = 0.0;
    for (i, &x) in v.iter().enumerate() {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(CoreError::Domain(format!("{name}[{i}] = {x} must be >= 0")));
        }
        sum += x;
    }
    if (sum - total).abs() > 1e-9 {
        return Err(CoreError::Domain(format!(
            "{name} sums to {sum}, expected {total}"
        )));
    }
    Ok(())
}

/// Zipf(skew) distribution over N ranks; rank 1 is the most popular.
fn zipf_weights(n: usize, skew: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (1..=n).map(|r| pow(r as f64, -skew)).collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

/// Generates a time-varying popularity track: row 1 is Zipf(skew) over
/// the identity rank permutation, and each subsequent row applies
/// `churn_k` uniformly random adjacent transpositions to the previous
/// row's permutation. Deterministic given `seed`.
pub fn make_popularity(
    n: usize,
    t: usize,
    skew: f64,
    churn_k: usize,
    seed: u64,
) -> Result<PopularityTrack> {
    if n < 1 || t < 1 {
        return Err(CoreError::Domain("make_popularity requires N >= 1, T >= 1".into()));
    }
    if !(skew >= 0.0) {
        return Err(CoreError::Domain(format!("skew = {skew} must be >= 0")));
    }
    let weights = zipf_weights(n, skew);
    // perm[file] = rank index into weights.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = SlotRng::stream(seed, 0);
    let mut rows = Vec::with_capacity(t);
    for slot in 0..t {
        if slot > 0 && n > 1 {
            for _ in 0..churn_k {
                let i = rng.below(n - 1);
                perm.swap(i, i + 1);
            }
        }
        let row: Vec<f64> = perm.iter().map(|&r| weights[r]).collect();
        rows.push(row);
    }
    Ok(PopularityTrack { p_pop: rows, skew, churn_k, seed })
}

/// One step of the forward request dynamics:
/// p_req(t)[n] = p_req(t-1)[n]·O_n + p_pop(t)[n]·Σ_m (1-O_m)·p_req(t-1)[m].
pub fn forward_step(
    prev: &ForwardState,
    outage_prev: &[f64],
    pop_t: &[f64],
) -> Result<ForwardState> {
    prev.validate()?;
    simplex_check(pop_t, 1.0, "p_pop")?;
    let n = prev.p_req.len();
    if outage_prev.len() != n || pop_t.len() != n {
        return Err(CoreError::Shape(format!(
            "forward_step: lengths {} / {} / {}",
            n,
            outage_prev.len(),
            pop_t.len()
        )));
    }
    for (i, &o) in outage_prev.iter().enumerate() {
        if !(0.0..=1.0).contains(&o) {
            return Err(CoreError::Domain(format!("outage[{i}] = {o} outside [0, 1]")));
        }
    }
    let served: f64 = prev
        .p_req
        .iter()
        .zip(outage_prev)
        .map(|(&p, &o)| (1.0 - o) * p)
        .sum();
    let p_req = prev
        .p_req
        .iter()
        .zip(outage_prev)
        .zip(pop_t)
        .map(|((&p, &o), &pop)| p * o + pop * served)
        .collect();
    Ok(ForwardState { p_req, slot: prev.slot + 1 })
}

/// One step of the backward latency dynamics:
/// L_n(t) = O_n(t)·(d(t) + L_n(t+1)) + (1-O_n(t))·d(t)/2.
pub fn backward_step(next_lat: &[f64], outage_t: &[f64], d_t: f64) -> Result<Vec<f64>> {
    if next_lat.len() != outage_t.len() {
        return Err(CoreError::Shape(format!(
            "backward_step: lengths {} / {}",
            next_lat.len(),
            outage_t.len()
        )));
    }
    if !(d_t > 0.0) {
        return Err(CoreError::Domain(format!("slot duration {d_t} must be > 0")));
    }
    next_lat
        .iter()
        .zip(outage_t)
        .enumerate()
        .map(|(i, (&l, &o))| {
            if !(l >= 0.0) {
                return Err(CoreError::Domain(format!("next_lat[{i}] = {l} must be >= 0")));
            }
            if !(0.0..=1.0).contains(&o) {
                return Err(CoreError::Domain(format!("outage[{i}] = {o} outside [0, 1]")));
            }
            Ok(o * (d_t + l) + (1.0 - o) * d_t / 2.0)
        })
        .collect()
}

/// Per-slot cost vector.
pub fn slot_rewards(
    state: &ForwardState,
    action: &SlotAction,
    outage: &[f64],
    lat: &[f64],
    cfg: &RadioConfig,
) -> Result<RewardVector> {
    let r_qos = state
        .p_req
        .iter()
        .zip(outage)
        .map(|(&p, &o)| p * o)
        .sum();
    let r_lat = state.p_req.iter().zip(lat).map(|(&p, &l)| p * l).sum();
    Ok(RewardVector {
        r_qos,
        r_bw: bandwidth_total(cfg, action)?,
        r_lat,
    })
}

/// Anything that can emit a per-slot action given the causal observation
/// (the forward state; backward states are never observed).
pub trait ActionSource {
    fn next_action(
        &mut self,
        state: &ForwardState,
        horizon: usize,
        rng: &mut SlotRng,
    ) -> Result<SlotAction>;
}

/// Full episode: forward pass (t = 1..T, p_req(1) = p_pop(1)), then
/// backward pass (L(t) for t = T..1 against the L(T+1) = 0 boundary),
/// then the reward fill. Deterministic given seed and policy parameters.
pub fn rollout(
    policy: &mut dyn ActionSource,
    pop: &PopularityTrack,
    cfg: &RadioConfig,
    seed: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    let horizon = pop.p_pop.len();
    let n = cfg.num_files_n;
    let mut rng = SlotRng::stream(seed, 1);

    let mut forward: Vec<ForwardState> = Vec::with_capacity(horizon);
    let mut actions: Vec<SlotAction> = Vec::with_capacity(horizon);
    let mut outages: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    let mut durations: Vec<f64> = Vec::with_capacity(horizon);

    let mut state = ForwardState { p_req: pop.p_pop[0].clone(), slot: 1 };
    for t in 0..horizon {
        let action = policy.next_action(&state, horizon, &mut rng)?;
        action.validate(cfg.cache_cap_c).map_err(|e| CoreError::Environment {
            slot: t + 1,
            message: format!("{e}"),
        })?;
        let outage: Vec<f64> = (0..n)
            .map(|f| outage_analytic(cfg, &action, f))
            .collect::<Result<_>>()?;
        let d = slot_duration(cfg.file_len_l, action.n_hb)?;
        forward.push(state.clone());
        durations.push(d);
        if t + 1 < horizon {
            state = forward_step(&state, &outage, &pop.p_pop[t + 1])?;
        }
        actions.push(action);
        outages.push(outage);
    }

    // Backward pass against the beyond-horizon boundary L(T+1) = 0, so
    // every slot's action has a latency consequence (including t = T).
    let mut backward: Vec<BackwardState> = Vec::with_capacity(horizon);
    let mut next = alloc::vec![0.0; n];
    for t in (0..horizon).rev() {
        let lat = backward_step(&next, &outages[t], durations[t])?;
        next = lat.clone();
        backward.push(BackwardState { lat, slot: t + 1 });
    }
    backward.reverse();

    let rewards: Vec<RewardVector> = (0..horizon)
        .map(|t| slot_rewards(&forward[t], &actions[t], &outages[t], &backward[t].lat, cfg))
        .collect::<Result<_>>()?;

    Ok(Trajectory {
        forward,
        actions,
        outages,
        durations,
        rewards,
        backward,
        seed,
        config_hash: hash_config(cfg, pop),
    })
}

/// FNV-1a over the numeric content of the config and popularity seed, so
/// run directories can record what produced a trajectory.
pub fn hash_config(cfg: &RadioConfig, pop: &PopularityTrack) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for v in [
        cfg.lambda_bs,
        cfg.p_tx,
        cfg.n0,
        cfg.antenna_gain,
        cfg.path_loss_exp,
        cfg.rate_r,
        cfg.file_len_l,
        cfg.num_files_n as f64,
        cfg.cache_cap_c as f64,
        pop.skew,
        pop.churn_k as f64,
    ] {
        eat(v.to_bits());
    }
    eat(pop.seed);
    eat(pop.p_pop.len() as u64);
    h
}
