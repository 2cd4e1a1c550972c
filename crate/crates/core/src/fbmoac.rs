//! Forward-backward multi-objective actor-critic: a forward critic on
//! the request state, a backward critic on the latency state, TD(0)
//! advantages per objective, moving-moment normalization, and
//! preference-weighted scalarization driving a single actor.

use crate::dynamics::{rollout, ActionSource, Env, ForwardState, Trajectory};
use crate::netmodel::SlotAction;
use crate::nn::{adam_step, mlp_backward, mlp_forward, AdamState, MlpParams};
use crate::policy::{grad_outputs, sample_action, split_outputs, PolicyHead, RawSample};
use crate::{CoreError, Result, SlotRng};
use alloc::vec;
use alloc::vec::Vec;
use libm::{pow, sqrt};

pub const OBJ_QOS: usize = 0;
pub const OBJ_BW: usize = 1;
pub const OBJ_LAT: usize = 2;

/// Learner hyperparameters.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Preference weights [alpha_QoS, alpha_BW, alpha_Lat].
    pub pref: [f64; 3],
    /// Moving-moment smoothing factor.
    pub gamma_mov: f64,
    pub lr_actor: f64,
    pub lr_critic_f: f64,
    pub lr_critic_b: f64,
    pub episodes: usize,
    pub entropy_coef: f64,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(CoreError::Domain("gamma must be in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.gamma_mov) {
            return Err(CoreError::Domain("gamma_mov must be in [0, 1)".into()));
        }
        if self.pref.iter().any(|&w| w < 0.0) || self.pref.iter().all(|&w| w == 0.0) {
            return Err(CoreError::Domain(
                "preference weights must be nonnegative with at least one positive".into(),
            ));
        }
        Ok(())
    }
}

/// Forward critic (two cost heads: QoS and bandwidth) plus backward
/// critic (one cost head: latency).
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub forward: MlpParams,
    pub backward: MlpParams,
}

impl CriticPair {
    pub fn new(n_files: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut f_sizes = vec![n_files + 1];
        f_sizes.extend_from_slice(hidden);
        f_sizes.push(2);
        let mut b_sizes = vec![n_files + 1];
        b_sizes.extend_from_slice(hidden);
        b_sizes.push(1);
        CriticPair {
            forward: MlpParams::init(&f_sizes, seed ^ 0x66)?,
            backward: MlpParams::init(&b_sizes, seed ^ 0x62)?,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        if *self.forward.sizes.last().unwrap() != 2 || *self.backward.sizes.last().unwrap() != 1 {
            return Err(CoreError::Shape("critic output dims must be 2 and 1".into()));
        }
        Ok(self)
    }
}

/// Per-objective exponential moving mean/variance of advantages.
#[derive(Debug, Clone)]
pub struct RunningMoments {
    pub mean: [f64; 3],
    pub var: [f64; 3],
    pub gamma_mov: f64,
}

impl RunningMoments {
    pub fn new(gamma_mov: f64) -> Self {
        RunningMoments { mean: [0.0; 3], var: [1.0; 3], gamma_mov }
    }

    pub fn update(&mut self, objective: usize, x: f64) {
        let g = self.gamma_mov;
        self.mean[objective] = g * self.mean[objective] + (1.0 - g) * x;
        let d = x - self.mean[objective];
        self.var[objective] = g * self.var[objective] + (1.0 - g) * d * d;
    }

    pub fn normalize(&self, objective: usize, x: f64) -> f64 {
        // The deviation floor keeps quiet stretches from being amplified
        // to unit scale: costs are pre-scaled to O(1), so advantage
        // fluctuations below the floor are treated as noise rather than
        // signal.
        (x - self.mean[objective]) / sqrt(self.var[objective] + 1e-8).max(STD_FLOOR)
    }
}

/// Minimum standard deviation used when normalizing advantages.
pub const STD_FLOOR: f64 = 0.05;

/// Fixed scales that bring the three costs to commensurate magnitudes
/// before they reach the critics and the scalarized return: bandwidth in
/// units of the full-library finest-chunk multicast budget N·R·H(m_max),
/// latency in units of the file length.
#[derive(Debug, Clone, Copy)]
pub struct RewardScales {
    pub bw: f64,
    pub lat: f64,
}

impl RewardScales {
    pub fn for_env(env: &Env) -> Self {
        let m_max = *crate::policy::HarmonicMenu::default_menu()
            .values()
            .iter()
            .max()
            .unwrap_or(&1);
        let h_max = crate::netmodel::harmonic_number(m_max).unwrap_or(1.0);
        RewardScales {
            bw: env.cfg.num_files_n as f64 * env.cfg.rate_r * h_max,
            lat: env.cfg.file_len_l,
        }
    }

    pub fn scaled(&self, traj: &Trajectory, t: usize) -> [f64; 3] {
        let r = &traj.rewards[t];
        [r.r_qos, r.r_bw / self.bw, r.r_lat / self.lat]
    }
}

/// Critic input features for a forward state.
pub fn forward_features(p_req: &[f64], slot: usize, horizon: usize) -> Vec<f64> {
    let n = p_req.len() as f64;
    let mut f: Vec<f64> = p_req.iter().map(|&p| p * n).collect();
    f.push(slot as f64 / horizon as f64);
    f
}

/// Critic input features for a backward state (latency in file-length
/// units plus the normalized slot index).
pub fn backward_features(lat: &[f64], lat_scale: f64, slot: usize, horizon: usize) -> Vec<f64> {
    let mut f: Vec<f64> = lat.iter().map(|&l| l / lat_scale).collect();
    f.push(slot as f64 / horizon as f64);
    f
}

fn critic_values(params: &MlpParams, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    features
        .iter()
        .map(|f| mlp_forward(params, f).map(|(out, _)| out))
        .collect()
}

/// TD(0) advantages of the two forward objectives:
/// A_i(t) = -r_i(t) + gamma·V_i(s_{t+1}) - V_i(s_t), with V(s_{T+1}) = 0.
/// Rewards are costs, so the learning signal is their negation.
pub fn forward_advantages(
    traj: &Trajectory,
    critic: &CriticPair,
    gamma: f64,
    scales: &RewardScales,
) -> Result<Vec<[f64; 2]>> {
    let horizon = traj.horizon();
    let feats: Vec<Vec<f64>> = traj
        .forward
        .iter()
        .map(|s| forward_features(&s.p_req, s.slot, horizon))
        .collect();
    let values = critic_values(&critic.forward, &feats)?;
    let mut adv = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let r = scales.scaled(traj, t);
        let next = if t + 1 < horizon { &values[t + 1][..] } else { &[0.0, 0.0][..] };
        adv.push([
            -r[OBJ_QOS] + gamma * next[0] - values[t][0],
            -r[OBJ_BW] + gamma * next[1] - values[t][1],
        ]);
    }
    Ok(adv)
}

/// TD(0) advantages along the reversed latency sequence, indexed by the
/// acting slot. The reversed chain starts at the beyond-horizon boundary
/// z_0 = 0 and steps z_{k-1} -> z_k = L(T-k+1) under the action of slot
/// t = T-k+1, which also determines the step's cost r_lat(t); the last
/// arrival z_T = L(1) has no successor, so its bootstrap value is 0.
/// Each action is thus credited with exactly the transition it caused:
/// A(a_t) = -r_lat(t) + gamma*V(L(t)) - V(L(t+1)).
pub fn backward_advantages(
    traj: &Trajectory,
    critic: &CriticPair,
    gamma: f64,
    scales: &RewardScales,
) -> Result<Vec<f64>> {
    let horizon = traj.horizon();
    let n = traj.backward[0].lat.len();
    let zero_boundary = alloc::vec![0.0; n];
    // feats[k] is the reversed-chain state z_k for k = 0..horizon-1.
    let feats: Vec<Vec<f64>> = (0..horizon)
        .map(|k| {
            let lat = if k == 0 { &zero_boundary } else { &traj.backward[horizon - k].lat };
            backward_features(lat, scales.lat, k, horizon)
        })
        .collect();
    let values = critic_values(&critic.backward, &feats)?;
    let mut adv = alloc::vec![0.0; horizon];
    for t in 0..horizon {
        let k = horizon - t; // reversed step taken by the action at slot t
        let r_lat = traj.rewards[t].r_lat / scales.lat;
        let boot = if k < horizon { values[k][0] } else { 0.0 };
        adv[t] = -r_lat + gamma * boot - values[k - 1][0];
    }
    Ok(adv)
}

/// Per-episode statistics.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeStats {
    /// Discounted cumulative raw costs.
    pub cum_qos: f64,
    pub cum_bw: f64,
    pub cum_lat: f64,
    /// Preference-weighted discounted return of the scaled costs,
    /// negated (higher is better).
    pub scalarized_return: f64,
    /// Mean policy entropy over the episode.
    pub entropy: f64,
}

/// A policy wrapper that records features, raw samples and log-probs
/// during a rollout.
pub struct RecordingPolicy<'a> {
    pub head: &'a PolicyHead,
    pub feats: Vec<Vec<f64>>,
    pub raws: Vec<RawSample>,
    pub log_probs: Vec<f64>,
}

impl<'a> RecordingPolicy<'a> {
    pub fn new(head: &'a PolicyHead) -> Self {
        RecordingPolicy { head, feats: Vec::new(), raws: Vec::new(), log_probs: Vec::new() }
    }
}

impl ActionSource for RecordingPolicy<'_> {
    fn next_action(
        &mut self,
        state: &ForwardState,
        horizon: usize,
        rng: &mut SlotRng,
    ) -> Result<SlotAction> {
        let f = self.head.features(&state.p_req, state.slot, horizon);
        let (action, raw, lp) = sample_action(self.head, &f, rng)?;
        self.feats.push(f);
        self.raws.push(raw);
        self.log_probs.push(lp);
        Ok(action)
    }
}

/// The FB-MOAC learner: one actor, a critic pair, their optimizers and
/// the advantage moments.
pub struct FbMoacLearner {
    pub head: PolicyHead,
    pub critics: CriticPair,
    pub moments: RunningMoments,
    pub cfg: LearnerConfig,
    pub scales: RewardScales,
    adam_actor: AdamState,
    adam_fc: AdamState,
    adam_bc: AdamState,
}

impl FbMoacLearner {
    pub fn new(env: &Env, hidden: &[usize], cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        let head = PolicyHead::new(
            env.cfg.num_files_n,
            env.cfg.cache_cap_c,
            hidden,
            crate::policy::HarmonicMenu::default_menu(),
            cfg.seed,
        )?;
        let critics = CriticPair::new(env.cfg.num_files_n, hidden, cfg.seed)?;
        let adam_actor = AdamState::new(&head.params, cfg.lr_actor);
        let adam_fc = AdamState::new(&critics.forward, cfg.lr_critic_f);
        let adam_bc = AdamState::new(&critics.backward, cfg.lr_critic_b);
        let moments = RunningMoments::new(cfg.gamma_mov);
        let scales = RewardScales::for_env(env);
        Ok(FbMoacLearner { head, critics, moments, cfg, scales, adam_actor, adam_fc, adam_bc })
    }

    /// One full training episode: forward pass, backward pass, then the
    /// bidirectional update (backward critic, forward critic, actor).
    pub fn train_episode(&mut self, env: &Env, episode: u64) -> Result<EpisodeStats> {
        let episode_seed = self.cfg.seed.wrapping_add(episode.wrapping_mul(0x9e3779b97f4a7c15));
        // Phase 1 + 2: rollout runs the forward pass and fills the
        // backward latency states.
        let mut recorder = RecordingPolicy::new(&self.head);
        let traj = rollout(&mut recorder, &env.pop, &env.cfg, episode_seed)?;
        let (feats, raws) = (recorder.feats, recorder.raws);

        // Phase 3: advantages, moment update, normalization.
        let f_adv = forward_advantages(&traj, &self.critics, self.cfg.gamma, &self.scales)?;
        let b_adv = backward_advantages(&traj, &self.critics, self.cfg.gamma, &self.scales)?;
        let horizon = traj.horizon();
        for t in 0..horizon {
            self.moments.update(OBJ_QOS, f_adv[t][0]);
            self.moments.update(OBJ_BW, f_adv[t][1]);
            self.moments.update(OBJ_LAT, b_adv[t]);
        }
        let scalarized: Vec<f64> = (0..horizon)
            .map(|t| {
                self.cfg.pref[OBJ_QOS] * self.moments.normalize(OBJ_QOS, f_adv[t][0])
                    + self.cfg.pref[OBJ_BW] * self.moments.normalize(OBJ_BW, f_adv[t][1])
                    + self.cfg.pref[OBJ_LAT] * self.moments.normalize(OBJ_LAT, b_adv[t])
            })
            .collect();

        // Backward critic first, then forward critic, then the actor.
        self.update_backward_critic(&traj)?;
        self.update_forward_critic(&traj)?;
        let mean_entropy = self.update_actor(&feats, &raws, &scalarized)?;

        Ok(stats_from(&traj, &self.cfg, &self.scales, mean_entropy))
    }

    fn update_forward_critic(&mut self, traj: &Trajectory) -> Result<()> {
        let horizon = traj.horizon();
        let mut grads = self.critics.forward.zero_grads();
        let feats: Vec<Vec<f64>> = traj
            .forward
            .iter()
            .map(|s| forward_features(&s.p_req, s.slot, horizon))
            .collect();
        // Regress on the full discounted cost-to-go: unbiased targets
        // that reach every state in one episode, where bootstrapped
        // targets would need many episodes to propagate across the
        // horizon.
        let mut target = alloc::vec![[0.0f64; 2]; horizon + 1];
        for t in (0..horizon).rev() {
            let r = self.scales.scaled(traj, t);
            for i in 0..2 {
                target[t][i] = -r[i] + self.cfg.gamma * target[t + 1][i];
            }
        }
        for t in 0..horizon {
            let (values, cache) = mlp_forward(&self.critics.forward, &feats[t])?;
            let mut og = [0.0, 0.0];
            for i in 0..2 {
                og[i] = -2.0 * (target[t][i] - values[i]) / horizon as f64;
            }
            mlp_backward(&self.critics.forward, &cache, &og, &mut grads)?;
        }
        adam_step(&mut self.critics.forward, &grads, &mut self.adam_fc)
    }

    fn update_backward_critic(&mut self, traj: &Trajectory) -> Result<()> {
        let horizon = traj.horizon();
        let n = traj.backward[0].lat.len();
        let zero_boundary = alloc::vec![0.0; n];
        let mut grads = self.critics.backward.zero_grads();
        // Same reversed-chain convention as backward_advantages: the
        // value at z_{k-1} regresses toward -r_lat + gamma*V(z_k).
        let feats: Vec<Vec<f64>> = (0..horizon)
            .map(|k| {
                let lat = if k == 0 { &zero_boundary } else { &traj.backward[horizon - k].lat };
                backward_features(lat, self.scales.lat, k, horizon)
            })
            .collect();
        // Full discounted cost-to-go along the reversed chain: the value
        // of z_{k-1} covers reversed steps k..=horizon, whose step k
        // carries the cost of acting slot t = horizon - k (0-based).
        let mut target = alloc::vec![0.0f64; horizon + 1];
        for k in (1..=horizon).rev() {
            let r_lat = traj.rewards[horizon - k].r_lat / self.scales.lat;
            target[k - 1] = -r_lat + self.cfg.gamma * target[k];
        }
        for k in 1..=horizon {
            let (values, cache) = mlp_forward(&self.critics.backward, &feats[k - 1])?;
            let og = [-2.0 * (target[k - 1] - values[0]) / horizon as f64];
            mlp_backward(&self.critics.backward, &cache, &og, &mut grads)?;
        }
        adam_step(&mut self.critics.backward, &grads, &mut self.adam_bc)
    }

    fn update_actor(
        &mut self,
        feats: &[Vec<f64>],
        raws: &[RawSample],
        advantage: &[f64],
    ) -> Result<f64> {
        let mut grads = self.head.params.zero_grads();
        let mut entropy_sum = 0.0;
        let horizon = feats.len();
        for t in 0..horizon {
            let (out, cache) = mlp_forward(&self.head.params, &feats[t])?;
            let o = split_outputs(&out, self.head.n_files, self.head.menu.len())?;
            entropy_sum += crate::policy::entropy(&o);
            // Loss is -(adv·log pi + ent_coef·H) plus the clip-violation
            // penalty on the cache means; descend its gradient.
            let mut og = grad_outputs(&o, &raws[t], advantage[t], self.cfg.entropy_coef);
            let n = self.head.n_files;
            let viol = crate::policy::projection_violation(
                &raws[t].gauss[0..n],
                self.head.cache_cap,
            )?;
            let a_viol = crate::policy::alpha_saturation_violation(&raws[t].gauss[n..2 * n]);
            for i in 0..n {
                og[i] -= crate::policy::PROJECTION_PENALTY * viol[i];
                og[n + i] -= crate::policy::PROJECTION_PENALTY * a_viol[i];
            }
            for g in &mut og {
                *g = -*g / horizon as f64;
            }
            mlp_backward(&self.head.params, &cache, &og, &mut grads)?;
        }
        adam_step(&mut self.head.params, &grads, &mut self.adam_actor)?;
        Ok(entropy_sum / horizon as f64)
    }
}

pub fn stats_from(
    traj: &Trajectory,
    cfg: &LearnerConfig,
    scales: &RewardScales,
    entropy: f64,
) -> EpisodeStats {
    let mut cum = [0.0; 3];
    let mut scalarized = 0.0;
    for t in 0..traj.horizon() {
        let disc = pow(cfg.gamma, t as f64);
        let r = &traj.rewards[t];
        cum[OBJ_QOS] += disc * r.r_qos;
        cum[OBJ_BW] += disc * r.r_bw;
        cum[OBJ_LAT] += disc * r.r_lat;
        let s = scales.scaled(traj, t);
        scalarized -=
            disc * (cfg.pref[OBJ_QOS] * s[0] + cfg.pref[OBJ_BW] * s[1] + cfg.pref[OBJ_LAT] * s[2]);
    }
    EpisodeStats {
        cum_qos: cum[OBJ_QOS],
        cum_bw: cum[OBJ_BW],
        cum_lat: cum[OBJ_LAT],
        scalarized_return: scalarized,
        entropy,
    }
}

/// Mean cumulative (QoS, BW, Lat) costs of a policy over a set of
/// evaluation seeds.
pub fn evaluate_policy(head: &PolicyHead, env: &Env, eval_seeds: &[u64]) -> Result<[f64; 3]> {
    let mut totals = [0.0; 3];
    for &seed in eval_seeds {
        let mut recorder = RecordingPolicy::new(head);
        let traj = rollout(&mut recorder, &env.pop, &env.cfg, seed)?;
        for r in &traj.rewards {
            totals[OBJ_QOS] += r.r_qos;
            totals[OBJ_BW] += r.r_bw;
            totals[OBJ_LAT] += r.r_lat;
        }
    }
    let k = eval_seeds.len() as f64;
    Ok([totals[0] / k, totals[1] / k, totals[2] / k])
}

/// x dominates y iff x is no worse on every objective and strictly
/// better on at least one (costs: lower is better).
pub fn dominates(x: &[f64; 3], y: &[f64; 3]) -> bool {
    let mut strictly = false;
    for i in 0..3 {
        if x[i] > y[i] {
            return false;
        }
        if x[i] < y[i] {
            strictly = true;
        }
    }
    strictly
}

/// Pairwise dominance report over evaluated mean cost vectors.
#[derive(Debug, Clone)]
pub struct DominanceReport {
    pub costs: Vec<[f64; 3]>,
    /// (i, j) pairs where policy i dominates policy j.
    pub dominated_pairs: Vec<(usize, usize)>,
}

pub fn pareto_eval(
    solutions: &[&PolicyHead],
    env: &Env,
    eval_seeds: &[u64],
) -> Result<DominanceReport> {
    let costs: Vec<[f64; 3]> = solutions
        .iter()
        .map(|head| evaluate_policy(head, env, eval_seeds))
        .collect::<Result<_>>()?;
    let mut dominated_pairs = Vec::new();
    for i in 0..costs.len() {
        for j in 0..costs.len() {
            if i != j && dominates(&costs[i], &costs[j]) {
                dominated_pairs.push((i, j));
            }
        }
    }
    Ok(DominanceReport { costs, dominated_pairs })
}
