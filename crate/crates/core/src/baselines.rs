//! Reference policies: rule-based LFU multicast, forward-only learned
//! multicast (A2C-style and PPO-style, optimizing the slot duration in
//! place of the backward latency reward), and a unicast streaming model
//! with zero latency by construction.

use crate::dynamics::{
    forward_step, rollout, ActionSource, Env, ForwardState, Trajectory,
};
use crate::fbmoac::{
    forward_features, stats_from, EpisodeStats, LearnerConfig,
    RecordingPolicy, RewardScales, RunningMoments,
};
use crate::netmodel::SlotAction;
use crate::nn::{adam_step, mlp_backward, mlp_forward, AdamState, MlpParams};
use crate::policy::{grad_outputs, log_prob, split_outputs, HarmonicMenu, PolicyHead, RawSample};
use crate::{CoreError, Result, SlotRng};
use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, pow};

/// Frequency accumulators for the rule-based LFU policy, with a fixed
/// spectral efficiency and harmonic index.
#[derive(Debug, Clone)]
pub struct LfuState {
    pub freq: Vec<f64>,
    pub alpha_star: f64,
    pub m_star: usize,
}

impl LfuState {
    pub fn new(n_files: usize, alpha_star: f64, m_star: usize) -> Result<Self> {
        if !(alpha_star > 0.0) || m_star < 1 {
            return Err(CoreError::Domain(
                "LFU needs alpha_star > 0 and m_star >= 1".into(),
            ));
        }
        Ok(LfuState { freq: vec![0.0; n_files], alpha_star, m_star })
    }
}

/// Accumulates observed request frequencies and caches the C most
/// frequent files (ties broken by lower file index).
pub fn lfu_policy_step(state: &mut LfuState, obs: &ForwardState, cache_cap: usize) -> SlotAction {
    for (f, &p) in state.freq.iter_mut().zip(&obs.p_req) {
        *f += p;
    }
    let n = state.freq.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lower index first among ties.
    order.sort_by(|&a, &b| state.freq[b].partial_cmp(&state.freq[a]).unwrap());
    let mut p_cach = vec![0.0; n];
    for &i in order.iter().take(cache_cap) {
        p_cach[i] = 1.0;
    }
    SlotAction {
        p_cach,
        alpha: vec![state.alpha_star; n],
        n_hb: state.m_star,
    }
}

/// LFU as a rollout policy.
pub struct LfuPolicy {
    pub state: LfuState,
    pub cache_cap: usize,
}

impl ActionSource for LfuPolicy {
    fn next_action(
        &mut self,
        state: &ForwardState,
        _horizon: usize,
        _rng: &mut SlotRng,
    ) -> Result<SlotAction> {
        Ok(lfu_policy_step(&mut self.state, state, self.cache_cap))
    }
}

/// Which forward-only update rule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardVariant {
    A2c,
    Ppo,
}

pub const PPO_CLIP: f64 = 0.2;
pub const PPO_EPOCHS: usize = 4;

/// Forward-only multi-objective learner on (r_QoS, r_BW, d(t)): the
/// backward latency reward is replaced by the slot duration, which
/// bounds the latency from the dynamics' side.
pub struct ForwardOnlyLearner {
    pub variant: ForwardVariant,
    pub head: PolicyHead,
    /// Three cost heads: QoS, bandwidth, slot duration.
    pub critic: MlpParams,
    pub moments: RunningMoments,
    pub cfg: LearnerConfig,
    pub scales: RewardScales,
    adam_actor: AdamState,
    adam_critic: AdamState,
}

impl ForwardOnlyLearner {
    pub fn new(env: &Env, hidden: &[usize], variant: ForwardVariant, cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        let head = PolicyHead::new(
            env.cfg.num_files_n,
            env.cfg.cache_cap_c,
            hidden,
            HarmonicMenu::default_menu(),
            cfg.seed,
        )?;
        let mut sizes = vec![env.cfg.num_files_n + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(3);
        let critic = MlpParams::init(&sizes, cfg.seed ^ 0x46)?;
        let adam_actor = AdamState::new(&head.params, cfg.lr_actor);
        let adam_critic = AdamState::new(&critic, cfg.lr_critic_f);
        let moments = RunningMoments::new(cfg.gamma_mov);
        let scales = RewardScales::for_env(env);
        Ok(ForwardOnlyLearner {
            variant,
            head,
            critic,
            moments,
            cfg,
            scales,
            adam_actor,
            adam_critic,
        })
    }

    /// The three scaled costs at slot t: QoS, bandwidth, slot duration.
    fn costs(&self, traj: &Trajectory, t: usize) -> [f64; 3] {
        let s = self.scales.scaled(traj, t);
        [s[0], s[1], traj.durations[t] / self.scales.lat]
    }

    fn advantages(&self, traj: &Trajectory) -> Result<Vec<[f64; 3]>> {
        let horizon = traj.horizon();
        let feats: Vec<Vec<f64>> = traj
            .forward
            .iter()
            .map(|s| forward_features(&s.p_req, s.slot, horizon))
            .collect();
        let values: Vec<Vec<f64>> = feats
            .iter()
            .map(|f| mlp_forward(&self.critic, f).map(|(o, _)| o))
            .collect::<Result<_>>()?;
        let mut adv = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let r = self.costs(traj, t);
            let zero = [0.0; 3];
            let next = if t + 1 < horizon { &values[t + 1][..] } else { &zero[..] };
            let mut a = [0.0; 3];
            for i in 0..3 {
                a[i] = -r[i] + self.cfg.gamma * next[i] - values[t][i];
            }
            adv.push(a);
        }
        Ok(adv)
    }

    fn update_critic(&mut self, traj: &Trajectory) -> Result<()> {
        let horizon = traj.horizon();
        let feats: Vec<Vec<f64>> = traj
            .forward
            .iter()
            .map(|s| forward_features(&s.p_req, s.slot, horizon))
            .collect();
        let values: Vec<Vec<f64>> = feats
            .iter()
            .map(|f| mlp_forward(&self.critic, f).map(|(o, _)| o))
            .collect::<Result<_>>()?;
        let mut grads = self.critic.zero_grads();
        for t in 0..horizon {
            let r = self.costs(traj, t);
            let zero = [0.0; 3];
            let next = if t + 1 < horizon { &values[t + 1][..] } else { &zero[..] };
            let (_, cache) = mlp_forward(&self.critic, &feats[t])?;
            let mut og = [0.0; 3];
            for i in 0..3 {
                let delta = -r[i] + self.cfg.gamma * next[i] - values[t][i];
                og[i] = -2.0 * delta / horizon as f64;
            }
            mlp_backward(&self.critic, &cache, &og, &mut grads)?;
        }
        adam_step(&mut self.critic, &grads, &mut self.adam_critic)
    }

    fn actor_epoch(
        &mut self,
        feats: &[Vec<f64>],
        raws: &[RawSample],
        old_log_probs: &[f64],
        advantage: &[f64],
        clipped: bool,
    ) -> Result<f64> {
        let mut grads = self.head.params.zero_grads();
        let mut entropy_sum = 0.0;
        let horizon = feats.len();
        for t in 0..horizon {
            let (out, cache) = mlp_forward(&self.head.params, &feats[t])?;
            let o = split_outputs(&out, self.head.n_files, self.head.menu.len())?;
            entropy_sum += crate::policy::entropy(&o);
            let weight = if clipped {
                let ratio = exp(log_prob(&o, &raws[t]) - old_log_probs[t]);
                let adv = advantage[t];
                // Gradient of min(ratio·A, clip(ratio)·A): zero once the
                // ratio is clipped on the improving side.
                let active = if adv >= 0.0 { ratio <= 1.0 + PPO_CLIP } else { ratio >= 1.0 - PPO_CLIP };
                if active {
                    adv * ratio
                } else {
                    0.0
                }
            } else {
                advantage[t]
            };
            let mut og = grad_outputs(&o, &raws[t], weight, self.cfg.entropy_coef);
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

    pub fn train_episode(&mut self, env: &Env, episode: u64) -> Result<EpisodeStats> {
        let episode_seed = self.cfg.seed.wrapping_add(episode.wrapping_mul(0x9e3779b97f4a7c15));
        let mut recorder = RecordingPolicy::new(&self.head);
        let traj = rollout(&mut recorder, &env.pop, &env.cfg, episode_seed)?;
        let (feats, raws, old_lps) = (recorder.feats, recorder.raws, recorder.log_probs);

        let adv = self.advantages(&traj)?;
        for a in &adv {
            for i in 0..3 {
                self.moments.update(i, a[i]);
            }
        }
        let scalarized: Vec<f64> = adv
            .iter()
            .map(|a| {
                (0..3)
                    .map(|i| self.cfg.pref[i] * self.moments.normalize(i, a[i]))
                    .sum()
            })
            .collect();

        let mut entropy = 0.0;
        match self.variant {
            ForwardVariant::A2c => {
                self.update_critic(&traj)?;
                entropy = self.actor_epoch(&feats, &raws, &old_lps, &scalarized, false)?;
            }
            ForwardVariant::Ppo => {
                for _ in 0..PPO_EPOCHS {
                    self.update_critic(&traj)?;
                    entropy = self.actor_epoch(&feats, &raws, &old_lps, &scalarized, true)?;
                }
            }
        }
        Ok(stats_from(&traj, &self.cfg, &self.scales, entropy))
    }
}

/// Unicast delivery model: every request is served on demand by the
/// nearest BS on a dedicated band of R/alpha_uc, so latency is zero and
/// bandwidth scales with the user intensity.
#[derive(Debug, Clone)]
pub struct UnicastConfig {
    /// UE spatial intensity, points per km².
    pub lambda_ue: f64,
    /// Unicast spectral efficiency (fixed operating point).
    pub alpha_uc: f64,
    /// Reference area the per-km² demand is integrated over, km².
    pub area_norm: f64,
}

impl UnicastConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ue > 0.0) || !(self.alpha_uc > 0.0) || !(self.area_norm > 0.0) {
            return Err(CoreError::Domain(
                "unicast config requires positive lambda_ue, alpha_uc, area_norm".into(),
            ));
        }
        Ok(())
    }
}

/// Nearest-BS Rayleigh outage at spectral efficiency alpha over a PPP of
/// intensity lambda:
/// O = 1 - ∫ 2πλ r e^{-πλr²} exp(-(2^α - 1) r^4 / γ_u) dr,
/// evaluated with the substitution s = πλr² by composite Simpson.
pub fn unicast_outage(lambda_bs: f64, gamma_u: f64, alpha_uc: f64) -> f64 {
    let pl = core::f64::consts::PI * lambda_bs;
    let beta = (pow(2.0, alpha_uc) - 1.0) / (gamma_u * pl * pl);
    // Integrand e^{-s - beta s²}; cut where the exponent reaches 60 (mass
    // beyond is below 1e-26), which also keeps the grid resolved when the
    // quadratic term dominates.
    let steps = 6000;
    let upper = if beta > 1e-12 {
        ((libm::sqrt(1.0 + 240.0 * beta) - 1.0) / (2.0 * beta)).min(60.0)
    } else {
        60.0
    };
    let h = upper / steps as f64;
    let f = |s: f64| exp(-s - beta * s * s);
    let mut acc = f(0.0) + f(upper);
    for i in 1..steps {
        let s = i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(s);
    }
    let coverage = acc * h / 3.0;
    (1.0 - coverage).clamp(0.0, 1.0)
}

/// Per-slot (r_QoS, r_BW, r_Lat = 0) trace of the unicast baseline over
/// the popularity track.
pub fn unicast_eval(ucfg: &UnicastConfig, env: &Env) -> Result<Vec<[f64; 3]>> {
    ucfg.validate()?;
    env.cfg.validate()?;
    let gamma_u =
        env.cfg.p_tx * env.cfg.antenna_gain * ucfg.alpha_uc / (env.cfg.rate_r * env.cfg.n0);
    let outage = unicast_outage(env.cfg.lambda_bs, gamma_u, ucfg.alpha_uc);
    let n = env.cfg.num_files_n;
    let horizon = env.pop.p_pop.len();
    let bw = ucfg.lambda_ue * ucfg.area_norm * env.cfg.rate_r / ucfg.alpha_uc;
    let outages = vec![outage; n];
    let mut state = ForwardState { p_req: env.pop.p_pop[0].clone(), slot: 1 };
    let mut trace = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let total_req: f64 = state.p_req.iter().sum();
        trace.push([outage * total_req, bw * total_req, 0.0]);
        if t + 1 < horizon {
            state = forward_step(&state, &outages, &env.pop.p_pop[t + 1])?;
        }
    }
    Ok(trace)
}
