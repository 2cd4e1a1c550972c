//! Subcommand implementations. Every command resolves its configuration
//! first, writes the resolved dump and a metadata file into the output
//! directory, then emits deterministic CSVs.

use crate::config::ExperimentConfig;
use crate::csvio::{
    compare_csv, dominance_csv, episode_row, episodes_header, outage_csv, trajectory_csv,
    OutagePoint,
};
use anyhow::{anyhow, bail, Context, Result};
use fbcast_core::baselines::{
    unicast_eval, ForwardOnlyLearner, ForwardVariant, LfuPolicy, LfuState, UnicastConfig,
};
use fbcast_core::dynamics::{hash_config, rollout, ActionSource, Env, ForwardState};
use fbcast_core::fbmoac::{
    dominates, evaluate_policy, EpisodeStats, FbMoacLearner, RecordingPolicy,
};
use fbcast_core::netmodel::{
    harmonic_number, mc_outage_oracle, outage_analytic, RadioConfig, SlotAction,
};
use fbcast_core::nn::{
    decode_params, encode_params, finite_difference_grads, max_grad_rel_error, mlp_backward,
    mlp_forward, MlpParams,
};
use fbcast_core::policy::{brute_force_capped_simplex, transform_cache, HarmonicMenu, PolicyHead};
use fbcast_core::SlotRng;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Fb,
    A2c,
    Ppo,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Algo> {
        match s {
            "fb" => Ok(Algo::Fb),
            "a2c" => Ok(Algo::A2c),
            "ppo" => Ok(Algo::Ppo),
            other => bail!("unknown algorithm '{other}' (expected 'fb', 'a2c' or 'ppo')"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Fb => "fb",
            Algo::A2c => "a2c",
            Algo::Ppo => "ppo",
        }
    }
}

/// Writes the resolved config plus seed/content-hash metadata, making
/// the run directory self-describing.
pub fn write_provenance(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    std::fs::write(out.join("config.resolved"), cfg.dump())?;
    let env = cfg.env()?;
    let meta = format!(
        "# schema: run-meta v1\nseed = {}\ninput_hash = {:016x}\n",
        cfg.seed,
        hash_config(&env.cfg, &env.pop)
    );
    std::fs::write(out.join("run.meta"), meta)?;
    Ok(())
}

/// Trains one policy in-process and returns the head with its episode
/// statistics (IO-free; `train` adds the file outputs).
pub fn train_policy(
    cfg: &ExperimentConfig,
    algo: Algo,
) -> Result<(PolicyHead, Vec<EpisodeStats>)> {
    let env = cfg.env()?;
    let lcfg = cfg.learner();
    let mut stats = Vec::with_capacity(cfg.episodes as usize);
    let head = match algo {
        Algo::Fb => {
            let mut learner =
                FbMoacLearner::new(&env, &cfg.hidden, lcfg).map_err(|e| anyhow!("{e}"))?;
            for ep in 0..cfg.episodes {
                stats.push(learner.train_episode(&env, ep).map_err(|e| anyhow!("{e}"))?);
            }
            learner.head
        }
        Algo::A2c | Algo::Ppo => {
            let variant = if algo == Algo::A2c { ForwardVariant::A2c } else { ForwardVariant::Ppo };
            let mut learner = ForwardOnlyLearner::new(&env, &cfg.hidden, variant, lcfg)
                .map_err(|e| anyhow!("{e}"))?;
            for ep in 0..cfg.episodes {
                stats.push(learner.train_episode(&env, ep).map_err(|e| anyhow!("{e}"))?);
            }
            learner.head
        }
    };
    Ok((head, stats))
}

pub fn train(cfg: &ExperimentConfig, algo: Algo, out: &Path) -> Result<Vec<EpisodeStats>> {
    write_provenance(cfg, out)?;
    let (head, stats) = train_policy(cfg, algo)?;
    let mut csv = episodes_header();
    for (ep, s) in stats.iter().enumerate() {
        csv.push_str(&episode_row(ep as u64 + 1, s));
    }
    std::fs::write(out.join(format!("episodes_{}.csv", algo.name())), csv)?;
    std::fs::write(
        out.join(format!("actor_{}.ckpt", algo.name())),
        encode_params(&head.params),
    )?;
    Ok(stats)
}

/// Rebuilds a policy head from a checkpoint, checking that the stored
/// architecture matches the configuration.
pub fn load_head(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<PolicyHead> {
    let bytes = std::fs::read(checkpoint)
        .with_context(|| format!("cannot read checkpoint {}", checkpoint.display()))?;
    let params = decode_params(&bytes).map_err(|e| anyhow!("{e}"))?;
    let menu = HarmonicMenu::default_menu();
    let expect_in = cfg.num_files_n + 1;
    let expect_out = PolicyHead::output_dim(cfg.num_files_n, menu.len());
    if params.sizes[0] != expect_in || *params.sizes.last().unwrap() != expect_out {
        bail!(
            "checkpoint architecture {:?} does not match num_files_n = {}",
            params.sizes,
            cfg.num_files_n
        );
    }
    Ok(PolicyHead {
        params,
        n_files: cfg.num_files_n,
        cache_cap: cfg.cache_cap_c,
        menu,
    })
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    write_provenance(cfg, out)?;
    let env = cfg.env()?;
    let head = load_head(cfg, checkpoint)?;
    let mut recorder = RecordingPolicy::new(&head);
    let traj = rollout(&mut recorder, &env.pop, &env.cfg, cfg.seed).map_err(|e| anyhow!("{e}"))?;
    std::fs::write(out.join("trajectory.csv"), trajectory_csv(&traj))?;
    Ok(())
}

/// Mean cumulative (QoS, BW, Lat) costs of any action source over the
/// evaluation seeds; a fresh source per seed.
pub fn evaluate_source<F>(mut make: F, env: &Env, seeds: &[u64]) -> Result<[f64; 3]>
where
    F: FnMut() -> Box<dyn ActionSource>,
{
    let mut totals = [0.0; 3];
    for &seed in seeds {
        let mut src = make();
        let traj = rollout(src.as_mut(), &env.pop, &env.cfg, seed).map_err(|e| anyhow!("{e}"))?;
        for r in &traj.rewards {
            totals[0] += r.r_qos;
            totals[1] += r.r_bw;
            totals[2] += r.r_lat;
        }
    }
    let k = seeds.len() as f64;
    Ok([totals[0] / k, totals[1] / k, totals[2] / k])
}

fn eval_seeds(base: u64) -> Vec<u64> {
    (0..8u64).map(|i| base.wrapping_add(0x100 + i)).collect()
}

/// The LFU resource point matched to a learned policy: the harmonic
/// time-average of its spectral efficiencies (bandwidth is proportional
/// to the summed reciprocals, so the harmonic mean preserves the learned
/// policy's spectrum share), and the menu entry nearest its mean
/// harmonic bandwidth factor.
pub fn lfu_operating_point(head: &PolicyHead, env: &Env, seeds: &[u64]) -> Result<(f64, usize)> {
    let mut alpha_inv_sum = 0.0;
    let mut alpha_count = 0usize;
    let mut h_sum = 0.0;
    let mut h_count = 0usize;
    for &seed in seeds {
        let mut recorder = RecordingPolicy::new(head);
        let traj = rollout(&mut recorder, &env.pop, &env.cfg, seed).map_err(|e| anyhow!("{e}"))?;
        for a in &traj.actions {
            alpha_inv_sum += a.alpha.iter().map(|&x| 1.0 / x).sum::<f64>();
            alpha_count += a.alpha.len();
            h_sum += harmonic_number(a.n_hb).map_err(|e| anyhow!("{e}"))?;
            h_count += 1;
        }
    }
    let alpha_star = alpha_count as f64 / alpha_inv_sum;
    let h_mean = h_sum / h_count as f64;
    let m_star = *HarmonicMenu::default_menu()
        .values()
        .iter()
        .min_by(|&&a, &&b| {
            let da = (harmonic_number(a).unwrap() - h_mean).abs();
            let db = (harmonic_number(b).unwrap() - h_mean).abs();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    Ok((alpha_star, m_star))
}

pub struct CompareOutcome {
    pub names: Vec<String>,
    pub costs: Vec<[f64; 3]>,
}

impl CompareOutcome {
    pub fn cost_of(&self, name: &str) -> [f64; 3] {
        let i = self.names.iter().position(|n| n == name).unwrap();
        self.costs[i]
    }

    pub fn is_dominated(&self, name: &str, by: &str) -> bool {
        dominates(&self.cost_of(by), &self.cost_of(name))
    }
}

/// Trains the learned policies, derives the LFU operating point from the
/// trained FB policy, evaluates everything on common seeds and emits the
/// comparison and dominance tables.
pub fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<CompareOutcome> {
    write_provenance(cfg, out)?;
    let env = cfg.env()?;
    let seeds = eval_seeds(cfg.seed);

    let (fb_head, _) = train_policy(cfg, Algo::Fb)?;
    let (a2c_head, _) = train_policy(cfg, Algo::A2c)?;
    let (ppo_head, _) = train_policy(cfg, Algo::Ppo)?;

    let mut names = Vec::new();
    let mut costs = Vec::new();
    for (name, head) in [("fb", &fb_head), ("a2c", &a2c_head), ("ppo", &ppo_head)] {
        names.push(name.to_string());
        costs.push(evaluate_policy(head, &env, &seeds).map_err(|e| anyhow!("{e}"))?);
    }

    let (alpha_star, m_star) = lfu_operating_point(&fb_head, &env, &seeds)?;
    let n = cfg.num_files_n;
    let cap = cfg.cache_cap_c;
    let lfu_cost = evaluate_source(
        || {
            Box::new(LfuPolicy {
                state: LfuState::new(n, alpha_star, m_star).unwrap(),
                cache_cap: cap,
            })
        },
        &env,
        &seeds,
    )?;
    names.push("lfu".to_string());
    costs.push(lfu_cost);

    let ucfg = UnicastConfig {
        lambda_ue: cfg.lambda_ue,
        alpha_uc: cfg.alpha_uc,
        area_norm: cfg.area_norm,
    };
    let trace = unicast_eval(&ucfg, &env).map_err(|e| anyhow!("{e}"))?;
    let mut uc = [0.0; 3];
    for row in &trace {
        for i in 0..3 {
            uc[i] += row[i];
        }
    }
    names.push("unicast".to_string());
    costs.push(uc);

    let rows: Vec<(String, [f64; 3])> = names.iter().cloned().zip(costs.iter().copied()).collect();
    std::fs::write(out.join("compare.csv"), compare_csv(&rows))?;
    std::fs::write(out.join("dominance.csv"), dominance_csv(&names, &costs))?;
    std::fs::write(
        out.join("lfu_operating_point.txt"),
        format!("alpha_star = {alpha_star}\nm_star = {m_star}\n"),
    )?;
    Ok(CompareOutcome { names, costs })
}

pub const OUTAGE_MC_SAMPLES: u64 = 100_000;

/// Analytic-vs-Monte-Carlo outage checks on a fixed parameter grid. The
/// synthetic link budget puts the probed points in the responsive outage
/// range; a point passes when the gap is within three binomial standard
/// errors.
pub fn validate_outage(seed: u64, out: &Path) -> Result<Vec<OutagePoint>> {
    std::fs::create_dir_all(out)?;
    let n = 10;
    let mut points = Vec::new();
    let mut idx = 0u64;
    for &lambda_bs in &[50.0, 100.0] {
        for &alpha in &[0.5, 2.0] {
            for &p in &[0.05, 0.2, 0.8] {
                let cfg = RadioConfig {
                    lambda_bs,
                    p_tx: 0.1125,
                    n0: 1.0,
                    antenna_gain: 1.0,
                    path_loss_exp: 4.0,
                    rate_r: 1.0,
                    file_len_l: 600.0,
                    num_files_n: n,
                    cache_cap_c: 1,
                };
                let mut p_cach = vec![(1.0 - p) / (n as f64 - 1.0); n];
                p_cach[0] = p;
                let action = SlotAction { p_cach, alpha: vec![alpha; n], n_hb: 4 };
                let analytic = outage_analytic(&cfg, &action, 0).map_err(|e| anyhow!("{e}"))?;
                let (mc, _) = mc_outage_oracle(
                    &cfg,
                    &action,
                    0,
                    OUTAGE_MC_SAMPLES,
                    seed.wrapping_add(idx),
                )
                .map_err(|e| anyhow!("{e}"))?;
                let std_err = (analytic * (1.0 - analytic) / OUTAGE_MC_SAMPLES as f64).sqrt();
                let pass = (mc - analytic).abs() <= 3.0 * std_err + 1e-9;
                points.push(OutagePoint {
                    p_cach: p,
                    alpha,
                    lambda_bs,
                    analytic,
                    mc,
                    std_err,
                    samples: OUTAGE_MC_SAMPLES,
                    pass,
                });
                idx += 1;
            }
        }
    }
    std::fs::write(out.join("outage_validation.csv"), outage_csv(&points))?;
    if let Some(bad) = points.iter().find(|p| !p.pass) {
        bail!(
            "outage validation failed at p_cach={} alpha={} lambda_bs={}: analytic={} mc={}",
            bad.p_cach,
            bad.alpha,
            bad.lambda_bs,
            bad.analytic,
            bad.mc
        );
    }
    Ok(points)
}

/// Fast invariant suite: dynamics conservation, latency boundary cases,
/// projection optimality, gradient correctness, rollout determinism.
pub fn selftest(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let mut rng = SlotRng::from_seed(cfg.seed);

    // Forward dynamics conserve probability mass.
    for _ in 0..2000 {
        let n = 2 + rng.below(30) as usize;
        let p_req = random_simplex(&mut rng, n);
        let pop = random_simplex(&mut rng, n);
        let outage: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let next = fbcast_core::dynamics::forward_step(
            &ForwardState { p_req, slot: 1 },
            &outage,
            &pop,
        )
        .map_err(|e| anyhow!("{e}"))?;
        let sum: f64 = next.p_req.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            bail!("selftest mass-conservation: sum drifted to {sum}");
        }
    }
    lines.push("selftest mass-conservation: ok".to_string());

    // Latency boundary values and reversed-recursion agreement.
    for trial in 0..20 {
        let n = 1 + trial % 4;
        let horizon = 4 + trial;
        let outs: Vec<Vec<f64>> =
            (0..horizon).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect();
        let ds: Vec<f64> = (0..horizon).map(|_| 0.5 + rng.uniform()).collect();
        let mut lat = vec![0.0; n];
        let mut l_t = vec![vec![]; horizon];
        for t in (0..horizon).rev() {
            lat = fbcast_core::dynamics::backward_step(&lat, &outs[t], ds[t])
                .map_err(|e| anyhow!("{e}"))?;
            l_t[t] = lat.clone();
        }
        let mut k = vec![0.0; n];
        for tau in 1..=horizon {
            let t = horizon - tau;
            k = fbcast_core::dynamics::backward_step(&k, &outs[t], ds[t])
                .map_err(|e| anyhow!("{e}"))?;
            if k != l_t[t] {
                bail!("selftest latency-reversal: mismatch at trial {trial} slot {t}");
            }
        }
    }
    lines.push("selftest latency-reversal: ok".to_string());

    // Capped-simplex projection against the brute-force oracle.
    for trial in 0..200 {
        let n = 2 + trial % 5;
        let cap = 1 + rng.below(n - 1);
        let raw: Vec<f64> = (0..n).map(|_| 4.0 * rng.normal()).collect();
        let fast = transform_cache(&raw, cap).map_err(|e| anyhow!("{e}"))?;
        let slow = brute_force_capped_simplex(&raw, cap);
        for (a, b) in fast.iter().zip(&slow) {
            if (a - b).abs() > 1e-6 {
                bail!("selftest projection: {a} vs oracle {b}");
            }
        }
    }
    lines.push("selftest projection: ok".to_string());

    // Backprop against central finite differences on a small net.
    let params = MlpParams::init(&[4, 6, 3], cfg.seed ^ 0x5e).map_err(|e| anyhow!("{e}"))?;
    let input = vec![0.3, -0.7, 1.1, 0.2];
    let weights = vec![1.0, -2.0, 0.5];
    let mut grads = params.zero_grads();
    let (_, cache) = mlp_forward(&params, &input).map_err(|e| anyhow!("{e}"))?;
    mlp_backward(&params, &cache, &weights, &mut grads).map_err(|e| anyhow!("{e}"))?;
    let numeric = finite_difference_grads(
        &params,
        |p| {
            let (o, _) = mlp_forward(p, &input).unwrap();
            o.iter().zip(&weights).map(|(a, b)| a * b).sum()
        },
        1e-6,
    );
    let err = max_grad_rel_error(&grads, &numeric);
    if err > 1e-4 {
        bail!("selftest gradients: finite-difference error {err}");
    }
    lines.push("selftest gradients: ok".to_string());

    // Rollouts are bit-deterministic under a stochastic policy.
    let env = cfg.env()?;
    let head = PolicyHead::new(
        cfg.num_files_n,
        cfg.cache_cap_c,
        &cfg.hidden,
        HarmonicMenu::default_menu(),
        cfg.seed,
    )
    .map_err(|e| anyhow!("{e}"))?;
    let mut r1 = RecordingPolicy::new(&head);
    let mut r2 = RecordingPolicy::new(&head);
    let t1 = rollout(&mut r1, &env.pop, &env.cfg, cfg.seed).map_err(|e| anyhow!("{e}"))?;
    let t2 = rollout(&mut r2, &env.pop, &env.cfg, cfg.seed).map_err(|e| anyhow!("{e}"))?;
    if trajectory_csv(&t1) != trajectory_csv(&t2) {
        bail!("selftest determinism: repeated rollout differs");
    }
    lines.push("selftest determinism: ok".to_string());

    Ok(lines)
}

fn random_simplex(rng: &mut SlotRng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.exponential()).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}
