//! End-to-end acceptance gate: one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines as they complete; the test fails if any
//! criterion fails.

use fbcast::commands::{self, Algo};
use fbcast::config::{ExperimentConfig, Preset};
use fbcast_core::dynamics::{backward_step, forward_step, ForwardState};
use fbcast_core::netmodel::{harmonic_number, slot_duration};
use fbcast_core::nn::{
    finite_difference_grads, max_grad_rel_error, mlp_backward, mlp_forward, MlpParams,
};
use fbcast_core::policy::{
    brute_force_capped_simplex, entropy, grad_outputs, log_prob, split_outputs, transform_cache,
    HarmonicMenu, PolicyHead, RawSample,
};
use fbcast_core::SlotRng;
use std::path::PathBuf;
use std::process::Command;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn report(&mut self, idx: usize, name: &str, ok: bool, detail: String) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {idx} ({name}): {verdict} [{detail}]");
        if !ok {
            self.failures.push(format!("criterion {idx} ({name}): {detail}"));
        }
    }
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fbcast-acceptance-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn random_simplex(rng: &mut SlotRng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.exponential()).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

fn criterion_1(gate: &mut Gate) {
    let out = tmp_dir("outage");
    match commands::validate_outage(2024, &out) {
        Ok(points) => {
            let worst = points
                .iter()
                .map(|p| (p.mc - p.analytic).abs() / p.std_err.max(1e-12))
                .fold(0.0f64, f64::max);
            gate.report(
                1,
                "analytic outage matches Monte-Carlo",
                points.iter().all(|p| p.pass),
                format!("{} grid points, worst deviation {:.2} standard errors", points.len(), worst),
            );
        }
        Err(e) => gate.report(1, "analytic outage matches Monte-Carlo", false, format!("{e}")),
    }
}

fn criterion_2(gate: &mut Gate) {
    let h = harmonic_number(620).unwrap();
    let start_lat = slot_duration(3600.0, 620).unwrap() / 2.0;
    let ok = (h - 7.0).abs() <= 0.01 && (2.8..=3.0).contains(&start_lat);
    gate.report(
        2,
        "harmonic broadcasting reference numbers",
        ok,
        format!("H(620) = {h:.4}, one-hour-file start latency = {start_lat:.3} s"),
    );
}

fn criterion_3(gate: &mut Gate) {
    let mut rng = SlotRng::from_seed(3);
    let mut ok = true;
    let mut detail = String::new();
    'outer: for &n in &[2usize, 10, 200] {
        let trials = 10_000 / 3 + 1;
        for _ in 0..trials {
            let p_req = random_simplex(&mut rng, n);
            let pop = random_simplex(&mut rng, n);
            let outage: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let state = ForwardState { p_req: p_req.clone(), slot: 1 };
            let next = forward_step(&state, &outage, &pop).unwrap();
            let sum: f64 = next.p_req.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                ok = false;
                detail = format!("mass drifted to {sum} at N={n}");
                break 'outer;
            }
            // All transmissions decoded: the next state redraws from the
            // popularity profile.
            let served = forward_step(&state, &vec![0.0; n], &pop).unwrap();
            if served
                .p_req
                .iter()
                .zip(&pop)
                .any(|(a, b)| (a - b).abs() > 1e-12)
            {
                ok = false;
                detail = format!("all-served limit violated at N={n}");
                break 'outer;
            }
            // Nothing decoded: every request persists.
            let stuck = forward_step(&state, &vec![1.0; n], &pop).unwrap();
            if stuck
                .p_req
                .iter()
                .zip(&p_req)
                .any(|(a, b)| (a - b).abs() > 1e-12)
            {
                ok = false;
                detail = format!("all-outage limit violated at N={n}");
                break 'outer;
            }
        }
    }
    if ok {
        detail = "10k random triples at N in {2,10,200}, simplex sum within 1e-9, both limits hold".into();
    }
    gate.report(3, "request dynamics conserve probability mass", ok, detail);
}

fn criterion_4(gate: &mut Gate) {
    let mut ok = true;
    let mut detail = String::new();
    // Full-outage episodes with constant slot duration: pending latency
    // grows linearly toward the start of the episode.
    let horizon = 12;
    let d = 2.5;
    let n = 3;
    let mut lat = vec![0.0; n];
    let mut per_slot = vec![vec![]; horizon];
    for t in (0..horizon).rev() {
        lat = backward_step(&lat, &vec![1.0; n], d).unwrap();
        per_slot[t] = lat.clone();
    }
    for (t, l) in per_slot.iter().enumerate() {
        let expect = (horizon - t) as f64 * d;
        if l.iter().any(|&x| (x - expect).abs() > 1e-9) {
            ok = false;
            detail = format!("full-outage latency at slot {t} is {:?}, expected {expect}", l);
        }
    }
    // Outage-free: every file starts after half a chunk.
    let mut lat0 = vec![0.0; n];
    for _ in 0..horizon {
        lat0 = backward_step(&lat0, &vec![0.0; n], d).unwrap();
    }
    if lat0.iter().any(|&x| (x - d / 2.0).abs() > 1e-9) {
        ok = false;
        detail = format!("outage-free latency {:?}, expected {}", lat0, d / 2.0);
    }
    // The time-reversed recursion reproduces the backward one exactly.
    let mut rng = SlotRng::from_seed(4);
    for trial in 0..100 {
        let n = 1 + trial % 5;
        let horizon = 4 + trial % 9;
        let outs: Vec<Vec<f64>> =
            (0..horizon).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect();
        let ds: Vec<f64> = (0..horizon).map(|_| 0.5 + rng.uniform()).collect();
        let mut lat = vec![0.0; n];
        let mut l_t = vec![vec![]; horizon];
        for t in (0..horizon).rev() {
            lat = backward_step(&lat, &outs[t], ds[t]).unwrap();
            l_t[t] = lat.clone();
        }
        let mut k = vec![0.0; n];
        for tau in 1..=horizon {
            let t = horizon - tau;
            k = backward_step(&k, &outs[t], ds[t]).unwrap();
            if k != l_t[t] {
                ok = false;
                detail = format!("reversed recursion mismatch at trial {trial} slot {t}");
            }
        }
    }
    if ok {
        detail = "boundary closed forms and 100 reversed-recursion reproductions".into();
    }
    gate.report(4, "pending-latency recursion boundaries and reversal", ok, detail);
}

fn criterion_5(gate: &mut Gate) {
    let n_files = 3;
    let menu = HarmonicMenu::default_menu();
    let out_dim = PolicyHead::output_dim(n_files, menu.len());
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut seed = 0u64;
    // Actor head: likelihood-ratio plus entropy objective through the
    // distribution parameters.
    while checked < 20 {
        seed += 1;
        let params = MlpParams::init(&[n_files + 1, 6, out_dim], 500 + seed).unwrap();
        let mut rng = SlotRng::from_seed(900 + seed);
        let input: Vec<f64> = (0..n_files + 1).map(|_| rng.normal()).collect();
        let (out, _) = mlp_forward(&params, &input).unwrap();
        // Skip parameter points whose log-std outputs sit within finite-
        // difference reach of the clamp boundaries, where the objective
        // is intentionally non-smooth.
        let o = split_outputs(&out, n_files, menu.len()).unwrap();
        let near_clamp = o.log_std.iter().enumerate().any(|(i, &s)| {
            let (lo, hi) = if i < n_files { (-3.5, 2.0) } else { (-5.0, 2.0) };
            (s - lo).abs() < 0.05 || (s - hi).abs() < 0.05
        });
        if near_clamp {
            continue;
        }
        checked += 1;
        let raw = RawSample {
            gauss: (0..2 * n_files).map(|_| rng.normal()).collect(),
            harmonic_choice: rng.below(menu.len()),
        };
        let weight = rng.normal();
        let ent_coef = 0.01;
        let loss = |p: &MlpParams| {
            let (out, _) = mlp_forward(p, &input).unwrap();
            let o = split_outputs(&out, n_files, menu.len()).unwrap();
            weight * log_prob(&o, &raw) + ent_coef * entropy(&o)
        };
        let (out, cache) = mlp_forward(&params, &input).unwrap();
        let o = split_outputs(&out, n_files, menu.len()).unwrap();
        let og = grad_outputs(&o, &raw, weight, ent_coef);
        let mut grads = params.zero_grads();
        mlp_backward(&params, &cache, &og, &mut grads).unwrap();
        let numeric = finite_difference_grads(&params, loss, 1e-6);
        worst = worst.max(max_grad_rel_error(&grads, &numeric));
    }
    // Critic architectures: two-output forward critic, one-output
    // backward critic, weighted-output regression objective.
    for (tag, sizes) in [(6u64, vec![n_files + 1, 8, 2]), (7u64, vec![n_files + 1, 8, 1])] {
        for k in 0..20u64 {
            let params = MlpParams::init(&sizes, tag * 100 + k).unwrap();
            let mut rng = SlotRng::from_seed(tag * 1000 + k);
            let input: Vec<f64> = (0..sizes[0]).map(|_| rng.normal()).collect();
            let weights: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.normal()).collect();
            let (_, cache) = mlp_forward(&params, &input).unwrap();
            let mut grads = params.zero_grads();
            mlp_backward(&params, &cache, &weights, &mut grads).unwrap();
            let numeric = finite_difference_grads(
                &params,
                |p| {
                    let (o, _) = mlp_forward(p, &input).unwrap();
                    o.iter().zip(&weights).map(|(a, b)| a * b).sum()
                },
                1e-6,
            );
            worst = worst.max(max_grad_rel_error(&grads, &numeric));
        }
    }
    gate.report(
        5,
        "backpropagation matches finite differences",
        worst < 1e-4,
        format!("actor head and both critics, 20 points each, worst relative error {worst:.2e}"),
    );
}

fn criterion_6(gate: &mut Gate) {
    let mut rng = SlotRng::from_seed(6);
    let mut worst = 0.0f64;
    for trial in 0..1000usize {
        let n = 2 + trial % 5;
        let cap = 1 + rng.below(n - 1);
        let raw: Vec<f64> = (0..n).map(|_| 4.0 * rng.normal()).collect();
        let fast = transform_cache(&raw, cap).unwrap();
        let slow = brute_force_capped_simplex(&raw, cap);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    gate.report(
        6,
        "capped-simplex projection matches brute-force oracle",
        worst <= 1e-6,
        format!("1000 random inputs at N <= 6, worst coordinate gap {worst:.2e}"),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn criterion_7(gate: &mut Gate) {
    let prefs = [[0.3, 0.3, 1.0], [1.0, 1.0, 0.3], [0.3, 1.0, 0.3]];
    let mut ok = true;
    let mut details = Vec::new();
    for pref in prefs {
        let mut first = Vec::new();
        let mut last = Vec::new();
        for seed in 1..=5u64 {
            let mut cfg = ExperimentConfig::preset(Preset::Tiny);
            cfg.apply_text(&format!(
                "pref_qos = {}\npref_bw = {}\npref_lat = {}\n",
                pref[0], pref[1], pref[2]
            ))
            .unwrap();
            cfg.seed = seed;
            let (_, stats) = commands::train_policy(&cfg, Algo::Fb).unwrap();
            let k = stats.len() / 10;
            first.extend(stats[..k].iter().map(|s| s.scalarized_return));
            last.extend(stats[stats.len() - k..].iter().map(|s| s.scalarized_return));
        }
        let (mf, ml) = (median(first), median(last));
        if ml <= mf {
            ok = false;
        }
        details.push(format!("pref {pref:?}: median {mf:.3} -> {ml:.3}"));
    }
    gate.report(7, "training improves the scalarized return", ok, details.join("; "));
}

fn criterion_8(gate: &mut Gate) {
    let out = tmp_dir("compare");
    let mut cfg = ExperimentConfig::preset(Preset::Tiny);
    cfg.apply_text("pref_qos = 1.0\npref_bw = 1.0\npref_lat = 0.3\n").unwrap();
    cfg.seed = 7;
    match commands::compare(&cfg, &out) {
        Ok(outcome) => {
            let fb = outcome.cost_of("fb");
            let lfu = outcome.cost_of("lfu");
            let uni = outcome.cost_of("unicast");
            let a = !outcome.is_dominated("fb", "a2c") && !outcome.is_dominated("fb", "ppo");
            let b = fb[0] < lfu[0] && fb[1] <= 2.0 * lfu[1];
            let c = uni[1] >= 5.0 * fb[1];
            let d = uni[2] == 0.0;
            gate.report(
                8,
                "policy comparison orderings",
                a && b && c && d,
                format!(
                    "undominated={a}; qos {:.2} < lfu {:.2} at bw ratio {:.2}; unicast bw ratio {:.1}; unicast lat {}",
                    fb[0],
                    lfu[0],
                    fb[1] / lfu[1],
                    uni[1] / fb[1],
                    uni[2]
                ),
            );
        }
        Err(e) => gate.report(8, "policy comparison orderings", false, format!("{e}")),
    }
}

fn criterion_9(gate: &mut Gate) {
    let bin = env!("CARGO_BIN_EXE_fbcast");
    let dirs = [tmp_dir("det-a"), tmp_dir("det-b")];
    let mut ok = true;
    let mut detail = String::new();
    for dir in &dirs {
        let status = Command::new(bin)
            .args([
                "train",
                "--algo",
                "fb",
                "--preset",
                "tiny",
                "--episodes",
                "60",
                "--seed",
                "11",
                "--out",
            ])
            .arg(dir)
            .status()
            .unwrap();
        if !status.success() {
            ok = false;
            detail = format!("train exited with {status}");
        }
    }
    if ok {
        let a = std::fs::read(dirs[0].join("episodes_fb.csv")).unwrap();
        let b = std::fs::read(dirs[1].join("episodes_fb.csv")).unwrap();
        let ca = std::fs::read(dirs[0].join("actor_fb.ckpt")).unwrap();
        let cb = std::fs::read(dirs[1].join("actor_fb.ckpt")).unwrap();
        ok = a == b && ca == cb;
        detail = format!(
            "episode CSV {} bytes and checkpoint {} bytes byte-identical across repeated runs: {}",
            a.len(),
            ca.len(),
            ok
        );
    }
    gate.report(9, "repeated runs are byte-identical", ok, detail);
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
