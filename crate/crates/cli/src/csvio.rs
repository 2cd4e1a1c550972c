//! CSV emission. Every file starts with a versioned schema comment line
//! followed by the column header; floats print in shortest round-trip
//! form, so identical runs produce byte-identical files.

use fbcast_core::dynamics::Trajectory;
use fbcast_core::fbmoac::EpisodeStats;
use std::fmt::Write as _;

pub const TRAJECTORY_SCHEMA: &str = "# schema: trajectory v1";
pub const EPISODES_SCHEMA: &str = "# schema: episodes v1";
pub const COMPARE_SCHEMA: &str = "# schema: compare v1";
pub const DOMINANCE_SCHEMA: &str = "# schema: dominance v1";
pub const OUTAGE_SCHEMA: &str = "# schema: outage-validation v1";

/// One row per slot: time index, slot duration, the three costs, the
/// cache-capacity check and the outage range across files.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TRAJECTORY_SCHEMA}");
    let _ = writeln!(s, "t,d,r_qos,r_bw,r_lat,cache_sum,outage_min,outage_max");
    for t in 0..traj.horizon() {
        let r = &traj.rewards[t];
        let cache_sum: f64 = traj.actions[t].p_cach.iter().sum();
        let (mut omin, mut omax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &o in &traj.outages[t] {
            omin = omin.min(o);
            omax = omax.max(o);
        }
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            t + 1,
            traj.durations[t],
            r.r_qos,
            r.r_bw,
            r.r_lat,
            cache_sum,
            omin,
            omax
        );
    }
    s
}

pub fn episodes_header() -> String {
    format!("{EPISODES_SCHEMA}\nepisode,cum_qos,cum_bw,cum_lat,scalarized_return,entropy\n")
}

pub fn episode_row(episode: u64, s: &EpisodeStats) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        episode, s.cum_qos, s.cum_bw, s.cum_lat, s.scalarized_return, s.entropy
    )
}

/// Policy-by-objective table with per-objective normalization (each cost
/// divided by the column maximum, so rows are comparable at a glance).
pub fn compare_csv(rows: &[(String, [f64; 3])]) -> String {
    let mut max = [0f64; 3];
    for (_, c) in rows {
        for i in 0..3 {
            max[i] = max[i].max(c[i].abs());
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "{COMPARE_SCHEMA}");
    let _ = writeln!(s, "policy,cum_qos,cum_bw,cum_lat,norm_qos,norm_bw,norm_lat");
    for (name, c) in rows {
        let norm: Vec<f64> = (0..3)
            .map(|i| if max[i] > 0.0 { c[i] / max[i] } else { 0.0 })
            .collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            name, c[0], c[1], c[2], norm[0], norm[1], norm[2]
        );
    }
    s
}

/// Pairwise dominance over mean cost vectors (1 = row policy is at least
/// as good on every objective and strictly better on one).
pub fn dominance_csv(names: &[String], costs: &[[f64; 3]]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{DOMINANCE_SCHEMA}");
    let _ = writeln!(s, "policy,dominated_by,dominates");
    for i in 0..names.len() {
        for j in 0..names.len() {
            if i == j {
                continue;
            }
            if fbcast_core::fbmoac::dominates(&costs[i], &costs[j]) {
                let _ = writeln!(s, "{},{},1", names[j], names[i]);
            }
        }
    }
    s
}

pub struct OutagePoint {
    pub p_cach: f64,
    pub alpha: f64,
    pub lambda_bs: f64,
    pub analytic: f64,
    pub mc: f64,
    pub std_err: f64,
    pub samples: u64,
    pub pass: bool,
}

pub fn outage_csv(points: &[OutagePoint]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{OUTAGE_SCHEMA}");
    let _ = writeln!(s, "p_cach,alpha,lambda_bs,analytic,mc,std_err,samples,pass");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            p.p_cach,
            p.alpha,
            p.lambda_bs,
            p.analytic,
            p.mc,
            p.std_err,
            p.samples,
            if p.pass { 1 } else { 0 }
        );
    }
    s
}
