//! Experiment configuration: presets, a flat `key = value` file format
//! with strict key checking, and a full-precision resolved dump so every
//! run directory records exactly what it ran.

use anyhow::{anyhow, bail, Context, Result};
use fbcast_core::dynamics::{make_popularity, Env};
use fbcast_core::fbmoac::LearnerConfig;
use fbcast_core::netmodel::RadioConfig;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full-scale defaults: 200 files, 256 slots, hidden width 100.
    Paper,
    /// Desk-scale preset: 20 files, 32 slots, hidden width 64, with the
    /// transmit power recalibrated so outages stay informative.
    Tiny,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "paper" => Ok(Preset::Paper),
            "tiny" => Ok(Preset::Tiny),
            other => bail!("unknown preset '{other}' (expected 'paper' or 'tiny')"),
        }
    }
}

/// Everything a run needs; radio powers are stored in dB as configured
/// and converted to linear units once, in `radio()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // Radio / content.
    pub lambda_bs: f64,
    pub p_tx_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub noise_figure_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub path_loss_exp: f64,
    pub rate_r: f64,
    pub file_len_l: f64,
    pub num_files_n: usize,
    pub cache_cap_c: usize,
    /// Carrier frequency in GHz; recorded as metadata only.
    pub carrier_ghz: f64,
    // Popularity process.
    pub horizon_t: usize,
    pub zipf_skew: f64,
    pub churn_k: usize,
    // Learner.
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub gamma_mov: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub entropy_coef: f64,
    pub episodes: u64,
    pub pref_qos: f64,
    pub pref_bw: f64,
    pub pref_lat: f64,
    // Unicast baseline.
    pub lambda_ue: f64,
    pub alpha_uc: f64,
    pub area_norm: f64,
    // Reproducibility.
    pub seed: u64,
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> ExperimentConfig {
        let paper = ExperimentConfig {
            lambda_bs: 100.0,
            p_tx_dbm: 23.0,
            antenna_gain_dbi: 8.0,
            noise_figure_db: 9.0,
            noise_psd_dbm_hz: -174.0,
            path_loss_exp: 4.0,
            rate_r: 1e6,
            file_len_l: 600.0,
            num_files_n: 200,
            cache_cap_c: 10,
            carrier_ghz: 2.0,
            horizon_t: 256,
            zipf_skew: 0.6,
            churn_k: 1,
            hidden: vec![100],
            gamma: 0.99,
            gamma_mov: 0.95,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            entropy_coef: 1e-3,
            episodes: 2000,
            pref_qos: 1.0,
            pref_bw: 1.0,
            pref_lat: 1.0,
            lambda_ue: 1000.0,
            alpha_uc: 2.0,
            area_norm: 1.0,
            seed: 1,
        };
        match p {
            Preset::Paper => paper,
            Preset::Tiny => ExperimentConfig {
                num_files_n: 20,
                cache_cap_c: 2,
                horizon_t: 32,
                hidden: vec![64],
                ..paper
            },
        }
    }

    /// Applies a flat `key = value` file on top of this config. Unknown
    /// keys and malformed values are errors carrying the line number.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        self.apply_text(&text)
            .with_context(|| format!("in config file {}", path.display()))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value'", lineno + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn f(v: &str) -> Result<f64> {
            v.parse().map_err(|_| anyhow!("'{v}' is not a number"))
        }
        fn u(v: &str) -> Result<usize> {
            v.parse().map_err(|_| anyhow!("'{v}' is not a non-negative integer"))
        }
        match key {
            "lambda_bs" => self.lambda_bs = f(value)?,
            "p_tx_dbm" => self.p_tx_dbm = f(value)?,
            "antenna_gain_dbi" => self.antenna_gain_dbi = f(value)?,
            "noise_figure_db" => self.noise_figure_db = f(value)?,
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz = f(value)?,
            "path_loss_exp" => self.path_loss_exp = f(value)?,
            "rate_r" => self.rate_r = f(value)?,
            "file_len_l" => self.file_len_l = f(value)?,
            "num_files_n" => self.num_files_n = u(value)?,
            "cache_cap_c" => self.cache_cap_c = u(value)?,
            "carrier_ghz" => self.carrier_ghz = f(value)?,
            "horizon_t" => self.horizon_t = u(value)?,
            "zipf_skew" => self.zipf_skew = f(value)?,
            "churn_k" => self.churn_k = u(value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|s| u(s.trim()))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "gamma" => self.gamma = f(value)?,
            "gamma_mov" => self.gamma_mov = f(value)?,
            "lr_actor" => self.lr_actor = f(value)?,
            "lr_critic" => self.lr_critic = f(value)?,
            "entropy_coef" => self.entropy_coef = f(value)?,
            "episodes" => {
                self.episodes = value
                    .parse()
                    .map_err(|_| anyhow!("'{value}' is not a non-negative integer"))?
            }
            "pref_qos" => self.pref_qos = f(value)?,
            "pref_bw" => self.pref_bw = f(value)?,
            "pref_lat" => self.pref_lat = f(value)?,
            "lambda_ue" => self.lambda_ue = f(value)?,
            "alpha_uc" => self.alpha_uc = f(value)?,
            "area_norm" => self.area_norm = f(value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| anyhow!("'{value}' is not a non-negative integer"))?
            }
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    /// Full-precision dump; loading the dump reproduces the config
    /// exactly (floats print in shortest round-trip form).
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# resolved experiment config v1");
        let _ = writeln!(s, "lambda_bs = {}", self.lambda_bs);
        let _ = writeln!(s, "p_tx_dbm = {}", self.p_tx_dbm);
        let _ = writeln!(s, "antenna_gain_dbi = {}", self.antenna_gain_dbi);
        let _ = writeln!(s, "noise_figure_db = {}", self.noise_figure_db);
        let _ = writeln!(s, "noise_psd_dbm_hz = {}", self.noise_psd_dbm_hz);
        let _ = writeln!(s, "path_loss_exp = {}", self.path_loss_exp);
        let _ = writeln!(s, "rate_r = {}", self.rate_r);
        let _ = writeln!(s, "file_len_l = {}", self.file_len_l);
        let _ = writeln!(s, "num_files_n = {}", self.num_files_n);
        let _ = writeln!(s, "cache_cap_c = {}", self.cache_cap_c);
        let _ = writeln!(s, "carrier_ghz = {}", self.carrier_ghz);
        let _ = writeln!(s, "horizon_t = {}", self.horizon_t);
        let _ = writeln!(s, "zipf_skew = {}", self.zipf_skew);
        let _ = writeln!(s, "churn_k = {}", self.churn_k);
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "hidden = {}", hidden.join(","));
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "gamma_mov = {}", self.gamma_mov);
        let _ = writeln!(s, "lr_actor = {}", self.lr_actor);
        let _ = writeln!(s, "lr_critic = {}", self.lr_critic);
        let _ = writeln!(s, "entropy_coef = {}", self.entropy_coef);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "pref_qos = {}", self.pref_qos);
        let _ = writeln!(s, "pref_bw = {}", self.pref_bw);
        let _ = writeln!(s, "pref_lat = {}", self.pref_lat);
        let _ = writeln!(s, "lambda_ue = {}", self.lambda_ue);
        let _ = writeln!(s, "alpha_uc = {}", self.alpha_uc);
        let _ = writeln!(s, "area_norm = {}", self.area_norm);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Radio parameters in linear units.
    pub fn radio(&self) -> Result<RadioConfig> {
        if self.cache_cap_c > self.num_files_n {
            bail!(
                "infeasible: cache_cap_c = {} exceeds num_files_n = {}",
                self.cache_cap_c,
                self.num_files_n
            );
        }
        let cfg = RadioConfig {
            lambda_bs: self.lambda_bs,
            p_tx: dbm_to_watts(self.p_tx_dbm),
            n0: dbm_to_watts(self.noise_psd_dbm_hz + self.noise_figure_db),
            antenna_gain: db_to_linear(self.antenna_gain_dbi),
            path_loss_exp: self.path_loss_exp,
            rate_r: self.rate_r,
            file_len_l: self.file_len_l,
            num_files_n: self.num_files_n,
            cache_cap_c: self.cache_cap_c,
        };
        cfg.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(cfg)
    }

    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            gamma: self.gamma,
            pref: [self.pref_qos, self.pref_bw, self.pref_lat],
            gamma_mov: self.gamma_mov,
            lr_actor: self.lr_actor,
            lr_critic_f: self.lr_critic,
            lr_critic_b: self.lr_critic,
            episodes: self.episodes as usize,
            entropy_coef: self.entropy_coef,
            seed: self.seed,
        }
    }

    /// The environment a run executes in; the popularity track is seeded
    /// from the global seed.
    pub fn env(&self) -> Result<Env> {
        let cfg = self.radio()?;
        let pop = make_popularity(
            self.num_files_n,
            self.horizon_t,
            self.zipf_skew,
            self.churn_k,
            self.seed,
        )
        .map_err(|e| anyhow!("{e}"))?;
        Ok(Env { cfg, pop })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [Preset::Paper, Preset::Tiny] {
            let c = ExperimentConfig::preset(p);
            c.radio().unwrap();
            c.learner().validate().unwrap();
        }
    }

    #[test]
    fn paper_defaults_in_linear_units() {
        let c = ExperimentConfig::preset(Preset::Paper);
        let r = c.radio().unwrap();
        assert!((r.p_tx - 0.19952623149688797).abs() < 1e-15);
        assert!((r.antenna_gain - 6.309573444801933).abs() < 1e-12);
        assert!((r.n0 - 3.1622776601683795e-20).abs() < 1e-32);
        assert_eq!(r.num_files_n, 200);
        assert_eq!(r.cache_cap_c, 10);
    }

    #[test]
    fn empty_file_keeps_defaults() {
        let mut c = ExperimentConfig::preset(Preset::Paper);
        c.apply_text("").unwrap();
        assert_eq!(c, ExperimentConfig::preset(Preset::Paper));
    }

    #[test]
    fn unknown_key_is_an_error_with_line() {
        let mut c = ExperimentConfig::preset(Preset::Paper);
        let err = c.apply_text("lambda_bs = 50\nbogus_key = 1\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("bogus_key"), "{msg}");
    }

    #[test]
    fn malformed_value_is_an_error_with_line() {
        let mut c = ExperimentConfig::preset(Preset::Paper);
        let err = c.apply_text("\nlambda_bs = fifty\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
    }

    #[test]
    fn infeasible_cache_names_both_fields() {
        let mut c = ExperimentConfig::preset(Preset::Paper);
        c.apply_text("cache_cap_c = 300").unwrap();
        let err = c.radio().unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("cache_cap_c") && msg.contains("num_files_n"), "{msg}");
    }

    #[test]
    fn dump_round_trips() {
        let mut c = ExperimentConfig::preset(Preset::Tiny);
        c.apply_text("lr_actor = 0.00037\nhidden = 32, 16\nseed = 99").unwrap();
        let mut reloaded = ExperimentConfig::preset(Preset::Paper);
        reloaded.apply_text(&c.dump()).unwrap();
        assert_eq!(c, reloaded);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let mut c = ExperimentConfig::preset(Preset::Paper);
        c.apply_text("# full comment\n\nlambda_bs = 75 # trailing\n").unwrap();
        assert_eq!(c.lambda_bs, 75.0);
    }
}
