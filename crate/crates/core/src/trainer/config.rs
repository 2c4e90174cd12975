//! Training configuration and its flat `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::encoder::EncoderShape;
use crate::losses::LossHyper;
use crate::pointcloud::{DEFAULT_N_QUERY, DEFAULT_N_SUPPORT};
use crate::proxybank::{EmConfig, PseudoLabelRule, DEFAULT_K, DEFAULT_M, DEFAULT_TEMPERATURE};
use crate::{Error, Result};

/// Which objective and which parts of the epoch procedure run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Regression + BCE segmentation head; no proxy bank.
    Supervised,
    /// Proxy objective on labeled points only, with re-initialisation.
    ProxyNoUnlabeled,
    /// Full objective without re-initialisation.
    ProxyNoReinit,
    /// Full objective with re-initialisation.
    Full,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::Supervised,
        TrainMode::ProxyNoUnlabeled,
        TrainMode::ProxyNoReinit,
        TrainMode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Supervised => "supervised",
            TrainMode::ProxyNoUnlabeled => "proxy_no_unlabeled",
            TrainMode::ProxyNoReinit => "proxy_no_reinit",
            TrainMode::Full => "full",
        }
    }

    pub fn uses_proxies(self) -> bool {
        self != TrainMode::Supervised
    }

    pub fn uses_unlabeled(self) -> bool {
        matches!(self, TrainMode::Full | TrainMode::ProxyNoReinit)
    }

    pub fn reinitializes(self) -> bool {
        matches!(self, TrainMode::Full | TrainMode::ProxyNoUnlabeled)
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown mode {s:?}")))
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Per-epoch multiplicative decay, `lr_e = lr * lr_decay^e`.
    pub lr_decay: f64,
    /// Leading epochs during which only the proxies are updated.
    pub proxy_warmup_epochs: usize,
    /// Proxies per class.
    pub proxies: usize,
    pub lambda: f64,
    pub delta: f64,
    pub temperature: f64,
    /// EM prototypes per class.
    pub prototypes: usize,
    pub sigma_perturb: f64,
    pub n_query: usize,
    pub n_support: usize,
    pub mode: TrainMode,
    pub seed: u64,
    pub pseudo_label: PseudoLabelRule,
    pub encoder: EncoderShape,
    pub em: EmConfig,
    /// z-perturbation augmentation of query positives.
    pub augment: bool,
    pub augment_sigma: f64,
    pub augment_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 1e-4,
            lr_decay: 0.95,
            proxy_warmup_epochs: 5,
            proxies: DEFAULT_K,
            lambda: crate::losses::DEFAULT_LAMBDA,
            delta: crate::losses::DEFAULT_DELTA,
            temperature: DEFAULT_TEMPERATURE,
            prototypes: DEFAULT_M,
            sigma_perturb: 0.01,
            n_query: DEFAULT_N_QUERY,
            n_support: DEFAULT_N_SUPPORT,
            mode: TrainMode::Full,
            seed: 1,
            pseudo_label: PseudoLabelRule::Soft,
            encoder: EncoderShape::default(),
            em: EmConfig::default(),
            augment: false,
            augment_sigma: 0.02,
            augment_fraction: 0.1,
        }
    }
}

const KEYS: &[&str] = &[
    "epochs",
    "lr",
    "lr_decay",
    "proxy_warmup_epochs",
    "proxies",
    "lambda",
    "delta",
    "temperature",
    "prototypes",
    "sigma_perturb",
    "n_query",
    "n_support",
    "mode",
    "seed",
    "pseudo_label",
    "k_enc",
    "embed_dim",
    "hidden",
    "head_hidden",
    "em_iters",
    "em_tol",
    "em_variance_scale",
    "em_min_share",
    "augment",
    "augment_sigma",
    "augment_fraction",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr must be a positive finite number"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("lr_decay must be in (0, 1]"));
        }
        if self.proxy_warmup_epochs >= self.epochs {
            return Err(Error::config("proxy_warmup_epochs must be < epochs"));
        }
        if self.proxies == 0 || self.prototypes == 0 {
            return Err(Error::config("proxies and prototypes must be >= 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("temperature must be > 0"));
        }
        if self.sigma_perturb < 0.0 {
            return Err(Error::config("sigma_perturb must be >= 0"));
        }
        if self.n_query == 0 || self.n_support < 2 || !self.n_support.is_multiple_of(2) {
            return Err(Error::config(
                "n_query >= 1 and even n_support >= 2 required",
            ));
        }
        if !(0.0..=1.0).contains(&self.augment_fraction) || self.augment_sigma < 0.0 {
            return Err(Error::config("augmentation parameters out of range"));
        }
        if self.em.max_iters == 0 || !(self.em.variance_scale > 0.0) || !(self.em.min_share >= 0.0)
        {
            return Err(Error::config(
                "em_iters >= 1, em_variance_scale > 0 and em_min_share >= 0 required",
            ));
        }
        self.encoder.validate()?;
        self.loss_hyper().validate()
    }

    pub fn loss_hyper(&self) -> LossHyper {
        LossHyper {
            lambda: self.lambda,
            delta: self.delta,
            pseudo_rule: self.pseudo_label,
        }
    }

    /// Learning rate of (0-based) epoch `e`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }

    /// Applies one `key = value` pair. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "epochs" => self.epochs = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "lr_decay" => self.lr_decay = parse_num(key, v)?,
            "proxy_warmup_epochs" => self.proxy_warmup_epochs = parse_num(key, v)?,
            "proxies" => self.proxies = parse_num(key, v)?,
            "lambda" => self.lambda = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "temperature" => self.temperature = parse_num(key, v)?,
            "prototypes" => self.prototypes = parse_num(key, v)?,
            "sigma_perturb" => self.sigma_perturb = parse_num(key, v)?,
            "n_query" => self.n_query = parse_num(key, v)?,
            "n_support" => self.n_support = parse_num(key, v)?,
            "mode" => self.mode = v.parse()?,
            "seed" => self.seed = parse_num(key, v)?,
            "pseudo_label" => {
                self.pseudo_label = match v {
                    "soft" => PseudoLabelRule::Soft,
                    "hard" => PseudoLabelRule::Hard,
                    _ => return Err(Error::config(format!("pseudo_label: unknown rule {v:?}"))),
                }
            }
            "k_enc" => self.encoder.k_enc = parse_num(key, v)?,
            "embed_dim" => self.encoder.embed_dim = parse_num(key, v)?,
            "hidden" => self.encoder.hidden = parse_num(key, v)?,
            "head_hidden" => self.encoder.head_hidden = parse_num(key, v)?,
            "em_iters" => self.em.max_iters = parse_num(key, v)?,
            "em_tol" => self.em.tol = parse_num(key, v)?,
            "em_variance_scale" => self.em.variance_scale = parse_num(key, v)?,
            "em_min_share" => self.em.min_share = parse_num(key, v)?,
            "augment" => self.augment = parse_num(key, v)?,
            "augment_sigma" => self.augment_sigma = parse_num(key, v)?,
            "augment_fraction" => self.augment_fraction = parse_num(key, v)?,
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::parse(&text)
    }

    /// Every key with its current value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let v = match *key {
                "epochs" => self.epochs.to_string(),
                "lr" => self.lr.to_string(),
                "lr_decay" => self.lr_decay.to_string(),
                "proxy_warmup_epochs" => self.proxy_warmup_epochs.to_string(),
                "proxies" => self.proxies.to_string(),
                "lambda" => self.lambda.to_string(),
                "delta" => self.delta.to_string(),
                "temperature" => self.temperature.to_string(),
                "prototypes" => self.prototypes.to_string(),
                "sigma_perturb" => self.sigma_perturb.to_string(),
                "n_query" => self.n_query.to_string(),
                "n_support" => self.n_support.to_string(),
                "mode" => self.mode.to_string(),
                "seed" => self.seed.to_string(),
                "pseudo_label" => match self.pseudo_label {
                    PseudoLabelRule::Soft => "soft".into(),
                    PseudoLabelRule::Hard => "hard".into(),
                },
                "k_enc" => self.encoder.k_enc.to_string(),
                "embed_dim" => self.encoder.embed_dim.to_string(),
                "hidden" => self.encoder.hidden.to_string(),
                "head_hidden" => self.encoder.head_hidden.to_string(),
                "em_iters" => self.em.max_iters.to_string(),
                "em_tol" => self.em.tol.to_string(),
                "em_variance_scale" => self.em.variance_scale.to_string(),
                "em_min_share" => self.em.min_share.to_string(),
                "augment" => self.augment.to_string(),
                "augment_sigma" => self.augment_sigma.to_string(),
                "augment_fraction" => self.augment_fraction.to_string(),
                _ => unreachable!("key list and match disagree"),
            };
            let _ = writeln!(s, "{key} = {v}");
        }
        s
    }
}
