//! Flat TOML run configuration.
//!
//! Every key is optional; missing keys take the library defaults. Unknown
//! keys are rejected so that typos do not silently fall back to a default.
//!
//! ```toml
//! method = "proposed"
//! epochs = 100
//! lambda_adv = 1.0
//! data_seed = 0
//! seeds = [0, 1, 2, 3, 4]
//! ```

use std::fs;
use std::path::Path;

use ordis_core::net::NetworkConfig;
use ordis_core::objectives::{AdversarialForm, LossWeights};
use ordis_core::seqgen::GeneratorConfig;
use ordis_core::trainer::{Method, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // generator
    pub n_sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub input_dim: usize,
    pub loc_separation: f64,
    pub uc_signal: f64,
    pub noise: f64,
    pub drift: f64,
    pub uc_persistence: f64,
    pub uc_prior: f64,
    pub texture_polarity: [f64; 3],
    pub split: [f64; 3],
    pub labeled_ratio: f64,
    // network
    pub encoder_widths: Vec<usize>,
    pub branch_widths: Vec<usize>,
    pub z_dim: usize,
    // training
    pub method: String,
    pub epochs: usize,
    pub batch_fragments: usize,
    pub fragment_len: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lambda_adv: f64,
    pub lambda_seq: f64,
    pub margin: f64,
    /// `"uniform"` or `"literal"`.
    pub adversarial_form: String,
    pub unlabeled_weight: f64,
    pub pl_threshold: f64,
    pub pl_warmup: usize,
    pub pl_ramp: f64,
    pub fm_threshold: f64,
    pub fm_weak_noise: f64,
    pub fm_strong_noise: f64,
    pub fm_dropout: f64,
    pub order_ramp: f64,
    pub seed: u64,
    // experiments
    pub data_seed: u64,
    pub seeds: Vec<u64>,
    /// Worker threads for grid runs; 0 means one per available core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        let n = NetworkConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            n_sequences: g.n_sequences,
            min_len: g.min_len,
            max_len: g.max_len,
            input_dim: g.input_dim,
            loc_separation: g.loc_separation,
            uc_signal: g.uc_signal,
            noise: g.noise,
            drift: g.drift,
            uc_persistence: g.uc_persistence,
            uc_prior: g.uc_prior,
            texture_polarity: g.texture_polarity,
            split: g.split,
            labeled_ratio: g.labeled_ratio,
            encoder_widths: n.encoder_widths,
            branch_widths: n.branch_widths,
            z_dim: n.z_dim,
            method: t.method.name().into(),
            epochs: t.epochs,
            batch_fragments: t.batch_fragments,
            fragment_len: t.fragment_len,
            lr: t.lr,
            momentum: t.momentum,
            lambda_adv: t.weights.adversarial,
            lambda_seq: t.weights.order,
            margin: t.weights.margin,
            adversarial_form: form_name(t.adversarial_form).into(),
            unlabeled_weight: t.unlabeled_weight,
            pl_threshold: t.pl_threshold,
            pl_warmup: t.pl_warmup,
            pl_ramp: t.pl_ramp,
            fm_threshold: t.fm_threshold,
            fm_weak_noise: t.fm_weak_noise,
            fm_strong_noise: t.fm_strong_noise,
            fm_dropout: t.fm_dropout,
            order_ramp: t.order_ramp,
            seed: t.seed,
            data_seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            workers: 0,
        }
    }
}

fn form_name(form: AdversarialForm) -> &'static str {
    match form {
        AdversarialForm::UniformTarget => "uniform",
        AdversarialForm::LiteralSum => "literal",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        RunConfig::parse(&text)
    }

    /// Canonical TOML echo: every key, in declaration order.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.generator().validate()?;
        self.network().validate()?;
        self.train()?.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            n_sequences: self.n_sequences,
            min_len: self.min_len,
            max_len: self.max_len,
            input_dim: self.input_dim,
            loc_separation: self.loc_separation,
            uc_signal: self.uc_signal,
            noise: self.noise,
            drift: self.drift,
            uc_persistence: self.uc_persistence,
            uc_prior: self.uc_prior,
            texture_polarity: self.texture_polarity,
            split: self.split,
            labeled_ratio: self.labeled_ratio,
        }
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            input_dim: self.input_dim,
            encoder_widths: self.encoder_widths.clone(),
            branch_widths: self.branch_widths.clone(),
            z_dim: self.z_dim,
            ..NetworkConfig::default()
        }
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let adversarial_form = match self.adversarial_form.as_str() {
            "uniform" => AdversarialForm::UniformTarget,
            "literal" => AdversarialForm::LiteralSum,
            other => return Err(Error::Config(format!("adversarial_form must be `uniform` or `literal`, got `{other}`"))),
        };
        Ok(TrainConfig {
            method: Method::parse(&self.method)?,
            epochs: self.epochs,
            batch_fragments: self.batch_fragments,
            fragment_len: self.fragment_len,
            lr: self.lr,
            momentum: self.momentum,
            weights: LossWeights { adversarial: self.lambda_adv, order: self.lambda_seq, margin: self.margin },
            adversarial_form,
            unlabeled_weight: self.unlabeled_weight,
            pl_threshold: self.pl_threshold,
            pl_warmup: self.pl_warmup,
            pl_ramp: self.pl_ramp,
            fm_threshold: self.fm_threshold,
            fm_weak_noise: self.fm_weak_noise,
            fm_strong_noise: self.fm_strong_noise,
            fm_dropout: self.fm_dropout,
            order_ramp: self.order_ramp,
            seed: self.seed,
            audit_routing: false,
        })
    }
}
