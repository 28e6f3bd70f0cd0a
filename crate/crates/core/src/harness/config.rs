//! Scenario configuration: the single structured record that pins every
//! experiment axis, detector knob, and seed.

use serde::{Deserialize, Serialize};

use crate::detect::{LossKind, TrainConfig};
use crate::error::{Error, Result};
use crate::quantize::SourceDist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Ista,
    ImprovedIsta,
    Lista,
    MatchedFilter,
}

impl DetectorKind {
    pub fn id(&self) -> &'static str {
        match self {
            DetectorKind::Ista => "ista",
            DetectorKind::ImprovedIsta => "improved_ista",
            DetectorKind::Lista => "lista",
            DetectorKind::MatchedFilter => "matched_filter",
        }
    }
}

/// Knobs for in-run unfolded-solver training; everything else in the full
/// [`TrainConfig`] is derived from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListaTrainKnobs {
    pub batch_size: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    /// Training SNR; defaults to the scenario SNR.
    pub train_snr_db: Option<f64>,
    /// Training seed; defaults to a stream derived from the master seed.
    pub seed: Option<u64>,
}

impl Default for ListaTrainKnobs {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            batch_size: d.batch_size,
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            learning_rate: d.learning_rate,
            train_snr_db: None,
            seed: None,
        }
    }
}

/// Vector-quantization experiment block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqConfig {
    /// Source vector dimension.
    pub w: usize,
    /// Vector-codebook sizes to sweep.
    pub q_set: Vec<usize>,
    /// Training-sample count for the k-means codebooks.
    pub train_samples: usize,
    pub kmeans_iters: usize,
    /// Symmetric Dirichlet concentration of the simplex training/test data.
    pub dirichlet_alpha: f64,
    /// Codebook size of the element-wise scalar baseline.
    pub scalar_q: usize,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self {
            w: 10,
            q_set: vec![4, 8, 16, 32, 64],
            train_samples: 10_000,
            kmeans_iters: 50,
            dirichlet_alpha: 1.0,
            scalar_q: 4,
        }
    }
}

/// Full experiment scenario. Serialized as JSON with exactly these keys;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Active devices per transmission.
    pub k: usize,
    /// Receive antennas.
    pub m: usize,
    /// Preamble length (channel uses per symbol).
    pub l: usize,
    /// Scalar codebook size.
    pub q: usize,
    /// Symbols per trial, processed independently.
    pub w: usize,
    pub snr_db: f64,
    /// Optional sweep axes; experiments fall back to their defaults.
    pub q_grid: Option<Vec<usize>>,
    pub snr_grid: Option<Vec<f64>>,
    pub l_grid: Option<Vec<usize>>,
    pub m_grid: Option<Vec<usize>>,
    pub k_grid: Option<Vec<usize>>,
    pub source: SourceDist,
    pub detector: DetectorKind,
    /// Iteration budget for the shrinkage detectors.
    pub ista_iters: usize,
    /// Depth of the unfolded detector.
    pub lista_layers: usize,
    /// Scale c on the universal-threshold ℓ1 weight ρ = c √(2 σ_r² ln Q).
    pub rho_scale: f64,
    pub trials: usize,
    pub master_seed: u64,
    /// Replace the fading channel by a fixed-SNR AWGN link (baseline curve).
    pub ideal_channel: bool,
    /// Codebook range; sources are expected to live inside it.
    pub codebook_lo: f64,
    pub codebook_hi: f64,
    /// Seed of the shared master preamble codebook.
    pub preamble_seed: u64,
    /// Bound constant C0 used for overlay columns and planning.
    pub c0: f64,
    pub lista_train: ListaTrainKnobs,
    pub vq: Option<VqConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            k: 10,
            m: 1024,
            l: 25,
            q: 32,
            w: 1,
            snr_db: 10.0,
            q_grid: None,
            snr_grid: None,
            l_grid: None,
            m_grid: None,
            k_grid: None,
            source: SourceDist::Uniform01,
            detector: DetectorKind::ImprovedIsta,
            ista_iters: 300,
            lista_layers: 10,
            rho_scale: 1.0,
            trials: 1000,
            master_seed: 2024,
            ideal_channel: false,
            codebook_lo: 0.0,
            codebook_hi: 1.0,
            preamble_seed: 60256,
            c0: 1.0,
            lista_train: ListaTrainKnobs::default(),
            vq: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.l == 0 || self.w == 0 || self.trials == 0 {
            return Err(Error::InvalidInput("k, m, l, w, trials must all be >= 1".into()));
        }
        if self.q < 2 {
            return Err(Error::InvalidInput(format!("codebook needs q >= 2, got {}", self.q)));
        }
        if !(self.codebook_lo < self.codebook_hi) {
            return Err(Error::InvalidInput("codebook range must satisfy lo < hi".into()));
        }
        if self.rho_scale < 0.0 || self.c0 < 0.0 {
            return Err(Error::InvalidInput("rho_scale and c0 must be >= 0".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidInput("snr_db must be finite".into()));
        }
        match self.detector {
            DetectorKind::MatchedFilter => {
                if self.q > self.l {
                    return Err(Error::InvalidInput(format!(
                        "matched filter needs an orthonormal preamble, so q <= l (got q = {}, l = {})",
                        self.q, self.l
                    )));
                }
            }
            DetectorKind::Ista | DetectorKind::ImprovedIsta | DetectorKind::Lista => {
                if self.ista_iters == 0 || self.lista_layers == 0 {
                    return Err(Error::InvalidInput("detector iteration budgets must be >= 1".into()));
                }
                if self.l > crate::airlink::MASTER_ROWS || self.q > crate::airlink::MASTER_COLS {
                    return Err(Error::InvalidInput(format!(
                        "Gaussian preamble is sliced from the {} x {} master codebook; got l = {}, q = {}",
                        crate::airlink::MASTER_ROWS,
                        crate::airlink::MASTER_COLS,
                        self.l,
                        self.q
                    )));
                }
            }
        }
        if let Some(vq) = &self.vq {
            if vq.w == 0 || vq.q_set.is_empty() || vq.train_samples == 0 || vq.kmeans_iters == 0 {
                return Err(Error::InvalidInput("vq block needs positive counts".into()));
            }
            if vq.scalar_q < 2 {
                return Err(Error::InvalidInput("vq scalar baseline needs q >= 2".into()));
            }
            if self.l % vq.w != 0 {
                return Err(Error::InvalidInput(format!(
                    "vq scalar baseline splits l = {} evenly over w = {} elements",
                    self.l, vq.w
                )));
            }
        }
        Ok(())
    }

    /// Noise variance per complex measurement entry: σ² = 10^(−SNR/10) under
    /// the unit-transmit-power convention.
    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Full training configuration for the unfolded detector, derived from
    /// the scenario plus the training knobs.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.lista_train.batch_size,
            epochs: self.lista_train.epochs,
            batches_per_epoch: self.lista_train.batches_per_epoch,
            learning_rate: self.lista_train.learning_rate,
            train_snr_db: self.lista_train.train_snr_db.unwrap_or(self.snr_db),
            source: self.source,
            seed: self
                .lista_train
                .seed
                .unwrap_or_else(|| crate::seed::derive(self.master_seed, &[crate::seed::STREAM_TRAIN])),
            loss: LossKind::FinalLayerMse,
            layers: self.lista_layers,
            k: self.k,
            m: self.m,
            lo: self.codebook_lo,
            hi: self.codebook_hi,
            rho_scale: self.rho_scale,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// 64-bit FNV-1a hash of the canonical JSON form, used to stamp outputs.
    pub fn config_hash(&self) -> u64 {
        let text = self.to_json();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }
}
