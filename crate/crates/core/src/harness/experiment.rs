use std::path::PathBuf;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{train_epoch, EpochRecord};
use crate::data::{generate_dataset, shuffle_split, Dataset, SignalConfig};
use crate::error::{Error, Result};
use crate::models::{AutoencoderModel, ContextSpec, ModelVariant, VariantKind};
use crate::optim::{AdamConfig, AdamState};
use crate::scalar::Scalar;

/// One comparison run: every variant on the same data at one `(m_X, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variants: Vec<ModelVariant>,
    pub features: usize,
    pub seq_len: usize,
    pub sigma: f64,
    pub epochs: usize,
    pub time_budget_s: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub decoder_hidden: Option<usize>,
    pub n_sequences: usize,
    pub components_per_feature: usize,
    /// Train variants on separate threads instead of one after another.
    pub parallel: bool,
    /// Read the dataset from this file instead of generating it.
    pub dataset_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variants: [VariantKind::Rae, VariantKind::Raes, VariantKind::Raesc]
                .into_iter()
                .map(ModelVariant::new)
                .collect(),
            features: 1,
            seq_len: 200,
            sigma: 1.0,
            epochs: 100,
            time_budget_s: None,
            batch_size: 100,
            seed: 0,
            adam: AdamConfig::default(),
            decoder_hidden: None,
            n_sequences: 5000,
            components_per_feature: 3,
            parallel: false,
            dataset_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::contract("epochs and batch size must be >= 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::contract("no model variants selected"));
        }
        if let Some(budget) = self.time_budget_s {
            if budget.is_nan() || budget <= 0.0 {
                return Err(Error::contract(format!(
                    "time budget must be positive, got {budget}"
                )));
            }
        }
        Ok(())
    }

    pub fn context_spec(&self) -> Result<ContextSpec> {
        ContextSpec::autoencoder(self.seq_len, self.features, self.sigma)
    }

    pub fn signal_config(&self) -> SignalConfig {
        SignalConfig {
            components_per_feature: self.components_per_feature,
            ..SignalConfig::new(
                self.n_sequences,
                self.seq_len,
                self.features,
                derive_seed(self.seed, "data"),
            )
        }
    }

    /// Generated (or loaded) and shuffled dataset shared by all variants.
    pub fn dataset(&self) -> Result<Dataset> {
        let raw = match &self.dataset_path {
            Some(path) => {
                let ds = Dataset::load(path)?;
                if ds.seq_len() != self.seq_len || ds.n_features() != self.features {
                    return Err(Error::contract(format!(
                        "dataset {} holds {}x{} sequences, expected {}x{}",
                        path.display(),
                        ds.seq_len(),
                        ds.n_features(),
                        self.seq_len,
                        self.features
                    )));
                }
                ds
            }
            None => generate_dataset(&self.signal_config())?,
        };
        Ok(shuffle_split(raw, derive_seed(self.seed, "split")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Trained {
        records: Vec<EpochRecord>,
        stopped_by_budget: bool,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRun {
    pub variant: ModelVariant,
    pub outcome: RunOutcome,
}

impl VariantRun {
    pub fn records(&self) -> Option<&[EpochRecord]> {
        match &self.outcome {
            RunOutcome::Trained { records, .. } => Some(records),
            RunOutcome::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub features: usize,
    pub sigma: f64,
    pub seq_len: usize,
    pub n_c: usize,
    pub runs: Vec<VariantRun>,
}

impl ExperimentResult {
    pub fn run(&self, kind: VariantKind) -> Option<&VariantRun> {
        self.runs.iter().find(|r| r.variant.kind == kind)
    }
}

/// Stable 64-bit seed from a base seed and a label (FNV-1a, then a
/// SplitMix64 finaliser).
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in base.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn train_variant<T: Scalar>(
    cfg: &ExperimentConfig,
    spec: ContextSpec,
    variant: ModelVariant,
    data: &Dataset,
) -> Result<VariantRun> {
    if let Err(reason) = variant.feasibility(&spec) {
        return Ok(VariantRun {
            variant,
            outcome: RunOutcome::Skipped { reason },
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, variant.name()));
    let mut model = AutoencoderModel::<T>::new(variant, spec, cfg.decoder_hidden, &mut rng)?;
    let mut adam = AdamState::new(cfg.adam);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut cumulative = 0.0;
    let mut stopped_by_budget = false;
    for epoch in 0..cfg.epochs {
        let record = train_epoch(
            &mut model,
            data,
            &mut adam,
            cfg.batch_size,
            epoch,
            cumulative,
        )?;
        cumulative = record.cumulative_time_s;
        records.push(record);
        if cfg.time_budget_s.is_some_and(|budget| cumulative >= budget) && epoch + 1 < cfg.epochs {
            stopped_by_budget = true;
            break;
        }
    }
    Ok(VariantRun {
        variant,
        outcome: RunOutcome::Trained {
            records,
            stopped_by_budget,
        },
    })
}

/// Trains every configured variant on one shared dataset and split.
///
/// Variants that cannot be built for the context size (e.g. `raes` when
/// `n_C` is not a multiple of `n_X`) are reported as skipped.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let spec = cfg.context_spec()?;
    let data = cfg.dataset()?;
    let runs = if cfg.parallel {
        thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .variants
                .iter()
                .map(|&v| {
                    let data = &data;
                    scope.spawn(move || train_variant::<T>(cfg, spec, v, data))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        cfg.variants
            .iter()
            .map(|&v| train_variant::<T>(cfg, spec, v, &data))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ExperimentResult {
        features: cfg.features,
        sigma: cfg.sigma,
        seq_len: cfg.seq_len,
        n_c: spec.n_c,
        runs,
    })
}

/// Runs `base` once per `(features, sigma)` cell, features-major.
pub fn run_grid<T: Scalar>(
    base: &ExperimentConfig,
    features: &[usize],
    sigmas: &[f64],
) -> Result<Vec<ExperimentResult>> {
    let mut out = Vec::with_capacity(features.len() * sigmas.len());
    for &m in features {
        for &sigma in sigmas {
            let cfg = ExperimentConfig {
                features: m,
                sigma,
                ..base.clone()
            };
            out.push(run_experiment::<T>(&cfg)?);
        }
    }
    Ok(out)
}
