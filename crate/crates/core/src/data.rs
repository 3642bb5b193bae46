//! Seeded synthetic signals for reconstruction experiments.
//!
//! Every feature channel of every sequence is a sum of random sinusoids
//! (integer number of cycles over the sequence) rescaled so its largest
//! absolute value is exactly 1.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const FILE_MAGIC: &str = "raes-dataset";
const FILE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalConfig {
    pub n_sequences: usize,
    pub seq_len: usize,
    pub n_features: usize,
    pub components_per_feature: usize,
    pub amplitude_range: (f64, f64),
    pub max_cycles: u32,
    pub seed: u64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            n_sequences: 5000,
            seq_len: 200,
            n_features: 1,
            components_per_feature: 3,
            amplitude_range: (0.5, 1.0),
            max_cycles: 10,
            seed: 0,
        }
    }
}

impl SignalConfig {
    pub fn new(n_sequences: usize, seq_len: usize, n_features: usize, seed: u64) -> Self {
        SignalConfig {
            n_sequences,
            seq_len,
            n_features,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.amplitude_range;
        if self.n_sequences == 0
            || self.seq_len == 0
            || self.n_features == 0
            || self.components_per_feature == 0
        {
            return Err(Error::contract(format!(
                "signal config counts must be >= 1: {self:?}"
            )));
        }
        if self.max_cycles == 0 || !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::contract(format!(
                "invalid signal generator ranges: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// `[n_sequences, seq_len, n_features]` values plus a train/validation
/// partition of the sequence indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    config: SignalConfig,
    values: Vec<f64>,
    train: Vec<usize>,
    validation: Vec<usize>,
}

/// Number of training sequences in an 80:20 split.
pub fn train_count(n_sequences: usize) -> usize {
    n_sequences * 4 / 5
}

pub fn generate_dataset(cfg: &SignalConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, len, feats) = (cfg.n_sequences, cfg.seq_len, cfg.n_features);
    let mut values = vec![0.0; n * len * feats];
    let mut channel = vec![0.0; len];
    for s in 0..n {
        for f in 0..feats {
            channel.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..cfg.components_per_feature {
                let amplitude = rng.gen_range(cfg.amplitude_range.0..=cfg.amplitude_range.1);
                let cycles = rng.gen_range(1..=cfg.max_cycles) as f64;
                let phase = rng.gen_range(0.0..TAU);
                for (t, v) in channel.iter_mut().enumerate() {
                    *v += amplitude * (TAU * cycles * t as f64 / len as f64 + phase).sin();
                }
            }
            let peak = channel.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (t, &v) in channel.iter().enumerate() {
                values[(s * len + t) * feats + f] = if peak > 0.0 { v / peak } else { 0.0 };
            }
        }
    }
    Ok(Dataset::unshuffled(*cfg, values))
}

/// Assigns a seeded uniform permutation: the first 80% train, the rest validate.
pub fn shuffle_split(dataset: Dataset, seed: u64) -> Dataset {
    let mut order: Vec<usize> = (0..dataset.n_sequences()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    dataset.with_order(order)
}

impl Dataset {
    fn unshuffled(config: SignalConfig, values: Vec<f64>) -> Self {
        let order = (0..config.n_sequences).collect();
        Dataset {
            config,
            values,
            train: Vec::new(),
            validation: Vec::new(),
        }
        .with_order(order)
    }

    fn with_order(mut self, mut order: Vec<usize>) -> Self {
        let validation = order.split_off(train_count(order.len()));
        self.train = order;
        self.validation = validation;
        self
    }

    pub fn config(&self) -> &SignalConfig {
        &self.config
    }

    pub fn n_sequences(&self) -> usize {
        self.config.n_sequences
    }

    pub fn seq_len(&self) -> usize {
        self.config.seq_len
    }

    pub fn n_features(&self) -> usize {
        self.config.n_features
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `seq_len × n_features` values of one sequence, row-major.
    pub fn sequence(&self, index: usize) -> &[f64] {
        let stride = self.seq_len() * self.n_features();
        &self.values[index * stride..(index + 1) * stride]
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
        }
    }

    /// Consecutive chunks of the split's (shuffled) index order, each a
    /// `[b, seq_len, n_features]` tensor; the last chunk may be short.
    pub fn batches<T: Scalar>(&self, split: Split, batch_size: usize) -> Result<Vec<Tensor<T>>> {
        if batch_size == 0 {
            return Err(Error::contract("batch size must be >= 1"));
        }
        self.indices(split)
            .chunks(batch_size)
            .map(|chunk| {
                let data = chunk
                    .iter()
                    .flat_map(|&i| self.sequence(i).iter().map(|&v| T::of(v)))
                    .collect();
                Tensor::new(&[chunk.len(), self.seq_len(), self.n_features()], data)
            })
            .collect()
    }

    /// Writes the header line and one comma-separated line per
    /// (sequence, step), values to 9 significant digits.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let c = &self.config;
        writeln!(
            out,
            "{FILE_MAGIC} {FILE_VERSION} {} {} {} {}",
            c.n_sequences, c.seq_len, c.n_features, c.seed
        )?;
        for row in self.values.chunks(c.n_features) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a file written by [`save`](Self::save). The split is the
    /// unshuffled 80:20 one; call [`shuffle_split`] to reshuffle.
    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind: "dataset",
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| bad("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [magic, version, n, len, feats, seed] = fields.as_slice() else {
            return Err(bad(format!("bad header {header:?}")));
        };
        if *magic != FILE_MAGIC || *version != FILE_VERSION {
            return Err(bad(format!("unsupported header {header:?}")));
        }
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| bad(format!("header field {s:?}: {e}")))
        };
        let cfg = SignalConfig {
            n_sequences: num(n)? as usize,
            seq_len: num(len)? as usize,
            n_features: num(feats)? as usize,
            seed: num(seed)?,
            ..Default::default()
        };
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        let rows = cfg.n_sequences * cfg.seq_len;
        let mut values = Vec::with_capacity(rows * cfg.n_features);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| bad(format!("line {}: {field:?}: {e}", i + 2)))?;
                values.push(v);
            }
            if values.len() - before != cfg.n_features {
                return Err(bad(format!(
                    "line {} has {} values, expected {}",
                    i + 2,
                    values.len() - before,
                    cfg.n_features
                )));
            }
        }
        if values.len() != rows * cfg.n_features {
            return Err(bad(format!(
                "expected {rows} rows, found {}",
                values.len() / cfg.n_features
            )));
        }
        Ok(Dataset::unshuffled(cfg, values))
    }
}
