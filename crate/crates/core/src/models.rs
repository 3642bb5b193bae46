//! Recurrent autoencoders that differ only in how the context is fed to
//! the decoder.
//!
//! All variants share a GRU encoder whose final hidden state is the context
//! `C` (so the encoder hidden size *is* the context size `n_C`), a GRU
//! decoder starting from a zero state, and a time-distributed dense head.
//!
//! | variant        | decoder input sequence                                   |
//! |----------------|----------------------------------------------------------|
//! | `rae`          | `C` repeated `n_Y` times                                 |
//! | `raes`         | `C` cut into `n_X` contiguous chunks of `λ = n_C / n_X`  |
//! | `raesc`        | conv1d over `C` (`n_Y` filters), max-pool, transposed    |
//! | `raes-stretch` | `C` linearly stretched to `n_X` scalar steps             |

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{
    conv1d_forward, dense_forward, gru_forward, maxpool1d_forward, transpose_seq_channels,
    Conv1dLayer, Conv1dVars, DenseLayer, DenseVars, GruLayer, GruVars, MaxPool1d, Parameterized,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `round(sigma · m_X · n_X)`.
pub fn context_size_from_sigma(sigma: f64, m_x: usize, n_x: usize) -> Result<usize> {
    if !(sigma > 0.0 && sigma.is_finite()) || m_x == 0 || n_x == 0 {
        return Err(Error::contract(format!(
            "context size needs sigma > 0 and positive sizes (sigma={sigma}, m_X={m_x}, n_X={n_x})"
        )));
    }
    let n_c = (sigma * (m_x * n_x) as f64).round();
    if n_c < 1.0 {
        return Err(Error::contract(format!(
            "sigma={sigma} gives an empty context for m_X={m_x}, n_X={n_x}"
        )));
    }
    Ok(n_c as usize)
}

/// `λ = n_C / n_X` when the context splits evenly into `n_X` steps.
pub fn raes_feasible(n_c: usize, n_x: usize) -> Option<usize> {
    (n_x > 0 && n_c >= n_x && n_c.is_multiple_of(n_x)).then(|| n_c / n_x)
}

/// Sizes shared by every variant of one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextSpec {
    pub n_x: usize,
    pub m_x: usize,
    pub n_y: usize,
    pub m_y: usize,
    pub sigma: f64,
    pub n_c: usize,
    pub lambda: Option<usize>,
}

impl ContextSpec {
    /// Autoencoding setup (`Y = X`) with the context sized by `sigma`.
    pub fn autoencoder(n_x: usize, m_x: usize, sigma: f64) -> Result<Self> {
        let n_c = context_size_from_sigma(sigma, m_x, n_x)?;
        Ok(ContextSpec {
            n_x,
            m_x,
            n_y: n_x,
            m_y: m_x,
            sigma,
            n_c,
            lambda: raes_feasible(n_c, n_x),
        })
    }

    /// Explicit sizes; `sigma` is derived from `n_c`.
    pub fn new(n_x: usize, m_x: usize, n_y: usize, m_y: usize, n_c: usize) -> Result<Self> {
        if [n_x, m_x, n_y, m_y, n_c].contains(&0) {
            return Err(Error::contract("context spec sizes must be >= 1"));
        }
        Ok(ContextSpec {
            n_x,
            m_x,
            n_y,
            m_y,
            sigma: n_c as f64 / (m_x * n_x) as f64,
            n_c,
            lambda: raes_feasible(n_c, n_x),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantKind {
    Rae,
    Raes,
    Raesc,
    RaesStretch,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Rae,
        VariantKind::Raes,
        VariantKind::Raesc,
        VariantKind::RaesStretch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Rae => "rae",
            VariantKind::Raes => "raes",
            VariantKind::Raesc => "raesc",
            VariantKind::RaesStretch => "raes-stretch",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::contract(format!("unknown model variant {s:?}")))
    }
}

/// Convolution and pooling hyperparameters of the `raesc` variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub kernel_size: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        ConvParams {
            kernel_size: 3,
            pool_size: 2,
            pool_stride: 2,
        }
    }
}

impl ConvParams {
    /// Smallest context that leaves one full pooling window after the conv.
    pub fn min_context(&self) -> usize {
        self.kernel_size + self.pool_size - 1
    }

    /// Features per decoder step after conv + pool over `n_c` values.
    pub fn pooled_len(&self, n_c: usize) -> Option<usize> {
        if self.kernel_size == 0
            || self.pool_size == 0
            || self.pool_stride == 0
            || n_c < self.min_context()
        {
            return None;
        }
        Some((n_c - self.kernel_size + 1 - self.pool_size) / self.pool_stride + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelVariant {
    pub kind: VariantKind,
    pub conv: ConvParams,
}

impl ModelVariant {
    pub fn new(kind: VariantKind) -> Self {
        ModelVariant {
            kind,
            conv: ConvParams::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// `(steps, features)` of the decoder input, or why the variant cannot
    /// be built for `spec`.
    pub fn decoder_input_dims(
        &self,
        spec: &ContextSpec,
    ) -> std::result::Result<(usize, usize), String> {
        match self.kind {
            VariantKind::Rae => Ok((spec.n_y, spec.n_c)),
            VariantKind::Raes => {
                let Some(lambda) = raes_feasible(spec.n_c, spec.n_x) else {
                    return Err(format!(
                        "context size n_C={} is not a multiple of sequence length n_X={}",
                        spec.n_c, spec.n_x
                    ));
                };
                if spec.n_y != spec.n_x {
                    return Err(format!(
                        "raes needs n_Y == n_X (got {} and {})",
                        spec.n_y, spec.n_x
                    ));
                }
                Ok((spec.n_x, lambda))
            }
            VariantKind::Raesc => match self.conv.pooled_len(spec.n_c) {
                Some(features) => Ok((spec.n_y, features)),
                None => Err(format!(
                    "context size n_C={} is below the minimum {} for kernel {} and pool {}/{}",
                    spec.n_c,
                    self.conv.min_context(),
                    self.conv.kernel_size,
                    self.conv.pool_size,
                    self.conv.pool_stride
                )),
            },
            VariantKind::RaesStretch => {
                if spec.n_c > spec.n_x {
                    return Err(format!(
                        "stretching only upsamples: n_C={} exceeds n_X={}",
                        spec.n_c, spec.n_x
                    ));
                }
                if spec.n_y != spec.n_x {
                    return Err(format!(
                        "raes-stretch needs n_Y == n_X (got {} and {})",
                        spec.n_y, spec.n_x
                    ));
                }
                Ok((spec.n_x, 1))
            }
        }
    }

    pub fn feasibility(&self, spec: &ContextSpec) -> std::result::Result<(), String> {
        self.decoder_input_dims(spec).map(|_| ())
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reinterprets a flat context `[.., n_C]` as a sequence `[.., n_X, λ]`:
/// step `i` holds `C[i·λ .. (i+1)·λ]`.
pub fn transform_context<T: Scalar>(g: &mut Graph<T>, context: Var, n_x: usize) -> Result<Var> {
    let shape = g.shape(context).to_vec();
    let (&n_c, lead) = shape
        .split_last()
        .ok_or_else(|| Error::contract("transform_context: rank-0 context"))?;
    let lambda = raes_feasible(n_c, n_x).ok_or_else(|| {
        Error::contract(format!(
            "transform_context: context size {n_c} must be a multiple of the sequence length {n_x}"
        ))
    })?;
    let mut out = lead.to_vec();
    out.extend([n_x, lambda]);
    g.reshape(context, &out)
}

/// `[n_x, n_c]` matrix mapping a context onto `n_x` evenly spaced points by
/// piecewise-linear interpolation; first and last points are copied exactly.
pub fn stretch_matrix<T: Scalar>(n_c: usize, n_x: usize) -> Result<Tensor<T>> {
    if n_c == 0 || n_c > n_x {
        return Err(Error::contract(format!(
            "stretch_context: need 1 <= n_C <= n_X, got n_C={n_c}, n_X={n_x}"
        )));
    }
    let mut m = vec![T::zero(); n_x * n_c];
    let den = (n_x - 1).max(1);
    for i in 0..n_x {
        let num = i * (n_c - 1);
        let (lo, rem) = (num / den, num % den);
        let frac = rem as f64 / den as f64;
        m[i * n_c + lo] += T::of(1.0 - frac);
        if rem != 0 {
            m[i * n_c + lo + 1] += T::of(frac);
        }
    }
    Tensor::new(&[n_x, n_c], m)
}

/// Stretches a context `[.., n_C]` to a univariate sequence `[.., n_X, 1]`,
/// filling gaps with linear averages of neighbouring context values.
pub fn stretch_context<T: Scalar>(g: &mut Graph<T>, context: Var, n_x: usize) -> Result<Var> {
    let shape = g.shape(context).to_vec();
    let (rows, n_c, lead) = match *shape.as_slice() {
        [n_c] => (1, n_c, vec![]),
        [b, n_c] => (b, n_c, vec![b]),
        _ => {
            return Err(Error::contract(format!(
                "stretch_context: bad context shape {shape:?}"
            )))
        }
    };
    let map = g.constant(stretch_matrix(n_c, n_x)?);
    let flat = g.reshape(context, &[rows, n_c])?;
    let stretched = g.matmul_nt(flat, map)?;
    let mut out = lead;
    out.extend([n_x, 1]);
    g.reshape(stretched, &out)
}

/// Encoder, decoder and head of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel<T> {
    variant: ModelVariant,
    spec: ContextSpec,
    encoder: GruLayer<T>,
    decoder: GruLayer<T>,
    head: DenseLayer<T>,
    conv: Option<Conv1dLayer<T>>,
    pool: Option<MaxPool1d>,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub encoder: GruVars,
    pub decoder: GruVars,
    pub head: DenseVars,
    pub conv: Option<Conv1dVars>,
}

impl<T: Scalar> AutoencoderModel<T> {
    /// Builds a freshly initialised model; `decoder_hidden` defaults to `n_C`.
    pub fn new<R: Rng + ?Sized>(
        variant: ModelVariant,
        spec: ContextSpec,
        decoder_hidden: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let (_, dec_in) = variant.decoder_input_dims(&spec).map_err(Error::Contract)?;
        let dec_hidden = decoder_hidden.unwrap_or(spec.n_c);
        let encoder = GruLayer::new(spec.m_x, spec.n_c, rng)?;
        let decoder = GruLayer::new(dec_in, dec_hidden, rng)?;
        let head = DenseLayer::new(dec_hidden, spec.m_y, rng)?;
        let (conv, pool) = match variant.kind {
            VariantKind::Raesc => (
                Some(Conv1dLayer::new(
                    1,
                    spec.n_y,
                    variant.conv.kernel_size,
                    rng,
                )?),
                Some(MaxPool1d::new(
                    variant.conv.pool_size,
                    variant.conv.pool_stride,
                )?),
            ),
            _ => (None, None),
        };
        Ok(AutoencoderModel {
            variant,
            spec,
            encoder,
            decoder,
            head,
            conv,
            pool,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn spec(&self) -> &ContextSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &GruLayer<T> {
        &self.encoder
    }

    pub fn decoder(&self) -> &GruLayer<T> {
        &self.decoder
    }

    pub fn conv(&self) -> Option<&Conv1dLayer<T>> {
        self.conv.as_ref()
    }

    /// Runs the variant's forward pass; `x` is `[B, n_X, m_X]` or `[n_X, m_X]`
    /// and the result has the matching `[.., n_Y, m_Y]` shape.
    pub fn forward(&self, g: &mut Graph<T>, vars: &ModelVars, x: Var) -> Result<Var> {
        match self.variant.kind {
            VariantKind::Rae => rae_forward(self, g, vars, x),
            VariantKind::Raes => raes_forward(self, g, vars, x),
            VariantKind::Raesc => raesc_forward(self, g, vars, x),
            VariantKind::RaesStretch => raes_stretch_forward(self, g, vars, x),
        }
    }

    /// Final encoder hidden state: `[B, n_C]` (or `[n_C]` for one sequence).
    pub fn encode(&self, g: &mut Graph<T>, vars: &ModelVars, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let (lead, steps, features) = match *shape.as_slice() {
            [n, m] => (vec![], n, m),
            [b, n, m] => (vec![b], n, m),
            _ => {
                return Err(Error::contract(format!(
                    "encode: expected [.., n_X, m_X], got {shape:?}"
                )))
            }
        };
        if steps != self.spec.n_x || features != self.spec.m_x {
            return Err(Error::shape(
                "encode",
                &shape,
                &[self.spec.n_x, self.spec.m_x],
            ));
        }
        let xs = (0..steps)
            .map(|t| g.select_step(x, t))
            .collect::<Result<Vec<_>>>()?;
        let mut h0_shape = lead;
        h0_shape.push(self.spec.n_c);
        let h0 = g.constant(Tensor::zeros(&h0_shape));
        let (_, context) = gru_forward(g, &vars.encoder, &xs, h0)?;
        Ok(context)
    }

    /// Decoder input steps derived from the context, per the variant.
    pub fn decoder_inputs(
        &self,
        g: &mut Graph<T>,
        vars: &ModelVars,
        context: Var,
    ) -> Result<Vec<Var>> {
        let seq = match self.variant.kind {
            VariantKind::Rae => return Ok(vec![context; self.spec.n_y]),
            VariantKind::Raes => transform_context(g, context, self.spec.n_x)?,
            VariantKind::RaesStretch => stretch_context(g, context, self.spec.n_x)?,
            VariantKind::Raesc => {
                let conv = vars
                    .conv
                    .as_ref()
                    .ok_or_else(|| Error::contract("raesc model without conv vars"))?;
                let pool = self
                    .pool
                    .as_ref()
                    .ok_or_else(|| Error::contract("raesc model without pooling"))?;
                let mut shape = g.shape(context).to_vec();
                shape.push(1);
                let column = g.reshape(context, &shape)?;
                let features = conv1d_forward(g, conv, column)?;
                let pooled = maxpool1d_forward(g, pool, features)?;
                transpose_seq_channels(g, pooled)?
            }
        };
        let steps = g.shape(seq)[g.shape(seq).len() - 2];
        (0..steps).map(|t| g.select_step(seq, t)).collect()
    }

    /// Zero-initialised decoder over `inputs`, then the shared dense head.
    fn decode(&self, g: &mut Graph<T>, vars: &ModelVars, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::contract("decode: no steps"))?;
        let mut h0_shape = g.shape(first).to_vec();
        *h0_shape.last_mut().expect("rank >= 1") = vars.decoder.hidden_size;
        let h0 = g.constant(Tensor::zeros(&h0_shape));
        let (outputs, _) = gru_forward(g, &vars.decoder, inputs, h0)?;
        let hidden = g.stack(&outputs)?;
        dense_forward(g, &vars.head, hidden)
    }

    fn run(
        &self,
        g: &mut Graph<T>,
        vars: &ModelVars,
        x: Var,
        expected: VariantKind,
    ) -> Result<Var> {
        if self.variant.kind != expected {
            return Err(Error::contract(format!(
                "{expected}_forward called on a {} model",
                self.variant.kind
            )));
        }
        let context = self.encode(g, vars, x)?;
        let inputs = self.decoder_inputs(g, vars, context)?;
        self.decode(g, vars, &inputs)
    }
}

/// Repeat-vector decoding: the context is the decoder input at every step.
pub fn rae_forward<T: Scalar>(
    model: &AutoencoderModel<T>,
    g: &mut Graph<T>,
    vars: &ModelVars,
    x: Var,
) -> Result<Var> {
    model.run(g, vars, x, VariantKind::Rae)
}

/// Sequence-aware decoding: the context is read as `n_X` steps of `λ` features.
pub fn raes_forward<T: Scalar>(
    model: &AutoencoderModel<T>,
    g: &mut Graph<T>,
    vars: &ModelVars,
    x: Var,
) -> Result<Var> {
    model.run(g, vars, x, VariantKind::Raes)
}

/// Convolutional decoding: conv1d with `n_Y` filters over the context, max-pool,
/// then each filter's channel becomes one decoder step.
pub fn raesc_forward<T: Scalar>(
    model: &AutoencoderModel<T>,
    g: &mut Graph<T>,
    vars: &ModelVars,
    x: Var,
) -> Result<Var> {
    model.run(g, vars, x, VariantKind::Raesc)
}

pub fn raes_stretch_forward<T: Scalar>(
    model: &AutoencoderModel<T>,
    g: &mut Graph<T>,
    vars: &ModelVars,
    x: Var,
) -> Result<Var> {
    model.run(g, vars, x, VariantKind::RaesStretch)
}

impl<T: Scalar> Parameterized<T> for AutoencoderModel<T> {
    type Vars = ModelVars;

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = self.encoder.params();
        out.extend(self.decoder.params());
        out.extend(self.head.params());
        if let Some(conv) = &self.conv {
            out.extend(conv.params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out.extend(self.head.params_mut());
        if let Some(conv) = &mut self.conv {
            out.extend(conv.params_mut());
        }
        out
    }

    fn vars_from(&self, vars: &[Var]) -> Result<ModelVars> {
        let ne = self.encoder.params().len();
        let nd = self.decoder.params().len();
        let nh = self.head.params().len();
        let expected = self.params().len();
        if vars.len() != expected {
            return Err(Error::contract(format!(
                "model: expected {expected} parameter vars, got {}",
                vars.len()
            )));
        }
        let (enc, rest) = vars.split_at(ne);
        let (dec, rest) = rest.split_at(nd);
        let (head, rest) = rest.split_at(nh);
        Ok(ModelVars {
            encoder: self.encoder.vars_from(enc)?,
            decoder: self.decoder.vars_from(dec)?,
            head: self.head.vars_from(head)?,
            conv: self.conv.as_ref().map(|c| c.vars_from(rest)).transpose()?,
        })
    }
}
