//! Central finite-difference verification of reverse-mode gradients.
//!
//! Each check builds a scalar loss from a set of input tensors twice: once
//! on a tape followed by `backward`, and once per perturbed element with
//! the tape only used as a forward evaluator. The two must agree to
//! `|analytic − numeric| / max(1, |numeric|) < tolerance`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{
    conv1d_forward, gru_forward, gru_step, maxpool1d_forward, time_distributed_dense,
    transpose_seq_channels, Conv1dLayer, DenseLayer, GruLayer, MaxPool1d, Parameterized,
};
use crate::models::{AutoencoderModel, ContextSpec, ConvParams, ModelVariant, VariantKind};
use crate::optim::mse_loss;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Largest relative discrepancy found by one comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub error: f64,
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares tape gradients of `f` against central differences at `inputs`.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], step: f64, f: F) -> Result<Discrepancy>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;

    let mut worst = Discrepancy {
        error: 0.0,
        input: 0,
        element: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = g
            .grad(v)
            .map_or_else(|| vec![0.0; inputs[i].len()], <[f64]>::to_vec);
        for (j, &grad) in analytic.iter().enumerate() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + step;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = orig - step;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let error = (grad - numeric).abs() / numeric.abs().max(1.0);
            if !error.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("gradient check of input {i}, element {j}"),
                });
            }
            if error > worst.error {
                worst = Discrepancy {
                    error,
                    input: i,
                    element: j,
                    analytic: grad,
                    numeric,
                };
            }
        }
    }
    Ok(worst)
}

/// `Σ out ⊙ weights`: turns any tensor-valued op into a scalar loss whose
/// gradient exercises every output element differently.
pub fn weighted_sum(g: &mut Graph<f64>, out: Var, weights: &Tensor<f64>) -> Result<Var> {
    let w = g.constant(weights.clone().reshape(g.shape(out))?);
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .expect("sized from shape")
}

fn randomized<P: Parameterized<f64>>(layer: &P, rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
    layer
        .params()
        .iter()
        .map(|p| uniform(p.shape(), rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub worst: Discrepancy,
    pub passed: bool,
}

type Case = fn(usize, &mut ChaCha8Rng) -> Result<Discrepancy>;

fn case_dense(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (inp, out, steps) = (1 + i % 4, 1 + (i / 2) % 3, 1 + i % 5);
    let layer = DenseLayer::<f64>::zeros(inp, out)?;
    let mut inputs = randomized(&layer, rng);
    inputs.push(uniform(&[steps, inp], rng));
    let weights = uniform(&[steps, out], rng);
    check_gradients(&inputs, DEFAULT_STEP, |g, v| {
        let vars = layer.vars_from(&v[..2])?;
        let seq = (0..steps)
            .map(|t| g.select_step(v[2], t))
            .collect::<Result<Vec<_>>>()?;
        let ys = time_distributed_dense(g, &vars, &seq)?;
        let y = g.stack(&ys)?;
        weighted_sum(g, y, &weights)
    })
}

fn case_gru_step(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (inp, hidden) = (1 + i % 3, 1 + (i * 5) % 6);
    let layer = GruLayer::<f64>::zeros(inp, hidden)?;
    let mut inputs = randomized(&layer, rng);
    inputs.push(uniform(&[inp], rng));
    inputs.push(uniform(&[hidden], rng));
    let weights = uniform(&[hidden], rng);
    check_gradients(&inputs, DEFAULT_STEP, |g, v| {
        let vars = layer.vars_from(&v[..9])?;
        let h = gru_step(g, &vars, v[9], v[10])?;
        weighted_sum(g, h, &weights)
    })
}

fn case_gru_sequence(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (inp, hidden, steps, batch) = (1 + i % 2, 1 + (i * 7) % 6, 1 + (i * 3) % 8, 1 + i % 2);
    let layer = GruLayer::<f64>::zeros(inp, hidden)?;
    let mut inputs = randomized(&layer, rng);
    inputs.push(uniform(&[batch, steps, inp], rng));
    inputs.push(uniform(&[batch, hidden], rng));
    let weights = uniform(&[batch, steps, hidden], rng);
    check_gradients(&inputs, DEFAULT_STEP, |g, v| {
        let vars = layer.vars_from(&v[..9])?;
        let xs = (0..steps)
            .map(|t| g.select_step(v[9], t))
            .collect::<Result<Vec<_>>>()?;
        let (outs, _) = gru_forward(g, &vars, &xs, v[10])?;
        let y = g.stack(&outs)?;
        weighted_sum(g, y, &weights)
    })
}

fn case_conv1d(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (channels, filters, kernel) = (1 + i % 3, 1 + (i / 3) % 4, 1 + i % 4);
    let len = if i.is_multiple_of(3) {
        kernel
    } else {
        kernel + i % 5
    };
    let layer = Conv1dLayer::<f64>::zeros(channels, filters, kernel)?;
    let mut inputs = randomized(&layer, rng);
    inputs.push(uniform(&[2, len, channels], rng));
    let weights = uniform(&[2, len - kernel + 1, filters], rng);
    check_gradients(&inputs, DEFAULT_STEP, |g, v| {
        let vars = layer.vars_from(&v[..2])?;
        let y = conv1d_forward(g, &vars, v[2])?;
        weighted_sum(g, y, &weights)
    })
}

fn case_maxpool(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let pool = MaxPool1d::new(1 + i % 3, 1 + (i / 2) % 3)?;
    let len = pool.pool_size() + i % 6;
    let channels = 1 + i % 2;
    let inputs = vec![uniform(&[len, channels], rng)];
    let out_len = pool.output_len(len).expect("len >= pool size");
    let weights = uniform(&[out_len, channels], rng);
    check_gradients(&inputs, DEFAULT_STEP, |g, v| {
        let y = maxpool1d_forward(g, &pool, v[0])?;
        weighted_sum(g, y, &weights)
    })
}

fn case_transpose(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (rows, cols) = (1 + i % 4, 1 + (i * 3) % 5);
    let inputs = vec![uniform(&[2, rows, cols], rng)];
    let weights = uniform(&[2, cols, rows], rng);
    check_gradients(&inputs, DEFAULT_STEP, |g, v| {
        let y = transpose_seq_channels(g, v[0])?;
        weighted_sum(g, y, &weights)
    })
}

/// Full forward pass plus reconstruction MSE, differentiated w.r.t. every
/// parameter and the input sequence.
fn check_model(
    variant: ModelVariant,
    spec: ContextSpec,
    decoder_hidden: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Discrepancy> {
    let model = AutoencoderModel::<f64>::new(variant, spec, Some(decoder_hidden), rng)?;
    let mut inputs = randomized(&model, rng);
    let n_params = inputs.len();
    inputs.push(uniform(&[2, spec.n_x, spec.m_x], rng));
    check_gradients(&inputs, DEFAULT_STEP, |g, v| {
        let vars = model.vars_from(&v[..n_params])?;
        let x = v[n_params];
        let y = model.forward(g, &vars, x)?;
        mse_loss(g, y, x)
    })
}

fn case_rae(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (n_x, m_x, n_c) = (2 + i % 5, 1 + i % 2, 1 + (i * 5) % 6);
    let spec = ContextSpec::new(n_x, m_x, n_x, m_x, n_c)?;
    check_model(ModelVariant::new(VariantKind::Rae), spec, 1 + i % 6, rng)
}

fn case_raes(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (n_x, lambda) = [(2, 1), (3, 1), (2, 2), (3, 2), (4, 1), (6, 1)][i % 6];
    let spec = ContextSpec::new(n_x, 1 + i % 2, n_x, 1 + i % 2, n_x * lambda)?;
    check_model(
        ModelVariant::new(VariantKind::Raes),
        spec,
        1 + (i * 5) % 6,
        rng,
    )
}

fn case_raesc(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let (n_x, n_c, conv) = if i == 0 {
        (
            4,
            6,
            ConvParams {
                kernel_size: 2,
                ..ConvParams::default()
            },
        )
    } else {
        let conv = ConvParams {
            kernel_size: 1 + i % 3,
            pool_size: 1 + i % 2,
            pool_stride: 1 + (i / 2) % 2,
        };
        (2 + i % 5, conv.min_context() + i % 3, conv)
    };
    let m_x = 1 + i % 2;
    let spec = ContextSpec::new(n_x, m_x, n_x, m_x, n_c)?;
    let variant = ModelVariant {
        kind: VariantKind::Raesc,
        conv,
    };
    check_model(variant, spec, 1 + i % 6, rng)
}

fn case_raes_stretch(i: usize, rng: &mut ChaCha8Rng) -> Result<Discrepancy> {
    let n_x = 2 + i % 6;
    let n_c = 1 + i % n_x;
    let spec = ContextSpec::new(n_x, 1, n_x, 1, n_c)?;
    check_model(
        ModelVariant::new(VariantKind::RaesStretch),
        spec,
        1 + i % 4,
        rng,
    )
}

pub const CHECKS: [(&str, Case); 10] = [
    ("dense", case_dense),
    ("gru_step", case_gru_step),
    ("gru_sequence", case_gru_sequence),
    ("conv1d", case_conv1d),
    ("maxpool1d", case_maxpool),
    ("transpose", case_transpose),
    ("rae_forward+mse", case_rae),
    ("raes_forward+mse", case_raes),
    ("raesc_forward+mse", case_raesc),
    ("raes_stretch_forward+mse", case_raes_stretch),
];

/// Runs every check on `instances` random toy problems each.
pub fn run_suite(seed: u64, instances: usize, tolerance: f64) -> Result<Vec<CheckOutcome>> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(k, &(name, case))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut worst: Option<Discrepancy> = None;
            for i in 0..instances {
                let d = case(i, &mut rng)?;
                if worst.as_ref().is_none_or(|w| d.error > w.error) {
                    worst = Some(d);
                }
            }
            let worst = worst.ok_or_else(|| Error::contract("gradcheck: zero instances"))?;
            Ok(CheckOutcome {
                name,
                instances,
                passed: worst.error < tolerance,
                worst,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        // The tape differentiates x·x correctly; comparing against a
        // function evaluated differently on the forward-only path must fail.
        let inputs = vec![Tensor::from_f64(&[1], &[0.7]).unwrap()];
        let d = check_gradients(&inputs, DEFAULT_STEP, |g, v| {
            if g.len() == 1 && g.op_kind(v[0]) == "leaf" && g.value(v[0]).data()[0] != 0.7 {
                // perturbed forward-only evaluation: pretend f = 3x
                let y = g.scale(v[0], 3.0);
                Ok(g.sum(y))
            } else {
                let y = g.mul(v[0], v[0])?;
                Ok(g.sum(y))
            }
        })
        .unwrap();
        assert!(d.error > 1e-2);
    }

    #[test]
    fn simple_square_passes() {
        let inputs = vec![Tensor::from_f64(&[3], &[0.2, -0.9, 0.5]).unwrap()];
        let d = check_gradients(&inputs, DEFAULT_STEP, |g, v| {
            let y = g.mul(v[0], v[0])?;
            Ok(g.sum(y))
        })
        .unwrap();
        assert!(d.error < 1e-8);
    }

    #[test]
    fn every_layer_and_model_passes() {
        for outcome in run_suite(17, 3, DEFAULT_TOLERANCE).unwrap() {
            assert!(outcome.passed, "{outcome:?}");
        }
    }
}
