use std::time::Instant;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::Parameterized;
use crate::models::AutoencoderModel;
use crate::optim::{mse_loss, AdamState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub epoch_wall_time_s: f64,
    pub cumulative_time_s: f64,
}

fn batch_loss<T: Scalar>(
    model: &AutoencoderModel<T>,
    batch: &Tensor<T>,
    g: &mut Graph<T>,
) -> Result<(crate::Var, Vec<crate::Var>)> {
    let (vars, param_vars) = model.bind(g)?;
    let x = g.constant(batch.clone());
    let y = model.forward(g, &vars, x)?;
    Ok((mse_loss(g, y, x)?, param_vars))
}

/// Mean squared reconstruction error over all elements of `batches`;
/// parameters are left untouched.
pub fn evaluate<T: Scalar>(model: &AutoencoderModel<T>, batches: &[Tensor<T>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in batches {
        let mut g = Graph::new();
        let (loss, _) = batch_loss(model, batch, &mut g)?;
        total += g.value(loss).data()[0].as_f64() * batch.len() as f64;
        count += batch.len();
    }
    if count == 0 {
        return Err(Error::contract("evaluate: no data"));
    }
    Ok(total / count as f64)
}

/// One pass over the training batches (one Adam step each) followed by a
/// validation pass. Only the training pass is timed.
pub fn train_epoch<T: Scalar>(
    model: &mut AutoencoderModel<T>,
    dataset: &Dataset,
    adam: &mut AdamState<T>,
    batch_size: usize,
    epoch: usize,
    previous_cumulative_s: f64,
) -> Result<EpochRecord> {
    let train = dataset.batches::<T>(Split::Train, batch_size)?;
    let validation = dataset.batches::<T>(Split::Validation, batch_size)?;
    if train.is_empty() {
        return Err(Error::contract("train_epoch: empty training split"));
    }

    let started = Instant::now();
    let mut total = 0.0;
    let mut count = 0usize;
    for (b, batch) in train.iter().enumerate() {
        let mut g = Graph::new();
        let (loss, param_vars) = batch_loss(model, batch, &mut g)?;
        let value = g.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: format!("training loss at epoch {epoch}, batch {b}"),
            });
        }
        g.backward(loss)?;
        model.store_grads(&g, &param_vars)?;
        adam.step(&mut model.params_mut()).map_err(|e| match e {
            Error::NonFinite { what } => Error::NonFinite {
                what: format!("{what} at epoch {epoch}, batch {b}"),
            },
            other => other,
        })?;
        total += value * batch.len() as f64;
        count += batch.len();
    }
    let epoch_wall_time_s = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);

    let val_mse = if validation.is_empty() {
        f64::NAN
    } else {
        evaluate(model, &validation)?
    };
    Ok(EpochRecord {
        epoch,
        train_mse: total / count as f64,
        val_mse,
        epoch_wall_time_s,
        cumulative_time_s: previous_cumulative_s + epoch_wall_time_s,
    })
}

/// Median training time per epoch; mean of the middle pair for even counts.
pub fn median_epoch_time(records: &[EpochRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::contract("median_epoch_time: no records"));
    }
    let mut times: Vec<f64> = records.iter().map(|r| r.epoch_wall_time_s).collect();
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 {
        times[mid]
    } else {
        (times[mid - 1] + times[mid]) / 2.0
    })
}

/// First epoch whose validation loss is at most `fraction` of epoch 0's.
pub fn epochs_to_threshold(records: &[EpochRecord], fraction: f64) -> Option<usize> {
    let threshold = records.first()?.val_mse * fraction;
    records
        .iter()
        .find(|r| r.val_mse <= threshold)
        .map(|r| r.epoch)
}
