//! Differentiable layers built on [`Graph`](crate::Graph) operations.
//!
//! Every layer owns its parameter tensors and is *bound* to a graph before
//! use: binding records each parameter as a tracked leaf and returns a small
//! `Copy` struct of [`Var`] handles that the forward functions consume.

mod conv;
mod dense;
mod gru;
mod init;
mod pool;

pub use conv::{conv1d_forward, Conv1dLayer, Conv1dVars};
pub use dense::{dense_forward, time_distributed_dense, DenseLayer, DenseVars};
pub use gru::{gru_forward, gru_step, GruLayer, GruVars};
pub use init::{fans, glorot_bound, init_params};
pub use pool::{maxpool1d_forward, transpose_seq_channels, MaxPool1d};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Anything owning trainable tensors in a fixed order.
pub trait Parameterized<T: Scalar> {
    /// Graph handles for this object's parameters.
    type Vars;

    fn params(&self) -> Vec<&Tensor<T>>;

    /// Same order as [`params`](Self::params).
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    /// Rebuilds the handle struct from vars listed in `params` order.
    fn vars_from(&self, vars: &[Var]) -> Result<Self::Vars>;

    fn bind(&self, g: &mut Graph<T>) -> Result<(Self::Vars, Vec<Var>)> {
        let vars: Vec<Var> = self
            .params()
            .into_iter()
            .map(|p| g.leaf(p.clone()))
            .collect();
        Ok((self.vars_from(&vars)?, vars))
    }

    /// Copies the gradients of a finished `backward` into the parameters.
    fn store_grads(&mut self, g: &Graph<T>, vars: &[Var]) -> Result<()> {
        let params = self.params_mut();
        if params.len() != vars.len() {
            return Err(Error::contract("store_grads: parameter/var count mismatch"));
        }
        for (p, &v) in params.into_iter().zip(vars) {
            let grad = g
                .grad(v)
                .map_or_else(|| vec![T::zero(); p.len()], <[T]>::to_vec);
            p.set_grad(grad)?;
        }
        Ok(())
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

pub(crate) fn take_vars<const N: usize>(what: &str, vars: &[Var]) -> Result<[Var; N]> {
    vars.try_into().map_err(|_| {
        Error::contract(format!(
            "{what}: expected {N} parameter vars, got {}",
            vars.len()
        ))
    })
}
