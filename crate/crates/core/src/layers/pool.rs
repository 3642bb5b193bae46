use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pool_size: usize,
    stride: usize,
}

impl MaxPool1d {
    pub fn new(pool_size: usize, stride: usize) -> Result<Self> {
        if pool_size == 0 || stride == 0 {
            return Err(Error::contract(
                "maxpool1d: pool size and stride must be >= 1",
            ));
        }
        Ok(MaxPool1d { pool_size, stride })
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Pooled length for an input of `length` steps, if any window fits.
    pub fn output_len(&self, length: usize) -> Option<usize> {
        (length >= self.pool_size).then(|| (length - self.pool_size) / self.stride + 1)
    }
}

impl Default for MaxPool1d {
    fn default() -> Self {
        MaxPool1d {
            pool_size: 2,
            stride: 2,
        }
    }
}

/// `[.., length, channels] -> [.., pooled, channels]`.
pub fn maxpool1d_forward<T: Scalar>(g: &mut Graph<T>, pool: &MaxPool1d, seq: Var) -> Result<Var> {
    g.maxpool1d(seq, pool.pool_size, pool.stride)
}

/// `[.., length, channels] -> [.., channels, length]`: each channel becomes
/// one element of the output sequence.
pub fn transpose_seq_channels<T: Scalar>(g: &mut Graph<T>, seq: Var) -> Result<Var> {
    g.transpose(seq)
}
