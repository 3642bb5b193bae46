use rand::Rng;

use super::{init_params, take_vars, Parameterized};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Valid (unpadded, stride 1) 1-D convolution. Weights are
/// `[filters, kernel_size, in_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer<T> {
    in_channels: usize,
    filters: usize,
    kernel_size: usize,
    w: Tensor<T>,
    b: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1dVars {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel_size: usize,
    w: Var,
    b: Var,
}

impl<T: Scalar> Conv1dLayer<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        filters: usize,
        kernel_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, filters, kernel_size)?;
        layer.w = init_params(&[filters, kernel_size, in_channels], rng);
        Ok(layer)
    }

    pub fn zeros(in_channels: usize, filters: usize, kernel_size: usize) -> Result<Self> {
        if in_channels == 0 || filters == 0 || kernel_size == 0 {
            return Err(Error::contract(
                "conv1d: channels, filters and kernel size must be >= 1",
            ));
        }
        Ok(Conv1dLayer {
            in_channels,
            filters,
            kernel_size,
            w: Tensor::zeros(&[filters, kernel_size, in_channels]),
            b: Tensor::zeros(&[filters]),
        })
    }

    pub fn from_parts(w: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        match *w.shape() {
            [f, k, c] if f >= 1 && k >= 1 && c >= 1 && b.shape() == [f] => Ok(Conv1dLayer {
                in_channels: c,
                filters: f,
                kernel_size: k,
                w,
                b,
            }),
            _ => Err(Error::shape("conv1d", w.shape(), b.shape())),
        }
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }
}

impl<T: Scalar> Parameterized<T> for Conv1dLayer<T> {
    type Vars = Conv1dVars;

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w, &mut self.b]
    }

    fn vars_from(&self, vars: &[Var]) -> Result<Conv1dVars> {
        let [w, b] = take_vars("conv1d", vars)?;
        Ok(Conv1dVars {
            in_channels: self.in_channels,
            filters: self.filters,
            kernel_size: self.kernel_size,
            w,
            b,
        })
    }
}

/// `[.., length, in_channels] -> [.., length - kernel + 1, filters]`.
pub fn conv1d_forward<T: Scalar>(g: &mut Graph<T>, conv: &Conv1dVars, seq: Var) -> Result<Var> {
    g.conv1d(seq, conv.w, conv.b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[data.len(), 1], data).unwrap()
    }

    #[test]
    fn two_tap_sum() {
        let w = Tensor::from_f64(&[1, 2, 1], &[1., 1.]).unwrap();
        let layer = Conv1dLayer::<f64>::from_parts(w, Tensor::zeros(&[1])).unwrap();
        let mut g = Graph::new();
        let (vars, _) = layer.bind(&mut g).unwrap();
        let seq = g.constant(column(&[1., 2., 3., 4.]));
        let out = conv1d_forward(&mut g, &vars, seq).unwrap();
        assert_eq!(g.shape(out), &[3, 1]);
        assert_eq!(g.value(out).data(), &[3., 5., 7.]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let w = Tensor::from_f64(&[1, 1, 1], &[1.]).unwrap();
        let layer = Conv1dLayer::<f64>::from_parts(w, Tensor::zeros(&[1])).unwrap();
        let mut g = Graph::new();
        let (vars, _) = layer.bind(&mut g).unwrap();
        let input = column(&[0.5, -3.0, 8.0]);
        let seq = g.constant(input.clone());
        let out = conv1d_forward(&mut g, &vars, seq).unwrap();
        assert_eq!(g.value(out), &input);
    }

    #[test]
    fn short_sequence_names_length_and_kernel() {
        let layer = Conv1dLayer::<f64>::zeros(1, 2, 5).unwrap();
        let mut g = Graph::new();
        let (vars, _) = layer.bind(&mut g).unwrap();
        let seq = g.constant(column(&[1., 2., 3.]));
        let msg = conv1d_forward(&mut g, &vars, seq).unwrap_err().to_string();
        assert!(msg.contains('3') && msg.contains('5'), "{msg}");
    }
}
