use rand::Rng;

use super::{init_params, take_vars, Parameterized};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Affine map `W·x + b` with linear activation; `W` is `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    in_features: usize,
    out_features: usize,
    w: Tensor<T>,
    b: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub in_features: usize,
    pub out_features: usize,
    w: Var,
    b: Var,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new<R: Rng + ?Sized>(
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_features, out_features)?;
        layer.w = init_params(&[out_features, in_features], rng);
        Ok(layer)
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::contract("dense sizes must be >= 1"));
        }
        Ok(DenseLayer {
            in_features,
            out_features,
            w: Tensor::zeros(&[out_features, in_features]),
            b: Tensor::zeros(&[out_features]),
        })
    }

    pub fn from_parts(w: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        match *w.shape() {
            [out, inp] if b.shape() == [out] => Ok(DenseLayer {
                in_features: inp,
                out_features: out,
                w,
                b,
            }),
            _ => Err(Error::shape("dense", w.shape(), b.shape())),
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }
}

impl<T: Scalar> Parameterized<T> for DenseLayer<T> {
    type Vars = DenseVars;

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w, &mut self.b]
    }

    fn vars_from(&self, vars: &[Var]) -> Result<DenseVars> {
        let [w, b] = take_vars("dense", vars)?;
        Ok(DenseVars {
            in_features: self.in_features,
            out_features: self.out_features,
            w,
            b,
        })
    }
}

/// Applies the layer over the last axis of `x` (`[.., in] -> [.., out]`),
/// so a stacked `[B, T, in]` sequence is handled in one shot.
pub fn dense_forward<T: Scalar>(g: &mut Graph<T>, dense: &DenseVars, x: Var) -> Result<Var> {
    g.affine(&[(x, dense.w)], Some(dense.b))
}

/// Same layer applied independently at every step of `seq`.
pub fn time_distributed_dense<T: Scalar>(
    g: &mut Graph<T>,
    dense: &DenseVars,
    seq: &[Var],
) -> Result<Vec<Var>> {
    seq.iter().map(|&x| dense_forward(g, dense, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let w = Tensor::<f64>::from_f64(&[2, 2], &[1., 0., 0., 1.]).unwrap();
        let layer = DenseLayer::from_parts(w, Tensor::zeros(&[2])).unwrap();
        let mut g = Graph::new();
        let (vars, _) = layer.bind(&mut g).unwrap();
        let seq: Vec<Var> = [[0.5, -1.0], [2.0, 3.0]]
            .iter()
            .map(|d| g.constant(Tensor::from_f64(&[2], d).unwrap()))
            .collect();
        let out = time_distributed_dense(&mut g, &vars, &seq).unwrap();
        for (o, i) in out.iter().zip(&seq) {
            assert_eq!(g.value(*o).data(), g.value(*i).data());
        }
    }

    #[test]
    fn zero_weights_emit_the_bias() {
        let b = Tensor::<f64>::from_f64(&[3], &[1.5, -2.0, 0.25]).unwrap();
        let layer = DenseLayer::from_parts(Tensor::zeros(&[3, 2]), b.clone()).unwrap();
        let mut g = Graph::new();
        let (vars, _) = layer.bind(&mut g).unwrap();
        let seq: Vec<Var> = (0..4)
            .map(|t| g.constant(Tensor::from_f64(&[2], &[t as f64, 1.0]).unwrap()))
            .collect();
        for o in time_distributed_dense(&mut g, &vars, &seq).unwrap() {
            assert_eq!(g.value(o).data(), b.data());
        }
    }

    #[test]
    fn feature_mismatch_is_a_shape_error() {
        let layer = DenseLayer::<f64>::zeros(3, 1).unwrap();
        let mut g = Graph::new();
        let (vars, _) = layer.bind(&mut g).unwrap();
        let x = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(
            dense_forward(&mut g, &vars, x),
            Err(Error::Shape { .. })
        ));
    }
}
