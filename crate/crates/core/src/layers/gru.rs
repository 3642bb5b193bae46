use rand::Rng;

use super::{init_params, take_vars, Parameterized};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Single gated recurrent unit layer.
///
/// ```text
/// z  = σ(W_z·x + U_z·h + b_z)
/// r  = σ(W_r·x + U_r·h + b_r)
/// h̃  = tanh(W_h·x + U_h·(r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
///
/// `W_*` are `[hidden, input]`, `U_*` are `[hidden, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer<T> {
    input_size: usize,
    hidden_size: usize,
    w_z: Tensor<T>,
    u_z: Tensor<T>,
    b_z: Tensor<T>,
    w_r: Tensor<T>,
    u_r: Tensor<T>,
    b_r: Tensor<T>,
    w_h: Tensor<T>,
    u_h: Tensor<T>,
    b_h: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub input_size: usize,
    pub hidden_size: usize,
    w_z: Var,
    u_z: Var,
    b_z: Var,
    w_r: Var,
    u_r: Var,
    b_r: Var,
    w_h: Var,
    u_h: Var,
    b_h: Var,
}

impl<T: Scalar> GruLayer<T> {
    pub fn new<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(input_size, hidden_size)?;
        for w in [&mut layer.w_z, &mut layer.w_r, &mut layer.w_h] {
            *w = init_params(&[hidden_size, input_size], rng);
        }
        for u in [&mut layer.u_z, &mut layer.u_r, &mut layer.u_h] {
            *u = init_params(&[hidden_size, hidden_size], rng);
        }
        Ok(layer)
    }

    /// Layer with every parameter zero.
    pub fn zeros(input_size: usize, hidden_size: usize) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::contract("GRU sizes must be >= 1"));
        }
        let w = || Tensor::zeros(&[hidden_size, input_size]);
        let u = || Tensor::zeros(&[hidden_size, hidden_size]);
        let b = || Tensor::zeros(&[hidden_size]);
        Ok(GruLayer {
            input_size,
            hidden_size,
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }
}

impl<T: Scalar> Parameterized<T> for GruLayer<T> {
    type Vars = GruVars;

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h,
            &self.b_h,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }

    fn vars_from(&self, vars: &[Var]) -> Result<GruVars> {
        let [w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h] = take_vars("gru", vars)?;
        Ok(GruVars {
            input_size: self.input_size,
            hidden_size: self.hidden_size,
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        })
    }
}

/// One recurrence step. `x` is `[.., input]`, `h` is `[.., hidden]` with
/// matching leading (batch) dimensions.
pub fn gru_step<T: Scalar>(g: &mut Graph<T>, gru: &GruVars, x: Var, h: Var) -> Result<Var> {
    let (xs, hs) = (g.shape(x), g.shape(h));
    let ok = match (xs.split_last(), hs.split_last()) {
        (Some((&i, xl)), Some((&hd, hl))) => {
            i == gru.input_size && hd == gru.hidden_size && xl == hl
        }
        _ => false,
    };
    if !ok {
        return Err(Error::shape("gru_step", xs, hs));
    }
    let z = g.affine(&[(x, gru.w_z), (h, gru.u_z)], Some(gru.b_z))?;
    let z = g.sigmoid(z);
    let r = g.affine(&[(x, gru.w_r), (h, gru.u_r)], Some(gru.b_r))?;
    let r = g.sigmoid(r);
    let rh = g.mul(r, h)?;
    let candidate = g.affine(&[(x, gru.w_h), (rh, gru.u_h)], Some(gru.b_h))?;
    let candidate = g.tanh(candidate);
    // (1 − z)·h + z·h̃ == h + z·(h̃ − h)
    let delta = g.sub(candidate, h)?;
    let delta = g.mul(z, delta)?;
    g.add(h, delta)
}

/// Unrolls the layer over `xs`, returning every hidden state and the last.
pub fn gru_forward<T: Scalar>(
    g: &mut Graph<T>,
    gru: &GruVars,
    xs: &[Var],
    h0: Var,
) -> Result<(Vec<Var>, Var)> {
    if xs.is_empty() {
        return Err(Error::contract("gru_forward: empty input sequence"));
    }
    let mut outputs = Vec::with_capacity(xs.len());
    let mut h = h0;
    for &x in xs {
        h = gru_step(g, gru, x, h)?;
        outputs.push(h);
    }
    Ok((outputs, h))
}
