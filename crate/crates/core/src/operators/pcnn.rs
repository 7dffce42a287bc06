use crate::activation::Activation;
use crate::autodiff::{Tape, Var};
use crate::conv::pconv_table;
use crate::error::{invalid, Result};
use crate::operators::glorot;
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};
use std::rc::Rc;

/// Layers `x_ℓ = a(B_ℓ 𝐈 + Σ x_{ℓ−1} ⊛ W_ℓ)`; no activation on the output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcnnOperator {
    pub extents: Vec<usize>,
    /// `l_0, …, l_L` with `l_0 = l_L = 1`.
    pub channels: Vec<usize>,
    /// Kernel half-widths per layer and axis.
    pub half_widths: Vec<Vec<usize>>,
    pub activation: Activation,
}

impl PcnnOperator {
    pub fn new(extents: Vec<usize>, channels: Vec<usize>, half_widths: Vec<Vec<usize>>, activation: Activation) -> Result<Self> {
        let s = PcnnOperator { extents, channels, half_widths, activation };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.channels.len();
        if l < 2 || self.channels[0] != 1 || self.channels[l - 1] != 1 || self.channels.contains(&0) {
            return invalid(format!("channel structure must start and end with 1, got {:?}", self.channels));
        }
        if self.half_widths.len() != l - 1 {
            return invalid("one kernel size per layer required");
        }
        for hw in &self.half_widths {
            pconv_table(&self.extents, hw)?;
        }
        Ok(())
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    fn kernel_len(&self, layer: usize) -> usize {
        self.half_widths[layer].iter().map(|w| 2 * w + 1).product()
    }

    fn layer_size(&self, layer: usize) -> usize {
        let (ci, co) = (self.channels[layer], self.channels[layer + 1]);
        co * ci * self.kernel_len(layer) + co
    }

    pub fn param_count(&self) -> usize {
        (0..self.half_widths.len()).map(|l| self.layer_size(l)).sum()
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        let mut s = 0;
        for l in 0..self.half_widths.len() {
            let (ci, co, k) = (self.channels[l], self.channels[l + 1], self.kernel_len(l));
            glorot(rng, &mut p.values[s..s + co * ci * k], ci * k, co * k);
            s += self.layer_size(l);
        }
        p
    }

    pub fn forward(&self, t: &mut Tape, theta: Var, x: &Tensor) -> Result<Var> {
        let p: usize = self.extents.iter().product();
        let b = x.len() / p;
        let mut shape = vec![b, 1];
        shape.extend_from_slice(&self.extents);
        let mut h = t.constant(x.clone().reshape(&shape)?);
        let mut s = 0;
        let nl = self.half_widths.len();
        for l in 0..nl {
            let (ci, co, k) = (self.channels[l], self.channels[l + 1], self.kernel_len(l));
            let table = Rc::new(pconv_table(&self.extents, &self.half_widths[l])?);
            let w = t.slice(theta, s, &[co, ci, k])?;
            let bias = t.slice(theta, s + co * ci * k, &[co])?;
            h = t.gather_conv(h, w, table, &self.extents)?;
            h = t.add_channel_bias(h, bias)?;
            if l + 1 < nl {
                h = t.act(h, self.activation, 0)?;
            }
            s += self.layer_size(l);
        }
        t.reshape(h, &[b, p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{testutil::check_param_gradient, OperatorSpec};
    use crate::rng::gauss_sample;
    use proptest::prelude::*;

    #[test]
    fn delta_kernel_is_identity() {
        let op = PcnnOperator::new(vec![8], vec![1, 1], vec![vec![1]], Activation::Identity).unwrap();
        let spec = OperatorSpec::Pcnn(op);
        let th = vec![0.0, 1.0, 0.0, 0.0];
        let x: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        assert_eq!(spec.apply_batch(&th, &Tensor::from_vec(x.clone())).unwrap().data(), x.as_slice());
    }

    #[test]
    fn zero_kernels_give_last_bias() {
        let op = PcnnOperator::new(vec![8], vec![1, 3, 1], vec![vec![1], vec![2]], Activation::Tanh).unwrap();
        let mut th = vec![0.0; op.param_count()];
        *th.last_mut().unwrap() = 0.7;
        let out = OperatorSpec::Pcnn(op).apply_batch(&th, &Tensor::from_vec(vec![1.0; 8])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn two_layers_match_index_sums() {
        let op = PcnnOperator::new(vec![8], vec![1, 2, 1], vec![vec![1], vec![1]], Activation::Tanh).unwrap();
        let mut r = RngState::new(4);
        let th = gauss_sample(&mut r, op.param_count());
        let x = gauss_sample(&mut r, 8);
        // layer 1: W1 [2,1,3] at 0, B1 [2] at 6; layer 2: W2 [1,2,3] at 8, B2 at 14
        let mut h = vec![[0.0; 8]; 2];
        for c in 0..2 {
            for i in 0..8 {
                let mut s = th[6 + c];
                for j in 0..3 {
                    s += x[(i + j + 7) % 8] * th[c * 3 + j];
                }
                h[c][i] = s.tanh();
            }
        }
        let mut want = vec![th[14]; 8];
        for (i, wv) in want.iter_mut().enumerate() {
            for c in 0..2 {
                for j in 0..3 {
                    *wv += h[c][(i + j + 7) % 8] * th[8 + c * 3 + j];
                }
            }
        }
        let got = OperatorSpec::Pcnn(op).apply_batch(&th, &Tensor::from_vec(x)).unwrap();
        for i in 0..8 {
            assert!((got.data()[i] - want[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn kernel_too_large() {
        assert!(PcnnOperator::new(vec![4], vec![1, 1], vec![vec![2]], Activation::Tanh).is_err());
    }

    #[test]
    fn gradient_check() {
        let op = PcnnOperator::new(vec![4, 6], vec![1, 3, 1], vec![vec![1, 1], vec![1, 2]], Activation::Tanh).unwrap();
        check_param_gradient(&OperatorSpec::Pcnn(op), 2, 5);
    }

    proptest! {
        #[test]
        fn translation_equivariant(seed in 0u64..500, shift in 0usize..8) {
            let op = PcnnOperator::new(vec![8], vec![1, 2, 1], vec![vec![2], vec![1]], Activation::Gelu).unwrap();
            let mut r = RngState::new(seed);
            let th = gauss_sample(&mut r, op.param_count());
            let x = gauss_sample(&mut r, 8);
            let xs: Vec<f64> = (0..8).map(|i| x[(i + shift) % 8]).collect();
            let spec = OperatorSpec::Pcnn(op);
            let y = spec.apply_batch(&th, &Tensor::from_vec(x)).unwrap();
            let ys = spec.apply_batch(&th, &Tensor::from_vec(xs)).unwrap();
            for i in 0..8 {
                prop_assert_eq!(ys.data()[i], y.data()[(i + shift) % 8]);
            }
        }
    }
}
