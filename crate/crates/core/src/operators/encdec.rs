use crate::activation::Activation;
use crate::autodiff::{Tape, Var};
use crate::conv::block_table;
use crate::error::{invalid, Result};
use crate::operators::glorot;
use crate::rng::RngState;
use crate::tensor::{ParamVector, Tensor};
use serde::{Deserialize, Serialize};
use std::rc::Rc;

/// Strided-convolution encoder followed by a transposed-convolution decoder
/// with channel structure `(l_0, …, l_L, …, l_0)`, `l_0 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncDecOperator {
    pub extents: Vec<usize>,
    pub channels: Vec<usize>,
    /// Kernel (= stride) sizes per layer and axis.
    pub kernels: Vec<Vec<usize>>,
    pub activation: Activation,
}

impl EncDecOperator {
    pub fn new(extents: Vec<usize>, channels: Vec<usize>, kernels: Vec<Vec<usize>>, activation: Activation) -> Result<Self> {
        let s = EncDecOperator { extents, channels, kernels, activation };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 || self.channels[0] != 1 || self.channels.contains(&0) {
            return invalid(format!("channel structure must start with 1, got {:?}", self.channels));
        }
        if self.kernels.len() != self.channels.len() - 1 {
            return invalid("one kernel size per layer required");
        }
        self.level_extents().map(|_| ())
    }

    /// Grid extents `𝔞_0, …, 𝔞_L` with `𝔞_ℓ = 𝔞_{ℓ−1}/w_ℓ`.
    pub fn level_extents(&self) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![self.extents.clone()];
        for w in &self.kernels {
            let prev = out.last().unwrap();
            if w.len() != prev.len() || w.contains(&0) {
                return invalid("kernel dimensionality does not match grid");
            }
            if prev.iter().zip(w).any(|(a, k)| a % k != 0) {
                return invalid(format!("extents {prev:?} not divisible by kernel {w:?}"));
            }
            out.push(prev.iter().zip(w).map(|(a, k)| a / k).collect());
        }
        Ok(out)
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    fn klen(&self, l: usize) -> usize {
        self.kernels[l].iter().product()
    }

    fn down_size(&self, l: usize) -> usize {
        self.channels[l + 1] * self.channels[l] * self.klen(l) + self.channels[l + 1]
    }

    fn up_size(&self, l: usize) -> usize {
        self.channels[l] * self.channels[l + 1] * self.klen(l) + self.channels[l]
    }

    fn up_offset(&self) -> usize {
        (0..self.kernels.len()).map(|l| self.down_size(l)).sum()
    }

    pub fn param_count(&self) -> usize {
        self.up_offset() + (0..self.kernels.len()).map(|l| self.up_size(l)).sum::<usize>()
    }

    pub fn init(&self, rng: &mut RngState) -> ParamVector {
        let mut p = ParamVector::zeros(self.param_count());
        let mut s = 0;
        for l in 0..self.kernels.len() {
            let (ci, co, k) = (self.channels[l], self.channels[l + 1], self.klen(l));
            glorot(rng, &mut p.values[s..s + co * ci * k], ci * k, co * k);
            s += self.down_size(l);
        }
        for l in 0..self.kernels.len() {
            let (co, ci, k) = (self.channels[l], self.channels[l + 1], self.klen(l));
            glorot(rng, &mut p.values[s..s + co * ci * k], ci * k, co * k);
            s += self.up_size(l);
        }
        p
    }

    pub fn forward(&self, t: &mut Tape, theta: Var, x: &Tensor) -> Result<Var> {
        let levels = self.level_extents()?;
        let p: usize = self.extents.iter().product();
        let b = x.len() / p;
        let nl = self.kernels.len();
        let mut shape = vec![b, 1];
        shape.extend_from_slice(&self.extents);
        let mut h = t.constant(x.clone().reshape(&shape)?);
        let tables: Vec<Rc<_>> =
            (0..nl).map(|l| block_table(&levels[l], &self.kernels[l]).map(Rc::new)).collect::<Result<_>>()?;
        let mut s = 0;
        for l in 0..nl {
            let (ci, co, k) = (self.channels[l], self.channels[l + 1], self.klen(l));
            let w = t.slice(theta, s, &[co, ci, k])?;
            let bias = t.slice(theta, s + co * ci * k, &[co])?;
            h = t.gather_conv(h, w, tables[l].clone(), &levels[l + 1])?;
            h = t.add_channel_bias(h, bias)?;
            h = t.act(h, self.activation, 0)?;
            s += self.down_size(l);
        }
        let up_base = self.up_offset();
        let mut offs = vec![0; nl];
        let mut acc = up_base;
        for (l, o) in offs.iter_mut().enumerate() {
            *o = acc;
            acc += self.up_size(l);
        }
        for l in (0..nl).rev() {
            let (co, ci, k) = (self.channels[l], self.channels[l + 1], self.klen(l));
            let w = t.slice(theta, offs[l], &[co, ci, k])?;
            let bias = t.slice(theta, offs[l] + co * ci * k, &[co])?;
            h = t.scatter_conv(h, w, tables[l].clone(), &levels[l])?;
            h = t.add_channel_bias(h, bias)?;
            if l > 0 {
                h = t.act(h, self.activation, 0)?;
            }
        }
        t.reshape(h, &[b, p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{testutil::check_param_gradient, OperatorSpec};
    use crate::rng::gauss_sample;

    #[test]
    fn unit_kernels_are_identity() {
        let op = EncDecOperator::new(vec![8], vec![1, 1], vec![vec![1]], Activation::Identity).unwrap();
        assert_eq!(op.param_count(), 4);
        let th = vec![1.0, 0.0, 1.0, 0.0];
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y = OperatorSpec::EncDec(op).apply_batch(&th, &Tensor::from_vec(x.clone())).unwrap();
        assert_eq!(y.data(), x.as_slice());
    }

    #[test]
    fn zero_decoder_gives_bias() {
        let op = EncDecOperator::new(vec![8], vec![1, 2, 3], vec![vec![2], vec![2]], Activation::Tanh).unwrap();
        let mut r = RngState::new(1);
        let mut th = op.init(&mut r).values;
        let up = op.up_offset();
        th[up..].iter_mut().for_each(|v| *v = 0.0);
        // decoder layer 1 bias sits at the end of its block
        th[up + op.up_size(0) - 1] = -0.4;
        let y = OperatorSpec::EncDec(op).apply_batch(&th, &Tensor::from_vec(gauss_sample(&mut r, 8))).unwrap();
        assert!(y.data().iter().all(|&v| v == -0.4));
    }

    #[test]
    fn matches_naive_loops() {
        let op = EncDecOperator::new(vec![8], vec![1, 2, 2], vec![vec![2], vec![2]], Activation::Tanh).unwrap();
        let mut r = RngState::new(9);
        let th = gauss_sample(&mut r, op.param_count());
        let x = gauss_sample(&mut r, 8);
        let a = |v: f64| v.tanh();
        // down 1: W [2,1,2] @0, B [2] @4; down 2: W [2,2,2] @6, B [2] @14
        // up 1: W [1,2,2] @16, B [1] @20; up 2: W [2,2,2] @21, B [2] @29
        let mut x1 = [[0.0; 4]; 2];
        for n in 0..2 {
            for i in 0..4 {
                x1[n][i] = a(th[4 + n] + x[2 * i] * th[n * 2] + x[2 * i + 1] * th[n * 2 + 1]);
            }
        }
        let mut x2 = [[0.0; 2]; 2];
        for n in 0..2 {
            for i in 0..2 {
                let mut s = th[14 + n];
                for m in 0..2 {
                    for j in 0..2 {
                        s += x1[m][2 * i + j] * th[6 + (n * 2 + m) * 2 + j];
                    }
                }
                x2[n][i] = a(s);
            }
        }
        let mut y1 = [[0.0; 4]; 2];
        for n in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = th[29 + n];
                    for m in 0..2 {
                        s += x2[m][i] * th[21 + (n * 2 + m) * 2 + j];
                    }
                    y1[n][2 * i + j] = a(s);
                }
            }
        }
        let mut y0 = [0.0; 8];
        for i in 0..4 {
            for j in 0..2 {
                let mut s = th[20];
                for m in 0..2 {
                    s += y1[m][i] * th[16 + m * 2 + j];
                }
                y0[2 * i + j] = s;
            }
        }
        let got = OperatorSpec::EncDec(op).apply_batch(&th, &Tensor::from_vec(x)).unwrap();
        for i in 0..8 {
            assert!((got.data()[i] - y0[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(EncDecOperator::new(vec![6], vec![1, 2], vec![vec![4]], Activation::Tanh).is_err());
    }

    #[test]
    fn gradient_check() {
        let op = EncDecOperator::new(vec![4, 4], vec![1, 2, 3], vec![vec![2, 1], vec![2, 2]], Activation::Gelu).unwrap();
        check_param_gradient(&OperatorSpec::EncDec(op), 2, 3);
    }
}
