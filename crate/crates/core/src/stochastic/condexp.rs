//! Conditional expectations on finite probability spaces.

use crate::error::{invalid, shape, Result};

/// Outcomes `0..n` with probabilities and a partition generating `𝒢`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteProbSpace {
    pub probs: Vec<f64>,
    /// Block index of every outcome.
    pub block_of: Vec<usize>,
    pub n_blocks: usize,
}

impl DiscreteProbSpace {
    pub fn new(probs: Vec<f64>, blocks: &[Vec<usize>]) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return invalid("probability space needs at least one outcome");
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return invalid("probabilities must be nonnegative and sum to 1");
        }
        let mut block_of = vec![usize::MAX; n];
        for (b, blk) in blocks.iter().enumerate() {
            if blk.is_empty() {
                return invalid("empty partition block");
            }
            for &w in blk {
                if w >= n || block_of[w] != usize::MAX {
                    return invalid(format!("outcome {w} is out of range or in two blocks"));
                }
                block_of[w] = b;
            }
        }
        if block_of.contains(&usize::MAX) {
            return invalid("blocks do not cover every outcome");
        }
        Ok(DiscreteProbSpace { probs, block_of, n_blocks: blocks.len() })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn expectation(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.probs.iter().zip(x).map(|(p, v)| p * v).sum())
    }

    /// `E[X | block]` per block. Null blocks get the plain average, any
    /// value being a version of the conditional expectation there.
    pub fn block_means(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut num = vec![0.0; self.n_blocks];
        let mut den = vec![0.0; self.n_blocks];
        let mut plain = vec![(0.0, 0usize); self.n_blocks];
        for (w, &b) in self.block_of.iter().enumerate() {
            num[b] += self.probs[w] * x[w];
            den[b] += self.probs[w];
            plain[b].0 += x[w];
            plain[b].1 += 1;
        }
        Ok((0..self.n_blocks).map(|b| if den[b] > 0.0 { num[b] / den[b] } else { plain[b].0 / plain[b].1 as f64 }).collect())
    }

    /// `E[X|𝒢]` as an outcome-indexed vector.
    pub fn cond_exp(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.block_means(x)?;
        Ok(self.block_of.iter().map(|&b| m[b]).collect())
    }

    pub fn is_measurable(&self, y: &[f64]) -> bool {
        y.len() == self.len() && self.block_of.iter().zip(y).all(|(&b, v)| {
            let first = self.block_of.iter().position(|&c| c == b).unwrap();
            y[first] == *v
        })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return shape(format!("random variable with {} values on {} outcomes", x.len(), self.len()));
        }
        Ok(())
    }
}

/// Both sides of `E|X−Y|² = E|X−E[X|𝒢]|² + E|E[X|𝒢]−Y|²` for a
/// `𝒢`-measurable `Y`.
pub fn pythagoras_check(space: &DiscreteProbSpace, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    space.check(x)?;
    if !space.is_measurable(y) {
        return invalid("Y is not constant on the partition blocks");
    }
    let c = space.cond_exp(x)?;
    let e = |f: &dyn Fn(usize) -> f64| -> f64 { (0..space.len()).map(|w| space.probs[w] * f(w)).sum() };
    let lhs = e(&|w| (x[w] - y[w]).powi(2));
    let rhs = e(&|w| (x[w] - c[w]).powi(2)) + e(&|w| (c[w] - y[w]).powi(2));
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_and_discrete_partitions() {
        let p = vec![0.1, 0.2, 0.3, 0.4];
        let x = [1.0, -2.0, 0.5, 3.0];
        let one = DiscreteProbSpace::new(p.clone(), &[vec![0, 1, 2, 3]]).unwrap();
        let m = one.expectation(&x).unwrap();
        assert!(one.cond_exp(&x).unwrap().iter().all(|v| (v - m).abs() < 1e-15));
        let sing = DiscreteProbSpace::new(p, &[vec![0], vec![1], vec![2], vec![3]]).unwrap();
        assert!(sing.cond_exp(&x).unwrap().iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DiscreteProbSpace::new(vec![0.5, 0.6], &[vec![0, 1]]).is_err());
        assert!(DiscreteProbSpace::new(vec![0.5, 0.5], &[vec![0], vec![0, 1]]).is_err());
        assert!(DiscreteProbSpace::new(vec![0.5, 0.5], &[vec![0]]).is_err());
        let s = DiscreteProbSpace::new(vec![0.5, 0.5], &[vec![0, 1]]).unwrap();
        assert!(pythagoras_check(&s, &[1.0, 2.0], &[0.0, 1.0]).is_err());
    }
}
