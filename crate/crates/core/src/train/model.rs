//! Linear multilabel model and its checkpoint format.
//!
//! Checkpoints are little-endian:
//!
//! ```text
//! magic   8 bytes  "PSLMODEL"
//! version u32      1
//! dims    u64 x 2  num_features, num_labels
//! weights f64 x (num_features * num_labels), row-major (feature-major)
//! bias    f64 x num_labels
//! ```

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PSLMODEL";
const VERSION: u32 = 1;

/// Scores `z_j = sum_f x_f W[f, j] + b_j`. Parameters are stored flat: the
/// feature-major weight block followed by the bias block.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    num_features: usize,
    num_labels: usize,
    params: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(num_features: usize, num_labels: usize) -> Self {
        Self { num_features, num_labels, params: vec![0.0; (num_features + 1) * num_labels] }
    }

    /// Weights uniform in `±1/sqrt(num_features)`, zero bias.
    pub fn init_uniform(num_features: usize, num_labels: usize, seed: u64) -> Self {
        let mut model = Self::zeros(num_features, num_labels);
        let bound = 1.0 / (num_features.max(1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = num_features * num_labels;
        for w in &mut model.params[..n] {
            *w = rng.gen_range(-bound..=bound);
        }
        model
    }

    pub fn from_parts(num_features: usize, num_labels: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != num_features * num_labels {
            return Err(Error::Dimension { expected: num_features * num_labels, got: weights.len() });
        }
        if bias.len() != num_labels {
            return Err(Error::Dimension { expected: num_labels, got: bias.len() });
        }
        let mut params = weights;
        params.extend(bias);
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("model parameters must be finite".into()));
        }
        Ok(Self { num_features, num_labels, params })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.num_features * self.num_labels]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.num_features * self.num_labels..]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Squared Frobenius norm of the weights (bias excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights().iter().map(|w| w * w).sum()
    }

    /// Raw scores for a sparse feature vector.
    pub fn scores(&self, features: &[(usize, f64)]) -> Vec<f64> {
        let l = self.num_labels;
        let mut z = self.bias().to_vec();
        for &(f, x) in features {
            let row = &self.params[f * l..(f + 1) * l];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += x * w;
            }
        }
        z
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(28 + 8 * self.params.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.num_features as u64).to_le_bytes());
        buf.extend_from_slice(&(self.num_labels as u64).to_le_bytes());
        for v in &self.params {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let bad = |msg: &str| Error::Validation(format!("model checkpoint: {msg}"));
        if data.len() < 28 || &data[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dim = |at: usize| u64::from_le_bytes(data[at..at + 8].try_into().expect("8 bytes")) as usize;
        let (nf, nl) = (dim(12), dim(20));
        let count = nf
            .checked_add(1)
            .and_then(|r| r.checked_mul(nl))
            .ok_or_else(|| bad("dimensions overflow"))?;
        if data.len() != 28 + 8 * count {
            return Err(bad(&format!("expected {} bytes, found {}", 28 + 8 * count, data.len())));
        }
        let params: Vec<f64> = data[28..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let bias = params[nf * nl..].to_vec();
        let mut weights = params;
        weights.truncate(nf * nl);
        Self::from_parts(nf, nl, weights, bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_and_layout() {
        let m = LinearModel::from_parts(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5, 0.0, -0.5]).unwrap();
        assert_eq!(m.scores(&[(1, 2.0)]), vec![8.5, 10.0, 11.5]);
        assert_eq!(m.scores(&[]), vec![0.5, 0.0, -0.5]);
        assert_eq!(m.weight_norm_sq(), 91.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = LinearModel::init_uniform(4, 3, 9);
        assert!(m.weights().iter().all(|w| w.abs() <= 0.5));
        let mut bytes = Vec::new();
        m.write(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 28 + 8 * 15);
        assert_eq!(LinearModel::read(bytes.as_slice()).unwrap(), m);
        assert!(LinearModel::read(&bytes[..40]).is_err());
    }
}
