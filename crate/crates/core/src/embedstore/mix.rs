//! Softmax-normalized scalar mix over encoder layers with a global scale.

use ndarray::{Array1, Array2, Zip};

use super::EmbeddingRecord;
use crate::error::{Error, Result};
use crate::trainer::ParamSet;

/// Layer weights `raw` (softmax-normalized) and scale `gamma = exp(log_gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixWeights {
    pub raw: Array1<f64>,
    pub log_gamma: f64,
}

impl MixWeights {
    /// Uniform weights, unit scale.
    pub fn new(num_layers: usize) -> Self {
        Self {
            raw: Array1::zeros(num_layers),
            log_gamma: 0.0,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.raw.len()
    }

    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }

    pub fn normalized(&self) -> Array1<f64> {
        let max = self.raw.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exp = self.raw.mapv(|v| (v - max).exp());
        let total = exp.sum();
        exp / total
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        self.raw += &other.raw;
        self.log_gamma += other.log_gamma;
    }
}

impl ParamSet for MixWeights {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&format!("{prefix}raw"), self.raw.as_slice().unwrap());
        f(&format!("{prefix}log_gamma"), std::slice::from_ref(&self.log_gamma));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&format!("{prefix}raw"), self.raw.as_slice_mut().unwrap());
        f(&format!("{prefix}log_gamma"), std::slice::from_mut(&mut self.log_gamma));
    }
}

fn check_layers(record: &EmbeddingRecord, w: &MixWeights) -> Result<()> {
    if record.num_layers() != w.num_layers() {
        return Err(Error::shape(format!(
            "record {:?} has {} layers, mix expects {}",
            record.id(),
            record.num_layers(),
            w.num_layers()
        )));
    }
    Ok(())
}

/// `gamma * sum_k softmax(raw)_k * layer_k`, as an `L x D` matrix.
pub fn mix(record: &EmbeddingRecord, w: &MixWeights) -> Result<Array2<f64>> {
    check_layers(record, w)?;
    let s = w.normalized();
    let gamma = w.gamma();
    let mut out = Array2::<f64>::zeros((record.seq_len(), record.dim()));
    for (k, &sk) in s.iter().enumerate() {
        let coef = gamma * sk;
        Zip::from(&mut out)
            .and(&record.layer(k))
            .for_each(|o, &v| *o += coef * f64::from(v));
    }
    Ok(out)
}

/// Gradient of the loss with respect to `raw` and `log_gamma`, given the
/// gradient `upstream` with respect to the mixed output.
pub fn mix_backward(record: &EmbeddingRecord, w: &MixWeights, upstream: &Array2<f64>) -> Result<MixWeights> {
    check_layers(record, w)?;
    if upstream.dim() != (record.seq_len(), record.dim()) {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match record {:?} ({} x {})",
            upstream.dim(),
            record.id(),
            record.seq_len(),
            record.dim()
        )));
    }
    let s = w.normalized();
    let gamma = w.gamma();
    // inner_k = <upstream, layer_k>
    let inner: Array1<f64> = (0..w.num_layers())
        .map(|k| {
            Zip::from(upstream)
                .and(&record.layer(k))
                .fold(0.0, |acc, &g, &v| acc + g * f64::from(v))
        })
        .collect();
    let weighted: f64 = s.dot(&inner);
    let raw = Array1::from_iter(
        s.iter()
            .zip(&inner)
            .map(|(&sk, &ik)| gamma * sk * (ik - weighted)),
    );
    Ok(MixWeights {
        raw,
        log_gamma: gamma * weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record_of(layers: &[Array2<f64>]) -> EmbeddingRecord {
        EmbeddingRecord::from_layers("r", layers).unwrap()
    }

    #[test]
    fn equal_layers_mix_to_themselves() {
        let m = array![[1.0, -2.0], [0.5, 3.0]];
        let r = record_of(&[m.clone(), m.clone(), m.clone()]);
        let out = mix(&r, &MixWeights::new(3)).unwrap();
        assert_abs_diff_eq!(out, m, epsilon = 1e-12);
    }

    #[test]
    fn saturated_softmax_selects_one_layer() {
        let a = array![[1.5, -0.25]];
        let r = record_of(&[a.clone(), array![[9.0, 9.0]]]);
        let w = MixWeights {
            raw: array![1000.0, -1000.0],
            log_gamma: 0.0,
        };
        let s = w.normalized();
        assert!(s.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(mix(&r, &w).unwrap(), a, epsilon = 1e-7);
    }

    #[test]
    fn hand_evaluated_scale() {
        let r = record_of(&[array![[2.0]], array![[4.0]]]);
        let w = MixWeights {
            raw: array![0.0, 0.0],
            log_gamma: 3f64.ln(),
        };
        assert_abs_diff_eq!(mix(&r, &w).unwrap()[[0, 0]], 9.0, epsilon = 1e-12);
    }

    #[test]
    fn layer_mismatch_is_error() {
        let r = record_of(&[array![[1.0]]]);
        assert!(mix(&r, &MixWeights::new(2)).is_err());
        assert!(mix_backward(&r, &MixWeights::new(1), &Array2::zeros((2, 1))).is_err());
    }

    #[test]
    fn zero_upstream_and_singleton_layers() {
        let r = record_of(&[array![[1.0, 2.0]], array![[3.0, -1.0]]]);
        let g = mix_backward(&r, &MixWeights::new(2), &Array2::zeros((1, 2))).unwrap();
        assert_eq!(g.raw, array![0.0, 0.0]);
        assert_eq!(g.log_gamma, 0.0);

        let r = record_of(&[array![[1.0, 2.0]]]);
        let g = mix_backward(&r, &MixWeights { raw: array![0.7], log_gamma: 0.2 }, &array![[1.0, -3.0]]).unwrap();
        assert_eq!(g.raw, array![0.0]);
        assert!(g.log_gamma != 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let k = rng.gen_range(1..5);
            let (l, d) = (rng.gen_range(1..4), rng.gen_range(1..4));
            let layers: Vec<Array2<f64>> = (0..k)
                .map(|_| Array2::from_shape_fn((l, d), |_| rng.gen_range(-1.0..1.0)))
                .collect();
            let r = record_of(&layers);
            let w = MixWeights {
                raw: Array1::from_shape_fn(k, |_| rng.gen_range(-1.0..1.0)),
                log_gamma: rng.gen_range(-0.5..0.5),
            };
            let up = Array2::from_shape_fn((l, d), |_| rng.gen_range(-1.0..1.0));
            let loss = |w: &MixWeights| (mix(&r, w).unwrap() * &up).sum();
            let g = mix_backward(&r, &w, &up).unwrap();
            let h = 1e-5;
            for i in 0..k {
                let (mut p, mut m) = (w.clone(), w.clone());
                p.raw[i] += h;
                m.raw[i] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - g.raw[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "raw[{i}] {fd} vs {}", g.raw[i]);
            }
            let (mut p, mut m) = (w.clone(), w.clone());
            p.log_gamma += h;
            m.log_gamma -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - g.log_gamma).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn mix_is_linear_in_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Values exactly representable in f32 so storage rounding does not interfere.
        let mut layer = || Array2::from_shape_fn((2, 3), |_| f64::from(rng.gen_range(-8i32..8)) / 4.0);
        let r1: Vec<_> = (0..3).map(|_| layer()).collect();
        let r2: Vec<_> = (0..3).map(|_| layer()).collect();
        let combo: Vec<_> = r1.iter().zip(&r2).map(|(a, b)| a * 2.0 - b * 0.5).collect();
        let w = MixWeights { raw: array![0.3, -1.2, 0.8], log_gamma: 0.4 };
        let lhs = mix(&record_of(&combo), &w).unwrap();
        let rhs = mix(&record_of(&r1), &w).unwrap() * 2.0 - mix(&record_of(&r2), &w).unwrap() * 0.5;
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn normalized_is_probability_vector(raw in proptest::collection::vec(-1e6f64..1e6, 1..14)) {
            let w = MixWeights { raw: Array1::from(raw), log_gamma: 0.0 };
            let s = w.normalized();
            proptest::prop_assert!(s.iter().all(|&v| v.is_finite() && (0.0..=1.0).contains(&v)));
            proptest::prop_assert!((s.sum() - 1.0).abs() < 1e-12);
        }
    }
}
