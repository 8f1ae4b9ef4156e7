use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::trainer::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            _ => Err(format!("unknown activation {s:?}")),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

/// `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-token feed-forward network. The activation applies after every layer
/// except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
}

pub(crate) struct FfnCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Ffn {
    /// Glorot-uniform weights, zero biases. `dims` runs from input to output.
    pub fn init<R: Rng>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    weight: Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-bound..bound)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers, activation }
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.ncols())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.nrows())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.nrows()));
        d
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub(crate) fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, FfnCache) {
        let mut cache = FfnCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weight.t()) + &layer.bias;
            let next = if l == last {
                z.clone()
            } else {
                z.mapv(|v| self.activation.apply(v))
            };
            cache.inputs.push(a);
            cache.pre_activations.push(z);
            a = next;
        }
        (a, cache)
    }

    /// Parameter gradients and the gradient with respect to the input.
    pub(crate) fn backward(&self, cache: &FfnCache, d_out: &Array2<f64>) -> (Ffn, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dz = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let d_weight = dz.t().dot(&cache.inputs[l]);
            let d_bias = dz.sum_axis(Axis(0));
            let mut da = dz.dot(&layer.weight);
            if l > 0 {
                let act = self.activation;
                ndarray::Zip::from(&mut da)
                    .and(&cache.pre_activations[l - 1])
                    .for_each(|g, &z| *g *= act.derivative(z));
            }
            grads.push(DenseLayer {
                weight: d_weight,
                bias: d_bias,
            });
            dz = da;
        }
        grads.reverse();
        (
            Ffn {
                layers: grads,
                activation: self.activation,
            },
            dz,
        )
    }
}

impl ParamSet for Ffn {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            f(&format!("{prefix}{i}.weight"), l.weight.as_slice().unwrap());
            f(&format!("{prefix}{i}.bias"), l.bias.as_slice().unwrap());
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(&format!("{prefix}{i}.weight"), l.weight.as_slice_mut().unwrap());
            f(&format!("{prefix}{i}.bias"), l.bias.as_slice_mut().unwrap());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ffn = Ffn::init(&[4, 6, 3], Activation::Relu, &mut rng);
        assert_eq!(ffn.dims(), vec![4, 6, 3]);
        let bound = (6.0f64 / 10.0).sqrt();
        assert!(ffn.layers[0].weight.iter().all(|w| w.abs() < bound));
        assert!(ffn.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for act in [Activation::Tanh, Activation::Relu, Activation::Identity] {
            let ffn = Ffn::init(&[3, 5, 2], act, &mut rng);
            let x = Array2::from_shape_simple_fn((4, 3), || rng.gen_range(-1.0..1.0));
            let up = Array2::from_shape_simple_fn((4, 2), || rng.gen_range(-1.0..1.0));
            let (_, cache) = ffn.forward_cached(&x);
            let (_, dx) = ffn.backward(&cache, &up);
            let h = 1e-6;
            for idx in ndarray::indices(x.dim()) {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[idx] += h;
                xm[idx] -= h;
                let fd = ((ffn.forward(&xp) * &up).sum() - (ffn.forward(&xm) * &up).sum()) / (2.0 * h);
                assert!((fd - dx[idx]).abs() < 1e-6, "{act}: {fd} vs {}", dx[idx]);
            }
        }
    }
}
