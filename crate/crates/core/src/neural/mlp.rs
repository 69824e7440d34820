use super::{Activation, ParamGrads, Trainable};
use crate::rng::Rng;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    /// `fan_in × fan_out`, so a layer computes `x·W + b`.
    pub(crate) w: Array2<f64>,
    pub(crate) b: Array1<f64>,
    pub(crate) activation: Activation,
}

impl Dense {
    fn new(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..=bound)),
            b: Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..=bound)),
            activation,
        }
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.w);
        z += &self.b;
        let act = self.activation;
        if act != Activation::Linear {
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }
}

/// Fully connected feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) layers: Vec<Dense>,
}

/// Layer activations from a forward pass, input first.
#[derive(Debug, Clone)]
pub struct MlpCache {
    activations: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.activations[0]
    }
}

impl Mlp {
    /// `sizes = [in, h1, …, out]`; hidden layers use `hidden`, the last `output`.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == sizes.len() { output } else { hidden };
                Dense::new(w[0], w[1], act, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    /// Builds a network from explicit `(weights, bias, activation)` layers.
    pub fn from_layers(layers: Vec<(Array2<f64>, Array1<f64>, Activation)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig(
                "a network needs at least one layer".into(),
            ));
        }
        for (i, (w, b, _)) in layers.iter().enumerate() {
            if w.ncols() != b.len() {
                return Err(Error::DimensionMismatch {
                    what: "layer bias",
                    expected: w.ncols(),
                    found: b.len(),
                });
            }
            if i > 0 && layers[i - 1].0.ncols() != w.nrows() {
                return Err(Error::DimensionMismatch {
                    what: "layer chaining",
                    expected: layers[i - 1].0.ncols(),
                    found: w.nrows(),
                });
            }
        }
        Ok(Self {
            layers: layers
                .into_iter()
                .map(|(w, b, activation)| Dense {
                    w: w.as_standard_layout().into_owned(),
                    b,
                    activation,
                })
                .collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    /// `(fan_in, fan_out, activation)` per layer.
    pub fn layer_specs(&self) -> Vec<(usize, usize, Activation)> {
        self.layers
            .iter()
            .map(|l| (l.w.nrows(), l.w.ncols(), l.activation))
            .collect()
    }

    pub fn weights(&self, layer: usize) -> &Array2<f64> {
        &self.layers[layer].w
    }

    pub fn bias(&self, layer: usize) -> &Array1<f64> {
        &self.layers[layer].b
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Output only, no cache.
    pub fn predict(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h.view());
        }
        Ok(h)
    }

    /// Single-example convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.predict(&view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for layer in &self.layers {
            let next = layer.forward(&activations.last().expect("non-empty").view());
            activations.push(next);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((out, MlpCache { activations }))
    }

    /// Reverse pass. Returns parameter gradients (summed over the batch) and
    /// the gradient with respect to the input rows.
    pub fn backward(
        &self,
        cache: &MlpCache,
        output_grad: &ArrayView2<f64>,
    ) -> Result<(ParamGrads, Array2<f64>)> {
        let (grads, input_grad) = self.backward_inner(cache, output_grad, true)?;
        Ok((grads.expect("requested"), input_grad))
    }

    /// Input gradient only; skips the weight-gradient products.
    pub fn input_gradient(
        &self,
        cache: &MlpCache,
        output_grad: &ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        Ok(self.backward_inner(cache, output_grad, false)?.1)
    }

    fn backward_inner(
        &self,
        cache: &MlpCache,
        output_grad: &ArrayView2<f64>,
        want_params: bool,
    ) -> Result<(Option<ParamGrads>, Array2<f64>)> {
        let out = cache.output();
        if cache.activations.len() != self.layers.len() + 1 || output_grad.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                what: "output gradient",
                expected: out.len(),
                found: output_grad.len(),
            });
        }
        let mut per_layer: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        let mut delta = output_grad.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            if act != Activation::Linear {
                delta.zip_mut_with(&cache.activations[l + 1], |d, a| {
                    *d *= act.derivative_from_output(*a)
                });
            }
            if want_params {
                let dw = cache.activations[l].t().dot(&delta);
                let db = delta.sum_axis(Axis(0));
                per_layer.push((dw.iter().cloned().collect(), db.to_vec()));
            }
            delta = delta.dot(&layer.w.t());
        }
        let grads = want_params.then(|| {
            per_layer.reverse();
            ParamGrads(per_layer.into_iter().flat_map(|(w, b)| [w, b]).collect())
        });
        Ok((grads, delta))
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}

impl Trainable for Mlp {
    fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.w.as_slice().expect("standard layout"),
                    l.b.as_slice().expect("contiguous"),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("standard layout"),
                    l.b.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }
}
