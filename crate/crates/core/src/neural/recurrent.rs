use super::{Activation, Mlp, MlpCache, ParamGrads, Trainable};
use crate::rng::Rng;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

/// Sequence length used for truncated backpropagation through time.
pub const BPTT_WINDOW: usize = 8;

/// Elman cell `h_t = tanh(x_t·W_x + h_{t−1}·W_h + b)` followed by a dense head
/// applied to every hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCell {
    pub(crate) wx: Array2<f64>,
    pub(crate) wh: Array2<f64>,
    pub(crate) b: Array1<f64>,
    pub(crate) head: Mlp,
}

/// Everything the reverse pass over a sequence needs.
#[derive(Debug, Clone)]
pub struct RecurrentCache {
    inputs: Vec<Array2<f64>>,
    /// `hidden[0]` is the initial state; `hidden[t+1]` follows input `t`.
    hidden: Vec<Array2<f64>>,
    heads: Vec<MlpCache>,
}

impl RecurrentCache {
    pub fn final_hidden(&self) -> &Array2<f64> {
        self.hidden.last().expect("initial state present")
    }
}

impl RecurrentCell {
    /// `head_sizes` lists the head's hidden widths; the head ends in a linear
    /// layer of width `output`.
    pub fn new(
        input: usize,
        hidden: usize,
        head_sizes: &[usize],
        output: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::InvalidConfig(
                "recurrent dimensions must be positive".into(),
            ));
        }
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        let mut draw = |r, c| Array2::from_shape_fn((r, c), |_| rng.random_range(-bound..=bound));
        let wx = draw(input, hidden);
        let wh = draw(hidden, hidden);
        let b = Array1::from_shape_fn(hidden, |_| rng.random_range(-bound..=bound));
        let mut sizes = vec![hidden];
        sizes.extend_from_slice(head_sizes);
        sizes.push(output);
        let head = Mlp::new(&sizes, Activation::Relu, Activation::Linear, rng)?;
        Ok(Self { wx, wh, b, head })
    }

    pub fn from_parts(wx: Array2<f64>, wh: Array2<f64>, b: Array1<f64>, head: Mlp) -> Result<Self> {
        let h = wh.nrows();
        if wh.ncols() != h || wx.ncols() != h || b.len() != h || head.input_dim() != h {
            return Err(Error::DimensionMismatch {
                what: "recurrent cell",
                expected: h,
                found: wx.ncols(),
            });
        }
        Ok(Self {
            wx: wx.as_standard_layout().into_owned(),
            wh: wh.as_standard_layout().into_owned(),
            b,
            head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.wx.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.wh.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    fn cell(&self, h: &ArrayView2<f64>, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.wx) + h.dot(&self.wh);
        z += &self.b;
        z.mapv_inplace(f64::tanh);
        z
    }

    /// One step for a single example: returns the new hidden state and the head output.
    pub fn step(&self, hidden: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if hidden.len() != self.hidden_dim() || x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "recurrent step",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let h = ArrayView2::from_shape((1, hidden.len()), hidden).expect("row");
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let next = self.cell(&h, &xv);
        let out = self.head.predict(&next.view())?;
        Ok((
            next.into_raw_vec_and_offset().0,
            out.into_raw_vec_and_offset().0,
        ))
    }

    /// Runs a batch of sequences from `h0` (zeros when `None`). `inputs[t]` is
    /// `batch × input`; returns one `batch × output` matrix per step.
    pub fn forward_sequence(
        &self,
        inputs: &[Array2<f64>],
        h0: Option<Array2<f64>>,
    ) -> Result<(Vec<Array2<f64>>, RecurrentCache)> {
        let batch = inputs.first().map(|x| x.nrows()).unwrap_or(0);
        let h0 = h0.unwrap_or_else(|| Array2::zeros((batch, self.hidden_dim())));
        if h0.dim() != (batch, self.hidden_dim()) {
            return Err(Error::DimensionMismatch {
                what: "initial hidden state",
                expected: self.hidden_dim(),
                found: h0.ncols(),
            });
        }
        let mut hidden = vec![h0];
        let mut heads = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            if x.dim() != (batch, self.input_dim()) {
                return Err(Error::DimensionMismatch {
                    what: "sequence input",
                    expected: self.input_dim(),
                    found: x.ncols(),
                });
            }
            let h = self.cell(&hidden.last().expect("non-empty").view(), &x.view());
            let (out, cache) = self.head.forward(&h.view())?;
            hidden.push(h);
            heads.push(cache);
            outputs.push(out);
        }
        Ok((
            outputs,
            RecurrentCache {
                inputs: inputs.to_vec(),
                hidden,
                heads,
            },
        ))
    }

    /// Backpropagation through the cached sequence. `output_grads[t]` may be
    /// `None` for steps without a loss. Returns parameter gradients and the
    /// gradient for every input.
    pub fn backward_sequence(
        &self,
        cache: &RecurrentCache,
        output_grads: &[Option<Array2<f64>>],
    ) -> Result<(ParamGrads, Vec<Array2<f64>>)> {
        let steps = cache.inputs.len();
        if output_grads.len() != steps {
            return Err(Error::DimensionMismatch {
                what: "sequence output gradients",
                expected: steps,
                found: output_grads.len(),
            });
        }
        let batch = cache.hidden[0].nrows();
        let hd = self.hidden_dim();
        let mut d_wx = Array2::<f64>::zeros(self.wx.dim());
        let mut d_wh = Array2::<f64>::zeros(self.wh.dim());
        let mut d_b = Array1::<f64>::zeros(hd);
        let mut head_grads = ParamGrads::zeros_like(&self.head);
        let mut input_grads = vec![Array2::zeros((batch, self.input_dim())); steps];
        let mut carry = Array2::<f64>::zeros((batch, hd));
        for t in (0..steps).rev() {
            let mut dh = carry;
            if let Some(g) = &output_grads[t] {
                let (hg, dh_head) = self.head.backward(&cache.heads[t], &g.view())?;
                head_grads.add(&hg);
                dh += &dh_head;
            }
            // through tanh
            let mut dz = dh;
            dz.zip_mut_with(&cache.hidden[t + 1], |d, h| *d *= 1.0 - h * h);
            d_wx += &cache.inputs[t].t().dot(&dz);
            d_wh += &cache.hidden[t].t().dot(&dz);
            d_b += &dz.sum_axis(Axis(0));
            input_grads[t] = dz.dot(&self.wx.t());
            carry = dz.dot(&self.wh.t());
        }
        let mut grads = vec![
            d_wx.iter().cloned().collect(),
            d_wh.iter().cloned().collect(),
            d_b.to_vec(),
        ];
        grads.extend(head_grads.0);
        Ok((ParamGrads(grads), input_grads))
    }
}

impl Trainable for RecurrentCell {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = vec![
            self.wx.as_slice().expect("standard layout"),
            self.wh.as_slice().expect("standard layout"),
            self.b.as_slice().expect("contiguous"),
        ];
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = vec![
            self.wx.as_slice_mut().expect("standard layout"),
            self.wh.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("contiguous"),
        ];
        p.extend(self.head.params_mut());
        p
    }
}
