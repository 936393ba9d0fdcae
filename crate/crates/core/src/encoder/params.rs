use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

use super::EncoderConfig;
use crate::rng;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
}

/// Every learnable tensor. Gradients and optimizer moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_emb: Array2<f64>,
    pub position_emb: Array2<f64>,
    pub segment_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    /// `[d_model × 2]`: column 0 scores starts, column 1 ends.
    pub qa_w: Array2<f64>,
    pub qa_b: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn layer_specs(cfg: &EncoderConfig, i: usize) -> Vec<(String, Vec<usize>, Init)> {
    let (d, f) = (cfg.d_model, cfg.d_ffn);
    let p = |n: &str| format!("layers.{i}.{n}");
    vec![
        (p("wq"), vec![d, d], Init::Normal),
        (p("bq"), vec![d], Init::Zeros),
        (p("wk"), vec![d, d], Init::Normal),
        (p("bk"), vec![d], Init::Zeros),
        (p("wv"), vec![d, d], Init::Normal),
        (p("bv"), vec![d], Init::Zeros),
        (p("wo"), vec![d, d], Init::Normal),
        (p("bo"), vec![d], Init::Zeros),
        (p("ln1_gain"), vec![d], Init::Ones),
        (p("ln1_bias"), vec![d], Init::Zeros),
        (p("w1"), vec![d, f], Init::Normal),
        (p("b1"), vec![f], Init::Zeros),
        (p("w2"), vec![f, d], Init::Normal),
        (p("b2"), vec![d], Init::Zeros),
        (p("ln2_gain"), vec![d], Init::Ones),
        (p("ln2_bias"), vec![d], Init::Zeros),
    ]
}

fn all_specs(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d_model;
    let mut specs = vec![
        ("token_emb".to_string(), vec![cfg.vocab_size, d], Init::Normal),
        ("position_emb".to_string(), vec![cfg.max_positions, d], Init::Normal),
        ("segment_emb".to_string(), vec![2, d], Init::Normal),
    ];
    for i in 0..cfg.n_layers {
        specs.extend(layer_specs(cfg, i));
    }
    specs.push(("qa_w".to_string(), vec![d, 2], Init::Normal));
    specs.push(("qa_b".to_string(), vec![2], Init::Zeros));
    specs
}

impl EncoderParams {
    /// Names and shapes in canonical (checkpoint) order.
    pub fn specs(cfg: &EncoderConfig) -> Vec<TensorSpec> {
        all_specs(cfg).into_iter().map(|(name, shape, _)| TensorSpec { name, shape }).collect()
    }

    pub fn zeros(cfg: &EncoderConfig) -> Self {
        Self::from_flat(cfg, all_specs(cfg).iter().map(|(_, s, _)| vec![0.0; s.iter().product()]))
    }

    /// Builds params from one flat buffer per tensor, in canonical order.
    /// Panics if a buffer count or length disagrees with the config.
    pub fn from_flat<I: IntoIterator<Item = Vec<f64>>>(cfg: &EncoderConfig, buffers: I) -> Self {
        let specs = all_specs(cfg);
        let buffers: Vec<Vec<f64>> = buffers.into_iter().collect();
        assert_eq!(buffers.len(), specs.len(), "tensor count");
        let mut it = specs.into_iter().zip(buffers);
        let mut next = || {
            let ((name, shape, _), buf) = it.next().unwrap();
            assert_eq!(buf.len(), shape.iter().product::<usize>(), "{name}");
            (shape, buf)
        };
        let mut m2 = || {
            let (shape, buf) = next();
            Array2::from_shape_vec((shape[0], shape[1]), buf).unwrap()
        };
        let token_emb = m2();
        let position_emb = m2();
        let segment_emb = m2();
        let mut m2 = || {
            let (shape, buf) = next();
            if shape.len() == 2 {
                Array2::from_shape_vec((shape[0], shape[1]), buf).unwrap()
            } else {
                Array2::from_shape_vec((1, shape[0]), buf).unwrap()
            }
        };
        let row = |a: Array2<f64>| {
            let n = a.len();
            a.into_shape_with_order(n).unwrap()
        };
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for _ in 0..cfg.n_layers {
            layers.push(LayerParams {
                wq: m2(),
                bq: row(m2()),
                wk: m2(),
                bk: row(m2()),
                wv: m2(),
                bv: row(m2()),
                wo: m2(),
                bo: row(m2()),
                ln1_gain: row(m2()),
                ln1_bias: row(m2()),
                w1: m2(),
                b1: row(m2()),
                w2: m2(),
                b2: row(m2()),
                ln2_gain: row(m2()),
                ln2_bias: row(m2()),
            });
        }
        let qa_w = m2();
        let qa_b = row(m2());
        Self { token_emb, position_emb, segment_emb, layers, qa_w, qa_b }
    }

    /// Flat views of every tensor in canonical order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.token_emb.as_slice().unwrap(),
            self.position_emb.as_slice().unwrap(),
            self.segment_emb.as_slice().unwrap(),
        ];
        for l in &self.layers {
            out.extend([
                l.wq.as_slice().unwrap(),
                l.bq.as_slice().unwrap(),
                l.wk.as_slice().unwrap(),
                l.bk.as_slice().unwrap(),
                l.wv.as_slice().unwrap(),
                l.bv.as_slice().unwrap(),
                l.wo.as_slice().unwrap(),
                l.bo.as_slice().unwrap(),
                l.ln1_gain.as_slice().unwrap(),
                l.ln1_bias.as_slice().unwrap(),
                l.w1.as_slice().unwrap(),
                l.b1.as_slice().unwrap(),
                l.w2.as_slice().unwrap(),
                l.b2.as_slice().unwrap(),
                l.ln2_gain.as_slice().unwrap(),
                l.ln2_bias.as_slice().unwrap(),
            ]);
        }
        out.push(self.qa_w.as_slice().unwrap());
        out.push(self.qa_b.as_slice().unwrap());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.token_emb.as_slice_mut().unwrap(),
            self.position_emb.as_slice_mut().unwrap(),
            self.segment_emb.as_slice_mut().unwrap(),
        ];
        for l in &mut self.layers {
            out.extend([
                l.wq.as_slice_mut().unwrap(),
                l.bq.as_slice_mut().unwrap(),
                l.wk.as_slice_mut().unwrap(),
                l.bk.as_slice_mut().unwrap(),
                l.wv.as_slice_mut().unwrap(),
                l.bv.as_slice_mut().unwrap(),
                l.wo.as_slice_mut().unwrap(),
                l.bo.as_slice_mut().unwrap(),
                l.ln1_gain.as_slice_mut().unwrap(),
                l.ln1_bias.as_slice_mut().unwrap(),
                l.w1.as_slice_mut().unwrap(),
                l.b1.as_slice_mut().unwrap(),
                l.w2.as_slice_mut().unwrap(),
                l.b2.as_slice_mut().unwrap(),
                l.ln2_gain.as_slice_mut().unwrap(),
                l.ln2_bias.as_slice_mut().unwrap(),
            ]);
        }
        out.push(self.qa_w.as_slice_mut().unwrap());
        out.push(self.qa_b.as_slice_mut().unwrap());
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// Seeded Gaussian initialization (std 0.02); biases zero, layer-norm gains one.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> EncoderParams {
    let mut rng = rng::stream(seed, "init", 0);
    let normal = Normal::new(0.0, INIT_STD).unwrap();
    EncoderParams::from_flat(
        cfg,
        all_specs(cfg).into_iter().map(|(_, shape, init)| {
            let n: usize = shape.iter().product();
            match init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            }
        }),
    )
}
