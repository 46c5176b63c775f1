use rand::Rng;

use super::tensor::{Matrix, Scalar};
use crate::codec::VOCAB_SIZE;
use crate::features::CONDITIONING_DIM;

/// Dimensions of the network. The event embedding is `vocab × vocab`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub vocab: usize,
    pub hidden: usize,
    pub conditioning_dim: usize,
    pub layers: usize,
    pub dropout: f32,
}

impl ModelConfig {
    /// Full-size model conditioned on histogram and density rows.
    pub fn features() -> Self {
        ModelConfig {
            vocab: VOCAB_SIZE,
            hidden: 512,
            conditioning_dim: CONDITIONING_DIM,
            layers: 3,
            dropout: 0.3,
        }
    }

    /// Full-size baseline conditioned on a 4-way emotion one-hot.
    pub fn labels() -> Self {
        ModelConfig {
            conditioning_dim: 4,
            ..Self::features()
        }
    }

    pub fn with_hidden(self, hidden: usize) -> Self {
        ModelConfig { hidden, ..self }
    }

    pub fn input_dim(&self) -> usize {
        self.vocab + self.conditioning_dim
    }

    pub fn parameter_count(&self) -> usize {
        let h = self.hidden;
        // every GRU layer reads the hidden-sized output of the layer below
        let gru = self.layers * 3 * (h * h + h * h + h);
        self.vocab * self.vocab + self.input_dim() * h + h + gru + h * self.vocab + self.vocab
    }
}

/// One GRU layer: input weights `W_*` (`input × hidden`), recurrent weights
/// `U_*` (`hidden × hidden`) and a single bias per gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams<T> {
    pub w_r: Matrix<T>,
    pub w_z: Matrix<T>,
    pub w_h: Matrix<T>,
    pub u_r: Matrix<T>,
    pub u_z: Matrix<T>,
    pub u_h: Matrix<T>,
    pub b_r: Vec<T>,
    pub b_z: Vec<T>,
    pub b_h: Vec<T>,
}

impl<T: Scalar> GruLayerParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruLayerParams {
            w_r: Matrix::zeros(input, hidden),
            w_z: Matrix::zeros(input, hidden),
            w_h: Matrix::zeros(input, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_z: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_r: vec![T::ZERO; hidden],
            b_z: vec![T::ZERO; hidden],
            b_h: vec![T::ZERO; hidden],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_r.rows()
    }

    pub fn tensors(&self) -> [&[T]; 9] {
        [
            self.w_r.as_slice(),
            self.w_z.as_slice(),
            self.w_h.as_slice(),
            self.u_r.as_slice(),
            self.u_z.as_slice(),
            self.u_h.as_slice(),
            &self.b_r,
            &self.b_z,
            &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 9] {
        [
            self.w_r.as_mut_slice(),
            self.w_z.as_mut_slice(),
            self.w_h.as_mut_slice(),
            self.u_r.as_mut_slice(),
            self.u_z.as_mut_slice(),
            self.u_h.as_mut_slice(),
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_h,
        ]
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub embedding: Matrix<T>,
    pub fc_in_w: Matrix<T>,
    pub fc_in_b: Vec<T>,
    pub gru: Vec<GruLayerParams<T>>,
    pub fc_out_w: Matrix<T>,
    pub fc_out_b: Vec<T>,
}

const GRU_TENSOR_NAMES: [&str; 9] = ["w_r", "w_z", "w_h", "u_r", "u_z", "u_h", "b_r", "b_z", "b_h"];

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: ModelConfig) -> Self {
        let h = config.hidden;
        ModelParams {
            config,
            embedding: Matrix::zeros(config.vocab, config.vocab),
            fc_in_w: Matrix::zeros(config.input_dim(), h),
            fc_in_b: vec![T::ZERO; h],
            gru: (0..config.layers).map(|_| GruLayerParams::zeros(h, h)).collect(),
            fc_out_w: Matrix::zeros(h, config.vocab),
            fc_out_b: vec![T::ZERO; config.vocab],
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` per tensor, where `fan_in` is the number of
    /// inputs feeding the unit (hidden size for biases and recurrent weights).
    /// An embedding row is selected by a one-hot input, so each embedding
    /// output has a single active input and a fan-in of 1.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        let fan_ins = p.fan_ins();
        for (t, fan_in) in p.tensors_mut().into_iter().zip(fan_ins) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in t.iter_mut() {
                *v = T::from_f64(rng.gen_range(-bound..bound));
            }
        }
        p
    }

    fn fan_ins(&self) -> Vec<usize> {
        let c = &self.config;
        let h = c.hidden;
        let mut v = vec![1, c.input_dim(), c.input_dim()];
        for layer in &self.gru {
            let i = layer.input_dim();
            v.extend([i, i, i, h, h, h, h, h, h]);
        }
        v.extend([h, h]);
        v
    }

    /// Tensors in checkpoint order: embedding, fc_in weight and bias, each GRU
    /// layer's `W_r W_z W_h U_r U_z U_h b_r b_z b_h`, then fc_out weight and bias.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = vec![self.embedding.as_slice(), self.fc_in_w.as_slice(), &self.fc_in_b];
        for layer in &self.gru {
            v.extend(layer.tensors());
        }
        v.push(self.fc_out_w.as_slice());
        v.push(&self.fc_out_b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = vec![
            self.embedding.as_mut_slice(),
            self.fc_in_w.as_mut_slice(),
            &mut self.fc_in_b,
        ];
        for layer in &mut self.gru {
            v.extend(layer.tensors_mut());
        }
        v.push(self.fc_out_w.as_mut_slice());
        v.push(&mut self.fc_out_b);
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v = vec!["embedding".to_string(), "fc_in.w".into(), "fc_in.b".into()];
        for l in 0..self.gru.len() {
            v.extend(GRU_TENSOR_NAMES.iter().map(|n| format!("gru{l}.{n}")));
        }
        v.push("fc_out.w".into());
        v.push("fc_out.b".into());
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (d, s) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::tensor::add_assign(d, s);
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.config);
        for (d, s) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (a, &b) in d.iter_mut().zip(s) {
                *a = U::from_f64(b.to_f64());
            }
        }
        out
    }
}
