//! Forward pass, exact reverse-mode gradients, and single-step inference for
//! the embedding → FC/ReLU → stacked GRU → linear head network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::loss::{cross_entropy, softmax_f64};
use super::params::{GruLayerParams, ModelParams};
use super::tensor::{add_assign, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("event index {index} outside vocabulary of {vocab}")]
    IndexOutOfRange { index: usize, vocab: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Dropout between GRU layers. Active dropout draws its masks from a
/// generator seeded with the given value, so a pass can be replayed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dropout {
    Off,
    On { seed: u64 },
}

/// Scratch buffers for one GRU step.
struct GateBuffers<T> {
    r: Vec<T>,
    z: Vec<T>,
    hh: Vec<T>,
    rh: Vec<T>,
}

impl<T: Scalar> GateBuffers<T> {
    fn new(hidden: usize) -> Self {
        GateBuffers {
            r: vec![T::ZERO; hidden],
            z: vec![T::ZERO; hidden],
            hh: vec![T::ZERO; hidden],
            rh: vec![T::ZERO; hidden],
        }
    }
}

fn gru_step<T: Scalar>(p: &GruLayerParams<T>, x: &[T], h_prev: &[T], g: &mut GateBuffers<T>, h_out: &mut [T]) {
    g.r.copy_from_slice(&p.b_r);
    p.w_r.vec_mul_acc(x, &mut g.r);
    p.u_r.vec_mul_acc(h_prev, &mut g.r);
    g.z.copy_from_slice(&p.b_z);
    p.w_z.vec_mul_acc(x, &mut g.z);
    p.u_z.vec_mul_acc(h_prev, &mut g.z);
    for j in 0..h_prev.len() {
        g.r[j] = g.r[j].sigmoid();
        g.z[j] = g.z[j].sigmoid();
        g.rh[j] = g.r[j] * h_prev[j];
    }
    g.hh.copy_from_slice(&p.b_h);
    p.w_h.vec_mul_acc(x, &mut g.hh);
    p.u_h.vec_mul_acc(&g.rh, &mut g.hh);
    for j in 0..h_prev.len() {
        g.hh[j] = g.hh[j].tanh();
        h_out[j] = (T::ONE - g.z[j]) * h_prev[j] + g.z[j] * g.hh[j];
    }
}

/// One GRU update:
/// `r = σ(x·W_r + h·U_r + b_r)`, `z = σ(x·W_z + h·U_z + b_z)`,
/// `h̃ = tanh(x·W_h + (r⊙h)·U_h + b_h)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_cell<T: Scalar>(x: &[T], h_prev: &[T], p: &GruLayerParams<T>) -> Vec<T> {
    assert_eq!(x.len(), p.input_dim(), "gru_cell input size");
    assert_eq!(h_prev.len(), p.hidden_dim(), "gru_cell hidden size");
    let mut g = GateBuffers::new(p.hidden_dim());
    let mut h = vec![T::ZERO; p.hidden_dim()];
    gru_step(p, x, h_prev, &mut g, &mut h);
    h
}

#[derive(Debug, Clone)]
struct LayerTrace<T> {
    /// steps × input
    input: Vec<T>,
    /// (steps + 1) × hidden; row 0 is the zero initial state
    h: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    hh: Vec<T>,
    /// dropout mask applied to this layer's output, steps × hidden
    mask: Option<Vec<T>>,
}

/// Activations recorded by [`forward`], consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    steps: usize,
    indices: Vec<usize>,
    /// steps × input_dim: embedding row followed by the conditioning row
    fc_input: Vec<T>,
    /// steps × hidden, before ReLU
    fc_pre: Vec<T>,
    layers: Vec<LayerTrace<T>>,
    /// steps × vocab
    pub logits: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn logits_row(&self, t: usize) -> &[T] {
        let v = self.logits.len() / self.steps.max(1);
        &self.logits[t * v..(t + 1) * v]
    }
}

fn check_inputs<T: Scalar>(params: &ModelParams<T>, indices: &[usize], conditioning: &[T]) -> Result<(), ModelError> {
    let c = &params.config;
    if let Some(&index) = indices.iter().find(|&&i| i >= c.vocab) {
        return Err(ModelError::IndexOutOfRange { index, vocab: c.vocab });
    }
    if conditioning.len() != indices.len() * c.conditioning_dim {
        return Err(ModelError::ShapeMismatch(format!(
            "conditioning has {} values, expected {} steps × {}",
            conditioning.len(),
            indices.len(),
            c.conditioning_dim
        )));
    }
    Ok(())
}

/// Runs the network over a sequence from a zero hidden state.
///
/// `conditioning` holds one row of `conditioning_dim` values per step. Logits
/// at step `t` score the event that follows `indices[t]`.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    indices: &[usize],
    conditioning: &[T],
    dropout: Dropout,
) -> Result<ForwardTrace<T>, ModelError> {
    check_inputs(params, indices, conditioning)?;
    let c = params.config;
    let (steps, hidden, vocab, cdim, in_dim) = (indices.len(), c.hidden, c.vocab, c.conditioning_dim, c.input_dim());

    let mut fc_input = vec![T::ZERO; steps * in_dim];
    let mut fc_pre = vec![T::ZERO; steps * hidden];
    let mut layer_in = vec![T::ZERO; steps * hidden];
    for t in 0..steps {
        let u = &mut fc_input[t * in_dim..(t + 1) * in_dim];
        u[..vocab].copy_from_slice(params.embedding.row(indices[t]));
        u[vocab..].copy_from_slice(&conditioning[t * cdim..(t + 1) * cdim]);
        let a = &mut fc_pre[t * hidden..(t + 1) * hidden];
        a.copy_from_slice(&params.fc_in_b);
        params.fc_in_w.vec_mul_acc(u, a);
        for (x, &v) in layer_in[t * hidden..(t + 1) * hidden].iter_mut().zip(a.iter()) {
            *x = if v > T::ZERO { v } else { T::ZERO };
        }
    }

    let mut rng = match dropout {
        Dropout::On { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Dropout::Off => None,
    };
    let keep = 1.0 - c.dropout as f64;
    let keep_scale = T::from_f64(1.0 / keep);

    let mut layers = Vec::with_capacity(c.layers);
    let mut g = GateBuffers::new(hidden);
    for (l, p) in params.gru.iter().enumerate() {
        let mut h = vec![T::ZERO; (steps + 1) * hidden];
        let mut r = vec![T::ZERO; steps * hidden];
        let mut z = vec![T::ZERO; steps * hidden];
        let mut hh = vec![T::ZERO; steps * hidden];
        for t in 0..steps {
            let x = &layer_in[t * hidden..(t + 1) * hidden];
            let (prev, next) = h.split_at_mut((t + 1) * hidden);
            gru_step(p, x, &prev[t * hidden..], &mut g, &mut next[..hidden]);
            r[t * hidden..(t + 1) * hidden].copy_from_slice(&g.r);
            z[t * hidden..(t + 1) * hidden].copy_from_slice(&g.z);
            hh[t * hidden..(t + 1) * hidden].copy_from_slice(&g.hh);
        }
        let is_last = l + 1 == c.layers;
        let mask = match rng.as_mut() {
            Some(rng) if !is_last && c.dropout > 0.0 => Some(
                (0..steps * hidden)
                    .map(|_| if rng.gen::<f64>() < keep { keep_scale } else { T::ZERO })
                    .collect::<Vec<T>>(),
            ),
            _ => None,
        };
        let mut output = h[hidden..].to_vec();
        if let Some(m) = &mask {
            for (o, &k) in output.iter_mut().zip(m) {
                *o *= k;
            }
        }
        let input = std::mem::replace(&mut layer_in, output);
        layers.push(LayerTrace { input, h, r, z, hh, mask });
    }

    let mut logits = vec![T::ZERO; steps * vocab];
    for t in 0..steps {
        let row = &mut logits[t * vocab..(t + 1) * vocab];
        row.copy_from_slice(&params.fc_out_b);
        params.fc_out_w.vec_mul_acc(&layer_in[t * hidden..(t + 1) * hidden], row);
    }

    Ok(ForwardTrace {
        steps,
        indices: indices.to_vec(),
        fc_input,
        fc_pre,
        layers,
        logits,
    })
}

/// Logits only, without dropout.
pub fn predict<T: Scalar>(params: &ModelParams<T>, indices: &[usize], conditioning: &[T]) -> Result<Vec<T>, ModelError> {
    forward(params, indices, conditioning, Dropout::Off).map(|t| t.logits)
}

/// Accumulates `scale ×` the gradient of the mean cross-entropy of `trace`
/// against `targets` into `grads`. Returns the loss.
pub fn backward_into<T: Scalar>(
    params: &ModelParams<T>,
    trace: &ForwardTrace<T>,
    targets: &[usize],
    scale: f64,
    grads: &mut ModelParams<T>,
) -> Result<f64, ModelError> {
    let c = params.config;
    let (steps, hidden, vocab, in_dim) = (trace.steps, c.hidden, c.vocab, c.input_dim());
    if targets.len() != steps {
        return Err(ModelError::ShapeMismatch(format!("{} targets for {steps} steps", targets.len())));
    }
    if let Some(&index) = targets.iter().find(|&&i| i >= vocab) {
        return Err(ModelError::IndexOutOfRange { index, vocab });
    }
    let loss = cross_entropy(&trace.logits, vocab, targets)?;
    if steps == 0 {
        return Ok(loss);
    }

    // output head
    let coeff = scale / steps as f64;
    let top = trace.layers.last().expect("at least one GRU layer");
    let mut dh_ext = vec![T::ZERO; steps * hidden];
    let mut dlogits = vec![T::ZERO; vocab];
    for t in 0..steps {
        let probs = softmax_f64(trace.logits_row(t));
        for (d, p) in dlogits.iter_mut().zip(&probs) {
            *d = T::from_f64(p * coeff);
        }
        dlogits[targets[t]] -= T::from_f64(coeff);
        let h_t = &top.h[(t + 1) * hidden..(t + 2) * hidden];
        grads.fc_out_w.outer_acc(h_t, &dlogits);
        add_assign(&mut grads.fc_out_b, &dlogits);
        params.fc_out_w.mul_vec_acc(&dlogits, &mut dh_ext[t * hidden..(t + 1) * hidden]);
    }

    // GRU stack, top to bottom, each layer back through time
    let mut dh = vec![T::ZERO; hidden];
    let mut dhp = vec![T::ZERO; hidden];
    let mut da_r = vec![T::ZERO; hidden];
    let mut da_z = vec![T::ZERO; hidden];
    let mut da_h = vec![T::ZERO; hidden];
    let mut drh = vec![T::ZERO; hidden];
    let mut rh = vec![T::ZERO; hidden];
    for l in (0..c.layers).rev() {
        let p = &params.gru[l];
        let gp = &mut grads.gru[l];
        let tr = &trace.layers[l];
        let mut dx = vec![T::ZERO; steps * hidden];
        dhp.fill(T::ZERO);
        for t in (0..steps).rev() {
            let s = t * hidden..(t + 1) * hidden;
            for j in 0..hidden {
                dh[j] = dh_ext[t * hidden + j] + dhp[j];
            }
            let x = &tr.input[s.clone()];
            let hp = &tr.h[t * hidden..(t + 1) * hidden];
            let (r, z, hh) = (&tr.r[s.clone()], &tr.z[s.clone()], &tr.hh[s.clone()]);
            for j in 0..hidden {
                dhp[j] = dh[j] * (T::ONE - z[j]);
                da_h[j] = dh[j] * z[j] * (T::ONE - hh[j] * hh[j]);
                da_z[j] = dh[j] * (hh[j] - hp[j]) * z[j] * (T::ONE - z[j]);
                rh[j] = r[j] * hp[j];
            }
            gp.w_h.outer_acc(x, &da_h);
            gp.u_h.outer_acc(&rh, &da_h);
            add_assign(&mut gp.b_h, &da_h);
            drh.fill(T::ZERO);
            p.u_h.mul_vec_acc(&da_h, &mut drh);
            for j in 0..hidden {
                dhp[j] += drh[j] * r[j];
                da_r[j] = drh[j] * hp[j] * r[j] * (T::ONE - r[j]);
            }
            gp.w_z.outer_acc(x, &da_z);
            gp.u_z.outer_acc(hp, &da_z);
            add_assign(&mut gp.b_z, &da_z);
            p.u_z.mul_vec_acc(&da_z, &mut dhp);
            gp.w_r.outer_acc(x, &da_r);
            gp.u_r.outer_acc(hp, &da_r);
            add_assign(&mut gp.b_r, &da_r);
            p.u_r.mul_vec_acc(&da_r, &mut dhp);

            let dxt = &mut dx[s];
            p.w_r.mul_vec_acc(&da_r, dxt);
            p.w_z.mul_vec_acc(&da_z, dxt);
            p.w_h.mul_vec_acc(&da_h, dxt);
        }
        if l > 0 {
            if let Some(mask) = &trace.layers[l - 1].mask {
                for (d, &m) in dx.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
        }
        dh_ext = dx;
    }

    // FC + ReLU and embedding
    let mut dpre = vec![T::ZERO; hidden];
    let mut demb = vec![T::ZERO; vocab];
    for t in 0..steps {
        for j in 0..hidden {
            dpre[j] = if trace.fc_pre[t * hidden + j] > T::ZERO {
                dh_ext[t * hidden + j]
            } else {
                T::ZERO
            };
        }
        let u = &trace.fc_input[t * in_dim..(t + 1) * in_dim];
        grads.fc_in_w.outer_acc(u, &dpre);
        add_assign(&mut grads.fc_in_b, &dpre);
        demb.fill(T::ZERO);
        for (i, d) in demb.iter_mut().enumerate() {
            *d = super::tensor::dot(params.fc_in_w.row(i), &dpre);
        }
        add_assign(grads.embedding.row_mut(trace.indices[t]), &demb);
    }
    Ok(loss)
}

/// Gradients of the mean cross-entropy with respect to every parameter.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    trace: &ForwardTrace<T>,
    targets: &[usize],
) -> Result<ModelParams<T>, ModelError> {
    let mut grads = params.zeros_like();
    backward_into(params, trace, targets, 1.0, &mut grads)?;
    Ok(grads)
}

/// Forward and backward for one sequence.
pub fn loss_and_gradients<T: Scalar>(
    params: &ModelParams<T>,
    indices: &[usize],
    conditioning: &[T],
    targets: &[usize],
    dropout: Dropout,
) -> Result<(f64, ModelParams<T>), ModelError> {
    let trace = forward(params, indices, conditioning, dropout)?;
    let grads = backward(params, &trace, targets)?;
    let loss = cross_entropy(&trace.logits, params.config.vocab, targets)?;
    Ok((loss, grads))
}

/// Recurrent state carried across steps during generation.
#[derive(Debug, Clone)]
pub struct InferenceState<T> {
    hidden: Vec<Vec<T>>,
    scratch: Vec<T>,
}

impl<T: Scalar> InferenceState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let h = params.config.hidden;
        InferenceState {
            hidden: vec![vec![T::ZERO; h]; params.config.layers],
            scratch: vec![T::ZERO; h],
        }
    }

    pub fn hidden(&self, layer: usize) -> &[T] {
        &self.hidden[layer]
    }

    /// Advances one step without dropout and returns the next-event logits.
    pub fn step(&mut self, params: &ModelParams<T>, index: usize, conditioning: &[T]) -> Result<Vec<T>, ModelError> {
        check_inputs(params, &[index], conditioning)?;
        let c = params.config;
        let mut u = Vec::with_capacity(c.input_dim());
        u.extend_from_slice(params.embedding.row(index));
        u.extend_from_slice(conditioning);
        let mut x = params.fc_in_b.clone();
        params.fc_in_w.vec_mul_acc(&u, &mut x);
        for v in x.iter_mut() {
            if *v < T::ZERO {
                *v = T::ZERO;
            }
        }
        let mut g = GateBuffers::new(c.hidden);
        for (p, h) in params.gru.iter().zip(self.hidden.iter_mut()) {
            gru_step(p, &x, h, &mut g, &mut self.scratch);
            std::mem::swap(h, &mut self.scratch);
            x.copy_from_slice(h);
        }
        let mut logits = params.fc_out_b.clone();
        params.fc_out_w.vec_mul_acc(&x, &mut logits);
        Ok(logits)
    }
}
