use super::params::ModelParams;
use super::tensor::Scalar;

pub const DEFAULT_LR: f64 = 2e-4;

/// Adam with bias correction. One pair of moment buffers per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments shaped like `shapes` (one length per tensor).
    pub fn new(shapes: &[usize], lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: shapes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            v: shapes.iter().map(|&n| vec![T::ZERO; n]).collect(),
        }
    }

    pub fn for_params(params: &ModelParams<T>, lr: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::new(&shapes, lr)
    }

    /// Applies one update to `params` given matching `grads`.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), self.m.len(), "tensor count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        // lr·m̂/(√v̂+ε) = (lr/c1)·m / (√v/√c2 + ε)
        let step_size = T::from_f64(self.lr / c1);
        let inv_sqrt_c2 = T::from_f64(1.0 / c2.sqrt());
        let eps = T::from_f64(self.epsilon);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), g.len(), "gradient shape");
            for i in 0..p.len() {
                m[i] = b1 * m[i] + ob1 * g[i];
                v[i] = b2 * v[i] + ob2 * g[i] * g[i];
                p[i] -= step_size * m[i] / (v[i].sqrt() * inv_sqrt_c2 + eps);
            }
        }
    }
}

pub fn adam_step<T: Scalar>(params: &mut ModelParams<T>, grads: &ModelParams<T>, state: &mut AdamState<T>) {
    state.update(&mut params.tensors_mut(), &grads.tensors());
}
