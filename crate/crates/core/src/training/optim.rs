//! Decoupled-weight-decay adaptive optimizer and the learning-rate schedule.

/// Cosine-annealed learning rate with a fixed restart period in epochs:
/// `base * 0.5 * (1 + cos(pi * (epoch mod period) / period))`.
///
/// Epoch 0 of every period starts at `base`; the rate decays toward zero
/// until the next restart.
pub fn cosine_annealing_lr(base: f64, epoch: usize, period: usize) -> f64 {
    let period = period.max(1);
    let phase = (epoch % period) as f64 / period as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * phase).cos())
}

/// AdamW over a fixed set of flat parameter tensors.
///
/// Weight decay is decoupled (applied to the parameter directly, not through
/// the gradient moments). Frozen tensors are skipped entirely, so their bits
/// never change.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(tensor_sizes: &[usize], weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One update step. `params`, `grads` and `active` are indexed per tensor;
    /// inactive tensors are left untouched (state and parameters).
    pub fn step(&mut self, lr: f64, params: &mut [&mut [f64]], grads: &[&[f64]], active: &[bool]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        assert_eq!(active.len(), self.m.len());
        if lr == 0.0 {
            return;
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            if !active[idx] {
                continue;
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * param[i]);
            }
        }
    }
}
