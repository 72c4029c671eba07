//! Adam with bias correction, plus sparse row updates for embeddings.

/// Step size and moment decay rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyperParams {
    pub alpha: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamHyperParams {
    fn default() -> Self {
        AdamHyperParams {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn apply(&mut self, hp: &AdamHyperParams, params: &mut [f32], grads: &[f32], offset: usize) {
        let bc1 = 1.0 - (hp.beta1 as f64).powi(self.t as i32) as f32;
        let bc2 = 1.0 - (hp.beta2 as f64).powi(self.t as i32) as f32;
        for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let i = offset + k;
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g;
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            *p -= hp.alpha * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }

    /// Dense update of the whole tensor. Advances the step counter.
    pub fn update(&mut self, hp: &AdamHyperParams, params: &mut [f32], grads: &[f32]) {
        assert_eq!(params.len(), self.m.len(), "adam shape mismatch");
        assert_eq!(grads.len(), self.m.len(), "adam shape mismatch");
        self.t += 1;
        self.apply(hp, params, grads, 0);
    }

    /// Sparse update: only the given rows of a `rows × dim` tensor move;
    /// untouched rows keep their moments. Advances the step counter once.
    pub fn update_rows(
        &mut self,
        hp: &AdamHyperParams,
        params: &mut [f32],
        dim: usize,
        row_grads: &[(usize, Vec<f32>)],
    ) {
        assert_eq!(params.len(), self.m.len(), "adam shape mismatch");
        self.t += 1;
        for (row, grad) in row_grads {
            assert_eq!(grad.len(), dim, "adam row width mismatch");
            let offset = row * dim;
            let slice = &mut params[offset..offset + dim];
            self.apply(hp, slice, grad, offset);
        }
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(tensors: &mut [&mut [f32]], max_norm: f32) -> f32 {
    let mut sum = 0.0f32;
    for t in tensors.iter() {
        for &g in t.iter() {
            sum += g * g;
        }
    }
    let norm = sum.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in tensors.iter_mut() {
            for g in t.iter_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_alpha() {
        // At t = 1 the bias corrections cancel: Δ = α·g/(|g|+ε) ≈ α·sign(g).
        let hp = AdamHyperParams::default();
        let mut state = AdamState::new(3);
        let mut params = vec![1.0f32, -2.0, 0.5];
        let grads = vec![0.3f32, -4.0, 1e-3];
        let before = params.clone();
        state.update(&hp, &mut params, &grads);
        for ((p, b), g) in params.iter().zip(&before).zip(&grads) {
            let step = b - p;
            assert!(
                (step.abs() - hp.alpha).abs() < 1e-6,
                "step {step} for grad {g}"
            );
            assert_eq!(step.signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_from_fresh_state_changes_nothing() {
        let hp = AdamHyperParams::default();
        let mut state = AdamState::new(2);
        let mut params = vec![0.7f32, -0.3];
        state.update(&hp, &mut params, &[0.0, 0.0]);
        assert_eq!(params, vec![0.7, -0.3]);
    }

    #[test]
    fn two_steps_match_hand_arithmetic() {
        let hp = AdamHyperParams::default();
        let mut state = AdamState::new(1);
        let mut params = vec![1.0f32];

        state.update(&hp, &mut params, &[1.0]);
        state.update(&hp, &mut params, &[0.5]);

        // Worked out from the update rule with g1 = 1, g2 = 0.5:
        let m1 = 0.1f64;
        let v1 = 0.001f64;
        let p1 = 1.0 - 0.001 * (m1 / 0.1) / ((v1 / 0.001).sqrt() + 1e-8);
        let m2 = 0.9 * m1 + 0.1 * 0.5;
        let v2 = 0.999 * v1 + 0.001 * 0.25;
        let m2_hat = m2 / (1.0 - 0.81);
        let v2_hat = v2 / (1.0 - 0.998001);
        let p2 = p1 - 0.001 * m2_hat / (v2_hat.sqrt() + 1e-8);
        assert!(
            (params[0] as f64 - p2).abs() < 1e-6,
            "{} vs {p2}",
            params[0]
        );
    }

    #[test]
    fn sparse_rows_leave_other_rows_alone() {
        let hp = AdamHyperParams::default();
        let mut state = AdamState::new(6);
        let mut params = vec![1.0f32; 6];
        state.update_rows(&hp, &mut params, 2, &[(2, vec![1.0, -1.0])]);
        assert_eq!(&params[..4], &[1.0, 1.0, 1.0, 1.0]);
        assert!(params[4] < 1.0 && params[5] > 1.0);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut a = vec![3.0f32, 0.0];
        let mut b = vec![0.0f32, 4.0];
        {
            let mut tensors: Vec<&mut [f32]> = vec![&mut a, &mut b];
            let norm = clip_global_norm(&mut tensors, 2.5);
            assert!((norm - 5.0).abs() < 1e-6);
        }
        let new_norm = (a.iter().chain(&b).map(|g| g * g).sum::<f32>()).sqrt();
        assert!((new_norm - 2.5).abs() < 1e-5);

        let mut c = vec![0.1f32];
        let mut tensors: Vec<&mut [f32]> = vec![&mut c];
        clip_global_norm(&mut tensors, 2.5);
        assert_eq!(c, vec![0.1]);
    }
}
