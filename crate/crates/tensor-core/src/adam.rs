//! Adam optimizer with bias correction.

use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::TensorError;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimizer state: first/second moment per parameter plus the step count.
pub struct AdamState<F: Scalar> {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &ParamSet<F>, cfg: AdamConfig) -> Self {
        let m = params.tensors().map(|t| vec![F::zero(); t.len()]).collect::<Vec<_>>();
        let v = m.clone();
        AdamState { cfg, t: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one bias-corrected Adam update in place.
    ///
    /// `grads` must align with the canonical parameter order. A NaN gradient
    /// aborts the step, naming the offending parameter.
    pub fn step(&mut self, params: &ParamSet<F>, grads: &[Vec<F>]) -> Result<(), TensorError> {
        assert_eq!(grads.len(), self.m.len(), "gradient list does not match parameter set");
        for ((name, _), g) in params.iter().zip(grads) {
            if g.iter().any(|v| v.is_nan()) {
                return Err(TensorError::NanGradient { name: name.clone() });
            }
        }
        self.t += 1;
        let b1 = F::from_f64(self.cfg.beta1);
        let b2 = F::from_f64(self.cfg.beta2);
        let one = F::one();
        let lr = F::from_f64(self.cfg.lr);
        let eps = F::from_f64(self.cfg.epsilon);
        let bc1 = F::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        for (((_, p), g), (m, v)) in
            params.iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            p.update_data(|data| {
                for i in 0..data.len() {
                    let gi = g[i];
                    m[i] = b1 * m[i] + (one - b1) * gi;
                    v[i] = b2 * v[i] + (one - b2) * gi * gi;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    data[i] = data[i] - lr * mhat / (vhat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }

    /// Moments in canonical order, for checkpointing.
    pub fn moments(&self) -> (&[Vec<F>], &[Vec<F>]) {
        (&self.m, &self.v)
    }

    pub fn restore_moments(
        &mut self,
        m: Vec<Vec<F>>,
        v: Vec<Vec<F>>,
        t: u64,
    ) -> Result<(), TensorError> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(TensorError::Checkpoint("moment count mismatch on restore".into()));
        }
        for (cur, new) in self.m.iter().zip(&m).chain(self.v.iter().zip(&v)) {
            if cur.len() != new.len() {
                return Err(TensorError::Checkpoint("moment length mismatch on restore".into()));
            }
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }

    /// Round moments to f32 precision (see [`ParamSet::quantize_to_f32`]).
    pub fn quantize_to_f32(&mut self) {
        for buf in self.m.iter_mut().chain(self.v.iter_mut()) {
            for x in buf.iter_mut() {
                *x = F::from_f64(x.as_f64() as f32 as f64);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param(vals: Vec<f64>) -> ParamSet<f64> {
        ParamSet::new(vec![("p".into(), Tensor::param(vals.clone(), &[vals.len()]).unwrap())])
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let params = one_param(vec![0.3, -0.7]);
        let mut st = AdamState::new(&params, AdamConfig::default());
        st.step(&params, &[vec![0.0, 0.0]]).unwrap();
        let p = params.get("p").unwrap().to_vec();
        assert_eq!(p, vec![0.3, -0.7]);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // Bias correction makes m_hat = v_hat = 1 on the first step, so the
        // update is -lr / (1 + eps) for every coordinate.
        let params = one_param(vec![1.0, 2.0, 3.0]);
        let mut st = AdamState::new(&params, AdamConfig::default());
        st.step(&params, &[vec![1.0, 1.0, 1.0]]).unwrap();
        let p = params.get("p").unwrap().to_vec();
        for (after, before) in p.iter().zip([1.0, 2.0, 3.0]) {
            let delta = after - before;
            assert!((delta + 1e-3).abs() < 1e-9, "delta {delta}");
        }
    }

    #[test]
    fn nan_gradient_aborts_naming_parameter() {
        let params = one_param(vec![1.0]);
        let mut st = AdamState::new(&params, AdamConfig::default());
        let err = st.step(&params, &[vec![f64::NAN]]).unwrap_err();
        assert!(err.to_string().contains("`p`"), "{err}");
        // Step must not have been applied.
        assert_eq!(params.get("p").unwrap().to_vec(), vec![1.0]);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn moments_decay_toward_zero_under_zero_gradient() {
        let params = one_param(vec![1.0]);
        let mut st = AdamState::new(&params, AdamConfig::default());
        st.step(&params, &[vec![1.0]]).unwrap();
        let m_after_one = st.moments().0[0][0];
        for _ in 0..50 {
            st.step(&params, &[vec![0.0]]).unwrap();
        }
        let m_after_many = st.moments().0[0][0];
        assert!(m_after_many.abs() < m_after_one.abs() * 1e-2);
    }

    /// Two constant-gradient steps against a scalar transcription of the
    /// Adam recurrences.
    #[test]
    fn matches_scalar_reference_for_two_steps() {
        let g = 0.37;
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let mut p_ref = 0.5;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2u32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1f64_pow(b1, t));
            let vhat = v / (1.0 - b1f64_pow(b2, t));
            p_ref -= lr * mhat / (vhat.sqrt() + eps);
        }

        let params = one_param(vec![0.5]);
        let mut st = AdamState::new(&params, AdamConfig::default());
        st.step(&params, &[vec![g]]).unwrap();
        st.step(&params, &[vec![g]]).unwrap();
        let p = params.get("p").unwrap().to_vec()[0];
        assert!((p - p_ref).abs() < 1e-15, "impl {p} vs oracle {p_ref}");
    }

    fn b1f64_pow(b: f64, t: u32) -> f64 {
        b.powi(t as i32)
    }
}
