use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: each step also applies `θ -= lr · weight_decay · θ`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-5,
        }
    }
}

/// Adam with bias correction. Moments are allocated lazily to match the
/// parameter shapes on the first step.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads` is aligned with `params` (see
    /// [`crate::Gradients::param_grads`]).
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        if self.first.len() != params.len() {
            self.first = params
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.shape()))
                .collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let theta = params.get_mut(id).data_mut();
            for k in 0..theta.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                theta[k] -= lr * (mhat / (vhat.sqrt() + eps) + weight_decay * theta[k]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::row(values)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut params = store(vec![0.5, -1.5, 2.0]);
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        for _ in 0..3 {
            adam.step(&mut params, &[Tensor::zeros(&[1, 3])]);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 1e-3;
        let mut params = store(vec![0.0, 0.0, 0.0]);
        let mut adam = Adam::new(AdamConfig {
            lr,
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        adam.step(&mut params, &[Tensor::row(vec![0.3, -2.0, 1e-2])]);
        let got = params.get(params.id("w").unwrap()).data().to_vec();
        // m̂ = g, v̂ = g² so the step is -lr·g/(|g| + ε)
        for (x, s) in got.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - s * lr).abs() < lr * 1e-5, "{x}");
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params = store(vec![0.1, 0.2]);
            let mut adam = Adam::new(AdamConfig::default());
            for k in 0..5 {
                let g = Tensor::row(vec![0.01 * k as f64, -0.3]);
                adam.step(&mut params, &[g]);
            }
            params
        };
        let (a, b) = (run(), run());
        let bits = |p: &ParamStore| -> Vec<u64> {
            p.iter()
                .flat_map(|(_, _, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}
