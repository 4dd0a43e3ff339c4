use super::{ModelParams, ParamGrads, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a list of tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u32,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn for_params(params: &ModelParams<T>) -> Self {
        Self::new(&params.tensors().map(<[T]>::len))
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }

    /// One Adam update. The L2 term `weight_decay · param` is added to the
    /// gradient before the moment updates.
    pub fn update(&mut self, cfg: &AdamConfig, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), self.m.len(), "adam: tensor count mismatch");
        assert_eq!(grads.len(), self.m.len(), "adam: gradient count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let (one, wd, lr, eps) = (
            T::one(),
            T::of(cfg.weight_decay),
            T::of(cfg.lr),
            T::of(cfg.eps),
        );
        let bc1 = one - T::of(cfg.beta1.powi(t));
        let bc2 = one - T::of(cfg.beta2.powi(t));
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k];
            assert_eq!(p.len(), g.len(), "adam: tensor {k} shape mismatch");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let grad = g[i] + wd * p[i];
                m[i] = b1 * m[i] + (one - b1) * grad;
                v[i] = b2 * v[i] + (one - b2) * grad * grad;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Adam step on the GCN parameters.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ParamGrads<T>,
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
) {
    let cfg = AdamConfig::new(lr, weight_decay);
    let g = grads.tensors();
    state.update(&cfg, &mut params.tensors_mut(), &g);
}
