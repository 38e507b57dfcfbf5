/// AdamW with decoupled weight decay:
/// `p ← p·(1 − lr·wd) − lr·m̂/(√v̂ + ε)`.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Round updated parameters to `f32` so they survive `f32` serialization bitwise.
    pub round_to_f32: bool,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            round_to_f32: false,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn rounding_to_f32(mut self) -> Self {
        self.round_to_f32 = true;
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over parallel lists of parameter and gradient tensors.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        let frozen = self.lr == 0.0;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "tensor {k} shape mismatch");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                if frozen {
                    continue;
                }
                let mut x = p[i] * decay - self.lr * m_hat / (v_hat.sqrt() + self.eps);
                if self.round_to_f32 {
                    x = f64::from(x as f32);
                }
                p[i] = x;
            }
        }
    }
}
