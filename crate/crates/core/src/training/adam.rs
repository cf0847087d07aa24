use tch::Tensor;

/// Adam with bias correction and no weight decay, over an explicit list of
/// parameters. Moments are plain tensors so they can be checkpointed.
#[derive(Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub t: i64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[Tensor], beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
        }
    }

    /// One in-place update of `params` along `grads` at learning rate `lr`.
    /// Undefined gradients count as zero.
    pub fn step(&mut self, params: &[Tensor], grads: &[Tensor], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        tch::no_grad(|| {
            for (((p, g), m), v) in params.iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                let g = if g.defined() { g.shallow_clone() } else { p.zeros_like() };
                let g = &g;
                let _ = m.g_mul_scalar_(self.beta1).g_add_(&(g * (1.0 - self.beta1)));
                let _ = v.g_mul_scalar_(self.beta2).g_add_(&(g.square() * (1.0 - self.beta2)));
                let denom = (&*v / c2).sqrt() + self.eps;
                let update = (&*m / c1) / denom * lr;
                let mut p = p.shallow_clone();
                let _ = p.g_sub_(&update);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Kind;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let p = Tensor::from_slice(&[1.0f64, -2.0, 0.5]);
        let g = Tensor::from_slice(&[0.3f64, -4.0, 0.0]);
        let mut adam = Adam::new(&[p.shallow_clone()], 0.5, 0.999, 1e-8);
        adam.step(&[p.shallow_clone()], &[g], 0.1);
        let got: Vec<f64> = p.try_into().unwrap();
        assert!((got[0] - 0.9).abs() < 1e-6);
        assert!((got[1] + 1.9).abs() < 1e-6);
        assert_eq!(got[2], 0.5);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn matches_scalar_reference() {
        let (b1, b2, eps, lr) = (0.5, 0.999, 1e-8, 1e-2);
        let grads = [0.7, -0.2, 1.5, 0.1, -0.9];
        let p = Tensor::from_slice(&[0.25f64]);
        let mut adam = Adam::new(&[p.shallow_clone()], b1, b2, eps);
        let (mut x, mut m, mut v) = (0.25f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            adam.step(&[p.shallow_clone()], &[Tensor::from_slice(&[g])], lr);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p.double_value(&[0]) - x).abs() < 1e-12);
        assert_eq!(adam.m[0].kind(), Kind::Double);
    }
}
