use crate::error::Result;
use crate::params::ParamSet;

use super::config::OptimizerKind;

/// Scales `grads` to at most `max_norm` in global L2 norm, keeping direction:
/// `g * min(1, max_norm / |g|)`. Returns the norm before clipping.
pub fn clip_grad_norm<P: ParamSet>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.norm_sq().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub enum Optimizer<P> {
    Sgd,
    Adam { m: P, v: P, step: i32 },
}

impl<P: ParamSet> Optimizer<P> {
    pub fn new(kind: OptimizerKind, params: &P) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: params.zeros_like(),
                v: params.zeros_like(),
                step: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => params.add_scaled(-lr, grads),
            Optimizer::Adam { m, v, step } => {
                *step += 1;
                let bc1 = 1.0 - BETA1.powi(*step);
                let bc2 = 1.0 - BETA2.powi(*step);
                let g = grads.tensors();
                let mut ms = m.tensors_mut();
                let mut vs = v.tensors_mut();
                for (k, (_, p)) in params.tensors_mut().into_iter().enumerate() {
                    let (g, m, v) = (g[k].1, &mut *ms[k].1, &mut *vs[k].1);
                    for i in 0..p.len() {
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::LstmParams;
    use crate::math::Rng;

    #[test]
    fn clipping_preserves_direction() {
        let mut rng = Rng::new(3);
        let g = LstmParams::init(5, 3, &mut rng).unwrap();
        let norm = g.norm_sq().sqrt();
        let mut clipped = g.clone();
        let before = clip_grad_norm(&mut clipped, norm / 4.0);
        assert_eq!(before, norm);
        assert!((clipped.norm_sq().sqrt() - norm / 4.0).abs() < 1e-12);
        for (a, b) in g.flatten().iter().zip(clipped.flatten().iter()) {
            assert!((a * 0.25 - b).abs() < 1e-15);
        }

        let mut untouched = g.clone();
        clip_grad_norm(&mut untouched, norm * 2.0);
        assert_eq!(untouched, g);
    }

    #[test]
    fn sgd_step() {
        let mut rng = Rng::new(4);
        let mut p = LstmParams::init(4, 2, &mut rng).unwrap();
        let before = p.clone();
        let g = p.clone();
        Optimizer::new(OptimizerKind::Sgd, &p).step(&mut p, &g, 0.5).unwrap();
        for (a, b) in before.flatten().iter().zip(p.flatten().iter()) {
            assert!((a * 0.5 - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut rng = Rng::new(5);
        let mut p = LstmParams::init(4, 2, &mut rng).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.b[0] = 3.0;
        g.b[1] = -0.01;
        let mut opt = Optimizer::new(OptimizerKind::Adam, &p);
        opt.step(&mut p, &g, 0.01).unwrap();
        assert!((before.b[0] - p.b[0] - 0.01).abs() < 1e-9);
        assert!((p.b[1] - before.b[1] - 0.01).abs() < 1e-6);
        assert_eq!(before.b[2], p.b[2]);
    }
}
