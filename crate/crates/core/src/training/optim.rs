use crate::autodiff::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Adamax: Adam with the second moment replaced by an exponentially
/// weighted infinity norm.
#[derive(Debug, Clone)]
pub struct Adamax {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
}

impl Adamax {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Adamax {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            u: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter. Parameters without a gradient
    /// are treated as having a zero gradient. Fails, leaving all state
    /// untouched, if any gradient entry is not finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if let Some(name) = grads.first_non_finite(store) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let rate = self.lr / (1.0 - b1.powi(self.step as i32));
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.get(id).trainable {
                continue;
            }
            let g = grads.get(id).map(|g| g.data());
            let (m, u) = (&mut self.m[id.index()], &mut self.u[id.index()]);
            let theta = store.value_mut(id).data_mut();
            for k in 0..theta.len() {
                let gk = g.map_or(0.0, |g| g[k]);
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                u[k] = (b2 * u[k]).max(gk.abs());
                theta[k] -= rate * m[k] / (u[k] + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("theta", Tensor::scalar(v));
        s
    }

    fn grad_of(store: &ParamStore, g: f64) -> Gradients {
        // d/dθ (g θ) = g
        let mut tape = Tape::new(store);
        let id = store.id("theta").unwrap();
        let t = tape.param(id);
        let l = tape.scale(t, g);
        tape.backward(l).unwrap().into_params()
    }

    #[test]
    fn zero_gradient_keeps_value() {
        let mut s = scalar_store(1.0);
        let mut opt = Adamax::new(&s, 1e-3, 0.9, 0.999, 1e-8);
        let g = grad_of(&s, 0.0);
        opt.step(&mut s, &g).unwrap();
        assert_eq!(s.by_name("theta").unwrap().value.item(), 1.0);
    }

    #[test]
    fn hand_simulated_steps() {
        let mut s = scalar_store(1.0);
        let mut opt = Adamax::new(&s, 1e-3, 0.9, 0.999, 1e-8);
        let (mut theta, mut m, mut u) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = grad_of(&s, 1.0);
            opt.step(&mut s, &g).unwrap();
            m = 0.9 * m + 0.1;
            u = (0.999 * u).max(1.0);
            theta -= 1e-3 / (1.0 - 0.9f64.powi(t)) * m / (u + 1e-8);
            assert_eq!(s.by_name("theta").unwrap().value.item(), theta);
        }
    }

    #[test]
    fn first_step_value() {
        let mut s = scalar_store(1.0);
        let mut opt = Adamax::new(&s, 1e-3, 0.9, 0.999, 1e-8);
        let g = grad_of(&s, 1.0);
        opt.step(&mut s, &g).unwrap();
        assert!((s.by_name("theta").unwrap().value.item() - 0.999).abs() < 1e-10);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut s = ParamStore::new();
        let id = s.add_with("frozen", Tensor::scalar(2.0), false);
        let mut opt = Adamax::new(&s, 1.0, 0.9, 0.999, 1e-8);
        let g = Gradients::new(&s);
        opt.step(&mut s, &g).unwrap();
        assert_eq!(s.value(id).item(), 2.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = scalar_store(1.0);
        let mut opt = Adamax::new(&s, 1e-3, 0.9, 0.999, 1e-8);
        // MAX + MAX overflows to infinity
        let huge = grad_of(&s, f64::MAX);
        let mut g = huge.clone();
        g.merge(&huge);
        let err = opt.step(&mut s, &g).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(s.by_name("theta").unwrap().value.item(), 1.0);
        assert_eq!(opt.steps(), 0);
    }
}
