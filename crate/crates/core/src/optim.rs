//! Adam over a [`ParamStore`].

use ndarray::{Array2, Zip};

use crate::autograd::{Gradients, ParamStore, Scalar};

#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Array2<F>>,
    second: Vec<Array2<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(params: &ParamStore<F>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|(_, _, v)| Array2::zeros(v.dim())).collect::<Vec<_>>();
        Self { lr, beta1, beta2, eps, step: 0, first: zeros(), second: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Parameters without a gradient are treated as having a
    /// zero gradient, so their moments still decay.
    pub fn step(&mut self, params: &mut ParamStore<F>, grads: &Gradients<F>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let c1 = F::one() - F::of(self.beta1.powi(t));
        let c2 = F::one() - F::of(self.beta2.powi(t));
        let lr = F::of(self.lr);
        let eps = F::of(self.eps);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let k = id.0;
            let mut g = Array2::zeros(params.get(id).dim());
            if let Some(pg) = grads.get(id) {
                pg.add_to(&mut g);
            }
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            Zip::from(params.get_mut(id)).and(m).and(v).and(&g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", ndarray::array![[1.0, -2.0]]);
        let mut adam = Adam::new(&store, 0.1, 0.9, 0.999, 1e-8);
        let grads = {
            let mut tape = Tape::new(&store);
            let v = tape.param(w);
            let loss = tape.sum(v);
            tape.backward(loss)
        };
        adam.step(&mut store, &grads);
        let p = store.get(w);
        assert!((p[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p[[0, 1]] + 2.1).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", ndarray::array![[3.0]]);
        let mut adam = Adam::new(&store, 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let grads = {
                let mut tape = Tape::new(&store);
                let v = tape.param(w);
                let sq = tape.mul(v, v);
                let loss = tape.sum(sq);
                tape.backward(loss)
            };
            adam.step(&mut store, &grads);
        }
        assert!(store.get(w)[[0, 0]].abs() < 1e-2);
    }
}
