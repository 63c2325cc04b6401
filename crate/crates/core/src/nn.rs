//! Parameterized building blocks: linear maps, dropout, and packed BiLSTMs.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{ParamId, ParamStore, Scalar, Tape, Var};

/// Uniform(-a, a) matrix with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier<F: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<F> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, a)
}

pub fn uniform<F: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize, a: f64) -> Array2<F> {
    Array2::from_shape_fn((rows, cols), |_| F::of(rng.gen_range(-a..a)))
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier(rng, input, output));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Array2::zeros((1, output))));
        Self { weight, bias }
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<'_, F>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let y = tape.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = tape.param(b);
                tape.add_row(y, b)
            }
            None => y,
        }
    }
}

/// Inverted dropout. A no-op without an RNG (evaluation) or with `p == 0`.
pub fn dropout<F: Scalar>(tape: &mut Tape<'_, F>, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Var {
    let Some(rng) = rng else { return x };
    if p <= 0.0 {
        return x;
    }
    let (r, c) = tape.shape(x);
    let keep = F::of(1.0 / (1.0 - p));
    let mask = Array2::from_shape_fn((r, c), |_| if rng.gen::<f64>() < p { F::zero() } else { keep });
    tape.mul_const(x, mask)
}

/// A batch of variable-length sequences stored row-wise in one matrix.
#[derive(Debug, Clone)]
pub struct Packed {
    pub data: Var,
    pub lengths: Vec<usize>,
}

impl Packed {
    pub fn offsets(&self) -> Vec<usize> {
        offsets(&self.lengths)
    }

    pub fn total(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Coordinatewise max over each sequence, one row per sequence.
    pub fn max_pool<F: Scalar>(&self, tape: &mut Tape<'_, F>) -> Var {
        let offs = self.offsets();
        let rows: Vec<Var> = self
            .lengths
            .iter()
            .zip(&offs)
            .map(|(&len, &off)| {
                let seq = if self.lengths.len() == 1 { self.data } else { tape.slice_rows(self.data, off, off + len) };
                tape.max_rows(seq)
            })
            .collect();
        tape.concat_rows(&rows)
    }
}

fn offsets(lengths: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    lengths
        .iter()
        .map(|&l| {
            let o = acc;
            acc += l;
            o
        })
        .collect()
}

/// One LSTM direction. Gate blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let a = 1.0 / (hidden as f64).sqrt();
        let input_weight = store.add(format!("{name}.input_weight"), uniform(rng, input, 4 * hidden, a));
        let hidden_weight = store.add(format!("{name}.hidden_weight"), uniform(rng, hidden, 4 * hidden, a));
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(F::one());
        let bias = store.add(format!("{name}.bias"), b);
        Self { input_weight, hidden_weight, bias, hidden }
    }

    /// Runs over every sequence of `x`, forwards or backwards in time.
    /// Sequences are processed together, longest first, so each time step is
    /// one matrix product over the sequences still active.
    pub fn run<F: Scalar>(&self, tape: &mut Tape<'_, F>, x: &Packed, reverse: bool) -> Var {
        let h = self.hidden;
        let offs = x.offsets();
        let mut order: Vec<usize> = (0..x.lengths.len()).collect();
        order.sort_by_key(|&s| std::cmp::Reverse(x.lengths[s]));
        let max_len = order.first().map_or(0, |&s| x.lengths[s]);

        let wi = tape.param(self.input_weight);
        let wh = tape.param(self.hidden_weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x.data, wi);
        let xw = tape.add_row(xw, b);

        // position in the stacked step outputs of every (sequence, time) row
        let mut stacked_row = vec![0usize; x.total()];
        let mut steps = Vec::with_capacity(max_len);
        let mut state: Option<(Var, Var)> = None;
        let mut stacked = 0;
        for t in 0..max_len {
            let active = order.iter().take_while(|&&s| x.lengths[s] > t).count();
            let rows: Vec<usize> = order[..active]
                .iter()
                .map(|&s| offs[s] + if reverse { x.lengths[s] - 1 - t } else { t })
                .collect();
            for (k, &r) in rows.iter().enumerate() {
                stacked_row[r] = stacked + k;
            }
            stacked += active;
            let mut gates = tape.gather_rows(xw, &rows);
            let c_prev = match state {
                None => tape.zeros(active, h),
                Some((h_prev, c_prev)) => {
                    let (h_prev, c_prev) = if tape.shape(h_prev).0 == active {
                        (h_prev, c_prev)
                    } else {
                        (tape.slice_rows(h_prev, 0, active), tape.slice_rows(c_prev, 0, active))
                    };
                    let rec = tape.matmul(h_prev, wh);
                    gates = tape.add(gates, rec);
                    c_prev
                }
            };
            let hc = tape.lstm_cell(gates, c_prev);
            let h_t = tape.slice_cols(hc, 0, h);
            let c_t = tape.slice_cols(hc, h, 2 * h);
            steps.push(h_t);
            state = Some((h_t, c_t));
        }
        let all = tape.concat_rows(&steps);
        tape.gather_rows(all, &stacked_row)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiLstmLayer {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

/// Stacked bidirectional LSTM with dropout between layers.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<BiLstmLayer>,
    pub hidden: usize,
    pub dropout: f64,
}

impl BiLstm {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let width = if l == 0 { input } else { 2 * hidden };
                BiLstmLayer {
                    forward: LstmCell::new(store, &format!("{name}.{l}.forward"), width, hidden, rng),
                    backward: LstmCell::new(store, &format!("{name}.{l}.backward"), width, hidden, rng),
                }
            })
            .collect();
        Self { layers, hidden, dropout }
    }

    pub fn output_width(&self) -> usize {
        2 * self.hidden
    }

    /// Per-row `[forward; backward]` states of the last layer.
    pub fn forward<F: Scalar>(&self, tape: &mut Tape<'_, F>, x: &Packed, mut rng: Option<&mut ChaCha8Rng>) -> Packed {
        let mut cur = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                cur.data = dropout(tape, cur.data, self.dropout, rng.as_deref_mut());
            }
            let f = layer.forward.run(tape, &cur, false);
            let b = layer.backward.run(tape, &cur, true);
            cur.data = tape.concat_cols(&[f, b]);
        }
        cur
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::logistic;
    use ndarray::s;
    use rand::SeedableRng;

    fn scalar_lstm(x: &Array2<f64>, wi: &Array2<f64>, wh: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let h = wh.nrows();
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut out = Array2::zeros((x.nrows(), h));
        for t in 0..x.nrows() {
            let mut g = vec![0.0; 4 * h];
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = b[[0, j]];
                for i in 0..x.ncols() {
                    *gj += x[[t, i]] * wi[[i, j]];
                }
                for i in 0..h {
                    *gj += hs[i] * wh[[i, j]];
                }
            }
            for j in 0..h {
                let c = logistic(g[h + j]) * cs[j] + logistic(g[j]) * g[2 * h + j].tanh();
                cs[j] = c;
                hs[j] = logistic(g[3 * h + j]) * c.tanh();
                out[[t, j]] = hs[j];
            }
        }
        out
    }

    #[test]
    fn packed_run_matches_per_sequence_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        let cell = LstmCell::new(&mut store, "cell", 3, 2, &mut rng);
        let lengths = vec![2, 4, 1];
        let x: Array2<f64> = uniform(&mut rng, 7, 3, 1.0);
        let mut tape = Tape::inference(&store);
        let data = tape.constant(x.clone());
        let packed = Packed { data, lengths: lengths.clone() };
        let f = cell.run(&mut tape, &packed, false);
        let b = cell.run(&mut tape, &packed, true);
        let (fwd, bwd) = (tape.value(f).clone(), tape.value(b).clone());
        let (wi, wh, b) = (store.get(cell.input_weight), store.get(cell.hidden_weight), store.get(cell.bias));
        let mut off = 0;
        for &len in &lengths {
            let seq = x.slice(s![off..off + len, ..]).to_owned();
            let expect = scalar_lstm(&seq, wi, wh, b);
            assert!((&fwd.slice(s![off..off + len, ..]) - &expect).iter().all(|d| d.abs() < 1e-12));
            let rev = seq.slice(s![..;-1, ..]).to_owned();
            let expect = scalar_lstm(&rev, wi, wh, b);
            let got = bwd.slice(s![off..off + len;-1, ..]).to_owned();
            assert!((&got - &expect).iter().all(|d| d.abs() < 1e-12));
            off += len;
        }
    }

    #[test]
    fn max_pool_per_sequence() {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::inference(&store);
        let data = tape.constant(ndarray::array![[1.0, 5.0], [3.0, 2.0], [-1.0, -2.0]]);
        let p = Packed { data, lengths: vec![2, 1] };
        let pooled = p.max_pool(&mut tape);
        assert_eq!(tape.value(pooled), &ndarray::array![[3.0, 5.0], [-1.0, -2.0]]);
    }

    #[test]
    fn dropout_without_rng_is_identity() {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::inference(&store);
        let x = tape.constant(Array2::ones((2, 3)));
        assert_eq!(dropout(&mut tape, x, 0.3, None), x);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = dropout(&mut tape, x, 0.5, Some(&mut rng));
        assert!(tape.value(y).iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
