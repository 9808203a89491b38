//! Layers built from tape primitives: affine maps and GRUs over batches of
//! variable-length sequences.

use rand::Rng;

use crate::array::Array;
use crate::error::{AutodiffError, Result};
use crate::params::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};

/// `x·W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Linear {
            weight: store.add_glorot(format!("{name}.weight"), input, output, rng)?,
            bias: store.add_zeros(format!("{name}.bias"), 1, output)?,
            input,
            output,
        })
    }

    pub fn forward(&self, t: &Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let w = t.param(store, self.weight);
        let b = t.param(store, self.bias);
        let xw = t.matmul(x, w)?;
        t.add_row(xw, b)
    }
}

/// A batch of sequences stored back to back as the rows of one matrix.
///
/// Sequence `b` occupies rows `offset(b) .. offset(b) + length(b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqBatch {
    lengths: Vec<usize>,
    offsets: Vec<usize>,
    by_length: Vec<usize>,
}

impl SeqBatch {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(AutodiffError::EmptyAxis { op: "sequence batch" });
        }
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut acc = 0;
        for &l in &lengths {
            offsets.push(acc);
            acc += l;
        }
        let mut by_length: Vec<usize> = (0..lengths.len()).collect();
        by_length.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]).then(a.cmp(&b)));
        Ok(SeqBatch {
            lengths,
            offsets,
            by_length,
        })
    }

    pub fn uniform(count: usize, len: usize) -> Result<Self> {
        Self::new(vec![len; count])
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn offset(&self, seq: usize) -> usize {
        self.offsets[seq]
    }

    pub fn count(&self) -> usize {
        self.lengths.len()
    }

    pub fn total_rows(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn max_len(&self) -> usize {
        self.lengths[self.by_length[0]]
    }
}

/// Gated recurrent unit with gate order (update z, reset r, candidate n):
///
/// ```text
/// z = σ(x·Wz + h·Uz + bz)
/// r = σ(x·Wr + h·Ur + br)
/// n = tanh(x·Wn + (r ⊙ h)·Un + bn)
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
///
/// `input_weight` is `[input, 3·hidden]` holding `Wz | Wr | Wn`,
/// `hidden_gates` is `[hidden, 2·hidden]` holding `Uz | Ur`, `hidden_candidate`
/// is `Un` and `bias` is `[1, 3·hidden]`.
#[derive(Clone, Debug)]
pub struct Gru {
    pub input: usize,
    pub hidden: usize,
    pub input_weight: ParamId,
    pub hidden_gates: ParamId,
    pub hidden_candidate: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct GruRun {
    /// Hidden state emitted at every position, `[total_rows, hidden]`, in the
    /// row order of the input.
    pub states: Var,
    /// Final state of each sequence, `[count, hidden]`.
    pub last: Var,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Gru {
            input,
            hidden,
            input_weight: store.add_glorot(format!("{name}.w_input"), input, 3 * hidden, rng)?,
            hidden_gates: store.add_glorot(format!("{name}.u_gates"), hidden, 2 * hidden, rng)?,
            hidden_candidate: store.add_glorot(format!("{name}.u_candidate"), hidden, hidden, rng)?,
            bias: store.add_zeros(format!("{name}.bias"), 1, 3 * hidden)?,
        })
    }

    /// Runs every sequence of `batch` from a zero state. With `reverse` each
    /// sequence is consumed last-to-first; `states` is still indexed by the
    /// original position. Sequences advance only for their own length.
    pub fn run(
        &self,
        t: &Tape,
        store: &ParameterStore,
        x: Var,
        batch: &SeqBatch,
        reverse: bool,
    ) -> Result<GruRun> {
        let shape = t.shape(x);
        if shape[1] != self.input || shape[0] != batch.total_rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "gru input",
                left: shape,
                right: vec![batch.total_rows(), self.input],
            });
        }
        let h = self.hidden;
        let w = t.param(store, self.input_weight);
        let u_gates = t.param(store, self.hidden_gates);
        let u_cand = t.param(store, self.hidden_candidate);
        let bias = t.param(store, self.bias);
        let projected = t.add_row(t.matmul(x, w)?, bias)?;

        let count = batch.count();
        let order = &batch.by_length;
        let mut state = t.constant(Array::zeros(count, h));
        let mut outputs = Vec::with_capacity(batch.max_len());
        let mut position_row = vec![0usize; batch.total_rows()];
        let mut emitted = 0;

        for step in 0..batch.max_len() {
            let active = order.iter().take_while(|&&b| batch.lengths[b] > step).count();
            let rows: Vec<usize> = order[..active]
                .iter()
                .map(|&b| {
                    let len = batch.lengths[b];
                    let pos = if reverse { len - 1 - step } else { step };
                    position_row[batch.offsets[b] + pos] = emitted;
                    emitted += 1;
                    batch.offsets[b] + pos
                })
                .collect();
            let xt = t.gather_rows(projected, &rows)?;
            let h_prev = if active == count {
                state
            } else {
                t.slice_rows(state, 0, active)?
            };
            let hg = t.matmul(h_prev, u_gates)?;
            let z = t.sigmoid(t.add(t.slice_cols(xt, 0, h)?, t.slice_cols(hg, 0, h)?)?);
            let r = t.sigmoid(t.add(t.slice_cols(xt, h, h)?, t.slice_cols(hg, h, h)?)?);
            let rh = t.matmul(t.mul(r, h_prev)?, u_cand)?;
            let n = t.tanh(t.add(t.slice_cols(xt, 2 * h, h)?, rh)?);
            let h_new = t.add(n, t.mul(z, t.sub(h_prev, n)?)?)?;
            outputs.push(h_new);
            state = if active == count {
                h_new
            } else {
                let rest = t.slice_rows(state, active, count - active)?;
                t.concat_rows(&[h_new, rest])?
            };
        }

        let all = if outputs.len() == 1 {
            outputs[0]
        } else {
            t.concat_rows(&outputs)?
        };
        let states = t.gather_rows(all, &position_row)?;
        let mut back = vec![0usize; count];
        for (i, &b) in order.iter().enumerate() {
            back[b] = i;
        }
        let last = t.gather_rows(state, &back)?;
        Ok(GruRun { states, last })
    }
}

/// Two independent GRUs reading each sequence in opposite directions.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub forward: Gru,
    pub backward: Gru,
}

#[derive(Clone, Copy, Debug)]
pub struct BiGruRun {
    /// `[total_rows, 2·hidden]`: forward state ‖ backward state per position.
    pub states: Var,
    /// Forward state after the last element.
    pub last_forward: Var,
    /// Backward state after the first element.
    pub last_backward: Var,
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiGru {
            forward: Gru::new(store, &format!("{name}.fwd"), input, hidden, rng)?,
            backward: Gru::new(store, &format!("{name}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn run(&self, t: &Tape, store: &ParameterStore, x: Var, batch: &SeqBatch) -> Result<BiGruRun> {
        let f = self.forward.run(t, store, x, batch, false)?;
        let b = self.backward.run(t, store, x, batch, true)?;
        Ok(BiGruRun {
            states: t.concat_cols(&[f.states, b.states])?,
            last_forward: f.last,
            last_backward: b.last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> rand::rngs::StdRng {
        rand::rngs::StdRng::seed_from_u64(3)
    }

    #[test]
    fn batched_run_matches_individual_runs() {
        let mut store = ParameterStore::new();
        let gru = Gru::new(&mut store, "g", 2, 3, &mut rng()).unwrap();
        let lengths = vec![2, 4, 1];
        let data: Vec<f64> = (0..14).map(|i| (i as f64 * 0.37).sin()).collect();
        let batch = SeqBatch::new(lengths.clone()).unwrap();

        for reverse in [false, true] {
            let t = Tape::new();
            let x = t.constant(Array::matrix(7, 2, data.clone()).unwrap());
            let run = gru.run(&t, &store, x, &batch, reverse).unwrap();
            let states = t.value(run.states);
            let last = t.value(run.last);

            for (b, &len) in lengths.iter().enumerate() {
                let off = batch.offset(b);
                let t1 = Tape::new();
                let xb = t1.constant(Array::matrix(len, 2, data[off * 2..(off + len) * 2].to_vec()).unwrap());
                let single = gru
                    .run(&t1, &store, xb, &SeqBatch::uniform(1, len).unwrap(), reverse)
                    .unwrap();
                let s1 = t1.value(single.states);
                for p in 0..len {
                    for c in 0..3 {
                        assert!((states.get(off + p, c) - s1.get(p, c)).abs() < 1e-15);
                    }
                }
                for c in 0..3 {
                    assert!((last.get(b, c) - t1.value(single.last).get(0, c)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let mut store = ParameterStore::new();
        let gru = Gru::new(&mut store, "g", 2, 2, &mut rng()).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let t = Tape::new();
        let x = t.constant(Array::filled(3, 2, 0.7));
        let run = gru.run(&t, &store, x, &SeqBatch::uniform(1, 3).unwrap(), false).unwrap();
        assert!(t.value(run.states).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut store = ParameterStore::new();
        let gru = Gru::new(&mut store, "g", 2, 2, &mut rng()).unwrap();
        let t = Tape::new();
        let x = t.constant(Array::zeros(3, 3));
        assert!(gru.run(&t, &store, x, &SeqBatch::uniform(1, 3).unwrap(), false).is_err());
        assert!(SeqBatch::new(vec![2, 0]).is_err());
    }
}
