//! LSTM cell and stacked sequence encoder.
//!
//! Each layer keeps the four gate blocks stacked row-wise in the order
//! input, forget, output, candidate:
//!
//! ```text
//! w_x = [W_ix; W_fx; W_ox; W_Cx]   (4H x in)
//! w_h = [W_ih; W_fh; W_oh; W_Ch]   (4H x H)
//! b   = [b_i; b_f; b_o; b_C]       (4H x 1)
//! ```

use rand::Rng;

use crate::autodiff::{ParamBuilder, ParamId, Session, Shape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Plain-valued weights of one layer, split per gate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub hidden: usize,
    pub input: usize,
    /// Row-major `H x in` matrices for gates i, f, o, C.
    pub w_x: [Vec<f64>; 4],
    /// Row-major `H x H` matrices for gates i, f, o, C.
    pub w_h: [Vec<f64>; 4],
    pub b: [Vec<f64>; 4],
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

impl Lstm {
    pub fn new<R: Rng>(b: &mut ParamBuilder<'_, R>, input: usize, hidden: usize, layers: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || layers == 0 {
            return Err(Error::invalid(format!(
                "LSTM sizes must be positive (input {input}, hidden {hidden}, layers {layers})"
            )));
        }
        let layers = (0..layers)
            .map(|l| {
                let width = if l == 0 { input } else { hidden };
                b.scope(&format!("l{l}"), |b| {
                    Ok(LstmLayer {
                        w_x: b.weight("w_x", 4 * hidden, width)?,
                        w_h: b.weight("w_h", 4 * hidden, hidden)?,
                        bias: b.zeros("b", 4 * hidden, 1)?,
                        input: width,
                        hidden,
                    })
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Lstm { layers })
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    /// One cell update of `layer`: returns `(h, C)`.
    pub fn step(&self, s: &mut Session<'_>, layer: usize, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let l = &self.layers[layer];
        let hsz = l.hidden;
        if s.shape(x) != Shape::col(l.input) {
            return Err(Error::shape(
                "lstm_step",
                format!("input {} but layer expects {}x1", s.shape(x), l.input),
            ));
        }
        for (what, v) in [("hidden", h_prev), ("cell", c_prev)] {
            if s.shape(v) != Shape::col(hsz) {
                return Err(Error::shape(
                    "lstm_step",
                    format!("{what} state {} but layer expects {hsz}x1", s.shape(v)),
                ));
            }
        }
        let (w_x, w_h, b) = (s.param(l.w_x), s.param(l.w_h), s.param(l.bias));
        let zx = s.matmul(w_x, x)?;
        let zh = s.matmul(w_h, h_prev)?;
        let z = s.add(zx, zh)?;
        let z = s.add(z, b)?;
        let zi = s.slice_rows(z, 0, hsz)?;
        let zf = s.slice_rows(z, hsz, 2 * hsz)?;
        let zo = s.slice_rows(z, 2 * hsz, 3 * hsz)?;
        let zc = s.slice_rows(z, 3 * hsz, 4 * hsz)?;
        let i = s.sigmoid(zi);
        let f = s.sigmoid(zf);
        let o = s.sigmoid(zo);
        let cand = s.tanh(zc);
        let ic = s.mul(i, cand)?;
        let fc = s.mul(f, c_prev)?;
        let c = s.add(ic, fc)?;
        let tc = s.tanh(c);
        let h = s.mul(o, tc)?;
        Ok((h, c))
    }

    /// Run all layers over `inputs` from zero state and return the last
    /// hidden vector of the top layer.
    pub fn sequence(&self, s: &mut Session<'_>, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::invalid("LSTM sequence must be nonempty"));
        }
        let mut seq = inputs.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut h = s.column(vec![0.0; layer.hidden]);
            let mut c = s.column(vec![0.0; layer.hidden]);
            for x in seq.iter_mut() {
                (h, c) = self.step(s, li, *x, h, c)?;
                *x = h;
            }
        }
        Ok(*seq.last().expect("nonempty"))
    }

    /// Split the stacked weights of `layer` into per-gate matrices.
    pub fn layer_params(&self, s: &Session<'_>, layer: usize) -> LstmParams {
        let l = &self.layers[layer];
        let store = s.store();
        let (hsz, inp) = (l.hidden, l.input);
        let wx = &store.get(l.w_x).values;
        let wh = &store.get(l.w_h).values;
        let bv = &store.get(l.bias).values;
        let block = |v: &Vec<f64>, g: usize, width: usize| v[g * hsz * width..(g + 1) * hsz * width].to_vec();
        LstmParams {
            hidden: hsz,
            input: inp,
            w_x: std::array::from_fn(|g| block(wx, g, inp)),
            w_h: std::array::from_fn(|g| block(wh, g, hsz)),
            b: std::array::from_fn(|g| block(bv, g, 1)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(input: usize, hidden: usize, layers: usize, seed: u64) -> (ParamStore, Lstm) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = Lstm::new(&mut ParamBuilder::new(&mut store, &mut rng), input, hidden, layers).unwrap();
        (store, lstm)
    }

    fn zero_all(store: &mut ParamStore) {
        for p in store.params_mut() {
            p.values.fill(0.0);
        }
    }

    #[test]
    fn zero_weights_give_half_gates_and_zero_state() {
        let (mut store, lstm) = build(3, 4, 1, 0);
        zero_all(&mut store);
        let mut s = Session::eval(&store);
        let x = s.column(vec![1.0, -2.0, 0.5]);
        let h0 = s.column(vec![0.0; 4]);
        let c0 = s.column(vec![0.0; 4]);
        let (h, c) = lstm.step(&mut s, 0, x, h0, c0).unwrap();
        assert!(s.value(h).iter().all(|&v| v == 0.0));
        assert!(s.value(c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let (mut store, lstm) = build(2, 3, 1, 0);
        zero_all(&mut store);
        let bias = lstm.layers[0].bias;
        // b_f block
        store.get_mut(bias).values[3..6].fill(50.0);
        let mut s = Session::eval(&store);
        let x = s.column(vec![0.3, 0.9]);
        let h0 = s.column(vec![0.0; 3]);
        let c0 = s.column(vec![0.7, -1.2, 2.5]);
        let (_, c) = lstm.step(&mut s, 0, x, h0, c0).unwrap();
        for (got, want) in s.value(c).iter().zip([0.7, -1.2, 2.5]) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let (store, lstm) = build(1, 2, 1, 0);
        let mut s = Session::eval(&store);
        assert!(lstm.sequence(&mut s, &[]).is_err());
    }

    #[test]
    fn wrong_input_width_rejected() {
        let (store, lstm) = build(4, 2, 1, 0);
        let mut s = Session::eval(&store);
        let x = s.column(vec![0.0; 3]);
        assert!(lstm.sequence(&mut s, &[x]).is_err());
    }

    #[test]
    fn single_step_sequence_equals_step() {
        let (store, lstm) = build(2, 3, 1, 5);
        let mut s = Session::eval(&store);
        let x = s.column(vec![0.4, -0.1]);
        let seq = lstm.sequence(&mut s, &[x]).unwrap();
        let h0 = s.column(vec![0.0; 3]);
        let c0 = s.column(vec![0.0; 3]);
        let (h, _) = lstm.step(&mut s, 0, x, h0, c0).unwrap();
        assert_eq!(s.value(seq), s.value(h));
    }

    #[test]
    fn stacked_output_width() {
        let (store, lstm) = build(4, 36, 3, 2);
        let mut s = Session::eval(&store);
        let xs: Vec<Var> = (0..5).map(|i| s.column(vec![i as f64 * 0.1; 4])).collect();
        let h = lstm.sequence(&mut s, &xs).unwrap();
        assert_eq!(s.shape(h), Shape::col(36));
        assert!(s.value(h).iter().all(|v| v.abs() <= 1.0));
    }
}
