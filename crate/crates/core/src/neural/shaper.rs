//! Autoregressive LSTM shaper.
//!
//! At each step the cell reads the one-hot of the previous symbol (or a
//! dedicated start flag at `t = 1`), updates `(h, c)` and projects `h` onto
//! logits over the symbol alphabet. Gate order in the packed weight matrices
//! is `[input, forget, candidate, output]`.

use rand::Rng;

use super::gumbel::{gumbel_softmax_sample, GumbelSample, Relaxation};
use super::tape::{row_softmax, sigmoid, Tape, Var};
use super::tensor::Tensor;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct ShaperParams {
    alphabet: usize,
    hidden: usize,
    /// `(A + 1) x 4H`, rows are the one-hot inputs followed by the start flag.
    pub w_input: Tensor,
    /// `H x 4H`.
    pub w_hidden: Tensor,
    /// `1 x 4H`.
    pub bias: Tensor,
    /// `H x A`.
    pub w_out: Tensor,
    /// `1 x A`.
    pub b_out: Tensor,
}

impl ShaperParams {
    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except a forget
    /// gate bias of one.
    pub fn init<R: Rng + ?Sized>(alphabet: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |m: usize, n: usize| {
            Tensor::new(m, n, (0..m * n).map(|_| rng.gen_range(-k..k)).collect())
        };
        let w_input = uniform(alphabet + 1, 4 * hidden);
        let w_hidden = uniform(hidden, 4 * hidden);
        let w_out = uniform(hidden, alphabet);
        let mut bias = Tensor::zeros(1, 4 * hidden);
        for j in hidden..2 * hidden {
            bias.set(0, j, 1.0);
        }
        Self {
            alphabet,
            hidden,
            w_input,
            w_hidden,
            bias,
            w_out,
            b_out: Tensor::zeros(1, alphabet),
        }
    }

    pub fn zeros(alphabet: usize, hidden: usize) -> Self {
        Self {
            alphabet,
            hidden,
            w_input: Tensor::zeros(alphabet + 1, 4 * hidden),
            w_hidden: Tensor::zeros(hidden, 4 * hidden),
            bias: Tensor::zeros(1, 4 * hidden),
            w_out: Tensor::zeros(hidden, alphabet),
            b_out: Tensor::zeros(1, alphabet),
        }
    }

    /// Rebuilds parameters from tensors in [`ShaperParams::tensors`] order.
    pub fn from_tensors(alphabet: usize, hidden: usize, t: Vec<Tensor>) -> Result<Self, Error> {
        let expected = Self::zeros(alphabet, hidden);
        if t.len() != 5 || t.iter().zip(expected.tensors()).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::Shape("parameter tensors do not match the shaper layout".into()));
        }
        let mut it = t.into_iter();
        let mut next = || it.next().unwrap();
        Ok(Self {
            alphabet,
            hidden,
            w_input: next(),
            w_hidden: next(),
            bias: next(),
            w_out: next(),
            b_out: next(),
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.alphabet + 1
    }

    pub fn tensors(&self) -> [&Tensor; 5] {
        [&self.w_input, &self.w_hidden, &self.bias, &self.w_out, &self.b_out]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 5] {
        [
            &mut self.w_input,
            &mut self.w_hidden,
            &mut self.bias,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn register(&self, tape: &mut Tape) -> ShaperVars {
        ShaperVars {
            w_input: tape.param(self.w_input.clone()),
            w_hidden: tape.param(self.w_hidden.clone()),
            bias: tape.param(self.bias.clone()),
            w_out: tape.param(self.w_out.clone()),
            b_out: tape.param(self.b_out.clone()),
            alphabet: self.alphabet,
            hidden: self.hidden,
        }
    }
}

/// Parameter leaves of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ShaperVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
    pub w_out: Var,
    pub b_out: Var,
    alphabet: usize,
    hidden: usize,
}

impl ShaperVars {
    /// Wraps existing leaves ordered as in [`ShaperParams::tensors`].
    pub fn from_vars(tape: &Tape, vars: [Var; 5]) -> Result<Self, Error> {
        let (rows, cols) = tape.value(vars[0]).shape();
        if cols % 4 != 0 || rows < 2 {
            return Err(Error::Shape(format!("input weights are {rows}x{cols}")));
        }
        let hidden = cols / 4;
        let alphabet = rows - 1;
        let expected = [(alphabet + 1, 4 * hidden), (hidden, 4 * hidden), (1, 4 * hidden), (hidden, alphabet), (1, alphabet)];
        for (v, e) in vars.iter().zip(expected) {
            if tape.value(*v).shape() != e {
                return Err(Error::Shape(format!("parameter is {:?}, expected {e:?}", tape.value(*v).shape())));
            }
        }
        Ok(Self {
            w_input: vars[0],
            w_hidden: vars[1],
            bias: vars[2],
            w_out: vars[3],
            b_out: vars[4],
            alphabet,
            hidden,
        })
    }

    pub fn as_array(&self) -> [Var; 5] {
        [self.w_input, self.w_hidden, self.bias, self.w_out, self.b_out]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h: Var,
    pub c: Var,
}

impl StateVars {
    pub fn zeros(tape: &mut Tape, rows: usize, hidden: usize) -> Self {
        Self {
            h: tape.constant(Tensor::zeros(rows, hidden)),
            c: tape.constant(Tensor::zeros(rows, hidden)),
        }
    }
}

/// One LSTM update plus projection, recorded on the tape.
pub fn shaper_step(
    tape: &mut Tape,
    vars: &ShaperVars,
    input: Var,
    state: StateVars,
) -> Result<(Var, StateVars), Error> {
    let h_dim = vars.hidden;
    let rows = tape.value(input).rows();
    if tape.value(input).cols() != vars.alphabet + 1 {
        return Err(Error::Shape(format!(
            "shaper input has {} columns, expected {}",
            tape.value(input).cols(),
            vars.alphabet + 1
        )));
    }
    for v in [state.h, state.c] {
        if tape.value(v).shape() != (rows, h_dim) {
            return Err(Error::Shape(format!(
                "state is {:?}, expected ({rows}, {h_dim})",
                tape.value(v).shape()
            )));
        }
    }
    let zx = tape.matmul(input, vars.w_input);
    let zh = tape.matmul(state.h, vars.w_hidden);
    let z = tape.add(zx, zh);
    let z = tape.add_row(z, vars.bias);
    let i_pre = tape.columns(z, 0..h_dim);
    let f_pre = tape.columns(z, h_dim..2 * h_dim);
    let g_pre = tape.columns(z, 2 * h_dim..3 * h_dim);
    let o_pre = tape.columns(z, 3 * h_dim..4 * h_dim);
    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);
    let fc = tape.mul(f, state.c);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    let logits = tape.matmul(h, vars.w_out);
    let logits = tape.add_row(logits, vars.b_out);
    Ok((logits, StateVars { h, c }))
}

/// Input rows carrying only the start flag.
pub fn start_input(rows: usize, alphabet: usize) -> Tensor {
    let mut t = Tensor::zeros(rows, alphabet + 1);
    for r in 0..rows {
        t.set(r, alphabet, 1.0);
    }
    t
}

/// A batched autoregressive rollout recorded on a tape.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub steps: Vec<GumbelSample>,
    /// Unnormalized log-probabilities per step, `rows x A`.
    pub logits: Vec<Var>,
    /// `softmax(logits)` per step, `rows x A`.
    pub probabilities: Vec<Var>,
    /// Sampled indices, `indices[row][t]`.
    pub indices: Vec<Vec<usize>>,
    /// `log p(sequence)` per row, `rows x 1`.
    pub log_prob: Var,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Samples `rows` independent sequences of length `len`, feeding each
/// sampled one-hot back as the next input.
#[allow(clippy::too_many_arguments)]
pub fn sample_batch<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ShaperVars,
    rows: usize,
    len: usize,
    tau: f64,
    relaxation: Relaxation,
    rng: &mut R,
) -> Result<Rollout, Error> {
    if len == 0 {
        return Err(Error::InvalidArgument("block length must be at least 1".into()));
    }
    let a = vars.alphabet;
    let mut state = StateVars::zeros(tape, rows, vars.hidden);
    let mut input = tape.constant(start_input(rows, a));
    let flag = tape.constant(Tensor::zeros(rows, 1));
    let mut steps = Vec::with_capacity(len);
    let mut probabilities = Vec::with_capacity(len);
    let mut all_logits = Vec::with_capacity(len);
    let mut indices = vec![Vec::with_capacity(len); rows];
    let mut log_prob: Option<Var> = None;
    for _ in 0..len {
        let (logits, next) = shaper_step(tape, vars, input, state)?;
        state = next;
        let sample = gumbel_softmax_sample(tape, logits, tau, relaxation, rng)?;
        probabilities.push(tape.softmax(logits));
        all_logits.push(logits);
        for (row, &k) in indices.iter_mut().zip(&sample.indices) {
            row.push(k);
        }
        log_prob = Some(match log_prob {
            None => sample.log_prob,
            Some(acc) => tape.add(acc, sample.log_prob),
        });
        input = tape.concat(&[sample.hard, flag]);
        steps.push(sample);
    }
    Ok(Rollout {
        steps,
        logits: all_logits,
        probabilities,
        indices,
        log_prob: log_prob.expect("len >= 1"),
    })
}

/// Single-sequence rollout: one-hots per step, per-step log-probabilities
/// and the tape holding the computation.
pub fn sample_block<R: Rng + ?Sized>(
    params: &ShaperParams,
    len: usize,
    tau: f64,
    rng: &mut R,
) -> Result<(Vec<Tensor>, Vec<f64>, Tape), Error> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let rollout = sample_batch(&mut tape, &vars, 1, len, tau, Relaxation::StraightThrough, rng)?;
    let one_hots = rollout.steps.iter().map(|s| tape.value(s.hard).clone()).collect();
    let log_probs = rollout
        .steps
        .iter()
        .map(|s| tape.value(s.log_prob).item())
        .collect();
    Ok((one_hots, log_probs, tape))
}

/// Tape-free evaluation of the shaper for inference and matching.
#[derive(Clone, Debug)]
pub struct Shaper {
    params: ShaperParams,
}

/// Recurrent state for [`Shaper`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShaperState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Shaper {
    pub fn new(params: ShaperParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ShaperParams {
        &self.params
    }

    pub fn alphabet(&self) -> usize {
        self.params.alphabet
    }

    pub fn initial_state(&self) -> ShaperState {
        ShaperState {
            h: vec![0.0; self.params.hidden],
            c: vec![0.0; self.params.hidden],
        }
    }

    /// Logits for the next symbol; `previous` is `None` at the block start.
    pub fn step(&self, previous: Option<usize>, state: &mut ShaperState) -> Vec<f64> {
        let p = &self.params;
        let hd = p.hidden;
        let input_row = previous.unwrap_or(p.alphabet);
        let mut z: Vec<f64> = p
            .bias
            .data()
            .iter()
            .zip(p.w_input.row_slice(input_row))
            .map(|(b, w)| b + w)
            .collect();
        for (k, &hk) in state.h.iter().enumerate() {
            if hk == 0.0 {
                continue;
            }
            for (zj, w) in z.iter_mut().zip(p.w_hidden.row_slice(k)) {
                *zj += hk * w;
            }
        }
        for j in 0..hd {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hd + j]);
            let g = z[2 * hd + j].tanh();
            let o = sigmoid(z[3 * hd + j]);
            state.c[j] = f * state.c[j] + i * g;
            state.h[j] = o * state.c[j].tanh();
        }
        let mut logits = p.b_out.data().to_vec();
        for (k, &hk) in state.h.iter().enumerate() {
            for (l, w) in logits.iter_mut().zip(p.w_out.row_slice(k)) {
                *l += hk * w;
            }
        }
        logits
    }

    pub fn probabilities(&self, previous: Option<usize>, state: &mut ShaperState) -> Vec<f64> {
        let logits = self.step(previous, state);
        row_softmax(&Tensor::row(logits)).into_data()
    }

    /// Ancestral sampling of one block; returns indices and `ln p(block)`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, f64) {
        let mut state = self.initial_state();
        let mut prev = None;
        let mut out = Vec::with_capacity(len);
        let mut log_p = 0.0;
        for _ in 0..len {
            let probs = self.probabilities(prev, &mut state);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (k, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            log_p += probs[pick].ln();
            out.push(pick);
            prev = Some(pick);
        }
        (out, log_p)
    }

    /// `ln p(sequence)` under the model.
    pub fn log_prob(&self, sequence: &[usize]) -> f64 {
        let mut state = self.initial_state();
        let mut prev = None;
        let mut total = 0.0;
        for &s in sequence {
            let probs = self.probabilities(prev, &mut state);
            total += probs[s].ln();
            prev = Some(s);
        }
        total
    }

    /// Distribution source for the arithmetic matcher; keeps the recurrent
    /// state across calls while the prefix grows one symbol at a time.
    pub fn source(&self) -> ShaperSource<'_> {
        ShaperSource {
            shaper: self,
            state: self.initial_state(),
            consumed: Vec::new(),
            pending: None,
        }
    }
}

pub struct ShaperSource<'a> {
    shaper: &'a Shaper,
    state: ShaperState,
    consumed: Vec<usize>,
    pending: Option<Vec<f64>>,
}

impl crate::matchers::DistributionSource for ShaperSource<'_> {
    fn distribution(&mut self, prefix: &[usize]) -> crate::matchers::ConditionalDistribution {
        let extends = prefix.len() == self.consumed.len() + 1
            && prefix[..self.consumed.len()] == self.consumed[..];
        let same = prefix == &self.consumed[..] && self.pending.is_some();
        if !same {
            if !extends {
                // Restart from scratch for an unrelated prefix.
                self.state = self.shaper.initial_state();
                self.consumed.clear();
                let mut prev = None;
                for &s in prefix {
                    self.shaper.step(prev, &mut self.state);
                    prev = Some(s);
                    self.consumed.push(s);
                }
                self.pending = Some(self.shaper.probabilities(prev, &mut self.state));
            } else {
                let s = *prefix.last().unwrap();
                self.consumed.push(s);
                self.pending = Some(self.shaper.probabilities(Some(s), &mut self.state));
            }
        }
        let probs = self.pending.clone().expect("computed above");
        let sum: f64 = probs.iter().sum();
        crate::matchers::ConditionalDistribution::new(probs.iter().map(|p| p / sum).collect())
            .expect("softmax output is a distribution")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matchers::{adm_decode, adm_encode};
    use crate::neural::gradcheck::check_gradients_subset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_is_uniform() {
        let params = ShaperParams::zeros(16, 8);
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let input = tape.constant(start_input(1, 16));
        let state = StateVars::zeros(&mut tape, 1, 8);
        let (logits, _) = shaper_step(&mut tape, &vars, input, state).unwrap();
        assert!(tape.value(logits).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_logits() {
        let params = ShaperParams::init(4, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let run = || {
            let mut tape = Tape::new();
            let vars = params.register(&mut tape);
            let input = tape.constant(start_input(2, 4));
            let state = StateVars::zeros(&mut tape, 2, 6);
            let (logits, s) = shaper_step(&mut tape, &vars, input, state).unwrap();
            let x = tape.constant(Tensor::new(2, 5, vec![0., 1., 0., 0., 0., 1., 0., 0., 0., 0.]));
            let (logits2, _) = shaper_step(&mut tape, &vars, x, s).unwrap();
            (tape.value(logits).clone(), tape.value(logits2).clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tape_and_plain_cells_agree() {
        let params = ShaperParams::init(5, 7, &mut ChaCha8Rng::seed_from_u64(9));
        let shaper = Shaper::new(params.clone());
        let seq = [3usize, 0, 4, 4, 1];
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let mut input = tape.constant(start_input(1, 5));
        let mut state = StateVars::zeros(&mut tape, 1, 7);
        let mut plain = shaper.initial_state();
        let mut prev = None;
        for &s in &seq {
            let (logits, next) = shaper_step(&mut tape, &vars, input, state).unwrap();
            state = next;
            let l2 = shaper.step(prev, &mut plain);
            for (a, b) in tape.value(logits).data().iter().zip(&l2) {
                assert!((a - b).abs() < 1e-14);
            }
            let mut onehot = vec![0.0; 6];
            onehot[s] = 1.0;
            input = tape.constant(Tensor::row(onehot));
            prev = Some(s);
        }
    }

    #[test]
    fn shape_errors() {
        let params = ShaperParams::zeros(4, 3);
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let bad_input = tape.constant(Tensor::zeros(1, 4));
        let state = StateVars::zeros(&mut tape, 1, 3);
        assert!(matches!(
            shaper_step(&mut tape, &vars, bad_input, state),
            Err(Error::Shape(_))
        ));
        let input = tape.constant(start_input(1, 4));
        let bad_state = StateVars::zeros(&mut tape, 1, 2);
        assert!(shaper_step(&mut tape, &vars, input, bad_state).is_err());
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let params = ShaperParams::init(3, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let inputs: Vec<Tensor> = params.tensors().iter().map(|t| (*t).clone()).collect();
        for target in 0..3 {
            let report = check_gradients_subset(&inputs, 1e-5, 40, |tape, v| {
                let vars = ShaperVars {
                    w_input: v[0],
                    w_hidden: v[1],
                    bias: v[2],
                    w_out: v[3],
                    b_out: v[4],
                    alphabet: 3,
                    hidden: 4,
                };
                let mut input = tape.constant(start_input(1, 3));
                let mut state = StateVars::zeros(tape, 1, 4);
                let mut logits = input;
                for s in [1usize, 2] {
                    let (l, next) = shaper_step(tape, &vars, input, state).unwrap();
                    state = next;
                    logits = l;
                    let mut onehot = vec![0.0; 4];
                    onehot[s] = 1.0;
                    input = tape.constant(Tensor::row(onehot));
                }
                tape.columns(logits, target..target + 1)
            });
            assert!(report.max_rel_err < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn single_step_log_prob() {
        let params = ShaperParams::init(4, 5, &mut ChaCha8Rng::seed_from_u64(4));
        let shaper = Shaper::new(params.clone());
        let (one_hots, log_probs, _) = sample_block(&params, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let pick = one_hots[0].data().iter().position(|&x| x == 1.0).unwrap();
        let mut state = shaper.initial_state();
        let probs = shaper.probabilities(None, &mut state);
        assert!((log_probs[0] - probs[pick].ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_network_samples_uniformly() {
        let params = ShaperParams::zeros(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let rollout = sample_batch(&mut tape, &vars, 2500, 40, 1.0, Relaxation::StraightThrough, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        for row in &rollout.indices {
            for &k in row {
                counts[k] += 1;
            }
        }
        let n = 100_000.0;
        let sigma = (n * 0.25 * 0.75f64).sqrt();
        for c in counts {
            assert!((c as f64 - n / 4.0).abs() < 3.0 * sigma, "{counts:?}");
        }
        // Sum of per-step log-probs is the sequence log-prob.
        let lp = tape.value(rollout.log_prob);
        assert!((lp.get(0, 0) - 40.0 * 0.25f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn source_drives_matcher() {
        let params = ShaperParams::init(6, 5, &mut ChaCha8Rng::seed_from_u64(8));
        let shaper = Shaper::new(params);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<bool> = (0..400).map(|_| rng.gen()).collect();
        let out = adm_encode(&bits, &mut shaper.source(), 24).unwrap();
        let back = adm_decode(&out.symbols, &mut shaper.source()).unwrap();
        assert_eq!(back, bits[..out.consumed]);
    }
}
