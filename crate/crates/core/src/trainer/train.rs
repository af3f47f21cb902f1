//! End-to-end training through the perturbative channel.

use std::f64::consts::LN_2;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{DemapperNoise, EntropyEstimator, Mode, TrainConfig};
use crate::channel::{am_distort_tape, choose_memory, generate_kernels, required_k, AmKernels, KernelConfig};
use crate::constellation::{Constellation, Sign, SignPair};
use crate::metrics::{adjusted_bce_loss, gaussian_llr_tape, LossParts};
use crate::neural::{checkpoint, sample_batch, Adam, Relaxation, ShaperParams, ShaperVars, Tape, Tensor, Var};
use crate::Error;

/// Upper bound on the kernel memory searched when none is configured.
pub const MAX_AUTO_MEMORY: usize = 64;

/// Everything a training step needs besides the parameters.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: TrainConfig,
    pub constellation: Constellation,
    /// Absent when the channel is linear.
    pub kernels: Option<AmKernels>,
    /// Side blocks per side.
    pub context: usize,
    pub gamma_eff: f64,
    pub sigma2: f64,
}

impl Problem {
    pub fn new(config: TrainConfig) -> Result<Self, Error> {
        config.validate()?;
        let constellation = Constellation::qam(config.order)?;
        let gamma_eff = config.gamma_eff();
        let kernels = if gamma_eff == 0.0 {
            None
        } else if let Some(path) = &config.kernels {
            Some(AmKernels::load(path)?)
        } else {
            let memory = match config.memory {
                Some(m) => m,
                None => choose_memory(&config.link, &KernelConfig::default(), MAX_AUTO_MEMORY)?,
            };
            Some(generate_kernels(&config.link, memory)?)
        };
        let memory = kernels.as_ref().map_or(0, |k| k.memory());
        let context = config.context.unwrap_or_else(|| required_k(config.block_len, memory));
        if context * config.block_len < memory {
            log::warn!(
                "{context} side blocks of {} symbols do not cover memory {memory}",
                config.block_len
            );
        }
        let sigma2 = config.noise_variance();
        Ok(Self {
            config,
            constellation,
            kernels,
            context,
            gamma_eff,
            sigma2,
        })
    }

    /// Rows sampled per step: each center block with its side blocks.
    pub fn rows(&self) -> usize {
        self.config.batch * (2 * self.context + 1)
    }

    /// Symbols per extended sequence.
    pub fn extended_len(&self) -> usize {
        (2 * self.context + 1) * self.config.block_len
    }

    /// `|point|^2` of each shaper output, as a column.
    fn energies(&self) -> Tensor {
        let (re, im) = self.coordinates();
        re.zip_map(&im, |a, b| a * a + b * b)
    }

    /// Complex coordinates of each shaper output before normalization.
    fn coordinates(&self) -> (Tensor, Tensor) {
        let c = &self.constellation;
        let pts: Vec<_> = match self.config.mode {
            Mode::Npas => (0..c.unsigned_size()).map(|u| c.unsigned_point(u)).collect(),
            Mode::Nps => c.points().to_vec(),
        };
        (
            Tensor::column(pts.iter().map(|p| p.re).collect()),
            Tensor::column(pts.iter().map(|p| p.im).collect()),
        )
    }
}

/// Records one training loss on `tape`.
pub fn build_loss<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ShaperVars,
    problem: &Problem,
    tau: f64,
    relaxation: Relaxation,
    rng: &mut R,
) -> Result<LossParts, Error> {
    let cfg = &problem.config;
    let c = &problem.constellation;
    let l = cfg.block_len;
    let k = problem.context;
    let b = cfg.batch;
    let rows = problem.rows();
    let n = problem.extended_len();
    let bits = c.bits_per_symbol() as usize;

    let rollout = sample_batch(tape, vars, rows, l, tau, relaxation, rng)?;
    let (cre, cim) = problem.coordinates();
    let cre = tape.constant(cre);
    let cim = tape.constant(cim);
    let mut re_cols = Vec::with_capacity(l);
    let mut im_cols = Vec::with_capacity(l);
    for step in &rollout.steps {
        re_cols.push(tape.matmul(step.hard, cre));
        im_cols.push(tape.matmul(step.hard, cim));
    }
    let re = tape.concat(&re_cols);
    let im = tape.concat(&im_cols);
    let mut x_re = tape.reshape(re, b, n);
    let mut x_im = tape.reshape(im, b, n);

    // Row r of the rollout is block r % (2k+1) of batch element r / (2k+1).
    let mut points = vec![0usize; b * n];
    match cfg.mode {
        Mode::Npas => {
            let mut s_re = Tensor::zeros(b, n);
            let mut s_im = Tensor::zeros(b, n);
            for (i, p) in points.iter_mut().enumerate() {
                let signs = SignPair::new(Sign::from_bit(rng.gen()), Sign::from_bit(rng.gen()));
                s_re.data_mut()[i] = signs.i.value();
                s_im.data_mut()[i] = signs.q.value();
                let u = rollout.indices[i / l][i % l];
                *p = c.point_index(u, signs);
            }
            let s_re = tape.constant(s_re);
            let s_im = tape.constant(s_im);
            x_re = tape.mul(x_re, s_re);
            x_im = tape.mul(x_im, s_im);
        }
        Mode::Nps => {
            for (i, p) in points.iter_mut().enumerate() {
                *p = rollout.indices[i / l][i % l];
            }
        }
    }

    let mut marginal: Option<Var> = None;
    for &pr in &rollout.probabilities {
        let s = tape.sum_rows(pr);
        marginal = Some(match marginal {
            None => s,
            Some(acc) => tape.add(acc, s),
        });
    }
    let marginal = tape.scale(marginal.expect("block length >= 1"), 1.0 / (rows * l) as f64);
    let energies = tape.constant(problem.energies());
    let mean_power = tape.matmul(marginal, energies);
    let log_power = tape.log(mean_power);
    let half = tape.scale(log_power, -0.5);
    let scale = tape.exp(half);
    let x_re = tape.scale_by(x_re, scale);
    let x_im = tape.scale_by(x_im, scale);

    let (y_re, y_im) = match &problem.kernels {
        Some(kernels) => am_distort_tape(tape, x_re, x_im, kernels, problem.gamma_eff)?,
        None => (x_re, x_im),
    };
    let center = k * l..(k + 1) * l;
    let xc_re = tape.columns(x_re, center.clone());
    let xc_im = tape.columns(x_im, center.clone());
    let yc_re = tape.columns(y_re, center.clone());
    let yc_im = tape.columns(y_im, center.clone());
    let sd = (problem.sigma2 / 2.0).sqrt();
    let mut draw = || Tensor::new(b, l, (0..b * l).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect());
    let n_re = tape.constant(draw());
    let n_im = tape.constant(draw());
    let yc_re = tape.add(yc_re, n_re);
    let yc_im = tape.add(yc_im, n_im);

    let sigma2 = match cfg.demapper_noise {
        DemapperNoise::Channel => tape.constant(Tensor::scalar(problem.sigma2)),
        DemapperNoise::Fitted => {
            let d_re = tape.sub(yc_re, xc_re);
            let d_im = tape.sub(yc_im, xc_im);
            let e_re = tape.mul(d_re, d_re);
            let e_im = tape.mul(d_im, d_im);
            let e = tape.add(e_re, e_im);
            tape.mean(e)
        }
    };

    let log_marginal = tape.log(marginal);
    let log_prior = match cfg.mode {
        Mode::Npas => {
            let idx: Vec<usize> = (0..c.order()).map(|p| c.unsigned_index(p)).collect();
            let g = tape.gather(log_marginal, idx);
            tape.add_scalar(g, -(4f64).ln())
        }
        Mode::Nps => log_marginal,
    };

    let llrs = gaussian_llr_tape(tape, yc_re, yc_im, c, scale, log_prior, sigma2)?;
    let mut labels = Vec::with_capacity(b * l * bits);
    for row in 0..b {
        for t in center.clone() {
            let point = points[row * n + t];
            for bit in 0..bits {
                labels.push(c.label_bit(point, bit as u32));
            }
        }
    }

    let log_prob = match cfg.entropy {
        EntropyEstimator::Sample => rollout.log_prob,
        EntropyEstimator::Conditional => {
            let mut acc: Option<Var> = None;
            for (&logits, &pr) in rollout.logits.iter().zip(&rollout.probabilities) {
                let lp = tape.log_softmax(logits);
                let plp = tape.mul(pr, lp);
                let neg_h = tape.sum_cols(plp);
                acc = Some(match acc {
                    None => neg_h,
                    Some(a) => tape.add(a, neg_h),
                });
            }
            acc.expect("block length >= 1")
        }
    };
    adjusted_bce_loss(tape, llrs, &labels, log_prob, l)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub bce_rate: f64,
    pub h_rate: f64,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last finite update.
    pub params: ShaperParams,
    pub trace: Vec<TraceRow>,
    /// Reason training stopped early.
    pub diverged: Option<String>,
}

impl TrainOutcome {
    pub fn steps_completed(&self) -> usize {
        self.trace.len()
    }

    /// Training trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.trace {
            out.push_str(&serde_json::to_string(row).expect("plain fields serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes the checkpoint, its sidecar and the trace next to it.
    pub fn save(&self, path: &Path, config: &TrainConfig) -> Result<(), Error> {
        let meta = serde_json::json!({
            "config": config,
            "steps": self.steps_completed(),
            "diverged": self.diverged,
        });
        checkpoint::save(path, &self.params, &meta)?;
        let mut f = std::fs::File::create(trace_path(path))?;
        f.write_all(self.trace_jsonl().as_bytes())?;
        Ok(())
    }
}

/// Location of the training trace for a checkpoint.
pub fn trace_path(checkpoint: &Path) -> std::path::PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".trace.jsonl");
    s.into()
}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome, Error> {
    let problem = Problem::new(config.clone())?;
    train_problem(&problem)
}

pub fn train_problem(problem: &Problem) -> Result<TrainOutcome, Error> {
    let cfg = &problem.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ShaperParams::init(cfg.alphabet(), cfg.hidden, &mut rng);
    let mut adam = Adam::new(cfg.adam);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let tau = cfg.tau(step);
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let parts = build_loss(&mut tape, &vars, problem, tau, cfg.relaxation, &mut rng)?;
        let row = TraceRow {
            step,
            loss: tape.value(parts.loss).item(),
            bce_rate: tape.value(parts.bce_rate).item(),
            h_rate: tape.value(parts.h_rate).item(),
            tau,
        };
        if !row.loss.is_finite() {
            return Ok(diverged(params, trace, step, "non-finite loss"));
        }
        let grads = tape.backward(parts.loss)?;
        let g: Vec<Tensor> = vars
            .as_array()
            .iter()
            .zip(params.tensors())
            .map(|(v, t)| grads.get_or_zeros(*v, t))
            .collect();
        let mut next = params.clone();
        match adam.update(&mut next.tensors_mut(), &g) {
            Ok(()) if next.is_finite() => params = next,
            Ok(()) => return Ok(diverged(params, trace, step, "non-finite parameters")),
            Err(Error::NonFinite(what)) => return Ok(diverged(params, trace, step, &what)),
            Err(e) => return Err(e),
        }
        log::debug!("step {step} loss {:.5} h {:.4} tau {tau:.3}", row.loss, row.h_rate);
        trace.push(row);
    }
    Ok(TrainOutcome {
        params,
        trace,
        diverged: None,
    })
}

fn diverged(params: ShaperParams, trace: Vec<TraceRow>, step: usize, reason: &str) -> TrainOutcome {
    log::error!("training diverged at step {step}: {reason}");
    TrainOutcome {
        params,
        trace,
        diverged: Some(format!("step {step}: {reason}")),
    }
}

/// Loss of the full pipeline as a function of the five parameter tensors,
/// with fixed randomness.
pub fn loss_from_vars(tape: &mut Tape, vars: &[Var], problem: &Problem, tau: f64, seed: u64) -> Var {
    let arr: [Var; 5] = vars.try_into().expect("five parameter tensors");
    let sv = ShaperVars::from_vars(tape, arr).expect("parameter shapes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_loss(tape, &sv, problem, tau, Relaxation::Soft, &mut rng)
        .expect("valid problem")
        .loss
}

/// Bits per 2D symbol carried by the signs in `mode`.
pub fn sign_bits(mode: Mode) -> f64 {
    match mode {
        Mode::Npas => 2.0,
        Mode::Nps => 0.0,
    }
}

/// Converts nats to bits.
pub fn nats_to_bits(x: f64) -> f64 {
    x / LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinkParams;
    use crate::neural::gradcheck::check_gradients_subset;

    fn toy(mode: Mode, gamma: Option<f64>) -> TrainConfig {
        let mut link = LinkParams::desk();
        link.launch_power_dbm = 6.0;
        TrainConfig {
            order: 16,
            mode,
            block_len: 4,
            context: Some(1),
            hidden: 16,
            batch: 3,
            steps: 5,
            gamma,
            sigma2: Some(0.05),
            memory: Some(3),
            link,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn full_loss_gradient() {
        for mode in [Mode::Npas, Mode::Nps] {
            for entropy in [EntropyEstimator::Sample, EntropyEstimator::Conditional] {
                let cfg = TrainConfig { entropy, ..toy(mode, None) };
                let problem = Problem::new(cfg).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let params = ShaperParams::init(problem.config.alphabet(), 16, &mut rng);
                let inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
                let report = check_gradients_subset(&inputs, 1e-5, 12, |tape, v| {
                    loss_from_vars(tape, v, &problem, 0.7, 9)
                });
                assert!(report.max_rel_err < 1e-3, "{mode:?} {entropy:?} {report:?}");
            }
        }
    }

    #[test]
    fn linear_channel_needs_no_kernels() {
        let problem = Problem::new(toy(Mode::Npas, Some(0.0))).unwrap();
        assert!(problem.kernels.is_none());
        assert_eq!(problem.rows(), 9);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = toy(Mode::Npas, None);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.params, b.params);
        assert_eq!(a.steps_completed(), 5);
        assert!(a.diverged.is_none());
        assert_eq!(a.trace_jsonl().lines().count(), 5);
    }

    #[test]
    fn divergence_keeps_last_good_parameters() {
        let mut cfg = toy(Mode::Npas, Some(0.0));
        cfg.adam.rate = 1e300;
        cfg.steps = 4;
        let out = train(&cfg).unwrap();
        assert!(out.diverged.is_some());
        assert!(out.params.is_finite());
    }
}
