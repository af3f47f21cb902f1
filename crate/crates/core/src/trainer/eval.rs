//! Evaluation of shapers and baselines over a launch-power grid.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Mode;
use crate::baselines::{am_metric, generate_candidates, select_sequence, BlockSource, EssSource, IidSource, ShaperSource, UniformSource};
use crate::channel::{am_propagate, dbm_to_w, AmKernels, ContextLayout, LinkParams};
use crate::constellation::{normalize_power, Constellation, Sign, SignPair};
use crate::matchers::EssTrellis;
use crate::metrics::{bce_sum, gaussian_llr, ls_gain, MetricRow};
use crate::neural::Shaper;
use crate::ssfm::DeskChain;
use crate::Error;

/// Symbol source under evaluation.
pub enum Scheme {
    /// Trained shaper; in [`Mode::Npas`] it emits unsigned amplitudes.
    Shaper { shaper: Shaper, mode: Mode, block_len: usize },
    Uniform { block_len: usize },
    /// Independent unsigned amplitudes with a fixed marginal.
    Iid { marginal: Vec<f64>, block_len: usize },
    Ess { trellis: EssTrellis },
}

impl Scheme {
    pub fn block_len(&self) -> usize {
        match self {
            Scheme::Shaper { block_len, .. } | Scheme::Uniform { block_len } | Scheme::Iid { block_len, .. } => *block_len,
            Scheme::Ess { trellis } => trellis.len(),
        }
    }

    fn signed(&self) -> bool {
        matches!(self, Scheme::Shaper { mode: Mode::Nps, .. })
    }

    fn source(&self, c: &Constellation) -> Result<Box<dyn BlockSource + '_>, Error> {
        Ok(match self {
            Scheme::Shaper { shaper, block_len, .. } => Box::new(ShaperSource {
                shaper: shaper.clone(),
                len: *block_len,
            }),
            Scheme::Uniform { block_len } => Box::new(UniformSource {
                alphabet: c.unsigned_size(),
                len: *block_len,
            }),
            Scheme::Iid { marginal, block_len } => Box::new(IidSource::new(marginal, *block_len)?),
            Scheme::Ess { trellis } => Box::new(EssSource::new(trellis.clone(), c)?),
        })
    }
}

/// Sequence selection applied to each block before transmission.
#[derive(Clone, Debug)]
pub struct Selection {
    pub candidates: usize,
    pub kernels: AmKernels,
    /// Nonlinear coefficient in 1/(W km); scaled by each launch power.
    pub gamma: f64,
}

/// Channel used for evaluation.
#[derive(Clone, Debug)]
pub enum EvalChannel {
    Ssfm(Box<DeskChain>),
    /// Perturbative model with additive noise of variance `sigma2`
    /// relative to the signal, or the link's amplifier noise.
    Am {
        kernels: Option<AmKernels>,
        link: LinkParams,
        sigma2: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub order: usize,
    pub powers_dbm: Vec<f64>,
    pub frames: usize,
    pub blocks_per_frame: usize,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

/// Per-frame measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    /// Point indices sent.
    pub points: Vec<usize>,
    /// `sum |h x|^2` over data symbols.
    pub signal: f64,
    /// `sum |y - h x|^2` over data symbols.
    pub error: f64,
    /// Per-block error energies, in the order of the blocks.
    pub block_errors: Vec<f64>,
    /// Per-block signal energies.
    pub block_signals: Vec<f64>,
    /// Data symbols.
    pub data_symbols: usize,
    /// Sum of bitwise cross entropies in bits over data symbols.
    pub bce: f64,
    /// Sum of sequence log-probabilities in nats, for shapers.
    pub log_prob: Option<f64>,
}

impl FrameResult {
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.signal / self.error).log10()
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub rows: Vec<MetricRow>,
    /// `frames[power][frame]`.
    pub frames: Vec<Vec<FrameResult>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generated frame before transmission.
struct Frame {
    points: Vec<usize>,
    log_prob: Option<f64>,
}

fn generate_frame(
    scheme: &Scheme,
    c: &Constellation,
    blocks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Frame, Error> {
    let l = scheme.block_len();
    let mut points = Vec::with_capacity(blocks * l);
    let mut log_prob = None;
    if let Scheme::Shaper { shaper, .. } = scheme {
        let mut total = 0.0;
        for _ in 0..blocks {
            let (seq, lp) = shaper.sample(l, rng);
            total += lp;
            if scheme.signed() {
                points.extend(seq);
            } else {
                points.extend(sign_up(c, &seq, rng));
            }
        }
        log_prob = Some(total);
    } else {
        let mut src = scheme.source(c)?;
        for _ in 0..blocks {
            let seq = src.next_block(rng);
            points.extend(sign_up(c, &seq, rng));
        }
    }
    Ok(Frame { points, log_prob })
}

fn sign_up(c: &Constellation, unsigned: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    unsigned
        .iter()
        .map(|&u| c.point_index(u, SignPair::new(Sign::from_bit(rng.gen()), Sign::from_bit(rng.gen()))))
        .collect()
}

/// Reorders each block of `points` to minimize the perturbative distortion
/// energy, scanning blocks left to right. Side context wraps around the
/// frame; blocks to the left are already selected.
pub fn select_frame(
    points: &mut [usize],
    block_len: usize,
    c: &Constellation,
    selection: &Selection,
    power_dbm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(), Error> {
    let layout = ContextLayout::for_kernels(block_len, &selection.kernels)?;
    let blocks = points.len() / block_len;
    let gamma_eff = selection.gamma * dbm_to_w(power_dbm);
    let scale = 1.0 / (points.iter().map(|&p| c.points()[p].norm_sqr()).sum::<f64>() / points.len() as f64).sqrt();
    let k = layout.k as isize;
    for b in 0..blocks {
        let base = points[b * block_len..(b + 1) * block_len].to_vec();
        let cands = generate_candidates(&base, selection.candidates, rng)?;
        let mut scores = Vec::with_capacity(cands.len());
        let mut ext = vec![Complex64::new(0.0, 0.0); layout.total_len()];
        for j in -k..=k {
            if j == 0 {
                continue;
            }
            let nb = (b as isize + j).rem_euclid(blocks as isize) as usize;
            let off = ((j + k) as usize) * block_len;
            for t in 0..block_len {
                ext[off + t] = c.points()[points[nb * block_len + t]] * scale;
            }
        }
        for cand in &cands {
            for (t, &p) in cand.symbols.iter().enumerate() {
                ext[layout.k * block_len + t] = c.points()[p] * scale;
            }
            scores.push(am_metric(&ext, &layout, &selection.kernels, gamma_eff)?);
        }
        let best = select_sequence(&scores)?;
        points[b * block_len..(b + 1) * block_len].copy_from_slice(&cands[best].symbols);
    }
    Ok(())
}

/// Entropy in bits of a probability vector.
pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum()
}

/// Empirical demapper prior over points.
fn empirical_prior(frames: &[Frame], c: &Constellation, signed: bool) -> Vec<f64> {
    let mut counts = vec![0.0; c.order()];
    let mut total = 0.0;
    for f in frames {
        for &p in &f.points {
            counts[p] += 1.0;
            total += 1.0;
        }
    }
    if signed {
        return counts.iter().map(|n| n / total).collect();
    }
    let mut amp = vec![0.0; c.unsigned_size()];
    for (p, n) in counts.iter().enumerate() {
        amp[c.unsigned_index(p)] += n;
    }
    (0..c.order()).map(|p| amp[c.unsigned_index(p)] / total / 4.0).collect()
}

/// Rate in bits per 2D symbol, undeducted and deducted by the matcher loss.
fn entropy_rates(scheme: &Scheme, c: &Constellation, frames: &[Frame], prior: &[f64]) -> (f64, f64) {
    let l = scheme.block_len() as f64;
    match scheme {
        Scheme::Shaper { mode, .. } => {
            let (lp, blocks) = frames.iter().fold((0.0, 0usize), |(s, n), f| {
                (s + f.log_prob.unwrap_or(0.0), n + f.points.len() / scheme.block_len())
            });
            let h = -lp / LN_2 / blocks as f64 / l + super::train::sign_bits(*mode);
            (h, h)
        }
        Scheme::Uniform { .. } => {
            let h = (c.order() as f64).log2();
            (h, h)
        }
        Scheme::Iid { marginal, .. } => {
            let total: f64 = marginal.iter().sum();
            let p: Vec<f64> = marginal.iter().map(|m| m / total).collect();
            let h = entropy_bits(&p) + 2.0;
            (h, h)
        }
        Scheme::Ess { trellis } => {
            let h = entropy_bits(prior);
            (h, 2.0 * trellis.bits() as f64 / l + 2.0)
        }
    }
}

struct Transmitted {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    data: Vec<usize>,
    scale: f64,
}

fn transmit(
    channel: &EvalChannel,
    c: &Constellation,
    points: &[usize],
    power_dbm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Transmitted, Error> {
    let raw: Vec<Complex64> = points.iter().map(|&p| c.points()[p]).collect();
    let (x, scale) = normalize_power(&raw, 1.0)?;
    match channel {
        EvalChannel::Ssfm(chain) => {
            let rx = chain.transmit(&x, power_dbm, rng)?;
            let data = rx.data_indices();
            Ok(Transmitted {
                x,
                y: rx.symbols,
                data,
                scale,
            })
        }
        EvalChannel::Am { kernels, link, sigma2 } => {
            let p = dbm_to_w(power_dbm);
            let s2 = sigma2.unwrap_or_else(|| link.ase_variance() / p);
            let y = match kernels {
                Some(k) => am_propagate(&x, k, link.gamma * p, s2, rng)?,
                None => {
                    let mut y = x.clone();
                    crate::channel::add_noise(&mut y, s2, rng);
                    y
                }
            };
            let data = (0..x.len()).collect();
            Ok(Transmitted { x, y, data, scale })
        }
    }
}

fn measure(
    tx: &Transmitted,
    points: &[usize],
    block_len: usize,
    c: &Constellation,
    prior: &[f64],
    log_prob: Option<f64>,
) -> Result<FrameResult, Error> {
    let xd: Vec<Complex64> = tx.data.iter().map(|&i| tx.x[i]).collect();
    let yd: Vec<Complex64> = tx.data.iter().map(|&i| tx.y[i]).collect();
    let h = ls_gain(&xd, &yd)?;
    let blocks = points.len() / block_len;
    let mut block_errors = vec![0.0; blocks];
    let mut block_signals = vec![0.0; blocks];
    for &i in &tx.data {
        block_errors[i / block_len] += (tx.y[i] - h * tx.x[i]).norm_sqr();
        block_signals[i / block_len] += (h * tx.x[i]).norm_sqr();
    }
    let signal: f64 = block_signals.iter().sum();
    let error: f64 = block_errors.iter().sum();
    let y_eq: Vec<Complex64> = yd.iter().map(|v| v / h).collect();
    let sigma2 = error / h.norm_sqr() / xd.len() as f64;
    let sent: Vec<usize> = tx.data.iter().map(|&i| points[i]).collect();
    let llr = gaussian_llr(&y_eq, &sent, c, tx.scale, sigma2.max(1e-300), prior)?;
    Ok(FrameResult {
        points: points.to_vec(),
        signal,
        error,
        block_errors,
        block_signals,
        data_symbols: xd.len(),
        bce: bce_sum(&llr),
        log_prob,
    })
}

/// Runs `scheme` through `channel` at every launch power.
pub fn evaluate(
    scheme: &Scheme,
    selection: Option<&Selection>,
    channel: &EvalChannel,
    settings: &EvalSettings,
) -> Result<Evaluation, Error> {
    let c = Constellation::qam(settings.order)?;
    if settings.frames == 0 || settings.blocks_per_frame == 0 {
        return Err(Error::InvalidArgument("need at least one frame of one block".into()));
    }
    if let Scheme::Shaper { shaper, mode, .. } = scheme {
        let expected = match mode {
            Mode::Npas => c.unsigned_size(),
            Mode::Nps => c.order(),
        };
        if shaper.alphabet() != expected {
            return Err(Error::InvalidArgument(format!(
                "shaper alphabet {} does not fit {}-QAM in {mode:?} mode",
                shaper.alphabet(),
                c.order()
            )));
        }
    }
    let l = scheme.block_len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut rows = Vec::with_capacity(settings.powers_dbm.len());
    let mut all = Vec::with_capacity(settings.powers_dbm.len());
    for (pi, &power) in settings.powers_dbm.iter().enumerate() {
        let frames: Vec<Frame> = pool.install(|| {
            use rayon::prelude::*;
            (0..settings.frames)
                .into_par_iter()
                .map(|f| {
                    let mut rng = stream_rng(settings.seed, 2 * f as u64);
                    let mut frame = generate_frame(scheme, &c, settings.blocks_per_frame, &mut rng)?;
                    if let Some(sel) = selection {
                        let mut rng = stream_rng(settings.seed, (((pi as u64) + 1) << 40) | (2 * f as u64));
                        select_frame(&mut frame.points, l, &c, sel, power, &mut rng)?;
                    }
                    Ok(frame)
                })
                .collect::<Result<Vec<_>, Error>>()
        })?;
        let prior = empirical_prior(&frames, &c, scheme.signed());
        let (h, h_deducted) = entropy_rates(scheme, &c, &frames, &prior);
        let results: Vec<FrameResult> = pool.install(|| {
            use rayon::prelude::*;
            frames
                .par_iter()
                .enumerate()
                .map(|(f, frame)| {
                    let mut rng = stream_rng(settings.seed, (((pi as u64) + 1) << 40) | (2 * f as u64 + 1));
                    let tx = transmit(channel, &c, &frame.points, power, &mut rng)?;
                    measure(&tx, &frame.points, l, &c, &prior, frame.log_prob)
                })
                .collect::<Result<Vec<_>, Error>>()
        })?;
        let signal: f64 = results.iter().map(|r| r.signal).sum();
        let error: f64 = results.iter().map(|r| r.error).sum();
        let symbols: usize = results.iter().map(|r| r.data_symbols).sum();
        let bce: f64 = results.iter().map(|r| r.bce).sum::<f64>() / symbols as f64;
        let snr = if error > 0.0 {
            (10.0 * (signal / error).log10()).min(crate::metrics::SNR_CAP_DB)
        } else {
            crate::metrics::SNR_CAP_DB
        };
        rows.push(MetricRow {
            power_dbm: power,
            snr_eff_db: snr,
            air: (h - bce).max(0.0),
            air_deducted: (h_deducted - bce).max(0.0),
            entropy: h,
            seed: settings.seed,
        });
        all.push(results);
    }
    Ok(Evaluation { rows, frames: all })
}

/// Empirical unsigned marginal of a shaper's output.
pub fn shaper_marginal(shaper: &Shaper, block_len: usize, blocks: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; shaper.alphabet()];
    for _ in 0..blocks {
        for u in shaper.sample(block_len, &mut rng).0 {
            counts[u] += 1.0;
        }
    }
    let total = (blocks * block_len) as f64;
    counts.iter().map(|n| n / total).collect()
}

/// `a:b:step` inclusive grid.
pub fn parse_power_grid(spec: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("power grid '{spec}': {e}")))?;
    match parts.as_slice() {
        [a] => Ok(vec![*a]),
        [a, b, step] if *step > 0.0 && b >= a => {
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(Error::InvalidArgument(format!(
            "power grid '{spec}' must be a:b:step with step > 0 and b >= a"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::AmplitudeAlphabet;
    use crate::metrics::render_csv;

    fn awgn(sigma2: f64) -> EvalChannel {
        EvalChannel::Am {
            kernels: None,
            link: LinkParams::desk(),
            sigma2: Some(sigma2),
        }
    }

    fn settings(order: usize, frames: usize) -> EvalSettings {
        EvalSettings {
            order,
            powers_dbm: vec![0.0],
            frames,
            blocks_per_frame: 256,
            seed: 5,
            jobs: 1,
        }
    }

    #[test]
    fn power_grid() {
        assert_eq!(parse_power_grid("-2:2:1").unwrap(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(parse_power_grid("3").unwrap(), vec![3.0]);
        assert!(parse_power_grid("2:1:1").is_err());
        assert!(parse_power_grid("a:b").is_err());
    }

    #[test]
    fn uniform_awgn_snr_and_air() {
        let sigma2 = 0.1;
        let ev = evaluate(&Scheme::Uniform { block_len: 8 }, None, &awgn(sigma2), &settings(16, 8)).unwrap();
        let row = &ev.rows[0];
        assert!((row.snr_eff_db - 10.0).abs() < 0.1, "{row:?}");
        assert_eq!(row.entropy, 4.0);
        assert!(row.air > 2.5 && row.air < 3.3, "{row:?}");
    }

    #[test]
    fn evaluation_is_reproducible_across_jobs() {
        let t = EssTrellis::at_least_rate(&AmplitudeAlphabet::odd(2), 8, 0.8).unwrap();
        let scheme = Scheme::Ess { trellis: t };
        let a = evaluate(&scheme, None, &awgn(0.05), &settings(16, 3)).unwrap();
        let b = evaluate(&scheme, None, &awgn(0.05), &EvalSettings { jobs: 2, ..settings(16, 3) }).unwrap();
        let cfg = serde_json::json!({});
        assert_eq!(render_csv(&a.rows, &cfg), render_csv(&b.rows, &cfg));
        assert!(a.rows[0].air_deducted <= a.rows[0].air + 1e-12);
    }

    #[test]
    fn selection_preserves_block_multisets() {
        let c = Constellation::qam(16).unwrap();
        let link = LinkParams::desk();
        let kernels = crate::channel::generate_kernels(&link, 3).unwrap();
        let sel = Selection {
            candidates: 8,
            kernels,
            gamma: link.gamma,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut points: Vec<usize> = (0..64).map(|_| rng.gen_range(0..16)).collect();
        let before = points.clone();
        select_frame(&mut points, 8, &c, &sel, 8.0, &mut rng).unwrap();
        assert_ne!(points, before);
        for (a, b) in points.chunks(8).zip(before.chunks(8)) {
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }
}
