//! Achievable rate versus block length.

use super::config::{Mode, TrainConfig};
use super::eval::{evaluate, EvalChannel, EvalSettings, Scheme};
use super::train::{train_problem, Problem};
use crate::metrics::render_table;
use crate::neural::Shaper;
use crate::Error;

pub const SWEEP_COLUMNS: [&str; 8] = [
    "L",
    "mode",
    "k",
    "snr_eff_dB",
    "air_bits_per_2D",
    "entropy_bits_per_2D",
    "diverged",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub block_len: usize,
    pub mode: Mode,
    pub context: usize,
    pub snr_eff_db: f64,
    pub air: f64,
    pub entropy: f64,
    pub diverged: bool,
    pub seed: u64,
}

impl SweepRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.block_len.to_string(),
            match self.mode {
                Mode::Npas => "npas".into(),
                Mode::Nps => "nps".into(),
            },
            self.context.to_string(),
            format!("{:.6}", self.snr_eff_db),
            format!("{:.6}", self.air),
            format!("{:.6}", self.entropy),
            self.diverged.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Evaluation symbols per sweep point.
pub const SWEEP_SYMBOLS_PER_FRAME: usize = 4096;

/// Trains both modes for each block length with the context derived from
/// the kernel memory and evaluates them on the perturbative channel at the
/// training launch power.
pub fn blocklength_sweep(template: &TrainConfig, lengths: &[usize], frames: usize) -> Result<Vec<SweepRow>, Error> {
    let mut rows = Vec::with_capacity(2 * lengths.len());
    for &l in lengths {
        for mode in [Mode::Npas, Mode::Nps] {
            let cfg = TrainConfig {
                block_len: l,
                mode,
                context: None,
                ..template.clone()
            };
            let problem = Problem::new(cfg)?;
            log::info!("training L={l} {mode:?} with k={}", problem.context);
            let outcome = train_problem(&problem)?;
            let channel = EvalChannel::Am {
                kernels: problem.kernels.clone(),
                link: problem.config.link.clone(),
                sigma2: problem.config.sigma2,
            };
            let settings = EvalSettings {
                order: problem.config.order,
                powers_dbm: vec![problem.config.link.launch_power_dbm],
                frames,
                blocks_per_frame: SWEEP_SYMBOLS_PER_FRAME.div_ceil(l),
                seed: problem.config.seed,
                jobs: 1,
            };
            let scheme = Scheme::Shaper {
                shaper: Shaper::new(outcome.params),
                mode,
                block_len: l,
            };
            let mut ev = evaluate(&scheme, None, &channel, &settings)?;
            let m = ev.rows.remove(0);
            rows.push(SweepRow {
                block_len: l,
                mode,
                context: problem.context,
                snr_eff_db: m.snr_eff_db,
                air: m.air,
                entropy: m.entropy,
                diverged: outcome.diverged.is_some(),
                seed: problem.config.seed,
            });
        }
    }
    Ok(rows)
}

pub fn render_sweep(rows: &[SweepRow], config: &serde_json::Value) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(SweepRow::cells).collect();
    render_table(&SWEEP_COLUMNS, &cells, config)
}
