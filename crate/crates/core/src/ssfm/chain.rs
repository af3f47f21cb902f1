//! Single-channel transmit/receive chain used for evaluation.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::amplifier::edfa;
use super::cpr::{cpr_pilot, pilot_mask, PILOT_SPACING};
use super::propagate::{Propagator, SsfmConfig, SsfmStats};
use super::rrc::{rrc_receive, rrc_shape};
use crate::channel::LinkParams;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskChain {
    pub link: LinkParams,
    pub sps: usize,
    pub rolloff: f64,
    pub rrc_span: usize,
    pub ssfm: SsfmConfig,
    /// Symbols per phase estimate.
    pub cpr_block: usize,
    /// Add amplifier noise.
    pub ase: bool,
}

impl Default for DeskChain {
    fn default() -> Self {
        Self {
            link: LinkParams::desk(),
            sps: 4,
            rolloff: 0.1,
            rrc_span: 64,
            ssfm: SsfmConfig::default(),
            cpr_block: 64 * PILOT_SPACING,
            ase: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reception {
    /// Received symbols in the units of the transmitted ones.
    pub symbols: Vec<Complex64>,
    pub pilots: Vec<bool>,
    pub stats: SsfmStats,
}

impl Reception {
    /// Indices of data (non-pilot) symbols.
    pub fn data_indices(&self) -> Vec<usize> {
        (0..self.pilots.len()).filter(|&i| !self.pilots[i]).collect()
    }
}

impl DeskChain {
    /// Sends a periodic frame of unit-power symbols at `power_dbm` and
    /// returns CD-compensated, matched-filtered, phase-corrected symbols.
    pub fn transmit<R: Rng + ?Sized>(&self, tx: &[Complex64], power_dbm: f64, rng: &mut R) -> Result<Reception, Error> {
        let mut link = self.link.clone();
        link.launch_power_dbm = power_dbm;
        link.validate()?;
        let p = link.launch_power_w();
        let amp = (self.sps as f64 * p).sqrt();
        let mut wf = rrc_shape(tx, self.rolloff, self.sps, self.rrc_span, link.symbol_rate_gbd)?;
        wf.rails[0].iter_mut().for_each(|v| *v *= amp);
        let prop = Propagator::new(wf.len(), wf.sample_rate_ghz);
        let stats = prop.propagate(&mut wf, &link, &self.ssfm)?;
        if self.ase {
            wf = edfa(&wf, link.span_loss_db(), link.noise_figure_db, link.carrier_hz(), rng)?;
        } else {
            let g = crate::channel::db_to_lin(link.span_loss_db()).sqrt();
            wf.rails[0].iter_mut().for_each(|v| *v *= g);
        }
        prop.cd_compensate(&mut wf, &link);
        let mut rx = rrc_receive(&wf, self.rolloff, self.sps, self.rrc_span)?.remove(0);
        rx.iter_mut().for_each(|v| *v /= amp);
        let pilots = pilot_mask(tx.len(), PILOT_SPACING);
        let symbols = cpr_pilot(&rx, tx, &pilots, self.cpr_block.min(tx.len()))?;
        Ok(Reception { symbols, pilots, stats })
    }

    /// SNR predicted from amplifier noise alone, in dB.
    pub fn ase_snr_db(&self, power_dbm: f64) -> f64 {
        let p = crate::channel::dbm_to_w(power_dbm);
        10.0 * (p / self.link.ase_variance()).log10()
    }
}
