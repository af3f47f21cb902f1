use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::waveform::Waveform;
use crate::channel::link::{ase_psd, db_to_lin};
use crate::Error;

/// Scales the field by `sqrt(G)` and adds ASE with PSD `(G - 1) n_sp h nu`
/// per polarization over the full simulation bandwidth.
pub fn edfa<R: Rng + ?Sized>(
    wf: &Waveform,
    gain_db: f64,
    noise_figure_db: f64,
    carrier_hz: f64,
    rng: &mut R,
) -> Result<Waveform, Error> {
    if !(gain_db >= 0.0) {
        return Err(Error::InvalidArgument(format!("gain must be at least 0 dB, got {gain_db}")));
    }
    let g = db_to_lin(gain_db).sqrt();
    let variance = ase_psd(gain_db, noise_figure_db, carrier_hz) * wf.sample_rate_ghz * 1e9;
    let sd = (variance / 2.0).sqrt();
    let mut out = wf.clone();
    for rail in out.rails.iter_mut() {
        for v in rail.iter_mut() {
            *v *= g;
            if sd > 0.0 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *v += Complex64::new(sd * re, sd * im);
            }
        }
    }
    Ok(out)
}
