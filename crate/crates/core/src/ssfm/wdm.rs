//! Frequency multiplexing on the FFT grid of periodic frames.

use num_complex::Complex64;

use super::fft::Spectral;
use super::waveform::Waveform;
use crate::Error;

/// Offset of a frequency in whole FFT bins; frames are periodic so shifts
/// must land on the grid.
fn bins(offset_ghz: f64, n: usize, fs: f64) -> Result<isize, Error> {
    let b = offset_ghz / fs * n as f64;
    let r = b.round();
    if (b - r).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "offset {offset_ghz} GHz is not a multiple of the {} GHz bin width",
            fs / n as f64
        )));
    }
    Ok(r as isize)
}

fn shift(rail: &[Complex64], k: isize, lowpass: Option<usize>, plan: &Spectral) -> Vec<Complex64> {
    let n = rail.len();
    let mut spec = rail.to_vec();
    plan.forward(&mut spec);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, v) in spec.iter().enumerate() {
        out[(i as isize + k).rem_euclid(n as isize) as usize] = *v;
    }
    if let Some(half) = lowpass {
        for (i, v) in out.iter_mut().enumerate() {
            let f = if i <= n / 2 { i } else { n - i };
            if f > half {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }
    plan.inverse(&mut out);
    out
}

/// Channel centers for `count` channels on a grid symmetric around 0.
pub fn channel_offsets(count: usize, spacing_ghz: f64) -> Vec<f64> {
    (0..count)
        .map(|i| (i as f64 - (count as f64 - 1.0) / 2.0) * spacing_ghz)
        .collect()
}

/// Superposition of channels shifted to `channel_offsets`. Each channel
/// occupies `bandwidth_ghz` around its center.
pub fn wdm_mux(channels: &[Waveform], spacing_ghz: f64, bandwidth_ghz: f64) -> Result<Waveform, Error> {
    let first = channels
        .first()
        .ok_or_else(|| Error::InvalidArgument("no channels to multiplex".into()))?;
    let (n, fs, rails) = (first.len(), first.sample_rate_ghz, first.rails.len());
    if channels.iter().any(|c| c.len() != n || c.sample_rate_ghz != fs || c.rails.len() != rails) {
        return Err(Error::InvalidArgument("channels differ in length, rate or rails".into()));
    }
    let offsets = channel_offsets(channels.len(), spacing_ghz);
    let edge = offsets.iter().fold(0.0f64, |m, f| m.max(f.abs())) + bandwidth_ghz / 2.0;
    if edge > fs / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "aliasing: band edge {edge} GHz exceeds Nyquist {} GHz",
            fs / 2.0
        )));
    }
    let plan = Spectral::new(n);
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; rails];
    for (ch, &f) in channels.iter().zip(&offsets) {
        let k = bins(f, n, fs)?;
        for (acc, rail) in out.iter_mut().zip(&ch.rails) {
            for (a, b) in acc.iter_mut().zip(shift(rail, k, None, &plan)) {
                *a += b;
            }
        }
    }
    Ok(Waveform {
        rails: out,
        sample_rate_ghz: fs,
        offset_ghz: 0.0,
    })
}

/// Brings the channel centered at `offset_ghz` to baseband, keeps
/// `|f| <= bandwidth_ghz / 2` and keeps every `decimation`-th sample.
pub fn wdm_demux(wf: &Waveform, offset_ghz: f64, bandwidth_ghz: f64, decimation: usize) -> Result<Waveform, Error> {
    let n = wf.len();
    let fs = wf.sample_rate_ghz;
    if decimation == 0 || !n.is_multiple_of(decimation) {
        return Err(Error::InvalidArgument("decimation must divide the frame length".into()));
    }
    if bandwidth_ghz / 2.0 > fs / decimation as f64 / 2.0 {
        return Err(Error::InvalidArgument("aliasing: decimated rate is below the channel bandwidth".into()));
    }
    let k = bins(offset_ghz, n, fs)?;
    let half = (bandwidth_ghz / 2.0 / fs * n as f64).floor() as usize;
    let plan = Spectral::new(n);
    let rails = wf
        .rails
        .iter()
        .map(|r| shift(r, -k, Some(half), &plan).into_iter().step_by(decimation).collect())
        .collect();
    Ok(Waveform {
        rails,
        sample_rate_ghz: fs / decimation as f64,
        offset_ghz: 0.0,
    })
}
