//! Root-raised-cosine shaping and matched filtering on periodic frames.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::Spectral;
use super::waveform::Waveform;
use crate::Error;

/// Unit-energy RRC taps spanning `span` symbols (`span * sps + 1` taps,
/// centered, so the delay is `span * sps / 2` samples).
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Result<Vec<f64>, Error> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::InvalidArgument(format!("rolloff must be in (0, 1], got {rolloff}")));
    }
    if sps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples per symbol, got {sps}")));
    }
    let n = span * sps;
    let b = rolloff;
    let mut taps: Vec<f64> = (0..=n)
        .map(|i| {
            let t = (i as f64 - n as f64 / 2.0) / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if (4.0 * b * t).abs() == 1.0 {
                b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
                let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
                num / den
            }
        })
        .collect();
    let e: f64 = taps.iter().map(|x| x * x).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|x| *x /= e);
    Ok(taps)
}

/// Circular convolution of `x` with centered `taps`.
fn circular_filter(x: &mut [Complex64], taps: &[f64], plan: &Spectral) {
    let n = x.len();
    let center = (taps.len() - 1) / 2;
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for (i, &t) in taps.iter().enumerate() {
        let idx = (i as isize - center as isize).rem_euclid(n as isize) as usize;
        h[idx] += t;
    }
    plan.forward(&mut h);
    plan.forward(x);
    for (a, b) in x.iter_mut().zip(&h) {
        *a *= b;
    }
    plan.inverse(x);
}

/// Pulse shaping of a periodic symbol frame. Sample `k * sps` is centered on
/// symbol `k`.
pub fn rrc_shape(
    symbols: &[Complex64],
    rolloff: f64,
    sps: usize,
    span: usize,
    symbol_rate_gbd: f64,
) -> Result<Waveform, Error> {
    let taps = rrc_taps(rolloff, sps, span)?;
    let n = symbols.len() * sps;
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for (k, s) in symbols.iter().enumerate() {
        x[k * sps] = *s;
    }
    circular_filter(&mut x, &taps, &Spectral::new(n));
    Ok(Waveform::single(x, symbol_rate_gbd * sps as f64))
}

/// Matched filter and downsampling of every rail.
pub fn rrc_receive(wf: &Waveform, rolloff: f64, sps: usize, span: usize) -> Result<Vec<Vec<Complex64>>, Error> {
    let taps = rrc_taps(rolloff, sps, span)?;
    if !wf.len().is_multiple_of(sps) {
        return Err(Error::InvalidArgument("waveform length is not a multiple of sps".into()));
    }
    let plan = Spectral::new(wf.len());
    Ok(wf
        .rails
        .iter()
        .map(|rail| {
            let mut x = rail.clone();
            circular_filter(&mut x, &taps, &plan);
            x.iter().step_by(sps).copied().collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_energy_and_symmetry() {
        let taps = rrc_taps(0.1, 4, 64).unwrap();
        assert_eq!(taps.len(), 257);
        assert!((taps.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..taps.len() {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
        }
        assert!(rrc_taps(0.0, 4, 8).is_err());
        assert!(rrc_taps(0.1, 1, 8).is_err());
    }

    #[test]
    fn cascade_is_nyquist() {
        let sps = 4;
        let taps = rrc_taps(0.1, sps, 64).unwrap();
        let n = taps.len();
        let mut rc = vec![0.0; 2 * n - 1];
        for i in 0..n {
            for j in 0..n {
                rc[i + j] += taps[i] * taps[j];
            }
        }
        let peak = rc[n - 1];
        for k in 1..64 {
            let off = rc[n - 1 + k * sps].abs().max(rc[n - 1 - k * sps].abs());
            assert!(off < 1e-3 * peak, "k={k} {off}");
        }
    }

    #[test]
    fn impulse_gives_taps() {
        let mut syms = vec![Complex64::new(0.0, 0.0); 128];
        syms[64] = Complex64::new(1.0, 0.0);
        let wf = rrc_shape(&syms, 0.25, 2, 16, 10.0).unwrap();
        let taps = rrc_taps(0.25, 2, 16).unwrap();
        for (i, t) in taps.iter().enumerate() {
            let got = wf.rails[0][64 * 2 - 16 + i];
            assert!((got.re - t).abs() < 1e-12 && got.im.abs() < 1e-12);
        }
    }

    #[test]
    fn half_power_bandwidth() {
        // Raised-cosine cascade is 1/2 at f = Rs/2, so the RRC is 1/sqrt(2)
        // there: the -3 dB two-sided bandwidth of the RRC power spectrum is Rs.
        let sps = 8;
        let taps = rrc_taps(0.2, sps, 64).unwrap();
        let n = 1 << 16;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, t) in taps.iter().enumerate() {
            buf[i] = Complex64::new(*t, 0.0);
        }
        Spectral::new(n).forward(&mut buf);
        let p: Vec<f64> = buf.iter().map(|v| v.norm_sqr()).collect();
        let peak = p[0];
        let edge = (0..n / 2).find(|&k| p[k] < 0.5 * peak).unwrap();
        let f = edge as f64 / n as f64 * sps as f64;
        assert!((2.0 * f - 1.0).abs() < 0.02, "{f}");
    }

    #[test]
    fn shape_then_match_recovers_symbols() {
        let syms: Vec<Complex64> = (0..256).map(|k| Complex64::from_polar(1.0, 0.7 * k as f64)).collect();
        let wf = rrc_shape(&syms, 0.1, 4, 64, 20.0).unwrap();
        let back = rrc_receive(&wf, 0.1, 4, 64).unwrap();
        let err = back[0].iter().zip(&syms).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / 256.0;
        assert!(10.0 * err.log10() < -40.0);
    }
}
