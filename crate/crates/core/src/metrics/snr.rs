use num_complex::Complex64;

use crate::Error;

pub const SNR_CAP_DB: f64 = 60.0;

/// Least-squares gain `h = sum y x* / sum |x|^2`.
pub fn ls_gain(x: &[Complex64], y: &[Complex64]) -> Result<Complex64, Error> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let px: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if !(px > 0.0) {
        return Err(Error::InvalidArgument("transmitted block has zero power".into()));
    }
    let num: Complex64 = y.iter().zip(x).map(|(a, b)| a * b.conj()).sum();
    Ok(num / px)
}

/// `|h|^2 mean|x|^2 / mean|y - h x|^2` in dB, capped at 60 dB.
pub fn effective_snr(x: &[Complex64], y: &[Complex64]) -> Result<f64, Error> {
    let h = ls_gain(x, y)?;
    let n = x.len() as f64;
    let px = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    let pe = y.iter().zip(x).map(|(a, b)| (a - h * b).norm_sqr()).sum::<f64>() / n;
    let snr = h.norm_sqr() * px / pe;
    if !(snr.is_finite()) || snr > 10f64.powf(SNR_CAP_DB / 10.0) {
        return Ok(SNR_CAP_DB);
    }
    Ok(10.0 * snr.log10())
}

/// Noise variance implied by the least-squares fit, in units of `|h x|^2`.
pub fn fitted_noise_variance(x: &[Complex64], y: &[Complex64]) -> Result<f64, Error> {
    let h = ls_gain(x, y)?;
    let n = x.len() as f64;
    let pe = y.iter().zip(x).map(|(a, b)| (a - h * b).norm_sqr()).sum::<f64>() / n;
    Ok(pe / h.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caps() {
        let x: Vec<Complex64> = (0..100).map(|i| Complex64::new(i as f64, 1.0)).collect();
        assert_eq!(effective_snr(&x, &x).unwrap(), SNR_CAP_DB);
        let y: Vec<Complex64> = x.iter().map(|v| v * 2.0).collect();
        assert_eq!(effective_snr(&x, &y).unwrap(), SNR_CAP_DB);
        assert!(effective_snr(&[Complex64::new(0.0, 0.0)], &[Complex64::new(1.0, 0.0)]).is_err());
        assert!(effective_snr(&x, &x[..3]).is_err());
    }

    #[test]
    fn rotation_and_gain_are_absorbed() {
        let x: Vec<Complex64> = (0..64).map(|i| Complex64::from_polar(1.0, i as f64)).collect();
        let h = Complex64::from_polar(0.3, 1.1);
        let mut y: Vec<Complex64> = x.iter().map(|v| v * h).collect();
        y[0] += Complex64::new(0.03, 0.0);
        let snr = effective_snr(&x, &y).unwrap();
        assert!(snr > 30.0 && snr < 60.0);
    }
}
