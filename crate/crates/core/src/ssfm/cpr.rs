//! Pilot-aided carrier-phase recovery.

use num_complex::Complex64;

use crate::Error;

/// Spacing of pilot symbols for a 2.5% pilot rate.
pub const PILOT_SPACING: usize = 40;

/// Every `spacing`-th symbol is a pilot, starting at index 0.
pub fn pilot_mask(len: usize, spacing: usize) -> Vec<bool> {
    (0..len).map(|i| i % spacing == 0).collect()
}

/// Estimates one phase per block of `block` symbols from the pilots,
/// interpolates linearly between block centers (holding the end values)
/// and derotates every symbol.
pub fn cpr_pilot(
    received: &[Complex64],
    transmitted: &[Complex64],
    mask: &[bool],
    block: usize,
) -> Result<Vec<Complex64>, Error> {
    let n = received.len();
    if transmitted.len() != n || mask.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: transmitted.len().min(mask.len()),
        });
    }
    if block == 0 {
        return Err(Error::InvalidArgument("block length must be positive".into()));
    }
    let mut centers = Vec::new();
    let mut phases: Vec<f64> = Vec::new();
    for start in (0..n).step_by(block) {
        let end = (start + block).min(n);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut any = false;
        for i in start..end {
            if mask[i] {
                acc += received[i] * transmitted[i].conj();
                any = true;
            }
        }
        if !any {
            return Err(Error::InvalidArgument(format!("no pilots in block starting at {start}")));
        }
        let mut theta = acc.arg();
        if let Some(&prev) = phases.last() {
            // Unwrap relative to the previous block.
            theta += (2.0 * std::f64::consts::PI) * ((prev - theta) / (2.0 * std::f64::consts::PI)).round();
        }
        phases.push(theta);
        centers.push((start + end - 1) as f64 / 2.0);
    }
    let phase_at = |t: f64| -> f64 {
        if t <= centers[0] {
            return phases[0];
        }
        let last = centers.len() - 1;
        if t >= centers[last] {
            return phases[last];
        }
        let j = centers.partition_point(|&c| c <= t) - 1;
        let w = (t - centers[j]) / (centers[j + 1] - centers[j]);
        phases[j] * (1.0 - w) + phases[j + 1] * w
    };
    Ok(received
        .iter()
        .enumerate()
        .map(|(i, y)| y * Complex64::from_polar(1.0, -phase_at(i as f64)))
        .collect())
}
