//! Symmetric split-step Fourier propagation over one span.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{angular_grid, Spectral};
use super::waveform::Waveform;
use crate::channel::LinkParams;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    Scalar,
    Manakov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepPolicy {
    /// Constant step in km.
    Fixed { km: f64 },
    /// Each step is as long as allowed by the peak nonlinear phase.
    Adaptive { phase_cap: f64, max_km: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsfmConfig {
    pub step: StepPolicy,
    pub polarization: Polarization,
    /// Nonlinear phase cap checked for fixed steps.
    pub phase_cap: f64,
    /// Reject (rather than warn about) steps exceeding the cap.
    pub strict: bool,
    /// Coupling factor applied to the joint power in Manakov mode.
    pub manakov_factor: f64,
}

impl Default for SsfmConfig {
    fn default() -> Self {
        Self {
            step: StepPolicy::Adaptive {
                phase_cap: 1e-3,
                max_km: 1.0,
            },
            polarization: Polarization::Scalar,
            phase_cap: 1e-3,
            strict: false,
            manakov_factor: 8.0 / 9.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SsfmStats {
    pub steps: usize,
    pub max_phase: f64,
}

/// `int_{-h/2}^{h/2} e^{-a s} ds`, the loss-weighted length around a step
/// midpoint.
fn centered_length(alpha: f64, h: f64) -> f64 {
    if alpha * h < 1e-8 {
        h
    } else {
        2.0 / alpha * (alpha * h / 2.0).sinh()
    }
}

pub struct Propagator {
    plan: Spectral,
    omega: Vec<f64>,
}

impl Propagator {
    pub fn new(n: usize, sample_rate_ghz: f64) -> Self {
        Self {
            plan: Spectral::new(n),
            omega: angular_grid(n, sample_rate_ghz),
        }
    }

    fn linear(&self, rail: &mut [Complex64], beta2: f64, alpha: f64, h: f64) {
        self.plan.forward(rail);
        let amp = (-alpha / 2.0 * h).exp();
        for (v, w) in rail.iter_mut().zip(&self.omega) {
            *v *= Complex64::from_polar(amp, beta2 / 2.0 * w * w * h);
        }
        self.plan.inverse(rail);
    }

    fn peak_power(wf: &Waveform) -> f64 {
        let n = wf.len();
        (0..n)
            .map(|i| wf.rails.iter().map(|r| r[i].norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn propagate(&self, wf: &mut Waveform, link: &LinkParams, cfg: &SsfmConfig) -> Result<SsfmStats, Error> {
        if wf.len() != self.omega.len() {
            return Err(Error::LengthMismatch {
                expected: self.omega.len(),
                found: wf.len(),
            });
        }
        let rails = wf.rails.len();
        let (factor, joint) = match cfg.polarization {
            Polarization::Scalar if rails == 1 => (1.0, false),
            Polarization::Manakov if rails == 2 => (cfg.manakov_factor, true),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "{:?} propagation needs {} rails, waveform has {rails}",
                    cfg.polarization,
                    if cfg.polarization == Polarization::Scalar { 1 } else { 2 }
                )))
            }
        };
        let gamma = link.gamma * factor;
        let alpha = link.alpha();
        let beta2 = link.beta2();
        let total = link.span_km;
        let mut z = 0.0;
        let mut stats = SsfmStats::default();
        while z < total * (1.0 - 1e-12) {
            let remaining = total - z;
            let h = match cfg.step {
                StepPolicy::Fixed { km } => {
                    if !(km > 0.0) {
                        return Err(Error::InvalidArgument("step must be positive".into()));
                    }
                    km.min(remaining)
                }
                StepPolicy::Adaptive { phase_cap, max_km } => {
                    // Peak power at the step midpoint is bounded by the
                    // current peak, so this keeps the phase under the cap.
                    let p = Self::peak_power(wf);
                    let h = if gamma * p > 0.0 { phase_cap / (gamma * p) } else { remaining };
                    h.min(max_km).min(remaining)
                }
            };
            for rail in wf.rails.iter_mut() {
                self.linear(rail, beta2, alpha, h / 2.0);
            }
            let leff = centered_length(alpha, h);
            let mut max_phase = 0.0f64;
            if joint {
                let (a, b) = wf.rails.split_at_mut(1);
                for (u, v) in a[0].iter_mut().zip(b[0].iter_mut()) {
                    let phi = gamma * (u.norm_sqr() + v.norm_sqr()) * leff;
                    max_phase = max_phase.max(phi);
                    let rot = Complex64::from_polar(1.0, phi);
                    *u *= rot;
                    *v *= rot;
                }
            } else {
                for u in wf.rails[0].iter_mut() {
                    let phi = gamma * u.norm_sqr() * leff;
                    max_phase = max_phase.max(phi);
                    *u *= Complex64::from_polar(1.0, phi);
                }
            }
            for rail in wf.rails.iter_mut() {
                self.linear(rail, beta2, alpha, h / 2.0);
            }
            if max_phase > cfg.phase_cap * (1.0 + 1e-9) && matches!(cfg.step, StepPolicy::Fixed { .. }) {
                if cfg.strict {
                    return Err(Error::StepTooCoarse {
                        phase: max_phase,
                        cap: cfg.phase_cap,
                    });
                }
                log::warn!("nonlinear phase {max_phase:e} rad exceeds cap {:e}", cfg.phase_cap);
            }
            stats.max_phase = stats.max_phase.max(max_phase);
            stats.steps += 1;
            z += h;
        }
        Ok(stats)
    }

    /// Inverts the accumulated dispersion of the span.
    pub fn cd_compensate(&self, wf: &mut Waveform, link: &LinkParams) {
        for rail in wf.rails.iter_mut() {
            self.linear(rail, -link.beta2(), 0.0, link.span_km);
        }
    }
}

pub fn ssfm_propagate(wf: &Waveform, link: &LinkParams, cfg: &SsfmConfig) -> Result<(Waveform, SsfmStats), Error> {
    let prop = Propagator::new(wf.len(), wf.sample_rate_ghz);
    let mut out = wf.clone();
    let stats = prop.propagate(&mut out, link, cfg)?;
    Ok((out, stats))
}

pub fn cd_compensate(wf: &Waveform, link: &LinkParams) -> Waveform {
    let prop = Propagator::new(wf.len(), wf.sample_rate_ghz);
    let mut out = wf.clone();
    prop.cd_compensate(&mut out, link);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_wave(n: usize, seed: u64, power: f64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (power / 2.0).sqrt();
        Waveform::single(
            (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0) * s, rng.gen_range(-1.0..1.0) * s)).collect(),
            80.0,
        )
    }

    #[test]
    fn lossless_energy_is_conserved() {
        let link = LinkParams {
            attenuation_db_per_km: 1e-300,
            span_km: 50.0,
            ..LinkParams::desk()
        };
        let wf = noise_wave(1024, 1, 5e-3);
        let (out, stats) = ssfm_propagate(&wf, &link, &SsfmConfig::default()).unwrap();
        assert!(stats.steps > 10);
        assert!((out.energy() / wf.energy() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cw_spm_phase() {
        let link = LinkParams {
            dispersion: 1e-300,
            ..LinkParams::desk()
        };
        let p: f64 = 0.02;
        let wf = Waveform::single(vec![Complex64::new(p.sqrt(), 0.0); 64], 80.0);
        let (out, _) = ssfm_propagate(&wf, &link, &SsfmConfig::default()).unwrap();
        let expect = link.gamma * p * link.effective_length();
        for v in &out.rails[0] {
            assert!((v.arg() - expect).abs() < 1e-6, "{} vs {expect}", v.arg());
        }
    }

    #[test]
    fn manakov_reduces_to_scalar() {
        let link = LinkParams {
            span_km: 20.0,
            ..LinkParams::desk()
        };
        let a = noise_wave(512, 3, 1e-2);
        let cfg = SsfmConfig {
            step: StepPolicy::Fixed { km: 0.1 },
            phase_cap: 1.0,
            ..SsfmConfig::default()
        };
        let (scalar, _) = ssfm_propagate(&a, &link, &cfg).unwrap();
        let dual = Waveform::dual(a.rails[0].clone(), vec![Complex64::new(0.0, 0.0); 512], 80.0).unwrap();
        let mcfg = SsfmConfig {
            polarization: Polarization::Manakov,
            manakov_factor: 1.0,
            ..cfg.clone()
        };
        let (m, _) = ssfm_propagate(&dual, &link, &mcfg).unwrap();
        for (u, v) in m.rails[0].iter().zip(&scalar.rails[0]) {
            assert!((u - v).norm() < 1e-14);
        }
        assert!(m.rails[1].iter().all(|v| v.norm() == 0.0));
        assert!(ssfm_propagate(&dual, &link, &cfg).is_err());
    }

    #[test]
    fn strict_step_check() {
        let wf = noise_wave(256, 4, 0.1);
        let cfg = SsfmConfig {
            step: StepPolicy::Fixed { km: 10.0 },
            strict: true,
            ..SsfmConfig::default()
        };
        let err = ssfm_propagate(&wf, &LinkParams::desk(), &cfg).unwrap_err();
        assert!(matches!(err, Error::StepTooCoarse { .. }));
        let lenient = SsfmConfig { strict: false, ..cfg };
        assert!(ssfm_propagate(&wf, &LinkParams::desk(), &lenient).is_ok());
    }

    #[test]
    fn dispersion_round_trip() {
        let link = LinkParams {
            gamma: 1e-300,
            attenuation_db_per_km: 1e-300,
            ..LinkParams::desk()
        };
        let wf = noise_wave(2048, 5, 1e-3);
        let (out, _) = ssfm_propagate(&wf, &link, &SsfmConfig::default()).unwrap();
        let back = cd_compensate(&out, &link);
        assert!((back.energy() / out.energy() - 1.0).abs() < 1e-9);
        let err: f64 = back.rails[0].iter().zip(&wf.rails[0]).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(10.0 * (err / wf.energy()).log10() < -40.0);
    }
}
