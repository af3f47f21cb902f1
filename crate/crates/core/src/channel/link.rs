use serde::{Deserialize, Serialize};

use crate::Error;

/// Speed of light in nm/ps.
pub const C_NM_PER_PS: f64 = 2.997_924_58e5;
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Single-span fiber link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    pub span_km: f64,
    pub attenuation_db_per_km: f64,
    /// ps/nm/km
    pub dispersion: f64,
    /// 1/(W km)
    pub gamma: f64,
    pub symbol_rate_gbd: f64,
    pub wavelength_nm: f64,
    pub noise_figure_db: f64,
    pub launch_power_dbm: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self::desk()
    }
}

impl LinkParams {
    /// Single-channel laboratory-scale link used by the tests and defaults.
    pub fn desk() -> Self {
        Self {
            span_km: 205.0,
            attenuation_db_per_km: 0.2,
            dispersion: 17.0,
            gamma: 1.3,
            symbol_rate_gbd: 20.0,
            wavelength_nm: 1550.0,
            noise_figure_db: 5.0,
            launch_power_dbm: 0.0,
        }
    }

    /// Full-rate configuration (50 GBd per channel).
    pub fn full_rate() -> Self {
        Self {
            symbol_rate_gbd: 50.0,
            ..Self::desk()
        }
    }

    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), Error> {
        let checks = [
            ("span_km", self.span_km),
            ("attenuation_db_per_km", self.attenuation_db_per_km),
            ("dispersion", self.dispersion),
            ("symbol_rate_gbd", self.symbol_rate_gbd),
            ("wavelength_nm", self.wavelength_nm),
            ("noise_figure_db", self.noise_figure_db),
        ];
        for (name, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        if !self.launch_power_dbm.is_finite() {
            return Err(Error::Config("launch_power_dbm must be finite".into()));
        }
        Ok(())
    }

    /// Group-velocity dispersion in ps^2/km.
    pub fn beta2(&self) -> f64 {
        -self.dispersion * self.wavelength_nm.powi(2) / (2.0 * std::f64::consts::PI * C_NM_PER_PS)
    }

    /// Power attenuation in 1/km.
    pub fn alpha(&self) -> f64 {
        self.attenuation_db_per_km * std::f64::consts::LN_10 / 10.0
    }

    pub fn effective_length(&self) -> f64 {
        let a = self.alpha();
        if a == 0.0 {
            self.span_km
        } else {
            (1.0 - (-a * self.span_km).exp()) / a
        }
    }

    /// Symbol period in ps.
    pub fn symbol_period(&self) -> f64 {
        1000.0 / self.symbol_rate_gbd
    }

    pub fn span_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.span_km
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_w(self.launch_power_dbm)
    }

    /// Carrier frequency in Hz.
    pub fn carrier_hz(&self) -> f64 {
        C_NM_PER_PS / self.wavelength_nm * 1e12
    }

    /// ASE variance in W over the symbol bandwidth for an amplifier that
    /// exactly compensates the span loss.
    pub fn ase_variance(&self) -> f64 {
        ase_psd(self.span_loss_db(), self.noise_figure_db, self.carrier_hz()) * self.symbol_rate_gbd * 1e9
    }
}

/// ASE power spectral density per polarization in W/Hz.
pub fn ase_psd(gain_db: f64, noise_figure_db: f64, carrier_hz: f64) -> f64 {
    let g = db_to_lin(gain_db);
    if g <= 1.0 {
        return 0.0;
    }
    let nf = db_to_lin(noise_figure_db);
    let n_sp = ((nf * g - 1.0) / (2.0 * (g - 1.0))).max(0.0);
    (g - 1.0) * n_sp * PLANCK * carrier_hz
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * db_to_lin(dbm)
}
