//! Metric CSV output.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

pub const CSV_COLUMNS: &str =
    "power_dBm,snr_eff_dB,air_bits_per_2D,air_deducted_bits_per_2D,entropy_bits_per_2D,seed";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub power_dbm: f64,
    pub snr_eff_db: f64,
    pub air: f64,
    /// AIR minus the matcher rate loss.
    pub air_deducted: f64,
    pub entropy: f64,
    pub seed: u64,
}

/// Hex SHA-256 of a configuration's canonical JSON.
pub fn config_hash(config: &serde_json::Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Renders rows with a leading comment carrying the tool version and the
/// configuration hash. Floats use a fixed number of decimals so identical
/// runs give identical bytes.
pub fn render_csv(rows: &[MetricRow], config: &serde_json::Value) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# npas {} schema=1 config_sha256={}",
        env!("CARGO_PKG_VERSION"),
        config_hash(config)
    )
    .unwrap();
    writeln!(out, "{CSV_COLUMNS}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{}",
            r.power_dbm, r.snr_eff_db, r.air, r.air_deducted, r.entropy, r.seed
        )
        .unwrap();
    }
    out
}

/// Generic table with the same header comment, used for sweeps.
pub fn render_table(columns: &[&str], rows: &[Vec<String>], config: &serde_json::Value) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# npas {} schema=1 config_sha256={}",
        env!("CARGO_PKG_VERSION"),
        config_hash(config)
    )
    .unwrap();
    writeln!(out, "{}", columns.join(",")).unwrap();
    for r in rows {
        writeln!(out, "{}", r.join(",")).unwrap();
    }
    out
}
