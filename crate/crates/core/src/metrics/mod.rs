//! Demapping, information rates and signal quality.

pub mod llr;
pub mod loss;
pub mod report;
pub mod snr;

pub use llr::{gaussian_llr, gaussian_llr_tape, LlrBlock, LLR_CLAMP};
pub use loss::{adjusted_bce_loss, air_estimate, bce_sum, bce_tape, bit_cost, sequence_entropy_rate, LossParts};
pub use report::{config_hash, render_csv, render_table, MetricRow, CSV_COLUMNS};
pub use snr::{effective_snr, fitted_noise_variance, ls_gain, SNR_CAP_DB};
