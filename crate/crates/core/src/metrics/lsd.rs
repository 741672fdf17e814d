use super::MetricsError;
use crate::audio::{stft_magnitude, AudioError, Spectrogram, StftParams, Waveform};

pub const DEFAULT_LSD_EPS: f64 = 1e-10;

/// Log-spectral distance between two magnitude spectrograms with the same
/// shape: mean over frames of the RMS over bins of the log10-power difference.
pub fn lsd_spectrograms(a: &Spectrogram, b: &Spectrogram, eps: f64) -> Result<f64, MetricsError> {
    if a.frames() != b.frames() || a.bins() != b.bins() {
        return Err(MetricsError::Shape(format!(
            "spectrograms {}x{} and {}x{}",
            a.frames(),
            a.bins(),
            b.frames(),
            b.bins()
        )));
    }
    if a.frames() == 0 {
        return Err(MetricsError::Shape("no frames".into()));
    }
    let total: f64 = (0..a.frames())
        .map(|t| {
            let sq: f64 = a
                .frame(t)
                .iter()
                .zip(b.frame(t))
                .map(|(x, y)| {
                    let d = (x * x + eps).log10() - (y * y + eps).log10();
                    d * d
                })
                .sum();
            (sq / a.bins() as f64).sqrt()
        })
        .sum();
    Ok(total / a.frames() as f64)
}

/// LSD between two waveforms; the longer one is truncated to the shorter.
pub fn lsd(reference: &Waveform, generated: &Waveform, params: &StftParams, eps: f64) -> Result<f64, MetricsError> {
    if reference.sample_rate_hz() != generated.sample_rate_hz() {
        return Err(AudioError::RateMismatch(reference.sample_rate_hz(), generated.sample_rate_hz()).into());
    }
    let n = reference.len().min(generated.len());
    let a = stft_magnitude(&reference.slice(0, n), params)?;
    let b = stft_magnitude(&generated.slice(0, n), params)?;
    lsd_spectrograms(&a, &b, eps)
}
