//! Mono waveform representation and the signal-level operations every other
//! module builds on: WAV I/O, gain and SNR-targeted mixing, band-limited
//! resampling (used for speed changes), and STFT magnitudes.

mod dsp;
mod resample;
mod stft;
mod wav;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dsp::{
    apply_gain_db, db_to_amplitude, mix_at_snr, peak, rms, snr_scale, soft_normalize, Mix,
    SOFT_NORMALIZE_CEILING,
};
pub use resample::{resample, time_stretch, SPEED_GUARD_MAX, SPEED_GUARD_MIN};
pub use stft::{stft_magnitude, Spectrogram, StftParams, Window};
pub use wav::{
    load_wav, load_wav_at, save_wav, save_wav_with, BitDepth, ClipPolicy, SaveReport,
};

/// Internal working rate; every loaded clip is resampled to this.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("waveform is empty")]
    Empty,
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed wav file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("unsupported wav encoding in {path}: {detail}")]
    Unsupported { path: PathBuf, detail: String },
    #[error("wav file {0} contains no audio")]
    ZeroLength(PathBuf),
    #[error("{count} samples exceed full scale")]
    Clipping { count: usize },
    #[error("{0} is silent; SNR is undefined")]
    Silent(&'static str),
    #[error("waveform of {len} samples is shorter than one {frame_len}-sample frame")]
    TooShort { len: usize, frame_len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Mono sample buffer. Samples are nominally in [-1, 1] and always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite { index });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Result<Self, AudioError> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    /// Callers guarantee finiteness; used on buffers produced by our own kernels.
    pub(crate) fn from_trusted(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        debug_assert!(sample_rate_hz > 0);
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Samples `[start, end)`, clipped to the buffer.
    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Self::from_trusted(self.samples[start..end].to_vec(), self.sample_rate_hz)
    }
}

/// SHA-256 (hex) of the samples as little-endian f32, i.e. of exactly what a
/// float32 WAV stores.
pub fn f32_checksum(w: &Waveform) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for s in w.samples() {
        h.update((*s as f32).to_le_bytes());
    }
    hex::encode(h.finalize())
}

macro_rules! decibel_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
        #[serde(try_from = "f64", into = "f64")]
        pub struct $name(f64);

        impl $name {
            pub fn new(db: f64) -> Result<Self, AudioError> {
                if db.is_finite() {
                    Ok(Self(db))
                } else {
                    Err(AudioError::InvalidParameter(format!(
                        "{} must be finite, got {db}",
                        stringify!($name)
                    )))
                }
            }

            pub fn db(self) -> f64 {
                self.0
            }

            /// Linear amplitude ratio `10^(db/20)`.
            pub fn amplitude(self) -> f64 {
                db_to_amplitude(self.0)
            }
        }

        impl TryFrom<f64> for $name {
            type Error = AudioError;
            fn try_from(db: f64) -> Result<Self, AudioError> {
                Self::new(db)
            }
        }

        impl From<$name> for f64 {
            fn from(v: $name) -> f64 {
                v.0
            }
        }
    };
}

decibel_newtype!(
    /// Gain change in decibels.
    GainDb
);
decibel_newtype!(
    /// Foreground-to-reference level ratio in decibels (RMS based).
    SnrDb
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_samples() {
        let err = Waveform::new(vec![0.0, f64::NAN], 16_000).unwrap_err();
        assert!(matches!(err, AudioError::NonFinite { index: 1 }));
        assert!(matches!(
            Waveform::new(vec![0.0], 0),
            Err(AudioError::ZeroSampleRate)
        ));
    }

    #[test]
    fn decibels_must_be_finite() {
        assert!(GainDb::new(f64::INFINITY).is_err());
        assert!(SnrDb::new(f64::NEG_INFINITY).is_err());
        assert_eq!(GainDb::new(20.0).unwrap().amplitude(), 10.0);
        let parsed: SnrDb = serde_json::from_str("12.5").unwrap();
        assert_eq!(parsed.db(), 12.5);
    }
}
