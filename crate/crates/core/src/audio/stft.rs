use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{AudioError, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    /// Periodic Hann.
    #[default]
    Hann,
    /// Periodic Hamming.
    Hamming,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    Window::Rectangular => 1.0,
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

/// One-sided magnitude spectrogram stored frame-major: `frames x bins`,
/// `bins = frame_len / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    frames: usize,
    bins: usize,
    params: StftParams,
}

impl Spectrogram {
    /// Builds a spectrogram from raw magnitudes (entries must be finite and
    /// non-negative).
    pub fn from_magnitudes(
        magnitudes: Vec<f64>,
        frames: usize,
        bins: usize,
        params: StftParams,
    ) -> Result<Self, AudioError> {
        if magnitudes.len() != frames * bins {
            return Err(AudioError::InvalidParameter(format!(
                "{} magnitudes for a {frames}x{bins} grid",
                magnitudes.len()
            )));
        }
        if let Some(bad) = magnitudes.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(AudioError::InvalidParameter(format!(
                "magnitude {bad} is not a finite non-negative value"
            )));
        }
        Ok(Self {
            magnitudes,
            frames,
            bins,
            params,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes[t * self.bins..(t + 1) * self.bins]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }
}

pub fn stft_magnitude(w: &Waveform, params: &StftParams) -> Result<Spectrogram, AudioError> {
    let StftParams {
        frame_len, hop, ..
    } = *params;
    if hop == 0 || frame_len < hop {
        return Err(AudioError::InvalidParameter(format!(
            "need frame_len >= hop >= 1, got frame_len {frame_len}, hop {hop}"
        )));
    }
    if w.len() < frame_len {
        return Err(AudioError::TooShort {
            len: w.len(),
            frame_len,
        });
    }

    let frames = 1 + (w.len() - frame_len) / hop;
    let bins = frame_len / 2 + 1;
    let window = params.window.coefficients(frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let mut buffer = vec![Complex::new(0.0, 0.0); frame_len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut magnitudes = Vec::with_capacity(frames * bins);

    for t in 0..frames {
        let frame = &w.samples()[t * hop..t * hop + frame_len];
        for ((slot, x), win) in buffer.iter_mut().zip(frame).zip(&window) {
            *slot = Complex::new(x * win, 0.0);
        }
        fft.process_with_scratch(&mut buffer, &mut scratch);
        magnitudes.extend(buffer[..bins].iter().map(|c| c.norm()));
    }

    Ok(Spectrogram {
        magnitudes,
        frames,
        bins,
        params: *params,
    })
}
