//! Kaiser-windowed sinc interpolation. Speed changes are plain playback-rate
//! changes (pitch moves with speed), computed by reading the input at a
//! fractional step and low-passing to the narrower of the two bandwidths.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{AudioError, Waveform};

pub const SPEED_GUARD_MIN: f64 = 0.25;
pub const SPEED_GUARD_MAX: f64 = 4.0;

/// Zero crossings of the sinc kernel on each side, at unit cutoff.
const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;

fn bessel_i0(x: f64) -> f64 {
    let half_sq = (x / 2.0) * (x / 2.0);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= half_sq / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Table resolution per zero crossing; linear interpolation between entries.
const TABLE_RESOLUTION: usize = 2048;

/// Windowed sinc at unit cutoff sampled on `[0, ZERO_CROSSINGS]`.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ZERO_CROSSINGS as usize * TABLE_RESOLUTION;
        let norm = bessel_i0(KAISER_BETA);
        (0..=n + 1)
            .map(|i| {
                let u = i as f64 / TABLE_RESOLUTION as f64;
                let r = u / ZERO_CROSSINGS;
                if r >= 1.0 {
                    return 0.0;
                }
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                let sinc = if u == 0.0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                sinc * window
            })
            .collect()
    })
}

struct SincKernel {
    cutoff: f64,
    half_width: f64,
    table: &'static [f64],
}

impl SincKernel {
    fn new(step: f64) -> Self {
        let cutoff = (1.0 / step).min(1.0);
        Self {
            cutoff,
            half_width: ZERO_CROSSINGS / cutoff,
            table: kernel_table(),
        }
    }

    fn weight(&self, d: f64) -> f64 {
        let pos = (self.cutoff * d).abs() * TABLE_RESOLUTION as f64;
        let i = pos as usize;
        if i + 1 >= self.table.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        let h = if frac == 0.0 {
            self.table[i]
        } else {
            self.table[i] + frac * (self.table[i + 1] - self.table[i])
        };
        self.cutoff * h
    }
}

/// Output sample `j` is the band-limited input evaluated at position `j * step`.
fn interpolate(input: &[f64], step: f64, out_len: usize) -> Vec<f64> {
    let kernel = SincKernel::new(step);
    let last = input.len() as isize - 1;
    (0..out_len)
        .map(|j| {
            let t = j as f64 * step;
            let lo = ((t - kernel.half_width).ceil() as isize).max(0);
            let hi = ((t + kernel.half_width).floor() as isize).min(last);
            (lo..=hi)
                .map(|k| input[k as usize] * kernel.weight(t - k as f64))
                .sum()
        })
        .collect()
}

/// Changes playback speed by `alpha` (2.0 plays twice as fast). The output
/// has `round(len / alpha)` samples and every frequency is multiplied by
/// `alpha`.
pub fn time_stretch(w: &Waveform, alpha: f64) -> Result<Waveform, AudioError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(AudioError::InvalidParameter(format!(
            "speed factor must be positive, got {alpha}"
        )));
    }
    if !(SPEED_GUARD_MIN..=SPEED_GUARD_MAX).contains(&alpha) {
        return Err(AudioError::InvalidParameter(format!(
            "speed factor {alpha} outside [{SPEED_GUARD_MIN}, {SPEED_GUARD_MAX}]"
        )));
    }
    let out_len = (w.len() as f64 / alpha).round() as usize;
    Ok(Waveform::from_trusted(
        interpolate(w.samples(), alpha, out_len),
        w.sample_rate_hz(),
    ))
}

/// Sample-rate conversion preserving duration (`round(len * to / from)` samples).
pub fn resample(w: &Waveform, sample_rate_hz: u32) -> Result<Waveform, AudioError> {
    if sample_rate_hz == 0 {
        return Err(AudioError::ZeroSampleRate);
    }
    if sample_rate_hz == w.sample_rate_hz() {
        return Ok(w.clone());
    }
    let step = w.sample_rate_hz() as f64 / sample_rate_hz as f64;
    let out_len = (w.len() as f64 / step).round() as usize;
    Ok(Waveform::from_trusted(
        interpolate(w.samples(), step, out_len),
        sample_rate_hz,
    ))
}
