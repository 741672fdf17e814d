use super::{AudioError, GainDb, SnrDb, Waveform};

/// Peak level above which a finished mixture is scaled down as a whole.
pub const SOFT_NORMALIZE_CEILING: f64 = 0.999;

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Root mean square over every sample.
pub fn rms(w: &Waveform) -> Result<f64, AudioError> {
    if w.is_empty() {
        return Err(AudioError::Empty);
    }
    let sum_sq: f64 = w.samples().iter().map(|s| s * s).sum();
    Ok((sum_sq / w.len() as f64).sqrt())
}

pub fn peak(w: &Waveform) -> f64 {
    w.samples().iter().fold(0.0, |m, s| m.max(s.abs()))
}

pub fn apply_gain_db(w: &Waveform, gain: GainDb) -> Waveform {
    let g = gain.amplitude();
    Waveform::from_trusted(
        w.samples().iter().map(|s| s * g).collect(),
        w.sample_rate_hz(),
    )
}

/// Amplitude factor that puts a signal of RMS `fg_rms` at `snr` dB above a
/// reference of RMS `reference_rms`.
pub fn snr_scale(fg_rms: f64, reference_rms: f64, snr: SnrDb) -> Result<f64, AudioError> {
    if reference_rms <= 0.0 {
        return Err(AudioError::Silent("background"));
    }
    if fg_rms <= 0.0 {
        return Err(AudioError::Silent("foreground"));
    }
    Ok(reference_rms * snr.amplitude() / fg_rms)
}

/// Result of placing a foreground over a background.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub waveform: Waveform,
    /// Factor applied to the foreground before summation.
    pub fg_scale: f64,
    pub onset_sample: usize,
    /// Foreground samples that landed inside the background.
    pub placed_len: usize,
    /// Foreground samples dropped because they ran past the background's end.
    pub truncated: usize,
}

/// Scales `fg` so that its RMS (over its full support) sits `snr` dB above
/// the RMS of `bg`, then adds it into a copy of `bg` starting at
/// `round(fg_onset_s * rate)`. Background samples outside the overlap are
/// copied untouched. A foreground running past the end is truncated.
pub fn mix_at_snr(
    fg: &Waveform,
    bg: &Waveform,
    snr: SnrDb,
    fg_onset_s: f64,
) -> Result<Mix, AudioError> {
    if fg.sample_rate_hz() != bg.sample_rate_hz() {
        return Err(AudioError::RateMismatch(
            fg.sample_rate_hz(),
            bg.sample_rate_hz(),
        ));
    }
    if !(fg_onset_s >= 0.0 && fg_onset_s.is_finite()) {
        return Err(AudioError::InvalidParameter(format!(
            "foreground onset must be a finite non-negative time, got {fg_onset_s}"
        )));
    }
    let scale = snr_scale(rms(fg)?, rms(bg)?, snr)?;

    let onset_sample = (fg_onset_s * bg.sample_rate_hz() as f64).round() as usize;
    let mut out = bg.samples().to_vec();
    let placed_len = fg.len().min(out.len().saturating_sub(onset_sample));
    for (dst, src) in out[onset_sample.min(bg.len())..]
        .iter_mut()
        .zip(&fg.samples()[..placed_len])
    {
        *dst += scale * src;
    }
    let truncated = fg.len() - placed_len;
    if truncated > 0 {
        log::debug!("foreground truncated by {truncated} samples at scene end");
    }

    Ok(Mix {
        waveform: Waveform::from_trusted(out, bg.sample_rate_hz()),
        fg_scale: scale,
        onset_sample,
        placed_len,
        truncated,
    })
}

/// Scales the whole buffer down to [`SOFT_NORMALIZE_CEILING`] if its peak
/// exceeds it. Returns the applied gain (1.0 when untouched).
pub fn soft_normalize(w: Waveform) -> (Waveform, f64) {
    let p = peak(&w);
    if p <= SOFT_NORMALIZE_CEILING {
        return (w, 1.0);
    }
    let gain = SOFT_NORMALIZE_CEILING / p;
    let rate = w.sample_rate_hz();
    let scaled = w.into_samples().into_iter().map(|s| s * gain).collect();
    (Waveform::from_trusted(scaled, rate), gain)
}
