use super::{ComposeError, EventPlacement, SoundscapeSpec};
use crate::audio::{
    db_to_amplitude, rms, snr_scale, soft_normalize, time_stretch, AudioError, SnrDb, Waveform,
    SOFT_NORMALIZE_CEILING,
};
use crate::curation::SegmentLibrary;

fn stretched(p: &EventPlacement, library: &SegmentLibrary) -> Result<Waveform, ComposeError> {
    let audio = library.audio(&p.segment_id)?;
    if p.speed_factor == 1.0 {
        Ok((*audio).clone())
    } else {
        Ok(time_stretch(&audio, p.speed_factor)?)
    }
}

/// Background tiled or truncated to `n` samples and leveled to its RMS target.
fn background_bed(
    p: &EventPlacement,
    n: usize,
    library: &SegmentLibrary,
) -> Result<Vec<f64>, ComposeError> {
    let src = stretched(p, library)?;
    let tiled: Vec<f64> = src.samples().iter().copied().cycle().take(n).collect();
    let tiled = Waveform::new(tiled, src.sample_rate_hz())?;
    let level = rms(&tiled)?;
    if level == 0.0 {
        return Err(AudioError::Silent("background").into());
    }
    let g = db_to_amplitude(p.effective_level_db()) / level;
    Ok(tiled.into_samples().into_iter().map(|s| s * g).collect())
}

/// Renders `spec` without any final normalization. Pure: identical specs
/// give sample-identical output.
pub fn render(spec: &SoundscapeSpec, library: &SegmentLibrary) -> Result<Waveform, ComposeError> {
    spec.validate(library)?;
    let n = spec.len_samples();
    let mut out = match &spec.background {
        Some(bg) => background_bed(bg, n, library)?,
        None => vec![0.0; n],
    };
    let reference = db_to_amplitude(spec.reference_db);
    for p in &spec.foregrounds {
        let fg = stretched(p, library)?;
        let snr = SnrDb::new(p.effective_level_db())?;
        let scale = snr_scale(rms(&fg)?, reference, snr)?;
        let start = spec.onset_sample(p);
        for (dst, src) in out[start..].iter_mut().zip(fg.samples()) {
            *dst += scale * src;
        }
    }
    Ok(Waveform::new(out, spec.sample_rate_hz)?)
}

/// Renders a source/edited pair and applies one shared soft-normalization
/// gain to both, so regions the edit did not touch stay identical across
/// the pair. Returns the gain (1.0 when neither side exceeds the ceiling).
pub fn render_pair(
    source: &SoundscapeSpec,
    edited: &SoundscapeSpec,
    library: &SegmentLibrary,
) -> Result<(Waveform, Waveform, f64), ComposeError> {
    let a = render(source, library)?;
    let b = render(edited, library)?;
    let (_, ga) = soft_normalize(a.clone());
    let (_, gb) = soft_normalize(b.clone());
    let gain = ga.min(gb);
    if gain == 1.0 {
        return Ok((a, b, 1.0));
    }
    let scale = |w: Waveform| {
        let rate = w.sample_rate_hz();
        Waveform::new(w.into_samples().into_iter().map(|s| s * gain).collect(), rate)
    };
    let (a, b) = (scale(a)?, scale(b)?);
    debug_assert!(crate::audio::peak(&a) <= SOFT_NORMALIZE_CEILING * (1.0 + 1e-12));
    Ok((a, b, gain))
}
