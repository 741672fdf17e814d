use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{resample, AudioError, Waveform};

const PCM16_SCALE: f64 = 32_768.0;
const PCM24_SCALE: f64 = 8_388_608.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

/// What to do with samples outside [-1, 1] when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipPolicy {
    #[default]
    Clamp,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaveReport {
    /// Samples that were clamped to full scale.
    pub clamped: usize,
}

fn malformed(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::Unsupported | hound::Error::TooWide | hound::Error::InvalidSampleFormat => {
            AudioError::Unsupported {
                path: path.to_path_buf(),
                detail: err.to_string(),
            }
        }
        other => AudioError::Malformed {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Reads a PCM-16, PCM-24 or float-32 RIFF/WAVE file, downmixing to mono by
/// averaging channels. The native sample rate is kept.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = WavReader::new(BufReader::new(file)).map_err(|e| malformed(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::Malformed {
            path: path.to_path_buf(),
            reason: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<Result<_, _>>(),
        (SampleFormat::Int, 24) => reader
            .into_samples::<i32>()
            .map(|s| s.map(|v| v as f64 / PCM24_SCALE))
            .collect::<Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>(),
        (format, bits) => {
            return Err(AudioError::Unsupported {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {format:?}"),
            })
        }
    }
    .map_err(|e| malformed(path, e))?;

    if interleaved.is_empty() {
        return Err(AudioError::ZeroLength(path.to_path_buf()));
    }
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::Malformed {
            path: path.to_path_buf(),
            reason: "partial trailing frame".into(),
        });
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };

    Waveform::new(samples, spec.sample_rate).map_err(|e| match e {
        AudioError::NonFinite { index } => AudioError::Malformed {
            path: path.to_path_buf(),
            reason: format!("non-finite sample at frame {index}"),
        },
        other => other,
    })
}

/// [`load_wav`] followed by resampling to `sample_rate_hz` when needed.
pub fn load_wav_at(path: impl AsRef<Path>, sample_rate_hz: u32) -> Result<Waveform, AudioError> {
    let w = load_wav(path)?;
    if w.sample_rate_hz() == sample_rate_hz {
        Ok(w)
    } else {
        resample(&w, sample_rate_hz)
    }
}

pub fn save_wav(
    w: &Waveform,
    path: impl AsRef<Path>,
    bit_depth: BitDepth,
) -> Result<SaveReport, AudioError> {
    save_wav_with(w, path, bit_depth, ClipPolicy::Clamp)
}

pub fn save_wav_with(
    w: &Waveform,
    path: impl AsRef<Path>,
    bit_depth: BitDepth,
    policy: ClipPolicy,
) -> Result<SaveReport, AudioError> {
    let path = path.as_ref();
    let clamped = w.samples().iter().filter(|s| s.abs() > 1.0).count();
    if clamped > 0 {
        match policy {
            ClipPolicy::Error => return Err(AudioError::Clipping { count: clamped }),
            ClipPolicy::Clamp => log::warn!("{}: clamping {clamped} samples", path.display()),
        }
    }

    let (bits_per_sample, sample_format) = match bit_depth {
        BitDepth::Pcm16 => (16, SampleFormat::Int),
        BitDepth::Pcm24 => (24, SampleFormat::Int),
        BitDepth::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample,
        sample_format,
    };
    let io_err = |source: std::io::Error| AudioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = WavWriter::new(BufWriter::new(file), spec).map_err(|e| match e {
        hound::Error::IoError(source) => io_err(source),
        other => malformed(path, other),
    })?;

    let write_result = (|| {
        for &s in w.samples() {
            let s = s.clamp(-1.0, 1.0);
            match bit_depth {
                BitDepth::Pcm16 => {
                    writer.write_sample((s * PCM16_SCALE).round().clamp(-32_768.0, 32_767.0) as i16)?
                }
                BitDepth::Pcm24 => writer.write_sample(
                    (s * PCM24_SCALE)
                        .round()
                        .clamp(-8_388_608.0, 8_388_607.0) as i32,
                )?,
                BitDepth::Float32 => writer.write_sample(s as f32)?,
            }
        }
        writer.finalize()
    })();
    write_result.map_err(|e| match e {
        hound::Error::IoError(source) => io_err(source),
        other => malformed(path, other),
    })?;

    Ok(SaveReport { clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn write_raw(path: &Path, spec: WavSpec, frames: &[i16]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &f in frames {
            w.write_sample(f).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn silence_file_loads_as_zeros() {
        let dir = tmp();
        let p = dir.path().join("silence.wav");
        save_wav(&Waveform::silence(16_000, 16_000).unwrap(), &p, BitDepth::Pcm16).unwrap();
        let w = load_wav(&p).unwrap();
        assert_eq!(w.len(), 16_000);
        assert_eq!(w.sample_rate_hz(), 16_000);
        assert!(w.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_full_scale_maps_below_one() {
        let dir = tmp();
        let p = dir.path().join("peak.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        write_raw(&p, spec, &[0, 32_767, -100]);
        let w = load_wav(&p).unwrap();
        let peak = w.samples().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, 32_767.0 / 32_768.0);
        assert!((peak - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn stereo_downmixes_to_channel_mean() {
        let dir = tmp();
        let p = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0.2f32).unwrap();
            w.write_sample(0.4f32).unwrap();
        }
        w.finalize().unwrap();
        let mono = load_wav(&p).unwrap();
        assert_eq!(mono.len(), 100);
        let expected = (0.2f32 as f64 + 0.4f32 as f64) / 2.0;
        assert!(mono.samples().iter().all(|&s| s == expected));
        assert!((expected - 0.3).abs() < 1e-7);
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let dir = tmp();
        let p = dir.path().join("f32.wav");
        let samples: Vec<f64> = (0..500).map(|i| ((i as f32 * 0.37).sin() * 0.8) as f64).collect();
        let w = Waveform::new(samples, 22_050).unwrap();
        save_wav(&w, &p, BitDepth::Float32).unwrap();
        assert_eq!(load_wav(&p).unwrap(), w);
    }

    #[test]
    fn pcm_round_trips_within_quantization_step() {
        let dir = tmp();
        let samples: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.0123).sin() * 0.999).collect();
        let w = Waveform::new(samples, 16_000).unwrap();
        for (depth, step) in [(BitDepth::Pcm16, 2f64.powi(-15)), (BitDepth::Pcm24, 2f64.powi(-23))] {
            let p = dir.path().join(format!("{depth:?}.wav"));
            save_wav(&w, &p, depth).unwrap();
            let back = load_wav(&p).unwrap();
            let max_err = w
                .samples()
                .iter()
                .zip(back.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_err <= step, "{depth:?}: {max_err}");
        }
    }

    #[test]
    fn pcm16_header_data_length() {
        let dir = tmp();
        let p = dir.path().join("ramp.wav");
        let ramp: Vec<f64> = (0..600).map(|i| i as f64 / 600.0).collect();
        save_wav(&Waveform::new(ramp, 16_000).unwrap(), &p, BitDepth::Pcm16).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        // canonical 44-byte header: "data" tag at 36, chunk length at 40
        assert_eq!(&bytes[36..40], b"data");
        let data_len = u32::from_le_bytes(bytes[40..44].try_into().unwrap());
        assert_eq!(data_len, 1200);
        assert_eq!(bytes.len(), 44 + 1200);
        assert_eq!(load_wav(&p).unwrap().len(), 600);
    }

    #[test]
    fn clipping_policy() {
        let dir = tmp();
        let p = dir.path().join("hot.wav");
        let w = Waveform::new(vec![0.5, 1.5, -2.0], 16_000).unwrap();
        let report = save_wav(&w, &p, BitDepth::Float32).unwrap();
        assert_eq!(report.clamped, 2);
        assert_eq!(load_wav(&p).unwrap().samples(), &[0.5, 1.0, -1.0]);
        assert!(matches!(
            save_wav_with(&w, &p, BitDepth::Float32, ClipPolicy::Error),
            Err(AudioError::Clipping { count: 2 })
        ));
    }

    #[test]
    fn load_errors() {
        let dir = tmp();
        assert!(matches!(
            load_wav(dir.path().join("missing.wav")),
            Err(AudioError::Io { .. })
        ));

        let garbage = dir.path().join("garbage.wav");
        std::fs::write(&garbage, b"RIFF\x10\x00\x00\x00WAVEjunk").unwrap();
        assert!(matches!(load_wav(&garbage), Err(AudioError::Malformed { .. })));

        let empty = dir.path().join("empty.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        write_raw(&empty, spec, &[]);
        assert!(matches!(load_wav(&empty), Err(AudioError::ZeroLength(_))));

        let eight_bit = dir.path().join("u8.wav");
        let mut w = WavWriter::create(
            &eight_bit,
            WavSpec {
                bits_per_sample: 8,
                ..spec
            },
        )
        .unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&eight_bit), Err(AudioError::Unsupported { .. })));
    }

    #[test]
    fn load_at_resamples() {
        let dir = tmp();
        let p = dir.path().join("32k.wav");
        save_wav(&Waveform::silence(3200, 32_000).unwrap(), &p, BitDepth::Float32).unwrap();
        let w = load_wav_at(&p, 16_000).unwrap();
        assert_eq!(w.sample_rate_hz(), 16_000);
        assert_eq!(w.len(), 1600);
    }
}
