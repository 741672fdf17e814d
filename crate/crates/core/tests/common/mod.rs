#![allow(dead_code)]

use std::f64::consts::PI;

use editsynth_core::audio::Waveform;
use editsynth_core::curation::{Candidate, Category, EventSegment, SegmentLibrary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RATE: u32 = 16_000;

pub const FG_LABELS: [&str; 8] = [
    "dog bark",
    "bell",
    "door knock",
    "bird chirp",
    "car horn",
    "cough",
    "glass break",
    "whistle",
];
pub const BG_LABELS: [&str; 3] = ["rain", "wind", "traffic"];

fn f32_exact(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|s| s as f32 as f64).collect()
}

pub fn tone_burst(freq: f64, dur_s: f64, rate: u32) -> Waveform {
    let n = (dur_s * rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let env = (PI * i as f64 / n as f64).sin();
            env * (0.5 * (2.0 * PI * freq * t).sin() + 0.2 * (2.0 * PI * 2.0 * freq * t).sin())
        })
        .collect();
    Waveform::new(f32_exact(samples), rate).unwrap()
}

pub fn noise_bed(seed: u64, dur_s: f64, rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (dur_s * rate as f64).round() as usize;
    let mut prev = 0.0;
    let samples = (0..n)
        .map(|_| {
            prev = 0.7 * prev + 0.3 * rng.gen_range(-1.0..1.0);
            prev
        })
        .collect();
    Waveform::new(f32_exact(samples), rate).unwrap()
}

fn segment(id: String, label: &str, category: Category, audio: &Waveform) -> EventSegment {
    EventSegment {
        audio_path: format!("segments/{id}.wav"),
        id,
        label: label.to_string(),
        onset_s: 0.0,
        offset_s: audio.duration_s(),
        duration_s: audio.duration_s(),
        category,
        source_clip_id: "synthetic".into(),
        similarity: Some(1.0),
    }
}

/// Two foreground segments (0.5 to 1.6 s tone bursts) per foreground label
/// and two 9 s noise beds per background label.
pub fn synthetic_candidates() -> Vec<Candidate> {
    let mut out = Vec::new();
    for (i, label) in FG_LABELS.iter().enumerate() {
        for j in 0..2 {
            let audio = tone_burst(300.0 + 170.0 * i as f64 + 40.0 * j as f64, 0.5 + 0.15 * (i + 5 * j) as f64 / 2.0, RATE);
            out.push(Candidate {
                segment: segment(format!("fg{i}{j}"), label, Category::Foreground, &audio),
                audio,
            });
        }
    }
    for (i, label) in BG_LABELS.iter().enumerate() {
        for j in 0..2 {
            let audio = noise_bed((10 * i + j) as u64, 9.0, RATE);
            out.push(Candidate {
                segment: segment(format!("bg{i}{j}"), label, Category::Background, &audio),
                audio,
            });
        }
    }
    out
}

pub fn synthetic_library() -> SegmentLibrary {
    SegmentLibrary::in_memory(synthetic_candidates()).unwrap()
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Writes the synthetic library to `dir` in the on-disk layout.
pub fn write_synthetic_library(dir: &std::path::Path) {
    use editsynth_core::audio::{save_wav, BitDepth};
    std::fs::create_dir_all(dir.join("segments")).unwrap();
    for c in synthetic_candidates() {
        save_wav(&c.audio, dir.join(&c.segment.audio_path), BitDepth::Float32).unwrap();
    }
    synthetic_library().write_manifest(dir).unwrap();
}
