//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line
//! to stderr (uncaptured) and the test fails if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use editsynth_core::audio::{f32_checksum, load_wav, stft_magnitude, Spectrogram, StftParams, Waveform, Window};
use editsynth_core::compose::{
    apply_edit, generate_triplets, render, scale_task_mix, ComposeError, EditOp, EditTriplet, EventPlacement,
    GenerationConfig, Selector, SoundscapeSpec, TaskMix, REFERENCE_TASK_RATIOS,
};
use editsynth_core::curation::{
    filter_similarity, Candidate, Category, EventSegment, SegmentLibrary, TableScorer, DEFAULT_SIMILARITY_THRESHOLD,
};
use editsynth_core::dataset::{read_dataset, validate, DatasetWriter};
use editsynth_core::diffusion::{
    cfg_combine, concat_channels, ddim_step, forward_diffuse, recover_from_velocity, run_checks, sample,
    velocity_target, Conditioning, Denoiser, GuidanceConfig, Latent, LinearGaussianDenoiser, Masking,
    NoiseSchedule, PriorMean,
};
use editsynth_core::instruct::TemplateBank;
use editsynth_core::metrics::{
    frechet_distance, gaussian_stats, inception_score, lsd, lsd_spectrograms, paired_kl, EmbeddingSet,
    GaussianStats, ProbMatrix,
};
use editsynth_core::task::{Direction, Subtype, Task};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const SEED: u64 = 20_240_917;

type Criterion<'a> = Box<dyn Fn() -> Verdict + 'a>;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn line(id: usize, name: &str, v: &Verdict) {
    let tag = if v.passed { "PASS" } else { "FAIL" };
    // written directly so the harness does not capture it
    let _ = writeln!(std::io::stderr(), "[{tag}] criterion {id} {name}: {}", v.detail);
}

fn generate(lib: &SegmentLibrary, mix: &TaskMix, seed: u64) -> Vec<EditTriplet> {
    let mut out = Vec::new();
    generate_triplets::<ComposeError, _>(lib, mix, &GenerationConfig::default(), &TemplateBank::default_bank(), seed, 64, |t| {
        out.push(t);
        Ok(())
    })
    .expect("generation");
    out
}

fn uniform_mix(n: usize) -> TaskMix {
    Task::ALL.iter().map(|t| (*t, n)).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

// ---------------------------------------------------------------- 1

/// Index-aligned diff of the placement lists (background first).
fn placement_list(s: &SoundscapeSpec) -> Vec<Option<&EventPlacement>> {
    std::iter::once(s.background.as_ref()).chain(s.foregrounds.iter().map(Some)).collect()
}

fn same_scene_frame(a: &SoundscapeSpec, b: &SoundscapeSpec) -> bool {
    a.duration_s == b.duration_s && a.sample_rate_hz == b.sample_rate_hz && a.reference_db == b.reference_db
}

/// Independent check that only the targeted placements changed.
fn structural_violation(t: &EditTriplet) -> Option<String> {
    let (src, edit) = (&t.metadata.source_spec, &t.metadata.edited_spec);
    if !same_scene_frame(src, edit) {
        return Some("scene frame changed".into());
    }
    let (a, b) = (placement_list(src), placement_list(edit));
    let differing: Vec<usize> = (0..a.len().max(b.len())).filter(|&i| a.get(i) != b.get(i)).collect();
    let only_field = |i: usize, patch: &dyn Fn(&mut EventPlacement, &EventPlacement)| -> bool {
        match (a[i], b[i]) {
            (Some(x), Some(y)) => {
                let mut patched = x.clone();
                patch(&mut patched, y);
                &patched == y
            }
            _ => false,
        }
    };
    let ok = match t.task {
        Task::Add => {
            if src.background.is_none() && edit.background.is_some() {
                src.foregrounds == edit.foregrounds
            } else {
                src.background == edit.background
                    && edit.foregrounds.len() == src.foregrounds.len() + 1
                    && edit.foregrounds[..src.foregrounds.len()] == src.foregrounds[..]
            }
        }
        Task::Remove => {
            if src.background.is_some() && edit.background.is_none() {
                src.foregrounds == edit.foregrounds
            } else {
                src.background == edit.background
                    && src.foregrounds.len() == edit.foregrounds.len() + 1
                    && src.foregrounds.iter().filter(|p| !edit.foregrounds.contains(p)).count() == 1
                    && edit.foregrounds.iter().all(|p| src.foregrounds.contains(p))
            }
        }
        Task::Replace => {
            differing.len() == 1 && a.len() == b.len() && only_field(differing[0], &|x, y| x.segment_id = y.segment_id.clone())
        }
        Task::Reorder => {
            differing.len() == 2 && a.len() == b.len() && {
                let (i, j) = (differing[0], differing[1]);
                match (a[i], a[j], b[i], b[j]) {
                    (Some(ai), Some(aj), Some(bi), Some(bj)) => {
                        let mut xi = ai.clone();
                        xi.onset_s = aj.onset_s;
                        let mut xj = aj.clone();
                        xj.onset_s = ai.onset_s;
                        &xi == bi && &xj == bj
                    }
                    _ => false,
                }
            }
        }
        Task::Loudness => {
            let delta = t.metadata.edit.delta_db.unwrap_or(f64::NAN);
            let sign = t.metadata.edit.direction.map_or(f64::NAN, |d| d.sign());
            differing.len() == 1
                && a.len() == b.len()
                && only_field(differing[0], &|x, y| x.gain_offset_db = y.gain_offset_db)
                && {
                    let (x, y) = (a[differing[0]].unwrap(), b[differing[0]].unwrap());
                    ((y.gain_offset_db - x.gain_offset_db) - sign * delta).abs() < 1e-12
                }
        }
        Task::Speed => {
            differing.len() == 1
                && a.len() == b.len()
                && only_field(differing[0], &|x, y| x.speed_factor = y.speed_factor)
                && b[differing[0]].unwrap().speed_factor == t.metadata.edit.alpha.unwrap_or(f64::NAN)
        }
    };
    (!ok).then(|| format!("{} ({:?})", t.triplet_id, t.subtype))
}

/// Removal op that undoes an Add triplet, built from the structural diff.
fn undo_add(t: &EditTriplet) -> EditOp {
    let (src, edit) = (&t.metadata.source_spec, &t.metadata.edited_spec);
    match t.subtype {
        Subtype::AddBackgroundToForeground => EditOp::Remove { subtype: Subtype::RemoveBackground, target: Selector::Background },
        Subtype::AddForegroundToBackground => {
            EditOp::Remove { subtype: Subtype::RemoveOnlyForeground, target: Selector::Foreground(0) }
        }
        _ => {
            let added = &edit.foregrounds[src.foregrounds.len()];
            EditOp::Remove {
                subtype: Subtype::RemoveOneOfForegrounds,
                target: Selector::Segment(added.segment_id.clone()),
            }
        }
    }
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let lib = common::synthetic_library();
    let triplets = generate(&lib, &uniform_mix(200), SEED);
    let mut violations = Vec::new();
    let (mut exact, mut inexact) = (0, Vec::new());
    for t in &triplets {
        if let Some(v) = structural_violation(t) {
            violations.push(v);
        }
        let src = &t.metadata.source_spec;
        let round_trip = match t.task {
            Task::Add => Some(apply_edit(&t.metadata.edited_spec, &undo_add(t), &lib).map(|(s, _)| s)),
            Task::Reorder => Some(
                apply_edit(src, &t.metadata.op, &lib).and_then(|(once, _)| apply_edit(&once, &t.metadata.op, &lib)).map(|(s, _)| s),
            ),
            _ => None,
        };
        if let Some(back) = round_trip {
            let same = back
                .map(|b| render(&b, &lib).expect("render") == render(src, &lib).expect("render"))
                .unwrap_or(false);
            if same {
                exact += 1;
            } else {
                inexact.push(t.triplet_id.clone());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let per_task_ok = Task::ALL.iter().all(|task| triplets.iter().filter(|t| t.task == *task).count() == 200);
    verdict(
        violations.is_empty() && inexact.is_empty() && per_task_ok && secs < 120.0,
        format!(
            "{} triplets, {} structural violations {:?}, {exact} sample-exact round trips (Remove-after-Add, double Reorder), {} mismatches {:?}, {secs:.1} s (budget 120 s)",
            triplets.len(),
            violations.len(),
            violations.iter().take(3).collect::<Vec<_>>(),
            inexact.len(),
            inexact.iter().take(3).collect::<Vec<_>>(),
        ),
    )
}

// ---------------------------------------------------------------- 2

fn scene(bg: &str, fgs: Vec<EventPlacement>) -> SoundscapeSpec {
    SoundscapeSpec {
        scene_id: "acceptance".into(),
        duration_s: 10.0,
        sample_rate_hz: common::RATE,
        reference_db: -3.0,
        background: Some(EventPlacement::background(bg, -3.0)),
        foregrounds: fgs,
        overlap_allowed: false,
        seed: 0,
    }
}

fn criterion_2() -> Verdict {
    let lib = common::synthetic_library();
    let fg_ids: Vec<String> = lib.by_category(Category::Foreground).iter().map(|s| s.id.clone()).collect();
    let bg_ids: Vec<String> = lib.by_category(Category::Background).iter().map(|s| s.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut snr_err: f64 = 0.0;
    let mut loud_err: f64 = 0.0;
    let mut beds: BTreeMap<String, Waveform> = BTreeMap::new();

    let pick = |rng: &mut ChaCha8Rng, ids: &[String]| ids[rng.gen_range(0..ids.len())].clone();
    let place = |rng: &mut ChaCha8Rng, id: &str, snr: f64| {
        let len = lib.audio(id).unwrap().len() as f64 / common::RATE as f64;
        let onset = (rng.gen_range(0.0..(10.0 - len - 0.01)) * 1000.0).floor() / 1000.0;
        EventPlacement::foreground(id, onset, snr)
    };
    let event_rms = |mix: &Waveform, bed: &Waveform, spec: &SoundscapeSpec| {
        let (a, b) = spec.foreground_supports(&lib).unwrap()[0];
        let residual: Vec<f64> = (a..b).map(|i| mix.samples()[i] - bed.samples()[i]).collect();
        rms(&residual)
    };

    for k in 0..500 {
        let bg = pick(&mut rng, &bg_ids);
        let bed = beds.entry(bg.clone()).or_insert_with(|| render(&scene(&bg, vec![]), &lib).unwrap()).clone();
        let requested = rng.gen_range(-10.0..25.0);
        let fg = pick(&mut rng, &fg_ids);
        let spec = scene(&bg, vec![place(&mut rng, &fg, requested)]);
        let mix = render(&spec, &lib).unwrap();
        let measured = 20.0 * (event_rms(&mix, &bed, &spec) / rms(bed.samples())).log10();
        snr_err = snr_err.max((measured - requested).abs());

        // a loudness edit on every other mix
        if k % 2 == 0 {
            let delta = (rng.gen_range(4.0..10.0f64) * 10.0).round() / 10.0;
            let direction = if rng.gen_bool(0.5) { Direction::Up } else { Direction::Down };
            let op = EditOp::Loudness { target: Selector::Foreground(0), delta_db: delta, direction };
            let (edited, _) = apply_edit(&spec, &op, &lib).unwrap();
            let after = render(&edited, &lib).unwrap();
            let shift = 20.0 * (event_rms(&after, &bed, &edited) / event_rms(&mix, &bed, &spec)).log10();
            loud_err = loud_err.max((shift - direction.sign() * delta).abs());
        }
    }
    verdict(
        snr_err <= 0.01 && loud_err <= 0.05,
        format!("500 mixes, max |measured − requested SNR| = {snr_err:.2e} dB (tol 0.01); 250 loudness edits, max shift error = {loud_err:.2e} dB (tol 0.05)"),
    )
}

// ---------------------------------------------------------------- 3

fn probe_library() -> SegmentLibrary {
    let rate = common::RATE;
    let n = rate as usize;
    let tone: Vec<f64> = (0..n).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / rate as f64).sin()).collect();
    let probe = Waveform::new(tone, rate).unwrap();
    let seg = |id: &str, label: &str, category, audio: &Waveform| EventSegment {
        id: id.into(),
        label: label.into(),
        audio_path: format!("segments/{id}.wav"),
        onset_s: 0.0,
        offset_s: audio.duration_s(),
        duration_s: audio.duration_s(),
        category,
        source_clip_id: "probe".into(),
        similarity: Some(1.0),
    };
    let bed = common::noise_bed(5, 9.0, rate);
    SegmentLibrary::in_memory(vec![
        Candidate { segment: seg("probe", "beep", Category::Foreground, &probe), audio: probe },
        Candidate { segment: seg("bed", "rain", Category::Background, &bed), audio: bed },
    ])
    .unwrap()
}

fn dominant_hz(w: &Waveform, range: (usize, usize)) -> f64 {
    let params = StftParams::default();
    let spec = stft_magnitude(&w.slice(range.0, range.1), &params).unwrap();
    let mut avg = vec![0.0; spec.bins()];
    for t in 0..spec.frames() {
        for (a, m) in avg.iter_mut().zip(spec.frame(t)) {
            *a += m;
        }
    }
    let k = (0..avg.len()).max_by(|&i, &j| avg[i].total_cmp(&avg[j])).unwrap();
    k as f64 * w.sample_rate_hz() as f64 / params.frame_len as f64
}

fn criterion_3() -> Verdict {
    let lib = probe_library();
    let bin_hz = common::RATE as f64 / StftParams::default().frame_len as f64;
    let src = SoundscapeSpec { background: None, ..scene("bed", vec![EventPlacement::foreground("probe", 1.0, 0.0)]) };
    let original = lib.audio("probe").unwrap().len() as f64;
    let mut notes = Vec::new();
    let mut ok = true;
    for alpha in [0.5, 0.75, 1.25, 2.0] {
        let (edited, _) = apply_edit(&src, &EditOp::Speed { target: Selector::Foreground(0), alpha }, &lib).unwrap();
        let support = edited.foreground_supports(&lib).unwrap()[0];
        let dur_err = ((support.1 - support.0) as f64 - original / alpha).abs();
        let f = dominant_hz(&render(&edited, &lib).unwrap(), support);
        let f_err = (f - 440.0 * alpha).abs();
        ok &= dur_err <= 1.0 && f_err <= bin_hz;
        notes.push(format!("α={alpha}: duration err {dur_err:.2} samples, peak {f:.1} Hz vs {:.1} Hz", 440.0 * alpha));
    }
    verdict(ok, format!("{} (tol 1 sample, {bin_hz:.3} Hz)", notes.join("; ")))
}

// ---------------------------------------------------------------- 4, 5, 9

fn write_generated(lib: &SegmentLibrary, mix: &TaskMix, seed: u64, root: &Path) -> (f64, f64) {
    let bank = TemplateBank::default_bank();
    let config = serde_json::json!({"seed": seed});
    let mut writer = DatasetWriter::create(root, common::RATE, "acceptance", config, &bank).unwrap();
    let mut write_secs = 0.0;
    let started = Instant::now();
    generate_triplets::<ComposeError, _>(lib, mix, &GenerationConfig::default(), &bank, seed, 64, |t| {
        let w = Instant::now();
        writer.write(t).expect("write");
        write_secs += w.elapsed().as_secs_f64();
        Ok(())
    })
    .expect("generation");
    let w = Instant::now();
    writer.finish().unwrap();
    write_secs += w.elapsed().as_secs_f64();
    let total = started.elapsed().as_secs_f64();
    (total - write_secs, total)
}

fn criterion_4(lib_dir: &Path, data_dir: &Path) -> Verdict {
    let lib = SegmentLibrary::load(lib_dir).unwrap();
    let (gen_secs, total_secs) = write_generated(&lib, &uniform_mix(100), SEED, data_dir);
    let report = validate(data_dir).unwrap();
    let (header, records) = read_dataset(data_dir).unwrap();

    let reference = scale_task_mix(&REFERENCE_TASK_RATIOS, 109);
    let small = generate(&lib, &reference, SEED + 4);
    let mut got: BTreeMap<Task, usize> = BTreeMap::new();
    for t in &small {
        *got.entry(t.task).or_default() += 1;
    }
    let table: Vec<usize> = Task::ALL.iter().map(|t| got.get(t).copied().unwrap_or(0)).collect();
    let expected = [26, 23, 25, 15, 10, 10];

    verdict(
        records.len() == 600
            && header.task_counts.values().all(|n| *n == 100)
            && report.is_clean()
            && gen_secs < 60.0
            && total_secs < 300.0
            && table == expected,
        format!(
            "{} triplets, generation {gen_secs:.1} s (budget 60 s), with WAV writes {total_secs:.1} s (budget 300 s), {} violations; 109-mix counts {table:?} (expected {expected:?})",
            records.len(),
            report.violations.len()
        ),
    )
}

fn dataset_fingerprint(root: &Path) -> (String, Vec<String>) {
    let manifest = std::fs::read(root.join("manifest.jsonl")).unwrap();
    let (_, records) = read_dataset(root).unwrap();
    let sums = records
        .iter()
        .flat_map(|r| [&r.src_path, &r.edit_path])
        .map(|p| f32_checksum(&load_wav(root.join(p)).unwrap()))
        .collect();
    (hex::encode(Sha256::digest(manifest)), sums)
}

fn criterion_5(lib_dir: &Path) -> Verdict {
    let lib = SegmentLibrary::load(lib_dir).unwrap();
    let mix = uniform_mix(20);
    let mut prints = Vec::new();
    for threads in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| write_generated(&lib, &mix, SEED + 5, dir.path()));
        prints.push(dataset_fingerprint(dir.path()));
    }
    let same_manifest = prints[0].0 == prints[1].0;
    let same_audio = prints[0].1 == prints[1].1;
    verdict(
        same_manifest && same_audio,
        format!(
            "{} triplets with 1 and 4 workers: manifest sha256 {} ({}), {} audio checksums {}",
            prints[0].1.len() / 2,
            &prints[0].0[..16],
            if same_manifest { "identical" } else { "different" },
            prints[0].1.len(),
            if same_audio { "identical" } else { "different" }
        ),
    )
}

fn criterion_9(data_dir: &Path) -> Verdict {
    let (header, records) = read_dataset(data_dir).unwrap();
    let bank = header.bank().unwrap();
    let failures: Vec<&str> = records
        .iter()
        .filter(|r| bank.refill(&r.template_id, &r.metadata.slots).ok().as_deref() != Some(r.instruction.as_str()))
        .map(|r| r.triplet_id.as_str())
        .collect();
    verdict(
        failures.is_empty() && records.len() == 600,
        format!("{} instructions re-filled, {} mismatches {:?}", records.len(), failures.len(), &failures[..failures.len().min(3)]),
    )
}

// ---------------------------------------------------------------- 6

fn naive_magnitudes(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in frame.iter().enumerate() {
                let angle = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn lsd_oracle(a: &[Vec<f64>], b: &[Vec<f64>], eps: f64) -> f64 {
    let mut total = 0.0;
    for (fa, fb) in a.iter().zip(b) {
        let mut acc = 0.0;
        for (x, y) in fa.iter().zip(fb) {
            let d = (x * x + eps).log10() - (y * y + eps).log10();
            acc += d * d;
        }
        total += (acc / fa.len() as f64).sqrt();
    }
    total / a.len() as f64
}

fn waveform_frames(x: &[f64], frame_len: usize, hop: usize) -> Vec<Vec<f64>> {
    let hann: Vec<f64> = (0..frame_len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / frame_len as f64).cos()).collect();
    (0..=(x.len() - frame_len) / hop)
        .map(|t| naive_magnitudes(&x[t * hop..t * hop + frame_len].iter().zip(&hann).map(|(s, w)| s * w).collect::<Vec<_>>()))
        .collect()
}

fn denman_beavers(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = m.clone();
    let mut z = DMatrix::identity(m.nrows(), m.nrows());
    for _ in 0..100 {
        let (yi, zi) = (y.clone().try_inverse().unwrap(), z.clone().try_inverse().unwrap());
        let next = (&y + zi) * 0.5;
        z = (&z + yi) * 0.5;
        let done = (&next - &y).amax() < 1e-15 * y.amax().max(1.0);
        y = next;
        if done {
            break;
        }
    }
    y
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0f64).powi(2)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
        .collect()
}

fn kl_oracle(p: &[f64], q: &[f64], eps: f64) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * ((a + eps) / (b + eps)).ln()).sum()
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let eps = 1e-10;
    let (mut lsd_spec, mut lsd_wave, mut fd_rel, mut fd_self, mut kl_err, mut is_err) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    let params = StftParams { frame_len: 32, hop: 8, window: Window::Hann };

    for _ in 0..100 {
        // spectrogram-level LSD against a double loop
        let (frames, bins) = (rng.gen_range(1..5), rng.gen_range(1..6));
        let a: Vec<Vec<f64>> = (0..frames).map(|_| (0..bins).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
        let b: Vec<Vec<f64>> = (0..frames).map(|_| (0..bins).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
        let sa = Spectrogram::from_magnitudes(a.concat(), frames, bins, params).unwrap();
        let sb = Spectrogram::from_magnitudes(b.concat(), frames, bins, params).unwrap();
        lsd_spec = lsd_spec.max((lsd_spectrograms(&sa, &sb, eps).unwrap() - lsd_oracle(&a, &b, eps)).abs());

        // waveform-level LSD against a naive DFT
        let n = rng.gen_range(32..120);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n + rng.gen_range(0..20)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = lsd(&Waveform::new(x.clone(), 16_000).unwrap(), &Waveform::new(y.clone(), 16_000).unwrap(), &params, eps).unwrap();
        let oracle = lsd_oracle(&waveform_frames(&x, 32, 8), &waveform_frames(&y[..n], 32, 8), eps);
        lsd_wave = lsd_wave.max((got - oracle).abs());

        // Fréchet distance against Denman–Beavers on the raw product
        let d = rng.gen_range(1..5);
        let rows = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> { (0..d + 6).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect() };
        let ga = gaussian_stats(&EmbeddingSet::from_rows(rows(&mut rng), "a").unwrap()).unwrap();
        let gb = gaussian_stats(&EmbeddingSet::from_rows(rows(&mut rng), "b").unwrap()).unwrap();
        let diff: DVector<f64> = &ga.mean - &gb.mean;
        let oracle = (diff.dot(&diff) + ga.cov.trace() + gb.cov.trace() - 2.0 * denman_beavers(&(&ga.cov * &gb.cov)).trace()).max(0.0);
        let got = frechet_distance(&ga, &gb).unwrap();
        fd_rel = fd_rel.max((got - oracle).abs() / oracle.abs().max(1e-12));
        fd_self = fd_self.max(frechet_distance(&ga, &ga).unwrap());

        // paired KL and IS against brute force
        let (n, k) = (rng.gen_range(2..12), rng.gen_range(2..6));
        let (p, q) = (random_probs(&mut rng, n, k), random_probs(&mut rng, n, k));
        let kl_o = p.iter().zip(&q).map(|(a, b)| kl_oracle(a, b, eps)).sum::<f64>() / n as f64;
        let (pm, qm) = (ProbMatrix::from_rows(&p).unwrap(), ProbMatrix::from_rows(&q).unwrap());
        kl_err = kl_err.max((paired_kl(&pm, &qm, eps).unwrap() - kl_o).abs());

        let splits = rng.gen_range(1..=n);
        let mut scores = Vec::new();
        let mut start = 0;
        for s in 0..splits {
            let len = n / splits + usize::from(s < n % splits);
            let part = &p[start..start + len];
            start += len;
            let marginal: Vec<f64> = (0..k).map(|j| part.iter().map(|r| r[j]).sum::<f64>() / len as f64).collect();
            scores.push((part.iter().map(|r| kl_oracle(r, &marginal, eps)).sum::<f64>() / len as f64).exp());
        }
        let mean = scores.iter().sum::<f64>() / splits as f64;
        let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / splits as f64).sqrt();
        let (m, s) = inception_score(&pm, splits, eps).unwrap();
        is_err = is_err.max((m - mean).abs()).max((s - std).abs());
    }

    let uniform = ProbMatrix::from_rows(&vec![vec![0.2; 5]; 40]).unwrap();
    let is_uniform = (inception_score(&uniform, 4, eps).unwrap().0 - 1.0).abs();
    let one_d = frechet_distance(
        &GaussianStats::new(vec![0.0], vec![vec![1.0]]).unwrap(),
        &GaussianStats::new(vec![1.0], vec![vec![4.0]]).unwrap(),
    )
    .unwrap();
    let one_d_err = (one_d - 2.0).abs();

    let passed = lsd_spec <= 1e-12
        && lsd_wave <= 1e-9
        && fd_rel <= 1e-6
        && fd_self <= 1e-8
        && kl_err <= 1e-12
        && is_err <= 1e-12
        && is_uniform <= 1e-9
        && one_d_err <= 1e-9;
    verdict(
        passed,
        format!(
            "100 instances each: LSD spectrogram err {lsd_spec:.1e} (tol 1e-12), LSD waveform err {lsd_wave:.1e} (tol 1e-9), FD rel err {fd_rel:.1e} (tol 1e-6), max FD(a,a) {fd_self:.1e} (tol 1e-8), KL err {kl_err:.1e} (tol 1e-12), IS err {is_err:.1e} (tol 1e-12), |IS(uniform) − 1| {is_uniform:.1e} (tol 1e-9), 1-D FD {one_d} (tol 1e-9)"
        ),
    )
}

// ---------------------------------------------------------------- 7

struct Blind(LinearGaussianDenoiser);

impl Denoiser for Blind {
    fn predict(&self, z: &Latent, t: usize, _: Option<&Conditioning>) -> Result<Latent, editsynth_core::diffusion::DiffusionError> {
        self.0.predict(z, t, None)
    }
}

fn latent(rng: &mut ChaCha8Rng, c: usize, l: usize, r: f64) -> Latent {
    Latent::new(DMatrix::from_fn(c, l, |_, _| rng.gen_range(-r..r))).unwrap()
}

fn criterion_7() -> Verdict {
    let started = Instant::now();
    let sched = NoiseSchedule::default();
    let ab = sched.alpha_bar().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);

    let (z0, eps) = (latent(&mut rng, 8, 64, 3.0), latent(&mut rng, 8, 64, 3.0));
    let mut round_trip: f64 = 0.0;
    for t in 0..=1000 {
        let zt = forward_diffuse(&z0, &eps, t, &sched).unwrap();
        let v = velocity_target(&z0, &eps, t, &sched).unwrap();
        let (z0h, epsh) = recover_from_velocity(&zt, &v, t, &sched).unwrap();
        round_trip = round_trip.max(z0h.max_abs_diff(&z0)).max(epsh.max_abs_diff(&eps));
    }

    let (u, c) = (latent(&mut rng, 4, 32, 2.0), latent(&mut rng, 4, 32, 2.0));
    let p0 = cfg_combine(&u, &c, 0.0).unwrap();
    let p1 = cfg_combine(&u, &c, 1.0).unwrap();
    let mut linearity: f64 = 0.0;
    for _ in 0..50 {
        let w = rng.gen_range(0.0..12.0);
        let pw = cfg_combine(&u, &c, w).unwrap();
        let lhs = pw.matrix() - p0.matrix();
        let rhs = (p1.matrix() - p0.matrix()) * w;
        linearity = linearity.max((lhs - rhs).amax());
    }
    let endpoints_exact = p0 == u && p1 == c;

    // sampler reductions: w=1 is the conditional-only trajectory, w=0 the unconditional one
    let den = LinearGaussianDenoiser { shift: 0.7, ..LinearGaussianDenoiser::new(sched.clone(), PriorMean::Source, 0.9) };
    let (z_in, z_init) = (latent(&mut rng, 2, 16, 1.0), latent(&mut rng, 2, 16, 2.0));
    let cond = Conditioning::new(DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
    let ladder: Vec<usize> = (0..=50).rev().map(|k| k * 20).collect();
    let manual = |conditional: bool| {
        let mut z = z_init.clone();
        for w in ladder.windows(2) {
            let v = if conditional {
                den.predict(&concat_channels(&z, &z_in).unwrap(), w[0], Some(&cond)).unwrap()
            } else {
                den.predict(&concat_channels(&z, &Latent::zeros(2, 16)).unwrap(), w[0], None).unwrap()
            };
            z = ddim_step(&z, &v, w[0], w[1], &sched).unwrap();
        }
        z
    };
    let run = |w: f64| sample(&den, &z_in, Some(&cond), &sched, &ladder, &GuidanceConfig { w, masking: Masking::MaskAudio }, &z_init).unwrap();
    let reductions_exact = run(1.0) == manual(true) && run(0.0) == manual(false);

    // full-ladder DDIM against the closed-form Gaussian posterior recursion
    let mut oracle_err: f64 = 0.0;
    let full: Vec<usize> = (0..=1000).rev().collect();
    for seed in 0..100u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mu = latent(&mut r, 2, 8, 1.0);
        let s = r.gen_range(0.5..2.0);
        let z_t = latent(&mut r, 2, 8, 3.0);
        let den = Blind(LinearGaussianDenoiser::new(sched.clone(), PriorMean::Fixed(mu.clone()), s));
        let out = sample(&den, &Latent::zeros(2, 8), None, &sched, &full, &GuidanceConfig { w: 5.0, masking: Masking::NoMaskAudio }, &z_t).unwrap();
        let sigma = |t: usize| (ab[t] * s * s + 1.0 - ab[t]).sqrt();
        let mut factor = 1.0 / sigma(1000);
        for t in (1..=1000).rev() {
            factor *= (ab[t].sqrt() * ab[t - 1].sqrt() * s * s + (1.0 - ab[t]).sqrt() * (1.0 - ab[t - 1]).sqrt()) / (sigma(t) * sigma(t - 1));
        }
        let a_t = ab[1000].sqrt();
        for i in 0..2 {
            for j in 0..8 {
                let m = mu.matrix()[(i, j)];
                let expected = m + s * factor * (z_t.matrix()[(i, j)] - a_t * m);
                oracle_err = oracle_err.max((out.matrix()[(i, j)] - expected).abs());
            }
        }
    }
    let suite = run_checks(SEED, None, None).unwrap();
    let secs = started.elapsed().as_secs_f64();

    verdict(
        round_trip <= 1e-9 && linearity <= 1e-12 && endpoints_exact && reductions_exact && oracle_err <= 1e-3 && suite.passed && secs < 30.0,
        format!(
            "round trip over t=0..1000 max err {round_trip:.1e} (tol 1e-9), cfg linearity {linearity:.1e} (tol 1e-12), w=0/1 bit-exact {}, Gaussian-oracle DDIM max err {oracle_err:.1e} over 100 seeds (tol 1e-3), check suite {}, {secs:.1} s (budget 30 s)",
            endpoints_exact && reductions_exact,
            if suite.passed { "clean" } else { "failing" }
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Verdict {
    let scores = [0.95, 0.3, 0.30000000000000004, 0.2999999, 0.0, -0.4, 0.31, 1.0, -1.0, 0.5, 0.299];
    let table: BTreeMap<String, f64> = scores.iter().enumerate().map(|(i, s)| (format!("label{i}"), *s)).collect();
    let scorer = TableScorer::new(table.clone());
    let candidates: Vec<Candidate> = scores
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let audio = common::tone_burst(300.0 + 10.0 * i as f64, 0.5, common::RATE);
            Candidate {
                segment: EventSegment {
                    id: format!("s{i}"),
                    label: format!("label{i}"),
                    audio_path: format!("segments/s{i}.wav"),
                    onset_s: 0.0,
                    offset_s: 0.5,
                    duration_s: 0.5,
                    category: Category::Foreground,
                    source_clip_id: "fixture".into(),
                    similarity: None,
                },
                audio,
            }
        })
        .collect();
    let part = filter_similarity(candidates, &scorer, DEFAULT_SIMILARITY_THRESHOLD).unwrap();
    let mut kept: Vec<String> = part.kept.iter().map(|c| c.segment.label.clone()).collect();
    kept.sort();
    let mut expected: Vec<String> = table.iter().filter(|(_, s)| **s >= 0.3).map(|(l, _)| l.clone()).collect();
    expected.sort();
    let annotated = part.kept.iter().all(|c| c.segment.similarity == Some(table[&c.segment.label]));
    verdict(
        kept == expected && annotated && DEFAULT_SIMILARITY_THRESHOLD == 0.3,
        format!("threshold {DEFAULT_SIMILARITY_THRESHOLD}: kept {} of {} fixture segments, exactly those scoring ≥ 0.3", kept.len(), scores.len()),
    )
}

// ----------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let lib_dir = tempfile::tempdir().unwrap();
    common::write_synthetic_library(lib_dir.path());
    let data_dir = tempfile::tempdir().unwrap();

    let criteria: Vec<(&str, Criterion)> = vec![
        ("edit-locality", Box::new(criterion_1)),
        ("snr-fidelity", Box::new(criterion_2)),
        ("speed-contract", Box::new(criterion_3)),
        ("desk-scale-generation", Box::new(|| criterion_4(lib_dir.path(), data_dir.path()))),
        ("determinism", Box::new(|| criterion_5(lib_dir.path()))),
        ("metric-oracles", Box::new(criterion_6)),
        ("diffusion-identities", Box::new(criterion_7)),
        ("similarity-threshold", Box::new(criterion_8)),
        ("instruction-round-trip", Box::new(|| criterion_9(data_dir.path()))),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        line(i + 1, name, &v);
        if !v.passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
