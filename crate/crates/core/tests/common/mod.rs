//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

/// Two-sided p by enumerating all 2^n sign assignments of the observed
/// ranks.
pub fn sign_flip_p(d: &[f64]) -> f64 {
    let d: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    // midranks by direct counting, independent of the library routine
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&a| {
            let less = abs.iter().filter(|&&b| b < a).count() as f64;
            let equal = abs.iter().filter(|&&b| b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le.min(ge) as f64) / total).min(1.0)
}

/// Concordant minus discordant pairs and x-tied / y-tied pair counts by
/// direct enumeration.
pub fn kendall_pairs(x: &[f64], y: &[f64]) -> (i64, u64, u64) {
    let (mut s, mut tx, mut ty) = (0i64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                s += if (dx > 0.0) == (dy > 0.0) { 1 } else { -1 };
            }
        }
    }
    (s, tx, ty)
}

/// Power of the DFT of `window * frame` by direct summation.
pub fn naive_power_spectrum(frame: &[f64], window: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..n / 2 + 1)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, (&x, &w)) in frame.iter().zip(window).enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * i % n) as f64 / n as f64;
                re += x * w * phase.cos();
                im += x * w * phase.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Periodic Hann window from its closed form.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (std::f64::consts::PI * i as f64 / n as f64).sin().powi(2))
        .collect()
}

/// Largest elementwise relative deviation of `got` from `want`, with
/// entries below `floor * max|want|` compared absolutely against that floor.
pub fn max_relative_error(got: &[f64], want: &[f64], floor: f64) -> f64 {
    let scale = want.iter().fold(0f64, |m, v| m.max(v.abs())) * floor;
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / w.abs().max(scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

use emgtask::dsp::eo_epoch_layout;
use emgtask::features::FeatureImage;
use emgtask::model::{default_task_catalog, EpochMeta, EpochRef, Label};
use emgtask::pipeline::FeatureDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full-protocol epoch metadata for `subjects` subjects, built from the
/// task catalog and the eyes-open layout rather than from a recording.
pub fn protocol_metas(subjects: usize) -> Vec<EpochMeta> {
    let catalog = default_task_catalog();
    let mut out = Vec::new();
    for s in 0..subjects {
        let subject = format!("S{:02}", s + 1);
        let mut seq = 0;
        let mut push = |label, task_id, repetition, onset_s, duration_s| {
            out.push(EpochMeta {
                id: EpochRef {
                    subject: subject.clone(),
                    seq,
                },
                label,
                task_id,
                repetition,
                onset_s,
                duration_s,
            });
            seq += 1;
        };
        for (onset, dur) in eo_epoch_layout(289.0) {
            push(Label::NonArtifact, None, None, 2.0 + onset, dur);
        }
        let mut t = 300.0;
        for task in &catalog {
            for rep in 1..=task.protocol_repetitions {
                push(Label::Artifact, Some(task.task_id), Some(rep), t, task.epoch_duration_s);
                t += task.epoch_duration_s + 2.0;
            }
        }
    }
    out
}

/// Small random images: artifact epochs get extra energy in the upper
/// bands, scaled by `separation`.
pub fn toy_dataset(subjects: usize, separation: f32, seed: u64) -> FeatureDataset {
    let metas = protocol_metas(subjects);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, channels) = (8, 3);
    let images = metas
        .iter()
        .map(|m| {
            let frames = (m.duration_s * 2.0) as usize;
            let cols = frames * channels;
            let lift = if m.label == Label::Artifact { separation } else { 0.0 };
            FeatureImage {
                rows,
                cols,
                frames_per_channel: frames,
                channels: (0..channels).map(|c| format!("c{c}")).collect(),
                values: (0..rows * cols)
                    .map(|i| -40.0 + rng.gen_range(-1.0f32..1.0) + if i / cols >= rows / 2 { lift } else { 0.0 })
                    .collect(),
            }
        })
        .collect();
    FeatureDataset::new(metas, images).unwrap()
}

/// Central differences on every parameter against the analytic gradient.
pub fn gradient_check(model: &mut dyn emgtask::learn::Classifier, image: &FeatureImage, label: f64) -> f64 {
    let x = model.encode(image).unwrap();
    let mut grad = vec![0.0; model.params().len()];
    model.loss_and_grad(&x, label, &mut grad);
    let h = 1e-5;
    let mut worst = 0f64;
    for i in 0..grad.len() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = emgtask::learn::bce_with_logit(model.logit(&x), label).0;
        model.params_mut()[i] = orig - h;
        let down = emgtask::learn::bce_with_logit(model.logit(&x), label).0;
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}
