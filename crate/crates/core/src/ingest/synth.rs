//! Protocol-shaped synthetic recordings.
//!
//! Each subject gets one recording: an eyes-open resting segment followed by
//! every catalog task in order, each repetition separated by a rest gap.
//! Background EEG is independent pink noise per electrode plus an alpha
//! rhythm with random phase. Artifacts are band-limited Gaussian bursts with
//! trapezoidal envelopes, injected independently into every electrode
//! referenced by the task's muscle-group montage pairs. Continuous movements
//! add a low-frequency motion component on the same electrodes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::convolve::FftConvolver;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::manifest::{
    ArtifactAnnotation, DatasetManifest, EoSegment, RecordingEntry, SubjectEntry, MANIFEST_VERSION,
};
use crate::model::{
    Annotation, ArtifactKind, ArtifactTask, BipolarMontage, MuscleGroup, Recording, DEFAULT_EEG_CHANNELS,
    PROTOCOL_SAMPLING_RATE_HZ,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundModel {
    /// Spectral exponent: power falls as `1 / f^exponent`.
    pub pink_exponent: f64,
    pub rms_uv: f64,
}

impl Default for BackgroundModel {
    fn default() -> Self {
        BackgroundModel {
            pink_exponent: 1.0,
            rms_uv: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlphaModel {
    pub center_hz: f64,
    pub rms_uv: f64,
}

impl Default for AlphaModel {
    fn default() -> Self {
        AlphaModel {
            center_hz: 10.0,
            rms_uv: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactModel {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub burst_rms_uv: f64,
    /// Scales the burst on the group's electrodes, in `[0, 1]`.
    pub spatial_gain: f64,
}

impl ArtifactModel {
    fn emg(spatial_gain: f64) -> Self {
        ArtifactModel {
            band_low_hz: 20.0,
            band_high_hz: 300.0,
            burst_rms_uv: 6.0,
            spatial_gain,
        }
    }
}

/// Mechanical artifact of continuous movements (electrode and cable
/// displacement). Unlike the EMG burst it is not scaled by the group's
/// spatial gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionModel {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub rms_uv: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel {
            band_low_hz: 2.0,
            band_high_hz: 20.0,
            rms_uv: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupArtifactModels {
    pub masseter_temporalis: ArtifactModel,
    pub frontalis: ArtifactModel,
    pub occipitalis: ArtifactModel,
}

impl Default for GroupArtifactModels {
    fn default() -> Self {
        GroupArtifactModels {
            masseter_temporalis: ArtifactModel::emg(1.0),
            frontalis: ArtifactModel::emg(1.0),
            occipitalis: ArtifactModel::emg(0.15),
        }
    }
}

impl GroupArtifactModels {
    pub fn get(&self, group: MuscleGroup) -> &ArtifactModel {
        match group {
            MuscleGroup::MasseterTemporalis => &self.masseter_temporalis,
            MuscleGroup::Frontalis => &self.frontalis,
            MuscleGroup::Occipitalis => &self.occipitalis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub seed: u64,
    pub subjects: usize,
    pub sampling_rate_hz: f64,
    pub background: BackgroundModel,
    pub alpha: AlphaModel,
    pub artifacts: GroupArtifactModels,
    pub motion: MotionModel,
    /// Global multiplier on every artifact burst; 0 disables injection.
    pub snr_scale: f64,
    /// Relative spread of the per-subject artifact amplitude.
    pub subject_variability: f64,
    /// Relative spread of the per-repetition artifact amplitude.
    pub repetition_jitter: f64,
    /// Envelope onset/offset ramp length.
    pub ramp_s: f64,
    /// Rate of the amplitude modulation applied to continuous movements.
    pub movement_rate_hz: f64,
    pub eo_duration_s: f64,
    /// Pause inserted before the EO segment and after every repetition.
    pub rest_gap_s: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            seed: 0,
            subjects: 7,
            sampling_rate_hz: PROTOCOL_SAMPLING_RATE_HZ,
            background: BackgroundModel::default(),
            alpha: AlphaModel::default(),
            artifacts: GroupArtifactModels::default(),
            motion: MotionModel::default(),
            snr_scale: 1.0,
            subject_variability: 0.2,
            repetition_jitter: 0.15,
            ramp_s: 0.25,
            movement_rate_hz: 1.0,
            eo_duration_s: 289.0,
            rest_gap_s: 2.0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sampling_rate_hz / 2.0;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.sampling_rate_hz > 0.0) {
            return bad("sampling rate must be positive".into());
        }
        if self.subjects == 0 {
            return bad("at least one subject required".into());
        }
        if !(self.background.rms_uv > 0.0 && self.alpha.rms_uv > 0.0) {
            return bad("background and alpha RMS must be positive".into());
        }
        if !(self.alpha.center_hz > 0.0 && self.alpha.center_hz < nyquist) {
            return bad("alpha frequency outside (0, nyquist)".into());
        }
        for g in MuscleGroup::ALL {
            let m = self.artifacts.get(g);
            if !(m.band_low_hz > 0.0 && m.band_low_hz < m.band_high_hz && m.band_high_hz < nyquist) {
                return bad(format!("{} band must lie within (0, nyquist)", g.as_str()));
            }
            if !(m.burst_rms_uv > 0.0) {
                return bad(format!("{} burst RMS must be positive", g.as_str()));
            }
            if !(0.0..=1.0).contains(&m.spatial_gain) {
                return bad(format!("{} spatial gain must be in [0, 1]", g.as_str()));
            }
        }
        let mo = &self.motion;
        if !(mo.band_low_hz > 0.0 && mo.band_low_hz < mo.band_high_hz && mo.band_high_hz < nyquist) {
            return bad("motion band must lie within (0, nyquist)".into());
        }
        if !(mo.rms_uv >= 0.0) {
            return bad("motion RMS must be >= 0".into());
        }
        if !(self.snr_scale >= 0.0) {
            return bad("snr_scale must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.subject_variability) || !(0.0..1.0).contains(&self.repetition_jitter) {
            return bad("variability fractions must be in [0, 1)".into());
        }
        if !(self.ramp_s >= 0.0 && self.ramp_s * 2.0 <= 5.0) {
            return bad("ramp must fit inside a 5 s epoch".into());
        }
        if !(self.eo_duration_s >= 0.0 && self.rest_gap_s >= 0.0 && self.movement_rate_hz >= 0.0) {
            return bad("durations must be non-negative".into());
        }
        Ok(())
    }
}

pub fn subject_id(index: usize) -> String {
    format!("S{:02}", index + 1)
}

/// Manifest entry for one subject: timing only, no samples.
pub fn protocol_layout(config: &SynthesisConfig, catalog: &[ArtifactTask]) -> (RecordingEntry, f64) {
    let gap = config.rest_gap_s;
    let mut t = gap;
    let eo = EoSegment {
        onset_s: t,
        duration_s: config.eo_duration_s,
    };
    t += config.eo_duration_s + gap;
    let mut artifacts = Vec::new();
    for task in catalog {
        for rep in 1..=task.protocol_repetitions {
            artifacts.push(ArtifactAnnotation {
                task_id: task.task_id,
                onset_s: t,
                duration_s: task.epoch_duration_s,
                repetition: rep,
            });
            t += task.epoch_duration_s + gap;
        }
    }
    (
        RecordingEntry {
            path: String::new(),
            artifacts,
            eo_segments: vec![eo],
        },
        t,
    )
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Zero-phase FIR whose magnitude follows `f^(-exponent/2)` above `fs/len`.
fn pink_kernel(exponent: f64, fs: f64, len: usize) -> Vec<f64> {
    let f_floor = fs / len as f64;
    let mid = (len / 2) as f64;
    let n_bins = len / 2;
    let amp: Vec<f64> = (0..=n_bins)
        .map(|k| {
            let f = (k as f64 * fs / len as f64).max(f_floor);
            f.powf(-exponent / 2.0)
        })
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 - mid;
            let mut v = amp[0];
            for (k, a) in amp.iter().enumerate().skip(1) {
                v += 2.0 * a * (2.0 * PI * k as f64 * t / len as f64).cos();
            }
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos();
            v * w / len as f64
        })
        .collect()
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        for v in x.iter_mut() {
            *v *= g;
        }
    }
}

/// Unit-RMS Gaussian noise restricted to `[low, high]` Hz.
fn bandlimited_noise(rng: &mut ChaCha8Rng, n: usize, low: f64, high: f64, fs: f64) -> Vec<f64> {
    let size = n.next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|_| Complex::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(size - k);
        let f = bin as f64 * fs / size as f64;
        if f < low || f > high {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let mut out: Vec<f64> = buf[..n].iter().map(|c| c.re).collect();
    normalize_rms(&mut out, 1.0);
    out
}

fn envelope(n: usize, fs: f64, ramp_s: f64, kind: ArtifactKind, rate_hz: f64, phase: f64) -> Vec<f64> {
    let ramp = (ramp_s * fs).round() as usize;
    (0..n)
        .map(|i| {
            let edge = i.min(n - 1 - i);
            let trap = if ramp == 0 || edge >= ramp {
                1.0
            } else {
                edge as f64 / ramp as f64
            };
            let modulation = match kind {
                ArtifactKind::IsometricContraction => 1.0,
                ArtifactKind::ContinuousMovement => 0.4 + 0.6 * (PI * rate_hz * i as f64 / fs + phase).sin().abs(),
            };
            trap * modulation
        })
        .collect()
}

/// Generates subject `index` (0-based).
pub fn synthesize_subject(
    config: &SynthesisConfig,
    index: usize,
    catalog: &[ArtifactTask],
    montage: &BipolarMontage,
    exec: Execution,
) -> Result<(SubjectEntry, Recording)> {
    config.validate()?;
    let fs = config.sampling_rate_hz;
    let sid = subject_id(index);
    let (mut entry, total_s) = protocol_layout(config, catalog);
    entry.path = format!("{sid}.emgr");
    let n = (total_s * fs).round() as usize;
    let channels: Vec<String> = DEFAULT_EEG_CHANNELS.iter().map(|s| s.to_string()).collect();
    for pair in &montage.pairs {
        for e in [&pair.anode, &pair.cathode] {
            if !channels.contains(e) {
                return Err(Error::MissingChannel(e.clone()));
            }
        }
    }

    let kernel = pink_kernel(config.background.pink_exponent, fs, 4097);
    let conv = FftConvolver::with_signal_hint(&kernel, n);
    let chan_idx: Vec<usize> = (0..channels.len()).collect();
    let mut samples: Vec<Vec<f64>> = exec.map(&chan_idx, |&c| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, index as u64, c as u64));
        let white: Vec<f64> = (0..n + kernel.len() - 1).map(|_| rng.sample(StandardNormal)).collect();
        let full = conv.convolve(&white);
        let mut bg: Vec<f64> = full[kernel.len() - 1..kernel.len() - 1 + n].to_vec();
        normalize_rms(&mut bg, config.background.rms_uv);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let amp = config.alpha.rms_uv * std::f64::consts::SQRT_2;
        let w = 2.0 * PI * config.alpha.center_hz / fs;
        for (i, v) in bg.iter_mut().enumerate() {
            *v += amp * (w * i as f64 + phase).sin();
        }
        bg
    });

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, index as u64, u64::MAX));
    let subject_factor = 1.0 + config.subject_variability * (2.0 * rng.gen::<f64>() - 1.0);
    let mut annotations = vec![Annotation {
        onset_s: entry.eo_segments[0].onset_s,
        duration_s: entry.eo_segments[0].duration_s,
        label: "EO".into(),
    }];
    for a in &entry.artifacts {
        let task = catalog.iter().find(|t| t.task_id == a.task_id).unwrap();
        let model = config.artifacts.get(task.muscle_group);
        let rep_factor = 1.0 + config.repetition_jitter * (2.0 * rng.gen::<f64>() - 1.0);
        let amplitude = config.snr_scale * model.burst_rms_uv * model.spatial_gain * subject_factor * rep_factor;
        let motion_amplitude = config.snr_scale * config.motion.rms_uv * subject_factor * rep_factor;
        let start = (a.onset_s * fs).round() as usize;
        let len = (a.duration_s * fs).round() as usize;
        let env = envelope(
            len,
            fs,
            config.ramp_s,
            task.kind,
            config.movement_rate_hz,
            rng.gen_range(0.0..PI),
        );
        for electrode in montage.electrodes_of(task.muscle_group) {
            let c = channels.iter().position(|x| x == electrode).unwrap();
            let channel_gain = 0.7 + 0.6 * rng.gen::<f64>();
            let burst = bandlimited_noise(&mut rng, len, model.band_low_hz, model.band_high_hz, fs);
            let motion = (task.kind == ArtifactKind::ContinuousMovement).then(|| {
                let m = &config.motion;
                bandlimited_noise(&mut rng, len, m.band_low_hz, m.band_high_hz, fs)
            });
            if amplitude == 0.0 && motion_amplitude == 0.0 {
                continue;
            }
            for (i, (b, e)) in burst.iter().zip(&env).enumerate() {
                samples[c][start + i] += amplitude * channel_gain * b * e;
            }
            if let Some(m) = motion {
                for (i, (b, e)) in m.iter().zip(&env).enumerate() {
                    samples[c][start + i] += motion_amplitude * channel_gain * b * e;
                }
            }
        }
        annotations.push(Annotation {
            onset_s: a.onset_s,
            duration_s: a.duration_s,
            label: format!("{}/{}", a.task_id, a.repetition),
        });
    }

    // stored precision
    for row in &mut samples {
        for v in row.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
    let recording = Recording::new(sid.clone(), fs, channels, samples, annotations)?;
    Ok((
        SubjectEntry {
            subject_id: sid,
            recordings: vec![entry],
        },
        recording,
    ))
}

/// Generates every subject in memory. For large runs prefer
/// [`synthesize_subject`] and stream each recording to disk.
pub fn synthesize_dataset(
    config: &SynthesisConfig,
    catalog: &[ArtifactTask],
    montage: &BipolarMontage,
) -> Result<(DatasetManifest, Vec<Recording>)> {
    config.validate()?;
    let mut subjects = Vec::with_capacity(config.subjects);
    let mut recordings = Vec::with_capacity(config.subjects);
    for i in 0..config.subjects {
        let (entry, rec) = synthesize_subject(config, i, catalog, montage, Execution::default())?;
        subjects.push(entry);
        recordings.push(rec);
    }
    Ok((
        DatasetManifest {
            version: MANIFEST_VERSION,
            subjects,
        },
        recordings,
    ))
}
