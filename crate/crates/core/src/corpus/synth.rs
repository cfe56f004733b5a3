//! Deterministic synthetic two-class speech-like corpora.
//!
//! Each segment is three harmonics of a fundamental between 120 and 220 Hz,
//! with block-wise pitch jitter, amplitude shimmer and additive breath noise.
//! The PD-like class raises all three perturbations in proportion to
//! `separation`; at `separation = 0` both classes share one generator.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{CorpusManifest, Group, ManifestEntry, SubjectId, Task};
use super::wav::write_wav_i16;
use crate::error::{Error, Result};

pub const SYNTH_SAMPLE_RATE: u32 = 48_000;

/// Perturbation block length (10 ms at 48 kHz).
const BLOCK: usize = 480;
const HARMONIC_GAINS: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub subjects_per_group: usize,
    pub segments_per_subject: usize,
    pub duration_sec: f64,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { subjects_per_group: 10, segments_per_subject: 8, duration_sec: 1.0, separation: 1.0, seed: 7 }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects_per_group == 0 || self.segments_per_subject == 0 {
            return Err(Error::Config("subject and segment counts must be at least 1".into()));
        }
        if !(self.duration_sec >= 1.0) {
            return Err(Error::Config(format!("duration_sec must be >= 1.0, got {}", self.duration_sec)));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return Err(Error::Config(format!("separation must lie in [0, 1], got {}", self.separation)));
        }
        Ok(())
    }
}

/// Class-conditional generator parameters (relative standard deviations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassParams {
    pub jitter: f64,
    pub shimmer: f64,
    pub breath_noise: f64,
}

impl ClassParams {
    const BASE: ClassParams = ClassParams { jitter: 0.004, shimmer: 0.04, breath_noise: 0.01 };
    const PD_SHIFT: ClassParams = ClassParams { jitter: 0.03, shimmer: 0.3, breath_noise: 0.2 };

    pub fn for_group(group: Group, separation: f64) -> ClassParams {
        let s = match group {
            Group::Hc => 0.0,
            Group::Pd => separation,
        };
        ClassParams {
            jitter: Self::BASE.jitter + s * Self::PD_SHIFT.jitter,
            shimmer: Self::BASE.shimmer + s * Self::PD_SHIFT.shimmer,
            breath_noise: Self::BASE.breath_noise + s * Self::PD_SHIFT.breath_noise,
        }
    }
}

fn segment_rng(seed: u64, subject: usize, segment: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subject as u64) << 32) | segment as u64);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Renders one segment. `subject_scale` perturbs the class parameters per
/// subject so subjects within a class are not identical.
fn render_segment(params: ClassParams, subject_scale: f64, f0_center: f64, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0 = (f0_center + rng.random_range(-15.0..15.0)).clamp(120.0, 220.0);
    let jitter = params.jitter * subject_scale;
    let shimmer = params.shimmer * subject_scale;
    let noise = params.breath_noise * subject_scale;
    let syllable_rate = rng.random_range(3.0..5.0);
    let rate = SYNTH_SAMPLE_RATE as f64;

    let blocks = len.div_ceil(BLOCK) + 1;
    let pitch: Vec<f64> = (0..blocks).map(|_| 1.0 + jitter * gaussian(rng)).collect();
    let gain: Vec<f64> = (0..blocks).map(|_| (1.0 + shimmer * gaussian(rng)).max(0.05)).collect();

    let mut phase = 0.0;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        // linear interpolation between block values keeps the contour smooth
        let b = i / BLOCK;
        let frac = (i % BLOCK) as f64 / BLOCK as f64;
        let p = pitch[b] * (1.0 - frac) + pitch[b + 1] * frac;
        let g = gain[b] * (1.0 - frac) + gain[b + 1] * frac;
        phase += 2.0 * PI * f0 * p / rate;
        let voiced: f64 = HARMONIC_GAINS.iter().enumerate().map(|(h, a)| a * ((h + 1) as f64 * phase).sin()).sum();
        let t = i as f64 / rate;
        let envelope = 0.6 + 0.4 * (2.0 * PI * syllable_rate * t).sin().abs();
        out.push(envelope * g * voiced + noise * gaussian(rng));
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.8 / peak);
    }
    out
}

struct SubjectPlan {
    id: SubjectId,
    group: Group,
    index: usize,
}

fn plan_subjects(config: &SyntheticConfig) -> Vec<SubjectPlan> {
    let mut plans = Vec::with_capacity(2 * config.subjects_per_group);
    for (g, group) in [Group::Pd, Group::Hc].into_iter().enumerate() {
        for s in 0..config.subjects_per_group {
            let prefix = if group == Group::Pd { "pd" } else { "hc" };
            plans.push(SubjectPlan {
                id: SubjectId::new(format!("{prefix}{:02}", s + 1)).expect("non-empty"),
                group,
                index: g * config.subjects_per_group + s,
            });
        }
    }
    plans
}

/// Generates the waveform for every planned segment, in manifest order.
pub fn synthesize_segments(config: &SyntheticConfig) -> Result<Vec<(ManifestEntry, Vec<f64>)>> {
    config.validate()?;
    let len = (config.duration_sec * SYNTH_SAMPLE_RATE as f64).round() as usize;
    let jobs: Vec<(SubjectPlan, usize)> = plan_subjects(config)
        .into_iter()
        .flat_map(|p| (0..config.segments_per_subject).map(move |k| (SubjectPlan { id: p.id.clone(), ..p }, k)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(plan, k)| {
            // subject-level draws come from the segment-independent stream
            let mut subject_rng = segment_rng(config.seed, plan.index, usize::MAX >> 32);
            let f0_center = subject_rng.random_range(135.0..205.0);
            let subject_scale = subject_rng.random_range(0.8..1.2);
            let mut rng = segment_rng(config.seed, plan.index, k);
            let params = ClassParams::for_group(plan.group, config.separation);
            let samples = render_segment(params, subject_scale, f0_center, len, &mut rng);
            let entry = ManifestEntry {
                path: PathBuf::from(format!("audio/{}_{:03}.wav", plan.id, k)),
                subject: plan.id,
                group: plan.group,
                task: Task::from_code((k % 3) as u8 + 1).expect("valid code"),
            };
            (entry, samples)
        })
        .collect())
}

/// Writes a synthetic corpus (WAV files plus `manifest.csv`) into `out_dir`.
pub fn generate_synthetic_corpus(config: &SyntheticConfig, out_dir: &Path) -> Result<CorpusManifest> {
    let segments = synthesize_segments(config)?;
    let audio = out_dir.join("audio");
    fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    segments
        .par_iter()
        .try_for_each(|(entry, samples)| write_wav_i16(&out_dir.join(&entry.path), samples, SYNTH_SAMPLE_RATE))?;
    let manifest = CorpusManifest { root: out_dir.to_path_buf(), entries: segments.into_iter().map(|(e, _)| e).collect() };
    manifest.validate()?;
    if !manifest.has_both_groups() {
        return Err(Error::invalid("generated corpus lacks one of the groups"));
    }
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(separation: f64, seed: u64) -> SyntheticConfig {
        SyntheticConfig { subjects_per_group: 2, segments_per_subject: 2, duration_sec: 1.0, separation, seed }
    }

    #[test]
    fn null_separation_equalizes_class_parameters() {
        assert_eq!(ClassParams::for_group(Group::Pd, 0.0), ClassParams::for_group(Group::Hc, 0.0));
        assert_ne!(ClassParams::for_group(Group::Pd, 1.0), ClassParams::for_group(Group::Hc, 1.0));
    }

    #[test]
    fn manifest_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig { subjects_per_group: 5, segments_per_subject: 4, ..small(0.5, 7) };
        let m = generate_synthetic_corpus(&cfg, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 40);
        assert_eq!(m.subjects().len(), 10);
        let loaded = crate::corpus::load_manifest(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(loaded.entries, m.entries);
    }

    #[test]
    fn byte_identical_for_same_seed() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let m = generate_synthetic_corpus(&small(1.0, 7), a.path()).unwrap();
        generate_synthetic_corpus(&small(1.0, 7), b.path()).unwrap();
        for e in &m.entries {
            assert_eq!(fs::read(a.path().join(&e.path)).unwrap(), fs::read(b.path().join(&e.path)).unwrap());
        }
        assert_eq!(fs::read(a.path().join("manifest.csv")).unwrap(), fs::read(b.path().join("manifest.csv")).unwrap());
    }

    #[test]
    fn different_seed_changes_audio() {
        let a = synthesize_segments(&small(1.0, 1)).unwrap();
        let b = synthesize_segments(&small(1.0, 2)).unwrap();
        assert_ne!(a[0].1, b[0].1);
    }

    #[test]
    fn samples_in_range() {
        for (_, s) in synthesize_segments(&small(1.0, 3)).unwrap() {
            assert_eq!(s.len(), 48_000);
            assert!(s.iter().all(|v| v.abs() <= 0.8 + 1e-12));
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(SyntheticConfig { separation: 1.5, ..small(0.0, 0) }.validate().is_err());
        assert!(SyntheticConfig { duration_sec: 0.5, ..small(0.0, 0) }.validate().is_err());
        assert!(SyntheticConfig { subjects_per_group: 0, ..small(0.0, 0) }.validate().is_err());
    }

    #[test]
    fn unwritable_directory() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, b"x").unwrap();
        assert!(generate_synthetic_corpus(&small(0.0, 0), &file.join("sub")).is_err());
    }
}
