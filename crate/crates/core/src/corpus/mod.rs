//! Corpus ingestion: manifests, WAV decoding, resampling and the synthetic
//! corpus generator.

pub mod manifest;
pub mod resample;
pub mod synth;
pub mod wav;

pub use manifest::{load_manifest, CorpusManifest, Group, ManifestEntry, SubjectId, Task};
pub use resample::resample;
pub use synth::{generate_synthetic_corpus, SyntheticConfig};
pub use wav::{decode_wav, Waveform};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rate every waveform is brought to before feature extraction.
pub const PIPELINE_SAMPLE_RATE: u32 = 48_000;

/// One labelled utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSegment {
    pub subject: SubjectId,
    pub group: Group,
    pub task: Task,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl SpeechSegment {
    pub fn new(subject: SubjectId, group: Group, task: Task, samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid(format!("segment of subject {subject} has no samples")));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !(-1.0..=1.0).contains(s)) {
            return Err(Error::invalid(format!("sample {i} of subject {subject} outside [-1, 1]")));
        }
        Ok(SpeechSegment { subject, group, task, samples, sample_rate })
    }
}

/// Decodes every manifest entry and resamples it to `target_rate`.
pub fn load_segments(manifest: &CorpusManifest, target_rate: u32) -> Result<Vec<SpeechSegment>> {
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let path = manifest.resolve(entry);
            let wave = decode_wav(&path)?;
            let samples = if wave.sample_rate == target_rate {
                wave.samples
            } else {
                // interpolation may overshoot slightly near full scale
                resample(&wave.samples, wave.sample_rate, target_rate)?.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()
            };
            SpeechSegment::new(entry.subject.clone(), entry.group, entry.task, samples, target_rate)
        })
        .collect()
}
