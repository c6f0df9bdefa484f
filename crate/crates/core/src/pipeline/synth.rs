//! Synthetic descriptor generator.
//!
//! Every class plays the same set of motifs, one per segment slot, but in its
//! own temporal order. A motif owns a few prototype vectors per channel; each
//! frame emits jittered copies of the prototypes of the motif whose segment
//! centre is nearest. Atoms should therefore recover motifs, and only their
//! order tells the classes apart.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{format_vector, segment_bounds, write_atomic, Channel, ClipInfo, DescriptorRecord, Split};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub clips_per_class: usize,
    /// Segment slots per clip; also the number of motifs.
    pub k: usize,
    pub clip_length: usize,
    /// Motif order per class; defaults to rotations of `0..k`.
    pub layout: Option<Vec<Vec<usize>>>,
    /// Probability that a clip's manifest label is replaced by another class.
    pub noise: f64,
    pub dim: usize,
    pub prototypes_per_motif: usize,
    /// Standard deviation of the per-descriptor jitter.
    pub jitter: f64,
    /// Fraction of each class's clips (the last ones) placed in the test split.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 3,
            clips_per_class: 20,
            k: 3,
            clip_length: 60,
            layout: None,
            noise: 0.0,
            dim: 8,
            prototypes_per_motif: 3,
            jitter: 0.05,
            test_fraction: 0.3,
            seed: 0,
        }
    }
}

/// Ground truth of one generated clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub info: ClipInfo,
    /// Class whose motif order generated the clip (differs from the label under noise).
    pub true_class: usize,
    /// Motif index per segment slot.
    pub motifs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub records: Vec<DescriptorRecord>,
    pub clips: Vec<SynthClip>,
}

pub fn class_label(c: usize) -> String {
    format!("class{c}")
}

/// Parses `0,1,2;1,2,0` into one motif order per class.
pub fn parse_layout(s: &str) -> std::result::Result<Vec<Vec<usize>>, String> {
    s.split(';')
        .map(|class| {
            class
                .split(',')
                .map(|m| m.trim().parse().map_err(|_| format!("bad motif index {m:?} in layout")))
                .collect()
        })
        .collect()
}

fn default_layout(classes: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if classes > k {
        return Err(Error::Usage(format!(
            "{classes} classes need an explicit layout when there are only {k} segment slots"
        )));
    }
    Ok((0..classes).map(|c| (0..k).map(|j| (c + j) % k).collect()).collect())
}

impl SynthSpec {
    pub fn layout(&self) -> Result<Vec<Vec<usize>>> {
        let layout = match &self.layout {
            Some(l) => l.clone(),
            None => default_layout(self.classes, self.k)?,
        };
        if layout.len() != self.classes {
            return Err(Error::Usage(format!(
                "layout has {} classes, expected {}",
                layout.len(),
                self.classes
            )));
        }
        if let Some(bad) = layout.iter().find(|l| l.len() != self.k) {
            return Err(Error::Usage(format!("layout entry {bad:?} must have {} motifs", self.k)));
        }
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.clips_per_class == 0 {
            return Err(Error::Usage("synthetic data needs at least one class and one clip".into()));
        }
        if self.k == 0 || self.dim == 0 || self.prototypes_per_motif == 0 {
            return Err(Error::Usage("k, dim and prototypes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::Usage("noise and test fraction must lie in [0, 1]".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Usage("jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Index of the segment whose centre is nearest to `frame`; ties go to the earlier one.
fn phase(bounds: &[(usize, usize)], frame: usize) -> usize {
    let dist = |&(s, e): &(usize, usize)| (2 * frame + 1).abs_diff(s + e);
    (0..bounds.len()).fold(0, |best, j| if dist(&bounds[j]) < dist(&bounds[best]) { j } else { best })
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let layout = spec.layout()?;
    let bounds = segment_bounds(spec.clip_length, spec.k)?;
    let num_motifs = layout.iter().flatten().max().map_or(0, |m| m + 1);

    let mut proto_rng = seed::rng(seed::derive(spec.seed, "synth-prototypes"));
    // prototypes[motif][channel][p]
    let prototypes: Vec<Vec<Vec<Vec<f64>>>> = (0..num_motifs)
        .map(|_| {
            Channel::ALL
                .iter()
                .map(|_| {
                    (0..spec.prototypes_per_motif)
                        .map(|_| (0..spec.dim).map(|_| proto_rng.random::<f64>()).collect())
                        .collect()
                })
                .collect()
        })
        .collect();

    let jitter = Normal::new(0.0, spec.jitter).map_err(|e| Error::Usage(e.to_string()))?;
    let test_per_class = (spec.clips_per_class as f64 * spec.test_fraction).round() as usize;
    let mut records = Vec::new();
    let mut clips = Vec::new();
    for (c, order) in layout.iter().enumerate() {
        for i in 0..spec.clips_per_class {
            let video_id = format!("c{c}_{i:03}");
            let mut rng = seed::rng(seed::derive(spec.seed, &format!("synth-clip-{video_id}")));
            let label = if spec.classes > 1 && rng.random_bool(spec.noise) {
                let other = rng.random_range(0..spec.classes - 1);
                if other >= c {
                    other + 1
                } else {
                    other
                }
            } else {
                c
            };
            for frame in 0..spec.clip_length {
                let motif = order[phase(&bounds, frame)];
                for (ci, &channel) in Channel::ALL.iter().enumerate() {
                    for _ in 0..rng.random_range(1..=2) {
                        let p = &prototypes[motif][ci][rng.random_range(0..spec.prototypes_per_motif)];
                        let vector = p.iter().map(|&x| x + jitter.sample(&mut rng)).collect();
                        records.push(DescriptorRecord {
                            video_id: video_id.clone(),
                            frame_index: frame,
                            channel,
                            vector,
                        });
                    }
                }
            }
            let split = if i + test_per_class >= spec.clips_per_class {
                Split::Test
            } else {
                Split::Train
            };
            clips.push(SynthClip {
                info: ClipInfo {
                    video_id,
                    clip_length: spec.clip_length,
                    class_label: class_label(label),
                    split: Some(split),
                },
                true_class: c,
                motifs: order.clone(),
            });
        }
    }
    Ok(SynthData { records, clips })
}

impl SynthData {
    pub fn descriptors_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.video_id,
                r.frame_index,
                r.channel,
                format_vector(&r.vector)
            );
        }
        out
    }

    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for c in &self.clips {
            let split = match c.info.split {
                Some(Split::Test) => "\ttest",
                Some(Split::Train) => "\ttrain",
                None => "",
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}{split}",
                c.info.video_id, c.info.clip_length, c.info.class_label
            );
        }
        out
    }

    /// Writes `descriptors.tsv` and `manifest.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let d = dir.join("descriptors.tsv");
        let m = dir.join("manifest.tsv");
        write_atomic(&d, self.descriptors_text().as_bytes())?;
        write_atomic(&m, self.manifest_text().as_bytes())?;
        Ok((d, m))
    }
}
