//! End-to-end orchestration behind the `crowd-motion` subcommands.
//!
//! Each `cmd_*` function reads its inputs from the paths in a
//! [`PipelineConfig`], runs the stages and writes its outputs atomically.
//! The in-memory cores ([`train`], [`predict`]) are exposed separately so
//! callers can skip the file layer.

pub mod config;
pub mod model;
pub mod synth;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::atoms::{mine_atoms, AtomMiningParams, MiningReport};
use crate::encode::{encode_responses, VideoRepresentation};
use crate::error::{Error, Result};
use crate::eval::{apply_truth, parse_scores, parse_truth, report, roc_auc, score_clips, RocResult};
use crate::ingest::{
    build_codebook, load_descriptors, load_manifest, quantize_clip, validate_frames, write_atomic, Channel,
    ClipInfo, Codebook, CodebookSet, DescriptorRecord, SegmentHistogram, Split,
};
use crate::phrases::{mine_phrases, LabeledVideo, MinedPhrase, PhraseMiningParams};
use crate::seed;
use crate::similarity::compute_normalizers;
use crate::svm::{train_multiclass, SvmParams};

pub use config::PipelineConfig;
pub use model::{ModelFile, ModelPhrase};
pub use synth::{SynthData, SynthSpec};

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Usage(format!("missing required path --{flag}")))
}

/// `path` with `suffix` appended to its file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn codebook_path(dir: &Path, channel: Channel) -> PathBuf {
    dir.join(format!("codebook_{channel}.txt"))
}

pub fn load_codebooks(dir: &Path) -> Result<CodebookSet> {
    let books = Channel::ALL
        .iter()
        .map(|&c| {
            let cb = Codebook::load(&codebook_path(dir, c))?;
            if cb.channel != c {
                return Err(Error::invalid(format!(
                    "{} holds the {} codebook",
                    codebook_path(dir, c).display(),
                    cb.channel
                )));
            }
            Ok(cb)
        })
        .collect::<Result<Vec<_>>>()?;
    CodebookSet::new(books)
}

fn is_training(c: &ClipInfo) -> bool {
    c.split != Some(Split::Test)
}

fn group_by_video(records: &[DescriptorRecord]) -> HashMap<&str, Vec<&DescriptorRecord>> {
    let mut map: HashMap<&str, Vec<&DescriptorRecord>> = HashMap::new();
    for r in records {
        map.entry(r.video_id.as_str()).or_default().push(r);
    }
    map
}

/// Segment histograms of every clip, in manifest order.
pub fn quantize_clips(
    clips: &[ClipInfo],
    records: &[DescriptorRecord],
    codebooks: &CodebookSet,
    k: usize,
) -> Result<Vec<Vec<SegmentHistogram>>> {
    validate_frames(records, clips)?;
    let by_video = group_by_video(records);
    clips
        .iter()
        .map(|c| {
            let recs = by_video.get(c.video_id.as_str()).map_or(&[][..], Vec::as_slice);
            quantize_clip(&c.video_id, c.clip_length, k, recs, codebooks)
        })
        .collect()
}

/// Learns the four codebooks and writes them to `--out` (or `--codebooks`).
///
/// With a manifest, only descriptors of training-split clips are used.
pub fn cmd_codebook(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.seed()?;
    if cfg.codebook_size == 0 {
        return Err(Error::Usage("codebook-size must be positive".into()));
    }
    let dir = cfg
        .out
        .as_deref()
        .or(cfg.codebooks.as_deref())
        .ok_or_else(|| Error::Usage("missing required path --out".into()))?;
    let mut records = load_descriptors(require(&cfg.descriptors, "descriptors")?)?;
    if let Some(m) = &cfg.manifest {
        let train: std::collections::HashSet<String> = load_manifest(m)?
            .into_iter()
            .filter(is_training)
            .map(|c| c.video_id)
            .collect();
        records.retain(|r| train.contains(&r.video_id));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Channel::ALL
        .iter()
        .map(|&c| {
            let cb = build_codebook(&records, c, cfg.codebook_size, seed::derive_indexed(seed, "codebook", c.index()))
                .map_err(|e| e.in_stage("codebook"))?;
            let path = codebook_path(dir, c);
            cb.save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Everything produced by one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub atom_report: MiningReport,
    pub mined: Vec<MinedPhrase>,
    /// Training videos with their atom response matrices.
    pub videos: Vec<LabeledVideo>,
    /// Top-set size used for phrase scoring.
    pub top: usize,
}

impl TrainOutcome {
    /// Atom reassignment counts, then mined phrases with their seed scores.
    pub fn report_text(&self) -> String {
        let mut out = String::from("# atoms\niter\tchanged\n");
        out.push_str(&self.atom_report.to_text());
        let _ = writeln!(out, "converged\t{}", u8::from(self.atom_report.converged));
        out.push_str("# phrases\nclass\tdis\tseed_dis\tphrase\n");
        for m in &self.mined {
            let _ = writeln!(
                out,
                "{}\t{:?}\t{:?}\t{}",
                m.score.class,
                m.score.dis,
                m.seed_dis,
                m.phrase.encoding()
            );
        }
        out
    }
}

fn svm_params(cfg: &PipelineConfig, seed: u64) -> SvmParams {
    SvmParams {
        epsilon: cfg.epsilon,
        c_reg: cfg.c_reg,
        tol: cfg.tol,
        max_passes: cfg.max_passes,
        seed,
    }
}

/// Runs every training stage on the non-test clips of `clips`.
pub fn train(
    cfg: &PipelineConfig,
    records: &[DescriptorRecord],
    clips: &[ClipInfo],
    codebooks: CodebookSet,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let train_clips: Vec<ClipInfo> = clips.iter().filter(|c| is_training(c)).cloned().collect();
    if train_clips.is_empty() {
        return Err(Error::invalid("manifest has no training clips").in_stage("ingest"));
    }

    let per_clip = quantize_clips(&train_clips, records, &codebooks, cfg.k).map_err(|e| e.in_stage("ingest"))?;
    let segments: Vec<SegmentHistogram> = per_clip.iter().flatten().cloned().collect();

    let norms = compute_normalizers(&segments, seed::derive(seed, "normalizers")).map_err(|e| e.in_stage("normalizers"))?;

    let atom_params = AtomMiningParams {
        num_atoms: cfg.atoms,
        max_iters: cfg.max_iters,
        init: cfg.init,
        svm: svm_params(cfg, 0),
        seed: seed::derive(seed, "atoms"),
    };
    let (atoms, atom_report) = mine_atoms(&segments, &norms, &atom_params).map_err(|e| e.in_stage("atoms"))?;

    let videos = train_clips
        .iter()
        .zip(&per_clip)
        .map(|(c, segs)| {
            Ok(LabeledVideo {
                id: c.video_id.clone(),
                class: c.class_label.clone(),
                responses: atoms.response_matrix(segs)?,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("phrases"))?;
    let top = cfg.top.unwrap_or(videos.len().div_ceil(2));
    let phrase_params = PhraseMiningParams {
        per_class_budget: cfg.budget,
        max_units: cfg.max_units,
        top,
        window: cfg.window,
    };
    let mined = mine_phrases(&videos, atoms.len(), cfg.k, &phrase_params).map_err(|e| e.in_stage("phrases"))?;
    let phrases: Vec<ModelPhrase> = mined
        .iter()
        .map(|m| ModelPhrase {
            class: m.score.class.clone(),
            dis: m.score.dis,
            phrase: m.phrase.clone(),
        })
        .collect();
    let phrase_list: Vec<_> = phrases.iter().map(|p| p.phrase.clone()).collect();

    let xs = videos
        .iter()
        .map(|v| Ok(encode_responses(&v.id, &v.responses, &phrase_list, cfg.l2)?.vector))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("encode"))?;
    let labels: Vec<String> = videos.iter().map(|v| v.class.clone()).collect();
    let classifier = train_multiclass(&xs, &labels, &svm_params(cfg, seed::derive(seed, "classifier")))
        .map_err(|e| e.in_stage("classifier"))?;
    for c in cfg.target_class.iter().chain(&cfg.normal_class) {
        if classifier.class_index(c).is_none() {
            return Err(Error::UnknownClass(c.clone()).in_stage("classifier"));
        }
    }

    let config = PipelineConfig {
        descriptors: None,
        manifest: None,
        codebooks: None,
        model: None,
        out: None,
        ..cfg.clone()
    };
    Ok(TrainOutcome {
        model: ModelFile {
            config,
            codebooks,
            atoms,
            phrases,
            classifier,
        },
        atom_report,
        mined,
        videos,
        top,
    })
}

/// Trains from files and writes the model to `--out` and the mining report to `<out>.report`.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let out = require(&cfg.out, "out")?;
    let records = load_descriptors(require(&cfg.descriptors, "descriptors")?)?;
    let clips = load_manifest(require(&cfg.manifest, "manifest")?)?;
    let codebooks = load_codebooks(require(&cfg.codebooks, "codebooks")?)?;
    let outcome = train(cfg, &records, &clips, codebooks)?;
    outcome.model.save(out)?;
    write_atomic(&with_suffix(out, ".report"), outcome.report_text().as_bytes())?;
    Ok(outcome)
}

/// Per-clip output of [`predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    /// Label from the manifest.
    pub label: String,
    pub predicted: String,
    /// Anomaly score under the model's score target.
    pub score: f64,
    /// Whether the clip is a positive under the score target.
    pub truth: bool,
    pub representation: VideoRepresentation,
}

/// Encodes and classifies every clip of `clips`.
pub fn predict(model: &ModelFile, records: &[DescriptorRecord], clips: &[ClipInfo]) -> Result<Vec<Prediction>> {
    let per_clip = quantize_clips(clips, records, &model.codebooks, model.config.k)?;
    let reps = clips
        .iter()
        .zip(&per_clip)
        .map(|(c, segs)| model.encode(&c.video_id, segs))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = clips.iter().map(|c| c.class_label.clone()).collect();
    let scores = score_clips(&model.classifier, &reps, &labels, &model.score_target())?;
    reps.into_iter()
        .zip(labels)
        .zip(scores)
        .map(|((representation, label), s)| {
            Ok(Prediction {
                id: s.id,
                label,
                predicted: model.classifier.predict(&representation.vector)?.to_string(),
                score: s.score,
                truth: s.truth,
                representation,
            })
        })
        .collect()
}

/// Writes the scores file (`id<TAB>score<TAB>truth`) to `--out`, predicted
/// classes to `<out>.pred` and representations to `<out>.repr`.
///
/// `split` restricts the manifest to one side of its split column.
pub fn cmd_predict(cfg: &PipelineConfig, split: Option<Split>) -> Result<Vec<Prediction>> {
    let out = require(&cfg.out, "out")?;
    let model = ModelFile::load(require(&cfg.model, "model")?)?;
    let records = load_descriptors(require(&cfg.descriptors, "descriptors")?)?;
    let mut clips = load_manifest(require(&cfg.manifest, "manifest")?)?;
    if let Some(s) = split {
        clips.retain(|c| c.split == Some(s));
    }
    let preds = if clips.is_empty() {
        Vec::new()
    } else {
        predict(&model, &records, &clips)?
    };
    let (mut scores, mut pred, mut repr) = (String::new(), String::new(), String::new());
    for p in &preds {
        let _ = writeln!(scores, "{}\t{:?}\t{}", p.id, p.score, u8::from(p.truth));
        let _ = writeln!(pred, "{}\t{}\t{}", p.id, p.predicted, p.label);
        let _ = writeln!(repr, "{}", p.representation.dump_line());
    }
    write_atomic(out, scores.as_bytes())?;
    write_atomic(&with_suffix(out, ".pred"), pred.as_bytes())?;
    write_atomic(&with_suffix(out, ".repr"), repr.as_bytes())?;
    Ok(preds)
}

/// Result of [`cmd_eval`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub roc: RocResult,
    pub report: String,
}

/// Computes ROC/AUC from a scores file, optionally overriding truth flags
/// with a clip- or frame-level truth file. Writes the ROC CSV to `out` and
/// the report to `<out>.report`.
pub fn cmd_eval(scores: &Path, truth: Option<&Path>, out: &Path, baselines: bool) -> Result<EvalOutcome> {
    let open = |p: &Path| std::fs::File::open(p).map(std::io::BufReader::new).map_err(|e| Error::io(p, e));
    let mut s = parse_scores(open(scores)?)?;
    if let Some(t) = truth {
        apply_truth(&mut s, &parse_truth(open(t)?)?)?;
    }
    let roc = roc_auc(&s)?;
    let text = report(&roc, baselines);
    write_atomic(out, roc.to_csv().as_bytes())?;
    write_atomic(&with_suffix(out, ".report"), text.as_bytes())?;
    Ok(EvalOutcome { roc, report: text })
}

/// Generates a synthetic set and writes `descriptors.tsv` and `manifest.tsv` into `dir`.
pub fn cmd_synth(spec: &SynthSpec, dir: &Path) -> Result<SynthData> {
    let data = synth::generate(spec)?;
    data.write(dir)?;
    Ok(data)
}

/// Human-readable model summary: sizes, phrases and classes.
pub fn dump_model(model: &ModelFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "segments\t{}", model.config.k);
    let sizes = model.codebooks.sizes();
    for c in Channel::ALL {
        let _ = writeln!(out, "codebook\t{c}\t{}", sizes[c.index()]);
    }
    let _ = writeln!(out, "atoms\t{}", model.atoms.len());
    let _ = writeln!(out, "phrases\t{}", model.phrases.len());
    for p in &model.phrases {
        let _ = writeln!(out, "{}\t{:?}\t{}", p.class, p.dis, p.phrase.encoding());
    }
    let _ = writeln!(out, "classes\t{}", model.classifier.classes.join(","));
    out
}

/// Loads a config file (if any); explicit settings are applied on top by the caller.
pub fn base_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(p) = path {
        cfg.apply_file(p)?;
    }
    Ok(cfg)
}
