//! Stage-level and end-to-end behaviour of the library pipeline.

mod common;

use std::collections::BTreeSet;

use crowd_motion::atoms::{mine_atoms, reassign, train_atom_classifiers, AtomMiningParams, InitMethod};
use crowd_motion::eval::{parse_scores, roc_auc};
use crowd_motion::ingest::{load_descriptors, load_manifest, parse_manifest, Split};
use crowd_motion::phrases::{mine_phrases, LabeledVideo, MotionPhrase, PhraseMiningParams, PhraseUnit};
use crowd_motion::pipeline::{self, synth, ModelFile, PipelineConfig, SynthSpec};
use crowd_motion::similarity::compute_normalizers;
use crowd_motion::svm::SvmParams;
use crowd_motion::Error;

fn video(id: &str, class: &str, a: [f64; 2], b: [f64; 2]) -> LabeledVideo {
    LabeledVideo {
        id: id.into(),
        class: class.into(),
        responses: vec![a.to_vec(), b.to_vec()],
    }
}

/// Class `ab` plays atom 0 then atom 1. Class `other` holds the reverse
/// order and videos with a single repeated atom, so no single unit
/// separates the classes but the ordered pair does.
fn ordered_fixture() -> Vec<LabeledVideo> {
    let mut v = Vec::new();
    for i in 0..4 {
        v.push(video(&format!("ab{i}"), "ab", [1.0, 0.0], [0.0, 1.0]));
    }
    for i in 0..2 {
        v.push(video(&format!("ba{i}"), "other", [0.0, 1.0], [1.0, 0.0]));
        v.push(video(&format!("aa{i}"), "other", [1.0, 1.0], [0.0, 0.0]));
        v.push(video(&format!("bb{i}"), "other", [0.0, 0.0], [1.0, 1.0]));
    }
    v
}

fn all_phrases_up_to_two(atoms: usize, slots: usize, window: usize) -> Vec<MotionPhrase> {
    let units: Vec<PhraseUnit> = (0..atoms)
        .flat_map(|atom_id| (0..slots).map(move |anchor| PhraseUnit { atom_id, anchor, window }))
        .collect();
    let mut out: Vec<MotionPhrase> = units.iter().map(|&u| MotionPhrase::single(u)).collect();
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            out.push(MotionPhrase::new(vec![units[i], units[j]], None).unwrap());
        }
    }
    out
}

#[test]
fn ordered_pair_beats_every_single_unit() {
    let videos = ordered_fixture();
    let t = videos.len() / 2;
    let params = PhraseMiningParams {
        per_class_budget: 3,
        max_units: 2,
        top: t,
        window: 0,
    };
    let mined = mine_phrases(&videos, 2, 2, &params).unwrap();
    let best = mined.iter().find(|m| m.score.class == "ab").unwrap();
    assert_eq!(best.phrase.encoding(), "unit(0,0,0);unit(1,1,0)");

    // Exhaustive oracle over every phrase with at most two units.
    let space = all_phrases_up_to_two(2, 2, 0);
    let scored: Vec<(f64, &MotionPhrase)> = space
        .iter()
        .map(|p| (common::rep_dis(p, "ab", &videos, t).1, p))
        .collect();
    let top = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<&MotionPhrase> = scored.iter().filter(|s| s.0 == top).map(|s| s.1).collect();
    assert_eq!(argmax.len(), 1);
    assert_eq!(argmax[0].units(), best.phrase.units());
    assert_eq!(best.score.dis, top);
    let best_single = scored
        .iter()
        .filter(|s| s.1.len() == 1)
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best.score.dis > best_single, "{} vs {best_single}", best.score.dis);
}

#[test]
fn mined_phrases_never_fall_below_their_seed() {
    let mut r = common::rng(3);
    use rand::Rng;
    let videos: Vec<LabeledVideo> = (0..12)
        .map(|i| LabeledVideo {
            id: format!("v{i:02}"),
            class: format!("c{}", i % 3),
            responses: (0..3).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect(),
        })
        .collect();
    let params = PhraseMiningParams {
        per_class_budget: 5,
        max_units: 3,
        top: 6,
        window: 1,
    };
    let mined = mine_phrases(&videos, 3, 4, &params).unwrap();
    assert!(!mined.is_empty());
    for m in &mined {
        assert!(m.score.dis >= m.seed_dis);
        assert_eq!(m.seed.len(), 1);
        assert!(m.seed.units().iter().all(|u| m.phrase.contains(u.atom_id, u.anchor)));
        let oracle = common::rep_dis(&m.phrase, &m.score.class, &videos, 6).1;
        assert!((oracle - m.score.dis).abs() <= 1e-12);
    }
    let encodings: BTreeSet<(String, String)> =
        mined.iter().map(|m| (m.score.class.clone(), m.phrase.encoding())).collect();
    assert_eq!(encodings.len(), mined.len(), "duplicates in output");
    assert_eq!(mined, mine_phrases(&videos, 3, 4, &params).unwrap());
}

#[test]
fn converged_atoms_are_a_fixed_point() {
    let (segs, _) = common::two_blobs(20, 0.05, 9);
    let norms = compute_normalizers(&segs, 0).unwrap();
    for init in [InitMethod::KMeans, InitMethod::SimSpectral] {
        let params = AtomMiningParams {
            num_atoms: 2,
            max_iters: 20,
            init,
            svm: SvmParams::default(),
            seed: 4,
        };
        let (atoms, report) = mine_atoms(&segs, &norms, &params).unwrap();
        assert!(report.converged, "{init}");
        let mut assignment = vec![0; segs.len()];
        for a in &atoms.atoms {
            for &m in &a.members {
                assignment[m] = a.atom_id;
            }
        }
        // One more train + reassign round changes nothing.
        let retrained = train_atom_classifiers(&assignment, &segs, 2, &SvmParams::default()).unwrap();
        assert_eq!(reassign(&segs, &retrained).unwrap(), assignment);
    }
}

fn synth_dir(spec: &SynthSpec) -> (tempfile::TempDir, PipelineConfig) {
    let tmp = tempfile::tempdir().unwrap();
    pipeline::cmd_synth(spec, tmp.path()).unwrap();
    let cfg = PipelineConfig {
        codebook_size: 8,
        atoms: 2,
        seed: Some(spec.seed),
        descriptors: Some(tmp.path().join("descriptors.tsv")),
        manifest: Some(tmp.path().join("manifest.tsv")),
        codebooks: Some(tmp.path().join("cb")),
        out: Some(tmp.path().join("cb")),
        ..PipelineConfig::default()
    };
    pipeline::cmd_codebook(&cfg).unwrap();
    let cfg = PipelineConfig {
        out: Some(tmp.path().join("model.txt")),
        ..cfg
    };
    (tmp, cfg)
}

fn two_class_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        classes: 2,
        clips_per_class: 10,
        k: 2,
        clip_length: 40,
        test_fraction: 0.0,
        seed,
        ..SynthSpec::default()
    }
}

#[test]
fn two_class_fixture_trains_and_predicts_its_own_clips() {
    let (tmp, cfg) = synth_dir(&two_class_spec(31));
    let outcome = pipeline::cmd_train(&cfg).unwrap();
    let model = ModelFile::load(&tmp.path().join("model.txt")).unwrap();
    assert_eq!(model.atoms.len(), 2);
    for class in ["class0", "class1"] {
        assert!(model.phrases.iter().any(|p| p.class == class), "no phrase for {class}");
    }
    let report = std::fs::read_to_string(tmp.path().join("model.txt.report")).unwrap();
    assert!(report.starts_with("# atoms\niter\tchanged\n"));
    assert_eq!(report.matches("\nclass").count(), outcome.mined.len() + 1, "header plus one row per phrase");

    let pred_cfg = PipelineConfig {
        model: Some(tmp.path().join("model.txt")),
        out: Some(tmp.path().join("scores.tsv")),
        ..cfg.clone()
    };
    let preds = pipeline::cmd_predict(&pred_cfg, None).unwrap();
    assert_eq!(preds.len(), 20);
    assert!(preds.iter().all(|p| p.predicted == p.label), "training clips misclassified");
    let pred_file = std::fs::read_to_string(tmp.path().join("scores.tsv.pred")).unwrap();
    assert_eq!(pred_file.lines().count(), 20);

    let scores = parse_scores(std::fs::read(tmp.path().join("scores.tsv")).unwrap().as_slice()).unwrap();
    assert_eq!(scores.len(), 20);
    let eval = pipeline::cmd_eval(&tmp.path().join("scores.tsv"), None, &tmp.path().join("roc.csv"), true).unwrap();
    assert_eq!(eval.roc.auc, roc_auc(&scores).unwrap().auc);
    assert!(eval.report.contains("MDT\t0.78"));
    let csv = std::fs::read_to_string(tmp.path().join("roc.csv")).unwrap();
    assert!(csv.starts_with("fpr,tpr\n"));
}

#[test]
fn too_many_atoms_fail_in_the_atoms_stage() {
    let (_tmp, cfg) = synth_dir(&two_class_spec(32));
    let cfg = PipelineConfig { atoms: 1000, ..cfg };
    let err = pipeline::cmd_train(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "atoms", .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn codebooks_are_reproducible() {
    let (tmp, cfg) = synth_dir(&two_class_spec(33));
    let read = |dir: &str| -> Vec<Vec<u8>> {
        ["HOG", "HOF", "MBHX", "MBHY"]
            .iter()
            .map(|c| std::fs::read(tmp.path().join(dir).join(format!("codebook_{c}.txt"))).unwrap())
            .collect()
    };
    let again = PipelineConfig {
        out: Some(tmp.path().join("cb2")),
        ..cfg
    };
    pipeline::cmd_codebook(&again).unwrap();
    assert_eq!(read("cb"), read("cb2"));
    let text = String::from_utf8(read("cb")[0].clone()).unwrap();
    assert!(text.starts_with("CODEBOOK v1 HOG 8 8\n"), "{}", text.lines().next().unwrap());
}

#[test]
fn empty_manifest_gives_empty_scores() {
    let (tmp, cfg) = synth_dir(&two_class_spec(34));
    pipeline::cmd_train(&cfg).unwrap();
    std::fs::write(tmp.path().join("empty.tsv"), "").unwrap();
    let pred_cfg = PipelineConfig {
        model: Some(tmp.path().join("model.txt")),
        manifest: Some(tmp.path().join("empty.tsv")),
        out: Some(tmp.path().join("scores.tsv")),
        ..cfg
    };
    assert!(pipeline::cmd_predict(&pred_cfg, None).unwrap().is_empty());
    assert_eq!(std::fs::read_to_string(tmp.path().join("scores.tsv")).unwrap(), "");
}

#[test]
fn synth_respects_layout_and_split() {
    let spec = SynthSpec {
        seed: 35,
        ..SynthSpec::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let data = pipeline::cmd_synth(&spec, tmp.path()).unwrap();
    let clips = load_manifest(&tmp.path().join("manifest.tsv")).unwrap();
    assert_eq!(clips.len(), 60);
    assert_eq!(clips.iter().filter(|c| c.split == Some(Split::Test)).count(), 18);
    assert_eq!(load_descriptors(&tmp.path().join("descriptors.tsv")).unwrap().len(), data.records.len());
    let orders: BTreeSet<Vec<usize>> = data.clips.iter().map(|c| c.motifs.clone()).collect();
    assert_eq!(orders.len(), 3);
    assert_eq!(
        orders.into_iter().collect::<Vec<_>>(),
        vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]
    );
    let parsed = parse_manifest(data.manifest_text().as_bytes()).unwrap();
    assert_eq!(parsed, clips);
    assert!(synth::generate(&SynthSpec { clips_per_class: 0, ..spec }).is_err());
}

#[test]
fn target_class_must_exist() {
    let (_tmp, cfg) = synth_dir(&two_class_spec(36));
    let cfg = PipelineConfig {
        target_class: Some("missing".into()),
        ..cfg
    };
    let err = pipeline::cmd_train(&cfg).unwrap_err();
    assert!(err.to_string().contains("missing"), "{err}");
}
