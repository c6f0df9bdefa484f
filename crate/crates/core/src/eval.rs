//! Clip scoring, ROC curves and AUC.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::encode::VideoRepresentation;
use crate::error::{Error, Result};
use crate::svm::OneVsRest;

/// Published clip-level AUCs of reference methods on UCSD Ped1, shown for comparison only.
pub const LITERATURE_BASELINES: [(&str, f64); 3] = [("MDT", 0.78), ("SF", 0.74), ("MPPCA", 0.65)];

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScore {
    pub id: String,
    pub score: f64,
    /// True for anomalous / positive clips.
    pub truth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// `(false positive rate, true positive rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocResult {
    /// CSV with a `fpr,tpr` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            out.push_str(&format!("{f:?},{t:?}\n"));
        }
        out
    }
}

/// ROC curve over all distinct score thresholds and the Mann-Whitney AUC
/// (pairs with tied scores count one half).
pub fn roc_auc(scores: &[LabeledScore]) -> Result<RocResult> {
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::NonFinite(format!("score of {}", s.id)));
    }
    let pos = scores.iter().filter(|s| s.truth).count() as u64;
    let neg = scores.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs at least one positive and one negative"));
    }

    let mut sorted: Vec<&LabeledScore> = scores.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    // Walk groups of equal score from the highest threshold down.
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the Mann-Whitney U, kept integral.
    let mut u2: u64 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].truth {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        let neg_below = neg - fp - gn;
        u2 += gp * (2 * neg_below + gn);
        tp += gp;
        fp += gn;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        i = j;
    }
    Ok(RocResult {
        points,
        auc: u2 as f64 / (2 * pos * neg) as f64,
    })
}

/// Which decision value serves as the anomaly score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreTarget {
    /// Score is that class's one-vs-rest value; positives are clips of the class.
    Class(String),
    /// Score is the largest value over every other class; positives are clips not of the class.
    NotNormal(String),
}

/// Scores encoded clips with a one-vs-rest bundle.
pub fn score_clips(
    bundle: &OneVsRest,
    videos: &[VideoRepresentation],
    labels: &[String],
    target: &ScoreTarget,
) -> Result<Vec<LabeledScore>> {
    if videos.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: videos.len(),
            found: labels.len(),
        });
    }
    let class = match target {
        ScoreTarget::Class(c) | ScoreTarget::NotNormal(c) => c,
    };
    let idx = bundle.class_index(class).ok_or_else(|| Error::UnknownClass(class.clone()))?;
    if matches!(target, ScoreTarget::NotNormal(_)) && bundle.classes.len() < 2 {
        return Err(Error::invalid("anomaly scoring needs a class besides the normal one"));
    }
    videos
        .iter()
        .zip(labels)
        .map(|(v, label)| {
            let scores = bundle.scores(&v.vector)?;
            let (score, truth) = match target {
                ScoreTarget::Class(_) => (scores[idx], label == class),
                ScoreTarget::NotNormal(_) => (
                    scores
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != idx)
                        .map(|(_, &s)| s)
                        .fold(f64::NEG_INFINITY, f64::max),
                    label != class,
                ),
            };
            Ok(LabeledScore {
                id: v.video_id.clone(),
                score,
                truth,
            })
        })
        .collect()
}

/// AUC table with optional literature reference rows.
pub fn report(result: &RocResult, baselines: bool) -> String {
    let mut out = String::from("method\tAUC\tsource\n");
    if baselines {
        for (name, auc) in LITERATURE_BASELINES {
            out.push_str(&format!("{name}\t{auc:.2}\tliterature (UCSD Ped1, not recomputed)\n"));
        }
    }
    out.push_str(&format!("Ours\t{:.2}\tmeasured\n", result.auc));
    out
}

pub fn scores_to_text(scores: &[LabeledScore]) -> String {
    scores
        .iter()
        .map(|s| format!("{}\t{:?}\t{}\n", s.id, s.score, u8::from(s.truth)))
        .collect()
}

/// Parses `id<TAB>score<TAB>truth` lines, truth being 0 or 1.
pub fn parse_scores<R: BufRead>(reader: R) -> Result<Vec<LabeledScore>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let bad = |msg: String| Error::Parse {
            what: "scores",
            line: i + 1,
            msg,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let score: f64 = f[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(format!("bad score {:?}", f[1])))?;
        out.push(LabeledScore {
            id: f[0].to_string(),
            score,
            truth: parse_flag(f[2]).map_err(bad)?,
        });
    }
    Ok(out)
}

fn parse_flag(s: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("bad truth flag {other:?}")),
    }
}

/// Parses clip-level (`id<TAB>flag`) or frame-level (`id<TAB>frame<TAB>flag`)
/// ground truth. A clip is positive if any of its frames is flagged.
pub fn parse_truth<R: BufRead>(reader: R) -> Result<BTreeMap<String, bool>> {
    let mut out: BTreeMap<String, bool> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let bad = |msg: String| Error::Parse {
            what: "truth",
            line: i + 1,
            msg,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let flag = match f.len() {
            2 => parse_flag(f[1]),
            3 => {
                f[1].parse::<usize>()
                    .map_err(|_| bad(format!("bad frame index {:?}", f[1])))?;
                parse_flag(f[2])
            }
            n => return Err(bad(format!("expected 2 or 3 tab-separated fields, found {n}"))),
        }
        .map_err(bad)?;
        *out.entry(f[0].to_string()).or_insert(false) |= flag;
    }
    Ok(out)
}

/// Replaces each score's truth flag with the one in `truth`; every id must be present.
pub fn apply_truth(scores: &mut [LabeledScore], truth: &BTreeMap<String, bool>) -> Result<()> {
    for s in scores {
        s.truth = *truth
            .get(&s.id)
            .ok_or_else(|| Error::invalid(format!("no ground truth for clip {}", s.id)))?;
    }
    Ok(())
}
