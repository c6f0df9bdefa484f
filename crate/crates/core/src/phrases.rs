//! AND/OR motion phrases.
//!
//! A phrase is a set of units `(atom, anchor, window)`. A unit fires with the
//! best response of its atom among the segments within `window` of `anchor`
//! (OR); the phrase fires with the weakest of its units (AND):
//!
//! ```text
//! r(V, P) = min_{u ∈ P} max_{|s − u.anchor| ≤ u.window} response(u.atom, V_s)
//! ```
//!
//! Phrases are ranked per class by representativeness `Rep` (mean response of
//! the class's videos among the `T` strongest responders) and
//! discriminativeness `Dis` (`Rep` for the class minus the best `Rep` of any
//! other class).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::atoms::AtomSet;
use crate::error::{Error, Result};
use crate::ingest::SegmentHistogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhraseUnit {
    pub atom_id: usize,
    /// Segment slot the unit is centered on.
    pub anchor: usize,
    /// Temporal tolerance around the anchor, in segments.
    pub window: usize,
}

impl fmt::Display for PhraseUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unit({},{},{})", self.atom_id, self.anchor, self.window)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionPhrase {
    units: Vec<PhraseUnit>,
    pub class_hint: Option<String>,
}

impl MotionPhrase {
    /// Sorts units by `(anchor, atom_id)`; rejects empty phrases and repeated `(atom, anchor)` pairs.
    pub fn new(mut units: Vec<PhraseUnit>, class_hint: Option<String>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::invalid("a phrase needs at least one unit"));
        }
        units.sort_by_key(|u| (u.anchor, u.atom_id, u.window));
        if units
            .windows(2)
            .any(|w| w[0].anchor == w[1].anchor && w[0].atom_id == w[1].atom_id)
        {
            return Err(Error::invalid("phrase repeats an (atom, anchor) pair"));
        }
        Ok(MotionPhrase { units, class_hint })
    }

    pub fn single(unit: PhraseUnit) -> Self {
        MotionPhrase {
            units: vec![unit],
            class_hint: None,
        }
    }

    pub fn units(&self) -> &[PhraseUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn contains(&self, atom_id: usize, anchor: usize) -> bool {
        self.units.iter().any(|u| u.atom_id == atom_id && u.anchor == anchor)
    }

    /// The phrase with one more unit, or `None` if `(atom, anchor)` is already used.
    pub fn extended(&self, unit: PhraseUnit) -> Option<Self> {
        if self.contains(unit.atom_id, unit.anchor) {
            return None;
        }
        let mut units = self.units.clone();
        units.push(unit);
        MotionPhrase::new(units, self.class_hint.clone()).ok()
    }

    /// Canonical `unit(a,t,w);unit(...)` encoding.
    pub fn encoding(&self) -> String {
        let parts: Vec<String> = self.units.iter().map(ToString::to_string).collect();
        parts.join(";")
    }

    pub fn parse_encoding(s: &str, class_hint: Option<String>) -> std::result::Result<Self, String> {
        let units = s
            .split(';')
            .map(|part| {
                let inner = part
                    .trim()
                    .strip_prefix("unit(")
                    .and_then(|p| p.strip_suffix(')'))
                    .ok_or_else(|| format!("bad phrase unit {part:?}"))?;
                let nums: Vec<usize> = inner
                    .split(',')
                    .map(|n| n.trim().parse().map_err(|_| format!("bad phrase unit {part:?}")))
                    .collect::<std::result::Result<_, _>>()?;
                match nums[..] {
                    [atom_id, anchor, window] => Ok(PhraseUnit {
                        atom_id,
                        anchor,
                        window,
                    }),
                    _ => Err(format!("bad phrase unit {part:?}")),
                }
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        MotionPhrase::new(units, class_hint).map_err(|e| e.to_string())
    }

    pub fn max_atom_id(&self) -> usize {
        self.units.iter().map(|u| u.atom_id).max().unwrap_or(0)
    }
}

/// Best response of one unit: the max of its atom's row within the window.
fn unit_response(unit: &PhraseUnit, row: &[f64]) -> f64 {
    let last = row.len() - 1;
    let anchor = unit.anchor.min(last);
    let lo = anchor.saturating_sub(unit.window);
    let hi = anchor.saturating_add(unit.window).min(last);
    row[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `r(V, P)` from a video's atom response matrix `responses[atom][segment]`.
pub fn phrase_response_from_matrix(phrase: &MotionPhrase, responses: &[Vec<f64>]) -> Result<f64> {
    let mut r = f64::INFINITY;
    for u in phrase.units() {
        let row = responses.get(u.atom_id).ok_or(Error::UnknownAtom(u.atom_id))?;
        if row.is_empty() {
            return Err(Error::invalid("video has no segments"));
        }
        r = r.min(unit_response(u, row));
    }
    Ok(r)
}

/// `r(V, P)` for a video given as its ordered segment histograms.
pub fn phrase_response(phrase: &MotionPhrase, video_segments: &[SegmentHistogram], atoms: &AtomSet) -> Result<f64> {
    if video_segments.is_empty() {
        return Err(Error::invalid("video has no segments"));
    }
    if let Some(u) = phrase.units().iter().find(|u| u.atom_id >= atoms.len()) {
        return Err(Error::UnknownAtom(u.atom_id));
    }
    phrase_response_from_matrix(phrase, &atoms.response_matrix(video_segments)?)
}

/// A training video reduced to its class and atom response matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVideo {
    pub id: String,
    pub class: String,
    /// `responses[atom][segment]`.
    pub responses: Vec<Vec<f64>>,
}

fn classes_of(videos: &[LabeledVideo]) -> Vec<&str> {
    let set: BTreeSet<&str> = videos.iter().map(|v| v.class.as_str()).collect();
    set.into_iter().collect()
}

/// Indices of the `t` largest responses; ties go to the lexicographically smaller id.
fn top_indices(rs: &[f64], videos: &[LabeledVideo], t: usize) -> Result<Vec<usize>> {
    if t == 0 || t > videos.len() {
        return Err(Error::invalid(format!(
            "top-set size {t} must be between 1 and the video count {}",
            videos.len()
        )));
    }
    let mut order: Vec<usize> = (0..videos.len()).collect();
    order.sort_by(|&a, &b| rs[b].total_cmp(&rs[a]).then_with(|| videos[a].id.cmp(&videos[b].id)));
    order.truncate(t);
    Ok(order)
}

fn responses(phrase: &MotionPhrase, videos: &[LabeledVideo]) -> Result<Vec<f64>> {
    videos
        .iter()
        .map(|v| phrase_response_from_matrix(phrase, &v.responses))
        .collect()
}

/// Ids of the `t` videos responding most strongly to `phrase`.
pub fn top_set(phrase: &MotionPhrase, videos: &[LabeledVideo], t: usize) -> Result<BTreeSet<String>> {
    let rs = responses(phrase, videos)?;
    Ok(top_indices(&rs, videos, t)?
        .into_iter()
        .map(|i| videos[i].id.clone())
        .collect())
}

/// `Rep` of every class present in `videos`, from precomputed responses.
fn rep_all(rs: &[f64], videos: &[LabeledVideo], t: usize) -> Result<BTreeMap<String, f64>> {
    let mut acc: BTreeMap<String, (f64, usize)> = classes_of(videos)
        .into_iter()
        .map(|c| (c.to_string(), (0.0, 0)))
        .collect();
    for i in top_indices(rs, videos, t)? {
        let e = acc.get_mut(&videos[i].class).unwrap();
        e.0 += rs[i];
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(c, (sum, n))| (c, if n == 0 { 0.0 } else { sum / n as f64 }))
        .collect())
}

/// Mean response of class-`class` videos inside the top set; 0 when there are none.
pub fn rep(phrase: &MotionPhrase, class: &str, videos: &[LabeledVideo], t: usize) -> Result<f64> {
    if !videos.iter().any(|v| v.class == class) {
        return Err(Error::UnknownClass(class.to_string()));
    }
    let reps = rep_all(&responses(phrase, videos)?, videos, t)?;
    Ok(reps[class])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseScore {
    pub rep_per_class: BTreeMap<String, f64>,
    /// `rep_per_class[class]` minus the largest `Rep` among the other classes.
    pub dis: f64,
    /// The class the score is computed for.
    pub class: String,
}

fn score_for(reps: &BTreeMap<String, f64>, class: &str) -> PhraseScore {
    let others = reps
        .iter()
        .filter(|(c, _)| c.as_str() != class)
        .map(|(_, &r)| r)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    PhraseScore {
        dis: reps[class] - others.unwrap_or(0.0),
        rep_per_class: reps.clone(),
        class: class.to_string(),
    }
}

/// `Dis(P, c) = Rep(P, c) − max_{c' ≠ c} Rep(P, c')`; the max over no classes is 0.
pub fn dis(phrase: &MotionPhrase, class: &str, videos: &[LabeledVideo], t: usize) -> Result<PhraseScore> {
    if !videos.iter().any(|v| v.class == class) {
        return Err(Error::UnknownClass(class.to_string()));
    }
    let reps = rep_all(&responses(phrase, videos)?, videos, t)?;
    Ok(score_for(&reps, class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseMiningParams {
    pub per_class_budget: usize,
    pub max_units: usize,
    /// Top-set size `T`.
    pub top: usize,
    /// Window `Δ` of every unit, clamped to `slots − 1`.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinedPhrase {
    pub phrase: MotionPhrase,
    pub score: PhraseScore,
    /// The 1-unit phrase the greedy search started from, and its score.
    pub seed: MotionPhrase,
    pub seed_dis: f64,
}

impl MinedPhrase {
    /// `class<TAB>dis<TAB>unit(atom,anchor,window);...`
    pub fn dump_line(&self) -> String {
        format!("{}\t{:?}\t{}", self.score.class, self.score.dis, self.phrase.encoding())
    }
}

/// Precomputed unit responses: `table[video][atom][anchor]`.
struct UnitTable {
    table: Vec<Vec<Vec<f64>>>,
}

impl UnitTable {
    fn new(videos: &[LabeledVideo], num_atoms: usize, slots: usize, window: usize) -> Result<Self> {
        let table = videos
            .iter()
            .map(|v| {
                if v.responses.len() != num_atoms {
                    return Err(Error::LengthMismatch {
                        expected: num_atoms,
                        found: v.responses.len(),
                    });
                }
                v.responses
                    .iter()
                    .map(|row| {
                        if row.is_empty() {
                            return Err(Error::invalid(format!("video {} has no segments", v.id)));
                        }
                        Ok((0..slots)
                            .map(|anchor| {
                                unit_response(
                                    &PhraseUnit {
                                        atom_id: 0,
                                        anchor,
                                        window,
                                    },
                                    row,
                                )
                            })
                            .collect())
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(UnitTable { table })
    }

    fn responses(&self, phrase: &MotionPhrase) -> Vec<f64> {
        self.table
            .iter()
            .map(|v| {
                phrase
                    .units()
                    .iter()
                    .map(|u| v[u.atom_id][u.anchor])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

fn rank(a: &MinedPhrase, b: &MinedPhrase) -> Ordering {
    b.score
        .dis
        .total_cmp(&a.score.dis)
        .then_with(|| a.phrase.encoding().cmp(&b.phrase.encoding()))
}

/// Greedy bottom-up phrase mining.
///
/// Every `(atom, anchor)` pair seeds a 1-unit phrase. For each class, each
/// seed is grown one unit at a time by the extension with the highest `Dis`,
/// as long as `Dis` strictly increases and the phrase has fewer than
/// `max_units` units. The `per_class_budget` best distinct phrases per class
/// are returned, classes in sorted order.
pub fn mine_phrases(
    videos: &[LabeledVideo],
    num_atoms: usize,
    slots: usize,
    params: &PhraseMiningParams,
) -> Result<Vec<MinedPhrase>> {
    if num_atoms == 0 {
        return Err(Error::invalid("phrase mining needs at least one atom"));
    }
    if slots == 0 {
        return Err(Error::invalid("phrase mining needs at least one segment slot"));
    }
    if videos.is_empty() {
        return Err(Error::invalid("phrase mining needs labeled training videos"));
    }
    if params.max_units == 0 || params.per_class_budget == 0 {
        return Err(Error::invalid("max_units and per_class_budget must be positive"));
    }
    let window = params.window.min(slots - 1);
    let table = UnitTable::new(videos, num_atoms, slots, window)?;
    let score = |phrase: &MotionPhrase| -> Result<BTreeMap<String, f64>> {
        rep_all(&table.responses(phrase), videos, params.top)
    };

    let candidates: Vec<PhraseUnit> = (0..slots)
        .flat_map(|anchor| {
            (0..num_atoms).map(move |atom_id| PhraseUnit {
                atom_id,
                anchor,
                window,
            })
        })
        .collect();
    let seeds: Vec<(MotionPhrase, BTreeMap<String, f64>)> = candidates
        .iter()
        .map(|&u| {
            let p = MotionPhrase::single(u);
            let reps = score(&p)?;
            Ok((p, reps))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for class in classes_of(videos) {
        let mut grown: BTreeMap<String, MinedPhrase> = BTreeMap::new();
        for (seed, seed_reps) in &seeds {
            let seed_score = score_for(seed_reps, class);
            let mut current = seed.clone();
            let mut current_score = seed_score.clone();
            while current.len() < params.max_units {
                let mut best: Option<(MotionPhrase, PhraseScore)> = None;
                for &u in &candidates {
                    let Some(next) = current.extended(u) else {
                        continue;
                    };
                    let s = score_for(&score(&next)?, class);
                    if best.as_ref().is_none_or(|(_, b)| s.dis > b.dis) {
                        best = Some((next, s));
                    }
                }
                match best {
                    Some((p, s)) if s.dis > current_score.dis => {
                        current = p;
                        current_score = s;
                    }
                    _ => break,
                }
            }
            current.class_hint = Some(class.to_string());
            let mined = MinedPhrase {
                phrase: current,
                score: current_score,
                seed: seed.clone(),
                seed_dis: seed_score.dis,
            };
            let key = mined.phrase.encoding();
            match grown.get(&key) {
                Some(existing) if rank(existing, &mined) != Ordering::Greater => {}
                _ => {
                    grown.insert(key, mined);
                }
            }
        }
        let mut ranked: Vec<MinedPhrase> = grown.into_values().collect();
        ranked.sort_by(rank);
        ranked.truncate(params.per_class_budget);
        out.extend(ranked);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(atom_id: usize, anchor: usize, window: usize) -> PhraseUnit {
        PhraseUnit {
            atom_id,
            anchor,
            window,
        }
    }

    fn video(id: &str, class: &str, responses: Vec<Vec<f64>>) -> LabeledVideo {
        LabeledVideo {
            id: id.into(),
            class: class.into(),
            responses,
        }
    }

    /// A video whose phrase response is `r` for the 1-unit phrase on atom 0.
    fn flat(id: &str, class: &str, r: f64) -> LabeledVideo {
        video(id, class, vec![vec![r]])
    }

    #[test]
    fn phrase_construction_rules() {
        let p = MotionPhrase::new(vec![unit(1, 2, 0), unit(0, 0, 1)], None).unwrap();
        assert_eq!(p.units()[0], unit(0, 0, 1));
        assert_eq!(p.encoding(), "unit(0,0,1);unit(1,2,0)");
        assert_eq!(MotionPhrase::parse_encoding(&p.encoding(), None).unwrap(), p);
        assert!(MotionPhrase::new(vec![], None).is_err());
        assert!(MotionPhrase::new(vec![unit(0, 1, 0), unit(0, 1, 2)], None).is_err());
        assert!(p.extended(unit(1, 2, 5)).is_none());
        assert_eq!(p.extended(unit(1, 1, 0)).unwrap().len(), 3);
        assert!(MotionPhrase::parse_encoding("unit(1,2)", None).is_err());
    }

    #[test]
    fn single_wide_unit_is_max_pooling() {
        let m = vec![vec![0.3, -1.0, 0.8, 0.1]];
        let p = MotionPhrase::single(unit(0, 1, 3));
        assert_eq!(phrase_response_from_matrix(&p, &m).unwrap(), 0.8);
    }

    #[test]
    fn min_of_max_examples() {
        let m = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let p = MotionPhrase::new(vec![unit(0, 0, 0), unit(1, 1, 0)], None).unwrap();
        assert_eq!(phrase_response_from_matrix(&p, &m).unwrap(), 0.8);
        let p = MotionPhrase::new(vec![unit(0, 1, 0), unit(1, 0, 0)], None).unwrap();
        assert_eq!(phrase_response_from_matrix(&p, &m).unwrap(), 0.1);
        let bad = MotionPhrase::single(unit(2, 0, 0));
        assert!(matches!(phrase_response_from_matrix(&bad, &m), Err(Error::UnknownAtom(2))));
    }

    #[test]
    fn anchors_clamp_to_short_videos() {
        let m = vec![vec![0.4, 0.7]];
        let p = MotionPhrase::single(unit(0, 5, 0));
        assert_eq!(phrase_response_from_matrix(&p, &m).unwrap(), 0.7);
    }

    #[test]
    fn top_set_examples() {
        let vids = vec![flat("V1", "a", 0.9), flat("V2", "a", 0.1), flat("V3", "b", 0.5)];
        let p = MotionPhrase::single(unit(0, 0, 0));
        let top = top_set(&p, &vids, 2).unwrap();
        assert_eq!(top.into_iter().collect::<Vec<_>>(), vec!["V1", "V3"]);
        assert_eq!(top_set(&p, &vids, 3).unwrap().len(), 3);
        assert!(top_set(&p, &vids, 4).is_err());
        let tied = vec![flat("b", "x", 0.2), flat("a", "x", 0.2), flat("c", "x", 0.2)];
        assert_eq!(top_set(&p, &tied, 1).unwrap().into_iter().collect::<Vec<_>>(), vec!["a"]);
    }

    #[test]
    fn rep_examples() {
        let p = MotionPhrase::single(unit(0, 0, 0));
        let vids = vec![flat("V1", "c", 0.5), flat("V2", "c", 0.7), flat("V3", "d", 0.1)];
        assert!((rep(&p, "c", &vids, 2).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(rep(&p, "d", &vids, 2).unwrap(), 0.0);
        let vids = vec![flat("V1", "c", 0.9), flat("V2", "d", 0.1)];
        assert_eq!(rep(&p, "c", &vids, 1).unwrap(), 0.9);
        assert!(matches!(rep(&p, "zzz", &vids, 1), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn dis_examples() {
        let p = MotionPhrase::single(unit(0, 0, 0));
        let vids = vec![flat("V1", "c1", 0.8), flat("V2", "c2", 0.3)];
        let s = dis(&p, "c1", &vids, 2).unwrap();
        assert!((s.dis - 0.5).abs() < 1e-15);
        assert_eq!(s.class, "c1");
        let single = vec![flat("V1", "c1", 0.8), flat("V2", "c1", 0.4)];
        let s = dis(&p, "c1", &single, 2).unwrap();
        assert!((s.dis - 0.6).abs() < 1e-15);
        let equal = vec![flat("V1", "c1", 0.5), flat("V2", "c2", 0.5)];
        assert_eq!(dis(&p, "c1", &equal, 2).unwrap().dis, 0.0);
    }

    #[test]
    fn single_unit_budget_is_ranked_enumeration() {
        let vids = vec![
            video("a", "x", vec![vec![1.0, 0.0], vec![0.0, 0.5]]),
            video("b", "y", vec![vec![0.0, 1.0], vec![0.5, 0.0]]),
        ];
        let params = PhraseMiningParams {
            per_class_budget: 100,
            max_units: 1,
            top: 1,
            window: 0,
        };
        let mined = mine_phrases(&vids, 2, 2, &params).unwrap();
        assert_eq!(mined.len(), 8);
        for m in &mined {
            assert_eq!(m.phrase.len(), 1);
            let direct = dis(&m.phrase, &m.score.class, &vids, 1).unwrap();
            assert_eq!(direct.dis, m.score.dis);
        }
        for w in mined[..4].windows(2) {
            assert!(w[0].score.dis >= w[1].score.dis);
        }
    }

    #[test]
    fn singleton_space() {
        let vids = vec![video("a", "x", vec![vec![0.2]]), video("b", "y", vec![vec![0.1]])];
        let params = PhraseMiningParams {
            per_class_budget: 10,
            max_units: 3,
            top: 1,
            window: 1,
        };
        let mined = mine_phrases(&vids, 1, 1, &params).unwrap();
        assert_eq!(mined.len(), 2);
        assert!(mined.iter().all(|m| m.phrase.encoding() == "unit(0,0,0)"));
    }
}
