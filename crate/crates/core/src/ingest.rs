//! Descriptor ingestion, codebooks, clip segmentation and bag-of-visual-words
//! segment histograms.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kmeans;

/// The four dense-trajectory descriptor channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Hog,
    Hof,
    MbhX,
    MbhY,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Hog, Channel::Hof, Channel::MbhX, Channel::MbhY];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Hog => "HOG",
            Channel::Hof => "HOF",
            Channel::MbhX => "MBHX",
            Channel::MbhY => "MBHY",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "HOG" => Ok(Channel::Hog),
            "HOF" => Ok(Channel::Hof),
            "MBHX" => Ok(Channel::MbhX),
            "MBHY" => Ok(Channel::MbhY),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub channel: Channel,
    pub vector: Vec<f64>,
}

pub(crate) fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| format!("bad number {v:?}"))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("non-finite value {v:?}"))
            }
        })
        .collect()
}

pub(crate) fn format_vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    parts.join(",")
}

/// Parses descriptor lines `video_id<TAB>frame<TAB>channel<TAB>v1,...,vd`.
pub fn parse_descriptors<R: BufRead>(reader: R) -> Result<Vec<DescriptorRecord>> {
    let mut records = Vec::new();
    let mut dims: [Option<usize>; 4] = [None; 4];
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            what: "descriptor",
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            what: "descriptor",
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let frame_index = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad frame index {:?}", fields[1])))?;
        let channel: Channel = fields[2].parse().map_err(bad)?;
        let vector = parse_vector(fields[3]).map_err(bad)?;
        match dims[channel.index()] {
            None => dims[channel.index()] = Some(vector.len()),
            Some(d) if d != vector.len() => return Err(Error::ChannelDimension(channel)),
            Some(_) => {}
        }
        records.push(DescriptorRecord {
            video_id: fields[0].to_string(),
            frame_index,
            channel,
            vector,
        });
    }
    Ok(records)
}

pub fn load_descriptors(path: &Path) -> Result<Vec<DescriptorRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_descriptors(BufReader::new(file))
}

/// Which side of a train/test split a clip belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// One row of a clip manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipInfo {
    pub video_id: String,
    pub clip_length: usize,
    pub class_label: String,
    /// Absent when the manifest has no split column.
    pub split: Option<Split>,
}

/// Parses manifest lines `video_id<TAB>clip_length<TAB>class_label[<TAB>train|test]`.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<ClipInfo>> {
    let mut clips: Vec<ClipInfo> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let bad = |msg: String| Error::Parse {
            what: "manifest",
            line: lineno,
            msg,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(bad(format!("expected 3 or 4 tab-separated fields, found {}", fields.len())));
        }
        let clip_length = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad clip length {:?}", fields[1])))?;
        let split = match fields.get(3).copied() {
            None => None,
            Some("train") => Some(Split::Train),
            Some("test") => Some(Split::Test),
            Some(other) => return Err(bad(format!("bad split {other:?}"))),
        };
        if fields[2].is_empty() {
            return Err(bad("empty class label".into()));
        }
        if clips.iter().any(|c| c.video_id == fields[0]) {
            return Err(bad(format!("duplicate video id {:?}", fields[0])));
        }
        clips.push(ClipInfo {
            video_id: fields[0].to_string(),
            clip_length,
            class_label: fields[2].to_string(),
            split,
        });
    }
    Ok(clips)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ClipInfo>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file))
}

/// Checks that every record's frame lies inside its clip's declared length.
pub fn validate_frames(records: &[DescriptorRecord], clips: &[ClipInfo]) -> Result<()> {
    let lengths: std::collections::HashMap<&str, usize> =
        clips.iter().map(|c| (c.video_id.as_str(), c.clip_length)).collect();
    for r in records {
        if let Some(&len) = lengths.get(r.video_id.as_str()) {
            if r.frame_index >= len {
                return Err(Error::invalid(format!(
                    "video {} frame {} is outside its clip length {len}",
                    r.video_id, r.frame_index
                )));
            }
        }
    }
    Ok(())
}

/// A temporal window `[start_frame, end_frame)` of one clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub video_id: String,
    pub segment_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame == self.start_frame
    }

    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start_frame && frame < self.end_frame
    }
}

/// Frame windows `(start, end)` of `k` equal, half-overlapping segments.
///
/// `L` is the largest window with `L + (k-1)*floor(L/2) <= clip_length`; segment
/// `j` starts at `j*floor(L/2)` and only the last one is stretched to end at
/// `clip_length`.
pub fn segment_bounds(clip_length: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(Error::invalid("segment count k must be positive"));
    }
    if clip_length < k {
        return Err(Error::invalid(format!(
            "clip of {clip_length} frames cannot hold {k} segments"
        )));
    }
    let fits = |l: usize| l + (k - 1) * (l / 2) <= clip_length;
    let mut len = (2 * clip_length) / (k + 1);
    while fits(len + 1) {
        len += 1;
    }
    let step = len / 2;
    let mut bounds: Vec<(usize, usize)> = (0..k).map(|j| (j * step, j * step + len)).collect();
    bounds[k - 1].1 = clip_length;
    Ok(bounds)
}

pub fn segment_clip(video_id: &str, clip_length: usize, k: usize) -> Result<Vec<Segment>> {
    Ok(segment_bounds(clip_length, k)?
        .into_iter()
        .enumerate()
        .map(|(j, (start, end))| Segment {
            video_id: video_id.to_string(),
            segment_index: j,
            start_frame: start,
            end_frame: end,
        })
        .collect())
}

/// Per-channel visual vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub channel: Channel,
    pub centroids: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn size(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Nearest centroid index; ties go to the lowest index.
    pub fn quantize(&self, v: &[f64]) -> usize {
        kmeans::nearest(v, &self.centroids).0
    }

    /// Text form: `CODEBOOK v1 <channel> <K> <dim>` then one centroid per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("CODEBOOK v1 {} {} {}\n", self.channel, self.size(), self.dim());
        for c in &self.centroids {
            out.push_str(&format_vector(c));
            out.push('\n');
        }
        out
    }

    /// Parses a codebook from `lines`, where `first_line` is the 1-based file
    /// line of the header (used in error messages).
    pub(crate) fn parse_lines<'a, I>(lines: &mut I, first_line: usize, what: &'static str) -> Result<Codebook>
    where
        I: Iterator<Item = &'a str>,
    {
        let bad = |line: usize, msg: String| Error::Parse { what, line, msg };
        let header = lines.next().ok_or_else(|| bad(first_line, "missing codebook header".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "CODEBOOK" || parts[1] != "v1" {
            return Err(bad(first_line, format!("bad codebook header {header:?}")));
        }
        let channel: Channel = parts[2].parse().map_err(|e| bad(first_line, e))?;
        let k: usize = parts[3].parse().map_err(|_| bad(first_line, "bad K".into()))?;
        let dim: usize = parts[4].parse().map_err(|_| bad(first_line, "bad dim".into()))?;
        if k == 0 {
            return Err(bad(first_line, "K must be positive".into()));
        }
        let mut centroids = Vec::with_capacity(k);
        for j in 0..k {
            let line = first_line + 1 + j;
            let text = lines.next().ok_or_else(|| bad(line, "missing centroid line".into()))?;
            let v = parse_vector(text).map_err(|e| bad(line, e))?;
            if v.len() != dim {
                return Err(bad(line, format!("centroid has {} values, expected {dim}", v.len())));
            }
            centroids.push(v);
        }
        Ok(Codebook { channel, centroids })
    }

    pub fn from_text(text: &str) -> Result<Codebook> {
        let mut lines = text.lines();
        let cb = Self::parse_lines(&mut lines, 1, "codebook")?;
        if let Some((i, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::Parse {
                what: "codebook",
                line: cb.size() + 2 + i,
                msg: "trailing content".into(),
            });
        }
        Ok(cb)
    }

    pub fn load(path: &Path) -> Result<Codebook> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Codebook::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

/// Writes via a temporary sibling file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Learns a `k`-word codebook for one channel by k-means with k-means++ seeding.
pub fn build_codebook(records: &[DescriptorRecord], channel: Channel, k: usize, seed: u64) -> Result<Codebook> {
    let points: Vec<&[f64]> = records
        .iter()
        .filter(|r| r.channel == channel)
        .map(|r| r.vector.as_slice())
        .collect();
    let distinct = kmeans::count_distinct(&points);
    if k == 0 || distinct < k {
        return Err(Error::invalid(format!(
            "channel {channel}: codebook of size {k} needs at least {k} distinct vectors, found {distinct}"
        )));
    }
    let fit = kmeans::kmeans(&points, k, seed, kmeans::DEFAULT_MAX_ITER)?;
    if fit.centroids.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("codebook {channel}")));
    }
    Ok(Codebook {
        channel,
        centroids: fit.centroids,
    })
}

/// One codebook per channel, indexed by [`Channel::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    books: [Codebook; 4],
}

impl CodebookSet {
    /// Accepts the four codebooks in any order; every channel must appear exactly once.
    pub fn new(books: Vec<Codebook>) -> Result<Self> {
        let mut slots: [Option<Codebook>; 4] = Default::default();
        for b in books {
            let i = b.channel.index();
            if slots[i].is_some() {
                return Err(Error::invalid(format!("duplicate codebook for channel {}", b.channel)));
            }
            slots[i] = Some(b);
        }
        if let Some(i) = slots.iter().position(Option::is_none) {
            return Err(Error::invalid(format!("missing codebook for channel {}", Channel::ALL[i])));
        }
        Ok(CodebookSet {
            books: slots.map(Option::unwrap),
        })
    }

    pub fn get(&self, channel: Channel) -> &Codebook {
        &self.books[channel.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Codebook> {
        self.books.iter()
    }

    pub fn sizes(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|i| self.books[i].size())
    }
}

/// The 4-channel bag-of-visual-words descriptor of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentHistogram {
    pub segment: Segment,
    /// Indexed by [`Channel::index`]. Each is L1-normalized or all zeros.
    pub histograms: [Vec<f64>; 4],
}

impl SegmentHistogram {
    pub fn channel(&self, channel: Channel) -> &[f64] {
        &self.histograms[channel.index()]
    }

    /// HOG, HOF, MBHX, MBHY histograms laid end to end.
    pub fn concat(&self) -> Vec<f64> {
        self.histograms.iter().flatten().copied().collect()
    }
}

fn normalize_counts(counts: Vec<usize>) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    let t = total as f64;
    counts.into_iter().map(|c| c as f64 / t).collect()
}

/// Histogram of nearest-centroid votes for descriptors of `segment`'s video
/// whose frame lies in the segment.
pub fn quantize_segment(segment: &Segment, records: &[DescriptorRecord], codebooks: &CodebookSet) -> SegmentHistogram {
    let mut counts: [Vec<usize>; 4] = Channel::ALL.map(|c| vec![0; codebooks.get(c).size()]);
    for r in records
        .iter()
        .filter(|r| r.video_id == segment.video_id && segment.contains(r.frame_index))
    {
        counts[r.channel.index()][codebooks.get(r.channel).quantize(&r.vector)] += 1;
    }
    SegmentHistogram {
        segment: segment.clone(),
        histograms: counts.map(normalize_counts),
    }
}

/// Quantizes every descriptor of one clip once and histograms each of its `k` segments.
///
/// Records belonging to other videos are ignored.
pub fn quantize_clip(
    video_id: &str,
    clip_length: usize,
    k: usize,
    records: &[&DescriptorRecord],
    codebooks: &CodebookSet,
) -> Result<Vec<SegmentHistogram>> {
    for r in records.iter().filter(|r| r.video_id == video_id) {
        let d = codebooks.get(r.channel).dim();
        if r.vector.len() != d {
            return Err(Error::ChannelDimension(r.channel));
        }
    }
    let words: Vec<(usize, Channel, usize)> = records
        .iter()
        .filter(|r| r.video_id == video_id)
        .map(|r| (r.frame_index, r.channel, codebooks.get(r.channel).quantize(&r.vector)))
        .collect();
    let segments = segment_clip(video_id, clip_length, k)?;
    Ok(segments
        .into_iter()
        .map(|segment| {
            let mut counts: [Vec<usize>; 4] = Channel::ALL.map(|c| vec![0; codebooks.get(c).size()]);
            for &(frame, channel, word) in &words {
                if segment.contains(frame) {
                    counts[channel.index()][word] += 1;
                }
            }
            SegmentHistogram {
                segment,
                histograms: counts.map(normalize_counts),
            }
        })
        .collect())
}
