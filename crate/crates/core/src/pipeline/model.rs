//! The trained model file.
//!
//! A versioned plain-text container:
//!
//! ```text
//! CROWDMOTION MODEL v1
//! [config]        key=value lines
//! [codebooks]     four CODEBOOK blocks
//! [normalizers]   sampled=0|1, then one CHANNEL=mean line per channel
//! [atoms] A       A SVM blocks
//! [phrases] P     class<TAB>dis<TAB>encoding lines
//! [classifier] C  C (class line, SVM block) pairs
//! [end]
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load → save is
//! byte-identical.

use std::path::Path;

use crate::atoms::{AtomSet, MotionAtom};
use crate::encode::{encode_responses, VideoRepresentation};
use crate::error::{Error, Result};
use crate::eval::ScoreTarget;
use crate::ingest::{write_atomic, Channel, Codebook, CodebookSet, SegmentHistogram};
use crate::phrases::MotionPhrase;
use crate::similarity::ChannelNormalizers;
use crate::svm::{OneVsRest, SvmModel};

use super::config::PipelineConfig;

const MAGIC: &str = "CROWDMOTION MODEL v1";

/// A mined phrase as stored in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPhrase {
    pub class: String,
    pub dis: f64,
    pub phrase: MotionPhrase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    /// Settings used for training; paths are not stored.
    pub config: PipelineConfig,
    pub codebooks: CodebookSet,
    pub atoms: AtomSet,
    pub phrases: Vec<ModelPhrase>,
    pub classifier: OneVsRest,
}

impl ModelFile {
    pub fn phrase_list(&self) -> Vec<MotionPhrase> {
        self.phrases.iter().map(|p| p.phrase.clone()).collect()
    }

    /// Max-pooled atom and phrase responses of one clip.
    pub fn encode(&self, video_id: &str, segments: &[SegmentHistogram]) -> Result<VideoRepresentation> {
        let responses = self.atoms.response_matrix(segments)?;
        let phrases = self.phrase_list();
        encode_responses(video_id, &responses, &phrases, self.config.l2)
    }

    /// Anomaly score target: the configured class, else "not normal" with the
    /// configured normal class, else with `normal` if present, else the first class.
    pub fn score_target(&self) -> ScoreTarget {
        if let Some(c) = &self.config.target_class {
            return ScoreTarget::Class(c.clone());
        }
        let normal = self.config.normal_class.clone().unwrap_or_else(|| {
            if self.classifier.class_index("normal").is_some() {
                "normal".to_string()
            } else {
                self.classifier.classes[0].clone()
            }
        });
        ScoreTarget::NotNormal(normal)
    }

    fn check(&self) -> Result<()> {
        let dim: usize = self.codebooks.sizes().iter().sum();
        for a in &self.atoms.atoms {
            if a.classifier.dim() != dim {
                return Err(Error::invalid(format!(
                    "atom {} has dimension {}, codebooks give {dim}",
                    a.atom_id,
                    a.classifier.dim()
                )));
            }
        }
        if let Some(p) = self.phrases.iter().find(|p| p.phrase.max_atom_id() >= self.atoms.len()) {
            return Err(Error::UnknownAtom(p.phrase.max_atom_id()));
        }
        let rep_dim = self.atoms.len() + self.phrases.len();
        if self.classifier.models.iter().any(|m| m.dim() != rep_dim) {
            return Err(Error::invalid(format!(
                "classifier dimension does not match {rep_dim} atoms and phrases"
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC}\n[config]\n");
        out.push_str(&self.config.to_text());
        out.push_str("[codebooks]\n");
        for cb in self.codebooks.iter() {
            out.push_str(&cb.to_text());
        }
        let norms = &self.atoms.norms;
        out.push_str(&format!("[normalizers]\nsampled={}\n", u8::from(norms.sampled)));
        for c in Channel::ALL {
            out.push_str(&format!("{c}={:?}\n", norms.get(c)));
        }
        out.push_str(&format!("[atoms] {}\n", self.atoms.len()));
        for a in &self.atoms.atoms {
            out.push_str(&a.classifier.to_text());
        }
        out.push_str(&format!("[phrases] {}\n", self.phrases.len()));
        for p in &self.phrases {
            out.push_str(&format!("{}\t{:?}\t{}\n", p.class, p.dis, p.phrase.encoding()));
        }
        out.push_str(&format!("[classifier] {}\n", self.classifier.classes.len()));
        for (class, m) in self.classifier.classes.iter().zip(&self.classifier.models) {
            out.push_str(class);
            out.push('\n');
            out.push_str(&m.to_text());
        }
        out.push_str("[end]\n");
        out
    }

    pub fn from_text(text: &str) -> Result<ModelFile> {
        let mut r = Reader {
            lines: text.lines().collect(),
            pos: 0,
        };
        r.expect(MAGIC)?;
        r.expect("[config]")?;
        let mut config = PipelineConfig::default();
        while let Some(line) = r.peek() {
            if line.starts_with('[') {
                break;
            }
            let n = r.line_no();
            r.pos += 1;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(n, format!("expected key=value, found {line:?}")))?;
            config.set(k, v).map_err(|e| bad(n, e))?;
        }

        r.expect("[codebooks]")?;
        let mut books = Vec::with_capacity(4);
        for _ in 0..4 {
            let start = r.line_no();
            let mut it = r.lines[r.pos..].iter().copied();
            let cb = Codebook::parse_lines(&mut it, start, "model")?;
            r.pos += 1 + cb.size();
            books.push(cb);
        }
        let n = r.line_no();
        let codebooks = CodebookSet::new(books).map_err(|e| bad(n, e.to_string()))?;

        r.expect("[normalizers]")?;
        let sampled = match r.next_kv("sampled")? {
            (_, "0") => false,
            (_, "1") => true,
            (n, v) => return Err(bad(n, format!("bad sampled flag {v:?}"))),
        };
        let mut means = [0.0; 4];
        for c in Channel::ALL {
            let (n, v) = r.next_kv(c.name())?;
            means[c.index()] = parse_f64(n, v)?;
        }
        let n = r.pos;
        let mut norms = ChannelNormalizers::new(means).map_err(|e| bad(n, e.to_string()))?;
        norms.sampled = sampled;

        let num_atoms = r.section_count("[atoms]")?;
        let mut atoms = Vec::with_capacity(num_atoms);
        for atom_id in 0..num_atoms {
            atoms.push(MotionAtom {
                atom_id,
                classifier: r.svm()?,
                members: Vec::new(),
            });
        }

        let num_phrases = r.section_count("[phrases]")?;
        let mut phrases = Vec::with_capacity(num_phrases);
        for _ in 0..num_phrases {
            let (n, line) = r.next_line()?;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(n, format!("expected class, dis and phrase, found {line:?}")));
            }
            let phrase = MotionPhrase::parse_encoding(f[2], Some(f[0].to_string())).map_err(|e| bad(n, e))?;
            phrases.push(ModelPhrase {
                class: f[0].to_string(),
                dis: parse_f64(n, f[1])?,
                phrase,
            });
        }

        let num_classes = r.section_count("[classifier]")?;
        let mut classes = Vec::with_capacity(num_classes);
        let mut models = Vec::with_capacity(num_classes);
        for _ in 0..num_classes {
            let (n, class) = r.next_line()?;
            if class.is_empty() || classes.last().is_some_and(|c: &String| c.as_str() >= class) {
                return Err(bad(n, format!("class {class:?} out of order")));
            }
            classes.push(class.to_string());
            models.push(r.svm()?);
        }
        r.expect("[end]")?;
        if let Some(i) = r.lines[r.pos..].iter().position(|l| !l.trim().is_empty()) {
            return Err(bad(r.pos + i + 1, "trailing content".into()));
        }

        let model = ModelFile {
            config,
            codebooks,
            atoms: AtomSet { atoms, norms },
            phrases,
            classifier: OneVsRest { classes, models },
        };
        model.check().map_err(|e| bad(r.pos, e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelFile::from_text(&text)
    }
}

fn bad(line: usize, msg: String) -> Error {
    Error::Parse {
        what: "model",
        line,
        msg,
    }
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| bad(line, format!("bad number {s:?}")))
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    /// 1-based number of the next line.
    fn line_no(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        let n = self.line_no();
        let line = self.peek().ok_or_else(|| bad(n, "unexpected end of file".into()))?;
        self.pos += 1;
        Ok((n, line))
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let (n, line) = self.next_line()?;
        if line != want {
            return Err(bad(n, format!("expected {want:?}, found {line:?}")));
        }
        Ok(())
    }

    fn next_kv(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line()?;
        match line.split_once('=') {
            Some((k, v)) if k == key => Ok((n, v)),
            _ => Err(bad(n, format!("expected {key}=..., found {line:?}"))),
        }
    }

    /// `<header> <count>`
    fn section_count(&mut self, header: &str) -> Result<usize> {
        let (n, line) = self.next_line()?;
        line.strip_prefix(header)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| bad(n, format!("expected \"{header} <count>\", found {line:?}")))
    }

    fn svm(&mut self) -> Result<SvmModel> {
        let start = self.line_no();
        let mut it = self.lines[self.pos..].iter().copied();
        let m = SvmModel::parse_lines(&mut it, start, "model")?;
        self.pos += 3;
        Ok(m)
    }
}
