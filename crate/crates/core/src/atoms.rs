//! Motion atom discovery.
//!
//! Segments are clustered once (k-means on concatenated histograms, or a
//! spectral embedding of the segment similarity matrix), then the miner
//! alternates between training one one-vs-rest linear classifier per cluster
//! and reassigning every segment to the atom whose classifier scores it
//! highest.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::ingest::SegmentHistogram;
use crate::kmeans;
use crate::seed;
use crate::similarity::{similarity, ChannelNormalizers};
use crate::svm::{train_classifier, SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    #[default]
    KMeans,
    SimSpectral,
}

impl fmt::Display for InitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMethod::KMeans => "kmeans",
            InitMethod::SimSpectral => "sim-spectral",
        })
    }
}

impl FromStr for InitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kmeans" => Ok(InitMethod::KMeans),
            "sim-spectral" => Ok(InitMethod::SimSpectral),
            other => Err(format!("unknown init method {other:?} (expected kmeans or sim-spectral)")),
        }
    }
}

/// A cluster of segments represented by its linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionAtom {
    pub atom_id: usize,
    /// Scores concatenated 4-channel histograms.
    pub classifier: SvmModel,
    /// Indices into the training segments; empty for atoms loaded from a model file.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    /// `atoms[j].atom_id == j`.
    pub atoms: Vec<MotionAtom>,
    pub norms: ChannelNormalizers,
}

impl AtomSet {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn get(&self, atom_id: usize) -> Result<&MotionAtom> {
        self.atoms.get(atom_id).ok_or(Error::UnknownAtom(atom_id))
    }

    /// Atom responses of each segment: `matrix[atom][segment]`.
    pub fn response_matrix(&self, segments: &[SegmentHistogram]) -> Result<Vec<Vec<f64>>> {
        let xs: Vec<Vec<f64>> = segments.iter().map(SegmentHistogram::concat).collect();
        self.atoms
            .iter()
            .map(|a| xs.iter().map(|x| a.classifier.predict(x)).collect())
            .collect()
    }
}

/// Per-iteration reassignment counts of one mining run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MiningReport {
    pub changes: Vec<usize>,
    pub converged: bool,
}

impl MiningReport {
    /// One `iter<TAB>changed_count` line per iteration.
    pub fn to_text(&self) -> String {
        self.changes
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}\t{c}\n", i + 1))
            .collect()
    }
}

fn features(segments: &[SegmentHistogram]) -> Vec<Vec<f64>> {
    segments.iter().map(SegmentHistogram::concat).collect()
}

/// Initial partition of `segments` into `num_atoms` non-empty clusters.
pub fn init_clusters(
    segments: &[SegmentHistogram],
    num_atoms: usize,
    norms: &ChannelNormalizers,
    seed: u64,
    method: InitMethod,
) -> Result<Vec<usize>> {
    if num_atoms == 0 {
        return Err(Error::invalid("atom count must be positive"));
    }
    if segments.len() < num_atoms {
        return Err(Error::invalid(format!(
            "{} segments cannot form {num_atoms} atoms",
            segments.len()
        )));
    }
    let points = match method {
        InitMethod::KMeans => features(segments),
        InitMethod::SimSpectral => spectral_embedding(segments, num_atoms, norms)?,
    };
    let fit = kmeans::kmeans(&points, num_atoms, seed, kmeans::DEFAULT_MAX_ITER)?;
    Ok(fit.assignment)
}

/// Rows of the top `dims` eigenvectors of `D^{-1/2} S D^{-1/2}`, unit-normalized.
fn spectral_embedding(segments: &[SegmentHistogram], dims: usize, norms: &ChannelNormalizers) -> Result<Vec<Vec<f64>>> {
    let n = segments.len();
    let mut sim = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s = similarity(&segments[i], &segments[j], norms)?;
            sim[(i, j)] = s;
            sim[(j, i)] = s;
        }
    }
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / sim.row(i).sum().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            sim[(i, j)] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    let eig = SymmetricEigen::new(sim);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let rows = (0..n)
        .map(|i| {
            let row: Vec<f64> = order[..dims].iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.into_iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    Ok(rows)
}

fn cluster_sizes(assignment: &[usize], num_atoms: usize) -> Vec<usize> {
    let mut sizes = vec![0; num_atoms];
    for &a in assignment {
        sizes[a] += 1;
    }
    sizes
}

fn train_on_features(
    assignment: &[usize],
    xs: &[Vec<f64>],
    num_atoms: usize,
    params: &SvmParams,
) -> Result<Vec<SvmModel>> {
    if let Some(&bad) = assignment.iter().find(|&&a| a >= num_atoms) {
        return Err(Error::UnknownAtom(bad));
    }
    let sizes = cluster_sizes(assignment, num_atoms);
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    (0..num_atoms)
        .map(|j| {
            let ys: Vec<f64> = assignment.iter().map(|&a| if a == j { 1.0 } else { -1.0 }).collect();
            let p = params.with_seed(seed::derive_indexed(params.seed, "atom-classifier", j));
            Ok(train_classifier(xs, &ys, &p)?.model)
        })
        .collect()
}

/// One `cluster vs rest` classifier per atom over concatenated histograms.
pub fn train_atom_classifiers(
    assignment: &[usize],
    segments: &[SegmentHistogram],
    num_atoms: usize,
    params: &SvmParams,
) -> Result<Vec<SvmModel>> {
    if assignment.len() != segments.len() {
        return Err(Error::LengthMismatch {
            expected: segments.len(),
            found: assignment.len(),
        });
    }
    train_on_features(assignment, &features(segments), num_atoms, params)
}

/// Assigns each segment to its highest-scoring atom given `scores[segment][atom]`.
///
/// Ties go to the lowest atom id. An atom left empty takes the member of the
/// largest cluster that scores lowest under that cluster's classifier.
pub fn assign_by_scores(scores: &[Vec<f64>], num_atoms: usize) -> Vec<usize> {
    let mut assignment: Vec<usize> = scores
        .iter()
        .map(|row| {
            let mut best = 0;
            for (j, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();

    loop {
        let sizes = cluster_sizes(&assignment, num_atoms);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let largest = (0..num_atoms).fold(0, |b, j| if sizes[j] > sizes[b] { j } else { b });
        if sizes[largest] < 2 {
            break;
        }
        let victim = (0..assignment.len())
            .filter(|&i| assignment[i] == largest)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if scores[b][largest] <= scores[i][largest] => Some(b),
                _ => Some(i),
            })
            .unwrap();
        assignment[victim] = empty;
    }
    assignment
}

fn reassign_features(xs: &[Vec<f64>], classifiers: &[SvmModel]) -> Result<Vec<usize>> {
    if classifiers.is_empty() {
        return Err(Error::invalid("reassignment needs at least one classifier"));
    }
    let scores = xs
        .iter()
        .map(|x| classifiers.iter().map(|c| c.predict(x)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(assign_by_scores(&scores, classifiers.len()))
}

pub fn reassign(segments: &[SegmentHistogram], classifiers: &[SvmModel]) -> Result<Vec<usize>> {
    reassign_features(&features(segments), classifiers)
}

/// Parameters of [`mine_atoms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomMiningParams {
    pub num_atoms: usize,
    pub max_iters: usize,
    pub init: InitMethod,
    pub svm: SvmParams,
    pub seed: u64,
}

/// Alternates classifier training and reassignment until the partition is a
/// fixed point or `max_iters` reassignments have run.
pub fn mine_atoms(
    segments: &[SegmentHistogram],
    norms: &ChannelNormalizers,
    params: &AtomMiningParams,
) -> Result<(AtomSet, MiningReport)> {
    let a = params.num_atoms;
    if a == 0 {
        return Err(Error::invalid("atom count must be positive"));
    }
    if segments.len() < 2 * a {
        return Err(Error::invalid(format!(
            "{} segments are too few for {a} atoms (need at least {})",
            segments.len(),
            2 * a
        )));
    }
    let xs = features(segments);
    let svm = params.svm.with_seed(seed::derive(params.seed, "atom-svm"));
    let mut assignment = init_clusters(segments, a, norms, seed::derive(params.seed, "atom-init"), params.init)?;
    let mut classifiers = train_on_features(&assignment, &xs, a, &svm)?;
    let mut report = MiningReport::default();

    for _ in 0..params.max_iters {
        let next = reassign_features(&xs, &classifiers)?;
        let changed = next.iter().zip(&assignment).filter(|(x, y)| x != y).count();
        report.changes.push(changed);
        if changed == 0 {
            report.converged = true;
            break;
        }
        assignment = next;
        classifiers = train_on_features(&assignment, &xs, a, &svm)?;
    }

    let atoms = classifiers
        .into_iter()
        .enumerate()
        .map(|(j, classifier)| MotionAtom {
            atom_id: j,
            classifier,
            members: (0..assignment.len()).filter(|&i| assignment[i] == j).collect(),
        })
        .collect();
    Ok((
        AtomSet {
            atoms,
            norms: norms.clone(),
        },
        report,
    ))
}

/// Raw decision value of the atom's classifier on the segment.
pub fn atom_response(atom: &MotionAtom, segment: &SegmentHistogram) -> Result<f64> {
    atom.classifier.predict(&segment.concat())
}
