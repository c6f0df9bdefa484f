//! Independent brute-force reference implementations and fixtures shared by
//! the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use crowd_motion::ingest::{Segment, SegmentHistogram};
use crowd_motion::phrases::{LabeledVideo, MotionPhrase};
use crowd_motion::svm::Mode;
use num_rational::Ratio;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- kernels

pub fn chi_square(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..a.len() {
        let s = a[k] + b[k];
        if s != 0.0 {
            let d = a[k] - b[k];
            total += d * d / s;
        }
    }
    total
}

pub fn normalized_distance(a: &[f64], b: &[f64], m: f64) -> f64 {
    chi_square(a, b) / (2.0 * m)
}

pub fn similarity(a: &SegmentHistogram, b: &SegmentHistogram, means: &[f64; 4]) -> f64 {
    (0..4)
        .map(|c| (-normalized_distance(&a.histograms[c], &b.histograms[c], means[c])).exp())
        .sum()
}

/// Random L1-normalized histogram; roughly one bin in four is zero.
pub fn random_histogram(rng: &mut impl Rng, bins: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..bins)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let s: f64 = raw.iter().sum();
    if s == 0.0 {
        let mut h = vec![0.0; bins];
        h[0] = 1.0;
        h
    } else {
        raw.iter().map(|v| v / s).collect()
    }
}

pub fn segment(id: &str, index: usize, histograms: [Vec<f64>; 4]) -> SegmentHistogram {
    SegmentHistogram {
        segment: Segment {
            video_id: id.to_string(),
            segment_index: index,
            start_frame: index,
            end_frame: index + 1,
        },
        histograms,
    }
}

pub fn random_segment(rng: &mut impl Rng, bins: usize) -> SegmentHistogram {
    segment("v", 0, [0, 1, 2, 3].map(|_| random_histogram(rng, bins)))
}

// ---------------------------------------------------------------- phrases

/// Max over every choice of one in-window segment per unit of the minimum
/// chosen response, enumerated as a mixed-radix counter.
pub fn phrase_response(phrase: &MotionPhrase, responses: &[Vec<f64>]) -> f64 {
    let n = responses[0].len();
    let allowed: Vec<Vec<usize>> = phrase
        .units()
        .iter()
        .map(|u| {
            let anchor = u.anchor.min(n - 1);
            (0..n).filter(|&s| s.abs_diff(anchor) <= u.window).collect()
        })
        .collect();
    let mut digits = vec![0usize; allowed.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let v = phrase
            .units()
            .iter()
            .zip(&digits)
            .zip(&allowed)
            .map(|((u, &d), a)| responses[u.atom_id][a[d]])
            .fold(f64::INFINITY, f64::min);
        best = best.max(v);
        let mut i = 0;
        loop {
            if i == digits.len() {
                return best;
            }
            digits[i] += 1;
            if digits[i] < allowed[i].len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Top set by explicit rank counting: a video is in the top `t` iff fewer
/// than `t` videos beat it (higher response, or equal response and smaller id).
pub fn top_set(rs: &[f64], videos: &[LabeledVideo], t: usize) -> Vec<bool> {
    (0..videos.len())
        .map(|i| {
            let beaten_by = (0..videos.len())
                .filter(|&j| rs[j] > rs[i] || (rs[j] == rs[i] && videos[j].id < videos[i].id))
                .count();
            beaten_by < t
        })
        .collect()
}

/// `(rep per class, dis for `class`)` from a materialized `S(P, c)`.
pub fn rep_dis(phrase: &MotionPhrase, class: &str, videos: &[LabeledVideo], t: usize) -> (BTreeMap<String, f64>, f64) {
    let rs: Vec<f64> = videos.iter().map(|v| phrase_response(phrase, &v.responses)).collect();
    let top = top_set(&rs, videos, t);
    let mut reps = BTreeMap::new();
    for v in videos {
        let members: Vec<f64> = (0..videos.len())
            .filter(|&i| top[i] && videos[i].class == v.class)
            .map(|i| rs[i])
            .collect();
        let rep = if members.is_empty() {
            0.0
        } else {
            members.iter().sum::<f64>() / members.len() as f64
        };
        reps.insert(v.class.clone(), rep);
    }
    let best_other = reps
        .iter()
        .filter(|(c, _)| c.as_str() != class)
        .map(|(_, &r)| r)
        .reduce(f64::max)
        .unwrap_or(0.0);
    let dis = reps[class] - best_other;
    (reps, dis)
}

// ---------------------------------------------------------------- SVM

pub fn loss(mode: Mode, f: f64, y: f64, epsilon: f64) -> f64 {
    match mode {
        Mode::Regression => ((y - f).abs() - epsilon).max(0.0),
        Mode::Classification => (1.0 - y * f).max(0.0),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn primal(mode: Mode, w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], epsilon: f64, c: f64) -> f64 {
    let slack: f64 = xs.iter().zip(ys).map(|(x, &y)| loss(mode, dot(w, x) + b, y, epsilon)).sum();
    0.5 * dot(w, w) + c * slack
}

/// `min_b F(w, b)`: the objective is convex piecewise-linear in `b`, so one
/// of its breakpoints is a minimizer.
pub fn best_over_b(mode: Mode, w: &[f64], xs: &[Vec<f64>], ys: &[f64], epsilon: f64, c: f64) -> f64 {
    let mut candidates = Vec::new();
    for (x, &y) in xs.iter().zip(ys) {
        let r = y - dot(w, x);
        match mode {
            Mode::Regression => candidates.extend([r - epsilon, r + epsilon]),
            Mode::Classification => candidates.push(r),
        }
    }
    candidates
        .into_iter()
        .map(|b| primal(mode, w, b, xs, ys, epsilon, c))
        .fold(f64::INFINITY, f64::min)
}

fn golden(mut lo: f64, mut hi: f64, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..90 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    fa.min(fb).min(f(lo)).min(f(hi))
}

/// Grid search over `[-r, r]` refined by golden-section inside the best cell;
/// valid for convex `f`.
fn grid_then_golden(r: f64, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    const CELLS: usize = 40;
    let step = 2.0 * r / CELLS as f64;
    let grid: Vec<f64> = (0..=CELLS).map(|i| -r + i as f64 * step).collect();
    let values: Vec<f64> = grid.iter().map(|&w| f(w)).collect();
    let best = (0..values.len()).fold(0, |b, i| if values[i] < values[b] { i } else { b });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(CELLS)];
    golden(lo, hi, f).min(values[best])
}

/// Brute-force minimum of the primal objective for `dim <= 2`.
///
/// `g(w) = min_b F(w, b)` is convex; any minimizer satisfies
/// `|w|^2 / 2 <= g(0)`, which bounds the search box.
pub fn qp_oracle(mode: Mode, xs: &[Vec<f64>], ys: &[f64], epsilon: f64, c: f64) -> f64 {
    let dim = xs[0].len();
    let g0 = best_over_b(mode, &vec![0.0; dim], xs, ys, epsilon, c);
    let r = (2.0 * g0).sqrt() + 1e-9;
    match dim {
        1 => grid_then_golden(r, &mut |w| best_over_b(mode, &[w], xs, ys, epsilon, c)),
        2 => grid_then_golden(r, &mut |w1| {
            grid_then_golden(r, &mut |w2| best_over_b(mode, &[w1, w2], xs, ys, epsilon, c))
        }),
        _ => panic!("oracle supports dim 1 or 2"),
    }
}

// ---------------------------------------------------------------- AUC

/// Mann-Whitney AUC as an exact fraction: (wins + ties / 2) / (P * N).
pub fn auc_rational(scores: &[f64], truth: &[bool]) -> Ratio<i64> {
    let mut twice_wins = 0i64;
    let (mut p, mut n) = (0i64, 0i64);
    for (i, &ti) in truth.iter().enumerate() {
        if ti {
            p += 1;
        } else {
            n += 1;
        }
        if !ti {
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj {
                continue;
            }
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    Ratio::new(twice_wins, 2 * p * n)
}

// ---------------------------------------------------------------- clustering

/// Adjusted Rand index of two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let sum_cells: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let sum_rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}

/// Two Gaussian blobs of `per` segments each with 4-bin channels; blob
/// centres differ by far more than 5 noise standard deviations. Returns the
/// segments and their true blob labels.
pub fn two_blobs(per: usize, sigma: f64, seed: u64) -> (Vec<SegmentHistogram>, Vec<usize>) {
    use rand_distr::{Distribution, Normal};
    let centres = [[0.7, 0.1, 0.1, 0.1], [0.1, 0.1, 0.1, 0.7]];
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut r = rng(seed);
    let mut segs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * per {
        let blob = i % 2;
        let hist = |r: &mut ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = centres[blob]
                .iter()
                .map(|&c| (c + noise.sample(r)).max(0.0))
                .collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        };
        let h = [hist(&mut r), hist(&mut r), hist(&mut r), hist(&mut r)];
        segs.push(segment(&format!("s{i:03}"), 0, h));
        labels.push(blob);
    }
    (segs, labels)
}
