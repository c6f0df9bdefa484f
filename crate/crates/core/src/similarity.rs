//! Chi-square histogram distance, per-channel normalization and the 4-channel
//! exponential segment similarity.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::{Channel, SegmentHistogram};
use crate::seed;

/// Above this many training segments the channel means are estimated from a
/// random sample of pairs instead of all of them.
pub const EXACT_PAIR_LIMIT: usize = 2000;
pub const SAMPLED_PAIRS: usize = 1_000_000;

/// `Σ (a_k − b_k)² / (a_k + b_k)`, with empty bins (`a_k + b_k = 0`) contributing 0.
pub fn chi_square(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(chi_square_unchecked(a, b))
}

fn chi_square_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let s = x + y;
        if s > 0.0 {
            let d = x - y;
            sum += d * d / s;
        }
    }
    sum
}

/// Mean chi-square distance per channel over the training segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNormalizers {
    /// Indexed by [`Channel::index`]; every entry is positive.
    pub means: [f64; 4],
    /// True when the means were estimated from sampled pairs.
    pub sampled: bool,
}

impl ChannelNormalizers {
    pub fn new(means: [f64; 4]) -> Result<Self> {
        for (c, &m) in Channel::ALL.iter().zip(&means) {
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("normalizer {c}")));
            }
            if m <= 0.0 {
                return Err(Error::DegenerateChannel(*c));
            }
        }
        Ok(ChannelNormalizers { means, sampled: false })
    }

    pub fn get(&self, channel: Channel) -> f64 {
        self.means[channel.index()]
    }
}

/// Averages chi-square distances over all unordered pairs of training segments,
/// per channel. With more than [`EXACT_PAIR_LIMIT`] segments, `SAMPLED_PAIRS`
/// random pairs drawn from `seed` are used instead.
pub fn compute_normalizers(training: &[SegmentHistogram], seed: u64) -> Result<ChannelNormalizers> {
    let n = training.len();
    if n < 2 {
        return Err(Error::invalid("normalizers need at least 2 training segments"));
    }
    for c in Channel::ALL {
        let len = training[0].channel(c).len();
        if let Some(s) = training.iter().find(|s| s.channel(c).len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                found: s.channel(c).len(),
            });
        }
    }

    let mut sums = [0.0f64; 4];
    let pairs;
    let sampled = n > EXACT_PAIR_LIMIT;
    if sampled {
        let mut rng = seed::rng(seed);
        for _ in 0..SAMPLED_PAIRS {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            for c in Channel::ALL {
                sums[c.index()] += chi_square_unchecked(training[i].channel(c), training[j].channel(c));
            }
        }
        pairs = SAMPLED_PAIRS;
    } else {
        // Row partial sums keep the accumulation order fixed.
        for i in 0..n {
            let mut row = [0.0f64; 4];
            for j in i + 1..n {
                for c in Channel::ALL {
                    row[c.index()] += chi_square_unchecked(training[i].channel(c), training[j].channel(c));
                }
            }
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        pairs = n * (n - 1) / 2;
    }

    let means = sums.map(|s| s / pairs as f64);
    let mut norms = ChannelNormalizers::new(means)?;
    norms.sampled = sampled;
    Ok(norms)
}

/// `chi_square(a, b) / (2·m)`.
pub fn normalized_distance(a: &[f64], b: &[f64], m: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::invalid(format!("channel normalizer must be positive, got {m}")));
    }
    Ok(chi_square(a, b)? / (2.0 * m))
}

/// `Σ_channels exp(−normalized_distance)`, in `(0, 4]`.
pub fn similarity(a: &SegmentHistogram, b: &SegmentHistogram, norms: &ChannelNormalizers) -> Result<f64> {
    let mut total = 0.0;
    for c in Channel::ALL {
        total += (-normalized_distance(a.channel(c), b.channel(c), norms.get(c))?).exp();
    }
    Ok(total)
}
