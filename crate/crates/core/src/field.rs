//! Three-branch random walk for the stochastic dipole field.
//!
//! Starting from zero, each step draws one uniform `r` in `[0, 1)` and moves
//! the field by `-delta_e` when `r < p`, by `+delta_e` when `r >= 1 - p`, and
//! leaves it unchanged otherwise. The field is always an integer multiple of
//! `delta_e`, so paths are stored as integer levels.
//!
//! Every sample owns an independent ChaCha8 stream selected by
//! `(master_seed, stream_id)`; the stream id is the sample index. Paths are
//! therefore reproducible and independent of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Jump probability `p` per step, in `[0, 1/2]`.
    pub jump_probability: f64,
    /// Step amplitude `delta_e` of the field, in rad/s.
    pub delta_e: f64,
    pub seed: u64,
    /// Number of Monte Carlo samples `M`.
    pub samples: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            jump_probability: 0.2,
            delta_e: 100.0,
            seed: 20_130_501,
            samples: 40_000,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let p = self.jump_probability;
        if !(0.0..=0.5).contains(&p) {
            return Err(invalid(
                "jump_probability",
                format!("must lie in [0, 0.5], got {p}"),
            ));
        }
        if !(self.delta_e.is_finite() && self.delta_e >= 0.0) {
            return Err(invalid(
                "delta_e",
                format!("must be finite and >= 0, got {}", self.delta_e),
            ));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        Ok(())
    }

    /// True when every path is identically zero.
    pub fn is_silent(&self) -> bool {
        self.jump_probability == 0.0 || self.delta_e == 0.0
    }

    /// `sigma^2(n) = 2 delta_e^2 p n`.
    pub fn variance_theory(&self, n: u64) -> f64 {
        2.0 * self.delta_e.powi(2) * self.jump_probability * n as f64
    }

    /// `<E^4>(n) = 12 delta_e^4 p^2 n^2`.
    pub fn fourth_moment_theory(&self, n: u64) -> f64 {
        12.0 * self.delta_e.powi(4) * self.jump_probability.powi(2) * (n as f64).powi(2)
    }
}

#[inline]
fn level_increment(r: f64, p: f64, upper: f64) -> i64 {
    // branch-free: with p <= 1/2 at most one of the two tests holds
    (r >= upper) as i64 - (r < p) as i64
}

/// One update of the field value `field` given the uniform draw `r`.
pub fn next_field(field: f64, r: f64, params: &NoiseParams) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::UniformOutOfRange(r));
    }
    let p = params.jump_probability;
    Ok(match level_increment(r, p, 1.0 - p) {
        -1 => field - params.delta_e,
        1 => field + params.delta_e,
        _ => field,
    })
}

/// Random-number stream for one sample.
pub fn sample_rng(master_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

/// Lazily generated walk levels for one sample.
#[derive(Debug, Clone)]
pub struct FieldWalk {
    rng: ChaCha8Rng,
    p: f64,
    upper: f64,
    level: i64,
}

impl FieldWalk {
    pub fn new(params: &NoiseParams, stream_id: u64) -> Self {
        let p = params.jump_probability;
        Self {
            rng: sample_rng(params.seed, stream_id),
            p,
            upper: 1.0 - p,
            level: 0,
        }
    }

    /// Current level; the field is `level * delta_e`.
    pub fn level(&self) -> i64 {
        self.level
    }

    /// Advances one time step and returns the new level.
    #[inline]
    pub fn advance(&mut self) -> i64 {
        let r: f64 = self.rng.gen();
        self.level += level_increment(r, self.p, self.upper);
        self.level
    }
}

/// A realized field `E(0), E(dt), ..., E(n dt)` with `E(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    levels: Vec<i64>,
    delta_e: f64,
}

impl FieldPath {
    pub fn from_levels(levels: Vec<i64>, delta_e: f64) -> Self {
        Self { levels, delta_e }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            levels: vec![0; n + 1],
            delta_e: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[i64] {
        &self.levels
    }

    pub fn delta_e(&self) -> f64 {
        self.delta_e
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.levels[i] as f64 * self.delta_e
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.levels.len()).map(|i| self.value(i)).collect()
    }
}

pub fn generate_path(n: usize, params: &NoiseParams, stream_id: u64) -> FieldPath {
    let mut walk = FieldWalk::new(params, stream_id);
    let mut levels = Vec::with_capacity(n + 1);
    levels.push(0);
    for _ in 0..n {
        levels.push(walk.advance());
    }
    FieldPath::from_levels(levels, params.delta_e)
}

/// Sample moments of the field at one step.
///
/// Power sums up to the fourth are kept as exact integers over walk levels;
/// the sixth and eighth, needed only for standard errors, are compensated
/// floating-point sums.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelMoments {
    count: u64,
    s1: i128,
    s2: i128,
    s3: i128,
    s4: i128,
    s6: NeumaierSum,
    s8: NeumaierSum,
}

impl LevelMoments {
    pub fn push(&mut self, level: i64) {
        let l = level as i128;
        let l2 = l * l;
        self.count += 1;
        self.s1 += l;
        self.s2 += l2;
        self.s3 += l2 * l;
        self.s4 += l2 * l2;
        let f2 = (level as f64).powi(2);
        self.s6.add(f2 * f2 * f2);
        self.s8.add(f2 * f2 * f2 * f2);
    }

    pub fn merge(&mut self, other: &LevelMoments) {
        self.count += other.count;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.s3 += other.s3;
        self.s4 += other.s4;
        self.s6.merge(&other.s6);
        self.s8.merge(&other.s8);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Scales the level sums by `delta_e` and forms the moment estimates.
    pub fn finish(&self, step: u64, delta_e: f64) -> MomentStats {
        let m = self.count.max(1) as f64;
        let raw = |s: i128| s as f64 / m;
        let (l1, l2, l3, l4) = (raw(self.s1), raw(self.s2), raw(self.s3), raw(self.s4));
        let l6 = self.s6.value() / m;
        let l8 = self.s8.value() / m;
        let se = |second: f64, first: f64| ((second - first * first).max(0.0) / m).sqrt();
        let d = delta_e;
        MomentStats {
            step,
            samples: self.count,
            mean: l1 * d,
            second: l2 * d.powi(2),
            third: l3 * d.powi(3),
            fourth: l4 * d.powi(4),
            stderr_mean: se(l2, l1) * d,
            stderr_second: se(l4, l2) * d.powi(2),
            stderr_third: se(l6, l3) * d.powi(3),
            stderr_fourth: se(l8, l4) * d.powi(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub step: u64,
    pub samples: u64,
    pub mean: f64,
    pub second: f64,
    pub third: f64,
    pub fourth: f64,
    pub stderr_mean: f64,
    pub stderr_second: f64,
    pub stderr_third: f64,
    pub stderr_fourth: f64,
}

pub fn path_moment_stats(paths: &[FieldPath], n: usize) -> Result<MomentStats> {
    let first = paths.first().ok_or(Error::Empty("path collection"))?;
    let mut acc = LevelMoments::default();
    for path in paths {
        if path.len() < n + 1 {
            return Err(Error::PathTooShort {
                got: path.len(),
                needed: n + 1,
            });
        }
        acc.push(path.levels()[n]);
    }
    Ok(acc.finish(n as u64, first.delta_e()))
}

const WALK_CHUNK: u64 = 256;

/// Level of every sample at each of the sorted `checkpoints`, streamed
/// without storing paths. `visit(checkpoint_index, level)` runs once per
/// (sample, checkpoint) on the accumulator for the sample's chunk.
fn stream_levels<A, F>(
    params: &NoiseParams,
    checkpoints: &[u64],
    stream_offset: u64,
    make: impl Fn() -> A + Sync,
    visit: F,
) -> Vec<A>
where
    A: Send,
    F: Fn(&mut A, usize, i64) + Sync,
{
    let chunks = params.samples.div_ceil(WALK_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = make();
            let lo = c * WALK_CHUNK;
            let hi = (lo + WALK_CHUNK).min(params.samples);
            for sample in lo..hi {
                let mut walk = FieldWalk::new(params, stream_offset + sample);
                let mut step = 0u64;
                for (i, &target) in checkpoints.iter().enumerate() {
                    while step < target {
                        walk.advance();
                        step += 1;
                    }
                    visit(&mut acc, i, walk.level());
                }
            }
            acc
        })
        .collect()
}

/// Moments of the field at each checkpoint over `params.samples` fresh paths.
///
/// Chunks are merged in index order, and the exact integer sums make the
/// low moments independent of the thread count.
pub fn sample_moments(
    params: &NoiseParams,
    checkpoints: &[u64],
    stream_offset: u64,
) -> Result<Vec<MomentStats>> {
    params.validate()?;
    let mut sorted = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::Empty("checkpoint list"));
    }
    let parts = stream_levels(
        params,
        &sorted,
        stream_offset,
        || vec![LevelMoments::default(); sorted.len()],
        |acc, i, level| acc[i].push(level),
    );
    let mut total = vec![LevelMoments::default(); sorted.len()];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(sorted
        .iter()
        .zip(&total)
        .map(|(&n, acc)| acc.finish(n, params.delta_e))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub center: f64,
    pub count: u64,
    /// `M delta_e P(center)` for the Gaussian with `sigma^2 = 2 delta_e^2 p n`.
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub step: u64,
    pub samples: u64,
    pub bins: Vec<HistogramBin>,
    /// Set when `p = 0` or `delta_e = 0`: every path sits at zero and there is
    /// no Gaussian to compare against.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub chi2: f64,
    pub bins: usize,
    pub reduced: f64,
}

impl Histogram {
    fn from_level_counts(
        counts: &std::collections::BTreeMap<i64, u64>,
        step: u64,
        params: &NoiseParams,
    ) -> Self {
        let samples: u64 = counts.values().sum();
        if params.is_silent() {
            return Self {
                step,
                samples,
                bins: vec![HistogramBin {
                    center: 0.0,
                    count: samples,
                    expected: samples as f64,
                }],
                degenerate: true,
            };
        }
        let de = params.delta_e;
        let sigma2 = params.variance_theory(step);
        let sigma_levels = (sigma2.sqrt() / de).ceil() as i64;
        let observed_lo = counts.keys().next().copied().unwrap_or(0);
        let observed_hi = counts.keys().next_back().copied().unwrap_or(0);
        let lo = observed_lo.min(-6 * sigma_levels);
        let hi = observed_hi.max(6 * sigma_levels);
        let norm = samples as f64 * de / (2.0 * std::f64::consts::PI * sigma2).sqrt();
        let bins = (lo..=hi)
            .map(|l| {
                let x = l as f64 * de;
                let expected = if sigma2 > 0.0 {
                    norm * (-x * x / (2.0 * sigma2)).exp()
                } else if l == 0 {
                    samples as f64
                } else {
                    0.0
                };
                HistogramBin {
                    center: x,
                    count: counts.get(&l).copied().unwrap_or(0),
                    expected,
                }
            })
            .collect();
        Self {
            step,
            samples,
            bins,
            degenerate: false,
        }
    }

    /// Pearson chi-square over bins whose expected count is at least
    /// `min_expected`, reduced by the number of bins used (sigma is fixed by
    /// theory, not fitted).
    pub fn chi_square(&self, min_expected: f64) -> Option<ChiSquare> {
        if self.degenerate {
            return None;
        }
        let used: Vec<&HistogramBin> = self
            .bins
            .iter()
            .filter(|b| b.expected >= min_expected)
            .collect();
        if used.is_empty() {
            return None;
        }
        let chi2: f64 = used
            .iter()
            .map(|b| (b.count as f64 - b.expected).powi(2) / b.expected)
            .sum();
        Some(ChiSquare {
            chi2,
            bins: used.len(),
            reduced: chi2 / used.len() as f64,
        })
    }

    /// Sample mean of the binned values with its standard error.
    pub fn mean_with_stderr(&self) -> (f64, f64) {
        let m = self.samples.max(1) as f64;
        let s1: f64 = self.bins.iter().map(|b| b.count as f64 * b.center).sum();
        let s2: f64 = self
            .bins
            .iter()
            .map(|b| b.count as f64 * b.center * b.center)
            .sum();
        let mean = s1 / m;
        let var = (s2 / m - mean * mean).max(0.0);
        (mean, (var / m).sqrt())
    }
}

/// Histogram of `E(n dt)` over the given paths, with bins at multiples of
/// `delta_e`.
pub fn normality_histogram(
    paths: &[FieldPath],
    n: usize,
    params: &NoiseParams,
) -> Result<Histogram> {
    if paths.is_empty() {
        return Err(Error::Empty("path collection"));
    }
    let mut counts = std::collections::BTreeMap::new();
    for path in paths {
        if path.len() < n + 1 {
            return Err(Error::PathTooShort {
                got: path.len(),
                needed: n + 1,
            });
        }
        *counts.entry(path.levels()[n]).or_insert(0u64) += 1;
    }
    Ok(Histogram::from_level_counts(&counts, n as u64, params))
}

/// Same as [`normality_histogram`] but streams `params.samples` fresh paths.
pub fn sample_histogram(params: &NoiseParams, n: u64, stream_offset: u64) -> Result<Histogram> {
    params.validate()?;
    let parts = stream_levels(
        params,
        &[n],
        stream_offset,
        std::collections::BTreeMap::<i64, u64>::new,
        |acc, _, level| *acc.entry(level).or_insert(0) += 1,
    );
    let mut counts = std::collections::BTreeMap::new();
    for part in parts {
        for (l, c) in part {
            *counts.entry(l).or_insert(0) += c;
        }
    }
    Ok(Histogram::from_level_counts(&counts, n, params))
}
