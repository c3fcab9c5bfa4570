//! Fréchet mean/variance estimators and the two-segment change statistic.
//!
//! Every object is handled as a real vector: raw snapshots through
//! row-major vectorization (an isometry for the Frobenius metric), projected
//! snapshots as they are. For a split after the first `n` of `N` objects the
//! statistic is
//!
//! ```text
//! S(n) = n (N - n) / (N^2 sigma^2)
//!        * [ (V_pre - V_post)^2 + (Vc_pre - V_pre + Vc_post - V_post)^2 ]
//! ```
//!
//! where `V_*` is the mean squared distance of a segment to its own Fréchet
//! mean, `Vc_*` the mean squared distance to the other segment's mean, and
//! `sigma^2 = mean(d^4) - V^2` is computed once around the pooled mean.
//! The scaled statistic is `T(n) = N S(n)`.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSequence;

/// Pooled variances below this are rejected as degenerate.
pub const DEGENERATE_SIGMA_SQ: f64 = 1e-12;

/// Where the Fréchet mean is searched for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// Arithmetic mean in the ambient vector space (exact minimiser there).
    #[default]
    Euclidean,
    /// Observed point of the segment with the smallest Fréchet function;
    /// ties go to the lowest index.
    SampleRestricted,
}

impl std::str::FromStr for MeanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MeanMode::Euclidean),
            "sample-restricted" | "sample" => Ok(MeanMode::SampleRestricted),
            other => Err(Error::InvalidParameters(format!(
                "unknown mean mode '{other}' (expected euclidean or sample-restricted)"
            ))),
        }
    }
}

impl std::fmt::Display for MeanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeanMode::Euclidean => "euclidean",
            MeanMode::SampleRestricted => "sample-restricted",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    /// Vectorized adjacency matrices.
    Graph,
    /// Arbitrary real vectors, e.g. random projections.
    Vector,
}

/// Homogeneous sequence of objects stored as flat row-major vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSequence {
    data: Vec<f64>,
    dim: usize,
    kind: ObjectKind,
}

impl ObjectSequence {
    pub const MIN_LEN: usize = 4;

    pub fn from_graphs(seq: &GraphSequence) -> Result<Self> {
        let dim = seq.dim();
        let mut data = Vec::with_capacity(seq.len() * dim);
        for s in seq.snapshots() {
            data.extend(s.entries().iter().map(|&e| e as f64));
        }
        Self::from_flat(data, dim, ObjectKind::Graph)
    }

    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            if v.len() != dim {
                return Err(Error::dims(dim, v.len()));
            }
            data.extend_from_slice(v);
        }
        Self::from_flat(data, dim, ObjectKind::Vector)
    }

    pub fn from_flat(data: Vec<f64>, dim: usize, kind: ObjectKind) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameters(format!(
                "flat buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        if n < Self::MIN_LEN {
            return Err(Error::InvalidParameters(format!(
                "need at least {} objects, got {n}",
                Self::MIN_LEN
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite coordinate".into()));
        }
        Ok(Self { data, dim, kind })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ObjectKind {
        self.kind
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn view(&self) -> Points<'_> {
        Points {
            data: &self.data,
            dim: self.dim,
        }
    }

    pub fn reversed(&self) -> Self {
        let data = self
            .data
            .chunks(self.dim)
            .rev()
            .flatten()
            .copied()
            .collect();
        Self {
            data,
            dim: self.dim,
            kind: self.kind,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * c).collect(),
            dim: self.dim,
            kind: self.kind,
        }
    }
}

/// Borrowed run of consecutive objects.
#[derive(Clone, Copy, Debug)]
pub struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::dims(format!("multiple of {dim}"), data.len()));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn slice(&self, range: Range<usize>) -> Points<'a> {
        Points {
            data: &self.data[range.start * self.dim..range.end * self.dim],
            dim: self.dim,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.data.chunks(self.dim)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Fréchet mean of `points` under `mode`.
pub fn frechet_mean(points: Points<'_>, mode: MeanMode) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::EmptySegment);
    }
    Ok(match mode {
        MeanMode::Euclidean => arithmetic_mean(points),
        MeanMode::SampleRestricted => points.get(sample_restricted_index(points)).to_vec(),
    })
}

fn arithmetic_mean(points: Points<'_>) -> Vec<f64> {
    let mut acc = vec![0.0; points.dim()];
    for x in points.iter() {
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v;
        }
    }
    let n = points.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

// Candidates whose Fréchet function differs from the incumbent by less than
// this fraction of `sum_i |x_i|^2 + m |x_j|^2` count as tied. Ties keep the
// earliest candidate, so a two-point segment always picks its first point.
const TIE_TOLERANCE: f64 = 1e-9;

pub(crate) fn improves(f: f64, best: f64, scale: f64) -> bool {
    f < best - TIE_TOLERANCE * scale
}

/// Index of the observed point minimising `sum_i |x_i - x_j|^2`.
///
/// Uses `sum_i |x_i - x_j|^2 = sum_i |x_i|^2 + n |x_j|^2 - 2 x_j . sum_i x_i`.
fn sample_restricted_index(points: Points<'_>) -> usize {
    let mut total = vec![0.0; points.dim()];
    let mut norm_total = 0.0;
    for x in points.iter() {
        for (t, v) in total.iter_mut().zip(x) {
            *t += v;
        }
        norm_total += sq_norm(x);
    }
    let n = points.len() as f64;
    let mut best = (0, f64::INFINITY);
    for (j, x) in points.iter().enumerate() {
        let scale = norm_total + n * sq_norm(x);
        let f = scale - 2.0 * dot(x, &total);
        if improves(f, best.1, scale) {
            best = (j, f);
        }
    }
    best.0
}

/// Own-mean and contaminated variances of one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub mean: Vec<f64>,
    pub variance: f64,
    pub contaminated_variance: f64,
}

pub fn segment_stats(
    points: Points<'_>,
    other_segment_mean: &[f64],
    mode: MeanMode,
) -> Result<SegmentStats> {
    if other_segment_mean.len() != points.dim() {
        return Err(Error::dims(points.dim(), other_segment_mean.len()));
    }
    let mean = frechet_mean(points, mode)?;
    let n = points.len() as f64;
    let variance = points.iter().map(|x| sq_dist(x, &mean)).sum::<f64>() / n;
    let contaminated_variance = points
        .iter()
        .map(|x| sq_dist(x, other_segment_mean))
        .sum::<f64>()
        / n;
    Ok(SegmentStats {
        mean,
        variance,
        contaminated_variance,
    })
}

/// `(1/N) sum d^4(x_i, mu) - V^2` around the pooled Fréchet mean, floored at 0.
pub fn pooled_sigma_sq(points: Points<'_>, mode: MeanMode) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidParameters(
            "pooled variance needs at least 2 points".into(),
        ));
    }
    let mu = frechet_mean(points, mode)?;
    let (_, _, s) = pooled_moments(points.iter().map(|x| sq_dist(x, &mu)), points.len());
    Ok(s)
}

/// (V, mean d^4, sigma^2) from squared distances.
fn pooled_moments(d2: impl Iterator<Item = f64>, n: usize) -> (f64, f64, f64) {
    let (mut s2, mut s4) = (0.0, 0.0);
    for d in d2 {
        s2 += d;
        s4 += d * d;
    }
    let n = n as f64;
    let v = s2 / n;
    let m4 = s4 / n;
    (v, m4, (m4 - v * v).max(0.0))
}

/// Candidate split sizes `n` with `delta < n/N < 1 - delta`.
pub fn admissible_splits(n_total: usize, delta: f64) -> Range<usize> {
    let nf = n_total as f64;
    let lo = (1..n_total).find(|&n| n as f64 > delta * nf);
    let hi = (1..n_total).rev().find(|&n| (n as f64) < (1.0 - delta) * nf);
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= hi => lo..hi + 1,
        _ => 0..0,
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameters(format!(
            "delta {delta} outside (0, 0.5)"
        )));
    }
    Ok(())
}

/// Per-split ingredients of the statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitComponents {
    pub v_pre: f64,
    pub v_post: f64,
    pub vc_pre: f64,
    pub vc_post: f64,
}

impl SplitComponents {
    /// The bracketed sum of squares.
    pub fn bracket(&self) -> f64 {
        let var_term = self.v_pre - self.v_post;
        let mean_term = self.vc_pre - self.v_pre + self.vc_post - self.v_post;
        var_term * var_term + mean_term * mean_term
    }
}

/// The statistic over the admissible window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticCurve {
    /// Sequence length N.
    pub n_total: usize,
    pub delta: f64,
    pub mode: MeanMode,
    /// Admissible split sizes, increasing.
    pub splits: Vec<usize>,
    /// `S(n)` for each split.
    pub values: Vec<f64>,
    /// `T(n) = N S(n)`.
    pub scaled: Vec<f64>,
    pub components: Vec<SplitComponents>,
    pub sigma_sq: f64,
    pub pooled_variance: f64,
    pub pooled_mean: Vec<f64>,
}

impl StatisticCurve {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    /// `n / N` for each split.
    pub fn t_values(&self) -> Vec<f64> {
        self.splits
            .iter()
            .map(|&n| n as f64 / self.n_total as f64)
            .collect()
    }

    /// Step-interpolated scaled statistic: `T(t) = N S(n)` for `N t` in
    /// `[n, n + 1)`. `None` outside the admissible window.
    pub fn scaled_at(&self, t: f64) -> Option<f64> {
        if !(0.0..1.0).contains(&t) {
            return None;
        }
        let n = (t * self.n_total as f64).floor() as usize;
        let first = *self.splits.first()?;
        self.splits
            .get(n.checked_sub(first)?)
            .filter(|&&s| s == n)
            .map(|_| self.scaled[n - first])
    }

    /// Position in `splits` of the maximum; ties go to the smallest split.
    pub fn argmax_position(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn max_scaled(&self) -> Option<f64> {
        self.argmax_position().map(|i| self.scaled[i])
    }
}

/// Computes the statistic for every admissible split.
pub fn statistic_curve(seq: &ObjectSequence, delta: f64, mode: MeanMode) -> Result<StatisticCurve> {
    check_delta(delta)?;
    let n_total = seq.len();
    let window = admissible_splits(n_total, delta);
    if window.is_empty() {
        return Err(Error::WindowEmpty { n: n_total, delta });
    }
    let (pooled_mean, components, sigma_sq, pooled_variance) = match mode {
        MeanMode::Euclidean => euclidean_components(seq, window.clone()),
        MeanMode::SampleRestricted => sample_restricted_components(seq, window.clone()),
    };
    if sigma_sq < DEGENERATE_SIGMA_SQ {
        return Err(Error::DegenerateVariance(sigma_sq));
    }
    let nf = n_total as f64;
    let splits: Vec<usize> = window.collect();
    let values: Vec<f64> = splits
        .iter()
        .zip(&components)
        .map(|(&n, c)| {
            let n = n as f64;
            n * (nf - n) / (nf * nf * sigma_sq) * c.bracket()
        })
        .collect();
    let scaled = values.iter().map(|s| nf * s).collect();
    Ok(StatisticCurve {
        n_total,
        delta,
        mode,
        splits,
        values,
        scaled,
        components,
        sigma_sq,
        pooled_variance,
        pooled_mean,
    })
}

type Components = (Vec<f64>, Vec<SplitComponents>, f64, f64);

// Running sums over data centred at the pooled mean. With centred data
// y_i, a segment with sum P and squared-norm sum Q over m points has
// V = Q/m - |P/m|^2, and Vc = V + |mean_pre - mean_post|^2.
fn euclidean_components(seq: &ObjectSequence, window: Range<usize>) -> Components {
    let n_total = seq.len();
    let dim = seq.dim();
    let pooled_mean = arithmetic_mean(seq.view());
    let centred: Vec<f64> = seq
        .view()
        .iter()
        .flat_map(|x| x.iter().zip(&pooled_mean).map(|(v, m)| v - m))
        .collect();
    let centred = Points::new(&centred, dim).expect("same shape");

    let norms: Vec<f64> = centred.iter().map(sq_norm).collect();
    let (pooled_variance, _, sigma_sq) = pooled_moments(norms.iter().copied(), n_total);

    let mut total = vec![0.0; dim];
    for y in centred.iter() {
        for (t, v) in total.iter_mut().zip(y) {
            *t += v;
        }
    }
    let norm_total: f64 = norms.iter().sum();

    let mut prefix = vec![0.0; dim];
    let mut norm_prefix = 0.0;
    let mut components = Vec::with_capacity(window.len());
    for n in 1..window.end {
        let y = centred.get(n - 1);
        for (p, v) in prefix.iter_mut().zip(y) {
            *p += v;
        }
        norm_prefix += norms[n - 1];
        if n < window.start {
            continue;
        }
        let (m_pre, m_post) = (n as f64, (n_total - n) as f64);
        let mut mean_pre_sq = 0.0;
        let mut mean_post_sq = 0.0;
        let mut gap = 0.0;
        for (p, t) in prefix.iter().zip(&total) {
            let a = p / m_pre;
            let b = (t - p) / m_post;
            mean_pre_sq += a * a;
            mean_post_sq += b * b;
            gap += (a - b) * (a - b);
        }
        let v_pre = norm_prefix / m_pre - mean_pre_sq;
        let v_post = (norm_total - norm_prefix) / m_post - mean_post_sq;
        components.push(SplitComponents {
            v_pre,
            v_post,
            vc_pre: v_pre + gap,
            vc_post: v_post + gap,
        });
    }
    (pooled_mean, components, sigma_sq, pooled_variance)
}

// Gram-matrix running sums on uncentred data, so binary inputs stay in exact
// integer arithmetic and ties resolve exactly as a brute-force search would.
// For a segment with squared-norm sum Q over m points and cross sums
// R_j = sum_i x_i . x_j, the Fréchet function at candidate j is
// F(j) = Q + m |x_j|^2 - 2 R_j.
fn sample_restricted_components(seq: &ObjectSequence, window: Range<usize>) -> Components {
    let n_total = seq.len();
    let pts = seq.view();
    let gram: Vec<Vec<f64>> = (0..n_total)
        .into_par_iter()
        .map(|i| (0..n_total).map(|j| dot(pts.get(i), pts.get(j))).collect())
        .collect();
    let norms: Vec<f64> = (0..n_total).map(|i| gram[i][i]).collect();
    let norm_total: f64 = norms.iter().sum();
    let cross_total: Vec<f64> = gram.iter().map(|row| row.iter().sum()).collect();

    let nf = n_total as f64;
    let mut pooled = (0, f64::INFINITY);
    for j in 0..n_total {
        let scale = norm_total + nf * norms[j];
        let f = scale - 2.0 * cross_total[j];
        if improves(f, pooled.1, scale) {
            pooled = (j, f);
        }
    }
    let c = pooled.0;
    let d2 = (0..n_total).map(|i| norms[i] + norms[c] - 2.0 * gram[i][c]);
    let (pooled_variance, _, sigma_sq) = pooled_moments(d2, n_total);

    let mut cross_prefix = vec![0.0; n_total];
    let mut norm_prefix = 0.0;
    let mut components = Vec::with_capacity(window.len());
    for n in 1..window.end {
        let added = &gram[n - 1];
        for (r, g) in cross_prefix.iter_mut().zip(added) {
            *r += g;
        }
        norm_prefix += norms[n - 1];
        if n < window.start {
            continue;
        }
        let (m_pre, m_post) = (n as f64, (n_total - n) as f64);
        let q_post = norm_total - norm_prefix;
        let f_pre = |j: usize| norm_prefix + m_pre * norms[j] - 2.0 * cross_prefix[j];
        let f_post =
            |j: usize| q_post + m_post * norms[j] - 2.0 * (cross_total[j] - cross_prefix[j]);
        let argmin = |range: Range<usize>, q: f64, m: f64, f: &dyn Fn(usize) -> f64| {
            let mut best = (range.start, f64::INFINITY);
            for j in range {
                let v = f(j);
                if improves(v, best.1, q + m * norms[j]) {
                    best = (j, v);
                }
            }
            best
        };
        let (a, fa) = argmin(0..n, norm_prefix, m_pre, &f_pre);
        let (b, fb) = argmin(n..n_total, q_post, m_post, &f_post);
        components.push(SplitComponents {
            v_pre: fa / m_pre,
            v_post: fb / m_post,
            vc_pre: f_pre(b) / m_pre,
            vc_post: f_post(a) / m_post,
        });
    }
    (pts.get(c).to_vec(), components, sigma_sq, pooled_variance)
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Literal, unoptimised evaluation of the statistic used as a test oracle.

    use super::*;

    pub fn brute_mean(points: &[&[f64]], mode: MeanMode) -> Vec<f64> {
        match mode {
            MeanMode::Euclidean => {
                let dim = points[0].len();
                (0..dim)
                    .map(|d| points.iter().map(|x| x[d]).sum::<f64>() / points.len() as f64)
                    .collect()
            }
            MeanMode::SampleRestricted => {
                let q: f64 = points.iter().map(|x| sq_norm(x)).sum();
                let m = points.len() as f64;
                let mut best = (0, f64::INFINITY);
                for (j, c) in points.iter().enumerate() {
                    let f: f64 = points.iter().map(|x| sq_dist(x, c)).sum();
                    if improves(f, best.1, q + m * sq_norm(c)) {
                        best = (j, f);
                    }
                }
                points[best.0].to_vec()
            }
        }
    }

    pub fn naive_curve(seq: &ObjectSequence, delta: f64, mode: MeanMode) -> Vec<(usize, f64)> {
        let pts: Vec<&[f64]> = (0..seq.len()).map(|i| seq.point(i)).collect();
        let nt = pts.len();
        let mu = brute_mean(&pts, mode);
        let v = pts.iter().map(|x| sq_dist(x, &mu)).sum::<f64>() / nt as f64;
        let d4 = pts.iter().map(|x| sq_dist(x, &mu).powi(2)).sum::<f64>() / nt as f64;
        let sigma_sq = d4 - v * v;
        let nf = nt as f64;
        (1..nt)
            .filter(|&n| n as f64 / nf > delta && (n as f64 / nf) < 1.0 - delta)
            .map(|n| {
                let (pre, post) = pts.split_at(n);
                let mu_pre = brute_mean(pre, mode);
                let mu_post = brute_mean(post, mode);
                let avg = |seg: &[&[f64]], c: &[f64]| {
                    seg.iter().map(|x| sq_dist(x, c)).sum::<f64>() / seg.len() as f64
                };
                let v_pre = avg(pre, &mu_pre);
                let v_post = avg(post, &mu_post);
                let vc_pre = avg(pre, &mu_post);
                let vc_post = avg(post, &mu_pre);
                let m = n as f64;
                let s = m * (nf - m) / (nf * nf * sigma_sq)
                    * ((v_pre - v_post).powi(2) + (vc_pre - v_pre + vc_post - v_post).powi(2));
                (n, s)
            })
            .collect()
    }
}
