//! Johnson–Lindenstrauss random projection of vectorized snapshots.
//!
//! A map is a `k x m` matrix with i.i.d. `N(0, 1/k)` entries, so squared
//! norms are preserved in expectation. A freshly drawn map is only accepted
//! once every checked pair of dataset points satisfies
//! `(1-eps)|x-y|^2 <= |f(x)-f(y)|^2 <= (1+eps)|x-y|^2`; otherwise it is
//! redrawn. Attempt `a` draws from ChaCha stream `a` of the map seed, so
//! `(seed, attempt, m, k)` is enough to rebuild the matrix.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::{sq_dist, ObjectKind, ObjectSequence};
use crate::graph::{GraphSequence, GroundTruth, Snr};
use crate::rng::{derive_seed, stream_rng};

/// Datasets with at most this many pairs are checked exhaustively.
pub const MAX_EXHAUSTIVE_PAIRS: usize = 1_000_000;
/// Pairs checked on larger datasets.
pub const SAMPLED_PAIRS: usize = 200_000;
pub const DEFAULT_MAX_RETRIES: usize = 50;

/// Smallest `k` allowed by the JL bound `24 / (3 eps^2 - 2 eps^3) * ln(n)`.
///
/// The logarithm is natural.
pub fn min_jl_dimension(epsilon: f64, n_points: usize) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if n_points < 2 {
        return Err(Error::InvalidParameters(format!(
            "need at least 2 points, got {n_points}"
        )));
    }
    let denom = 3.0 * epsilon * epsilon - 2.0 * epsilon.powi(3);
    Ok((24.0 / denom * (n_points as f64).ln()).ceil() as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct JlMap {
    matrix: Vec<f64>,
    m: usize,
    k: usize,
    epsilon: f64,
    seed: u64,
    attempt: usize,
    identity: bool,
    verification: Option<Verification>,
}

/// Outcome of the pairwise distortion check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub pairs_checked: usize,
    pub exhaustive: bool,
    /// Largest `| |f(x)-f(y)|^2 / |x-y|^2 - 1 |` over checked pairs.
    pub observed_distortion: f64,
}

/// Serializable description of a map; the matrix is optional since it can
/// be regenerated from the seed and attempt number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JlDescriptor {
    pub m: usize,
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub attempt: usize,
    pub identity: bool,
    pub verified: bool,
    pub verification: Option<Verification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
}

impl JlMap {
    /// Draws attempt `attempt` of the Gaussian map for `seed` without checking it.
    pub fn gaussian(m: usize, k: usize, epsilon: f64, seed: u64, attempt: usize) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::InvalidParameters(format!(
                "projection dimensions must be positive (m={m}, k={k})"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        let mut rng = stream_rng(seed, attempt as u64);
        let scale = 1.0 / (k as f64).sqrt();
        let matrix = (0..k * m)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Ok(Self {
            matrix,
            m,
            k,
            epsilon,
            seed,
            attempt,
            identity: false,
            verification: None,
        })
    }

    /// The identity on `R^m`; trivially satisfies every distortion bound.
    pub fn identity(m: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        let mut matrix = vec![0.0; m * m];
        for i in 0..m {
            matrix[i * m + i] = 1.0;
        }
        Ok(Self {
            matrix,
            m,
            k: m,
            epsilon,
            seed: 0,
            attempt: 0,
            identity: true,
            verification: Some(Verification {
                pairs_checked: 0,
                exhaustive: true,
                observed_distortion: 0.0,
            }),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn attempt(&self) -> usize {
        self.attempt
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn verified(&self) -> bool {
        self.verification.is_some()
    }

    pub fn verification(&self) -> Option<Verification> {
        self.verification
    }

    /// Row-major `k x m` matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m {
            return Err(Error::dims(self.m, x.len()));
        }
        Ok(self.apply_unchecked(x))
    }

    fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        if self.identity {
            return x.to_vec();
        }
        self.matrix
            .chunks(self.m)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn descriptor(&self, embed_matrix: bool) -> JlDescriptor {
        JlDescriptor {
            m: self.m,
            k: self.k,
            epsilon: self.epsilon,
            seed: self.seed,
            attempt: self.attempt,
            identity: self.identity,
            verified: self.verified(),
            verification: self.verification,
            matrix: embed_matrix.then(|| self.matrix.clone()),
        }
    }

    pub fn from_descriptor(d: &JlDescriptor) -> Result<Self> {
        let mut map = if d.identity {
            Self::identity(d.m, d.epsilon)?
        } else {
            Self::gaussian(d.m, d.k, d.epsilon, d.seed, d.attempt)?
        };
        if let Some(matrix) = &d.matrix {
            if matrix.len() != d.m * d.k {
                return Err(Error::dims(d.m * d.k, matrix.len()));
            }
            map.matrix = matrix.clone();
        }
        map.verification = d.verification;
        Ok(map)
    }
}

/// Pairs to check: all of them, or a seeded uniform sample on large sets.
fn check_pairs(n: usize, seed: u64) -> (Vec<(usize, usize)>, bool) {
    let total = n * (n - 1) / 2;
    if total <= MAX_EXHAUSTIVE_PAIRS {
        let pairs = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        return (pairs, true);
    }
    let mut rng = stream_rng(derive_seed(seed, u64::MAX), 0);
    let pairs = (0..SAMPLED_PAIRS)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i.min(j), i.max(j))
        })
        .collect();
    (pairs, false)
}

/// Whether every pair meets the `(1 ± eps)` bound, and the worst relative
/// distortion seen.
fn distortion(
    projected: &[Vec<f64>],
    pairs: &[(usize, usize)],
    original: &[f64],
    epsilon: f64,
) -> (bool, f64) {
    pairs
        .par_iter()
        .zip(original)
        .map(|(&(i, j), &d)| {
            let pd = sq_dist(&projected[i], &projected[j]);
            if d == 0.0 {
                (pd == 0.0, if pd == 0.0 { 0.0 } else { f64::INFINITY })
            } else {
                let ok = (1.0 - epsilon) * d <= pd && pd <= (1.0 + epsilon) * d;
                (ok, (pd / d - 1.0).abs())
            }
        })
        .reduce(|| (true, 0.0), |a, b| (a.0 && b.0, a.1.max(b.1)))
}

/// Draws Gaussian maps until one passes the distortion check on `dataset`.
///
/// A target dimension above `m` is allowed but pointless; callers may want
/// to warn about it.
pub fn build_jl_map(
    k: usize,
    epsilon: f64,
    dataset: &ObjectSequence,
    seed: u64,
    max_retries: usize,
) -> Result<JlMap> {
    let m = dataset.dim();
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if dataset.len() < 2 {
        return Err(Error::InvalidParameters("dataset needs 2 points".into()));
    }
    let (pairs, exhaustive) = check_pairs(dataset.len(), seed);
    let original: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| sq_dist(dataset.point(i), dataset.point(j)))
        .collect();
    let attempts = max_retries.max(1);
    let mut best = f64::INFINITY;
    for attempt in 0..attempts {
        let mut map = JlMap::gaussian(m, k, epsilon, seed, attempt)?;
        let projected: Vec<Vec<f64>> = (0..dataset.len())
            .into_par_iter()
            .map(|i| map.apply_unchecked(dataset.point(i)))
            .collect();
        let (ok, worst) = distortion(&projected, &pairs, &original, epsilon);
        best = best.min(worst);
        if ok {
            map.verification = Some(Verification {
                pairs_checked: pairs.len(),
                exhaustive,
                observed_distortion: worst,
            });
            return Ok(map);
        }
    }
    Err(Error::DistortionNotAchieved {
        epsilon,
        attempts,
        best_distortion: best,
    })
}

/// Metadata carried over from the source graph sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub p: usize,
    pub q: usize,
    pub rows_used: usize,
    pub snr: Snr,
    pub seed: Option<u64>,
    pub truth: Option<GroundTruth>,
}

impl SourceInfo {
    pub fn of(seq: &GraphSequence) -> Self {
        Self {
            p: seq.p(),
            q: seq.q(),
            rows_used: seq.rows_used(),
            snr: seq.snr(),
            seed: seq.seed(),
            truth: seq.truth().cloned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedSequence {
    pub vectors: Vec<Vec<f64>>,
    pub map: JlMap,
    pub source: SourceInfo,
}

impl ProjectedSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn to_objects(&self) -> Result<ObjectSequence> {
        let data = self.vectors.concat();
        ObjectSequence::from_flat(data, self.map.k(), ObjectKind::Vector)
    }
}

pub fn project_sequence(seq: &GraphSequence, map: &JlMap) -> Result<ProjectedSequence> {
    if map.m() != seq.dim() {
        return Err(Error::dims(seq.dim(), map.m()));
    }
    let vectors = seq
        .snapshots()
        .par_iter()
        .map(|s| map.apply_unchecked(&s.vectorize()))
        .collect();
    Ok(ProjectedSequence {
        vectors,
        map: map.clone(),
        source: SourceInfo::of(seq),
    })
}

/// Projects an already vectorized sequence.
pub fn project_objects(seq: &ObjectSequence, map: &JlMap) -> Result<ObjectSequence> {
    if map.m() != seq.dim() {
        return Err(Error::dims(seq.dim(), map.m()));
    }
    let data: Vec<f64> = (0..seq.len())
        .into_par_iter()
        .flat_map_iter(|i| map.apply_unchecked(seq.point(i)))
        .collect();
    ObjectSequence::from_flat(data, map.k(), ObjectKind::Vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate_sequence, AttackScenario};
    use proptest::prelude::*;

    #[test]
    fn dimension_bound_values() {
        // 48 ln 1000 = 331.57...
        assert_eq!(min_jl_dimension(0.5, 1000).unwrap(), 332);
        // 24 / 0.216 * ln 100 = 511.69...
        assert_eq!(min_jl_dimension(0.3, 100).unwrap(), 512);
        let near_one = min_jl_dimension(1.0 - 1e-9, 50).unwrap();
        assert_eq!(near_one, (24.0 * 50f64.ln()).ceil() as usize);
        assert!(matches!(min_jl_dimension(0.0, 10), Err(Error::InvalidEpsilon(_))));
        assert!(min_jl_dimension(1.0, 10).is_err());
    }

    #[test]
    fn identity_projection_reproduces_vectors() {
        let seq = generate_sequence(&AttackScenario::honest(8, 2, 10, 3)).unwrap();
        let map = JlMap::identity(64, 0.1).unwrap();
        let proj = project_sequence(&seq, &map).unwrap();
        for (v, s) in proj.vectors.iter().zip(seq.snapshots()) {
            assert_eq!(v, &s.vectorize());
        }
        assert!(map.verified());
    }

    #[test]
    fn zero_sequence_projects_to_zero() {
        let zeros = vec![vec![0.0; 12]; 5];
        let objs = ObjectSequence::from_vectors(&zeros).unwrap();
        let map = JlMap::gaussian(12, 4, 0.5, 1, 0).unwrap();
        let out = project_objects(&objs, &map).unwrap();
        assert!((0..5).all(|i| out.point(i).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn two_distinct_points_verify_quickly() {
        let pts = vec![vec![0.0; 50], vec![1.0; 50], vec![1.0; 50], vec![0.0; 50]];
        let objs = ObjectSequence::from_vectors(&pts).unwrap();
        let k = min_jl_dimension(0.9, 2).unwrap();
        let map = build_jl_map(k, 0.9, &objs, 5, DEFAULT_MAX_RETRIES).unwrap();
        assert!(map.verified());
        let v = map.verification().unwrap();
        assert!(v.exhaustive && v.observed_distortion <= 0.9);
    }

    #[test]
    fn impossible_distortion_reports_failure() {
        let seq = generate_sequence(&AttackScenario::honest(10, 3, 40, 2)).unwrap();
        let objs = ObjectSequence::from_graphs(&seq).unwrap();
        let err = build_jl_map(2, 0.01, &objs, 1, 3).unwrap_err();
        assert!(matches!(err, Error::DistortionNotAchieved { attempts: 3, .. }));
    }

    #[test]
    fn verified_map_bounds_every_pair() {
        let seq = generate_sequence(&AttackScenario::honest(20, 3, 60, 4)).unwrap();
        let objs = ObjectSequence::from_graphs(&seq).unwrap();
        let eps = 0.8;
        let map = build_jl_map(60, eps, &objs, 9, DEFAULT_MAX_RETRIES).unwrap();
        let proj = project_objects(&objs, &map).unwrap();
        for i in 0..objs.len() {
            for j in i + 1..objs.len() {
                let d = sq_dist(objs.point(i), objs.point(j));
                let pd = sq_dist(proj.point(i), proj.point(j));
                assert!((1.0 - eps) * d <= pd && pd <= (1.0 + eps) * d);
            }
        }
    }

    #[test]
    fn descriptor_regenerates_the_matrix() {
        let map = JlMap::gaussian(30, 7, 0.5, 77, 3).unwrap();
        let d = map.descriptor(false);
        assert!(d.matrix.is_none());
        let back = JlMap::from_descriptor(&d).unwrap();
        assert_eq!(back.matrix(), map.matrix());
        let json = serde_json::to_string(&map.descriptor(true)).unwrap();
        let parsed: JlDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(JlMap::from_descriptor(&parsed).unwrap(), map);
    }

    #[test]
    fn dimension_mismatch_on_projection() {
        let seq = generate_sequence(&AttackScenario::honest(8, 2, 10, 3)).unwrap();
        let map = JlMap::gaussian(10, 4, 0.5, 1, 0).unwrap();
        assert!(matches!(
            project_sequence(&seq, &map),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn projection_is_linear(
            a in proptest::collection::vec(-5.0f64..5.0, 16),
            b in proptest::collection::vec(-5.0f64..5.0, 16),
            seed in any::<u64>(),
        ) {
            let map = JlMap::gaussian(16, 6, 0.5, seed, 0).unwrap();
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let fa = map.apply(&a).unwrap();
            let fb = map.apply(&b).unwrap();
            let fd = map.apply(&diff).unwrap();
            for ((x, y), z) in fa.iter().zip(&fb).zip(&fd) {
                prop_assert!((x - y - z).abs() < 1e-9);
            }
        }
    }
}
