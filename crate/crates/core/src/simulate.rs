//! Synthetic BCN sequences under the honest law, the eclipse-attack law and
//! the edge-deletion observation noise.
//!
//! Honest law: each vertex picks `q` distinct neighbours uniformly among the
//! other `p - 1` vertices (no self-loops). Attack law: attacker columns
//! include each victim with probability `victim_prob` (1 by default) and fill
//! the remaining slots uniformly from non-victim, non-self vertices. Honest
//! columns are unchanged under attack.
//!
//! Snapshot `i` (0-based) is drawn from ChaCha stream `i` of the scenario
//! seed. Vertices are 0-based; the onset `tau` is the 1-based index of the
//! first attacked snapshot.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, GraphSequence, GroundTruth, Snr};
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub rows_used: usize,
    pub attack: bool,
    pub tau: Option<usize>,
    pub victims: Vec<usize>,
    pub attackers: Vec<usize>,
    /// Probability that an attacker column includes a given victim.
    pub victim_prob: f64,
    /// Trimming used to check that the onset is interior.
    pub delta: f64,
    pub seed: u64,
}

impl AttackScenario {
    /// All-honest scenario over full matrices.
    pub fn honest(p: usize, q: usize, n: usize, seed: u64) -> Self {
        Self {
            p,
            q,
            n,
            rows_used: p,
            attack: false,
            tau: None,
            victims: Vec::new(),
            attackers: Vec::new(),
            victim_prob: 1.0,
            delta: 0.1,
            seed,
        }
    }

    /// The 100-user, 5-neighbour, 1000-snapshot setup restricted to the first
    /// four rows, with victim 0 and attackers 98 and 99.
    pub fn paper_iv(attack: bool, seed: u64) -> Self {
        Self {
            p: 100,
            q: 5,
            n: 1000,
            rows_used: 4,
            attack,
            tau: attack.then_some(600),
            victims: vec![0],
            attackers: vec![98, 99],
            victim_prob: 1.0,
            delta: 0.1,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same scenario with the attack switched off.
    pub fn null_counterpart(&self) -> Self {
        Self {
            attack: false,
            tau: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.q >= self.p {
            return Err(Error::InvalidDegree {
                p: self.p,
                q: self.q,
            });
        }
        if self.rows_used == 0 || self.rows_used > self.p {
            return Err(Error::InvalidScenario(format!(
                "rows_used={} outside 1..={}",
                self.rows_used, self.p
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidScenario("need at least 2 snapshots".into()));
        }
        for (name, set) in [("victim", &self.victims), ("attacker", &self.attackers)] {
            if let Some(v) = set.iter().find(|&&v| v >= self.p) {
                return Err(Error::InvalidScenario(format!(
                    "{name} {v} out of range 0..{}",
                    self.p
                )));
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() {
                return Err(Error::InvalidScenario(format!("duplicate {name} index")));
            }
        }
        if self.victims.iter().any(|v| self.attackers.contains(v)) {
            return Err(Error::InvalidScenario(
                "victims and attackers overlap".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.victim_prob) {
            return Err(Error::InvalidScenario(format!(
                "victim_prob {} outside [0, 1]",
                self.victim_prob
            )));
        }
        if !self.attackers.is_empty() && self.victims.len() > self.q {
            return Err(Error::InvalidScenario(format!(
                "{} victims exceed out-degree {}",
                self.victims.len(),
                self.q
            )));
        }
        if !self.attackers.is_empty() && self.p - 1 - self.victims.len() < self.q {
            return Err(Error::InvalidScenario(
                "too few non-victim vertices to fill attacker columns".into(),
            ));
        }
        match (self.attack, self.tau) {
            (true, None) => Err(Error::InvalidScenario(
                "attack requires an onset tau".into(),
            )),
            (false, Some(_)) => Err(Error::InvalidScenario(
                "onset tau given without an attack".into(),
            )),
            (true, Some(tau)) => {
                let (lo, hi) = (self.delta * self.n as f64, (1.0 - self.delta) * self.n as f64);
                if !(self.delta > 0.0 && self.delta < 0.5) {
                    return Err(Error::InvalidScenario(format!(
                        "delta {} outside (0, 0.5)",
                        self.delta
                    )));
                }
                if !((tau as f64) > lo && (tau as f64) < hi) {
                    return Err(Error::InvalidScenario(format!(
                        "onset {tau} not inside ({lo}, {hi})"
                    )));
                }
                Ok(())
            }
            (false, None) => Ok(()),
        }
    }

    fn truth(&self) -> GroundTruth {
        GroundTruth {
            attack: self.attack,
            tau: self.tau,
            victims: self.victims.clone(),
            attackers: self.attackers.clone(),
        }
    }
}

/// Writes `count` neighbours of column `j` drawn uniformly from `candidates`.
fn place_uniform<R: Rng + ?Sized>(
    m: &mut AdjacencyMatrix,
    j: usize,
    candidates: &[usize],
    count: usize,
    rng: &mut R,
) {
    for k in index::sample(rng, candidates.len(), count) {
        let i = candidates[k];
        if i < m.rows_used() {
            m.set(i, j, 1);
        }
    }
}

fn honest_column<R: Rng + ?Sized>(m: &mut AdjacencyMatrix, j: usize, q: usize, rng: &mut R) {
    let p = m.p();
    for k in index::sample(rng, p - 1, q) {
        let i = if k >= j { k + 1 } else { k };
        if i < m.rows_used() {
            m.set(i, j, 1);
        }
    }
}

/// One snapshot under the honest law, keeping the first `rows_used` rows.
pub fn sample_honest_snapshot<R: Rng + ?Sized>(
    p: usize,
    q: usize,
    rows_used: usize,
    rng: &mut R,
) -> Result<AdjacencyMatrix> {
    if q == 0 || q >= p {
        return Err(Error::InvalidDegree { p, q });
    }
    let mut m = AdjacencyMatrix::zeros(rows_used, p)?;
    for j in 0..p {
        honest_column(&mut m, j, q, rng);
    }
    Ok(m)
}

/// One snapshot under the attack law of `scenario`.
pub fn sample_attack_snapshot<R: Rng + ?Sized>(
    scenario: &AttackScenario,
    rng: &mut R,
) -> Result<AdjacencyMatrix> {
    if !scenario.attack {
        return Err(Error::InvalidScenario(
            "scenario does not describe an attack".into(),
        ));
    }
    scenario.validate()?;
    Ok(attack_snapshot_unchecked(scenario, rng))
}

fn attack_snapshot_unchecked<R: Rng + ?Sized>(s: &AttackScenario, rng: &mut R) -> AdjacencyMatrix {
    let mut m = AdjacencyMatrix::zeros(s.rows_used, s.p).expect("validated shape");
    for j in 0..s.p {
        if !s.attackers.contains(&j) {
            honest_column(&mut m, j, s.q, rng);
            continue;
        }
        let mut chosen = 0;
        for &v in &s.victims {
            let include = s.victim_prob >= 1.0 || rng.random::<f64>() < s.victim_prob;
            if include {
                if v < s.rows_used {
                    m.set(v, j, 1);
                }
                chosen += 1;
            }
        }
        let candidates: Vec<usize> = (0..s.p)
            .filter(|&i| i != j && !s.victims.contains(&i))
            .collect();
        place_uniform(&mut m, j, &candidates, s.q - chosen, rng);
    }
    m
}

/// Snapshot at 0-based position `index` of the scenario's sequence.
pub fn snapshot_at(scenario: &AttackScenario, index: usize) -> AdjacencyMatrix {
    let mut rng = stream_rng(scenario.seed, index as u64);
    let attacked = scenario.attack && scenario.tau.is_some_and(|tau| index + 1 >= tau);
    if attacked {
        attack_snapshot_unchecked(scenario, &mut rng)
    } else {
        let mut m = AdjacencyMatrix::zeros(scenario.rows_used, scenario.p).expect("validated shape");
        for j in 0..scenario.p {
            honest_column(&mut m, j, scenario.q, &mut rng);
        }
        m
    }
}

/// Full sequence for `scenario`; deterministic in `scenario.seed`.
pub fn generate_sequence(scenario: &AttackScenario) -> Result<GraphSequence> {
    scenario.validate()?;
    let snapshots: Vec<AdjacencyMatrix> = (0..scenario.n)
        .into_par_iter()
        .map(|i| snapshot_at(scenario, i))
        .collect();
    GraphSequence::new(
        snapshots,
        scenario.q,
        Some(scenario.seed),
        Some(scenario.truth()),
    )
}

/// Deletes each observed edge independently with probability `1/snr`.
///
/// A single seed is drawn from `rng`; snapshot `i` then uses stream `i` of
/// that seed. The recorded SNR composes with any noise already applied.
pub fn apply_observation_noise<R: Rng + ?Sized>(
    seq: &GraphSequence,
    snr: Snr,
    rng: &mut R,
) -> Result<GraphSequence> {
    if snr.is_clean() {
        return Ok(seq.clone());
    }
    let base = rng.next_u64();
    let threshold = 1.0 / snr.value();
    let snapshots: Vec<AdjacencyMatrix> = seq
        .snapshots()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = stream_rng(base, i as u64);
            let mut out = s.clone();
            for e in out.entries_mut() {
                let u: f64 = r.random();
                if *e == 1 && u <= threshold {
                    *e = 0;
                }
            }
            out
        })
        .collect();
    let survival = seq.snr().survival_probability() * snr.survival_probability();
    let combined = if survival <= 0.0 {
        Snr::new(1.0)?
    } else {
        Snr::new(1.0 / (1.0 - survival))?
    };
    Ok(seq.replace_snapshots(snapshots).with_snr(combined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn two_vertices_one_neighbour_is_forced() {
        let m = sample_honest_snapshot(2, 1, 2, &mut rng(0)).unwrap();
        assert_eq!(m, AdjacencyMatrix::from_rows(&[[0, 1], [1, 0]]).unwrap());
    }

    #[test]
    fn every_column_sums_to_q() {
        let mut r = rng(1);
        for _ in 0..20 {
            let m = sample_honest_snapshot(100, 5, 100, &mut r).unwrap();
            for j in 0..100 {
                assert_eq!(m.column_sum(j), 5);
                assert_eq!(m.get(j, j), 0);
            }
        }
    }

    #[test]
    fn invalid_degree() {
        assert!(matches!(
            sample_honest_snapshot(5, 5, 5, &mut rng(0)),
            Err(Error::InvalidDegree { .. })
        ));
        assert!(sample_honest_snapshot(5, 0, 5, &mut rng(0)).is_err());
    }

    #[test]
    fn honest_edge_frequency_matches_q_over_p_minus_one() {
        // Self-loops are excluded, so the off-diagonal rate is q/(p-1).
        let (p, q, trials) = (10, 3, 10_000);
        let mut counts = vec![0usize; p * p];
        let mut r = rng(2);
        for _ in 0..trials {
            let m = sample_honest_snapshot(p, q, p, &mut r).unwrap();
            for (c, &e) in counts.iter_mut().zip(m.entries()) {
                *c += e as usize;
            }
        }
        for i in 0..p {
            for j in 0..p {
                let f = counts[i * p + j] as f64 / trials as f64;
                if i == j {
                    assert_eq!(f, 0.0);
                } else {
                    assert!((f - q as f64 / (p - 1) as f64).abs() < 0.02, "({i},{j}) {f}");
                }
            }
        }
    }

    #[test]
    fn attackers_always_pick_the_victim() {
        let s = AttackScenario {
            p: 10,
            q: 2,
            n: 100,
            rows_used: 10,
            attack: true,
            tau: Some(50),
            victims: vec![0],
            attackers: vec![9],
            victim_prob: 1.0,
            delta: 0.1,
            seed: 3,
        };
        let mut r = rng(3);
        let mut other = 0usize;
        for _ in 0..10_000 {
            let m = sample_attack_snapshot(&s, &mut r).unwrap();
            assert_eq!(m.get(0, 9), 1);
            assert_eq!(m.column_sum(9), 2);
            other += m.get(1, 9) as usize;
        }
        // remaining slot spread over the 8 non-victim, non-self rows
        let f = other as f64 / 10_000.0;
        assert!((f - 1.0 / 8.0).abs() < 0.015, "{f}");
    }

    #[test]
    fn preset_attack_marginals() {
        let s = AttackScenario {
            rows_used: 100,
            ..AttackScenario::paper_iv(true, 4)
        };
        let mut r = rng(4);
        let trials = 4000;
        let mut off = 0usize;
        for _ in 0..trials {
            let m = sample_attack_snapshot(&s, &mut r).unwrap();
            assert_eq!(m.get(0, 98), 1);
            assert_eq!(m.get(0, 99), 1);
            for j in 0..100 {
                assert_eq!(m.column_sum(j), 5);
            }
            off += m.get(1, 98) as usize + m.get(50, 99) as usize;
        }
        // 4 remaining slots over the 98 rows that are neither victim nor self
        let f = off as f64 / (2 * trials) as f64;
        assert!((f - 4.0 / 98.0).abs() < 0.01, "{f}");
    }

    #[test]
    fn no_attackers_matches_honest_law_exactly() {
        let s = AttackScenario {
            attackers: vec![],
            ..AttackScenario::paper_iv(true, 5)
        };
        let a = sample_attack_snapshot(&s, &mut rng(9)).unwrap();
        let b = sample_honest_snapshot(100, 5, 4, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overlapping_roles_rejected() {
        let s = AttackScenario {
            victims: vec![3],
            attackers: vec![3],
            ..AttackScenario::paper_iv(true, 0)
        };
        assert!(matches!(
            sample_attack_snapshot(&s, &mut rng(0)),
            Err(Error::InvalidScenario(_))
        ));
        let s = AttackScenario {
            attackers: vec![100],
            ..AttackScenario::paper_iv(true, 0)
        };
        assert!(s.validate().is_err());
        let s = AttackScenario {
            tau: Some(50),
            ..AttackScenario::paper_iv(true, 0)
        };
        assert!(s.validate().is_err(), "onset too close to the start");
    }

    #[test]
    fn generated_sequence_switches_at_tau() {
        let s = AttackScenario::paper_iv(true, 11);
        let seq = generate_sequence(&s).unwrap();
        assert_eq!(seq.len(), 1000);
        assert_eq!((seq.p(), seq.q(), seq.rows_used()), (100, 5, 4));
        for (i, m) in seq.snapshots().iter().enumerate() {
            let forced = m.get(0, 98) == 1 && m.get(0, 99) == 1;
            if i + 1 >= 600 {
                assert!(forced, "snapshot {} should be attacked", i + 1);
            }
        }
        // before the onset the victim edge appears at the honest rate only
        let early = seq.snapshots()[..599]
            .iter()
            .filter(|m| m.get(0, 98) == 1)
            .count();
        assert!(early < 80, "{early}");
        assert_eq!(seq.truth().unwrap().tau, Some(600));
    }

    #[test]
    fn generation_is_deterministic_and_order_free() {
        let s = AttackScenario::paper_iv(false, 21);
        let a = generate_sequence(&s).unwrap();
        let b = generate_sequence(&s).unwrap();
        assert_eq!(a, b);
        let serial: Vec<_> = (0..s.n).map(|i| snapshot_at(&s, i)).collect();
        assert_eq!(a.snapshots(), serial.as_slice());
        let c = generate_sequence(&s.clone().with_seed(22)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn clean_noise_is_identity_and_snr_one_erases() {
        let seq = generate_sequence(&AttackScenario::honest(10, 3, 20, 1)).unwrap();
        assert_eq!(apply_observation_noise(&seq, Snr::CLEAN, &mut rng(0)).unwrap(), seq);
        let erased = apply_observation_noise(&seq, Snr::new(1.0).unwrap(), &mut rng(0)).unwrap();
        assert!(erased.snapshots().iter().all(|m| m.count_ones() == 0));
        assert_eq!(erased.truth(), seq.truth());
        assert!(Snr::new(0.5).is_err());
    }

    #[test]
    fn snr_four_keeps_three_quarters_and_only_deletes() {
        let seq = generate_sequence(&AttackScenario::honest(50, 10, 200, 2)).unwrap();
        let before: usize = seq.snapshots().iter().map(|m| m.count_ones()).sum();
        assert_eq!(before, 100_000);
        let noisy = apply_observation_noise(&seq, Snr::new(4.0).unwrap(), &mut rng(5)).unwrap();
        let after: usize = noisy.snapshots().iter().map(|m| m.count_ones()).sum();
        let frac = after as f64 / before as f64;
        assert!((frac - 0.75).abs() < 0.01, "{frac}");
        for (x, y) in seq.snapshots().iter().zip(noisy.snapshots()) {
            assert!(x.entries().iter().zip(y.entries()).all(|(a, b)| b <= a));
        }
        assert_eq!(noisy.snr().value(), 4.0);
    }

    #[test]
    fn honest_windows_are_stationary() {
        let seq = generate_sequence(&AttackScenario::honest(20, 3, 2000, 8)).unwrap();
        let mean = |s: &[AdjacencyMatrix]| {
            let mut acc = vec![0.0; 400];
            for m in s {
                for (a, &e) in acc.iter_mut().zip(m.entries()) {
                    *a += e as f64;
                }
            }
            acc.iter().map(|a| a / s.len() as f64).collect::<Vec<_>>()
        };
        let (a, b) = (mean(&seq.snapshots()[..1000]), mean(&seq.snapshots()[1000..]));
        // sd of a difference of two 1000-sample Bernoulli(3/19) means is ~0.016
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 0.08, "{worst}");
    }
}
