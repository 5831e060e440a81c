//! Monte Carlo decision fusion on a placed tree.
//!
//! Every node draws a local decision; a Byzantine flips its own bit and every
//! bit relayed through it, independently per bit, with its level's flip
//! probabilities. The fusion center sees the per-level counts of ones `s_k`
//! and computes `Σ_k [a1_k s_k + a0_k (N_k − s_k)]` with log-likelihood
//! weights derived from the configuration it assumes.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{level_channel, FlipStrategy, LevelChannel, OperatingPoint};
use crate::divergence::{fusion_weights, total_kld};
use crate::error::{Error, Result};
use crate::mc::{batch_rng, check_trials, run_batches, Proportion};
use crate::topology::{AttackConfig, AttackPlacement, TreeTopology};

/// One fusion trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub hypothesis: bool,
    /// Ones received from each level.
    pub ones: Vec<u64>,
    pub statistic: f64,
    /// `statistic > threshold`.
    pub decision: bool,
}

/// Precomputed simulation model: topology, Byzantine paths, local operating
/// points and fusion weights.
#[derive(Debug, Clone)]
pub struct FusionModel {
    node_counts: Vec<u64>,
    /// Per node: level index and the flip pair of the Byzantine on its path.
    nodes: Vec<(usize, Option<(f64, f64)>)>,
    points: Vec<OperatingPoint<f64>>,
    weights: Vec<(f64, f64)>,
    channels: Vec<LevelChannel<f64>>,
}

impl FusionModel {
    /// Weights come from the placement's own configuration.
    pub fn new(
        topology: &TreeTopology,
        placement: &AttackPlacement,
        strategy: &FlipStrategy<f64>,
        points: &[OperatingPoint<f64>],
    ) -> Result<Self> {
        Self::with_assumed_config(topology, placement, strategy, points, &placement.config())
    }

    /// Weights come from `assumed`, which may differ from the placement.
    pub fn with_assumed_config(
        topology: &TreeTopology,
        placement: &AttackPlacement,
        strategy: &FlipStrategy<f64>,
        points: &[OperatingPoint<f64>],
        assumed: &AttackConfig,
    ) -> Result<Self> {
        let placement = AttackPlacement::from_levels(topology, placement.levels().to_vec())?;
        if points.len() != topology.depth() {
            return Err(Error::ShapeMismatch {
                what: "operating points",
                expected: topology.depth(),
                found: points.len(),
            });
        }
        let assumed_alphas = assumed.fractions::<f64>(topology)?;
        let true_alphas = placement.config().fractions::<f64>(topology)?;
        let mut weights = Vec::with_capacity(topology.depth());
        let mut channels = Vec::with_capacity(topology.depth());
        for k in 1..=topology.depth() {
            weights.push(fusion_weights(&level_channel(&assumed_alphas, strategy, &points[k - 1], k)?));
            channels.push(level_channel(&true_alphas, strategy, &points[k - 1], k)?);
        }
        let nodes = placement
            .path_map(topology)
            .into_iter()
            .enumerate()
            .flat_map(|(k, row)| {
                row.into_iter().map(move |c| {
                    (
                        k,
                        c.map(|j| {
                            let pair = strategy.level(j as usize);
                            (pair.p10, pair.p01)
                        }),
                    )
                })
            })
            .collect();
        Ok(Self {
            node_counts: topology.node_counts().to_vec(),
            nodes,
            points: points.to_vec(),
            weights,
            channels,
        })
    }

    /// `(a1_k, a0_k)` per level.
    pub fn weights(&self) -> &[(f64, f64)] {
        &self.weights
    }

    /// Received-bit distributions under the true configuration.
    pub fn channels(&self) -> &[LevelChannel<f64>] {
        &self.channels
    }

    pub fn is_blind(&self) -> bool {
        self.weights.iter().all(|&(a1, a0)| a1 == 0.0 && a0 == 0.0)
    }

    fn draw_ones(&self, hypothesis: bool, rng: &mut ChaCha8Rng, ones: &mut [u64]) {
        ones.fill(0);
        for &(k, flip) in &self.nodes {
            let mut bit = rng.random::<f64>() < self.points[k].one_rate(hypothesis);
            if let Some((p10, p01)) = flip {
                let p = if bit { p01 } else { p10 };
                let flipped = if p >= 1.0 {
                    true
                } else if p <= 0.0 {
                    false
                } else {
                    rng.random::<f64>() < p
                };
                bit ^= flipped;
            }
            ones[k] += u64::from(bit);
        }
    }

    /// Fusion statistic for per-level counts. Terms with a zero count are
    /// skipped, so infinite weights only matter when they are used.
    pub fn statistic(&self, ones: &[u64]) -> f64 {
        ones.iter()
            .zip(&self.node_counts)
            .zip(&self.weights)
            .map(|((&s, &n), &(a1, a0))| {
                let mut v = 0.0;
                if s > 0 {
                    v += a1 * s as f64;
                }
                if n > s {
                    v += a0 * (n - s) as f64;
                }
                v
            })
            .sum()
    }

    /// One trial against `threshold`.
    pub fn trial(&self, hypothesis: bool, threshold: f64, rng: &mut ChaCha8Rng) -> TrialRecord {
        let mut ones = vec![0; self.node_counts.len()];
        self.draw_ones(hypothesis, rng, &mut ones);
        let statistic = self.statistic(&ones);
        TrialRecord {
            hypothesis,
            ones,
            statistic,
            decision: statistic > threshold,
        }
    }

    fn statistics(&self, hypothesis: bool, trials: u64, seed: u64) -> Vec<f64> {
        run_batches(trials, seed, |rng, len| {
            let mut ones = vec![0; self.node_counts.len()];
            (0..len)
                .map(|_| {
                    self.draw_ones(hypothesis, rng, &mut ones);
                    self.statistic(&ones)
                })
                .collect::<Vec<f64>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }

    /// Per-level one counts summed over trials, together with the
    /// statistics.
    fn run(&self, hypothesis: bool, trials: u64, seed: u64) -> (Vec<f64>, Vec<Proportion>) {
        let depth = self.node_counts.len();
        let batches = run_batches(trials, seed, |rng, len| {
            let mut ones = vec![0; depth];
            let mut totals = vec![0u64; depth];
            let stats: Vec<f64> = (0..len)
                .map(|_| {
                    self.draw_ones(hypothesis, rng, &mut ones);
                    for (t, o) in totals.iter_mut().zip(&ones) {
                        *t += o;
                    }
                    self.statistic(&ones)
                })
                .collect();
            (stats, totals, len)
        });
        let mut stats = Vec::with_capacity(trials as usize);
        let mut rates = vec![Proportion::default(); depth];
        for (s, totals, len) in batches {
            stats.extend(s);
            for (k, r) in rates.iter_mut().enumerate() {
                r.add(Proportion {
                    successes: totals[k],
                    trials: len * self.node_counts[k],
                });
            }
        }
        (stats, rates)
    }
}

/// Independent sub-seed for one phase of an experiment.
fn phase_seed(seed: u64, phase: u64) -> u64 {
    // SplitMix64 finalizer over the combined value.
    let mut z = seed ^ phase.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One trial with decision threshold zero.
pub fn run_trial(
    topology: &TreeTopology,
    placement: &AttackPlacement,
    strategy: &FlipStrategy<f64>,
    points: &[OperatingPoint<f64>],
    hypothesis: bool,
    seed: u64,
) -> Result<TrialRecord> {
    let model = FusionModel::new(topology, placement, strategy, points)?;
    Ok(model.trial(hypothesis, 0.0, &mut batch_rng(seed, 0)))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidFalseAlarmLevel(delta))
    }
}

/// Empirical `(1 − δ)`-quantile of H0 statistics: the smallest observed
/// value `τ` with at most a fraction `δ` of the sample above it.
fn empirical_threshold(stats: &mut [f64], delta: f64) -> Result<f64> {
    stats.sort_by(f64::total_cmp);
    let (lo, hi) = (stats[0], stats[stats.len() - 1]);
    if lo == hi {
        return Err(Error::DegenerateCalibration { value: lo });
    }
    let n = stats.len();
    let rank = ((1.0 - delta) * n as f64).ceil() as usize;
    Ok(stats[rank.saturating_sub(1).min(n - 1)])
}

fn warn_small_sample(delta: f64, trials: u64) {
    if delta * (trials as f64) < 100.0 {
        warn!("δ·trials = {} is below 100; the threshold estimate is noisy", delta * trials as f64);
    }
}

/// Threshold `τ` on the fusion statistic such that the empirical H0 rate of
/// `statistic > τ` is at most `δ`. No randomization at `τ`.
pub fn calibrate_threshold(
    topology: &TreeTopology,
    placement: &AttackPlacement,
    strategy: &FlipStrategy<f64>,
    points: &[OperatingPoint<f64>],
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    check_delta(delta)?;
    check_trials(trials)?;
    warn_small_sample(delta, trials);
    let model = FusionModel::new(topology, placement, strategy, points)?;
    empirical_threshold(&mut model.statistics(false, trials, seed), delta)
}

/// Calibrated fusion experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub delta: f64,
    pub trials: u64,
    /// Threshold on the fusion statistic.
    pub threshold: f64,
    /// True when the H0 statistic was constant. The fusion center then
    /// never decides H1.
    pub degenerate: bool,
    /// False alarms on fresh H0 trials.
    pub false_alarm: Proportion,
    /// Misses on H1 trials.
    pub miss: Proportion,
    /// Analytic `(π10, π11)` per level.
    pub analytic: Vec<(f64, f64)>,
    /// Received ones per level under H0 and H1, over `trials · N_k` bits.
    pub ones_h0: Vec<Proportion>,
    pub ones_h1: Vec<Proportion>,
}

/// Calibrates on H0, then measures false alarms on fresh H0 trials and
/// misses on H1 trials, each with `trials` trials.
pub fn run_fusion_experiment(
    topology: &TreeTopology,
    placement: &AttackPlacement,
    strategy: &FlipStrategy<f64>,
    points: &[OperatingPoint<f64>],
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<FusionReport> {
    let model = FusionModel::new(topology, placement, strategy, points)?;
    run_model_experiment(&model, delta, trials, seed)
}

/// [`run_fusion_experiment`] on a prepared model.
pub fn run_model_experiment(model: &FusionModel, delta: f64, trials: u64, seed: u64) -> Result<FusionReport> {
    check_delta(delta)?;
    check_trials(trials)?;
    warn_small_sample(delta, trials);
    let mut calibration = model.statistics(false, trials, phase_seed(seed, 0));
    let (threshold, degenerate) = match empirical_threshold(&mut calibration, delta) {
        Ok(t) => (t, false),
        Err(Error::DegenerateCalibration { value }) => {
            warn!("fusion statistic is constant ({value}) under H0; the test carries no information");
            (value, true)
        }
        Err(e) => return Err(e),
    };
    let (h0, ones_h0) = model.run(false, trials, phase_seed(seed, 1));
    let (h1, ones_h1) = model.run(true, trials, phase_seed(seed, 2));
    let count = |v: &[f64], pred: &dyn Fn(f64) -> bool| Proportion {
        successes: v.iter().filter(|&&s| pred(s)).count() as u64,
        trials: v.len() as u64,
    };
    Ok(FusionReport {
        delta,
        trials,
        threshold,
        degenerate,
        false_alarm: count(&h0, &|s| s > threshold),
        miss: count(&h1, &|s| s <= threshold),
        analytic: model.channels.iter().map(|c| (c.pi10, c.pi11)).collect(),
        ones_h0,
        ones_h1,
    })
}

/// Places `copies` disjoint copies of a base placement on the replicated
/// tree.
pub fn replicate_placement(base: &TreeTopology, placement: &AttackPlacement, copies: u64) -> Result<(TreeTopology, AttackPlacement)> {
    let tree = base.replicate(copies)?;
    let levels = placement
        .levels()
        .iter()
        .zip(base.node_counts())
        .map(|(nodes, &n)| (0..copies).flat_map(|c| nodes.iter().map(move |&i| c * n + i)).collect())
        .collect();
    let placed = AttackPlacement::from_levels(&tree, levels)?;
    Ok((tree, placed))
}

/// Miss probability against replication of the base tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    /// Divergence `D` of the base tree.
    pub base_kld: f64,
    pub copies: Vec<u64>,
    pub reports: Vec<FusionReport>,
    /// Least-squares slope of `−ln P̂_M` against the copy count.
    pub slope: f64,
}

/// Least-squares slope of `y` on `x`.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs the calibrated experiment on `m = 1..=max_copies` copies of the
/// base tree fused together and regresses `−ln P̂_M` on `m`.
#[allow(clippy::too_many_arguments)]
pub fn replication_slope(
    topology: &TreeTopology,
    placement: &AttackPlacement,
    strategy: &FlipStrategy<f64>,
    points: &[OperatingPoint<f64>],
    delta: f64,
    trials: u64,
    seed: u64,
    max_copies: u64,
) -> Result<ReplicationReport> {
    let base_kld = total_kld(topology, &placement.config(), strategy, points)?.total;
    let copies: Vec<u64> = (1..=max_copies.max(2)).collect();
    let mut reports = Vec::with_capacity(copies.len());
    for &m in &copies {
        let (tree, placed) = replicate_placement(topology, placement, m)?;
        reports.push(run_fusion_experiment(&tree, &placed, strategy, points, delta, trials, phase_seed(seed, 16 + m))?);
    }
    let x: Vec<f64> = copies.iter().map(|&m| m as f64).collect();
    let y: Vec<f64> = reports.iter().map(|r| -r.miss.rate().ln()).collect();
    Ok(ReplicationReport {
        base_kld,
        slope: regression_slope(&x, &y),
        copies,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TreeTopology, AttackPlacement, FlipStrategy<f64>, Vec<OperatingPoint<f64>>) {
        let t = TreeTopology::new(&[5, 2]).unwrap();
        let p = AttackPlacement::from_levels(&t, vec![vec![0, 3], vec![]]).unwrap();
        let op = OperatingPoint::new(0.8, 0.2).unwrap();
        (t, p, FlipStrategy::always_flip(2), vec![op; 2])
    }

    #[test]
    fn perfect_sensors_saturate() {
        let t = TreeTopology::new(&[2, 3]).unwrap();
        let op = OperatingPoint::new(1.0, 0.0).unwrap();
        let r = run_trial(&t, &AttackPlacement::honest(&t), &FlipStrategy::honest(2), &[op; 2], true, 3).unwrap();
        assert_eq!(r.ones, vec![2, 6]);
        assert_eq!(r.statistic, f64::INFINITY);
        assert!(r.decision);
        let r = run_trial(&t, &AttackPlacement::honest(&t), &FlipStrategy::honest(2), &[op; 2], false, 3).unwrap();
        assert_eq!(r.ones, vec![0, 0]);
        assert_eq!(r.statistic, f64::NEG_INFINITY);
    }

    #[test]
    fn blinded_statistic_is_zero() {
        let t = TreeTopology::new(&[4, 2]).unwrap();
        let p = AttackPlacement::from_levels(&t, vec![vec![1, 2], vec![]]).unwrap();
        let op = OperatingPoint::new(0.8, 0.2).unwrap();
        let s = FlipStrategy::always_flip(2);
        for seed in 0..5 {
            assert_eq!(run_trial(&t, &p, &s, &[op; 2], true, seed).unwrap().statistic, 0.0);
        }
        assert!(matches!(
            calibrate_threshold(&t, &p, &s, &[op; 2], 0.1, 1000, 1),
            Err(Error::DegenerateCalibration { value }) if value == 0.0
        ));
        let r = run_fusion_experiment(&t, &p, &s, &[op; 2], 0.1, 1000, 1).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.false_alarm.successes, 0);
        assert_eq!(r.miss.rate(), 1.0);
    }

    #[test]
    fn replay_is_identical() {
        let (t, p, s, op) = setup();
        let a = run_trial(&t, &p, &s, &op, true, 11).unwrap();
        let b = run_trial(&t, &p, &s, &op, true, 11).unwrap();
        assert_eq!(a, b);
        let x = run_fusion_experiment(&t, &p, &s, &op, 0.1, 5000, 4).unwrap();
        let y = run_fusion_experiment(&t, &p, &s, &op, 0.1, 5000, 4).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn threshold_edge_cases() {
        let mut v = vec![3.0, 1.0, 2.0, 4.0];
        assert_eq!(empirical_threshold(&mut v.clone(), 1.0).unwrap(), 1.0);
        assert_eq!(empirical_threshold(&mut v, 0.5).unwrap(), 2.0);
        assert!(matches!(check_delta(0.0), Err(Error::InvalidFalseAlarmLevel(_))));
        assert!(matches!(check_delta(1.5), Err(Error::InvalidFalseAlarmLevel(_))));
    }

    #[test]
    fn replication_offsets_nodes() {
        let (t, p, _, _) = setup();
        let (tree, placed) = replicate_placement(&t, &p, 3).unwrap();
        assert_eq!(tree.node_counts(), &[15, 30]);
        assert_eq!(placed.byzantines_at(1), &[0, 3, 5, 8, 10, 13]);
        assert_eq!(placed.config().counts(), &[6, 0]);
    }

    #[test]
    fn slope_of_a_line() {
        assert!((regression_slope(&[1.0, 2.0, 3.0, 4.0], &[0.5, 1.0, 1.5, 2.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn phase_seeds_differ() {
        assert_ne!(phase_seed(1, 0), phase_seed(1, 1));
        assert_ne!(phase_seed(1, 0), phase_seed(2, 0));
    }
}
