//! Falsification channel: β flip aggregates, received-bit distributions and
//! the blinding condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::{AttackConfig, TreeTopology};

/// Detection and false-alarm probabilities of the nodes at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint<T> {
    pub p_detect: T,
    pub p_false_alarm: T,
}

impl<T: Scalar> OperatingPoint<T> {
    /// Checked constructor for an informative sensor:
    /// `0 <= p_false_alarm < p_detect <= 1`.
    pub fn new(p_detect: T, p_false_alarm: T) -> Result<Self> {
        let zero = T::zero();
        let one = T::one();
        let ok = p_false_alarm >= zero && p_false_alarm < p_detect && p_detect <= one;
        if ok {
            Ok(Self {
                p_detect,
                p_false_alarm,
            })
        } else {
            Err(Error::UninformativeOperatingPoint {
                p_detect: p_detect.to_f64_lossy(),
                p_false_alarm: p_false_alarm.to_f64_lossy(),
            })
        }
    }

    /// Probability that a node reports one under hypothesis `H_l`.
    pub fn one_rate(&self, hypothesis: bool) -> T {
        if hypothesis {
            self.p_detect.clone()
        } else {
            self.p_false_alarm.clone()
        }
    }

    /// `P_d - P_fa`.
    pub fn separation(&self) -> T {
        self.p_detect.clone() - self.p_false_alarm.clone()
    }
}

/// Flip probabilities of a Byzantine: `p10 = P(send 1 | decided 0)`,
/// `p01 = P(send 0 | decided 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipPair<T> {
    pub p10: T,
    pub p01: T,
}

impl<T: Scalar> FlipPair<T> {
    pub fn new(p10: T, p01: T) -> Self {
        Self { p10, p01 }
    }

    pub fn honest() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn always_flip() -> Self {
        Self::new(T::one(), T::one())
    }

    /// Probability of forwarding a one when the incoming bit is one with
    /// probability `p_one`.
    pub fn send_one(&self, p_one: T) -> T {
        let one = T::one();
        p_one.clone() * (one.clone() - self.p01.clone()) + (one - p_one) * self.p10.clone()
    }
}

/// Per-level flip probabilities of the Byzantines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipStrategy<T> {
    levels: Vec<FlipPair<T>>,
}

impl<T: Scalar> FlipStrategy<T> {
    /// Validates every entry lies in `[0, 1]`.
    pub fn new(levels: Vec<FlipPair<T>>) -> Result<Self> {
        let zero = T::zero();
        let one = T::one();
        for pair in &levels {
            for (name, v) in [("p10", &pair.p10), ("p01", &pair.p01)] {
                if *v < zero || *v > one {
                    return Err(Error::InvalidProbability {
                        name,
                        value: v.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self { levels })
    }

    /// The same pair at every level.
    pub fn uniform(depth: usize, pair: FlipPair<T>) -> Self {
        Self {
            levels: vec![pair; depth],
        }
    }

    /// `(0, 0)` everywhere.
    pub fn honest(depth: usize) -> Self {
        Self::uniform(depth, FlipPair::honest())
    }

    /// `(1, 1)` everywhere.
    pub fn always_flip(depth: usize) -> Self {
        Self::uniform(depth, FlipPair::always_flip())
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[FlipPair<T>] {
        &self.levels
    }

    pub fn level(&self, level: usize) -> &FlipPair<T> {
        &self.levels[level - 1]
    }
}

/// Received-bit distribution for decisions originating at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelChannel<T> {
    /// `P(z = 1 | H0)`.
    pub pi10: T,
    /// `P(z = 1 | H1)`.
    pub pi11: T,
    pub beta10: T,
    pub beta01: T,
}

impl<T: Scalar> LevelChannel<T> {
    /// True when the received bit carries no information about the hypothesis.
    pub fn is_blind(&self) -> bool {
        self.pi10 == self.pi11 || self.beta10.clone() + self.beta01.clone() == T::one()
    }
}

fn check_shapes<T: Scalar>(alphas: &[T], strategy: &FlipStrategy<T>, level: usize) -> Result<()> {
    if strategy.depth() != alphas.len() {
        return Err(Error::ShapeMismatch {
            what: "flip strategy",
            expected: alphas.len(),
            found: strategy.depth(),
        });
    }
    if level == 0 || level > alphas.len() {
        return Err(Error::LevelOutOfRange {
            level,
            depth: alphas.len(),
        });
    }
    Ok(())
}

/// `β_{1,0}^k = Σ_{j ≤ k} α_j p10_j` and `β_{0,1}^k = Σ_{j ≤ k} α_j p01_j`.
///
/// The sums cannot exceed one when the fractions come from a non-overlapping
/// configuration; a larger value means the inputs were invalid and trips a
/// debug assertion before being clamped.
pub fn beta_aggregates<T: Scalar>(
    alphas: &[T],
    strategy: &FlipStrategy<T>,
    level: usize,
) -> Result<(T, T)> {
    check_shapes(alphas, strategy, level)?;
    let mut b10 = T::zero();
    let mut b01 = T::zero();
    for (a, pair) in alphas[..level].iter().zip(strategy.levels()) {
        b10 = b10 + a.clone() * pair.p10.clone();
        b01 = b01 + a.clone() * pair.p01.clone();
    }
    Ok((clamp_unit(b10), clamp_unit(b01)))
}

fn clamp_unit<T: Scalar>(v: T) -> T {
    let one = T::one();
    debug_assert!(
        v >= T::zero() && v <= one.clone() + T::from_ratio(1, 1_000_000_000),
        "β aggregate {v:?} outside [0, 1]"
    );
    if v > one {
        one
    } else if v < T::zero() {
        T::zero()
    } else {
        v
    }
}

/// Received-bit distributions at `level`:
/// `π10 = β10 (1 − P_fa) + (1 − β01) P_fa`, `π11 = β10 (1 − P_d) + (1 − β01) P_d`.
pub fn level_channel<T: Scalar>(
    alphas: &[T],
    strategy: &FlipStrategy<T>,
    point: &OperatingPoint<T>,
    level: usize,
) -> Result<LevelChannel<T>> {
    let (beta10, beta01) = beta_aggregates(alphas, strategy, level)?;
    Ok(channel_from_betas(beta10, beta01, point))
}

pub(crate) fn channel_from_betas<T: Scalar>(beta10: T, beta01: T, point: &OperatingPoint<T>) -> LevelChannel<T> {
    let one = T::one();
    let keep = one.clone() - beta01.clone();
    let pi10 = beta10.clone() * (one.clone() - point.p_false_alarm.clone()) + keep.clone() * point.p_false_alarm.clone();
    let pi11 = beta10.clone() * (one - point.p_detect.clone()) + keep * point.p_detect.clone();
    LevelChannel {
        pi10,
        pi11,
        beta10,
        beta01,
    }
}

/// Channels for every level, convenience over a topology and configuration.
pub fn channels<T: Scalar>(
    topology: &TreeTopology,
    config: &AttackConfig,
    strategy: &FlipStrategy<T>,
    points: &[OperatingPoint<T>],
) -> Result<Vec<LevelChannel<T>>> {
    let alphas = config.fractions::<T>(topology)?;
    if points.len() != alphas.len() {
        return Err(Error::ShapeMismatch {
            what: "operating points",
            expected: alphas.len(),
            found: points.len(),
        });
    }
    (1..=alphas.len())
        .map(|k| level_channel(&alphas, strategy, &points[k - 1], k))
        .collect()
}

/// Whether `Σ_{j ≤ k} α_j (p10_j + p01_j) = 1` holds at every level.
/// Exact for rational scalars.
pub fn is_blinding<T: Scalar>(alphas: &[T], strategy: &FlipStrategy<T>) -> Result<bool> {
    if alphas.is_empty() {
        return Ok(false);
    }
    check_shapes(alphas, strategy, 1)?;
    let mut acc = T::zero();
    for (a, pair) in alphas.iter().zip(strategy.levels()) {
        acc = acc + a.clone() * (pair.p10.clone() + pair.p01.clone());
        if acc != T::one() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fewest Byzantines that blind the fusion center: `⌈N_1 / 2⌉` at level one.
pub fn min_byzantines_to_blind(topology: &TreeTopology) -> AttackConfig {
    let mut counts = vec![0; topology.depth()];
    counts[0] = topology.node_counts()[0].div_ceil(2);
    AttackConfig::new(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn q(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn beta_examples() {
        let s = FlipStrategy::<f64>::always_flip(3);
        assert_eq!(beta_aggregates(&[0.0, 0.0, 0.0], &s, 3).unwrap(), (0.0, 0.0));
        assert_eq!(beta_aggregates(&[0.4, 0.0, 0.0], &s, 2).unwrap(), (0.4, 0.4));

        let s = FlipStrategy::<Rational64>::always_flip(2);
        let (b10, b01) = beta_aggregates(&[q(1, 3), q(1, 12)], &s, 2).unwrap();
        assert_eq!((b10, b01), (q(5, 12), q(5, 12)));
    }

    #[test]
    fn beta_shape_errors() {
        let s = FlipStrategy::<f64>::always_flip(2);
        assert!(matches!(beta_aggregates(&[0.1, 0.1, 0.1], &s, 1), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(beta_aggregates(&[0.1, 0.1], &s, 3), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn channel_examples() {
        let op = OperatingPoint::new(0.8f64, 0.2).unwrap();
        let c = level_channel(&[0.0], &FlipStrategy::honest(1), &op, 1).unwrap();
        assert_eq!((c.pi10, c.pi11), (0.2, 0.8));

        let c = level_channel(&[0.4], &FlipStrategy::always_flip(1), &op, 1).unwrap();
        assert!((c.pi10 - 0.44).abs() < 1e-15);
        assert!((c.pi11 - 0.56).abs() < 1e-15);

        let exact = OperatingPoint::new(q(9, 10), q(1, 10)).unwrap();
        let c = level_channel(&[q(1, 2)], &FlipStrategy::always_flip(1), &exact, 1).unwrap();
        assert_eq!((c.pi10, c.pi11), (q(1, 2), q(1, 2)));
        assert!(c.is_blind());
    }

    #[test]
    fn blinding_examples() {
        let s = FlipStrategy::<Rational64>::always_flip(3);
        assert!(is_blinding(&[q(1, 2), q(0, 1), q(0, 1)], &s).unwrap());
        assert!(!is_blinding(&[q(2, 5), q(0, 1), q(0, 1)], &s).unwrap());
        let s2 = FlipStrategy::<Rational64>::always_flip(2);
        assert!(!is_blinding(&[q(1, 4), q(1, 4)], &s2).unwrap());
    }

    #[test]
    fn min_blinding_counts() {
        let t = TreeTopology::new(&[6, 2]).unwrap();
        assert_eq!(min_byzantines_to_blind(&t).counts(), &[3, 0]);
        let t = TreeTopology::new(&[2, 3]).unwrap();
        assert_eq!(min_byzantines_to_blind(&t).counts(), &[1, 0]);
        let t = TreeTopology::new(&[5]).unwrap();
        assert_eq!(min_byzantines_to_blind(&t).counts(), &[3]);
    }

    #[test]
    fn operating_point_validation() {
        assert!(OperatingPoint::new(0.5, 0.5).is_err());
        assert!(OperatingPoint::new(1.1, 0.5).is_err());
        assert!(OperatingPoint::new(0.6, -0.1).is_err());
        assert!(OperatingPoint::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn strategy_validation() {
        assert!(FlipStrategy::new(vec![FlipPair::new(1.2, 0.0)]).is_err());
        assert!(FlipStrategy::new(vec![FlipPair::new(0.3, 0.7)]).is_ok());
    }
}
