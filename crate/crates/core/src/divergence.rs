//! KL-divergence error exponents, optimal attacks, local detector design and
//! fusion weights.
//!
//! All divergences are in nats. The per-level term is the divergence of the
//! H0 received-bit distribution from the H1 one,
//! `D_k = π10 ln(π10/π11) + (1 − π10) ln((1 − π10)/(1 − π11))`,
//! and the network exponent is `D = Σ_k N_k D_k`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // the negations also reject NaN

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{channel_from_betas, level_channel, FlipPair, FlipStrategy, LevelChannel, OperatingPoint};
use crate::error::{Error, Result};
use crate::normal::{q_function, q_inverse};
use crate::scalar::{cast, lit, Real, Scalar};
use crate::topology::{AttackConfig, TreeTopology};

/// Per-level and total divergence together with the channels used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldReport<T> {
    pub per_level: Vec<T>,
    pub total: T,
    pub channels: Vec<LevelChannel<T>>,
}

/// `x ln(x / y)` with `0 ln(0/y) = 0` and `x ln(x/0) = +inf` for `x > 0`.
fn xlogx_over_y<T: Real>(x: T, y: T) -> T {
    if x == T::zero() {
        T::zero()
    } else if y == T::zero() {
        T::infinity()
    } else {
        x * (x / y).ln()
    }
}

/// Divergence of Bernoulli(`p`) from Bernoulli(`q`), in nats.
pub fn bernoulli_kld<T: Real>(p: T, q: T) -> T {
    if p == q {
        return T::zero();
    }
    let one = T::one();
    xlogx_over_y(p, q) + xlogx_over_y(one - p, one - q)
}

/// `D_k` for one level. Exactly zero for a blind channel; `+inf` when the H1
/// distribution puts no mass on an outcome the H0 distribution can produce.
pub fn level_kld<T: Real>(channel: &LevelChannel<T>) -> T {
    if channel.is_blind() {
        return T::zero();
    }
    bernoulli_kld(channel.pi10, channel.pi11)
}

fn check_points<T>(expected: usize, points: &[OperatingPoint<T>]) -> Result<()> {
    if points.len() != expected {
        return Err(Error::ShapeMismatch {
            what: "operating points",
            expected,
            found: points.len(),
        });
    }
    Ok(())
}

fn check_weights(expected: usize, node_counts: &[u64]) -> Result<()> {
    if node_counts.len() != expected {
        return Err(Error::ShapeMismatch {
            what: "node counts",
            expected,
            found: node_counts.len(),
        });
    }
    Ok(())
}

/// `D = Σ_k N_k D_k` from per-level fractions `α_k` and node counts `N_k`.
pub fn total_kld_from_fractions<T: Real>(
    node_counts: &[u64],
    alphas: &[T],
    strategy: &FlipStrategy<T>,
    points: &[OperatingPoint<T>],
) -> Result<KldReport<T>> {
    check_weights(alphas.len(), node_counts)?;
    check_points(alphas.len(), points)?;
    let mut per_level = Vec::with_capacity(alphas.len());
    let mut channels = Vec::with_capacity(alphas.len());
    let mut total = T::zero();
    for k in 1..=alphas.len() {
        let ch = level_channel(alphas, strategy, &points[k - 1], k)?;
        let d = level_kld(&ch);
        total = total + lit::<T>(node_counts[k - 1] as f64) * d;
        per_level.push(d);
        channels.push(ch);
    }
    Ok(KldReport {
        per_level,
        total,
        channels,
    })
}

/// Network divergence for a configuration on a concrete tree.
pub fn total_kld<T: Real>(
    topology: &TreeTopology,
    config: &AttackConfig,
    strategy: &FlipStrategy<T>,
    points: &[OperatingPoint<T>],
) -> Result<KldReport<T>> {
    let alphas = config.fractions::<T>(topology)?;
    total_kld_from_fractions(topology.node_counts(), &alphas, strategy, points)
}

/// Divergence-minimizing flip strategy given cumulative coverage `t_k`.
///
/// Below one half the strategy is `(1, 1)`. From the first level whose
/// coverage reaches one half, the strategy solves
/// `Σ_j α_j (p10_j + p01_j) = 1` with a symmetric split at that level and no
/// flipping deeper down.
pub fn optimal_attack_strategy<T: Scalar>(coverage: &[T]) -> Result<FlipStrategy<T>> {
    let zero = T::zero();
    let one = T::one();
    let half = T::from_ratio(1, 2);
    let mut prev = zero.clone();
    for (i, t) in coverage.iter().enumerate() {
        if *t < zero || *t > one {
            return Err(Error::CoverageOutOfRange {
                index: i,
                value: t.to_f64_lossy(),
            });
        }
        if *t < prev {
            return Err(Error::CoverageDecreasing { index: i });
        }
        prev = t.clone();
    }
    let mut levels = Vec::with_capacity(coverage.len());
    let mut before = zero.clone();
    let mut blinded = false;
    for t in coverage {
        if blinded {
            levels.push(FlipPair::honest());
        } else if *t < half {
            levels.push(FlipPair::always_flip());
        } else {
            // α_k > 0 because t_{k-1} < 1/2 <= t_k.
            let alpha = t.clone() - before.clone();
            let two = one.clone() + one.clone();
            let p = (one.clone() - two.clone() * before.clone()) / (two * alpha);
            levels.push(FlipPair::new(p.clone(), p));
            blinded = true;
        }
        before = t.clone();
    }
    FlipStrategy::new(levels)
}

/// `D_k^*(t)`: the smallest per-level divergence an attacker achieves at
/// cumulative coverage `t`; zero from one half on.
pub fn min_level_kld<T: Real>(point: &OperatingPoint<T>, coverage: T) -> T {
    if coverage >= lit(0.5) {
        return T::zero();
    }
    level_kld(&channel_from_betas(coverage, coverage, point))
}

/// Network divergence under the attacker's optimal strategy, with blinded
/// levels contributing zero.
pub fn min_total_kld<T: Real>(
    topology: &TreeTopology,
    config: &AttackConfig,
    points: &[OperatingPoint<T>],
) -> Result<T> {
    check_points(topology.depth(), points)?;
    let coverage = config.coverage::<T>(topology)?;
    Ok(coverage
        .iter()
        .zip(points)
        .zip(topology.node_counts())
        .fold(T::zero(), |acc, ((&t, p), &n)| {
            acc + lit::<T>(n as f64) * min_level_kld(p, t)
        }))
}

/// One cell of the flip-probability surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint<T> {
    pub p10: T,
    pub p01: T,
    pub kld: T,
}

fn grid_values<T: Real>(resolution: usize) -> Result<Vec<T>> {
    if resolution < 2 {
        return Err(Error::GridTooCoarse(resolution));
    }
    let last = (resolution - 1) as u64;
    Ok((0..resolution as u64).map(|i| cast(&f64::from_ratio(i, last))).collect())
}

/// Divergence over the `resolution × resolution` grid of `(p10, p01)` on
/// `[0, 1]²`, applying the same pair at every level. Row-major in `p10`.
pub fn kld_surface<T: Real>(
    node_counts: &[u64],
    alphas: &[T],
    points: &[OperatingPoint<T>],
    resolution: usize,
) -> Result<Vec<SurfacePoint<T>>> {
    check_weights(alphas.len(), node_counts)?;
    check_points(alphas.len(), points)?;
    let grid = grid_values::<T>(resolution)?;
    let depth = alphas.len();
    let rows: Result<Vec<Vec<SurfacePoint<T>>>> = grid
        .par_iter()
        .map(|&p10| {
            grid.iter()
                .map(|&p01| {
                    let strategy = FlipStrategy::uniform(depth, FlipPair::new(p10, p01));
                    let report = total_kld_from_fractions(node_counts, alphas, &strategy, points)?;
                    Ok(SurfacePoint {
                        p10,
                        p01,
                        kld: report.total,
                    })
                })
                .collect()
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Exhaustive grid minimum of the divergence over a level-uniform flip pair.
/// Exact ties go to the larger `p10`, then the larger `p01`.
pub fn grid_min_kld<T: Real>(
    node_counts: &[u64],
    alphas: &[T],
    points: &[OperatingPoint<T>],
    resolution: usize,
) -> Result<SurfacePoint<T>> {
    let surface = kld_surface(node_counts, alphas, points, resolution)?;
    let mut best = surface[0];
    for cell in surface.into_iter().skip(1) {
        if cell.kld <= best.kld {
            best = cell;
        }
    }
    Ok(best)
}

/// `(t, D_k^*(t))` for each coverage in `[0, 0.5)`.
pub fn kld_vs_coverage<T: Real>(point: &OperatingPoint<T>, coverage_grid: &[T]) -> Result<Vec<(T, T)>> {
    coverage_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if !(t >= T::zero() && t < lit(0.5)) {
                return Err(Error::CoverageOutOfRange {
                    index: i,
                    value: t.to_f64().unwrap_or(f64::NAN),
                });
            }
            Ok((t, min_level_kld(point, t)))
        })
        .collect()
}

/// Finite-difference estimate of `∂D/∂x_k` where `x_k = P_d^k − P_fa^k` and
/// `P_fa^k` is held fixed. Central when both neighbours stay inside
/// `0 <= x_k <= 1 − P_fa^k`, one-sided at a boundary.
pub fn kld_partial_wrt_separation<T: Real>(
    node_counts: &[u64],
    alphas: &[T],
    strategy: &FlipStrategy<T>,
    points: &[OperatingPoint<T>],
    level: usize,
    step: T,
) -> Result<T> {
    check_points(alphas.len(), points)?;
    if level == 0 || level > alphas.len() {
        return Err(Error::LevelOutOfRange {
            level,
            depth: alphas.len(),
        });
    }
    let base = points[level - 1];
    let y = base.p_false_alarm;
    let x = base.p_detect - y;
    let upper = T::one() - y;
    let step_err = || Error::StepTooLarge {
        step: step.to_f64().unwrap_or(f64::NAN),
    };
    if !(step > T::zero()) {
        return Err(step_err());
    }
    let eval = |sep: T| -> Result<T> {
        let mut shifted = points.to_vec();
        shifted[level - 1] = OperatingPoint {
            p_detect: y + sep,
            p_false_alarm: y,
        };
        Ok(total_kld_from_fractions(node_counts, alphas, strategy, &shifted)?.total)
    };
    let fits_up = x + step <= upper;
    let fits_down = x - step >= T::zero();
    match (fits_down, fits_up) {
        (true, true) => Ok((eval(x + step)? - eval(x - step)?) / (step + step)),
        (false, true) => Ok((eval(x + step)? - eval(x)?) / step),
        (true, false) => Ok((eval(x)? - eval(x - step)?) / step),
        (false, false) => Err(step_err()),
    }
}

/// Log-likelihood weights `(a1, a0)` the fusion center applies to ones and
/// zeros from a level: `a1 = ln(π11/π10)`, `a0 = ln((1 − π11)/(1 − π10))`.
/// A blind level gets `(0, 0)`; a degenerate channel yields infinite weights.
pub fn fusion_weights<T: Real>(channel: &LevelChannel<T>) -> (T, T) {
    if channel.is_blind() {
        return (T::zero(), T::zero());
    }
    let one = T::one();
    let a1 = (channel.pi11 / channel.pi10).ln();
    let a0 = ((one - channel.pi11) / (one - channel.pi10)).ln();
    (a1, a0)
}

/// Unit-variance Gaussian shift model: `y ~ N(0, 1)` under H0 and
/// `y ~ N(amplitude, 1)` under H1, tested against likelihood-ratio
/// threshold `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSensorModel<T> {
    pub amplitude: T,
    pub threshold: T,
}

impl<T: Real> GaussianSensorModel<T> {
    /// Observation-domain cut equivalent to the likelihood-ratio threshold:
    /// decide one when `y > ln(λ)/A + A/2`.
    pub fn observation_cut(&self) -> T {
        self.threshold.ln() / self.amplitude + self.amplitude / lit(2.0)
    }

    /// Likelihood-ratio threshold whose false-alarm probability is `p_fa`.
    pub fn threshold_for_false_alarm(amplitude: T, p_fa: T) -> T {
        let cut: T = lit(q_inverse(cast(&p_fa)));
        (amplitude * cut - amplitude * amplitude / lit(2.0)).exp()
    }
}

/// Operating point of the likelihood-ratio test in the Gaussian shift model.
pub fn gaussian_roc_point<T: Real>(model: &GaussianSensorModel<T>) -> Result<OperatingPoint<T>> {
    if !(model.amplitude > T::zero()) {
        return Err(Error::NonPositiveAmplitude(cast(&model.amplitude)));
    }
    if !(model.threshold > T::zero()) {
        return Err(Error::NonPositiveThreshold(cast(&model.threshold)));
    }
    let cut: f64 = cast(&model.observation_cut());
    let a: f64 = cast(&model.amplitude);
    Ok(OperatingPoint {
        p_detect: lit(q_function(cut - a)),
        p_false_alarm: lit(q_function(cut)),
    })
}

/// ROC points for a sweep of likelihood-ratio thresholds.
pub fn roc_sweep<T: Real>(amplitude: T, thresholds: &[T]) -> Result<Vec<OperatingPoint<T>>> {
    thresholds
        .iter()
        .map(|&threshold| gaussian_roc_point(&GaussianSensorModel { amplitude, threshold }))
        .collect()
}

/// Best member of a family of deterministic tests at false-alarm level
/// `p_fa`: decide one when `y > c_hi` or `y < c_lo`, with a fraction `θ` of
/// the false-alarm mass in the upper tail. `θ = 1` is the likelihood-ratio
/// test. Returns the maximizing `θ` and its operating point; ties go to the
/// larger `θ`.
pub fn best_split_test_at_false_alarm<T: Real>(amplitude: T, p_fa: T, sweep: usize) -> Result<(T, OperatingPoint<T>)> {
    if !(amplitude > T::zero()) {
        return Err(Error::NonPositiveAmplitude(cast(&amplitude)));
    }
    if sweep < 2 {
        return Err(Error::GridTooCoarse(sweep));
    }
    let a: f64 = cast(&amplitude);
    let y: f64 = cast(&p_fa);
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..sweep {
        let theta = i as f64 / (sweep - 1) as f64;
        let hi = q_inverse(theta * y);
        let lo = -q_inverse((1.0 - theta) * y);
        let pd = q_function(hi - a) + q_function(a - lo);
        if pd >= best.1 {
            best = (theta, pd);
        }
    }
    Ok((
        lit(best.0),
        OperatingPoint {
            p_detect: lit(best.1),
            p_false_alarm: p_fa,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn ch(pi10: f64, pi11: f64) -> LevelChannel<f64> {
        LevelChannel {
            pi10,
            pi11,
            beta10: f64::NAN,
            beta01: f64::NAN,
        }
    }

    #[test]
    fn level_kld_examples() {
        let d = level_kld(&ch(0.2, 0.8));
        assert!((d - 0.6 * 4f64.ln()).abs() < 1e-15);
        assert!((d - 0.831_777).abs() < 1e-6);
        assert_eq!(level_kld(&ch(0.5, 0.5)), 0.0);
        let d = level_kld(&ch(0.44, 0.56));
        assert!((d - 0.12 * (0.56f64 / 0.44).ln()).abs() < 1e-15);
        assert!((d - 0.028_939_4).abs() < 1e-7);
    }

    #[test]
    fn level_kld_boundaries() {
        assert_eq!(level_kld(&ch(0.3, 0.0)), f64::INFINITY);
        assert_eq!(level_kld(&ch(0.3, 1.0)), f64::INFINITY);
        assert!((level_kld(&ch(0.0, 0.5)) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(level_kld(&ch(1.0, 1.0)), 0.0);
    }

    #[test]
    fn total_kld_unattacked_tree() {
        let t = TreeTopology::new(&[2, 3, 2]).unwrap();
        let op = OperatingPoint::new(0.8, 0.2).unwrap();
        let r = total_kld(&t, &AttackConfig::honest(3), &FlipStrategy::always_flip(3), &[op; 3]).unwrap();
        assert!((r.total - 20.0 * 0.6 * 4f64.ln()).abs() < 1e-12);
        assert!((r.total - 16.6355).abs() < 1e-4);
    }

    #[test]
    fn total_kld_blinded_is_zero() {
        let t = TreeTopology::new(&[6, 2]).unwrap();
        let op = OperatingPoint::new(0.9, 0.1).unwrap();
        let r = total_kld(&t, &AttackConfig::new(vec![3, 0]), &FlipStrategy::always_flip(2), &[op; 2]).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn optimal_strategy_examples() {
        let s = optimal_attack_strategy(&[0.4]).unwrap();
        assert_eq!(s.levels(), &[FlipPair::always_flip()]);
        let s = optimal_attack_strategy(&[0.25, 0.45]).unwrap();
        assert_eq!(s.levels(), &[FlipPair::always_flip(), FlipPair::always_flip()]);

        let half = Rational64::new(1, 2);
        let s = optimal_attack_strategy(&[half]).unwrap();
        assert_eq!(s.levels(), &[FlipPair::always_flip()]);
        assert!(crate::attack::is_blinding(&[half], &s).unwrap());
    }

    #[test]
    fn optimal_strategy_odd_level_one() {
        // N_1 = 5, B_1 = 3: α_1 = 3/5, flips scaled to 5/6 each.
        let t = vec![Rational64::new(3, 5), Rational64::new(3, 5)];
        let s = optimal_attack_strategy(&t).unwrap();
        assert_eq!(s.level(1).p10, Rational64::new(5, 6));
        let alphas = vec![Rational64::new(3, 5), Rational64::new(0, 1)];
        assert!(crate::attack::is_blinding(&alphas, &s).unwrap());
    }

    #[test]
    fn optimal_strategy_rejects_bad_coverage() {
        assert!(matches!(optimal_attack_strategy(&[0.3, 0.2]), Err(Error::CoverageDecreasing { index: 1 })));
        assert!(matches!(optimal_attack_strategy(&[1.2]), Err(Error::CoverageOutOfRange { .. })));
    }

    #[test]
    fn grid_min_examples() {
        let op = [OperatingPoint::new(0.8, 0.2).unwrap()];
        let best = grid_min_kld(&[1], &[0.4], &op, 51).unwrap();
        assert_eq!((best.p10, best.p01), (1.0, 1.0));
        assert!((best.kld - 0.12 * (0.56f64 / 0.44).ln()).abs() < 1e-9);

        let best = grid_min_kld(&[1], &[0.0], &op, 11).unwrap();
        assert_eq!((best.p10, best.p01), (1.0, 1.0));
        assert!((best.kld - 0.6 * 4f64.ln()).abs() < 1e-12);

        let best = grid_min_kld(&[1], &[0.5], &op, 3).unwrap();
        assert_eq!((best.p10, best.p01, best.kld), (1.0, 1.0, 0.0));

        assert!(matches!(grid_min_kld(&[1], &[0.4], &op, 1), Err(Error::GridTooCoarse(1))));
    }

    #[test]
    fn surface_corners() {
        let op = [OperatingPoint::new(0.8, 0.2).unwrap()];
        let s = kld_surface(&[1], &[0.4], &op, 2).unwrap();
        let corners: Vec<(f64, f64)> = s.iter().map(|c| (c.p10, c.p01)).collect();
        assert_eq!(corners, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn coverage_curve_examples() {
        let op = OperatingPoint::new(0.8f64, 0.2).unwrap();
        let c = kld_vs_coverage(&op, &[0.0, 0.4, 0.499_999]).unwrap();
        assert!((c[0].1 - 0.831_777).abs() < 1e-6);
        assert!((c[1].1 - 0.028_939_4).abs() < 1e-7);
        assert!(c[2].1 < 1e-10);
        assert!(kld_vs_coverage(&op, &[0.5]).is_err());
        assert!(kld_vs_coverage(&op, &[-0.1]).is_err());
    }

    #[test]
    fn partial_derivative_cases() {
        let op = [OperatingPoint::new(0.8, 0.2).unwrap()];
        let s = FlipStrategy::always_flip(1);
        let d = kld_partial_wrt_separation(&[1], &[0.4], &s, &op, 1, 1e-4).unwrap();
        assert!(d > 0.0);
        let d = kld_partial_wrt_separation(&[1], &[0.5], &s, &op, 1, 1e-4).unwrap();
        assert_eq!(d, 0.0);
        let flat = [OperatingPoint {
            p_detect: 0.3,
            p_false_alarm: 0.3,
        }];
        let d = kld_partial_wrt_separation(&[1], &[0.2], &s, &flat, 1, 1e-4).unwrap();
        assert!(d > 0.0);
        let top = [OperatingPoint {
            p_detect: 1.0,
            p_false_alarm: 0.0,
        }];
        assert!(matches!(
            kld_partial_wrt_separation(&[1], &[0.2], &s, &top, 1, 2.0),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn weights_examples() {
        let (a1, a0) = fusion_weights(&ch(0.2, 0.8));
        assert!((a1 - 4f64.ln()).abs() < 1e-15 && (a0 + 4f64.ln()).abs() < 1e-15);
        assert_eq!(fusion_weights(&ch(0.5, 0.5)), (0.0, 0.0));
        let (a1, a0) = fusion_weights(&ch(0.44, 0.56));
        assert!((a1 - 0.241_162).abs() < 1e-6 && (a0 + 0.241_162).abs() < 1e-6);
    }

    #[test]
    fn gaussian_examples() {
        let p = gaussian_roc_point(&GaussianSensorModel {
            amplitude: 2.0,
            threshold: 1.0,
        })
        .unwrap();
        assert!((p.p_false_alarm - q_function(1.0)).abs() < 1e-15);
        assert!((p.p_detect - q_function(-1.0)).abs() < 1e-15);

        let far = gaussian_roc_point(&GaussianSensorModel {
            amplitude: 2.0,
            threshold: 1e300,
        })
        .unwrap();
        assert!(far.p_detect < 1e-12 && far.p_false_alarm < 1e-12);
        let near = gaussian_roc_point(&GaussianSensorModel {
            amplitude: 2.0,
            threshold: 1e-300,
        })
        .unwrap();
        assert!(near.p_detect > 1.0 - 1e-12 && near.p_false_alarm > 1.0 - 1e-12);

        assert!(gaussian_roc_point(&GaussianSensorModel {
            amplitude: 2.0,
            threshold: 0.0
        })
        .is_err());
    }

    #[test]
    fn roc_sweep_is_monotone() {
        let lambdas: Vec<f64> = (1..40).map(|i| 0.1 * i as f64).collect();
        let roc = roc_sweep(1.5, &lambdas).unwrap();
        for w in roc.windows(2) {
            assert!(w[1].p_false_alarm < w[0].p_false_alarm);
            assert!(w[1].p_detect < w[0].p_detect);
        }
        assert!(roc.iter().all(|p| p.p_detect > p.p_false_alarm));
    }

    #[test]
    fn works_in_single_precision() {
        let c = LevelChannel::<f32> {
            pi10: 0.44,
            pi11: 0.56,
            beta10: 0.4,
            beta01: 0.4,
        };
        assert!((level_kld(&c) - 0.028_939_4).abs() < 1e-5);
    }
}
