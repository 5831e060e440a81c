//! Anchor-based Byzantine identification.
//!
//! The fusion center compares every node's reported decisions with those of
//! a trusted anchor node over a window of `T` time steps. A node whose
//! Hamming distance from the anchor exceeds its level threshold `η_k` is
//! declared Byzantine; testing proceeds top-down, and the subtree of a
//! declared node is not tested.
//!
//! Distances are integers, so the exact binomial expressions and the
//! simulator compare against `⌊η_k⌋`. The normal approximation keeps the real
//! threshold.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{FlipPair, FlipStrategy, OperatingPoint};
use crate::error::{Error, Result};
use crate::mc::{check_trials, run_batches, Proportion};
use crate::normal::{q_function, q_inverse};
use crate::scalar::{cast, lit, Real};
use crate::topology::{AttackPlacement, TreeTopology};

/// How the true hypothesis evolves inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisMode {
    /// One hypothesis for the whole window.
    #[default]
    PerWindow,
    /// A fresh hypothesis at every time step.
    PerStep,
}

/// Parameters of the identification scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationParams<T> {
    pub anchor: OperatingPoint<T>,
    /// `P_0`; `P_1 = 1 − P_0`.
    pub prior_h0: T,
    /// Window length `T`.
    pub window: u64,
    /// Honest false-isolation caps `δ_1..δ_K`.
    pub deltas: Vec<T>,
    /// Node operating points per level.
    pub points: Vec<OperatingPoint<T>>,
    /// Flipping applied by every Byzantine.
    pub byzantine_flip: FlipPair<T>,
    pub mode: HypothesisMode,
}

impl<T: Real> IdentificationParams<T> {
    /// Always-flip Byzantines, one hypothesis per window. Fails when a cap is
    /// outside `(0, 0.5)`, the prior is not a probability, or some level does
    /// not separate honest from Byzantine disagreement.
    pub fn new(
        anchor: OperatingPoint<T>,
        prior_h0: T,
        window: u64,
        deltas: Vec<T>,
        points: Vec<OperatingPoint<T>>,
    ) -> Result<Self> {
        let params = Self {
            anchor,
            prior_h0,
            window,
            deltas,
            points,
            byzantine_flip: FlipPair::always_flip(),
            mode: HypothesisMode::PerWindow,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_flip(mut self, flip: FlipPair<T>) -> Result<Self> {
        self.byzantine_flip = flip;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: HypothesisMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_window(mut self, window: u64) -> Self {
        self.window = window;
        self
    }

    pub fn depth(&self) -> usize {
        self.points.len()
    }

    /// Checks every invariant, the separation condition included.
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_h0 >= T::zero() && self.prior_h0 <= T::one()) {
            return Err(Error::InvalidPrior(cast(&self.prior_h0)));
        }
        if self.points.is_empty() {
            return Err(Error::EmptyTopology);
        }
        if self.deltas.len() != self.points.len() {
            return Err(Error::ShapeMismatch {
                what: "false-isolation caps",
                expected: self.points.len(),
                found: self.deltas.len(),
            });
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            if !(d > T::zero() && d < lit(0.5)) {
                return Err(Error::InvalidDeltaCap {
                    level: i + 1,
                    value: cast(&d),
                });
            }
        }
        FlipStrategy::new(vec![self.byzantine_flip])?;
        for level in 1..=self.depth() {
            check_separation(self, level)?;
        }
        Ok(())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.depth() {
            return Err(Error::LevelOutOfRange {
                level,
                depth: self.depth(),
            });
        }
        Ok(())
    }

    fn weights(&self) -> [f64; 2] {
        let p0: f64 = cast(&self.prior_h0);
        [p0, 1.0 - p0]
    }
}

/// Probability two independent reports disagree when one is `1` with
/// probability `a` and the other with probability `r`.
fn disagreement<T: Real>(a: T, r: T) -> T {
    let one = T::one();
    a * (one - r) + (one - a) * r
}

/// `P_diff^{AH}(k, l)`: an honest node at `level` disagrees with the anchor
/// under hypothesis `hypothesis`.
pub fn p_diff_honest<T: Real>(params: &IdentificationParams<T>, level: usize, hypothesis: bool) -> Result<T> {
    params.check_level(level)?;
    let q = params.points[level - 1].one_rate(hypothesis);
    Ok(disagreement(params.anchor.one_rate(hypothesis), q))
}

/// `P_diff^{AB}(k, l)`: a Byzantine at `level` disagrees with the anchor.
pub fn p_diff_byzantine<T: Real>(params: &IdentificationParams<T>, level: usize, hypothesis: bool) -> Result<T> {
    params.check_level(level)?;
    let q = params.points[level - 1].one_rate(hypothesis);
    Ok(disagreement(params.anchor.one_rate(hypothesis), params.byzantine_flip.send_one(q)))
}

fn check_separation<T: Real>(params: &IdentificationParams<T>, level: usize) -> Result<()> {
    let h0 = p_diff_honest(params, level, false)?;
    let h1 = p_diff_honest(params, level, true)?;
    let b0 = p_diff_byzantine(params, level, false)?;
    let b1 = p_diff_byzantine(params, level, true)?;
    let honest = h0.max(h1);
    let byzantine = b0.min(b1);
    if honest < byzantine {
        Ok(())
    } else {
        Err(Error::SeparationViolated {
            level,
            honest: cast(&honest),
            byzantine: cast(&byzantine),
        })
    }
}

/// `η_k = max_l [Q^{-1}(δ_k) sqrt(T p (1 − p)) + T p]` with
/// `p = P_diff^{AH}(k, l)`.
pub fn compute_threshold<T: Real>(params: &IdentificationParams<T>, level: usize) -> Result<T> {
    params.check_level(level)?;
    let z = q_inverse(cast(&params.deltas[level - 1]));
    let t = params.window as f64;
    let mut eta = f64::NEG_INFINITY;
    for h in [false, true] {
        let p: f64 = cast(&p_diff_honest(params, level, h)?);
        eta = eta.max(z * (t * p * (1.0 - p)).sqrt() + t * p);
    }
    Ok(lit(eta))
}

/// Thresholds for every level.
pub fn thresholds<T: Real>(params: &IdentificationParams<T>) -> Result<Vec<T>> {
    (1..=params.depth()).map(|k| compute_threshold(params, k)).collect()
}

fn ln_binomial_pmf(n: u64, p: f64, x: u64) -> f64 {
    let ln_choose = libm::lgamma(n as f64 + 1.0) - libm::lgamma(x as f64 + 1.0) - libm::lgamma((n - x) as f64 + 1.0);
    let a = if x == 0 { 0.0 } else { x as f64 * p.ln() };
    let b = if x == n { 0.0 } else { (n - x) as f64 * (1.0 - p).ln() };
    ln_choose + a + b
}

fn binomial_sum(n: u64, p: f64, range: std::ops::RangeInclusive<u64>) -> f64 {
    range.map(|x| ln_binomial_pmf(n, p, x).exp()).sum::<f64>().min(1.0)
}

/// `P(X ≤ h)` for `X ~ Binomial(n, p)`, summed in log space.
pub fn binomial_head(n: u64, p: f64, h: i64) -> f64 {
    if h < 0 {
        0.0
    } else if h as u64 >= n {
        1.0
    } else {
        binomial_sum(n, p, 0..=h as u64)
    }
}

/// `P(X > h)` for `X ~ Binomial(n, p)`, summed in log space.
pub fn binomial_tail(n: u64, p: f64, h: i64) -> f64 {
    if h < 0 {
        1.0
    } else if h as u64 >= n {
        0.0
    } else {
        binomial_sum(n, p, h as u64 + 1..=n)
    }
}

fn floor_threshold(eta: f64) -> i64 {
    if eta >= i64::MAX as f64 {
        i64::MAX
    } else {
        eta.floor() as i64
    }
}

/// Disagreement probabilities `(honest, Byzantine)` at `level` for each
/// scenario the isolation sum runs over, with scenario weights. Per-window
/// mode conditions on each hypothesis; per-step mode uses the prior mixture.
fn scenarios<T: Real>(params: &IdentificationParams<T>, level: usize) -> Result<Vec<(f64, f64, f64)>> {
    let w = params.weights();
    let mut per_h = Vec::with_capacity(2);
    for (i, h) in [false, true].into_iter().enumerate() {
        let ph: f64 = cast(&p_diff_honest(params, level, h)?);
        let pb: f64 = cast(&p_diff_byzantine(params, level, h)?);
        per_h.push((w[i], ph, pb));
    }
    Ok(match params.mode {
        HypothesisMode::PerWindow => per_h,
        HypothesisMode::PerStep => {
            let ph = per_h.iter().map(|s| s.0 * s.1).sum();
            let pb = per_h.iter().map(|s| s.0 * s.2).sum();
            vec![(1.0, ph, pb)]
        }
    })
}

fn check_thresholds<T>(thresholds: &[T], level: usize) -> Result<()> {
    if thresholds.len() < level {
        return Err(Error::ShapeMismatch {
            what: "thresholds",
            expected: level,
            found: thresholds.len(),
        });
    }
    Ok(())
}

/// Exact isolation probability of a node at `level` whose ancestors are
/// honest: its distance exceeds `⌊η_k⌋` while every ancestor's stays at or
/// below `⌊η_m⌋`. `byzantine` selects the node's disagreement rate.
fn isolation_exact<T: Real>(params: &IdentificationParams<T>, thresholds: &[T], level: usize, byzantine: bool) -> Result<T> {
    params.check_level(level)?;
    check_thresholds(thresholds, level)?;
    let n = params.window;
    let mut ancestor_pass = [1.0; 2];
    for m in 1..level {
        let h = floor_threshold(cast(&thresholds[m - 1]));
        for (i, s) in scenarios(params, m)?.into_iter().enumerate() {
            ancestor_pass[i] *= binomial_head(n, s.1, h);
        }
    }
    let h = floor_threshold(cast(&thresholds[level - 1]));
    let total = scenarios(params, level)?
        .into_iter()
        .enumerate()
        .map(|(i, (w, ph, pb))| w * binomial_tail(n, if byzantine { pb } else { ph }, h) * ancestor_pass[i])
        .sum::<f64>();
    Ok(lit(total))
}

/// Exact `P_B^iso(k)` from binomial sums.
pub fn p_iso_exact<T: Real>(params: &IdentificationParams<T>, thresholds: &[T], level: usize) -> Result<T> {
    isolation_exact(params, thresholds, level, true)
}

/// Exact probability that an honest node at `level` with honest ancestors is
/// declared Byzantine.
pub fn honest_isolation_exact<T: Real>(params: &IdentificationParams<T>, thresholds: &[T], level: usize) -> Result<T> {
    isolation_exact(params, thresholds, level, false)
}

fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    (0..=n).map(|x| ln_binomial_pmf(n, p, x).exp()).collect()
}

/// Distribution of the distance from a stream that disagrees with the
/// anchor with probability `1 − r` at each of `ones` anchor-one steps and
/// `r` at each of the `n − ones` anchor-zero steps, where `r` is the rate at
/// which the node reports one.
fn conditional_distance_cdf(n: u64, ones: u64, r: f64) -> Vec<f64> {
    let x = binomial_pmf(ones, 1.0 - r);
    let y = binomial_pmf(n - ones, r);
    let mut pmf = vec![0.0; n as usize + 1];
    for (i, px) in x.iter().enumerate() {
        for (j, py) in y.iter().enumerate() {
            pmf[i + j] += px * py;
        }
    }
    let mut acc = 0.0;
    pmf.iter()
        .map(|p| {
            acc += p;
            acc.min(1.0)
        })
        .collect()
}

fn cdf_at(cdf: &[f64], h: i64) -> f64 {
    if h < 0 {
        0.0
    } else {
        cdf[(h as usize).min(cdf.len() - 1)]
    }
}

/// Isolation probability of a Byzantine at `level` when every distance is
/// measured against one shared anchor stream, as in the simulator. Exact
/// under one hypothesis per window: given the number of anchor ones, the
/// node streams are independent. Cost grows as `T³`.
pub fn p_iso_shared_anchor<T: Real>(params: &IdentificationParams<T>, thresholds: &[T], level: usize) -> Result<T> {
    params.check_level(level)?;
    check_thresholds(thresholds, level)?;
    if params.mode != HypothesisMode::PerWindow {
        return Err(Error::ApproximationDomain(
            "the shared-anchor expression conditions on one hypothesis per window".into(),
        ));
    }
    let n = params.window;
    let cuts: Vec<i64> = thresholds[..level].iter().map(|e| floor_threshold(cast(e))).collect();
    let mut total = 0.0;
    for (w, h) in params.weights().into_iter().zip([false, true]) {
        let anchor_ones = binomial_pmf(n, cast(&params.anchor.one_rate(h)));
        for (ones, pa) in anchor_ones.iter().enumerate() {
            let mut term = *pa;
            for m in 1..level {
                let r: f64 = cast(&params.points[m - 1].one_rate(h));
                term *= cdf_at(&conditional_distance_cdf(n, ones as u64, r), cuts[m - 1]);
            }
            let q = params.points[level - 1].one_rate(h);
            let r: f64 = cast(&params.byzantine_flip.send_one(q));
            term *= 1.0 - cdf_at(&conditional_distance_cdf(n, ones as u64, r), cuts[level - 1]);
            total += w * term;
        }
    }
    Ok(lit(total.clamp(0.0, 1.0)))
}

/// Gaussian approximation of `P(Binomial(T, p) > η)`.
fn upper_normal(window: u64, p: f64, eta: f64) -> f64 {
    let t = window as f64;
    let sd = (t * p * (1.0 - p)).sqrt();
    if sd == 0.0 {
        return if t * p > eta { 1.0 } else { 0.0 };
    }
    q_function((eta - t * p) / sd)
}

/// `a(k, l)` and `b(k, l)` for each scenario: the approximate probabilities
/// that a Byzantine, respectively honest, node at `level` exceeds `η_k`.
fn normal_terms<T: Real>(params: &IdentificationParams<T>, thresholds: &[T], level: usize) -> Result<Vec<(f64, f64, f64)>> {
    let eta: f64 = cast(&thresholds[level - 1]);
    Ok(scenarios(params, level)?
        .into_iter()
        .map(|(w, ph, pb)| (w, upper_normal(params.window, pb, eta), upper_normal(params.window, ph, eta)))
        .collect())
}

/// True when `T p (1 − p) ≥ 9` for every disagreement rate up to `level`.
pub fn in_normal_regime<T: Real>(params: &IdentificationParams<T>, level: usize) -> Result<bool> {
    let t = params.window as f64;
    for m in 1..=level {
        for (_, ph, pb) in scenarios(params, m)? {
            if t * ph * (1.0 - ph) < 9.0 || t * pb * (1.0 - pb) < 9.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Normal approximation in product form,
/// `Σ_l P_l a(k, l) Π_{m<k} (1 − b(m, l))`.
pub fn p_iso_normal<T: Real>(params: &IdentificationParams<T>, thresholds: &[T], level: usize) -> Result<T> {
    params.check_level(level)?;
    check_thresholds(thresholds, level)?;
    let mut pass = [1.0; 2];
    for m in 1..level {
        for (i, (_, _, b)) in normal_terms(params, thresholds, m)?.into_iter().enumerate() {
            pass[i] *= 1.0 - b;
        }
    }
    let total = normal_terms(params, thresholds, level)?
        .into_iter()
        .enumerate()
        .map(|(i, (w, a, _))| w * a * pass[i])
        .sum::<f64>();
    Ok(lit(total))
}

/// Normal approximation by the level recursion
/// `P(k + 1, l) = (1 − b(k, l)) a(k + 1, l) / a(k, l) · P(k, l)`, summed over
/// scenarios. Fails when some `a(k, l)` underflows to zero.
pub fn p_iso_recursive<T: Real>(params: &IdentificationParams<T>, thresholds: &[T], level: usize) -> Result<T> {
    params.check_level(level)?;
    check_thresholds(thresholds, level)?;
    if !in_normal_regime(params, level)? {
        warn!("window {} is outside the normal-approximation regime up to level {}", params.window, level);
    }
    let first = normal_terms(params, thresholds, 1)?;
    let weights: Vec<f64> = first.iter().map(|s| s.0).collect();
    let mut prob: Vec<f64> = first.iter().map(|s| s.1).collect();
    let mut prev = first;
    for k in 2..=level {
        let next = normal_terms(params, thresholds, k)?;
        for (i, p) in prob.iter_mut().enumerate() {
            let (_, a_prev, b_prev) = prev[i];
            if a_prev == 0.0 {
                return Err(Error::ApproximationDomain(format!(
                    "a({}, {}) underflows at window {}",
                    k - 1,
                    i,
                    params.window
                )));
            }
            *p *= (1.0 - b_prev) * next[i].1 / a_prev;
        }
        prev = next;
    }
    Ok(lit(weights.iter().zip(&prob).map(|(w, p)| w * p).sum::<f64>()))
}

/// `Π_{j=2}^{L−1} (1 − δ_j)` for a Byzantine at level `L`; one at levels 1
/// and 2.
pub fn asymptotic_lower_bound<T: Real>(deltas: &[T], level: usize) -> Result<T> {
    if level == 0 {
        return Err(Error::LevelOutOfRange {
            level,
            depth: deltas.len(),
        });
    }
    if level >= 3 && deltas.len() < level - 1 {
        return Err(Error::ShapeMismatch {
            what: "false-isolation caps",
            expected: level - 1,
            found: deltas.len(),
        });
    }
    Ok((2..level).fold(T::one(), |acc, j| acc * (T::one() - deltas[j - 1])))
}

/// Analytic and simulated isolation probabilities for one window length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationReport {
    pub window: u64,
    /// Real-valued `η_k`.
    pub thresholds: Vec<f64>,
    /// Exact `P_B^iso(k)`.
    pub exact: Vec<f64>,
    /// Normal-approximation `P_B^iso(k)`.
    pub normal: Vec<f64>,
    /// Exact honest false-isolation probability per level.
    pub honest_exact: Vec<f64>,
    /// Simulated Byzantine isolations per level (empty when not simulated).
    pub byzantine_mc: Vec<Proportion>,
    /// Simulated isolations of honest nodes with honest ancestors.
    pub honest_mc: Vec<Proportion>,
}

/// Analytic part of the report.
pub fn isolation_analytics<T: Real>(params: &IdentificationParams<T>) -> Result<IsolationReport> {
    params.validate()?;
    let eta = thresholds(params)?;
    let k = params.depth();
    let collect = |f: &dyn Fn(usize) -> Result<T>| -> Result<Vec<f64>> { (1..=k).map(|l| f(l).map(|v| cast(&v))).collect() };
    Ok(IsolationReport {
        window: params.window,
        thresholds: eta.iter().map(cast).collect(),
        exact: collect(&|l| p_iso_exact(params, &eta, l))?,
        normal: collect(&|l| p_iso_normal(params, &eta, l))?,
        honest_exact: collect(&|l| honest_isolation_exact(params, &eta, l))?,
        byzantine_mc: Vec::new(),
        honest_mc: Vec::new(),
    })
}

/// Flattened node data for the simulator.
struct SimNode {
    level: usize,
    parent: Option<usize>,
    /// Level of the Byzantine on the path to the fusion center.
    corrupted_by: Option<usize>,
}

fn flatten(topology: &TreeTopology, placement: &AttackPlacement) -> Vec<SimNode> {
    let map = placement.path_map(topology);
    let mut nodes = Vec::with_capacity(topology.total_nodes() as usize);
    let mut offset = 0usize;
    for (k, row) in map.iter().enumerate() {
        let prev_offset = offset - if k == 0 { 0 } else { map[k - 1].len() };
        let a = topology.degrees()[k] as usize;
        for (i, c) in row.iter().enumerate() {
            nodes.push(SimNode {
                level: k,
                parent: (k > 0).then(|| prev_offset + i / a),
                corrupted_by: c.map(|j| j as usize),
            });
        }
        offset += row.len();
    }
    nodes
}

fn flip(bit: bool, pair: (f64, f64), rng: &mut ChaCha8Rng) -> bool {
    let p = if bit { pair.1 } else { pair.0 };
    let flipped = if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    };
    bit ^ flipped
}

/// Monte Carlo run of the identification scheme on a placed tree. One anchor
/// stream is shared by all nodes. Byzantines flip their own and relayed
/// bits, so the descendants of a Byzantine report corrupted streams.
pub fn simulate_identification(
    topology: &TreeTopology,
    placement: &AttackPlacement,
    params: &IdentificationParams<f64>,
    trials: u64,
    seed: u64,
) -> Result<IsolationReport> {
    check_trials(trials)?;
    if params.depth() != topology.depth() {
        return Err(Error::ShapeMismatch {
            what: "identification levels",
            expected: topology.depth(),
            found: params.depth(),
        });
    }
    let placement = AttackPlacement::from_levels(topology, placement.levels().to_vec())?;
    let mut report = isolation_analytics(params)?;
    let nodes = flatten(topology, &placement);
    let cut: Vec<i64> = report.thresholds.iter().map(|&e| floor_threshold(e)).collect();
    let depth = topology.depth();
    let window = params.window;
    let p1 = 1.0 - params.prior_h0;
    let pair = (params.byzantine_flip.p10, params.byzantine_flip.p01);

    let batches = run_batches(trials, seed, |rng, len| {
        let mut byz = vec![Proportion::default(); depth];
        let mut honest = vec![Proportion::default(); depth];
        let mut dist = vec![0u64; nodes.len()];
        let mut passed = vec![false; nodes.len()];
        for _ in 0..len {
            dist.fill(0);
            let mut h = rng.random::<f64>() < p1;
            for _ in 0..window {
                if params.mode == HypothesisMode::PerStep {
                    h = rng.random::<f64>() < p1;
                }
                let anchor = rng.random::<f64>() < params.anchor.one_rate(h);
                for (idx, node) in nodes.iter().enumerate() {
                    let mut bit = rng.random::<f64>() < params.points[node.level].one_rate(h);
                    if node.corrupted_by.is_some() {
                        bit = flip(bit, pair, rng);
                    }
                    dist[idx] += u64::from(bit != anchor);
                }
            }
            for (idx, node) in nodes.iter().enumerate() {
                let tested = node.parent.is_none_or(|p| passed[p]);
                let flagged = tested && dist[idx] as i64 > cut[node.level];
                passed[idx] = tested && !flagged;
                let tally = match node.corrupted_by {
                    Some(j) if j == node.level + 1 => &mut byz[node.level],
                    None => &mut honest[node.level],
                    Some(_) => continue,
                };
                tally.add(Proportion {
                    successes: u64::from(flagged),
                    trials: 1,
                });
            }
        }
        (byz, honest)
    });
    report.byzantine_mc = vec![Proportion::default(); depth];
    report.honest_mc = vec![Proportion::default(); depth];
    for (byz, honest) in batches {
        for k in 0..depth {
            report.byzantine_mc[k].add(byz[k]);
            report.honest_mc[k].add(honest[k]);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_params(window: u64) -> IdentificationParams<f64> {
        let pts = [(0.8, 0.1), (0.75, 0.1), (0.6, 0.1), (0.65, 0.1), (0.6, 0.1)]
            .iter()
            .map(|&(d, f)| OperatingPoint::new(d, f).unwrap())
            .collect();
        IdentificationParams::new(OperatingPoint::new(0.9, 0.1).unwrap(), 0.5, window, vec![0.01; 5], pts).unwrap()
    }

    #[test]
    fn disagreement_examples() {
        let p = fig_params(25);
        assert!((p_diff_honest(&p, 1, false).unwrap() - 0.18).abs() < 1e-15);
        assert!((p_diff_honest(&p, 1, true).unwrap() - 0.26).abs() < 1e-15);
        assert!((p_diff_byzantine(&p, 1, false).unwrap() - 0.82).abs() < 1e-15);
        assert!((p_diff_byzantine(&p, 1, true).unwrap() - 0.74).abs() < 1e-15);
    }

    #[test]
    fn perfect_nodes() {
        let perfect = OperatingPoint::new(1.0, 0.0).unwrap();
        let p = IdentificationParams::new(perfect, 0.5, 10, vec![0.01], vec![perfect]).unwrap();
        for h in [false, true] {
            assert_eq!(p_diff_honest(&p, 1, h).unwrap(), 0.0);
            assert_eq!(p_diff_byzantine(&p, 1, h).unwrap(), 1.0);
        }
    }

    #[test]
    fn fair_coin_disagreement() {
        let anchor = OperatingPoint::new(0.9, 0.5).unwrap();
        let node = OperatingPoint::new(0.6, 0.5).unwrap();
        // Honest and Byzantine disagreement coincide under H0 here, so
        // separation fails; check the formula directly.
        assert_eq!(disagreement(anchor.one_rate(false), node.one_rate(false)), 0.5);
        let err = IdentificationParams::new(anchor, 0.5, 10, vec![0.01], vec![node]).unwrap_err();
        assert!(matches!(err, Error::SeparationViolated { level: 1, .. }));
    }

    #[test]
    fn threshold_examples() {
        let p = fig_params(25);
        let eta = compute_threshold(&p, 1).unwrap();
        let z = 2.326_347_874_040_840_8;
        let c0 = z * (25.0f64 * 0.18 * 0.82).sqrt() + 25.0 * 0.18;
        let c1 = z * (25.0f64 * 0.26 * 0.74).sqrt() + 25.0 * 0.26;
        assert!((c0 - 8.969).abs() < 1e-3 && (c1 - 11.602).abs() < 1e-3);
        assert!((eta - c1).abs() < 1e-9);

        let mut half = fig_params(25);
        half.deltas[0] = 0.499_999_999;
        assert!((compute_threshold(&half, 1).unwrap() - 6.5).abs() < 1e-6);

        let e4 = compute_threshold(&fig_params(100), 1).unwrap();
        let dev = |e: f64, t: f64| e - t * 0.26;
        assert!((dev(e4, 100.0) - 2.0 * dev(eta, 25.0)).abs() < 1e-9);
    }

    #[test]
    fn binomial_helpers() {
        assert!((binomial_tail(4, 0.5, 1) - 11.0 / 16.0).abs() < 1e-15);
        assert!((binomial_head(4, 0.5, 1) - 5.0 / 16.0).abs() < 1e-15);
        assert_eq!(binomial_tail(4, 0.5, 4), 0.0);
        assert_eq!(binomial_head(4, 0.5, -1), 0.0);
        assert_eq!(binomial_tail(0, 0.3, 0), 0.0);
        assert_eq!(binomial_tail(5, 1.0, 4), 1.0);
        assert!((binomial_tail(500, 0.26, 200) / 3.179_685_342_686_883_6e-12 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_window_isolates_nothing() {
        let p = fig_params(0);
        let eta = thresholds(&p).unwrap();
        assert!(eta.iter().all(|&e| e == 0.0));
        for k in 1..=5 {
            assert_eq!(p_iso_exact(&p, &eta, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn recursion_matches_product() {
        for window in [25, 100, 500] {
            let p = fig_params(window);
            let eta = thresholds(&p).unwrap();
            for k in 1..=5 {
                let a = p_iso_recursive(&p, &eta, k).unwrap();
                let b = p_iso_normal(&p, &eta, k).unwrap();
                assert!((a - b).abs() < 1e-12, "T={window} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bound_examples() {
        assert!((asymptotic_lower_bound(&[0.01f64; 5], 5).unwrap() - 0.970_299).abs() < 1e-12);
        assert_eq!(asymptotic_lower_bound(&[0.01f64; 5], 1).unwrap(), 1.0);
        assert_eq!(asymptotic_lower_bound(&[0.0f64; 5], 5).unwrap(), 1.0);
    }

    #[test]
    fn parameter_validation() {
        let mut p = fig_params(10);
        p.deltas[2] = 0.5;
        assert_eq!(p.validate(), Err(Error::InvalidDeltaCap { level: 3, value: 0.5 }));
        let mut p = fig_params(10);
        p.prior_h0 = 1.5;
        assert_eq!(p.validate(), Err(Error::InvalidPrior(1.5)));
    }

    #[test]
    fn per_step_mode_uses_mixture() {
        let p = fig_params(25).with_mode(HypothesisMode::PerStep);
        let eta = thresholds(&p).unwrap();
        let exact = p_iso_exact(&p, &eta, 1).unwrap();
        assert!((exact - binomial_tail(25, 0.78, 11)).abs() < 1e-12);
    }
}
