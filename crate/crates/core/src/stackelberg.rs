//! Defender/attacker resource-allocation game.
//!
//! The defender (leader) assigns one protection cost per level from a
//! descending resource set; the attacker (follower) buys Byzantines level by
//! level within its budget. The defender's payoff is the network divergence
//! under the attacker's optimal flipping strategy; the attacker's profit is
//! the divergence it removes, `P(S) = D(∅) − D(S)`.
//!
//! Costs and budgets are integers so that budget feasibility is exact.

use log::warn;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::attack::OperatingPoint;
use crate::divergence::min_level_kld;
use crate::error::{Error, Result};
use crate::scalar::{cast, Real};
use crate::topology::{AttackConfig, TreeTopology};

/// Default cap on the number of candidates an exhaustive oracle visits.
pub const DEFAULT_ENUMERATION_LIMIT: u128 = 1 << 24;

/// Descending set of available per-node protection costs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    costs: Vec<u64>,
}

impl CostModel {
    pub fn new(costs: Vec<u64>) -> Result<Self> {
        check_costs(&costs)?;
        Ok(Self { costs })
    }

    pub fn costs(&self) -> &[u64] {
        &self.costs
    }

    pub fn max_cost(&self) -> u64 {
        self.costs[0]
    }

    pub fn min_cost(&self) -> u64 {
        *self.costs.last().expect("non-empty")
    }
}

fn check_costs(costs: &[u64]) -> Result<()> {
    if costs.is_empty() {
        return Err(Error::EmptyCosts);
    }
    if costs.contains(&0) {
        return Err(Error::ZeroCost);
    }
    if let Some(i) = costs.windows(2).position(|w| w[0] < w[1]) {
        return Err(Error::UnsortedCosts { position: i + 1 });
    }
    Ok(())
}

/// Network (defender) and attacker budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub network: u64,
    pub attacker: u64,
}

/// Solved game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution<T> {
    /// `c̃_1..c̃_K`.
    pub allocated_costs: Vec<u64>,
    /// The attacker's response `B_1..B_K`.
    pub attack: AttackConfig,
    /// Defender payoff `D(S)`.
    pub payoff: T,
    /// `D(∅)`, the divergence with no Byzantines.
    pub baseline: T,
    /// `P(S) = D(∅) − D(S)`.
    pub profit: T,
    /// True when the response reaches coverage one half at some level.
    pub blinding: bool,
}

/// Result of the upper-level problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GameOutcome<T> {
    /// No cost allocation fits the network budget.
    Infeasible,
    Solved(GameSolution<T>),
}

impl<T> GameOutcome<T> {
    pub fn solution(&self) -> Option<&GameSolution<T>> {
        match self {
            GameOutcome::Infeasible => None,
            GameOutcome::Solved(s) => Some(s),
        }
    }
}

/// Outcome of comparing two attack sets by profit and cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dominance {
    Strict,
    Weak,
    None,
}

/// Whether set `a` dominates set `b`: strictly when it earns more at no
/// greater cost, weakly when it earns the same at no greater cost.
pub fn dominance<P: PartialOrd, C: PartialOrd>(profit_a: P, cost_a: C, profit_b: P, cost_b: C) -> Dominance {
    if cost_a > cost_b {
        return Dominance::None;
    }
    if profit_a > profit_b {
        Dominance::Strict
    } else if profit_a == profit_b {
        Dominance::Weak
    } else {
        Dominance::None
    }
}

/// `c_max ≤ (min_k N_{k+1}/N_k) · c_min`. Always true for a single-level tree.
pub fn check_cost_structure(costs: &[u64], topology: &TreeTopology) -> Result<bool> {
    check_costs(costs)?;
    let c_max = costs[0] as u128;
    let c_min = *costs.last().expect("non-empty") as u128;
    Ok(match topology.min_level_ratio() {
        None => true,
        Some(r) => c_max <= r as u128 * c_min,
    })
}

fn check_allocation(allocated: &[u64], topology: &TreeTopology) -> Result<()> {
    if allocated.is_empty() {
        return Err(Error::EmptyCosts);
    }
    if allocated.len() != topology.depth() {
        return Err(Error::ShapeMismatch {
            what: "allocated costs",
            expected: topology.depth(),
            found: allocated.len(),
        });
    }
    if allocated.contains(&0) {
        return Err(Error::ZeroCost);
    }
    Ok(())
}

fn check_points<T>(topology: &TreeTopology, points: &[OperatingPoint<T>]) -> Result<()> {
    if points.len() != topology.depth() {
        return Err(Error::ShapeMismatch {
            what: "operating points",
            expected: topology.depth(),
            found: points.len(),
        });
    }
    Ok(())
}

fn exact_coverage(topology: &TreeTopology, config: &AttackConfig) -> Result<Vec<Rational64>> {
    config.coverage::<Rational64>(topology)
}

fn reaches_half(coverage: &[Rational64]) -> bool {
    coverage.last().is_some_and(|t| *t >= Rational64::new(1, 2))
}

/// Defender payoff `D(S) = Σ_k N_k D_k^*(t_k)` under the attacker's optimal
/// flipping. Coverage is computed exactly, so configurations with equal
/// coverage produce bit-identical payoffs.
pub fn game_payoff<T: Real>(topology: &TreeTopology, config: &AttackConfig, points: &[OperatingPoint<T>]) -> Result<T> {
    check_points(topology, points)?;
    let coverage = exact_coverage(topology, config)?;
    let mut total = T::zero();
    for ((t, p), &n) in coverage.iter().zip(points).zip(topology.node_counts()) {
        let d = min_level_kld(p, cast::<T, _>(t));
        total = total + T::from_u64(n).expect("node count") * d;
    }
    Ok(total)
}

/// Attacker profit `D(∅) − D(S)`.
pub fn attacker_profit<T: Real>(topology: &TreeTopology, config: &AttackConfig, points: &[OperatingPoint<T>]) -> Result<T> {
    let base = game_payoff(topology, &AttackConfig::honest(topology.depth()), points)?;
    Ok(base - game_payoff(topology, config, points)?)
}

/// Total cost `Σ c̃_k B_k` of a configuration.
pub fn attack_cost(allocated: &[u64], config: &AttackConfig) -> u128 {
    allocated
        .iter()
        .zip(config.counts())
        .map(|(&c, &b)| c as u128 * b as u128)
        .sum()
}

/// Greedy attacker best response: buy as many Byzantines as possible at the
/// top level, capped at `N_k`, then cascade the remaining budget downwards.
///
/// Returns the configuration even when its coverage reaches one half; that
/// case is logged as a warning.
pub fn llp_greedy(allocated: &[u64], topology: &TreeTopology, attacker_budget: u64) -> Result<AttackConfig> {
    check_allocation(allocated, topology)?;
    let mut remaining = attacker_budget;
    let counts: Vec<u64> = allocated
        .iter()
        .zip(topology.node_counts())
        .map(|(&c, &n)| {
            let b = (remaining / c).min(n);
            remaining -= b * c;
            b
        })
        .collect();
    let config = AttackConfig::new(counts);
    if reaches_half(&exact_coverage(topology, &config)?) {
        warn!(
            "attacker response {:?} reaches the blinding region; deeper levels carry no information",
            config.counts()
        );
    }
    Ok(config)
}

fn enumeration_size(topology: &TreeTopology) -> u128 {
    topology
        .node_counts()
        .iter()
        .fold(1u128, |acc, &n| acc.saturating_mul(n as u128 + 1))
}

fn check_limit(size: u128, limit: u128) -> Result<()> {
    if size > limit {
        Err(Error::EnumerationLimit { size, limit })
    } else {
        Ok(())
    }
}

/// Every count vector with `0 ≤ B_k ≤ N_k`, lexicographically descending.
fn all_counts(topology: &TreeTopology) -> Vec<Vec<u64>> {
    let mut out: Vec<Vec<u64>> = vec![Vec::new()];
    for &n in topology.node_counts() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=n).rev().map(move |b| {
                    let mut v = prefix.clone();
                    v.push(b);
                    v
                })
            })
            .collect();
    }
    out
}

fn placeable(topology: &TreeTopology, config: &AttackConfig) -> Result<bool> {
    Ok(exact_coverage(topology, config)?
        .last()
        .is_some_and(|t| *t <= Rational64::new(1, 1)))
}

/// Exhaustive attacker best response: the budget-feasible, placeable
/// configuration minimizing the payoff. Ties go to the lexicographically
/// largest `(B_1, B_2, ...)`.
pub fn llp_bruteforce<T: Real>(
    allocated: &[u64],
    topology: &TreeTopology,
    points: &[OperatingPoint<T>],
    attacker_budget: u64,
    limit: u128,
) -> Result<AttackConfig> {
    check_allocation(allocated, topology)?;
    check_points(topology, points)?;
    check_limit(enumeration_size(topology), limit)?;
    let mut best: Option<(T, AttackConfig)> = None;
    // Candidates arrive in descending lexicographic order, so a strict
    // comparison keeps the largest among equal payoffs.
    for counts in all_counts(topology) {
        let config = AttackConfig::new(counts);
        if attack_cost(allocated, &config) > attacker_budget as u128 || !placeable(topology, &config)? {
            continue;
        }
        let d = game_payoff(topology, &config, points)?;
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, config));
        }
    }
    Ok(best.expect("the empty attack is always feasible").1)
}

/// One row of the exhaustive payoff table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRow<T> {
    pub attack: AttackConfig,
    /// Within the attacker budget.
    pub feasible: bool,
    pub payoff: T,
}

/// Payoff of every placeable configuration, flagged by budget feasibility,
/// in lexicographically descending order of counts.
pub fn payoff_table<T: Real>(
    allocated: &[u64],
    topology: &TreeTopology,
    points: &[OperatingPoint<T>],
    attacker_budget: u64,
    limit: u128,
) -> Result<Vec<PayoffRow<T>>> {
    check_allocation(allocated, topology)?;
    check_points(topology, points)?;
    check_limit(enumeration_size(topology), limit)?;
    let mut rows = Vec::new();
    for counts in all_counts(topology) {
        let config = AttackConfig::new(counts);
        if !placeable(topology, &config)? {
            continue;
        }
        rows.push(PayoffRow {
            feasible: attack_cost(allocated, &config) <= attacker_budget as u128,
            payoff: game_payoff(topology, &config, points)?,
            attack: config,
        });
    }
    Ok(rows)
}

/// All `K`-element sub-multisets of the descending cost list, each in
/// descending order, in lexicographically descending order; duplicates
/// collapsed.
fn cost_subsets(costs: &[u64], k: usize) -> Vec<Vec<u64>> {
    fn rec(costs: &[u64], k: usize, start: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..costs.len() {
            if costs.len() - i < k - cur.len() {
                break;
            }
            cur.push(costs[i]);
            rec(costs, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(costs, k, 0, &mut Vec::with_capacity(k), &mut out);
    out.dedup();
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn network_cost(allocation: &[u64], topology: &TreeTopology) -> u128 {
    allocation
        .iter()
        .zip(topology.node_counts())
        .map(|(&c, &n)| c as u128 * n as u128)
        .sum()
}

fn feasible_allocations(costs: &CostModel, topology: &TreeTopology, network_budget: u64) -> Result<Vec<Vec<u64>>> {
    let k = topology.depth();
    if costs.costs().len() < k {
        return Err(Error::TooFewCosts {
            available: costs.costs().len(),
            levels: k,
        });
    }
    check_limit(binomial(costs.costs().len(), k), DEFAULT_ENUMERATION_LIMIT)?;
    Ok(cost_subsets(costs.costs(), k)
        .into_iter()
        .filter(|s| network_cost(s, topology) <= network_budget as u128)
        .collect())
}

fn solution_for<T: Real>(
    allocation: Vec<u64>,
    attack: AttackConfig,
    topology: &TreeTopology,
    points: &[OperatingPoint<T>],
) -> Result<GameSolution<T>> {
    let payoff = game_payoff(topology, &attack, points)?;
    let baseline = game_payoff(topology, &AttackConfig::honest(topology.depth()), points)?;
    let blinding = reaches_half(&exact_coverage(topology, &attack)?);
    Ok(GameSolution {
        allocated_costs: allocation,
        attack,
        payoff,
        baseline,
        profit: baseline - payoff,
        blinding,
    })
}

/// Level-by-level upper-level solver.
///
/// Enumerates the descending `K`-subsets of the resource set, keeps those
/// within the network budget, and at each level fixes the cost that lets the
/// attacker buy the fewest Byzantines there. When several costs allow the
/// same count, each is followed through the remaining levels and the one
/// ending in the largest payoff is kept; equal payoffs go to the larger
/// cost. The attacker responds greedily.
pub fn solve_bilevel<T: Real>(
    costs: &CostModel,
    topology: &TreeTopology,
    points: &[OperatingPoint<T>],
    budgets: Budgets,
) -> Result<GameOutcome<T>> {
    check_points(topology, points)?;
    if !check_cost_structure(costs.costs(), topology)? {
        warn!("cost set violates the cost-structure condition; the greedy response may not be optimal");
    }
    let candidates = feasible_allocations(costs, topology, budgets.network)?;
    if candidates.is_empty() {
        return Ok(GameOutcome::Infeasible);
    }
    let (allocation, _) = descend(topology, points, budgets.attacker, 0, &candidates)?;
    let attack = llp_greedy(&allocation, topology, budgets.attacker)?;
    Ok(GameOutcome::Solved(solution_for(allocation, attack, topology, points)?))
}

/// Fixes levels `level + 1..=K` for the surviving allocations, which all
/// share their first `level` entries. Returns the allocation and its payoff.
fn descend<T: Real>(
    topology: &TreeTopology,
    points: &[OperatingPoint<T>],
    attacker_budget: u64,
    level: usize,
    candidates: &[Vec<u64>],
) -> Result<(Vec<u64>, T)> {
    if level == topology.depth() {
        let allocation = candidates[0].clone();
        let attack = llp_greedy(&allocation, topology, attacker_budget)?;
        let payoff = game_payoff(topology, &attack, points)?;
        return Ok((allocation, payoff));
    }
    let prefix = &candidates[0][..level];
    let remaining = prefix
        .iter()
        .zip(topology.node_counts())
        .fold(attacker_budget, |r, (&c, &n)| r - (r / c).min(n) * c);
    let n = topology.node_counts()[level];
    let response = |c: u64| (remaining / c).min(n);
    let fewest = candidates.iter().map(|s| response(s[level])).min().expect("non-empty");
    let mut ties: Vec<u64> = candidates
        .iter()
        .map(|s| s[level])
        .filter(|&c| response(c) == fewest)
        .collect();
    ties.sort_unstable_by(|a, b| b.cmp(a));
    ties.dedup();
    if ties.len() > 1 {
        log::info!("level {}: costs {:?} tie on the attacker response", level + 1, ties);
    }
    let mut best: Option<(Vec<u64>, T)> = None;
    for c in ties {
        let narrowed: Vec<Vec<u64>> = candidates.iter().filter(|s| s[level] == c).cloned().collect();
        let (allocation, payoff) = descend(topology, points, attacker_budget, level + 1, &narrowed)?;
        if best.as_ref().is_none_or(|(_, bp)| payoff > *bp) {
            best = Some((allocation, payoff));
        }
    }
    Ok(best.expect("non-empty"))
}

/// Exhaustive upper-level oracle: for every feasible allocation, the
/// attacker's exhaustive best response; the allocation with the largest
/// defender payoff wins. Among equal payoffs the allocation chosen by
/// [`solve_bilevel`] is preferred, then the first in descending order.
pub fn bilevel_bruteforce<T: Real>(
    costs: &CostModel,
    topology: &TreeTopology,
    points: &[OperatingPoint<T>],
    budgets: Budgets,
    limit: u128,
) -> Result<GameOutcome<T>> {
    check_points(topology, points)?;
    let candidates = feasible_allocations(costs, topology, budgets.network)?;
    if candidates.is_empty() {
        return Ok(GameOutcome::Infeasible);
    }
    check_limit(
        enumeration_size(topology).saturating_mul(candidates.len() as u128),
        limit,
    )?;
    let preferred = solve_bilevel(costs, topology, points, budgets)?
        .solution()
        .map(|s| s.allocated_costs.clone());
    let mut best: Option<(T, Vec<u64>, AttackConfig)> = None;
    for allocation in candidates {
        let attack = llp_bruteforce(&allocation, topology, points, budgets.attacker, limit)?;
        let d = game_payoff(topology, &attack, points)?;
        let better = match &best {
            None => true,
            Some((bd, _, _)) => d > *bd || (d == *bd && preferred.as_ref() == Some(&allocation)),
        };
        if better {
            best = Some((d, allocation, attack));
        }
    }
    let (_, allocation, attack) = best.expect("non-empty");
    Ok(GameOutcome::Solved(solution_for(allocation, attack, topology, points)?))
}
