//! Experiment configuration, loaded from JSON and validated up front.

use std::path::{Path, PathBuf};

use byztree::{
    optimal_attack_strategy, sample_placement, AttackConfig, AttackPlacement, Budgets, CostModel, FlipPair,
    FlipStrategy, HypothesisMode, IdentificationParams, OperatingPoint, Rational, Scalar, TreeTopology,
};
use serde::Deserialize;

/// A configuration problem, reported with the offending field.
#[derive(Debug, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl ToString) -> Self {
        Self {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub p_detect: f64,
    pub p_false_alarm: f64,
}

impl PointSpec {
    fn build(&self, field: &str) -> Result<OperatingPoint<f64>> {
        OperatingPoint::new(self.p_detect, self.p_false_alarm).map_err(|e| ConfigError::new(field, e))
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub p10: f64,
    pub p01: f64,
}

/// Byzantine counts placed by a seeded sampler, or explicit node indices.
/// Exactly one of `counts` and `placement` is given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default)]
    pub counts: Option<Vec<u64>>,
    #[serde(default)]
    pub placement: Option<Vec<Vec<u64>>>,
    /// Sampler seed; defaults to the master seed.
    #[serde(default)]
    pub placement_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StrategySpec {
    /// `"optimal"`, `"honest"` or `"always-flip"`.
    Named(String),
    Levels(Vec<PairSpec>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub point: PointSpec,
    pub coverage: f64,
    #[serde(default)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub point: PointSpec,
    /// Number of coverage values in `[0, 0.5)`.
    #[serde(default)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub costs: Vec<u64>,
    pub network_budget: u64,
    pub attacker_budget: u64,
    /// Largest enumeration the payoff table and oracle may run.
    #[serde(default)]
    pub enumeration_limit: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalForm {
    #[default]
    Product,
    Recursive,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifySpec {
    pub anchor: PointSpec,
    pub prior_h0: f64,
    pub deltas: Vec<f64>,
    pub windows: Vec<u64>,
    #[serde(default)]
    pub byzantine_flip: Option<PairSpec>,
    #[serde(default)]
    pub mode: HypothesisMode,
    #[serde(default)]
    pub normal_form: NormalForm,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseSpec {
    pub delta: f64,
    /// Replicate the tree `1..=max_copies` times and regress `−ln P_M`.
    #[serde(default)]
    pub max_copies: Option<u64>,
}

/// Raw file contents. Sections are optional; each subcommand checks for the
/// ones it needs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub topology: Option<Vec<u64>>,
    #[serde(default)]
    pub points: Option<Vec<PointSpec>>,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub strategy: Option<StrategySpec>,
    #[serde(default)]
    pub attack_surface: Option<SurfaceSpec>,
    #[serde(default)]
    pub coverage_curve: Option<CurveSpec>,
    #[serde(default)]
    pub game: Option<GameSpec>,
    #[serde(default)]
    pub identification: Option<IdentifySpec>,
    #[serde(default)]
    pub fusion: Option<FuseSpec>,
}

fn require<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| ConfigError::new(field, "missing, required by this subcommand"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| ConfigError::new(path.display().to_string(), e))
    }

    pub fn topology(&self) -> Result<TreeTopology> {
        TreeTopology::new(require(&self.topology, "topology")?).map_err(|e| ConfigError::new("topology", e))
    }

    pub fn points(&self, topology: &TreeTopology) -> Result<Vec<OperatingPoint<f64>>> {
        let specs = require(&self.points, "points")?;
        if specs.len() != topology.depth() {
            return Err(ConfigError::new(
                "points",
                format!("expected {} operating points, found {}", topology.depth(), specs.len()),
            ));
        }
        specs
            .iter()
            .enumerate()
            .map(|(i, p)| p.build(&format!("points[{i}]")))
            .collect()
    }

    pub fn placement(&self, topology: &TreeTopology) -> Result<AttackPlacement> {
        let spec = require(&self.attack, "attack")?;
        match (&spec.counts, &spec.placement) {
            (Some(counts), None) => {
                let config = AttackConfig::new(counts.clone());
                let seed = spec.placement_seed.unwrap_or(self.seed);
                sample_placement(topology, &config, seed).map_err(|e| ConfigError::new("attack.counts", e))
            }
            (None, Some(levels)) => {
                if spec.placement_seed.is_some() {
                    return Err(ConfigError::new("attack.placement_seed", "only used together with counts"));
                }
                AttackPlacement::from_levels(topology, levels.clone()).map_err(|e| ConfigError::new("attack.placement", e))
            }
            _ => Err(ConfigError::new("attack", "give exactly one of counts and placement")),
        }
    }

    pub fn strategy(&self, topology: &TreeTopology, config: &AttackConfig) -> Result<FlipStrategy<f64>> {
        let field = "strategy";
        match self.strategy.as_ref().unwrap_or(&StrategySpec::Named("optimal".into())) {
            StrategySpec::Named(name) => match name.as_str() {
                "optimal" => {
                    let coverage = config.coverage::<Rational>(topology).map_err(|e| ConfigError::new(field, e))?;
                    let exact = optimal_attack_strategy(&coverage).map_err(|e| ConfigError::new(field, e))?;
                    let pairs = exact
                        .levels()
                        .iter()
                        .map(|p| FlipPair::new(p.p10.to_f64_lossy(), p.p01.to_f64_lossy()))
                        .collect();
                    FlipStrategy::new(pairs).map_err(|e| ConfigError::new(field, e))
                }
                "honest" => Ok(FlipStrategy::honest(topology.depth())),
                "always-flip" => Ok(FlipStrategy::always_flip(topology.depth())),
                other => Err(ConfigError::new(
                    field,
                    format!("unknown strategy {other:?}, expected \"optimal\", \"honest\", \"always-flip\" or a list of pairs"),
                )),
            },
            StrategySpec::Levels(pairs) => {
                if pairs.len() != topology.depth() {
                    return Err(ConfigError::new(
                        field,
                        format!("expected {} flip pairs, found {}", topology.depth(), pairs.len()),
                    ));
                }
                FlipStrategy::new(pairs.iter().map(|p| FlipPair::new(p.p10, p.p01)).collect())
                    .map_err(|e| ConfigError::new(field, e))
            }
        }
    }

    pub fn surface(&self) -> Result<(&SurfaceSpec, OperatingPoint<f64>)> {
        let s = require(&self.attack_surface, "attack_surface")?;
        if !(0.0..=1.0).contains(&s.coverage) {
            return Err(ConfigError::new("attack_surface.coverage", format!("{} is outside [0, 1]", s.coverage)));
        }
        Ok((s, s.point.build("attack_surface.point")?))
    }

    pub fn curve(&self) -> Result<(&CurveSpec, OperatingPoint<f64>)> {
        let s = require(&self.coverage_curve, "coverage_curve")?;
        Ok((s, s.point.build("coverage_curve.point")?))
    }

    pub fn game(&self) -> Result<(CostModel, Budgets, u128)> {
        let g = require(&self.game, "game")?;
        let costs = CostModel::new(g.costs.clone()).map_err(|e| ConfigError::new("game.costs", e))?;
        let budgets = Budgets {
            network: g.network_budget,
            attacker: g.attacker_budget,
        };
        let limit = g.enumeration_limit.map_or(byztree::DEFAULT_ENUMERATION_LIMIT, u128::from);
        Ok((costs, budgets, limit))
    }

    pub fn identification(&self, topology: &TreeTopology) -> Result<(&IdentifySpec, IdentificationParams<f64>)> {
        let s = require(&self.identification, "identification")?;
        let points = self.points(topology)?;
        let Some(&window) = s.windows.first() else {
            return Err(ConfigError::new("identification.windows", "at least one window length is required"));
        };
        let anchor = s.anchor.build("identification.anchor")?;
        let mut params = IdentificationParams::new(anchor, s.prior_h0, window, s.deltas.clone(), points)
            .map_err(|e| ConfigError::new("identification", e))?
            .with_mode(s.mode);
        if let Some(f) = s.byzantine_flip {
            params = params
                .with_flip(FlipPair::new(f.p10, f.p01))
                .map_err(|e| ConfigError::new("identification.byzantine_flip", e))?;
        }
        Ok((s, params))
    }

    pub fn fusion(&self) -> Result<&FuseSpec> {
        let s = require(&self.fusion, "fusion")?;
        if !(s.delta > 0.0 && s.delta <= 1.0) {
            return Err(ConfigError::new("fusion.delta", format!("{} is outside (0, 1]", s.delta)));
        }
        if s.max_copies == Some(0) || s.max_copies == Some(1) {
            return Err(ConfigError::new("fusion.max_copies", "needs at least 2 copies for a slope"));
        }
        Ok(s)
    }
}
