//! One function per subcommand. Each writes its tables into the output
//! directory and returns the written paths.

use std::path::{Path, PathBuf};

use byztree::{
    asymptotic_lower_bound, bilevel_bruteforce, honest_isolation_exact, kld_surface, kld_vs_coverage,
    p_iso_exact, p_iso_normal, p_iso_recursive, payoff_table, replication_slope, run_model_experiment,
    simulate_identification, solve_bilevel, thresholds, total_kld, FusionModel, GameOutcome, Proportion,
};
use log::{info, warn};

use crate::config::{ExperimentConfig, NormalForm};
use crate::output::{num, opt_num, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Model(#[from] byztree::Error),
    #[error("no cost allocation fits the network budget")]
    InfeasibleGame,
    #[error("writing output: {0}")]
    Csv(#[from] csv::Error),
    #[error("output directory: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(byztree::Error::ApproximationDomain(_)) => 4,
            CliError::Model(_) => 2,
            CliError::InfeasibleGame => 3,
            CliError::Csv(_) | CliError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Values from the command line that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub grid: Option<usize>,
}

pub struct Run<'a> {
    pub config: &'a ExperimentConfig,
    pub overrides: &'a Overrides,
    pub out: &'a Path,
}

const DEFAULT_TRIALS: u64 = 10_000;

impl Run<'_> {
    fn seed(&self) -> u64 {
        self.overrides.seed.unwrap_or(self.config.seed)
    }

    fn trials(&self) -> u64 {
        self.overrides.trials.or(self.config.trials).unwrap_or(DEFAULT_TRIALS)
    }

    fn grid(&self, from_file: Option<usize>, default: usize) -> usize {
        self.overrides.grid.or(from_file).unwrap_or(default)
    }
}

fn rate_cells(p: &Proportion) -> [String; 2] {
    if p.trials == 0 {
        [String::new(), String::new()]
    } else {
        [num(p.rate()), num(p.ci_halfwidth())]
    }
}

pub fn attack_surface(run: &Run) -> Result<Vec<PathBuf>> {
    let (spec, point) = run.config.surface()?;
    let grid = run.grid(spec.grid, 51);
    let surface = kld_surface(&[1], &[spec.coverage], &[point], grid)?;
    let mut table = Table::new(["p10", "p01", "D_k"]);
    for cell in &surface {
        table.push(vec![num(cell.p10), num(cell.p01), num(cell.kld)]);
    }
    Ok(vec![table.write(run.out, "attack_surface.csv")?])
}

pub fn coverage_curve(run: &Run) -> Result<Vec<PathBuf>> {
    let (spec, point) = run.config.curve()?;
    let n = run.grid(spec.grid, 50);
    let coverage: Vec<f64> = (0..n as u64).map(|i| i as f64 / (2 * n) as f64).collect();
    let curve = kld_vs_coverage(&point, &coverage)?;
    let mut table = Table::new(["t", "D_k"]);
    for &(t, d) in &curve {
        table.push(vec![num(t), num(d)]);
    }
    let decreasing = curve.windows(2).all(|w| w[1].1 < w[0].1);
    let min_second = curve
        .windows(3)
        .map(|w| w[0].1 - 2.0 * w[1].1 + w[2].1)
        .fold(f64::INFINITY, f64::min);
    let convex = min_second >= -1e-9;
    info!("smallest second difference {min_second:e}");
    table.push(vec!["decreasing_convex".into(), (decreasing && convex).to_string()]);
    Ok(vec![table.write(run.out, "coverage_curve.csv")?])
}

pub fn stackelberg(run: &Run) -> Result<Vec<PathBuf>> {
    let topology = run.config.topology()?;
    let points = run.config.points(&topology)?;
    let (costs, budgets, limit) = run.config.game()?;
    let solution = match solve_bilevel(&costs, &topology, &points, budgets)? {
        GameOutcome::Infeasible => return Err(CliError::InfeasibleGame),
        GameOutcome::Solved(s) => s,
    };
    let mut written = Vec::new();

    let coverage = solution.attack.coverage::<f64>(&topology)?;
    let mut levels = Table::new(["level", "nodes", "allocated_cost", "byzantines", "coverage"]);
    for (k, cov) in coverage.iter().enumerate() {
        levels.push(vec![
            (k + 1).to_string(),
            topology.node_counts()[k].to_string(),
            solution.allocated_costs[k].to_string(),
            solution.attack.counts()[k].to_string(),
            num(*cov),
        ]);
    }
    written.push(levels.write(run.out, "stackelberg.csv")?);

    let oracle = match bilevel_bruteforce(&costs, &topology, &points, budgets, limit) {
        Ok(GameOutcome::Solved(s)) => Some(s),
        Ok(GameOutcome::Infeasible) => None,
        Err(byztree::Error::EnumerationLimit { size, limit }) => {
            warn!("skipping the exhaustive oracle: {size} candidates exceed {limit}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut summary = Table::new(["payoff", "baseline", "profit", "blinding", "oracle_payoff", "oracle_agrees"]);
    summary.push(vec![
        num(solution.payoff),
        num(solution.baseline),
        num(solution.profit),
        solution.blinding.to_string(),
        oracle.as_ref().map_or(String::new(), |o| num(o.payoff)),
        oracle.as_ref().map_or(String::new(), |o| (o.payoff == solution.payoff).to_string()),
    ]);
    written.push(summary.write(run.out, "stackelberg_summary.csv")?);

    match payoff_table(&solution.allocated_costs, &topology, &points, budgets.attacker, limit) {
        Ok(rows) => {
            let header = (1..=topology.depth())
                .map(|k| format!("B_{k}"))
                .chain(["feasible".to_string(), "D".to_string()]);
            let mut table = Table::new(header);
            for row in rows {
                let mut cells: Vec<String> = row.attack.counts().iter().map(u64::to_string).collect();
                cells.push(row.feasible.to_string());
                cells.push(num(row.payoff));
                table.push(cells);
            }
            written.push(table.write(run.out, "payoff_table.csv")?);
        }
        Err(byztree::Error::EnumerationLimit { size, limit }) => {
            warn!("skipping the payoff table: {size} configurations exceed {limit}");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(written)
}

pub fn identify(run: &Run) -> Result<Vec<PathBuf>> {
    let topology = run.config.topology()?;
    let (spec, base) = run.config.identification(&topology)?;
    let placement = run.config.placement(&topology)?;
    let trials = run.trials();
    let mut table = Table::new([
        "T",
        "level",
        "eta",
        "p_iso_exact",
        "p_iso_normal",
        "p_iso_mc",
        "ci_halfwidth",
        "honest_exact",
        "honest_mc",
        "honest_ci_halfwidth",
        "bound",
    ]);
    for &window in &spec.windows {
        let params = base.clone().with_window(window);
        let eta = thresholds(&params)?;
        let mc = if trials > 0 {
            Some(simulate_identification(&topology, &placement, &params, trials, run.seed())?)
        } else {
            None
        };
        for k in 1..=params.depth() {
            let normal = match spec.normal_form {
                NormalForm::Product => p_iso_normal(&params, &eta, k)?,
                NormalForm::Recursive => p_iso_recursive(&params, &eta, k)?,
            };
            let empty = Proportion::default();
            let [byz_rate, byz_ci] = rate_cells(mc.as_ref().map_or(&empty, |r| &r.byzantine_mc[k - 1]));
            let [hon_rate, hon_ci] = rate_cells(mc.as_ref().map_or(&empty, |r| &r.honest_mc[k - 1]));
            table.push(vec![
                window.to_string(),
                k.to_string(),
                num(eta[k - 1]),
                num(p_iso_exact(&params, &eta, k)?),
                opt_num(normal),
                byz_rate,
                byz_ci,
                num(honest_isolation_exact(&params, &eta, k)?),
                hon_rate,
                hon_ci,
                num(asymptotic_lower_bound(&params.deltas, k)?),
            ]);
        }
    }
    Ok(vec![table.write(run.out, "identify.csv")?])
}

pub fn fuse(run: &Run) -> Result<Vec<PathBuf>> {
    let topology = run.config.topology()?;
    let points = run.config.points(&topology)?;
    let placement = run.config.placement(&topology)?;
    let strategy = run.config.strategy(&topology, &placement.config())?;
    let spec = run.config.fusion()?;
    let trials = run.trials();
    let seed = run.seed();
    let model = FusionModel::new(&topology, &placement, &strategy, &points)?;
    let report = run_model_experiment(&model, spec.delta, trials, seed)?;
    let kld = total_kld(&topology, &placement.config(), &strategy, &points)?.total;
    let mut written = Vec::new();

    let mut summary = Table::new([
        "delta",
        "trials",
        "threshold",
        "degenerate",
        "D",
        "p_f_hat",
        "p_f_ci",
        "p_m_hat",
        "p_m_ci",
    ]);
    let [pf, pf_ci] = rate_cells(&report.false_alarm);
    let [pm, pm_ci] = rate_cells(&report.miss);
    summary.push(vec![
        num(report.delta),
        report.trials.to_string(),
        num(report.threshold),
        report.degenerate.to_string(),
        num(kld),
        pf,
        pf_ci,
        pm,
        pm_ci,
    ]);
    written.push(summary.write(run.out, "fuse.csv")?);

    let mut levels = Table::new([
        "level",
        "a1",
        "a0",
        "pi10",
        "pi11",
        "ones_h0",
        "ones_h0_ci",
        "ones_h1",
        "ones_h1_ci",
    ]);
    for k in 0..topology.depth() {
        let (a1, a0) = model.weights()[k];
        let (pi10, pi11) = report.analytic[k];
        let [h0, h0_ci] = rate_cells(&report.ones_h0[k]);
        let [h1, h1_ci] = rate_cells(&report.ones_h1[k]);
        levels.push(vec![(k + 1).to_string(), num(a1), num(a0), num(pi10), num(pi11), h0, h0_ci, h1, h1_ci]);
    }
    written.push(levels.write(run.out, "fuse_levels.csv")?);

    if let Some(max_copies) = spec.max_copies {
        let rep = replication_slope(&topology, &placement, &strategy, &points, spec.delta, trials, seed, max_copies)?;
        let mut table = Table::new(["m", "p_m_hat", "p_m_ci", "neg_ln_p_m", "slope", "base_D"]);
        for (m, r) in rep.copies.iter().zip(&rep.reports) {
            let [pm, pm_ci] = rate_cells(&r.miss);
            table.push(vec![m.to_string(), pm, pm_ci, num(-r.miss.rate().ln()), num(rep.slope), num(rep.base_kld)]);
        }
        written.push(table.write(run.out, "replication.csv")?);
    }
    Ok(written)
}
