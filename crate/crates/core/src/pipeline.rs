//! End-to-end zoning methods and their comparison.

use std::fmt::Write as _;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{consensus_cluster, ward_connectivity_cluster, Partition};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::grid::Network;
use crate::opf::{congested_lines, dc_opf, DispatchSolution};
use crate::ptdf::{generalized_ptdf, ptdf_matrix, sign_bipartition, GeneralizedPtdf};
use crate::scenarios::{apply_scenario, ScenarioSet};
use crate::welfare::{WelfareConfig, WelfareEvaluator, WelfareReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LmpConsensus,
    CongestionContribution,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::LmpConsensus => "lmp_consensus",
            Method::CongestionContribution => "congestion_contribution",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub welfare: WelfareConfig,
    /// Largest zone count proposed by the price-clustering method.
    pub max_k: usize,
    /// Zone count of each per-scenario price clustering; `None` uses `max_k`.
    pub k_scenario: Option<usize>,
    /// Lines congested less often than this are not split.
    pub frequency_floor: f64,
    /// Offer rejected lines a second chance after the first pass.
    pub repass: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            welfare: WelfareConfig::default(),
            max_k: 6,
            k_scenario: None,
            frequency_floor: 0.0,
            repass: false,
        }
    }
}

impl PipelineConfig {
    fn tol(&self) -> &Tolerances {
        &self.welfare.tolerances
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFrequency {
    pub branch: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCongestion {
    pub scenario: usize,
    /// `None` when the constrained dispatch does not exist.
    pub lines: Option<Vec<usize>>,
}

/// One line considered by the sequential method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTrial {
    pub line: usize,
    pub pass: usize,
    pub candidate: Option<Partition>,
    pub mean_total: Option<f64>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub candidates: Vec<Partition>,
    pub report: WelfareReport,
    pub recommended: Partition,
    pub recommended_total: f64,
    pub congestion: Vec<ScenarioCongestion>,
    pub frequencies: Vec<LineFrequency>,
    /// Mean total of the incumbent after each acceptance, starting with one zone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accepted_totals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<SplitTrial>,
    /// Scenarios without a constrained dispatch, left out of clustering.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_scenarios: Vec<usize>,
}

/// Fully constrained dispatch of every scenario, `None` where none exists.
pub fn scenario_dispatches(
    network: &Network,
    scenarios: &ScenarioSet,
    tol: &Tolerances,
) -> Result<Vec<Option<DispatchSolution>>> {
    scenarios
        .scenarios
        .par_iter()
        .map(|s| {
            let applied = match apply_scenario(network, s) {
                Ok(n) => n,
                Err(Error::Inadequate { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let sol = dc_opf(&applied, true, &[], tol)?;
            Ok(sol.feasible.then_some(sol))
        })
        .collect()
}

fn congestion_sets(scenarios: &ScenarioSet, dispatches: &[Option<DispatchSolution>]) -> Vec<ScenarioCongestion> {
    scenarios
        .scenarios
        .iter()
        .zip(dispatches)
        .map(|(s, d)| ScenarioCongestion {
            scenario: s.id,
            lines: d.as_ref().map(congested_lines),
        })
        .collect()
}

fn frequencies_from(n_branches: usize, sets: &[ScenarioCongestion]) -> Vec<LineFrequency> {
    let mut counts = vec![0usize; n_branches];
    for s in sets {
        for &l in s.lines.iter().flatten() {
            counts[l] += 1;
        }
    }
    let total = sets.len() as f64;
    let mut out: Vec<LineFrequency> = counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(branch, c)| LineFrequency {
            branch,
            frequency: c as f64 / total,
        })
        .collect();
    out.sort_by(|a, b| {
        b.frequency
            .total_cmp(&a.frequency)
            .then(a.branch.cmp(&b.branch))
    });
    out
}

/// Share of all scenarios in which each line binds, most frequent first.
pub fn congestion_frequency(
    network: &Network,
    scenarios: &ScenarioSet,
    tol: &Tolerances,
) -> Result<Vec<LineFrequency>> {
    if scenarios.scenarios.is_empty() {
        return Err(Error::Scenario("no scenarios".into()));
    }
    let dispatches = scenario_dispatches(network, scenarios, tol)?;
    Ok(frequencies_from(
        network.n_branches(),
        &congestion_sets(scenarios, &dispatches),
    ))
}

fn check_max_k(network: &Network, max_k: usize) -> Result<()> {
    if max_k == 0 || max_k > network.n_buses() {
        return Err(Error::Config(format!(
            "max zone count {max_k} outside 1..={}",
            network.n_buses()
        )));
    }
    Ok(())
}

fn lmp_with(
    evaluator: &WelfareEvaluator,
    scenarios: &ScenarioSet,
    cfg: &PipelineConfig,
) -> Result<MethodResult> {
    let network = evaluator.network();
    check_max_k(network, cfg.max_k)?;
    let k_scenario = cfg.k_scenario.unwrap_or(cfg.max_k);
    if k_scenario == 0 || k_scenario > network.n_buses() {
        return Err(Error::Config(format!("per-scenario zone count {k_scenario} out of range")));
    }
    let dispatches = scenario_dispatches(network, scenarios, cfg.tol())?;
    let congestion = congestion_sets(scenarios, &dispatches);
    let dropped: Vec<usize> = scenarios
        .scenarios
        .iter()
        .zip(&dispatches)
        .filter(|(_, d)| d.is_none())
        .map(|(s, _)| s.id)
        .collect();
    if !dropped.is_empty() {
        info!("{} scenarios without a constrained dispatch left out of clustering", dropped.len());
    }
    let partitions: Vec<Partition> = dispatches
        .par_iter()
        .flatten()
        .map(|d| ward_connectivity_cluster(&d.nodal_prices, network, k_scenario))
        .collect::<Result<_>>()?;
    if partitions.is_empty() {
        return Err(Error::AllUnservable(dropped.len()));
    }
    let candidates = consensus_cluster(&partitions, network, cfg.max_k)?;
    let report = evaluator.report(&candidates)?;
    let best = report.best_summary();
    Ok(MethodResult {
        method: Method::LmpConsensus,
        recommended: best.partition.clone(),
        recommended_total: best.mean.total,
        candidates,
        report,
        frequencies: frequencies_from(network.n_branches(), &congestion),
        congestion,
        accepted_totals: Vec::new(),
        trials: Vec::new(),
        dropped_scenarios: dropped,
    })
}

/// Consensus clustering of per-scenario nodal prices, ranked by welfare.
pub fn lmp_pipeline(
    network: &Network,
    scenarios: &ScenarioSet,
    cfg: &PipelineConfig,
) -> Result<MethodResult> {
    let evaluator = WelfareEvaluator::new(network, scenarios, cfg.welfare.clone())?;
    lmp_with(&evaluator, scenarios, cfg)
}

fn sequential_with(
    evaluator: &WelfareEvaluator,
    scenarios: &ScenarioSet,
    cfg: &PipelineConfig,
) -> Result<MethodResult> {
    let network = evaluator.network();
    if scenarios.scenarios.is_empty() {
        return Err(Error::Scenario("no scenarios".into()));
    }
    let tol = cfg.tol();
    let s: GeneralizedPtdf = generalized_ptdf(&ptdf_matrix(network, 0)?, network)?;
    let dispatches = scenario_dispatches(network, scenarios, tol)?;
    let congestion = congestion_sets(scenarios, &dispatches);
    let frequencies = frequencies_from(network.n_branches(), &congestion);

    let mut incumbent = Partition::single_zone(network.n_buses());
    let mut incumbent_total = evaluator.summarize(&incumbent)?.mean.total;
    let mut accepted_totals = vec![incumbent_total];
    let mut trials = Vec::new();
    let mut candidates = vec![incumbent.clone()];
    let passes = if cfg.repass { 2 } else { 1 };

    for pass in 0..passes {
        for lf in &frequencies {
            if lf.frequency < cfg.frequency_floor {
                continue;
            }
            let line = lf.branch;
            let br = &network.branches[line];
            let zone = incumbent.zone_of[br.from_bus];
            if zone != incumbent.zone_of[br.to_bus] {
                if pass == 0 {
                    trials.push(SplitTrial {
                        line,
                        pass,
                        candidate: None,
                        mean_total: None,
                        accepted: false,
                        note: Some("already inter-zonal".into()),
                    });
                }
                continue;
            }
            let scope = &incumbent.zones()[zone];
            let (plus, minus) = match sign_bipartition(&s, line, scope, network, tol) {
                Ok(split) => split,
                Err(Error::DegenerateSplit { reason, .. }) => {
                    warn!("line {line}: no usable split ({reason})");
                    trials.push(SplitTrial {
                        line,
                        pass,
                        candidate: None,
                        mean_total: None,
                        accepted: false,
                        note: Some(reason),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let candidate = incumbent.split_zone(zone, &plus, &minus);
            let total = evaluator.summarize(&candidate)?.mean.total;
            let accepted = total < incumbent_total - tol.tol_welfare;
            debug!("line {line}: split total {total} vs incumbent {incumbent_total}, accepted {accepted}");
            if !candidates.contains(&candidate) {
                candidates.push(candidate.clone());
            }
            trials.push(SplitTrial {
                line,
                pass,
                candidate: Some(candidate.clone()),
                mean_total: Some(total),
                accepted,
                note: None,
            });
            if accepted {
                incumbent = candidate;
                incumbent_total = total;
                accepted_totals.push(total);
            }
        }
    }

    let report = evaluator.report(&candidates)?;
    Ok(MethodResult {
        method: Method::CongestionContribution,
        candidates,
        report,
        recommended: incumbent,
        recommended_total: incumbent_total,
        congestion,
        frequencies,
        accepted_totals,
        trials,
        dropped_scenarios: Vec::new(),
    })
}

/// Split zones along frequently congested lines while welfare improves.
pub fn sequential_partition(
    network: &Network,
    scenarios: &ScenarioSet,
    cfg: &PipelineConfig,
) -> Result<MethodResult> {
    let evaluator = WelfareEvaluator::new(network, scenarios, cfg.welfare.clone())?;
    sequential_with(&evaluator, scenarios, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    LmpConsensus,
    CongestionContribution,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub k: usize,
    pub total: f64,
    pub zone_of: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario_ids: Vec<usize>,
    pub table: Vec<ComparisonRow>,
    pub winner: Winner,
    pub lmp: MethodResult,
    pub ptdf: MethodResult,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        use crate::format::fmt_num;
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:>3} {:>18}  zones", "method", "k", "mean total");
        for row in &self.table {
            let zones: Vec<String> = row.zone_of.iter().map(|z| z.to_string()).collect();
            let _ = writeln!(
                s,
                "{:<24} {:>3} {:>18}  {}",
                row.method.as_str(),
                row.k,
                fmt_num(row.total),
                zones.join(" ")
            );
        }
        let winner = match self.winner {
            Winner::LmpConsensus => "lmp_consensus",
            Winner::CongestionContribution => "congestion_contribution",
            Winner::Tie => "tie",
        };
        let _ = writeln!(s, "winner: {winner}");
        s
    }
}

/// Run both methods on the same scenarios and compare their recommendations.
pub fn compare_methods(
    network: &Network,
    scenarios: &ScenarioSet,
    cfg: &PipelineConfig,
) -> Result<Comparison> {
    let evaluator = WelfareEvaluator::new(network, scenarios, cfg.welfare.clone())?;
    let lmp = lmp_with(&evaluator, scenarios, cfg)?;
    let ptdf = sequential_with(&evaluator, scenarios, cfg)?;
    let diff = lmp.recommended_total - ptdf.recommended_total;
    let winner = if diff.abs() <= cfg.tol().tol_welfare {
        Winner::Tie
    } else if diff < 0.0 {
        Winner::LmpConsensus
    } else {
        Winner::CongestionContribution
    };
    let table = [&lmp, &ptdf]
        .iter()
        .map(|r| ComparisonRow {
            method: r.method,
            k: r.recommended.k,
            total: r.recommended_total,
            zone_of: r.recommended.zone_of.clone(),
        })
        .collect();
    Ok(Comparison {
        scenario_ids: evaluator.servable_ids(),
        table,
        winner,
        lmp,
        ptdf,
    })
}
