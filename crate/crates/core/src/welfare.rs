//! Cost of supplying demand under uniform and zonal market arrangements.
//!
//! Each market is cleared in two stages. A market stage dispatches units
//! with only the market's own transmission constraints, then a balancing
//! stage redispatches each zone against every internal limit. Redispatch is
//! settled pay-as-bid. The cost seen by consumers is
//!
//! ```text
//! total = energy_value + balancing_cost − congestion_rent − producer_surplus
//! ```
//!
//! where `producer_surplus` is the infra-marginal margin `Σ (price − cost)·p`
//! earned in the market stage. With this term the uniform total equals the
//! objective of the fully constrained dispatch.
//!
//! Zonal prices are set per price area. An area is a set of zones joined by
//! inter-zonal lines that are not at their limit, since a slack border
//! cannot separate prices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::Partition;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::grid::{InducedNetwork, Network};
use crate::opf::{dc_opf, dc_opf_with, is_binding, DispatchSolution, LimitOverride, OpfRequest};
use crate::scenarios::{apply_scenario, ScenarioSet, WindScenario};

pub const DEFAULT_INFEASIBILITY_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WelfareConfig {
    pub tolerances: Tolerances,
    /// Added to the balancing cost for every zone whose redispatch fails.
    pub infeasibility_penalty: f64,
}

impl Default for WelfareConfig {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            infeasibility_penalty: DEFAULT_INFEASIBILITY_PENALTY,
        }
    }
}

/// Currency per hour, except `zonal_prices` (currency per MWh, one per zone).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub energy_value: f64,
    pub balancing_cost: f64,
    pub congestion_rent: f64,
    pub producer_surplus: f64,
    pub total: f64,
    pub zonal_prices: Vec<f64>,
    /// Zones whose balancing problem had no solution.
    pub infeasible_zones: usize,
}

/// Redispatch problem of one zone.
#[derive(Debug, Clone)]
pub struct ZoneBalancing {
    pub zone: usize,
    pub sub: InducedNetwork,
    /// Fixed border injection per local bus.
    pub injections: Vec<f64>,
    pub solution: DispatchSolution,
}

/// Breakdown plus the dispatches it was computed from.
#[derive(Debug, Clone)]
pub struct MarketOutcome {
    pub breakdown: CostBreakdown,
    pub market_dispatch: DispatchSolution,
    pub area_of_zone: Vec<usize>,
    pub zones: Vec<ZoneBalancing>,
}

fn check_partition(network: &Network, partition: &Partition) -> Result<()> {
    if partition.n_buses() != network.n_buses() {
        return Err(Error::Dimension {
            expected: network.n_buses(),
            actual: partition.n_buses(),
        });
    }
    if !partition.is_contiguous(network) {
        return Err(Error::Clustering(format!(
            "partition {:?} is not a contiguous division of the network",
            partition.zone_of
        )));
    }
    Ok(())
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = x;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Zone → price-area id. Zones touching through a non-binding border share an area.
fn price_areas(
    network: &Network,
    partition: &Partition,
    flows: &[f64],
    tol: &Tolerances,
) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..partition.k).collect();
    for (l, br) in network.branches.iter().enumerate() {
        let (a, b) = (partition.zone_of[br.from_bus], partition.zone_of[br.to_bus]);
        if a == b {
            continue;
        }
        let at_limit = br
            .flow_limit
            .is_some_and(|lim| is_binding(flows[l], lim, tol));
        if !at_limit {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..partition.k).map(|z| find(&mut parent, z)).collect()
}

/// Highest running marginal cost per area; areas with nothing running fall
/// back to their highest nodal price.
fn area_prices(
    network: &Network,
    partition: &Partition,
    area_of_zone: &[usize],
    dispatch: &DispatchSolution,
    tol: &Tolerances,
) -> Vec<f64> {
    let k = partition.k;
    let mut price: Vec<Option<f64>> = vec![None; k];
    for (g, gen) in network.generators.iter().enumerate() {
        if dispatch.generation[g] > tol.tol_running {
            let a = area_of_zone[partition.zone_of[gen.bus]];
            price[a] = Some(price[a].map_or(gen.marginal_cost, |p| p.max(gen.marginal_cost)));
        }
    }
    for (b, &z) in partition.zone_of.iter().enumerate() {
        let a = area_of_zone[z];
        if price[a].is_none() {
            let fallback = partition
                .zone_of
                .iter()
                .enumerate()
                .filter(|(_, &zz)| area_of_zone[zz] == a)
                .map(|(bb, _)| dispatch.nodal_prices[bb])
                .fold(f64::NEG_INFINITY, f64::max);
            warn!("price area of bus {b} has no running unit; using nodal price {fallback}");
            price[a] = Some(fallback);
        }
    }
    (0..k).map(|z| price[area_of_zone[z]].unwrap_or(0.0)).collect()
}

/// Pay-as-bid redispatch cost `Σ c·Δ⁺ − Σ c·Δ⁻`.
fn redispatch_cost(costs: &[f64], before: &[f64], after: &[f64]) -> f64 {
    let mut up = 0.0;
    let mut down = 0.0;
    for ((c, b), a) in costs.iter().zip(before).zip(after) {
        let d = a - b;
        if d > 0.0 {
            up += c * d;
        } else {
            down += c * -d;
        }
    }
    up - down
}

/// Clear a zonal market on a network whose scenario is already applied.
///
/// The single-zone partition gives the uniform market.
pub fn market_outcome(
    network: &Network,
    partition: &Partition,
    cfg: &WelfareConfig,
) -> Result<MarketOutcome> {
    check_partition(network, partition)?;
    let tol = &cfg.tolerances;
    let zone_of = &partition.zone_of;
    let border: Vec<usize> = network
        .branches
        .iter()
        .enumerate()
        .filter(|(_, br)| zone_of[br.from_bus] != zone_of[br.to_bus])
        .map(|(l, _)| l)
        .collect();

    // Market stage: only cross-border limits.
    let overrides: Vec<LimitOverride> = border
        .iter()
        .map(|&l| LimitOverride {
            branch: l,
            limit: network.branches[l].flow_limit,
        })
        .collect();
    let market = dc_opf(network, false, &overrides, tol)?;
    if !market.feasible {
        return Err(Error::Solver(format!(
            "market stage infeasible: {}",
            market.diagnostic.clone().unwrap_or_default()
        )));
    }

    let area_of_zone = price_areas(network, partition, &market.flows, tol);
    let prices = area_prices(network, partition, &area_of_zone, &market, tol);

    let mut zone_demand = vec![0.0; partition.k];
    for (b, bus) in network.buses.iter().enumerate() {
        zone_demand[zone_of[b]] += bus.demand;
    }
    let energy_value: f64 = zone_demand.iter().zip(&prices).map(|(d, p)| d * p).sum();
    let producer_surplus: f64 = network
        .generators
        .iter()
        .zip(&market.generation)
        .map(|(g, p)| (prices[zone_of[g.bus]] - g.marginal_cost) * p)
        .sum();
    let congestion_rent: f64 = border
        .iter()
        .map(|&l| {
            let br = &network.branches[l];
            let f = market.flows[l];
            let (exporter, importer) = if f >= 0.0 {
                (zone_of[br.from_bus], zone_of[br.to_bus])
            } else {
                (zone_of[br.to_bus], zone_of[br.from_bus])
            };
            (f.abs() * (prices[importer] - prices[exporter])).max(0.0)
        })
        .sum();

    // Balancing stage: each zone alone, borders fixed at market flows.
    let mut border_injection = vec![0.0; network.n_buses()];
    for &l in &border {
        let br = &network.branches[l];
        border_injection[br.from_bus] -= market.flows[l];
        border_injection[br.to_bus] += market.flows[l];
    }
    let mut balancing_cost = 0.0;
    let mut infeasible_zones = 0;
    let mut zones = Vec::with_capacity(partition.k);
    for (z, members) in partition.zones().into_iter().enumerate() {
        let sub = network.induced(&members);
        let injections: Vec<f64> = members.iter().map(|&b| border_injection[b]).collect();
        let solution = dc_opf_with(
            &sub.network,
            &OpfRequest {
                enforce_limits: true,
                overrides: &[],
                injections: Some(&injections),
            },
            tol,
        )?;
        if solution.feasible {
            let costs: Vec<f64> = sub.network.generators.iter().map(|g| g.marginal_cost).collect();
            let before: Vec<f64> = sub.generator_map.iter().map(|&g| market.generation[g]).collect();
            balancing_cost += redispatch_cost(&costs, &before, &solution.generation);
        } else {
            infeasible_zones += 1;
            balancing_cost += cfg.infeasibility_penalty;
        }
        zones.push(ZoneBalancing {
            zone: z,
            sub,
            injections,
            solution,
        });
    }

    let total = energy_value + balancing_cost - congestion_rent - producer_surplus;
    Ok(MarketOutcome {
        breakdown: CostBreakdown {
            energy_value,
            balancing_cost,
            congestion_rent,
            producer_surplus,
            total,
            zonal_prices: prices,
            infeasible_zones,
        },
        market_dispatch: market,
        area_of_zone,
        zones,
    })
}

/// Uniform market on a network whose scenario is already applied.
///
/// Fails with [`Error::Unservable`] when no feasible constrained dispatch exists.
pub fn uniform_on(network: &Network, scenario_id: usize, cfg: &WelfareConfig) -> Result<CostBreakdown> {
    let mut out = market_outcome(network, &Partition::single_zone(network.n_buses()), cfg)
        .map_err(|e| match e {
            Error::Solver(_) => Error::Unservable(scenario_id),
            other => other,
        })?;
    if out.breakdown.infeasible_zones > 0 {
        return Err(Error::Unservable(scenario_id));
    }
    out.breakdown.zonal_prices.clear();
    Ok(out.breakdown)
}

fn applied(network: &Network, scenario: &WindScenario) -> Result<Network> {
    apply_scenario(network, scenario).map_err(|e| match e {
        Error::Inadequate { .. } => Error::Unservable(scenario.id),
        other => other,
    })
}

pub fn uniform_market_cost(
    network: &Network,
    scenario: &WindScenario,
    cfg: &WelfareConfig,
) -> Result<CostBreakdown> {
    uniform_on(&applied(network, scenario)?, scenario.id, cfg)
}

pub fn zonal_market_cost(
    network: &Network,
    partition: &Partition,
    scenario: &WindScenario,
    cfg: &WelfareConfig,
) -> Result<CostBreakdown> {
    Ok(market_outcome(&applied(network, scenario)?, partition, cfg)?.breakdown)
}

/// Scenario-averaged cost of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub partition: Partition,
    pub mean: CostBreakdown,
    /// Scenarios in which at least one zone could not be balanced.
    pub infeasible_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub per_partition: Vec<CandidateSummary>,
    pub best: Partition,
    pub scenarios_evaluated: usize,
    /// Ids of scenarios that no market arrangement can serve.
    pub scenarios_excluded: Vec<usize>,
}

impl WelfareReport {
    pub fn best_summary(&self) -> &CandidateSummary {
        self.per_partition
            .iter()
            .find(|c| c.partition == self.best)
            .expect("best is one of the candidates")
    }

    pub fn summary_of(&self, partition: &Partition) -> Option<&CandidateSummary> {
        self.per_partition.iter().find(|c| &c.partition == partition)
    }

    /// One row per candidate; `zone_of` is space separated.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        use crate::format::fmt_num;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "k",
            "zone_of",
            "energy_value",
            "balancing_cost",
            "congestion_rent",
            "producer_surplus",
            "total",
            "infeasible_count",
        ])?;
        for c in &self.per_partition {
            let zones: Vec<String> = c.partition.zone_of.iter().map(|z| z.to_string()).collect();
            w.write_record([
                c.partition.k.to_string(),
                zones.join(" "),
                fmt_num(c.mean.energy_value),
                fmt_num(c.mean.balancing_cost),
                fmt_num(c.mean.congestion_rent),
                fmt_num(c.mean.producer_surplus),
                fmt_num(c.mean.total),
                c.infeasible_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Normalize, dedupe and prepend the single-zone baseline when missing.
pub fn normalize_candidates(n_buses: usize, candidates: &[Partition]) -> Vec<Partition> {
    let mut out = Vec::with_capacity(candidates.len() + 1);
    let baseline = Partition::single_zone(n_buses);
    if !candidates
        .iter()
        .any(|c| Partition::from_labels(&c.zone_of) == baseline)
    {
        out.push(baseline);
    }
    for c in candidates {
        let p = Partition::from_labels(&c.zone_of);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Pick the minimal mean total; near-ties go to fewer zones, then smaller labels.
pub fn select_best(summaries: &[CandidateSummary], tol_welfare: f64) -> Option<&CandidateSummary> {
    let min = summaries
        .iter()
        .map(|c| c.mean.total)
        .fold(f64::INFINITY, f64::min);
    summaries
        .iter()
        .filter(|c| c.mean.total <= min + tol_welfare)
        .min_by(|a, b| {
            (a.partition.k, &a.partition.zone_of).cmp(&(b.partition.k, &b.partition.zone_of))
        })
}

fn mean_breakdown(cells: &[CostBreakdown], k: usize) -> CostBreakdown {
    let n = cells.len() as f64;
    let mut m = CostBreakdown {
        zonal_prices: vec![0.0; k],
        ..CostBreakdown::default()
    };
    for c in cells {
        m.energy_value += c.energy_value;
        m.balancing_cost += c.balancing_cost;
        m.congestion_rent += c.congestion_rent;
        m.producer_surplus += c.producer_surplus;
        m.total += c.total;
        m.infeasible_zones += c.infeasible_zones;
        for (acc, p) in m.zonal_prices.iter_mut().zip(&c.zonal_prices) {
            *acc += p;
        }
    }
    m.energy_value /= n;
    m.balancing_cost /= n;
    m.congestion_rent /= n;
    m.producer_surplus /= n;
    m.total /= n;
    m.zonal_prices.iter_mut().for_each(|p| *p /= n);
    m
}

struct Servable {
    id: usize,
    network: Network,
}

/// Evaluates partitions over a fixed scenario set, caching per partition.
pub struct WelfareEvaluator {
    base: Network,
    cfg: WelfareConfig,
    servable: Vec<Servable>,
    excluded: Vec<usize>,
    cache: Mutex<HashMap<Vec<usize>, Arc<Vec<CostBreakdown>>>>,
}

impl WelfareEvaluator {
    /// Applies every scenario and drops those the uniform market cannot serve.
    pub fn new(network: &Network, scenarios: &ScenarioSet, cfg: WelfareConfig) -> Result<Self> {
        let checked: Vec<Result<Option<(Servable, CostBreakdown)>>> = scenarios
            .scenarios
            .par_iter()
            .map(|s| {
                let applied = match applied(network, s) {
                    Ok(n) => n,
                    Err(Error::Unservable(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                match uniform_on(&applied, s.id, &cfg) {
                    Ok(b) => Ok(Some((
                        Servable {
                            id: s.id,
                            network: applied,
                        },
                        b,
                    ))),
                    Err(Error::Unservable(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect();
        let mut servable = Vec::new();
        let mut excluded = Vec::new();
        for (s, r) in scenarios.scenarios.iter().zip(checked) {
            match r? {
                Some((sv, _)) => servable.push(sv),
                None => excluded.push(s.id),
            }
        }
        if servable.is_empty() {
            return Err(Error::AllUnservable(excluded.len()));
        }
        if !excluded.is_empty() {
            info!(
                "{} of {} scenarios cannot be served and are excluded",
                excluded.len(),
                scenarios.scenarios.len()
            );
        }
        Ok(Self {
            base: network.clone(),
            cfg,
            servable,
            excluded,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn network(&self) -> &Network {
        &self.base
    }

    pub fn config(&self) -> &WelfareConfig {
        &self.cfg
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn servable_ids(&self) -> Vec<usize> {
        self.servable.iter().map(|s| s.id).collect()
    }

    /// Per-scenario breakdowns, in scenario order.
    pub fn cells(&self, partition: &Partition) -> Result<Arc<Vec<CostBreakdown>>> {
        let p = Partition::from_labels(&partition.zone_of);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&p.zone_of) {
            return Ok(Arc::clone(hit));
        }
        check_partition(&self.base, &p)?;
        let cells: Result<Vec<CostBreakdown>> = self
            .servable
            .par_iter()
            .map(|s| market_outcome(&s.network, &p, &self.cfg).map(|o| o.breakdown))
            .collect();
        let cells = Arc::new(cells?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(p.zone_of.clone(), Arc::clone(&cells));
        Ok(cells)
    }

    pub fn summarize(&self, partition: &Partition) -> Result<CandidateSummary> {
        let p = Partition::from_labels(&partition.zone_of);
        let cells = self.cells(&p)?;
        Ok(CandidateSummary {
            mean: mean_breakdown(&cells, p.k),
            infeasible_count: cells.iter().filter(|c| c.infeasible_zones > 0).count(),
            partition: p,
        })
    }

    pub fn report(&self, candidates: &[Partition]) -> Result<WelfareReport> {
        let list = normalize_candidates(self.base.n_buses(), candidates);
        let per_partition = list
            .iter()
            .map(|p| self.summarize(p))
            .collect::<Result<Vec<_>>>()?;
        let best = select_best(&per_partition, self.cfg.tolerances.tol_welfare)
            .expect("baseline is always present")
            .partition
            .clone();
        Ok(WelfareReport {
            per_partition,
            best,
            scenarios_evaluated: self.servable.len(),
            scenarios_excluded: self.excluded.clone(),
        })
    }
}

/// Rank candidate divisions by scenario-averaged total cost.
pub fn evaluate_divisions(
    network: &Network,
    scenarios: &ScenarioSet,
    candidates: &[Partition],
    cfg: &WelfareConfig,
) -> Result<WelfareReport> {
    WelfareEvaluator::new(network, scenarios, cfg.clone())?.report(candidates)
}
