//! Network data model, case-file ingestion and topology matrices.
//!
//! A [`Network`] is immutable once built. Buses are indexed `0..N`, branches
//! `0..M`, and the sign convention for branch flow is positive from
//! `from_bus` to `to_bus` everywhere in the crate.

mod matpower;

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use matpower::parse_matpower;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub demand: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series reactance in per unit on `base_mva`.
    pub reactance: f64,
    /// Thermal limit in MW; `None` means unbounded.
    #[serde(default)]
    pub flow_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub marginal_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default)]
    pub is_wind: bool,
    /// Nameplate capacity; defaults to `p_max` when absent from the input.
    #[serde(default)]
    pub rated_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Generator {
    pub fn rated(&self) -> f64 {
        self.rated_capacity.unwrap_or(self.p_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

/// One broken network invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoBuses,
    BusId { position: usize, id: usize },
    Demand { bus: usize, demand: f64 },
    BranchEndpoint { branch: usize, from_bus: usize, to_bus: usize },
    Reactance { branch: usize, reactance: f64 },
    FlowLimit { branch: usize, limit: f64 },
    GeneratorBus { generator: usize, bus: usize },
    GeneratorCost { generator: usize, cost: f64 },
    GeneratorBounds { generator: usize, p_min: f64, p_max: f64 },
    WindMinimum { generator: usize, p_min: f64 },
    NoGenerators,
    Disconnected { components: Vec<Vec<usize>> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoBuses => write!(f, "network has no buses"),
            Violation::BusId { position, id } => {
                write!(f, "bus at position {position} has id {id}")
            }
            Violation::Demand { bus, demand } => {
                write!(f, "bus {bus} has invalid demand {demand}")
            }
            Violation::BranchEndpoint {
                branch,
                from_bus,
                to_bus,
            } => write!(f, "branch {branch} has invalid endpoints {from_bus} -> {to_bus}"),
            Violation::Reactance { branch, reactance } => {
                write!(f, "branch {branch} has nonpositive reactance {reactance}")
            }
            Violation::FlowLimit { branch, limit } => {
                write!(f, "branch {branch} has nonpositive flow limit {limit}")
            }
            Violation::GeneratorBus { generator, bus } => {
                write!(f, "generator {generator} sits at unknown bus {bus}")
            }
            Violation::GeneratorCost { generator, cost } => {
                write!(f, "generator {generator} has invalid marginal cost {cost}")
            }
            Violation::GeneratorBounds {
                generator,
                p_min,
                p_max,
            } => write!(
                f,
                "generator {generator} has invalid bounds p_min={p_min} p_max={p_max}"
            ),
            Violation::WindMinimum { generator, p_min } => {
                write!(f, "wind generator {generator} has p_min={p_min}, expected 0")
            }
            Violation::NoGenerators => write!(f, "network has no generators"),
            Violation::Disconnected { components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|c| {
                        let ids: Vec<String> = c.iter().map(ToString::to_string).collect();
                        format!("{{{}}}", ids.join(","))
                    })
                    .collect();
                write!(
                    f,
                    "network is disconnected into {} components: {}",
                    components.len(),
                    parts.join(" ")
                )
            }
        }
    }
}

/// Parse a case file, auto-detecting the native JSON schema (leading `{`)
/// versus MATPOWER text, and validate the result.
pub fn parse_case_file(text: &str) -> Result<Network> {
    let network = if text.trim_start().starts_with('{') {
        serde_json::from_str::<Network>(text)?
    } else {
        parse_matpower(text)?
    };
    let violations = validate(&network);
    if violations.is_empty() {
        Ok(network)
    } else {
        Err(Error::Validation(violations))
    }
}

pub fn load_case(path: impl AsRef<std::path::Path>) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    parse_case_file(&text)
}

/// Check every network invariant. Returns an empty list iff the network is valid.
pub fn validate(network: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = network.buses.len();
    if n == 0 {
        out.push(Violation::NoBuses);
        return out;
    }
    for (position, bus) in network.buses.iter().enumerate() {
        if bus.id != position {
            out.push(Violation::BusId {
                position,
                id: bus.id,
            });
        }
        if !bus.demand.is_finite() || bus.demand < 0.0 {
            out.push(Violation::Demand {
                bus: position,
                demand: bus.demand,
            });
        }
    }
    for (id, br) in network.branches.iter().enumerate() {
        if br.from_bus >= n || br.to_bus >= n || br.from_bus == br.to_bus {
            out.push(Violation::BranchEndpoint {
                branch: id,
                from_bus: br.from_bus,
                to_bus: br.to_bus,
            });
        }
        if !(br.reactance > 0.0) || !br.reactance.is_finite() {
            out.push(Violation::Reactance {
                branch: id,
                reactance: br.reactance,
            });
        }
        if let Some(limit) = br.flow_limit {
            if !(limit > 0.0) {
                out.push(Violation::FlowLimit { branch: id, limit });
            }
        }
    }
    if network.generators.is_empty() {
        out.push(Violation::NoGenerators);
    }
    for (id, g) in network.generators.iter().enumerate() {
        if g.bus >= n {
            out.push(Violation::GeneratorBus {
                generator: id,
                bus: g.bus,
            });
        }
        if !g.marginal_cost.is_finite() || g.marginal_cost < 0.0 {
            out.push(Violation::GeneratorCost {
                generator: id,
                cost: g.marginal_cost,
            });
        }
        if !(g.p_min >= 0.0 && g.p_min <= g.p_max && g.p_max.is_finite()) {
            out.push(Violation::GeneratorBounds {
                generator: id,
                p_min: g.p_min,
                p_max: g.p_max,
            });
        }
        if g.is_wind && g.p_min != 0.0 {
            out.push(Violation::WindMinimum {
                generator: id,
                p_min: g.p_min,
            });
        }
    }
    // Endpoint violations make traversal meaningless.
    if out
        .iter()
        .all(|v| !matches!(v, Violation::BranchEndpoint { .. }))
    {
        let components = network.components();
        if components.len() > 1 {
            out.push(Violation::Disconnected { components });
        }
    }
    out
}

impl Network {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn total_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.demand).sum()
    }

    pub fn wind_generators(&self) -> Vec<usize> {
        (0..self.generators.len())
            .filter(|&g| self.generators[g].is_wind)
            .collect()
    }

    /// Display name of a generator: its label, or `g<index>`.
    pub fn generator_name(&self, g: usize) -> String {
        self.generators[g]
            .label
            .clone()
            .unwrap_or_else(|| format!("g{g}"))
    }

    pub fn bus_name(&self, b: usize) -> String {
        self.buses[b]
            .label
            .clone()
            .unwrap_or_else(|| b.to_string())
    }

    /// Neighbor lists, one entry per incident branch (parallel branches repeat).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            adj[br.from_bus].push(br.to_bus);
            adj[br.to_bus].push(br.from_bus);
        }
        adj
    }

    /// Connected components, each sorted, ordered by their smallest bus.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let all: Vec<usize> = (0..self.buses.len()).collect();
        components_within(&self.adjacency(), &all)
    }

    /// Signed line-node incidence matrix, M×N: +1 at `from_bus`, −1 at `to_bus`.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.branches.len(), self.buses.len());
        for (l, br) in self.branches.iter().enumerate() {
            a[(l, br.from_bus)] = 1.0;
            a[(l, br.to_bus)] = -1.0;
        }
        a
    }

    /// Branch susceptances 1/x in per unit.
    pub fn susceptances(&self) -> Vec<f64> {
        self.branches.iter().map(|br| 1.0 / br.reactance).collect()
    }

    /// Bus susceptance matrix Aᵀ·diag(b)·A in per unit.
    pub fn susceptance_matrix(&self) -> DMatrix<f64> {
        let n = self.buses.len();
        let mut b = DMatrix::zeros(n, n);
        for br in &self.branches {
            let y = 1.0 / br.reactance;
            let (i, j) = (br.from_bus, br.to_bus);
            b[(i, i)] += y;
            b[(j, j)] += y;
            b[(i, j)] -= y;
            b[(j, i)] -= y;
        }
        b
    }

    /// Sub-network induced by `buses` (sorted, deduplicated by the caller).
    ///
    /// Keeps branches with both ends inside and generators located inside,
    /// renumbered in their original relative order. Returns the sub-network
    /// with the generator and branch index maps back into `self`.
    pub fn induced(&self, buses: &[usize]) -> InducedNetwork {
        let mut local = vec![usize::MAX; self.buses.len()];
        for (i, &b) in buses.iter().enumerate() {
            local[b] = i;
        }
        let sub_buses = buses
            .iter()
            .enumerate()
            .map(|(i, &b)| Bus {
                id: i,
                demand: self.buses[b].demand,
                label: self.buses[b].label.clone(),
            })
            .collect();
        let mut branch_map = Vec::new();
        let mut sub_branches = Vec::new();
        for (l, br) in self.branches.iter().enumerate() {
            let (f, t) = (local[br.from_bus], local[br.to_bus]);
            if f != usize::MAX && t != usize::MAX {
                sub_branches.push(Branch {
                    id: sub_branches.len(),
                    from_bus: f,
                    to_bus: t,
                    reactance: br.reactance,
                    flow_limit: br.flow_limit,
                });
                branch_map.push(l);
            }
        }
        let mut generator_map = Vec::new();
        let mut sub_gens = Vec::new();
        for (g, gen) in self.generators.iter().enumerate() {
            if local[gen.bus] != usize::MAX {
                let mut copy = gen.clone();
                copy.bus = local[gen.bus];
                sub_gens.push(copy);
                generator_map.push(g);
            }
        }
        InducedNetwork {
            network: Network {
                base_mva: self.base_mva,
                buses: sub_buses,
                branches: sub_branches,
                generators: sub_gens,
            },
            bus_map: buses.to_vec(),
            branch_map,
            generator_map,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InducedNetwork {
    pub network: Network,
    pub bus_map: Vec<usize>,
    pub branch_map: Vec<usize>,
    pub generator_map: Vec<usize>,
}

/// Connected components of the subgraph induced by `members`.
pub(crate) fn components_within(adj: &[Vec<usize>], members: &[usize]) -> Vec<Vec<usize>> {
    let mut inside = vec![false; adj.len()];
    for &m in members {
        inside[m] = true;
    }
    let mut seen = vec![false; adj.len()];
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    for &start in &sorted {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &v in &adj[u] {
                if inside[v] && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_bus;

    #[test]
    fn incidence_two_bus() {
        let a = two_bus().incidence_matrix();
        assert_eq!(a.nrows(), 1);
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, -1.0]);
    }

    #[test]
    fn incidence_triangle() {
        let mut net = two_bus();
        net.buses.push(Bus { id: 2, demand: 0.0, label: None });
        net.branches = vec![(0, 1), (1, 2), (0, 2)]
            .into_iter()
            .enumerate()
            .map(|(id, (f, t))| Branch {
                id,
                from_bus: f,
                to_bus: t,
                reactance: 0.1,
                flow_limit: None,
            })
            .collect();
        let a = net.incidence_matrix();
        let rows: Vec<Vec<f64>> = (0..3).map(|l| a.row(l).iter().copied().collect()).collect();
        assert_eq!(rows[0], vec![1.0, -1.0, 0.0]);
        assert_eq!(rows[1], vec![0.0, 1.0, -1.0]);
        assert_eq!(rows[2], vec![1.0, 0.0, -1.0]);
        for r in rows {
            assert_eq!(r.iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn valid_network_has_no_violations() {
        assert!(validate(&two_bus()).is_empty());
    }

    #[test]
    fn zero_reactance_is_reported() {
        let mut net = two_bus();
        net.branches[0].reactance = 0.0;
        let v = validate(&net);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Reactance { branch: 0, .. }));
        assert!(v[0].to_string().contains("branch 0"));
    }

    #[test]
    fn islands_are_listed() {
        let mut net = two_bus();
        net.buses.push(Bus { id: 2, demand: 0.0, label: None });
        net.buses.push(Bus { id: 3, demand: 0.0, label: None });
        net.branches.push(Branch {
            id: 1,
            from_bus: 2,
            to_bus: 3,
            reactance: 0.1,
            flow_limit: None,
        });
        let v = validate(&net);
        assert_eq!(
            v,
            vec![Violation::Disconnected {
                components: vec![vec![0, 1], vec![2, 3]]
            }]
        );
    }

    #[test]
    fn induced_keeps_internal_elements() {
        let net = two_bus();
        let sub = net.induced(&[1]);
        assert_eq!(sub.network.n_buses(), 1);
        assert_eq!(sub.network.n_branches(), 0);
        assert_eq!(sub.generator_map, vec![1]);
        assert_eq!(sub.network.generators[0].bus, 0);
    }

    #[test]
    fn json_round_trip() {
        let net = two_bus();
        let text = serde_json::to_string(&net).unwrap();
        assert_eq!(parse_case_file(&text).unwrap(), net);
    }
}
