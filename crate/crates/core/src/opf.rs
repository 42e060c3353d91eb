//! DC optimal power flow with nodal prices.
//!
//! The LP uses the angle formulation: one balance row per bus,
//! `Σ p_g − Σ_l A_ln f_l = d_n − injection_n`, and one definition row per
//! branch, `f_l − (base/x_l)(θ_from − θ_to) = 0`. Flow limits are bounds on
//! the `f_l` variables, so the balance-row duals are the nodal prices
//! directly. Bus 0 is the angle reference.

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::grid::Network;
use crate::lp::{LinearProgram, LpOutcome, Relation};

/// Per-branch replacement of the flow limit; `limit: None` lifts it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOverride {
    pub branch: usize,
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct OpfRequest<'a> {
    pub enforce_limits: bool,
    pub overrides: &'a [LimitOverride],
    /// Fixed extra injection per bus (MW, positive into the bus).
    pub injections: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub feasible: bool,
    pub generation: Vec<f64>,
    pub angles: Vec<f64>,
    pub flows: Vec<f64>,
    pub nodal_prices: Vec<f64>,
    pub objective: f64,
    pub binding_lines: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl DispatchSolution {
    fn infeasible(diagnostic: String) -> Self {
        Self {
            feasible: false,
            generation: Vec::new(),
            angles: Vec::new(),
            flows: Vec::new(),
            nodal_prices: Vec::new(),
            objective: f64::NAN,
            binding_lines: Vec::new(),
            diagnostic: Some(diagnostic),
        }
    }
}

/// Solve a DC OPF with all branch limits enforced or none, plus overrides.
pub fn dc_opf(
    network: &Network,
    enforce_limits: bool,
    overrides: &[LimitOverride],
    tol: &Tolerances,
) -> Result<DispatchSolution> {
    dc_opf_with(
        network,
        &OpfRequest {
            enforce_limits,
            overrides,
            injections: None,
        },
        tol,
    )
}

/// Effective limit of every branch for a request.
pub fn effective_limits(network: &Network, request: &OpfRequest<'_>) -> Vec<Option<f64>> {
    let mut limits: Vec<Option<f64>> = network
        .branches
        .iter()
        .map(|br| if request.enforce_limits { br.flow_limit } else { None })
        .collect();
    for ov in request.overrides {
        limits[ov.branch] = ov.limit;
    }
    limits
}

pub fn dc_opf_with(
    network: &Network,
    request: &OpfRequest<'_>,
    tol: &Tolerances,
) -> Result<DispatchSolution> {
    let n = network.n_buses();
    let m = network.n_branches();
    if let Some(inj) = request.injections {
        if inj.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: inj.len(),
            });
        }
    }
    for ov in request.overrides {
        if ov.branch >= m {
            return Err(Error::Config(format!("override for unknown branch {}", ov.branch)));
        }
    }
    let limits = effective_limits(network, request);

    let mut lp = LinearProgram::new();
    let gen_vars: Vec<usize> = network
        .generators
        .iter()
        .map(|g| lp.add_var(g.marginal_cost, g.p_min, g.p_max))
        .collect();
    let angle_vars: Vec<usize> = (0..n)
        .map(|b| {
            if b == 0 {
                lp.add_var(0.0, 0.0, 0.0)
            } else {
                lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY)
            }
        })
        .collect();
    let flow_vars: Vec<usize> = limits
        .iter()
        .map(|lim| match lim {
            Some(f) => lp.add_var(0.0, -f, *f),
            None => lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY),
        })
        .collect();

    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (g, gen) in network.generators.iter().enumerate() {
        balance[gen.bus].push((gen_vars[g], 1.0));
    }
    for (l, br) in network.branches.iter().enumerate() {
        balance[br.from_bus].push((flow_vars[l], -1.0));
        balance[br.to_bus].push((flow_vars[l], 1.0));
    }
    let balance_rows: Vec<usize> = balance
        .into_iter()
        .enumerate()
        .map(|(b, coeffs)| {
            let extra = request.injections.map_or(0.0, |inj| inj[b]);
            lp.add_row(coeffs, Relation::Eq, network.buses[b].demand - extra)
        })
        .collect();
    for (l, br) in network.branches.iter().enumerate() {
        let y = network.base_mva / br.reactance;
        lp.add_row(
            vec![
                (flow_vars[l], 1.0),
                (angle_vars[br.from_bus], -y),
                (angle_vars[br.to_bus], y),
            ],
            Relation::Eq,
            0.0,
        );
    }

    let sol = match lp.solve()? {
        LpOutcome::Optimal(sol) => sol,
        LpOutcome::Infeasible { residual } => {
            let available: f64 = network.generators.iter().map(|g| g.p_max).sum();
            let extra: f64 = request.injections.map_or(0.0, |inj| inj.iter().sum());
            return Ok(DispatchSolution::infeasible(format!(
                "no dispatch satisfies the constraints (phase-1 residual {residual:.3e}); \
                 capacity {available:.3} MW, demand {:.3} MW, fixed injections {extra:.3} MW",
                network.total_demand()
            )));
        }
        LpOutcome::Unbounded => {
            return Err(Error::Solver(
                "dispatch LP unbounded despite finite generator limits".into(),
            ))
        }
    };

    let generation: Vec<f64> = gen_vars.iter().map(|&v| sol.x[v]).collect();
    let angles: Vec<f64> = angle_vars.iter().map(|&v| sol.x[v]).collect();
    let flows: Vec<f64> = flow_vars.iter().map(|&v| sol.x[v]).collect();
    let nodal_prices: Vec<f64> = balance_rows.iter().map(|&r| sol.duals[r]).collect();
    let binding_lines = binding(&flows, &limits, tol);

    Ok(DispatchSolution {
        feasible: true,
        generation,
        angles,
        flows,
        nodal_prices,
        objective: sol.objective,
        binding_lines,
        diagnostic: None,
    })
}

pub(crate) fn is_binding(flow: f64, limit: f64, tol: &Tolerances) -> bool {
    flow.abs() >= limit - tol.tol_binding * limit.max(1.0)
}

fn binding(flows: &[f64], limits: &[Option<f64>], tol: &Tolerances) -> Vec<usize> {
    flows
        .iter()
        .zip(limits)
        .enumerate()
        .filter_map(|(l, (&f, lim))| lim.filter(|&lim| is_binding(f, lim, tol)).map(|_| l))
        .collect()
}

/// Highest marginal cost among running generators.
pub fn uniform_price(
    solution: &DispatchSolution,
    network: &Network,
    tol: &Tolerances,
) -> Result<f64> {
    network
        .generators
        .iter()
        .zip(&solution.generation)
        .filter(|(_, &p)| p > tol.tol_running)
        .map(|(g, _)| g.marginal_cost)
        .reduce(f64::max)
        .ok_or(Error::NoRunningGenerator)
}

/// Lines whose limits bound the dispatch.
pub fn congested_lines(solution: &DispatchSolution) -> Vec<usize> {
    solution.binding_lines.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-6
    }

    #[test]
    fn two_bus_constrained() {
        let net = fixtures::two_bus();
        let tol = Tolerances::default();
        let s = dc_opf(&net, true, &[], &tol).unwrap();
        assert!(s.feasible);
        assert!(close(s.generation[0], 50.0) && close(s.generation[1], 30.0));
        assert!(close(s.flows[0], 50.0));
        assert!(close(s.nodal_prices[0], 10.0) && close(s.nodal_prices[1], 30.0));
        assert!(close(s.objective, 1400.0));
        assert_eq!(s.binding_lines, vec![0]);
        assert_eq!(congested_lines(&s), vec![0]);
        assert_eq!(uniform_price(&s, &net, &tol).unwrap(), 30.0);
    }

    #[test]
    fn two_bus_unconstrained() {
        let net = fixtures::two_bus();
        let tol = Tolerances::default();
        let s = dc_opf(&net, false, &[], &tol).unwrap();
        assert!(close(s.generation[0], 80.0) && close(s.generation[1], 0.0));
        assert!(close(s.flows[0], 80.0));
        assert!(close(s.nodal_prices[0], 10.0) && close(s.nodal_prices[1], 10.0));
        assert!(close(s.objective, 800.0));
        assert!(s.binding_lines.is_empty());
        assert_eq!(uniform_price(&s, &net, &tol).unwrap(), 10.0);
    }

    #[test]
    fn override_lifts_limit() {
        let net = fixtures::two_bus();
        let tol = Tolerances::default();
        let ov = [LimitOverride {
            branch: 0,
            limit: None,
        }];
        let s = dc_opf(&net, true, &ov, &tol).unwrap();
        assert!(close(s.objective, 800.0));
    }

    #[test]
    fn generous_limits_do_not_bind() {
        let mut net = fixtures::two_bus();
        net.branches[0].flow_limit = Some(1e4);
        let s = dc_opf(&net, true, &[], &Tolerances::default()).unwrap();
        assert!(congested_lines(&s).is_empty());
    }

    #[test]
    fn infeasible_is_reported_not_shed() {
        let mut net = fixtures::two_bus();
        net.buses[1].demand = 500.0;
        let s = dc_opf(&net, true, &[], &Tolerances::default()).unwrap();
        assert!(!s.feasible);
        assert!(s.diagnostic.unwrap().contains("demand"));
    }

    #[test]
    fn single_generator_price() {
        let mut net = fixtures::two_bus();
        net.generators.truncate(1);
        net.branches[0].flow_limit = None;
        let tol = Tolerances::default();
        let s = dc_opf(&net, true, &[], &tol).unwrap();
        assert_eq!(uniform_price(&s, &net, &tol).unwrap(), 10.0);
    }

    #[test]
    fn zero_demand_has_no_running_generator() {
        let mut net = fixtures::two_bus();
        net.buses[1].demand = 0.0;
        let tol = Tolerances::default();
        let s = dc_opf(&net, false, &[], &tol).unwrap();
        assert!(matches!(
            uniform_price(&s, &net, &tol),
            Err(Error::NoRunningGenerator)
        ));
    }

    #[test]
    fn flows_follow_angles() {
        let net = fixtures::triangle();
        let s = dc_opf(&net, true, &[], &Tolerances::default()).unwrap();
        for (l, br) in net.branches.iter().enumerate() {
            let expect = net.base_mva / br.reactance * (s.angles[br.from_bus] - s.angles[br.to_bus]);
            assert!((s.flows[l] - expect).abs() < 1e-6);
        }
        assert_eq!(s.angles[0], 0.0);
    }
}
