//! Independent reference computations for the integration tests.
//!
//! Nothing here calls the library's solvers: flows come from Gaussian
//! elimination on the reduced susceptance matrix, dispatch from exhaustive
//! enumeration, clusterings from enumerating every contiguous split of a path.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonal::fixtures;
use zonal::grid::{Branch, Network};

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        assert!(a[piv][col].abs() > 1e-14, "singular system");
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// DC flows (MW) for net injections `p` (MW), absorbing any imbalance at `slack`.
pub fn dc_flows(net: &Network, p: &[f64], slack: usize) -> Vec<f64> {
    let n = net.n_buses();
    let keep: Vec<usize> = (0..n).filter(|&b| b != slack).collect();
    let pos = |b: usize| keep.iter().position(|&k| k == b);
    let mut bmat = vec![vec![0.0; n - 1]; n - 1];
    for br in &net.branches {
        let y = 1.0 / br.reactance;
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        if let Some(f) = f {
            bmat[f][f] += y;
        }
        if let Some(t) = t {
            bmat[t][t] += y;
        }
        if let (Some(f), Some(t)) = (f, t) {
            bmat[f][t] -= y;
            bmat[t][f] -= y;
        }
    }
    let rhs: Vec<f64> = keep.iter().map(|&b| p[b] / net.base_mva).collect();
    let theta_r = if n > 1 { solve_dense(bmat, rhs) } else { vec![] };
    let mut theta = vec![0.0; n];
    for (i, &b) in keep.iter().enumerate() {
        theta[b] = theta_r[i];
    }
    net.branches
        .iter()
        .map(|br| net.base_mva * (theta[br.from_bus] - theta[br.to_bus]) / br.reactance)
        .collect()
}

/// Reference-bus PTDF: column k is the flow response to +1 at k, −1 at `reference`.
pub fn ptdf_oracle(net: &Network, reference: usize) -> Vec<Vec<f64>> {
    let n = net.n_buses();
    let m = net.n_branches();
    let mut h = vec![vec![0.0; n]; m];
    for k in 0..n {
        if k == reference {
            continue;
        }
        let mut p = vec![0.0; n];
        p[k] = 1.0;
        p[reference] = -1.0;
        for (l, f) in dc_flows(net, &p, reference).into_iter().enumerate() {
            h[l][k] = f;
        }
    }
    h
}

pub struct BruteDispatch {
    pub generation: Vec<f64>,
    pub cost: f64,
}

/// Cheapest dispatch on a `step` MW grid for all units but the last, which
/// takes the remainder. Feasibility is checked by a direct DC flow solve.
pub fn brute_force_opf(net: &Network, enforce_limits: bool, step: f64) -> Option<BruteDispatch> {
    let g = net.generators.len();
    let demand = net.total_demand();
    let mut best: Option<BruteDispatch> = None;
    let mut current = vec![0.0; g];
    fn rec(
        net: &Network,
        k: usize,
        current: &mut Vec<f64>,
        enforce: bool,
        step: f64,
        demand: f64,
        best: &mut Option<BruteDispatch>,
    ) {
        let g = net.generators.len();
        if k == g - 1 {
            let used: f64 = current[..k].iter().sum();
            let last = demand - used;
            let gen = &net.generators[k];
            if last < gen.p_min - 1e-9 || last > gen.p_max + 1e-9 {
                return;
            }
            current[k] = last;
            let mut p: Vec<f64> = net.buses.iter().map(|b| -b.demand).collect();
            for (i, gen) in net.generators.iter().enumerate() {
                p[gen.bus] += current[i];
            }
            let flows = dc_flows(net, &p, 0);
            let ok = !enforce
                || net
                    .branches
                    .iter()
                    .zip(&flows)
                    .all(|(br, f)| br.flow_limit.is_none_or(|lim| f.abs() <= lim + 1e-7));
            if ok {
                let cost: f64 = net
                    .generators
                    .iter()
                    .zip(current.iter())
                    .map(|(gen, p)| gen.marginal_cost * p)
                    .sum();
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    *best = Some(BruteDispatch {
                        generation: current.clone(),
                        cost,
                    });
                }
            }
            return;
        }
        let gen = &net.generators[k];
        let mut p = gen.p_min;
        while p <= gen.p_max + 1e-9 {
            current[k] = p;
            rec(net, k + 1, current, enforce, step, demand, best);
            p += step;
        }
    }
    rec(net, 0, &mut current, enforce_limits, step, demand, &mut best);
    best
}

/// Within-cluster sum of squares of `values` under `labels`.
pub fn wcss(values: &[f64], labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![0.0; k];
    let mut cnt = vec![0.0; k];
    for (v, &l) in values.iter().zip(labels) {
        sum[l] += v;
        cnt[l] += 1.0;
    }
    values
        .iter()
        .zip(labels)
        .map(|(v, &l)| (v - sum[l] / cnt[l]).powi(2))
        .sum()
}

/// Best contiguous 2-split of a path by within-cluster sum of squares:
/// returns (cut position, wcss) where buses `< cut` form the first zone.
pub fn best_path_split(values: &[f64]) -> (usize, f64) {
    (1..values.len())
        .map(|cut| {
            let labels: Vec<usize> = (0..values.len()).map(|i| usize::from(i >= cut)).collect();
            (cut, wcss(values, &labels))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Random market: a random meshed grid with several priced units, tighter
/// limits and, when `wind` is set, two wind farms.
pub fn random_market(seed: u64, n: usize, wind: bool) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = fixtures::random_connected(&mut rng, n);
    for br in &mut net.branches {
        br.flow_limit = Some(rng.random_range(30.0..120.0));
    }
    net.generators[0].p_max = net.total_demand() + 50.0;
    let extra = rng.random_range(1..=3usize);
    for _ in 0..extra {
        let b = rng.random_range(0..n);
        let cost = rng.random_range(12.0..60.0_f64).round();
        net.generators
            .push(fixtures::thermal(b, cost, rng.random_range(20.0..120.0)));
    }
    if wind {
        for k in 0..2 {
            let b = rng.random_range(0..n);
            net.generators
                .push(fixtures::wind(b, rng.random_range(20.0..80.0), &format!("w{k}")));
        }
    }
    net
}

/// Random tree with the same unit mix as `random_market`.
pub fn random_tree_market(seed: u64, n: usize) -> Network {
    let mut net = random_market(seed, n, true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    net.branches = (1..n)
        .map(|v| Branch {
            id: v - 1,
            from_bus: rng.random_range(0..v),
            to_bus: v,
            reactance: rng.random_range(0.02..0.5),
            flow_limit: Some(rng.random_range(30.0..120.0)),
        })
        .collect();
    net
}
