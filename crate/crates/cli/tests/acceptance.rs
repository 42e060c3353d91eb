//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! then fails if any criterion failed.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonal::clustering::{consensus_cluster, ward_connectivity_cluster, Partition};
use zonal::fixtures;
use zonal::grid::{load_case, Network};
use zonal::opf::dc_opf;
use zonal::pipeline::{lmp_pipeline, sequential_partition, PipelineConfig};
use zonal::ptdf::{flows_from_injections, generalized_ptdf, ptdf_matrix, InjectionVector, PtdfMatrix};
use zonal::scenarios::{apply_scenario, monte_carlo_scenarios, ScenarioSet, WindParams, WindScenario};
use zonal::welfare::{market_outcome, uniform_market_cost, WelfareConfig};
use zonal::Tolerances;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn case(name: &str) -> PathBuf {
    repo().join("cases").join(name)
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: false,
        detail: detail.into(),
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    Outcome { ok: cond, detail }
}

/// Row end factors 0.7 and −0.2 become ±0.45 after the row shift of −0.25.
fn worked_example() -> Outcome {
    let start = Instant::now();
    let mut net = fixtures::path(3);
    net.branches.truncate(1);
    net.branches.push(zonal::Branch {
        id: 1,
        from_bus: 1,
        to_bus: 2,
        reactance: 0.1,
        flow_limit: None,
    });
    let h = PtdfMatrix {
        values: DMatrix::from_row_slice(2, 3, &[0.7, -0.2, 0.1, 0.0, 0.0, 0.0]),
        reference_bus: 2,
    };
    let s = generalized_ptdf(&h, &net).unwrap();
    let elapsed = start.elapsed();
    let got = [s.values[(0, 0)], s.values[(0, 1)], s.values[(0, 2)]];
    let want = [0.45, -0.45, -0.15];
    let err = got
        .iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    check(
        err <= 1e-12 && elapsed < Duration::from_millis(1),
        format!("row {got:?}, max error {err:.1e}, {elapsed:?}"),
    )
}

fn random_suite() -> Vec<(Network, InjectionVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200)
        .map(|_| {
            let n = rng.random_range(4..=20);
            let net = fixtures::random_connected(&mut rng, n);
            let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let s: f64 = p.iter().sum();
            p[n - 1] -= s;
            (net, InjectionVector(p))
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn reference_invariance(suite: &[(Network, InjectionVector)]) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for (net, p) in suite {
        let scale = inf_norm(&p.0);
        let flows: Vec<Vec<f64>> = (0..net.n_buses())
            .map(|r| flows_from_injections(&ptdf_matrix(net, r).unwrap(), p).unwrap())
            .collect();
        let s = generalized_ptdf(&ptdf_matrix(net, 0).unwrap(), net).unwrap();
        let via_s = flows_from_injections(&s, p).unwrap();
        for i in 0..flows.len() {
            for j in i + 1..flows.len() {
                let d: Vec<f64> = flows[i].iter().zip(&flows[j]).map(|(a, b)| a - b).collect();
                worst = worst.max(inf_norm(&d) / scale);
            }
            let d: Vec<f64> = flows[i].iter().zip(&via_s).map(|(a, b)| a - b).collect();
            worst = worst.max(inf_norm(&d) / scale);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("200 networks, worst relative gap {worst:.1e}, {elapsed:?}"),
    )
}

fn end_antisymmetry(suite: &[(Network, InjectionVector)]) -> Outcome {
    let mut worst_ends = 0.0_f64;
    let mut worst_ref = 0.0_f64;
    for (net, _) in suite {
        let s0 = generalized_ptdf(&ptdf_matrix(net, 0).unwrap(), net).unwrap();
        for (l, br) in net.branches.iter().enumerate() {
            worst_ends = worst_ends.max((s0.values[(l, br.from_bus)] + s0.values[(l, br.to_bus)]).abs());
        }
        for r in 1..net.n_buses() {
            let sr = generalized_ptdf(&ptdf_matrix(net, r).unwrap(), net).unwrap();
            worst_ref = worst_ref.max((&s0.values - &sr.values).amax());
        }
    }
    check(
        worst_ends <= 1e-9 && worst_ref <= 1e-9,
        format!("max |S_ln + S_lm| {worst_ends:.1e}, max reference gap {worst_ref:.1e}"),
    )
}

fn opf_oracle() -> Outcome {
    let tol = Tolerances::default();
    let mut notes = Vec::new();
    for (name, net) in [("two_bus", fixtures::two_bus()), ("triangle", fixtures::triangle())] {
        let step = 1.0;
        let max_cost = net.generators.iter().map(|g| g.marginal_cost).fold(0.0, f64::max);
        for enforce in [true, false] {
            let sol = dc_opf(&net, enforce, &[], &tol).unwrap();
            let Some(brute) = common::brute_force_opf(&net, enforce, step) else {
                return fail(format!("{name}: enumeration found no dispatch"));
            };
            let gap = brute.cost - sol.objective;
            let dispatch_gap = sol
                .generation
                .iter()
                .zip(&brute.generation)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if !(-1e-6..=max_cost * step + 1e-6).contains(&gap) || dispatch_gap > step + 1e-6 {
                return fail(format!("{name} limits={enforce}: cost gap {gap}, dispatch gap {dispatch_gap}"));
            }
            if !enforce {
                let spread = sol.nodal_prices.iter().fold(f64::NEG_INFINITY, |a: f64, p| a.max(*p))
                    - sol.nodal_prices.iter().fold(f64::INFINITY, |a: f64, p| a.min(*p));
                if spread > 1e-6 {
                    return fail(format!("{name}: unconstrained price spread {spread}"));
                }
            }
            notes.push(format!("{name}/{}: {:.1}", if enforce { "lim" } else { "free" }, sol.objective));
        }
    }
    pass(notes.join(", "))
}

fn contiguous_path_partitions(n: usize) -> Vec<Partition> {
    // Every subset of the n − 1 cut positions.
    (0..1usize << (n - 1))
        .map(|mask| {
            let mut z = 0;
            let labels: Vec<usize> = (0..n)
                .map(|i| {
                    if i > 0 && mask >> (i - 1) & 1 == 1 {
                        z += 1;
                    }
                    z
                })
                .collect();
            Partition::from_labels(&labels)
        })
        .collect()
}

fn clustering_oracle() -> Outcome {
    let plateaus = [(10.0, 30.0), (5.0, 6.0), (40.0, -3.0), (0.0, 100.0)];
    let mut cases = 0;
    for n in 2..=8 {
        let net = fixtures::path(n);
        for cut in 1..n {
            for &(lo, hi) in &plateaus {
                let prices: Vec<f64> = (0..n).map(|i| if i < cut { lo } else { hi }).collect();
                let p = ward_connectivity_cluster(&prices, &net, 2).unwrap();
                let (_, best) = common::best_path_split(&prices);
                let got = common::wcss(&prices, &p.zone_of);
                if (got - best).abs() > 1e-9 {
                    return fail(format!("n={n} cut={cut}: Ward {got} vs enumeration {best}"));
                }
                cases += 1;
            }
        }
        for part in contiguous_path_partitions(n) {
            let copies = vec![part.clone(); 3];
            let out = consensus_cluster(&copies, &net, part.k).unwrap();
            if out[part.k - 1] != part {
                return fail(format!("consensus did not reproduce {:?}", part.zone_of));
            }
            cases += 1;
        }
    }
    pass(format!("{cases} cases"))
}

fn all_contiguous(net: &Network) -> Vec<Partition> {
    let n = net.n_buses();
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(i: usize, next: usize, labels: &mut Vec<usize>, net: &Network, out: &mut Vec<Partition>) {
        if i == labels.len() {
            let p = Partition::from_labels(labels);
            if p.is_contiguous(net) {
                out.push(p);
            }
            return;
        }
        for z in 0..=next {
            labels[i] = z;
            rec(i + 1, next.max(z + 1), labels, net, out);
        }
    }
    rec(0, 0, &mut labels, net, &mut out);
    out
}

fn welfare_identities() -> Outcome {
    let cfg = WelfareConfig::default();
    let tol = &cfg.tolerances;
    let no_wind = |count: usize| -> Vec<WindScenario> {
        (0..count)
            .map(|id| WindScenario {
                id,
                capacity_factors: vec![],
            })
            .collect()
    };
    let mut fixtures_list: Vec<(String, Network, Vec<WindScenario>, Vec<Partition>)> = Vec::new();
    for (name, net) in [("two_bus", fixtures::two_bus()), ("triangle", fixtures::triangle())] {
        let parts = all_contiguous(&net);
        fixtures_list.push((name.into(), net, no_wind(1), parts));
    }
    for (name, count) in [("case9_wind.m", 20), ("case30_wind.m", 100)] {
        let net = load_case(case(name)).unwrap();
        let set = monte_carlo_scenarios(&net, count, 42, &WindParams::default()).unwrap();
        let pcfg = PipelineConfig::default();
        let mut parts = lmp_pipeline(&net, &set, &pcfg).unwrap().candidates;
        parts.extend(sequential_partition(&net, &set, &pcfg).unwrap().candidates);
        fixtures_list.push((name.into(), net, set.scenarios, parts));
    }
    let mut cells = 0;
    let mut congestion_free = 0;
    let mut worst_identity = 0.0_f64;
    for (name, net, scenarios, parts) in &fixtures_list {
        for s in scenarios {
            let Ok(applied) = apply_scenario(net, s) else { continue };
            let constrained = dc_opf(&applied, true, &[], tol).unwrap();
            if !constrained.feasible {
                continue;
            }
            let uniform = uniform_market_cost(net, s, &cfg).unwrap();
            worst_identity = worst_identity.max((uniform.total - constrained.objective).abs());
            let single = market_outcome(&applied, &Partition::single_zone(net.n_buses()), &cfg)
                .unwrap()
                .breakdown;
            if single.total != uniform.total
                || single.energy_value != uniform.energy_value
                || single.balancing_cost != uniform.balancing_cost
            {
                return fail(format!("{name} scenario {}: single zone differs from uniform", s.id));
            }
            let free = constrained.binding_lines.is_empty();
            congestion_free += usize::from(free);
            for p in parts {
                let c = market_outcome(&applied, p, &cfg).unwrap().breakdown;
                cells += 1;
                if free && ((c.total - uniform.total).abs() > 1e-6 || c.congestion_rent != 0.0) {
                    return fail(format!(
                        "{name} scenario {} is congestion-free but partition {:?} gives total {} (uniform {}) rent {}",
                        s.id, p.zone_of, c.total, uniform.total, c.congestion_rent
                    ));
                }
            }
        }
    }
    check(
        worst_identity <= 1e-6,
        format!(
            "{} fixtures, {cells} partition cells, {congestion_free} congestion-free scenarios, \
             worst |uniform − constrained| {worst_identity:.1e}",
            fixtures_list.len()
        ),
    )
}

fn thirty_bus_scenarios() -> (Network, ScenarioSet) {
    let net = load_case(case("case30_wind.m")).unwrap();
    let set = monte_carlo_scenarios(&net, 100, 42, &WindParams::default()).unwrap();
    (net, set)
}

fn sequential_monotonicity() -> Outcome {
    let (net, set) = thirty_bus_scenarios();
    let cfg = PipelineConfig::default();
    let r = sequential_partition(&net, &set, &cfg).unwrap();
    let monotone = r.accepted_totals.windows(2).all(|w| w[1] <= w[0]);
    let contiguous = r
        .candidates
        .iter()
        .chain(std::iter::once(&r.recommended))
        .chain(r.trials.iter().filter_map(|t| t.candidate.as_ref()))
        .all(|p| p.is_contiguous(&net));
    check(
        monotone && contiguous,
        format!(
            "{} lines tried, {} accepted, totals {:?}, recommended k = {}",
            r.trials.len(),
            r.accepted_totals.len() - 1,
            r.accepted_totals,
            r.recommended.k
        ),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn run_compare(dir: &Path, threads: &str) -> std::io::Result<(Duration, bool)> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_zonal"))
        .args([
            "zones",
            "compare",
            "--case",
            case("case30_wind.m").to_str().unwrap(),
            "--gen-scenarios",
            "100",
            "--seed",
            "42",
            "--max-k",
            "6",
            "--threads",
            threads,
            "--out-dir",
            dir.to_str().unwrap(),
        ])
        .env("RUST_LOG", "error")
        .stdout(std::process::Stdio::null())
        .status()?;
    Ok((start.elapsed(), status.success()))
}

fn end_to_end_determinism() -> Outcome {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut times = Vec::new();
    for (dir, threads) in dirs.iter().zip(["8", "8", "1"]) {
        match run_compare(dir.path(), threads) {
            Ok((t, true)) => times.push(t),
            Ok((_, false)) => return fail(format!("zones compare failed with {threads} threads")),
            Err(e) => return fail(format!("could not run binary: {e}")),
        }
    }
    for name in ["comparison.json", "report.csv", "zones_lmp.dot", "zones_ptdf.dot"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            if std::fs::read(d.path().join(name)).unwrap() != a {
                return fail(format!("{name} differs between runs"));
            }
        }
    }
    let slowest = times.iter().max().copied().unwrap_or_default();
    check(
        slowest < Duration::from_secs(60),
        format!("identical outputs over 2 runs at 8 threads and 1 at 1 thread; slowest {slowest:?}"),
    )
}

#[test]
fn acceptance() {
    let suite = random_suite();
    let criteria: Vec<Criterion> = vec![
        ("generalized PTDF worked example", Box::new(worked_example)),
        ("reference invariance of flows", Box::new(|| reference_invariance(&suite))),
        ("end antisymmetry of S", Box::new(|| end_antisymmetry(&suite))),
        ("OPF matches enumeration", Box::new(opf_oracle)),
        ("clustering matches enumeration", Box::new(clustering_oracle)),
        ("welfare accounting identities", Box::new(welfare_identities)),
        ("sequential partition monotonicity", Box::new(sequential_monotonicity)),
        ("end-to-end determinism and budget", Box::new(end_to_end_determinism)),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.ok { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "acceptance {}: {tag} {name}: {}", i + 1, o.detail);
        let _ = out.flush();
        if !o.ok {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
