//! Small reference networks used by tests, examples and the CLI smoke tests.

use rand::Rng;

use crate::grid::{Branch, Bus, Generator, Network};

fn bus(id: usize, demand: f64) -> Bus {
    Bus {
        id,
        demand,
        label: None,
    }
}

fn line(id: usize, from_bus: usize, to_bus: usize, reactance: f64, limit: Option<f64>) -> Branch {
    Branch {
        id,
        from_bus,
        to_bus,
        reactance,
        flow_limit: limit,
    }
}

pub fn thermal(bus: usize, marginal_cost: f64, p_max: f64) -> Generator {
    Generator {
        bus,
        marginal_cost,
        p_min: 0.0,
        p_max,
        is_wind: false,
        rated_capacity: None,
        label: None,
    }
}

pub fn wind(bus: usize, rated: f64, label: &str) -> Generator {
    Generator {
        bus,
        marginal_cost: 0.0,
        p_min: 0.0,
        p_max: rated,
        is_wind: true,
        rated_capacity: Some(rated),
        label: Some(label.to_string()),
    }
}

/// Cheap unit at bus 0 (10/MWh), expensive unit at bus 1 (30/MWh),
/// 80 MW load at bus 1, one 50 MW line.
pub fn two_bus() -> Network {
    Network {
        base_mva: 100.0,
        buses: vec![bus(0, 0.0), bus(1, 80.0)],
        branches: vec![line(0, 0, 1, 0.1, Some(50.0))],
        generators: vec![thermal(0, 10.0, 100.0), thermal(1, 30.0, 100.0)],
    }
}

/// Equal-reactance triangle (0→1, 1→2, 0→2); units at buses 0 (10/MWh) and
/// 1 (20/MWh); 150 MW load at bus 2; line 0→2 limited to 80 MW.
pub fn triangle() -> Network {
    Network {
        base_mva: 100.0,
        buses: vec![bus(0, 0.0), bus(1, 0.0), bus(2, 150.0)],
        branches: vec![
            line(0, 0, 1, 0.1, None),
            line(1, 1, 2, 0.1, None),
            line(2, 0, 2, 0.1, Some(80.0)),
        ],
        generators: vec![thermal(0, 10.0, 200.0), thermal(1, 20.0, 200.0)],
    }
}

/// Path 0–1–…–(n−1) with unit reactances and no limits; one cheap unit at bus 0.
pub fn path(n: usize) -> Network {
    Network {
        base_mva: 100.0,
        buses: (0..n).map(|i| bus(i, 1.0)).collect(),
        branches: (0..n.saturating_sub(1))
            .map(|i| line(i, i, i + 1, 0.1, None))
            .collect(),
        generators: vec![thermal(0, 10.0, 10.0 * n as f64)],
    }
}

/// Random connected network: a random spanning tree plus up to `n` extra
/// edges, reactances in [0.02, 0.5].
pub fn random_connected<R: Rng>(rng: &mut R, n: usize) -> Network {
    let mut branches = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        let (f, t) = if rng.random_bool(0.5) { (u, v) } else { (v, u) };
        branches.push(line(branches.len(), f, t, rng.random_range(0.02..0.5), Some(100.0)));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            branches.push(line(branches.len(), a, b, rng.random_range(0.02..0.5), Some(100.0)));
        }
    }
    Network {
        base_mva: 100.0,
        buses: (0..n).map(|i| bus(i, rng.random_range(0.0..50.0))).collect(),
        branches,
        generators: vec![thermal(0, 10.0, 100.0 * n as f64)],
    }
}
