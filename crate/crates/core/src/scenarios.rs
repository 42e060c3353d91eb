//! Wind scenarios: Monte Carlo synthesis, CSV ingestion, and application to
//! a network as wind-unit availability.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::grid::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindScenario {
    pub id: usize,
    /// One factor in [0, 1] per wind generator, in network order.
    pub capacity_factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    MonteCarlo { seed: u64, params: WindParams },
    Csv { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<WindScenario>,
    pub provenance: Provenance,
}

/// Weibull wind-speed model and turbine power curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindParams {
    pub shape: f64,
    /// m/s
    pub scale: f64,
    pub cut_in: f64,
    pub rated: f64,
    pub cut_out: f64,
    /// One wind speed per scenario shared by every farm.
    pub shared_weather: bool,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            shape: 2.0,
            scale: 8.0,
            cut_in: 3.0,
            rated: 12.0,
            cut_out: 25.0,
            shared_weather: false,
        }
    }
}

impl WindParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.shape > 0.0
            && self.scale > 0.0
            && self.cut_in >= 0.0
            && self.cut_in < self.rated
            && self.rated <= self.cut_out
            && [self.shape, self.scale, self.cut_in, self.rated, self.cut_out]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid wind parameters: need shape, scale > 0 and 0 <= cut_in < rated <= cut_out, got {self:?}"
            )))
        }
    }

    /// Capacity factor at wind speed `v` (m/s).
    pub fn power_curve(&self, v: f64) -> f64 {
        if v < self.cut_in || v > self.cut_out {
            0.0
        } else if v >= self.rated {
            1.0
        } else {
            let ci3 = self.cut_in.powi(3);
            (v.powi(3) - ci3) / (self.rated.powi(3) - ci3)
        }
    }
}

/// Wind speed for one (scenario, farm) substream.
fn draw_speed(seed: u64, scenario: usize, farm: u64, dist: &Weibull<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario as u64) << 32) | (farm & 0xffff_ffff));
    dist.sample(&mut rng)
}

const SHARED_STREAM: u64 = 0xffff_ffff;

pub fn monte_carlo_scenarios(
    network: &Network,
    count: usize,
    seed: u64,
    params: &WindParams,
) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::Config("scenario count must be at least 1".into()));
    }
    params.validate()?;
    let dist = Weibull::new(params.scale, params.shape)
        .map_err(|e| Error::Config(format!("weibull parameters: {e}")))?;
    let farms = network.wind_generators().len();
    let scenarios = (0..count)
        .into_par_iter()
        .map(|id| {
            let shared = params
                .shared_weather
                .then(|| draw_speed(seed, id, SHARED_STREAM, &dist));
            let capacity_factors = (0..farms)
                .map(|f| {
                    let v = shared.unwrap_or_else(|| draw_speed(seed, id, f as u64, &dist));
                    params.power_curve(v)
                })
                .collect();
            WindScenario {
                id,
                capacity_factors,
            }
        })
        .collect();
    Ok(ScenarioSet {
        scenarios,
        provenance: Provenance::MonteCarlo {
            seed,
            params: *params,
        },
    })
}

/// Read capacity factors from CSV: header of wind-generator names, one row per scenario.
pub fn read_scenarios_csv(reader: impl Read, network: &Network, origin: &str) -> Result<ScenarioSet> {
    let wind = network.wind_generators();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = wind.iter().map(|&g| network.generator_name(g)).collect();
    let mut column_of = vec![usize::MAX; wind.len()];
    for (c, h) in header.iter().enumerate() {
        match names.iter().position(|n| n == h) {
            Some(k) => column_of[k] = c,
            None => {
                return Err(Error::Scenario(format!(
                    "unknown wind generator label '{h}' in header"
                )))
            }
        }
    }
    if let Some(k) = column_of.iter().position(|&c| c == usize::MAX) {
        return Err(Error::Scenario(format!(
            "missing column for wind generator '{}'",
            names[k]
        )));
    }
    let mut scenarios = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let mut factors = Vec::with_capacity(wind.len());
        for (k, &c) in column_of.iter().enumerate() {
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                Error::Scenario(format!(
                    "non-numeric value '{cell}' at row {row}, column {}",
                    names[k]
                ))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Scenario(format!(
                    "capacity factor {v} out of range [0, 1] at row {row}, column {}",
                    names[k]
                )));
            }
            factors.push(v);
        }
        scenarios.push(WindScenario {
            id: scenarios.len(),
            capacity_factors: factors,
        });
    }
    if scenarios.is_empty() {
        return Err(Error::Scenario("no scenarios".into()));
    }
    Ok(ScenarioSet {
        scenarios,
        provenance: Provenance::Csv {
            path: origin.to_string(),
        },
    })
}

pub fn load_scenarios_csv(path: impl AsRef<Path>, network: &Network) -> Result<ScenarioSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_scenarios_csv(file, network, &path.display().to_string())
}

/// Write the same CSV layout `read_scenarios_csv` accepts.
pub fn write_scenarios_csv(set: &ScenarioSet, network: &Network, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wind = network.wind_generators();
    if wind.is_empty() {
        // A header-only file cannot encode the scenario count.
        return Err(Error::Scenario(
            "network has no wind generators to write scenarios for".into(),
        ));
    }
    w.write_record(wind.iter().map(|&g| network.generator_name(g)))?;
    for s in &set.scenarios {
        w.write_record(s.capacity_factors.iter().map(|&v| fmt_num(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Copy of `network` with each wind unit's `p_max` set to rated × factor.
///
/// Rejects scenarios whose total available capacity falls short of demand.
pub fn apply_scenario(network: &Network, scenario: &WindScenario) -> Result<Network> {
    let wind = network.wind_generators();
    if scenario.capacity_factors.len() != wind.len() {
        return Err(Error::Dimension {
            expected: wind.len(),
            actual: scenario.capacity_factors.len(),
        });
    }
    let mut out = network.clone();
    for (&g, &f) in wind.iter().zip(&scenario.capacity_factors) {
        let gen = &mut out.generators[g];
        let rated = gen.rated();
        gen.rated_capacity = Some(rated);
        gen.p_max = rated * f;
        gen.p_min = 0.0;
    }
    let available: f64 = out.generators.iter().map(|g| g.p_max).sum();
    let demand = out.total_demand();
    if available < demand {
        return Err(Error::Inadequate { available, demand });
    }
    Ok(out)
}
