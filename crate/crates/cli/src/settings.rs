//! Run settings shared by all subcommands: flags layered over a config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use zonal::pipeline::PipelineConfig;
use zonal::scenarios::WindParams;
use zonal::welfare::WelfareConfig;
use zonal::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Dot,
}

/// Every key accepted by a config file; flag names are the same.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct Settings {
    /// Case file (MATPOWER `.m` or JSON)
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Read wind scenarios from this CSV instead of generating them
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Number of Monte Carlo wind scenarios
    #[arg(long, visible_alias = "count")]
    pub gen_scenarios: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub weibull_shape: Option<f64>,
    #[arg(long)]
    pub weibull_scale: Option<f64>,
    #[arg(long)]
    pub cut_in: Option<f64>,
    #[arg(long)]
    pub rated_speed: Option<f64>,
    #[arg(long)]
    pub cut_out: Option<f64>,
    /// One wind draw per scenario shared by all farms
    #[arg(long)]
    pub shared_weather: bool,
    /// Largest number of zones to propose
    #[arg(long)]
    pub max_k: Option<usize>,
    /// Zone count of each per-scenario price clustering (defaults to --max-k)
    #[arg(long)]
    pub k_scenario: Option<usize>,
    /// Skip lines congested in a smaller share of scenarios
    #[arg(long)]
    pub frequency_floor: Option<f64>,
    /// Retry rejected lines once after the first pass
    #[arg(long)]
    pub repass: bool,
    #[arg(long)]
    pub penalty: Option<f64>,
    #[arg(long)]
    pub tol_binding: Option<f64>,
    #[arg(long)]
    pub tol_dual: Option<f64>,
    #[arg(long)]
    pub tol_running: Option<f64>,
    #[arg(long)]
    pub tol_sign: Option<f64>,
    #[arg(long)]
    pub tol_welfare: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Output formats to write
    #[arg(long, value_enum, value_delimiter = ',')]
    #[serde(default)]
    pub formats: Vec<Format>,
}

pub const DEFAULT_SCENARIOS: usize = 100;
pub const DEFAULT_SEED: u64 = 42;

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        let mut s: Settings = parsed
            .map_err(|e| zonal::Error::Config(format!("{}: {e}", path.display())))?;
        // Relative paths in a config file are taken from the file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut s.case, &mut s.scenarios, &mut s.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// Flags win over the file.
    pub fn over(self, file: Settings) -> Settings {
        Settings {
            case: self.case.or(file.case),
            scenarios: self.scenarios.or(file.scenarios),
            gen_scenarios: self.gen_scenarios.or(file.gen_scenarios),
            seed: self.seed.or(file.seed),
            weibull_shape: self.weibull_shape.or(file.weibull_shape),
            weibull_scale: self.weibull_scale.or(file.weibull_scale),
            cut_in: self.cut_in.or(file.cut_in),
            rated_speed: self.rated_speed.or(file.rated_speed),
            cut_out: self.cut_out.or(file.cut_out),
            shared_weather: self.shared_weather || file.shared_weather,
            max_k: self.max_k.or(file.max_k),
            k_scenario: self.k_scenario.or(file.k_scenario),
            frequency_floor: self.frequency_floor.or(file.frequency_floor),
            repass: self.repass || file.repass,
            penalty: self.penalty.or(file.penalty),
            tol_binding: self.tol_binding.or(file.tol_binding),
            tol_dual: self.tol_dual.or(file.tol_dual),
            tol_running: self.tol_running.or(file.tol_running),
            tol_sign: self.tol_sign.or(file.tol_sign),
            tol_welfare: self.tol_welfare.or(file.tol_welfare),
            threads: self.threads.or(file.threads),
            out_dir: self.out_dir.or(file.out_dir),
            formats: if self.formats.is_empty() {
                file.formats
            } else {
                self.formats
            },
        }
    }

    pub fn case(&self) -> Result<&Path> {
        match &self.case {
            Some(p) => Ok(p),
            None => bail!(zonal::Error::Config("--case is required".into())),
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            tol_binding: self.tol_binding.unwrap_or(d.tol_binding),
            tol_dual: self.tol_dual.unwrap_or(d.tol_dual),
            tol_running: self.tol_running.unwrap_or(d.tol_running),
            tol_sign: self.tol_sign.unwrap_or(d.tol_sign),
            tol_welfare: self.tol_welfare.unwrap_or(d.tol_welfare),
        }
    }

    pub fn wind_params(&self) -> WindParams {
        let d = WindParams::default();
        WindParams {
            shape: self.weibull_shape.unwrap_or(d.shape),
            scale: self.weibull_scale.unwrap_or(d.scale),
            cut_in: self.cut_in.unwrap_or(d.cut_in),
            rated: self.rated_speed.unwrap_or(d.rated),
            cut_out: self.cut_out.unwrap_or(d.cut_out),
            shared_weather: self.shared_weather,
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let d = PipelineConfig::default();
        let cfg = PipelineConfig {
            welfare: WelfareConfig {
                tolerances: self.tolerances(),
                infeasibility_penalty: self
                    .penalty
                    .unwrap_or(d.welfare.infeasibility_penalty),
            },
            max_k: self.max_k.unwrap_or(d.max_k),
            k_scenario: self.k_scenario,
            frequency_floor: self.frequency_floor.unwrap_or(d.frequency_floor),
            repass: self.repass,
        };
        if cfg.max_k == 0 {
            bail!(zonal::Error::Config("--max-k must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.is_empty() || self.formats.contains(&f)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str("max-k = 4\nseed = 1\nformats = [\"json\"]\n").unwrap();
        let flags = Settings {
            seed: Some(9),
            ..Settings::default()
        };
        let s = flags.over(file);
        assert_eq!(s.max_k, Some(4));
        assert_eq!(s.seed, Some(9));
        assert!(s.wants(Format::Json) && !s.wants(Format::Dot));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<Settings>("maxk = 4\n").is_err());
        let s: Settings = serde_json::from_str(r#"{"gen-scenarios": 3}"#).unwrap();
        assert_eq!(s.gen_scenarios, Some(3));
    }
}
