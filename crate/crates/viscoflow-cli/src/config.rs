//! Run configuration: defaults, flat key=value config files, and CLI
//! overrides (CLI wins).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use viscoflow::{Error, Law, ModelParams, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Case {
    Reservoir,
    Cavity,
    Channel,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Model {
    Hb,
    Carreau,
    Casson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Init {
    Stokes,
    Zero,
}

/// Geometry and data of a `custom` case: a crossed rectangle with a
/// constant body force and homogeneous Dirichlet walls.
#[derive(Debug, Clone)]
pub struct CustomCase {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub fx: f64,
    pub fy: f64,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: Case,
    pub nx: usize,
    pub model: Model,
    pub p: f64,
    pub mu: f64,
    pub tau_s: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub use_projection: bool,
    pub init: Init,
    pub out: Option<PathBuf>,
    pub vtk: bool,
    pub residual_csv: bool,
    pub stats_json: bool,
    pub residual_svg: bool,
    pub custom: Option<CustomCase>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: Case::Reservoir,
            nx: 32,
            model: Model::Hb,
            p: 1.75,
            mu: 1.0,
            tau_s: 10.0,
            gamma: 1e3,
            tol: 1e-5,
            max_iters: 50,
            use_projection: true,
            init: Init::Stokes,
            out: None,
            vtk: true,
            residual_csv: true,
            stats_json: true,
            residual_svg: true,
            custom: None,
        }
    }
}

impl RunConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        let law = match self.model {
            Model::Hb => Law::HerschelBulkley,
            Model::Carreau => Law::CarreauYield,
            Model::Casson => Law::Casson,
        };
        ModelParams::new(law, self.p, self.mu, self.tau_s, self.gamma)
    }
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("config key {key}: bad boolean {value:?}"))),
    }
}

/// Parses a flat `key = value` config file (one pair per line, `#` starts a
/// comment) and applies it on top of `config`.
pub fn apply_config_file(config: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "{}:{}: expected key = value",
                path.display(),
                lineno + 1
            )));
        };
        pairs.insert(key.trim().to_string(), value.trim().to_string());
    }

    let mut custom = config.custom.clone().unwrap_or(CustomCase {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
        nx: 0,
        ny: 0,
        fx: 0.0,
        fy: 0.0,
    });
    let mut saw_custom = false;

    for (key, value) in &pairs {
        let bad = |what: &str| {
            Error::InvalidArgument(format!("config key {key}: bad {what} {value:?}"))
        };
        match key.as_str() {
            "case" => {
                config.case = match value.as_str() {
                    "reservoir" => Case::Reservoir,
                    "cavity" => Case::Cavity,
                    "channel" => Case::Channel,
                    "custom" => Case::Custom,
                    _ => return Err(bad("case")),
                }
            }
            "model" => {
                config.model = match value.as_str() {
                    "hb" => Model::Hb,
                    "carreau" => Model::Carreau,
                    "casson" => Model::Casson,
                    _ => return Err(bad("model")),
                }
            }
            "init" => {
                config.init = match value.as_str() {
                    "stokes" => Init::Stokes,
                    "zero" => Init::Zero,
                    _ => return Err(bad("init")),
                }
            }
            "nx" => config.nx = value.parse().map_err(|_| bad("integer"))?,
            "p" => config.p = value.parse().map_err(|_| bad("number"))?,
            "mu" => config.mu = value.parse().map_err(|_| bad("number"))?,
            "tau_s" => config.tau_s = value.parse().map_err(|_| bad("number"))?,
            "gamma" => config.gamma = value.parse().map_err(|_| bad("number"))?,
            "tol" => config.tol = value.parse().map_err(|_| bad("number"))?,
            "max_iters" => config.max_iters = value.parse().map_err(|_| bad("integer"))?,
            "projection" => config.use_projection = parse_bool(value, key)?,
            "out" => config.out = Some(PathBuf::from(value)),
            "vtk" => config.vtk = parse_bool(value, key)?,
            "residual_csv" => config.residual_csv = parse_bool(value, key)?,
            "stats_json" => config.stats_json = parse_bool(value, key)?,
            "residual_svg" => config.residual_svg = parse_bool(value, key)?,
            "custom_x0" => { custom.x0 = value.parse().map_err(|_| bad("number"))?; saw_custom = true }
            "custom_y0" => { custom.y0 = value.parse().map_err(|_| bad("number"))?; saw_custom = true }
            "custom_x1" => { custom.x1 = value.parse().map_err(|_| bad("number"))?; saw_custom = true }
            "custom_y1" => { custom.y1 = value.parse().map_err(|_| bad("number"))?; saw_custom = true }
            "custom_nx" => { custom.nx = value.parse().map_err(|_| bad("integer"))?; saw_custom = true }
            "custom_ny" => { custom.ny = value.parse().map_err(|_| bad("integer"))?; saw_custom = true }
            "custom_fx" => { custom.fx = value.parse().map_err(|_| bad("number"))?; saw_custom = true }
            "custom_fy" => { custom.fy = value.parse().map_err(|_| bad("number"))?; saw_custom = true }
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key}"))),
        }
    }
    if saw_custom {
        config.custom = Some(custom);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn config_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# a comment").unwrap();
        writeln!(f, "case = cavity").unwrap();
        writeln!(f, "nx = 12").unwrap();
        writeln!(f, "tau_s = 2.5   # trailing comment").unwrap();
        writeln!(f, "projection = off").unwrap();
        drop(f);

        let mut config = RunConfig::default();
        apply_config_file(&mut config, &path).unwrap();
        assert_eq!(config.case, Case::Cavity);
        assert_eq!(config.nx, 12);
        assert_eq!(config.tau_s, 2.5);
        assert!(!config.use_projection);
        // Untouched keys keep their defaults.
        assert_eq!(config.gamma, 1e3);
    }

    #[test]
    fn rejects_malformed_lines_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "tau_s 2.5\n").unwrap();
        assert!(apply_config_file(&mut RunConfig::default(), &path).is_err());
        std::fs::write(&path, "speed = 11\n").unwrap();
        assert!(apply_config_file(&mut RunConfig::default(), &path).is_err());
        std::fs::write(&path, "nx = many\n").unwrap();
        assert!(apply_config_file(&mut RunConfig::default(), &path).is_err());
    }
}
