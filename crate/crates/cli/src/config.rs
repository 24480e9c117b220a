use std::path::{Path, PathBuf};

use hopf_energy::optimizer::OptimizerConfig;
use hopf_energy::quadrature::Resolution;
use hopf_energy::{DomainSpec, Error, FieldSpec, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Pretty,
}

/// A field given by name (`hopf`, `hopf-opposite`, `file:PATH`) or inline.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FieldArg {
    Name(String),
    Spec(FieldSpec),
}

/// Contents of a `--config` file. Every key is optional; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub k: Option<usize>,
    pub domain: Option<String>,
    pub resolution: Option<[usize; 2]>,
    pub field: Option<FieldArg>,
    pub t_grid: Option<Vec<f64>>,
    pub optimizer: Option<OptimizerConfig>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub timing: Option<bool>,
    pub samples: Option<u64>,
    pub dims: Option<Vec<usize>>,
    pub points: Option<usize>,
    pub rho: Option<Vec<f64>>,
    pub runs: Option<u64>,
    pub initial: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
    }

    pub fn check_command(&self, name: &str) -> Result<()> {
        match &self.command {
            Some(c) if c != name => Err(Error::InvalidInput(format!(
                "config is for command `{c}` but `{name}` was invoked"
            ))),
            _ => Ok(()),
        }
    }
}

pub fn parse_resolution(s: &str) -> std::result::Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => {
            let a = a.parse().map_err(|e| format!("radial count: {e}"))?;
            let b = b.parse().map_err(|e| format!("angular count: {e}"))?;
            Ok([a, b])
        }
        _ => Err("expected NR,NA".into()),
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}"))).collect()
}

pub fn resolve_domain(k: usize, s: Option<&str>) -> Result<DomainSpec> {
    match s {
        Some(s) => DomainSpec::parse(k, s),
        None => DomainSpec::cap(k, 1.0),
    }
}

pub fn resolve_resolution(k: usize, r: Option<[usize; 2]>) -> [usize; 2] {
    r.unwrap_or_else(|| {
        let d = Resolution::default_for(k);
        [d.radial, d.angular]
    })
}

pub fn resolve_field(k: usize, arg: Option<FieldArg>) -> Result<FieldSpec> {
    let spec = match arg {
        None => FieldSpec::hopf(k),
        Some(FieldArg::Spec(s)) => s,
        Some(FieldArg::Name(name)) => match name.as_str() {
            "hopf" => FieldSpec::hopf(k),
            "hopf-opposite" => FieldSpec::opposite_hopf(k),
            other => match other.strip_prefix("file:") {
                Some(path) => FieldSpec::from_json(&std::fs::read_to_string(path)?)?,
                None => {
                    return Err(Error::InvalidInput(format!(
                        "unknown field `{other}` (expected hopf, hopf-opposite or file:PATH)"
                    )))
                }
            },
        },
    };
    if spec.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: spec.k() });
    }
    spec.validate()?;
    Ok(spec)
}
