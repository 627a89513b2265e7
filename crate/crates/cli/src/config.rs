//! Run configuration files and map/reversor loading.

use std::path::{Path, PathBuf};

use revmap::harness::ScanConfig;
use revmap::portrait::PortraitConfig;
use revmap::{InvolutionSpec, MapSpec};
use serde::Deserialize;

use crate::Failure;

/// Environment variable consulted for the output directory when neither the flag nor the
/// run config sets one.
pub const OUT_DIR_ENV: &str = "REVMAP_OUT_DIR";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Map config path (relative paths resolve against the run config's directory).
    pub map: Option<PathBuf>,
    pub reversor: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub close: Option<CloseSection>,
    pub scan: Option<ScanConfig>,
    pub probe: Option<ProbeSection>,
    pub portrait: Option<PortraitConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub reversibility: f64,
    pub area: f64,
    pub involution: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { reversibility: 1e-10, area: 1e-8, involution: 1e-12 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloseSection {
    pub x: Option<[f64; 2]>,
    pub r: Option<f64>,
    pub eps: Option<f64>,
    pub n_max: Option<usize>,
    pub steps: Option<usize>,
    pub eta: Option<f64>,
    pub attempts: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub m: Option<usize>,
    pub sigma: Option<f64>,
    pub grid: Option<usize>,
    pub n_max: Option<usize>,
    pub budget: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = read(path)?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.map, &mut cfg.reversor, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        let t = &self.tolerances;
        for (name, v) in [("reversibility", t.reversibility), ("area", t.area), ("involution", t.involution)] {
            if !(v > 0.0) {
                return Err(Failure::Config(format!("tolerances.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read(path)?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }
}

/// Reads a map config (TOML, or JSON by extension) and validates it.
pub fn load_map(path: &Path) -> Result<MapSpec, Failure> {
    let map: MapSpec = parse(path)?;
    map.validate().map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(map)
}

/// The explicit reversor if given, otherwise the one shipped with the map family.
pub fn load_reversor(path: Option<&Path>, map: &MapSpec) -> Result<InvolutionSpec, Failure> {
    match path {
        Some(p) => parse(p),
        None => map
            .builtin_reversor()
            .ok_or_else(|| Failure::Config("map has no built-in reversor; pass --reversor".into())),
    }
}

pub fn to_toml<T: serde::Serialize>(value: &T) -> String {
    toml::to_string(value).expect("value serializes to TOML")
}
