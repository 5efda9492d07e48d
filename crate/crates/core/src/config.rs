//! Network configuration, loadable from a TOML file whose sections mirror
//! the model parameter table.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connectome::grid::{GridPoint, GridSpec};
use crate::error::{Error, Result};
use crate::neurocore::NeuronParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    #[default]
    Anisotropic,
    Random,
}

impl NetworkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::Anisotropic => "anisotropic",
            NetworkKind::Random => "random",
        }
    }
}

impl std::fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectivityConfig {
    pub p_conn: f64,
    pub sigma_exc: f64,
    pub sigma_inh: f64,
    pub n_shift: u32,
    pub perlin_scale: usize,
    pub j_exc: i32,
    /// Magnitude; applied with a negative sign.
    pub j_inh: i32,
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        ConnectivityConfig {
            p_conn: 0.05,
            sigma_exc: 12.0,
            sigma_inh: 9.0,
            n_shift: 1,
            perlin_scale: 4,
            j_exc: 12,
            j_inh: 48,
        }
    }
}

/// Weights and drive of the uniformly connected control network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomControlConfig {
    pub j_exc: i32,
    pub j_inh: i32,
}

impl Default for RandomControlConfig {
    fn default() -> Self {
        RandomControlConfig { j_exc: 24, j_inh: 96 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Pooling units are spiking neurons driven by their patch.
    #[default]
    Spiking,
    /// Diagnostic: sum of the patch's binned excitatory spike counts.
    PatchCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolingConfig {
    pub window: usize,
    pub weight: i32,
    pub mode: PoolingMode,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        PoolingConfig {
            window: 10,
            weight: 1,
            mode: PoolingMode::Spiking,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub origin_x: usize,
    pub origin_y: usize,
    pub size: usize,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            origin_x: 28,
            origin_y: 28,
            size: 5,
        }
    }
}

impl InputConfig {
    pub fn origin(&self) -> GridPoint {
        GridPoint::new(self.origin_x, self.origin_y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub landscape: u64,
    pub connections: u64,
    pub random_connections: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            landscape: 1,
            connections: 2,
            random_connections: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub grid: GridSpec,
    pub connectivity: ConnectivityConfig,
    pub neuron: NeuronParams,
    pub pooling: PoolingConfig,
    pub input: InputConfig,
    pub random: RandomControlConfig,
    pub seeds: Seeds,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let c = &self.connectivity;
        if !(c.p_conn > 0.0 && c.p_conn < 1.0) {
            return Err(Error::config("connectivity.p_conn", "must lie in (0, 1)"));
        }
        if !(c.sigma_exc > 0.0 && c.sigma_exc.is_finite()) {
            return Err(Error::config("connectivity.sigma_exc", "must be positive"));
        }
        if !(c.sigma_inh > 0.0 && c.sigma_inh.is_finite()) {
            return Err(Error::config("connectivity.sigma_inh", "must be positive"));
        }
        if c.perlin_scale == 0 {
            return Err(Error::config("connectivity.perlin_scale", "must be at least 1"));
        }
        if c.j_exc < 0 || c.j_inh < 0 {
            return Err(Error::config("connectivity.j_exc", "weights are magnitudes"));
        }
        if self.random.j_exc < 0 || self.random.j_inh < 0 {
            return Err(Error::config("random.j_exc", "weights are magnitudes"));
        }
        self.neuron.validate()?;
        let side = self.grid.exc_side;
        if self.pooling.window == 0 || !side.is_multiple_of(self.pooling.window) {
            return Err(Error::config("pooling.window", "must divide exc_side"));
        }
        if self.input.size == 0 || self.input.size > side {
            return Err(Error::config("input.size", "out of range"));
        }
        if self.input.origin_x >= side || self.input.origin_y >= side {
            return Err(Error::config("input.origin_x", "outside the sheet"));
        }
        Ok(())
    }

    /// Stable hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// SHA-256 of a value's JSON serialization (field order is declaration order, so stable).
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text).map_err(|e| match e {
        Error::Parse { line, reason, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        },
        other => other,
    })
}

pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            path: "<config>".into(),
            line,
            reason: e.message().to_string(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_valid_and_match_table() {
        let c = NetworkConfig::default();
        c.validate().unwrap();
        assert_eq!(c.grid.exc_count(), 3600);
        assert_eq!(c.grid.inh_count(), 900);
        assert_eq!(c.connectivity.j_exc, 12);
        assert_eq!(c.connectivity.j_inh, 48);
        assert_eq!(c.neuron.v_th, 64000);
    }

    #[test]
    fn toml_partial_override() {
        let c: NetworkConfig = parse_toml("[connectivity]\nsigma_exc = 8.0\n").unwrap();
        assert_eq!(c.connectivity.sigma_exc, 8.0);
        assert_eq!(c.connectivity.sigma_inh, 9.0);
    }

    #[test]
    fn invalid_sigma_names_field() {
        let c: NetworkConfig = parse_toml("[connectivity]\nsigma_exc = -1.0\n").unwrap();
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "connectivity.sigma_exc"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let r: Result<NetworkConfig> = parse_toml("[neuron]\nvth = 3\n");
        assert!(matches!(r, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = NetworkConfig::default();
        let mut b = a;
        assert_eq!(a.hash(), b.hash());
        b.seeds.connections += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
