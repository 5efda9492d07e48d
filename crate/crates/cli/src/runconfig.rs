//! The run file: network parameter sections plus `[run]` and `[elastic_net]`.

use std::path::{Path, PathBuf};

use anisonet::config::{
    config_hash, load_toml, ConnectivityConfig, InputConfig, PoolingConfig, RandomControlConfig, Seeds,
};
use anisonet::connectome::grid::GridSpec;
use anisonet::neurocore::NeuronParams;
use anisonet::protocol::ReadoutSource;
use anisonet::readout::{ElasticNetConfig, Method, TaskKind};
use anisonet::trajectories::Action;
use anisonet::{Error, NetworkConfig, NetworkKind, Result};
use serde::{Deserialize, Serialize};

/// Number of leave-one-out trials per protocol run.
const TRIALS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub kind: NetworkKind,
    pub readout: ReadoutSource,
    pub tasks: Vec<TaskKind>,
    pub methods: Vec<Method>,
    pub trajectories: Vec<Action>,
    /// Extra `t,x,y,z` recordings, used alongside the built-in actions.
    pub trajectory_files: Vec<PathBuf>,
    pub test_trial: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            kind: NetworkKind::Anisotropic,
            readout: ReadoutSource::Pooling,
            tasks: vec![TaskKind::Representation, TaskKind::Generalisation],
            methods: vec![Method::OlsPooling, Method::ElasticnetExcitatory],
            trajectories: Action::ALL.to_vec(),
            trajectory_files: Vec::new(),
            test_trial: 0,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunOptions,
    pub elastic_net: ElasticNetConfig,
    pub grid: GridSpec,
    pub connectivity: ConnectivityConfig,
    pub neuron: NeuronParams,
    pub pooling: PoolingConfig,
    pub input: InputConfig,
    pub random: RandomControlConfig,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = load_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = anisonet::config::parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            grid: self.grid,
            connectivity: self.connectivity,
            neuron: self.neuron,
            pooling: self.pooling,
            input: self.input,
            random: self.random,
            seeds: self.seeds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network().validate()?;
        self.elastic_net.validate()?;
        if self.run.test_trial >= TRIALS {
            return Err(Error::config("run.test_trial", format!("must be below {TRIALS}")));
        }
        if self.run.trajectories.is_empty() && self.run.trajectory_files.is_empty() {
            return Err(Error::config("run.trajectories", "no trajectories selected"));
        }
        if self.run.tasks.is_empty() || self.run.methods.is_empty() {
            return Err(Error::config("run.tasks", "tasks and methods must be non-empty"));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            "[run]\nkind = \"random\"\ntrajectories = [\"hide\", \"take_down\"]\n\n[connectivity]\nsigma_exc = 10.0\n\n[elastic_net]\nalpha = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.run.kind, NetworkKind::Random);
        assert_eq!(cfg.run.trajectories, vec![Action::Hide, Action::TakeDown]);
        assert_eq!(cfg.connectivity.sigma_exc, 10.0);
        assert_eq!(cfg.elastic_net.alpha, 0.01);
    }

    #[test]
    fn bad_sigma_names_field() {
        let err = RunConfig::parse("[connectivity]\nsigma_inh = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("connectivity.sigma_inh"), "{err}");
    }

    #[test]
    fn unknown_key_has_line() {
        match RunConfig::parse("[run]\nkind = \"random\"\nbogus = 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds.landscape += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
