//! Network topology: excitatory and inhibitory torus sheets, the
//! preferred-direction landscape, recurrent connectivity, the input patch
//! and the pooling layer.
//!
//! Neuron indices are global: excitatory `[0, n_exc)`, inhibitory
//! `[n_exc, n_exc + n_inh)`, pooling units after that.

pub mod build;
pub mod grid;
pub mod io;
pub mod landscape;
pub mod pooling;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use build::{build_anisotropic, build_random_control, out_degrees, LocalProfile};
pub use grid::{torus_distance, wrap_delta, GridPoint, GridSpec};
pub use landscape::{Direction, DirectionLandscape, PeriodicPerlin};
pub use pooling::{select_input_patch, PoolingLayout};

use crate::config::{NetworkConfig, NetworkKind};
use crate::error::Result;

/// All synapses have a one-step delay.
pub const SYNAPTIC_DELAY: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub weight: i32,
    pub delay: u8,
}

impl Edge {
    pub fn new(source: usize, target: usize, weight: i32) -> Self {
        Edge {
            source: source as u32,
            target: target as u32,
            weight,
            delay: SYNAPTIC_DELAY,
        }
    }
}

/// Immutable network graph. Edges are grouped by source in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connectome {
    pub grid: GridSpec,
    pub kind: NetworkKind,
    pub edges: Vec<Edge>,
    pub input_patch: Vec<usize>,
    pub pooling: PoolingLayout,
}

impl Connectome {
    /// Adds the pooling projections to a recurrent edge list and sorts by source.
    pub fn assemble(
        grid: GridSpec,
        kind: NetworkKind,
        mut edges: Vec<Edge>,
        pooling: PoolingLayout,
        pool_weight: i32,
        input_patch: Vec<usize>,
    ) -> Self {
        let pool_base = grid.exc_count() + grid.inh_count();
        for (unit, patch) in pooling.patches.iter().enumerate() {
            for &src in patch {
                edges.push(Edge::new(src, pool_base + unit, pool_weight));
            }
        }
        // stable: keeps draw order within a source
        edges.sort_by_key(|e| e.source);
        Connectome {
            grid,
            kind,
            edges,
            input_patch,
            pooling,
        }
    }

    pub fn exc_count(&self) -> usize {
        self.grid.exc_count()
    }

    pub fn inh_count(&self) -> usize {
        self.grid.inh_count()
    }

    pub fn pool_count(&self) -> usize {
        self.pooling.unit_count()
    }

    /// First global index of the pooling layer.
    pub fn pool_offset(&self) -> usize {
        self.exc_count() + self.inh_count()
    }

    pub fn neuron_count(&self) -> usize {
        self.pool_offset() + self.pool_count()
    }

    /// Edges whose target is not a pooling unit.
    pub fn recurrent_edges(&self) -> impl Iterator<Item = &Edge> {
        let base = self.pool_offset() as u32;
        self.edges.iter().filter(move |e| e.target < base)
    }

    pub fn pooling_edges(&self) -> impl Iterator<Item = &Edge> {
        let base = self.pool_offset() as u32;
        self.edges.iter().filter(move |e| e.target >= base)
    }

    /// Same neurons, pooling layout and input patch; no synapses.
    pub fn without_edges(&self) -> Self {
        Connectome {
            edges: Vec::new(),
            ..self.clone()
        }
    }

    /// SHA-256 over the edge list and input patch.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.edges {
            h.update(e.source.to_le_bytes());
            h.update(e.target.to_le_bytes());
            h.update(e.weight.to_le_bytes());
            h.update([e.delay]);
        }
        for &n in &self.input_patch {
            h.update((n as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// A built network with the landscape it was shaped by (anisotropic only).
#[derive(Debug, Clone)]
pub struct Network {
    pub connectome: Connectome,
    pub landscape: Option<DirectionLandscape>,
}

/// Builds the full network of the requested kind from a configuration.
pub fn build_network(cfg: &NetworkConfig, kind: NetworkKind) -> Result<Network> {
    cfg.validate()?;
    let grid = cfg.grid;
    let c = &cfg.connectivity;
    let pooling = PoolingLayout::build(&grid, cfg.pooling.window)?;
    let input_patch = select_input_patch(&grid, cfg.input.origin(), cfg.input.size)?;
    let (edges, landscape) = match kind {
        NetworkKind::Anisotropic => {
            let landscape = DirectionLandscape::build(&grid, c.perlin_scale, cfg.seeds.landscape)?;
            let profile = LocalProfile {
                p_conn: c.p_conn,
                sigma_exc: c.sigma_exc,
                sigma_inh: c.sigma_inh,
                n_shift: c.n_shift,
                j_exc: c.j_exc,
                j_inh: c.j_inh,
            };
            let edges = build_anisotropic(&grid, &landscape, &profile, cfg.seeds.connections)?;
            (edges, Some(landscape))
        }
        NetworkKind::Random => {
            let edges = build_random_control(
                &grid,
                c.p_conn,
                cfg.random.j_exc,
                cfg.random.j_inh,
                cfg.seeds.random_connections,
            )?;
            (edges, None)
        }
    };
    Ok(Network {
        connectome: Connectome::assemble(grid, kind, edges, pooling, cfg.pooling.weight, input_patch),
        landscape,
    })
}
