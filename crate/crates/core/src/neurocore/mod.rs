//! Discrete-time LIF neurons with multiplicative current and voltage decay,
//! threshold reset, refractory counter and one-step synaptic delay.

pub mod engine;
pub mod params;
pub mod raster;

pub use engine::{
    inject_pulse, run, Injection, InjectionPlan, NeuronState, Simulator, SynapseTable,
    STATE_LIMIT,
};
pub use params::{DecayMode, NeuronParams, DECAY_SCALE};
pub use raster::SpikeRaster;
