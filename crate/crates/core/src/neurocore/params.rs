use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full scale of the 12-bit decay constants.
pub const DECAY_SCALE: f64 = 4096.0;

/// How `current_decay` / `voltage_decay` are turned into per-step factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// factor = (4096 − δ) / 4096
    #[default]
    Loihi,
    /// factor = exp(−1/τ), the value read as a time constant in steps.
    TimeConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronParams {
    pub v_th: i64,
    pub current_decay: f64,
    pub voltage_decay: f64,
    pub t_ref: u32,
    pub i_bias: i64,
    /// Current added per unit of synaptic weight on a spike arrival.
    pub weight_multiplier: i64,
    pub decay_mode: DecayMode,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            v_th: 64_000,
            current_decay: 380.0,
            voltage_decay: 400.0,
            t_ref: 2,
            i_bias: 0,
            weight_multiplier: 172,
            decay_mode: DecayMode::Loihi,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if self.v_th <= 0 {
            return Err(Error::config("neuron.v_th", "must be positive"));
        }
        for (field, value) in [
            ("neuron.current_decay", self.current_decay),
            ("neuron.voltage_decay", self.voltage_decay),
        ] {
            let ok = match self.decay_mode {
                DecayMode::Loihi => (0.0..=DECAY_SCALE).contains(&value),
                DecayMode::TimeConstant => value > 0.0 && value.is_finite(),
            };
            if !ok {
                return Err(Error::config(
                    field,
                    format!("{value} out of range for {:?} decay", self.decay_mode),
                ));
            }
        }
        Ok(())
    }

    fn factor(&self, value: f64) -> f64 {
        match self.decay_mode {
            DecayMode::Loihi => (DECAY_SCALE - value) / DECAY_SCALE,
            DecayMode::TimeConstant => (-1.0 / value).exp(),
        }
    }

    /// Per-step multiplicative decay of the synaptic current.
    pub fn current_factor(&self) -> f64 {
        self.factor(self.current_decay)
    }

    /// Per-step multiplicative decay of the membrane potential.
    pub fn voltage_factor(&self) -> f64 {
        self.factor(self.voltage_decay)
    }
}
