//! Regulated spiking reservoir: LIF neurons with adaptive thresholds on a 3-D
//! grid, small-world recurrent connectivity, and homeostatic weight scaling
//! that keeps per-neuron rates inside a target band.

pub mod io;
mod regulation;
mod sim;
mod topology;

pub use regulation::{adapt, check_weight_ranges, regulate_weights, AdaptReport, RegulationConfig};
pub use sim::{
    neuron_rates, simulate, simulate_regulated, step, RegulatedRun, ReservoirState, V_BOUND,
};
pub use topology::{build_topology, Topology, TopologyConfig};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    pub tau_mem_ms: f64,
    pub v_rest: f64,
    pub v_reset: f64,
    pub base_threshold: f64,
    pub threshold_increment: f64,
    pub tau_threshold_ms: f64,
    pub refractory_ticks: u32,
    /// One tick; 2 ms matches one sample at 500 Hz.
    pub dt_ms: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            tau_mem_ms: 30.0,
            v_rest: 0.0,
            v_reset: 0.0,
            base_threshold: 1.0,
            threshold_increment: 0.5,
            tau_threshold_ms: 50.0,
            refractory_ticks: 2,
            dt_ms: 2.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_mem_ms > 0.0 && self.tau_threshold_ms > 0.0) {
            return Err(Error::param("tau", "time constants must be positive"));
        }
        if !(self.dt_ms > 0.0) {
            return Err(Error::param("dt_ms", "must be positive"));
        }
        if !(self.base_threshold > self.v_reset) {
            return Err(Error::param("base_threshold", "must exceed v_reset"));
        }
        if !(self.threshold_increment >= 0.0) {
            return Err(Error::param("threshold_increment", "must be >= 0"));
        }
        Ok(())
    }

    pub fn tick_rate_hz(&self) -> f64 {
        1000.0 / self.dt_ms
    }

    /// Fraction of the distance to rest recovered per tick.
    pub fn leak(&self) -> f64 {
        self.dt_ms / self.tau_mem_ms
    }

    pub fn threshold_decay(&self) -> f64 {
        (-self.dt_ms / self.tau_threshold_ms).exp()
    }
}
