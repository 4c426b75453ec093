use serde::{Deserialize, Serialize};

use super::sim::simulate_regulated;
use super::{LifParams, Topology};
use crate::{Error, Result, SpikeRaster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegulationConfig {
    /// Target band of per-neuron rates, spikes per tick.
    pub rate_band: [f64; 2],
    pub eta: f64,
    pub window_ticks: usize,
}

impl Default for RegulationConfig {
    fn default() -> Self {
        RegulationConfig {
            rate_band: [0.02, 0.2],
            eta: 0.01,
            window_ticks: 100,
        }
    }
}

impl RegulationConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.rate_band;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::param("rate_band", "need 0 <= lo < hi <= 1"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::param("eta", "must lie in (0, 1)"));
        }
        if self.window_ticks == 0 {
            return Err(Error::param("window_ticks", "must be positive"));
        }
        Ok(())
    }

    pub fn target(&self) -> f64 {
        0.5 * (self.rate_band[0] + self.rate_band[1])
    }

    pub fn in_band(&self, rate: f64) -> bool {
        rate >= self.rate_band[0] && rate <= self.rate_band[1]
    }
}

/// Homeostatic synaptic scaling. Each neuron whose rate left the band scales
/// its own incoming weights: excitatory by `1 − η·s`, inhibitory magnitudes by
/// `1 + η·s`, where `s = sign(rate − target)`. Every weight is then clamped
/// back into its sign range. Returns the number of neurons adjusted.
pub fn regulate_weights(
    topology: &mut Topology,
    rates: &[f64],
    reg: &RegulationConfig,
) -> Result<usize> {
    if rates.len() != topology.n_neurons() {
        return Err(Error::ShapeMismatch(format!(
            "{} rates for {} neurons",
            rates.len(),
            topology.n_neurons()
        )));
    }
    if let Some(bad) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::param("rates", format!("rate {bad} outside [0, 1]")));
    }
    let target = reg.target();
    let [elo, ehi] = topology.excitatory_range;
    let [ilo, ihi] = topology.inhibitory_range;
    let mut adjusted = 0;
    for (j, &r) in rates.iter().enumerate() {
        if reg.in_band(r) {
            continue;
        }
        adjusted += 1;
        let s = if r > target { 1.0 } else { -1.0 };
        let (exc_scale, inh_scale) = (1.0 - reg.eta * s, 1.0 + reg.eta * s);
        for k in topology.in_offsets[j]..topology.in_offsets[j + 1] {
            let w = &mut topology.weights[topology.in_edges[k] as usize];
            *w = if *w > 0.0 {
                (*w * exc_scale).clamp(elo, ehi)
            } else {
                (*w * inh_scale).clamp(ilo, ihi)
            };
        }
    }
    Ok(adjusted)
}

/// Number of recurrent weights outside the range of their presynaptic sign.
pub fn check_weight_ranges(topology: &Topology) -> usize {
    let [elo, ehi] = topology.excitatory_range;
    let [ilo, ihi] = topology.inhibitory_range;
    topology
        .edges()
        .filter(|&(p, _, w)| {
            if topology.excitatory[p] {
                !(elo..=ehi).contains(&w)
            } else {
                !(ilo..=ihi).contains(&w)
            }
        })
        .count()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub n_rasters: usize,
    /// Mean network rate of every regulation window, in stream order.
    pub window_rates: Vec<f64>,
    pub weight_violations: usize,
}

/// Unsupervised adaptation: streams the rasters through the regulated
/// simulation in order, resetting neuron state between rasters. The adapted
/// weights are left in `topology`.
pub fn adapt(
    topology: &mut Topology,
    params: &LifParams,
    reg: &RegulationConfig,
    rasters: &[SpikeRaster],
) -> Result<AdaptReport> {
    if rasters.is_empty() {
        return Err(Error::Degenerate(
            "adaptation needs at least one raster".into(),
        ));
    }
    let mut report = AdaptReport {
        n_rasters: rasters.len(),
        ..AdaptReport::default()
    };
    for raster in rasters {
        let run = simulate_regulated(topology, params, reg, raster)?;
        report.window_rates.extend(run.window_rates);
        report.weight_violations += run.weight_violations;
    }
    Ok(report)
}
