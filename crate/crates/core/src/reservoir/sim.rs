use super::regulation::{check_weight_ranges, regulate_weights, RegulationConfig};
use super::{LifParams, Topology};
use crate::{Error, Result, SpikeRaster};

/// Membrane potentials must stay within `±V_BOUND` for bounded weights and inputs.
pub const V_BOUND: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub membrane_v: Vec<f64>,
    pub adaptive_threshold: Vec<f64>,
    pub refractory_remaining: Vec<u32>,
    pub tick: u64,
    /// Neurons that fired on the previous tick.
    pub last_fired: Vec<u32>,
}

impl ReservoirState {
    /// All neurons at rest with base thresholds.
    pub fn at_rest(n: usize, params: &LifParams) -> Self {
        ReservoirState {
            membrane_v: vec![params.v_rest; n],
            adaptive_threshold: vec![params.base_threshold; n],
            refractory_remaining: vec![0; n],
            tick: 0,
            last_fired: Vec::new(),
        }
    }
}

/// Per-tick update shared by [`step`] and the raster loops.
struct Kernel<'a> {
    topo: &'a Topology,
    params: &'a LifParams,
    leak: f64,
    decay: f64,
    current: Vec<f64>,
}

impl<'a> Kernel<'a> {
    fn new(topo: &'a Topology, params: &'a LifParams) -> Self {
        Kernel {
            topo,
            params,
            leak: params.leak(),
            decay: params.threshold_decay(),
            current: vec![0.0; topo.n_neurons()],
        }
    }

    /// Advances one tick; `fired` receives the neurons that spike now.
    fn tick(
        &mut self,
        state: &mut ReservoirState,
        active_inputs: impl Iterator<Item = usize>,
        fired: &mut Vec<u32>,
    ) {
        let topo = self.topo;
        for &p in &state.last_fired {
            for &e in topo.outgoing(p as usize) {
                self.current[topo.post[e as usize] as usize] += topo.weights[e as usize];
            }
        }
        for u in active_inputs {
            for &e in topo.input_fanout(u) {
                self.current[topo.input_target[e as usize] as usize] +=
                    topo.input_weights[e as usize];
            }
        }
        let p = self.params;
        fired.clear();
        for i in 0..topo.n_neurons() {
            let thr = &mut state.adaptive_threshold[i];
            *thr = p.base_threshold + (*thr - p.base_threshold) * self.decay;
            let v = &mut state.membrane_v[i];
            *v += self.leak * (p.v_rest - *v) + self.current[i];
            self.current[i] = 0.0;
            debug_assert!(
                v.abs() <= V_BOUND,
                "membrane potential {v} out of bounds at neuron {i}"
            );
            let refr = &mut state.refractory_remaining[i];
            if *refr > 0 {
                *refr -= 1;
            } else if *v >= *thr {
                *v = p.v_reset;
                *thr += p.threshold_increment;
                *refr = p.refractory_ticks;
                fired.push(i as u32);
            }
        }
        state.last_fired.clone_from(fired);
        state.tick += 1;
    }
}

/// One tick of the reservoir. `input` holds one 0/1 entry per input unit; the
/// return value holds one 0/1 entry per neuron.
pub fn step(
    state: &mut ReservoirState,
    topology: &Topology,
    params: &LifParams,
    input: &[u8],
) -> Result<Vec<u8>> {
    if input.len() != topology.n_inputs() {
        return Err(Error::ShapeMismatch(format!(
            "{} input entries for {} input units",
            input.len(),
            topology.n_inputs()
        )));
    }
    let n = topology.n_neurons();
    if state.membrane_v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "state has {} neurons, topology {n}",
            state.membrane_v.len()
        )));
    }
    let mut kernel = Kernel::new(topology, params);
    let mut fired = Vec::new();
    let active = input
        .iter()
        .enumerate()
        .filter(|(_, &s)| s != 0)
        .map(|(u, _)| u);
    kernel.tick(state, active, &mut fired);
    let mut out = vec![0u8; n];
    for f in fired {
        out[f as usize] = 1;
    }
    Ok(out)
}

fn check_input(topology: &Topology, params: &LifParams, input: &SpikeRaster) -> Result<()> {
    params.validate()?;
    if input.n_units() != topology.n_inputs() {
        return Err(Error::ShapeMismatch(format!(
            "raster has {} units, topology expects {} inputs",
            input.n_units(),
            topology.n_inputs()
        )));
    }
    if input.n_ticks() > 0 && (input.tick_rate_hz() - params.tick_rate_hz()).abs() > 1e-6 {
        return Err(Error::param(
            "tick_rate_hz",
            format!(
                "raster at {} Hz, reservoir ticks at {} Hz",
                input.tick_rate_hz(),
                params.tick_rate_hz()
            ),
        ));
    }
    Ok(())
}

/// Runs the frozen reservoir from rest over every tick of `input` and returns
/// the `n_neurons × ticks` output raster.
pub fn simulate(
    topology: &Topology,
    params: &LifParams,
    input: &SpikeRaster,
) -> Result<SpikeRaster> {
    check_input(topology, params, input)?;
    let n = topology.n_neurons();
    let mut out = SpikeRaster::zeros(n, input.n_ticks(), params.tick_rate_hz());
    let mut state = ReservoirState::at_rest(n, params);
    let mut kernel = Kernel::new(topology, params);
    let mut fired = Vec::new();
    for (t, active) in input.active_by_tick().iter().enumerate() {
        kernel.tick(&mut state, active.iter().map(|&u| u as usize), &mut fired);
        for &f in &fired {
            out.set(f as usize, t, true);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RegulatedRun {
    pub raster: SpikeRaster,
    /// Mean network rate (spikes per neuron per tick) of every completed window.
    pub window_rates: Vec<f64>,
    /// Weights found outside their sign range after a regulation step.
    pub weight_violations: usize,
}

/// Like [`simulate`], but applies [`regulate_weights`] at the end of every
/// regulation window, updating `topology` in place.
pub fn simulate_regulated(
    topology: &mut Topology,
    params: &LifParams,
    reg: &RegulationConfig,
    input: &SpikeRaster,
) -> Result<RegulatedRun> {
    check_input(topology, params, input)?;
    reg.validate()?;
    let n = topology.n_neurons();
    let mut out = SpikeRaster::zeros(n, input.n_ticks(), params.tick_rate_hz());
    let mut state = ReservoirState::at_rest(n, params);
    let mut counts = vec![0u32; n];
    let mut window_rates = Vec::new();
    let mut weight_violations = 0;
    let mut fired = Vec::new();
    let active = input.active_by_tick();
    let mut t = 0;
    while t < active.len() {
        let end = (t + reg.window_ticks).min(active.len());
        {
            let mut kernel = Kernel::new(topology, params);
            for (tick, inputs) in active.iter().enumerate().take(end).skip(t) {
                kernel.tick(&mut state, inputs.iter().map(|&u| u as usize), &mut fired);
                for &f in &fired {
                    out.set(f as usize, tick, true);
                    counts[f as usize] += 1;
                }
            }
        }
        if end - t == reg.window_ticks {
            let rates: Vec<f64> = counts
                .iter()
                .map(|&c| c as f64 / reg.window_ticks as f64)
                .collect();
            window_rates.push(rates.iter().sum::<f64>() / n as f64);
            regulate_weights(topology, &rates, reg)?;
            let bad = check_weight_ranges(topology);
            debug_assert_eq!(bad, 0, "weights left their sign range after regulation");
            weight_violations += bad;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        t = end;
    }
    Ok(RegulatedRun {
        raster: out,
        window_rates,
        weight_violations,
    })
}

/// Mean firing rate per neuron (spikes per tick) over a set of inputs, frozen weights.
pub fn neuron_rates(
    topology: &Topology,
    params: &LifParams,
    inputs: &[SpikeRaster],
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let n = topology.n_neurons();
    let per_input: Vec<(Vec<usize>, usize)> = inputs
        .par_iter()
        .map(|r| {
            let out = simulate(topology, params, r)?;
            let counts = (0..n)
                .map(|i| out.row(i).iter().map(|&s| s as usize).sum())
                .collect();
            Ok((counts, r.n_ticks()))
        })
        .collect::<Result<_>>()?;
    let ticks: usize = per_input.iter().map(|(_, t)| t).sum();
    let mut rates = vec![0.0; n];
    for (counts, _) in &per_input {
        for (r, &c) in rates.iter_mut().zip(counts) {
            *r += c as f64;
        }
    }
    if ticks > 0 {
        rates.iter_mut().for_each(|r| *r /= ticks as f64);
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{build_topology, TopologyConfig};

    /// One neuron driven by one input unit with weight `w`; a second silent
    /// neuron exists so the recurrent edge list is non-empty.
    fn single_neuron(w: f64) -> Topology {
        Topology::from_parts(
            [2, 1, 1],
            vec![true, true],
            vec![(1, 0, 0.25)],
            1,
            vec![(0, 0, w)],
            [0.25, 0.5],
            [-0.5, -0.25],
            0,
        )
        .unwrap()
    }

    #[test]
    fn silent_input_stays_at_rest() {
        let topo = build_topology(&TopologyConfig::default(), 4, 1).unwrap();
        let params = LifParams::default();
        let out = simulate(&topo, &params, &SpikeRaster::zeros(4, 300, 500.0)).unwrap();
        assert_eq!(out.total_spikes(), 0);
        let mut state = ReservoirState::at_rest(512, &params);
        for _ in 0..50 {
            step(&mut state, &topo, &params, &[0, 0, 0, 0]).unwrap();
        }
        assert!(state.membrane_v.iter().all(|&v| v == params.v_rest));
    }

    #[test]
    fn empty_raster_gives_empty_output() {
        let topo = build_topology(&TopologyConfig::default(), 4, 1).unwrap();
        let out = simulate(
            &topo,
            &LifParams::default(),
            &SpikeRaster::zeros(4, 0, 500.0),
        )
        .unwrap();
        assert_eq!(out.n_ticks(), 0);
        assert_eq!(out.n_units(), 512);
    }

    #[test]
    fn refractory_blocks_firing() {
        let params = LifParams {
            refractory_ticks: 2,
            threshold_increment: 0.0,
            ..LifParams::default()
        };
        let topo = single_neuron(5.0);
        let mut state = ReservoirState::at_rest(2, &params);
        let fired: Vec<u8> = (0..9)
            .map(|_| step(&mut state, &topo, &params, &[1]).unwrap()[0])
            .collect();
        // huge drive: fires, sits out exactly two ticks, fires again
        assert_eq!(fired, vec![1, 0, 0, 1, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn adaptive_threshold_never_below_base() {
        let params = LifParams::default();
        let topo = single_neuron(0.6);
        let mut state = ReservoirState::at_rest(2, &params);
        for t in 0..400 {
            let input = [(t % 3 == 0) as u8];
            step(&mut state, &topo, &params, &input).unwrap();
            assert!(state
                .adaptive_threshold
                .iter()
                .all(|&th| th >= params.base_threshold));
        }
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let topo = single_neuron(1.0);
        assert!(simulate(
            &topo,
            &LifParams::default(),
            &SpikeRaster::zeros(1, 10, 1000.0)
        )
        .is_err());
        assert!(simulate(
            &topo,
            &LifParams::default(),
            &SpikeRaster::zeros(2, 10, 500.0)
        )
        .is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let topo = build_topology(&TopologyConfig::default(), 8, 5).unwrap();
        let mut input = SpikeRaster::zeros(8, 500, 500.0);
        for u in 0..8 {
            for t in (u..500).step_by(3 + u) {
                input.set(u, t, true);
            }
        }
        let params = LifParams::default();
        let a = simulate(&topo, &params, &input).unwrap();
        let b = simulate(&topo, &params, &input).unwrap();
        assert_eq!(a, b);
        assert!(a.total_spikes() > 0);
    }
}
