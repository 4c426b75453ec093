use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::util::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub grid_dims: [usize; 3],
    pub excitatory_fraction: f64,
    /// Peak connection probability `C` of the distance kernel `C·exp(−d²/λ²)`.
    pub connection_scale: f64,
    /// Kernel length `λ` in grid units.
    pub connection_lambda: f64,
    /// Pairs whose kernel probability falls below this are never connected locally.
    pub kernel_floor: f64,
    /// Fraction of local edges re-targeted uniformly at random.
    pub rewire_p: f64,
    pub excitatory_weight_range: [f64; 2],
    pub inhibitory_weight_range: [f64; 2],
    /// Fraction of neurons each input unit projects to.
    pub input_fraction: f64,
    pub input_weight: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            grid_dims: [8, 8, 8],
            excitatory_fraction: 0.8,
            connection_scale: 0.3,
            connection_lambda: 2.0,
            kernel_floor: 1e-4,
            rewire_p: 0.1,
            excitatory_weight_range: [0.25, 0.50],
            inhibitory_weight_range: [-0.50, -0.25],
            input_fraction: 0.05,
            input_weight: 0.2,
        }
    }
}

impl TopologyConfig {
    pub fn n_neurons(&self) -> usize {
        self.grid_dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neurons() < 2 {
            return Err(Error::param("grid_dims", "need at least 2 neurons"));
        }
        if !(0.0..=1.0).contains(&self.excitatory_fraction) {
            return Err(Error::param("excitatory_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.rewire_p) {
            return Err(Error::param("rewire_p", "must lie in [0, 1]"));
        }
        if !(self.connection_scale >= 0.0 && self.connection_lambda > 0.0) {
            return Err(Error::param(
                "connection_scale",
                "need C >= 0 and lambda > 0",
            ));
        }
        let [elo, ehi] = self.excitatory_weight_range;
        let [ilo, ihi] = self.inhibitory_weight_range;
        if !(0.0 < elo && elo <= ehi && ilo <= ihi && ihi < 0.0) {
            return Err(Error::param(
                "weight_range",
                "need 0 < exc_lo <= exc_hi and inh_lo <= inh_hi < 0",
            ));
        }
        if !(0.0..=1.0).contains(&self.input_fraction) {
            return Err(Error::param("input_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Neurons, recurrent edges and the input projection of one reservoir.
///
/// Edges are stored as parallel arrays; per-neuron outgoing and incoming edge
/// indices are kept in CSR form for the simulation and regulation loops.
#[derive(Debug, Clone)]
pub struct Topology {
    pub(crate) grid_dims: [usize; 3],
    pub(crate) excitatory: Vec<bool>,
    pub(crate) pre: Vec<u32>,
    pub(crate) post: Vec<u32>,
    pub(crate) weights: Vec<f64>,
    pub(crate) n_inputs: usize,
    pub(crate) input_unit: Vec<u32>,
    pub(crate) input_target: Vec<u32>,
    pub(crate) input_weights: Vec<f64>,
    pub(crate) excitatory_range: [f64; 2],
    pub(crate) inhibitory_range: [f64; 2],
    pub(crate) seed: u64,
    // derived
    pub(crate) out_offsets: Vec<usize>,
    pub(crate) out_edges: Vec<u32>,
    pub(crate) in_offsets: Vec<usize>,
    pub(crate) in_edges: Vec<u32>,
    pub(crate) input_offsets: Vec<usize>,
    pub(crate) input_edges: Vec<u32>,
}

impl PartialEq for Topology {
    fn eq(&self, o: &Self) -> bool {
        self.grid_dims == o.grid_dims
            && self.excitatory == o.excitatory
            && self.pre == o.pre
            && self.post == o.post
            && self
                .weights
                .iter()
                .map(|w| w.to_bits())
                .eq(o.weights.iter().map(|w| w.to_bits()))
            && self.n_inputs == o.n_inputs
            && self.input_unit == o.input_unit
            && self.input_target == o.input_target
            && self
                .input_weights
                .iter()
                .map(|w| w.to_bits())
                .eq(o.input_weights.iter().map(|w| w.to_bits()))
            && self.excitatory_range == o.excitatory_range
            && self.inhibitory_range == o.inhibitory_range
            && self.seed == o.seed
    }
}

/// Edges as `(pre, post, weight)` plus the input projection as `(unit, neuron, weight)`.
pub type EdgeList = Vec<(u32, u32, f64)>;

impl Topology {
    /// Assembles a topology from explicit parts. Recurrent weights must respect
    /// the sign of their presynaptic neuron; input weights are unconstrained.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid_dims: [usize; 3],
        excitatory: Vec<bool>,
        edges: EdgeList,
        n_inputs: usize,
        input_projection: EdgeList,
        excitatory_range: [f64; 2],
        inhibitory_range: [f64; 2],
        seed: u64,
    ) -> Result<Self> {
        let n: usize = grid_dims.iter().product();
        if excitatory.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} excitatory flags for {n} neurons",
                excitatory.len()
            )));
        }
        for &(p, q, w) in &edges {
            let (p, q) = (p as usize, q as usize);
            if p >= n || q >= n {
                return Err(Error::param(
                    "edges",
                    format!("edge {p}->{q} outside {n} neurons"),
                ));
            }
            if p == q {
                return Err(Error::param("edges", format!("self-loop on neuron {p}")));
            }
            if (w > 0.0) != excitatory[p] || w == 0.0 {
                return Err(Error::param(
                    "edges",
                    format!("weight {w} has the wrong sign for neuron {p}"),
                ));
            }
        }
        for &(u, q, _) in &input_projection {
            if u as usize >= n_inputs || q as usize >= n {
                return Err(Error::param(
                    "input_projection",
                    format!("edge {u}->{q} out of range"),
                ));
            }
        }
        let mut t = Topology {
            grid_dims,
            excitatory,
            pre: edges.iter().map(|e| e.0).collect(),
            post: edges.iter().map(|e| e.1).collect(),
            weights: edges.iter().map(|e| e.2).collect(),
            n_inputs,
            input_unit: input_projection.iter().map(|e| e.0).collect(),
            input_target: input_projection.iter().map(|e| e.1).collect(),
            input_weights: input_projection.iter().map(|e| e.2).collect(),
            excitatory_range,
            inhibitory_range,
            seed,
            out_offsets: Vec::new(),
            out_edges: Vec::new(),
            in_offsets: Vec::new(),
            in_edges: Vec::new(),
            input_offsets: Vec::new(),
            input_edges: Vec::new(),
        };
        t.reindex();
        Ok(t)
    }

    pub(crate) fn reindex(&mut self) {
        let n = self.n_neurons();
        (self.out_offsets, self.out_edges) = csr(n, &self.pre);
        (self.in_offsets, self.in_edges) = csr(n, &self.post);
        (self.input_offsets, self.input_edges) = csr(self.n_inputs, &self.input_unit);
    }

    pub fn n_neurons(&self) -> usize {
        self.excitatory.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_edges(&self) -> usize {
        self.pre.len()
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn excitatory(&self) -> &[bool] {
        &self.excitatory
    }

    pub fn n_excitatory(&self) -> usize {
        self.excitatory.iter().filter(|&&e| e).count()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn excitatory_range(&self) -> [f64; 2] {
        self.excitatory_range
    }

    pub fn inhibitory_range(&self) -> [f64; 2] {
        self.inhibitory_range
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.pre.len()).map(|e| (self.pre[e] as usize, self.post[e] as usize, self.weights[e]))
    }

    pub fn input_projection(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.input_unit.len()).map(|e| {
            (
                self.input_unit[e] as usize,
                self.input_target[e] as usize,
                self.input_weights[e],
            )
        })
    }

    /// Incoming edge indices of `neuron`.
    #[cfg(test)]
    pub(crate) fn incoming(&self, neuron: usize) -> &[u32] {
        &self.in_edges[self.in_offsets[neuron]..self.in_offsets[neuron + 1]]
    }

    pub(crate) fn outgoing(&self, neuron: usize) -> &[u32] {
        &self.out_edges[self.out_offsets[neuron]..self.out_offsets[neuron + 1]]
    }

    pub(crate) fn input_fanout(&self, unit: usize) -> &[u32] {
        &self.input_edges[self.input_offsets[unit]..self.input_offsets[unit + 1]]
    }

    pub fn coords(&self, neuron: usize) -> [usize; 3] {
        coords(self.grid_dims, neuron)
    }

    /// Copy with the input projection rebuilt for a different number of input
    /// units; recurrent structure and weights are kept.
    pub fn with_inputs(&self, cfg: &TopologyConfig, n_inputs: usize) -> Topology {
        let mut t = self.clone();
        let (unit, target, weights) = input_projection(cfg, self.n_neurons(), n_inputs, self.seed);
        t.n_inputs = n_inputs;
        t.input_unit = unit;
        t.input_target = target;
        t.input_weights = weights;
        t.reindex();
        t
    }
}

fn csr(n: usize, keys: &[u32]) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; n + 1];
    for &k in keys {
        offsets[k as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut items = vec![0u32; keys.len()];
    for (e, &k) in keys.iter().enumerate() {
        items[fill[k as usize]] = e as u32;
        fill[k as usize] += 1;
    }
    (offsets, items)
}

pub(crate) fn coords(dims: [usize; 3], i: usize) -> [usize; 3] {
    [
        i % dims[0],
        (i / dims[0]) % dims[1],
        i / (dims[0] * dims[1]),
    ]
}

pub(crate) fn squared_distance(a: [usize; 3], b: [usize; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

const STREAM_MASK: u64 = 1;
const STREAM_EDGES: u64 = 2;
const STREAM_REWIRE: u64 = 3;
const STREAM_WEIGHTS: u64 = 4;
const STREAM_INPUT: u64 = 5;

fn input_projection(
    cfg: &TopologyConfig,
    n: usize,
    n_inputs: usize,
    seed: u64,
) -> (Vec<u32>, Vec<u32>, Vec<f64>) {
    let mut r = rng(seed, STREAM_INPUT);
    let fan = ((cfg.input_fraction * n as f64).round() as usize).clamp(1, n);
    let mut unit = Vec::with_capacity(n_inputs * fan);
    let mut target = Vec::with_capacity(n_inputs * fan);
    for u in 0..n_inputs {
        let mut picks = sample(&mut r, n, fan).into_vec();
        picks.sort_unstable();
        for q in picks {
            unit.push(u as u32);
            target.push(q as u32);
        }
    }
    let weights = vec![cfg.input_weight; unit.len()];
    (unit, target, weights)
}

/// Grid placement, distance-kernel wiring, small-world rewiring, initial
/// weights and the input projection, all derived from `seed`.
pub fn build_topology(cfg: &TopologyConfig, n_inputs: usize, seed: u64) -> Result<Topology> {
    cfg.validate()?;
    let n = cfg.n_neurons();

    let n_exc = (cfg.excitatory_fraction * n as f64).round() as usize;
    let mut excitatory = vec![false; n];
    for i in sample(&mut rng(seed, STREAM_MASK), n, n_exc) {
        excitatory[i] = true;
    }

    let mut edge_rng = rng(seed, STREAM_EDGES);
    let lambda2 = cfg.connection_lambda * cfg.connection_lambda;
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (p, targets) in adjacency.iter_mut().enumerate() {
        let cp = coords(cfg.grid_dims, p);
        for q in 0..n {
            if q == p {
                continue;
            }
            let prob = cfg.connection_scale
                * (-squared_distance(cp, coords(cfg.grid_dims, q)) / lambda2).exp();
            if prob < cfg.kernel_floor {
                continue;
            }
            if edge_rng.random::<f64>() < prob {
                targets.push(q as u32);
            }
        }
    }

    let mut rewire_rng = rng(seed, STREAM_REWIRE);
    for p in 0..n {
        for k in 0..adjacency[p].len() {
            if rewire_rng.random::<f64>() >= cfg.rewire_p {
                continue;
            }
            // up to a few attempts to find a fresh, non-self target
            for _ in 0..16 {
                let q = rewire_rng.random_range(0..n) as u32;
                if q as usize != p && !adjacency[p].contains(&q) {
                    adjacency[p][k] = q;
                    break;
                }
            }
        }
    }

    let mut weight_rng = rng(seed, STREAM_WEIGHTS);
    let mut edges: EdgeList = Vec::new();
    for (p, targets) in adjacency.iter().enumerate() {
        let [lo, hi] = if excitatory[p] {
            cfg.excitatory_weight_range
        } else {
            cfg.inhibitory_weight_range
        };
        for &q in targets {
            let w = if hi > lo {
                weight_rng.random_range(lo..=hi)
            } else {
                lo
            };
            edges.push((p as u32, q, w));
        }
    }
    if edges.is_empty() {
        return Err(Error::Degenerate(
            "topology has no recurrent edges; raise connection_scale or connection_lambda".into(),
        ));
    }

    let (unit, target, weights) = input_projection(cfg, n, n_inputs, seed);
    let projection = unit
        .iter()
        .zip(&target)
        .zip(&weights)
        .map(|((&u, &q), &w)| (u, q, w))
        .collect();
    Topology::from_parts(
        cfg.grid_dims,
        excitatory,
        edges,
        n_inputs,
        projection,
        cfg.excitatory_weight_range,
        cfg.inhibitory_weight_range,
        seed,
    )
}
