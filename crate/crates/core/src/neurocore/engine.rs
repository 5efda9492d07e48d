//! Discrete-time current-based LIF dynamics.
//!
//! Per step and neuron, in this order:
//!
//! ```text
//! I ← I·fI + Σ_arriving w·m
//! if refractory > 0:  refractory −= 1, v = 0
//! else:               v ← v·fv + (I + I_bias) + injection
//! if v ≥ v_th:        spike, v ← 0, refractory ← t_ref
//! ```
//!
//! Spikes emitted at step `t` arrive at step `t + 1`. State is `f64`; all
//! synaptic increments are integers well inside the 53-bit mantissa, so the
//! only rounding comes from the decay multiplications. Values are clamped
//! to `±STATE_LIMIT` (saturating) which is never reached in practice.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::NeuronParams;
use super::raster::SpikeRaster;
use crate::connectome::Connectome;
use crate::error::{Error, Result};

/// Saturation bound for currents and voltages.
pub const STATE_LIMIT: f64 = 1.0e15;

/// Outgoing synapses in CSR form with currents pre-multiplied by the weight multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseTable {
    neurons: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    currents: Vec<f64>,
}

impl SynapseTable {
    pub fn new(connectome: &Connectome, params: &NeuronParams) -> Self {
        Self::from_edges(
            connectome.neuron_count(),
            connectome.edges.iter().map(|e| (e.source as usize, e.target as usize, e.weight)),
            params.weight_multiplier,
        )
    }

    pub fn from_edges(
        neurons: usize,
        edges: impl IntoIterator<Item = (usize, usize, i32)>,
        weight_multiplier: i64,
    ) -> Self {
        let mut list: Vec<(usize, usize, i32)> = edges.into_iter().collect();
        list.sort_by_key(|&(s, _, _)| s);
        let mut offsets = vec![0usize; neurons + 1];
        for &(s, t, _) in &list {
            assert!(s < neurons && t < neurons, "edge outside network");
            offsets[s + 1] += 1;
        }
        for i in 0..neurons {
            offsets[i + 1] += offsets[i];
        }
        SynapseTable {
            neurons,
            offsets,
            targets: list.iter().map(|&(_, t, _)| t as u32).collect(),
            currents: list
                .iter()
                .map(|&(_, _, w)| (w as i64 * weight_multiplier) as f64)
                .collect(),
        }
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn synapse_count(&self) -> usize {
        self.targets.len()
    }

    fn outgoing(&self, source: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[source]..self.offsets[source + 1];
        (&self.targets[r.clone()], &self.currents[r])
    }
}

/// One neuron's dynamic state. `i` is the decaying synaptic current; the
/// bias is added on top of it when driving the membrane and never decays.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState {
    pub v: f64,
    pub i: f64,
    pub refractory: u32,
}

/// A current injected straight into the membrane at a given step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub step: usize,
    pub neuron: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InjectionPlan {
    entries: Vec<Injection>,
}

impl InjectionPlan {
    pub fn new(mut entries: Vec<Injection>) -> Self {
        entries.sort_by_key(|e| (e.step, e.neuron));
        InjectionPlan { entries }
    }

    /// One-step pulse of `magnitude` to every neuron in `patch`.
    pub fn pulse(patch: &[usize], step: usize, magnitude: f64) -> Self {
        InjectionPlan::new(
            patch
                .iter()
                .map(|&neuron| Injection {
                    step,
                    neuron,
                    amount: magnitude,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[Injection] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn at_step(&self, step: usize) -> impl Iterator<Item = &Injection> {
        let lo = self.entries.partition_point(|e| e.step < step);
        self.entries[lo..].iter().take_while(move |e| e.step == step)
    }

    pub fn validate(&self, horizon: usize, neurons: usize) -> Result<()> {
        for e in &self.entries {
            if e.step >= horizon {
                return Err(Error::config(
                    "injection.step",
                    format!("step {} beyond horizon {horizon}", e.step),
                ));
            }
            if e.neuron >= neurons {
                return Err(Error::config(
                    "injection.neuron",
                    format!("neuron {} outside network of {neurons}", e.neuron),
                ));
            }
        }
        Ok(())
    }
}

/// Pulse that forces one spike in each neuron of `patch` at `step`.
pub fn inject_pulse(patch: &[usize], step: usize, params: &NeuronParams) -> InjectionPlan {
    InjectionPlan::pulse(patch, step, params.v_th as f64)
}

fn saturate(x: f64) -> f64 {
    x.clamp(-STATE_LIMIT, STATE_LIMIT)
}

/// A running network instance. Cheap to clone; owns no shared mutable state.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    synapses: &'a SynapseTable,
    params: NeuronParams,
    current_factor: f64,
    voltage_factor: f64,
    v: Vec<f64>,
    i: Vec<f64>,
    refractory: Vec<u32>,
    injection: Vec<f64>,
    /// Spikes emitted in the previous step, ascending.
    pending: Vec<u32>,
    emitted: Vec<u32>,
}

impl<'a> Simulator<'a> {
    pub fn new(synapses: &'a SynapseTable, params: NeuronParams) -> Self {
        let n = synapses.neurons();
        Simulator {
            synapses,
            current_factor: params.current_factor(),
            voltage_factor: params.voltage_factor(),
            params,
            v: vec![0.0; n],
            i: vec![0.0; n],
            refractory: vec![0; n],
            injection: vec![0.0; n],
            pending: Vec::new(),
            emitted: Vec::new(),
        }
    }

    pub fn neurons(&self) -> usize {
        self.v.len()
    }

    pub fn params(&self) -> &NeuronParams {
        &self.params
    }

    pub fn state(&self, neuron: usize) -> NeuronState {
        NeuronState {
            v: self.v[neuron],
            i: self.i[neuron],
            refractory: self.refractory[neuron],
        }
    }

    pub fn states(&self) -> Vec<NeuronState> {
        (0..self.neurons()).map(|n| self.state(n)).collect()
    }

    pub fn set_state(&mut self, neuron: usize, state: NeuronState) {
        self.v[neuron] = state.v;
        self.i[neuron] = state.i;
        self.refractory[neuron] = state.refractory.min(self.params.t_ref);
    }

    /// Spikes emitted by the last step, which arrive on the next one.
    pub fn in_flight(&self) -> &[u32] {
        &self.pending
    }

    /// Replaces the spikes that will arrive on the next step.
    pub fn set_in_flight(&mut self, mut spikes: Vec<u32>) {
        spikes.sort_unstable();
        spikes.dedup();
        self.pending = spikes;
    }

    /// Advances one step. `injections` are `(neuron, amount)` pairs; returns the emitted spikes.
    pub fn step(&mut self, injections: &[(usize, f64)]) -> &[u32] {
        let n = self.neurons();
        let cf = self.current_factor;
        let bias = self.params.i_bias as f64;

        for cur in self.i.iter_mut() {
            *cur *= cf;
        }
        for &src in &self.pending {
            let (targets, currents) = self.synapses.outgoing(src as usize);
            for (&t, &c) in targets.iter().zip(currents) {
                self.i[t as usize] += c;
            }
        }
        for &(neuron, amount) in injections {
            self.injection[neuron] += amount;
        }

        let vf = self.voltage_factor;
        let v_th = self.params.v_th as f64;
        let t_ref = self.params.t_ref;
        self.emitted.clear();
        for k in 0..n {
            let syn = saturate(self.i[k]);
            self.i[k] = syn;
            let cur = syn + bias;
            let inj = std::mem::take(&mut self.injection[k]);
            if self.refractory[k] > 0 {
                self.refractory[k] -= 1;
                self.v[k] = 0.0;
                continue;
            }
            let v = saturate(self.v[k] * vf + cur + inj);
            if v >= v_th {
                self.emitted.push(k as u32);
                self.v[k] = 0.0;
                self.refractory[k] = t_ref;
            } else {
                self.v[k] = v;
            }
        }
        std::mem::swap(&mut self.pending, &mut self.emitted);
        &self.pending
    }

    /// v ← 0, I ← 0, refractory ← 0 everywhere; spikes in flight are dropped.
    pub fn reset_membranes(&mut self) {
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.i.iter_mut().for_each(|x| *x = 0.0);
        self.refractory.iter_mut().for_each(|x| *x = 0);
        self.injection.iter_mut().for_each(|x| *x = 0.0);
        self.pending.clear();
    }

    /// Runs `horizon` steps from the current state and records every spike.
    pub fn record(&mut self, plan: &InjectionPlan, horizon: usize) -> SpikeRaster {
        let mut raster = SpikeRaster::new(horizon, self.neurons());
        let mut inj = Vec::new();
        for t in 0..horizon {
            inj.clear();
            inj.extend(plan.at_step(t).map(|e| (e.neuron, e.amount)));
            for &s in self.step(&inj) {
                raster.set(t, s as usize);
            }
        }
        raster
    }

    /// Advances `steps` steps without input or recording.
    pub fn idle(&mut self, steps: usize) -> usize {
        let mut total = 0;
        for _ in 0..steps {
            total += self.step(&[]).len();
        }
        total
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "neuron,v,i,refractory").map_err(io)?;
        for k in 0..self.neurons() {
            writeln!(out, "{},{},{},{}", k, self.v[k], self.i[k], self.refractory[k]).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Simulates `horizon` steps from rest.
pub fn run(
    connectome: &Connectome,
    params: &NeuronParams,
    injections: &InjectionPlan,
    horizon: usize,
) -> Result<SpikeRaster> {
    if horizon == 0 {
        return Err(Error::config("horizon", "must be at least 1"));
    }
    params.validate()?;
    injections.validate(horizon, connectome.neuron_count())?;
    let table = SynapseTable::new(connectome, params);
    let mut sim = Simulator::new(&table, *params);
    Ok(sim.record(injections, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_m64() -> NeuronParams {
        NeuronParams {
            weight_multiplier: 64,
            ..Default::default()
        }
    }

    fn pair(weight: i32, p: &NeuronParams) -> SynapseTable {
        SynapseTable::from_edges(2, [(0, 1, weight)], p.weight_multiplier)
    }

    #[test]
    fn rest_is_fixed_point() {
        let p = NeuronParams::default();
        let t = pair(12, &p);
        let mut sim = Simulator::new(&t, p);
        for _ in 0..10 {
            assert!(sim.step(&[]).is_empty());
        }
        assert_eq!(sim.state(1), NeuronState::default());
    }

    #[test]
    fn three_step_trace() {
        let p = params_m64();
        let t = pair(12, &p);
        let mut sim = Simulator::new(&t, p);
        sim.set_in_flight(vec![0]);
        sim.step(&[]);
        assert_eq!(sim.state(1).i, 768.0);
        assert_eq!(sim.state(1).v, 768.0);
        sim.step(&[]);
        assert_eq!(sim.state(1).i, 696.75);
        assert_eq!(sim.state(1).v, 1389.75);
        sim.step(&[]);
        let i3 = 696.75 * 3716.0 / 4096.0;
        assert!((sim.state(1).i - i3).abs() < 1e-9);
        assert!((sim.state(1).v - (1389.75 * 3696.0 / 4096.0 + i3)).abs() < 1e-9);
    }

    #[test]
    fn suprathreshold_drive_fires_every_third_step() {
        let p = NeuronParams::default();
        let t = SynapseTable::from_edges(1, [], p.weight_multiplier);
        let mut sim = Simulator::new(&t, p);
        let mut times = Vec::new();
        for step in 0..30 {
            if !sim.step(&[(0, 64_000.0)]).is_empty() {
                times.push(step);
            }
        }
        assert_eq!(times, (0..30).step_by(3).collect::<Vec<_>>());
    }

    #[test]
    fn injected_neuron_refractory_two_steps() {
        let p = NeuronParams::default();
        let t = SynapseTable::from_edges(1, [], p.weight_multiplier);
        let mut sim = Simulator::new(&t, p);
        sim.step(&[(0, 64_000.0)]);
        assert_eq!(sim.state(0).refractory, 2);
        sim.step(&[(0, 1e9)]);
        assert_eq!(sim.state(0).v, 0.0);
        sim.step(&[(0, 1e9)]);
        assert_eq!(sim.state(0).refractory, 0);
        assert_eq!(sim.step(&[(0, 64_000.0)]).len(), 1);
    }

    #[test]
    fn voltage_decay_closed_form() {
        let p = NeuronParams::default();
        let t = SynapseTable::from_edges(1, [], p.weight_multiplier);
        let mut sim = Simulator::new(&t, p);
        let v0 = 50_000.0;
        sim.set_state(0, NeuronState { v: v0, i: 0.0, refractory: 0 });
        let f: f64 = 3696.0 / 4096.0;
        for k in 1..=60 {
            sim.step(&[]);
            let want = v0 * f.powi(k);
            assert!((sim.state(0).v - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn delay_chain_one_step() {
        let p = NeuronParams::default();
        // 0 -> 1 strong enough to fire 1 on arrival, 1 -> 2 weak.
        let t = SynapseTable::from_edges(3, [(0, 1, 400), (1, 2, 1)], p.weight_multiplier);
        let mut sim = Simulator::new(&t, p);
        let plan = InjectionPlan::pulse(&[0], 0, 64_000.0);
        let mut v2 = Vec::new();
        for step in 0..4 {
            let inj: Vec<_> = plan.at_step(step).map(|e| (e.neuron, e.amount)).collect();
            let s = sim.step(&inj).to_vec();
            if step == 0 {
                assert_eq!(s, vec![0]);
                assert_eq!(sim.state(1).v, 0.0);
            }
            if step == 1 {
                assert_eq!(s, vec![1]);
            }
            v2.push(sim.state(2).v);
        }
        assert_eq!(&v2[..2], &[0.0, 0.0]);
        assert!(v2[2] > 0.0);
    }

    #[test]
    fn superposition_below_threshold() {
        let p = NeuronParams {
            v_th: i64::MAX,
            ..Default::default()
        };
        let t = SynapseTable::from_edges(1, [], p.weight_multiplier);
        let run_with = |a: f64, b: f64| {
            let mut sim = Simulator::new(&t, p);
            (0..40)
                .map(|k| {
                    let inj = if k % 7 == 0 { a } else { b };
                    sim.step(&[(0, inj)]);
                    sim.state(0).v
                })
                .collect::<Vec<_>>()
        };
        let ra = run_with(1000.0, 0.0);
        let rb = run_with(0.0, 333.0);
        let rab = run_with(1000.0, 333.0);
        for k in 0..40 {
            let s = ra[k] + rb[k];
            assert!((rab[k] - s).abs() <= 1e-9 * s.abs().max(1.0));
        }
    }

    #[test]
    fn reset_clears_pipeline() {
        let p = NeuronParams::default();
        let t = SynapseTable::from_edges(2, [(0, 1, 10_000), (1, 0, 10_000)], p.weight_multiplier);
        let mut sim = Simulator::new(&t, p);
        sim.step(&[(0, 64_000.0)]);
        assert_eq!(sim.in_flight(), &[0]);
        sim.reset_membranes();
        assert!(sim.in_flight().is_empty());
        assert_eq!(sim.idle(30), 0);
        assert!(sim.states().iter().all(|s| *s == NeuronState::default()));
    }

    #[test]
    fn run_rejects_zero_horizon_and_empty_net_is_silent() {
        let cfg = crate::NetworkConfig::default();
        let net = crate::connectome::build_network(&cfg, crate::NetworkKind::Random).unwrap();
        let empty = net.connectome.without_edges();
        assert!(run(&empty, &cfg.neuron, &InjectionPlan::default(), 0).is_err());
        let r = run(&empty, &cfg.neuron, &InjectionPlan::default(), 50).unwrap();
        assert_eq!(r.total(), 0);
    }

    #[test]
    fn bias_is_not_integrated() {
        let p = NeuronParams {
            i_bias: 100,
            v_th: i64::MAX,
            ..Default::default()
        };
        let t = SynapseTable::from_edges(1, [], p.weight_multiplier);
        let mut sim = Simulator::new(&t, p);
        sim.idle(500);
        assert_eq!(sim.state(0).i, 0.0);
        let v_inf = 100.0 / (1.0 - 3696.0 / 4096.0);
        assert!((sim.state(0).v - v_inf).abs() < 1e-6);
    }
}
