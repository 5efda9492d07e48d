//! Leave-one-out stimulation protocol, recording and sliding-window binning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PoolingMode;
use crate::connectome::Connectome;
use crate::error::{Error, Result};
use crate::neurocore::{inject_pulse, NeuronParams, Simulator, SpikeRaster, SynapseTable};

/// Which units feed the readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutSource {
    #[default]
    Pooling,
    Excitatory,
}

impl ReadoutSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ReadoutSource::Pooling => "pooling",
            ReadoutSource::Excitatory => "excitatory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub patterns: Vec<Vec<usize>>,
    pub record_steps: usize,
    pub gap_steps: usize,
    pub drop_head: usize,
    pub bin_width: usize,
    pub samples_per_trial: usize,
}

impl TrialPlan {
    /// The standard protocol over the 25 leave-one-out patterns of `patch`.
    pub fn leave_one_out(patch: &[usize]) -> Self {
        TrialPlan {
            patterns: make_leave_one_out(patch),
            record_steps: 215,
            gap_steps: 30,
            drop_head: 5,
            bin_width: 10,
            samples_per_trial: 200,
        }
    }

    pub fn trials(&self) -> usize {
        self.patterns.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patterns.is_empty() {
            return Err(Error::config("protocol.patterns", "no input patterns"));
        }
        if self.bin_width == 0 || self.samples_per_trial == 0 {
            return Err(Error::config("protocol.bin_width", "must be positive"));
        }
        let need = self.drop_head + self.bin_width + self.samples_per_trial - 1;
        if self.record_steps < need {
            return Err(Error::config(
                "protocol.record_steps",
                format!("{} steps recorded, binning needs {need}", self.record_steps),
            ));
        }
        Ok(())
    }
}

/// Pattern `k` is `patch` without its `k`-th neuron.
pub fn make_leave_one_out(patch: &[usize]) -> Vec<Vec<usize>> {
    (0..patch.len())
        .map(|k| {
            patch
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &n)| n)
                .collect()
        })
        .collect()
}

/// One trial on a fresh instance: pulse at step 0, then record.
pub fn run_trial(
    table: &SynapseTable,
    params: &NeuronParams,
    pattern: &[usize],
    record_steps: usize,
) -> SpikeRaster {
    let mut sim = Simulator::new(table, *params);
    sim.record(&inject_pulse(pattern, 0, params), record_steps)
}

/// All trials, in parallel on independent instances; results in pattern order.
pub fn run_trials(connectome: &Connectome, params: &NeuronParams, plan: &TrialPlan) -> Result<TrialSet> {
    plan.validate()?;
    params.validate()?;
    check_patterns(connectome, plan)?;
    let table = SynapseTable::new(connectome, params);
    let rasters = plan
        .patterns
        .par_iter()
        .map(|p| run_trial(&table, params, p, plan.record_steps))
        .collect();
    Ok(TrialSet::new(connectome, plan.clone(), rasters))
}

/// All trials back to back on a single instance with reset and silent gap
/// between them, the way the hardware protocol runs. Must agree with
/// [`run_trials`] trial for trial.
pub fn run_trials_sequential(
    connectome: &Connectome,
    params: &NeuronParams,
    plan: &TrialPlan,
) -> Result<TrialSet> {
    plan.validate()?;
    params.validate()?;
    check_patterns(connectome, plan)?;
    let table = SynapseTable::new(connectome, params);
    let mut sim = Simulator::new(&table, *params);
    let mut rasters = Vec::with_capacity(plan.trials());
    for p in &plan.patterns {
        rasters.push(sim.record(&inject_pulse(p, 0, params), plan.record_steps));
        sim.reset_membranes();
        sim.idle(plan.gap_steps);
    }
    Ok(TrialSet::new(connectome, plan.clone(), rasters))
}

fn check_patterns(connectome: &Connectome, plan: &TrialPlan) -> Result<()> {
    let n = connectome.neuron_count();
    if plan.patterns.iter().flatten().any(|&k| k >= n) {
        return Err(Error::config("protocol.patterns", "neuron outside network"));
    }
    Ok(())
}

/// Sliding-window spike counts: drop `drop_head` steps, then `samples`
/// windows of `bin_width` steps at stride 1. Rows are windows, columns the
/// raster's neurons.
pub fn bin_raster(raster: &SpikeRaster, drop_head: usize, bin_width: usize, samples: usize) -> Result<DMatrix<f64>> {
    let need = drop_head + bin_width + samples.max(1) - 1;
    if bin_width == 0 || raster.steps() < need {
        return Err(Error::config(
            "protocol.record_steps",
            format!("raster has {} steps, binning needs {need}", raster.steps()),
        ));
    }
    let n = raster.neurons();
    let mut out = DMatrix::zeros(samples, n);
    let mut window = vec![0u32; n];
    for t in drop_head..drop_head + bin_width {
        for (w, &b) in window.iter_mut().zip(raster.row(t)) {
            *w += b as u32;
        }
    }
    for r in 0..samples {
        if r > 0 {
            let (gone, new) = (raster.row(drop_head + r - 1), raster.row(drop_head + r + bin_width - 1));
            for k in 0..n {
                window[k] = window[k] + new[k] as u32 - gone[k] as u32;
            }
        }
        for k in 0..n {
            out[(r, k)] = window[k] as f64;
        }
    }
    Ok(out)
}

/// Recorded rasters of one protocol run over the full network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub plan: TrialPlan,
    pub rasters: Vec<SpikeRaster>,
    exc: usize,
    pool_offset: usize,
    pool_patches: Vec<Vec<usize>>,
}

impl TrialSet {
    pub fn new(connectome: &Connectome, plan: TrialPlan, rasters: Vec<SpikeRaster>) -> Self {
        TrialSet {
            plan,
            rasters,
            exc: connectome.exc_count(),
            pool_offset: connectome.pool_offset(),
            pool_patches: connectome.pooling.patches.clone(),
        }
    }

    pub fn trials(&self) -> usize {
        self.rasters.len()
    }

    /// Excitatory columns only.
    pub fn excitatory(&self, trial: usize) -> SpikeRaster {
        self.rasters[trial].select_neurons(0..self.exc)
    }

    pub fn pooling(&self, trial: usize) -> SpikeRaster {
        self.rasters[trial].select_neurons(self.pool_offset..self.pool_offset + self.pool_patches.len())
    }

    fn bin(&self, raster: &SpikeRaster) -> Result<DMatrix<f64>> {
        bin_raster(raster, self.plan.drop_head, self.plan.bin_width, self.plan.samples_per_trial)
    }

    /// Binned readout features of one trial (`samples × units`).
    pub fn features(&self, trial: usize, source: ReadoutSource, mode: PoolingMode) -> Result<DMatrix<f64>> {
        match (source, mode) {
            (ReadoutSource::Excitatory, _) => self.bin(&self.excitatory(trial)),
            (ReadoutSource::Pooling, PoolingMode::Spiking) => self.bin(&self.pooling(trial)),
            (ReadoutSource::Pooling, PoolingMode::PatchCount) => {
                let exc = self.bin(&self.excitatory(trial))?;
                let mut out = DMatrix::zeros(exc.nrows(), self.pool_patches.len());
                for (u, patch) in self.pool_patches.iter().enumerate() {
                    for &k in patch {
                        for r in 0..exc.nrows() {
                            out[(r, u)] += exc[(r, k)];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn all_features(&self, source: ReadoutSource, mode: PoolingMode) -> Result<Vec<DMatrix<f64>>> {
        (0..self.trials())
            .into_par_iter()
            .map(|t| self.features(t, source, mode))
            .collect()
    }

    /// Spike events as CSV `trial,step,neuron`.
    pub fn write_events(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "trial,step,neuron").map_err(io)?;
        for (trial, r) in self.rasters.iter().enumerate() {
            for (step, neuron) in r.events() {
                writeln!(out, "{trial},{step},{neuron}").map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}

/// Reads an events file written by [`TrialSet::write_events`] back into
/// `trials` rasters of `steps × neurons`.
pub fn read_events(path: &Path, trials: usize, steps: usize, neurons: usize) -> Result<Vec<SpikeRaster>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut rasters = vec![SpikeRaster::new(steps, neurons); trials];
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line.trim() != "trial,step,neuron" {
                return Err(parse(1, "expected header trial,step,neuron".into()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse(i + 1, format!("expected 3 fields, found {}", fields.len())));
        }
        let mut v = [0usize; 3];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.trim().parse().map_err(|_| parse(i + 1, format!("not an index: {f:?}")))?;
        }
        let [trial, step, neuron] = v;
        if trial >= trials || step >= steps || neuron >= neurons {
            return Err(parse(i + 1, "event outside the recording".into()));
        }
        rasters[trial].set(step, neuron);
    }
    Ok(rasters)
}

/// Binned features as CSV `trial,row,unit,count`; zero entries are omitted.
pub fn write_binned(path: &Path, features: &[DMatrix<f64>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "trial,row,unit,count").map_err(io)?;
    for (trial, m) in features.iter().enumerate() {
        for row in 0..m.nrows() {
            for unit in 0..m.ncols() {
                let c = m[(row, unit)];
                if c != 0.0 {
                    writeln!(out, "{trial},{row},{unit},{c}").map_err(io)?;
                }
            }
        }
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leave_one_out_sets() {
        let patch: Vec<usize> = (100..125).collect();
        let pats = make_leave_one_out(&patch);
        assert_eq!(pats.len(), 25);
        assert!(pats.iter().all(|p| p.len() == 24));
        for a in 0..25 {
            for b in a + 1..25 {
                let sym = patch
                    .iter()
                    .filter(|n| pats[a].contains(n) != pats[b].contains(n))
                    .count();
                assert_eq!(sym, 2);
            }
        }
        let mut union: Vec<usize> = pats.concat();
        union.sort_unstable();
        union.dedup();
        assert_eq!(union, patch);
    }

    #[test]
    fn constant_spiking_bins_to_width() {
        let r = SpikeRaster::from_events(215, 2, (0..215).flat_map(|t| [(t, 0), (t, 1)]));
        let m = bin_raster(&r, 5, 10, 200).unwrap();
        assert_eq!(m.nrows(), 200);
        assert!(m.iter().all(|&x| x == 10.0));
    }

    #[test]
    fn single_spike_window_coverage() {
        let r = SpikeRaster::from_events(215, 1, [(7, 0)]);
        let m = bin_raster(&r, 5, 10, 200).unwrap();
        // window r covers steps 5+r ..= 14+r
        let rows: Vec<usize> = (0..200).filter(|&i| m[(i, 0)] != 0.0).collect();
        assert_eq!(rows, vec![0, 1, 2]);
        assert!(rows.iter().all(|&i| m[(i, 0)] == 1.0));
        let r = SpikeRaster::from_events(215, 1, [(100, 0)]);
        let m = bin_raster(&r, 5, 10, 200).unwrap();
        assert_eq!(m.column(0).sum(), 10.0);
    }

    #[test]
    fn events_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        let rasters = vec![
            SpikeRaster::from_events(4, 3, [(0, 1), (3, 2)]),
            SpikeRaster::new(4, 3),
        ];
        let mut text = String::from("trial,step,neuron\n");
        for (t, r) in rasters.iter().enumerate() {
            for (s, n) in r.events() {
                text += &format!("{t},{s},{n}\n");
            }
        }
        std::fs::write(&path, &text).unwrap();
        assert_eq!(read_events(&path, 2, 4, 3).unwrap(), rasters);
        std::fs::write(&path, text + "0,9,0\n").unwrap();
        match read_events(&path, 2, 4, 3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_raster_rejected() {
        let r = SpikeRaster::new(213, 1);
        assert!(matches!(bin_raster(&r, 5, 10, 200), Err(Error::Config { .. })));
        assert!(bin_raster(&SpikeRaster::new(214, 1), 5, 10, 200).is_ok());
    }
}
