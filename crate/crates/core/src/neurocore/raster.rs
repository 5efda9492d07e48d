use std::ops::Range;

/// Dense binary spike matrix, `steps x neurons`, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeRaster {
    steps: usize,
    neurons: usize,
    bits: Vec<u8>,
}

impl SpikeRaster {
    pub fn new(steps: usize, neurons: usize) -> Self {
        SpikeRaster {
            steps,
            neurons,
            bits: vec![0; steps * neurons],
        }
    }

    pub fn from_events(steps: usize, neurons: usize, events: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut r = SpikeRaster::new(steps, neurons);
        for (t, n) in events {
            r.set(t, n);
        }
        r
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn set(&mut self, step: usize, neuron: usize) {
        assert!(step < self.steps && neuron < self.neurons, "spike outside raster");
        self.bits[step * self.neurons + neuron] = 1;
    }

    pub fn get(&self, step: usize, neuron: usize) -> bool {
        self.bits[step * self.neurons + neuron] != 0
    }

    /// 0/1 population vector at `step`.
    pub fn row(&self, step: usize) -> &[u8] {
        &self.bits[step * self.neurons..(step + 1) * self.neurons]
    }

    pub fn count_at(&self, step: usize) -> usize {
        self.row(step).iter().map(|&b| b as usize).sum()
    }

    pub fn total(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Per-step population counts.
    pub fn population_counts(&self) -> Vec<usize> {
        (0..self.steps).map(|t| self.count_at(t)).collect()
    }

    /// Columns `range` only.
    pub fn select_neurons(&self, range: Range<usize>) -> SpikeRaster {
        assert!(range.end <= self.neurons);
        let width = range.len();
        let mut bits = Vec::with_capacity(self.steps * width);
        for t in 0..self.steps {
            bits.extend_from_slice(&self.row(t)[range.clone()]);
        }
        SpikeRaster {
            steps: self.steps,
            neurons: width,
            bits,
        }
    }

    /// Rows `range` only.
    pub fn select_steps(&self, range: Range<usize>) -> SpikeRaster {
        assert!(range.end <= self.steps);
        SpikeRaster {
            steps: range.len(),
            neurons: self.neurons,
            bits: self.bits[range.start * self.neurons..range.end * self.neurons].to_vec(),
        }
    }

    /// `(step, neuron)` for every spike, step-major.
    pub fn events(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(move |(k, _)| (k / self.neurons, k % self.neurons))
    }

    /// Spike times of one neuron.
    pub fn spike_times(&self, neuron: usize) -> Vec<usize> {
        (0..self.steps).filter(|&t| self.get(t, neuron)).collect()
    }
}
