//! Replicated sample paths on a time grid.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Values indexed by `[replica][coordinate][time]`.
///
/// Coordinates are 1-based neuron labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    times: Vec<f64>,
    coords: Vec<usize>,
    replicas: usize,
    values: Vec<f64>,
}

impl PathSet {
    pub fn new(times: Vec<f64>, coords: Vec<usize>, replicas: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != replicas * coords.len() * times.len() {
            return domain(format!(
                "path values have length {}, expected {} x {} x {}",
                values.len(),
                replicas,
                coords.len(),
                times.len()
            ));
        }
        Ok(Self { times, coords, replicas, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, replica: usize, coord_index: usize, time_index: usize) -> f64 {
        let nt = self.times.len();
        self.values[(replica * self.coords.len() + coord_index) * nt + time_index]
    }

    /// One path (all grid times) of one replica and coordinate.
    pub fn path(&self, replica: usize, coord_index: usize) -> &[f64] {
        let nt = self.times.len();
        let start = (replica * self.coords.len() + coord_index) * nt;
        &self.values[start..start + nt]
    }

    pub fn coord_index(&self, coord: usize) -> Result<usize> {
        self.coords
            .iter()
            .position(|&c| c == coord)
            .map_or_else(|| domain(format!("coordinate {coord} is not tracked")), Ok)
    }

    /// Index of the grid time equal to `t` (up to 1e-12 relative).
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map_or_else(|| domain(format!("time {t} is not on the grid")), Ok)
    }

    /// Cross-replica sample of coordinate `coord` at grid time `t`.
    pub fn samples(&self, coord: usize, t: f64) -> Result<Vec<f64>> {
        let c = self.coord_index(coord)?;
        let k = self.time_index(t)?;
        Ok((0..self.replicas).map(|r| self.get(r, c, k)).collect())
    }

    /// Rows `(replica, coord, time, value)` in storage order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let nc = self.coords.len();
        let nt = self.times.len();
        self.values.iter().enumerate().map(move |(idx, &v)| {
            let r = idx / (nc * nt);
            let c = (idx / nt) % nc;
            let k = idx % nt;
            (r, self.coords[c], self.times[k], v)
        })
    }
}
