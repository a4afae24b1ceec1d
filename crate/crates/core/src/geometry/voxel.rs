use crate::error::{Error, Result};

use super::PointCloud;

/// Binary occupancy over the cube `[-0.5, 0.5]³`, stored z-major
/// (`index = (iz * N + iy) * N + ix`), matching the encoder's D×H×W layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    resolution: usize,
    occupancy: Vec<u8>,
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Result<Self> {
        check_resolution(resolution)?;
        Ok(Self {
            resolution,
            occupancy: vec![0; resolution.pow(3)],
        })
    }

    pub fn from_occupancy(resolution: usize, occupancy: Vec<u8>) -> Result<Self> {
        check_resolution(resolution)?;
        if occupancy.len() != resolution.pow(3) {
            return Err(Error::InvalidInput(format!(
                "occupancy has {} cells, expected {}",
                occupancy.len(),
                resolution.pow(3)
            )));
        }
        if occupancy.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput("occupancy values must be 0 or 1".into()));
        }
        Ok(Self { resolution, occupancy })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> bool {
        let n = self.resolution;
        self.occupancy[(iz * n + iy) * n + ix] == 1
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v == 1).count()
    }

    /// Cell index along one axis for a coordinate inside the unit cube.
    pub fn cell_of(&self, coord: f64) -> usize {
        let n = self.resolution;
        (((coord + 0.5) * n as f64).floor().max(0.0) as usize).min(n - 1)
    }
}

pub(crate) fn check_resolution(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::config(format!(
            "grid resolution must be a power of two, got {n}"
        )));
    }
    Ok(())
}

/// Marks every cell containing at least one point. Points outside the cube
/// are clamped onto it; the number of clamped points is returned alongside.
pub fn voxelize(cloud: &PointCloud, resolution: usize) -> Result<(VoxelGrid, usize)> {
    let mut grid = VoxelGrid::empty(resolution)?;
    let n = resolution;
    let mut clamped = 0;
    for p in &cloud.points {
        let mut idx = [0usize; 3];
        let mut was_clamped = false;
        for a in 0..3 {
            let c = p[a];
            let cc = c.clamp(-0.5, 0.5);
            if cc != c {
                was_clamped = true;
            }
            idx[a] = grid.cell_of(cc);
        }
        clamped += usize::from(was_clamped);
        grid.occupancy[(idx[2] * n + idx[1]) * n + idx[0]] = 1;
    }
    Ok((grid, clamped))
}
