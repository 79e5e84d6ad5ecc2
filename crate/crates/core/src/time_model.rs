//! Analytical execution time of a hybrid-hexagonally tiled stencil.
//!
//! The optimizer and explorer only see the [`TimeModel`] trait, so another
//! model can be substituted without touching either. [`ReferenceModel`] is a
//! wave model: time bands of height `t_T` run one after another; within a
//! band the spatial tiles are issued in waves of `n_SM * k`, and each wave
//! lasts the longer of its compute phase and its global-memory transfer
//! phase (transfers overlap with the computation of other resident blocks).

use serde::{Deserialize, Serialize};

use crate::area::HardwareConfig;
use crate::error::{Error, Result};
use crate::tiles::{check_tile_shape, is_feasible};
use crate::workload::{instance_flops, ProblemSize, StencilKernel};

/// Software decision variables of one kernel instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileConfig {
    #[serde(rename = "t_S1")]
    pub t_s1: u32,
    #[serde(rename = "t_S2")]
    pub t_s2: u32,
    #[serde(rename = "t_S3", default, skip_serializing_if = "Option::is_none")]
    pub t_s3: Option<u32>,
    #[serde(rename = "t_T")]
    pub t_t: u32,
    /// Threadblocks resident per SM.
    pub k: u32,
}

impl TileConfig {
    pub fn new_2d(t_s1: u32, t_s2: u32, t_t: u32, k: u32) -> Self {
        TileConfig { t_s1, t_s2, t_s3: None, t_t, k }
    }

    pub fn new_3d(t_s1: u32, t_s2: u32, t_s3: u32, t_t: u32, k: u32) -> Self {
        TileConfig { t_s1, t_s2, t_s3: Some(t_s3), t_t, k }
    }

    /// Tie-break order: `(t_T, t_S1, t_S2, t_S3, k)`.
    pub fn sort_key(&self) -> (u32, u32, u32, u32, u32) {
        (self.t_t, self.t_s1, self.t_s2, self.t_s3.unwrap_or(0), self.k)
    }

    /// Threads per tile: one per point of the non-streamed spatial extents.
    pub fn threads(&self) -> u64 {
        u64::from(self.t_s2) * u64::from(self.t_s3.unwrap_or(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConstants {
    #[serde(default = "MachineConstants::default_warp_size")]
    pub warp_size: u32,
    /// Maximum resident threadblocks per SM.
    #[serde(default = "MachineConstants::default_mtb_sm")]
    pub mtb_sm: u32,
    /// Shared memory a single threadblock may allocate, kB.
    #[serde(rename = "m_block_kB", default = "MachineConstants::default_m_block_kb")]
    pub m_block_kb: f64,
    #[serde(rename = "bandwidth_GBps", default = "MachineConstants::default_bandwidth_gbps")]
    pub bandwidth_gbps: f64,
}

impl MachineConstants {
    fn default_warp_size() -> u32 {
        32
    }
    fn default_mtb_sm() -> u32 {
        32
    }
    fn default_m_block_kb() -> f64 {
        48.0
    }
    fn default_bandwidth_gbps() -> f64 {
        224.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.warp_size == 0 || self.mtb_sm == 0 {
            return Err(Error::InvalidConfig("warp_size and mtb_sm must be > 0".into()));
        }
        if !(self.m_block_kb > 0.0 && self.m_block_kb.is_finite()) {
            return Err(Error::InvalidConfig(format!("m_block_kB = {} must be > 0", self.m_block_kb)));
        }
        // Infinite bandwidth is allowed: it switches the memory phase off.
        if !(self.bandwidth_gbps > 0.0) {
            return Err(Error::InvalidConfig(format!("bandwidth_GBps = {} must be > 0", self.bandwidth_gbps)));
        }
        Ok(())
    }

    pub fn m_block_bytes(&self) -> f64 {
        self.m_block_kb * 1024.0
    }
}

impl Default for MachineConstants {
    fn default() -> Self {
        MachineConstants {
            warp_size: Self::default_warp_size(),
            mtb_sm: Self::default_mtb_sm(),
            m_block_kb: Self::default_m_block_kb(),
            bandwidth_gbps: Self::default_bandwidth_gbps(),
        }
    }
}

/// Shared-memory footprint of one tile including halos, in bytes.
///
/// Dimension 1 carries a time-dependent halo (`2 * order * t_T`) from the
/// hexagonal shape in the space-time plane; the other dimensions carry a
/// fixed `2 * order` halo.
pub fn tile_footprint_bytes(kern: &StencilKernel, t: &TileConfig) -> u64 {
    let r = u64::from(kern.order);
    let mut extent = (u64::from(t.t_s1) + 2 * r * u64::from(t.t_t)) * (u64::from(t.t_s2) + 2 * r);
    if let Some(s3) = t.t_s3 {
        extent *= u64::from(s3) + 2 * r;
    }
    u64::from(kern.n_arrays) * u64::from(kern.bytes_per_elem) * extent
}

/// Tiles per time band.
pub fn spatial_tile_count(size: &ProblemSize, t: &TileConfig) -> u64 {
    let mut n = size.s1.div_ceil(u64::from(t.t_s1)) * size.s2.div_ceil(u64::from(t.t_s2));
    if let (Some(s3), Some(t3)) = (size.s3, t.t_s3) {
        n *= s3.div_ceil(u64::from(t3));
    }
    n
}

pub fn time_bands(size: &ProblemSize, t: &TileConfig) -> u64 {
    size.t.div_ceil(u64::from(t.t_t))
}

/// Number of tiles covering the iteration space.
pub fn tile_count(size: &ProblemSize, t: &TileConfig) -> u64 {
    spatial_tile_count(size, t) * time_bands(size, t)
}

/// An execution-time model usable by the tile optimizer.
pub trait TimeModel: Send + Sync {
    /// Stable identifier, part of every results-store key.
    fn id(&self) -> String;

    /// Seconds for the instance; callers guarantee the tile is feasible.
    fn evaluate(
        &self,
        kern: &StencilKernel,
        size: &ProblemSize,
        hw: &HardwareConfig,
        mc: &MachineConstants,
        t: &TileConfig,
    ) -> f64;

    /// A value no larger than `evaluate` for every `k >= 1` with the same
    /// tile extents (`t.k` is ignored). Zero disables bound pruning.
    fn lower_bound(
        &self,
        _kern: &StencilKernel,
        _size: &ProblemSize,
        _hw: &HardwareConfig,
        _mc: &MachineConstants,
        _t: &TileConfig,
    ) -> f64 {
        0.0
    }

    /// Hardware-independent features of the tile extents (`t.k` ignored).
    ///
    /// Returning `Some` promises that, for every hardware point and every k,
    /// `evaluate` is fully determined by the features and non-decreasing in
    /// each of them, and that the last feature is the tile footprint. The
    /// optimizer then drops tiles dominated by a tile earlier in tie-break
    /// order.
    fn dominance_features(&self, _kern: &StencilKernel, _size: &ProblemSize, _t: &TileConfig) -> Option<Vec<f64>> {
        None
    }

    /// Checked evaluation.
    fn t_alg(
        &self,
        kern: &StencilKernel,
        size: &ProblemSize,
        hw: &HardwareConfig,
        mc: &MachineConstants,
        t: &TileConfig,
    ) -> Result<f64> {
        kern.validate()?;
        size.validate_for(kern)?;
        check_tile_shape(kern, t)?;
        if !is_feasible(kern, hw, mc, t) {
            return Err(Error::InfeasibleTile(format!("{t:?} on {hw:?}")));
        }
        let time = self.evaluate(kern, size, hw, mc, t);
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::NonPositiveTime(time));
        }
        Ok(time)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReferenceModel;

impl ReferenceModel {
    /// Vector-unit oversubscription factor for `k` resident tiles.
    pub fn oversubscription(hw: &HardwareConfig, mc: &MachineConstants, t: &TileConfig, k: u32) -> u64 {
        let warp = u64::from(mc.warp_size);
        let warps = (u64::from(k) * t.threads()).div_ceil(warp);
        (warps * warp).div_ceil(u64::from(hw.n_v))
    }

    pub fn compute_time(kern: &StencilKernel, hw: &HardwareConfig, mc: &MachineConstants, t: &TileConfig) -> f64 {
        let m = Self::oversubscription(hw, mc, t, t.k);
        kern.c_iter * (u64::from(t.t_s1) * u64::from(t.t_t) * m) as f64
    }

    pub fn memory_time(kern: &StencilKernel, hw: &HardwareConfig, mc: &MachineConstants, t: &TileConfig) -> f64 {
        let bytes = u64::from(hw.n_sm) * u64::from(t.k) * tile_footprint_bytes(kern, t);
        bytes as f64 / (mc.bandwidth_gbps * 1e9)
    }

    pub fn waves(size: &ProblemSize, hw: &HardwareConfig, t: &TileConfig) -> u64 {
        time_bands(size, t) * spatial_tile_count(size, t).div_ceil(u64::from(hw.n_sm) * u64::from(t.k))
    }
}

impl TimeModel for ReferenceModel {
    fn id(&self) -> String {
        "reference-wave-v1".into()
    }

    fn evaluate(
        &self,
        kern: &StencilKernel,
        size: &ProblemSize,
        hw: &HardwareConfig,
        mc: &MachineConstants,
        t: &TileConfig,
    ) -> f64 {
        let wave = Self::compute_time(kern, hw, mc, t).max(Self::memory_time(kern, hw, mc, t));
        Self::waves(size, hw, t) as f64 * wave
    }

    fn lower_bound(
        &self,
        kern: &StencilKernel,
        size: &ProblemSize,
        hw: &HardwareConfig,
        mc: &MachineConstants,
        t: &TileConfig,
    ) -> f64 {
        let one = TileConfig { k: 1, ..*t };
        let bands = time_bands(size, t) as f64;
        let per_band = bands * Self::compute_time(kern, hw, mc, &one).max(Self::memory_time(kern, hw, mc, &one));
        let n = tile_count(size, t) as f64;
        let work = n * kern.c_iter * (f64::from(t.t_s1) * f64::from(t.t_t)) * t.threads() as f64
            / (f64::from(hw.n_sm) * f64::from(hw.n_v));
        let traffic = n * tile_footprint_bytes(kern, t) as f64 / (mc.bandwidth_gbps * 1e9);
        // Shave a few ulps so rounding never lifts the bound above an exact tie.
        per_band.max(work).max(traffic) * (1.0 - 1e-12)
    }

    fn dominance_features(&self, kern: &StencilKernel, size: &ProblemSize, t: &TileConfig) -> Option<Vec<f64>> {
        Some(vec![
            time_bands(size, t) as f64,
            spatial_tile_count(size, t) as f64,
            f64::from(t.t_s1) * f64::from(t.t_t),
            t.threads() as f64,
            tile_footprint_bytes(kern, t) as f64,
        ])
    }
}

/// Achieved GFLOP/s of one instance.
pub fn gflops(kern: &StencilKernel, size: &ProblemSize, time_s: f64) -> Result<f64> {
    if !(time_s > 0.0) {
        return Err(Error::NonPositiveTime(time_s));
    }
    Ok(instance_flops(kern, size)? / time_s / 1e9)
}
