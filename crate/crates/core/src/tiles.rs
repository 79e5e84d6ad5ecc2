//! Per-instance tile optimization: the best `(t_S1, t_S2, [t_S3], t_T, k)`
//! for a fixed kernel, problem size and hardware point.
//!
//! The search is exhaustive over a bounded grid. The pruned path removes
//! tiles that exceed the per-threadblock shared memory, then drops tiles
//! dominated (under the model's declared features) by a tile earlier in
//! tie-break order, and finally skips tiles whose lower bound already exceeds
//! the incumbent. None of these steps can change the returned minimum.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::area::HardwareConfig;
use crate::error::{Error, Result};
use crate::time_model::{tile_footprint_bytes, MachineConstants, TileConfig, TimeModel};
use crate::workload::{ProblemSize, StencilKernel};

/// Inclusive arithmetic range `min, min + step, ..., <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Steps {
    pub min: u32,
    pub max: u32,
    pub step: u32,
}

impl Steps {
    pub const fn new(min: u32, max: u32, step: u32) -> Self {
        Steps { min, max, step }
    }

    pub const fn single(v: u32) -> Self {
        Steps { min: v, max: v, step: 1 }
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + Clone {
        (self.min..=self.max).step_by(self.step.max(1) as usize)
    }

    pub fn len(&self) -> usize {
        if self.step == 0 || self.min > self.max {
            0
        } else {
            ((self.max - self.min) / self.step + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSearchBounds {
    #[serde(rename = "t_S1", default = "TileSearchBounds::default_s1")]
    pub t_s1: Steps,
    #[serde(rename = "t_S2", default = "TileSearchBounds::default_s2")]
    pub t_s2: Steps,
    #[serde(rename = "t_S3", default = "TileSearchBounds::default_s3")]
    pub t_s3: Steps,
    #[serde(rename = "t_T", default = "TileSearchBounds::default_t")]
    pub t_t: Steps,
}

impl TileSearchBounds {
    fn default_s1() -> Steps {
        Steps::new(1, 512, 1)
    }
    fn default_s2() -> Steps {
        Steps::new(32, 1024, 32)
    }
    fn default_s3() -> Steps {
        Steps::new(1, 64, 1)
    }
    fn default_t() -> Steps {
        Steps::new(2, 64, 2)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("t_S1", self.t_s1), ("t_S2", self.t_s2), ("t_S3", self.t_s3), ("t_T", self.t_t)] {
            if s.is_empty() || s.min == 0 {
                return Err(Error::InvalidBounds(format!("{name} range {s:?} is empty or starts at 0")));
            }
        }
        let s2 = self.t_s2;
        if !s2.min.is_multiple_of(32) || (s2.len() > 1 && !s2.step.is_multiple_of(32)) {
            return Err(Error::InvalidBounds("t_S2 values must be multiples of 32".into()));
        }
        let t = self.t_t;
        if !t.min.is_multiple_of(2) || (t.len() > 1 && !t.step.is_multiple_of(2)) {
            return Err(Error::InvalidBounds("t_T values must be even".into()));
        }
        Ok(())
    }

    /// Number of tile-extent combinations (k excluded).
    pub fn grid_size(&self, dims: u8) -> usize {
        let base = self.t_s1.len() * self.t_s2.len() * self.t_t.len();
        if dims == 3 {
            base * self.t_s3.len()
        } else {
            base
        }
    }
}

impl Default for TileSearchBounds {
    fn default() -> Self {
        TileSearchBounds {
            t_s1: Self::default_s1(),
            t_s2: Self::default_s2(),
            t_s3: Self::default_s3(),
            t_t: Self::default_t(),
        }
    }
}

/// Optimal tile of one instance; `tile` and `time_s` are `None` when no
/// feasible tile exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileSolution {
    pub feasible: bool,
    pub tile: Option<TileConfig>,
    pub time_s: Option<f64>,
}

impl TileSolution {
    pub fn infeasible() -> Self {
        TileSolution { feasible: false, tile: None, time_s: None }
    }

    pub fn found(tile: TileConfig, time_s: f64) -> Self {
        TileSolution { feasible: true, tile: Some(tile), time_s: Some(time_s) }
    }
}

/// Integrality, warp and parity constraints on the tile itself.
pub fn check_tile_shape(kern: &StencilKernel, t: &TileConfig) -> Result<()> {
    let bad = |msg: &str| Err(Error::InvalidTile(format!("{t:?}: {msg}")));
    if t.t_s1 < 1 {
        return bad("t_S1 must be >= 1");
    }
    if t.t_s2 < 32 || !t.t_s2.is_multiple_of(32) {
        return bad("t_S2 must be a positive multiple of 32");
    }
    if t.t_t < 2 || !t.t_t.is_multiple_of(2) {
        return bad("t_T must be even and >= 2");
    }
    if t.k < 1 {
        return bad("k must be >= 1");
    }
    match (kern.is_3d(), t.t_s3) {
        (true, None) => bad("3D kernel needs t_S3"),
        (true, Some(0)) => bad("t_S3 must be >= 1"),
        (false, Some(_)) => bad("2D kernel must not set t_S3"),
        _ => Ok(()),
    }
}

pub fn is_feasible(kern: &StencilKernel, hw: &HardwareConfig, mc: &MachineConstants, t: &TileConfig) -> bool {
    if check_tile_shape(kern, t).is_err() {
        return false;
    }
    let m_tile = tile_footprint_bytes(kern, t) as f64;
    m_tile <= mc.m_block_bytes() && t.k <= mc.mtb_sm && f64::from(t.k) * m_tile <= hw.m_sm_kb * 1024.0
}

/// Largest residency allowed by the threadblock limit and shared memory.
pub fn max_k(kern: &StencilKernel, hw: &HardwareConfig, mc: &MachineConstants, t: &TileConfig) -> u32 {
    max_k_for_footprint(tile_footprint_bytes(kern, t), hw, mc)
}

fn max_k_for_footprint(m_tile: u64, hw: &HardwareConfig, mc: &MachineConstants) -> u32 {
    if m_tile == 0 {
        return mc.mtb_sm;
    }
    let by_memory = (hw.m_sm_kb * 1024.0 / m_tile as f64).floor();
    if by_memory >= f64::from(mc.mtb_sm) {
        mc.mtb_sm
    } else {
        by_memory as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub prune: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { prune: true }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    /// Tile extents with `k = 1`.
    tile: TileConfig,
    m_tile: u64,
}

/// Hardware-independent candidate tiles for one (kernel, size), reusable
/// across every hardware point of an exploration.
#[derive(Debug, Clone)]
pub struct TileCandidates {
    kernel: StencilKernel,
    size: ProblemSize,
    candidates: Vec<Candidate>,
    prune: bool,
}

impl TileCandidates {
    pub fn build(
        kern: &StencilKernel,
        size: &ProblemSize,
        mc: &MachineConstants,
        bounds: &TileSearchBounds,
        model: &dyn TimeModel,
        opts: SearchOptions,
    ) -> Result<Self> {
        kern.validate()?;
        size.validate_for(kern)?;
        mc.validate()?;
        bounds.validate()?;
        let mut candidates = Vec::new();
        let cap = mc.m_block_bytes();
        let s3_values: Vec<Option<u32>> =
            if kern.is_3d() { bounds.t_s3.values().map(Some).collect() } else { vec![None] };
        let fits = |t: &TileConfig| !opts.prune || tile_footprint_bytes(kern, t) as f64 <= cap;
        // Nesting follows the tie-break order so candidates come out sorted.
        // The footprint grows with every extent, so a miss ends the loop.
        for t_t in bounds.t_t.values() {
            for t_s1 in bounds.t_s1.values() {
                let first = TileConfig { t_s1, t_s2: bounds.t_s2.min, t_s3: s3_values[0], t_t, k: 1 };
                if !fits(&first) {
                    break;
                }
                for t_s2 in bounds.t_s2.values() {
                    let head = TileConfig { t_s2, ..first };
                    if !fits(&head) {
                        break;
                    }
                    for &t_s3 in &s3_values {
                        let tile = TileConfig { t_s3, ..head };
                        if !fits(&tile) {
                            break;
                        }
                        candidates.push(Candidate { tile, m_tile: tile_footprint_bytes(kern, &tile) });
                    }
                }
            }
        }
        if opts.prune {
            candidates = drop_dominated(candidates, |c| model.dominance_features(kern, size, &c.tile));
        }
        Ok(TileCandidates { kernel: kern.clone(), size: *size, candidates, prune: opts.prune })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn solve(&self, hw: &HardwareConfig, mc: &MachineConstants, model: &dyn TimeModel) -> TileSolution {
        let kern = &self.kernel;
        let size = &self.size;
        let mut order: Vec<(f64, &Candidate)> = self
            .candidates
            .iter()
            .filter(|c| c.m_tile as f64 <= mc.m_block_bytes() && max_k_for_footprint(c.m_tile, hw, mc) >= 1)
            .map(|c| {
                let lb = if self.prune { model.lower_bound(kern, size, hw, mc, &c.tile) } else { 0.0 };
                (lb, c)
            })
            .collect();
        if self.prune {
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut best: Option<(f64, TileConfig)> = None;
        for (lb, c) in order {
            if let Some((best_time, _)) = best {
                if lb > best_time {
                    break;
                }
            }
            for k in 1..=max_k_for_footprint(c.m_tile, hw, mc) {
                let tile = TileConfig { k, ..c.tile };
                let time = model.evaluate(kern, size, hw, mc, &tile);
                let better = match &best {
                    None => true,
                    Some((bt, btile)) => match time.total_cmp(bt) {
                        Ordering::Less => true,
                        Ordering::Equal => tile.sort_key() < btile.sort_key(),
                        Ordering::Greater => false,
                    },
                };
                if better {
                    best = Some((time, tile));
                }
            }
        }
        match best {
            Some((time, tile)) => TileSolution::found(tile, time),
            None => TileSolution::infeasible(),
        }
    }
}

/// Keeps a candidate unless an earlier candidate is no worse in every feature.
fn drop_dominated<F>(candidates: Vec<Candidate>, features: F) -> Vec<Candidate>
where
    F: Fn(&Candidate) -> Option<Vec<f64>>,
{
    let mut kept: Vec<(Candidate, Vec<f64>)> = Vec::new();
    for c in candidates {
        let Some(f) = features(&c) else {
            // Model gives no features: nothing can be dropped.
            kept.push((c, Vec::new()));
            continue;
        };
        let dominated =
            kept.iter().any(|(_, g)| g.len() == f.len() && !g.is_empty() && g.iter().zip(&f).all(|(a, b)| a <= b));
        if !dominated {
            kept.push((c, f));
        }
    }
    kept.into_iter().map(|(c, _)| c).collect()
}

/// Best tile for one instance over the bounded grid.
pub fn optimize_tiles(
    kern: &StencilKernel,
    size: &ProblemSize,
    hw: &HardwareConfig,
    mc: &MachineConstants,
    bounds: &TileSearchBounds,
    model: &dyn TimeModel,
    opts: SearchOptions,
) -> Result<TileSolution> {
    hw.validate()?;
    Ok(TileCandidates::build(kern, size, mc, bounds, model, opts)?.solve(hw, mc, model))
}
