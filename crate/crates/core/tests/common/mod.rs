//! Independent oracles used by the integration and acceptance tests.
//! Nothing here calls the optimizer or the explorer.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use codesign_core::area::{AreaCoefficients, HardwareConfig};
use codesign_core::calibration::AreaSample;
use codesign_core::explorer::HardwareSpace;
use codesign_core::tiles::{Steps, TileSearchBounds};
use codesign_core::time_model::{MachineConstants, TileConfig, TimeModel};
use codesign_core::workload::{ProblemSize, StencilKernel, WorkloadSpec};

/// Total die area written out term by term.
pub fn area_by_terms(hw: &HardwareConfig, c: &AreaCoefficients) -> f64 {
    let n = hw.n_sm as f64;
    let nv = hw.n_v as f64;
    (c.beta_vu + c.alpha_r) * n * nv
        + c.beta_r * hw.r_vu_kb * n * nv
        + (c.beta_m * hw.m_sm_kb + c.alpha_m) * n
        + 0.5 * (c.beta_l1 * hw.l1_smpair_kb + c.alpha_l1) * n
        + c.beta_l2 * hw.l2_kb
        + (c.alpha_l2 + c.alpha_oh) * n
}

/// Least squares through the raw normal equations.
pub fn ols_normal_equations(samples: &[AreaSample]) -> (f64, f64) {
    let n = samples.len() as f64;
    let sx: f64 = samples.iter().map(|s| s.size_kb).sum();
    let sy: f64 = samples.iter().map(|s| s.area_mm2).sum();
    let sxx: f64 = samples.iter().map(|s| s.size_kb * s.size_kb).sum();
    let sxy: f64 = samples.iter().map(|s| s.size_kb * s.area_mm2).sum();
    let beta = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (beta, (sy - beta * sx) / n)
}

/// Footprint by marking every grid point a tile reads: after `t_T` steps a
/// point depends on neighbours up to `order * t_T` away along dimension 1
/// and `order` away along the others. Counts the union over the tile.
pub fn footprint_by_enumeration(kern: &StencilKernel, t: &TileConfig) -> u64 {
    let r = kern.order as i64;
    let reach1 = r * t.t_t as i64;
    let (s3, reach3) = match t.t_s3 {
        Some(s) => (s as i64, r),
        None => (1, 0),
    };
    let mut seen = HashSet::new();
    for x in 0..t.t_s1 as i64 {
        for y in 0..t.t_s2 as i64 {
            for z in 0..s3 {
                for dx in -reach1..=reach1 {
                    for dy in -r..=r {
                        for dz in -reach3..=reach3 {
                            seen.insert((x + dx, y + dy, z + dz));
                        }
                    }
                }
            }
        }
    }
    seen.len() as u64 * kern.n_arrays as u64 * kern.bytes_per_elem as u64
}

/// Tiles are placed round-robin on `n_SM * k` slots, band after band. Each
/// launched wave holds every SM for its full residency `k`; an SM retires
/// `n_V / warp_size` warps per round. Wave durations are grouped by value
/// and summed as count * duration.
pub fn simulate_waves(
    kern: &StencilKernel,
    size: &ProblemSize,
    hw: &HardwareConfig,
    mc: &MachineConstants,
    t: &TileConfig,
) -> f64 {
    let ceil = |a: u64, b: u64| a.div_ceil(b);
    let spatial = ceil(size.s1, t.t_s1 as u64)
        * ceil(size.s2, t.t_s2 as u64)
        * match (size.s3, t.t_s3) {
            (Some(s3), Some(t3)) => ceil(s3, t3 as u64),
            _ => 1,
        };
    let bands = ceil(size.t, t.t_t as u64);
    let slots = hw.n_sm as u64 * t.k as u64;
    let threads = t.t_s2 as u64 * t.t_s3.unwrap_or(1) as u64;
    let footprint = footprint_by_enumeration(kern, t);
    let mut durations: BTreeMap<u64, u64> = BTreeMap::new();
    for _band in 0..bands {
        let mut placed = 0u64;
        while placed < spatial {
            let in_wave = (spatial - placed).min(slots);
            placed += in_wave;
            let mut slowest = 0.0f64;
            for _sm in 0..hw.n_sm {
                let warps = ceil(t.k as u64 * threads, mc.warp_size as u64);
                // Lanes are handed out warp-wise: a partial warp still takes a full warp slot.
                let lanes_per_round = hw.n_v as u64;
                let mut pending_lanes = warps * mc.warp_size as u64;
                let mut rounds = 0u64;
                while pending_lanes > 0 {
                    pending_lanes = pending_lanes.saturating_sub(lanes_per_round);
                    rounds += 1;
                }
                let compute = kern.c_iter * (t.t_s1 as u64 * t.t_t as u64 * rounds) as f64;
                slowest = slowest.max(compute);
            }
            let memory = (slots * footprint) as f64 / (mc.bandwidth_gbps * 1e9);
            let wave = slowest.max(memory);
            *durations.entry(wave.to_bits()).or_default() += 1;
        }
    }
    durations.iter().map(|(bits, count)| *count as f64 * f64::from_bits(*bits)).sum()
}

/// Tile feasibility constraints re-derived from scratch.
pub fn tile_constraints_hold(kern: &StencilKernel, hw: &HardwareConfig, mc: &MachineConstants, t: &TileConfig) -> bool {
    let r = kern.order as u64;
    let mut m_tile = (t.t_s1 as u64 + 2 * r * t.t_t as u64) * (t.t_s2 as u64 + 2 * r);
    if let Some(s3) = t.t_s3 {
        m_tile *= s3 as u64 + 2 * r;
    }
    m_tile *= kern.n_arrays as u64 * kern.bytes_per_elem as u64;
    let dims_ok = (kern.dims == 3) == t.t_s3.is_some() && t.t_s3 != Some(0);
    dims_ok
        && (m_tile as f64) <= mc.m_block_kb * 1024.0
        && t.k >= 1
        && t.k <= mc.mtb_sm
        && (t.k as f64) * (m_tile as f64) <= hw.m_sm_kb * 1024.0
        && t.t_s1 >= 1
        && t.t_s2 >= 32
        && t.t_s2.is_multiple_of(32)
        && t.t_t >= 2
        && t.t_t.is_multiple_of(2)
}

pub fn hardware_constraints_hold(hw: &HardwareConfig) -> bool {
    let m = hw.m_sm_kb;
    let m_ok = m > 0.0 && (m % 48.0 == 0.0 || m == 12.0 || m == 24.0 || m == 36.0);
    hw.n_sm >= 2 && hw.n_sm.is_multiple_of(2) && hw.n_v >= 32 && hw.n_v.is_multiple_of(32) && m_ok
}

/// Every tile of the grid with every k, scored by the model.
pub fn all_tiles(kern: &StencilKernel, bounds: &TileSearchBounds, mtb_sm: u32) -> Vec<TileConfig> {
    let s3: Vec<Option<u32>> = if kern.dims == 3 { bounds.t_s3.values().map(Some).collect() } else { vec![None] };
    let mut out = Vec::new();
    for t_s1 in bounds.t_s1.values() {
        for t_s2 in bounds.t_s2.values() {
            for &t_s3 in &s3 {
                for t_t in bounds.t_t.values() {
                    for k in 1..=mtb_sm {
                        out.push(TileConfig { t_s1, t_s2, t_s3, t_t, k });
                    }
                }
            }
        }
    }
    out
}

/// Exhaustive minimum with the `(t_T, t_S1, t_S2, t_S3, k)` tie-break.
pub fn exhaustive_best(
    model: &dyn TimeModel,
    kern: &StencilKernel,
    size: &ProblemSize,
    hw: &HardwareConfig,
    mc: &MachineConstants,
    bounds: &TileSearchBounds,
) -> Option<(f64, TileConfig)> {
    let mut best: Option<(f64, TileConfig)> = None;
    for t in all_tiles(kern, bounds, mc.mtb_sm) {
        if !tile_constraints_hold(kern, hw, mc, &t) {
            continue;
        }
        let time = model.t_alg(kern, size, hw, mc, &t).expect("feasible tile evaluates");
        let key = (t.t_t, t.t_s1, t.t_s2, t.t_s3.unwrap_or(0), t.k);
        let better = match &best {
            None => true,
            Some((bt, b)) => time < *bt || (time == *bt && key < (b.t_t, b.t_s1, b.t_s2, b.t_s3.unwrap_or(0), b.k)),
        };
        if better {
            best = Some((time, t));
        }
    }
    best
}

/// Minimizes the weighted objective jointly over hardware and one tile per
/// instance, walking the full product of per-instance tile choices.
/// Returns (best objective, index of best hardware).
pub fn joint_brute_force(
    model: &dyn TimeModel,
    workload: &WorkloadSpec,
    hws: &[HardwareConfig],
    mc: &MachineConstants,
    bounds: &TileSearchBounds,
) -> Option<(f64, usize)> {
    let instances: Vec<_> = workload.instances().filter(|i| i.weight > 0.0).collect();
    let mut best: Option<(f64, usize)> = None;
    for (h, hw) in hws.iter().enumerate() {
        // Feasible (time) choices per instance.
        let choices: Vec<Vec<f64>> = instances
            .iter()
            .map(|inst| {
                all_tiles(inst.kernel, bounds, mc.mtb_sm)
                    .into_iter()
                    .filter(|t| tile_constraints_hold(inst.kernel, hw, mc, t))
                    .map(|t| model.t_alg(inst.kernel, inst.size, hw, mc, &t).unwrap())
                    .collect()
            })
            .collect();
        if choices.iter().any(|c| c.is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; choices.len()];
        loop {
            let mut total = 0.0;
            for (i, inst) in instances.iter().enumerate() {
                total += inst.weight * choices[i][idx[i]];
            }
            if best.is_none_or(|(b, _)| total < b) {
                best = Some((total, h));
            }
            // Odometer increment.
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    break;
                }
                idx[pos] += 1;
                if idx[pos] < choices[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
    }
    best
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
) -> (StencilKernel, ProblemSize, HardwareConfig, MachineConstants, TileSearchBounds) {
    let three_d = rng.gen_bool(0.4);
    let mut k = StencilKernel::new("k", if three_d { 3 } else { 2 }, rng.gen_range(3..15), rng.gen_range(0.5e-9..5e-9));
    k.order = rng.gen_range(1..=2);
    let s = rng.gen_range(16..400u64);
    let t = rng.gen_range(2..=s.min(64));
    let size = if three_d { ProblemSize::cube_3d(s.min(96), t.min(s.min(96))) } else { ProblemSize::square_2d(s, t) };
    let hw = HardwareConfig {
        n_sm: 2 * rng.gen_range(1..=16),
        n_v: 32 * rng.gen_range(1..=16),
        m_sm_kb: [12.0, 24.0, 36.0, 48.0, 96.0, 240.0][rng.gen_range(0..6)],
        r_vu_kb: 2.0,
        l1_smpair_kb: 0.0,
        l2_kb: 0.0,
    };
    let mc = MachineConstants {
        mtb_sm: rng.gen_range(4..=32),
        bandwidth_gbps: rng.gen_range(20.0..2000.0),
        ..Default::default()
    };
    let bounds = if three_d {
        TileSearchBounds {
            t_s1: Steps::new(1, rng.gen_range(4..=16), 1),
            t_s2: Steps::new(32, 32 * rng.gen_range(1..=4), 32),
            t_s3: Steps::new(1, rng.gen_range(2..=12), 1),
            t_t: Steps::new(2, 2 * rng.gen_range(1..=6), 2),
        }
    } else {
        TileSearchBounds {
            t_s1: Steps::new(1, rng.gen_range(8..=60), 1),
            t_s2: Steps::new(32, 32 * rng.gen_range(1..=8), 32),
            t_s3: Steps::single(1),
            t_t: Steps::new(2, 2 * rng.gen_range(1..=10), 2),
        }
    };
    assert!(bounds.grid_size(k.dims) <= 10_000);
    (k, size, hw, mc, bounds)
}

/// 2 kernels x 2 sizes x 8 hardware points.
pub fn joint_fixture() -> (WorkloadSpec, HardwareSpace, MachineConstants, TileSearchBounds) {
    let kernels = vec![StencilKernel::new("Jacobi-2D", 2, 5, 1e-9), StencilKernel::new("Heat-2D", 2, 10, 2e-9)];
    let sizes = vec![
        vec![ProblemSize::square_2d(64, 8), ProblemSize::square_2d(128, 16)],
        vec![ProblemSize::square_2d(96, 8), ProblemSize::square_2d(64, 32)],
    ];
    let mut w = WorkloadSpec::uniform(kernels, sizes).unwrap();
    w.fr_kernel = vec![0.7, 0.3];
    w.fr_size = vec![vec![0.25, 0.75], vec![0.5, 0.5]];
    w.validate().unwrap();
    let space = HardwareSpace { n_sm: vec![2, 4], n_v: vec![32, 64], m_sm_kb: vec![12.0, 48.0], ..Default::default() }
        .with_budget(0.0, 1e6);
    // At this bandwidth the optimum is unique and depends on both M_SM and the tiles.
    let mc = MachineConstants { mtb_sm: 4, bandwidth_gbps: 500.0, ..Default::default() };
    let bounds = TileSearchBounds {
        t_s1: Steps::new(8, 16, 8),
        t_s2: Steps::new(32, 64, 32),
        t_s3: Steps::single(1),
        t_t: Steps::new(2, 4, 2),
    };
    (w, space, mc, bounds)
}
