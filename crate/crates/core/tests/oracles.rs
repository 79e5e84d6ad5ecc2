//! Worked examples checked against independent oracles.

mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codesign_core::area::{area_breakdown, sm_area, total_area, AreaCoefficients, HardwareConfig};
use codesign_core::calibration::{fit_linear, AreaSample};
use codesign_core::explorer::{best_design, Explorer};
use codesign_core::store::ResultsStore;
use codesign_core::tiles::{is_feasible, max_k, optimize_tiles, SearchOptions, Steps, TileSearchBounds};
use codesign_core::time_model::{tile_footprint_bytes, MachineConstants, ReferenceModel, TileConfig, TimeModel};
use codesign_core::workload::{ProblemSize, StencilKernel};

use common::*;

const C: AreaCoefficients = AreaCoefficients::MAXWELL;

#[test]
fn area_examples_match_term_expansion() {
    for hw in [HardwareConfig::gtx980(), HardwareConfig::titan_x()] {
        assert_relative_eq!(total_area(&hw, &C), area_by_terms(&hw, &C), max_relative = 1e-14);
        assert_relative_eq!(
            total_area(&hw, &C),
            hw.n_sm as f64 * sm_area(&hw, &C) + C.beta_l2 * hw.l2_kb,
            max_relative = 1e-14
        );
    }
    // Frozen from area_by_terms.
    assert_relative_eq!(sm_area(&HardwareConfig::gtx980(), &C), 19.502186, epsilon = 1e-9);
    assert_relative_eq!(area_breakdown(&HardwareConfig::gtx980(), &C).shared, 25.52336, epsilon = 1e-9);
}

#[test]
fn noisy_regression_recovers_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (beta, alpha) = (0.01565, 0.09281);
    let samples: Vec<AreaSample> = [24.0, 48.0, 96.0, 192.0, 384.0, 768.0]
        .iter()
        .map(|&x| {
            let noise = 1.0 + rng.gen_range(-0.01..=0.01);
            AreaSample::new(x, (beta * x + alpha) * noise).unwrap()
        })
        .collect();
    let fit = fit_linear(&samples).unwrap();
    let (ob, oa) = ols_normal_equations(&samples);
    assert_relative_eq!(fit.beta, ob, max_relative = 1e-9);
    assert_relative_eq!(fit.alpha, oa, max_relative = 1e-6);
    assert!((fit.beta - beta).abs() / beta < 0.03, "{}", fit.beta);
    assert!(fit.r_squared > 0.99 && fit.r_squared <= 1.0);
}

#[test]
fn footprint_matches_read_set_enumeration() {
    let k2 = StencilKernel::new("Jacobi-2D", 2, 5, 1e-9);
    let k3 = StencilKernel::new("Heat-3D", 3, 14, 1e-9);
    let t2 = TileConfig::new_2d(16, 32, 2, 1);
    let t3 = TileConfig::new_3d(8, 32, 4, 2, 1);
    assert_eq!(footprint_by_enumeration(&k2, &t2), 5440);
    assert_eq!(footprint_by_enumeration(&k3, &t3), 19584);
    assert_eq!(tile_footprint_bytes(&k3, &t3), 19584);
    let k_wide = StencilKernel { order: 2, n_arrays: 3, bytes_per_elem: 8, ..k2 };
    let t = TileConfig::new_2d(5, 64, 6, 1);
    assert_eq!(tile_footprint_bytes(&k_wide, &t), footprint_by_enumeration(&k_wide, &t));
}

#[test]
fn multi_wave_time_matches_simulator() {
    let k = StencilKernel::new("Jacobi-2D", 2, 5, 1e-9);
    let hw = HardwareConfig { n_sm: 2, n_v: 32, m_sm_kb: 48.0, r_vu_kb: 2.0, l1_smpair_kb: 0.0, l2_kb: 0.0 };
    let mc = MachineConstants { bandwidth_gbps: f64::INFINITY, ..Default::default() };
    let t = TileConfig::new_2d(16, 32, 2, 1);
    let size = ProblemSize::square_2d(64, 4);
    let sim = simulate_waves(&k, &size, &hw, &mc, &t);
    assert_eq!(sim, 8.0 * (1e-9 * 32.0));
    assert_eq!(ReferenceModel.t_alg(&k, &size, &hw, &mc, &t).unwrap(), sim);
}

#[test]
fn feasibility_examples() {
    let k = StencilKernel::new("Jacobi-2D", 2, 5, 1e-9);
    let hw = HardwareConfig { n_sm: 2, n_v: 32, m_sm_kb: 48.0, r_vu_kb: 2.0, l1_smpair_kb: 0.0, l2_kb: 0.0 };
    let mc = MachineConstants::default();
    let t = TileConfig::new_2d(16, 32, 2, 9);
    // 9 * 5440 = 48960 <= 49152 < 10 * 5440
    assert!(is_feasible(&k, &hw, &mc, &t) && tile_constraints_hold(&k, &hw, &mc, &t));
    let t10 = TileConfig { k: 10, ..t };
    assert!(!is_feasible(&k, &hw, &mc, &t10) && !tile_constraints_hold(&k, &hw, &mc, &t10));
    assert_eq!(max_k(&k, &hw, &mc, &t), 9);
}

#[test]
fn small_instance_matches_exhaustive_enumeration() {
    let k = StencilKernel::new("Jacobi-2D", 2, 5, 1e-9);
    let size = ProblemSize::square_2d(64, 8);
    let hw = HardwareConfig { n_sm: 2, n_v: 32, m_sm_kb: 48.0, r_vu_kb: 2.0, l1_smpair_kb: 0.0, l2_kb: 0.0 };
    let mc = MachineConstants::default();
    let bounds = TileSearchBounds {
        t_s1: Steps::new(8, 16, 8),
        t_s2: Steps::new(32, 64, 32),
        t_s3: Steps::single(1),
        t_t: Steps::new(2, 4, 2),
    };
    let (time, tile) = exhaustive_best(&ReferenceModel, &k, &size, &hw, &mc, &bounds).unwrap();
    for prune in [true, false] {
        let sol = optimize_tiles(&k, &size, &hw, &mc, &bounds, &ReferenceModel, SearchOptions { prune }).unwrap();
        assert_eq!(sol.time_s, Some(time));
        assert_eq!(sol.tile, Some(tile));
    }
}

#[test]
fn randomized_instances_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..25 {
        let (k, size, hw, mc, bounds) = random_instance(&mut rng);
        let expected = exhaustive_best(&ReferenceModel, &k, &size, &hw, &mc, &bounds);
        for prune in [true, false] {
            let sol = optimize_tiles(&k, &size, &hw, &mc, &bounds, &ReferenceModel, SearchOptions { prune }).unwrap();
            match expected {
                Some((time, tile)) => {
                    assert!(sol.feasible, "case {case}");
                    assert_eq!(sol.time_s, Some(time), "case {case} prune {prune}");
                    assert_eq!(sol.tile, Some(tile), "case {case} prune {prune}");
                }
                None => assert!(!sol.feasible, "case {case}"),
            }
        }
    }
}

#[test]
fn decomposition_matches_joint_brute_force() {
    let (w, space, mc, bounds) = joint_fixture();
    let ex = Explorer::new(Arc::new(ReferenceModel), Arc::new(ResultsStore::in_memory()))
        .with_machine(mc)
        .with_bounds(bounds);
    let points = ex.explore(&space, &w).unwrap();
    assert_eq!(points.len(), 8);
    let hws: Vec<HardwareConfig> = points.iter().map(|p| p.hw).collect();
    let (value, idx) = joint_brute_force(&ReferenceModel, &w, &hws, &mc, &bounds).unwrap();
    let best = best_design(&points).unwrap();
    assert_eq!(best.weighted_time_s, value);
    assert_eq!(best.hw, hws[idx]);
}
