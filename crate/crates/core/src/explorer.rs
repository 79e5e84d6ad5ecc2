//! Outer codesign loop over hardware points.
//!
//! For a fixed hardware point the weighted objective separates into one
//! independent tile optimization per (kernel, size), so the explorer
//! enumerates hardware exhaustively and solves each instance on its own.
//! Instance results go through a [`ResultsStore`], which lets later
//! re-weightings (single-kernel sensitivity, other frequency mixes) run
//! without solving anything again.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::area::{area_breakdown, total_area, AreaCoefficients, HardwareConfig};
use crate::error::{Error, Result};
use crate::store::{instance_key, ResultsStore, StoreRecord};
use crate::tiles::{SearchOptions, TileCandidates, TileSearchBounds, TileSolution};
use crate::time_model::{MachineConstants, TimeModel};
use crate::workload::{instance_flops, ProblemSize, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpace {
    #[serde(rename = "n_SM", default = "HardwareSpace::default_n_sm")]
    pub n_sm: Vec<u32>,
    #[serde(rename = "n_V", default = "HardwareSpace::default_n_v")]
    pub n_v: Vec<u32>,
    #[serde(rename = "M_SM", default = "HardwareSpace::default_m_sm")]
    pub m_sm_kb: Vec<f64>,
    /// Register file per vector unit; a single value unless explored.
    #[serde(rename = "R_VU", default = "HardwareSpace::default_r_vu")]
    pub r_vu_kb: Vec<f64>,
    #[serde(rename = "L1_SMpair", default)]
    pub l1_smpair_kb: f64,
    #[serde(rename = "L2_kB", default)]
    pub l2_kb: f64,
    /// Inclusive area window, mm².
    #[serde(default = "HardwareSpace::default_budget")]
    pub budget: (f64, f64),
}

impl HardwareSpace {
    fn default_n_sm() -> Vec<u32> {
        (2..=32).step_by(2).collect()
    }
    fn default_n_v() -> Vec<u32> {
        (32..=2048).step_by(32).collect()
    }
    fn default_m_sm() -> Vec<f64> {
        let mut v = vec![12.0, 24.0, 36.0];
        v.extend((1..=10).map(|i| 48.0 * f64::from(i)));
        v
    }
    fn default_r_vu() -> Vec<f64> {
        vec![2.0]
    }
    fn default_budget() -> (f64, f64) {
        (200.0, 650.0)
    }

    pub fn with_budget(mut self, lo: f64, hi: f64) -> Self {
        self.budget = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn sorted_nonempty<T: PartialOrd + Copy>(name: &str, v: &[T]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidSpace(format!("{name} has no values")));
            }
            if v.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidSpace(format!("{name} must be strictly increasing")));
            }
            Ok(())
        }
        sorted_nonempty("n_SM", &self.n_sm)?;
        sorted_nonempty("n_V", &self.n_v)?;
        sorted_nonempty("M_SM", &self.m_sm_kb)?;
        sorted_nonempty("R_VU", &self.r_vu_kb)?;
        let (lo, hi) = self.budget;
        if !(lo <= hi) {
            return Err(Error::InvalidSpace(format!("budget [{lo}, {hi}] is empty")));
        }
        for hw in self.grid() {
            hw.validate()?;
        }
        Ok(())
    }

    /// Every grid point, before the area filter.
    pub fn grid(&self) -> impl Iterator<Item = HardwareConfig> + '_ {
        self.n_sm.iter().flat_map(move |&n_sm| {
            self.n_v.iter().flat_map(move |&n_v| {
                self.m_sm_kb.iter().flat_map(move |&m_sm_kb| {
                    self.r_vu_kb.iter().map(move |&r_vu_kb| HardwareConfig {
                        n_sm,
                        n_v,
                        m_sm_kb,
                        r_vu_kb,
                        l1_smpair_kb: self.l1_smpair_kb,
                        l2_kb: self.l2_kb,
                    })
                })
            })
        })
    }

    pub fn grid_len(&self) -> usize {
        self.n_sm.len() * self.n_v.len() * self.m_sm_kb.len() * self.r_vu_kb.len()
    }
}

impl Default for HardwareSpace {
    fn default() -> Self {
        HardwareSpace {
            n_sm: Self::default_n_sm(),
            n_v: Self::default_n_v(),
            m_sm_kb: Self::default_m_sm(),
            r_vu_kb: Self::default_r_vu(),
            l1_smpair_kb: 0.0,
            l2_kb: 0.0,
            budget: Self::default_budget(),
        }
    }
}

/// Grid points whose area lies in the budget window, by ascending area.
pub fn enumerate_hardware(space: &HardwareSpace, coeffs: &AreaCoefficients) -> Result<Vec<(HardwareConfig, f64)>> {
    space.validate()?;
    let (lo, hi) = space.budget;
    let mut out: Vec<(HardwareConfig, f64)> =
        space.grid().map(|hw| (hw, total_area(&hw, coeffs))).filter(|&(_, a)| a >= lo && a <= hi).collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub kernel: String,
    pub size: ProblemSize,
    pub weight: f64,
    pub solution: TileSolution,
}

/// One evaluated hardware point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub hw: HardwareConfig,
    pub area_mm2: f64,
    pub feasible: bool,
    /// Frequency-weighted sum of optimal instance times; infinite if infeasible.
    #[serde(with = "finite_or_null")]
    pub weighted_time_s: f64,
    /// Weighted flops over weighted time; zero if infeasible.
    pub gflops: f64,
    /// Instances with nonzero weight, in workload order.
    pub solutions: Vec<InstanceResult>,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Area fractions of one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceShare {
    pub memory_share: f64,
    pub vector_share: f64,
    pub overhead_share: f64,
}

pub fn resource_share(hw: &HardwareConfig, coeffs: &AreaCoefficients) -> ResourceShare {
    let b = area_breakdown(hw, coeffs);
    let total = b.total();
    ResourceShare {
        memory_share: b.memory() / total,
        vector_share: b.vector_logic / total,
        overhead_share: b.overhead / total,
    }
}

pub fn resource_allocation(points: &[DesignPoint], coeffs: &AreaCoefficients) -> Vec<ResourceShare> {
    points.iter().map(|p| resource_share(&p.hw, coeffs)).collect()
}

/// Indices of the non-dominated `(area, gflops)` pairs, by ascending area.
/// Exact duplicates keep the first by input order.
pub fn pareto_indices(pairs: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0).then(pairs[b].1.total_cmp(&pairs[a].1)).then(a.cmp(&b)));
    let mut best = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for i in order {
        if pairs[i].1 > best {
            best = pairs[i].1;
            out.push(i);
        }
    }
    out
}

/// Feasible points not dominated in (smaller area, higher GFLOP/s).
pub fn pareto_frontier(points: &[DesignPoint]) -> Vec<DesignPoint> {
    let feasible: Vec<&DesignPoint> = points.iter().filter(|p| p.feasible).collect();
    let pairs: Vec<(f64, f64)> = feasible.iter().map(|p| (p.area_mm2, p.gflops)).collect();
    pareto_indices(&pairs).into_iter().map(|i| feasible[i].clone()).collect()
}

/// Lowest weighted time; ties go to the smaller area, then input order.
pub fn best_design(points: &[DesignPoint]) -> Option<&DesignPoint> {
    points
        .iter()
        .filter(|p| p.feasible)
        .min_by(|a, b| a.weighted_time_s.total_cmp(&b.weighted_time_s).then(a.area_mm2.total_cmp(&b.area_mm2)))
}

/// Weighted time and workload GFLOP/s of a set of instance solutions.
fn aggregate(workload: &WorkloadSpec, solutions: &[InstanceResult]) -> Result<(bool, f64, f64)> {
    let mut time = 0.0;
    let mut flops = 0.0;
    for r in solutions {
        let Some(t) = r.solution.time_s else {
            return Ok((false, f64::INFINITY, 0.0));
        };
        let kern = &workload.kernels[workload.kernel_index(&r.kernel).expect("instance kernel in workload")];
        time += r.weight * t;
        flops += r.weight * instance_flops(kern, &r.size)?;
    }
    if !(time > 0.0) {
        return Ok((false, f64::INFINITY, 0.0));
    }
    Ok((true, time, flops / time / 1e9))
}

/// Evaluates designs for one model, machine and search-bound setting.
pub struct Explorer {
    pub coeffs: AreaCoefficients,
    pub machine: MachineConstants,
    pub bounds: TileSearchBounds,
    pub options: SearchOptions,
    model: Arc<dyn TimeModel>,
    store: Arc<ResultsStore>,
}

/// Lazily built candidate tiles, one slot per workload instance.
pub struct CandidateCache {
    slots: Vec<Vec<OnceLock<Result<TileCandidates>>>>,
}

impl CandidateCache {
    pub fn new(workload: &WorkloadSpec) -> Self {
        CandidateCache { slots: workload.sizes.iter().map(|s| s.iter().map(|_| OnceLock::new()).collect()).collect() }
    }
}

impl Explorer {
    pub fn new(model: Arc<dyn TimeModel>, store: Arc<ResultsStore>) -> Self {
        Explorer {
            coeffs: AreaCoefficients::default(),
            machine: MachineConstants::default(),
            bounds: TileSearchBounds::default(),
            options: SearchOptions::default(),
            model,
            store,
        }
    }

    pub fn with_coefficients(mut self, coeffs: AreaCoefficients) -> Self {
        self.coeffs = coeffs;
        self
    }

    pub fn with_machine(mut self, machine: MachineConstants) -> Self {
        self.machine = machine;
        self
    }

    pub fn with_bounds(mut self, bounds: TileSearchBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_options(mut self, options: SearchOptions) -> Self {
        self.options = options;
        self
    }

    pub fn store(&self) -> &ResultsStore {
        &self.store
    }

    pub fn model(&self) -> &dyn TimeModel {
        self.model.as_ref()
    }

    /// Solves (or recalls) every weighted instance on `hw`.
    pub fn evaluate_design(&self, hw: &HardwareConfig, workload: &WorkloadSpec) -> Result<DesignPoint> {
        self.evaluate_with(hw, workload, &CandidateCache::new(workload), true)
    }

    /// Like [`Self::evaluate_design`] but never solves; missing instances are an error.
    pub fn evaluate_cached(&self, hw: &HardwareConfig, workload: &WorkloadSpec) -> Result<DesignPoint> {
        self.evaluate_with(hw, workload, &CandidateCache::new(workload), false)
    }

    pub fn evaluate_with(
        &self,
        hw: &HardwareConfig,
        workload: &WorkloadSpec,
        cache: &CandidateCache,
        solve_missing: bool,
    ) -> Result<DesignPoint> {
        hw.validate()?;
        let mut solutions = Vec::new();
        let mut missing = Vec::new();
        for inst in workload.instances().filter(|i| i.weight > 0.0) {
            let key = instance_key(self.model.as_ref(), inst.kernel, inst.size, hw, &self.machine, &self.bounds);
            let solution = match self.store.get(&key) {
                Some(s) => s,
                None if !solve_missing => {
                    missing.push(key);
                    continue;
                }
                None => {
                    let slot = &cache.slots[inst.kernel_index][inst.size_index];
                    let candidates = slot.get_or_init(|| {
                        TileCandidates::build(
                            inst.kernel,
                            inst.size,
                            &self.machine,
                            &self.bounds,
                            self.model.as_ref(),
                            self.options,
                        )
                    });
                    let candidates = match candidates {
                        Ok(c) => c,
                        Err(e) => return Err(Error::InvalidConfig(e.to_string())),
                    };
                    let s = candidates.solve(hw, &self.machine, self.model.as_ref());
                    self.store.record_solve();
                    self.store.insert(StoreRecord {
                        key,
                        hw: *hw,
                        kernel: inst.kernel.name.clone(),
                        size: *inst.size,
                        tile: s.tile,
                        k: s.tile.map(|t| t.k),
                        time_s: s.time_s,
                    })?;
                    s
                }
            };
            solutions.push(InstanceResult {
                kernel: inst.kernel.name.clone(),
                size: *inst.size,
                weight: inst.weight,
                solution,
            });
        }
        if !missing.is_empty() {
            return Err(Error::MissingCacheEntries { count: missing.len(), first: missing[0].clone() });
        }
        let (feasible, weighted_time_s, gflops) = aggregate(workload, &solutions)?;
        Ok(DesignPoint {
            hw: *hw,
            area_mm2: total_area(hw, &self.coeffs),
            feasible,
            weighted_time_s,
            gflops,
            solutions,
        })
    }

    /// Evaluates every in-budget hardware point, in parallel on the current
    /// rayon pool. Output order is the enumeration order.
    pub fn explore(&self, space: &HardwareSpace, workload: &WorkloadSpec) -> Result<Vec<DesignPoint>> {
        self.run(space, workload, true)
    }

    /// Rebuilds all design points from the store alone.
    pub fn reevaluate(&self, space: &HardwareSpace, workload: &WorkloadSpec) -> Result<Vec<DesignPoint>> {
        self.run(space, workload, false)
    }

    fn run(&self, space: &HardwareSpace, workload: &WorkloadSpec, solve_missing: bool) -> Result<Vec<DesignPoint>> {
        workload.validate()?;
        let hws = enumerate_hardware(space, &self.coeffs)?;
        let cache = CandidateCache::new(workload);
        let points =
            hws.par_iter().map(|(hw, _)| self.evaluate_with(hw, workload, &cache, solve_missing)).collect::<Vec<_>>();
        self.store.flush()?;
        let mut out = Vec::with_capacity(points.len());
        let mut missing = 0;
        let mut first = None;
        for p in points {
            match p {
                Ok(p) => out.push(p),
                Err(Error::MissingCacheEntries { count, first: f }) => {
                    missing += count;
                    first.get_or_insert(f);
                }
                Err(e) => return Err(e),
            }
        }
        if missing > 0 {
            return Err(Error::MissingCacheEntries { count: missing, first: first.unwrap_or_default() });
        }
        Ok(out)
    }

    /// Best design when the workload consists of `kernel` alone, computed
    /// from stored instance results only.
    pub fn sensitivity(
        &self,
        space: &HardwareSpace,
        workload: &WorkloadSpec,
        kernel: &str,
    ) -> Result<Option<DesignPoint>> {
        let idx = workload
            .kernel_index(kernel)
            .ok_or_else(|| Error::InvalidWorkload(format!("unknown kernel '{kernel}'")))?;
        let single = workload.with_single_kernel(idx);
        let points = self.reevaluate(space, &single)?;
        Ok(best_design(&points).cloned())
    }
}

/// A reference chip compared against the frontier at no larger area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub name: String,
    pub baseline: DesignPoint,
    pub best: Option<DesignPoint>,
    /// Relative GFLOP/s gain of `best` over the baseline, percent.
    pub improvement_pct: Option<f64>,
}

pub fn compare_baselines(
    explorer: &Explorer,
    workload: &WorkloadSpec,
    frontier: &[DesignPoint],
    baselines: &[(&str, HardwareConfig)],
) -> Result<Vec<BaselineComparison>> {
    baselines
        .iter()
        .map(|(name, hw)| {
            let baseline = explorer.evaluate_design(hw, workload)?;
            let best = frontier
                .iter()
                .filter(|p| p.area_mm2 <= baseline.area_mm2)
                .max_by(|a, b| a.gflops.total_cmp(&b.gflops).then(b.area_mm2.total_cmp(&a.area_mm2)))
                .cloned();
            let improvement_pct = match (&best, baseline.feasible) {
                (Some(b), true) => Some((b.gflops / baseline.gflops - 1.0) * 100.0),
                _ => None,
            };
            Ok(BaselineComparison { name: name.to_string(), baseline, best, improvement_pct })
        })
        .collect()
}

pub fn reference_baselines() -> Vec<(&'static str, HardwareConfig)> {
    vec![("GTX980", HardwareConfig::gtx980()), ("TitanX", HardwareConfig::titan_x())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time_model::ReferenceModel;
    use crate::workload::StencilKernel;

    fn point(area: f64, gflops: f64) -> DesignPoint {
        DesignPoint {
            hw: HardwareConfig::gtx980(),
            area_mm2: area,
            feasible: true,
            weighted_time_s: 1.0 / gflops,
            gflops,
            solutions: vec![],
        }
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(HardwareSpace::default().grid_len(), 13312);
        assert_eq!(HardwareSpace::default().grid().count(), 16 * 64 * 13);
    }

    #[test]
    fn budget_filters() {
        let c = AreaCoefficients::default();
        assert!(enumerate_hardware(&HardwareSpace::default().with_budget(0.0, 0.0), &c).unwrap().is_empty());
        let hws = enumerate_hardware(&HardwareSpace::default(), &c).unwrap();
        assert!(!hws.is_empty());
        assert!(hws.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(hws.iter().all(|(hw, a)| (200.0..=650.0).contains(a) && *a == total_area(hw, &c)));
        assert!(HardwareSpace::default().with_budget(10.0, 5.0).validate().is_err());
    }

    #[test]
    fn pareto_examples() {
        let f = pareto_frontier(&[point(100.0, 10.0), point(120.0, 9.0), point(110.0, 12.0)]);
        let got: Vec<(f64, f64)> = f.iter().map(|p| (p.area_mm2, p.gflops)).collect();
        assert_eq!(got, vec![(100.0, 10.0), (110.0, 12.0)]);
        assert_eq!(pareto_frontier(&[point(5.0, 1.0)]).len(), 1);
        assert_eq!(pareto_indices(&[(5.0, 1.0), (5.0, 1.0), (5.0, 1.0)]), vec![0]);
        assert_eq!(pareto_indices(&[(6.0, 1.0), (5.0, 1.0)]), vec![1]);
        let mut infeasible = point(1.0, 100.0);
        infeasible.feasible = false;
        assert_eq!(pareto_frontier(&[infeasible, point(5.0, 1.0)]).len(), 1);
    }

    #[test]
    fn resource_shares() {
        let c = AreaCoefficients::default();
        let bare = HardwareConfig { n_sm: 2, n_v: 32, m_sm_kb: 0.0, r_vu_kb: 0.0, l1_smpair_kb: 0.0, l2_kb: 0.0 };
        assert_eq!(resource_share(&bare, &c).memory_share, 0.0);
        let g = resource_share(&HardwareConfig::gtx980(), &c);
        assert!((g.memory_share + g.vector_share + g.overhead_share - 1.0).abs() < 1e-9);
        let l2 = area_breakdown(&HardwareConfig::gtx980(), &c).l2 / total_area(&HardwareConfig::gtx980(), &c);
        assert!((l2 - 0.216).abs() < 5e-4, "{l2}");
    }

    #[test]
    fn singleton_and_mean_weighting() {
        let store = Arc::new(ResultsStore::in_memory());
        let ex = Explorer::new(Arc::new(ReferenceModel), store.clone());
        let k = StencilKernel::new("Jacobi-2D", 2, 5, 1e-9);
        let hw = HardwareConfig { n_sm: 2, n_v: 32, m_sm_kb: 48.0, r_vu_kb: 2.0, l1_smpair_kb: 0.0, l2_kb: 0.0 };
        let a = ProblemSize::square_2d(256, 16);
        let b = ProblemSize::square_2d(512, 64);
        let one = WorkloadSpec::uniform(vec![k.clone()], vec![vec![a]]).unwrap();
        let p = ex.evaluate_design(&hw, &one).unwrap();
        let ta = p.solutions[0].solution.time_s.unwrap();
        assert_eq!(p.weighted_time_s, ta);
        let two = WorkloadSpec::uniform(vec![k], vec![vec![a, b]]).unwrap();
        let p2 = ex.evaluate_design(&hw, &two).unwrap();
        let tb = p2.solutions[1].solution.time_s.unwrap();
        assert!((p2.weighted_time_s - (ta + tb) / 2.0).abs() <= 1e-15 * p2.weighted_time_s);
        assert_eq!(store.solve_count(), 2);
    }
}
