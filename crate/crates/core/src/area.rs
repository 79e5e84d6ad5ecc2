//! Linear silicon-area model for a parameterized GPU-like accelerator.
//!
//! The chip is a set of identical streaming multiprocessors plus a shared L2.
//! Every memory block contributes `beta * size + alpha`; logic blocks are
//! folded into per-vector-unit (`beta_VU`) and per-SM (`alpha_oh`) constants.
//! All areas are in mm², all memory sizes in kB (1 kB = 1024 bytes).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calibrated slope/intercept pairs for each block type.
///
/// `alpha_L2` is charged once per SM, matching the folded per-SM constant
/// `alpha_M + alpha_L1/2 + alpha_L2 + alpha_oh`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaCoefficients {
    #[serde(rename = "beta_R")]
    pub beta_r: f64,
    #[serde(rename = "alpha_R")]
    pub alpha_r: f64,
    #[serde(rename = "beta_M")]
    pub beta_m: f64,
    #[serde(rename = "alpha_M")]
    pub alpha_m: f64,
    #[serde(rename = "beta_L1")]
    pub beta_l1: f64,
    #[serde(rename = "alpha_L1")]
    pub alpha_l1: f64,
    #[serde(rename = "beta_L2")]
    pub beta_l2: f64,
    #[serde(rename = "alpha_L2")]
    pub alpha_l2: f64,
    #[serde(rename = "beta_VU")]
    pub beta_vu: f64,
    #[serde(rename = "alpha_oh")]
    pub alpha_oh: f64,
}

impl AreaCoefficients {
    /// Coefficients fitted for the 28 nm Maxwell family (GTX980 / Titan X).
    pub const MAXWELL: AreaCoefficients = AreaCoefficients {
        beta_r: 0.004305,
        alpha_r: 0.001947,
        beta_m: 0.01565,
        alpha_m: 0.09281,
        beta_l1: 0.1604,
        alpha_l1: 0.08204,
        beta_l2: 0.04197,
        alpha_l2: 0.7685,
        beta_vu: 0.04282,
        alpha_oh: 6.4156,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("beta_R", self.beta_r),
            ("alpha_R", self.alpha_r),
            ("beta_M", self.beta_m),
            ("alpha_M", self.alpha_m),
            ("beta_L1", self.beta_l1),
            ("alpha_L1", self.alpha_l1),
            ("beta_L2", self.beta_l2),
            ("alpha_L2", self.alpha_l2),
            ("beta_VU", self.beta_vu),
            ("alpha_oh", self.alpha_oh),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidCoefficients(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: AreaCoefficients = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Per-SM constant that does not scale with any size parameter.
    pub fn per_sm_constant(&self) -> f64 {
        self.alpha_m + 0.5 * self.alpha_l1 + self.alpha_l2 + self.alpha_oh
    }

    /// Area of one vector unit including its register bank.
    pub fn per_vector_unit(&self, r_vu_kb: f64) -> f64 {
        self.beta_vu + self.alpha_r + self.beta_r * r_vu_kb
    }
}

impl Default for AreaCoefficients {
    fn default() -> Self {
        Self::MAXWELL
    }
}

/// Hardware decision variables plus the fixed memory geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    #[serde(rename = "n_SM")]
    pub n_sm: u32,
    #[serde(rename = "n_V")]
    pub n_v: u32,
    /// Shared memory per SM, kB.
    #[serde(rename = "M_SM")]
    pub m_sm_kb: f64,
    /// Register file per vector unit, kB.
    #[serde(rename = "R_VU", default)]
    pub r_vu_kb: f64,
    /// L1 per SM pair, kB.
    #[serde(rename = "L1_SMpair", default)]
    pub l1_smpair_kb: f64,
    /// Total L2, kB.
    #[serde(rename = "L2_kB", default)]
    pub l2_kb: f64,
}

impl HardwareConfig {
    pub fn new(n_sm: u32, n_v: u32, m_sm_kb: f64, r_vu_kb: f64, l1_smpair_kb: f64, l2_kb: f64) -> Result<Self> {
        let hw = HardwareConfig { n_sm, n_v, m_sm_kb, r_vu_kb, l1_smpair_kb, l2_kb };
        hw.validate()?;
        Ok(hw)
    }

    /// GTX980: 16 SMs, 128 cores, 96 kB shared, 512 32-bit registers per core.
    pub fn gtx980() -> Self {
        HardwareConfig { n_sm: 16, n_v: 128, m_sm_kb: 96.0, r_vu_kb: 2.0, l1_smpair_kb: 48.0, l2_kb: 2048.0 }
    }

    pub fn titan_x() -> Self {
        HardwareConfig { n_sm: 24, n_v: 128, m_sm_kb: 96.0, r_vu_kb: 2.0, l1_smpair_kb: 48.0, l2_kb: 3072.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sm < 2 || !self.n_sm.is_multiple_of(2) {
            return Err(Error::InvalidHardware(format!("n_SM = {} must be even and >= 2", self.n_sm)));
        }
        if self.n_v < 32 || !self.n_v.is_multiple_of(32) {
            return Err(Error::InvalidHardware(format!("n_V = {} must be a positive multiple of 32", self.n_v)));
        }
        for (name, v) in
            [("M_SM", self.m_sm_kb), ("R_VU", self.r_vu_kb), ("L1_SMpair", self.l1_smpair_kb), ("L2_kB", self.l2_kb)]
        {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidHardware(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Area of one SM, including its share of the L1 pair and its per-SM L2 overhead.
pub fn sm_area(hw: &HardwareConfig, c: &AreaCoefficients) -> f64 {
    f64::from(hw.n_v) * c.per_vector_unit(hw.r_vu_kb)
        + (c.beta_m * hw.m_sm_kb + c.alpha_m)
        + 0.5 * (c.beta_l1 * hw.l1_smpair_kb + c.alpha_l1)
        + c.alpha_l2
        + c.alpha_oh
}

pub fn total_area(hw: &HardwareConfig, c: &AreaCoefficients) -> f64 {
    f64::from(hw.n_sm) * sm_area(hw, c) + c.beta_l2 * hw.l2_kb
}

/// Chip area split by block type, mm².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBreakdown {
    pub vector_logic: f64,
    pub registers: f64,
    pub shared: f64,
    pub l1: f64,
    pub l2: f64,
    pub overhead: f64,
}

impl AreaBreakdown {
    pub fn total(&self) -> f64 {
        self.vector_logic + self.registers + self.shared + self.l1 + self.l2 + self.overhead
    }

    pub fn memory(&self) -> f64 {
        self.registers + self.shared + self.l1 + self.l2
    }
}

/// Splits [`total_area`] into block contributions.
///
/// A memory block carries its own fixed term only when it is present
/// (size > 0); the fixed term of an absent block, `alpha_oh` and the per-SM
/// `alpha_L2` charge are booked as overhead.
pub fn area_breakdown(hw: &HardwareConfig, c: &AreaCoefficients) -> AreaBreakdown {
    let n_sm = f64::from(hw.n_sm);
    let cores = n_sm * f64::from(hw.n_v);
    let mut overhead = n_sm * (c.alpha_oh + c.alpha_l2);
    let mut block = |size: f64, beta: f64, alpha: f64, count: f64| {
        if size > 0.0 {
            count * (beta * size + alpha)
        } else {
            overhead += count * alpha;
            0.0
        }
    };
    let registers = block(hw.r_vu_kb, c.beta_r, c.alpha_r, cores);
    let shared = block(hw.m_sm_kb, c.beta_m, c.alpha_m, n_sm);
    let l1 = block(hw.l1_smpair_kb, c.beta_l1, c.alpha_l1, 0.5 * n_sm);
    AreaBreakdown { vector_logic: cores * c.beta_vu, registers, shared, l1, l2: c.beta_l2 * hw.l2_kb, overhead }
}
