//! Shared fixtures for the criterion benchmarks.

use codesign_core::{HardwareConfig, ProblemSize, StencilKernel};

pub fn jacobi() -> StencilKernel {
    StencilKernel::new("Jacobi-2D", 2, 5, 1e-9)
}

pub fn heat3d() -> StencilKernel {
    StencilKernel::new("Heat-3D", 3, 14, 1e-9)
}

pub fn mid_hw() -> HardwareConfig {
    HardwareConfig { n_sm: 16, n_v: 256, m_sm_kb: 96.0, r_vu_kb: 2.0, l1_smpair_kb: 0.0, l2_kb: 0.0 }
}

pub fn size_2d() -> ProblemSize {
    ProblemSize::square_2d(8192, 4096)
}

pub fn size_3d() -> ProblemSize {
    ProblemSize::cube_3d(8192, 4096)
}
